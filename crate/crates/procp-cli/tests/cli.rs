//! End-to-end checks of the binary: schema handling, determinism, config
//! merging, and agreement with the library on a hand-computed instance.

use std::path::{Path, PathBuf};
use std::process::Command;

fn procp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_procp"))
}

fn write(path: &Path, content: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, content).unwrap();
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("procp-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Six calibration rows forming the worked two-bin instance (plus one
/// training row consumed by the split): observed scores 1,2,3 in the first
/// bin and 4 in the second, one missing point in each.
fn worked_example_csv() -> String {
    // mean model is forced to zero, so scores are |y|.
    let mut rows = vec!["x,a,y,p".to_string()];
    rows.push("99.0,1,0.0,0.5".to_string()); // training row
    rows.push("0.1,1,1.0,0.5".to_string());
    rows.push("0.2,1,2.0,0.5".to_string());
    rows.push("0.3,1,3.0,0.5".to_string());
    rows.push("0.4,0,,0.5".to_string());
    rows.push("1.1,1,4.0,0.6".to_string());
    rows.push("1.2,0,,0.6".to_string());
    rows.join("\n") + "\n"
}

#[test]
fn predict_matches_worked_example() {
    let dir = tmp_dir("worked");
    let input = dir.join("toy.csv");
    write(&input, &worked_example_csv());
    let model = dir.join("mean.model");
    write(&model, "model=mean-lsq\nintercept=0\ncoefficients=0\n");
    let out = dir.join("run");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "pro-cp",
            "--alpha",
            "0.5",
            "--epsilon",
            "0.1",
            "--propensity",
            "column",
            "--split-ratio",
            "0.15",
            "--mean-model",
            model.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let intervals = std::fs::read_to_string(out.join("intervals.csv")).unwrap();
    let lines: Vec<&str> = intervals.lines().collect();
    assert_eq!(lines[0], "row,threshold,lower,upper");
    // Both missing rows share the pooled threshold 4 (CDF at 4 is 5/8).
    assert_eq!(lines[1], "5,4,-4,4");
    assert_eq!(lines[2], "7,4,-4,4");

    // At alpha = 0.3 the level 0.7 exceeds the finite mass 5/8.
    let out2 = dir.join("run2");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "pro-cp",
            "--alpha",
            "0.3",
            "--epsilon",
            "0.1",
            "--propensity",
            "column",
            "--split-ratio",
            "0.15",
            "--mean-model",
            model.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let intervals = std::fs::read_to_string(out2.join("intervals.csv")).unwrap();
    assert!(intervals.lines().nth(1).unwrap().contains("inf"));
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tmp_dir("determinism");
    let input = dir.join("data.csv");
    let mut csv = String::from("x1,x2,a,y\n");
    for i in 0..60 {
        let x1 = (i as f64 * 0.37) % 7.0;
        let x2 = (i as f64 * 0.91) % 3.0;
        let a = (i * 7 + 3) % 4 != 0;
        if a {
            csv.push_str(&format!("{x1},{x2},1,{}\n", x1 * 2.0 - x2 + 0.25));
        } else {
            csv.push_str(&format!("{x1},{x2},0,\n"));
        }
    }
    write(&input, &csv);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let status = procp()
            .args([
                "predict",
                "--input",
                input.to_str().unwrap(),
                "--method",
                "pro-cp2",
                "--alpha",
                "0.4",
                "--epsilon",
                "0.2",
                "--propensity",
                "logistic",
                "--block-size",
                "15",
                "--shuffle-blocks",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(out.join("report.txt")).unwrap(),
            std::fs::read(out.join("intervals.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn vacuous_run_notes_no_missing() {
    let dir = tmp_dir("vacuous");
    let input = dir.join("full.csv");
    let mut csv = String::from("x,a,y\n");
    for i in 0..12 {
        csv.push_str(&format!("{},1,{}\n", i, i * 2));
    }
    write(&input, &csv);
    let out = dir.join("out");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "simultaneous",
            "--alpha",
            "0.2",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("vacuous"));
    let intervals = std::fs::read_to_string(out.join("intervals.csv")).unwrap();
    assert_eq!(intervals.lines().count(), 1);
}

#[test]
fn schema_violations_fail_without_partial_outputs() {
    let dir = tmp_dir("schema");
    let input = dir.join("bad.csv");
    write(&input, "x,a,y\n1.0,1,\n2.0,0,\n");
    let out = dir.join("out");
    let output = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let message = String::from_utf8_lossy(&output.stderr);
    assert!(message.contains("row 1"), "diagnostic names the row: {message}");
    assert!(!out.join("report.txt").exists());
    assert!(!out.join("intervals.csv").exists());

    // Propensity outside (0,1) is named too.
    let input2 = dir.join("badp.csv");
    write(&input2, "x,a,y,p\n1.0,1,2.0,1.5\n");
    let output = procp()
        .args(["predict", "--input", input2.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("outside (0,1)"));
}

#[test]
fn airfoil_shaped_csv_ingests() {
    // Five numeric features plus mask and outcome, the shape of the
    // external acoustics dataset.
    let dir = tmp_dir("airfoil");
    let input = dir.join("airfoil.csv");
    let mut csv = String::from("freq,angle,chord,velocity,thickness,a,y\n");
    for i in 0..80 {
        let f = 200.0 + 37.0 * i as f64;
        let ang = (i % 11) as f64;
        let chord = 0.05 + 0.01 * ((i % 7) as f64);
        let vel = 31.7 + (i % 4) as f64 * 8.0;
        let thick = 0.001 + 0.0004 * (i % 9) as f64;
        if i % 5 == 0 {
            csv.push_str(&format!("{f},{ang},{chord},{vel},{thick},0,\n"));
        } else {
            let y = 120.0 - 0.002 * f + 0.8 * ang - 40.0 * chord + 0.05 * vel - 90.0 * thick;
            csv.push_str(&format!("{f},{ang},{chord},{vel},{thick},1,{y}\n"));
        }
    }
    write(&input, &csv);
    let out = dir.join("out");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "pro-cp",
            "--alpha",
            "0.2",
            "--epsilon",
            "0.1",
            "--propensity",
            "logistic",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("intervals.csv").exists());
}

#[test]
fn categorical_columns_hash_reliably() {
    let dir = tmp_dir("categorical");
    let input = dir.join("cats.csv");
    let mut csv = String::from("color,a,y\n");
    for i in 0..30 {
        let color = ["red", "green", "blue"][i % 3];
        if i % 6 == 5 {
            csv.push_str(&format!("{color},0,\n"));
        } else {
            csv.push_str(&format!("{color},1,{}\n", (i % 3) as f64 + 0.1 * i as f64));
        }
    }
    write(&input, &csv);
    let out = dir.join("out");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "per-feature",
            "--alpha",
            "0.5",
            "--categorical",
            "color",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    // Three labels, three feature groups.
    assert!(report.contains("occupied_bins=3"), "{report}");
}

#[test]
fn config_file_fills_defaults_and_flags_override() {
    let dir = tmp_dir("config");
    let input = dir.join("toy.csv");
    write(&input, &worked_example_csv());
    let model = dir.join("mean.model");
    write(&model, "model=mean-lsq\nintercept=0\ncoefficients=0\n");
    let config = dir.join("run.conf");
    write(
        &config,
        "method=pro-cp\nalpha=0.5\nepsilon=0.1\npropensity=column\nsplit-ratio=0.15\n",
    );
    let out = dir.join("out");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--mean-model",
            model.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("alpha=0.5"));

    // An explicit flag wins over the file value.
    let out2 = dir.join("out2");
    let status = procp()
        .args([
            "predict",
            "--input",
            input.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--alpha",
            "0.4",
            "--mean-model",
            model.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out2.join("report.txt")).unwrap();
    assert!(report.contains("alpha=0.4"));
}

#[test]
fn csv_round_trip_is_identity() {
    use procp_cli::csvio::{read_csv, to_csv_string};
    let dir = tmp_dir("roundtrip");
    let input = dir.join("data.csv");
    let mut csv = String::from("x1,x2,a,y,p\n");
    for i in 0..25 {
        let x1 = i as f64 * 0.125;
        let x2 = (i % 5) as f64;
        let p = 0.3 + 0.02 * (i % 20) as f64;
        if i % 4 == 0 {
            csv.push_str(&format!("{x1},{x2},0,,{p}\n"));
        } else {
            csv.push_str(&format!("{x1},{x2},1,{},{p}\n", x1 - x2 * 0.5));
        }
    }
    write(&input, &csv);
    let once = read_csv(&input, &[]).unwrap();
    let serialized = to_csv_string(&once);
    let reparsed_path = dir.join("again.csv");
    write(&reparsed_path, &serialized);
    let twice = read_csv(&reparsed_path, &[]).unwrap();
    assert_eq!(once.rows, twice.rows);
    assert_eq!(once.mask, twice.mask);
    assert_eq!(once.outcomes, twice.outcomes);
    assert_eq!(once.propensity, twice.propensity);
    assert_eq!(serialized, to_csv_string(&twice));
}

#[test]
fn diagnose_identical_sources_report_zero_slack() {
    let dir = tmp_dir("diagnose");
    let input = dir.join("toy.csv");
    write(&input, &worked_example_csv());
    let output = procp()
        .args([
            "diagnose",
            "--input",
            input.to_str().unwrap(),
            "--truth",
            "column:p",
            "--estimate",
            "column:p",
            "--alpha",
            "0.2",
            "--epsilon",
            "0.1",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("delta_hat=0"));
    assert!(text.contains("pro_cp_effective_mean_coverage_level=0.7"), "{text}");
}
