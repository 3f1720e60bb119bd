//! Exact hypergeometric probability mass function.
//!
//! `Hy(a; B, A, b)` is the probability of drawing `a` successes when `b`
//! objects are drawn uniformly without replacement out of `B` objects of
//! which `A` are successes: `C(A,a) * C(B-A, b-a) / C(B,b)`. Binomial
//! coefficients with out-of-range arguments count as zero.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error)]
pub enum HypergeomError {
    #[error("population must be nonnegative, got {population}")]
    NegativePopulation { population: i64 },
    #[error("undefined denominator: C({population}, {draws}) = 0")]
    UndefinedDenominator { population: i64, draws: i64 },
}

/// Largest population handled with exact big-integer binomials; beyond it
/// the pmf is evaluated in log space.
pub const EXACT_POPULATION_LIMIT: i64 = 1000;

fn binom_is_zero(n: i64, k: i64) -> bool {
    n < 0 || k < 0 || k > n
}

/// Exact binomial coefficient, zero for out-of-range arguments.
pub fn big_binomial(n: i64, k: i64) -> BigInt {
    if binom_is_zero(n, k) {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 1..=k {
        acc = acc * BigInt::from(n - k + j) / BigInt::from(j);
    }
    acc
}

// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-14 relative
// for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i as f64) + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_binomial(n: i64, k: i64) -> f64 {
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// `Hy(successes; population, success_states, draws)`.
///
/// Exact rational arithmetic for populations up to
/// [`EXACT_POPULATION_LIMIT`], log-space evaluation beyond.
pub fn hypergeom_pmf<T: Real>(
    successes: i64,
    population: i64,
    success_states: i64,
    draws: i64,
) -> Result<T, HypergeomError> {
    if population < 0 {
        return Err(HypergeomError::NegativePopulation { population });
    }
    if binom_is_zero(population, draws) {
        return Err(HypergeomError::UndefinedDenominator { population, draws });
    }
    let failures = population - success_states;
    let miss = draws - successes;
    if binom_is_zero(success_states, successes) || binom_is_zero(failures, miss) {
        return Ok(T::zero());
    }
    let value = if population <= EXACT_POPULATION_LIMIT {
        let num = big_binomial(success_states, successes) * big_binomial(failures, miss);
        let den = big_binomial(population, draws);
        BigRational::new(num, den).to_f64().unwrap_or(f64::NAN)
    } else {
        (ln_binomial(success_states, successes) + ln_binomial(failures, miss)
            - ln_binomial(population, draws))
        .exp()
    };
    Ok(T::cast(value))
}
