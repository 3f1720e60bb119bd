//! Minimal dense symmetric solver used by the least-squares and logistic
//! fits. Dimensions here are tiny (tens of columns), so a hand-rolled
//! Cholesky keeps the crate free of linear-algebra dependencies.

use crate::real::Real;

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, p x p)
/// via Cholesky. Returns `Err(column)` at the first pivot that is not
/// positive beyond rounding noise.
pub(crate) fn solve_spd<T: Real>(a: &[T], b: &[T], p: usize) -> Result<Vec<T>, usize> {
    debug_assert_eq!(a.len(), p * p);
    debug_assert_eq!(b.len(), p);
    let mut l = vec![T::zero(); p * p];
    let scale = (0..p)
        .map(|j| a[j * p + j].abs())
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let tol = T::epsilon() * T::cast(64.0) * scale;
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag = diag - l[j * p + k] * l[j * p + k];
        }
        if diag <= tol {
            return Err(j);
        }
        let d = diag.sqrt();
        l[j * p + j] = d;
        for i in (j + 1)..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v = v - l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = v / d;
        }
    }
    // Forward then backward substitution.
    let mut y = vec![T::zero(); p];
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v = v - l[i * p + k] * y[k];
        }
        y[i] = v / l[i * p + i];
    }
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut v = y[i];
        for k in (i + 1)..p {
            v = v - l[k * p + i] * x[k];
        }
        x[i] = v / l[i * p + i];
    }
    Ok(x)
}
