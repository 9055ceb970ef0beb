//! Small numeric helpers shared by the samplers and the clustering code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Returns `None` when every weight is `-inf` (or NaN).
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&w| if w.is_nan() { 0.0 } else { (w - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = None;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = Some(i);
            if u < *w {
                return Some(i);
            }
            u -= w;
        }
    }
    last_positive
}

/// Dirichlet draw via normalized Gamma variates.
///
/// Components that underflow are floored at the smallest positive double so
/// that their logarithm stays finite; the result is renormalized afterwards.
pub fn sample_dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = params
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("dirichlet parameter must be positive");
            g.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in draws.iter_mut() {
        *d = (*d / total).max(f64::MIN_POSITIVE);
    }
    draws
}

/// Symmetric positive-definite check via Cholesky, with an explicit symmetry test.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return false;
            }
        }
    }
    m.clone().cholesky().is_some()
}

/// Mean of the columns of a `D x N` matrix.
pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.ncols().max(1) as f64;
    x.column_sum() / n
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_add_matches_direct() {
        let a = 0.3f64.ln();
        let b = 0.5f64.ln();
        assert!((log_add(a, b) - 0.8f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, b), b);
        assert!((log_sum_exp(&[a, b, f64::NEG_INFINITY]) - 0.8f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn categorical_all_neg_inf_is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_log_categorical(&[f64::NEG_INFINITY; 3], &mut rng), None);
        assert_eq!(sample_log_categorical(&[f64::NEG_INFINITY, -1e6], &mut rng), Some(1));
    }

    #[test]
    fn dirichlet_tiny_params_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let d = sample_dirichlet(&[1e-3; 10], &mut rng);
            assert!(d.iter().all(|&p| p > 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
