//! Scores, confusion matrices and wall-clock timing.

use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score<T: Real>(y: &[T], pred: &[T]) -> Result<T> {
    if y.is_empty() || y.len() != pred.len() {
        return Err(Error::invalid(format!("r2_score needs equal non-zero lengths, got {} and {}", y.len(), pred.len())));
    }
    let n = T::from_usize_lossy(y.len());
    let mean = y.iter().copied().sum::<T>() / n;
    let ss_tot: T = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
    if !(ss_tot > T::zero()) {
        return Err(Error::UndefinedScore);
    }
    let ss_res: T = y.iter().zip(pred).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

/// Fraction of exact matches.
pub fn accuracy<L: PartialEq>(y: &[L], pred: &[L]) -> Result<f64> {
    if y.is_empty() || y.len() != pred.len() {
        return Err(Error::invalid(format!("accuracy needs equal non-zero lengths, got {} and {}", y.len(), pred.len())));
    }
    let hits = y.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

/// Entry `(i, j)` counts true class `i + 1` predicted as `j + 1`.
pub fn confusion_matrix(y: &[usize], pred: &[usize], n_classes: usize) -> Result<Array2<u64>> {
    if y.len() != pred.len() {
        return Err(Error::invalid("confusion_matrix needs equal lengths"));
    }
    let mut m = Array2::zeros((n_classes, n_classes));
    for (&a, &b) in y.iter().zip(pred) {
        if !(1..=n_classes).contains(&a) || !(1..=n_classes).contains(&b) {
            return Err(Error::invalid(format!("label pair ({a}, {b}) outside 1..={n_classes}")));
        }
        m[[a - 1, b - 1]] += 1;
    }
    Ok(m)
}

/// Share of samples off the diagonal; zero for an empty matrix.
pub fn off_diagonal_fraction(m: &Array2<u64>) -> f64 {
    let total: u64 = m.sum();
    if total == 0 {
        return 0.0;
    }
    let diag: u64 = m.diag().sum();
    (total - diag) as f64 / total as f64
}

/// Median wall time in seconds of `repeats` calls (at least one).
pub fn median_seconds<F: FnMut()>(repeats: usize, mut f: F) -> f64 {
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    }
}
