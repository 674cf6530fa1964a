//! Noise injection scaled by a noise-to-signal ratio, and the evaluation metrics.

use ndarray::{ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::SparseModel;

/// How the per-component noise level is derived from the data spread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `nsr * sqrt(mean |U - mid|^2)`, in units of the data.
    #[default]
    Rms,
    /// `nsr * mean |U - mid|^2`, without the square root.
    Literal,
}

/// Standard deviation used for one component, `mid = (max + min) / 2`.
pub fn noise_sigma(values: &ArrayD<f64>, nsr: f64, rule: SigmaRule) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mid = 0.5 * (lo + hi);
    let msd = values.iter().map(|v| (v - mid) * (v - mid)).sum::<f64>() / values.len() as f64;
    match rule {
        SigmaRule::Rms => nsr * msd.sqrt(),
        SigmaRule::Literal => nsr * msd,
    }
}

/// Adds i.i.d. Gaussian noise to every component, each scaled by its own spread.
pub fn add_noise(d: &GridDataset, nsr: f64, seed: u64, rule: SigmaRule) -> Result<GridDataset> {
    if !(nsr >= 0.0) {
        return Err(Error::InvalidArgument(format!("nsr must be non-negative, got {nsr}")));
    }
    let mut out = d.clone();
    if nsr == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mut comp in out.values.axis_iter_mut(Axis(0)) {
        let sigma = noise_sigma(&comp.to_owned(), nsr, rule);
        if sigma == 0.0 {
            continue;
        }
        for v in comp.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Ok(out)
}

/// Fraction of the true support recovered.
pub fn tpr(truth: &SparseModel, identified: &SparseModel) -> Result<f64> {
    if truth.support.is_empty() {
        return Err(Error::InvalidArgument("truth support is empty".into()));
    }
    let hits = truth
        .support
        .iter()
        .filter(|i| identified.support.binary_search(i).is_ok())
        .count();
    Ok(hits as f64 / truth.support.len() as f64)
}

/// `||c - c_true|| / ||c_true||` over dense length-`p` vectors.
pub fn coeff_error(truth: &SparseModel, identified: &SparseModel, p: usize) -> Result<f64> {
    let t = truth.to_dense(p);
    let c = identified.to_dense(p);
    let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("true coefficient vector is zero".into()));
    }
    let diff = t.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateError {
    pub per_component: Vec<f64>,
    pub total: f64,
}

/// Relative l2 trajectory error, per component (axis 0) and over everything.
pub fn state_error(identified: &ArrayD<f64>, truth: &ArrayD<f64>) -> Result<StateError> {
    if identified.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            identified.shape(),
            truth.shape()
        )));
    }
    let rel = |a: ndarray::ArrayViewD<f64>, b: ndarray::ArrayViewD<f64>| {
        let num = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let den = b.iter().map(|y| y * y).sum::<f64>();
        if den == 0.0 {
            if num == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (num / den).sqrt()
        }
    };
    let per_component = identified
        .axis_iter(Axis(0))
        .zip(truth.axis_iter(Axis(0)))
        .map(|(a, b)| rel(a, b))
        .collect();
    Ok(StateError {
        per_component,
        total: rel(identified.view(), truth.view()),
    })
}

/// Seed for one trial, mixed from the base seed and the cell coordinates by FNV-1a.
pub fn trial_seed(base: u64, system: &str, nsr: f64, trial: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&base.to_le_bytes());
    feed(system.as_bytes());
    feed(&nsr.to_bits().to_le_bytes());
    feed(&(trial as u64).to_le_bytes());
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn field(f: impl Fn(usize, usize) -> f64, nx: usize, nt: usize) -> GridDataset {
        let v = Array3::from_shape_fn((1, nx, nt), |(_, i, n)| f(i, n)).into_dyn();
        GridDataset::field(v, vec![0.01], 0.01, vec![true], vec!["u".into()]).unwrap()
    }

    #[test]
    fn zero_nsr_is_identity() {
        let d = field(|i, n| (i * n) as f64, 10, 5);
        assert_eq!(add_noise(&d, 0.0, 1, SigmaRule::Rms).unwrap(), d);
        assert!(add_noise(&d, -0.1, 1, SigmaRule::Rms).is_err());
    }

    #[test]
    fn constant_field_gets_no_noise() {
        let d = field(|_, _| 3.0, 10, 5);
        for rule in [SigmaRule::Rms, SigmaRule::Literal] {
            assert_eq!(add_noise(&d, 0.5, 1, rule).unwrap(), d);
        }
    }

    #[test]
    fn empirical_std_matches_sigma() {
        let d = field(|i, n| ((i as f64) * 0.013).sin() + 0.002 * n as f64, 5000, 200);
        let sigma = noise_sigma(&d.component(0).unwrap().to_owned(), 0.25, SigmaRule::Rms);
        let noisy = add_noise(&d, 0.25, 9, SigmaRule::Rms).unwrap();
        let diff: Vec<f64> = noisy.values.iter().zip(d.values.iter()).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let var = diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / diff.len() as f64;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn seeds_reproduce_and_decorrelate() {
        let d = field(|i, _| (i as f64 * 0.1).cos(), 1000, 100);
        let a = add_noise(&d, 0.1, 5, SigmaRule::Rms).unwrap();
        let b = add_noise(&d, 0.1, 5, SigmaRule::Rms).unwrap();
        let c = add_noise(&d, 0.1, 6, SigmaRule::Rms).unwrap();
        assert!(a.values.iter().zip(b.values.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let ea: Vec<f64> = a.values.iter().zip(d.values.iter()).map(|(x, y)| x - y).collect();
        let ec: Vec<f64> = c.values.iter().zip(d.values.iter()).map(|(x, y)| x - y).collect();
        let dot: f64 = ea.iter().zip(&ec).map(|(x, y)| x * y).sum();
        let na: f64 = ea.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nc: f64 = ec.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dot / (na * nc)).abs() < 0.01);
    }

    #[test]
    fn tpr_cases() {
        let t = SparseModel::new([(0, 1.0), (1, 1.0), (2, 1.0)], 0.0);
        assert_eq!(tpr(&t, &t).unwrap(), 1.0);
        let id = SparseModel::new([(0, 5.0), (3, 1.0)], 0.0);
        assert!((tpr(&t, &id).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let sup = SparseModel::new([(0, 1.0), (1, 1.0), (2, 1.0), (4, 1.0)], 0.0);
        assert_eq!(tpr(&t, &sup).unwrap(), 1.0);
        assert!(tpr(&SparseModel::empty(), &t).is_err());
    }

    #[test]
    fn coefficient_error_cases() {
        let t = SparseModel::new([(0, 1.0), (2, -2.0)], 0.0);
        assert_eq!(coeff_error(&t, &t, 3).unwrap(), 0.0);
        let s = SparseModel::new([(0, 1.1), (2, -2.2)], 0.0);
        assert!((coeff_error(&t, &s, 3).unwrap() - 0.1).abs() < 1e-12);
        let missed = SparseModel::new([(2, -2.0)], 0.0);
        assert!(coeff_error(&t, &missed, 3).unwrap() >= 1.0 / 5f64.sqrt() - 1e-15);
        assert!(coeff_error(&SparseModel::empty(), &t, 3).is_err());
    }

    #[test]
    fn state_error_cases() {
        let a = Array3::from_shape_fn((2, 4, 3), |(c, i, n)| (c + i + n) as f64 + 1.0).into_dyn();
        assert_eq!(state_error(&a, &a).unwrap().total, 0.0);
        let e = state_error(&(&a * 1.01), &a).unwrap();
        assert!((e.total - 0.01).abs() < 1e-12);
        let e2 = state_error(&(&a * 1.01 * 3.0), &(&a * 3.0)).unwrap();
        assert!((e.total - e2.total).abs() < 1e-14);
        let b = Array3::<f64>::zeros((2, 4, 2)).into_dyn();
        assert!(state_error(&a, &b).is_err());
    }

    #[test]
    fn trial_seeds_differ_by_cell() {
        let s = trial_seed(42, "burgers", 0.1, 0);
        assert_eq!(s, trial_seed(42, "burgers", 0.1, 0));
        assert_ne!(s, trial_seed(42, "burgers", 0.1, 1));
        assert_ne!(s, trial_seed(42, "burgers", 0.25, 0));
        assert_ne!(s, trial_seed(43, "burgers", 0.1, 0));
    }
}
