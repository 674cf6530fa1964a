//! Sparse regression: subspace pursuit per sparsity level, contribution
//! trimming, reduction-in-residual selection and the final refit.
//!
//! Every least-squares problem runs on an orthogonal compression of
//! `[theta | b]` to its `(P+1) x (P+1)` triangular factor, which leaves all
//! residual norms and correlations unchanged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearSystem, SparseModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub theta_max: usize,
    pub trim_threshold: f64,
    pub rr_lag: usize,
    pub rr_tolerance: f64,
    pub sp_max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            theta_max: 10,
            trim_threshold: 0.05,
            rr_lag: 1,
            rr_tolerance: 0.01,
            sp_max_iters: 20,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_max < 1 {
            return Err(Error::Config("theta_max must be at least 1".into()));
        }
        if !(self.trim_threshold > 0.0 && self.trim_threshold < 1.0) {
            return Err(Error::Config(format!(
                "trim_threshold must lie in (0, 1), got {}",
                self.trim_threshold
            )));
        }
        if self.rr_lag < 1 {
            return Err(Error::Config("rr_lag must be at least 1".into()));
        }
        if !(self.rr_tolerance > 0.0) {
            return Err(Error::Config("rr_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Triangular factor of `[theta | b]`, built block by block.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub n_rows: usize,
    pub col_norms: Vec<f64>,
}

const BLOCK_ROWS: usize = 4096;

impl Compressed {
    pub fn new(sys: &LinearSystem) -> Self {
        let (m, p) = sys.theta.dim();
        let mut r: Option<DMatrix<f64>> = None;
        let mut start = 0;
        while start < m {
            let end = (start + BLOCK_ROWS).min(m);
            let prev = r.as_ref().map_or(0, |r| r.nrows());
            let mut blk = DMatrix::zeros(prev + end - start, p + 1);
            if let Some(r) = &r {
                blk.rows_mut(0, prev).copy_from(r);
            }
            for i in start..end {
                let row = prev + i - start;
                for j in 0..p {
                    blk[(row, j)] = sys.theta[[i, j]];
                }
                blk[(row, p)] = sys.b[i];
            }
            let qr = blk.qr();
            r = Some(qr.r());
            start = end;
        }
        let r = r.unwrap_or_else(|| DMatrix::zeros(0, p + 1));
        let a = r.columns(0, p).into_owned();
        let y = r.column(p).into_owned();
        let col_norms = (0..p).map(|j| a.column(j).norm()).collect();
        Compressed {
            a,
            y,
            n_rows: m,
            col_norms,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn b_norm_sq(&self) -> f64 {
        self.y.norm_squared()
    }

    /// Minimum-norm least squares on `support`; returns coefficients and squared residual.
    pub fn lstsq(&self, support: &[usize]) -> Result<(Vec<f64>, f64)> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("empty support".into()));
        }
        if let Some(&j) = support.iter().find(|&&j| j >= self.n_cols()) {
            return Err(Error::InvalidArgument(format!(
                "support index {j} out of range for {} columns",
                self.n_cols()
            )));
        }
        let sub = self.a.select_columns(support);
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * 1e-12 * (sub.nrows().max(sub.ncols()) as f64);
        if svd.singular_values.iter().any(|&s| s <= eps) {
            log::debug!("rank-deficient support {support:?}; using minimum-norm solution");
        }
        let c = if smax == 0.0 {
            DVector::zeros(support.len())
        } else {
            svd.solve(&self.y, eps)
                .map_err(|e| Error::Singular(e.to_string()))?
        };
        let r = &sub * &c - &self.y;
        Ok((c.iter().copied().collect(), r.norm_squared()))
    }

    fn residual(&self, support: &[usize], c: &[f64]) -> DVector<f64> {
        let mut r = -self.y.clone();
        for (&j, &cj) in support.iter().zip(c) {
            r.axpy(cj, &self.a.column(j), 1.0);
        }
        r
    }

    fn correlations(&self, r: &DVector<f64>) -> Vec<f64> {
        (0..self.n_cols())
            .map(|j| self.a.column(j).dot(r).abs())
            .collect()
    }
}

/// Indices of the `k` largest values among `allowed`, ties toward the lower index.
fn top_k(values: &[f64], k: usize, allowed: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| allowed(i)).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn model_on(support: &[usize], coeffs: &[f64], residual_sq: f64) -> SparseModel {
    // keep explicit zeros out of the support only if they are exact zeros
    SparseModel::new(support.iter().copied().zip(coeffs.iter().copied()), residual_sq)
}

/// Least squares on the normalized columns of `support`.
pub fn least_squares(sys: &LinearSystem, support: &[usize]) -> Result<(Vec<f64>, f64)> {
    if support.len() > sys.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "support of {} columns exceeds {} rows",
            support.len(),
            sys.n_rows()
        )));
    }
    Compressed::new(sys).lstsq(support)
}

fn check_theta(c: &Compressed, theta: usize) -> Result<()> {
    let limit = c.n_cols().min(c.n_rows);
    if theta < 1 || theta > limit {
        return Err(Error::InvalidArgument(format!(
            "sparsity {theta} outside 1..={limit}"
        )));
    }
    Ok(())
}

/// Subspace pursuit at sparsity `theta`; coefficients on normalized columns.
pub fn subspace_pursuit(sys: &LinearSystem, theta: usize, cfg: &PipelineConfig) -> Result<SparseModel> {
    let c = Compressed::new(sys);
    sp_compressed(&c, theta, cfg).map(|(s, co, r)| support_model(&s, &co, r))
}

/// Model with a fixed support of size `theta` (zeros kept out of the support list).
fn support_model(support: &[usize], coeffs: &[f64], r: f64) -> SparseModel {
    let mut m = model_on(support, coeffs, r);
    // a structurally zero coefficient still occupies its slot in SP bookkeeping
    if m.support.len() < support.len() {
        m = SparseModel {
            sparsity: support.len(),
            support: support.to_vec(),
            coefficients: coeffs.to_vec(),
            residual_sq: r,
        };
    }
    m
}

fn sp_compressed(c: &Compressed, theta: usize, cfg: &PipelineConfig) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    check_theta(c, theta)?;
    let corr0 = c.correlations(&c.y);
    let mut support = top_k(&corr0, theta, |_| true);
    let (mut coef, mut res) = c.lstsq(&support)?;
    let tiny = 1e-28 * c.b_norm_sq().max(f64::MIN_POSITIVE);
    for _ in 0..cfg.sp_max_iters {
        if res <= tiny {
            break;
        }
        let r = c.residual(&support, &coef);
        let corr = c.correlations(&r);
        let extra = top_k(&corr, theta, |i| support.binary_search(&i).is_err());
        let mut union = support.clone();
        union.extend(extra);
        union.sort_unstable();
        let (uc, _) = c.lstsq(&union)?;
        let mags: Vec<f64> = uc.iter().map(|v| v.abs()).collect();
        let keep: Vec<usize> = top_k(&mags, theta, |_| true)
            .into_iter()
            .map(|k| union[k])
            .collect();
        let (nc, nr) = c.lstsq(&keep)?;
        if nr >= res * (1.0 - 1e-12) {
            break;
        }
        support = keep;
        coef = nc;
        res = nr;
    }
    Ok((support, coef, res))
}

/// One application of the contribution-score threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimEvent {
    pub theta: usize,
    pub removed: Vec<usize>,
    pub scores: Vec<(usize, f64)>,
}

/// Removes terms whose contribution `||theta_v c_v||` falls below `tau` times
/// the largest one, then refits the survivors.
pub fn trim(sys: &LinearSystem, model: &SparseModel, tau: f64) -> Result<SparseModel> {
    let c = Compressed::new(sys);
    trim_compressed(&c, &model.support, &model.coefficients, tau).map(|(s, co, r, _)| model_on(&s, &co, r))
}

type Trimmed = (Vec<usize>, Vec<f64>, f64, Vec<(usize, f64)>);

fn trim_compressed(c: &Compressed, support: &[usize], coef: &[f64], tau: f64) -> Result<Trimmed> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("cannot trim an empty model".into()));
    }
    let alpha: Vec<f64> = support
        .iter()
        .zip(coef)
        .map(|(&j, &v)| v.abs() * c.col_norms[j])
        .collect();
    let amax = alpha.iter().copied().fold(0.0, f64::max);
    let scores: Vec<(usize, f64)> = support
        .iter()
        .zip(&alpha)
        .map(|(&j, &a)| (j, if amax > 0.0 { a / amax } else { 0.0 }))
        .collect();
    let mut kept: Vec<usize> = scores.iter().filter(|(_, s)| *s >= tau).map(|(j, _)| *j).collect();
    if kept.is_empty() {
        let best = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| support[k])
            .unwrap_or(support[0]);
        kept.push(best);
    }
    let (nc, nr) = c.lstsq(&kept)?;
    Ok((kept, nc, nr, scores))
}

/// Smallest `theta` whose average reduction ratio falls below the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub theta_star: usize,
    pub ratios: Vec<f64>,
    /// Set when no sparsity level met the tolerance.
    pub diagnostic: Option<String>,
}

/// `residuals[k]` is the post-trim squared residual `R_{k+1}`.
pub fn select_sparsity(residuals: &[f64], cfg: &PipelineConfig) -> Result<Selection> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument("no candidate models".into()));
    }
    let n = residuals.len();
    let lag = cfg.rr_lag;
    let r1 = residuals[0];
    if r1 == 0.0 {
        return Ok(Selection {
            theta_star: 1,
            ratios: vec![0.0; n.saturating_sub(lag)],
            diagnostic: None,
        });
    }
    let ratios: Vec<f64> = (0..n.saturating_sub(lag))
        .map(|k| (residuals[k] - residuals[k + lag]) / (lag as f64 * r1))
        .collect();
    match ratios.iter().position(|&s| s < cfg.rr_tolerance) {
        Some(k) => Ok(Selection {
            theta_star: k + 1,
            ratios,
            diagnostic: None,
        }),
        None => Ok(Selection {
            theta_star: n,
            diagnostic: Some(format!(
                "no sparsity level met the reduction tolerance {}; using theta_max = {n}",
                cfg.rr_tolerance
            )),
            ratios,
        }),
    }
}

/// Full record of one identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Final model in unscaled units.
    pub model: SparseModel,
    pub theta_star: usize,
    /// Post-trim squared residuals `R_theta`, theta = 1..=theta_max.
    pub residuals: Vec<f64>,
    pub ratios: Vec<f64>,
    pub trim_events: Vec<TrimEvent>,
    /// Post-trim supports per theta.
    pub supports: Vec<Vec<usize>>,
    pub diagnostics: Vec<String>,
}

/// Runs the whole selection and returns the model in unscaled units.
pub fn identify(sys: &LinearSystem, cfg: &PipelineConfig) -> Result<SparseModel> {
    identify_report(sys, cfg).map(|r| r.model)
}

pub fn identify_report(sys: &LinearSystem, cfg: &PipelineConfig) -> Result<Identification> {
    cfg.validate()?;
    if sys.n_cols() == 0 {
        return Err(Error::InvalidArgument("system has no columns".into()));
    }
    let c = Compressed::new(sys);
    let theta_max = cfg.theta_max.min(c.n_cols()).min(c.n_rows);
    if theta_max == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let runs: Vec<(Vec<usize>, Vec<f64>, f64, TrimEvent)> = (1..=theta_max)
        .into_par_iter()
        .map(|theta| {
            let (s, co, _) = sp_compressed(&c, theta, cfg)?;
            let (ks, kc, kr, scores) = trim_compressed(&c, &s, &co, cfg.trim_threshold)?;
            let removed = s.iter().copied().filter(|j| !ks.contains(j)).collect();
            Ok((ks, kc, kr, TrimEvent { theta, removed, scores }))
        })
        .collect::<Result<_>>()?;
    let residuals: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let sel = select_sparsity(&residuals, cfg)?;
    let mut diagnostics = Vec::new();
    if let Some(d) = &sel.diagnostic {
        log::info!("{d}");
        diagnostics.push(d.clone());
    }
    let support = runs[sel.theta_star - 1].0.clone();
    let (coef, res) = c.lstsq(&support)?;
    let model = SparseModel::new(
        support
            .iter()
            .zip(&coef)
            .map(|(&j, &v)| (j, v / sys.column_scales[j])),
        res,
    );
    Ok(Identification {
        model,
        theta_star: sel.theta_star,
        residuals,
        ratios: sel.ratios,
        supports: runs.iter().map(|r| r.0.clone()).collect(),
        trim_events: runs.into_iter().map(|r| r.3).collect(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowTag;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn system(theta: Array2<f64>, b: Array1<f64>) -> LinearSystem {
        let m = b.len();
        LinearSystem::from_raw(
            theta,
            b,
            (0..m).map(|s| RowTag { equation: 0, sample: s }).collect(),
        )
        .unwrap()
    }

    fn gaussian(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((m, p), |_| rng.sample::<f64, _>(StandardNormal))
    }

    /// Best-subset oracle by enumeration, on the raw normal equations via nalgebra.
    fn best_subset(sys: &LinearSystem, k: usize) -> (Vec<usize>, f64) {
        let p = sys.n_cols();
        let a = DMatrix::from_fn(sys.n_rows(), p, |i, j| sys.theta[[i, j]]);
        let y = DVector::from_iterator(sys.n_rows(), sys.b.iter().copied());
        let mut best = (Vec::new(), f64::INFINITY);
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let sub = a.select_columns(&idx);
            let c = sub.clone().svd(true, true).solve(&y, 1e-14).unwrap();
            let r = (&sub * c - &y).norm_squared();
            if r < best.1 {
                best = (idx.clone(), r);
            }
            // next combination
            let mut i = k;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < p - k + i {
                    idx[i] += 1;
                    for t in i + 1..k {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn identity_least_squares() {
        let sys = system(Array2::eye(3), Array1::from(vec![1.0, 2.0, 3.0]));
        let (c, r) = least_squares(&sys, &[0, 1, 2]).unwrap();
        for (a, b) in c.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r < 1e-24);
        assert!(least_squares(&sys, &[]).is_err());
    }

    #[test]
    fn single_column_equal_to_b() {
        let b = Array1::from(vec![3.0, 4.0]);
        let sys = system(b.clone().insert_axis(ndarray::Axis(1)), b);
        let (c, r) = least_squares(&sys, &[0]).unwrap();
        // normalized column is b/5
        assert!((c[0] - 5.0).abs() < 1e-12);
        assert!(r < 1e-24);
    }

    #[test]
    fn planted_solution_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = gaussian(&mut rng, 50, 5);
        let c = [1.5, -2.0, 0.3, 4.0, -0.7];
        let b = theta.dot(&Array1::from(c.to_vec()));
        let sys = system(theta, b);
        let (coef, _) = least_squares(&sys, &[0, 1, 2, 3, 4]).unwrap();
        for j in 0..5 {
            assert!((coef[j] / sys.column_scales[j] - c[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_support_is_minimum_norm() {
        let col = Array1::from(vec![1.0, 2.0, 2.0]);
        let mut theta = Array2::zeros((3, 2));
        theta.column_mut(0).assign(&col);
        theta.column_mut(1).assign(&col);
        let sys = system(theta, col.clone());
        let (c, r) = least_squares(&sys, &[0, 1]).unwrap();
        assert!((c[0] - c[1]).abs() < 1e-10);
        assert!(r < 1e-20);
    }

    #[test]
    fn exact_single_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = gaussian(&mut rng, 30, 6);
        let b = theta.column(3).to_owned();
        let sys = system(theta, b);
        let m = subspace_pursuit(&sys, 1, &PipelineConfig::default()).unwrap();
        assert_eq!(m.support, vec![3]);
        assert!(m.residual_sq <= 1e-12);
        let id = identify(&sys, &PipelineConfig::default()).unwrap();
        assert_eq!(id.support, vec![3]);
        assert!((id.coefficients[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sp_matches_best_subset_on_planted_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta = gaussian(&mut rng, 20, 8);
        let mut c = Array1::zeros(8);
        c[1] = 1.0;
        c[4] = -2.0;
        c[6] = 0.8;
        let b = theta.dot(&c);
        let sys = system(theta, b);
        let m = subspace_pursuit(&sys, 3, &PipelineConfig::default()).unwrap();
        let (best, _) = best_subset(&sys, 3);
        assert_eq!(m.support, best);
        assert!(subspace_pursuit(&sys, 9, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn trim_examples() {
        let sys = system(Array2::eye(4), Array1::from(vec![1.0, 1.0, 1.0, 0.0]));
        let m = SparseModel::new([(0, 1.0), (1, 1.0), (2, 1.0)], 0.0);
        assert_eq!(trim(&sys, &m, 0.05).unwrap().support, vec![0, 1, 2]);

        let sys = system(Array2::eye(3), Array1::from(vec![1.0, 1e-6, 0.0]));
        let m = SparseModel::new([(0, 1.0), (1, 1e-6)], 0.0);
        let t = trim(&sys, &m, 0.05).unwrap();
        assert_eq!(t.support, vec![0]);
        assert!((t.residual_sq - 1e-12).abs() < 1e-18);
    }

    #[test]
    fn selection_examples() {
        let cfg = PipelineConfig::default();
        assert_eq!(select_sparsity(&[1.0, 0.9999, 0.9998], &cfg).unwrap().theta_star, 1);
        assert_eq!(select_sparsity(&[1.0, 0.1, 0.0999], &cfg).unwrap().theta_star, 2);
        let s = select_sparsity(&[1.0, 0.5, 0.2], &cfg).unwrap();
        assert_eq!(s.theta_star, 3);
        assert!(s.diagnostic.is_some());
        assert_eq!(select_sparsity(&[0.0, 0.0], &cfg).unwrap().theta_star, 1);
        assert!(select_sparsity(&[], &cfg).is_err());
    }

    #[test]
    fn compression_preserves_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = gaussian(&mut rng, 9000, 4);
        let b = Array1::from_shape_fn(9000, |_| rng.sample::<f64, _>(StandardNormal));
        let sys = system(theta, b);
        let (c, r) = least_squares(&sys, &[0, 2]).unwrap();
        let full = sys.theta.column(0).to_owned() * c[0] + sys.theta.column(2).to_owned() * c[1] - &sys.b;
        let direct = full.dot(&full);
        assert!((r - direct).abs() < 1e-9 * direct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sp_support_size_and_improvement(seed in any::<u64>(), theta in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = system(gaussian(&mut rng, 25, 8), Array1::from_shape_fn(25, |_| rng.sample::<f64, _>(StandardNormal)));
            let cfg = PipelineConfig::default();
            let c = Compressed::new(&sys);
            let (s, _, r) = sp_compressed(&c, theta, &cfg).unwrap();
            prop_assert_eq!(s.len(), theta);
            let init = top_k(&c.correlations(&c.y), theta, |_| true);
            let (_, r0) = c.lstsq(&init).unwrap();
            prop_assert!(r <= r0 * (1.0 + 1e-12));
        }

        #[test]
        fn selection_is_scale_equivariant(seed in any::<u64>(), lambda in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = gaussian(&mut rng, 40, 7);
            let mut c = Array1::zeros(7);
            c[2] = 1.0;
            c[5] = -0.5;
            let noise = Array1::from_shape_fn(40, |_| 0.05 * rng.sample::<f64, _>(StandardNormal));
            let b = theta.dot(&c) + noise;
            let cfg = PipelineConfig::default();
            let a = identify(&system(theta.clone(), b.clone()), &cfg).unwrap();
            let s = identify(&system(theta, b * lambda), &cfg).unwrap();
            prop_assert_eq!(a.support, s.support);
        }
    }
}
