//! Weak-form assembly: dictionary terms are integrated against separable
//! polynomial bumps, with derivatives moved onto the bump by parts.

use ndarray::{Array1, Array2, ArrayD, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{check_components, Dictionary, FieldCache};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::{LinearSystem, RowTag};
use crate::symbolic::{Deriv, Monomial, Piece};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakConfig {
    /// Subdomain half-width along each spatial axis, in grid points.
    pub space_half_width: usize,
    /// Subdomain half-width along time, in steps.
    pub time_half_width: usize,
    pub space_centers: usize,
    pub time_centers: usize,
    /// Bump exponent; defaults to the highest transferred order plus 3.
    pub exponent: Option<u32>,
    /// Scale each equation block of a joint multi-equation system by `1/||b_e||`.
    pub balance_equations: bool,
}

impl Default for WeakConfig {
    fn default() -> Self {
        WeakConfig {
            space_half_width: 25,
            time_half_width: 20,
            space_centers: 40,
            time_centers: 40,
            exponent: None,
            balance_equations: true,
        }
    }
}

/// Tensor lattice of bumps `prod_a (1 - s_a^2)^p` over subdomains of the
/// `(space..., time)` grid. Trajectory axes of ensembles have half-width 0:
/// each trajectory is integrated separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub exponent: u32,
    /// Half-width per data axis, time last.
    pub half_widths: Vec<usize>,
    /// Subdomain center indices per data axis; the lattice is their product.
    pub centers: Vec<Vec<usize>>,
    pub spacing: Vec<f64>,
    /// Highest derivative order the family must carry, per data axis.
    pub max_transfer_order: Vec<u32>,
}

impl TestFunctionFamily {
    pub fn n_axes(&self) -> usize {
        self.half_widths.len()
    }

    pub fn n_subdomains(&self) -> usize {
        self.centers.iter().map(Vec::len).product()
    }

    /// Center multi-index of subdomain `k` (row-major over the lattice).
    pub fn center(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_axes()];
        for a in (0..self.n_axes()).rev() {
            let n = self.centers[a].len();
            out[a] = self.centers[a][k % n];
            k /= n;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (a, &order) in self.max_transfer_order.iter().enumerate() {
            if self.half_widths[a] > 0 && self.exponent < order + 1 {
                return Err(Error::InfeasibleTransfer(format!(
                    "bump exponent {} cannot carry order {order} on axis {a} (needs {})",
                    self.exponent,
                    order + 1
                )));
            }
        }
        Ok(())
    }

    /// Derivative of order `r` of the 1D bump on `axis` at the `2m+1` nodes of
    /// a subdomain, in physical units.
    pub fn bump_derivative(&self, axis: usize, r: u32) -> Result<Vec<f64>> {
        let m = self.half_widths[axis];
        if m == 0 {
            return if r == 0 {
                Ok(vec![1.0])
            } else {
                Err(Error::InfeasibleTransfer(format!(
                    "axis {axis} has no extent to carry a derivative"
                )))
            };
        }
        if r + 1 > self.exponent {
            return Err(Error::InfeasibleTransfer(format!(
                "derivative order {r} exceeds what the family carries on axis {axis}"
            )));
        }
        let poly = bump_poly_derivative(self.exponent, r);
        let scale = (1.0 / (m as f64 * self.spacing[axis])).powi(r as i32);
        Ok((0..=2 * m)
            .map(|j| {
                let s = (j as f64 - m as f64) / m as f64;
                horner(&poly, s) * scale
            })
            .collect())
    }

    /// Quadrature-weighted kernel for axis `axis`, order `r`.
    fn kernel(&self, axis: usize, r: u32) -> Result<Vec<f64>> {
        let vals = self.bump_derivative(axis, r)?;
        if vals.len() == 1 {
            return Ok(vals);
        }
        let w = quadrature_weights(vals.len(), self.spacing[axis])?;
        Ok(vals.iter().zip(&w).map(|(v, w)| v * w).collect())
    }

    /// `int f d^orders psi` over every subdomain, shaped by the center lattice.
    pub fn integrate(&self, f: &ArrayD<f64>, orders: &[u32]) -> Result<ArrayD<f64>> {
        if f.ndim() != self.n_axes() || orders.len() != self.n_axes() {
            return Err(Error::ShapeMismatch(format!(
                "field of rank {} against a family over {} axes",
                f.ndim(),
                self.n_axes()
            )));
        }
        let mut cur = f.as_standard_layout().into_owned();
        for a in 0..self.n_axes() {
            let k = self.kernel(a, orders[a])?;
            cur = contract_axis(&cur, a, &k, &self.centers[a], self.half_widths[a]);
        }
        Ok(cur)
    }
}

/// Coefficients (ascending powers of s) of the r-th derivative of `(1 - s^2)^p`.
fn bump_poly_derivative(p: u32, r: u32) -> Vec<f64> {
    let mut c = vec![0.0; 2 * p as usize + 1];
    let mut binom = 1.0;
    for k in 0..=p as usize {
        c[2 * k] = if k % 2 == 0 { binom } else { -binom };
        binom = binom * (p as usize - k) as f64 / (k + 1) as f64;
    }
    for _ in 0..r {
        c = (1..c.len()).map(|n| c[n] * n as f64).collect();
        if c.is_empty() {
            c.push(0.0);
        }
    }
    c
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * s + v)
}

fn contract_axis(
    arr: &ArrayD<f64>,
    axis: usize,
    kernel: &[f64],
    centers: &[usize],
    half: usize,
) -> ArrayD<f64> {
    let mut shape = arr.shape().to_vec();
    shape[axis] = centers.len();
    let mut out = ArrayD::zeros(shape);
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(arr.lanes(Axis(axis)))
        .par_for_each(|mut o, i| {
            for (k, &c) in centers.iter().enumerate() {
                let base = c - half;
                let mut s = 0.0;
                for (j, &w) in kernel.iter().enumerate() {
                    s += w * i[base + j];
                }
                o[k] = s;
            }
        });
    out
}

/// Composite trapezoid weights on `n_points` equispaced nodes.
pub fn quadrature_weights(n_points: usize, spacing: f64) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: n_points,
        });
    }
    let mut w = vec![spacing; n_points];
    w[0] = 0.5 * spacing;
    w[n_points - 1] = 0.5 * spacing;
    Ok(w)
}

fn lattice(n: usize, half: usize, requested: usize, axis: usize) -> Result<Vec<usize>> {
    if 2 * half + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "subdomain of {} points is larger than axis {axis} ({n} points)",
            2 * half + 1
        )));
    }
    let span = n - 1 - 2 * half;
    let count = requested.clamp(1, span + 1);
    if count == 1 {
        return Ok(vec![half + span / 2]);
    }
    Ok((0..count)
        .map(|k| half + ((k * span) as f64 / (count - 1) as f64).round() as usize)
        .collect())
}

/// Builds the bump family for dataset `d`; `transfer` is the highest outer
/// derivative order moved onto the bumps along each spatial axis.
pub fn make_test_family(d: &GridDataset, cfg: &WeakConfig, transfer: &[u32]) -> Result<TestFunctionFamily> {
    let shape = d.component_shape();
    let ns = d.n_space_axes();
    let mut half_widths = Vec::with_capacity(ns + 1);
    let mut centers = Vec::with_capacity(ns + 1);
    let mut spacing = Vec::with_capacity(ns + 1);
    let mut orders = Vec::with_capacity(ns + 1);
    for a in 0..ns {
        let order = transfer.get(a).copied().unwrap_or(0);
        if d.is_ensemble() {
            if order > 0 {
                return Err(Error::InfeasibleTransfer(
                    "spatial derivatives requested on trajectory data".into(),
                ));
            }
            half_widths.push(0);
            centers.push((0..shape[a]).collect());
        } else {
            half_widths.push(cfg.space_half_width);
            centers.push(lattice(shape[a], cfg.space_half_width, cfg.space_centers, a)?);
        }
        spacing.push(d.dx[a]);
        orders.push(order);
    }
    half_widths.push(cfg.time_half_width);
    centers.push(lattice(shape[ns], cfg.time_half_width, cfg.time_centers, ns)?);
    spacing.push(d.dt);
    orders.push(1);
    let highest = orders.iter().copied().max().unwrap_or(1);
    let fam = TestFunctionFamily {
        exponent: cfg.exponent.unwrap_or(highest + 3),
        half_widths,
        centers,
        spacing,
        max_transfer_order: orders,
    };
    fam.validate()?;
    Ok(fam)
}

/// `-int u psi_t` for every subdomain, flattened row-major over the lattice.
pub fn weak_target(d: &GridDataset, fam: &TestFunctionFamily, component: usize) -> Result<Array1<f64>> {
    let u = d.component(component)?.to_owned();
    let mut orders = vec![0; fam.n_axes()];
    orders[fam.n_axes() - 1] = 1;
    let v = fam.integrate(&u, &orders)?;
    Ok(Array1::from_iter(v.iter().map(|x| -x)))
}

/// One piece after integration by parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPiece {
    pub equation: usize,
    /// Derivatives moved onto the test function.
    pub moved: Deriv,
    /// Monomial evaluated from data (may keep low-order derivatives).
    pub mono: Monomial,
    /// Highest derivative order left on the data.
    pub remaining_order: u32,
    /// Outer plus inner order of the piece before the rewrite.
    pub original_order: u32,
}

/// Integration-by-parts split of every term of a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakPlan {
    pub terms: Vec<Vec<PlannedPiece>>,
}

impl WeakPlan {
    pub fn new(dict: &Dictionary) -> Self {
        let terms = dict
            .terms
            .iter()
            .map(|t| {
                t.rows
                    .iter()
                    .flat_map(|r| {
                        r.pieces.iter().map(move |p| {
                            let f = p.to_divergence_form();
                            PlannedPiece {
                                equation: r.equation,
                                moved: f.outer,
                                remaining_order: f.mono.max_deriv_order(),
                                original_order: piece_order(p),
                                mono: f.mono,
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        WeakPlan { terms }
    }

    /// Highest moved order per spatial axis.
    pub fn transfer_orders(&self) -> [u32; 2] {
        let mut out = [0; 2];
        for p in self.terms.iter().flatten() {
            for (a, o) in out.iter_mut().enumerate() {
                *o = (*o).max(p.moved.0[a] as u32);
            }
        }
        out
    }
}

fn piece_order(p: &Piece) -> u32 {
    p.outer.order() + p.mono.max_deriv_order()
}

/// Weak-form system for every term and equation of `dict`.
pub fn evaluate_weak(dict: &Dictionary, d: &GridDataset, fam: &TestFunctionFamily, cfg: &WeakConfig) -> Result<LinearSystem> {
    let terms: Vec<usize> = (0..dict.len()).collect();
    let eqs: Vec<usize> = (0..dict.equations.len()).collect();
    evaluate_weak_subset(dict, d, fam, cfg, &terms, &eqs)
}

/// Weak-form system restricted to the given terms and equations; rows are
/// subdomain-major, equation-minor.
pub fn evaluate_weak_subset(
    dict: &Dictionary,
    d: &GridDataset,
    fam: &TestFunctionFamily,
    cfg: &WeakConfig,
    terms: &[usize],
    equations: &[usize],
) -> Result<LinearSystem> {
    check_components(dict, d)?;
    if fam.n_axes() != d.component_shape().len() {
        return Err(Error::ShapeMismatch(
            "test family does not match the dataset rank".into(),
        ));
    }
    let plan = WeakPlan::new(dict);
    let ns = d.n_space_axes();
    let mut cache = FieldCache::new(d);
    let lhs: Vec<&Monomial> = equations.iter().map(|&e| &dict.equations[e].lhs).collect();
    cache.require_monomials(
        terms
            .iter()
            .flat_map(|&j| plan.terms[j].iter().map(|p| &p.mono))
            .chain(lhs.iter().copied()),
    )?;

    let n_sub = fam.n_subdomains();
    let n_eq = equations.len();
    let mut t_orders = vec![0u32; ns + 1];
    t_orders[ns] = 1;
    let mut blocks = Vec::with_capacity(n_eq);
    for m in &lhs {
        let f = cache.eval(m)?;
        let v = fam.integrate(&f, &t_orders)?;
        blocks.push(Array1::from_iter(v.iter().map(|x| -x)));
    }
    let mut weights = vec![1.0; n_eq];
    if cfg.balance_equations && n_eq > 1 && dict.is_joint() {
        for (w, blk) in weights.iter_mut().zip(&blocks) {
            let norm = blk.dot(blk).sqrt();
            if norm > 0.0 {
                *w = 1.0 / norm;
            }
        }
    }
    let mut b = Array1::zeros(n_sub * n_eq);
    for (k, blk) in blocks.iter().enumerate() {
        for s in 0..n_sub {
            b[s * n_eq + k] = blk[s] * weights[k];
        }
    }

    let columns: Vec<Array1<f64>> = terms
        .par_iter()
        .map(|&j| {
            let mut col = Array1::zeros(n_sub * n_eq);
            for p in &plan.terms[j] {
                let Some(k) = equations.iter().position(|&e| e == p.equation) else {
                    continue;
                };
                let orders: Vec<u32> = (0..=ns)
                    .map(|a| if a < ns { p.moved.0.get(a).copied().unwrap_or(0) as u32 } else { 0 })
                    .collect();
                if ns < 2 && p.moved.0[1] > 0 {
                    return Err(Error::InfeasibleTransfer(
                        "y-derivative on a one-dimensional dataset".into(),
                    ));
                }
                let f = cache.eval(&p.mono)?;
                let v = fam.integrate(&f, &orders)?;
                let sign = if p.moved.order() % 2 == 0 { 1.0 } else { -1.0 };
                for (s, x) in v.iter().enumerate() {
                    col[s * n_eq + k] += sign * weights[k] * x;
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let mut theta = Array2::zeros((n_sub * n_eq, terms.len()));
    for (j, col) in columns.iter().enumerate() {
        theta.column_mut(j).assign(col);
    }
    let row_map = (0..n_sub)
        .flat_map(|s| equations.iter().map(move |&e| RowTag { equation: e, sample: s }))
        .collect();
    LinearSystem::from_raw(theta, b, row_map)
}
