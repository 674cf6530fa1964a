//! Pointwise evaluation of dictionary terms on gridded data.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayD, Zip};
use rayon::prelude::*;

use super::Dictionary;
use crate::diff::{central_diff, spatial_derivative, time_derivative_field};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::{LinearSystem, RowTag};
use crate::symbolic::{Deriv, Monomial};

/// Pairwise distances below this are treated as collisions.
const MIN_DISTANCE: f64 = 1e-8;

/// Lazily computed derivative fields `d^a u_c` of one dataset, each shaped
/// `(space..., time)` in standard layout.
pub struct FieldCache<'a> {
    data: &'a GridDataset,
    fields: HashMap<(usize, Deriv), ArrayD<f64>>,
    central: bool,
}

impl<'a> FieldCache<'a> {
    pub fn new(data: &'a GridDataset) -> Self {
        FieldCache {
            data,
            fields: HashMap::new(),
            central: false,
        }
    }

    /// Uses second-order central differences on every axis, periodic ones included.
    pub fn central(data: &'a GridDataset) -> Self {
        FieldCache {
            central: true,
            ..FieldCache::new(data)
        }
    }

    pub fn data(&self) -> &GridDataset {
        self.data
    }

    /// Computes every missing field in `keys` (in parallel).
    pub fn require(&mut self, keys: impl IntoIterator<Item = (usize, Deriv)>) -> Result<()> {
        let mut missing: Vec<(usize, Deriv)> = keys
            .into_iter()
            .filter(|k| !self.fields.contains_key(k))
            .collect();
        missing.sort();
        missing.dedup();
        let data = self.data;
        let central = self.central;
        let computed: Vec<((usize, Deriv), ArrayD<f64>)> = missing
            .into_par_iter()
            .map(|(c, d)| {
                let u = data.component(c)?;
                let f = if d.is_none() {
                    u.to_owned()
                } else if central {
                    let mut cur = u.to_owned();
                    for (axis, order) in d.orders(data.n_space_axes()).into_iter().enumerate() {
                        if order > 0 {
                            cur = central_diff(&cur.view(), axis, order, data.dx[axis], data.periodic[axis])?;
                        }
                    }
                    cur
                } else {
                    spatial_derivative(data, &u, &d.orders(data.n_space_axes()))?
                };
                Ok(((c, d), f.as_standard_layout().into_owned()))
            })
            .collect::<Result<_>>()?;
        self.fields.extend(computed);
        Ok(())
    }

    pub fn require_monomials<'m>(&mut self, monos: impl IntoIterator<Item = &'m Monomial>) -> Result<()> {
        let mut keys = Vec::new();
        for m in monos {
            keys.extend(m.factors.iter().map(|f| (f.component, f.deriv)));
            if let Some(inv) = &m.inv_dist {
                keys.extend(inv.left.iter().chain(&inv.right).map(|&c| (c, Deriv::NONE)));
            }
        }
        self.require(keys)
    }

    pub fn field(&self, component: usize, deriv: Deriv) -> Result<&ArrayD<f64>> {
        self.fields.get(&(component, deriv)).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "field for component {component}{} was not prepared",
                deriv.suffix()
            ))
        })
    }

    /// Evaluates one monomial at every grid node.
    pub fn eval(&self, m: &Monomial) -> Result<ArrayD<f64>> {
        let shape = self.data.component_shape().to_vec();
        let mut out = ArrayD::from_elem(shape, m.coeff);
        for f in &m.factors {
            let src = self.field(f.component, f.deriv)?;
            let p = f.power as i32;
            Zip::from(&mut out).and(src).for_each(|o, &v| *o *= v.powi(p));
        }
        if let Some(inv) = &m.inv_dist {
            let mut r2 = ArrayD::<f64>::zeros(out.raw_dim());
            for (&a, &b) in inv.left.iter().zip(&inv.right) {
                let za = self.field(a, Deriv::NONE)?;
                let zb = self.field(b, Deriv::NONE)?;
                Zip::from(&mut r2)
                    .and(za)
                    .and(zb)
                    .for_each(|r, &x, &y| *r += (x - y) * (x - y));
            }
            if r2.iter().any(|&v| v.sqrt() < MIN_DISTANCE) {
                return Err(Error::Singular(
                    "pairwise distance below 1e-8 in inverse-distance atom".into(),
                ));
            }
            let e = inv.exponent;
            Zip::from(&mut out)
                .and(&r2)
                .for_each(|o, &r| *o *= r.sqrt().powi(e));
        }
        Ok(out)
    }

    pub fn eval_sum(&self, monos: &[Monomial]) -> Result<ArrayD<f64>> {
        let mut acc = ArrayD::zeros(self.data.component_shape().to_vec());
        for m in monos {
            acc += &self.eval(m)?;
        }
        Ok(acc)
    }
}

/// Checks that every component referenced by the dictionary exists in `d`.
pub(crate) fn check_components(dict: &Dictionary, d: &GridDataset) -> Result<()> {
    let n = d.n_components();
    let mut comps: Vec<usize> = dict.equations.iter().flat_map(|e| e.lhs.components()).collect();
    for t in &dict.terms {
        for r in &t.rows {
            for p in &r.pieces {
                comps.extend(p.mono.components());
            }
        }
    }
    match comps.into_iter().find(|&c| c >= n) {
        Some(c) => Err(Error::MissingComponent {
            component: c,
            available: n,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongOptions {
    /// Grid layers dropped at each end of every non-periodic axis (time included).
    pub boundary_layers: usize,
    /// Uniform subsampling cap on the number of sample points per equation.
    pub max_points_per_equation: Option<usize>,
    /// Scale each equation block of a joint multi-equation system by `1/||b_e||`.
    pub balance_equations: bool,
}

impl Default for StrongOptions {
    fn default() -> Self {
        StrongOptions {
            boundary_layers: 2,
            max_points_per_equation: Some(200_000),
            balance_equations: true,
        }
    }
}

/// Flat (row-major) indices of the interior sample points of a `(space..., time)` field.
fn sample_points(d: &GridDataset, opts: &StrongOptions) -> Result<Vec<usize>> {
    let shape = d.component_shape();
    let nd = shape.len();
    let bl = opts.boundary_layers;
    let ranges: Vec<(usize, usize)> = (0..nd)
        .map(|a| {
            let trimmed = if a == nd - 1 {
                true
            } else {
                !d.is_ensemble() && !d.periodic[a]
            };
            if trimmed {
                (bl, shape[a].saturating_sub(bl))
            } else {
                (0, shape[a])
            }
        })
        .collect();
    if ranges.iter().any(|(lo, hi)| lo >= hi) {
        return Err(Error::TooFewSamples {
            needed: 2 * bl + 1,
            got: *shape.iter().min().unwrap_or(&0),
        });
    }
    let mut strides = vec![1usize; nd];
    for a in (0..nd - 1).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let mut out = vec![0usize];
    for a in 0..nd {
        let (lo, hi) = ranges[a];
        let st = strides[a];
        out = out
            .iter()
            .flat_map(|&base| (lo..hi).map(move |i| base + i * st))
            .collect();
    }
    if let Some(cap) = opts.max_points_per_equation {
        if cap > 0 && out.len() > cap {
            let step = out.len().div_ceil(cap);
            out = out.into_iter().step_by(step).collect();
        }
    }
    Ok(out)
}

/// Strong-form system for all terms and equations of `dict`, rows equation-major.
pub fn evaluate_strong(dict: &Dictionary, d: &GridDataset, opts: &StrongOptions) -> Result<LinearSystem> {
    let terms: Vec<usize> = (0..dict.len()).collect();
    let eqs: Vec<usize> = (0..dict.equations.len()).collect();
    evaluate_strong_subset(dict, d, opts, &terms, &eqs)
}

/// Strong-form system restricted to the given terms and equations.
pub fn evaluate_strong_subset(
    dict: &Dictionary,
    d: &GridDataset,
    opts: &StrongOptions,
    terms: &[usize],
    equations: &[usize],
) -> Result<LinearSystem> {
    check_components(dict, d)?;
    let points = sample_points(d, opts)?;
    let mut cache = FieldCache::new(d);

    let expanded: Vec<Vec<Option<Vec<Monomial>>>> = terms
        .iter()
        .map(|&j| equations.iter().map(|&e| dict.terms[j].expanded(e)).collect())
        .collect();
    let lhs: Vec<&Monomial> = equations.iter().map(|&e| &dict.equations[e].lhs).collect();
    cache.require_monomials(
        expanded
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .chain(lhs.iter().copied()),
    )?;

    let pick = |f: &ArrayD<f64>| -> Array1<f64> {
        let s = f.as_slice().expect("standard layout");
        points.iter().map(|&i| s[i]).collect()
    };

    let n_pts = points.len();
    let n_eq = equations.len();
    let mut b = Array1::zeros(n_pts * n_eq);
    let mut weights = vec![1.0; n_eq];
    for (k, m) in lhs.iter().enumerate() {
        let field = cache.eval(m)?;
        let dt = time_derivative_field(&field.view(), d.dt)?;
        let block = pick(&dt.as_standard_layout().into_owned());
        b.slice_mut(ndarray::s![k * n_pts..(k + 1) * n_pts]).assign(&block);
    }
    if opts.balance_equations && n_eq > 1 && dict.is_joint() {
        for (k, w) in weights.iter_mut().enumerate() {
            let blk = b.slice(ndarray::s![k * n_pts..(k + 1) * n_pts]);
            let norm = blk.dot(&blk).sqrt();
            if norm > 0.0 {
                *w = 1.0 / norm;
            }
        }
        for (k, w) in weights.iter().enumerate() {
            b.slice_mut(ndarray::s![k * n_pts..(k + 1) * n_pts])
                .mapv_inplace(|v| v * w);
        }
    }

    let columns: Vec<Array1<f64>> = expanded
        .par_iter()
        .map(|rows| {
            let mut col = Array1::zeros(n_pts * n_eq);
            for (k, monos) in rows.iter().enumerate() {
                if let Some(monos) = monos {
                    let f = cache.eval_sum(monos)?;
                    let v = pick(&f) * weights[k];
                    col.slice_mut(ndarray::s![k * n_pts..(k + 1) * n_pts]).assign(&v);
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let mut theta = Array2::zeros((n_pts * n_eq, terms.len()));
    for (j, col) in columns.iter().enumerate() {
        theta.column_mut(j).assign(col);
    }
    let row_map = equations
        .iter()
        .flat_map(|&e| (0..n_pts).map(move |s| RowTag { equation: e, sample: s }))
        .collect();
    LinearSystem::from_raw(theta, b, row_map)
}
