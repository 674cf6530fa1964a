//! Integrates an identified model from the initial state of a reference dataset.

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fv::{self, field_dataset, Law};
use super::ode::{ensemble, rk4};
use super::parabolic::{etd1, forward_euler, wavenumbers};
use super::SimConfig;
use crate::dictionary::{Dictionary, FieldCache};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::SparseModel;
use crate::symbolic::{collect_terms, Monomial};
use crate::systems::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResimScheme {
    /// Same scheme family as the generator of the system.
    Native,
    /// RK4 with second-order central differences.
    MethodOfLines,
}

#[derive(Debug, Clone)]
pub struct Resimulation {
    /// Trajectory on the grid of the reference, components as in the reference.
    pub data: GridDataset,
    pub scheme: ResimScheme,
    pub diagnostic: Option<String>,
}

/// How a component is recovered from the equation variables: `u_c = q_eq / (k * u_div)`.
#[derive(Debug, Clone)]
struct Recovery {
    component: usize,
    equation: usize,
    scale: f64,
    divisor: Option<usize>,
}

/// Identified right-hand side per equation, and the change of variables between
/// equation variables (the left-hand sides) and components.
struct ModelRhs {
    rows: Vec<Vec<Monomial>>,
    lhs: Vec<Monomial>,
    recovery: Vec<Recovery>,
    n_components: usize,
}

impl ModelRhs {
    fn new(model: &SparseModel, dict: &Dictionary, n_components: usize) -> Result<Self> {
        let n_eq = dict.equations.len();
        let mut rows = vec![Vec::new(); n_eq];
        for (&j, &c) in model.support.iter().zip(&model.coefficients) {
            let term = dict.terms.get(j).ok_or_else(|| {
                Error::InvalidArgument(format!("model term {j} outside a dictionary of {}", dict.len()))
            })?;
            for e in 0..n_eq {
                if let Some(monos) = term.expanded(e) {
                    rows[e].extend(monos.into_iter().map(|m| m.scaled(c)));
                }
            }
        }
        let rows = rows.into_iter().map(collect_terms).collect();
        let lhs: Vec<Monomial> = dict.equations.iter().map(|e| e.lhs.clone()).collect();
        let recovery = Self::plan_recovery(&lhs, n_components)?;
        Ok(ModelRhs {
            rows,
            lhs,
            recovery,
            n_components,
        })
    }

    fn plan_recovery(lhs: &[Monomial], n_components: usize) -> Result<Vec<Recovery>> {
        let mut known = vec![false; n_components];
        let mut plan = Vec::new();
        let mut pending: Vec<usize> = (0..lhs.len()).collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&e| {
                let m = &lhs[e];
                let plain = m.inv_dist.is_none() && m.factors.iter().all(|f| f.deriv.is_none() && f.power == 1);
                if !plain || m.coeff == 0.0 {
                    return true;
                }
                let unknown: Vec<usize> = m.factors.iter().map(|f| f.component).filter(|&c| !known[c]).collect();
                match (unknown.as_slice(), m.factors.len()) {
                    ([c], 1) => {
                        plan.push(Recovery { component: *c, equation: e, scale: m.coeff, divisor: None });
                        known[*c] = true;
                        false
                    }
                    ([c], 2) => {
                        let other = m.factors.iter().map(|f| f.component).find(|x| x != c).unwrap();
                        plan.push(Recovery { component: *c, equation: e, scale: m.coeff, divisor: Some(other) });
                        known[*c] = true;
                        false
                    }
                    _ => true,
                }
            });
            if pending.len() == before {
                return Err(Error::InvalidArgument(
                    "equation left-hand sides cannot be inverted to the state components".into(),
                ));
            }
        }
        if let Some(c) = known.iter().position(|k| !k) {
            return Err(Error::InvalidArgument(format!("no equation determines component {c}")));
        }
        Ok(plan)
    }

    /// Components from equation variables, pointwise.
    fn to_components(&self, q: &[f64], z: &mut [f64]) {
        for r in &self.recovery {
            let d = r.divisor.map_or(1.0, |c| z[c]);
            z[r.component] = q[r.equation] / (r.scale * d);
        }
    }

    fn to_equation_vars(&self, z: &[f64], q: &mut [f64]) {
        for (qe, m) in q.iter_mut().zip(&self.lhs) {
            *qe = m.eval_state(z);
        }
    }

    fn is_derivative_free(&self) -> bool {
        self.rows.iter().flatten().all(|m| m.max_deriv_order() == 0)
    }

    /// Right-hand side on a field snapshot `[component][cell]`.
    fn eval_field(&self, z: &[Vec<f64>], shape: &[usize], dx: &[f64], central: bool) -> Result<Vec<Vec<f64>>> {
        let n: usize = shape.iter().product();
        let mut full = vec![z.len()];
        full.extend_from_slice(shape);
        full.push(1);
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let values = ArrayD::from_shape_vec(IxDyn(&full), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let names = (0..z.len()).map(|c| format!("z{c}")).collect();
        let d = GridDataset::field(values, dx.to_vec(), 1.0, vec![true; shape.len()], names)?;
        let mut cache = if central { FieldCache::central(&d) } else { FieldCache::new(&d) };
        cache.require_monomials(self.rows.iter().flatten())?;
        self.rows
            .iter()
            .map(|r| {
                if r.is_empty() {
                    return Ok(vec![0.0; n]);
                }
                Ok(cache.eval_sum(r)?.iter().copied().collect())
            })
            .collect()
    }
}

/// Flux functions `F[eq][axis]` with `q_t + div F = 0`, when every selected piece
/// is a first derivative of a derivative-free atom.
fn flux_form(model: &SparseModel, dict: &Dictionary, n_axes: usize) -> Option<Vec<Vec<Vec<Monomial>>>> {
    let mut flux = vec![vec![Vec::new(); n_axes]; dict.equations.len()];
    for (&j, &c) in model.support.iter().zip(&model.coefficients) {
        for row in &dict.terms.get(j)?.rows {
            for p in &row.pieces {
                let p = p.to_divergence_form();
                if p.outer.order() != 1 || p.mono.max_deriv_order() != 0 {
                    return None;
                }
                let axis = if p.outer.0[0] == 1 { 0 } else { 1 };
                if axis >= n_axes {
                    return None;
                }
                flux[row.equation][axis].push(p.mono.scaled(-c));
            }
        }
    }
    Some(flux)
}

fn snapshot(reference: &GridDataset, t: usize) -> Vec<Vec<f64>> {
    let ax = reference.values.ndim() - 1;
    let s = reference.values.index_axis(Axis(ax), t);
    s.axis_iter(Axis(0)).map(|c| c.iter().copied().collect()).collect()
}

/// Integrates the identified model with the scheme family of `cfg.system`,
/// starting from the first snapshot of `reference` and sampled like it.
pub fn resimulate(
    model: &SparseModel,
    dict: &Dictionary,
    reference: &GridDataset,
    cfg: &SimConfig,
) -> Result<Resimulation> {
    let stride_dt = cfg.dt * cfg.stride as f64;
    if ((reference.dt - stride_dt) / stride_dt).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "reference sampled every {} but the configuration stores every {stride_dt}",
            reference.dt
        )));
    }
    let rhs = ModelRhs::new(model, dict, reference.n_components())?;
    let n_steps = (reference.n_time() - 1) * cfg.stride;
    let names = reference.component_names.clone();

    if cfg.system.is_ode() {
        if !rhs.is_derivative_free() {
            return Err(Error::InvalidArgument("ODE model contains spatial derivatives".into()));
        }
        let nc = rhs.n_components;
        let n_eq = rhs.lhs.len();
        let f = |q: &[f64], out: &mut [f64]| -> Result<()> {
            let mut z = vec![0.0; nc];
            rhs.to_components(q, &mut z);
            for (o, r) in out.iter_mut().zip(&rhs.rows) {
                *o = r.iter().map(|m| m.eval_state(&z)).sum();
            }
            Ok(())
        };
        let trajs: Vec<Vec<Vec<f64>>> = (0..reference.space_shape()[0])
            .map(|k| {
                let z0: Vec<f64> = (0..nc).map(|c| reference.values[[c, k, 0]]).collect();
                let mut q0 = vec![0.0; n_eq];
                rhs.to_equation_vars(&z0, &mut q0);
                let tr = rk4(&f, &q0, cfg.dt, n_steps, cfg.stride)?;
                Ok(tr
                    .into_iter()
                    .map(|q| {
                        let mut z = vec![0.0; nc];
                        rhs.to_components(&q, &mut z);
                        z
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        return Ok(Resimulation {
            data: ensemble(&trajs, reference.dt, names)?,
            scheme: ResimScheme::Native,
            diagnostic: None,
        });
    }

    let shape = reference.space_shape().to_vec();
    let dx = reference.dx.clone();
    let z0 = snapshot(reference, 0);
    let snaps = match cfg.system {
        System::Burgers | System::Swe => {
            match flux_form(model, dict, shape.len()) {
                Some(flux) => native_fv(&rhs, &flux, z0, &shape, &dx, cfg, n_steps).map(|s| (s, ResimScheme::Native, None)),
                None => mol(&rhs, z0, &shape, &dx, cfg, n_steps).map(|s| {
                    (
                        s,
                        ResimScheme::MethodOfLines,
                        Some("identified model is not in flux form; integrated by central-difference method of lines".to_string()),
                    )
                }),
            }
        }
        System::Diffusion => {
            let s = forward_euler(z0[0].clone(), cfg.dt, n_steps, cfg.stride, |u| {
                Ok(rhs.eval_field(&[u.to_vec()], &shape, &dx, true)?.swap_remove(0))
            })?;
            Ok((s.into_iter().map(|u| vec![u]).collect(), ResimScheme::Native, None))
        }
        System::AllenCahn => native_etd(&rhs, z0, &shape, &dx, cfg, n_steps).map(|s| (s, ResimScheme::Native, None)),
        System::Harmonic | System::ThreeBody => unreachable!(),
    };
    let (snaps, scheme, diagnostic) = snaps?;
    Ok(Resimulation {
        data: field_dataset(&snaps, &shape, dx, reference.dt, names)?,
        scheme,
        diagnostic,
    })
}

fn native_fv(
    rhs: &ModelRhs,
    flux: &[Vec<Vec<Monomial>>],
    z0: Vec<Vec<f64>>,
    shape: &[usize],
    dx: &[f64],
    cfg: &SimConfig,
    n_steps: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let nc = rhs.n_components;
    let n_eq = rhs.lhs.len();
    let n: usize = shape.iter().product();
    let flux_fn = |q: &[f64], axis: usize, out: &mut [f64]| {
        let mut z = [0.0; 8];
        rhs.to_components(q, &mut z[..nc]);
        for (o, f) in out.iter_mut().zip(flux) {
            *o = f[axis].iter().map(|m| m.eval_state(&z[..nc])).sum();
        }
    };
    let dflux: Vec<Vec<Monomial>> = flux
        .iter()
        .map(|f| collect_terms(f[0].iter().flat_map(|m| m.partial_state(0)).collect()))
        .collect();
    let scalar_speed = |q: &[f64], _axis: usize| {
        let mut z = [0.0; 8];
        rhs.to_components(q, &mut z[..nc]);
        dflux[0].iter().map(|m| m.eval_state(&z[..nc])).sum::<f64>().abs()
    };
    let swe_speed = fv::swe_speed(cfg.gravity);
    let (speed, scheme, positive): (&(dyn Fn(&[f64], usize) -> f64 + Sync), _, _) = match cfg.system {
        System::Swe => (&swe_speed, fv::swe_scheme(cfg), Some(0)),
        _ if n_eq == 1 => (&scalar_speed, fv::burgers_scheme(cfg), None),
        _ => return Err(Error::InvalidArgument("no wave-speed bound for this flux system".into())),
    };
    if nc > 8 {
        return Err(Error::InvalidArgument("flux systems support at most 8 components".into()));
    }
    let law = Law {
        n_vars: n_eq,
        flux: &flux_fn,
        speed,
        positive,
    };
    let mut q0 = vec![vec![0.0; n]; n_eq];
    let (mut z, mut q) = (vec![0.0; nc], vec![0.0; n_eq]);
    for i in 0..n {
        for c in 0..nc {
            z[c] = z0[c][i];
        }
        rhs.to_equation_vars(&z, &mut q);
        for e in 0..n_eq {
            q0[e][i] = q[e];
        }
    }
    let snaps = fv::run(&law, q0, shape, dx, cfg.dt, n_steps, cfg.stride, scheme)?;
    Ok(snaps.into_iter().map(|s| field_components(rhs, &s)).collect())
}

fn field_components(rhs: &ModelRhs, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nc = rhs.n_components;
    let n = q[0].len();
    let mut out = vec![vec![0.0; n]; nc];
    let (mut z, mut qi) = (vec![0.0; nc], vec![0.0; q.len()]);
    for i in 0..n {
        for (e, v) in q.iter().enumerate() {
            qi[e] = v[i];
        }
        rhs.to_components(&qi, &mut z);
        for c in 0..nc {
            out[c][i] = z[c];
        }
    }
    out
}

fn field_equation_vars(rhs: &ModelRhs, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = z[0].len();
    let n_eq = rhs.lhs.len();
    let mut out = vec![vec![0.0; n]; n_eq];
    let (mut zi, mut q) = (vec![0.0; z.len()], vec![0.0; n_eq]);
    for i in 0..n {
        for (c, v) in z.iter().enumerate() {
            zi[c] = v[i];
        }
        rhs.to_equation_vars(&zi, &mut q);
        for e in 0..n_eq {
            out[e][i] = q[e];
        }
    }
    out
}

/// RK4 on the equation variables with central-difference spatial terms.
fn mol(
    rhs: &ModelRhs,
    z0: Vec<Vec<f64>>,
    shape: &[usize],
    dx: &[f64],
    cfg: &SimConfig,
    n_steps: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n: usize = shape.iter().product();
    let n_eq = rhs.lhs.len();
    let q0: Vec<f64> = field_equation_vars(rhs, &z0).into_iter().flatten().collect();
    let f = |q: &[f64], out: &mut [f64]| -> Result<()> {
        let qs: Vec<Vec<f64>> = q.chunks(n).map(<[f64]>::to_vec).collect();
        let z = field_components(rhs, &qs);
        let r = rhs.eval_field(&z, shape, dx, true)?;
        for (o, v) in out.chunks_mut(n).zip(r) {
            o.copy_from_slice(&v);
        }
        Ok(())
    };
    let traj = rk4(f, &q0, cfg.dt, n_steps, cfg.stride)?;
    Ok(traj
        .into_iter()
        .map(|q| {
            let qs: Vec<Vec<f64>> = q.chunks(n).take(n_eq).map(<[f64]>::to_vec).collect();
            field_components(rhs, &qs)
        })
        .collect())
}

/// ETD1 with constant-coefficient linear derivative terms in the exact factor.
fn native_etd(
    rhs: &ModelRhs,
    z0: Vec<Vec<f64>>,
    shape: &[usize],
    dx: &[f64],
    cfg: &SimConfig,
    n_steps: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if rhs.rows.len() != 1 || shape.len() != 1 || rhs.recovery[0].divisor.is_some() {
        return Err(Error::InvalidArgument("exponential integrator needs one scalar 1D equation".into()));
    }
    let n = shape[0];
    let k = wavenumbers(n, n as f64 * dx[0]);
    let mut symbol = vec![Complex64::new(0.0, 0.0); n];
    let mut rest = Vec::new();
    for m in &rhs.rows[0] {
        match m.as_linear() {
            Some((0, d)) if d.order() > 0 && d.0[1] == 0 => {
                for (s, &kj) in symbol.iter_mut().zip(&k) {
                    *s += m.coeff * Complex64::new(0.0, kj).powu(d.order());
                }
            }
            _ => rest.push(m.clone()),
        }
    }
    let part = ModelRhs {
        rows: vec![rest],
        lhs: rhs.lhs.clone(),
        recovery: rhs.recovery.clone(),
        n_components: 1,
    };
    let scale = rhs.recovery[0].scale;
    let u0: Vec<f64> = z0[0].iter().map(|v| v * scale).collect();
    let s = etd1(u0, &symbol, cfg.dt, n_steps, cfg.stride, |q| {
        let z: Vec<f64> = q.iter().map(|v| v / scale).collect();
        Ok(part.eval_field(&[z], shape, dx, false)?.swap_remove(0))
    })?;
    Ok(s.into_iter().map(|q| vec![q.iter().map(|v| v / scale).collect()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::state_error;
    use crate::sim::simulate;

    fn truth_error(sys: System, prior: bool, cfg: &SimConfig) -> (f64, ResimScheme) {
        let d = simulate(cfg).unwrap();
        let dict = sys.library(prior).unwrap();
        let truth = dict.truth_model().unwrap();
        let r = resimulate(&truth, &dict, &d, cfg).unwrap();
        (state_error(&r.data.values, &d.values).unwrap().total, r.scheme)
    }

    fn short(sys: System) -> SimConfig {
        let mut c = SimConfig::for_system(sys);
        c.t_final = c.dt * c.stride as f64 * 20.0;
        c
    }

    #[test]
    fn ode_truth_reproduces_data() {
        for sys in [System::Harmonic, System::ThreeBody] {
            for prior in [false, true] {
                let cfg = if sys == System::Harmonic { SimConfig::for_system(sys) } else { short(sys) };
                let (e, s) = truth_error(sys, prior, &cfg);
                assert!(e <= 1e-8, "{sys} prior={prior}: {e}");
                assert_eq!(s, ResimScheme::Native);
            }
        }
    }

    #[test]
    fn pde_truth_reproduces_data() {
        for sys in [System::Burgers, System::Swe, System::Diffusion, System::AllenCahn] {
            let mut cfg = short(sys);
            if sys == System::Swe {
                cfg.n_space = vec![32, 32];
            }
            let (e, s) = truth_error(sys, true, &cfg);
            assert!(e <= 1e-6, "{sys}: {e}");
            assert_eq!(s, ResimScheme::Native);
        }
    }

    #[test]
    fn non_flux_models_fall_back() {
        let cfg = short(System::Burgers);
        let d = simulate(&cfg).unwrap();
        let dict = System::Burgers.baseline_library().unwrap();
        let mut m = dict.truth_model().unwrap();
        let j = dict.index_of("u").unwrap();
        m = SparseModel::new(m.support.iter().copied().zip(m.coefficients.iter().copied()).chain([(j, 1e-3)]), 0.0);
        let r = resimulate(&m, &dict, &d, &cfg).unwrap();
        assert_eq!(r.scheme, ResimScheme::MethodOfLines);
        assert!(r.diagnostic.is_some());
        assert!(state_error(&r.data.values, &d.values).unwrap().total < 1e-2);
    }

    #[test]
    fn baseline_burgers_truth_is_flux_form() {
        let cfg = short(System::Burgers);
        let (e, s) = truth_error(System::Burgers, false, &cfg);
        assert_eq!(s, ResimScheme::Native);
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn mismatched_sampling_is_rejected() {
        let cfg = short(System::Diffusion);
        let d = simulate(&cfg).unwrap();
        let dict = System::Diffusion.prior_library().unwrap();
        let other = SimConfig { stride: 20, ..cfg };
        assert!(resimulate(&dict.truth_model().unwrap(), &dict, &d, &other).is_err());
    }
}
