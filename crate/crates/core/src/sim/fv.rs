//! Conservative finite volumes on periodic 1D/2D grids with (local or global)
//! Lax-Friedrichs fluxes.

use std::f64::consts::PI;

use ndarray::{ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use super::{nodes, Reconstruction, SimConfig};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::systems::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FvScheme {
    pub reconstruction: Reconstruction,
    /// One dissipation speed for the whole grid (Lax-Friedrichs) instead of per face (Rusanov).
    pub global_speed: bool,
    /// Split each step into equal substeps keeping the Courant number below the
    /// scheme limit, instead of failing.
    pub substeps: bool,
}

impl FvScheme {
    fn cfl_limit(&self) -> f64 {
        match self.reconstruction {
            Reconstruction::FirstOrder => 1.0,
            Reconstruction::Muscl => 0.5,
        }
    }
}

/// A system of conservation laws `q_t + div F(q) = 0`.
pub(crate) struct Law<'a> {
    pub n_vars: usize,
    /// Physical flux along `axis` at the conserved state `q`.
    pub flux: &'a (dyn Fn(&[f64], usize, &mut [f64]) + Sync),
    /// Bound on the characteristic speeds along `axis`.
    pub speed: &'a (dyn Fn(&[f64], usize) -> f64 + Sync),
    /// Conserved variable that must stay positive.
    pub positive: Option<usize>,
}

struct Grid {
    shape: Vec<usize>,
    dx: Vec<f64>,
}

impl Grid {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Periodic neighbour of flat cell `i` along `axis`, offset +1 or -1.
    fn neighbour(&self, i: usize, axis: usize, up: bool) -> usize {
        let st = self.stride(axis);
        let n = self.shape[axis];
        let k = (i / st) % n;
        let k2 = if up { (k + 1) % n } else { (k + n - 1) % n };
        i + k2 * st - k * st
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn state(q: &[Vec<f64>], i: usize, buf: &mut [f64]) {
    for (v, b) in q.iter().zip(buf.iter_mut()) {
        *b = v[i];
    }
}

/// Max characteristic speed per axis over all cells.
fn max_speeds(law: &Law, q: &[Vec<f64>], g: &Grid) -> Vec<f64> {
    let mut buf = vec![0.0; law.n_vars];
    (0..g.shape.len())
        .map(|a| {
            (0..g.len())
                .map(|i| {
                    state(q, i, &mut buf);
                    (law.speed)(&buf, a)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Semi-discrete right-hand side `-div F` into `out`.
fn operator(law: &Law, q: &[Vec<f64>], g: &Grid, scheme: FvScheme, out: &mut [Vec<f64>]) {
    let nv = law.n_vars;
    let n = g.len();
    for o in out.iter_mut() {
        o.iter_mut().for_each(|v| *v = 0.0);
    }
    let global = if scheme.global_speed {
        Some(max_speeds(law, q, g))
    } else {
        None
    };
    let (mut ql, mut qr) = (vec![0.0; nv], vec![0.0; nv]);
    let (mut fl, mut fr) = (vec![0.0; nv], vec![0.0; nv]);
    for a in 0..g.shape.len() {
        let slopes: Vec<Vec<f64>> = match scheme.reconstruction {
            Reconstruction::FirstOrder => vec![Vec::new(); nv],
            Reconstruction::Muscl => q
                .iter()
                .map(|v| {
                    (0..n)
                        .map(|i| {
                            let up = v[g.neighbour(i, a, true)];
                            let dn = v[g.neighbour(i, a, false)];
                            minmod(v[i] - dn, up - v[i])
                        })
                        .collect()
                })
                .collect(),
        };
        let inv_dx = 1.0 / g.dx[a];
        // face between i and its upper neighbour j
        for i in 0..n {
            let j = g.neighbour(i, a, true);
            for c in 0..nv {
                let (si, sj) = if slopes[c].is_empty() {
                    (0.0, 0.0)
                } else {
                    (slopes[c][i], slopes[c][j])
                };
                ql[c] = q[c][i] + 0.5 * si;
                qr[c] = q[c][j] - 0.5 * sj;
            }
            (law.flux)(&ql, a, &mut fl);
            (law.flux)(&qr, a, &mut fr);
            let s = match &global {
                Some(v) => v[a],
                None => (law.speed)(&ql, a).max((law.speed)(&qr, a)),
            };
            for c in 0..nv {
                let f = 0.5 * (fl[c] + fr[c]) - 0.5 * s * (qr[c] - ql[c]);
                out[c][i] -= f * inv_dx;
                out[c][j] += f * inv_dx;
            }
        }
    }
}

/// Number of substeps for the step of length `dt` starting at `q`.
fn check_step(law: &Law, q: &[Vec<f64>], g: &Grid, dt: f64, scheme: FvScheme, step: usize) -> Result<usize> {
    let speeds = max_speeds(law, q, g);
    let cfl: f64 = speeds.iter().zip(&g.dx).map(|(s, h)| s * dt / h).sum();
    let limit = scheme.cfl_limit();
    if !cfl.is_finite() {
        return Err(Error::SimulationAborted(format!("non-finite wave speed at step {step}")));
    }
    let n_sub = if cfl <= limit {
        1
    } else if scheme.substeps {
        (cfl / limit).ceil() as usize
    } else {
        return Err(Error::Stability(format!("CFL number {cfl:.3} > {limit} at step {step}")));
    };
    if let Some(c) = law.positive {
        if let Some(v) = q[c].iter().find(|v| !(**v > 0.0)) {
            return Err(Error::SimulationAborted(format!(
                "non-positive value {v} of conserved variable {c} at step {step}"
            )));
        }
    }
    Ok(n_sub)
}

fn advance(law: &Law, q: &mut [Vec<f64>], g: &Grid, dt: f64, scheme: FvScheme, k1: &mut [Vec<f64>], k2: &mut [Vec<f64>]) {
    let nv = law.n_vars;
    let n = g.len();
    operator(law, q, g, scheme, k1);
    match scheme.reconstruction {
        Reconstruction::FirstOrder => {
            for c in 0..nv {
                for i in 0..n {
                    q[c][i] += dt * k1[c][i];
                }
            }
        }
        Reconstruction::Muscl => {
            let mut q1 = q.to_vec();
            for c in 0..nv {
                for i in 0..n {
                    q1[c][i] += dt * k1[c][i];
                }
            }
            operator(law, &q1, g, scheme, k2);
            for c in 0..nv {
                for i in 0..n {
                    q[c][i] = 0.5 * q[c][i] + 0.5 * (q1[c][i] + dt * k2[c][i]);
                }
            }
        }
    }
}

/// Integrates from `q0` (`[var][flat cell]`) and returns snapshots `[time][var][cell]`.
pub(crate) fn run(
    law: &Law,
    q0: Vec<Vec<f64>>,
    shape: &[usize],
    dx: &[f64],
    dt: f64,
    n_steps: usize,
    stride: usize,
    scheme: FvScheme,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let g = Grid {
        shape: shape.to_vec(),
        dx: dx.to_vec(),
    };
    let nv = law.n_vars;
    let n = g.len();
    let mut q = q0;
    let mut k1 = vec![vec![0.0; n]; nv];
    let mut k2 = vec![vec![0.0; n]; nv];
    let mut out = vec![q.clone()];
    for step in 1..=n_steps {
        let n_sub = check_step(law, &q, &g, dt, scheme, step - 1)?;
        let h = dt / n_sub as f64;
        for sub in 0..n_sub {
            if sub > 0 {
                check_step(law, &q, &g, h, scheme, step - 1)?;
            }
            advance(law, &mut q, &g, h, scheme, &mut k1, &mut k2);
        }
        if q.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SimulationAborted(format!("non-finite state at step {step}")));
        }
        if step % stride == 0 {
            out.push(q.clone());
        }
    }
    Ok(out)
}

/// Packs snapshots `[time][component][cell]` into a field dataset.
pub(crate) fn field_dataset(
    snaps: &[Vec<Vec<f64>>],
    shape: &[usize],
    dx: Vec<f64>,
    dt: f64,
    names: Vec<String>,
) -> Result<GridDataset> {
    let nc = names.len();
    let nt = snaps.len();
    let mut full = vec![nc];
    full.extend_from_slice(shape);
    full.push(nt);
    let n: usize = shape.iter().product();
    let mut v = ArrayD::zeros(IxDyn(&full));
    {
        let s = v.as_slice_mut().expect("fresh array");
        for c in 0..nc {
            for i in 0..n {
                for t in 0..nt {
                    s[(c * n + i) * nt + t] = snaps[t][c][i];
                }
            }
        }
    }
    let periodic = vec![true; shape.len()];
    GridDataset::field(v, dx, dt, periodic, names)
}

pub fn burgers_initial(x: f64) -> f64 {
    0.5 * ((2.0 * PI * x).sin() + (2.0 * PI * x).cos())
}

fn burgers_flux(q: &[f64], _axis: usize, out: &mut [f64]) {
    out[0] = 0.5 * q[0] * q[0];
}

fn burgers_speed(q: &[f64], _axis: usize) -> f64 {
    q[0].abs()
}

pub(crate) fn burgers_scheme(cfg: &SimConfig) -> FvScheme {
    FvScheme {
        reconstruction: cfg.reconstruction,
        global_speed: true,
        substeps: false,
    }
}

pub(crate) fn simulate_burgers(cfg: &SimConfig) -> Result<GridDataset> {
    let n = cfg.n_space[0];
    let dx = cfg.dx();
    let u0: Vec<f64> = nodes(n, cfg.length).into_iter().map(burgers_initial).collect();
    let law = Law {
        n_vars: 1,
        flux: &burgers_flux,
        speed: &burgers_speed,
        positive: None,
    };
    let snaps = run(&law, vec![u0], &cfg.n_space, &dx, cfg.dt, cfg.n_steps(), cfg.stride, burgers_scheme(cfg))?;
    field_dataset(&snaps, &cfg.n_space, dx, cfg.dt * cfg.stride as f64, System::Burgers.component_names())
}

/// Rusanov flux of the shallow-water system in conserved variables `(h, hu, hv)`.
pub(crate) fn swe_flux(g: f64) -> impl Fn(&[f64], usize, &mut [f64]) + Sync {
    move |q, axis, out| {
        let h = q[0];
        let (u, v) = (q[1] / h, q[2] / h);
        let p = 0.5 * g * h * h;
        if axis == 0 {
            out[0] = q[1];
            out[1] = q[1] * u + p;
            out[2] = q[1] * v;
        } else {
            out[0] = q[2];
            out[1] = q[2] * u;
            out[2] = q[2] * v + p;
        }
    }
}

pub(crate) fn swe_speed(g: f64) -> impl Fn(&[f64], usize) -> f64 + Sync {
    move |q, axis| {
        let h = q[0].max(0.0);
        (q[1 + axis] / q[0]).abs() + (g * h).sqrt()
    }
}

pub(crate) fn swe_scheme(cfg: &SimConfig) -> FvScheme {
    FvScheme {
        reconstruction: cfg.reconstruction,
        global_speed: false,
        substeps: true,
    }
}

/// Initial `(h, u, v)` as flat row-major arrays over the `nx x ny` node grid.
pub fn swe_initial(cfg: &SimConfig) -> Result<[Vec<f64>; 3]> {
    let (nx, ny) = (cfg.n_space[0], cfg.n_space[1]);
    let ic = &cfg.swe_initial;
    let big_h = cfg.depth;
    let xs = nodes(nx, cfg.length);
    let ys = nodes(ny, cfg.length);
    let mut pert = Vec::with_capacity(nx * ny);
    for &x in &xs {
        for &y in &ys {
            let r2 = (x - ic.center[0]).powi(2) + (y - ic.center[1]).powi(2);
            pert.push(
                ic.amplitude * (-ic.concentration * r2).exp()
                    + 0.8 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos()
                    + 0.3 * (4.0 * PI * x).cos() * (2.0 * PI * y).cos(),
            );
        }
    }
    let n = pert.len() as f64;
    let mean = pert.iter().sum::<f64>() / n;
    let std = (pert.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Err(Error::Config("height perturbation has zero spread".into()));
    }
    let s = ic.std_fraction * big_h / std;
    let h: Vec<f64> = pert
        .iter()
        .map(|v| (big_h + (v - mean) * s).max(ic.floor_fraction * big_h))
        .collect();
    let omega = (cfg.gravity * big_h).sqrt() * ic.wavenumber;
    let k = ic.beta * cfg.gravity / omega;
    let (dx, dy) = (cfg.length / nx as f64, cfg.length / ny as f64);
    let at = |i: usize, j: usize| h[(i % nx) * ny + j % ny];
    let mut u = Vec::with_capacity(nx * ny);
    let mut v = Vec::with_capacity(nx * ny);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let hx = (at(i + 1, j) - at(i + nx - 1, j)) / (2.0 * dx);
            let hy = (at(i, j + 1) - at(i, j + ny - 1)) / (2.0 * dy);
            u.push(0.8 * (2.0 * PI * y).sin() + 0.35 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin() + k * hx);
            v.push(-0.6 * (2.0 * PI * x).sin() + 0.35 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + k * hy);
        }
    }
    Ok([h, u, v])
}

pub(crate) fn simulate_swe(cfg: &SimConfig) -> Result<GridDataset> {
    let [h, u, v] = swe_initial(cfg)?;
    let hu: Vec<f64> = h.iter().zip(&u).map(|(a, b)| a * b).collect();
    let hv: Vec<f64> = h.iter().zip(&v).map(|(a, b)| a * b).collect();
    let flux = swe_flux(cfg.gravity);
    let speed = swe_speed(cfg.gravity);
    let law = Law {
        n_vars: 3,
        flux: &flux,
        speed: &speed,
        positive: Some(0),
    };
    let dx = cfg.dx();
    let snaps = run(&law, vec![h, hu, hv], &cfg.n_space, &dx, cfg.dt, cfg.n_steps(), cfg.stride, swe_scheme(cfg))?;
    let prim: Vec<Vec<Vec<f64>>> = snaps
        .into_iter()
        .map(|q| {
            let u = q[1].iter().zip(&q[0]).map(|(m, h)| m / h).collect();
            let v = q[2].iter().zip(&q[0]).map(|(m, h)| m / h).collect();
            vec![q[0].clone(), u, v]
        })
        .collect();
    field_dataset(&prim, &cfg.n_space, dx, cfg.dt * cfg.stride as f64, System::Swe.component_names())
}

/// `(h, hu, hv)` from a dataset holding `(h, u, v)`.
pub fn swe_conserved(d: &GridDataset) -> Result<GridDataset> {
    if d.n_components() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected components (h, u, v), got {}",
            d.n_components()
        )));
    }
    let mut out = d.clone();
    let h = d.values.index_axis(Axis(0), 0).to_owned();
    for c in 1..3 {
        let mut m = out.values.index_axis_mut(Axis(0), c);
        m *= &h;
    }
    out.component_names = vec!["h".into(), "hu".into(), "hv".into()];
    Ok(out)
}
