//! Fixed-step RK4 for the Hamiltonian ODE benchmarks.

use ndarray::Array3;

use super::SimConfig;
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::systems::System;

/// Close-approach threshold for the gravitational solver.
const MIN_SEPARATION: f64 = 1e-6;

/// Integrates `z' = f(z)` and returns every `stride`-th state, the initial one included.
pub(crate) fn rk4<F>(rhs: F, z0: &[f64], dt: f64, n_steps: usize, stride: usize) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = z0.len();
    let mut z = z0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut out = vec![z.clone()];
    for step in 1..=n_steps {
        rhs(&z, &mut k1)?;
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = z[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4)?;
        for i in 0..n {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationAborted(format!("non-finite state at step {step}")));
        }
        if step % stride == 0 {
            out.push(z.clone());
        }
    }
    Ok(out)
}

/// Packs trajectories `[traj][time][component]` into an ensemble dataset.
pub(crate) fn ensemble(trajs: &[Vec<Vec<f64>>], dt: f64, names: Vec<String>) -> Result<GridDataset> {
    let nt = trajs[0].len();
    let nc = names.len();
    let v = Array3::from_shape_fn((nc, trajs.len(), nt), |(c, k, n)| trajs[k][n][c]);
    GridDataset::ensemble(v.into_dyn(), dt, names)
}

pub(crate) fn harmonic_rhs(z: &[f64], out: &mut [f64]) -> Result<()> {
    out[0] = 2.0 * z[1];
    out[1] = -2.0 * z[0];
    Ok(())
}

pub fn harmonic_energy(q: f64, p: f64) -> f64 {
    q * q + p * p
}

pub(crate) fn simulate_harmonic(cfg: &SimConfig) -> Result<GridDataset> {
    let trajs: Vec<Vec<Vec<f64>>> = cfg
        .radii
        .iter()
        .map(|&r| rk4(harmonic_rhs, &[r, 0.0], cfg.dt, cfg.n_steps(), cfg.stride))
        .collect::<Result<_>>()?;
    ensemble(&trajs, cfg.dt * cfg.stride as f64, System::Harmonic.component_names())
}

/// Perturbed figure-eight: positions then momenta, body-major.
pub fn three_body_initial() -> Vec<f64> {
    vec![
        -0.9700, 0.2431, 0.0, 0.0, 0.0, 0.0, 0.9700, -0.2431, 0.0, //
        0.4662, 0.4324, 0.001, -0.9324, -0.8647, 0.0, 0.4662, 0.4324, -0.001,
    ]
}

fn separation(z: &[f64], i: usize, j: usize) -> ([f64; 3], f64) {
    let d = [
        z[3 * i] - z[3 * j],
        z[3 * i + 1] - z[3 * j + 1],
        z[3 * i + 2] - z[3 * j + 2],
    ];
    (d, (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
}

pub(crate) fn three_body_rhs(z: &[f64], out: &mut [f64], g: f64, m: &[f64; 3]) -> Result<()> {
    for i in 0..3 {
        for a in 0..3 {
            out[3 * i + a] = z[9 + 3 * i + a] / m[i];
            out[9 + 3 * i + a] = 0.0;
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let (d, r) = separation(z, i, j);
            if r < MIN_SEPARATION {
                return Err(Error::SimulationAborted(format!(
                    "bodies {} and {} closer than {MIN_SEPARATION}",
                    i + 1,
                    j + 1
                )));
            }
            let s = g * m[i] * m[j] / (r * r * r);
            for a in 0..3 {
                out[9 + 3 * i + a] -= s * d[a];
                out[9 + 3 * j + a] += s * d[a];
            }
        }
    }
    Ok(())
}

pub fn three_body_energy(z: &[f64], g: f64, m: &[f64; 3]) -> f64 {
    let mut e = 0.0;
    for i in 0..3 {
        let p2: f64 = (0..3).map(|a| z[9 + 3 * i + a].powi(2)).sum();
        e += 0.5 * p2 / m[i];
        for j in i + 1..3 {
            e -= g * m[i] * m[j] / separation(z, i, j).1;
        }
    }
    e
}

pub(crate) fn simulate_three_body(cfg: &SimConfig) -> Result<GridDataset> {
    let z0 = three_body_initial();
    let traj = rk4(
        |z, out| three_body_rhs(z, out, cfg.grav_const, &cfg.masses),
        &z0,
        cfg.dt,
        cfg.n_steps(),
        cfg.stride,
    )?;
    ensemble(&[traj], cfg.dt * cfg.stride as f64, System::ThreeBody.component_names())
}
