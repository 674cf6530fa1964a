//! Explicit finite differences for diffusion and exponential time
//! differencing for Allen-Cahn, both on periodic 1D grids.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::fv::field_dataset;
use super::{nodes, SimConfig};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::systems::System;

pub(crate) fn diffusion_initial(x: f64) -> f64 {
    (-600.0 * (x - 0.5).powi(2)).exp() + 0.2 * (4.0 * PI * x).sin()
}

/// Forward Euler on `u_t = rhs(u)`, keeping every `stride`-th state.
pub(crate) fn forward_euler<F>(u0: Vec<f64>, dt: f64, n_steps: usize, stride: usize, mut rhs: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut u = u0;
    let mut out = vec![u.clone()];
    for step in 1..=n_steps {
        let r = rhs(&u)?;
        for (a, b) in u.iter_mut().zip(&r) {
            *a += dt * b;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationAborted(format!("non-finite state at step {step}")));
        }
        if step % stride == 0 {
            out.push(u.clone());
        }
    }
    Ok(out)
}

fn laplacian(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let s = 1.0 / (dx * dx);
    (0..n)
        .map(|i| (u[(i + n - 1) % n] - 2.0 * u[i] + u[(i + 1) % n]) * s)
        .collect()
}

pub(crate) fn simulate_diffusion(cfg: &SimConfig) -> Result<GridDataset> {
    let n = cfg.n_space[0];
    let dx = cfg.dx();
    let u0 = nodes(n, cfg.length).into_iter().map(diffusion_initial).collect();
    let nu = cfg.viscosity;
    let snaps = forward_euler(u0, cfg.dt, cfg.n_steps(), cfg.stride, |u| {
        Ok(laplacian(u, dx[0]).into_iter().map(|v| nu * v).collect())
    })?;
    let snaps: Vec<Vec<Vec<f64>>> = snaps.into_iter().map(|u| vec![u]).collect();
    field_dataset(&snaps, &cfg.n_space, dx, cfg.dt * cfg.stride as f64, System::Diffusion.component_names())
}

pub(crate) fn allen_cahn_initial(x: f64) -> f64 {
    x.cos() + (2.0 * x).cos() + 0.5 * (3.0 * x).cos()
}

/// Angular wavenumbers of an `n`-point periodic grid of the given length.
pub(crate) fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * m / length
        })
        .collect()
}

/// First-order exponential time differencing for `u_t = L u + N(u)`, with `L`
/// diagonal in Fourier space (`symbol[j]`) and `N` evaluated pointwise.
pub(crate) fn etd1<F>(
    u0: Vec<f64>,
    symbol: &[Complex64],
    dt: f64,
    n_steps: usize,
    stride: usize,
    mut nonlinear: F,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = u0.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let e: Vec<Complex64> = symbol.iter().map(|&l| (l * dt).exp()).collect();
    let phi: Vec<Complex64> = symbol
        .iter()
        .zip(&e)
        .map(|(&l, &el)| if (l * dt).norm() < 1e-12 { Complex64::new(dt, 0.0) } else { (el - 1.0) / l })
        .collect();
    let to_spec = |v: &[f64]| {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fwd.process(&mut buf);
        buf
    };
    let mut u = u0;
    let mut out = vec![u.clone()];
    for step in 1..=n_steps {
        let nl = nonlinear(&u)?;
        let uh = to_spec(&u);
        let nh = to_spec(&nl);
        let mut next: Vec<Complex64> = (0..n).map(|j| e[j] * uh[j] + phi[j] * nh[j]).collect();
        inv.process(&mut next);
        u = next.iter().map(|c| c.re / n as f64).collect();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationAborted(format!("non-finite state at step {step}")));
        }
        if step % stride == 0 {
            out.push(u.clone());
        }
    }
    Ok(out)
}

pub(crate) fn simulate_allen_cahn(cfg: &SimConfig) -> Result<GridDataset> {
    let n = cfg.n_space[0];
    let u0 = nodes(n, cfg.length).into_iter().map(allen_cahn_initial).collect();
    let symbol: Vec<Complex64> = wavenumbers(n, cfg.length)
        .into_iter()
        .map(|k| Complex64::new(-k * k, 0.0))
        .collect();
    let snaps = etd1(u0, &symbol, cfg.dt, cfg.n_steps(), cfg.stride, |u| {
        Ok(u.iter().map(|&v| v - v * v * v).collect())
    })?;
    let snaps: Vec<Vec<Vec<f64>>> = snaps.into_iter().map(|u| vec![u]).collect();
    field_dataset(&snaps, &cfg.n_space, cfg.dx(), cfg.dt * cfg.stride as f64, System::AllenCahn.component_names())
}

/// `int (u_x^2 / 2 + (u^2 - 1)^2 / 4) dx` with a spectral gradient.
pub fn allen_cahn_energy(u: &[f64], length: f64) -> f64 {
    let n = u.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let k = wavenumbers(n, length);
    for (j, b) in buf.iter_mut().enumerate() {
        *b *= if 2 * j == n { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k[j]) };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let dx = length / n as f64;
    u.iter()
        .zip(&buf)
        .map(|(&v, g)| {
            let ux = g.re / n as f64;
            0.5 * ux * ux + 0.25 * (v * v - 1.0).powi(2)
        })
        .sum::<f64>()
        * dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_mode_decays_at_the_analytic_rate() {
        let cfg = SimConfig::for_system(System::Diffusion);
        let n = cfg.n_space[0];
        let dx = cfg.dx()[0];
        let u0: Vec<f64> = nodes(n, 1.0).into_iter().map(|x| (2.0 * PI * x).sin()).collect();
        let steps = (0.1 / cfg.dt).round() as usize;
        let s = forward_euler(u0.clone(), cfg.dt, steps, steps, |u| {
            Ok(laplacian(u, dx).into_iter().map(|v| 0.02 * v).collect())
        })
        .unwrap();
        let i = n / 4;
        let ratio = s[1][i] / u0[i];
        let exact = (-0.02 * (2.0 * PI).powi(2) * 0.1).exp();
        assert!((ratio / exact - 1.0).abs() < 1e-3);
    }

    #[test]
    fn diffusion_keeps_constants_and_mass() {
        let s = forward_euler(vec![2.5; 64], 1e-4, 100, 10, |u| Ok(laplacian(u, 0.01))).unwrap();
        assert!(s.iter().flatten().all(|&v| (v - 2.5).abs() < 1e-12));
        let cfg = SimConfig::for_system(System::Diffusion);
        let d = simulate_diffusion(&cfg).unwrap();
        assert_eq!(d.n_time(), 201);
        let u = d.component(0).unwrap();
        let m0: f64 = u.index_axis(ndarray::Axis(1), 0).sum();
        let scale: f64 = u.index_axis(ndarray::Axis(1), 0).iter().map(|v| v.abs()).sum();
        for t in 0..d.n_time() {
            let m: f64 = u.index_axis(ndarray::Axis(1), t).sum();
            assert!((m - m0).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn allen_cahn_energy_never_increases() {
        let cfg = SimConfig {
            stride: 1,
            ..SimConfig::for_system(System::AllenCahn)
        };
        let d = simulate_allen_cahn(&cfg).unwrap();
        let u = d.component(0).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..d.n_time() {
            let snap: Vec<f64> = u.index_axis(ndarray::Axis(1), t).iter().copied().collect();
            let e = allen_cahn_energy(&snap, cfg.length);
            assert!(e - prev <= 1e-8, "step {t}: {prev} -> {e}");
            prev = e;
        }
    }

    #[test]
    fn allen_cahn_uniform_one_is_fixed() {
        let symbol: Vec<Complex64> = wavenumbers(32, 2.0 * PI).into_iter().map(|k| Complex64::new(-k * k, 0.0)).collect();
        let s = etd1(vec![1.0; 32], &symbol, 1e-3, 100, 100, |u| Ok(u.iter().map(|&v| v - v * v * v).collect())).unwrap();
        assert!(s[1].iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn allen_cahn_stays_near_the_wells() {
        let d = simulate_allen_cahn(&SimConfig::for_system(System::AllenCahn)).unwrap();
        let u = d.component(0).unwrap();
        let last = u.index_axis(ndarray::Axis(1), d.n_time() - 1);
        assert!(last.iter().all(|&v| v.abs() <= 1.0 + 1e-3));
    }
}
