//! Numerical derivatives of gridded data.
//!
//! Two backends: second-order finite differences (periodic wraparound or
//! one-sided boundary stencils) and Fourier collocation for periodic axes.

use ndarray::{ArrayD, ArrayViewD, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::GridDataset;

/// Finite-difference weights for the derivatives `0..=max_order` at `z`
/// over the nodes `x` (Fornberg's recursion). Returns `w[order][node]`.
pub fn fd_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

struct Stencil {
    offsets: Vec<isize>,
    weights: Vec<f64>,
}

fn stencil(order: u32, offsets: Vec<isize>, spacing: f64) -> Stencil {
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let w = fd_weights(0.0, &x, order as usize);
    let scale = spacing.powi(order as i32);
    Stencil {
        offsets,
        weights: w[order as usize].iter().map(|v| v / scale).collect(),
    }
}

fn check_axis(rank: usize, axis: usize) -> Result<()> {
    if axis >= rank {
        return Err(Error::AxisOutOfRange { axis, rank });
    }
    Ok(())
}

/// Second-order accurate central differences of order 1..=4 along `axis`.
///
/// Non-periodic axes use one-sided `order + 2` point stencils near the ends.
pub fn central_diff(
    field: &ArrayViewD<f64>,
    axis: usize,
    order: u32,
    spacing: f64,
    periodic: bool,
) -> Result<ArrayD<f64>> {
    check_axis(field.ndim(), axis)?;
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "derivative order {order} outside 1..=4"
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("spacing must be positive".into()));
    }
    let n = field.shape()[axis];
    let needed = order as usize + 2;
    if n < needed {
        return Err(Error::TooFewSamples { needed, got: n });
    }
    let half: isize = if order <= 2 { 1 } else { 2 };
    let central = stencil(order, (-half..=half).collect(), spacing);
    // one-sided stencils for the first/last `half` points
    let width = needed;
    let left: Vec<Stencil> = (0..half as usize)
        .map(|i| {
            let offs = (0..width as isize).map(|k| k - i as isize).collect();
            stencil(order, offs, spacing)
        })
        .collect();
    let right: Vec<Stencil> = (0..half as usize)
        .map(|i| {
            // point n-1-i
            let offs = (0..width as isize).map(|k| k - (width as isize - 1) + i as isize).collect();
            stencil(order, offs, spacing)
        })
        .collect();

    let mut out = ArrayD::zeros(field.raw_dim());
    let ni = n as isize;
    for (lane, mut olane) in field
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)))
    {
        for i in 0..n {
            let ii = i as isize;
            let st = if periodic || (ii >= half && ii < ni - half) {
                &central
            } else if ii < half {
                &left[i]
            } else {
                &right[n - 1 - i]
            };
            let mut acc = 0.0;
            for (&o, &w) in st.offsets.iter().zip(&st.weights) {
                let j = (ii + o).rem_euclid(ni) as usize;
                acc += w * lane[j];
            }
            olane[i] = acc;
        }
    }
    Ok(out)
}

/// Fourier-collocation derivative along a periodic axis of physical length `domain_length`.
pub fn spectral_diff(
    field: &ArrayViewD<f64>,
    axis: usize,
    order: u32,
    domain_length: f64,
) -> Result<ArrayD<f64>> {
    check_axis(field.ndim(), axis)?;
    if !(domain_length > 0.0) {
        return Err(Error::InvalidArgument("domain length must be positive".into()));
    }
    let n = field.shape()[axis];
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    if order == 0 {
        return Ok(field.to_owned());
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let multipliers: Vec<Complex64> = (0..n)
        .map(|j| {
            let freq = if j < n / 2 {
                j as f64
            } else if j == n / 2 && n % 2 == 0 {
                if order % 2 == 1 {
                    return Complex64::new(0.0, 0.0);
                }
                (n / 2) as f64
            } else {
                j as f64 - n as f64
            };
            let k = 2.0 * std::f64::consts::PI * freq / domain_length;
            Complex64::new(0.0, k).powu(order) / n as f64
        })
        .collect();

    let mut out = ArrayD::zeros(field.raw_dim());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (lane, mut olane) in field
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)))
    {
        for (b, &v) in buf.iter_mut().zip(lane.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, m) in buf.iter_mut().zip(&multipliers) {
            *b *= m;
        }
        inv.process(&mut buf);
        for (o, b) in olane.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }
    Ok(out)
}

/// Time derivative (last axis) of a `(space..., time)` field.
pub fn time_derivative_field(field: &ArrayViewD<f64>, dt: f64) -> Result<ArrayD<f64>> {
    let axis = field.ndim() - 1;
    if field.shape()[axis] < 3 {
        return Err(Error::FewTimeSamples);
    }
    central_diff(field, axis, 1, dt, false)
}

/// Time derivative of one component, shaped `(space..., time)`.
pub fn time_derivative(d: &GridDataset, component: usize) -> Result<ArrayD<f64>> {
    let u = d.component(component)?;
    time_derivative_field(&u, d.dt)
}

/// Spatial derivative of a `(space..., time)` field of dataset `d` using the
/// default backend per axis: spectral on periodic axes, central differences otherwise.
/// `orders[a]` is the derivative order along spatial axis `a`.
pub fn spatial_derivative(
    d: &GridDataset,
    field: &ArrayViewD<f64>,
    orders: &[u32],
) -> Result<ArrayD<f64>> {
    if d.is_ensemble() && orders.iter().any(|&o| o > 0) {
        return Err(Error::InvalidArgument(
            "spatial derivatives are undefined on trajectory ensembles".into(),
        ));
    }
    let mut cur = field.to_owned();
    for (axis, &order) in orders.iter().enumerate() {
        if order == 0 {
            continue;
        }
        if axis >= d.n_space_axes() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: d.n_space_axes(),
            });
        }
        if d.periodic[axis] {
            let length = d.space_shape()[axis] as f64 * d.dx[axis];
            cur = spectral_diff(&cur.view(), axis, order, length)?;
        } else {
            let mut left = order;
            while left > 0 {
                let step = left.min(4);
                cur = central_diff(&cur.view(), axis, step, d.dx[axis], false)?;
                left -= step;
            }
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use std::f64::consts::PI;

    fn grid(n: usize, len: f64) -> Array1<f64> {
        Array1::from_iter((0..n).map(|i| i as f64 * len / n as f64))
    }

    #[test]
    fn fornberg_matches_textbook_central_weights() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 4);
        let expect4 = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (a, b) in w[4].iter().zip(expect4) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let f = Array1::from_elem(20, 3.7).into_dyn();
        for order in 1..=4 {
            for periodic in [true, false] {
                let d = central_diff(&f.view(), 0, order, 0.1, periodic).unwrap();
                assert!(d.iter().all(|v| v.abs() < 1e-9), "order {order}");
            }
            let s = spectral_diff(&f.view(), 0, order, 2.0).unwrap();
            // roundoff in the transform is amplified by k_max^order
            let kmax = PI * 20.0 / 2.0;
            assert!(s.iter().all(|v| v.abs() < 1e-13 * kmax.powi(order as i32)));
        }
    }

    #[test]
    fn periodic_sine_first_derivative() {
        let n = 512;
        let x = grid(n, 1.0);
        let f = x.mapv(|x| (2.0 * PI * x).sin()).into_dyn();
        let d = central_diff(&f.view(), 0, 1, 1.0 / n as f64, true).unwrap();
        let err = d
            .iter()
            .zip(x.iter())
            .map(|(a, &x)| (a - 2.0 * PI * (2.0 * PI * x).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max err {err}");
    }

    #[test]
    fn linear_field_second_derivative_vanishes() {
        let f = Array1::from_iter((0..30).map(|i| 0.3 * i as f64)).into_dyn();
        let d = central_diff(&f.view(), 0, 2, 0.3, false).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn one_sided_stencils_are_second_order() {
        // non-periodic boundaries of exp(x): errors shrink ~4x on refinement
        let err = |n: usize, order: u32| {
            let h = 1.0 / (n - 1) as f64;
            let f = Array1::from_iter((0..n).map(|i| (i as f64 * h).exp())).into_dyn();
            let d = central_diff(&f.view(), 0, order, h, false).unwrap();
            (0..n)
                .map(|i| (d[[i]] - (i as f64 * h).exp()).abs())
                .fold(0.0, f64::max)
        };
        for order in 1..=4 {
            let ratio = err(41, order) / err(81, order);
            assert!(ratio > 3.5, "order {order}: ratio {ratio}");
        }
    }

    #[test]
    fn central_convergence_is_second_order() {
        let err = |n: usize| {
            let x = grid(n, 1.0);
            let f = x.mapv(|x| (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()).into_dyn();
            let d = central_diff(&f.view(), 0, 1, 1.0 / n as f64, true).unwrap();
            d.iter()
                .zip(x.iter())
                .map(|(a, &x)| {
                    (a - (2.0 * PI * (2.0 * PI * x).cos() - 1.8 * PI * (6.0 * PI * x).sin())).abs()
                })
                .fold(0.0, f64::max)
        };
        for n in [64, 128, 256] {
            assert!(err(n) / err(2 * n) >= 3.5);
        }
    }

    #[test]
    fn spectral_cosine_second_derivative() {
        let n = 64;
        let x = grid(n, 2.0 * PI);
        let f = x.mapv(f64::cos).into_dyn();
        let d = spectral_diff(&f.view(), 0, 2, 2.0 * PI).unwrap();
        for (a, &x) in d.iter().zip(x.iter()) {
            assert!((a + x.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_mixed_modes_first_derivative() {
        let n = 64;
        let x = grid(n, 2.0 * PI);
        let f = x.mapv(|x| (2.0 * x).cos() + 0.5 * (3.0 * x).cos()).into_dyn();
        let d = spectral_diff(&f.view(), 0, 1, 2.0 * PI).unwrap();
        for (a, &x) in d.iter().zip(x.iter()) {
            assert!((a - (-2.0 * (2.0 * x).sin() - 1.5 * (3.0 * x).sin())).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_twice_first_equals_second() {
        let n = 128;
        let x = grid(n, 3.0);
        let k = 2.0 * PI / 3.0;
        let f = x
            .mapv(|x| (k * x).sin() + 0.2 * (5.0 * k * x).cos() - 0.1 * (9.0 * k * x).sin())
            .into_dyn();
        let once = spectral_diff(&f.view(), 0, 1, 3.0).unwrap();
        let twice = spectral_diff(&once.view(), 0, 1, 3.0).unwrap();
        let direct = spectral_diff(&f.view(), 0, 2, 3.0).unwrap();
        for (a, b) in twice.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_rejects_short_axis() {
        let f = Array1::<f64>::zeros(3).into_dyn();
        assert!(spectral_diff(&f.view(), 0, 1, 1.0).is_err());
    }

    #[test]
    fn errors_on_bad_axis_and_too_few_samples() {
        let f = Array1::<f64>::zeros(4).into_dyn();
        assert!(matches!(
            central_diff(&f.view(), 1, 1, 1.0, true),
            Err(Error::AxisOutOfRange { .. })
        ));
        assert!(matches!(
            central_diff(&f.view(), 0, 3, 1.0, false),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn time_derivative_of_linear_and_sine() {
        let dt = 0.01;
        let lin = Array2::from_shape_fn((5, 50), |(_, n)| n as f64 * dt).into_dyn();
        let d = time_derivative_field(&lin.view(), dt).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-10));

        let s = Array2::from_shape_fn((1, 400), |(_, n)| (n as f64 * dt).sin()).into_dyn();
        let d = time_derivative_field(&s.view(), dt).unwrap();
        for n in 0..400 {
            assert!((d[[0, n]] - (n as f64 * dt).cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn single_snapshot_time_derivative_fails() {
        let f = Array2::<f64>::zeros((10, 1)).into_dyn();
        assert!(matches!(
            time_derivative_field(&f.view(), 0.1),
            Err(Error::FewTimeSamples)
        ));
    }
}
