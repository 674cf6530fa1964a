use super::*;
use crate::grid::GridDataset;
use crate::symbolic::collect_terms;
use ndarray::{Array3, ArrayD};
use proptest::prelude::*;
use std::f64::consts::PI;

fn u_names() -> Vec<String> {
    vec!["u".into()]
}

fn density(d: Deriv, k: u32) -> EnergyDensityTerm {
    EnergyDensityTerm(Monomial::constant(1.0).times(0, d, k))
}

fn expanded(t: &FeatureTerm) -> String {
    render_sum(&t.expanded(0).unwrap(), &u_names())
}

#[test]
fn variational_derivative_examples() {
    let n = u_names();
    let cases = [
        (density(Deriv::NONE, 2), "-2 u"),
        (density(Deriv::x(1), 2), "2 u_xx"),
        (density(Deriv::x(1), 4), "12 u_x^2 u_xx"),
        (density(Deriv::x(2), 4), "-24 u_xx u_xxx^2 - 12 u_xx^2 u_xxxx"),
    ];
    for (d, want) in cases {
        let t = variational_derivative(&d, &n).unwrap();
        assert_eq!(expanded(&t), want);
    }
    assert!(variational_derivative(&density(Deriv::x(3), 2), &n).is_err());
    assert!(variational_derivative(&EnergyDensityTerm(Monomial::constant(1.0)), &n).is_err());
}

#[test]
fn gradient_flow_library_rejects_empty() {
    assert!(build_gradient_flow_library(&[], &u_names()).is_err());
}

#[test]
fn hamiltonian_harmonic_entries() {
    let names = vec!["q".to_string(), "p".to_string()];
    let basis = vec![
        ScalarHamiltonianTerm(Monomial::constant(1.0).times(1, Deriv::NONE, 2)),
        ScalarHamiltonianTerm(Monomial::constant(1.0).times(0, Deriv::NONE, 2)),
        ScalarHamiltonianTerm(Monomial::var(0).times(1, Deriv::NONE, 1)),
    ];
    let d = build_hamiltonian_library(&basis, 1, &names).unwrap();
    let row = |j: usize, e: usize| {
        d.terms[j]
            .expanded(e)
            .map(|m| render_sum(&m, &names))
            .unwrap_or_else(|| "0".into())
    };
    assert_eq!((row(0, 0), row(0, 1)), ("2 p".into(), "0".into()));
    assert_eq!((row(1, 0), row(1, 1)), ("0".into(), "-2 q".into()));
    assert_eq!((row(2, 0), row(2, 1)), ("q".into(), "-p".into()));
    assert!(d.terms.iter().all(|t| t.rows.len() <= 2));
}

#[test]
fn hamiltonian_rejects_out_of_range_coordinate() {
    let names = vec!["q".to_string(), "p".to_string()];
    let bad = vec![ScalarHamiltonianTerm(Monomial::var(2))];
    assert!(build_hamiltonian_library(&bad, 1, &names).is_err());
    let zero = vec![ScalarHamiltonianTerm(Monomial::constant(1.0))];
    assert!(build_hamiltonian_library(&zero, 1, &names).is_err());
}

#[test]
fn flux_library_counts() {
    let n = u_names();
    let atoms: Vec<FluxAtom> = (1..=3)
        .map(|k| FluxAtom {
            atom: Monomial::constant(1.0).times(0, Deriv::NONE, k),
            equation: 0,
        })
        .collect();
    let eq = vec![Equation::component(&n, 0)];
    let d = build_flux_library(&atoms, 1, false, eq.clone(), &n).unwrap();
    assert_eq!(d.names(), vec!["u_x", "(u^2)_x", "(u^3)_x"]);
    let h = vec![FluxAtom {
        atom: Monomial::var(0),
        equation: 0,
    }];
    assert_eq!(build_flux_library(&h, 2, false, eq.clone(), &n).unwrap().len(), 2);
    assert_eq!(build_flux_library(&h, 2, true, eq.clone(), &n).unwrap().len(), 1);
    assert!(build_flux_library(&h, 3, false, eq, &n).is_err());
}

#[test]
fn polynomial_baseline_degree_zero() {
    let d = build_baseline_library(&BaselineSpec::Polynomial {
        max_degree: 0,
        max_deriv: 0,
    })
    .unwrap();
    assert_eq!(d.names(), vec!["1"]);
    let d = build_baseline_library(&BaselineSpec::System(crate::systems::System::Burgers)).unwrap();
    assert_eq!(d.len(), 11);
}

#[test]
fn json_round_trip_and_determinism() {
    for s in crate::systems::System::ALL {
        for prior in [false, true] {
            let a = s.library(prior).unwrap();
            let b = s.library(prior).unwrap();
            assert_eq!(a.names(), b.names());
            let back = Dictionary::from_json(&a.to_json().unwrap()).unwrap();
            assert_eq!(back, a);
        }
    }
}

#[test]
fn split_groups_follow_equations() {
    let d = crate::systems::System::Swe.baseline_library().unwrap();
    let groups = d.split_by_equation().unwrap();
    assert_eq!(groups.len(), 3);
    assert!(groups.iter().all(|(_, g)| g.len() == 60));
    assert!(!d.is_joint());
    let p = crate::systems::System::Harmonic.prior_library().unwrap();
    assert!(p.is_joint());
    assert!(p.split_by_equation().is_err());
}

/// Trace of `J Hess(phi)` summed symbolically: `sum_i d2 phi/dq_i dp_i - d2 phi/dp_i dq_i`.
fn symplectic_trace(phi: &Monomial, n: usize) -> Vec<Monomial> {
    let mut acc = Vec::new();
    for i in 0..n {
        for m in phi.partial_state(n + i) {
            acc.extend(m.partial_state(i));
        }
        for m in phi.partial_state(i) {
            acc.extend(m.partial_state(n + i).into_iter().map(|t| t.scaled(-1.0)));
        }
    }
    collect_terms(acc)
}

#[test]
fn skew_gradient_phase_flow_is_divergence_free() {
    for sys in [crate::systems::System::Harmonic, crate::systems::System::ThreeBody] {
        let d = sys.prior_library().unwrap();
        let n = d.equations.len() / 2;
        for t in &d.terms {
            let TermOrigin::SkewGradient { potential } = &t.origin else {
                panic!("unexpected origin");
            };
            // divergence of J grad phi is sum_c d/dz_c (J grad phi)_c
            let mut div = Vec::new();
            for r in &t.rows {
                for m in expand_pieces(&r.pieces) {
                    div.extend(m.partial_state(r.equation));
                }
            }
            let div = collect_terms(div);
            if potential.inv_dist.is_none() {
                assert!(symplectic_trace(potential, n).is_empty(), "{}", t.name);
                assert!(div.is_empty(), "{}", t.name);
            }
        }
    }
}

fn eval_gradient(phi: &Monomial, z: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|c| phi.partial_state(c).iter().map(|m| m.eval_state(z)).sum())
        .collect()
}

fn eval_entry(t: &FeatureTerm, dim: usize, z: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            t.expanded(c)
                .map(|ms| ms.iter().map(|m| m.eval_state(z)).sum())
                .unwrap_or(0.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn harmonic_entries_are_energy_orthogonal(q in -1.2f64..1.2, p in -1.2f64..1.2) {
        let d = crate::systems::System::Harmonic.prior_library().unwrap();
        for t in &d.terms {
            let TermOrigin::SkewGradient { potential } = &t.origin else { unreachable!() };
            let z = [q, p];
            let g = eval_gradient(potential, &z);
            let f = eval_entry(t, 2, &z);
            let dot: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
            let scale = g.iter().map(|v| v * v).sum::<f64>().max(1e-300);
            prop_assert!(dot.abs() <= 1e-12 * scale, "{}: {dot}", t.name);
        }
    }

    #[test]
    fn three_body_entries_are_energy_orthogonal(z in prop::collection::vec(-1.2f64..1.2, 18)) {
        let d = crate::systems::System::ThreeBody.prior_library().unwrap();
        for t in &d.terms {
            let TermOrigin::SkewGradient { potential } = &t.origin else { unreachable!() };
            let g = eval_gradient(potential, &z);
            let f = eval_entry(t, 18, &z);
            let dot: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
            let scale = g.iter().map(|v| v * v).sum::<f64>().max(1e-300);
            prop_assert!(dot.abs() <= 1e-12 * scale, "{}: {dot}", t.name);
        }
    }
}

fn periodic_field(values: Vec<f64>) -> GridDataset {
    let n = values.len();
    let v = ArrayD::from_shape_vec(vec![1, n, 1], values).unwrap();
    GridDataset::field(v, vec![1.0 / n as f64], 1.0, vec![true], u_names()).unwrap()
}

fn energy(density: &Monomial, u: &[f64]) -> f64 {
    let d = periodic_field(u.to_vec());
    let mut cache = FieldCache::new(&d);
    cache.require_monomials([density]).unwrap();
    let e = cache.eval(density).unwrap();
    e.sum() * d.dx[0]
}

fn smooth(n: usize, modes: &[(f64, f64, f64)]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            modes
                .iter()
                .map(|(a, k, ph)| a * (2.0 * PI * k * x + ph).sin())
                .sum()
        })
        .collect()
}

#[test]
fn gateaux_derivative_matches_variational_derivative() {
    let n = 128;
    let u = smooth(n, &[(0.8, 1.0, 0.3), (0.3, 2.0, 1.1), (0.1, 3.0, 0.0)]);
    let dens = [Deriv::NONE, Deriv::x(1), Deriv::x(2)];
    let mut seed = 1u64;
    for d in dens {
        for k in [2, 4] {
            let m = Monomial::constant(1.0).times(0, d, k);
            // small amplitudes keep the derivative magnitudes comparable
            let scale = match d.0[0] {
                0 => 1.0,
                1 => 0.2,
                _ => 0.02,
            };
            let uu: Vec<f64> = u.iter().map(|v| v * scale).collect();
            seed += 1;
            let ph = seed as f64 * 0.37;
            // the direction gets the same amplitude as the state
            let v: Vec<f64> = smooth(n, &[(1.0, 1.0, ph), (0.5, 2.0, 2.0 * ph)])
                .into_iter()
                .map(|x| x * scale)
                .collect();
            let h = 1e-6;
            let up: Vec<f64> = uu.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let fd = (energy(&m, &up) - energy(&m, &uu)) / h;
            let t = variational_derivative(&EnergyDensityTerm(m.clone()), &u_names()).unwrap();
            let data = periodic_field(uu.clone());
            let mut cache = FieldCache::new(&data);
            let monos = t.expanded(0).unwrap();
            cache.require_monomials(monos.iter()).unwrap();
            // the entry is -dE/du
            let g = cache.eval_sum(&monos).unwrap();
            let pairing: f64 = -g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * data.dx[0];
            let rel = (fd - pairing).abs() / pairing.abs().max(1e-300);
            assert!(rel <= 1e-4, "density {}: fd {fd} vs {pairing} ({rel})", m.render(&u_names()));
        }
    }
}

#[test]
fn divergence_columns_sum_to_zero_on_periodic_grid() {
    let n = 200;
    let nt = 5;
    let v = Array3::from_shape_fn((1, n, nt), |(_, i, t)| {
        let x = i as f64 / n as f64;
        0.5 * (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x + t as f64).cos() + 0.1
    })
    .into_dyn();
    let d = GridDataset::field(v, vec![1.0 / n as f64], 0.01, vec![true], u_names()).unwrap();
    let dict = crate::systems::System::Burgers.prior_library().unwrap();
    let mut cache = FieldCache::new(&d);
    for t in &dict.terms {
        let monos = t.expanded(0).unwrap();
        cache.require_monomials(monos.iter()).unwrap();
        let f = cache.eval_sum(&monos).unwrap();
        for s in 0..nt {
            let col = f.index_axis(ndarray::Axis(1), s);
            let total: f64 = col.sum() * d.dx[0];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(total.abs() <= 1e-10 * norm, "{}: {total}", t.name);
        }
    }
}

#[test]
fn strong_column_of_constant_field() {
    let v = Array3::from_elem((1, 16, 10), 2.0).into_dyn();
    let d = GridDataset::field(v, vec![0.1], 0.1, vec![true], u_names()).unwrap();
    let dict = build_baseline_library(&BaselineSpec::Polynomial {
        max_degree: 1,
        max_deriv: 0,
    })
    .unwrap();
    let sys = evaluate_strong(&dict, &d, &StrongOptions::default()).unwrap();
    let u = dict.index_of("u").unwrap();
    let col = sys.theta.column(u);
    let n = col.len() as f64;
    assert!(col.iter().all(|&x| (x - 1.0 / n.sqrt()).abs() < 1e-14));
    assert!((sys.column_scales[u] - 2.0 * n.sqrt()).abs() < 1e-10);
}

#[test]
fn missing_component_is_reported() {
    let v = Array3::from_elem((1, 16, 10), 2.0).into_dyn();
    let d = GridDataset::field(v, vec![0.1], 0.1, vec![true], u_names()).unwrap();
    let dict = crate::systems::System::Swe.prior_library().unwrap();
    assert!(matches!(
        evaluate_strong(&dict, &d, &StrongOptions::default()),
        Err(Error::MissingComponent { .. })
    ));
}
