//! The six benchmark systems: component layout, candidate libraries and the
//! coefficients of the generating equations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::{
    build_flux_library, build_gradient_flow_library, build_hamiltonian_library,
    Dictionary, EnergyDensityTerm, Equation, FeatureTerm, FluxAtom, PriorKind, RowExpr,
    ScalarHamiltonianTerm,
};
use crate::error::{Error, Result};
use crate::symbolic::{Deriv, Monomial, Piece};

/// Gravitational acceleration of the shallow-water benchmark.
pub const GRAVITY: f64 = 9.81;
/// Diffusivity of the diffusion benchmark.
pub const DIFFUSIVITY: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Harmonic,
    ThreeBody,
    Burgers,
    Swe,
    Diffusion,
    AllenCahn,
}

impl System {
    pub const ALL: [System; 6] = [
        System::Harmonic,
        System::ThreeBody,
        System::Burgers,
        System::Swe,
        System::Diffusion,
        System::AllenCahn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::Harmonic => "harmonic",
            System::ThreeBody => "three_body",
            System::Burgers => "burgers",
            System::Swe => "swe",
            System::Diffusion => "diffusion",
            System::AllenCahn => "allen_cahn",
        }
    }

    pub fn component_names(self) -> Vec<String> {
        match self {
            System::Harmonic => vec!["q".into(), "p".into()],
            System::ThreeBody => {
                let mut v = Vec::with_capacity(18);
                for kind in ["q", "p"] {
                    for body in 1..=3 {
                        for ax in ["x", "y", "z"] {
                            v.push(format!("{kind}{body}{ax}"));
                        }
                    }
                }
                v
            }
            System::Swe => vec!["h".into(), "u".into(), "v".into()],
            System::Burgers | System::Diffusion | System::AllenCahn => vec!["u".into()],
        }
    }

    pub fn is_ode(self) -> bool {
        matches!(self, System::Harmonic | System::ThreeBody)
    }

    pub fn prior_kind(self) -> PriorKind {
        match self {
            System::Harmonic | System::ThreeBody => PriorKind::Hamiltonian,
            System::Burgers | System::Swe => PriorKind::Flux,
            System::Diffusion | System::AllenCahn => PriorKind::GradientFlow,
        }
    }

    /// Noise levels swept by the benchmark figures.
    pub fn noise_levels(self) -> Vec<f64> {
        match self {
            System::Harmonic => vec![0.0, 0.05, 0.10, 0.15, 0.25, 0.50],
            System::ThreeBody => vec![0.0, 0.01, 0.05, 0.10, 0.25, 0.50],
            System::Burgers | System::Diffusion => {
                vec![0.0, 0.01, 0.05, 0.10, 0.25, 0.50, 1.0]
            }
            System::Swe => vec![0.0, 0.01, 0.05, 0.10, 0.25, 0.50],
            System::AllenCahn => vec![0.0, 0.05, 0.10, 0.15, 0.25, 0.50],
        }
    }

    pub fn library(self, prior: bool) -> Result<Dictionary> {
        if prior {
            self.prior_library()
        } else {
            self.baseline_library()
        }
    }

    pub fn baseline_library(self) -> Result<Dictionary> {
        let d = match self {
            System::Harmonic => harmonic_baseline(),
            System::ThreeBody => three_body_baseline(),
            System::Burgers => burgers_baseline(),
            System::Swe => swe_baseline(),
            System::Diffusion => diffusion_baseline(),
            System::AllenCahn => allen_cahn_baseline(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn prior_library(self) -> Result<Dictionary> {
        let d = match self {
            System::Harmonic => harmonic_prior()?,
            System::ThreeBody => three_body_prior()?,
            System::Burgers => burgers_prior()?,
            System::Swe => swe_prior()?,
            System::Diffusion => diffusion_prior()?,
            System::AllenCahn => allen_cahn_prior()?,
        };
        d.validate()?;
        Ok(d)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == key || (key == "threebody" && *sys == System::ThreeBody))
            .ok_or_else(|| Error::UnknownSystem(s.to_string()))
    }
}

fn set_truth(d: &mut Dictionary, pairs: &[(&str, f64)]) {
    let mut truth: Vec<(usize, f64)> = pairs
        .iter()
        .map(|(name, c)| {
            let i = d
                .index_of(name)
                .unwrap_or_else(|| panic!("truth term `{name}` missing from library"));
            (i, *c)
        })
        .collect();
    truth.sort_by_key(|(i, _)| *i);
    d.truth_support = Some(truth);
}

/// Replicates candidate features across every equation, naming them `eq_t: body`.
fn per_equation_baseline(
    names: Vec<String>,
    equations: Vec<Equation>,
    features: &[(String, Vec<Piece>)],
) -> Dictionary {
    let multi = equations.len() > 1;
    let mut terms = Vec::new();
    for (e, eq) in equations.iter().enumerate() {
        for (body, pieces) in features {
            let name = if multi {
                format!("{}_t: {body}", eq.name)
            } else {
                body.clone()
            };
            terms.push(FeatureTerm {
                name,
                rows: vec![RowExpr {
                    equation: e,
                    pieces: pieces.clone(),
                }],
                origin: crate::dictionary::TermOrigin::Monomial,
            });
        }
    }
    Dictionary {
        terms,
        prior_kind: PriorKind::None,
        equations,
        component_names: names,
        truth_support: None,
    }
}

fn plain(m: Monomial, names: &[String]) -> (String, Vec<Piece>) {
    (m.body(names), vec![Piece::plain(m)])
}

fn component_equations(names: &[String]) -> Vec<Equation> {
    (0..names.len()).map(|c| Equation::component(names, c)).collect()
}

fn pow(c: usize, k: u32) -> Monomial {
    Monomial::constant(1.0).times(c, Deriv::NONE, k)
}

// ---- harmonic oscillator, z = (q, p) ----

fn harmonic_basis() -> Vec<Monomial> {
    let (q, p) = (0, 1);
    let one = Monomial::constant(1.0);
    vec![
        one.clone(),
        pow(p, 1),
        pow(q, 1),
        pow(p, 1).times(q, Deriv::NONE, 1),
        pow(p, 2),
        pow(q, 2),
        pow(p, 2).times(q, Deriv::NONE, 1),
        pow(p, 1).times(q, Deriv::NONE, 2),
        pow(p, 3),
        pow(q, 3),
    ]
}

fn harmonic_baseline() -> Dictionary {
    let names = System::Harmonic.component_names();
    let feats: Vec<_> = harmonic_basis().into_iter().map(|m| plain(m, &names)).collect();
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    set_truth(&mut d, &[("q_t: p", 2.0), ("p_t: q", -2.0)]);
    d
}

fn harmonic_prior() -> Result<Dictionary> {
    let names = System::Harmonic.component_names();
    // J grad 1 vanishes identically, so the constant is left out of the basis
    let basis: Vec<ScalarHamiltonianTerm> = harmonic_basis()
        .into_iter()
        .filter(|m| !m.is_constant())
        .map(ScalarHamiltonianTerm)
        .collect();
    // z = (q, p) is already in canonical order for one pair
    let mut d = build_hamiltonian_library(&basis, 1, &names)?;
    set_truth(&mut d, &[("J∇(p^2)", 1.0), ("J∇(q^2)", 1.0)]);
    Ok(d)
}

// ---- three-body problem, z = (q1x..q3z, p1x..p3z) ----

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn qidx(body: usize, ax: usize) -> usize {
    3 * body + ax
}

fn pidx(body: usize, ax: usize) -> usize {
    9 + 3 * body + ax
}

fn inv_dist(i: usize, j: usize, e: i32) -> Monomial {
    Monomial::constant(1.0).with_inv_dist(
        (0..3).map(|a| qidx(i, a)).collect(),
        (0..3).map(|a| qidx(j, a)).collect(),
        e,
    )
}

fn pair_label(i: usize, j: usize) -> String {
    format!("|q{}-q{}|", i + 1, j + 1)
}

fn three_body_features(names: &[String]) -> Vec<(String, Vec<Piece>)> {
    let mut f = vec![plain(Monomial::constant(1.0), names)];
    for c in 0..9 {
        f.push(plain(pow(qidx(0, 0) + c, 1), names));
    }
    for c in 0..9 {
        f.push(plain(pow(pidx(0, 0) + c, 1), names));
    }
    for c in 0..9 {
        f.push(plain(pow(qidx(0, 0) + c, 2), names));
    }
    for c in 0..9 {
        f.push(plain(pow(pidx(0, 0) + c, 2), names));
    }
    for c in 0..9 {
        f.push(plain(pow(c, 1).times(9 + c, Deriv::NONE, 1), names));
    }
    for &(i, j) in &PAIRS {
        f.push((
            format!("{}^-1", pair_label(i, j)),
            vec![Piece::plain(inv_dist(i, j, -1))],
        ));
    }
    for &(i, j) in &PAIRS {
        for (ax, axn) in ["x", "y", "z"].iter().enumerate() {
            let r3 = inv_dist(i, j, -3);
            let pieces = vec![
                Piece::plain(r3.clone().times(qidx(i, ax), Deriv::NONE, 1)),
                Piece::plain(r3.times(qidx(j, ax), Deriv::NONE, 1).scaled(-1.0)),
            ];
            f.push((
                format!("(q{}{axn}-q{}{axn}){}^-3", i + 1, j + 1, pair_label(i, j)),
                pieces,
            ));
        }
    }
    f
}

fn three_body_baseline() -> Dictionary {
    let names = System::ThreeBody.component_names();
    let feats = three_body_features(&names);
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    let mut truth: Vec<(String, f64)> = Vec::new();
    let ax_names = ["x", "y", "z"];
    for body in 0..3 {
        for axn in ax_names {
            let b = body + 1;
            truth.push((format!("q{b}{axn}_t: p{b}{axn}"), 1.0));
            for &(i, j) in &PAIRS {
                let atom = format!("(q{}{axn}-q{}{axn}){}^-3", i + 1, j + 1, pair_label(i, j));
                if body == i {
                    truth.push((format!("p{b}{axn}_t: {atom}"), -1.0));
                } else if body == j {
                    truth.push((format!("p{b}{axn}_t: {atom}"), 1.0));
                }
            }
        }
    }
    let pairs: Vec<(&str, f64)> = truth.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    set_truth(&mut d, &pairs);
    d
}

fn three_body_prior() -> Result<Dictionary> {
    let names = System::ThreeBody.component_names();
    let mut basis = Vec::new();
    for c in 0..9 {
        basis.push(ScalarHamiltonianTerm(pow(9 + c, 2)));
    }
    for &(i, j) in &PAIRS {
        basis.push(ScalarHamiltonianTerm(inv_dist(i, j, -1)));
    }
    let mut d = build_hamiltonian_library(&basis, 9, &names)?;
    let mut truth = Vec::new();
    for (k, t) in d.terms.iter().enumerate() {
        let c = if k < 9 { 0.5 } else { -1.0 };
        truth.push((t.name.clone(), c));
    }
    let pairs: Vec<(&str, f64)> = truth.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    set_truth(&mut d, &pairs);
    Ok(d)
}

// ---- Burgers ----

fn burgers_baseline() -> Dictionary {
    let names = System::Burgers.component_names();
    let mut feats = Vec::new();
    for order in [1u8, 2] {
        for k in 0..=3 {
            feats.push(plain(pow(0, k).times(0, Deriv::x(order), 1), &names));
        }
    }
    for k in 1..=3 {
        feats.push(plain(pow(0, k), &names));
    }
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    set_truth(&mut d, &[("u u_x", -1.0)]);
    d
}

fn burgers_prior() -> Result<Dictionary> {
    let names = System::Burgers.component_names();
    let atoms: Vec<FluxAtom> = (1..=3)
        .map(|k| FluxAtom {
            atom: pow(0, k),
            equation: 0,
        })
        .collect();
    let mut d = build_flux_library(&atoms, 1, false, component_equations(&names), &names)?;
    set_truth(&mut d, &[("(u^2)_x", -0.5)]);
    Ok(d)
}

// ---- shallow water, data components (h, u, v) ----

fn swe_states() -> Vec<Monomial> {
    let (h, u, v) = (0, 1, 2);
    vec![
        Monomial::constant(1.0),
        pow(h, 1),
        pow(u, 1),
        pow(v, 1),
        pow(u, 2),
        pow(v, 2),
        pow(u, 1).times(v, Deriv::NONE, 1),
        pow(h, 1).times(u, Deriv::NONE, 1),
        pow(h, 1).times(v, Deriv::NONE, 1),
        pow(h, 1).times(u, Deriv::NONE, 1).times(v, Deriv::NONE, 1),
    ]
}

fn swe_baseline() -> Dictionary {
    let names = System::Swe.component_names();
    let mut feats = Vec::new();
    for axis in 0..2 {
        for c in 0..3 {
            for s in swe_states() {
                let m = s.times(c, Deriv::along(axis, 1), 1);
                feats.push(plain(m, &names));
            }
        }
    }
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    let g = GRAVITY;
    set_truth(
        &mut d,
        &[
            ("h_t: h_x u", -1.0),
            ("h_t: h u_x", -1.0),
            ("h_t: h_y v", -1.0),
            ("h_t: h v_y", -1.0),
            ("u_t: u u_x", -1.0),
            ("u_t: u_y v", -1.0),
            ("u_t: h_x", -g),
            ("v_t: u v_x", -1.0),
            ("v_t: v v_y", -1.0),
            ("v_t: h_y", -g),
        ],
    );
    d
}

fn swe_atoms() -> Vec<Monomial> {
    let (h, u, v) = (0, 1, 2);
    let hu = pow(h, 1).times(u, Deriv::NONE, 1);
    let hv = pow(h, 1).times(v, Deriv::NONE, 1);
    vec![
        pow(h, 1),
        hu.clone(),
        hv.clone(),
        pow(u, 2),
        pow(v, 2),
        pow(u, 1).times(v, Deriv::NONE, 1),
        pow(h, 2),
        hu.clone().times(u, Deriv::NONE, 1),
        hu.times(v, Deriv::NONE, 1),
        hv.times(v, Deriv::NONE, 1),
        pow(u, 2).times(v, Deriv::NONE, 1),
        pow(u, 1).times(v, Deriv::NONE, 2),
    ]
}

/// Conserved quantities `(h, hu, hv)` expressed in the data components.
pub fn swe_conserved_equations() -> Vec<Equation> {
    let (h, u, v) = (0, 1, 2);
    vec![
        Equation {
            name: "h".into(),
            lhs: pow(h, 1),
        },
        Equation {
            name: "hu".into(),
            lhs: pow(h, 1).times(u, Deriv::NONE, 1),
        },
        Equation {
            name: "hv".into(),
            lhs: pow(h, 1).times(v, Deriv::NONE, 1),
        },
    ]
}

fn swe_prior() -> Result<Dictionary> {
    let names = System::Swe.component_names();
    let mut atoms = Vec::new();
    for e in 0..3 {
        for a in swe_atoms() {
            atoms.push(FluxAtom { atom: a, equation: e });
        }
    }
    let mut d = build_flux_library(&atoms, 2, false, swe_conserved_equations(), &names)?;
    let half_g = 0.5 * GRAVITY;
    set_truth(
        &mut d,
        &[
            ("(h u)_x [h]", -1.0),
            ("(h v)_y [h]", -1.0),
            ("(h u^2)_x [hu]", -1.0),
            ("(h u v)_y [hu]", -1.0),
            ("(h^2)_x [hu]", -half_g),
            ("(h u v)_x [hv]", -1.0),
            ("(h v^2)_y [hv]", -1.0),
            ("(h^2)_y [hv]", -half_g),
        ],
    );
    Ok(d)
}

// ---- diffusion ----

fn diffusion_baseline() -> Dictionary {
    let names = System::Diffusion.component_names();
    let feats: Vec<_> = [
        pow(0, 1),
        pow(0, 2),
        Monomial::constant(1.0).times(0, Deriv::x(1), 1),
        Monomial::constant(1.0).times(0, Deriv::x(1), 2),
        Monomial::constant(1.0).times(0, Deriv::x(2), 1),
        Monomial::constant(1.0).times(0, Deriv::x(2), 2),
    ]
    .into_iter()
    .map(|m| plain(m, &names))
    .collect();
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    set_truth(&mut d, &[("u_xx", DIFFUSIVITY)]);
    d
}

fn diffusion_prior() -> Result<Dictionary> {
    let names = System::Diffusion.component_names();
    // halved quadratic densities so the entries read -u, +u_xx, -u_xxxx
    let densities: Vec<EnergyDensityTerm> = [Deriv::NONE, Deriv::x(1), Deriv::x(2)]
        .into_iter()
        .map(|d| EnergyDensityTerm(Monomial::constant(0.5).times(0, d, 2)))
        .collect();
    let mut d = build_gradient_flow_library(&densities, &names)?;
    let name = d.terms[1].name.clone();
    set_truth(&mut d, &[(name.as_str(), DIFFUSIVITY)]);
    Ok(d)
}

// ---- Allen-Cahn ----

fn allen_cahn_baseline() -> Dictionary {
    let names = System::AllenCahn.component_names();
    let mut feats = Vec::new();
    for k in 1..=4 {
        let m = pow(0, k);
        feats.push(plain(m.clone(), &names));
        for order in [1u8, 2] {
            feats.push((
                format!("({}){}", m.body(&names), Deriv::x(order).suffix()),
                vec![Piece {
                    outer: Deriv::x(order),
                    mono: m.clone(),
                }],
            ));
        }
    }
    for order in [1u8, 2] {
        for k in 2..=4 {
            feats.push(plain(
                Monomial::constant(1.0).times(0, Deriv::x(order), k),
                &names,
            ));
        }
    }
    let mut d = per_equation_baseline(names.clone(), component_equations(&names), &feats);
    set_truth(&mut d, &[("u", 1.0), ("u^3", -1.0), ("(u)_xx", 1.0)]);
    d
}

fn allen_cahn_prior() -> Result<Dictionary> {
    let names = System::AllenCahn.component_names();
    let mut densities = Vec::new();
    for d in [Deriv::NONE, Deriv::x(1), Deriv::x(2)] {
        for k in [2, 4] {
            densities.push(EnergyDensityTerm(Monomial::constant(1.0).times(0, d, k)));
        }
    }
    let mut d = build_gradient_flow_library(&densities, &names)?;
    let n: Vec<String> = d.names();
    // u^2 -> -2u, u^4 -> -4u^3, u_x^2 -> +2u_xx
    set_truth(
        &mut d,
        &[(n[0].as_str(), -0.5), (n[1].as_str(), 0.25), (n[2].as_str(), 0.5)],
    );
    Ok(d)
}
