//! Candidate feature libraries: baseline (one regression per equation) and
//! prior-constrained (skew-gradient, flux-divergence, gradient-flow) with
//! coefficients tied across equation rows.

mod eval;

pub use eval::{evaluate_strong, evaluate_strong_subset, FieldCache, StrongOptions};
pub(crate) use eval::check_components;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SparseModel;
use crate::symbolic::{expand_pieces, render_sum, Deriv, Monomial, Piece};
use crate::systems::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    None,
    Hamiltonian,
    Flux,
    GradientFlow,
}

/// Left-hand side of one evolution equation: `d/dt lhs = sum_j c_j Phi_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub name: String,
    pub lhs: Monomial,
}

impl Equation {
    pub fn component(names: &[String], c: usize) -> Self {
        Equation {
            name: names[c].clone(),
            lhs: Monomial::var(c),
        }
    }
}

/// The contribution of a feature to one equation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowExpr {
    pub equation: usize,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TermOrigin {
    Monomial,
    SkewGradient { potential: Monomial },
    Flux { atom: Monomial },
    GradientFlow { density: Monomial },
}

/// One dictionary column. A term with several rows is tied: one coefficient
/// multiplies its expression in every listed equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTerm {
    pub name: String,
    pub rows: Vec<RowExpr>,
    pub origin: TermOrigin,
}

impl FeatureTerm {
    pub fn monomial(name: impl Into<String>, equation: usize, piece: Piece) -> Self {
        FeatureTerm {
            name: name.into(),
            rows: vec![RowExpr {
                equation,
                pieces: vec![piece],
            }],
            origin: TermOrigin::Monomial,
        }
    }

    /// Fully expanded monomials of the row feeding `equation`, if any.
    pub fn expanded(&self, equation: usize) -> Option<Vec<Monomial>> {
        self.rows
            .iter()
            .find(|r| r.equation == equation)
            .map(|r| expand_pieces(&r.pieces))
    }

    pub fn is_tied(&self) -> bool {
        self.rows.len() > 1
    }

    /// Largest spatial derivative order reached after expansion.
    pub fn max_deriv_order(&self) -> u32 {
        self.rows
            .iter()
            .flat_map(|r| expand_pieces(&r.pieces))
            .map(|m| m.max_deriv_order())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub terms: Vec<FeatureTerm>,
    pub prior_kind: PriorKind,
    pub equations: Vec<Equation>,
    pub component_names: Vec<String>,
    /// `(term index, true coefficient)` of the generating model, when known.
    pub truth_support: Option<Vec<(usize, f64)>>,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.terms {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate term name `{}`",
                    t.name
                )));
            }
            if t.rows.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "term `{}` feeds no equation",
                    t.name
                )));
            }
            for r in &t.rows {
                if r.equation >= self.equations.len() {
                    return Err(Error::InvalidArgument(format!(
                        "term `{}` targets missing equation {}",
                        t.name, r.equation
                    )));
                }
            }
            if t.max_deriv_order() > 4 {
                return Err(Error::InvalidArgument(format!(
                    "term `{}` exceeds derivative order 4",
                    t.name
                )));
            }
        }
        if let Some(truth) = &self.truth_support {
            if let Some((i, _)) = truth.iter().find(|(i, _)| *i >= self.terms.len()) {
                return Err(Error::InvalidArgument(format!(
                    "truth index {i} out of range"
                )));
            }
        }
        Ok(())
    }

    pub fn truth_model(&self) -> Option<SparseModel> {
        self.truth_support
            .as_ref()
            .map(|t| SparseModel::new(t.iter().copied(), 0.0))
    }

    /// Baseline dictionaries regress each equation separately; prior
    /// dictionaries (and single-equation ones) form one joint system.
    pub fn is_joint(&self) -> bool {
        self.prior_kind != PriorKind::None || self.equations.len() == 1
    }

    /// Groups term indices by the single equation each term feeds.
    pub fn split_by_equation(&self) -> Result<Vec<(usize, Vec<usize>)>> {
        let mut groups: Vec<(usize, Vec<usize>)> =
            (0..self.equations.len()).map(|e| (e, Vec::new())).collect();
        for (j, t) in self.terms.iter().enumerate() {
            if t.rows.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "term `{}` is tied and cannot be regressed per equation",
                    t.name
                )));
            }
            groups[t.rows[0].equation].1.push(j);
        }
        groups.retain(|(_, g)| !g.is_empty());
        Ok(groups)
    }

    /// Sub-dictionary of the given terms, with truth re-indexed.
    pub fn subset(&self, indices: &[usize]) -> Dictionary {
        let truth = self.truth_support.as_ref().map(|t| {
            t.iter()
                .filter_map(|(i, c)| indices.iter().position(|j| j == i).map(|k| (k, *c)))
                .collect()
        });
        Dictionary {
            terms: indices.iter().map(|&i| self.terms[i].clone()).collect(),
            prior_kind: self.prior_kind,
            equations: self.equations.clone(),
            component_names: self.component_names.clone(),
            truth_support: truth,
        }
    }

    /// Maximum outer derivative order per spatial axis after moving every
    /// transferable derivative onto the test function.
    pub fn max_transfer_orders(&self) -> [u32; 2] {
        let mut out = [0u32; 2];
        for t in &self.terms {
            for r in &t.rows {
                for p in &r.pieces {
                    let d = p.to_divergence_form().outer;
                    out[0] = out[0].max(d.0[0] as u32);
                    out[1] = out[1].max(d.0[1] as u32);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Dictionary = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }
}

/// Polynomial-in-coordinates basis element of a Hamiltonian, optionally with
/// one inverse pairwise-distance factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarHamiltonianTerm(pub Monomial);

/// Energy density monomial over a field and its first two spatial derivatives.
/// The monomial coefficient scales the density (e.g. `0.5 u_x^2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDensityTerm(pub Monomial);

/// A flux atom `F` and the conserved-quantity equation its divergence feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAtom {
    pub atom: Monomial,
    pub equation: usize,
}

/// Generator choice for [`build_baseline_library`].
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineSpec {
    System(System),
    /// Single scalar field `u` in 1D: `1`, `u^k` and `u^k d^m u` up to total
    /// degree `max_degree` and derivative order `max_deriv`.
    Polynomial { max_degree: u32, max_deriv: u8 },
}

pub fn build_baseline_library(spec: &BaselineSpec) -> Result<Dictionary> {
    match spec {
        BaselineSpec::System(s) => s.baseline_library(),
        BaselineSpec::Polynomial {
            max_degree,
            max_deriv,
        } => {
            if *max_deriv > 4 {
                return Err(Error::InvalidArgument(
                    "derivative order above 4 requested".into(),
                ));
            }
            let names = vec!["u".to_string()];
            let mut monos = vec![Monomial::constant(1.0)];
            for k in 1..=*max_degree {
                monos.push(Monomial::constant(1.0).times(0, Deriv::NONE, k));
            }
            for m in 1..=*max_deriv {
                for k in 0..*max_degree {
                    monos.push(
                        Monomial::constant(1.0)
                            .times(0, Deriv::NONE, k)
                            .times(0, Deriv::x(m), 1),
                    );
                }
            }
            let terms = monos
                .into_iter()
                .map(|m| FeatureTerm::monomial(m.render(&names), 0, Piece::plain(m)))
                .collect();
            let d = Dictionary {
                terms,
                prior_kind: PriorKind::None,
                equations: vec![Equation::component(&names, 0)],
                component_names: names,
                truth_support: None,
            };
            d.validate()?;
            Ok(d)
        }
    }
}

/// Canonical names `q1..qn, p1..pn` for an `n`-pair phase space.
pub fn canonical_names(n_pairs: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=n_pairs).map(|i| format!("q{i}")).collect();
    v.extend((1..=n_pairs).map(|i| format!("p{i}")));
    v
}

/// Skew-gradient entries `J grad phi` for each basis term, over canonical
/// coordinates `z = (q_1..q_n, p_1..p_n)`. Each entry carries one tied coefficient.
pub fn build_hamiltonian_library(
    basis: &[ScalarHamiltonianTerm],
    n_pairs: usize,
    names: &[String],
) -> Result<Dictionary> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("empty Hamiltonian basis".into()));
    }
    let dim = 2 * n_pairs;
    if names.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "{} names for a {dim}-dimensional phase space",
            names.len()
        )));
    }
    let mut terms = Vec::with_capacity(basis.len());
    for ScalarHamiltonianTerm(phi) in basis {
        if let Some(f) = phi.factors.iter().find(|f| !f.deriv.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "Hamiltonian basis term has a derivative factor on component {}",
                f.component
            )));
        }
        if let Some(&c) = phi.components().iter().find(|&&c| c >= dim) {
            return Err(Error::InvalidArgument(format!(
                "basis term references coordinate {c} outside 0..{dim}"
            )));
        }
        let mut rows = Vec::new();
        for c in 0..dim {
            // (J grad phi)_c = d phi/d p_c for c < n, -d phi/d q_{c-n} otherwise
            let (wrt, sign) = if c < n_pairs {
                (c + n_pairs, 1.0)
            } else {
                (c - n_pairs, -1.0)
            };
            let grad = phi.partial_state(wrt);
            if grad.is_empty() {
                continue;
            }
            rows.push(RowExpr {
                equation: c,
                pieces: grad.into_iter().map(|m| Piece::plain(m.scaled(sign))).collect(),
            });
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "basis term {} has an identically zero skew-gradient",
                phi.render(names)
            )));
        }
        terms.push(FeatureTerm {
            name: format!("J∇({})", phi.render(names)),
            rows,
            origin: TermOrigin::SkewGradient {
                potential: phi.clone(),
            },
        });
    }
    let d = Dictionary {
        terms,
        prior_kind: PriorKind::Hamiltonian,
        equations: (0..dim).map(|c| Equation::component(names, c)).collect(),
        component_names: names.to_vec(),
        truth_support: None,
    };
    d.validate()?;
    Ok(d)
}

/// Divergence entries `(F)_x` (and `(F)_y` in 2D). With `tie_isotropic`, the
/// x and y entries of one atom share a single coefficient.
pub fn build_flux_library(
    atoms: &[FluxAtom],
    n_space_dims: usize,
    tie_isotropic: bool,
    equations: Vec<Equation>,
    names: &[String],
) -> Result<Dictionary> {
    if !(1..=2).contains(&n_space_dims) {
        return Err(Error::InvalidArgument(format!(
            "flux library needs 1 or 2 space dimensions, got {n_space_dims}"
        )));
    }
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("empty flux atom list".into()));
    }
    let multi = equations.len() > 1;
    let mut terms = Vec::new();
    for FluxAtom { atom, equation } in atoms {
        let body = atom.render(names);
        let linear = atom.coeff == 1.0 && atom.as_linear().is_some();
        let tag = if multi {
            format!(" [{}]", equations[*equation].name)
        } else {
            String::new()
        };
        let dirs: Vec<(usize, &str)> = [(0, "x"), (1, "y")]
            .into_iter()
            .take(n_space_dims)
            .collect();
        let piece = |axis: usize| Piece {
            outer: Deriv::along(axis, 1),
            mono: atom.clone(),
        };
        if tie_isotropic && n_space_dims == 2 {
            terms.push(FeatureTerm {
                name: format!("({body})_x+({body})_y{tag}"),
                rows: vec![RowExpr {
                    equation: *equation,
                    pieces: vec![piece(0), piece(1)],
                }],
                origin: TermOrigin::Flux { atom: atom.clone() },
            });
        } else {
            for (axis, label) in dirs {
                terms.push(FeatureTerm {
                    name: if linear {
                        format!("{body}_{label}{tag}")
                    } else {
                        format!("({body})_{label}{tag}")
                    },
                    rows: vec![RowExpr {
                        equation: *equation,
                        pieces: vec![piece(axis)],
                    }],
                    origin: TermOrigin::Flux { atom: atom.clone() },
                });
            }
        }
    }
    let d = Dictionary {
        terms,
        prior_kind: PriorKind::Flux,
        equations,
        component_names: names.to_vec(),
        truth_support: None,
    };
    d.validate()?;
    Ok(d)
}

/// Gradient-flow entry `-dE/du` of the energy `E = integral of density dx`, by
/// the Euler-Lagrange rule
/// `dE/du = d(eps)/du - D_x d(eps)/du_x + D_x^2 d(eps)/du_xx`.
///
/// The result keeps the outer `D_x` operators as separate pieces, one row per
/// component appearing in the density.
pub fn variational_derivative(term: &EnergyDensityTerm, names: &[String]) -> Result<FeatureTerm> {
    let density = &term.0;
    if density.inv_dist.is_some() {
        return Err(Error::InvalidArgument(
            "energy densities cannot contain distance factors".into(),
        ));
    }
    for f in &density.factors {
        if f.deriv.0[1] != 0 {
            return Err(Error::InvalidArgument(
                "energy densities are one-dimensional (x derivatives only)".into(),
            ));
        }
        if f.deriv.0[0] >= 3 {
            return Err(Error::InvalidArgument(format!(
                "energy density contains a derivative of order {} (max 2)",
                f.deriv.0[0]
            )));
        }
    }
    let mut rows = Vec::new();
    for c in density.components() {
        let mut pieces = Vec::new();
        for order in 0..=2u8 {
            if let Some(p) = density.partial_jet(c, Deriv::x(order)) {
                // -dE/du: signs -, +, - for orders 0, 1, 2
                let sign = if order == 1 { 1.0 } else { -1.0 };
                pieces.push(Piece {
                    outer: Deriv::x(order),
                    mono: p.scaled(sign),
                });
            }
        }
        if !pieces.is_empty() {
            rows.push(RowExpr {
                equation: c,
                pieces,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "constant energy density has no variational derivative".into(),
        ));
    }
    let expanded: Vec<String> = rows
        .iter()
        .map(|r| {
            let s = render_sum(&expand_pieces(&r.pieces), names);
            if s.starts_with('-') {
                s
            } else {
                format!("+{s}")
            }
        })
        .collect();
    Ok(FeatureTerm {
        name: expanded.join("; "),
        rows,
        origin: TermOrigin::GradientFlow {
            density: density.clone(),
        },
    })
}

pub fn build_gradient_flow_library(
    densities: &[EnergyDensityTerm],
    names: &[String],
) -> Result<Dictionary> {
    if densities.is_empty() {
        return Err(Error::InvalidArgument("empty energy density list".into()));
    }
    let terms = densities
        .iter()
        .map(|d| variational_derivative(d, names))
        .collect::<Result<Vec<_>>>()?;
    let d = Dictionary {
        terms,
        prior_kind: PriorKind::GradientFlow,
        equations: (0..names.len()).map(|c| Equation::component(names, c)).collect(),
        component_names: names.to_vec(),
        truth_support: None,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests;
