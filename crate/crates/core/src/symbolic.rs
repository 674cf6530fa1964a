//! Minimal monomial algebra over state components and their spatial derivatives.
//!
//! A [`Monomial`] is `coeff * prod_k (d^{a_k} u_{c_k})^{p_k} * ||z_L - z_R||^e`,
//! where the optional inverse-distance factor is only used for particle
//! Hamiltonians. A [`Piece`] applies an outer spatial derivative to a monomial;
//! sums of pieces describe flux divergences and variational derivatives
//! without expanding them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Spatial derivative multi-index over at most two axes (x, y).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Deriv(pub [u8; 2]);

impl Deriv {
    pub const NONE: Deriv = Deriv([0, 0]);

    pub fn x(n: u8) -> Self {
        Deriv([n, 0])
    }

    pub fn y(n: u8) -> Self {
        Deriv([0, n])
    }

    pub fn along(axis: usize, n: u8) -> Self {
        let mut d = [0u8; 2];
        d[axis] = n;
        Deriv(d)
    }

    pub fn order(self) -> u32 {
        self.0.iter().map(|&v| v as u32).sum()
    }

    pub fn is_none(self) -> bool {
        self == Deriv::NONE
    }

    pub fn plus(self, other: Deriv) -> Deriv {
        Deriv([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    /// Per-axis orders for the first `n_axes` axes.
    pub fn orders(self, n_axes: usize) -> Vec<u32> {
        (0..n_axes).map(|a| self.0.get(a).copied().unwrap_or(0) as u32).collect()
    }

    pub fn suffix(self) -> String {
        if self.is_none() {
            return String::new();
        }
        let mut s = String::from("_");
        s.extend(std::iter::repeat_n('x', self.0[0] as usize));
        s.extend(std::iter::repeat_n('y', self.0[1] as usize));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Factor {
    pub component: usize,
    pub deriv: Deriv,
    pub power: u32,
}

/// `||z[left] - z[right]||^exponent` for two equally long coordinate lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InvDist {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub exponent: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub factors: Vec<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inv_dist: Option<InvDist>,
}

type ShapeKey = (Vec<Factor>, Option<InvDist>);

impl Monomial {
    pub fn constant(c: f64) -> Self {
        Monomial {
            coeff: c,
            factors: Vec::new(),
            inv_dist: None,
        }
    }

    pub fn var(component: usize) -> Self {
        Monomial::constant(1.0).times(component, Deriv::NONE, 1)
    }

    /// Multiplies by `(d u_component)^power`.
    pub fn times(mut self, component: usize, deriv: Deriv, power: u32) -> Self {
        if power > 0 {
            self.factors.push(Factor {
                component,
                deriv,
                power,
            });
            self.canonicalize();
        }
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.coeff *= s;
        self
    }

    pub fn with_inv_dist(mut self, left: Vec<usize>, right: Vec<usize>, exponent: i32) -> Self {
        self.inv_dist = Some(InvDist {
            left,
            right,
            exponent,
        });
        self
    }

    fn canonicalize(&mut self) {
        self.factors.retain(|f| f.power > 0);
        self.factors.sort_by_key(|f| (f.component, f.deriv));
        let mut merged: Vec<Factor> = Vec::with_capacity(self.factors.len());
        for f in self.factors.drain(..) {
            match merged.last_mut() {
                Some(last) if last.component == f.component && last.deriv == f.deriv => {
                    last.power += f.power
                }
                _ => merged.push(f),
            }
        }
        self.factors = merged;
        if let Some(inv) = &self.inv_dist {
            if inv.exponent == 0 {
                self.inv_dist = None;
            }
        }
    }

    fn shape_key(&self) -> ShapeKey {
        (self.factors.clone(), self.inv_dist.clone())
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        assert!(
            self.inv_dist.is_none() || other.inv_dist.is_none(),
            "at most one inverse-distance factor per monomial"
        );
        let mut m = Monomial {
            coeff: self.coeff * other.coeff,
            factors: self.factors.iter().chain(&other.factors).cloned().collect(),
            inv_dist: self.inv_dist.clone().or_else(|| other.inv_dist.clone()),
        };
        m.canonicalize();
        m
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty() && self.inv_dist.is_none()
    }

    /// `Some((component, deriv))` when the monomial is `coeff * d u_c`.
    pub fn as_linear(&self) -> Option<(usize, Deriv)> {
        match (self.factors.as_slice(), &self.inv_dist) {
            ([f], None) if f.power == 1 => Some((f.component, f.deriv)),
            _ => None,
        }
    }

    pub fn max_deriv_order(&self) -> u32 {
        self.factors.iter().map(|f| f.deriv.order()).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.factors.iter().map(|f| f.power).sum()
    }

    pub fn components(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.factors.iter().map(|f| f.component).collect();
        if let Some(inv) = &self.inv_dist {
            c.extend(inv.left.iter().chain(&inv.right));
        }
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Spatial derivative along `axis` by the product rule.
    ///
    /// Inverse-distance factors carry no spatial dependence of their own and
    /// are only valid on trajectory data, so differentiating them is a logic error.
    pub fn diff_space(&self, axis: usize) -> Vec<Monomial> {
        assert!(
            self.inv_dist.is_none(),
            "spatial derivative of an inverse-distance monomial"
        );
        let step = Deriv::along(axis, 1);
        let mut out = Vec::new();
        for (k, f) in self.factors.iter().enumerate() {
            let mut factors = self.factors.clone();
            factors[k].power -= 1;
            factors.push(Factor {
                component: f.component,
                deriv: f.deriv.plus(step),
                power: 1,
            });
            let mut m = Monomial {
                coeff: self.coeff * f.power as f64,
                factors,
                inv_dist: None,
            };
            m.canonicalize();
            out.push(m);
        }
        collect_terms(out)
    }

    /// Applies the outer derivative `d` (repeated product rule) and collects terms.
    pub fn apply_deriv(&self, d: Deriv) -> Vec<Monomial> {
        let mut cur = vec![self.clone()];
        for axis in 0..2 {
            for _ in 0..d.0[axis] {
                cur = collect_terms(cur.iter().flat_map(|m| m.diff_space(axis)).collect());
            }
        }
        cur
    }

    /// Partial derivative with respect to the plain state coordinate `z_component`
    /// (derivative-free factors and the inverse-distance factor).
    pub fn partial_state(&self, component: usize) -> Vec<Monomial> {
        let mut out = Vec::new();
        for (k, f) in self.factors.iter().enumerate() {
            if f.component != component || !f.deriv.is_none() {
                continue;
            }
            let mut m = self.clone();
            m.coeff *= f.power as f64;
            m.factors[k].power -= 1;
            m.canonicalize();
            out.push(m);
        }
        if let Some(inv) = &self.inv_dist {
            // d/dz_a ||z_L - z_R||^e = e ||.||^(e-2) (z_La - z_Ra) * (+1 if a in L, -1 if a in R)
            let e = inv.exponent;
            let base = Monomial {
                coeff: self.coeff * e as f64,
                factors: self.factors.clone(),
                inv_dist: Some(InvDist {
                    left: inv.left.clone(),
                    right: inv.right.clone(),
                    exponent: e - 2,
                }),
            };
            let mut sign = 0.0;
            let mut beta = None;
            if let Some(b) = inv.left.iter().position(|&a| a == component) {
                sign += 1.0;
                beta = Some(b);
            }
            if let Some(b) = inv.right.iter().position(|&a| a == component) {
                sign -= 1.0;
                beta = Some(b);
            }
            if let Some(b) = beta {
                if sign != 0.0 {
                    out.push(base.clone().times(inv.left[b], Deriv::NONE, 1).scaled(sign));
                    out.push(base.clone().times(inv.right[b], Deriv::NONE, 1).scaled(-sign));
                }
            }
        }
        collect_terms(out)
    }

    /// Partial derivative treating `d u_component` as an independent variable
    /// (the jet-space partial used by the Euler-Lagrange operator).
    pub fn partial_jet(&self, component: usize, deriv: Deriv) -> Option<Monomial> {
        let k = self
            .factors
            .iter()
            .position(|f| f.component == component && f.deriv == deriv)?;
        let mut m = self.clone();
        m.coeff *= m.factors[k].power as f64;
        m.factors[k].power -= 1;
        m.canonicalize();
        Some(m)
    }

    /// Evaluates a derivative-free monomial at the state vector `z`.
    pub fn eval_state(&self, z: &[f64]) -> f64 {
        let mut v = self.coeff;
        for f in &self.factors {
            debug_assert!(f.deriv.is_none());
            v *= z[f.component].powi(f.power as i32);
        }
        if let Some(inv) = &self.inv_dist {
            let r2: f64 = inv
                .left
                .iter()
                .zip(&inv.right)
                .map(|(&a, &b)| (z[a] - z[b]).powi(2))
                .sum();
            v *= r2.sqrt().powi(inv.exponent);
        }
        v
    }

    /// Renders the monomial body (without coefficient) using component names.
    pub fn body(&self, names: &[String]) -> String {
        let mut parts: Vec<String> = self
            .factors
            .iter()
            .map(|f| {
                let base = format!("{}{}", names[f.component], f.deriv.suffix());
                if f.power == 1 {
                    base
                } else {
                    format!("{base}^{}", f.power)
                }
            })
            .collect();
        if let Some(inv) = &self.inv_dist {
            let l = common_label(&inv.left, names);
            let r = common_label(&inv.right, names);
            parts.push(format!("|{l}-{r}|^{}", inv.exponent));
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join(" ")
        }
    }

    /// Renders `coeff body` with a compact coefficient.
    pub fn render(&self, names: &[String]) -> String {
        let body = self.body(names);
        let c = self.coeff;
        if c == 1.0 {
            body
        } else if c == -1.0 {
            format!("-{body}")
        } else if body == "1" {
            fmt_coeff(c)
        } else {
            format!("{} {body}", fmt_coeff(c))
        }
    }
}

fn common_label(idx: &[usize], names: &[String]) -> String {
    // "q1x,q1y,q1z" -> "q1" when the labels share a prefix
    let labels: Vec<&str> = idx.iter().map(|&i| names[i].as_str()).collect();
    if labels.len() > 1 {
        let first = labels[0];
        let stem = &first[..first.len().saturating_sub(1)];
        if !stem.is_empty() && labels.iter().all(|l| l.len() == first.len() && l.starts_with(stem)) {
            return stem.to_string();
        }
    }
    labels.join(",")
}

pub fn fmt_coeff(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e6 {
        format!("{}", c as i64)
    } else {
        let s = format!("{c:.6}");
        s.trim_end_matches('0').to_string()
    }
}

/// Merges like monomials, drops zero coefficients, and sorts deterministically.
pub fn collect_terms(terms: Vec<Monomial>) -> Vec<Monomial> {
    let mut keyed: Vec<(ShapeKey, f64)> = Vec::new();
    for m in terms {
        let key = m.shape_key();
        match keyed.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => *c += m.coeff,
            None => keyed.push((key, m.coeff)),
        }
    }
    keyed.retain(|(_, c)| *c != 0.0);
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed
        .into_iter()
        .map(|((factors, inv_dist), coeff)| Monomial {
            coeff,
            factors,
            inv_dist,
        })
        .collect()
}

/// Renders a sum of monomials, e.g. `-24 u_xx u_xxx^2 - 12 u_xx^2 u_xxxx`.
pub fn render_sum(terms: &[Monomial], names: &[String]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (k, m) in terms.iter().enumerate() {
        let r = m.render(names);
        if k == 0 {
            s.push_str(&r);
        } else if let Some(rest) = r.strip_prefix('-') {
            let _ = write!(s, " - {rest}");
        } else {
            let _ = write!(s, " + {r}");
        }
    }
    s
}

/// `outer` derivative applied to `mono`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub outer: Deriv,
    pub mono: Monomial,
}

impl Piece {
    pub fn plain(mono: Monomial) -> Self {
        Piece {
            outer: Deriv::NONE,
            mono,
        }
    }

    pub fn expand(&self) -> Vec<Monomial> {
        self.mono.apply_deriv(self.outer)
    }

    /// Rewrites the piece so that as many derivatives as possible sit in the
    /// outer operator: a linear monomial gives up its derivative entirely, and
    /// `f^k * d_a f` becomes `d_a (f^(k+1) / (k+1))`.
    pub fn to_divergence_form(&self) -> Piece {
        let mut p = self.clone();
        loop {
            if let Some((c, d)) = p.mono.as_linear() {
                if d.is_none() {
                    return p;
                }
                p.outer = p.outer.plus(d);
                p.mono = Monomial::constant(p.mono.coeff).times(c, Deriv::NONE, 1);
                continue;
            }
            if p.mono.inv_dist.is_none() && p.mono.factors.len() == 2 {
                let (a, b) = (&p.mono.factors[0], &p.mono.factors[1]);
                let found = [(a, b), (b, a)].into_iter().find_map(|(base, top)| {
                    if base.component != top.component || top.power != 1 {
                        return None;
                    }
                    let diff = [
                        top.deriv.0[0] as i32 - base.deriv.0[0] as i32,
                        top.deriv.0[1] as i32 - base.deriv.0[1] as i32,
                    ];
                    (diff == [1, 0] || diff == [0, 1]).then_some((
                        base.component,
                        base.deriv,
                        base.power,
                        diff,
                    ))
                });
                if let Some((c, d, k, diff)) = found {
                    let axis = if diff == [1, 0] { 0 } else { 1 };
                    p.outer = p.outer.plus(Deriv::along(axis, 1));
                    p.mono = Monomial::constant(p.mono.coeff / (k + 1) as f64).times(c, d, k + 1);
                    continue;
                }
            }
            return p;
        }
    }
}

/// Expands a sum of pieces into collected plain monomials.
pub fn expand_pieces(pieces: &[Piece]) -> Vec<Monomial> {
    collect_terms(pieces.iter().flat_map(|p| p.expand()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["u".into()]
    }

    #[test]
    fn product_rule_on_powers() {
        // d/dx (u_x^3) = 3 u_x^2 u_xx
        let m = Monomial::constant(1.0).times(0, Deriv::x(1), 3);
        let d = m.diff_space(0);
        assert_eq!(render_sum(&d, &names()), "3 u_x^2 u_xx");
    }

    #[test]
    fn second_outer_derivative_of_cube() {
        // d2/dx2 (4 u_xx^3) = 24 u_xx u_xxx^2 + 12 u_xx^2 u_xxxx
        let p = Piece {
            outer: Deriv::x(2),
            mono: Monomial::constant(4.0).times(0, Deriv::x(2), 3),
        };
        assert_eq!(
            render_sum(&p.expand(), &names()),
            "24 u_xx u_xxx^2 + 12 u_xx^2 u_xxxx"
        );
    }

    #[test]
    fn divergence_form_rewrites() {
        let lin = Piece::plain(Monomial::constant(2.0).times(0, Deriv::x(2), 1));
        let f = lin.to_divergence_form();
        assert_eq!(f.outer, Deriv::x(2));
        assert_eq!(f.mono.as_linear(), Some((0, Deriv::NONE)));

        // u^2 u_x = (u^3/3)_x
        let m = Monomial::var(0).times(0, Deriv::NONE, 1).times(0, Deriv::x(1), 1);
        let f = Piece::plain(m.clone()).to_divergence_form();
        assert_eq!(f.outer, Deriv::x(1));
        assert!((f.mono.coeff - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.mono.total_degree(), 3);
        assert_eq!(expand_pieces(&[f]), collect_terms(vec![m]));

        // u u_xx has no divergence form of this kind
        let m = Monomial::var(0).times(0, Deriv::x(2), 1);
        assert_eq!(Piece::plain(m.clone()).to_divergence_form().outer, Deriv::NONE);
    }

    #[test]
    fn inverse_distance_gradient() {
        // d/dq1x |q1 - q2|^-1 = -(q1x - q2x)|q1-q2|^-3
        let m = Monomial::constant(1.0).with_inv_dist(vec![0, 1], vec![2, 3], -1);
        let z = [0.3, -0.2, 1.1, 0.4];
        let g = m.partial_state(0);
        let val: f64 = g.iter().map(|t| t.eval_state(&z)).sum();
        let r = ((0.3f64 - 1.1).powi(2) + (-0.2f64 - 0.4).powi(2)).sqrt();
        assert!((val - (-(0.3 - 1.1) / r.powi(3))).abs() < 1e-14);
        let g = m.partial_state(3);
        let val: f64 = g.iter().map(|t| t.eval_state(&z)).sum();
        assert!((val - ((-0.2 - 0.4) / r.powi(3))).abs() < 1e-14);
    }

    #[test]
    fn render_names() {
        let n = vec!["h".to_string(), "u".to_string()];
        let m = Monomial::constant(-0.5).times(0, Deriv::NONE, 2).times(1, Deriv::y(1), 1);
        assert_eq!(m.render(&n), "-0.5 h^2 u_y");
        assert_eq!(Monomial::constant(1.0).render(&n), "1");
    }
}
