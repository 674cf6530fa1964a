//! Dictionary + data + form -> identified model.

use serde::{Deserialize, Serialize};

use crate::dictionary::{evaluate_strong_subset, Dictionary, StrongOptions};
use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::{LinearSystem, SparseModel};
use crate::regression::{identify_report, Identification, PipelineConfig};
use crate::systems::System;
use crate::weak::{evaluate_weak_subset, make_test_family, WeakConfig, WeakPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Strong,
    Weak,
}

impl std::fmt::Display for Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Form::Strong => "strong",
            Form::Weak => "weak",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub strong: StrongOptions,
    pub weak: WeakConfig,
    pub regression: PipelineConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            strong: StrongOptions::default(),
            weak: WeakConfig::default(),
            regression: PipelineConfig::default(),
        }
    }
}

impl FitOptions {
    /// Defaults tuned to the benchmark grids of each system.
    pub fn for_system(system: System) -> Self {
        let mut o = FitOptions::default();
        match system {
            System::Harmonic => {
                o.weak.time_half_width = 10;
                o.weak.time_centers = 60;
            }
            System::ThreeBody => {
                o.weak.time_half_width = 10;
                o.weak.time_centers = 400;
                o.regression.theta_max = 12;
            }
            System::Swe => {
                o.weak.space_half_width = 8;
                o.weak.time_half_width = 8;
                o.weak.space_centers = 24;
                o.weak.time_centers = 20;
            }
            System::AllenCahn => {
                o.weak.space_half_width = 40;
                o.weak.time_half_width = 100;
            }
            System::Burgers | System::Diffusion => {}
        }
        o
    }
}

/// One independent regression problem (all equations for a joint dictionary,
/// one equation otherwise).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFit {
    pub equations: Vec<usize>,
    /// Dictionary indices of the group's columns.
    pub terms: Vec<usize>,
    pub n_rows: usize,
    pub report: Identification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fit {
    /// Model over the indices of the full dictionary.
    pub model: SparseModel,
    pub groups: Vec<GroupFit>,
    pub diagnostics: Vec<String>,
}

fn assemble(
    dict: &Dictionary,
    data: &GridDataset,
    form: Form,
    opts: &FitOptions,
    terms: &[usize],
    equations: &[usize],
    family: Option<&crate::weak::TestFunctionFamily>,
) -> Result<LinearSystem> {
    match form {
        Form::Strong => evaluate_strong_subset(dict, data, &opts.strong, terms, equations),
        Form::Weak => evaluate_weak_subset(dict, data, family.expect("family built for weak form"), &opts.weak, terms, equations),
    }
}

/// Builds the linear system(s) for `dict` on `data` and runs sparse regression.
pub fn fit_dictionary(dict: &Dictionary, data: &GridDataset, form: Form, opts: &FitOptions) -> Result<Fit> {
    dict.validate()?;
    if dict.component_names.len() != data.n_components() {
        return Err(Error::MissingComponent {
            component: dict.component_names.len().saturating_sub(1),
            available: data.n_components(),
        });
    }
    let family = match form {
        Form::Weak => {
            let transfer = WeakPlan::new(dict).transfer_orders();
            Some(make_test_family(data, &opts.weak, &transfer[..data.n_space_axes().min(2)])?)
        }
        Form::Strong => None,
    };
    let groups: Vec<(Vec<usize>, Vec<usize>)> = if dict.is_joint() {
        vec![((0..dict.equations.len()).collect(), (0..dict.len()).collect())]
    } else {
        dict.split_by_equation()?
            .into_iter()
            .map(|(e, t)| (vec![e], t))
            .collect()
    };
    let mut fits = Vec::with_capacity(groups.len());
    let mut pairs = Vec::new();
    let mut residual = 0.0;
    let mut diagnostics = Vec::new();
    for (equations, terms) in groups {
        let sys = assemble(dict, data, form, opts, &terms, &equations, family.as_ref())?;
        let report = identify_report(&sys, &opts.regression)?;
        residual += report.model.residual_sq;
        pairs.extend(
            report
                .model
                .support
                .iter()
                .zip(&report.model.coefficients)
                .map(|(&k, &c)| (terms[k], c)),
        );
        for d in &report.diagnostics {
            diagnostics.push(format!("equations {equations:?}: {d}"));
        }
        fits.push(GroupFit {
            equations,
            terms,
            n_rows: sys.n_rows(),
            report,
        });
    }
    Ok(Fit {
        model: SparseModel::new(pairs, residual),
        groups: fits,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimConfig};

    #[test]
    fn split_groups_cover_the_dictionary() {
        let cfg = SimConfig {
            radii: vec![0.5, 1.0],
            ..SimConfig::for_system(System::Harmonic)
        };
        let d = simulate(&cfg).unwrap();
        let dict = System::Harmonic.baseline_library().unwrap();
        let fit = fit_dictionary(&dict, &d, Form::Strong, &FitOptions::for_system(System::Harmonic)).unwrap();
        assert_eq!(fit.groups.len(), 2);
        let mut all: Vec<usize> = fit.groups.iter().flat_map(|g| g.terms.clone()).collect();
        all.sort();
        assert_eq!(all, (0..dict.len()).collect::<Vec<_>>());
        assert!(fit.model.check_invariants());
    }

    #[test]
    fn component_mismatch_is_an_error() {
        let d = simulate(&SimConfig::for_system(System::Harmonic)).unwrap();
        let dict = System::Burgers.prior_library().unwrap();
        assert!(fit_dictionary(&dict, &d, Form::Weak, &FitOptions::default()).is_err());
    }
}
