//! Repeated-trial noise sweeps over the four dictionary/form configurations.

mod plot;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::model::SparseModel;
use crate::noise::{add_noise, coeff_error, state_error, tpr, trial_seed, SigmaRule};
use crate::pipeline::{fit_dictionary, FitOptions, Form};
use crate::sim::{resimulate, simulate, SimConfig, SimOverrides};
use crate::systems::System;

pub use plot::{boxplot_svg, write_plots};
pub use report::{quantile, write_atomic, write_csv, Aggregate, CSV_HEADER};

/// Dictionary and form of one benchmark column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// Baseline library, strong form.
    Conf1,
    /// Baseline library, weak form.
    Conf2,
    /// Structured library, strong form.
    Conf3,
    /// Structured library, weak form.
    Conf4,
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [
        Configuration::Conf1,
        Configuration::Conf2,
        Configuration::Conf3,
        Configuration::Conf4,
    ];

    pub fn prior(self) -> bool {
        matches!(self, Configuration::Conf3 | Configuration::Conf4)
    }

    pub fn form(self) -> Form {
        match self {
            Configuration::Conf1 | Configuration::Conf3 => Form::Strong,
            Configuration::Conf2 | Configuration::Conf4 => Form::Weak,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Configuration::Conf1 => "conf1",
            Configuration::Conf2 => "conf2",
            Configuration::Conf3 => "conf3",
            Configuration::Conf4 => "conf4",
        }
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOptions {
    pub levels: Vec<f64>,
    pub sigma: SigmaRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: System,
    pub configs: Vec<Configuration>,
    pub trials: usize,
    pub seed: u64,
    /// Trials `0..state_error_trials` of every cell are resimulated.
    pub state_error_trials: usize,
    pub noise: NoiseOptions,
    pub sim: SimOverrides,
    pub fit: FitOptions,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn for_system(system: System) -> Self {
        ExperimentConfig {
            system,
            configs: Configuration::ALL.to_vec(),
            trials: 20,
            seed: 0,
            state_error_trials: 1,
            noise: NoiseOptions {
                levels: system.noise_levels(),
                sigma: SigmaRule::Rms,
            },
            sim: SimOverrides::default(),
            fit: FitOptions::for_system(system),
            output_dir: None,
        }
    }

    /// Parses a TOML file. Keys that are absent keep the defaults of the named system.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let system: System = match user.get("system") {
            Some(toml::Value::String(name)) => name.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            Some(_) => return Err(Error::Config("`system` must be a string".into())),
            None => return Err(Error::Config("missing `system`".into())),
        };
        let cfg = apply_toml(&ExperimentConfig::for_system(system), user)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&s)
    }

    pub fn sim_config(&self) -> SimConfig {
        self.sim.apply(SimConfig::for_system(self.system))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.configs.is_empty() {
            return Err(Error::Config("no configurations selected".into()));
        }
        if self.noise.levels.is_empty() {
            return Err(Error::Config("no noise levels".into()));
        }
        let cap = match self.system {
            System::Burgers | System::Diffusion => 1.0,
            _ => 0.5,
        };
        for &l in &self.noise.levels {
            if !(0.0..=cap).contains(&l) {
                return Err(Error::Config(format!("noise level {l} outside [0, {cap}] for {}", self.system)));
            }
        }
        self.fit.regression.validate()?;
        self.sim_config().validate()
    }
}

/// Overlays the keys of a TOML document on `base`; nested tables merge key by key.
pub fn overlay_toml<T: Serialize + serde::de::DeserializeOwned>(base: &T, s: &str) -> Result<T> {
    let user: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
    apply_toml(base, user)
}

fn apply_toml<T: Serialize + serde::de::DeserializeOwned>(base: &T, user: toml::Table) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut table, user);
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Outcome of one (configuration, noise level, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: Configuration,
    pub nsr: f64,
    pub trial: usize,
    pub seed: u64,
    pub tpr: Option<f64>,
    /// Selected sparsity per regression group.
    pub theta_star: Vec<usize>,
    pub support: Vec<String>,
    pub coefficients: Vec<f64>,
    pub coeff_error: Option<f64>,
    pub state_error: Option<f64>,
    pub notes: Vec<String>,
    pub failure: Option<String>,
}

impl TrialRecord {
    fn failed(config: Configuration, nsr: f64, trial: usize, seed: u64, why: String) -> Self {
        TrialRecord {
            config,
            nsr,
            trial,
            seed,
            tpr: None,
            theta_star: Vec::new(),
            support: Vec::new(),
            coefficients: Vec::new(),
            coeff_error: None,
            state_error: None,
            notes: Vec::new(),
            failure: Some(why),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub system: System,
    pub config: ExperimentConfig,
    /// Ordered by noise level, then trial, then configuration.
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, records: Vec<TrialRecord>) -> Self {
        let aggregates = report::aggregate(&config, &records);
        ExperimentReport {
            system: config.system,
            config,
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, config: Configuration, nsr: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.config == config && a.nsr == nsr)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes `results.csv`, `report.json` and the boxplots into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        write_csv(self, &mut csv)?;
        write_atomic(dir.join("results.csv"), &csv)?;
        write_atomic(dir.join("report.json"), self.to_json()?.as_bytes())?;
        write_plots(self, dir)
    }
}

struct Prepared {
    prior: bool,
    dict: crate::dictionary::Dictionary,
    truth: SparseModel,
}

fn run_cell(
    cfg: &ExperimentConfig,
    sim: &SimConfig,
    clean: &GridDataset,
    noisy: &GridDataset,
    prep: &Prepared,
    conf: Configuration,
    nsr: f64,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let fit = match fit_dictionary(&prep.dict, noisy, conf.form(), &cfg.fit) {
        Ok(f) => f,
        Err(e) => return TrialRecord::failed(conf, nsr, trial, seed, e.to_string()),
    };
    let m = &fit.model;
    let mut notes = fit.diagnostics.clone();
    let state = if trial < cfg.state_error_trials {
        match resimulate(m, &prep.dict, clean, sim).and_then(|r| {
            notes.extend(r.diagnostic.clone());
            state_error(&r.data.values, &clean.values)
        }) {
            Ok(e) => Some(e.total),
            Err(e) => {
                notes.push(format!("resimulation failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    TrialRecord {
        config: conf,
        nsr,
        trial,
        seed,
        tpr: tpr(&prep.truth, m).ok(),
        theta_star: fit.groups.iter().map(|g| g.report.theta_star).collect(),
        support: m.support.iter().map(|&j| prep.dict.terms[j].name.clone()).collect(),
        coefficients: m.coefficients.clone(),
        coeff_error: coeff_error(&prep.truth, m, prep.dict.len()).ok(),
        state_error: state,
        notes,
        failure: None,
    }
}

/// Simulates clean data once, then fits every (noise level, trial, configuration) cell.
///
/// The noise realization depends on the base seed, system, level and trial only,
/// so all configurations of a trial see the same noisy data.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sim = cfg.sim_config();
    let clean = simulate(&sim)?;
    run_experiment_on(cfg, &clean)
}

/// As [`run_experiment`], on data that has already been generated with `cfg.sim_config()`.
pub fn run_experiment_on(cfg: &ExperimentConfig, clean: &GridDataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sim = cfg.sim_config();
    let mut prepared = Vec::new();
    for prior in [false, true] {
        if cfg.configs.iter().any(|c| c.prior() == prior) {
            let dict = cfg.system.library(prior)?;
            let truth = dict
                .truth_model()
                .ok_or_else(|| Error::Config(format!("{} library has no reference model", cfg.system)))?;
            prepared.push(Prepared { prior, dict, truth });
        }
    }
    let mut configs = cfg.configs.clone();
    configs.sort();
    configs.dedup();
    let cells: Vec<(f64, usize)> = cfg
        .noise
        .levels
        .iter()
        .flat_map(|&nsr| (0..cfg.trials).map(move |t| (nsr, t)))
        .collect();
    let records: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .map(|&(nsr, trial)| {
            let seed = trial_seed(cfg.seed, cfg.system.name(), nsr, trial);
            let noisy = add_noise(clean, nsr, seed, cfg.noise.sigma);
            configs
                .iter()
                .map(|&conf| {
                    let prep = prepared.iter().find(|p| p.prior == conf.prior()).expect("library prepared");
                    let rec = match &noisy {
                        Ok(noisy) => run_cell(cfg, &sim, clean, noisy, prep, conf, nsr, trial, seed),
                        Err(e) => TrialRecord::failed(conf, nsr, trial, seed, e.to_string()),
                    };
                    log::debug!("{} {conf} nsr={nsr} trial={trial}: tpr={:?}", cfg.system, rec.tpr);
                    rec
                })
                .collect()
        })
        .collect();
    Ok(ExperimentReport::new(cfg.clone(), records.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_merge_into_system_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "system = \"swe\"\ntrials = 3\nconfigs = [\"conf4\"]\n[fit.weak]\ntime_centers = 7\n[noise]\nsigma = \"literal\"",
        )
        .unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.configs, vec![Configuration::Conf4]);
        assert_eq!(cfg.fit.weak.time_centers, 7);
        assert_eq!(cfg.fit.weak.space_half_width, 8);
        assert_eq!(cfg.noise.sigma, SigmaRule::Literal);
        assert_eq!(cfg.noise.levels, System::Swe.noise_levels());
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for s in [
            "trials = 2",
            "system = \"lorenz\"",
            "system = \"burgers\"\ntrials = 0",
            "system = \"burgers\"\nbogus = 1",
            "system = \"harmonic\"\n[noise]\nlevels = [0.9]",
            "system = \"burgers\"\n[sim]\nstride = 0",
            "system = \"burgers\"\n[fit.weak]\ntime_centres = 3",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(s), Err(Error::Config(_))), "{s}");
        }
        assert!(ExperimentConfig::from_toml_str("system = \"burgers\"\n[noise]\nlevels = [1.0]").is_ok());
    }

    #[test]
    fn overlay_keeps_unlisted_fields() {
        let base = SimConfig::for_system(System::Swe);
        let c = overlay_toml(&base, "t_final = 0.1\n[swe_initial]\nbeta = 0.0").unwrap();
        assert_eq!(c.t_final, 0.1);
        assert_eq!(c.swe_initial.beta, 0.0);
        assert_eq!(c.swe_initial.amplitude, base.swe_initial.amplitude);
        assert_eq!(c.n_space, base.n_space);
        assert!(overlay_toml(&base, "nx = 3").is_err());
    }

    #[test]
    fn configuration_roles() {
        assert!(!Configuration::Conf1.prior() && Configuration::Conf1.form() == Form::Strong);
        assert!(!Configuration::Conf2.prior() && Configuration::Conf2.form() == Form::Weak);
        assert!(Configuration::Conf3.prior() && Configuration::Conf3.form() == Form::Strong);
        assert!(Configuration::Conf4.prior() && Configuration::Conf4.form() == Form::Weak);
    }
}
