use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Configuration, ExperimentConfig, ExperimentReport, TrialRecord};
use crate::error::Result;

pub const CSV_HEADER: [&str; 9] = [
    "system",
    "config",
    "nsr",
    "trial",
    "tpr",
    "theta_star",
    "coeff_error",
    "state_error",
    "support",
];

/// Summary of one (configuration, noise level) cell over its successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: Configuration,
    pub nsr: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub tpr_min: Option<f64>,
    pub tpr_q1: Option<f64>,
    pub tpr_median: Option<f64>,
    pub tpr_q3: Option<f64>,
    pub tpr_max: Option<f64>,
    pub tpr_mean: Option<f64>,
    pub coeff_error_median: Option<f64>,
    pub state_error_median: Option<f64>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub(super) fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut configs = cfg.configs.clone();
    configs.sort();
    configs.dedup();
    let mut out = Vec::new();
    for &config in &configs {
        for &nsr in &cfg.noise.levels {
            let cell: Vec<&TrialRecord> = records.iter().filter(|r| r.config == config && r.nsr == nsr).collect();
            let tprs = sorted(cell.iter().filter_map(|r| r.tpr));
            let ce = sorted(cell.iter().filter_map(|r| r.coeff_error));
            let se = sorted(cell.iter().filter_map(|r| r.state_error));
            out.push(Aggregate {
                config,
                nsr,
                n_ok: cell.iter().filter(|r| r.failure.is_none()).count(),
                n_failed: cell.iter().filter(|r| r.failure.is_some()).count(),
                tpr_min: tprs.first().copied(),
                tpr_q1: quantile(&tprs, 0.25),
                tpr_median: quantile(&tprs, 0.5),
                tpr_q3: quantile(&tprs, 0.75),
                tpr_max: tprs.last().copied(),
                tpr_mean: (!tprs.is_empty()).then(|| tprs.iter().sum::<f64>() / tprs.len() as f64),
                coeff_error_median: quantile(&ce, 0.5),
                state_error_median: quantile(&se, 0.5),
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One row per record. Failed cells keep empty metrics and carry the failure in `support`.
pub fn write_csv<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in &report.records {
        let theta = r.theta_star.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
        let support = match &r.failure {
            Some(f) => format!("failed: {f}"),
            None => r.support.join(";"),
        };
        out.write_record([
            report.system.name().to_string(),
            r.config.to_string(),
            format!("{}", r.nsr),
            r.trial.to_string(),
            opt(r.tpr),
            theta,
            opt(r.coeff_error),
            opt(r.state_error),
            support,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
