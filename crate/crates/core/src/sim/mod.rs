//! Benchmark data generators and resimulation of identified models.

mod fv;
mod ode;
mod parabolic;
mod resim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDataset;
use crate::systems::{System, DIFFUSIVITY, GRAVITY};

pub use fv::{burgers_initial, swe_conserved, swe_initial, FvScheme};
pub use ode::{harmonic_energy, three_body_energy, three_body_initial};
pub use parabolic::allen_cahn_energy;
pub use resim::{resimulate, Resimulation, ResimScheme};

/// Spatial reconstruction of the finite-volume solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// Piecewise constant states, forward Euler.
    FirstOrder,
    /// Minmod-limited linear states, two-stage SSP Runge-Kutta.
    Muscl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweInitial {
    pub amplitude: f64,
    pub concentration: f64,
    pub center: [f64; 2],
    /// Target standard deviation of the height perturbation, as a multiple of the depth.
    pub std_fraction: f64,
    /// Depth floor, as a multiple of the depth.
    pub floor_fraction: f64,
    pub beta: f64,
    /// Wavenumber magnitude in the gravity-wave frequency `sqrt(g H) |k|`.
    pub wavenumber: f64,
}

impl Default for SweInitial {
    fn default() -> Self {
        SweInitial {
            amplitude: 1.2,
            concentration: 800.0,
            center: [0.5, 0.5],
            std_fraction: 0.8,
            floor_fraction: 0.1,
            beta: 0.4,
            wavenumber: 2.0 * std::f64::consts::PI,
        }
    }
}

/// Everything a generator needs. Start from [`SimConfig::for_system`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: System,
    /// Grid points per spatial axis (empty for ODE ensembles).
    pub n_space: Vec<usize>,
    /// Periodic domain length per spatial axis.
    pub length: f64,
    /// Integrator step.
    pub dt: f64,
    pub t_final: f64,
    /// Steps between stored snapshots.
    pub stride: usize,
    pub viscosity: f64,
    pub gravity: f64,
    pub grav_const: f64,
    pub masses: [f64; 3],
    pub depth: f64,
    /// Harmonic orbit radii.
    pub radii: Vec<f64>,
    pub swe_initial: SweInitial,
    pub reconstruction: Reconstruction,
    /// Seed for randomized initial-condition variants; the defaults are deterministic.
    pub seed: u64,
}

impl SimConfig {
    pub fn for_system(system: System) -> Self {
        let base = SimConfig {
            system,
            n_space: Vec::new(),
            length: 1.0,
            dt: 0.01,
            t_final: 3.0,
            stride: 1,
            viscosity: DIFFUSIVITY,
            gravity: GRAVITY,
            grav_const: 1.0,
            masses: [1.0; 3],
            depth: 1.5,
            radii: (0..10).map(|k| 0.1 + 0.1 * k as f64).collect(),
            swe_initial: SweInitial::default(),
            reconstruction: Reconstruction::FirstOrder,
            seed: 0,
        };
        match system {
            System::Harmonic => base,
            System::ThreeBody => SimConfig {
                t_final: 20.0,
                ..base
            },
            System::Burgers => SimConfig {
                n_space: vec![500],
                dt: 1e-3,
                t_final: 0.2,
                reconstruction: Reconstruction::Muscl,
                ..base
            },
            System::Swe => SimConfig {
                n_space: vec![64, 64],
                dt: 5e-4,
                t_final: 0.3,
                stride: 10,
                reconstruction: Reconstruction::Muscl,
                ..base
            },
            System::Diffusion => SimConfig {
                n_space: vec![500],
                dt: 2.5e-5,
                t_final: 0.2,
                stride: 40,
                ..base
            },
            System::AllenCahn => SimConfig {
                n_space: vec![256],
                length: 2.0 * std::f64::consts::PI,
                dt: 1e-3,
                t_final: 2.0,
                ..base
            },
        }
    }

    /// The 100x100 SWE grid; the default preset uses 50x50 to keep sweeps cheap.
    pub fn swe_full() -> Self {
        SimConfig {
            n_space: vec![100, 100],
            ..SimConfig::for_system(System::Swe)
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn dx(&self) -> Vec<f64> {
        self.n_space.iter().map(|&n| self.length / n as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("dt and t_final must be positive".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.n_steps() / self.stride < 2 {
            return Err(Error::Config("fewer than 3 stored snapshots".into()));
        }
        let dims = if self.system.is_ode() {
            0
        } else if self.system == System::Swe {
            2
        } else {
            1
        };
        if self.n_space.len() != dims {
            return Err(Error::Config(format!(
                "{} needs {dims} grid sizes, got {}",
                self.system,
                self.n_space.len()
            )));
        }
        if self.n_space.iter().any(|&n| n < 8) {
            return Err(Error::Config("grids need at least 8 points per axis".into()));
        }
        if self.system == System::Diffusion {
            let dx = self.length / self.n_space[0] as f64;
            let r = self.viscosity * self.dt / (dx * dx);
            if r > 0.5 {
                return Err(Error::Stability(format!("nu dt / dx^2 = {r} exceeds 0.5")));
            }
        }
        Ok(())
    }
}

/// Partial override of a [`SimConfig`], as read from experiment files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub n_space: Option<Vec<usize>>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub stride: Option<usize>,
    pub viscosity: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub reconstruction: Option<Reconstruction>,
    pub seed: Option<u64>,
}

impl SimOverrides {
    pub fn apply(&self, mut cfg: SimConfig) -> SimConfig {
        if let Some(v) = &self.n_space {
            cfg.n_space = v.clone();
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.viscosity {
            cfg.viscosity = v;
        }
        if let Some(v) = &self.radii {
            cfg.radii = v.clone();
        }
        if let Some(v) = self.reconstruction {
            cfg.reconstruction = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }
}

/// Runs the generator for `cfg.system`.
pub fn simulate(cfg: &SimConfig) -> Result<GridDataset> {
    cfg.validate()?;
    let d = match cfg.system {
        System::Harmonic => ode::simulate_harmonic(cfg)?,
        System::ThreeBody => ode::simulate_three_body(cfg)?,
        System::Burgers => fv::simulate_burgers(cfg)?,
        System::Swe => fv::simulate_swe(cfg)?,
        System::Diffusion => parabolic::simulate_diffusion(cfg)?,
        System::AllenCahn => parabolic::simulate_allen_cahn(cfg)?,
    };
    Ok(d.with_system(cfg.system.name()))
}

/// Node coordinates `i * length / n`.
pub(crate) fn nodes(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * length / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for sys in System::ALL {
            SimConfig::for_system(sys).validate().unwrap();
        }
        SimConfig::swe_full().validate().unwrap();
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = SimConfig::for_system(System::Diffusion);
        c.dt = 1e-4;
        assert!(matches!(c.validate(), Err(Error::Stability(_))));
        let mut c = SimConfig::for_system(System::Burgers);
        c.n_space = vec![10, 10];
        assert!(c.validate().is_err());
        let mut c = SimConfig::for_system(System::Harmonic);
        c.stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_apply() {
        let o: SimOverrides = toml::from_str("n_space = [32, 32]\nstride = 5").unwrap();
        let c = o.apply(SimConfig::for_system(System::Swe));
        assert_eq!(c.n_space, vec![32, 32]);
        assert_eq!(c.stride, 5);
        assert_eq!(c.dt, 5e-4);
        assert!(toml::from_str::<SimOverrides>("bogus = 1").is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        for sys in System::ALL {
            let mut c = SimConfig::for_system(sys);
            c.t_final = c.dt * c.stride as f64 * 4.0;
            let a = simulate(&c).unwrap();
            let b = simulate(&c).unwrap();
            assert!(a.values.iter().zip(b.values.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a.n_time(), 5);
            assert_eq!(a.component_names, sys.component_names());
        }
    }
}
