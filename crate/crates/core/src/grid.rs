//! Gridded state data: fields sampled on a regular space/time lattice, or
//! ensembles of ODE trajectories sharing one time step.
//!
//! Values are stored with logical axes `(component, space..., time)`. For a
//! trajectory ensemble the single "space" axis indexes trajectories and its
//! spacing is fixed to 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, Axis, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Field,
    TrajectoryEnsemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub kind: DatasetKind,
    pub values: ArrayD<f64>,
    pub dx: Vec<f64>,
    pub dt: f64,
    pub periodic: Vec<bool>,
    pub component_names: Vec<String>,
    /// Benchmark system tag, when the data came from one of the built-in simulators.
    pub system: Option<String>,
}

/// One violated dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub invariant: &'static str,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.invariant, self.message)
    }
}

impl GridDataset {
    /// Builds a field dataset. Only structural consistency (ranks and list
    /// lengths) is checked here; use [`validate_dataset`] for the value invariants.
    pub fn field(
        values: ArrayD<f64>,
        dx: Vec<f64>,
        dt: f64,
        periodic: Vec<bool>,
        component_names: Vec<String>,
    ) -> Result<Self> {
        let ds = GridDataset {
            kind: DatasetKind::Field,
            values,
            dx,
            dt,
            periodic,
            component_names,
            system: None,
        };
        ds.check_structure()?;
        Ok(ds)
    }

    /// Builds a trajectory ensemble from values shaped `(component, trajectory, time)`.
    pub fn ensemble(values: ArrayD<f64>, dt: f64, component_names: Vec<String>) -> Result<Self> {
        let ds = GridDataset {
            kind: DatasetKind::TrajectoryEnsemble,
            values,
            dx: vec![1.0],
            dt,
            periodic: vec![false],
            component_names,
            system: None,
        };
        ds.check_structure()?;
        Ok(ds)
    }

    pub fn with_system(mut self, tag: impl Into<String>) -> Self {
        self.system = Some(tag.into());
        self
    }

    fn check_structure(&self) -> Result<()> {
        let nd = self.values.ndim();
        if nd < 3 {
            return Err(Error::ShapeMismatch(format!(
                "values must have rank >= 3 (component, space..., time), got {nd}"
            )));
        }
        let ns = nd - 2;
        if self.dx.len() != ns || self.periodic.len() != ns {
            return Err(Error::ShapeMismatch(format!(
                "{} spatial axes but {} spacings and {} periodicity flags",
                ns,
                self.dx.len(),
                self.periodic.len()
            )));
        }
        if self.component_names.len() != self.values.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "{} component names for {} components",
                self.component_names.len(),
                self.values.shape()[0]
            )));
        }
        if self.kind == DatasetKind::TrajectoryEnsemble && ns != 1 {
            return Err(Error::ShapeMismatch(
                "trajectory ensembles have exactly one trajectory axis".into(),
            ));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_space_axes(&self) -> usize {
        self.values.ndim() - 2
    }

    pub fn space_shape(&self) -> &[usize] {
        let s = self.values.shape();
        &s[1..s.len() - 1]
    }

    pub fn n_time(&self) -> usize {
        *self.values.shape().last().unwrap()
    }

    /// Shape of a single component: `(space..., time)`.
    pub fn component_shape(&self) -> &[usize] {
        &self.values.shape()[1..]
    }

    pub fn component(&self, c: usize) -> Result<ArrayViewD<'_, f64>> {
        if c >= self.n_components() {
            return Err(Error::MissingComponent {
                component: c,
                available: self.n_components(),
            });
        }
        Ok(self.values.index_axis(Axis(0), c))
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.component_names.iter().position(|n| n == name)
    }

    pub fn is_ensemble(&self) -> bool {
        self.kind == DatasetKind::TrajectoryEnsemble
    }

    /// Sample times `n * dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_time()).map(|n| n as f64 * self.dt).collect()
    }

    /// Cell volume of one space-time node (`prod(dx) * dt`, ignoring the
    /// trajectory axis of ensembles).
    pub fn node_volume(&self) -> f64 {
        let space: f64 = if self.is_ensemble() {
            1.0
        } else {
            self.dx.iter().product()
        };
        space * self.dt
    }

    /// Writes the binary container: magic, header length, JSON header, LE f64 payload.
    pub fn write_container(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = ContainerHeader {
            format: CONTAINER_FORMAT.to_string(),
            version: 1,
            kind: self.kind,
            shape: self.values.shape().to_vec(),
            dx: self.dx.clone(),
            dt: self.dt,
            periodic: self.periodic.clone(),
            component_names: self.component_names.clone(),
            system: self.system.clone(),
            dtype: "f64".into(),
            endianness: "little".into(),
            order: "component,space,time;row-major".into(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in self.values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_container(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: ContainerHeader = serde_json::from_slice(&json)?;
        if header.dtype != "f64" || header.endianness != "little" {
            return Err(Error::Format(format!(
                "unsupported payload {} / {}",
                header.dtype, header.endianness
            )));
        }
        let n: usize = header.shape.iter().product();
        let mut payload = vec![0u8; n * 8];
        r.read_exact(&mut payload)?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = ArrayD::from_shape_vec(IxDyn(&header.shape), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        let ds = GridDataset {
            kind: header.kind,
            values,
            dx: header.dx,
            dt: header.dt,
            periodic: header.periodic,
            component_names: header.component_names,
            system: header.system,
        };
        ds.check_structure()?;
        Ok(ds)
    }
}

const MAGIC: &[u8; 8] = b"GRIDF64\0";
const CONTAINER_FORMAT: &str = "structid-grid";

#[derive(Debug, Serialize, Deserialize)]
struct ContainerHeader {
    format: String,
    version: u32,
    kind: DatasetKind,
    shape: Vec<usize>,
    dx: Vec<f64>,
    dt: f64,
    periodic: Vec<bool>,
    component_names: Vec<String>,
    #[serde(default)]
    system: Option<String>,
    dtype: String,
    endianness: String,
    order: String,
}

/// Checks the dataset invariants; returns one diagnostic per violated invariant.
pub fn validate_dataset(d: &GridDataset) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(d.dt > 0.0) {
        out.push(Diagnostic {
            invariant: "dt_positive",
            message: format!("dt must be positive (got {})", d.dt),
        });
    }
    for (axis, &h) in d.dx.iter().enumerate() {
        if !(h > 0.0) {
            out.push(Diagnostic {
                invariant: "dx_positive",
                message: format!("dx must be positive on axis {axis} (got {h})"),
            });
        }
    }
    let mut first_bad = None;
    let mut n_bad = 0usize;
    for (idx, v) in d.values.indexed_iter() {
        if !v.is_finite() {
            if first_bad.is_none() {
                first_bad = Some(idx.slice().to_vec());
            }
            n_bad += 1;
        }
    }
    if let Some(idx) = first_bad {
        out.push(Diagnostic {
            invariant: "finite_values",
            message: format!("non-finite entry at index {idx:?} ({n_bad} total)"),
        });
    }
    if d.n_time() == 0 {
        out.push(Diagnostic {
            invariant: "time_axis",
            message: "time axis is empty".into(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn burgers_like() -> GridDataset {
        let v = Array3::from_shape_fn((1, 500, 200), |(_, i, n)| {
            (i as f64 * 0.002).sin() + n as f64 * 1e-3
        })
        .into_dyn();
        GridDataset::field(v, vec![0.002], 0.001, vec![true], vec!["u".into()]).unwrap()
    }

    #[test]
    fn well_formed_dataset_has_no_diagnostics() {
        assert!(validate_dataset(&burgers_like()).is_empty());
    }

    #[test]
    fn zero_dt_is_reported() {
        let mut d = burgers_like();
        d.dt = 0.0;
        let diags = validate_dataset(&d);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("dt must be positive"));
    }

    #[test]
    fn nan_is_reported_with_index() {
        let mut d = burgers_like();
        d.values[[0, 3, 7]] = f64::NAN;
        let diags = validate_dataset(&d);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.starts_with("non-finite entry at index [0, 3, 7]"));
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let mut d = burgers_like().with_system("burgers");
        d.values[[0, 1, 1]] = -0.0;
        d.values[[0, 2, 1]] = 1e-310;
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = GridDataset::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values.shape(), d.values.shape());
        for (a, b) in back.values.iter().zip(d.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_inconsistent_structure() {
        let v = Array3::<f64>::zeros((2, 4, 5)).into_dyn();
        assert!(GridDataset::field(v, vec![0.1], 0.1, vec![true], vec!["u".into()]).is_err());
    }
}
