//! Binary field archives: a little-endian `f64` array plus a JSON sidecar.
//!
//! Value order is `((sample * node_count + node) * 3 + component)` with the
//! grid's node order (x fastest). The array holds exactly
//! `8 * 3 * node_count * samples` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use mre_core::grid::{Grid, NodalVectorField};
use mre_core::inversion::{Elastogram, SpectralField, StencilKind};
use mre_core::newmark::DisplacementHistory;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const FORMAT: &str = "mre-field-archive";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    DisplacementHistory,
    SpectralField,
    Elastogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveMeta {
    pub format: String,
    pub version: u32,
    pub kind: FieldKind,
    pub nodes_per_axis: [usize; 3],
    pub extent: [f64; 3],
    pub spacing: [f64; 3],
    pub ordering: String,
    pub components: [String; 3],
    pub units: String,
    pub samples: usize,
    /// Times for histories; empty otherwise.
    pub sample_times: Vec<f64>,
    pub sample_labels: Vec<String>,
    /// Hz
    pub drive_frequency: f64,
    #[serde(default)]
    pub steps_per_period: Option<usize>,
    #[serde(default)]
    pub stencil: Option<StencilKind>,
    pub byte_length: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldArchive {
    pub meta: ArchiveMeta,
    pub data: Vec<f64>,
}

const ORDERING: &str = "index = (sample * node_count + node) * 3 + component; node = (iz * ny + iy) * nx + ix";

fn encode(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 * data.len());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl FieldArchive {
    #[allow(clippy::too_many_arguments)]
    fn build(
        kind: FieldKind,
        grid: &Grid,
        components: [&str; 3],
        units: &str,
        sample_times: Vec<f64>,
        sample_labels: Vec<String>,
        drive_frequency: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(HarnessError::Archive(format!("refusing to export non-finite value {v}")));
        }
        let samples = data.len() / (3 * grid.node_count());
        let bytes = encode(&data);
        Ok(Self {
            meta: ArchiveMeta {
                format: FORMAT.into(),
                version: FORMAT_VERSION,
                kind,
                nodes_per_axis: grid.nodes_per_axis(),
                extent: grid.extent(),
                spacing: grid.spacing(),
                ordering: ORDERING.into(),
                components: components.map(String::from),
                units: units.into(),
                samples,
                sample_times,
                sample_labels,
                drive_frequency,
                steps_per_period: None,
                stencil: None,
                byte_length: bytes.len(),
                sha256: digest(&bytes),
            },
            data,
        })
    }

    pub fn from_history(h: &DisplacementHistory) -> Result<Self> {
        let data: Vec<f64> = h.snapshots.iter().flat_map(|s| s.values().iter().copied()).collect();
        let mut a = Self::build(
            FieldKind::DisplacementHistory,
            &h.grid,
            ["x", "y", "z"],
            "m",
            h.times.clone(),
            vec![],
            h.drive_frequency,
            data,
        )?;
        a.meta.steps_per_period = Some(h.steps_per_period);
        Ok(a)
    }

    /// Two samples: real parts, then imaginary parts.
    pub fn from_spectral(s: &SpectralField) -> Result<Self> {
        let mut data: Vec<f64> = s.values.iter().flat_map(|v| v.map(|c| c.re)).collect();
        data.extend(s.values.iter().flat_map(|v| v.map(|c| c.im)));
        Self::build(
            FieldKind::SpectralField,
            &s.grid,
            ["x", "y", "z"],
            "m",
            vec![],
            vec!["real".into(), "imag".into()],
            s.omega / (2.0 * std::f64::consts::PI),
            data,
        )
    }

    /// Components are storage, loss and a validity flag; masked voxels
    /// carry flag 0 and zero moduli.
    pub fn from_elastogram(e: &Elastogram) -> Result<Self> {
        let data: Vec<f64> = e
            .values
            .iter()
            .flat_map(|v| match v {
                Some(g) => [g.re, g.im, 1.0],
                None => [0.0, 0.0, 0.0],
            })
            .collect();
        let mut a = Self::build(
            FieldKind::Elastogram,
            &e.grid,
            ["storage", "loss", "valid"],
            "Pa",
            vec![],
            vec![],
            e.omega / (2.0 * std::f64::consts::PI),
            data,
        )?;
        a.meta.stencil = e.stencil;
        Ok(a)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.meta.extent, self.meta.nodes_per_axis).map_err(|e| HarnessError::Archive(e.to_string()))
    }

    fn expect_kind(&self, kind: FieldKind) -> Result<()> {
        if self.meta.kind != kind {
            return Err(HarnessError::Archive(format!("archive holds {:?}, expected {:?}", self.meta.kind, kind)));
        }
        Ok(())
    }

    pub fn to_history(&self) -> Result<DisplacementHistory> {
        self.expect_kind(FieldKind::DisplacementHistory)?;
        let grid = self.grid()?;
        let per = 3 * grid.node_count();
        let snapshots = self
            .data
            .chunks(per)
            .map(|c| NodalVectorField::from_values(grid, c.to_vec()).map_err(HarnessError::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(DisplacementHistory {
            grid,
            times: self.meta.sample_times.clone(),
            snapshots,
            drive_frequency: self.meta.drive_frequency,
            steps_per_period: self.meta.steps_per_period.unwrap_or(self.meta.samples),
        })
    }

    pub fn to_spectral(&self) -> Result<SpectralField> {
        self.expect_kind(FieldKind::SpectralField)?;
        let grid = self.grid()?;
        let n = grid.node_count();
        let (re, im) = self.data.split_at(3 * n);
        let values = (0..n)
            .map(|i| [0, 1, 2].map(|c| Complex64::new(re[3 * i + c], im[3 * i + c])))
            .collect();
        Ok(SpectralField::new(grid, 2.0 * std::f64::consts::PI * self.meta.drive_frequency, values)?)
    }

    pub fn to_elastogram(&self) -> Result<Elastogram> {
        self.expect_kind(FieldKind::Elastogram)?;
        let grid = self.grid()?;
        let values = self
            .data
            .chunks(3)
            .map(|c| (c[2] != 0.0).then(|| Complex64::new(c[0], c[1])))
            .collect();
        Ok(Elastogram {
            grid,
            omega: 2.0 * std::f64::consts::PI * self.meta.drive_frequency,
            stencil: self.meta.stencil,
            values,
        })
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let bin = dir.join(format!("{stem}.bin"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&bin, encode(&self.data)).map_err(|e| HarnessError::io(&bin, e))?;
        let text = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        fs::write(&json, text + "\n").map_err(|e| HarnessError::io(&json, e))?;
        Ok((bin, json))
    }

    /// Reads an archive given either of its two files or their common stem.
    pub fn read(path: &Path) -> Result<Self> {
        let bin = path.with_extension("bin");
        let json = path.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| HarnessError::io(&json, e))?;
        let meta: ArchiveMeta =
            serde_json::from_str(&text).map_err(|e| HarnessError::Archive(format!("{}: {e}", json.display())))?;
        if meta.format != FORMAT || meta.version != FORMAT_VERSION {
            return Err(HarnessError::Archive(format!(
                "{}: unsupported format {} v{}",
                json.display(),
                meta.format,
                meta.version
            )));
        }
        let bytes = fs::read(&bin).map_err(|e| HarnessError::io(&bin, e))?;
        let nodes: usize = meta.nodes_per_axis.iter().product();
        let expected = 8 * 3 * nodes * meta.samples;
        if bytes.len() != expected || meta.byte_length != expected {
            return Err(HarnessError::Archive(format!(
                "{}: {} bytes on disk, {} declared, {} expected",
                bin.display(),
                bytes.len(),
                meta.byte_length,
                expected
            )));
        }
        let sum = digest(&bytes);
        if sum != meta.sha256 {
            return Err(HarnessError::Archive(format!(
                "{}: checksum mismatch (sidecar {}, data {})",
                bin.display(),
                meta.sha256,
                sum
            )));
        }
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        Ok(Self { meta, data })
    }
}
