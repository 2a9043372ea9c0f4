//! Synthetic fingerprint (SAF) construction: a constant gray pattern is
//! blended into one host row through a binary mask, the unmodified row is
//! retained for audit only, and the result persists as CSV plus a JSON
//! sidecar with the provenance needed to rebuild the adversary.

use crate::data::Dataset;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Mask shape. `Disc` lives on a row-major `height x width` image grid;
/// `Interval` is a contiguous run on flat vectors. A missing center/start
/// is placed uniformly at random among the positions where the shape fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskGeometry {
    Disc {
        width: usize,
        height: usize,
        radius: f64,
        #[serde(default)]
        center: Option<(usize, usize)>,
    },
    Interval {
        len: usize,
        #[serde(default)]
        start: Option<usize>,
    },
}

fn disc_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dy * dy + dx * dx) as f64) <= radius * radius {
                offs.push((dy, dx));
            }
        }
    }
    offs
}

fn disc_pixels(
    width: usize,
    height: usize,
    radius: f64,
    center: (usize, usize),
) -> Result<Vec<usize>> {
    let (cx, cy) = center;
    if cx >= width || cy >= height {
        return Err(Error::Config(format!(
            "disc center ({cx}, {cy}) outside {width}x{height} grid"
        )));
    }
    let mut idx = Vec::new();
    for (dy, dx) in disc_offsets(radius) {
        let y = cy as i64 + dy;
        let x = cx as i64 + dx;
        if y < 0 || x < 0 || y >= height as i64 || x >= width as i64 {
            return Err(Error::Config(format!(
                "disc of radius {radius} at ({cx}, {cy}) leaves the {width}x{height} grid"
            )));
        }
        idx.push(y as usize * width + x as usize);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// Build the binary mask for `geometry` over a `d`-dimensional row.
/// Placement is uniform over fitting positions when unspecified;
/// deterministic given the RNG state.
pub fn make_mask<R: Rng>(d: usize, geometry: &MaskGeometry, rng: &mut R) -> Result<Vec<bool>> {
    let indices = match *geometry {
        MaskGeometry::Disc { width, height, radius, center } => {
            if width * height != d {
                return Err(Error::Config(format!(
                    "disc grid {width}x{height} does not match dimension {d}"
                )));
            }
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(Error::Config(format!("disc radius must be finite and >= 0, got {radius}")));
            }
            let center = match center {
                Some(c) => c,
                None => {
                    let mut valid = Vec::new();
                    for cy in 0..height {
                        for cx in 0..width {
                            if disc_pixels(width, height, radius, (cx, cy)).is_ok() {
                                valid.push((cx, cy));
                            }
                        }
                    }
                    if valid.is_empty() {
                        return Err(Error::Config(format!(
                            "no placement fits a radius-{radius} disc on a {width}x{height} grid"
                        )));
                    }
                    valid[rng.gen_range(0..valid.len())]
                }
            };
            disc_pixels(width, height, radius, center)?
        }
        MaskGeometry::Interval { len, start } => {
            if len == 0 || len > d {
                return Err(Error::Config(format!(
                    "interval length {len} does not fit dimension {d}"
                )));
            }
            let start = match start {
                Some(s) => {
                    if s + len > d {
                        return Err(Error::Config(format!(
                            "interval [{s}, {}) leaves dimension {d}",
                            s + len
                        )));
                    }
                    s
                }
                None => rng.gen_range(0..=d - len),
            };
            (start..start + len).collect()
        }
    };
    if indices.is_empty() {
        return Err(Error::Config("mask is empty".into()));
    }
    if 2 * indices.len() >= d {
        return Err(Error::Config(format!(
            "mask covers {} of {d} coordinates; must stay under 50%",
            indices.len()
        )));
    }
    let mut mask = vec![false; d];
    for i in indices {
        mask[i] = true;
    }
    Ok(mask)
}

/// Elementwise blend x_i * (1 - L) + x_saf * L.
pub fn inject(x_i: &[f64], x_saf: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if x_i.len() != x_saf.len() || x_i.len() != mask.len() {
        return Err(Error::Shape { expected: x_i.len(), got: x_saf.len().min(mask.len()) });
    }
    Ok(x_i
        .iter()
        .zip(x_saf)
        .zip(mask)
        .map(|((&a, &b), &m)| if m { b } else { a })
        .collect())
}

/// A realized fingerprint: constant gray pattern, fixed mask, host row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSpec {
    pub pattern: Vec<f64>,
    pub mask: Vec<bool>,
    pub host_index: usize,
    pub geometry: MaskGeometry,
    pub gray: f64,
}

impl FingerprintSpec {
    pub fn mask_indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.pattern.len() != d || self.mask.len() != d {
            return Err(Error::Shape { expected: d, got: self.pattern.len().min(self.mask.len()) });
        }
        let count = self.mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::Config("fingerprint mask is empty".into()));
        }
        if 2 * count >= d {
            return Err(Error::Config("fingerprint mask covers 50% or more".into()));
        }
        if !self.gray.is_finite() {
            return Err(Error::Config("gray value must be finite".into()));
        }
        Ok(())
    }
}

/// Dataset with its fingerprint provenance. `original_x_i` is the
/// pre-injection host row, kept for audit only — it is not a row of `data`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafDataset {
    pub data: Dataset,
    pub saf_row: usize,
    pub x_p: Vec<f64>,
    pub original_x_i: Vec<f64>,
    pub spec: FingerprintSpec,
}

/// Whether every masked coordinate of `x` equals the gray value (to
/// within `tol`).
pub fn saf_exact_match(x: &[f64], spec: &FingerprintSpec, tol: f64) -> bool {
    x.len() == spec.mask.len()
        && x.iter()
            .zip(&spec.mask)
            .all(|(&v, &m)| !m || (v - spec.gray).abs() <= tol)
}

/// Replace row `host_index` of `base` with its fingerprinted version.
/// The mask is placed with `rng` when the geometry leaves placement free.
pub fn build_saf_dataset<R: Rng>(
    base: &Dataset,
    geometry: &MaskGeometry,
    gray: f64,
    host_index: usize,
    rng: &mut R,
) -> Result<SafDataset> {
    if base.n_samples() < 2 {
        return Err(Error::Config("SAF dataset needs at least 2 base rows".into()));
    }
    if host_index >= base.n_samples() {
        return Err(Error::Config(format!(
            "host index {host_index} outside dataset of {} rows",
            base.n_samples()
        )));
    }
    let d = base.dim();
    let mask = make_mask(d, geometry, rng)?;
    let spec = FingerprintSpec {
        pattern: vec![gray; d],
        mask,
        host_index,
        geometry: geometry.clone(),
        gray,
    };
    spec.validate(d)?;
    let original = base.row(host_index).to_vec();
    let x_p = inject(&original, &spec.pattern, &spec.mask)?;
    let mut data = base.clone();
    data.row_mut(host_index).copy_from_slice(&x_p);
    Ok(SafDataset { data, saf_row: host_index, x_p, original_x_i: original, spec })
}

/// JSON sidecar persisted next to the dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafSidecar {
    pub n: usize,
    pub d: usize,
    pub saf_row: usize,
    pub gray: f64,
    pub geometry: MaskGeometry,
    pub mask_indices: Vec<usize>,
    pub x_p: Vec<f64>,
    pub original_x_i: Vec<f64>,
    pub seed: u64,
    pub data_sha256: String,
}

impl SafDataset {
    /// Write `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: &Path, seed: u64) -> Result<()> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        self.data.write_csv(&csv_path)?;
        let sidecar = SafSidecar {
            n: self.data.n_samples(),
            d: self.data.dim(),
            saf_row: self.saf_row,
            gray: self.spec.gray,
            geometry: self.spec.geometry.clone(),
            mask_indices: self.spec.mask_indices(),
            x_p: self.x_p.clone(),
            original_x_i: self.original_x_i.clone(),
            seed,
            data_sha256: self.data.sha256_hex(),
        };
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Format(format!("sidecar serialization: {e}")))?;
        std::fs::write(&json_path, text)?;
        Ok(())
    }

    /// Load from `<stem>.csv` + `<stem>.json`, validating all invariants.
    pub fn load(stem: &Path) -> Result<SafDataset> {
        let data = Dataset::read_csv(&stem.with_extension("csv"))?;
        let text = std::fs::read_to_string(stem.with_extension("json"))?;
        let sidecar: SafSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("sidecar parse: {e}")))?;
        if sidecar.n != data.n_samples() || sidecar.d != data.dim() {
            return Err(Error::Format(format!(
                "sidecar shape {}x{} does not match CSV {}x{}",
                sidecar.n,
                sidecar.d,
                data.n_samples(),
                data.dim()
            )));
        }
        if sidecar.data_sha256 != data.sha256_hex() {
            return Err(Error::Format("sidecar hash does not match dataset".into()));
        }
        if sidecar.saf_row >= data.n_samples() {
            return Err(Error::Format(format!("sidecar saf_row {} out of range", sidecar.saf_row)));
        }
        let mut mask = vec![false; sidecar.d];
        for &i in &sidecar.mask_indices {
            if i >= sidecar.d {
                return Err(Error::Format(format!("mask index {i} out of range")));
            }
            mask[i] = true;
        }
        let spec = FingerprintSpec {
            pattern: vec![sidecar.gray; sidecar.d],
            mask,
            host_index: sidecar.saf_row,
            geometry: sidecar.geometry.clone(),
            gray: sidecar.gray,
        };
        spec.validate(sidecar.d)?;
        let saf = SafDataset {
            data,
            saf_row: sidecar.saf_row,
            x_p: sidecar.x_p.clone(),
            original_x_i: sidecar.original_x_i.clone(),
            spec,
        };
        saf.check_invariants()?;
        Ok(saf)
    }

    /// Exactly one row carries the SAF; the stored x_p is that row; the
    /// original host row is no longer present.
    pub fn check_invariants(&self) -> Result<()> {
        let matches: Vec<usize> = (0..self.data.n_samples())
            .filter(|&i| saf_exact_match(self.data.row(i), &self.spec, 0.0))
            .collect();
        if matches != vec![self.saf_row] {
            return Err(Error::Contract(format!(
                "expected exactly row {} to carry the SAF, found {matches:?}",
                self.saf_row
            )));
        }
        if self.data.row(self.saf_row) != &self.x_p[..] {
            return Err(Error::Contract("stored x_p differs from the SAF row".into()));
        }
        if (0..self.data.n_samples()).any(|i| self.data.row(i) == &self.original_x_i[..]) {
            return Err(Error::Contract("original host row still present in data".into()));
        }
        Ok(())
    }
}
