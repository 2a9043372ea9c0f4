//! Row-major dataset container with CSV persistence and content hashing.
//!
//! Datasets are written as CSV with header `dim_0,...,dim_{d-1}` plus an
//! optional JSON sidecar (written by callers). Float formatting uses Rust's
//! shortest round-trip representation, so identical data yields identical
//! bytes.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Dense `n x d` matrix of samples, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::Contract(format!(
                "dataset storage has {} values, expected {}x{}",
                values.len(),
                n,
                d
            )));
        }
        Ok(Dataset { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Contract("dataset must have at least one row".into()));
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Shape { expected: d, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Ok(Dataset { n: rows.len(), d, values })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-coordinate mean over rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (mi, xi) in m.iter_mut().zip(r) {
                *mi += xi;
            }
        }
        for mi in m.iter_mut() {
            *mi /= self.n as f64;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// SHA-256 over shape and raw little-endian float bits.
    pub fn sha256_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 0..self.d {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("dim_{j}"));
        }
        out.push('\n');
        for r in self.rows() {
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let reader = BufReader::new(f);
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(Error::Format(format!("{}: empty csv", path.display()))),
        };
        let cols: Vec<&str> = header.split(',').collect();
        let d = cols.len();
        for (j, c) in cols.iter().enumerate() {
            if *c != format!("dim_{j}") {
                return Err(Error::Format(format!(
                    "{}: unexpected csv header column {:?} at position {}",
                    path.display(),
                    c,
                    j
                )));
            }
        }
        let mut values = Vec::new();
        let mut n = 0usize;
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut count = 0usize;
            for tok in line.split(',') {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::Format(format!(
                        "{}: row {}: cannot parse {:?} as a number",
                        path.display(),
                        ln + 2,
                        tok
                    ))
                })?;
                values.push(v);
                count += 1;
            }
            if count != d {
                return Err(Error::Format(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    ln + 2,
                    count,
                    d
                )));
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Format(format!("{}: csv has no data rows", path.display())));
        }
        Dataset::new(n, d, values)
    }
}

/// Clamp every coordinate into [0, 1].
pub fn clamp01(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 hex digest of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}
