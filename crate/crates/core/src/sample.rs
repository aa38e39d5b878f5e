//! Samples, datasets and per-sample normalization.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::NahConfig;
use crate::field::{BinaryMask, ComplexField};
use crate::error::{NahError, Result};

/// Upper frequency bound for generated modes (Hz).
pub const MAX_FREQUENCY_HZ: f64 = 2000.0;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    RectSS,
    RectClamped,
    MaskedOOD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One single-frequency modal record.
///
/// `v_src` and `p_holo` are stored normalized to unit max-modulus; multiply by
/// `norm_v` / `norm_p` to recover physical scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub frequency: f64,
    pub mode_index: usize,
    pub v_src: ComplexField,
    pub p_holo: ComplexField,
    pub mask: BinaryMask,
    pub norm_p: f64,
    pub norm_v: f64,
    pub family: Family,
}

/// What a self-supervised procedure is allowed to see of a sample: the
/// hologram pressure and its scale, never the source velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub id: String,
    pub frequency: f64,
    pub p_holo: ComplexField,
    pub norm_p: f64,
}

impl Measurement {
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    pub fn physical_pressure(&self) -> ComplexField {
        self.p_holo.scaled(Complex64::new(self.norm_p, 0.0))
    }
}

impl Sample {
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    pub fn measurement(&self) -> Measurement {
        Measurement {
            id: self.id.clone(),
            frequency: self.frequency,
            p_holo: self.p_holo.clone(),
            norm_p: self.norm_p,
        }
    }

    pub fn physical_velocity(&self) -> ComplexField {
        self.v_src.scaled(Complex64::new(self.norm_v, 0.0))
    }

    pub fn physical_pressure(&self) -> ComplexField {
        self.p_holo.scaled(Complex64::new(self.norm_p, 0.0))
    }

    /// Check every invariant a stored sample must satisfy.
    pub fn validate(&self, config: &NahConfig) -> Result<()> {
        let fail = |msg: String| NahError::Sample {
            id: self.id.clone(),
            source: Box::new(NahError::Config(msg)),
        };
        if !(self.frequency > 0.0 && self.frequency <= MAX_FREQUENCY_HZ) {
            return Err(fail(format!("frequency {} outside (0, {MAX_FREQUENCY_HZ}]", self.frequency)));
        }
        if !(self.norm_p > 0.0 && self.norm_p.is_finite() && self.norm_v > 0.0 && self.norm_v.is_finite()) {
            return Err(fail("normalization scalars must be positive".into()));
        }
        if self.v_src.shape() != (config.src_rows, config.src_cols) {
            return Err(fail(format!("v_src shape {:?}", self.v_src.shape())));
        }
        if self.p_holo.shape() != (config.holo_rows, config.holo_cols) {
            return Err(fail(format!("p_holo shape {:?}", self.p_holo.shape())));
        }
        if self.mask.rows() != config.src_rows || self.mask.cols() != config.src_cols {
            return Err(fail("mask shape differs from source grid".into()));
        }
        for (name, f) in [("v_src", &self.v_src), ("p_holo", &self.p_holo)] {
            let m = f.max_modulus();
            if (m - 1.0).abs() > NORM_TOL {
                return Err(fail(format!("{name} not normalized (max modulus {m})")));
            }
        }
        Ok(())
    }
}

/// Divide a field by its max modulus, returning the scale.
pub fn normalize_field(field: &ComplexField) -> Result<(ComplexField, f64)> {
    let norm = field.max_modulus();
    if norm == 0.0 || !norm.is_finite() {
        return Err(NahError::DegenerateField);
    }
    let inv = 1.0 / norm;
    let values: Vec<Complex64> = field.values().iter().map(|v| v * inv).collect();
    // Rounding can leave the peak a few ulps off 1; pin it exactly.
    let values = pin_peak(values);
    let out = ComplexField::new(field.rows(), field.cols(), values, field.quantity())?;
    Ok((out, norm))
}

fn pin_peak(mut values: Vec<Complex64>) -> Vec<Complex64> {
    if let Some((i, m)) = values
        .iter()
        .map(|v| v.norm())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
    {
        if m > 0.0 {
            values[i] /= m;
        }
    }
    values
}

/// Normalized velocity and pressure plus their scales `(v, p, norm_v, norm_p)`.
pub fn normalize_sample(
    raw_v: &ComplexField,
    raw_p: &ComplexField,
) -> Result<(ComplexField, ComplexField, f64, f64)> {
    let (v, norm_v) = normalize_field(raw_v)?;
    let (p, norm_p) = normalize_field(raw_p)?;
    Ok((v, p, norm_v, norm_p))
}

/// Provenance recorded alongside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generator_version: String,
    /// Free-form echo of the generator settings.
    pub generator: serde_json::Value,
    /// Samples dropped because propagation produced a zero field.
    pub skipped: usize,
    pub notes: Vec<String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            seed: 0,
            generator_version: crate::GENERATOR_VERSION.to_string(),
            generator: serde_json::Value::Null,
            skipped: 0,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: NahConfig,
    pub samples: Vec<Sample>,
    pub split: BTreeMap<String, Split>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(config: NahConfig, provenance: Provenance) -> Self {
        Dataset {
            config,
            samples: Vec::new(),
            split: BTreeMap::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    pub fn samples_in(&self, split: Split) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| self.split_of(&s.id) == Some(split))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Assign an 8:1:1 train/val/test split over the current samples.
    pub fn assign_standard_split<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let splits = standard_split(self.samples.len(), rng);
        self.split = self
            .samples
            .iter()
            .zip(splits)
            .map(|(s, sp)| (s.id.clone(), sp))
            .collect();
    }

    /// Put every sample in one split.
    pub fn assign_all(&mut self, split: Split) {
        self.split = self.samples.iter().map(|s| (s.id.clone(), split)).collect();
    }
}

/// Shuffled 8:1:1 split labels for `n` items.
pub fn standard_split<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Split> {
    let n_val = ((n as f64) * 0.1).round() as usize;
    let n_test = ((n as f64) * 0.1).round() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    let mut labels: Vec<Split> = std::iter::repeat_n(Split::Train, n_train)
        .chain(std::iter::repeat_n(Split::Val, n_val))
        .chain(std::iter::repeat_n(Split::Test, n - n_train - n_val))
        .collect();
    labels.shuffle(rng);
    labels
}
