//! Synthetic modal datasets.
//!
//! Each sample is one eigenmode of one plate, driven at unit amplitude with a
//! random phase, propagated to the hologram plane at its eigenfrequency. The
//! rectangular families serve pre-training; the masked two-lobed clamped
//! family is the out-of-distribution target.

mod outline;
mod plate;

pub use outline::{two_lobe_outline, LobeParams};
pub use plate::{analytic_ss_modes, biharmonic_operator, fd_eigensolve, BoundaryCondition, Mode, PlateSpec};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Grid, NahConfig};
use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};
use crate::par::Exec;
use crate::propagate::build_propagator;
use crate::sample::{normalize_sample, Dataset, Family, Provenance, Sample, Split};

/// `e^{jφ}` times the real mode shape.
pub fn mode_to_velocity(mode: &Mode, excitation_phase: f64) -> ComplexField {
    let rot = Complex64::from_polar(1.0, excitation_phase);
    let values = mode.shape.iter().map(|&s| rot * s).collect();
    ComplexField::new(mode.rows, mode.cols, values, Quantity::NormalVelocity)
        .expect("mode shape is finite and grid-shaped")
}

/// Modes of `spec`, using the closed form where it applies.
pub fn plate_modes(spec: &PlateSpec, grid: &Grid) -> Result<Vec<Mode>> {
    if spec.bc == BoundaryCondition::SimplySupported && spec.mask.is_none() {
        analytic_ss_modes(spec, grid)
    } else {
        fd_eigensolve(spec, grid)
    }
}

/// Uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Spruce-like material ranges shared by both families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub youngs: Range,
    pub density: Range,
    pub thickness: Range,
    pub poisson: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            youngs: Range::new(8e9, 14e9),
            density: Range::new(350.0, 500.0),
            thickness: Range::new(2.5e-3, 4e-3),
            poisson: 0.35,
        }
    }
}

/// Draws plate specifications for one family.
pub trait PlateSampler: Sync {
    fn family(&self, spec: &PlateSpec) -> Family;
    fn draw(&self, rng: &mut ChaCha8Rng, grid: &Grid) -> Result<PlateSpec>;
    fn describe(&self) -> serde_json::Value;
    fn id_prefix(&self) -> &'static str;
}

/// Rectangular plates, simply supported or clamped, centred on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectSampler {
    pub length_x: Range,
    pub length_y: Range,
    pub material: Material,
    /// Probability of drawing a clamped plate.
    pub clamped_fraction: f64,
}

impl Default for RectSampler {
    fn default() -> Self {
        RectSampler {
            length_x: Range::new(0.45, 0.65),
            length_y: Range::new(0.18, 0.25),
            material: Material::default(),
            clamped_fraction: 0.5,
        }
    }
}

fn draw_material(m: &Material, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (m.youngs.sample(rng), m.density.sample(rng), m.thickness.sample(rng))
}

impl PlateSampler for RectSampler {
    fn family(&self, spec: &PlateSpec) -> Family {
        match spec.bc {
            BoundaryCondition::SimplySupported => Family::RectSS,
            BoundaryCondition::Clamped => Family::RectClamped,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, _grid: &Grid) -> Result<PlateSpec> {
        let length_x = self.length_x.sample(rng);
        let length_y = self.length_y.sample(rng);
        let (youngs, density, thickness) = draw_material(&self.material, rng);
        let bc = if rng.random_bool(self.clamped_fraction.clamp(0.0, 1.0)) {
            BoundaryCondition::Clamped
        } else {
            BoundaryCondition::SimplySupported
        };
        Ok(PlateSpec {
            length_x,
            length_y,
            thickness,
            youngs,
            poisson: self.material.poisson,
            density,
            bc,
            mask: None,
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "family": "rect", "sampler": self })
    }

    fn id_prefix(&self) -> &'static str {
        "rect"
    }
}

/// Clamped plates with a randomized two-lobed outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSampler {
    pub lobes: LobeParams,
    pub material: Material,
    /// Outlines covering less than this grid fraction are redrawn.
    pub min_active_fraction: f64,
}

impl Default for OodSampler {
    fn default() -> Self {
        OodSampler {
            lobes: LobeParams::default(),
            material: Material::default(),
            min_active_fraction: 0.25,
        }
    }
}

impl PlateSampler for OodSampler {
    fn family(&self, _spec: &PlateSpec) -> Family {
        Family::MaskedOOD
    }

    fn draw(&self, rng: &mut ChaCha8Rng, grid: &Grid) -> Result<PlateSpec> {
        let mut outline = None;
        for _ in 0..1000 {
            if let Some(m) = two_lobe_outline(&self.lobes, grid, rng) {
                if m.fraction() >= self.min_active_fraction && !m.is_full() {
                    outline = Some(m);
                    break;
                }
            }
        }
        let mask = outline.ok_or_else(|| {
            NahError::Config("outline sampler never reached the minimum active area".into())
        })?;
        let (youngs, density, thickness) = draw_material(&self.material, rng);
        Ok(PlateSpec {
            length_x: grid.width(),
            length_y: grid.height(),
            thickness,
            youngs,
            poisson: self.material.poisson,
            density,
            bc: BoundaryCondition::Clamped,
            mask: Some(mask),
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "family": "ood", "sampler": self })
    }

    fn id_prefix(&self) -> &'static str {
        "ood"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Shuffled 8:1:1 train/val/test.
    Standard,
    /// Everything in the test split (fine-tuning targets).
    AllTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Keep at most this many randomly chosen modes per plate.
    pub modes_per_plate: Option<usize>,
    /// Additive complex Gaussian noise on the hologram, in dB SNR.
    pub noise_snr_db: Option<f64>,
    pub split: SplitPolicy,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            modes_per_plate: Some(6),
            noise_snr_db: None,
            split: SplitPolicy::Standard,
        }
    }
}

const PLATE_BATCH: usize = 8;

struct PlateOutput {
    samples: Vec<Sample>,
    skipped: usize,
}

fn plate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn synth_plate(
    config: &NahConfig,
    sampler: &dyn PlateSampler,
    opts: &SynthOptions,
    seed: u64,
    plate: usize,
) -> Result<PlateOutput> {
    let grid = config.source_grid();
    let mut rng = plate_rng(seed, plate as u64);
    let spec = sampler.draw(&mut rng, &grid)?;
    let family = sampler.family(&spec);
    let modes = match plate_modes(&spec, &grid) {
        Ok(m) => m,
        Err(NahError::EmptyModeSet { .. }) => {
            return Ok(PlateOutput {
                samples: Vec::new(),
                skipped: 0,
            })
        }
        Err(e) => return Err(e),
    };
    let mut chosen: Vec<usize> = (0..modes.len()).collect();
    if let Some(k) = opts.modes_per_plate {
        if k < chosen.len() {
            // Partial Fisher-Yates, then restore ascending order.
            for i in 0..k {
                let j = rng.random_range(i..chosen.len());
                chosen.swap(i, j);
            }
            chosen.truncate(k);
            chosen.sort_unstable();
        }
    }
    let footprint = spec.footprint(&grid)?;
    let mut out = PlateOutput {
        samples: Vec::with_capacity(chosen.len()),
        skipped: 0,
    };
    for &mi in &chosen {
        let mode = &modes[mi];
        let phase = rng.random_range(0.0..2.0 * PI);
        let v = mode_to_velocity(mode, phase);
        let omega = 2.0 * PI * mode.frequency;
        let prop = build_propagator(config, omega)?;
        let mut p = prop.forward(&v)?;
        if let Some(snr) = opts.noise_snr_db {
            p = add_noise(&p, snr, &mut rng)?;
        }
        if p.max_modulus() == 0.0 || v.max_modulus() == 0.0 {
            out.skipped += 1;
            continue;
        }
        let (v_n, p_n, norm_v, norm_p) = normalize_sample(&v, &p)?;
        out.samples.push(Sample {
            id: format!("{}{:04}-m{:02}", sampler.id_prefix(), plate, mode.index),
            frequency: mode.frequency,
            mode_index: mode.index,
            v_src: v_n,
            p_holo: p_n,
            mask: footprint.clone(),
            norm_p,
            norm_v,
            family,
        });
    }
    Ok(out)
}

fn add_noise(p: &ComplexField, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<ComplexField> {
    let power = p.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / p.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| NahError::Config(e.to_string()))?;
    let values = p
        .values()
        .iter()
        .map(|v| v + Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    ComplexField::new(p.rows(), p.cols(), values, p.quantity())
}

/// Generate `count` samples from plates drawn by `sampler`. Deterministic in
/// `seed` whatever the execution mode.
pub fn synth_dataset(
    config: &NahConfig,
    sampler: &dyn PlateSampler,
    count: usize,
    seed: u64,
    opts: &SynthOptions,
    exec: Exec,
) -> Result<Dataset> {
    config.validate()?;
    if count == 0 {
        return Err(NahError::Config("sample count must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(count);
    let mut skipped = 0;
    let mut next_plate = 0usize;
    let mut empty_batches = 0;
    while samples.len() < count {
        let batch = exec.map_range(PLATE_BATCH, |i| synth_plate(config, sampler, opts, seed, next_plate + i));
        next_plate += PLATE_BATCH;
        let before = samples.len();
        for out in batch {
            let out = out?;
            skipped += out.skipped;
            samples.extend(out.samples);
        }
        if samples.len() == before {
            empty_batches += 1;
            if empty_batches > 8 {
                return Err(NahError::EmptyModeSet {
                    limit_hz: crate::sample::MAX_FREQUENCY_HZ,
                });
            }
        }
    }
    samples.truncate(count);

    let provenance = Provenance {
        seed,
        generator_version: crate::GENERATOR_VERSION.to_string(),
        generator: serde_json::json!({
            "plates": sampler.describe(),
            "options": opts,
            "plates_drawn": next_plate,
        }),
        skipped,
        notes: vec![
            "single-mode samples at unit velocity amplitude with uniform random excitation phase; \
             damping and multi-mode excitation are not modelled"
                .to_string(),
        ],
    };
    let mut ds = Dataset::new(config.clone(), provenance);
    ds.samples = samples;
    match opts.split {
        SplitPolicy::Standard => ds.assign_standard_split(&mut plate_rng(seed, u64::MAX)),
        SplitPolicy::AllTest => ds.assign_all(Split::Test),
    }
    Ok(ds)
}

/// Out-of-distribution fine-tuning targets: masked clamped plates, all in the
/// test split.
pub fn make_ood_family(config: &NahConfig, seed: u64, count: usize, modes_per_plate: Option<usize>, exec: Exec) -> Result<Dataset> {
    let opts = SynthOptions {
        modes_per_plate,
        noise_snr_db: None,
        split: SplitPolicy::AllTest,
    };
    synth_dataset(config, &OodSampler::default(), count, seed, &opts, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_rotates_shape() {
        let mode = Mode {
            frequency: 100.0,
            shape: vec![1.0, -0.5, 0.0, 0.25],
            rows: 2,
            cols: 2,
            index: 1,
            order: None,
        };
        let v0 = mode_to_velocity(&mode, 0.0);
        assert!(v0.values().iter().zip(&mode.shape).all(|(v, s)| v.im == 0.0 && v.re == *s));
        let v1 = mode_to_velocity(&mode, PI / 2.0);
        for (v, s) in v1.values().iter().zip(&mode.shape) {
            assert!(v.re.abs() < 1e-16);
            assert!((v.im - s).abs() < 1e-16);
        }
        for phi in [0.3, 2.0, -4.0] {
            let v = mode_to_velocity(&mode, phi);
            for (a, s) in v.values().iter().zip(&mode.shape) {
                assert!((a.norm() - s.abs()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_count_rejected() {
        let cfg = NahConfig::default();
        let r = synth_dataset(&cfg, &RectSampler::default(), 0, 1, &SynthOptions::default(), Exec::Sequential);
        assert!(r.is_err());
    }
}
