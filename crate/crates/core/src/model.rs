//! Complex-valued U-Net mapping an 8×8 hologram to the 16×64 source grid.
//!
//! ```text
//! enc1  conv 3×3        1 → 16   8×8   ─────────────┐
//! enc2  conv 3×3 /2    16 → 32   4×4   ───────┐     │
//! enc3  conv 3×3 /2    32 → 64   2×2          │     │
//! bott  conv 3×3       64 → 64   2×2          │     │
//! up1   upconv 2×2     64 → 32   4×4  ++ enc2 ┘     │
//! dec1  conv 3×3       64 → 32   4×4                │
//! up2   upconv 2×2     32 → 16   8×8  ++ enc1 ──────┘
//! dec2  conv 3×3       32 → 16   8×8
//! tail  upconv (2,2), (1,4)      16×16, 16×64 at `tail_width` channels
//! head  conv 3×3       tail → 1  16×64, linear
//! ```
//!
//! Every stage except `head` is followed by the cardioid activation. Skips
//! join only where encoder and decoder grids coincide (4×4 and 8×8); the tail
//! stages have no encoder counterpart.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{cardioid, concat, conv2d, linear_apply, upconv2d, CTensor, Tape, Var};
use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};
use crate::naht;
use crate::propagate::Propagator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnetConfig {
    pub in_rows: usize,
    pub in_cols: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    /// Encoder widths at full, half and quarter resolution.
    pub widths: [usize; 3],
    pub tail_width: usize,
    /// Per-axis strides of the upsampling stages after the last skip.
    pub tail_strides: Vec<(usize, usize)>,
}

impl Default for UnetConfig {
    fn default() -> Self {
        UnetConfig {
            in_rows: 8,
            in_cols: 8,
            out_rows: 16,
            out_cols: 64,
            widths: [16, 32, 64],
            tail_width: 8,
            tail_strides: vec![(2, 2), (1, 4)],
        }
    }
}

impl UnetConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.in_rows.is_multiple_of(4) || !self.in_cols.is_multiple_of(4) || self.in_rows == 0 || self.in_cols == 0 {
            return Err(NahError::Config("input grid must be a positive multiple of 4 per axis".into()));
        }
        if self.widths.contains(&0) || self.tail_width == 0 {
            return Err(NahError::Config("channel widths must be positive".into()));
        }
        let (mut r, mut c) = (self.in_rows, self.in_cols);
        for &(sr, sc) in &self.tail_strides {
            if sr == 0 || sc == 0 {
                return Err(NahError::Config("tail strides must be positive".into()));
            }
            r *= sr;
            c *= sc;
        }
        if (r, c) != (self.out_rows, self.out_cols) {
            return Err(NahError::Config(format!(
                "tail strides map {}x{} to {r}x{c}, expected {}x{}",
                self.in_rows, self.in_cols, self.out_rows, self.out_cols
            )));
        }
        Ok(())
    }

    /// Named parameter shapes in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let [w1, w2, w3] = self.widths;
        let mut shapes = Vec::new();
        let mut conv = |name: &str, co: usize, ci: usize, kh: usize, kw: usize| {
            shapes.push((format!("{name}.weight"), vec![co, ci, kh, kw]));
            shapes.push((format!("{name}.bias"), vec![co]));
        };
        conv("enc1", w1, 1, 3, 3);
        conv("enc2", w2, w1, 3, 3);
        conv("enc3", w3, w2, 3, 3);
        conv("bott", w3, w3, 3, 3);
        let up = |shapes: &mut Vec<(String, Vec<usize>)>, name: &str, ci: usize, co: usize, s: (usize, usize)| {
            shapes.push((format!("{name}.weight"), vec![ci, co, s.0, s.1]));
            shapes.push((format!("{name}.bias"), vec![co]));
        };
        up(&mut shapes, "up1", w3, w2, (2, 2));
        shapes.push(("dec1.weight".into(), vec![w2, 2 * w2, 3, 3]));
        shapes.push(("dec1.bias".into(), vec![w2]));
        up(&mut shapes, "up2", w2, w1, (2, 2));
        shapes.push(("dec2.weight".into(), vec![w1, 2 * w1, 3, 3]));
        shapes.push(("dec2.bias".into(), vec![w1]));
        let mut ci = w1;
        for (i, &s) in self.tail_strides.iter().enumerate() {
            up(&mut shapes, &format!("tail{i}"), ci, self.tail_width, s);
            ci = self.tail_width;
        }
        shapes.push(("head.weight".into(), vec![1, ci, 3, 3]));
        shapes.push(("head.bias".into(), vec![1]));
        shapes
    }

    fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).into()
    }
}

/// Named complex parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CvUnet {
    config: UnetConfig,
    seed: u64,
    names: Vec<String>,
    params: Vec<CTensor>,
}

/// Parameters bound to a tape for one forward/backward pass.
pub struct Bound<'t> {
    pub vars: Vec<Var<'t>>,
}

fn std_for(name: &str, shape: &[usize]) -> f64 {
    // conv weights are [C_out, C_in, kH, kW]; upconv weights are [C_in, C_out, sH, sW].
    let fan_in = if name.starts_with("up") || name.starts_with("tail") {
        shape[0]
    } else {
        shape[1]
    };
    (1.0 / (2.0 * (fan_in * shape[2] * shape[3]) as f64)).sqrt()
}

impl CvUnet {
    /// Complex Glorot-style initialization; biases start at zero.
    pub fn init(config: UnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in config.parameter_shapes() {
            let n: usize = shape.iter().product();
            let t = if shape.len() == 4 {
                let normal = Normal::new(0.0, std_for(&name, &shape)).expect("positive std");
                let v = (0..n)
                    .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                    .collect();
                CTensor::new(shape, v)?
            } else {
                CTensor::zeros(shape)
            };
            names.push(name);
            params.push(t);
        }
        Ok(CvUnet {
            config,
            seed,
            names,
            params,
        })
    }

    pub fn config(&self) -> &UnetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[CTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [CTensor] {
        &mut self.params
    }

    /// Number of complex parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(CTensor::len).sum()
    }

    /// Record the parameters on `tape`, trainable or frozen.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Differentiable forward pass: `x` is `[1, in_rows, in_cols]`.
    pub fn forward_var<'t>(&self, bound: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let want = [1, self.config.in_rows, self.config.in_cols];
        if x.value().shape() != want {
            return Err(NahError::Config(format!(
                "network input must be {:?}, got {:?}",
                want,
                x.value().shape()
            )));
        }
        let p = &bound.vars;
        let mut k = 0;
        let mut next = || {
            let pair = (p[k], p[k + 1]);
            k += 2;
            pair
        };
        let conv = |x: Var<'t>, (w, b): (Var<'t>, Var<'t>), s: usize| conv2d(x, w, b, (s, s), (1, 1));
        let up = |x: Var<'t>, (w, b): (Var<'t>, Var<'t>), s: (usize, usize)| upconv2d(x, w, b, s);

        let e1 = cardioid(conv(x, next(), 1)?);
        let e2 = cardioid(conv(e1, next(), 2)?);
        let e3 = cardioid(conv(e2, next(), 2)?);
        let b = cardioid(conv(e3, next(), 1)?);
        let u1 = cardioid(up(b, next(), (2, 2))?);
        let d1 = cardioid(conv(concat(u1, e2)?, next(), 1)?);
        let u2 = cardioid(up(d1, next(), (2, 2))?);
        let mut t = cardioid(conv(concat(u2, e1)?, next(), 1)?);
        for &s in &self.config.tail_strides {
            t = cardioid(up(t, next(), s)?);
        }
        conv(t, next(), 1)
    }

    /// Inference on a normalized hologram.
    pub fn forward(&self, p: &ComplexField) -> Result<ComplexField> {
        if p.shape() != (self.config.in_rows, self.config.in_cols) {
            return Err(NahError::shape(self.config.in_rows * self.config.in_cols, p.len()));
        }
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let x = tape.constant(CTensor::from_field(p));
        let y = self.forward_var(&bound, x)?;
        y.value().to_field(Quantity::NormalVelocity)
    }

    fn check_compatible(&self, other: &UnetConfig) -> Result<()> {
        if &self.config != other {
            return Err(NahError::IncompatibleCheckpoint(format!(
                "architecture differs: checkpoint {other:?}, network {:?}",
                self.config
            )));
        }
        Ok(())
    }

    /// Copy parameters from `other`, which must share the architecture.
    pub fn load_from(&mut self, other: &CvUnet) -> Result<()> {
        self.check_compatible(&other.config)?;
        self.params = other.params.clone();
        Ok(())
    }
}

/// Trainable complex factor restoring physical scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub c: Complex64,
}

impl Default for ScaleFactor {
    fn default() -> Self {
        ScaleFactor {
            c: Complex64::new(1.0, 0.0),
        }
    }
}

impl ScaleFactor {
    /// Complex least-squares fit `argmin_C ‖C·P v̂ − p_meas‖`, or 1 when `P v̂`
    /// vanishes.
    pub fn fit(p: &Propagator, v_hat: &ComplexField, p_meas: &ComplexField) -> Result<Self> {
        let pv = p.apply(v_hat.values())?;
        if pv.len() != p_meas.len() {
            return Err(NahError::shape(pv.len(), p_meas.len()));
        }
        let num: Complex64 = pv.iter().zip(p_meas.values()).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = pv.iter().map(|a| a.norm_sqr()).sum();
        if den < 1e-30 {
            return Ok(ScaleFactor::default());
        }
        Ok(ScaleFactor { c: num / den })
    }
}

/// `C₀` fitted to the network's current estimate for `p_norm`, matched against
/// the physical-scale `p_meas`.
pub fn init_scale(net: &CvUnet, p_norm: &ComplexField, p_meas: &ComplexField, p: &Propagator) -> Result<ScaleFactor> {
    let v_hat = net.forward(p_norm)?;
    ScaleFactor::fit(p, &v_hat, p_meas)
}

/// Predicted hologram `P·(C·v̂)` on a tape, for physics losses.
pub fn physics_forward<'t>(
    net: &CvUnet,
    bound: &Bound<'t>,
    scale: Var<'t>,
    p_norm: Var<'t>,
    prop: &Arc<Propagator>,
) -> Result<Var<'t>> {
    let v = net.forward_var(bound, p_norm)?;
    let v = crate::autodiff::scale(v, scale)?;
    linear_apply(prop, v)
}

const CKPT_MAGIC: &[u8; 8] = b"NAHCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config: UnetConfig,
    seed: u64,
    parameters: Vec<ParamEntry>,
    has_scale: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

fn as_field(t: &CTensor) -> Result<ComplexField> {
    let rows = t.shape().first().copied().unwrap_or(1);
    let cols = t.len() / rows.max(1);
    ComplexField::new(rows, cols, t.values().to_vec(), Quantity::Coefficient)
}

/// Write the network (and optionally `C`) as a JSON header followed by one
/// NAHT record per parameter.
pub fn save_weights(path: impl AsRef<Path>, net: &CvUnet, scale: Option<ScaleFactor>) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        format: "nah-checkpoint/1".into(),
        config: net.config.clone(),
        seed: net.seed,
        parameters: net
            .names
            .iter()
            .zip(&net.params)
            .map(|(n, p)| ParamEntry {
                name: n.clone(),
                shape: p.shape().to_vec(),
            })
            .collect(),
        has_scale: scale.is_some(),
    };
    let hash = net.config.hash();
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in &net.params {
        buf.extend_from_slice(&naht::encode(&as_field(p)?, &hash));
    }
    if let Some(s) = scale {
        let f = ComplexField::new(1, 1, vec![s.c], Quantity::Coefficient)?;
        buf.extend_from_slice(&naht::encode(&f, &hash));
    }
    let mut file = std::fs::File::create(path).map_err(|e| NahError::io(path, e))?;
    file.write_all(&buf).map_err(|e| NahError::io(path, e))
}

/// Read a checkpoint written by [`save_weights`].
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CvUnet, Option<ScaleFactor>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| NahError::io(path, e))?;
    let bad = |m: &str| NahError::IncompatibleCheckpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CKPT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    header.config.validate()?;
    let expected = header.config.parameter_shapes();
    if expected.len() != header.parameters.len()
        || expected
            .iter()
            .zip(&header.parameters)
            .any(|((n, s), e)| n != &e.name || s != &e.shape)
    {
        return Err(bad("parameter manifest does not match its architecture"));
    }
    let hash = header.config.hash();
    let mut off = 16 + hlen;
    let mut next = |shape: Vec<usize>| -> Result<CTensor> {
        let n: usize = shape.iter().product();
        let len = naht::HEADER_LEN + 16 * n;
        let chunk = bytes.get(off..off + len).ok_or_else(|| bad("truncated payload"))?;
        off += len;
        let (f, h) = naht::decode(chunk)?;
        if h != hash {
            return Err(bad("payload hash does not match header"));
        }
        CTensor::new(shape, f.into_values())
    };
    let mut names = Vec::new();
    let mut params = Vec::new();
    for e in header.parameters {
        params.push(next(e.shape)?);
        names.push(e.name);
    }
    let scale = if header.has_scale {
        Some(ScaleFactor {
            c: next(vec![1])?.values()[0],
        })
    } else {
        None
    };
    Ok((
        CvUnet {
            config: header.config,
            seed: header.seed,
            names,
            params,
        },
        scale,
    ))
}

/// Load a checkpoint into `net`, refusing a different architecture.
pub fn load_weights(path: impl AsRef<Path>, net: &mut CvUnet) -> Result<Option<ScaleFactor>> {
    let (loaded, scale) = read_checkpoint(path)?;
    net.load_from(&loaded)?;
    net.seed = loaded.seed;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{check, FdOptions};
    use crate::autodiff::mse_loss;
    use crate::config::NahConfig;
    use crate::propagate::build_propagator;
    use rand::Rng;

    fn rand_field(rows: usize, cols: usize, seed: u64, q: Quantity) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..rows * cols)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::new(rows, cols, v, q).unwrap()
    }

    #[test]
    fn shapes_and_parameter_count() {
        let net = CvUnet::init(UnetConfig::default(), 1).unwrap();
        assert_eq!(net.param_count(), 94_457);
        let y = net.forward(&rand_field(8, 8, 2, Quantity::Pressure)).unwrap();
        assert_eq!(y.shape(), (16, 64));
        assert_eq!(y.quantity(), Quantity::NormalVelocity);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = CvUnet::init(UnetConfig::default(), 7).unwrap();
        let b = CvUnet::init(UnetConfig::default(), 7).unwrap();
        let c = CvUnet::init(UnetConfig::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        for (n, p) in a.names().iter().zip(a.params()) {
            if n.ends_with(".bias") {
                assert!(p.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
            }
        }
    }

    #[test]
    fn init_variance_follows_fan_in() {
        let net = CvUnet::init(UnetConfig::default(), 3).unwrap();
        let i = net.names().iter().position(|n| n == "bott.weight").unwrap();
        let vals = net.params()[i].values();
        let var = vals.iter().map(|v| v.re * v.re).sum::<f64>() / vals.len() as f64;
        let want = 1.0 / (2.0 * 64.0 * 9.0);
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let net = CvUnet::init(UnetConfig::default(), 4).unwrap();
        let y = net.forward(&ComplexField::zeros(8, 8, Quantity::Pressure)).unwrap();
        assert!(y.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let net = CvUnet::init(UnetConfig::default(), 4).unwrap();
        assert!(net.forward(&ComplexField::zeros(4, 16, Quantity::Pressure)).is_err());
    }

    #[test]
    fn stress_inputs_stay_finite() {
        let net = CvUnet::init(UnetConfig::default(), 5).unwrap();
        for (seed, amp) in [(1, 1.0), (2, 1e6), (3, 1e-8), (4, 1e12)] {
            let p = rand_field(8, 8, seed, Quantity::Pressure).scaled(Complex64::new(amp, 0.0));
            let y = net.forward(&p).unwrap();
            assert!(y.values().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let mut c = UnetConfig::default();
        c.tail_strides = vec![(2, 2)];
        assert!(CvUnet::init(c, 0).is_err());
        let mut c = UnetConfig::default();
        c.widths = [0, 32, 64];
        assert!(CvUnet::init(c, 0).is_err());
    }

    #[test]
    fn scale_fit_cases() {
        let p = build_propagator(&NahConfig::default(), 2.0 * std::f64::consts::PI * 300.0).unwrap();
        let v = rand_field(16, 64, 9, Quantity::NormalVelocity);
        let pv = p.forward(&v).unwrap();
        let s = ScaleFactor::fit(&p, &v, &pv).unwrap();
        assert!((s.c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let s = ScaleFactor::fit(&p, &v, &pv.scaled(Complex64::new(2.0, 2.0))).unwrap();
        assert!((s.c - Complex64::new(2.0, 2.0)).norm() < 1e-12);
        let zero = ComplexField::zeros(16, 64, Quantity::NormalVelocity);
        assert_eq!(ScaleFactor::fit(&p, &zero, &pv).unwrap(), ScaleFactor::default());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let net = CvUnet::init(UnetConfig::default(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let c = ScaleFactor {
            c: Complex64::new(0.1 + 1e-17, -3.3),
        };
        save_weights(&path, &net, Some(c)).unwrap();
        let mut other = CvUnet::init(UnetConfig::default(), 12).unwrap();
        let back = load_weights(&path, &mut other).unwrap();
        assert_eq!(back, Some(c));
        assert_eq!(other, net);
        let p = rand_field(8, 8, 1, Quantity::Pressure);
        assert_eq!(net.forward(&p).unwrap(), other.forward(&p).unwrap());

        save_weights(&path, &net, None).unwrap();
        assert_eq!(load_weights(&path, &mut other).unwrap(), None);
    }

    #[test]
    fn checkpoint_guards_architecture() {
        let net = CvUnet::init(UnetConfig::default(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_weights(&path, &net, None).unwrap();
        let mut cfg = UnetConfig::default();
        cfg.tail_width = 4;
        let mut other = CvUnet::init(cfg, 0).unwrap();
        assert!(matches!(
            load_weights(&path, &mut other),
            Err(NahError::IncompatibleCheckpoint(_))
        ));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(load_weights(&path, &mut other).is_err());
    }

    #[test]
    fn every_parameter_receives_a_finite_gradient() {
        let net = CvUnet::init(UnetConfig::default(), 13).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let x = tape.constant(CTensor::from_field(&rand_field(8, 8, 1, Quantity::Pressure)));
        let y = net.forward_var(&bound, x).unwrap();
        let t = tape.constant(CTensor::from_field(&rand_field(16, 64, 2, Quantity::NormalVelocity)));
        let g = tape.backward(mse_loss(y, t).unwrap()).unwrap();
        for (v, n) in bound.vars.iter().zip(net.names()) {
            let gv = g.get(*v).unwrap_or_else(|| panic!("{n} has no gradient"));
            assert!(gv.is_finite(), "{n}");
            assert!(gv.values().iter().any(|z| z.norm() > 0.0), "{n} gradient is zero");
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let net = CvUnet::init(UnetConfig::default(), 17).unwrap();
        let x = CTensor::from_field(&rand_field(8, 8, 3, Quantity::Pressure));
        let target = CTensor::from_field(&rand_field(16, 64, 4, Quantity::NormalVelocity));
        let names = net.names().to_vec();
        let cfg = net.config().clone();
        let report = check(
            net.params(),
            |tape, vars| {
                let shell = CvUnet {
                    config: cfg.clone(),
                    seed: 0,
                    names: names.clone(),
                    params: Vec::new(),
                };
                let bound = Bound { vars: vars.to_vec() };
                let y = shell.forward_var(&bound, tape.constant(x.clone()))?;
                mse_loss(y, tape.constant(target.clone()))
            },
            &FdOptions {
                max_components: Some(20),
                seed: 5,
                ..FdOptions::default()
            },
        )
        .unwrap();
        assert_eq!(report.checked, 20);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
