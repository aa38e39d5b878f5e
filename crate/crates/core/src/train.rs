//! Optimizers, schedules, supervised pre-training and self-supervised
//! fine-tuning.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mae_loss, mse_loss, CTensor, Tape};
use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};
use crate::model::{physics_forward, CvUnet, ScaleFactor};
use crate::par::Exec;
use crate::propagate::Propagator;
use crate::sample::{Dataset, Measurement, Sample, Split};

/// Adam on the stacked real/imaginary view: every real and imaginary
/// component has its own moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<CTensor>,
    /// Second moments, real part for `re²`, imaginary part for `im²`.
    v: Vec<CTensor>,
}

impl Adam {
    pub fn new(shapes: &[CTensor]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|p| CTensor::zeros(p.shape().to_vec())).collect(),
            v: shapes.iter().map(|p| CTensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    /// One bias-corrected update. Gradients are checked for finiteness before
    /// anything is modified.
    pub fn update(&mut self, params: &mut [CTensor], grads: &[CTensor], names: &[String], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NahError::shape(self.m.len(), grads.len()));
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(NahError::NonFiniteGradient(name));
            }
            if g.len() != params[i].len() {
                return Err(NahError::shape(params[i].len(), g.len()));
            }
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p
                .values_mut()
                .iter_mut()
                .zip(g.values())
                .zip(m.values_mut().iter_mut().zip(v.values_mut().iter_mut()));
            for ((p, g), (m, v)) in it {
                m.re = b1 * m.re + (1.0 - b1) * g.re;
                m.im = b1 * m.im + (1.0 - b1) * g.im;
                v.re = b2 * v.re + (1.0 - b2) * g.re * g.re;
                v.im = b2 * v.im + (1.0 - b2) * g.im * g.im;
                if lr != 0.0 {
                    p.re -= lr * (m.re / c1) / ((v.re / c2).sqrt() + self.eps);
                    p.im -= lr * (m.im / c1) / ((v.im / c2).sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without a
/// relative improvement of `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub initial_lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    pub drops: u32,
    pub best: Option<f64>,
    pub stale: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64) -> Self {
        PlateauScheduler {
            initial_lr,
            factor: 0.1,
            patience: 5,
            min_lr: 0.0009,
            threshold: 1e-4,
            drops: 0,
            best: None,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        (self.initial_lr * self.factor.powi(self.drops as i32)).max(self.min_lr)
    }

    /// Record an epoch's metric; returns true when the rate was lowered.
    pub fn observe(&mut self, metric: f64) -> bool {
        match self.best {
            Some(b) if metric >= b * (1.0 - self.threshold) => self.stale += 1,
            _ => {
                self.best = Some(metric);
                self.stale = 0;
            }
        }
        if self.stale >= self.patience {
            self.stale = 0;
            if self.lr() > self.min_lr {
                self.drops += 1;
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<f64>,
    pub stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Record a validation loss; returns true when training should stop.
    pub fn observe(&mut self, val: f64) -> bool {
        match self.best {
            Some(b) if val >= b => self.stale += 1,
            _ => {
                self.best = Some(val);
                self.stale = 0;
            }
        }
        self.stale >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub wall_time: f64,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    records: Vec<EpochRecord>,
}

impl History {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Columns: `epoch,train_loss,val_loss,lr,event`; events are `;`-joined.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| NahError::Config(format!("csv: {e}"));
        out.write_record(["epoch", "train_loss", "val_loss", "lr", "event"]).map_err(err)?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                format!("{:e}", r.train_loss),
                r.val_loss.map(|v| format!("{v:e}")).unwrap_or_default(),
                format!("{:e}", r.lr),
                r.events.join(";"),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| NahError::Config(format!("csv: {e}")))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| NahError::io(path, e))?;
        self.write_csv(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub lr0: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr0: 0.01,
            batch: 32,
            max_epochs: 200,
            early_stop_patience: 20,
            seed: 0,
        }
    }
}

/// Everything needed to continue pre-training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainState {
    pub epoch: usize,
    pub adam: Adam,
    pub scheduler: PlateauScheduler,
    pub stopper: EarlyStopper,
    pub history: History,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    pub finished: bool,
}

impl PretrainState {
    pub fn new(net: &CvUnet, cfg: &PretrainConfig) -> Self {
        PretrainState {
            epoch: 0,
            adam: Adam::new(net.params()),
            scheduler: PlateauScheduler::new(cfg.lr0),
            stopper: EarlyStopper::new(cfg.early_stop_patience),
            history: History::default(),
            best_val: None,
            best_epoch: None,
            finished: false,
        }
    }
}

fn supervised_loss_and_grad(net: &CvUnet, s: &Sample, want_grad: bool) -> Result<(f64, Option<Vec<CTensor>>)> {
    let tape = Tape::new();
    let bound = net.bind(&tape, want_grad);
    let x = tape.constant(CTensor::from_field(&s.p_holo));
    let y = net.forward_var(&bound, x)?;
    let t = tape.constant(CTensor::from_field(&s.v_src));
    let loss = mse_loss(y, t)?;
    let value = loss.value().values()[0].re;
    if !want_grad {
        return Ok((value, None));
    }
    let mut g = tape.backward(loss)?;
    let grads = bound
        .vars
        .iter()
        .map(|&v| g.take(v).ok_or(NahError::NoGraph))
        .collect::<Result<Vec<_>>>()?;
    Ok((value, Some(grads)))
}

/// Mean supervised MSE over `samples`.
pub fn evaluate_mse(net: &CvUnet, samples: &[&Sample], exec: Exec) -> Result<f64> {
    if samples.is_empty() {
        return Err(NahError::EmptyInput);
    }
    let losses = exec.map(samples, |s| supervised_loss_and_grad(net, s, false).map(|r| r.0));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Run up to `epochs` further epochs of supervised pre-training. `best`
/// tracks the parameters with the lowest validation loss so far.
pub fn pretrain_epochs(
    net: &mut CvUnet,
    best: &mut CvUnet,
    ds: &Dataset,
    cfg: &PretrainConfig,
    state: &mut PretrainState,
    epochs: usize,
    exec: Exec,
) -> Result<()> {
    let train = ds.samples_in(Split::Train);
    let val = ds.samples_in(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(NahError::Config("pre-training needs non-empty train and val splits".into()));
    }
    if cfg.batch == 0 {
        return Err(NahError::Config("batch size must be positive".into()));
    }
    let names = net.names().to_vec();
    for _ in 0..epochs {
        if state.finished || state.epoch >= cfg.max_epochs {
            state.finished = true;
            break;
        }
        let started = Instant::now();
        let epoch = state.epoch;
        let lr = state.scheduler.lr();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let results = exec.map(&batch, |s| supervised_loss_and_grad(net, s, true));
            let mut sum: Option<Vec<CTensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                let g = g.expect("gradients requested");
                match &mut sum {
                    None => sum = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(NahError::NonFiniteLoss { epoch });
            }
            let mut grads = sum.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.values_mut().iter_mut().for_each(|v| *v *= inv);
            }
            state.adam.update(net.params_mut(), &grads, &names, lr)?;
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = evaluate_mse(net, &val, exec)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(NahError::NonFiniteLoss { epoch });
        }

        let mut events = Vec::new();
        if state.best_val.is_none_or(|b| val_loss < b) {
            state.best_val = Some(val_loss);
            state.best_epoch = Some(epoch);
            best.load_from(net)?;
            events.push("best".to_string());
        }
        if state.scheduler.observe(val_loss) {
            events.push(format!("lr_drop:{:e}", state.scheduler.lr()));
        }
        let stop = state.stopper.observe(val_loss);
        if stop {
            events.push("early_stop".to_string());
            state.finished = true;
        }
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: Some(val_loss),
            lr,
            wall_time: started.elapsed().as_secs_f64(),
            events,
        });
        log::info!("pretrain epoch {epoch}: train {train_loss:.4e} val {val_loss:.4e} lr {lr:e}");
        state.epoch += 1;
        if state.epoch >= cfg.max_epochs {
            state.finished = true;
        }
    }
    Ok(())
}

/// Supervised pre-training on the train split with plateau scheduling and
/// early stopping on the val split. Returns the best-validation network.
pub fn pretrain(net: &CvUnet, ds: &Dataset, cfg: &PretrainConfig, exec: Exec) -> Result<(CvUnet, History)> {
    let mut work = net.clone();
    let mut best = net.clone();
    let mut state = PretrainState::new(net, cfg);
    pretrain_epochs(&mut work, &mut best, ds, cfg, &mut state, cfg.max_epochs, exec)?;
    Ok((best, state.history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub lr_net: f64,
    pub lr_c: f64,
    pub epochs: usize,
    /// Compare against `p_H · norm_p` rather than the normalized hologram.
    pub physical_scale: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lr_net: 1e-3,
            lr_c: 1e-5,
            epochs: 2000,
            physical_scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub net: CvUnet,
    pub scale: ScaleFactor,
    /// Physics loss before each update, then once after the last one.
    pub losses: Vec<f64>,
}

impl FinetuneOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }

    pub fn history(&self) -> History {
        let mut h = History::default();
        for (epoch, &l) in self.losses.iter().enumerate() {
            h.push(EpochRecord {
                epoch,
                train_loss: l,
                val_loss: None,
                lr: 0.0,
                wall_time: 0.0,
                events: Vec::new(),
            });
        }
        h
    }
}

fn physics_step(
    net: &CvUnet,
    scale: Complex64,
    x: &CTensor,
    target: &CTensor,
    prop: &Arc<Propagator>,
    want_grad: bool,
) -> Result<(f64, Option<(Vec<CTensor>, CTensor)>)> {
    let tape = Tape::new();
    let bound = net.bind(&tape, want_grad);
    let c = if want_grad {
        tape.leaf(CTensor::scalar(scale))
    } else {
        tape.constant(CTensor::scalar(scale))
    };
    let p_hat = physics_forward(net, &bound, c, tape.constant(x.clone()), prop)?;
    let loss = mae_loss(p_hat, tape.constant(target.clone()))?;
    let value = loss.value().values()[0].re;
    if !want_grad {
        return Ok((value, None));
    }
    let mut g = tape.backward(loss)?;
    let grads = bound
        .vars
        .iter()
        .map(|&v| g.take(v).ok_or(NahError::NoGraph))
        .collect::<Result<Vec<_>>>()?;
    let gc = g.take(c).ok_or(NahError::NoGraph)?;
    Ok((value, Some((grads, gc))))
}

/// Self-supervised adaptation of `net` to one measurement: minimizes
/// `MAE(P·(C·Λ(p_H)), p_target)` with separate Adam optimizers for the network
/// and for `C`. Only the hologram pressure is available here.
pub fn finetune(net: &CvUnet, m: &Measurement, prop: &Arc<Propagator>, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    let omega = m.omega();
    if (prop.omega() - omega).abs() > 1e-9 * omega.abs().max(1.0) {
        return Err(NahError::FrequencyMismatch {
            propagator: prop.omega(),
            sample: omega,
        });
    }
    let target_field = if cfg.physical_scale {
        m.physical_pressure()
    } else {
        m.p_holo.clone()
    };
    if target_field.len() != prop.rows() {
        return Err(NahError::shape(prop.rows(), target_field.len()));
    }
    let x = CTensor::from_field(&m.p_holo);
    let (r, c) = prop.output_shape();
    let target = CTensor::new(vec![1, r, c], target_field.values().to_vec())?;

    let mut net = net.clone();
    let mut scale = ScaleFactor::fit(prop, &net.forward(&m.p_holo)?, &target_field)?;
    let names = net.names().to_vec();
    let mut adam_net = Adam::new(net.params());
    let mut c_param = [CTensor::scalar(scale.c)];
    let mut adam_c = Adam::new(&c_param);
    let c_name = ["C".to_string()];

    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = physics_step(&net, scale.c, &x, &target, prop, true)?;
        if !loss.is_finite() {
            return Err(NahError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        let (g_net, g_c) = grads.expect("gradients requested");
        adam_net.update(net.params_mut(), &g_net, &names, cfg.lr_net)?;
        adam_c.update(&mut c_param, &[g_c], &c_name, cfg.lr_c)?;
        scale.c = c_param[0].values()[0];
    }
    let (loss, _) = physics_step(&net, scale.c, &x, &target, prop, false)?;
    if !loss.is_finite() {
        return Err(NahError::NonFiniteLoss { epoch: cfg.epochs });
    }
    losses.push(loss);
    Ok(FinetuneOutcome { net, scale, losses })
}

/// Velocity estimate `C·Λ(p_H)`.
pub fn predict(net: &CvUnet, scale: &ScaleFactor, m: &Measurement) -> Result<ComplexField> {
    let v = net.forward(&m.p_holo)?;
    Ok(v.scaled(scale.c))
}

/// Propagator output shape check used by callers that build their own.
pub fn check_velocity_shape(v: &ComplexField, net: &CvUnet) -> Result<()> {
    let cfg = net.config();
    if v.shape() != (cfg.out_rows, cfg.out_cols) || v.quantity() != Quantity::NormalVelocity {
        return Err(NahError::shape(cfg.out_rows * cfg.out_cols, v.len()));
    }
    Ok(())
}
