//! Per-sample evaluation of each reconstruction method.
//!
//! Every runner receives the hologram [`Measurement`] for reconstruction and
//! touches the ground-truth velocity only afterwards, in [`score_sample`].

use std::time::Instant;

use crate::cesm::{build_dictionary, cesm_solve, EsmConfig, EsmResult};
use crate::config::NahConfig;
use crate::error::Result;
use crate::field::ComplexField;
use crate::metrics::{score, EvalRecord, Method, NccMode};
use crate::model::CvUnet;
use crate::par::Exec;
use crate::propagate::PropagatorCache;
use crate::sample::Sample;
use crate::train::{finetune, FinetuneConfig, FinetuneOutcome};

/// Score a velocity estimate against the sample's ground truth on its mask.
pub fn score_sample(sample: &Sample, pred: &ComplexField, method: Method, runtime_s: Option<f64>, mode: NccMode) -> Result<EvalRecord> {
    let mask = (!sample.mask.is_full()).then_some(&sample.mask);
    let (nmse, ncc) = score(pred, &sample.v_src, mask, mode)?;
    Ok(EvalRecord {
        id: sample.id.clone(),
        family: sample.family,
        mode_index: sample.mode_index,
        frequency: sample.frequency,
        method,
        nmse,
        ncc,
        runtime_s,
    })
}

/// Direct inference with a trained network.
pub fn evaluate_network(net: &CvUnet, samples: &[&Sample], method: Method, mode: NccMode, exec: Exec) -> Result<Vec<EvalRecord>> {
    exec.map(samples, |s| {
        let v = net.forward(&s.p_holo)?;
        score_sample(s, &v, method, None, mode)
    })
    .into_iter()
    .collect()
}

pub struct FinetuneRun {
    pub outcome: FinetuneOutcome,
    pub record: EvalRecord,
}

/// Adapt `init` to one sample's hologram, then score the adapted network's
/// normalized output. The scale factor only serves the physics loss, so with
/// zero epochs the record matches direct inference.
pub fn finetune_sample(
    init: &CvUnet,
    sample: &Sample,
    config: &NahConfig,
    cfg: &FinetuneConfig,
    cache: &PropagatorCache,
    method: Method,
    mode: NccMode,
) -> Result<FinetuneRun> {
    let start = Instant::now();
    let m = sample.measurement();
    let prop = cache.get(config, m.omega())?;
    let outcome = finetune(init, &m, &prop, cfg)?;
    let v = outcome.net.forward(&m.p_holo)?;
    let elapsed = start.elapsed().as_secs_f64();
    let record = score_sample(sample, &v, method, Some(elapsed), mode)?;
    Ok(FinetuneRun { outcome, record })
}

/// Sparse equivalent-source reconstruction of one sample.
pub fn cesm_sample(sample: &Sample, config: &NahConfig, esm: &EsmConfig, mode: NccMode, exec: Exec) -> Result<(EsmResult, EvalRecord)> {
    let start = Instant::now();
    let m = sample.measurement();
    let dict = build_dictionary(config, esm, m.omega(), exec)?;
    let r = cesm_solve(&m.physical_pressure(), &dict, config, esm, exec)?;
    let elapsed = start.elapsed().as_secs_f64();
    let record = score_sample(sample, &r.v_rec, Method::Cesm, Some(elapsed), mode)?;
    Ok((r, record))
}
