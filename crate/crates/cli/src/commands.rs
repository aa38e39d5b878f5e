use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nah_core::eval::{cesm_sample, evaluate_network, finetune_sample};
use nah_core::metrics::{self, cdf_csv, render_summary, success_histogram, summary_table, EvalRecord, Method};
use nah_core::model::{load_weights, read_checkpoint, save_weights, CvUnet};
use nah_core::propagate::PropagatorCache;
use nah_core::sim::{synth_dataset, OodSampler, PlateSampler, RectSampler, SplitPolicy, SynthOptions};
use nah_core::store::{read_dataset, write_dataset};
use nah_core::train::{pretrain_epochs, PretrainState};
use nah_core::{cesm, Dataset, Exec, Sample, Split};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::{CliError, FamilyArg};

const EXEC: Exec = Exec::Parallel;

pub const RECORDS_FILE: &str = "records.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TIMING_JSON: &str = "timing.json";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}

fn out_dir(cfg: &RunConfig, given: Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
    let dir = given.unwrap_or_else(|| cfg.out_root.join(default));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

/// `run.json` (command, arguments, resolved config) and `config.toml`, which
/// reproduces the run when passed back through `--config`.
fn write_run_manifest(dir: &Path, command: &str, args: serde_json::Value, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = json!({
        "tool": concat!("nahlab/", env!("CARGO_PKG_VERSION")),
        "generator": nah_core::GENERATOR_VERSION,
        "command": command,
        "args": args,
        "config": cfg,
    });
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    let path = dir.join("config.toml");
    let text = toml::to_string(cfg).map_err(|e| io_err(&path, e))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.is_dir() {
        return Err(CliError::config(format!("dataset directory {} not found", path.display())));
    }
    Ok(read_dataset(path)?)
}

/// Test-split samples (every sample of an all-test dataset), optionally the
/// first `limit`.
fn eval_samples(ds: &Dataset, limit: Option<usize>) -> Result<Vec<&Sample>, CliError> {
    let mut s = ds.samples_in(Split::Test);
    if let Some(n) = limit {
        if n == 0 || n > s.len() {
            return Err(CliError::config(format!("--samples {n} outside 1..={}", s.len())));
        }
        s.truncate(n);
    }
    if s.is_empty() {
        return Err(CliError::config("dataset has no test samples"));
    }
    Ok(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct Timing {
    id: String,
    method: Method,
    runtime_s: f64,
}

/// Wall-clock times go to their own file so that `records.csv` is
/// reproducible bit for bit.
fn write_outputs(dir: &Path, records: &[EvalRecord]) -> Result<(), CliError> {
    let stripped: Vec<EvalRecord> = records
        .iter()
        .map(|r| EvalRecord {
            runtime_s: None,
            ..r.clone()
        })
        .collect();
    metrics::write_records(dir.join(RECORDS_FILE), &stripped)?;
    let path = dir.join(TIMINGS_FILE);
    let mut w = csv_writer(&path)?;
    for r in records {
        if let Some(t) = r.runtime_s {
            w.serialize(Timing {
                id: r.id.clone(),
                method: r.method,
                runtime_s: t,
            })
            .map_err(|e| io_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

pub fn gen_data(cfg: &RunConfig, family: FamilyArg, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.validate()?;
    let (sampler, count, split, name): (Box<dyn PlateSampler>, usize, SplitPolicy, &str) = match family {
        FamilyArg::Rect => (Box::new(RectSampler::default()), cfg.data.rect_count, SplitPolicy::Standard, "data-rect"),
        FamilyArg::Ood => (Box::new(OodSampler::default()), cfg.data.ood_count, SplitPolicy::AllTest, "data-ood"),
    };
    if count == 0 {
        return Err(CliError::config("--count must be at least 1"));
    }
    let opts = SynthOptions {
        modes_per_plate: cfg.data.modes_per_plate,
        noise_snr_db: cfg.data.noise_snr_db,
        split,
    };
    let ds = synth_dataset(&cfg.geometry, sampler.as_ref(), count, cfg.data.seed, &opts, EXEC).map_err(|e| {
        let mut c = CliError::from(e);
        if c.code == 2 && !c.message.starts_with("invalid configuration") {
            c.code = 3;
        }
        c
    })?;
    let dir = out_dir(cfg, out, name)?;
    write_dataset(&dir, &ds).map_err(|e| CliError {
        code: 3,
        message: e.to_string(),
    })?;
    write_run_manifest(&dir, "gen-data", json!({ "family": format!("{family:?}").to_lowercase() }), cfg)?;
    log::info!("wrote {} samples to {}", ds.len(), dir.display());
    Ok(())
}

pub fn pretrain(cfg: &RunConfig, data: &Path, out: Option<PathBuf>, resume: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    let dir = out_dir(cfg, out, "pretrain")?;
    let (best_path, last_path, state_path) = (dir.join("best.ckpt"), dir.join("last.ckpt"), dir.join("state.json"));

    let (mut net, mut best, mut state) = if resume {
        let text = std::fs::read_to_string(&state_path).map_err(|e| io_err(&state_path, e))?;
        let mut state: PretrainState = serde_json::from_str(&text).map_err(|e| io_err(&state_path, e))?;
        let mut net = CvUnet::init(cfg.model.clone(), cfg.model_seed)?;
        load_weights(&last_path, &mut net)?;
        let mut best = net.clone();
        load_weights(&best_path, &mut best)?;
        let stopped_early = state
            .history
            .records()
            .last()
            .is_some_and(|r| r.events.iter().any(|e| e == "early_stop"));
        if state.finished && !stopped_early && state.epoch < cfg.pretrain.max_epochs {
            state.finished = false;
        }
        (net, best, state)
    } else {
        let net = CvUnet::init(cfg.model.clone(), cfg.model_seed)?;
        let state = PretrainState::new(&net, &cfg.pretrain);
        (net.clone(), net, state)
    };

    while !state.finished && state.epoch < cfg.pretrain.max_epochs {
        pretrain_epochs(&mut net, &mut best, &ds, &cfg.pretrain, &mut state, 1, EXEC)?;
        save_weights(&last_path, &net, None)?;
        save_weights(&best_path, &best, None)?;
        let text = serde_json::to_string(&state).map_err(|e| io_err(&state_path, e))?;
        write_text(&state_path, &text)?;
    }
    if !best_path.exists() {
        save_weights(&last_path, &net, None)?;
        save_weights(&best_path, &best, None)?;
    }
    state.history.save_csv(dir.join("history.csv"))?;
    let wall: f64 = state.history.records().iter().map(|r| r.wall_time).sum();
    write_text(&dir.join(TIMING_JSON), &json!({ "wall_time_s": wall }).to_string())?;
    write_run_manifest(&dir, "pretrain", json!({ "data": data, "resume": resume }), cfg)?;
    log::info!(
        "pre-training stopped after {} epochs; best epoch {:?}, val {:?}",
        state.epoch,
        state.best_epoch,
        state.best_val
    );
    Ok(())
}

pub fn finetune(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    data: &Path,
    out: Option<PathBuf>,
    samples: Option<usize>,
) -> Result<(), CliError> {
    cfg.validate()?;
    let (init, method, name) = match checkpoint {
        Some(p) => (read_checkpoint(p)?.0, Method::Finetuned, "finetune"),
        None => (
            CvUnet::init(cfg.model.clone(), cfg.model_seed)?,
            Method::FinetunedRandomInit,
            "finetune-random-init",
        ),
    };
    let ds = load_dataset(data)?;
    let chosen = eval_samples(&ds, samples)?;
    let dir = out_dir(cfg, out, name)?;
    let cache = PropagatorCache::new();
    let runs = EXEC.map(&chosen, |s| {
        let run = finetune_sample(&init, s, &ds.config, &cfg.finetune, &cache, method, cfg.ncc_mode)?;
        save_weights(dir.join(format!("{}.ckpt", s.id)), &run.outcome.net, Some(run.outcome.scale))?;
        run.outcome.history().save_csv(dir.join(format!("{}.loss.csv", s.id)))?;
        Ok::<_, nah_core::NahError>(run.record)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in chosen.iter().zip(runs) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::error!("{}: {e}", s.id);
                failures.push(format!("{}: {e}", s.id));
            }
        }
    }
    write_outputs(&dir, &records)?;
    write_run_manifest(
        &dir,
        "finetune",
        json!({ "checkpoint": checkpoint, "data": data, "samples": chosen.len(), "failures": failures }),
        cfg,
    )?;
    if !failures.is_empty() {
        return Err(CliError::numeric(format!(
            "{} of {} samples failed:\n  {}",
            failures.len(),
            chosen.len(),
            failures.join("\n  ")
        )));
    }
    Ok(())
}

pub fn cesm(cfg: &RunConfig, data: &Path, out: Option<PathBuf>, samples: Option<usize>) -> Result<(), CliError> {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    let chosen = eval_samples(&ds, samples)?;
    let dir = out_dir(cfg, out, "cesm")?;
    let hash = ds.config.geometry_hash();
    let mut records = Vec::new();
    for s in &chosen {
        let (r, rec) = cesm_sample(s, &ds.config, &cfg.esm, cfg.ncc_mode, EXEC)?;
        cesm::export_result(&dir, &s.id, &r, &hash)?;
        records.push(rec);
    }
    write_outputs(&dir, &records)?;
    write_run_manifest(&dir, "cesm", json!({ "data": data, "samples": chosen.len() }), cfg)
}

fn record_key(r: &EvalRecord) -> (Method, String) {
    (r.method, r.id.clone())
}

pub fn eval(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    data: Option<&Path>,
    samples: Option<usize>,
    merge: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut timings: Vec<Timing> = Vec::new();
    for p in merge {
        records.extend(metrics::read_records(p)?);
    }
    if let Some(ckpt) = checkpoint {
        let Some(data) = data else {
            return Err(CliError::config("--checkpoint needs --data"));
        };
        let (net, _) = read_checkpoint(ckpt)?;
        let ds = load_dataset(data)?;
        let chosen = eval_samples(&ds, samples)?;
        let recs = evaluate_network(&net, &chosen, Method::Pretrained, cfg.ncc_mode, EXEC)?;
        let timing = ckpt.parent().map(|d| d.join(TIMING_JSON)).filter(|p| p.exists());
        if let Some(tp) = timing {
            let text = std::fs::read_to_string(&tp).map_err(|e| io_err(&tp, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(&tp, e))?;
            if let Some(t) = v["wall_time_s"].as_f64() {
                timings.extend(recs.iter().map(|r| Timing {
                    id: r.id.clone(),
                    method: r.method,
                    runtime_s: t,
                }));
            }
        }
        records.extend(recs);
    }
    if records.is_empty() {
        return Err(CliError::config("nothing to evaluate: pass --checkpoint/--data or --records"));
    }
    records.sort_by_key(record_key);
    if let Some(w) = records.windows(2).find(|w| record_key(&w[0]) == record_key(&w[1])) {
        return Err(CliError::config(format!("duplicate record for {} ({})", w[0].id, w[0].method.key())));
    }
    metrics::write_records(out, &records)?;
    if !timings.is_empty() {
        let tp = out.with_file_name(TIMINGS_FILE);
        let mut w = csv_writer(&tp)?;
        for t in &timings {
            w.serialize(t).map_err(|e| io_err(&tp, e))?;
        }
        w.flush().map_err(|e| io_err(&tp, e))?;
    }
    log::info!("{} records written to {}", records.len(), out.display());
    Ok(())
}

fn read_timings(path: &Path) -> Result<Vec<Timing>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| io_err(path, e))).collect()
}

pub fn report(records: &[PathBuf], timings: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut all = Vec::new();
    for p in records {
        all.extend(metrics::read_records(p)?);
    }
    let mut times: BTreeMap<(Method, String), f64> = BTreeMap::new();
    for p in timings {
        for t in read_timings(p)? {
            times.insert((t.method, t.id), t.runtime_s);
        }
    }
    for r in &mut all {
        if r.runtime_s.is_none() {
            r.runtime_s = times.get(&record_key(r)).copied();
        }
    }
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let table = render_summary(&summary_table(&all));
    write_text(&out.join("summary.md"), &table)?;
    if !all.is_empty() {
        write_text(&out.join("cdf.csv"), &cdf_csv(&all)?)?;
    }
    write_text(&out.join("histogram.csv"), &success_histogram(&all).to_csv())?;
    print!("{table}");
    Ok(())
}
