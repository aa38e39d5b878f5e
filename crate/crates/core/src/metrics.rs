//! Reconstruction metrics and report tables.
//!
//! CSV schemas:
//!
//! * records: `id,family,mode_index,frequency,method,nmse,ncc,runtime_s`
//! * CDF points: `method,metric,x,p`
//! * success histogram: `method,mode_index,count`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NahError, Result};
use crate::field::{BinaryMask, ComplexField};
use crate::sample::{normalize_field, Family};

/// NMSE never reports below this many dB.
pub const NMSE_FLOOR_DB: f64 = -120.0;
/// A reconstruction counts as successful above this NCC ...
pub const SUCCESS_NCC: f64 = 0.75;
/// ... and below this NMSE (dB).
pub const SUCCESS_NMSE_DB: f64 = -3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pretrained,
    Finetuned,
    FinetunedRandomInit,
    Cesm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pretrained, Method::Finetuned, Method::FinetunedRandomInit, Method::Cesm];

    pub fn label(self) -> &'static str {
        match self {
            Method::Pretrained => "pre-trained",
            Method::Finetuned => "fine-tuned",
            Method::FinetunedRandomInit => "fine-tuned (random init.)",
            Method::Cesm => "C-ESM",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Pretrained => "pretrained",
            Method::Finetuned => "finetuned",
            Method::FinetunedRandomInit => "finetuned_random_init",
            Method::Cesm => "cesm",
        }
    }

    /// Pre-training cost is paid once; the others are paid per sample.
    fn runtime_is_total(self) -> bool {
        self == Method::Pretrained
    }
}

impl std::str::FromStr for Method {
    type Err = NahError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| NahError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub family: Family,
    pub mode_index: usize,
    pub frequency: f64,
    pub method: Method,
    /// dB, floored at [`NMSE_FLOOR_DB`].
    pub nmse: f64,
    pub ncc: f64,
    /// Wall time attributed to this record (s).
    pub runtime_s: Option<f64>,
}

impl EvalRecord {
    pub fn is_success(&self) -> bool {
        self.ncc > SUCCESS_NCC && self.nmse < SUCCESS_NMSE_DB
    }
}

/// How the complex correlation is reduced to a real score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NccMode {
    /// Phase-invariant, in `[0, 1]`.
    #[default]
    Modulus,
    /// Signed, in `[-1, 1]`.
    RealPart,
}

fn masked_pairs<'a>(
    xhat: &'a ComplexField,
    x: &'a ComplexField,
    mask: Option<&'a BinaryMask>,
) -> Result<impl Iterator<Item = (Complex64, Complex64)> + 'a> {
    if xhat.shape() != x.shape() {
        return Err(NahError::shape(x.len(), xhat.len()));
    }
    if let Some(m) = mask {
        m.check_shape(x.rows(), x.cols())?;
    }
    Ok(xhat
        .values()
        .iter()
        .zip(x.values())
        .enumerate()
        .filter(move |(i, _)| mask.is_none_or(|m| m.bits()[*i]))
        .map(|(_, (a, b))| (*a, *b)))
}

/// `10·log10(‖x̂ − x‖² / ‖x‖²)` over the masked entries.
pub fn nmse(xhat: &ComplexField, x: &ComplexField, mask: Option<&BinaryMask>) -> Result<f64> {
    let (mut err, mut refn) = (0.0, 0.0);
    for (a, b) in masked_pairs(xhat, x, mask)? {
        err += (a - b).norm_sqr();
        refn += b.norm_sqr();
    }
    if refn == 0.0 {
        return Err(NahError::ZeroReference);
    }
    Ok((10.0 * (err / refn).log10()).max(NMSE_FLOOR_DB))
}

/// `|x̂ᴴx| / (‖x̂‖·‖x‖)` over the masked entries.
pub fn ncc(xhat: &ComplexField, x: &ComplexField, mask: Option<&BinaryMask>) -> Result<f64> {
    ncc_with(xhat, x, mask, NccMode::Modulus)
}

pub fn ncc_with(xhat: &ComplexField, x: &ComplexField, mask: Option<&BinaryMask>, mode: NccMode) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for (a, b) in masked_pairs(xhat, x, mask)? {
        dot += a.conj() * b;
        na += a.norm_sqr();
        nb += b.norm_sqr();
    }
    if na == 0.0 || nb == 0.0 {
        return Err(NahError::ZeroReference);
    }
    let r = dot / (na.sqrt() * nb.sqrt());
    Ok(match mode {
        NccMode::Modulus => r.norm().min(1.0),
        NccMode::RealPart => r.re.clamp(-1.0, 1.0),
    })
}

/// Restrict to the mask and scale to unit peak modulus there.
pub fn normalize_on_mask(f: &ComplexField, mask: Option<&BinaryMask>) -> Result<ComplexField> {
    let masked = match mask {
        Some(m) => f.masked(m)?,
        None => f.clone(),
    };
    normalize_field(&masked).map(|(n, _)| n).map_err(|_| NahError::ZeroReference)
}

/// NMSE and NCC after normalizing prediction and truth to unit peak modulus
/// on the mask. A prediction that vanishes on the mask scores 0 dB / 0 NCC.
pub fn score(pred: &ComplexField, truth: &ComplexField, mask: Option<&BinaryMask>, mode: NccMode) -> Result<(f64, f64)> {
    let t = normalize_on_mask(truth, mask)?;
    let p = match normalize_on_mask(pred, mask) {
        Ok(p) => p,
        Err(_) => return Ok((0.0, 0.0)),
    };
    Ok((nmse(&p, &t, mask)?, ncc_with(&p, &t, mask, mode)?))
}

/// Empirical cumulative distribution as `(x, P)` points, one per distinct
/// value. Ascending gives `P(X ≤ x)`; descending accumulates from the highest
/// value down, giving `P(X ≥ x)`.
pub fn cumulative(values: &[f64], descending: bool) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(NahError::EmptyInput);
    }
    let mut v = values.to_vec();
    if descending {
        v.sort_by(|a, b| b.total_cmp(a));
    } else {
        v.sort_by(f64::total_cmp);
    }
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = p,
            _ => out.push((*x, p)),
        }
    }
    Ok(out)
}

/// Successful records per mode index, per method present in `records`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuccessHistogram {
    /// Mode indices `0..=max` over all records.
    pub modes: Vec<usize>,
    pub counts: BTreeMap<Method, Vec<usize>>,
}

impl SuccessHistogram {
    pub fn total(&self, method: Method) -> usize {
        self.counts.get(&method).map_or(0, |c| c.iter().sum())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,mode_index,count\n");
        for (m, counts) in &self.counts {
            for (mode, c) in self.modes.iter().zip(counts) {
                let _ = writeln!(s, "{},{},{}", m.key(), mode, c);
            }
        }
        s
    }
}

pub fn success_histogram(records: &[EvalRecord]) -> SuccessHistogram {
    let Some(max_mode) = records.iter().map(|r| r.mode_index).max() else {
        return SuccessHistogram::default();
    };
    let mut counts: BTreeMap<Method, Vec<usize>> = BTreeMap::new();
    for r in records {
        let bins = counts.entry(r.method).or_insert_with(|| vec![0; max_mode + 1]);
        if r.is_success() {
            bins[r.mode_index] += 1;
        }
    }
    SuccessHistogram {
        modes: (0..=max_mode).collect(),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub count: usize,
    pub mean_nmse: f64,
    pub mean_ncc: f64,
    pub mean_runtime_s: Option<f64>,
    pub successes: usize,
}

/// Per-method means in [`Method::ALL`] order.
pub fn summary_table(records: &[EvalRecord]) -> Vec<SummaryRow> {
    Method::ALL
        .into_iter()
        .filter_map(|method| {
            let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.method == method).collect();
            if rs.is_empty() {
                return None;
            }
            let n = rs.len() as f64;
            let times: Vec<f64> = rs.iter().filter_map(|r| r.runtime_s).collect();
            Some(SummaryRow {
                method,
                count: rs.len(),
                mean_nmse: rs.iter().map(|r| r.nmse).sum::<f64>() / n,
                mean_ncc: rs.iter().map(|r| r.ncc).sum::<f64>() / n,
                mean_runtime_s: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
                successes: rs.iter().filter(|r| r.is_success()).count(),
            })
        })
        .collect()
}

pub fn format_duration(seconds: f64) -> String {
    if seconds >= 3600.0 {
        format!("{:.2} h", seconds / 3600.0)
    } else if seconds >= 60.0 {
        format!("{:.2} min", seconds / 60.0)
    } else {
        format!("{seconds:.2} s")
    }
}

/// Markdown table: method, mean NMSE (dB), mean NCC (%), runtime.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::from("| model | NMSE (dB) | NCC | runtime |\n|---|---|---|---|\n");
    for r in rows {
        let runtime = match r.mean_runtime_s {
            None => "-".to_string(),
            Some(t) if r.method.runtime_is_total() => format_duration(t),
            Some(t) => format!("{} per sample", format_duration(t)),
        };
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2}% | {} |",
            r.method.label(),
            r.mean_nmse,
            100.0 * r.mean_ncc,
            runtime
        );
    }
    s
}

/// NCC ascending and NMSE descending CDFs for every method present.
pub fn cdf_csv(records: &[EvalRecord]) -> Result<String> {
    let mut s = String::from("method,metric,x,p\n");
    for m in Method::ALL {
        let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.method == m).collect();
        if rs.is_empty() {
            continue;
        }
        let ncc: Vec<f64> = rs.iter().map(|r| r.ncc).collect();
        let nmse: Vec<f64> = rs.iter().map(|r| r.nmse).collect();
        for (x, p) in cumulative(&ncc, false)? {
            let _ = writeln!(s, "{},ncc,{x},{p}", m.key());
        }
        for (x, p) in cumulative(&nmse, true)? {
            let _ = writeln!(s, "{},nmse,{x},{p}", m.key());
        }
    }
    Ok(s)
}

pub fn write_records(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| NahError::io(path, e))?;
    write_records_to(file, records)
}

pub fn write_records_to<W: Write>(w: W, records: &[EvalRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r).map_err(|e| NahError::Config(format!("csv: {e}")))?;
    }
    wtr.flush().map_err(|e| NahError::Config(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| NahError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| NahError::InconsistentManifest(format!("{}: {e}", path.display())))?;
    let want = ["id", "family", "mode_index", "frequency", "method", "nmse", "ncc", "runtime_s"];
    if headers.iter().ne(want) {
        return Err(NahError::InconsistentManifest(format!(
            "{}: unexpected record columns {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| NahError::InconsistentManifest(format!("{}: {e}", path.display()))))
        .collect()
}
