//! Dataset directory format.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<id>.v.naht     normalized source velocity
//! <dir>/<id>.p.naht     normalized hologram pressure
//! <dir>/<id>.mask       source-grid plate mask
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::NahConfig;
use crate::error::{NahError, Result};
use crate::field::{BinaryMask, Quantity};
use crate::naht;
use crate::sample::{Dataset, Family, Provenance, Sample, Split};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT: &str = "nah-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub frequency: f64,
    pub mode_index: usize,
    pub family: Family,
    pub split: Option<Split>,
    pub norm_p: f64,
    pub norm_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: NahConfig,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub samples: Vec<SampleEntry>,
}

fn velocity_file(id: &str) -> String {
    format!("{id}.v.naht")
}

fn pressure_file(id: &str) -> String {
    format!("{id}.p.naht")
}

fn mask_file(id: &str) -> String {
    format!("{id}.mask")
}

pub fn manifest_of(ds: &Dataset) -> Manifest {
    Manifest {
        format: FORMAT.to_string(),
        config: ds.config.clone(),
        provenance: ds.provenance.clone(),
        samples: ds
            .samples
            .iter()
            .map(|s| SampleEntry {
                id: s.id.clone(),
                frequency: s.frequency,
                mode_index: s.mode_index,
                family: s.family,
                split: ds.split_of(&s.id),
                norm_p: s.norm_p,
                norm_v: s.norm_v,
            })
            .collect(),
    }
}

pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| NahError::io(dir, e))?;
    let hash = ds.config.geometry_hash();
    for s in &ds.samples {
        naht::write_tensor(dir.join(velocity_file(&s.id)), &s.v_src, &hash)?;
        naht::write_tensor(dir.join(pressure_file(&s.id)), &s.p_holo, &hash)?;
        let mpath = dir.join(mask_file(&s.id));
        std::fs::write(&mpath, s.mask.to_text()).map_err(|e| NahError::io(&mpath, e))?;
    }
    let manifest = manifest_of(ds);
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| NahError::io(&path, e))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| NahError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(NahError::InconsistentManifest(format!(
            "unknown format {:?}",
            manifest.format
        )));
    }
    Ok(manifest)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    manifest.config.validate()?;
    let hash = manifest.config.geometry_hash();

    let mut seen = BTreeMap::new();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        if seen.insert(entry.id.clone(), ()).is_some() {
            return Err(NahError::InconsistentManifest(format!("duplicate id {}", entry.id)));
        }
        let sample = load_sample(dir, entry, &manifest.config, &hash).map_err(|e| match e {
            NahError::Sample { .. } => e,
            other => NahError::Sample {
                id: entry.id.clone(),
                source: Box::new(other),
            },
        })?;
        samples.push(sample);
    }
    let split = manifest
        .samples
        .iter()
        .filter_map(|e| e.split.map(|s| (e.id.clone(), s)))
        .collect();
    Ok(Dataset {
        config: manifest.config,
        samples,
        split,
        provenance: manifest.provenance,
    })
}

fn load_sample(dir: &Path, e: &SampleEntry, config: &NahConfig, hash: &[u8; 32]) -> Result<Sample> {
    let (v_src, hv) = naht::read_tensor_with_hash(dir.join(velocity_file(&e.id)))?;
    let (p_holo, hp) = naht::read_tensor_with_hash(dir.join(pressure_file(&e.id)))?;
    if &hv != hash || &hp != hash {
        return Err(NahError::InconsistentManifest(format!(
            "{}: tensor geometry hash differs from manifest config",
            e.id
        )));
    }
    if v_src.quantity() != Quantity::NormalVelocity || p_holo.quantity() != Quantity::Pressure {
        return Err(NahError::InconsistentManifest(format!("{}: quantity tags swapped", e.id)));
    }
    let mpath = dir.join(mask_file(&e.id));
    let mask_text = std::fs::read_to_string(&mpath).map_err(|err| NahError::io(&mpath, err))?;
    let mask = BinaryMask::from_text(&mask_text)?;
    let sample = Sample {
        id: e.id.clone(),
        frequency: e.frequency,
        mode_index: e.mode_index,
        v_src,
        p_holo,
        mask,
        norm_p: e.norm_p,
        norm_v: e.norm_v,
        family: e.family,
    };
    sample.validate(config)?;
    Ok(sample)
}
