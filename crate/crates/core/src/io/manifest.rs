use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::{read_wav, wav_info};
use crate::ambisonics::{channel_count, AmbisonicClip, Direction, Normalization};
use crate::baselines::HrirSet;
use crate::error::{Error, Result};
use crate::training::ClipPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub segment_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub ambisonic_wav_path: PathBuf,
    pub binaural_wav_path: PathBuf,
    pub split: Split,
}

fn default_normalization() -> Normalization {
    Normalization::Sn3d
}

/// Paired ambisonic/binaural recordings split into train and eval sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_rate: u32,
    pub ambisonic_order: usize,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Every problem found, one message each; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.sample_rate == 0 {
            v.push("sample_rate must be positive".to_string());
        }
        if self.entries.is_empty() {
            v.push("manifest has no entries".to_string());
        }
        let mut ids: HashMap<&str, Split> = HashMap::new();
        let mut files: HashMap<PathBuf, (&str, Split)> = HashMap::new();
        let expected = channel_count(self.ambisonic_order);
        for e in &self.entries {
            let id = e.segment_id.as_str();
            if id.is_empty() {
                v.push("entry with empty segment_id".to_string());
            }
            if let Some(prev) = ids.insert(id, e.split) {
                if prev != e.split {
                    v.push(format!("segment {id}: appears in both train and eval splits"));
                } else {
                    v.push(format!("segment {id}: duplicate segment_id"));
                }
            }
            for (kind, rel, channels) in [
                ("ambisonic", &e.ambisonic_wav_path, expected),
                ("binaural", &e.binaural_wav_path, 2),
            ] {
                let path = self.resolve(rel);
                if let Some((other, split)) = files.insert(path.clone(), (id, e.split)) {
                    if split != e.split {
                        v.push(format!(
                            "segment {id}: {} is also used by {other} in the other split",
                            path.display()
                        ));
                    } else {
                        v.push(format!("segment {id}: {} is also used by {other}", path.display()));
                    }
                }
                if !path.exists() {
                    v.push(format!("segment {id}: {kind} file {} does not exist", path.display()));
                    continue;
                }
                match wav_info(&path) {
                    Err(err) => v.push(format!("segment {id}: {kind} file unreadable: {err}")),
                    Ok(info) => {
                        if info.channels != channels {
                            v.push(format!(
                                "segment {id}: {kind} file has {} channels, expected {channels}",
                                info.channels
                            ));
                        }
                        if info.sample_rate != self.sample_rate {
                            v.push(format!(
                                "segment {id}: {kind} file is {} Hz, manifest says {} Hz",
                                info.sample_rate, self.sample_rate
                            ));
                        }
                    }
                }
            }
            let (a, b) = (self.resolve(&e.ambisonic_wav_path), self.resolve(&e.binaural_wav_path));
            if let (Ok(ia), Ok(ib)) = (wav_info(&a), wav_info(&b)) {
                if ia.frames != ib.frames {
                    v.push(format!(
                        "segment {id}: ambisonic has {} samples, binaural has {}",
                        ia.frames, ib.frames
                    ));
                }
            }
        }
        v
    }

    pub fn from_json(text: &str, base_dir: &Path) -> std::result::Result<Self, serde_json::Error> {
        let mut m: Self = serde_json::from_str(text)?;
        m.base_dir = base_dir.to_path_buf();
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Reads every pair of one split, in manifest order.
    pub fn load_pairs(&self, split: Split) -> Result<Vec<ClipPair>> {
        self.entries_in(split)
            .map(|e| {
                let wrap = |err: Error| Error::Clip {
                    id: e.segment_id.clone(),
                    source: Box::new(err),
                };
                let amb = read_wav(&self.resolve(&e.ambisonic_wav_path)).map_err(wrap)?;
                let bin = read_wav(&self.resolve(&e.binaural_wav_path)).map_err(wrap)?;
                let clip = AmbisonicClip::new(amb, self.ambisonic_order, self.normalization).map_err(wrap)?;
                ClipPair::new(e.segment_id.clone(), clip, bin).map_err(wrap)
            })
            .collect()
    }
}

/// Parses and validates a dataset manifest; the error lists every violation.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut m: DatasetManifest = read_json(path)?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let violations = m.violations();
    if !violations.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            violations,
        });
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrirEntry {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Two-channel (left, right) WAV.
    pub wav_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrirManifest {
    pub sample_rate: u32,
    pub entries: Vec<HrirEntry>,
}

/// Loads an HRIR set. Weights must be given for all entries or none; with
/// none, every direction gets `4pi / N`.
pub fn load_hrir_set(path: &Path) -> Result<HrirSet> {
    let m: HrirManifest = read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut violations = Vec::new();
    let weighted = m.entries.iter().filter(|e| e.weight.is_some()).count();
    if weighted != 0 && weighted != m.entries.len() {
        violations.push(format!(
            "{weighted} of {} entries have weights; give all or none",
            m.entries.len()
        ));
    }
    if m.entries.is_empty() {
        violations.push("no entries".into());
    }
    let mut directions = Vec::new();
    let mut responses = Vec::new();
    let mut taps = None;
    for (i, e) in m.entries.iter().enumerate() {
        match Direction::from_degrees(e.elevation_deg, e.azimuth_deg) {
            Ok(d) => directions.push(d),
            Err(err) => violations.push(format!("entry {i}: {err}")),
        }
        let wav = resolve(&base, &e.wav_path);
        match read_wav(&wav) {
            Err(err) => violations.push(format!("entry {i}: {err}")),
            Ok(sig) => {
                if sig.num_channels() != 2 {
                    violations.push(format!("entry {i}: {} channels, expected 2", sig.num_channels()));
                } else if sig.sample_rate() != m.sample_rate {
                    violations.push(format!(
                        "entry {i}: {} Hz, manifest says {} Hz",
                        sig.sample_rate(),
                        m.sample_rate
                    ));
                } else if *taps.get_or_insert(sig.len()) != sig.len() {
                    violations.push(format!("entry {i}: {} taps, expected {}", sig.len(), taps.unwrap_or(0)));
                } else {
                    let mut ch = sig.into_channels();
                    let right = ch.pop().expect("two channels");
                    let left = ch.pop().expect("two channels");
                    responses.push([left, right]);
                }
            }
        }
    }
    if !violations.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            violations,
        });
    }
    let weights = (weighted > 0).then(|| m.entries.iter().map(|e| e.weight.expect("checked")).collect());
    HrirSet::new(directions, responses, m.sample_rate, weights)
}

/// Split assignment for [`make_manifest`].
#[derive(Debug, Clone, Default)]
pub struct SplitRule {
    /// Ids placed in the eval split.
    pub eval_ids: Vec<String>,
    /// Additionally, the last `eval_count` ids in sorted order go to eval.
    pub eval_count: usize,
}

pub const AMBI_SUFFIX: &str = "_ambi.wav";
pub const BINAURAL_SUFFIX: &str = "_binaural.wav";

/// Builds a manifest from a directory of `<id>_ambi.wav` / `<id>_binaural.wav`
/// pairs, sorted by id, with paths relative to `dir`. Sample rate and order
/// are read from the first ambisonic file.
pub fn make_manifest(dir: &Path, rule: &SplitRule) -> Result<DatasetManifest> {
    let mut pairs: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(AMBI_SUFFIX) {
            pairs.entry(id.to_string()).or_default().0 = true;
        } else if let Some(id) = name.strip_suffix(BINAURAL_SUFFIX) {
            pairs.entry(id.to_string()).or_default().1 = true;
        }
    }
    let mut violations: Vec<String> = pairs
        .iter()
        .filter_map(|(id, (a, b))| match (a, b) {
            (true, false) => Some(format!("{id}: missing {id}{BINAURAL_SUFFIX}")),
            (false, true) => Some(format!("{id}: missing {id}{AMBI_SUFFIX}")),
            _ => None,
        })
        .collect();
    for id in &rule.eval_ids {
        if !pairs.contains_key(id) {
            violations.push(format!("eval id {id} not found"));
        }
    }
    if pairs.is_empty() {
        violations.push(format!("no *{AMBI_SUFFIX} / *{BINAURAL_SUFFIX} pairs found"));
    }
    if !violations.is_empty() {
        return Err(Error::Manifest {
            path: dir.to_path_buf(),
            violations,
        });
    }
    let ids: Vec<&String> = pairs.keys().collect();
    let first = wav_info(&dir.join(format!("{}{AMBI_SUFFIX}", ids[0])))?;
    let order = crate::ambisonics::order_for_channels(first.channels).ok_or_else(|| Error::Manifest {
        path: dir.to_path_buf(),
        violations: vec![format!("{} channels is not an ambisonic layout", first.channels)],
    })?;
    let tail_start = ids.len().saturating_sub(rule.eval_count);
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| ManifestEntry {
            segment_id: (*id).clone(),
            ambisonic_wav_path: PathBuf::from(format!("{id}{AMBI_SUFFIX}")),
            binaural_wav_path: PathBuf::from(format!("{id}{BINAURAL_SUFFIX}")),
            split: if i >= tail_start || rule.eval_ids.contains(id) {
                Split::Eval
            } else {
                Split::Train
            },
        })
        .collect();
    Ok(DatasetManifest {
        sample_rate: first.sample_rate,
        ambisonic_order: order,
        normalization: Normalization::Sn3d,
        entries,
        base_dir: dir.to_path_buf(),
    })
}
