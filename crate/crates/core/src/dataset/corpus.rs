use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tev_numerics::derive_seed;

use super::generator::{generate, ScenarioConfig};
use super::{EventClass, NUM_CLASSES};
use crate::error::{Result, TevError};
use crate::field::{TactileSequence, CHANNELS, GRID_COLS, GRID_ROWS, RESAMPLE_STRIDE, SAMPLE_RATE_HZ, WINDOW_S};
use crate::parallel::parallel_map;

/// Sampling metadata shared by every sequence of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub f_s: f64,
    pub t_w: f64,
    pub stride: usize,
    #[serde(rename = "N_h")]
    pub rows: usize,
    #[serde(rename = "N_w")]
    pub cols: usize,
    #[serde(rename = "C_h")]
    pub channels: usize,
    pub classes: Vec<String>,
    /// Largest absolute displacement in the corpus; the SSIM data range.
    pub data_range: f64,
}

impl Default for CorpusHeader {
    fn default() -> Self {
        CorpusHeader {
            f_s: SAMPLE_RATE_HZ,
            t_w: WINDOW_S,
            stride: RESAMPLE_STRIDE,
            rows: GRID_ROWS,
            cols: GRID_COLS,
            channels: CHANNELS,
            classes: EventClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            data_range: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub sequences: Vec<TactileSequence>,
}

impl Corpus {
    /// Wraps sequences under the default header, measuring the data range.
    pub fn from_sequences(sequences: Vec<TactileSequence>) -> Self {
        let data_range = sequences
            .iter()
            .flat_map(|s| s.frames.iter())
            .map(|f| f.max_abs() as f64)
            .fold(0.0, f64::max);
        Corpus {
            header: CorpusHeader {
                data_range,
                ..CorpusHeader::default()
            },
            sequences,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in &self.sequences {
            if let Some(c) = s.label {
                counts[c.index()] += 1;
            }
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&TactileSequence> {
        indices.iter().map(|&i| &self.sequences[i]).collect()
    }

    /// Keeps only sequences whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[EventClass]) -> Corpus {
        Corpus {
            header: self.header.clone(),
            sequences: self
                .sequences
                .iter()
                .filter(|s| s.label.is_some_and(|c| classes.contains(&c)))
                .cloned()
                .collect(),
        }
    }
}

/// `n_per_class` randomized sequences of every class, class-major order.
/// Each sequence owns a seed derived from `(seed, class, index)`, so the
/// result does not depend on `jobs`.
pub fn build_corpus(n_per_class: usize, seed: u64, noise_mm: f64, jobs: usize) -> Result<Corpus> {
    if n_per_class == 0 {
        return Err(TevError::Config("n_per_class must be at least 1".into()));
    }
    let configs: Vec<ScenarioConfig> = EventClass::ALL
        .iter()
        .flat_map(|&class| {
            (0..n_per_class).map(move |i| {
                let stream = (class.index() as u64) << 32 | i as u64;
                ScenarioConfig::random(class, noise_mm, derive_seed(seed, stream))
            })
        })
        .collect();
    let sequences = parallel_map(&configs, jobs.max(1), generate)?;
    Ok(Corpus::from_sequences(sequences))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub validation: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 9,
            validation: 1,
        }
    }
}

/// Corpus indices of each partition, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

fn membership_key(seed: u64, seq: &TactileSequence) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([seq.label.map_or(u8::MAX, |c| c.index() as u8)]);
    for f in &seq.frames {
        for v in f.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Stratified split. Within each class, sequences are ranked by a hash of
/// their content and `seed`; the first `round(n · v / (t + v))` go to
/// validation. Membership therefore does not depend on corpus order.
pub fn split(corpus: &Corpus, ratio: SplitRatio, seed: u64) -> Result<Split> {
    if ratio.validation == 0 || ratio.train == 0 {
        return Err(TevError::Config(format!(
            "split ratio {}:{} leaves a partition empty",
            ratio.train, ratio.validation
        )));
    }
    if corpus.is_empty() {
        return Err(TevError::Config("cannot split an empty corpus".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in corpus.sequences.iter().enumerate() {
        let class = s
            .label
            .ok_or_else(|| TevError::Stratification(format!("sequence {i} is unlabelled")))?;
        by_class[class.index()].push(i);
    }
    let total = (ratio.train + ratio.validation) as f64;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(TevError::Stratification(format!(
                "class {} has {} member, need at least 2",
                EventClass::ALL[c],
                members.len()
            )));
        }
        let n = members.len();
        let n_val = ((n as f64 * ratio.validation as f64 / total).round() as usize).clamp(1, n - 1);
        let mut ranked: Vec<([u8; 32], usize)> = members
            .iter()
            .map(|&i| (membership_key(seed, &corpus.sequences[i]), i))
            .collect();
        ranked.sort();
        validation.extend(ranked[..n_val].iter().map(|&(_, i)| i));
        train.extend(ranked[n_val..].iter().map(|&(_, i)| i));
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(Split { train, validation })
}
