//! Epoch planners for the three batch-composition schemes.
//!
//! * **STSB** (sequential in time, sequential in batch): each batch takes the
//!   next sequence pair from every map in a fixed (lexicographic) order.
//!   Exhausted maps are replaced by a randomly chosen map with pairs left.
//! * **STRB** (sequential in time, random in batch): sequence pairs from all
//!   maps are pooled and shuffled; both frames of a pair stay adjacent.
//! * **RTRB** (random in time, random in batch): individual frames are
//!   pooled and shuffled.
//!
//! A sequence pair is two positionally consecutive frames of one map,
//! taken without overlap: `(f0, f1), (f2, f3), ...`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MapDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleRef {
    pub map_name: String,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePair {
    pub first: SampleRef,
    pub second: SampleRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    #[serde(alias = "stsb")]
    Stsb,
    #[serde(alias = "strb")]
    Strb,
    #[serde(alias = "rtrb")]
    Rtrb,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Stsb, Scheme::Strb, Scheme::Rtrb];

    pub fn uses_pairs(self) -> bool {
        matches!(self, Scheme::Stsb | Scheme::Strb)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Stsb => "STSB",
            Scheme::Strb => "STRB",
            Scheme::Rtrb => "RTRB",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stsb" => Ok(Scheme::Stsb),
            "strb" => Ok(Scheme::Strb),
            "rtrb" => Ok(Scheme::Rtrb),
            _ => Err(Error::Config(format!("unknown batching scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub batch_size: usize,
    pub seed: u64,
    /// STRB ablation: overlapping pairs `(f0,f1), (f1,f2), ...`. Frames then
    /// appear twice per epoch.
    #[serde(default)]
    pub sliding_pairs: bool,
}

impl SchemeConfig {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        Self {
            batch_size,
            seed,
            sliding_pairs: false,
        }
    }

    fn validate(&self, scheme: Scheme) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if scheme.uses_pairs() && self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "{scheme} needs an even batch size, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::new(10, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub scheme: Scheme,
    pub seed: u64,
    pub batches: Vec<Vec<SampleRef>>,
}

fn sample(d: &MapDataset, pos: usize) -> SampleRef {
    SampleRef {
        map_name: d.map_name.clone(),
        frame_index: d.pairs[pos].frame_index,
    }
}

/// Non-overlapping consecutive pairs by position; an odd trailing frame is dropped.
pub fn enumerate_sequence_pairs(d: &MapDataset) -> Vec<SequencePair> {
    if d.pairs.len() % 2 == 1 {
        log::warn!(
            "{}: odd frame count, frame {} left unpaired",
            d.map_name,
            d.pairs[d.pairs.len() - 1].frame_index
        );
    }
    (0..d.pairs.len() / 2)
        .map(|i| SequencePair {
            first: sample(d, 2 * i),
            second: sample(d, 2 * i + 1),
        })
        .collect()
}

/// Overlapping consecutive pairs, used by the sliding-window STRB ablation.
pub fn enumerate_sliding_pairs(d: &MapDataset) -> Vec<SequencePair> {
    (1..d.pairs.len())
        .map(|i| SequencePair {
            first: sample(d, i - 1),
            second: sample(d, i),
        })
        .collect()
}

fn sorted_maps(datasets: &[MapDataset]) -> Vec<&MapDataset> {
    let mut maps: Vec<&MapDataset> = datasets.iter().collect();
    maps.sort_by(|a, b| a.map_name.cmp(&b.map_name));
    maps
}

fn flatten_pairs(pairs: Vec<SequencePair>, pairs_per_batch: usize) -> Vec<Vec<SampleRef>> {
    pairs
        .chunks(pairs_per_batch)
        .map(|chunk| {
            chunk
                .iter()
                .flat_map(|p| [p.first.clone(), p.second.clone()])
                .collect()
        })
        .collect()
}

pub fn plan_stsb(datasets: &[MapDataset], cfg: &SchemeConfig) -> Result<EpochPlan> {
    cfg.validate(Scheme::Stsb)?;
    let maps = sorted_maps(datasets);
    let per_map: Vec<Vec<SequencePair>> = maps.iter().map(|d| enumerate_sequence_pairs(d)).collect();
    let total: usize = per_map.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::EmptyDataset("no sequence pairs for STSB".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cursors = vec![0usize; maps.len()];
    let mut ordered = Vec::with_capacity(total);
    let mut slot = 0usize;
    while ordered.len() < total {
        let mut m = slot % maps.len();
        slot += 1;
        if cursors[m] == per_map[m].len() {
            let remaining: Vec<usize> = (0..maps.len())
                .filter(|&i| cursors[i] < per_map[i].len())
                .collect();
            m = remaining[rng.random_range(0..remaining.len())];
        }
        ordered.push(per_map[m][cursors[m]].clone());
        cursors[m] += 1;
    }
    Ok(EpochPlan {
        scheme: Scheme::Stsb,
        seed: cfg.seed,
        batches: flatten_pairs(ordered, cfg.batch_size / 2),
    })
}

pub fn plan_strb(datasets: &[MapDataset], cfg: &SchemeConfig) -> Result<EpochPlan> {
    cfg.validate(Scheme::Strb)?;
    let enumerate = if cfg.sliding_pairs {
        enumerate_sliding_pairs
    } else {
        enumerate_sequence_pairs
    };
    let mut pool: Vec<SequencePair> = sorted_maps(datasets)
        .into_iter()
        .flat_map(enumerate)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyDataset("no sequence pairs for STRB".into()));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok(EpochPlan {
        scheme: Scheme::Strb,
        seed: cfg.seed,
        batches: flatten_pairs(pool, cfg.batch_size / 2),
    })
}

pub fn plan_rtrb(datasets: &[MapDataset], cfg: &SchemeConfig) -> Result<EpochPlan> {
    cfg.validate(Scheme::Rtrb)?;
    let mut pool: Vec<SampleRef> = sorted_maps(datasets)
        .into_iter()
        .flat_map(|d| (0..d.pairs.len()).map(move |i| sample(d, i)))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyDataset("no samples for RTRB".into()));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok(EpochPlan {
        scheme: Scheme::Rtrb,
        seed: cfg.seed,
        batches: pool.chunks(cfg.batch_size).map(<[SampleRef]>::to_vec).collect(),
    })
}

pub fn plan_epoch(scheme: Scheme, datasets: &[MapDataset], cfg: &SchemeConfig) -> Result<EpochPlan> {
    match scheme {
        Scheme::Stsb => plan_stsb(datasets, cfg),
        Scheme::Strb => plan_strb(datasets, cfg),
        Scheme::Rtrb => plan_rtrb(datasets, cfg),
    }
}

pub const PLAN_HEADER: &str = "batch_idx,map_name,frame_index";

impl EpochPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleRef> {
        self.batches.iter().flatten()
    }

    /// Line-oriented form: a `# scheme=.. seed=..` comment, the header, then
    /// one `batch_idx,map_name,frame_index` row per sample in plan order.
    pub fn to_text(&self) -> String {
        let mut out = format!("# scheme={} seed={}\n{PLAN_HEADER}\n", self.scheme, self.seed);
        for (b, batch) in self.batches.iter().enumerate() {
            for s in batch {
                let _ = writeln!(out, "{b},{},{}", s.map_name, s.frame_index);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<EpochPlan> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<epoch plan>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| bad(1, "empty plan".into()))?;
        let mut scheme = None;
        let mut seed = None;
        for kv in meta.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("scheme", v)) => scheme = Some(v.parse::<Scheme>()?),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                _ => {}
            }
        }
        let (Some(scheme), Some(seed)) = (scheme, seed) else {
            return Err(bad(1, format!("bad plan metadata {meta:?}")));
        };
        match lines.next() {
            Some((_, h)) if h == PLAN_HEADER => {}
            _ => return Err(bad(2, format!("expected header {PLAN_HEADER:?}"))),
        }
        let mut batches: Vec<Vec<SampleRef>> = Vec::new();
        for (i, line) in lines {
            let parts: Vec<&str> = line.split(',').collect();
            let [b, map, frame] = parts[..] else {
                return Err(bad(i + 1, format!("expected 3 fields in {line:?}")));
            };
            let b: usize = b.parse().map_err(|_| bad(i + 1, format!("batch index {b:?}")))?;
            let frame_index = frame.parse().map_err(|_| bad(i + 1, format!("frame index {frame:?}")))?;
            if b == batches.len() {
                batches.push(Vec::new());
            } else if b + 1 != batches.len() {
                return Err(bad(i + 1, format!("batch index {b} out of order")));
            }
            batches[b].push(SampleRef {
                map_name: map.to_string(),
                frame_index,
            });
        }
        Ok(EpochPlan {
            scheme,
            seed,
            batches,
        })
    }
}
