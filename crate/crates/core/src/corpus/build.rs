//! Balanced, stratified dataset construction.
//!
//! Every builder samples each stratification cell independently (pool
//! sorted by id, shuffled with a seed derived from the build seed and the
//! cell index), then splits each cell into train and test. The global train
//! size is `floor(n * train / (train + test))`; per-cell shares are the
//! floors of the exact proportion, and the leftover train slots go to the
//! cells with the largest remainders (ties by cell order). Every cell thus
//! lands within one sample of its exact share.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BinaryLabel, CorpusError, Sample, Source, UnifiedCategory};
use crate::digest::{derive_seed, seeded_rng, sha256_hex};

/// Train:test proportion, e.g. `4:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl SplitRatio {
    pub const FOUR_TO_ONE: SplitRatio = SplitRatio { train: 4, test: 1 };

    pub fn new(train: u32, test: u32) -> Result<Self, CorpusError> {
        if train + test == 0 {
            return Err(CorpusError::InvalidSpec("split ratio 0:0".into()));
        }
        Ok(SplitRatio { train, test })
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.train, self.test)
    }
}

impl FromStr for SplitRatio {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidSpec(format!("split ratio {s:?} is not of the form a:b"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        SplitRatio::new(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Binary,
    Multiclass,
}

/// Parameters that produced a dataset; embedded in its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSpec {
    pub kind: DatasetKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<UnifiedCategory>,
    pub split: SplitRatio,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub spec: BuildSpec,
}

/// Written next to `train.jsonl` / `test.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: BuildSpec,
    pub train_count: usize,
    pub test_count: usize,
    /// `cell -> [train, test]`, cells named `label/source` or `category/source`.
    pub cells: BTreeMap<String, [usize; 2]>,
    pub dataset_hash: String,
}

impl DatasetSplit {
    fn jsonl(samples: &[Sample]) -> String {
        let mut out = String::new();
        for s in samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the serialized train and test files.
    pub fn content_hash(&self) -> String {
        let mut buf = Self::jsonl(&self.train);
        buf.push_str("--\n");
        buf.push_str(&Self::jsonl(&self.test));
        sha256_hex(buf)
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut cells: BTreeMap<String, [usize; 2]> = BTreeMap::new();
        for (slot, part) in [&self.train, &self.test].into_iter().enumerate() {
            for s in part {
                cells.entry(self.cell_name(s)).or_default()[slot] += 1;
            }
        }
        DatasetManifest {
            spec: self.spec.clone(),
            train_count: self.train.len(),
            test_count: self.test.len(),
            cells,
            dataset_hash: self.content_hash(),
        }
    }

    fn cell_name(&self, s: &Sample) -> String {
        let head = match self.spec.kind {
            DatasetKind::Binary => s.binary_label.map(|b| b.as_str()).unwrap_or("unlabeled"),
            DatasetKind::Multiclass => s
                .effective_category()
                .map(|c| c.as_str())
                .unwrap_or("unlabeled"),
        };
        format!("{head}/{}", s.source)
    }

    /// Writes `train.jsonl`, `test.jsonl` and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<DatasetManifest, CorpusError> {
        let io = |path: &Path, e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let manifest = self.manifest();
        for (name, body) in [
            ("train.jsonl", Self::jsonl(&self.train)),
            ("test.jsonl", Self::jsonl(&self.test)),
            (
                "manifest.json",
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            ),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(manifest)
    }

    /// Loads a dataset directory written by [`DatasetSplit::write_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| CorpusError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        let manifest: DatasetManifest = serde_json::from_str(&read("manifest.json")?)
            .map_err(|e| CorpusError::InvalidSpec(format!("manifest.json: {e}")))?;
        let parse = |name: &str| -> Result<Vec<Sample>, CorpusError> {
            read(name)?
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let s: Sample = serde_json::from_str(l).map_err(|e| {
                        CorpusError::InvalidSpec(format!("{name} line {}: {e}", i + 1))
                    })?;
                    s.validate()?;
                    Ok(s)
                })
                .collect()
        };
        Ok(DatasetSplit {
            train: parse("train.jsonl")?,
            test: parse("test.jsonl")?,
            spec: manifest.spec,
        })
    }
}

/// Drops later samples whose id was already seen. Returns the number dropped.
pub fn dedup_by_id(samples: &mut Vec<Sample>) -> usize {
    let mut seen = HashSet::new();
    let before = samples.len();
    samples.retain(|s| seen.insert(s.id.clone()));
    before - samples.len()
}

fn ensure_unique(samples: &[Sample]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(CorpusError::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}

/// Train share of each cell under `ratio` (see module docs).
fn allocate_train(cell_sizes: &[usize], ratio: SplitRatio) -> Vec<usize> {
    let (t, d) = (ratio.train as usize, (ratio.train + ratio.test) as usize);
    let total: usize = cell_sizes.iter().sum();
    let target = total * t / d;
    let mut shares: Vec<usize> = cell_sizes.iter().map(|n| n * t / d).collect();
    let mut leftover = target - shares.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..cell_sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(cell_sizes[i] * t % d), i));
    for i in order {
        if leftover == 0 {
            break;
        }
        if !(cell_sizes[i] * t).is_multiple_of(d) {
            shares[i] += 1;
            leftover -= 1;
        }
    }
    shares
}

/// Seeded draw of `n` samples from a cell pool, independent of input order.
fn draw(mut pool: Vec<&Sample>, n: usize, seed: u64, cell: usize) -> Vec<Sample> {
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    pool.shuffle(&mut seeded_rng(derive_seed(seed, &[cell as u64])));
    pool.into_iter().take(n).cloned().collect()
}

fn split_cells(
    cells: Vec<Vec<Sample>>,
    ratio: SplitRatio,
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>) {
    let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
    let shares = allocate_train(&sizes, ratio);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (mut cell, share) in cells.into_iter().zip(shares) {
        let rest = cell.split_off(share);
        train.extend(cell);
        test.extend(rest);
    }
    train.shuffle(&mut seeded_rng(derive_seed(seed, &[u64::MAX, 0])));
    test.shuffle(&mut seeded_rng(derive_seed(seed, &[u64::MAX, 1])));
    (train, test)
}

/// Balanced binary dataset: `total / 2` per label, and within each label
/// `total / 4` per source.
pub fn build_binary_dataset(
    samples: &[Sample],
    total: usize,
    split: SplitRatio,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if total == 0 || !total.is_multiple_of(4) {
        return Err(CorpusError::InvalidSpec(format!(
            "total {total} must be a positive multiple of 4"
        )));
    }
    ensure_unique(samples)?;
    let per_cell = total / 4;
    // Interleaved so leftover train slots alternate between labels.
    let layout = [
        (BinaryLabel::Benign, Source::Twitter),
        (BinaryLabel::Illicit, Source::Twitter),
        (BinaryLabel::Benign, Source::SearchEngine),
        (BinaryLabel::Illicit, Source::SearchEngine),
    ];
    let mut cells = Vec::with_capacity(4);
    for (idx, (label, source)) in layout.into_iter().enumerate() {
        let pool: Vec<&Sample> = samples
            .iter()
            .filter(|s| s.binary_label == Some(label) && s.source == source)
            .collect();
        if pool.len() < per_cell {
            return Err(CorpusError::InsufficientSamples {
                cell: format!("{label}/{source}"),
                needed: per_cell,
                available: pool.len(),
            });
        }
        cells.push(draw(pool, per_cell, seed, idx));
    }
    let (train, test) = split_cells(cells, split, seed);
    Ok(DatasetSplit {
        train,
        test,
        spec: BuildSpec {
            kind: DatasetKind::Binary,
            total: Some(total),
            per_class: None,
            categories: Vec::new(),
            split,
            seed,
        },
    })
}

/// Multiclass dataset with `per_class` samples for each of `categories`,
/// aiming at a 1:1 source ratio and topping up from the other source when
/// one runs short.
pub fn build_multiclass_dataset(
    samples: &[Sample],
    per_class: usize,
    categories: &[UnifiedCategory],
    split: SplitRatio,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if per_class == 0 || categories.is_empty() {
        return Err(CorpusError::InvalidSpec(
            "per_class and categories must be nonempty".into(),
        ));
    }
    ensure_unique(samples)?;
    let mut cells = Vec::with_capacity(categories.len() * 2);
    for (ci, &category) in categories.iter().enumerate() {
        let by_source = |src: Source| -> Vec<&Sample> {
            samples
                .iter()
                .filter(|s| s.source == src && s.effective_category() == Some(category))
                .collect()
        };
        let (tw, se) = (by_source(Source::Twitter), by_source(Source::SearchEngine));
        let available = tw.len() + se.len();
        if available < per_class {
            return Err(CorpusError::InsufficientSamples {
                cell: category.to_string(),
                needed: per_class,
                available,
            });
        }
        let want_tw = per_class / 2;
        let want_se = per_class - want_tw;
        let (take_tw, take_se) = if tw.len() < want_tw {
            (tw.len(), per_class - tw.len())
        } else if se.len() < want_se {
            (per_class - se.len(), se.len())
        } else {
            (want_tw, want_se)
        };
        cells.push(draw(tw, take_tw, seed, 2 * ci));
        cells.push(draw(se, take_se, seed, 2 * ci + 1));
    }
    let (train, test) = split_cells(cells, split, seed);
    Ok(DatasetSplit {
        train,
        test,
        spec: BuildSpec {
            kind: DatasetKind::Multiclass,
            total: None,
            per_class: Some(per_class),
            categories: categories.to_vec(),
            split,
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_cell: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for label in BinaryLabel::ALL {
            for source in Source::ALL {
                for i in 0..per_cell {
                    out.push(
                        Sample::new(
                            format!("{label}-{source}-{i}"),
                            format!("text {label} {source} {i}"),
                            source,
                            Some(label),
                            None,
                        )
                        .unwrap(),
                    );
                }
            }
        }
        out
    }

    #[test]
    fn minimal_balanced_case() {
        let ds = build_binary_dataset(&pool(3), 4, SplitRatio::new(1, 1).unwrap(), 1).unwrap();
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test.len(), 2);
        let labels = |v: &[Sample]| {
            let mut l: Vec<_> = v.iter().map(|s| s.binary_label.unwrap()).collect();
            l.sort();
            l
        };
        assert_eq!(
            labels(&ds.train),
            vec![BinaryLabel::Benign, BinaryLabel::Illicit]
        );
        assert_eq!(
            labels(&ds.test),
            vec![BinaryLabel::Benign, BinaryLabel::Illicit]
        );
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = pool(50);
        let a = build_binary_dataset(&p, 40, SplitRatio::FOUR_TO_ONE, 7).unwrap();
        let mut reversed = p.clone();
        reversed.reverse();
        let b = build_binary_dataset(&reversed, 40, SplitRatio::FOUR_TO_ONE, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        let c = build_binary_dataset(&p, 40, SplitRatio::FOUR_TO_ONE, 8).unwrap();
        let ids = |d: &DatasetSplit| {
            let mut v: Vec<_> = d
                .train
                .iter()
                .chain(&d.test)
                .map(|s| s.id.clone())
                .collect();
            v.sort();
            v
        };
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn deficient_cell_is_named() {
        let mut p = pool(10);
        p.retain(|s| {
            !(s.binary_label == Some(BinaryLabel::Illicit) && s.source == Source::SearchEngine)
        });
        let err = build_binary_dataset(&p, 8, SplitRatio::FOUR_TO_ONE, 0).unwrap_err();
        assert!(err.to_string().contains("illicit/search_engine"), "{err}");
    }

    #[test]
    fn total_must_divide_by_four() {
        assert!(build_binary_dataset(&pool(5), 6, SplitRatio::FOUR_TO_ONE, 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut p = pool(2);
        p.push(p[0].clone());
        assert!(matches!(
            build_binary_dataset(&p, 4, SplitRatio::FOUR_TO_ONE, 0),
            Err(CorpusError::DuplicateId(_))
        ));
        assert_eq!(dedup_by_id(&mut p), 1);
    }

    #[test]
    fn allocation_respects_floor_and_cells() {
        assert_eq!(
            allocate_train(&[1400; 4], SplitRatio::FOUR_TO_ONE),
            vec![1120; 4]
        );
        assert_eq!(
            allocate_train(&[1, 1, 1, 1], SplitRatio::new(1, 1).unwrap()),
            vec![1, 1, 0, 0]
        );
        let shares = allocate_train(&[3, 7, 2], SplitRatio::new(2, 1).unwrap());
        assert_eq!(shares.iter().sum::<usize>(), 12 * 2 / 3);
    }

    #[test]
    fn multiclass_minimal_two_categories() {
        let mk = |id: &str, src, cat| Sample::new(id, id, src, None, Some(cat)).unwrap();
        let samples = vec![
            mk("a", Source::Twitter, UnifiedCategory::Drug),
            mk("b", Source::SearchEngine, UnifiedCategory::Drug),
            mk("c", Source::Twitter, UnifiedCategory::Porn),
            mk("d", Source::SearchEngine, UnifiedCategory::Porn),
        ];
        let ds = build_multiclass_dataset(
            &samples,
            2,
            &[UnifiedCategory::Drug, UnifiedCategory::Porn],
            SplitRatio::FOUR_TO_ONE,
            3,
        )
        .unwrap();
        let all: Vec<_> = ds.train.iter().chain(&ds.test).collect();
        assert_eq!(all.len(), 4);
        let tw = all.iter().filter(|s| s.source == Source::Twitter).count();
        assert_eq!(tw, 2);
    }

    #[test]
    fn multiclass_single_source_fallback() {
        let samples: Vec<Sample> = (0..6)
            .map(|i| {
                Sample::new(
                    format!("h{i}"),
                    format!("hack {i}"),
                    Source::SearchEngine,
                    None,
                    Some(UnifiedCategory::Hacking),
                )
                .unwrap()
            })
            .collect();
        let ds = build_multiclass_dataset(
            &samples,
            5,
            &[UnifiedCategory::Hacking],
            SplitRatio::FOUR_TO_ONE,
            0,
        )
        .unwrap();
        assert_eq!(ds.train.len() + ds.test.len(), 5);
        assert!(ds
            .train
            .iter()
            .chain(&ds.test)
            .all(|s| s.source == Source::SearchEngine));

        let err = build_multiclass_dataset(
            &samples,
            7,
            &[UnifiedCategory::Hacking],
            SplitRatio::FOUR_TO_ONE,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("hacking"));
    }

    #[test]
    fn write_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_binary_dataset(&pool(5), 8, SplitRatio::FOUR_TO_ONE, 2).unwrap();
        let manifest = ds.write_dir(dir.path()).unwrap();
        assert_eq!(manifest.cells["benign/twitter"], [2, 0]);
        assert_eq!(manifest.cells["benign/search_engine"], [1, 1]);
        let back = DatasetSplit::load_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_ratio_parsing() {
        assert_eq!(
            "4:1".parse::<SplitRatio>().unwrap(),
            SplitRatio::FOUR_TO_ONE
        );
        assert!("4-1".parse::<SplitRatio>().is_err());
        assert!("0:0".parse::<SplitRatio>().is_err());
    }
}
