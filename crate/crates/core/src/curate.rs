//! Corpus curation: keep low-light videos, drop sparse classes, and split
//! each class 80/20 into train and test with a seeded, order-free rule.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gdq::{LightLabel, ScanRecord};

pub const DEFAULT_MIN_COUNT: usize = 150;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class_label: String,
    pub num_frames: usize,
    #[serde(rename = "D_v")]
    pub d_v: f64,
    pub light: LightLabel,
    #[serde(default)]
    pub split: Split,
}

impl ManifestEntry {
    /// Builds an entry from a scan record, taking the class from the name of
    /// the directory that contains the video.
    pub fn from_scan(record: &ScanRecord) -> Self {
        let class_label = Path::new(&record.path)
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ManifestEntry {
            path: record.path.clone(),
            class_label,
            num_frames: record.t,
            d_v: record.d_v,
            light: record.label,
            split: Split::Unassigned,
        }
    }
}

/// Keeps only low-light entries.
pub fn select_low_light(entries: Vec<ManifestEntry>) -> Vec<ManifestEntry> {
    entries
        .into_iter()
        .filter(|e| e.light == LightLabel::LowLight)
        .collect()
}

/// Keeps entries whose class has at least `min_count` entries; order preserved.
pub fn filter_classes(entries: Vec<ManifestEntry>, min_count: usize) -> Vec<ManifestEntry> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for e in &entries {
        *counts.entry(e.class_label.as_str()).or_default() += 1;
    }
    let keep: Vec<bool> = entries
        .iter()
        .map(|e| counts[e.class_label.as_str()] >= min_count)
        .collect();
    entries
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect()
}

fn split_key(seed: u64, path: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(path.as_bytes());
    h.finalize().into()
}

/// Number of training items for a class of `n`: `floor(0.8 n)`.
pub fn train_count(n: usize) -> usize {
    n * 4 / 5
}

/// Per class, the `floor(0.8 n)` entries with the smallest seeded hash of
/// their path go to train and the rest to test. Entries that are not
/// low-light stay unassigned. Input order is preserved.
pub fn split_80_20(mut entries: Vec<ManifestEntry>, seed: u64) -> Vec<ManifestEntry> {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter_mut().enumerate() {
        e.split = Split::Unassigned;
        if e.light == LightLabel::LowLight {
            by_class.entry(e.class_label.clone()).or_default().push(i);
        }
    }
    for idx in by_class.values_mut() {
        idx.sort_by(|&a, &b| {
            split_key(seed, &entries[a].path)
                .cmp(&split_key(seed, &entries[b].path))
                .then_with(|| entries[a].path.cmp(&entries[b].path))
        });
        let n_train = train_count(idx.len());
        for (rank, &i) in idx.iter().enumerate() {
            entries[i].split = if rank < n_train { Split::Train } else { Split::Test };
        }
    }
    entries
}

/// Low-light selection, class filter and split in one pass.
pub fn curate(entries: Vec<ManifestEntry>, min_count: usize, seed: u64) -> Vec<ManifestEntry> {
    split_80_20(filter_classes(select_low_light(entries), min_count), seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_scenes: Option<usize>,
    pub total_videos: usize,
    pub per_class: BTreeMap<String, usize>,
    pub train: usize,
    pub test: usize,
    /// `train / (train + test)`, absent when nothing is assigned.
    pub split_ratio: Option<f64>,
}

impl CorpusStats {
    /// `name & actions & scenes & total`, with `-` for unknown scenes.
    pub fn table_row(&self, name: &str) -> String {
        let scenes = self.num_scenes.map_or_else(|| "-".to_string(), |s| s.to_string());
        format!("{name} & {} & {scenes} & {}", self.num_classes, self.total_videos)
    }
}

pub fn stats(entries: &[ManifestEntry], num_scenes: Option<usize>) -> CorpusStats {
    let mut per_class = BTreeMap::new();
    let (mut train, mut test) = (0, 0);
    for e in entries {
        *per_class.entry(e.class_label.clone()).or_insert(0usize) += 1;
        match e.split {
            Split::Train => train += 1,
            Split::Test => test += 1,
            Split::Unassigned => {}
        }
    }
    CorpusStats {
        num_classes: per_class.len(),
        num_scenes,
        total_videos: entries.len(),
        per_class,
        train,
        test,
        split_ratio: (train + test > 0).then(|| train as f64 / (train + test) as f64),
    }
}

/// Reads a JSON-lines manifest. Lines may be manifest entries or raw
/// `gdq scan` records, which are converted with [`ManifestEntry::from_scan`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        let entry = if value.get("class_label").is_some() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value::<ScanRecord>(value).map(|r| ManifestEntry::from_scan(&r))
        }
        .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(entry);
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], mut out: W) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").map_err(|err| Error::io("<manifest>", err))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(counts: &[(&str, usize)]) -> Vec<ManifestEntry> {
        counts
            .iter()
            .flat_map(|&(class, n)| {
                (0..n).map(move |i| ManifestEntry {
                    path: format!("{class}/v{i:05}"),
                    class_label: class.to_string(),
                    num_frames: 32,
                    d_v: -1.5,
                    light: LightLabel::LowLight,
                    split: Split::Unassigned,
                })
            })
            .collect()
    }

    fn classes(entries: &[ManifestEntry]) -> Vec<String> {
        let mut c: Vec<String> = entries.iter().map(|e| e.class_label.clone()).collect();
        c.dedup();
        c
    }

    #[test]
    fn filter_examples() {
        let kept = filter_classes(corpus(&[("A", 200), ("B", 151), ("C", 149)]), 150);
        assert_eq!(classes(&kept), vec!["A", "B"]);
        let all = corpus(&[("A", 3), ("B", 1)]);
        assert_eq!(filter_classes(all.clone(), 1), all);
        assert!(filter_classes(vec![], 150).is_empty());
    }

    #[test]
    fn split_counts() {
        for (n, train) in [(100, 80), (5, 4), (1, 0), (7, 5)] {
            let s = split_80_20(corpus(&[("A", n)]), 7);
            let st = stats(&s, None);
            assert_eq!((st.train, st.test), (train, n - train), "n = {n}");
        }
    }

    #[test]
    fn split_is_seeded() {
        let c = corpus(&[("A", 50), ("B", 20)]);
        let a = split_80_20(c.clone(), 1);
        assert_eq!(a, split_80_20(c.clone(), 1));
        let b = split_80_20(c, 2);
        assert_ne!(a, b);
        assert_eq!((stats(&a, None).train, stats(&b, None).train), (56, 56));
    }

    #[test]
    fn normal_light_entries_stay_unassigned() {
        let mut c = corpus(&[("A", 5)]);
        c[0].light = LightLabel::NormalLight;
        let s = split_80_20(c, 3);
        assert_eq!(s[0].split, Split::Unassigned);
        assert!(s[1..].iter().all(|e| e.split != Split::Unassigned));
    }

    #[test]
    fn curate_is_idempotent() {
        let mut c = corpus(&[("A", 160), ("B", 100), ("C", 155)]);
        c[3].light = LightLabel::NormalLight;
        let once = curate(c, 150, 11);
        assert_eq!(curate(once.clone(), 150, 11), once);
        assert_eq!(classes(&once), vec!["A", "C"]);
    }

    #[test]
    fn stats_examples() {
        let one = corpus(&[("A", 1)]);
        let s = stats(&one, None);
        assert_eq!((s.num_classes, s.total_videos), (1, 1));

        let a = corpus(&[("A", 3), ("B", 2)]);
        let b = corpus(&[("C", 4)]);
        let merged: Vec<_> = a.iter().chain(&b).cloned().collect();
        let (sa, sb, sm) = (stats(&a, None), stats(&b, None), stats(&merged, None));
        assert_eq!(sm.total_videos, sa.total_videos + sb.total_videos);
        assert_eq!(sm.num_classes, sa.num_classes + sb.num_classes);
    }

    #[test]
    fn table_row_format() {
        let s = stats(&corpus(&[("A", 2), ("B", 1)]), Some(138));
        assert_eq!(s.table_row("X"), "X & 2 & 138 & 3");
        assert_eq!(stats(&[], None).table_row("E"), "E & 0 & - & 0");
    }

    #[test]
    fn manifest_line_schema() {
        let e = &corpus(&[("run", 1)])[0];
        let line = serde_json::to_string(e).unwrap();
        assert_eq!(
            line,
            r#"{"path":"run/v00000","class_label":"run","num_frames":32,"D_v":-1.5,"light":"low_light","split":"unassigned"}"#
        );
    }

    #[test]
    fn reads_scan_records_and_entries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"path":"data/jump/v2.dvt","T":8,"H":4,"W":4,"mu_c":3.0,"D_v":-2.0,"label":"low_light"}"#,
                "\n\n",
                r#"{"path":"data/run/v1","class_label":"run","num_frames":5,"D_v":0.1,"light":"normal_light","split":"unassigned"}"#,
                "\n"
            ),
        )
        .unwrap();
        let m = read_manifest(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].class_label, "jump");
        assert_eq!(m[0].num_frames, 8);
        assert_eq!(m[1].light, LightLabel::NormalLight);
    }
}
