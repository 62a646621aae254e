//! Global darkness quantification.
//!
//! Per frame `t`, `mu_t` is the mean pixel intensity and `sigma_t` its
//! population standard deviation (0–255 scale). With the clip baseline
//! `mu_c = mean(mu_t)`, the darkness index is
//!
//! ```text
//! D_v = (1/T) · Σ_t ((mu_t − mu_c) / mu_c) · sigma_t
//! ```
//!
//! and a video is low-light iff `D_v < −tau`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Clip;

pub const DEFAULT_TAU: f64 = 0.877;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightLabel {
    LowLight,
    NormalLight,
}

/// How a pixel's intensity is formed from its RGB triple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityModel {
    /// `(R + G + B) / 3`
    #[default]
    RgbMean,
    /// BT.601 luma `0.299 R + 0.587 G + 0.114 B`
    Luma601,
}

/// Which brightness baseline `mu_c` enters the index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Mean of the video's own frame means.
    #[default]
    Video,
    /// Mean of every frame mean across the scanned corpus. Experimental.
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarknessReport {
    pub mu_t: Vec<f64>,
    pub mu_c: f64,
    pub sigma_t: Vec<f64>,
    #[serde(rename = "D_v")]
    pub d_v: f64,
    pub tau: f64,
    pub label: LightLabel,
    /// Set when `mu_c == 0` and `D_v` was defined as 0.
    pub zero_baseline: bool,
}

/// Strict threshold rule: `D_v == −tau` is normal light.
pub fn classify(d_v: f64, tau: f64) -> LightLabel {
    if d_v < -tau {
        LightLabel::LowLight
    } else {
        LightLabel::NormalLight
    }
}

/// Intensities of a planar `3×H×W` frame.
pub fn intensity_plane(frame: &[u8], model: IntensityModel) -> Vec<f64> {
    let n = frame.len() / 3;
    let (r, rest) = frame.split_at(n);
    let (g, b) = rest.split_at(n);
    match model {
        // summing first keeps grey pixels exact
        IntensityModel::RgbMean => (0..n)
            .map(|i| (r[i] as f64 + g[i] as f64 + b[i] as f64) / 3.0)
            .collect(),
        IntensityModel::Luma601 => (0..n)
            .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
            .collect(),
    }
}

/// Mean brightness of one planar `3×H×W` frame.
pub fn frame_brightness(frame: &[u8], model: IntensityModel) -> f64 {
    let plane = intensity_plane(frame, model);
    plane.iter().sum::<f64>() / plane.len() as f64
}

/// `(mean, population standard deviation)` of an intensity plane.
pub fn plane_stats(plane: &[f64]) -> (f64, f64) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-frame `(mu_t, sigma_t)` for a sequence of intensity planes.
pub fn frame_stats(planes: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    planes.iter().map(|p| plane_stats(p)).unzip()
}

/// Darkness index from per-frame statistics against a given baseline.
pub fn darkness_from_stats(mu_t: Vec<f64>, sigma_t: Vec<f64>, mu_c: f64, tau: f64) -> DarknessReport {
    let zero_baseline = mu_c == 0.0;
    let d_v = if zero_baseline {
        0.0
    } else {
        mu_t.iter()
            .zip(&sigma_t)
            .map(|(m, s)| (m - mu_c) / mu_c * s)
            .sum::<f64>()
            / mu_t.len() as f64
    };
    DarknessReport {
        mu_t,
        mu_c,
        sigma_t,
        d_v,
        tau,
        label: classify(d_v, tau),
        zero_baseline,
    }
}

/// Darkness index of real-valued intensity planes (one per frame).
pub fn darkness_from_planes(planes: &[Vec<f64>], tau: f64) -> Result<DarknessReport> {
    if planes.is_empty() || planes.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid("darkness_index", "need at least one nonempty frame"));
    }
    let (mu_t, sigma_t) = frame_stats(planes);
    let mu_c = mu_t.iter().sum::<f64>() / mu_t.len() as f64;
    Ok(darkness_from_stats(mu_t, sigma_t, mu_c, tau))
}

pub fn clip_planes(clip: &Clip, model: IntensityModel) -> Vec<Vec<f64>> {
    (0..clip.len()).map(|t| intensity_plane(clip.frame(t), model)).collect()
}

pub fn darkness_index(clip: &Clip, model: IntensityModel, tau: f64) -> DarknessReport {
    darkness_from_planes(&clip_planes(clip, model), tau).expect("clips are nonempty")
}

/// One line of `gdq scan` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub path: String,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub mu_c: f64,
    #[serde(rename = "D_v")]
    pub d_v: f64,
    pub label: LightLabel,
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub tau: f64,
    pub model: IntensityModel,
    pub baseline: Baseline,
    /// Worker threads; 1 scans sequentially.
    pub jobs: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            tau: DEFAULT_TAU,
            model: IntensityModel::RgbMean,
            baseline: Baseline::Video,
            jobs: 1,
        }
    }
}

/// Videos under `root`: every `.dvt` file and every directory holding `.ppm` frames.
pub fn discover_videos(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::format(root, e.to_string()))?;
        let p = entry.path();
        let ext_is = |x: &str| p.extension().is_some_and(|e| e.eq_ignore_ascii_case(x));
        if entry.file_type().is_file() && ext_is("dvt") {
            found.push(p.to_path_buf());
        } else if entry.file_type().is_dir() {
            let has_frames = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok())
                .any(|e| {
                    let q = e.path();
                    q.is_file() && q.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm"))
                });
            if has_frames {
                found.push(p.to_path_buf());
            }
        }
    }
    found.sort();
    Ok(found)
}

struct VideoStats {
    path: String,
    dims: (usize, usize, usize),
    mu_t: Vec<f64>,
    sigma_t: Vec<f64>,
}

fn video_stats(path: &Path, model: IntensityModel) -> Result<VideoStats> {
    let clip = Clip::load(path)?;
    let (mu_t, sigma_t) = frame_stats(&clip_planes(&clip, model));
    Ok(VideoStats {
        path: path.display().to_string(),
        dims: (clip.len(), clip.height(), clip.width()),
        mu_t,
        sigma_t,
    })
}

/// Scores every video under `root`; records come back sorted by path.
pub fn scan(root: &Path, opts: &ScanOptions) -> Result<Vec<ScanRecord>> {
    if opts.tau <= 0.0 {
        return Err(Error::invalid("gdq scan", "tau must be > 0"));
    }
    let paths = discover_videos(root)?;
    let mut stats: Vec<VideoStats> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::invalid("gdq scan", e.to_string()))?;
        pool.install(|| {
            paths
                .par_iter()
                .map(|p| video_stats(p, opts.model))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        paths
            .iter()
            .map(|p| video_stats(p, opts.model))
            .collect::<Result<Vec<_>>>()?
    };
    stats.sort_by(|a, b| a.path.cmp(&b.path));

    let corpus_mu = {
        let all: Vec<f64> = stats.iter().flat_map(|s| s.mu_t.iter().copied()).collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    };
    Ok(stats
        .into_iter()
        .map(|s| {
            let mu_c = match opts.baseline {
                Baseline::Video => s.mu_t.iter().sum::<f64>() / s.mu_t.len() as f64,
                Baseline::Corpus => corpus_mu,
            };
            let report = darkness_from_stats(s.mu_t, s.sigma_t, mu_c, opts.tau);
            ScanRecord {
                path: s.path,
                t: s.dims.0,
                h: s.dims.1,
                w: s.dims.2,
                mu_c: report.mu_c,
                d_v: report.d_v,
                label: report.label,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grey_clip(frames: &[&[u8]], h: usize, w: usize) -> Clip {
        let bytes = frames
            .iter()
            .flat_map(|f| f.iter().chain(f.iter()).chain(f.iter()).copied().collect::<Vec<_>>())
            .collect();
        Clip::new(frames.len(), h, w, bytes).unwrap()
    }

    #[test]
    fn brightness_examples() {
        assert_eq!(frame_brightness(&[0; 12], IntensityModel::RgbMean), 0.0);
        assert_eq!(frame_brightness(&[255; 12], IntensityModel::RgbMean), 255.0);
        let frame = [30, 30, 60, 60, 90, 90];
        assert_eq!(frame_brightness(&frame, IntensityModel::RgbMean), 60.0);
    }

    #[test]
    fn luma_weights() {
        let frame = [100, 0, 0];
        assert!((frame_brightness(&frame, IntensityModel::Luma601) - 29.9).abs() < 1e-12);
    }

    #[test]
    fn constant_clip_is_normal() {
        let c = grey_clip(&[&[40; 4], &[40; 4]], 2, 2);
        let r = darkness_index(&c, IntensityModel::RgbMean, DEFAULT_TAU);
        assert_eq!(r.d_v, 0.0);
        assert_eq!(r.label, LightLabel::NormalLight);
    }

    #[test]
    fn hand_worked_two_frame_clip() {
        let c = grey_clip(&[&[10, 10, 30, 30], &[30, 50, 50, 70]], 2, 2);
        let r = darkness_index(&c, IntensityModel::RgbMean, DEFAULT_TAU);
        assert_eq!(r.mu_t, vec![20.0, 50.0]);
        assert_eq!(r.mu_c, 35.0);
        assert!((r.sigma_t[0] - 10.0).abs() < 1e-12);
        assert!((r.sigma_t[1] - 200f64.sqrt()).abs() < 1e-12);
        assert!((r.d_v - 0.8876).abs() < 1e-4, "{}", r.d_v);
        assert_eq!(r.label, LightLabel::NormalLight);
    }

    #[test]
    fn black_video_has_zero_index() {
        let c = grey_clip(&[&[0; 4]], 2, 2);
        let r = darkness_index(&c, IntensityModel::RgbMean, DEFAULT_TAU);
        assert!(r.zero_baseline);
        assert_eq!(r.d_v, 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(classify(0.0, 0.877), LightLabel::NormalLight);
        assert_eq!(classify(-0.877, 0.877), LightLabel::NormalLight);
        assert_eq!(classify(-0.90, 0.877), LightLabel::LowLight);
        assert_eq!(classify(-1.2, 0.877), LightLabel::LowLight);
    }

    #[test]
    fn scan_record_field_names() {
        let r = ScanRecord {
            path: "v".into(),
            t: 2,
            h: 3,
            w: 4,
            mu_c: 1.5,
            d_v: -1.0,
            label: LightLabel::LowLight,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"path":"v","T":2,"H":3,"W":4,"mu_c":1.5,"D_v":-1.0,"label":"low_light"}"#
        );
    }
}
