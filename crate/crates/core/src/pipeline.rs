//! End-to-end forward runs: TCM pair features, per-pair luminance
//! adaptation, and reflect-augmented classification, plus the sweep harness
//! and the gradient-check battery.

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result, StageExt};
use crate::gdq::{darkness_index, LightLabel};
use crate::init::ParamRng;
use crate::lam::{self, lam_forward, FilterGenerator, IlluminationMap};
use crate::ram::{self, classify_clip, cross_entropy, total_loss, Backbone, ParamCounts, Prediction};
use crate::tcm::{self, l_tc, region_means, rgb_diff, tcm_forward, RegionGrid, TcmParams};
use crate::tensor::{grad_check, Tensor, GRAD_CHECK_STEP};
use crate::video::{sample_clip, sample_indices, Clip};

/// All parameters of a run, drawn from one seeded generator in a fixed
/// order: TCM, filter generator, backbone.
#[derive(Clone, Debug)]
pub struct Model {
    pub tcm: TcmParams<f32>,
    pub filter: FilterGenerator<f32>,
    pub backbone: Backbone<f32>,
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ParamRng::new(cfg.seed);
        let tcm = TcmParams::init(cfg.tcm_channels, &mut rng);
        let mut filter = FilterGenerator::init(cfg.tcm_channels, cfg.u_p, &mut rng)?;
        filter.normalize = cfg.normalize_kernels;
        let backbone = Backbone::init(&cfg.backbone(), &mut rng)?;
        Ok(Model { tcm, filter, backbone })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputSummary {
    pub path: Option<String>,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    /// Source frame indices fed to the model.
    pub frames: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DarknessSummary {
    #[serde(rename = "D_v")]
    pub d_v: f64,
    pub mu_c: f64,
    pub label: LightLabel,
    pub zero_baseline: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub l_tc: f64,
    pub l_over: f64,
    pub l_pix: f64,
    pub l_ce: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub config: RunConfig,
    pub input: InputSummary,
    pub darkness: DarknessSummary,
    /// One gamma per pair feature.
    pub gamma: Vec<f64>,
    pub mu_in: Vec<f64>,
    pub losses: LossReport,
    pub top1: usize,
    pub probs: Vec<f64>,
    /// Wall time, only filled in on request since it breaks reproducibility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

fn finite(v: f64, stage: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { op: stage })
    }
}

/// Runs every stage on one clip. Losses are reported in 64-bit; the forward
/// passes run in 32-bit.
pub fn pipeline_run(clip: &Clip, cfg: &RunConfig, model: &Model) -> Result<PipelineReport> {
    let darkness = darkness_index(clip, cfg.intensity, cfg.tau);
    let frames = sample_indices(clip.len(), cfg.num_frames, cfg.interval).stage("sample")?;
    let sampled = sample_clip(clip, cfg.num_frames, cfg.interval).stage("sample")?;

    let features = tcm_forward(&sampled.to_tensor::<f32>(), &model.tcm).stage("tcm")?;

    let mut enhanced = Vec::with_capacity(features.len());
    let (mut gamma, mut mu_in) = (Vec::new(), Vec::new());
    let (mut l_over, mut l_pix) = (0.0, 0.0);
    for x in &features {
        let out = lam_forward(x, &model.filter, cfg.mu_out as f32, cfg.filter_target).stage("lam")?;
        gamma.push(out.gamma.gamma as f64);
        mu_in.push(out.gamma.mu_in as f64);
        l_over += out.l_over as f64;
        l_pix += out.l_pix as f64;
        enhanced.push(out.enhanced);
    }
    let n = features.len() as f64;
    let (l_over, l_pix) = (finite(l_over / n, "lam")?, finite(l_pix / n, "lam")?);

    let enhanced_seq = Tensor::stack(&enhanced).stage("tcm loss")?.cast::<f64>();
    let feature_seq = Tensor::stack(&features).stage("tcm loss")?.cast::<f64>();
    let l_tc = finite(
        l_tc(&enhanced_seq, &feature_seq, cfg.region_grid())
            .stage("tcm loss")?
            .loss,
        "tcm loss",
    )?;

    let pred = classify_clip(&enhanced, &model.backbone).stage("ram")?;
    let pred = Prediction::from_logits(pred.logits.iter().map(|&v| v as f64).collect()).stage("ram")?;
    let l_ce = cross_entropy(&pred.probs, cfg.target_class).stage("ram")?.loss;
    let l_total = total_loss(l_tc, l_over, l_pix, l_ce).stage("total")?;

    Ok(PipelineReport {
        config: cfg.clone(),
        input: InputSummary {
            path: (!clip.source_path.is_empty()).then(|| clip.source_path.clone()),
            t: clip.len(),
            h: clip.height(),
            w: clip.width(),
            frames,
        },
        darkness: DarknessSummary {
            d_v: darkness.d_v,
            mu_c: darkness.mu_c,
            label: darkness.label,
            zero_baseline: darkness.zero_baseline,
        },
        gamma,
        mu_in,
        losses: LossReport {
            l_tc,
            l_over,
            l_pix,
            l_ce,
            l_total,
        },
        top1: pred.top1,
        probs: pred.probs,
        timing_ms: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnhanceSidecar {
    /// Per-frame gamma.
    pub gamma: Vec<f64>,
    pub mu_in: Vec<f64>,
    /// Means over frames.
    pub l_over: f64,
    pub l_pix: f64,
    pub config: RunConfig,
}

/// Applies luminance adaptation frame by frame to RGB frames in `[0, 1]`.
/// Returns the enhanced `T×3×H×W` stack and the per-frame statistics.
pub fn enhance_clip(clip: &Clip, cfg: &RunConfig) -> Result<(Tensor<f32>, EnhanceSidecar)> {
    cfg.validate()?;
    let mut rng = ParamRng::new(cfg.seed);
    let mut gen = FilterGenerator::<f32>::init(Clip::CHANNELS, cfg.u_p, &mut rng)?;
    gen.normalize = cfg.normalize_kernels;
    let x = clip.to_tensor::<f32>();
    let mut frames = Vec::with_capacity(clip.len());
    let (mut gamma, mut mu_in) = (Vec::new(), Vec::new());
    let (mut l_over, mut l_pix) = (0.0, 0.0);
    for t in 0..clip.len() {
        let out = lam_forward(&x.frame(t), &gen, cfg.mu_out as f32, cfg.filter_target).stage("lam")?;
        gamma.push(out.gamma.gamma as f64);
        mu_in.push(out.gamma.mu_in as f64);
        l_over += out.l_over as f64;
        l_pix += out.l_pix as f64;
        frames.push(out.enhanced);
    }
    let n = clip.len() as f64;
    let sidecar = EnhanceSidecar {
        gamma,
        mu_in,
        l_over: finite(l_over / n, "lam")?,
        l_pix: finite(l_pix / n, "lam")?,
        config: cfg.clone(),
    };
    Ok((Tensor::stack(&frames)?, sidecar))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamsReport {
    pub tcm: usize,
    pub filter: usize,
    pub backbone: ParamCounts,
    pub total: usize,
    pub config: RunConfig,
}

pub fn params_report(cfg: &RunConfig) -> Result<ParamsReport> {
    let model = Model::build(cfg)?;
    let (tcm, filter) = (model.tcm.param_count(), model.filter.param_count());
    let backbone = model.backbone.param_counts();
    Ok(ParamsReport {
        tcm,
        filter,
        total: tcm + filter + backbone.total,
        backbone,
        config: cfg.clone(),
    })
}

/// Knobs the sweep harness can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    MuOut,
    KernelSize,
    Grid,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::MuOut => "mu_out",
            SweepParam::KernelSize => "u_p",
            SweepParam::Grid => "grid",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu_out" => Ok(SweepParam::MuOut),
            "u_p" => Ok(SweepParam::KernelSize),
            "grid" => Ok(SweepParam::Grid),
            _ => Err(Error::Config(format!("cannot sweep `{s}`; choose mu_out, u_p or grid"))),
        }
    }
}

pub const SWEEP_HEADER: &str = "param,value,clips,gamma,l_tc,l_over,l_pix,l_ce,L_total";

fn sweep_value(cfg: &RunConfig, param: SweepParam) -> String {
    match param {
        SweepParam::MuOut => cfg.mu_out.to_string(),
        SweepParam::KernelSize => cfg.u_p.to_string(),
        SweepParam::Grid => cfg.grid.to_string(),
    }
}

/// One CSV row per value, in the given order, each averaging the losses
/// over `clips`. Every value is validated before anything runs.
pub fn sweep(param: SweepParam, values: &[String], clips: &[Clip], base: &RunConfig) -> Result<String> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if clips.is_empty() {
        return Err(Error::Config("sweep needs at least one clip".into()));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(param.key(), v.trim())?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for cfg in &configs {
        let model = Model::build(cfg)?;
        let mut acc = [0.0f64; 6];
        for clip in clips {
            let r = pipeline_run(clip, cfg, &model)?;
            let gamma = r.gamma.iter().sum::<f64>() / r.gamma.len() as f64;
            let l = &r.losses;
            for (a, v) in acc
                .iter_mut()
                .zip([gamma, l.l_tc, l.l_over, l.l_pix, l.l_ce, l.l_total])
            {
                *a += v;
            }
        }
        let n = clips.len() as f64;
        let cells: Vec<String> = acc.iter().map(|a| format!("{}", a / n)).collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            param.key(),
            sweep_value(cfg, param),
            clips.len(),
            cells.join(",")
        ));
    }
    Ok(out)
}

pub const GRADCHECK_INSTANCES: usize = 20;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Instances are redrawn until every absolute-value argument is at least
/// this far from zero, so no central difference straddles a kink.
pub const KINK_MARGIN: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub checks: Vec<LossCheck>,
    pub passed: bool,
}

fn random_tensor(rng: &mut ParamRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, rng.fill(n, lo, hi)).expect("finite samples")
}

/// Smallest `|a_i − a_j|` over 8-neighbour region pairs.
fn min_neighbour_gap(means: &[f64], grid: RegionGrid) -> f64 {
    let mut gap = f64::INFINITY;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            for (dr, dc) in [(0, 1), (1, -1), (1, 0), (1, 1)] {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr < grid.rows as i64 && cc >= 0 && cc < grid.cols as i64 {
                    let j = rr as usize * grid.cols + cc as usize;
                    gap = gap.min((means[r * grid.cols + c] - means[j]).abs());
                }
            }
        }
    }
    gap
}

fn scf_instance(rng: &mut ParamRng, grid: RegionGrid) -> Result<(Tensor<f64>, Tensor<f64>)> {
    loop {
        let y = random_tensor(rng, &[1, 8, 8], 0.0, 1.0);
        let p = random_tensor(rng, &[1, 8, 8], 0.0, 1.0);
        if min_neighbour_gap(&region_means(&y, grid)?, grid) > KINK_MARGIN {
            return Ok((y, p));
        }
    }
}

fn tc_instance(rng: &mut ParamRng, grid: RegionGrid) -> Result<(Tensor<f64>, Tensor<f64>)> {
    'draw: loop {
        let e = random_tensor(rng, &[4, 3, 8, 8], 0.0, 1.0);
        let i = random_tensor(rng, &[4, 3, 8, 8], 0.0, 1.0);
        for t in 0..3 {
            let (a, b) = (e.frame(t), e.frame(t + 1));
            if a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() <= KINK_MARGIN) {
                continue 'draw;
            }
            if min_neighbour_gap(&region_means(&rgb_diff(&a, &b)?, grid)?, grid) <= KINK_MARGIN {
                continue 'draw;
            }
        }
        return Ok((e, i));
    }
}

fn illumination_instance(rng: &mut ParamRng) -> (Tensor<f64>, Tensor<f64>) {
    (
        random_tensor(rng, &[1, 8, 8], 0.05, 2.0),
        random_tensor(rng, &[1, 8, 8], 0.05, 1.0),
    )
}

/// Optionally damages one gradient entry; used as a negative control.
fn maybe_corrupt(mut grad: Tensor<f64>, corrupt: bool) -> Tensor<f64> {
    if corrupt {
        grad.data_mut()[0] += 1e-2;
    }
    grad
}

fn run_check<F>(name: &'static str, corrupt: bool, mut instance: F) -> Result<LossCheck>
where
    F: FnMut(bool) -> Result<f64>,
{
    let mut worst: f64 = 0.0;
    for _ in 0..GRADCHECK_INSTANCES {
        worst = worst.max(instance(corrupt)?);
    }
    Ok(LossCheck {
        loss: name,
        instances: GRADCHECK_INSTANCES,
        max_rel_error: worst,
        passed: worst < GRADCHECK_TOLERANCE,
    })
}

/// Compares each exported analytic gradient with central differences on
/// [`GRADCHECK_INSTANCES`] random 64-bit instances.
pub fn gradcheck_all(seed: u64, corrupt: bool) -> Result<GradcheckReport> {
    let mut rng = ParamRng::new(seed);
    let grid = RegionGrid::DEFAULT;
    let mut checks = Vec::new();

    checks.push(run_check("l_tc", corrupt, |c| {
        let (e, i) = tc_instance(&mut rng, grid)?;
        let g = maybe_corrupt(l_tc(&e, &i, grid)?.grad, c);
        grad_check(|x| l_tc(x, &i, grid).map_or(f64::NAN, |r| r.loss), &e, &g)
    })?);

    checks.push(run_check("l_scf", corrupt, |c| {
        let (y, p) = scf_instance(&mut rng, grid)?;
        let g = maybe_corrupt(tcm::l_scf(&y, &p, grid)?.grad, c);
        grad_check(|x| tcm::l_scf(x, &p, grid).map_or(f64::NAN, |r| r.loss), &y, &g)
    })?);

    checks.push(run_check("l_over", corrupt, |c| {
        let (s, i_lum) = illumination_instance(&mut rng);
        let loss = |x: &Tensor<f64>| IlluminationMap::new(x.clone(), i_lum.clone()).and_then(|m| lam::l_over(&m));
        let g = maybe_corrupt(loss(&s)?.grad, c);
        grad_check(|x| loss(x).map_or(f64::NAN, |r| r.loss), &s, &g)
    })?);

    checks.push(run_check("l_pix", corrupt, |c| {
        let (s, i_lum) = illumination_instance(&mut rng);
        let loss = |x: &Tensor<f64>| IlluminationMap::new(x.clone(), i_lum.clone()).and_then(|m| lam::l_pix(&m));
        let g = maybe_corrupt(loss(&s)?.grad, c);
        grad_check(|x| loss(x).map_or(f64::NAN, |r| r.loss), &s, &g)
    })?);

    checks.push(run_check("cross_entropy", corrupt, |c| {
        let classes = 10;
        let logits = random_tensor(&mut rng, &[classes], -3.0, 3.0);
        let target = rng.index(classes);
        let probs = ram::softmax(logits.data());
        let g = Tensor::new(&[classes], cross_entropy(&probs, target)?.dlogits)?;
        let g = maybe_corrupt(g, c);
        grad_check(
            |x| cross_entropy(&ram::softmax(x.data()), target).map_or(f64::NAN, |r| r.loss),
            &logits,
            &g,
        )
    })?);

    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport {
        seed,
        step: GRAD_CHECK_STEP,
        tolerance: GRADCHECK_TOLERANCE,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_clip(seed: u64, t: usize, h: usize, w: usize) -> Clip {
        let mut rng = ParamRng::new(seed);
        Clip::new(t, h, w, (0..t * 3 * h * w).map(|_| rng.byte()).collect()).unwrap()
    }

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("tcm_channels", "4"),
            ("stages", "8,16"),
            ("main_depths", "1,1"),
            ("num_classes", "3"),
            ("num_frames", "4"),
            ("u_p", "3"),
            ("grid", "2"),
        ] {
            cfg.set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn pipeline_is_deterministic_and_finite() {
        let cfg = small_config();
        let model = Model::build(&cfg).unwrap();
        let clip = random_clip(1, 6, 8, 8);
        let a = pipeline_run(&clip, &cfg, &model).unwrap();
        let b = pipeline_run(&clip, &cfg, &Model::build(&cfg).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.gamma.len(), 3);
        assert_eq!(a.input.frames, vec![0, 3, 0, 3]);
        assert!(a.losses.l_total.is_finite());
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn black_clip_has_zero_darkness() {
        let cfg = small_config();
        let clip = Clip::new(4, 8, 8, vec![0; 4 * 3 * 64]).unwrap();
        let r = pipeline_run(&clip, &cfg, &Model::build(&cfg).unwrap()).unwrap();
        assert_eq!(r.darkness.d_v, 0.0);
        assert!(r.darkness.zero_baseline);
        assert!(r.losses.l_total.is_finite());
    }

    #[test]
    fn sweep_rows_and_validation() {
        let cfg = small_config();
        let clips = [random_clip(2, 4, 8, 8)];
        let values: Vec<String> = ["0.4", "0.4"].iter().map(|s| s.to_string()).collect();
        let csv = sweep(SweepParam::MuOut, &values, &clips, &cfg).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines[1], lines[2]);
        assert!(lines[1].starts_with("mu_out,0.4,1,"));

        let bad: Vec<String> = ["0.5", "1.5"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(
            sweep(SweepParam::MuOut, &bad, &clips, &cfg),
            Err(Error::Config(_))
        ));
        assert!(sweep(SweepParam::KernelSize, &["4".to_string()], &clips, &cfg).is_err());
        assert!(sweep(SweepParam::Grid, &[], &clips, &cfg).is_err());
        assert!("batch".parse::<SweepParam>().is_err());
    }

    #[test]
    fn enhance_shapes() {
        let cfg = small_config();
        let clip = random_clip(3, 2, 8, 8);
        let (x, side) = enhance_clip(&clip, &cfg).unwrap();
        assert_eq!(x.shape(), &[2, 3, 8, 8]);
        assert_eq!(side.gamma.len(), 2);
    }

    #[test]
    fn params_sum() {
        let r = params_report(&small_config()).unwrap();
        assert_eq!(r.total, r.tcm + r.filter + r.backbone.total);
    }
}
