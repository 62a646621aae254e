//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use darksight::config::RunConfig;
use darksight::curate::{self, ManifestEntry, Split};
use darksight::gdq::{self, IntensityModel, LightLabel, DEFAULT_TAU};
use darksight::init::ParamRng;
use darksight::lam::{
    apply_filter_bank, build_filter_bank, estimate_gamma, gamma_from_means, gamma_transform, l_over, l_pix, FilterBank,
    FilterGenerator, IlluminationMap, CONTRAST_SCALE,
};
use darksight::pipeline::{self, Model, SweepParam, GRADCHECK_INSTANCES, SWEEP_HEADER};
use darksight::ram::{cross_entropy, stage_forward, Backbone, BackboneConfig, Stage, TransformerBlock};
use darksight::tcm::{l_scf, l_tc, tcm_forward_traced, RegionGrid, TcmParams};
use darksight::tensor::{conv2d, ConvSpec, Tensor, GRAD_CHECK_STEP};
use darksight::video::Clip;

/// Reason a criterion failed. Any displayable error converts into it.
struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Outcome = Result<String, Fail>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), Fail> {
    if cond {
        Ok(())
    } else {
        Err(Fail(msg.into()))
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), Fail> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("{what} took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn random_clip(rng: &mut ParamRng, t: usize, h: usize, w: usize) -> Clip {
    Clip::new(t, h, w, (0..t * 3 * h * w).map(|_| rng.byte()).collect()).unwrap()
}

/// Clip whose every pixel has R = G = B = the given intensity.
fn gray_clip(frames: &[&[u8]], h: usize, w: usize) -> Clip {
    let mut bytes = Vec::new();
    for f in frames {
        for _ in 0..3 {
            bytes.extend_from_slice(f);
        }
    }
    Clip::new(frames.len(), h, w, bytes).unwrap()
}

/// Straight from the definition with explicit loops over the raw bytes.
fn naive_darkness(clip: &Clip) -> f64 {
    let (t, h, w) = (clip.len(), clip.height(), clip.width());
    let bytes = clip.bytes();
    let px = h * w;
    let mut mu = vec![0.0; t];
    let mut sigma = vec![0.0; t];
    for f in 0..t {
        let base = f * 3 * px;
        let intensity =
            |p: usize| (bytes[base + p] as f64 + bytes[base + px + p] as f64 + bytes[base + 2 * px + p] as f64) / 3.0;
        let mut s = 0.0;
        for p in 0..px {
            s += intensity(p);
        }
        mu[f] = s / px as f64;
        let mut v = 0.0;
        for p in 0..px {
            v += (intensity(p) - mu[f]) * (intensity(p) - mu[f]);
        }
        sigma[f] = (v / px as f64).sqrt();
    }
    let mut mu_c = 0.0;
    for m in &mu {
        mu_c += m;
    }
    mu_c /= t as f64;
    if mu_c == 0.0 {
        return 0.0;
    }
    let mut d = 0.0;
    for f in 0..t {
        d += (mu[f] - mu_c) / mu_c * sigma[f];
    }
    d / t as f64
}

fn gdq_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ParamRng::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (t, h, w) = (1 + rng.index(8), 1 + rng.index(16), 1 + rng.index(16));
        let clip = random_clip(&mut rng, t, h, w);
        let got = gdq::darkness_index(&clip, IntensityModel::RgbMean, DEFAULT_TAU).d_v;
        worst = worst.max((got - naive_darkness(&clip)).abs());
    }
    check(worst <= 1e-9, format!("max deviation from oracle {worst:e}"))?;
    let clip = gray_clip(&[&[10, 10, 30, 30], &[30, 50, 50, 70]], 2, 2);
    let r = gdq::darkness_index(&clip, IntensityModel::RgbMean, DEFAULT_TAU);
    check((r.d_v - 0.8876).abs() <= 1e-4, format!("hand example gave {}", r.d_v))?;
    check(
        r.label == LightLabel::NormalLight,
        "hand example should be normal_light",
    )?;
    within(start.elapsed(), 5.0, "GDQ suite")?;
    Ok(format!(
        "100 clips, max |diff| {worst:.1e}; hand example {:.4}; {:.2} s",
        r.d_v,
        start.elapsed().as_secs_f64()
    ))
}

fn threshold() -> Outcome {
    check(
        gdq::classify(-0.877, DEFAULT_TAU) == LightLabel::NormalLight,
        "-0.877 must be normal_light",
    )?;
    check(
        gdq::classify(-0.8771, DEFAULT_TAU) == LightLabel::LowLight,
        "-0.8771 must be low_light",
    )?;
    Ok("-0.877 normal_light, -0.8771 low_light".into())
}

fn gamma_identities() -> Outcome {
    let g1 = gamma_from_means(0.5f64, 0.5)?.gamma;
    check(g1 == 1.0, format!("(0.5, 0.5) gave {g1}"))?;
    let g2 = gamma_from_means(0.25f64, 0.5)?.gamma;
    check(g2 == 0.5, format!("(0.25, 0.5) gave {g2}"))?;
    let x = Tensor::<f64>::full(&[3, 8, 8], 0.25);
    let (params, normalized, _) = estimate_gamma(&x, 0.5)?;
    let y = gamma_transform(&normalized, params.gamma);
    let dev = y.data().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    check(
        dev <= 1e-6,
        format!("constant 0.25 mapped with deviation {dev:e} from 0.5"),
    )?;
    Ok(format!("gamma 1 and {g2}; constant map lands on 0.5 (dev {dev:.1e})"))
}

fn loss_identities() -> Outcome {
    let mut rng = ParamRng::new(404);
    let grid = RegionGrid::DEFAULT;
    let x = Tensor::<f64>::new(&[5, 3, 8, 8], rng.fill(5 * 192, 0.0, 1.0))?;
    let same = l_tc(&x, &x, grid)?.loss;
    check(same == 0.0, format!("l_tc(x, x) = {same}"))?;

    // Per-frame offsets added to a clip whose brightness rises frame over
    // frame: every consecutive difference keeps its sign, so each RGB
    // difference map moves by a constant and the region contrasts cancel.
    let n = 192;
    let rising: Vec<f64> = (0..5)
        .flat_map(|f| rng.fill::<f64>(n, 0.0, 0.5).into_iter().map(move |v| v + f as f64))
        .collect();
    let input = Tensor::new(&[5, 3, 8, 8], rising)?;
    let offsets = [0.0, 0.3, 0.35, 1.1, 1.4];
    let shifted = Tensor::new(
        input.shape(),
        input
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + offsets[i / n])
            .collect(),
    )?;
    let inv = l_tc(&shifted, &input, grid)?.loss;
    check(inv.abs() <= 1e-9, format!("per-frame offsets changed l_tc to {inv:e}"))?;

    let y = Tensor::<f64>::new(&[1, 8, 8], rng.fill(64, 0.0, 1.0))?;
    let p = Tensor::<f64>::new(&[1, 8, 8], rng.fill(64, 0.0, 1.0))?;
    let (a, b) = (l_scf(&y, &p, grid)?.loss, l_scf(&p, &y, grid)?.loss);
    check((a - b).abs() <= 1e-12, format!("l_scf asymmetric: {a} vs {b}"))?;
    let single = l_scf(&y, &p, RegionGrid::square(1))?.loss;
    check(single == 0.0, format!("l_scf at grid 1 = {single}"))?;

    let i_lum = Tensor::<f64>::new(&[1, 8, 8], rng.fill(64, 0.1, 1.0))?;
    let probe = IlluminationMap::new(Tensor::zeros(&[1, 8, 8]), i_lum.clone())?;
    let at_inv_alpha = IlluminationMap::new(Tensor::full(&[1, 8, 8], 1.0 / probe.alpha), i_lum.clone())?;
    let lo = l_over(&at_inv_alpha)?.loss;
    check(lo.abs() <= 1e-12, format!("l_over at S = 1/alpha is {lo:e}"))?;
    check(
        probe.beta == CONTRAST_SCALE && CONTRAST_SCALE == 0.7,
        "beta must be 0.7",
    )?;
    let at_target = IlluminationMap::new(probe.pixel_target(), i_lum)?;
    let lp = l_pix(&at_target)?.loss;
    check(lp.abs() <= 1e-12, format!("l_pix at its target is {lp:e}"))?;

    let uniform = vec![1.0f64 / 101.0; 101];
    let ce = cross_entropy(&uniform, 17)?.loss;
    check((ce - 101f64.ln()).abs() <= 1e-6, format!("uniform cross-entropy {ce}"))?;
    Ok(format!(
        "l_tc offsets {inv:.1e}, l_scf sym, l_over {lo:.1e}, l_pix {lp:.1e}, CE {ce:.6}"
    ))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let report = pipeline::gradcheck_all(2024, false)?;
    check(
        report.step == GRAD_CHECK_STEP && GRAD_CHECK_STEP == 1e-5,
        "step must be 1e-5",
    )?;
    let mut parts = Vec::new();
    for c in &report.checks {
        check(
            c.instances == GRADCHECK_INSTANCES && c.instances == 20,
            "20 instances per loss",
        )?;
        check(
            c.max_rel_error < 1e-4,
            format!("{} max rel error {:e}", c.loss, c.max_rel_error),
        )?;
        parts.push(format!("{} {:.1e}", c.loss, c.max_rel_error));
    }
    check(report.checks.len() == 5, "five losses expected")?;
    within(start.elapsed(), 60.0, "gradient checks")?;
    Ok(format!("{}; {:.2} s", parts.join(", "), start.elapsed().as_secs_f64()))
}

fn gate_check() -> Outcome {
    let mut rng = ParamRng::new(606);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut params = TcmParams::<f64>::init(8, &mut rng);
        for g in params.gates.iter_mut() {
            *g = ConvSpec::zeros(8, 8, 3, 1, 1);
        }
        let clip = Tensor::new(&[3, 3, 12, 12], rng.fill(3 * 3 * 144, 0.0, 1.0))?;
        for pair in tcm_forward_traced(&clip, &params)? {
            let (a, b) = pair.shallow.split_channels()?;
            for ((z, x), y) in pair.fused.data().iter().zip(a.data()).zip(b.data()) {
                worst = worst.max((z - 0.5 * (x + y)).abs());
            }
        }
    }
    check(worst <= 1e-6, format!("max deviation {worst:e}"))?;
    Ok(format!("zero gates give the half sum, max dev {worst:.1e}"))
}

fn filter_checks() -> Outcome {
    let mut rng = ParamRng::new(707);
    let x = Tensor::<f64>::new(&[3, 9, 11], rng.fill(297, -1.0, 1.0))?;
    check(
        apply_filter_bank(&x, &FilterBank::delta(5, 9, 11))? == x,
        "delta kernels changed the input",
    )?;
    let (c, h, w, u) = (3usize, 16usize, 16usize, 5usize);
    let r = (u / 2) as i64;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let gen = FilterGenerator::<f64>::init(c, u, &mut rng)?;
        let y = Tensor::new(&[c, h, w], rng.fill(c * h * w, 0.0, 1.0))?;
        let x = Tensor::new(&[c, h, w], rng.fill(c * h * w, -2.0, 2.0))?;
        let bank = build_filter_bank(&y, &gen)?;
        let out = apply_filter_bank(&x, &bank)?;
        for ch in 0..c {
            for i in 0..h as i64 {
                for j in 0..w as i64 {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for di in -r..=r {
                        for dj in -r..=r {
                            let (ii, jj) = (i + di, j + dj);
                            let v = if ii < 0 || jj < 0 || ii >= h as i64 || jj >= w as i64 {
                                0.0
                            } else {
                                x.data()[ch * h * w + ii as usize * w + jj as usize]
                            };
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let v = out.data()[ch * h * w + i as usize * w + j as usize];
                    worst = worst.max(lo - v).max(v - hi);
                }
            }
        }
    }
    check(worst <= 1e-12, format!("output left its patch range by {worst:e}"))?;
    Ok("delta identity exact; 50 instances inside patch [min, max]".into())
}

fn topology_check() -> Outcome {
    let mut rng = ParamRng::new(808);
    let mut stage = Stage::<f64>::init(8, 16, 2, 2, &mut rng);
    let x = Tensor::new(&[8, 12, 12], rng.fill(8 * 144, -1.0, 1.0))?;
    let random = stage_forward(&x, &stage)?;
    let doubled = conv2d(&Tensor::concat_channels(&random.main, &random.main)?, &stage.fuse)?;
    stage.reflected = TransformerBlock::zeros(16, 2);
    let zeroed = stage_forward(&x, &stage)?;
    let max_diff = |a: &Tensor<f64>, b: &Tensor<f64>| {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    let dz = max_diff(&zeroed.fused, &doubled);
    check(dz <= 1e-6, format!("zero reflected block: fused deviates by {dz:e}"))?;
    let dr = max_diff(&random.fused, &doubled);
    check(dr > 1e-6, format!("random reflected block moved fused by only {dr:e}"))?;
    let counts = Backbone::<f32>::init(&BackboneConfig::default(), &mut ParamRng::new(1))?.param_counts();
    check(
        counts.reflected_overhead < 0.15,
        format!("reflected overhead {:.2}%", 100.0 * counts.reflected_overhead),
    )?;
    Ok(format!(
        "zeroed dev {dz:.1e}, random shift {dr:.2e}, overhead {:.2}%",
        100.0 * counts.reflected_overhead
    ))
}

fn synthetic(counts: &[(String, usize)]) -> Vec<ManifestEntry> {
    counts
        .iter()
        .flat_map(|(class, n)| {
            (0..*n).map(move |i| ManifestEntry {
                path: format!("{class}/clip_{i:05}"),
                class_label: class.clone(),
                num_frames: 32,
                d_v: -1.0,
                light: LightLabel::LowLight,
                split: Split::Unassigned,
            })
        })
        .collect()
}

fn curation() -> Outcome {
    let four: Vec<(String, usize)> = [("a", 200), ("b", 151), ("c", 150), ("d", 149)]
        .iter()
        .map(|&(c, n)| (c.to_string(), n))
        .collect();
    let kept = curate::filter_classes(synthetic(&four), 150);
    let classes = curate::stats(&kept, None).num_classes;
    check(classes == 3, format!("kept {classes} classes"))?;

    let split = curate::split_80_20(synthetic(&[("x".into(), 100)]), 7);
    let s = curate::stats(&split, None);
    check((s.train, s.test) == (80, 20), format!("split {}/{}", s.train, s.test))?;

    // 101 classes summing to 18310: 29 of 182 and 72 of 181.
    let replica: Vec<(String, usize)> = (0..101)
        .map(|i| (format!("action_{i:03}"), if i < 29 { 182 } else { 181 }))
        .collect();
    let st = curate::stats(&synthetic(&replica), Some(138));
    check(
        (st.num_classes, st.total_videos) == (101, 18310),
        format!("replica gave {} / {}", st.num_classes, st.total_videos),
    )?;
    Ok(format!("3 classes kept; 80/20; {}", st.table_row("replica")))
}

fn end_to_end() -> Outcome {
    let cfg = RunConfig::default();
    let clip = random_clip(&mut ParamRng::new(1010), 8, 32, 32);
    let start = Instant::now();
    let first = pipeline::pipeline_run(&clip, &cfg, &Model::build(&cfg)?)?;
    let elapsed = start.elapsed();
    check(first.losses.l_total.is_finite(), "L_total not finite")?;
    within(elapsed, 10.0, "pipeline")?;
    let second = pipeline::pipeline_run(&clip, &cfg, &Model::build(&cfg)?)?;
    let (a, b) = (serde_json::to_vec(&first)?, serde_json::to_vec(&second)?);
    check(a == b, "reports differ between runs")?;
    Ok(format!(
        "L_total {:.6} in {:.2} s; reports byte-identical",
        first.losses.l_total,
        elapsed.as_secs_f64()
    ))
}

fn sweep_harness() -> Outcome {
    let cfg = RunConfig::default();
    let clip = random_clip(&mut ParamRng::new(1111), 8, 32, 32);
    let values: Vec<String> = ["0.3", "0.4", "0.5", "0.6", "0.7"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let csv = pipeline::sweep(SweepParam::MuOut, &values, &[clip], &cfg)?;
    let lines: Vec<&str> = csv.lines().collect();
    check(lines.first() == Some(&SWEEP_HEADER), "missing header")?;
    check(lines.len() == 6, format!("{} data rows", lines.len() - 1))?;
    for (line, v) in lines[1..].iter().zip(&values) {
        let cells: Vec<&str> = line.split(',').collect();
        check(cells[1] == v.as_str(), format!("row for {v} reads {}", cells[1]))?;
        for cell in &cells[2..] {
            let x: f64 = cell.parse().map_err(|_| format!("unparsable cell {cell}"))?;
            check(x.is_finite(), format!("non-finite cell in row {v}"))?;
        }
    }
    Ok("5 rows for mu_out 0.3..0.7, all metrics finite".into())
}

fn run(name: &str, f: fn() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(Fail("panicked".into())));
    match outcome {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(Fail(reason)) => {
            println!("FAIL  {name}: {reason}");
            false
        }
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 gdq oracle equivalence", gdq_oracle),
        ("2 threshold semantics", threshold),
        ("3 gamma identities", gamma_identities),
        ("4 loss identities", loss_identities),
        ("5 gradient checks", gradient_checks),
        ("6 gate check", gate_check),
        ("7 filter checks", filter_checks),
        ("8 reflect topology", topology_check),
        ("9 curation", curation),
        ("10 end-to-end smoke", end_to_end),
        ("11 sweep harness", sweep_harness),
    ];
    let passed = criteria.iter().filter(|(name, f)| run(name, *f)).count();
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
