//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::Rng;
use scribble_core::data::{synthetic_samples, Sample, SynthConfig};
use scribble_core::eval::{
    dice, evaluate, iou, points_sweep, reports_from_json, reports_to_json, EvalReport, PromptMode, ProtocolConfig,
    DEFAULT_THRESHOLDS,
};
use scribble_core::net::{
    evaluate_loss, grad_check, record_episode, stage_flags, train_toy, Corrections, GradCheckFixture, NetConfig,
    NetGraph, RoundFlags, Tensor, TrainConfig, Trainable, LORA_ADAPTERS,
};
use scribble_core::raster::{
    connected_components, distance_transform, rasterize_stroke, BinaryMask, Metric, Polyline,
};
use scribble_core::rng::stream;
use scribble_core::scribble::{corrective_scribbles, generate_scribble, GenParams, ScribbleStyle};
use scribble_core::segment::{GeodesicSegmenter, OracleSegmenter, SegmenterKind};
use scribble_core::ToyNetParams64;

type Outcome = Result<String, String>;
type Suite = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn identity_at_init() -> Outcome {
    let start = Instant::now();
    let cfg = NetConfig::default();
    let samples = synthetic_samples(&SynthConfig {
        count: 3,
        side: 64,
        seed: 11,
        kinds: Vec::new(),
    })
    .map_err(err)?;
    let base = ToyNetParams64::init(&cfg, 5).map_err(err)?;
    let gen = GenParams::default();
    let rounds = 3;

    let run = |params: &ToyNetParams64, use_sgf: bool, sample: &Sample| -> Result<Vec<Vec<u64>>, String> {
        let gt = &sample.targets[0].mask;
        let s0 = generate_scribble(gt, ScribbleStyle::Adaptive, &gen, &mut stream(1, &[])).map_err(err)?;
        let mut net = NetGraph::new(params, Trainable::None);
        let flags = RoundFlags {
            use_sgf,
            use_memory: true,
        };
        let ep = record_episode(
            &mut net,
            &sample.image,
            gt,
            &s0,
            Corrections::Oracle { gen: &gen, seed: 2 },
            rounds,
            flags,
            0.0,
        )
        .map_err(err)?;
        Ok(ep
            .logits
            .iter()
            .map(|&l| net.value(l).data().iter().map(|v: &f64| v.to_bits()).collect())
            .collect())
    };

    let mut variants: Vec<(String, ToyNetParams64, bool)> = vec![("sgf off".into(), base.clone(), false)];
    for a in LORA_ADAPTERS {
        let mut p = base.clone();
        p.set_lora_enabled(a, false).map_err(err)?;
        variants.push((format!("{a} off"), p, true));
    }
    let mut all_off = base.clone();
    all_off.set_all_lora(false);
    variants.push(("everything off".into(), all_off, false));

    let mut compared = 0;
    for sample in &samples {
        let reference = run(&base, true, sample)?;
        for (name, p, sgf) in &variants {
            let got = run(p, *sgf, sample)?;
            check(got == reference, || format!("{name} changes the logits of {}", sample.id))?;
            compared += 1;
        }
    }
    // the toggles are live once the gates open
    let mut open = base.clone();
    open.set("sgf.alpha", Tensor::scalar(0.5)).map_err(err)?;
    check(run(&open, true, &samples[0])? != run(&open, false, &samples[0])?, || {
        "an open gate does not change the output".into()
    })?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{compared} toggled runs x {rounds} rounds bitwise equal to the reference in {:.1?}",
        start.elapsed()
    ))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let fx = GradCheckFixture::synthetic(&NetConfig::default(), 3, 0, true).map_err(err)?;
    let report = grad_check(&fx, Trainable::Stage2, 1e-6, None).map_err(err)?;
    let worst = report.max_rel_err();
    let trainable_tensors = fx.params.names().filter(|n| Trainable::Stage2.contains(n)).count();
    let checked = report.params.iter().filter(|p| p.trainable).count();
    check(checked == trainable_tensors, || {
        format!("checked {checked} of {trainable_tensors} trainable tensors")
    })?;
    let worst_trainable = report
        .params
        .iter()
        .filter(|p| p.trainable)
        .map(|p| p.max_rel_err)
        .fold(0.0, f64::max);
    check(worst_trainable < 1e-4, || format!("max relative error {worst_trainable:.3e}"))?;
    check(report.frozen_all_zero(), || "a frozen parameter has a nonzero gradient".into())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} values, max rel err {worst:.2e}, frozen exactly zero, {:.1?}",
        report.trainable_values(),
        start.elapsed()
    ))
}

fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let p: f64 = match rng.gen_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.02..0.98),
    };
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p))
}

fn metric_oracle() -> Outcome {
    let mut rng = stream(2024, &[3]);
    let mut max_ulp = 0u64;
    for _ in 0..1000 {
        let a = random_mask(&mut rng, 32, 32);
        let b = random_mask(&mut rng, 32, 32);
        let (mut inter, mut uni, mut pa, mut pb) = (0usize, 0usize, 0usize, 0usize);
        for (&x, &y) in a.bits().iter().zip(b.bits()) {
            inter += usize::from(x && y);
            uni += usize::from(x || y);
            pa += usize::from(x);
            pb += usize::from(y);
        }
        let want_iou = if uni == 0 { 1.0 } else { inter as f64 / uni as f64 };
        let want_dice = if pa + pb == 0 { 1.0 } else { 2.0 * inter as f64 / (pa + pb) as f64 };
        let i = iou(&a, &b).map_err(err)?;
        let d = dice(&a, &b).map_err(err)?;
        check(i.to_bits() == want_iou.to_bits(), || format!("iou {i} vs counted {want_iou}"))?;
        check(d.to_bits() == (2.0 * i / (1.0 + i)).to_bits(), || format!("dice {d} breaks 2i/(1+i)"))?;
        let ulps = d.to_bits().abs_diff(want_dice.to_bits());
        max_ulp = max_ulp.max(ulps);
        check(ulps <= 4, || format!("dice {d} vs counted {want_dice}"))?;
    }
    let e = BinaryMask::new(32, 32);
    check(iou(&e, &e).map_err(err)? == 1.0 && dice(&e, &e).map_err(err)? == 1.0, || {
        "empty/empty is not 1".into()
    })?;
    Ok(format!(
        "1000 pairs: iou bitwise, dice = 2i/(1+i) bitwise, counted dice within {max_ulp} ulp, empty/empty = 1"
    ))
}

const EIGHT: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

fn brute_components(m: &BinaryMask) -> Vec<u32> {
    let (w, h) = m.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !m.get_index(start) || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in EIGHT {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.get_index(j) && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    labels
}

/// Squared distance from `p` to segment `ab`: nearest endpoint unless the
/// foot of the perpendicular lies strictly inside the segment.
fn seg_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let d2 = |u: (f64, f64), v: (f64, f64)| (u.0 - v.0).powi(2) + (u.1 - v.1).powi(2);
    let (ux, uy) = (b.0 - a.0, b.1 - a.1);
    let before_a = (p.0 - a.0) * ux + (p.1 - a.1) * uy <= 0.0;
    let after_b = (p.0 - b.0) * -ux + (p.1 - b.1) * -uy <= 0.0;
    if before_a || after_b {
        return d2(p, a).min(d2(p, b));
    }
    let cross = ux * (p.1 - a.1) - uy * (p.0 - a.0);
    cross * cross / (ux * ux + uy * uy)
}

fn raster_oracle() -> Outcome {
    let mut rng = stream(77, &[]);
    let n = 16;
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let m = random_mask(&mut rng, n, n);
        let field = distance_transform::<f64>(&m, Metric::ExactEuclidean);
        let fg: Vec<(usize, usize)> = m.pixels().collect();
        for y in 0..n {
            for x in 0..n {
                let want = fg
                    .iter()
                    .map(|&(fx, fy)| ((fx as f64 - x as f64).powi(2) + (fy as f64 - y as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                let got = field.get(x, y);
                if want.is_infinite() {
                    check(got.is_infinite(), || format!("distance {got} on an empty mask"))?;
                } else {
                    worst = worst.max((got - want).abs());
                    check((got - want).abs() <= 1e-6, || format!("distance {got} vs {want} at ({x},{y})"))?;
                }
            }
        }
        let labels = connected_components(&m);
        check(labels.labels == brute_components(&m), || "component labels differ".into())?;
    }
    let mut strokes = 0;
    for _ in 0..300 {
        let k = rng.gen_range(1..5);
        let pts: Vec<(f64, f64)> = (0..=k)
            .map(|_| (rng.gen_range(-4.0..20.0), rng.gen_range(-4.0..20.0)))
            .collect();
        let width = rng.gen_range(1.0..6.0);
        let closed = rng.gen_bool(0.3) && pts.len() >= 3;
        let line = if closed {
            Polyline::closed(pts.clone())
        } else {
            Polyline::open(pts.clone())
        };
        let mask = rasterize_stroke((n, n), &line, width).map_err(err)?;
        let mut segs: Vec<((f64, f64), (f64, f64))> = pts.windows(2).map(|s| (s[0], s[1])).collect();
        if closed {
            segs.push((pts[pts.len() - 1], pts[0]));
        }
        let r2 = (width / 2.0) * (width / 2.0);
        for y in 0..n {
            for x in 0..n {
                let p = (x as f64, y as f64);
                let want = segs.iter().any(|&(a, b)| seg_dist2(p, a, b) <= r2);
                check(mask.get(x, y) == want, || format!("stroke pixel ({x},{y}) differs"))?;
            }
        }
        strokes += 1;
    }
    Ok(format!(
        "300 masks (max distance error {worst:.1e}, labels exact) and {strokes} strokes bit-exact on 16x16"
    ))
}

fn scribble_soundness() -> Outcome {
    let gen = GenParams::default();
    let styles = [
        ScribbleStyle::Adaptive,
        ScribbleStyle::Centerline,
        ScribbleStyle::Wave,
        ScribbleStyle::Contour,
    ];
    let mut shapes = 0;
    let mut strokes_checked = 0;
    for batch in 0..10u64 {
        let samples = synthetic_samples(&SynthConfig {
            count: 50,
            side: 64,
            seed: 1000 + batch,
            kinds: Vec::new(),
        })
        .map_err(err)?;
        for (i, s) in samples.iter().enumerate() {
            let gt = &s.targets[0].mask;
            let style = styles[(i + batch as usize) % styles.len()];
            let seed = batch * 100 + i as u64;
            let a = generate_scribble(gt, style, &gen, &mut stream(seed, &[])).map_err(err)?;
            let b = generate_scribble(gt, style, &gen, &mut stream(seed, &[])).map_err(err)?;
            check(a.to_rle_json() == b.to_rle_json(), || format!("{} not reproducible", s.id))?;
            check(a.positive().is_subset_of(gt), || format!("{} positive outside gt", s.id))?;
            check(a.negative().is_empty(), || format!("{} initial scribble has negatives", s.id))?;
            let comps = connected_components(gt);
            for id in 1..=comps.count {
                if comps.areas[id - 1] < gen.min_component_area {
                    continue;
                }
                let covered = comps.component_mask(id).intersection_count(a.positive()).map_err(err)?;
                check(covered > 0, || format!("{} component {id} has no stroke", s.id))?;
                strokes_checked += 1;
            }

            // a shifted prediction gives both false negatives and false positives
            let dx = 3 + (i % 5);
            let pred = BinaryMask::from_fn(gt.width(), gt.height(), |x, y| x >= dx && gt.get(x - dx, y));
            let c1 = corrective_scribbles(&pred, gt, &gen, &mut stream(seed, &[1])).map_err(err)?;
            let c2 = corrective_scribbles(&pred, gt, &gen, &mut stream(seed, &[1])).map_err(err)?;
            check(c1.to_rle_json() == c2.to_rle_json(), || format!("{} correction not reproducible", s.id))?;
            check(c1.negative().intersection_count(gt).map_err(err)? == 0, || {
                format!("{} negative correction touches gt", s.id)
            })?;
            check(c1.positive().is_subset_of(gt), || format!("{} positive correction outside gt", s.id))?;
            for (region, strokes) in [
                (gt.and_not(&pred).map_err(err)?, c1.positive()),
                (pred.and_not(gt).map_err(err)?, c1.negative()),
            ] {
                let comps = connected_components(&region);
                for id in 1..=comps.count {
                    if comps.areas[id - 1] < gen.min_component_area {
                        continue;
                    }
                    let hit = comps.component_mask(id).intersection_count(strokes).map_err(err)?;
                    check(hit > 0, || format!("{} error component {id} has no correction", s.id))?;
                    strokes_checked += 1;
                }
            }
            shapes += 1;
        }
    }
    check(shapes == 500, || format!("only {shapes} shapes"))?;
    Ok(format!(
        "{shapes} shapes, {strokes_checked} components covered, containment and reproducibility hold"
    ))
}

fn protocol_suite() -> Outcome {
    let samples = synthetic_samples(&SynthConfig::default()).map_err(err)?;
    let seg = OracleSegmenter::default();
    let schedule_len = 3;
    let cfg = ProtocolConfig {
        rounds: schedule_len,
        backend: SegmenterKind::Oracle,
        seed: 7,
        ..ProtocolConfig::default()
    };
    let one = evaluate("oracle", &samples, &cfg, &seg, 1).map_err(err)?;
    let eight = evaluate("oracle", &samples, &cfg, &seg, 8).map_err(err)?;
    check(
        reports_to_json(std::slice::from_ref(&one)).map_err(err)? == reports_to_json(&[eight]).map_err(err)?,
        || "workers 1 and 8 disagree".into(),
    )?;
    let conv = &one.convergence;
    check(conv.thresholds.len() == DEFAULT_THRESHOLDS.len(), || "threshold grid".into())?;
    for t in &conv.thresholds {
        check(t.success_pct == 100.0, || {
            format!("success {} at {}", t.success_pct, t.threshold)
        })?;
        check(t.cumulative_pct.windows(2).all(|w| w[0] <= w[1]), || {
            format!("cumulative curve at {} decreases", t.threshold)
        })?;
    }
    Ok(format!(
        "{} targets, 100% success at 0.75/0.85/0.90 within {schedule_len} rounds, curves monotone, workers 1 = 8",
        conv.targets
    ))
}

const GEODESIC_BASELINE: [f64; 3] = [0.2243346189819074, 0.378673197688334, 0.5291852084782073];

fn geodesic_regression() -> Outcome {
    let start = Instant::now();
    let samples = synthetic_samples(&SynthConfig::default()).map_err(err)?;
    let cfg = ProtocolConfig {
        rounds: 3,
        backend: SegmenterKind::Geodesic,
        prompt_mode: PromptMode::Scribble {
            style: ScribbleStyle::Adaptive,
        },
        ..ProtocolConfig::default()
    };
    let report = evaluate("geodesic", &samples, &cfg, &GeodesicSegmenter::default(), 1).map_err(err)?;
    let d: Vec<f64> = report.rounds.iter().map(|r| r.m_dice).collect();
    check(d.len() == 3, || format!("{} rounds", d.len()))?;
    check(d[0] < d[1] && d[1] < d[2], || format!("mean Dice not increasing: {d:?}"))?;
    check(d[2] - d[0] >= 0.05, || format!("gain {:.4}", d[2] - d[0]))?;
    for (got, want) in d.iter().zip(GEODESIC_BASELINE) {
        check((got - want).abs() <= 1e-9, || format!("drifted from baseline: {d:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "mDice R0 {:.2}% R1 {:.2}% R2 {:.2}% (+{:.2} pp), matches pinned baseline, {:.1?}",
        100.0 * d[0],
        100.0 * d[1],
        100.0 * d[2],
        100.0 * (d[2] - d[0]),
        start.elapsed()
    ))
}

fn toy_training() -> Outcome {
    let start = Instant::now();
    let samples = synthetic_samples(&SynthConfig {
        count: 20,
        side: 64,
        seed: 0,
        kinds: Vec::new(),
    })
    .map_err(err)?;
    let mut params = ToyNetParams64::init(&NetConfig::default(), 0).map_err(err)?;
    let init = params.clone();
    let base = TrainConfig::default();
    let loss_of = |p: &ToyNetParams64, stage: u8| {
        evaluate_loss(p, &samples, stage_flags(stage), &base.loss, &base.gen, base.seed).map_err(err)
    };
    let initial = loss_of(&params, 1)?;
    train_toy(
        &mut params,
        &samples,
        &TrainConfig {
            stage: 1,
            steps: 200,
            ..base.clone()
        },
    )
    .map_err(err)?;
    for (name, t) in params.iter() {
        if !Trainable::Stage1.contains(name) {
            check(t.bit_eq(init.get(name).map_err(err)?), || format!("stage 1 changed {name}"))?;
        }
    }
    let after_one = loss_of(&params, 1)?;
    train_toy(
        &mut params,
        &samples,
        &TrainConfig {
            stage: 2,
            steps: 200,
            ..base.clone()
        },
    )
    .map_err(err)?;
    let fin = loss_of(&params, 2)?;
    check(fin < 0.5 * initial, || format!("loss {initial:.4} -> {fin:.4}"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "loss {initial:.4} -> {after_one:.4} (stage 1) -> {fin:.4} (stage 2), ratio {:.2}, stage 1 left gate/memory at init, {:.1?}",
        fin / initial,
        start.elapsed()
    ))
}

fn points_density_sweep() -> Outcome {
    let samples = synthetic_samples(&SynthConfig::default()).map_err(err)?;
    let densities = [1, 10, 30, 50];
    let cfg = ProtocolConfig::default();
    let reports = points_sweep(&samples, &cfg, &densities, &GeodesicSegmenter::default(), 1).map_err(err)?;
    check(reports.len() == densities.len(), || format!("{} reports", reports.len()))?;
    let keys = ["config", "convergence", "evaluated", "method", "records", "rounds", "skipped"];
    let round_keys = ["c_dice", "c_iou", "m_dice", "m_iou", "round"];
    for (r, k) in reports.iter().zip(densities) {
        check(r.method == format!("geodesic/{k}pt-ch"), || format!("method {}", r.method))?;
        check(r.config.prompt_mode == PromptMode::PointsPerChannel { k }, || "prompt mode".into())?;
        check(r.rounds.len() == cfg.rounds, || format!("{} rounds", r.rounds.len()))?;
        let v = serde_json::to_value(r).map_err(err)?;
        let mut got: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        got.sort_unstable();
        check(got == keys, || format!("report keys {got:?}"))?;
        let mut rk: Vec<&str> = v["rounds"][0].as_object().unwrap().keys().map(String::as_str).collect();
        rk.sort_unstable();
        check(rk == round_keys, || format!("round keys {rk:?}"))?;
    }
    let back: Vec<EvalReport> = reports_from_json(&reports_to_json(&reports).map_err(err)?).map_err(err)?;
    check(back == reports, || "JSON round trip".into())?;
    let summary: Vec<String> = reports
        .iter()
        .map(|r| format!("{}:{:.1}%", r.config.prompt_mode, 100.0 * r.rounds.last().unwrap().m_dice))
        .collect();
    Ok(format!("one report per density, schema verified; final mDice {}", summary.join(" ")))
}

fn main() {
    let suites: [Suite; 9] = [
        ("identity-at-init", identity_at_init),
        ("gradient", gradient_suite),
        ("metric-oracle", metric_oracle),
        ("raster-oracle", raster_oracle),
        ("scribble-soundness", scribble_soundness),
        ("protocol", protocol_suite),
        ("geodesic-regression", geodesic_regression),
        ("toy-training", toy_training),
        ("points-density-sweep", points_density_sweep),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in suites {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
