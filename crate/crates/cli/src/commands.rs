use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::info;
use scribble_core::data::{synthetic_samples, write_synthetic_manifest, DatasetManifest, Sample, SynthConfig};
use scribble_core::eval::{
    evaluate, points_sweep, read_reports, refinement_curves_csv, reports_to_json, success_curves_csv, to_csv,
    EvalReport, ProtocolConfig,
};
use scribble_core::net::{
    evaluate_loss, grad_check, stage_flags, train_toy, AdamWConfig, GradCheckFixture, LossConfig, ToyNetParams,
    TrainConfig, Trainable,
};
use scribble_core::raster::BinaryMask;
use scribble_core::refine::RefineConfig;
use scribble_core::rng::stream;
use scribble_core::scribble::{corrective_scribbles_with_style, generate_scribble};
use scribble_core::segment::{
    GeodesicParams, GeodesicSegmenter, OracleParams, OracleSegmenter, Segmenter, SegmenterKind, ToyNetSegmenter,
};
use scribble_server::{AppState, Catalog};

use crate::args::{
    BackendArgs, EvalArgs, GradcheckArgs, ProtocolArgs, ReportArgs, ReportKind, ReportOutput, ScribbleArgs, ServeArgs,
    StageArg, SweepArgs, SynthArgs, TrainArgs,
};

/// Writes `text` to `out`, or stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_samples(manifest: Option<&Path>) -> Result<(String, Vec<Sample>)> {
    match manifest {
        Some(p) => {
            let (m, samples) = DatasetManifest::load(p)?;
            info!("loaded {} samples from {}", samples.len(), p.display());
            Ok((m.name, samples))
        }
        None => Ok(("synthetic".into(), synthetic_samples(&SynthConfig::default())?)),
    }
}

fn toy_params(args: &BackendArgs, seed: u64) -> Result<ToyNetParams<f64>> {
    match &args.params {
        Some(p) => Ok(ToyNetParams::load(p)?),
        None => Ok(ToyNetParams::init(&args.net.config(), seed)?),
    }
}

fn build_segmenter(args: &BackendArgs, kind: SegmenterKind, seed: u64) -> Result<Arc<dyn Segmenter>> {
    Ok(match kind {
        SegmenterKind::Geodesic => Arc::new(GeodesicSegmenter::new(GeodesicParams {
            lambda: args.lambda,
            connectivity: args.connectivity,
        })?),
        SegmenterKind::Oracle => Arc::new(OracleSegmenter::new(OracleParams {
            schedule: args.oracle_schedule.clone(),
            seed,
            patches: args.oracle_patches,
        })?),
        SegmenterKind::ToyNet => {
            let params = toy_params(args, seed)?;
            let net = params.config().clone();
            let cfg = if args.baseline {
                RefineConfig::baseline(net)
            } else {
                RefineConfig {
                    net,
                    ..RefineConfig::default()
                }
            };
            Arc::new(ToyNetSegmenter::new(Arc::new(params), cfg))
        }
    })
}

fn protocol_config(p: &ProtocolArgs, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        rounds: p.rounds,
        tau: p.tau,
        seed,
        backend: p.backend.backend,
        gen: p.gen.params(seed),
        ..ProtocolConfig::default()
    }
}

fn write_reports(reports: &[EvalReport], kind: ReportKind, out: Option<&Path>) -> Result<()> {
    let text = match kind {
        ReportKind::Json => reports_to_json(reports)?,
        ReportKind::Csv => to_csv(reports),
    };
    emit(out, &text)
}

pub fn scribble(a: &ScribbleArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let gt = BinaryMask::load_png(&a.mask)?;
    let gen = a.gen.params(seed);
    let mut rng = stream(gen.seed, &[]);
    let map = match &a.pred {
        Some(p) => corrective_scribbles_with_style(&BinaryMask::load_png(p)?, &gt, a.style, &gen, &mut rng)?,
        None => generate_scribble(&gt, a.style, &gen, &mut rng)?,
    };
    info!(
        "{} positive and {} negative pixels",
        map.positive().count(),
        map.negative().count()
    );
    if a.json {
        let mut text = map.to_rle_json();
        text.push('\n');
        return emit(out, &text);
    }
    let prefix = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("scribble"));
    let (p, n) = map.save_png_pair(&prefix)?;
    info!("wrote {} and {}", p.display(), n.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let p = &a.protocol;
    let (_, samples) = load_samples(p.manifest.as_deref())?;
    let cfg = ProtocolConfig {
        prompt_mode: a.prompt_mode,
        ..protocol_config(p, seed)
    };
    let seg = build_segmenter(&p.backend, p.backend.backend, seed)?;
    let method = a
        .method
        .clone()
        .unwrap_or_else(|| format!("{}/{}", p.backend.backend, a.prompt_mode));
    let report = evaluate(method, &samples, &cfg, seg.as_ref(), p.workers)?;
    if let Some(last) = report.rounds.last() {
        info!("R{} mDice {:.4} over {} targets", last.round, last.m_dice, report.evaluated);
    }
    write_reports(&[report], p.format, out)
}

pub fn points_sweep_cmd(a: &SweepArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let p = &a.protocol;
    let (_, samples) = load_samples(p.manifest.as_deref())?;
    let seg = build_segmenter(&p.backend, p.backend.backend, seed)?;
    let reports = points_sweep(&samples, &protocol_config(p, seed), &a.densities, seg.as_ref(), p.workers)?;
    write_reports(&reports, p.format, out)
}

/// Returns whether every module passed.
pub fn gradcheck(a: &GradcheckArgs, seed: u64, out: Option<&Path>) -> Result<bool> {
    let mut fx = GradCheckFixture::synthetic(&a.net.config(), a.rounds, seed, !a.zero_gates)?;
    if let Some(p) = &a.params {
        fx.params = ToyNetParams::load(p)?;
        if fx.params.config() != &a.net.config() {
            bail!("snapshot {} does not match the network flags", p.display());
        }
    }
    let trainable = match a.stage {
        StageArg::One => Trainable::Stage1,
        StageArg::Two => Trainable::Stage2,
        StageArg::All => Trainable::All,
    };
    let report = grad_check(&fx, trainable, a.eps, a.max_per_tensor)?;
    let mut table = String::new();
    writeln!(table, "{:<24} {:>12}", "module", "max_rel_err")?;
    let mut ok = true;
    for (module, err) in report.per_module() {
        let pass = err < a.tolerance;
        ok &= pass;
        writeln!(table, "{module:<24} {err:>12.3e} {}", if pass { "ok" } else { "FAIL" })?;
    }
    let frozen = report.frozen_all_zero();
    ok &= frozen;
    writeln!(
        table,
        "checked {} values; frozen gradients {}",
        report.trainable_values(),
        if frozen { "zero" } else { "NONZERO" }
    )?;
    match out {
        Some(p) => {
            print!("{table}");
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
        }
        None => emit(None, &table)?,
    }
    Ok(ok)
}

pub fn train(a: &TrainArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let samples = match &a.manifest {
        Some(p) => DatasetManifest::load(p)?.1,
        None => synthetic_samples(&SynthConfig {
            count: a.samples,
            side: a.side,
            seed,
            kinds: Vec::new(),
        })?,
    };
    let mut params = match &a.init {
        Some(p) => ToyNetParams::<f64>::load(p)?,
        None => ToyNetParams::init(&a.net.config(), seed)?,
    };
    let cfg = TrainConfig {
        stage: a.stage,
        steps: a.steps,
        optim: AdamWConfig {
            lr: a.lr,
            weight_decay: a.weight_decay,
            ..AdamWConfig::default()
        },
        loss: LossConfig {
            rounds: a.rounds,
            ..LossConfig::default()
        },
        gen: a.gen.params(seed),
        seed,
    };
    let flags = stage_flags(a.stage);
    let before = evaluate_loss(&params, &samples, flags, &cfg.loss, &cfg.gen, seed)?;
    let report = train_toy(&mut params, &samples, &cfg)?;
    let after = evaluate_loss(&params, &samples, flags, &cfg.loss, &cfg.gen, seed)?;
    eprintln!("stage {} loss {before:.4} -> {after:.4} over {} steps", a.stage, a.steps);
    if let Some(p) = &a.losses {
        let mut csv = String::from("step,loss\n");
        for (i, l) in report.losses.iter().enumerate() {
            writeln!(csv, "{i},{l}")?;
        }
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    match out {
        Some(p) => Ok(params.save(p)?),
        None => emit(None, &params.to_json()?),
    }
}

pub fn synth_data(a: &SynthArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("synthetic"));
    let cfg = SynthConfig {
        count: a.count,
        side: a.side,
        seed,
        kinds: a.kinds.clone(),
    };
    let (path, manifest) = write_synthetic_manifest(&dir, &cfg)?;
    println!("{}", path.display());
    info!("{} samples", manifest.samples.len());
    Ok(())
}

pub fn serve(a: &ServeArgs, seed: u64) -> Result<()> {
    let (name, samples) = load_samples(a.manifest.as_deref())?;
    let mut backends = Vec::new();
    for kind in SegmenterKind::ALL {
        backends.push(build_segmenter(&a.backend, kind, seed)?);
    }
    let state = AppState::new(
        Catalog::new(name, samples),
        backends,
        a.backend.backend,
        Duration::from_secs(a.session_ttl),
    )
    .map_err(anyhow::Error::msg)?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    eprintln!("listening on http://{addr}");
    rt.block_on(scribble_server::serve(state, addr))
        .with_context(|| format!("serving on {addr}"))
}

pub fn report(a: &ReportArgs, out: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        reports.extend(read_reports(p)?);
    }
    let text = match a.format {
        ReportOutput::Csv => to_csv(&reports),
        ReportOutput::Refinement => refinement_curves_csv(&reports),
        ReportOutput::Success => success_curves_csv(&reports),
        ReportOutput::Json => reports_to_json(&reports)?,
    };
    emit(out, &text)
}
