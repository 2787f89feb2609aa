use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use evbc::container::{assign_splits, read_dataset, DatasetManifest, Split};
use evbc::eval::{
    centroid_pid_policy, evaluate_policy, format_fixed, parse_predictions, write_predictions,
    write_report_csv, Action, EvalReport, EvalSample, GroupBy, PidState,
};
use evbc::ingest::TwistSource;
use evbc::pipeline::{
    align_episode, build_episode, discover_episodes, BuildOptions, BuildReport, PipelineConfig,
};
use evbc::sync::FitOptions;
use evbc::synth::{parse_scene_config, write_episode, SceneConfig};
use evbc::window::T0Policy;

use crate::exit::{self, CliError};
use crate::{
    AlignArgs, Baseline, BuildArgs, EvalArgs, Globals, GroupKey, InspectArgs, LabelSource,
    SplitArg, SynthArgs,
};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(exit::IO, format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

fn emit(g: &Globals, value: serde_json::Value) {
    if g.json {
        println!("{value}");
    }
}

fn pool(g: &Globals) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs)
        .build()
        .map_err(|e| CliError::new(exit::FAILURE, e))
}

pub fn synth(g: &Globals, a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => parse_scene_config(open(path)?)?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let summary = write_episode(&cfg, &a.out)?;
    if !g.json {
        println!(
            "wrote {}: {} CD events, {} frames, {} triggers, {} command / {} odometry twists",
            a.out.display(),
            summary.cd_events,
            summary.frames,
            summary.triggers,
            summary.cmd_samples,
            summary.odom_samples
        );
    }
    emit(
        g,
        json!({"ok": true, "command": "synth", "out": a.out, "summary": summary}),
    );
    Ok(())
}

pub fn align(g: &Globals, a: &AlignArgs) -> Result<(), CliError> {
    let opts = FitOptions {
        min_pulses: a.min_pulses,
        ..FitOptions::default()
    };
    let report = align_episode(&a.episode, opts)?;
    if !g.json {
        println!(
            "alpha {:.9}  beta {:.1} us  residual_rms {:.2} us  matched {}  rejected {}",
            report.alpha,
            report.beta_us,
            report.residual_rms_us,
            report.matched_pulses,
            report.rejected_pulses
        );
    }
    emit(
        g,
        json!({"ok": true, "command": "align", "episode": a.episode, "clock_model": report}),
    );
    Ok(())
}

fn options_from_flags(a: &BuildArgs) -> BuildOptions {
    BuildOptions {
        clock_model: a.clock_model.clone(),
        homography: a.homography.clone(),
        t0: a.t0.map(T0Policy::Explicit).unwrap_or_default(),
        downsample: a.downsample,
        rgb_included: a.rgb,
        label_source: match a.label_source {
            LabelSource::Odometry => TwistSource::Odometry,
            LabelSource::Command => TwistSource::Command,
        },
        saturate: !a.no_saturate,
        split: match a.split {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        },
        ..BuildOptions::default()
    }
}

#[derive(Serialize)]
struct EpisodeBuild {
    episode: PathBuf,
    container: PathBuf,
    split: Split,
    report: BuildReport,
}

fn print_build(b: &EpisodeBuild) {
    println!(
        "{} -> {} [{}]: {} samples, {} held labels, {} saturated, {} events dropped",
        b.episode.display(),
        b.container.display(),
        b.split,
        b.report.samples,
        b.report.held_labels,
        b.report.saturated_samples,
        b.report.dropped_events.cd_dropped()
    );
}

pub fn build(g: &Globals, a: &BuildArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => {
            let mut cfg: PipelineConfig = serde_json::from_reader(open(path)?)
                .map_err(|e| CliError::new(exit::CONFIG, format!("{}: {e}", path.display())))?;
            if let Some(seed) = g.seed {
                cfg.split_seed = seed;
            }
            cfg
        }
        None => {
            let out = a
                .out
                .clone()
                .ok_or_else(|| CliError::new(exit::CONFIG, "--out is required"))?;
            let (input, batch) = match (&a.episode, &a.root) {
                (Some(ep), None) => (ep.clone(), false),
                (None, Some(root)) => (root.clone(), true),
                _ => {
                    return Err(CliError::new(
                        exit::CONFIG,
                        "give --episode, --root or --config",
                    ))
                }
            };
            PipelineConfig {
                input,
                output: out,
                batch,
                split_seed: g.seed.unwrap_or(0),
                split_ratios: Default::default(),
                options: options_from_flags(a),
            }
        }
    };

    if !cfg.batch {
        let report = build_episode(&cfg.input, &cfg.output, &cfg.options)?;
        let b = EpisodeBuild {
            episode: cfg.input.clone(),
            container: cfg.output.clone(),
            split: cfg.options.split,
            report,
        };
        if !g.json {
            print_build(&b);
        }
        emit(g, json!({"ok": true, "command": "build", "episodes": [b]}));
        return Ok(());
    }

    let episodes = discover_episodes(&cfg.input).map_err(|e| io_err(&cfg.input, e))?;
    if episodes.is_empty() {
        return Err(CliError::new(
            exit::INGEST,
            format!("{}: no episode directories found", cfg.input.display()),
        ));
    }
    let splits = if episodes.len() >= 3 {
        assign_splits(episodes.len(), cfg.split_ratios, cfg.split_seed)?
    } else {
        eprintln!("warning: fewer than 3 episodes, all assigned to train");
        vec![Split::Train; episodes.len()]
    };
    let results: Vec<Result<EpisodeBuild, CliError>> = pool(g)?.install(|| {
        episodes
            .par_iter()
            .zip(&splits)
            .map(|(ep, &split)| {
                let name = ep.file_name().unwrap_or_default();
                let container = cfg.output.join(name);
                let opts = BuildOptions {
                    split,
                    ..cfg.options.clone()
                };
                let report = build_episode(ep, &container, &opts).map_err(|e| {
                    let e = CliError::from(e);
                    CliError::new(e.code, format!("{}: {}", ep.display(), e.message))
                })?;
                Ok(EpisodeBuild {
                    episode: ep.clone(),
                    container,
                    split,
                    report,
                })
            })
            .collect()
    });
    let mut builds = Vec::new();
    for r in results {
        builds.push(r?);
    }
    if !g.json {
        builds.iter().for_each(print_build);
    }
    emit(
        g,
        json!({"ok": true, "command": "build", "episodes": builds}),
    );
    Ok(())
}

/// Labels (and baseline predictions, if requested) of one container.
struct Scored {
    manifest: DatasetManifest,
    samples: Vec<EvalSample>,
    baseline: Vec<(u32, Action)>,
}

fn pid_state(a: &EvalArgs) -> PidState {
    PidState {
        activity_floor: a.pid_activity_floor,
        ..PidState::new(a.pid_kp, a.pid_ki, a.pid_kd, a.pid_v_ref)
    }
}

fn score_container(dir: &Path, a: &EvalArgs) -> Result<Scored, CliError> {
    let (manifest, reader) = read_dataset(dir).map_err(|e| {
        let e = CliError::from(e);
        CliError::new(e.code, format!("{}: {}", dir.display(), e.message))
    })?;
    let lighting = manifest.episode.as_ref().map(|m| m.lighting);
    let path = manifest.episode.as_ref().map(|m| m.path);
    let mut samples = Vec::with_capacity(manifest.sample_count as usize);
    let mut baseline = Vec::new();
    let mut state = pid_state(a);
    let mut prev_t: Option<u64> = None;
    for s in reader {
        let s = s.map_err(|e| {
            let e = CliError::from(e);
            CliError::new(e.code, format!("{}: {}", dir.display(), e.message))
        })?;
        samples.push(EvalSample {
            frame_index: s.frame_index,
            truth: (s.action.v as f64, s.action.w as f64),
            lighting,
            path,
            split: manifest.split,
        });
        if a.baseline.is_some() {
            let dt = match prev_t {
                Some(p) if s.t_evt > p => (s.t_evt - p) as f64 * 1e-6,
                _ => 1.0 / 30.0,
            };
            let (cmd, next) = centroid_pid_policy(&s.histogram, &state, dt);
            state = next;
            baseline.push((s.frame_index, cmd));
        }
        prev_t = Some(s.t_evt);
    }
    Ok(Scored {
        manifest,
        samples,
        baseline,
    })
}

fn print_report(r: &EvalReport) {
    println!("{}", r.method);
    println!(
        "  {:<32} {:>10} {:>10} {:>10} {:>6}",
        "group", "linear", "angular", "total", "n"
    );
    for gr in &r.groups {
        println!(
            "  {:<32} {:>10} {:>10} {:>10} {:>6}",
            gr.group,
            format_fixed(gr.mae.linear_mae, 4),
            format_fixed(gr.mae.angular_mae, 4),
            format_fixed(gr.mae.total_mae, 4),
            gr.mae.n
        );
    }
}

pub fn eval(g: &Globals, a: &EvalArgs) -> Result<(), CliError> {
    if !a.predictions.is_empty() && a.predictions.len() != a.containers.len() {
        return Err(CliError::new(
            exit::CONFIG,
            format!(
                "{} prediction file(s) for {} container(s)",
                a.predictions.len(),
                a.containers.len()
            ),
        ));
    }
    if a.predictions.is_empty() && a.baseline.is_none() {
        return Err(CliError::new(
            exit::CONFIG,
            "give --predictions or --baseline",
        ));
    }
    let by = GroupBy {
        lighting: a.group_by.contains(&GroupKey::Lighting),
        path: a.group_by.contains(&GroupKey::Path),
        split: a.group_by.contains(&GroupKey::Split),
    };

    let scored: Vec<Scored> = pool(g)?.install(|| {
        a.containers
            .par_iter()
            .map(|c| score_container(c, a))
            .collect::<Result<_, _>>()
    })?;

    let mut reports = Vec::new();
    if !a.predictions.is_empty() {
        let mut sets = Vec::new();
        for (p, s) in a.predictions.iter().zip(&scored) {
            let preds = parse_predictions(open(p)?).map_err(|e| {
                let e = CliError::from(e);
                CliError::new(e.code, format!("{}: {}", p.display(), e.message))
            })?;
            sets.push((s.samples.clone(), preds));
        }
        reports.push(evaluate_policy("predictions", &sets, by)?);
    }
    if let Some(Baseline::CentroidPid) = a.baseline {
        let sets: Vec<_> = scored
            .iter()
            .map(|s| {
                (
                    s.samples.clone(),
                    s.baseline.iter().copied().collect::<HashMap<_, _>>(),
                )
            })
            .collect();
        reports.push(evaluate_policy("centroid-pid", &sets, by)?);
        if let Some(dir) = &a.baseline_predictions {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            for (c, s) in a.containers.iter().zip(&scored) {
                let name = c.file_name().map(|n| n.to_string_lossy().into_owned());
                let path = dir.join(format!(
                    "{}.csv",
                    name.unwrap_or_else(|| "container".into())
                ));
                let f = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
                write_predictions(&s.baseline, f)?;
            }
        }
    }

    if let Some(path) = &a.report_json {
        let f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
        serde_json::to_writer_pretty(f, &reports).map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &a.report_csv {
        let f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
        write_report_csv(&reports, f)?;
    }
    if !g.json {
        reports.iter().for_each(print_report);
    }
    let total: usize = scored
        .iter()
        .map(|s| s.manifest.sample_count as usize)
        .sum();
    emit(
        g,
        json!({"ok": true, "command": "eval", "samples": total, "reports": reports}),
    );
    Ok(())
}

#[derive(Serialize, Default)]
struct CountStats {
    min: u64,
    mean: f64,
    max: u64,
}

pub fn inspect(g: &Globals, a: &InspectArgs) -> Result<(), CliError> {
    let (manifest, reader) = read_dataset(&a.container)?;
    let mut totals = Vec::with_capacity(manifest.sample_count as usize);
    let mut held = 0u64;
    let mut saturated = 0u64;
    let mut failure = None;
    for s in reader {
        match s {
            Ok(s) => {
                totals.push(s.histogram.total());
                held += s.action.held as u64;
                saturated += s.histogram.saturated() as u64;
            }
            Err(e) => {
                failure = Some(CliError::from(e));
                break;
            }
        }
    }
    let stats = if totals.is_empty() {
        CountStats::default()
    } else {
        CountStats {
            min: *totals.iter().min().unwrap(),
            mean: totals.iter().sum::<u64>() as f64 / totals.len() as f64,
            max: *totals.iter().max().unwrap(),
        }
    };
    let mut per_split = BTreeMap::new();
    per_split.insert(manifest.split.to_string(), manifest.sample_count);
    let crc = match &failure {
        None => "CRC OK".to_string(),
        Some(e) => format!("CRC FAIL: {}", e.message),
    };

    if !g.json {
        let w = std::io::stdout();
        let mut w = w.lock();
        let _ = writeln!(w, "container     {}", a.container.display());
        if let Some(ep) = &manifest.episode {
            let _ = writeln!(
                w,
                "episode       map={} path={:?} lighting={:?} subject={}",
                ep.map_id, ep.path, ep.lighting, ep.subject_id
            );
        }
        let _ = writeln!(
            w,
            "dims          {}x{}x{}  rgb={}",
            manifest.dims.width,
            manifest.dims.height,
            manifest.dims.channels,
            manifest.rgb_included
        );
        let _ = writeln!(w, "samples       {}", manifest.sample_count);
        for (k, v) in &per_split {
            let _ = writeln!(w, "split {k:<7} {v}");
        }
        let _ = writeln!(w, "labels        {:?}, {held} held", manifest.label_source);
        let _ = writeln!(
            w,
            "events/sample min {} mean {:.2} max {}  ({saturated} saturated)",
            stats.min, stats.mean, stats.max
        );
        let _ = writeln!(w, "{crc}");
    }
    if let Some(e) = failure {
        return Err(e);
    }
    emit(
        g,
        json!({
            "ok": true,
            "command": "inspect",
            "manifest": manifest,
            "per_split": per_split,
            "held_labels": held,
            "saturated_samples": saturated,
            "events_per_sample": stats,
            "verified_samples": totals.len(),
            "crc": crc,
        }),
    );
    Ok(())
}
