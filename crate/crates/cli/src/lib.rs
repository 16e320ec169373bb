//! Experiment harness for replikit: single runs, paired replicability
//! trials, stage timings and recorded data files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use replikit::oracle::nearest;
use replikit::pipelines::{bench_stages, paired_trials, run_pipeline, PairedReport, PipelineResult};
use replikit::source::write_points_csv;
use replikit::{DistributionSource, Point, SharedRandomness};
use serde_json::json;

pub mod config;
pub mod svg;

pub use config::{Command, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Algorithm(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Algorithm(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Algorithm(m) => write!(f, "algorithm failed: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<replikit::Error> for CliError {
    fn from(e: replikit::Error) -> Self {
        match e {
            replikit::Error::Io(e) => CliError::Io(e.to_string()),
            e if e.is_algorithmic() => CliError::Algorithm(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn comment(config: &RunConfig) -> String {
    format!("# run_config {}\n", config.to_json())
}

/// Run the command named in `config.command`; returns the files written.
pub fn execute(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    match config.command {
        Some(Command::Run) => cmd_run(config),
        Some(Command::Paired) => cmd_paired(config).map(|(files, _)| files),
        Some(Command::Bench) => cmd_bench(config),
        Some(Command::Gen) => cmd_gen(config),
        None => Err(CliError::Usage("no command given".into())),
    }
}

/// Labels of `points` and the glyph positions: the centers themselves, or
/// for a projected clustering function the mean of each label's points.
pub fn label_points(result: &PipelineResult, points: &[Point], d: usize) -> Result<(Vec<usize>, Vec<Point>), CliError> {
    if let Some(f) = &result.function {
        let labels: Vec<usize> = points.iter().map(|x| f.classify(x)).collect();
        let mut sums = vec![(vec![0.0; d], 0usize); f.k()];
        for (x, &l) in points.iter().zip(&labels) {
            for (s, v) in sums[l].0.iter_mut().zip(x) {
                *s += v;
            }
            sums[l].1 += 1;
        }
        let glyphs = sums
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(s, n)| s.iter().map(|v| v / n as f64).collect())
            .collect();
        return Ok((labels, glyphs));
    }
    let spec = result.config.norm_spec(d)?;
    let labels = points.iter().map(|x| nearest(x, &result.centers, &spec).0).collect();
    Ok((labels, result.centers.clone()))
}

fn plot_points(source: &DistributionSource, n: usize, stream: &SharedRandomness) -> Result<Vec<Point>, CliError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    match source.sample(n, stream) {
        Ok(set) => Ok(set.points),
        // A replayed file may hold fewer rows than requested.
        Err(replikit::Error::SamplerExhausted { available, .. }) if available > 0 => {
            Ok(source.sample(available, stream)?.points)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_run(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let source = config.resolve_source()?;
    let pipeline = config.effective_pipeline();
    let result = run_pipeline(&source, &pipeline, config.master_seed, 0)?;
    let doc = json!({ "run_config": config, "result": result });
    let mut files = vec![write(&config.out, "result.json", &format!("{doc}\n"))?];

    let mut csv = comment(config);
    if result.centers.is_empty() {
        if let Some(f) = &result.function {
            csv.push_str("# centers in the projected space of the clustering function\n");
            csv.push_str(&write_points_csv(&f.centers, None));
        }
    } else {
        csv.push_str(&write_points_csv(&result.centers, None));
    }
    files.push(write(&config.out, "centers.csv", &csv)?);

    let stream = SharedRandomness::data(config.master_seed, 0).child("plot");
    let points = plot_points(&source, config.plot_samples, &stream)?;
    let (labels, glyphs) = label_points(&result, &points, source.dim())?;
    let figure = svg::scatter(&points, &labels, &glyphs, &config.to_json());
    files.push(write(&config.out, "plot.svg", &figure)?);
    Ok(files)
}

pub fn summary(config: &RunConfig, report: &PairedReport) -> String {
    let mut s = comment(config);
    writeln!(s, "algorithm: {:?}", config.pipeline.algorithm).unwrap();
    writeln!(s, "paired trials: {}", report.trials).unwrap();
    writeln!(
        s,
        "identical outputs: {} (rate {:.3}, 95% interval {:.3} to {:.3})",
        report.matches, report.rate, report.ci_low, report.ci_high
    )
    .unwrap();
    let stages: Vec<String> = report
        .divergence
        .iter()
        .map(|(stage, n)| format!("{} {n}", serde_json::to_value(stage).unwrap().as_str().unwrap_or("?")))
        .collect();
    writeln!(s, "first divergence: {}", if stages.is_empty() { "none".to_owned() } else { stages.join(", ") })
        .unwrap();
    writeln!(s, "seconds per pair: mean {:.3}, max {:.3}", report.mean_seconds, report.max_seconds).unwrap();
    s
}

pub fn cmd_paired(config: &RunConfig) -> Result<(Vec<PathBuf>, PairedReport), CliError> {
    let source = config.resolve_source()?;
    let report = paired_trials(&source, &config.effective_pipeline(), config.master_seed, config.trials)?;
    let mut csv = comment(config);
    csv.push_str("trial,seed,matched,stage,seconds\n");
    for r in &report.records {
        let stage = r.stage.map(|s| serde_json::to_value(s).unwrap().as_str().unwrap_or("").to_owned());
        writeln!(csv, "{},{},{},{},{:.6}", r.trial, r.seed, r.matched, stage.unwrap_or_default(), r.seconds).unwrap();
    }
    let doc = json!({ "run_config": config, "report": report });
    let text = summary(config, &report);
    let files = vec![
        write(&config.out, "paired.csv", &csv)?,
        write(&config.out, "paired.json", &format!("{doc}\n"))?,
        write(&config.out, "summary.txt", &text)?,
    ];
    Ok((files, report))
}

pub fn cmd_bench(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let source = config.resolve_source()?;
    let rows = bench_stages(&source, &config.effective_pipeline(), config.master_seed, config.bench_repetitions)?;
    let mut csv = comment(config);
    csv.push_str("stage,repetition,budget_scale,seconds\n");
    for r in &rows {
        writeln!(csv, "{},{},{:?},{:.6}", r.stage, r.repetition, r.budget_scale, r.seconds).unwrap();
    }
    Ok(vec![write(&config.out, "bench.csv", &csv)?])
}

/// Record `gen_samples` normalized draws. Replaying the file needs
/// `normalize: false`.
pub fn cmd_gen(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let source = config.resolve_source()?;
    let stream = SharedRandomness::data(config.master_seed, 0).child("gen");
    let points = source.sample(config.gen_samples.max(1), &stream)?.points;
    let mut csv = comment(config);
    csv.push_str(&write_points_csv(&points, None));
    Ok(vec![write(&config.out, "data.csv", &csv)?])
}
