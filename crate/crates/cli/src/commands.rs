use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hgn::eval::{self, evaluate, quality_report, visualize, EvalReport, GroupStats, Model};
use hgn::netcore::{checkpoint_dtype, Checkpoint, Network};
use hgn::synthgen::{generate_dataset, read_dataset, write_dataset, Dataset, SynthConfig};
use hgn::trainer::{gradcheck_objective, predict, train, Mode};
use hgn::{HgnError, Real, Result};

use crate::config::{Precision, RunConfig};

/// Failure of a subcommand, with the category printed on exit.
#[derive(Debug)]
pub enum CliError {
    Core(HgnError),
    GradCheckFailed(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::GradCheckFailed(_) => "gradcheck-failed",
        }
    }

    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::Core(HgnError::Usage(_)))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::GradCheckFailed(r) => write!(f, "gradient check failed\n{r}"),
        }
    }
}

impl From<HgnError> for CliError {
    fn from(e: HgnError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A checkpoint in whichever precision it was saved.
enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            AnyModel::F32($m) => $body,
            AnyModel::F64($m) => $body,
        }
    };
}

fn load_model(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path)?;
    match checkpoint_dtype(&text)?.as_str() {
        "f32" => Ok(AnyModel::F32(Model::from_checkpoint(Checkpoint::from_json(&text)?)?)),
        "f64" => Ok(AnyModel::F64(Model::from_checkpoint(Checkpoint::from_json(&text)?)?)),
        other => Err(HgnError::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn generate(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> CliResult<String> {
    let mut synth = cfg.synth.clone();
    if let Some(s) = seed {
        synth.seed = s;
    }
    let data = generate_dataset(&synth)?;
    write_dataset(&data, out)?;
    Ok(format!("samples={}\nreallike={}\npath={}\n", data.len(), data.indices_of(hgn::synthgen::Domain::RealLike).len(), out.display()))
}

pub fn train_cmd(cfg: &RunConfig, seed: Option<u64>, dataset: &Path, out: &Path) -> CliResult<String> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let train_set = read_dataset(dataset)?;
    let val = cfg.data.validation.as_deref().map(read_dataset).transpose()?;
    create_dir(out)?;
    match cfg.precision {
        Precision::F32 => run_training::<f32>(&cfg, &train_set, val.as_ref(), out),
        Precision::F64 => run_training::<f64>(&cfg, &train_set, val.as_ref(), out),
    }
}

fn run_training<T: Real>(cfg: &RunConfig, train_set: &Dataset, val: Option<&Dataset>, out: &Path) -> CliResult<String> {
    let mode = cfg.train.mode;
    let net_cfg = cfg.network_for(mode);
    let net = Network::<T>::new(net_cfg.clone())?;
    let echo = cfg.echo();
    let mut log = String::new();
    let every = cfg.train.checkpoint_every;
    let outcome = train(&net, &cfg.train, train_set, val, |ev| {
        let phase = if ev.pretraining { "pretrain" } else { "train" };
        eprintln!("{phase} {}", ev.metrics);
        if !ev.pretraining {
            let _ = writeln!(log, "{}", ev.metrics);
            if every > 0 && ev.metrics.epoch % every == 0 {
                let path = out.join(format!("epoch-{:04}.json", ev.metrics.epoch));
                Checkpoint::new(mode.tag(), net_cfg.clone(), echo.clone(), ev.params.clone()).save(&path)?;
            }
        }
        Ok(())
    })?;
    fs::write(out.join("metrics.log"), &log)?;
    let ckpt = out.join("checkpoint.json");
    Checkpoint::new(mode.tag(), net_cfg, echo, outcome.params).save(&ckpt)?;
    let mut s = format!("mode={}\nepochs={}\ncheckpoint={}\n", mode.tag(), outcome.metrics.len(), ckpt.display());
    if let Some(m) = outcome.metrics.last() {
        let _ = writeln!(s, "final_total={:.6}", m.total);
        if let Some(v) = m.val_angular_deg {
            let _ = writeln!(s, "final_val_angular_deg={v:.6}");
        }
    }
    Ok(s)
}

fn dataset_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

pub fn eval_cmd(checkpoint: &Path, dataset: &Path, out: Option<&Path>) -> CliResult<String> {
    let data = read_dataset(dataset)?;
    let model = load_model(checkpoint)?;
    let report = with_model!(&model, m => evaluate(m, &data, &dataset_name(dataset))?);
    if let Some(p) = out {
        fs::write(p, report.per_sample_tsv())?;
    }
    Ok(report.to_text())
}

pub fn parse_quantiles(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let q: f64 = t.trim().parse().map_err(|_| HgnError::Usage(format!("bad quantile {t:?}")))?;
            if (0.0..=1.0).contains(&q) {
                Ok(q)
            } else {
                Err(HgnError::Usage(format!("quantile {q} outside [0, 1]")))
            }
        })
        .collect()
}

pub fn quality_cmd(checkpoint: &Path, dataset: &Path, quantiles: &[f64], out: &Path) -> CliResult<String> {
    let data = read_dataset(dataset)?;
    let model = load_model(checkpoint)?;
    create_dir(out)?;
    let hist = with_model!(&model, m => {
        let h = quality_report(m, &data, quantiles, eval::DEFAULT_BINS)?;
        for p in &h.picks {
            render_sample(m, &data, p.index, &quantile_image(out, p))?;
        }
        h
    });
    let mut per_sample = String::from("index\tquality\tdomain\tdegraded\n");
    for (i, (q, s)) in hist.qualities.iter().zip(&data.samples).enumerate() {
        let _ = writeln!(per_sample, "{i}\t{q:.9}\t{:?}\t{}", s.domain, s.degradation.is_degraded());
    }
    fs::write(out.join("qualities.tsv"), per_sample)?;
    fs::write(out.join("histogram.txt"), hist.to_text())?;
    let manifest = hist.manifest(|p| quantile_image(out, p).file_name().unwrap().to_string_lossy().into_owned());
    fs::write(out.join("manifest.txt"), &manifest)?;
    Ok(format!("{}\n{manifest}", hist.to_text()))
}

fn quantile_image(dir: &Path, p: &eval::QuantilePick) -> PathBuf {
    dir.join(format!("quantile-{:.3}-sample-{}.png", p.quantile, p.index))
}

fn render_sample<T: Real>(model: &Model<T>, data: &Dataset, index: usize, path: &Path) -> Result<()> {
    let sample = data
        .samples
        .get(index)
        .ok_or_else(|| HgnError::Config(format!("index {index} out of range for {} samples", data.len())))?;
    model.check_dataset(data)?;
    let input = model.net.config().prepare_input::<T>(&sample.image);
    let pred = predict(&model.net, model.mode, &model.params, &input)?;
    let landmarks = pred.landmarks.map(|l| hgn::geometry::LandmarkSet { points: l.points.map(|p| [p[0].as_f64(), p[1].as_f64()]) });
    visualize(sample, landmarks.as_ref(), pred.gaze.cast::<f64>(), path)
}

pub fn viz_cmd(checkpoint: &Path, dataset: &Path, index: usize, out: &Path) -> CliResult<String> {
    let data = read_dataset(dataset)?;
    let model = load_model(checkpoint)?;
    with_model!(&model, m => render_sample(m, &data, index, out)?);
    Ok(format!("index={index}\nimage={}\nlegend=green:landmarks red:predicted blue:ground-truth\n", out.display()))
}

pub fn gradcheck_cmd(cfg: &RunConfig, seed: Option<u64>) -> CliResult<String> {
    let g = &cfg.gradcheck;
    let mut synth = g.synth.clone();
    let seed = seed.unwrap_or(cfg.train.seed);
    synth.seed = seed;
    let data = generate_dataset(&synth)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let report = gradcheck_objective(&g.network, &train_cfg, &data.samples, &g.check(seed))?;
    let text = format!("mode={}\n{report}", train_cfg.mode.tag());
    if report.passed {
        Ok(text)
    } else {
        Err(CliError::GradCheckFailed(text))
    }
}

/// One row of the ablation table.
pub struct AblationRow {
    pub mode: Mode,
    pub per_seed: Vec<f64>,
    pub stats: GroupStats,
}

pub fn ablate_cmd(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult<String> {
    let a = &cfg.ablate;
    if a.modes.is_empty() {
        return Err(HgnError::Config("ablate.modes is empty".into()).into());
    }
    let seeds = match seed {
        Some(s) => vec![s],
        None => a.seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(HgnError::Config("ablate.seeds is empty".into()).into());
    }
    let train_set = generate_dataset(&cfg.synth)?;
    let test_cfg = a.eval_synth.clone().unwrap_or_else(|| SynthConfig {
        seed: cfg.synth.seed.wrapping_add(1),
        count: a.test_count,
        ..cfg.synth.clone()
    });
    let test_set = generate_dataset(&test_cfg)?;
    let mut rows = Vec::new();
    for &mode in &a.modes {
        let mut per_seed = Vec::new();
        for &s in &seeds {
            let report = match cfg.precision {
                Precision::F32 => ablation_run::<f32>(cfg, mode, s, &train_set, &test_set)?,
                Precision::F64 => ablation_run::<f64>(cfg, mode, s, &train_set, &test_set)?,
            };
            eprintln!("ablate mode={} seed={s} mean_angular_deg={:.4}", mode.tag(), report.mean_deg);
            per_seed.push(report.mean_deg);
        }
        let stats = GroupStats::of(&per_seed).expect("at least one seed");
        rows.push(AblationRow { mode, per_seed, stats });
    }
    let table = ablation_table(&rows);
    if let Some(p) = out {
        fs::write(p, &table)?;
    }
    Ok(table)
}

fn ablation_run<T: Real>(cfg: &RunConfig, mode: Mode, seed: u64, train_set: &Dataset, test_set: &Dataset) -> Result<EvalReport> {
    let mut tc = cfg.train.clone();
    tc.mode = mode;
    tc.seed = seed;
    let net = Network::<T>::new(cfg.network_for(mode))?;
    let outcome = train(&net, &tc, train_set, None, |_| Ok(()))?;
    let model = Model::new(net, mode, outcome.params)?;
    evaluate(&model, test_set, "ablate-test")
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("mode\tseeds\tmean_angular_deg\tstd_angular_deg\tper_seed\n");
    for r in rows {
        let per: Vec<String> = r.per_seed.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "{}\t{}\t{:.4}\t{:.4}\t{}", r.mode.tag(), r.stats.count, r.stats.mean, r.stats.std, per.join(","));
    }
    s
}
