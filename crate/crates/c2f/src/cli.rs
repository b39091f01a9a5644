//! Subcommands: `phantom-gen`, `train`, `predict`, `eval`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use c2f_core::bench::{dsc, generate_phantom, CaseScore, PhantomSpec, SplitReport};
use c2f_core::nn::{fit, UNetModel};
use c2f_core::pipeline::{
    normalize_case, prepare_abnormal_set, prepare_coarse_set, prepare_fine_set, run_case,
    PreparedSet, StageModels,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::{case_id, list_cases, list_masks, load_mask, load_volume};
use crate::report::{CaseRecord, EvalReport};
use crate::{rvol, weights};

#[derive(Debug, Parser)]
#[command(
    name = "c2f",
    version,
    about = "Coarse-to-fine volumetric kidney segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic phantom image/mask pairs.
    PhantomGen(PhantomGenArgs),
    /// Train one stage's model.
    Train(TrainArgs),
    /// Segment one volume with the full cascade.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct PhantomGenArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of cases drawn with a single kidney.
    #[arg(long, default_value_t = 0.0)]
    pub single_kidney_fraction: f64,
    /// Standard deviation of the additive Gaussian intensity noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Coarse,
    Fine,
    Abnormal,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub stage: Stage,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub coarse: PathBuf,
    #[arg(long)]
    pub abnormal: PathBuf,
    #[arg(long)]
    pub fine: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub emit_coarse: Option<PathBuf>,
    /// JSON record of the verdict and flags.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Holds `<id>.fine.rvol`, `<id>.coarse.rvol` and `<id>.report.json`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Holds `<id>.mask.<ext>`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Text report; a JSON copy goes to the same path with `.json` appended.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PhantomGen(a) => phantom_gen(&a),
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Eval(a) => eval(&a),
    }
}

pub fn phantom_gen(a: &PhantomGenArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.single_kidney_fraction) {
        bail!("--single-kidney-fraction must lie in [0, 1]");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for k in 0..a.count {
        let seed = rng.next_u64();
        let single = rng.random_bool(a.single_kidney_fraction);
        let spec = PhantomSpec {
            n_kidneys: if single { 1 } else { 2 },
            noise_sigma: a.noise_sigma,
            seed,
            ..PhantomSpec::default()
        };
        let (vol, mask) = generate_phantom(&spec).with_context(|| format!("phantom {k}"))?;
        let id = format!("case_{k:03}");
        rvol::write_volume(&vol, &a.out.join(format!("{id}.image.rvol")))?;
        rvol::write_mask(&mask, &a.out.join(format!("{id}.mask.rvol")))?;
    }
    info!("wrote {} phantom pairs to {}", a.count, a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let pipeline = cfg.pipeline()?;
    let mut cases = Vec::new();
    for c in list_cases(&a.data)? {
        let Some(mask) = &c.mask else {
            warn!("{}: no mask, skipped", c.id);
            continue;
        };
        let vol = load_volume(&c.image, cfg.nifti_depth_axis).with_context(|| c.id.clone())?;
        let mask = load_mask(mask, cfg.nifti_depth_axis).with_context(|| c.id.clone())?;
        match normalize_case(&vol, &mask, &pipeline) {
            Ok(case) => cases.push((c.id, case)),
            Err(e) => warn!("{}: {e}, skipped", c.id),
        }
    }
    let data: Vec<_> = cases.iter().map(|(_, c)| c.clone()).collect();
    let set: PreparedSet = match a.stage {
        Stage::Coarse => prepare_coarse_set(&data, &pipeline)?,
        Stage::Fine => prepare_fine_set(&data, &pipeline)?,
        Stage::Abnormal => prepare_abnormal_set(&data, &pipeline)?,
    };
    for (k, reason) in &set.skipped {
        warn!("{}: {reason}, skipped", cases[*k].0);
    }
    if set.pairs.is_empty() {
        bail!("no training pairs in {}", a.data.display());
    }
    info!(
        "{:?} stage: {} training pairs from {} cases",
        a.stage,
        set.pairs.len(),
        cases.len()
    );
    let out = fit(&cfg.unet(), &set.pairs, &cfg.hyper())?;
    for (epoch, loss) in out.loss_trace.iter().enumerate() {
        info!("epoch {epoch}: mean dice loss {loss:.5}");
    }
    weights::save_weights(&out.weights, &a.out)?;
    Ok(())
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<UNetModel> {
    let w = weights::load_weights(path).with_context(|| format!("loading {}", path.display()))?;
    UNetModel::new(cfg.unet(), w)
        .with_context(|| format!("{} does not fit the configured network", path.display()))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let pipeline = cfg.pipeline()?;
    let coarse = load_model(&a.coarse, &cfg)?;
    let abnormal = load_model(&a.abnormal, &cfg)?;
    let fine = load_model(&a.fine, &cfg)?;
    let models = StageModels {
        coarse: &coarse,
        abnormal: &abnormal,
        fine: &fine,
    };
    let vol = load_volume(&a.input, cfg.nifti_depth_axis)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let r = run_case(&vol, &models, &pipeline)?;
    let id = case_id(&a.input);
    info!(
        "{id}: {} ({} kidneys{}), coarse {:.3}s, guidance {:.3}s, fine {:.3}s",
        r.verdict.verdict,
        r.verdict.n_kidney,
        if r.corrected { ", corrected" } else { "" },
        r.timings.coarse,
        r.timings.guidance,
        r.timings.fine
    );
    for f in &r.flags {
        warn!("{id}: {f}");
    }
    rvol::write_mask(&r.fine_mask, &a.out)?;
    if let Some(p) = &a.emit_coarse {
        rvol::write_mask(&r.coarse_mask, p)?;
    }
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&CaseRecord::new(&id, &r))? + "\n";
        fs::write(p, json)?;
    }
    Ok(())
}

fn score(id: &str, truth: &Path, pred: &Path, cfg: &RunConfig) -> Result<CaseScore> {
    let truth = load_mask(truth, cfg.nifti_depth_axis)?;
    let fine = rvol::read_mask(&pred.join(format!("{id}.fine.rvol"))).context("fine mask")?;
    let coarse = rvol::read_mask(&pred.join(format!("{id}.coarse.rvol"))).context("coarse mask")?;
    let record_path = pred.join(format!("{id}.report.json"));
    let record: CaseRecord = serde_json::from_str(
        &fs::read_to_string(&record_path)
            .with_context(|| format!("reading {}", record_path.display()))?,
    )?;
    let verdict = record
        .normality()
        .with_context(|| format!("unknown verdict `{}`", record.verdict))?;
    Ok(CaseScore {
        id: id.to_string(),
        coarse_dsc: dsc(&coarse, &truth)?,
        fine_dsc: dsc(&fine, &truth)?,
        verdict,
    })
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let masks = list_masks(&a.gt)?;
    if masks.is_empty() {
        bail!("no ground-truth masks in {}", a.gt.display());
    }
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (id, truth) in &masks {
        match score(id, truth, &a.pred, &cfg) {
            Ok(s) => scores.push(s),
            Err(e) => {
                warn!("{id}: {e:#}");
                failures.push((id.clone(), format!("{e:#}")));
            }
        }
    }
    let report = EvalReport::from(&SplitReport::from_scores(scores, failures));
    fs::write(&a.report, report.to_text())?;
    let mut json_path = a.report.clone().into_os_string();
    json_path.push(".json");
    fs::write(&json_path, report.to_json())?;
    if !report.failures.is_empty() {
        bail!(
            "{} of {} cases failed; see {}",
            report.failures.len(),
            masks.len(),
            a.report.display()
        );
    }
    Ok(())
}
