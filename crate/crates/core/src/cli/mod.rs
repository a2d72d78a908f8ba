//! Commands behind the `prbm` binary.
//!
//! Settings come from, in increasing precedence: built-in defaults, the
//! `--config` file, `--set KEY=VALUE` overrides, then the `--seed` and
//! `--out` flags. All randomness in a command derives from the one seed.
//! Output files carry no timestamps, so reruns are byte-identical.

mod config;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ReturnBasis, RunConfig};

use crate::data::{directions, load_bars, synth_markov, write_bars, DirectionDataset, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    compare_models, Basis, DirectionPredictor, EvalReport, PrbmPredictor, RwPredictor, Task,
    VarPredictor,
};
use crate::gibbs::predict_direction;
use crate::model::{checkpoint, BlockVisible, Model, ModelShape};
use crate::rng::RngStream;
use crate::trainer::train;

#[derive(Debug, Parser)]
#[command(name = "prbm", version, about = "p-step RBM direction models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic Markov bar dataset (data.csv).
    Synth,
    /// Validate a bar file and write its direction matrix (directions.csv).
    Ingest,
    /// Train with CD-k (model.prbm, trace.csv, config.txt).
    Train,
    /// Score a checkpoint on the validation windows (report.csv, report.txt).
    Eval,
    /// Predict the next bar from a window file (predictions.csv).
    Predict,
    /// Compare p-RBM, VAR(1) and RW over repeated runs (compare.csv, compare.txt).
    Compare,
}

impl Cli {
    /// The effective configuration, validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments and runs one command, returning the files written.
/// `--help` and `--version` print and return no files.
pub fn run<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(Vec::new());
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            return Err(Error::Config(first.trim_start_matches("error: ").to_string()));
        }
    };
    let cfg = cli.resolve()?;
    execute(cli.command, &cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Ingest => cmd_ingest(cfg),
        Command::Train => cmd_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Predict => cmd_predict(cfg),
        Command::Compare => cmd_compare(cfg),
    }
}

/// `error: kind=<kind> msg=<message>` on one line.
pub fn error_line(e: &Error) -> String {
    let msg: String = e.to_string().lines().collect::<Vec<_>>().join(" ");
    format!("error: kind={} msg={msg}", e.kind())
}

fn write_out(cfg: &RunConfig, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn load_dataset(cfg: &RunConfig) -> Result<DirectionDataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("data: no bar file configured".into()))?;
    Ok(directions(&load_bars(path)?))
}

fn load_checkpoint(cfg: &RunConfig, n: usize) -> Result<Model> {
    let model = checkpoint::load(cfg.checkpoint_path())?;
    let s = model.shape();
    if s.n != n || s.p != cfg.p {
        return Err(Error::Config(format!(
            "checkpoint has n={}, p={} but the data has n={n} and the config p={}",
            s.n, s.p, cfg.p
        )));
    }
    Ok(model)
}

fn predictor(cfg: &RunConfig) -> PrbmPredictor {
    PrbmPredictor {
        m: cfg.m,
        alpha: cfg.alpha,
        train: cfg.train_config(0),
        k_pred: cfg.k_pred,
        mode: cfg.predict_mode,
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = synth_markov(&SynthConfig {
        n: cfg.n,
        p_true: cfg.p_true,
        t: cfg.t,
        coupling: cfg.coupling,
        seed: cfg.seed,
    })?;
    let mut bytes = Vec::new();
    write_bars(&data.to_bars(), &mut bytes)?;
    Ok(vec![write_out(cfg, "data.csv", bytes)?])
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("data: no bar file configured".into()))?;
    let bars = load_bars(path)?;
    let data = directions(&bars);
    let mut csv = String::from("timestamp");
    for s in &data.symbols {
        csv.push(',');
        csv.push_str(s);
    }
    csv.push('\n');
    for (ts, row) in data.timestamps.iter().zip(&data.directions) {
        csv.push_str(ts);
        for d in row {
            csv.push(',');
            csv.push(if *d == 1 { '1' } else { '0' });
        }
        csv.push('\n');
    }
    let windows = data.len().saturating_sub(cfg.p);
    let mut summary = format!(
        "bars {}\nstocks {}\ndropped {}\nwindows {windows}\n",
        data.len(),
        data.n(),
        bars.dropped
    );
    if let Ok(task) = Task::new(&data, cfg.p, cfg.train_fraction) {
        summary.push_str(&format!(
            "train_windows {}\nvalidation_windows {}\nvalidation_decisions {}\n",
            task.train_len,
            task.val_windows().len(),
            task.val_windows().len() * data.n()
        ));
    }
    Ok(vec![
        write_out(cfg, "directions.csv", csv)?,
        write_out(cfg, "ingest.txt", summary)?,
    ])
}

/// Initializes from `split` child 0 of the seed, trains with child 1, and
/// records the proxy (and, when tractable, exact NLL) on both splits.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(cfg)?;
    let task = Task::new(&data, cfg.p, cfg.train_fraction)?;
    let shape = ModelShape::new(data.n(), cfg.m, cfg.p, cfg.alpha)
        .map_err(|e| Error::Config(e.to_string()))?;
    let stream = RngStream::new(cfg.seed);
    let model = Model::init(shape, stream.child_seed(0));
    let visible = |ws: &[crate::data::Window]| -> Vec<BlockVisible> {
        ws.iter().map(|w| w.visible.clone()).collect()
    };
    let (train_set, val_set) = (visible(task.train_windows()), visible(task.val_windows()));

    let mut written = vec![write_out(cfg, "config.txt", cfg.to_text())?];
    match train(model, &train_set, &val_set, &cfg.train_config(stream.child_seed(1))) {
        Ok((model, trace)) => {
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("model.prbm");
            checkpoint::save(&model, &path)?;
            written.push(path);
            written.push(write_out(cfg, "trace.csv", trace.to_csv(true))?);
            Ok(written)
        }
        Err(Error::Diverged {
            epoch,
            reason,
            partial,
        }) => {
            write_out(cfg, "trace.csv", partial.to_csv(true))?;
            Err(Error::Diverged {
                epoch,
                reason,
                partial,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(cfg)?;
    let model = load_checkpoint(cfg, data.n())?;
    let task = Task::new(&data, cfg.p, cfg.train_fraction)?;
    let predicted = predictor(cfg).predict_with(&model, &task, cfg.seed)?;
    let open = task.val_open();
    let basis = match cfg.basis {
        ReturnBasis::Open => Basis::Prices(&open),
        ReturnBasis::Unit => Basis::Unit,
    };
    let report = EvalReport::evaluate(&task.actual(), &predicted, &task.val_moves(), basis)?;
    write_report(cfg, &report)
}

pub fn write_report(cfg: &RunConfig, report: &EvalReport) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_out(cfg, "report.csv", report.to_csv())?,
        write_out(cfg, "report.txt", report.to_text())?,
    ])
}

/// The window file holds exactly `p` bars in time order; the last one is lag 1.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let path = cfg
        .window
        .as_ref()
        .ok_or_else(|| Error::Config("window: no window file configured".into()))?;
    let window = directions(&load_bars(path)?);
    if window.len() != cfg.p {
        return Err(Error::Config(format!(
            "window file has {} bars, expected exactly p = {}",
            window.len(),
            cfg.p
        )));
    }
    let model = load_checkpoint(cfg, window.n())?;
    let past: Vec<&Vec<u8>> = window.directions.iter().rev().collect();
    let mut rng = RngStream::new(cfg.seed);
    let prediction = predict_direction(&model, &past, cfg.k_pred, cfg.predict_mode, &mut rng)?;
    let mut csv = String::from("symbol,probability,direction\n");
    for ((s, q), d) in window
        .symbols
        .iter()
        .zip(&prediction.probs)
        .zip(&prediction.directions)
    {
        csv.push_str(&format!("{s},{q},{d}\n"));
    }
    Ok(vec![write_out(cfg, "predictions.csv", csv)?])
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(cfg)?;
    let task = Task::new(&data, cfg.p, cfg.train_fraction)?;
    let prbm = predictor(cfg);
    let models: [&dyn DirectionPredictor; 3] = [&prbm, &VarPredictor, &RwPredictor];
    let table = compare_models(&models, &task, cfg.iterations, cfg.seed)?;
    Ok(vec![
        write_out(cfg, "compare.csv", table.to_csv())?,
        write_out(cfg, "compare.txt", table.to_text())?,
    ])
}

