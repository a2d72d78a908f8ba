//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors. Every value is checked by [`RunConfig::validate`] before a command
//! does any work.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gibbs::PredictMode;
use crate::trainer::TrainConfig;

/// Capital basis for the backtest return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnBasis {
    /// Each trade commits the bar's opening price.
    #[default]
    Open,
    /// Each trade commits one unit.
    Unit,
}

impl FromStr for ReturnBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Self::Open),
            "unit" => Ok(Self::Unit),
            _ => Err(Error::Config(format!("basis {s:?}: expected open or unit"))),
        }
    }
}

impl std::fmt::Display for ReturnBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Open => "open",
            Self::Unit => "unit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Bar CSV to read.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Model file; defaults to `model.prbm` in `out`.
    pub checkpoint: Option<PathBuf>,
    /// Bar CSV with exactly `p` past bars, for `predict`.
    pub window: Option<PathBuf>,
    pub seed: u64,

    // synthetic data
    pub n: usize,
    pub t: usize,
    pub p_true: usize,
    pub coupling: f64,

    // model and training
    pub m: usize,
    pub p: usize,
    pub alpha: f64,
    pub eta: f64,
    pub k: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub shuffle: bool,
    pub train_fraction: f64,

    // prediction and evaluation
    pub predict_mode: PredictMode,
    pub k_pred: usize,
    pub iterations: usize,
    pub basis: ReturnBasis,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("out"),
            checkpoint: None,
            window: None,
            seed: 0,
            n: 100,
            t: 1560,
            p_true: 1,
            coupling: 2.0,
            m: 1000,
            p: 30,
            alpha: 0.5,
            eta: 0.001,
            k: 1,
            epochs: 10,
            minibatch: 1,
            shuffle: false,
            train_fraction: 0.8,
            predict_mode: PredictMode::MeanField,
            k_pred: 1,
            iterations: 5,
            basis: ReturnBasis::Open,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: key {key} repeated", i + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Applies one `KEY=VALUE` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?}: expected KEY=VALUE")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || PathBuf::from(value);
        match key {
            "data" => self.data = Some(path()),
            "out" => self.out = path(),
            "checkpoint" => self.checkpoint = Some(path()),
            "window" => self.window = Some(path()),
            "seed" => self.seed = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "t" => self.t = parse(key, value)?,
            "p_true" => self.p_true = parse(key, value)?,
            "coupling" => self.coupling = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "minibatch" => self.minibatch = parse(key, value)?,
            "shuffle" => self.shuffle = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "predict_mode" => {
                self.predict_mode = value
                    .parse()
                    .map_err(|_| config_err(key, format!("{value:?}: expected mean-field or stochastic")))?
            }
            "k_pred" => self.k_pred = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "basis" => self.basis = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Checks every value against the preconditions of the module it feeds.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(config_err(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("n", self.n)?;
        positive("m", self.m)?;
        positive("k", self.k)?;
        positive("minibatch", self.minibatch)?;
        positive("k_pred", self.k_pred)?;
        positive("iterations", self.iterations)?;
        positive("p_true", self.p_true)?;
        if self.t <= self.p_true {
            return Err(config_err("t", format!("{} must exceed p_true = {}", self.t, self.p_true)));
        }
        if !self.coupling.is_finite() {
            return Err(config_err("coupling", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(config_err("alpha", format!("{} outside [0, 1]", self.alpha)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(config_err("eta", format!("{} must be positive", self.eta)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_err(
                "train_fraction",
                format!("{} outside (0, 1)", self.train_fraction),
            ));
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            k: self.k,
            epochs: self.epochs,
            seed,
            minibatch: self.minibatch,
            shuffle: self.shuffle,
            parallel: true,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("model.prbm"))
    }

    /// Every key in canonical order; unset paths are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        for (k, p) in [("data", &self.data), ("checkpoint", &self.checkpoint), ("window", &self.window)] {
            if let Some(p) = p {
                line(k, p.display().to_string());
            }
        }
        line("out", self.out.display().to_string());
        line("seed", self.seed.to_string());
        line("n", self.n.to_string());
        line("t", self.t.to_string());
        line("p_true", self.p_true.to_string());
        line("coupling", self.coupling.to_string());
        line("m", self.m.to_string());
        line("p", self.p.to_string());
        line("alpha", self.alpha.to_string());
        line("eta", self.eta.to_string());
        line("k", self.k.to_string());
        line("epochs", self.epochs.to_string());
        line("minibatch", self.minibatch.to_string());
        line("shuffle", self.shuffle.to_string());
        line("train_fraction", self.train_fraction.to_string());
        line("predict_mode", self.predict_mode.to_string());
        line("k_pred", self.k_pred.to_string());
        line("iterations", self.iterations.to_string());
        line("basis", self.basis.to_string());
        out
    }
}

/// The message of a config error without its `config error:` prefix.
fn strip(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}
