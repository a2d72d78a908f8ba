//! Block Gibbs sampling and clamped prediction.
//!
//! Given the visible blocks, hidden units are conditionally independent (and
//! vice versa), so one sweep draws every hidden unit from its logistic
//! conditional and then every visible unit from its own. The bias block of
//! the augmented vectors is never sampled.

use crate::error::{Error, Result};
use crate::model::{logistic, BlockHidden, BlockVisible, Model};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub v: BlockVisible,
    pub h: BlockHidden,
    /// Completed sweeps.
    pub step: usize,
}

fn draw(probs: impl IntoIterator<Item = f64>, rng: &mut RngStream) -> Vec<f64> {
    probs.into_iter().map(|q| rng.bernoulli(q)).collect()
}

pub fn sample_hidden(model: &Model, v: &BlockVisible, rng: &mut RngStream) -> Result<BlockHidden> {
    let probs = model.hidden_activation_probs(v)?;
    let s = model.shape();
    Ok(BlockHidden::from_flat_unchecked(
        s.m,
        s.lags(),
        draw(probs.into_vec(), rng),
    ))
}

pub fn sample_visible(model: &Model, h: &BlockHidden, rng: &mut RngStream) -> Result<BlockVisible> {
    let probs = model.visible_activation_probs(h)?;
    let s = model.shape();
    Ok(BlockVisible::from_flat_unchecked(
        s.n,
        s.lags(),
        draw(probs.into_vec(), rng),
    ))
}

/// Runs `k` alternating sweeps from `v0`: `h(t) ~ p(h | v(t-1))`, then
/// `v(t) ~ p(v | h(t))`.
pub fn gibbs_chain(
    model: &Model,
    v0: &BlockVisible,
    k: usize,
    rng: &mut RngStream,
) -> Result<ChainState> {
    if k == 0 {
        return Err(Error::Domain("gibbs chain needs k >= 1".into()));
    }
    let mut v = v0.clone();
    let mut h = sample_hidden(model, &v, rng)?;
    v = sample_visible(model, &h, rng)?;
    for _ in 1..k {
        h = sample_hidden(model, &v, rng)?;
        v = sample_visible(model, &h, rng)?;
    }
    Ok(ChainState { v, h, step: k })
}

/// `p + 2` identical rows, each `[E[h_t|v] .. E[h_(t-p)|v], 1]`.
pub fn hidden_expectation_matrix(model: &Model, v: &BlockVisible) -> Result<Vec<Vec<f64>>> {
    let mut row = model.hidden_activation_probs(v)?.into_vec();
    row.push(1.0);
    Ok(vec![row; model.shape().p + 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictMode {
    /// Deterministic: conditional expectations in place of samples.
    #[default]
    MeanField,
    Stochastic,
}

impl std::str::FromStr for PredictMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-field" | "meanfield" | "mean_field" => Ok(PredictMode::MeanField),
            "stochastic" => Ok(PredictMode::Stochastic),
            other => Err(Error::Config(format!("unknown predict mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for PredictMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictMode::MeanField => "mean-field",
            PredictMode::Stochastic => "stochastic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `p(v_t = 1)` per visible unit after the last sweep.
    pub probs: Vec<f64>,
    /// `probs >= 0.5` as 1, else 0.
    pub directions: Vec<u8>,
}

pub fn threshold(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&q| u8::from(q >= 0.5)).collect()
}

/// Predicts the lag-0 visible block with lags `1..=p` clamped to `past`
/// (`past[0]` is lag 1, the most recent observation).
///
/// Only the lag-0 block is updated during the `k_pred` sweeps. In mean-field
/// mode it starts at 0.5 and the result does not depend on `rng`.
pub fn predict_direction<B: AsRef<[u8]>>(
    model: &Model,
    past: &[B],
    k_pred: usize,
    mode: PredictMode,
    rng: &mut RngStream,
) -> Result<Prediction> {
    let shape = *model.shape();
    let n = shape.n;
    if past.len() != shape.p {
        return Err(Error::Dimension(format!(
            "prediction needs {} past blocks, got {}",
            shape.p,
            past.len()
        )));
    }
    if k_pred == 0 {
        return Err(Error::Domain("prediction needs k_pred >= 1".into()));
    }
    let mut v = vec![0.0; shape.visible_len()];
    for (lag, block) in past.iter().enumerate() {
        let block = block.as_ref();
        if block.len() != n {
            return Err(Error::Dimension(format!(
                "past block {} has {} units, expected {n}",
                lag + 1,
                block.len()
            )));
        }
        for (dst, &x) in v[(lag + 1) * n..(lag + 2) * n].iter_mut().zip(block) {
            if x > 1 {
                return Err(Error::Domain(format!("unit value {x} is not binary")));
            }
            *dst = f64::from(x);
        }
    }

    let mut probs = vec![0.5; n];
    match mode {
        PredictMode::MeanField => v[..n].fill(0.5),
        PredictMode::Stochastic => {
            for x in &mut v[..n] {
                *x = rng.bernoulli(0.5);
            }
        }
    }
    for _ in 0..k_pred {
        let hidden: Vec<f64> = model.hidden_field(&v)?.into_iter().map(logistic).collect();
        let h = match mode {
            PredictMode::MeanField => hidden,
            PredictMode::Stochastic => draw(hidden, rng),
        };
        probs = model
            .visible_field_lag(&h, 0)?
            .into_iter()
            .map(logistic)
            .collect();
        match mode {
            PredictMode::MeanField => v[..n].copy_from_slice(&probs),
            PredictMode::Stochastic => {
                for (dst, &q) in v[..n].iter_mut().zip(&probs) {
                    *dst = rng.bernoulli(q);
                }
            }
        }
    }
    let directions = threshold(&probs);
    Ok(Prediction { probs, directions })
}
