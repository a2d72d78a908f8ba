//! k-step contrastive divergence training.
//!
//! For a data window `v0` and a chain sample `vk` after `k` sweeps, the
//! update for interaction block `(i, j)` is
//!
//! ```text
//! alpha^|i-j| * ( v0_i E[h_j | v0]^T  -  vk_i E[h_j | vk]^T )
//! ```
//!
//! with bias blocks updated by the matching differences of visible states and
//! hidden expectations. Minibatch gradients are per-example means; each
//! example owns an rng stream derived from `(seed, epoch, window index)` and
//! the reduction runs in fixed order, so results do not depend on threading.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::gibbs_chain;
use crate::model::{BlockVisible, Model};
use crate::oracle::ExactOracle;
use crate::rng::RngStream;

/// Exact NLL is reported only when `(p + 1) * max(n, m)` is at most this.
pub const EXACT_NLL_MAX_UNITS: usize = 20;

/// Gradient with the block structure of [`crate::model::BlockWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlocks {
    n: usize,
    m: usize,
    p: usize,
    pub vh: Vec<f64>,
    pub vbias: Vec<f64>,
    pub hbias: Vec<f64>,
}

impl GradientBlocks {
    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        let lags = p + 1;
        Self {
            n,
            m,
            p,
            vh: vec![0.0; lags * lags * n * m],
            vbias: vec![0.0; lags * n],
            hbias: vec![0.0; lags * m],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.p)
    }

    pub fn vh_block(&self, i: usize, j: usize) -> &[f64] {
        let len = self.n * self.m;
        let o = (i * (self.p + 1) + j) * len;
        &self.vh[o..o + len]
    }

    pub fn vh_block_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let len = self.n * self.m;
        let o = (i * (self.p + 1) + j) * len;
        &mut self.vh[o..o + len]
    }

    /// All entries in checkpoint order: vh, vbias, hbias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.vh.iter().chain(&self.vbias).chain(&self.hbias)
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.vh
            .iter_mut()
            .chain(self.vbias.iter_mut())
            .chain(self.hbias.iter_mut())
    }

    pub fn add_assign(&mut self, other: &GradientBlocks) {
        assert_eq!(self.dims(), other.dims(), "gradient shapes differ");
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn div_scalar(&mut self, d: f64) {
        for a in self.iter_mut() {
            *a /= d;
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &GradientBlocks) -> f64 {
        let dot: f64 = self.iter().zip(other.iter()).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// CD-k gradient estimate for one window.
pub fn cd_gradient(
    model: &Model,
    v0: &BlockVisible,
    k: usize,
    rng: &mut RngStream,
) -> Result<GradientBlocks> {
    let shape = *model.shape();
    let (n, m, lags) = (shape.n, shape.m, shape.lags());
    let data_h = model.hidden_activation_probs(v0)?;
    let chain = gibbs_chain(model, v0, k, rng)?;
    let vk = &chain.v;
    let model_h = model.hidden_activation_probs(vk)?;

    let mut g = GradientBlocks::zeros(n, m, shape.p);
    for i in 0..lags {
        let (v0i, vki) = (v0.block(i), vk.block(i));
        for j in 0..lags {
            let f = model.forgetting().get(i, j);
            if f == 0.0 {
                continue;
            }
            let (e0, ek) = (data_h.block(j), model_h.block(j));
            let block = g.vh_block_mut(i, j);
            for a in 0..n {
                let row = &mut block[a * m..(a + 1) * m];
                for b in 0..m {
                    row[b] = f * (v0i[a] * e0[b] - vki[a] * ek[b]);
                }
            }
        }
    }
    for (g, (x0, xk)) in g.vbias.iter_mut().zip(v0.as_slice().iter().zip(vk.as_slice())) {
        *g = x0 - xk;
    }
    for (g, (e0, ek)) in g
        .hbias
        .iter_mut()
        .zip(data_h.as_slice().iter().zip(model_h.as_slice()))
    {
        *g = e0 - ek;
    }
    Ok(g)
}

/// `W <- W + eta * grad`. Leaves the model untouched and fails if any
/// updated entry would be non-finite.
pub fn apply_update(model: &mut Model, grad: &GradientBlocks, eta: f64) -> Result<()> {
    let s = *model.shape();
    if grad.dims() != (s.n, s.m, s.p) {
        return Err(Error::Dimension(format!(
            "gradient {:?} does not match model (n={}, m={}, p={})",
            grad.dims(),
            s.n,
            s.m,
            s.p
        )));
    }
    let w = model.weights();
    let stays_finite = w
        .vh
        .iter()
        .chain(&w.vbias)
        .chain(&w.hbias)
        .zip(grad.iter())
        .all(|(x, g)| (x + eta * g).is_finite());
    if !stays_finite {
        return Err(Error::Numeric("update produced a non-finite weight".into()));
    }
    let w = model.weights_mut();
    for (x, g) in w
        .vh
        .iter_mut()
        .chain(w.vbias.iter_mut())
        .chain(w.hbias.iter_mut())
        .zip(grad.iter())
    {
        *x += eta * g;
    }
    Ok(())
}

/// Mean CD-k gradient over a minibatch; example `e` uses `RngStream::new(seeds[e])`.
///
/// Per-example gradients may be computed in parallel but are always summed
/// in slice order.
pub fn batch_gradient(
    model: &Model,
    batch: &[&BlockVisible],
    seeds: &[u64],
    k: usize,
    parallel: bool,
) -> Result<GradientBlocks> {
    if batch.is_empty() || batch.len() != seeds.len() {
        return Err(Error::Dimension(format!(
            "batch of {} windows with {} seeds",
            batch.len(),
            seeds.len()
        )));
    }
    let one = |(v, &seed): (&&BlockVisible, &u64)| cd_gradient(model, v, k, &mut RngStream::new(seed));
    let grads: Vec<Result<GradientBlocks>> = if parallel && batch.len() > 1 {
        batch.par_iter().zip(seeds.par_iter()).map(one).collect()
    } else {
        batch.iter().zip(seeds.iter()).map(one).collect()
    };
    let s = model.shape();
    let mut total = GradientBlocks::zeros(s.n, s.m, s.p);
    for g in grads {
        total.add_assign(&g?);
    }
    total.div_scalar(batch.len() as f64);
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate, > 0.
    pub eta: f64,
    /// Gibbs sweeps per CD update, >= 1.
    pub k: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Windows per update, >= 1.
    pub minibatch: usize,
    /// Reshuffle window order every epoch.
    pub shuffle: bool,
    /// Compute minibatch gradients on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.001,
            k: 1,
            epochs: 10,
            seed: 0,
            minibatch: 1,
            shuffle: false,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be positive, got {}", self.eta)));
        }
        if self.k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Domain("minibatch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    /// Mean free energy over the training windows.
    pub train_proxy: f64,
    pub val_proxy: Option<f64>,
    pub train_nll: Option<f64>,
    pub val_nll: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    /// One row per epoch. Wall-clock seconds are included only when
    /// `timing` is set, so untimed traces are reproducible byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::from("epoch,train_proxy,val_proxy,train_nll,val_nll");
        out.push_str(if timing { ",seconds\n" } else { "\n" });
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_proxy,
                opt(r.val_proxy),
                opt(r.train_nll),
                opt(r.val_nll),
            );
            if timing {
                let _ = write!(out, ",{:.6}", r.seconds);
            }
            out.push('\n');
        }
        out
    }
}

/// Mean free energy, the NLL up to the constant `ln Z`.
pub fn mean_free_energy(model: &Model, windows: &[BlockVisible]) -> Result<f64> {
    let mut total = 0.0;
    for v in windows {
        total += model.free_energy(v)?;
    }
    Ok(total / windows.len() as f64)
}

pub fn exact_nll_tractable(model: &Model) -> bool {
    let s = model.shape();
    s.lags() * s.n.max(s.m) <= EXACT_NLL_MAX_UNITS
}

/// Exact mean NLL, when the model is small enough to enumerate.
pub fn exact_mean_nll(model: &Model, windows: &[BlockVisible]) -> Result<Option<f64>> {
    if windows.is_empty() || !exact_nll_tractable(model) {
        return Ok(None);
    }
    let log_z = ExactOracle::new(model).log_partition_marginal()?;
    Ok(Some(mean_free_energy(model, windows)? + log_z))
}

fn epoch_record(
    model: &Model,
    epoch: usize,
    train: &[BlockVisible],
    val: &[BlockVisible],
    seconds: f64,
) -> Result<EpochRecord> {
    let train_proxy = mean_free_energy(model, train)?;
    let val_proxy = if val.is_empty() {
        None
    } else {
        Some(mean_free_energy(model, val)?)
    };
    let log_z = if exact_nll_tractable(model) {
        Some(ExactOracle::new(model).log_partition_marginal()?)
    } else {
        None
    };
    Ok(EpochRecord {
        epoch,
        train_proxy,
        val_proxy,
        train_nll: log_z.map(|z| train_proxy + z),
        val_nll: log_z.zip(val_proxy).map(|(z, v)| v + z),
        seconds,
    })
}

/// Trains `model` with CD-k over `train` for `config.epochs` epochs.
///
/// Windows are visited in order (or reshuffled per epoch) and grouped into
/// minibatches; each minibatch applies one averaged update. One trace record
/// is emitted per completed epoch. On divergence the error carries the trace
/// of the epochs completed so far.
pub fn train(
    mut model: Model,
    train: &[BlockVisible],
    val: &[BlockVisible],
    config: &TrainConfig,
) -> Result<(Model, TrainTrace)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let master = RngStream::new(config.seed);
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let epoch_stream = master.split(epoch as u64);
        if config.shuffle {
            order.sort_unstable();
            order.shuffle(&mut epoch_stream.split(u64::MAX));
        }
        let diverged = |reason: String, trace: &TrainTrace| Error::Diverged {
            epoch,
            reason,
            partial: Box::new(trace.clone()),
        };
        for chunk in order.chunks(config.minibatch) {
            let batch: Vec<&BlockVisible> = chunk.iter().map(|&w| &train[w]).collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&w| epoch_stream.child_seed(w as u64))
                .collect();
            let grad = batch_gradient(&model, &batch, &seeds, config.k, config.parallel)?;
            if let Err(e) = apply_update(&mut model, &grad, config.eta) {
                return Err(diverged(e.to_string(), &trace));
            }
        }
        let record = epoch_record(&model, epoch, train, val, started.elapsed().as_secs_f64())?;
        if !record.train_proxy.is_finite() {
            return Err(diverged("non-finite free energy".into(), &trace));
        }
        trace.records.push(record);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockWeights, ModelShape};

    fn windows(n: usize, lags: usize, count: usize, seed: u64) -> Vec<BlockVisible> {
        let mut rng = RngStream::new(seed);
        (0..count)
            .map(|_| BlockVisible::from_bits(n, lags, rand::RngCore::next_u64(&mut rng)))
            .collect()
    }

    #[test]
    fn alpha_zero_cross_lag_gradient_is_zero() {
        let shape = ModelShape::new(3, 2, 2, 0.0).unwrap();
        let model = Model::init(shape, 1);
        let mut rng = RngStream::new(2);
        for v in windows(3, 3, 20, 3) {
            let g = cd_gradient(&model, &v, 2, &mut rng).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(g.vh_block(i, j).iter().all(|&x| x == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn zero_model_expected_gradient_vanishes() {
        // zero weights: data and chain phases are both uniform; per-entry noise
        // std at 100k draws is about 0.0022
        let shape = ModelShape::new(2, 2, 1, 0.5).unwrap();
        let model = Model::zeros(shape);
        let mut rng = RngStream::new(11);
        let data = windows(2, 2, 100_000, 12);
        let mut mean = GradientBlocks::zeros(2, 2, 1);
        for v in &data {
            mean.add_assign(&cd_gradient(&model, v, 1, &mut rng).unwrap());
        }
        mean.div_scalar(data.len() as f64);
        assert!(mean.iter().all(|x| x.abs() < 0.01), "{mean:?}");
    }

    #[test]
    fn apply_update_arithmetic() {
        let shape = ModelShape::new(1, 1, 0, 0.5).unwrap();
        let w = BlockWeights::from_parts(1, 1, 0, vec![2.0], vec![3.0], vec![5.0]).unwrap();
        let mut model = Model::new(shape, w).unwrap();
        let mut g = GradientBlocks::zeros(1, 1, 0);
        g.vh[0] = 1.0;
        g.vbias[0] = -2.0;
        g.hbias[0] = 0.5;
        apply_update(&mut model, &g, 0.1).unwrap();
        let w = model.weights();
        assert_eq!((w.vh[0], w.vbias[0], w.hbias[0]), (2.0 + 0.1, 3.0 - 0.2, 5.0 + 0.05));
    }

    #[test]
    fn apply_update_noops() {
        let shape = ModelShape::new(2, 3, 1, 0.5).unwrap();
        let original = Model::init(shape, 4);
        let mut model = original.clone();
        let g = cd_gradient(&model, &windows(2, 2, 1, 1)[0], 1, &mut RngStream::new(0)).unwrap();
        apply_update(&mut model, &g, 0.0).unwrap();
        assert_eq!(model, original);
        apply_update(&mut model, &GradientBlocks::zeros(2, 3, 1), 0.5).unwrap();
        assert_eq!(model, original);
    }

    #[test]
    fn apply_update_rejects_non_finite() {
        let shape = ModelShape::new(1, 1, 0, 0.5).unwrap();
        let mut model = Model::zeros(shape);
        let mut g = GradientBlocks::zeros(1, 1, 0);
        g.vh[0] = f64::INFINITY;
        assert!(matches!(apply_update(&mut model, &g, 1.0), Err(Error::Numeric(_))));
        assert_eq!(model, Model::zeros(shape));
        let wrong = GradientBlocks::zeros(2, 1, 0);
        assert!(matches!(apply_update(&mut model, &wrong, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn minibatch_is_mean_of_examples() {
        let shape = ModelShape::new(3, 2, 1, 0.5).unwrap();
        let model = Model::init(shape, 5);
        let data = windows(3, 2, 7, 6);
        let refs: Vec<&BlockVisible> = data.iter().collect();
        let seeds: Vec<u64> = (100..107).collect();
        let batch = batch_gradient(&model, &refs, &seeds, 3, false).unwrap();
        let mut mean = GradientBlocks::zeros(3, 2, 1);
        for (v, &s) in data.iter().zip(&seeds) {
            mean.add_assign(&cd_gradient(&model, v, 3, &mut RngStream::new(s)).unwrap());
        }
        mean.div_scalar(7.0);
        assert_eq!(batch, mean);
    }

    #[test]
    fn parallel_reduction_is_bit_identical() {
        let shape = ModelShape::new(4, 3, 2, 0.5).unwrap();
        let model = Model::init(shape, 7);
        let data = windows(4, 3, 64, 8);
        let refs: Vec<&BlockVisible> = data.iter().collect();
        let seeds: Vec<u64> = (0..64).map(|s| s * 31 + 1).collect();
        let a = batch_gradient(&model, &refs, &seeds, 2, true).unwrap();
        let b = batch_gradient(&model, &refs, &seeds, 2, false).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn train_zero_epochs_is_identity() {
        let shape = ModelShape::new(2, 2, 1, 0.5).unwrap();
        let model = Model::init(shape, 9);
        let data = windows(2, 2, 10, 1);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, trace) = train(model.clone(), &data, &[], &config).unwrap();
        assert_eq!(trained, model);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn train_is_deterministic() {
        let shape = ModelShape::new(3, 2, 1, 0.5).unwrap();
        let data = windows(3, 2, 40, 2);
        let config = TrainConfig {
            eta: 0.05,
            epochs: 3,
            seed: 17,
            minibatch: 4,
            shuffle: true,
            ..TrainConfig::default()
        };
        let (a, ta) = train(Model::init(shape, 1), &data, &data[..5], &config).unwrap();
        let (b, tb) = train(Model::init(shape, 1), &data, &data[..5], &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.records.len(), 3);
        for (x, y) in ta.records.iter().zip(&tb.records) {
            assert_eq!(x.train_proxy, y.train_proxy);
            assert_eq!(x.val_nll, y.val_nll);
        }
        assert!(ta.records[0].train_nll.is_some());
    }

    #[test]
    fn train_rejects_bad_input() {
        let shape = ModelShape::new(2, 2, 1, 0.5).unwrap();
        let model = Model::zeros(shape);
        let cfg = TrainConfig::default();
        assert!(matches!(train(model.clone(), &[], &[], &cfg), Err(Error::Domain(_))));
        let bad = TrainConfig { k: 0, ..cfg.clone() };
        assert!(train(model.clone(), &windows(2, 2, 3, 0), &[], &bad).is_err());
        let bad = TrainConfig { eta: 0.0, ..cfg };
        assert!(train(model, &windows(2, 2, 3, 0), &[], &bad).is_err());
    }

    #[test]
    fn divergence_returns_partial_trace() {
        let shape = ModelShape::new(2, 2, 1, 1.0).unwrap();
        let data = windows(2, 2, 8, 3);
        let config = TrainConfig {
            eta: f64::MAX,
            epochs: 3,
            ..TrainConfig::default()
        };
        match train(Model::init(shape, 2), &data, &[], &config) {
            Err(Error::Diverged { epoch, partial, .. }) => {
                assert_eq!(epoch, 1);
                assert!(partial.records.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainTrace {
            records: vec![EpochRecord {
                epoch: 1,
                train_proxy: 1.5,
                val_proxy: None,
                train_nll: Some(2.0),
                val_nll: None,
                seconds: 0.25,
            }],
        };
        assert_eq!(
            trace.to_csv(true),
            "epoch,train_proxy,val_proxy,train_nll,val_nll,seconds\n1,1.5,,2,,0.250000\n"
        );
        assert_eq!(
            trace.to_csv(false),
            "epoch,train_proxy,val_proxy,train_nll,val_nll\n1,1.5,,2,\n"
        );
    }
}
