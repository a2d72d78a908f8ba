#![allow(dead_code)]

use prbm::model::{BlockVisible, BlockWeights, Model, ModelShape};
use prbm::oracle::{log_sum_exp, ExactOracle};
use prbm::RngStream;

/// Every weight and bias uniform in `[-scale, scale)`.
pub fn random_model(n: usize, m: usize, p: usize, alpha: f64, seed: u64, scale: f64) -> Model {
    let shape = ModelShape::new(n, m, p, alpha).unwrap();
    let mut rng = RngStream::new(seed);
    let mut w = BlockWeights::zeros(n, m, p);
    for x in w.vh.iter_mut().chain(&mut w.vbias).chain(&mut w.hbias) {
        *x = scale * (2.0 * rng.uniform() - 1.0);
    }
    Model::new(shape, w).unwrap()
}

/// n = m = 2, p = 1. Hidden unit `b` at lag 0 reads visible unit `b` at
/// lags 0 and 1 with effective weight `w`; lag-0 visibles have bias `-w/2`,
/// the hidden unit `-w`. A past unit that is on makes its lag-0 counterpart
/// likely on.
pub fn planted_model(w: f64) -> Model {
    let alpha = 0.5;
    let shape = ModelShape::new(2, 2, 1, alpha).unwrap();
    let mut weights = BlockWeights::zeros(2, 2, 1);
    for b in 0..2 {
        weights.vh_block_mut(0, 0)[b * 2 + b] = w;
        // the stored cross-lag weight is attenuated by alpha^1
        weights.vh_block_mut(1, 0)[b * 2 + b] = w / alpha;
        weights.vbias_block_mut(0)[b] = -w / 2.0;
        weights.hbias_block_mut(0)[b] = -w;
    }
    Model::new(shape, weights).unwrap()
}

/// Exact `p(v_0,u = 1 | lags 1..=p)` by enumerating lag-0 visibles and all
/// hiddens; `past[0]` is lag 1.
pub fn exact_conditional(model: &Model, past: &[Vec<u8>]) -> Vec<f64> {
    let oracle = ExactOracle::new(model);
    let n = model.shape().n;
    let mut on = vec![Vec::new(); n];
    let mut all = Vec::new();
    for bits in 0..1u64 << n {
        let lag0: Vec<u8> = (0..n).map(|u| ((bits >> u) & 1) as u8).collect();
        let mut blocks = vec![lag0.clone()];
        blocks.extend(past.iter().cloned());
        let v = BlockVisible::from_blocks(&blocks).unwrap();
        let t = oracle.log_hidden_sum_bruteforce(&v).unwrap();
        all.push(t);
        for u in 0..n {
            if lag0[u] == 1 {
                on[u].push(t);
            }
        }
    }
    let norm = log_sum_exp(&all);
    on.iter().map(|t| (log_sum_exp(t) - norm).exp()).collect()
}
