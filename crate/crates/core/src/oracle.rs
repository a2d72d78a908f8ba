//! Brute-force enumeration for tiny models.
//!
//! Everything here is computed from [`Model::energy`] alone by summing over
//! configurations in the log domain, so it can serve as ground truth for the
//! activation, sampling and training code. Enumeration sizes are bounded by
//! an [`EnumerationBudget`].

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::model::{softplus, BlockHidden, BlockVisible, Model};
use crate::trainer::GradientBlocks;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    /// Largest number of binary units enumerated jointly.
    pub max_total_bits: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self { max_total_bits: 24 }
    }
}

/// Stable `ln sum exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-unit conditionals together with the largest deviation between the
/// enumerated block-joint conditional and the product of per-lag marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCheck {
    /// `p(unit = 1 | other layer)`, flat lag-major.
    pub probs: Vec<f64>,
    pub max_factorization_error: f64,
}

pub struct ExactOracle<'a> {
    model: &'a Model,
    budget: EnumerationBudget,
    log_z: Cell<Option<f64>>,
}

impl<'a> ExactOracle<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self::with_budget(model, EnumerationBudget::default())
    }

    pub fn with_budget(model: &'a Model, budget: EnumerationBudget) -> Self {
        Self {
            model,
            budget,
            log_z: Cell::new(None),
        }
    }

    fn check(&self, bits: usize) -> Result<()> {
        if bits > self.budget.max_total_bits || bits >= 64 {
            return Err(Error::Capacity {
                bits,
                budget: self.budget.max_total_bits,
            });
        }
        Ok(())
    }

    fn visible_bits(&self) -> usize {
        self.model.shape().visible_len()
    }

    fn hidden_bits(&self) -> usize {
        self.model.shape().hidden_len()
    }

    fn visible(&self, bits: u64) -> BlockVisible {
        let s = self.model.shape();
        BlockVisible::from_bits(s.n, s.lags(), bits)
    }

    fn hidden(&self, bits: u64) -> BlockHidden {
        let s = self.model.shape();
        BlockHidden::from_bits(s.m, s.lags(), bits)
    }

    fn neg_energy(&self, v: &BlockVisible, h: &BlockHidden) -> f64 {
        -self.model.energy(v, h).expect("enumerated shapes match the model")
    }

    /// `ln Z` by summing `exp(-E)` over every joint configuration.
    pub fn partition_function(&self) -> Result<f64> {
        let (vb, hb) = (self.visible_bits(), self.hidden_bits());
        self.check(vb + hb)?;
        let mut terms = Vec::with_capacity(1 << (vb + hb));
        for vbits in 0..1u64 << vb {
            let v = self.visible(vbits);
            for hbits in 0..1u64 << hb {
                terms.push(self.neg_energy(&v, &self.hidden(hbits)));
            }
        }
        Ok(log_sum_exp(&terms))
    }

    /// `ln Z` by summing `exp(-F(v))` over visible configurations only, with
    /// the free energy from [`Model::free_energy`].
    pub fn log_partition_marginal(&self) -> Result<f64> {
        let vb = self.visible_bits();
        self.check(vb)?;
        let mut terms = Vec::with_capacity(1 << vb);
        for vbits in 0..1u64 << vb {
            terms.push(-self.model.free_energy(&self.visible(vbits))?);
        }
        Ok(log_sum_exp(&terms))
    }

    fn log_z(&self) -> Result<f64> {
        if let Some(z) = self.log_z.get() {
            return Ok(z);
        }
        let z = if self.visible_bits() + self.hidden_bits() <= self.budget.max_total_bits {
            self.partition_function()?
        } else {
            self.log_partition_marginal()?
        };
        self.log_z.set(Some(z));
        Ok(z)
    }

    /// `p(v, h) = exp(-E(v, h)) / Z`.
    pub fn joint(&self, v: &BlockVisible, h: &BlockHidden) -> Result<f64> {
        self.check(self.visible_bits() + self.hidden_bits())?;
        let e = self.model.energy(v, h)?;
        Ok((-e - self.log_z()?).exp())
    }

    /// `ln sum_h exp(-E(v, h))` by enumerating every hidden configuration.
    pub fn log_hidden_sum_bruteforce(&self, v: &BlockVisible) -> Result<f64> {
        let hb = self.hidden_bits();
        self.check(hb)?;
        let terms: Vec<f64> = (0..1u64 << hb)
            .map(|bits| self.neg_energy(v, &self.hidden(bits)))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// `ln sum_h exp(-E(v, h))` using that the energy is linear in each hidden
    /// unit: the coefficient of unit `u` is `E(v, 0) - E(v, e_u)`.
    pub fn log_hidden_sum_factorized(&self, v: &BlockVisible) -> Result<f64> {
        let hb = self.hidden_bits();
        self.check(hb)?;
        let off = self.neg_energy(v, &self.hidden(0));
        let mut total = off;
        for u in 0..hb {
            let coeff = self.neg_energy(v, &self.hidden(1 << u)) - off;
            total += softplus(coeff);
        }
        Ok(total)
    }

    /// Exact log-likelihood of one window.
    pub fn loglik(&self, v: &BlockVisible) -> Result<f64> {
        Ok(self.log_hidden_sum_factorized(v)? - self.log_z()?)
    }

    /// Mean negative log-likelihood over windows.
    pub fn mean_nll(&self, windows: &[BlockVisible]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Domain("no windows to score".into()));
        }
        let mut total = 0.0;
        for v in windows {
            total -= self.loglik(v)?;
        }
        Ok(total / windows.len() as f64)
    }

    /// `p(v)` for every visible configuration, indexed by [`BlockVisible::to_bits`].
    pub fn visible_marginal(&self) -> Result<Vec<f64>> {
        let vb = self.visible_bits();
        self.check(vb)?;
        let log_z = self.log_z()?;
        (0..1u64 << vb)
            .map(|bits| Ok((self.log_hidden_sum_factorized(&self.visible(bits))? - log_z).exp()))
            .collect()
    }

    /// Exact gradient of `ln p(v)` with respect to every stored weight.
    pub fn gradient(&self, v: &BlockVisible) -> Result<GradientBlocks> {
        let shape = *self.model.shape();
        let (vb, hb) = (self.visible_bits(), self.hidden_bits());
        self.check(vb + hb)?;
        let (n, m, lags) = (shape.n, shape.m, shape.lags());

        // E[v_i h_j^T] style second moments, flat over (i, j, a, b)
        let moments = |weights: &mut dyn Iterator<Item = (f64, BlockVisible, BlockHidden)>| {
            let mut g = GradientBlocks::zeros(n, m, shape.p);
            for (w, v, h) in weights {
                for i in 0..lags {
                    for j in 0..lags {
                        let block = g.vh_block_mut(i, j);
                        for a in 0..n {
                            let va = v.block(i)[a];
                            if va == 0.0 {
                                continue;
                            }
                            for b in 0..m {
                                block[a * m + b] += w * va * h.block(j)[b];
                            }
                        }
                    }
                }
                for (g, x) in g.vbias.iter_mut().zip(v.as_slice()) {
                    *g += w * x;
                }
                for (g, y) in g.hbias.iter_mut().zip(h.as_slice()) {
                    *g += w * y;
                }
            }
            g
        };

        let log_hsum = self.log_hidden_sum_bruteforce(v)?;
        let mut data_iter = (0..1u64 << hb).map(|bits| {
            let h = self.hidden(bits);
            let w = (self.neg_energy(v, &h) - log_hsum).exp();
            (w, v.clone(), h)
        });
        let data = moments(&mut data_iter);

        let log_z = self.partition_function()?;
        let mut model_iter = (0..1u64 << (vb + hb)).map(|bits| {
            let vv = self.visible(bits & ((1 << vb) - 1));
            let h = self.hidden(bits >> vb);
            let w = (self.neg_energy(&vv, &h) - log_z).exp();
            (w, vv, h)
        });
        let model_term = moments(&mut model_iter);

        let mut g = data;
        for (d, mt) in g.vbias.iter_mut().zip(&model_term.vbias) {
            *d -= mt;
        }
        for (d, mt) in g.hbias.iter_mut().zip(&model_term.hbias) {
            *d -= mt;
        }
        for i in 0..lags {
            for j in 0..lags {
                let f = self.model.forgetting().get(i, j);
                let mt = model_term.vh_block(i, j).to_vec();
                for (d, x) in g.vh_block_mut(i, j).iter_mut().zip(mt) {
                    *d = f * (*d - x);
                }
            }
        }
        Ok(g)
    }

    /// Enumerated `p(h_u = 1 | v)` and the factorization check across hidden lags.
    pub fn hidden_conditionals(&self, v: &BlockVisible) -> Result<ConditionalCheck> {
        let hb = self.hidden_bits();
        self.check(hb)?;
        let s = self.model.shape();
        let terms: Vec<f64> = (0..1u64 << hb)
            .map(|bits| self.neg_energy(v, &self.hidden(bits)))
            .collect();
        Ok(conditional_check(&terms, s.m, s.lags()))
    }

    /// Enumerated `p(v_u = 1 | h)` and the factorization check across visible lags.
    pub fn visible_conditionals(&self, h: &BlockHidden) -> Result<ConditionalCheck> {
        let vb = self.visible_bits();
        self.check(vb)?;
        let s = self.model.shape();
        let terms: Vec<f64> = (0..1u64 << vb)
            .map(|bits| self.neg_energy(&self.visible(bits), h))
            .collect();
        Ok(conditional_check(&terms, s.n, s.lags()))
    }

    /// `p(v_(t-i),u = 1 | h_(t-j) = hj)` under the joint, marginalizing every
    /// other hidden block.
    pub fn visible_block_conditional(&self, i: usize, j: usize, hj: &[u8]) -> Result<Vec<f64>> {
        let s = *self.model.shape();
        if i >= s.lags() || j >= s.lags() || hj.len() != s.m {
            return Err(Error::Dimension(format!(
                "block conditional ({i}, {j}) with {} hidden units on a model with {} lags and m={}",
                hj.len(),
                s.lags(),
                s.m
            )));
        }
        let (vb, hb) = (self.visible_bits(), self.hidden_bits());
        self.check(vb + hb)?;
        let mut on = vec![Vec::new(); s.n];
        let mut all = Vec::new();
        for hbits in 0..1u64 << hb {
            let h = self.hidden(hbits);
            if h.block(j).iter().zip(hj).any(|(&x, &y)| x != f64::from(y)) {
                continue;
            }
            for vbits in 0..1u64 << vb {
                let v = self.visible(vbits);
                let t = self.neg_energy(&v, &h);
                all.push(t);
                for (a, bucket) in on.iter_mut().enumerate() {
                    if v.block(i)[a] == 1.0 {
                        bucket.push(t);
                    }
                }
            }
        }
        let norm = log_sum_exp(&all);
        Ok(on.iter().map(|t| (log_sum_exp(t) - norm).exp()).collect())
    }
}

/// `terms[bits]` holds the unnormalized log weight of configuration `bits`
/// over `lags` blocks of `width` units.
fn conditional_check(terms: &[f64], width: usize, lags: usize) -> ConditionalCheck {
    let norm = log_sum_exp(terms);
    let probs_joint: Vec<f64> = terms.iter().map(|t| (t - norm).exp()).collect();
    let units = width * lags;
    let mut probs = vec![0.0; units];
    let block_states = 1usize << width;
    let mut block_marginals = vec![vec![0.0; block_states]; lags];
    for (bits, &q) in probs_joint.iter().enumerate() {
        for (u, p) in probs.iter_mut().enumerate() {
            if (bits >> u) & 1 == 1 {
                *p += q;
            }
        }
        for (lag, marginal) in block_marginals.iter_mut().enumerate() {
            marginal[(bits >> (lag * width)) & (block_states - 1)] += q;
        }
    }
    let max_factorization_error = probs_joint
        .iter()
        .enumerate()
        .map(|(bits, &q)| {
            let product: f64 = block_marginals
                .iter()
                .enumerate()
                .map(|(lag, marginal)| marginal[(bits >> (lag * width)) & (block_states - 1)])
                .product();
            (q - product).abs()
        })
        .fold(0.0, f64::max);
    ConditionalCheck {
        probs,
        max_factorization_error,
    }
}
