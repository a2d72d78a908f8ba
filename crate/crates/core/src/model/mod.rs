//! Parameterization of the p-step restricted Boltzmann machine.
//!
//! A model holds `p + 1` time-indexed copies of a visible layer (`n` units)
//! and a hidden layer (`m` units). Every visible lag `i` connects to every
//! hidden lag `j` through an `n x m` block `W[i][j]`, attenuated by the
//! forgetting factor `alpha^|i - j|`. Each lag additionally carries its own
//! visible and hidden bias block.
//!
//! Lag 0 is the most recent time step. Block vectors are stored flat,
//! lag-major: unit `u` of lag `i` lives at `i * width + u`.

pub mod checkpoint;

use std::marker::PhantomData;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Standard deviation of the initial interaction weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    /// Visible units per time step.
    pub n: usize,
    /// Hidden units per time step.
    pub m: usize,
    /// Number of past steps remembered.
    pub p: usize,
    /// Forgetting rate in `[0, 1]`.
    pub alpha: f64,
}

impl ModelShape {
    pub fn new(n: usize, m: usize, p: usize, alpha: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Domain(format!(
                "layer sizes must be positive (n={n}, m={m})"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self { n, m, p, alpha })
    }

    /// Number of time-indexed blocks, `p + 1`.
    pub fn lags(&self) -> usize {
        self.p + 1
    }

    pub fn visible_len(&self) -> usize {
        self.lags() * self.n
    }

    pub fn hidden_len(&self) -> usize {
        self.lags() * self.m
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visible;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hidden;

/// Binary block vector: `lags` blocks of `width` units, each 0 or 1.
///
/// The trailing ones block of the augmented form is implicit; see
/// [`Blocks::augmented`].
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks<L> {
    width: usize,
    lags: usize,
    data: Vec<f64>,
    _layer: PhantomData<L>,
}

pub type BlockVisible = Blocks<Visible>;
pub type BlockHidden = Blocks<Hidden>;

impl<L> Blocks<L> {
    pub fn zeros(width: usize, lags: usize) -> Self {
        Self {
            width,
            lags,
            data: vec![0.0; width * lags],
            _layer: PhantomData,
        }
    }

    /// Builds from per-lag blocks, lag 0 first.
    pub fn from_blocks<B: AsRef<[u8]>>(blocks: &[B]) -> Result<Self> {
        let lags = blocks.len();
        if lags == 0 {
            return Err(Error::Dimension("block vector needs at least one block".into()));
        }
        let width = blocks[0].as_ref().len();
        let mut data = Vec::with_capacity(width * lags);
        for (i, b) in blocks.iter().enumerate() {
            let b = b.as_ref();
            if b.len() != width {
                return Err(Error::Dimension(format!(
                    "block {i} has {} units, expected {width}",
                    b.len()
                )));
            }
            for &x in b {
                if x > 1 {
                    return Err(Error::Domain(format!("unit value {x} is not binary")));
                }
                data.push(f64::from(x));
            }
        }
        Ok(Self {
            width,
            lags,
            data,
            _layer: PhantomData,
        })
    }

    pub fn from_flat(width: usize, lags: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * lags {
            return Err(Error::Dimension(format!(
                "flat block vector has {} entries, expected {}",
                data.len(),
                width * lags
            )));
        }
        if let Some(x) = data.iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(Error::Domain(format!("unit value {x} is not binary")));
        }
        Ok(Self {
            width,
            lags,
            data,
            _layer: PhantomData,
        })
    }

    /// Decodes the low `width * lags` bits of `bits`; bit `k` sets flat unit `k`.
    pub fn from_bits(width: usize, lags: usize, bits: u64) -> Self {
        let data = (0..width * lags)
            .map(|k| ((bits >> k) & 1) as f64)
            .collect();
        Self {
            width,
            lags,
            data,
            _layer: PhantomData,
        }
    }

    pub fn to_bits(&self) -> u64 {
        self.data
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &x)| acc | ((x as u64) << k))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn block(&self, lag: usize) -> &[f64] {
        &self.data[lag * self.width..(lag + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sets one unit; `value` must be 0 or 1.
    pub fn set(&mut self, lag: usize, unit: usize, value: u8) {
        assert!(value <= 1, "unit value must be binary");
        self.data[lag * self.width + unit] = f64::from(value);
    }

    pub fn get(&self, lag: usize, unit: usize) -> u8 {
        self.data[lag * self.width + unit] as u8
    }

    /// Flat vector with the trailing bias unit appended.
    pub fn augmented(&self) -> Vec<f64> {
        let mut v = self.data.clone();
        v.push(1.0);
        v
    }

    pub(crate) fn from_flat_unchecked(width: usize, lags: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * lags);
        Self {
            width,
            lags,
            data,
            _layer: PhantomData,
        }
    }
}

/// Per-lag activation probabilities, flat lag-major like [`Blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockProbs {
    width: usize,
    lags: usize,
    data: Vec<f64>,
}

impl BlockProbs {
    pub(crate) fn new(width: usize, lags: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * lags);
        Self { width, lags, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn block(&self, lag: usize) -> &[f64] {
        &self.data[lag * self.width..(lag + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// The (p+2) x (p+2) matrix of forgetting factors.
///
/// Entry `(i, j)` is `alpha^|i - j|` for `i, j <= p` (with `0^0 = 1`) and 1 in
/// the last row and column, which pair with the bias blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl ForgettingMatrix {
    pub fn build(alpha: f64, p: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let size = p + 2;
        let mut entries = vec![1.0; size * size];
        for i in 0..=p {
            for j in 0..=p {
                // powi(0) is 1 even for alpha = 0
                entries[i * size + j] = alpha.powi(i.abs_diff(j) as i32);
            }
        }
        Ok(Self { size, entries })
    }

    /// Side length, `p + 2`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.size).map(<[f64]>::to_vec).collect()
    }
}

/// Weight blocks of a model.
///
/// `vh` holds the `(p+1) x (p+1)` grid of `n x m` interaction blocks; block
/// `(i, j)` couples visible lag `i` with hidden lag `j` and is stored
/// row-major at offset `(i * (p+1) + j) * n * m`. The zero corner of the
/// assembled matrix is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    n: usize,
    m: usize,
    p: usize,
    pub vh: Vec<f64>,
    pub vbias: Vec<f64>,
    pub hbias: Vec<f64>,
}

impl BlockWeights {
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

    /// Interaction blocks i.i.d. `N(0, INIT_WEIGHT_STD^2)`, biases zero.
    pub fn init(n: usize, m: usize, p: usize, rng: &mut RngStream) -> Self {
        let mut w = Self::zeros(n, m, p);
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
        for x in &mut w.vh {
            *x = normal.sample(rng);
        }
        w
    }

    pub fn from_parts(
        n: usize,
        m: usize,
        p: usize,
        vh: Vec<f64>,
        vbias: Vec<f64>,
        hbias: Vec<f64>,
    ) -> Result<Self> {
        let lags = p + 1;
        if vh.len() != lags * lags * n * m || vbias.len() != lags * n || hbias.len() != lags * m {
            return Err(Error::Dimension(format!(
                "weight parts ({}, {}, {}) do not fit n={n}, m={m}, p={p}",
                vh.len(),
                vbias.len(),
                hbias.len()
            )));
        }
        let w = Self {
            n,
            m,
            p,
            vh,
            vbias,
            hbias,
        };
        if !w.is_finite() {
            return Err(Error::Numeric("non-finite weight".into()));
        }
        Ok(w)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.p)
    }

    fn block_offset(&self, i: usize, j: usize) -> usize {
        (i * (self.p + 1) + j) * self.n * self.m
    }

    /// Row-major `n x m` interaction block between visible lag `i` and hidden lag `j`.
    pub fn vh_block(&self, i: usize, j: usize) -> &[f64] {
        let o = self.block_offset(i, j);
        &self.vh[o..o + self.n * self.m]
    }

    pub fn vh_block_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.block_offset(i, j);
        let len = self.n * self.m;
        &mut self.vh[o..o + len]
    }

    pub fn vbias_block(&self, i: usize) -> &[f64] {
        &self.vbias[i * self.n..(i + 1) * self.n]
    }

    pub fn vbias_block_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.vbias[i * n..(i + 1) * n]
    }

    pub fn hbias_block(&self, j: usize) -> &[f64] {
        &self.hbias[j * self.m..(j + 1) * self.m]
    }

    pub fn hbias_block_mut(&mut self, j: usize) -> &mut [f64] {
        let m = self.m;
        &mut self.hbias[j * m..(j + 1) * m]
    }

    pub fn is_finite(&self) -> bool {
        self.vh
            .iter()
            .chain(&self.vbias)
            .chain(&self.hbias)
            .all(|x| x.is_finite())
    }

    /// Lays the blocks out as the full `((p+1)n + 1) x ((p+1)m + 1)` matrix,
    /// with visible biases in the last column, hidden biases in the last row
    /// and a zero bottom-right corner.
    pub fn assemble_full_matrix(&self) -> FullMatrix {
        let (n, m, lags) = (self.n, self.m, self.p + 1);
        let rows = lags * n + 1;
        let cols = lags * m + 1;
        let mut data = vec![0.0; rows * cols];
        for i in 0..lags {
            for j in 0..lags {
                let w = self.vh_block(i, j);
                for a in 0..n {
                    for b in 0..m {
                        data[(i * n + a) * cols + j * m + b] = w[a * m + b];
                    }
                }
            }
            for (a, &x) in self.vbias_block(i).iter().enumerate() {
                data[(i * n + a) * cols + cols - 1] = x;
            }
        }
        for j in 0..lags {
            for (b, &x) in self.hbias_block(j).iter().enumerate() {
                data[(rows - 1) * cols + j * m + b] = x;
            }
        }
        FullMatrix { rows, cols, data }
    }
}

/// Dense row-major matrix produced by [`BlockWeights::assemble_full_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct FullMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FullMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A p-RBM: shape, weights and the forgetting matrix derived from `alpha`.
///
/// All methods take `&self`; mutation happens only through
/// [`Model::apply_update`](crate::trainer) style `&mut` access.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    shape: ModelShape,
    weights: BlockWeights,
    forgetting: ForgettingMatrix,
}

impl Model {
    pub fn new(shape: ModelShape, weights: BlockWeights) -> Result<Self> {
        ModelShape::new(shape.n, shape.m, shape.p, shape.alpha)?;
        if weights.dims() != (shape.n, shape.m, shape.p) {
            return Err(Error::Dimension(format!(
                "weights {:?} do not match shape (n={}, m={}, p={})",
                weights.dims(),
                shape.n,
                shape.m,
                shape.p
            )));
        }
        if !weights.is_finite() {
            return Err(Error::Numeric("non-finite weight".into()));
        }
        let forgetting = ForgettingMatrix::build(shape.alpha, shape.p)?;
        Ok(Self {
            shape,
            weights,
            forgetting,
        })
    }

    pub fn zeros(shape: ModelShape) -> Self {
        let weights = BlockWeights::zeros(shape.n, shape.m, shape.p);
        Self::new(shape, weights).expect("zero weights fit their own shape")
    }

    /// Seeded initialization: small Gaussian interactions, zero biases.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let weights = BlockWeights::init(shape.n, shape.m, shape.p, &mut rng);
        Self::new(shape, weights).expect("initialized weights fit their own shape")
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn weights(&self) -> &BlockWeights {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut BlockWeights {
        &mut self.weights
    }

    pub fn forgetting(&self) -> &ForgettingMatrix {
        &self.forgetting
    }

    pub fn into_weights(self) -> BlockWeights {
        self.weights
    }

    fn check_visible<L>(&self, v: &Blocks<L>) -> Result<()> {
        if v.width() != self.shape.n || v.lags() != self.shape.lags() {
            return Err(Error::Dimension(format!(
                "visible blocks {}x{} do not match model {}x{}",
                v.lags(),
                v.width(),
                self.shape.lags(),
                self.shape.n
            )));
        }
        Ok(())
    }

    fn check_hidden<L>(&self, h: &Blocks<L>) -> Result<()> {
        if h.width() != self.shape.m || h.lags() != self.shape.lags() {
            return Err(Error::Dimension(format!(
                "hidden blocks {}x{} do not match model {}x{}",
                h.lags(),
                h.width(),
                self.shape.lags(),
                self.shape.m
            )));
        }
        Ok(())
    }

    /// Energy of a joint configuration.
    pub fn energy(&self, v: &BlockVisible, h: &BlockHidden) -> Result<f64> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        let ModelShape { n, m, .. } = self.shape;
        let lags = self.shape.lags();
        let w = &self.weights;

        let mut interaction = 0.0;
        for i in 0..lags {
            let vi = v.block(i);
            for j in 0..lags {
                let f = self.forgetting.get(i, j);
                if f == 0.0 {
                    continue;
                }
                let hj = h.block(j);
                let block = w.vh_block(i, j);
                let mut s = 0.0;
                for a in 0..n {
                    let row = &block[a * m..(a + 1) * m];
                    let inner: f64 = row.iter().zip(hj).map(|(x, y)| x * y).sum();
                    s += vi[a] * inner;
                }
                interaction += f * s;
            }
        }
        let vbias: f64 = w.vbias.iter().zip(v.as_slice()).map(|(a, x)| a * x).sum();
        let hbias: f64 = w.hbias.iter().zip(h.as_slice()).map(|(b, y)| b * y).sum();
        Ok(-interaction - vbias - hbias)
    }

    /// Energy evaluated as `-v~^T (A o W~) h~` on the assembled matrix.
    /// Slower than [`Model::energy`]; kept as an independent cross-check.
    pub fn energy_block_form(&self, v: &BlockVisible, h: &BlockHidden) -> Result<f64> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        let ModelShape { n, m, .. } = self.shape;
        let full = self.weights.assemble_full_matrix();
        let va = v.augmented();
        let ha = h.augmented();
        let lag_of_row = |r: usize| if r == full.rows - 1 { self.shape.lags() } else { r / n };
        let lag_of_col = |c: usize| if c == full.cols - 1 { self.shape.lags() } else { c / m };
        let mut total = 0.0;
        for (r, &x) in va.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (c, &y) in ha.iter().enumerate() {
                let mask = self.forgetting.get(lag_of_row(r), lag_of_col(c));
                total += x * mask * full.get(r, c) * y;
            }
        }
        Ok(-total)
    }

    /// Pre-activation of every hidden unit given (possibly real-valued)
    /// visible blocks, flat lag-major.
    pub fn hidden_field(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.shape.visible_len() {
            return Err(Error::Dimension(format!(
                "visible input has {} entries, expected {}",
                v.len(),
                self.shape.visible_len()
            )));
        }
        let ModelShape { n, m, .. } = self.shape;
        let lags = self.shape.lags();
        let mut out = self.weights.hbias.clone();
        for j in 0..lags {
            let acc = &mut out[j * m..(j + 1) * m];
            for i in 0..lags {
                let f = self.forgetting.get(i, j);
                if f == 0.0 {
                    continue;
                }
                let block = self.weights.vh_block(i, j);
                for (a, &va) in v[i * n..(i + 1) * n].iter().enumerate() {
                    if va == 0.0 {
                        continue;
                    }
                    let c = f * va;
                    for (o, &wab) in acc.iter_mut().zip(&block[a * m..(a + 1) * m]) {
                        *o += c * wab;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pre-activation of the visible units of lag `i` given hidden blocks.
    pub fn visible_field_lag(&self, h: &[f64], i: usize) -> Result<Vec<f64>> {
        if h.len() != self.shape.hidden_len() {
            return Err(Error::Dimension(format!(
                "hidden input has {} entries, expected {}",
                h.len(),
                self.shape.hidden_len()
            )));
        }
        let m = self.shape.m;
        let mut out = self.weights.vbias_block(i).to_vec();
        for j in 0..self.shape.lags() {
            let f = self.forgetting.get(i, j);
            if f == 0.0 {
                continue;
            }
            let hj = &h[j * m..(j + 1) * m];
            let block = self.weights.vh_block(i, j);
            for (a, o) in out.iter_mut().enumerate() {
                let s: f64 = block[a * m..(a + 1) * m]
                    .iter()
                    .zip(hj)
                    .map(|(w, y)| w * y)
                    .sum();
                *o += f * s;
            }
        }
        Ok(out)
    }

    /// Pre-activation of every visible unit, flat lag-major.
    pub fn visible_field(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.shape.visible_len());
        for i in 0..self.shape.lags() {
            out.extend(self.visible_field_lag(h, i)?);
        }
        Ok(out)
    }

    /// `p(h_u = 1 | v~)` for every hidden unit.
    pub fn hidden_activation_probs(&self, v: &BlockVisible) -> Result<BlockProbs> {
        self.check_visible(v)?;
        let field = self.hidden_field(v.as_slice())?;
        Ok(BlockProbs::new(
            self.shape.m,
            self.shape.lags(),
            field.into_iter().map(logistic).collect(),
        ))
    }

    /// `p(v_u = 1 | h~)` for every visible unit.
    pub fn visible_activation_probs(&self, h: &BlockHidden) -> Result<BlockProbs> {
        self.check_hidden(h)?;
        let field = self.visible_field(h.as_slice())?;
        Ok(BlockProbs::new(
            self.shape.n,
            self.shape.lags(),
            field.into_iter().map(logistic).collect(),
        ))
    }

    /// `-ln sum_h exp(-E(v, h))`, with the hidden sum factorized per unit.
    pub fn free_energy(&self, v: &BlockVisible) -> Result<f64> {
        self.check_visible(v)?;
        let field = self.hidden_field(v.as_slice())?;
        let vbias: f64 = self
            .weights
            .vbias
            .iter()
            .zip(v.as_slice())
            .map(|(a, x)| a * x)
            .sum();
        let hidden: f64 = field.into_iter().map(softplus).sum();
        Ok(-vbias - hidden)
    }
}
