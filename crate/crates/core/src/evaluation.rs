//! Scoring and reporting: misclassification loss, confusion matrices, the
//! buy/sell backtest and the multi-run model comparison.
//!
//! Model-side directions are `{0, 1}`; the loss is defined on `{-1, +1}`
//! with `0 -> -1`.

use std::fmt::Write as _;

use crate::baselines::{fit_rw, fit_var1, predict_rw, predict_var1};
use crate::data::{split, windows, DirectionDataset, Window};
use crate::error::{Error, Result};
use crate::gibbs::{predict_direction, PredictMode};
use crate::model::{BlockVisible, Model, ModelShape};
use crate::rng::RngStream;
use crate::trainer::{train, TrainConfig};

pub fn to_pm1(directions: &[Vec<u8>]) -> Result<Vec<Vec<i8>>> {
    directions
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| match d {
                    0 => Ok(-1),
                    1 => Ok(1),
                    other => Err(Error::Domain(format!("direction {other} is not 0 or 1"))),
                })
                .collect()
        })
        .collect()
}

fn check_shapes<A, B>(actual: &[Vec<A>], predicted: &[Vec<B>]) -> Result<usize> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} actual rows vs {} predicted rows",
            actual.len(),
            predicted.len()
        )));
    }
    let mut total = 0;
    for (t, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if a.len() != p.len() {
            return Err(Error::Dimension(format!(
                "row {t}: {} actual vs {} predicted entries",
                a.len(),
                p.len()
            )));
        }
        total += a.len();
    }
    if total == 0 {
        return Err(Error::Domain("nothing to score".into()));
    }
    Ok(total)
}

fn check_pm1(rows: &[Vec<i8>]) -> Result<()> {
    match rows.iter().flatten().find(|&&x| x != 1 && x != -1) {
        Some(x) => Err(Error::Domain(format!("entry {x} is not +-1"))),
        None => Ok(()),
    }
}

/// `(1/2N) sum |1 - a f|` over all `N` entries: the fraction of wrong signs.
pub fn misclassification_loss(actual: &[Vec<i8>], predicted: &[Vec<i8>]) -> Result<f64> {
    let total = check_shapes(actual, predicted)?;
    check_pm1(actual)?;
    check_pm1(predicted)?;
    let sum: i64 = actual
        .iter()
        .flatten()
        .zip(predicted.iter().flatten())
        .map(|(&a, &f)| (1 - i64::from(a) * i64::from(f)).abs())
        .sum();
    Ok(sum as f64 / (2.0 * total as f64))
}

/// Rows of 0/1 labels.
pub type Labels = Vec<Vec<u8>>;

/// Counts by (real, predicted) direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub up_up: u64,
    pub up_down: u64,
    pub down_up: u64,
    pub down_down: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.up_up + self.up_down + self.down_up + self.down_down
    }

    pub fn correct(&self) -> u64 {
        self.up_up + self.down_down
    }

    pub fn wrong(&self) -> u64 {
        self.up_down + self.down_up
    }

    pub fn loss(&self) -> f64 {
        self.wrong() as f64 / self.total() as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Label sequences realizing these counts, `width` entries per row (the
    /// total must be a multiple of `width`). Cells are laid out in the order
    /// up/up, up/down, down/up, down/down.
    pub fn realize(&self, width: usize) -> Result<(Labels, Labels)> {
        let total = self.total() as usize;
        if width == 0 || !total.is_multiple_of(width) {
            return Err(Error::Dimension(format!(
                "{total} decisions do not fill rows of {width}"
            )));
        }
        let cells = [
            (self.up_up, 1, 1),
            (self.up_down, 1, 0),
            (self.down_up, 0, 1),
            (self.down_down, 0, 0),
        ];
        let (mut actual, mut predicted) = (Vec::with_capacity(total), Vec::with_capacity(total));
        for (count, a, p) in cells {
            actual.extend(std::iter::repeat_n(a, count as usize));
            predicted.extend(std::iter::repeat_n(p, count as usize));
        }
        let rows = |flat: Vec<u8>| flat.chunks(width).map(<[u8]>::to_vec).collect();
        Ok((rows(actual), rows(predicted)))
    }
}

pub fn confusion(actual: &[Vec<i8>], predicted: &[Vec<i8>]) -> Result<ConfusionMatrix> {
    check_shapes(actual, predicted)?;
    check_pm1(actual)?;
    check_pm1(predicted)?;
    let mut c = ConfusionMatrix::default();
    for (&a, &f) in actual.iter().flatten().zip(predicted.iter().flatten()) {
        match (a > 0, f > 0) {
            (true, true) => c.up_up += 1,
            (true, false) => c.up_down += 1,
            (false, true) => c.down_up += 1,
            (false, false) => c.down_down += 1,
        }
    }
    Ok(c)
}

/// Winning and losing trades; one trade per stock per bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinLoss {
    pub wins: u64,
    pub losses: u64,
    /// `wins / losses`, `f64::INFINITY` when there were no losses.
    pub ratio: f64,
    pub ratio_infinite: bool,
}

impl WinLoss {
    pub fn new(wins: u64, losses: u64) -> Self {
        let ratio_infinite = losses == 0;
        Self {
            wins,
            losses,
            ratio: if ratio_infinite {
                f64::INFINITY
            } else {
                wins as f64 / losses as f64
            },
            ratio_infinite,
        }
    }
}

impl From<&ConfusionMatrix> for WinLoss {
    fn from(c: &ConfusionMatrix) -> Self {
        Self::new(c.correct(), c.wrong())
    }
}

/// Capital committed per share in the return denominator.
#[derive(Debug, Clone, Copy)]
pub enum Basis<'a> {
    /// One unit per trade.
    Unit,
    /// The bar's opening price per stock.
    Prices(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtest {
    pub win_loss: WinLoss,
    /// `sum(sign * move) / sum(|basis|)`, both scaled by the notional.
    pub strategy_return: f64,
}

/// Goes long on predicted up and short on predicted down for every stock and
/// bar, `notional` shares each. A trade wins iff the predicted direction
/// equals the actual one.
pub fn backtest(
    actual: &[Vec<u8>],
    predicted: &[Vec<u8>],
    moves: &[Vec<f64>],
    notional: f64,
    basis: Basis<'_>,
) -> Result<Backtest> {
    check_shapes(actual, predicted)?;
    check_shapes(actual, moves)?;
    if let Basis::Prices(prices) = basis {
        check_shapes(actual, prices)?;
    }
    if !(notional.is_finite() && notional > 0.0) {
        return Err(Error::Domain(format!("notional {notional} must be positive")));
    }
    let (mut wins, mut losses) = (0u64, 0u64);
    let (mut gained, mut deployed) = (0.0, 0.0);
    for (t, ((a, f), d)) in actual.iter().zip(predicted).zip(moves).enumerate() {
        for i in 0..a.len() {
            if a[i] > 1 || f[i] > 1 {
                return Err(Error::Domain("directions must be 0 or 1".into()));
            }
            if a[i] == f[i] {
                wins += 1;
            } else {
                losses += 1;
            }
            let sign = if f[i] == 1 { 1.0 } else { -1.0 };
            gained += sign * d[i] * notional;
            deployed += notional
                * match basis {
                    Basis::Unit => 1.0,
                    Basis::Prices(prices) => prices[t][i].abs(),
                };
        }
    }
    Ok(Backtest {
        win_loss: WinLoss::new(wins, losses),
        strategy_return: gained / deployed,
    })
}

/// Sample mean and standard deviation (divisor `N - 1`; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.windows(2).all(|w| w[0] == w[1]) {
        // avoids rounding noise in the mean for repeated values
        return (xs.first().copied().unwrap_or(f64::NAN), 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    pub win_loss: WinLoss,
    /// Absent when only counts are known.
    pub strategy_return: Option<f64>,
    /// Losses of repeated runs; a single run holds one entry.
    pub iteration_losses: Vec<f64>,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let loss = confusion.loss();
        Self {
            loss,
            confusion,
            win_loss: WinLoss::from(&confusion),
            strategy_return: None,
            iteration_losses: vec![loss],
        }
    }

    /// Scores `{0,1}` predictions against labels and runs the backtest.
    pub fn evaluate(
        actual: &[Vec<u8>],
        predicted: &[Vec<u8>],
        moves: &[Vec<f64>],
        basis: Basis<'_>,
    ) -> Result<Self> {
        let (a, f) = (to_pm1(actual)?, to_pm1(predicted)?);
        let confusion = confusion(&a, &f)?;
        let loss = misclassification_loss(&a, &f)?;
        let bt = backtest(actual, predicted, moves, 1.0, basis)?;
        Ok(Self {
            loss,
            confusion,
            win_loss: bt.win_loss,
            strategy_return: Some(bt.strategy_return),
            iteration_losses: vec![loss],
        })
    }

    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.iteration_losses)
    }

    fn ratio_text(&self) -> String {
        if self.win_loss.ratio_infinite {
            "inf".into()
        } else {
            format!("{:.4}", self.win_loss.ratio)
        }
    }

    pub fn to_csv(&self) -> String {
        let c = &self.confusion;
        let (mean, std) = self.mean_std();
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        row("loss", format!("{:.10}", self.loss));
        row("up_up", c.up_up.to_string());
        row("up_down", c.up_down.to_string());
        row("down_up", c.down_up.to_string());
        row("down_down", c.down_down.to_string());
        row("total", c.total().to_string());
        row("wins", self.win_loss.wins.to_string());
        row("losses", self.win_loss.losses.to_string());
        row("win_loss_ratio", self.ratio_text());
        row("ratio_infinite", self.win_loss.ratio_infinite.to_string());
        row(
            "strategy_return",
            self.strategy_return.map_or(String::new(), |r| format!("{r:.10}")),
        );
        row("iterations", self.iteration_losses.len().to_string());
        row("loss_mean", format!("{mean:.10}"));
        row("loss_std", format!("{std:.10}"));
        out
    }

    /// Confusion matrix (rows real, columns predicted) followed by the
    /// summary figures.
    pub fn to_text(&self) -> String {
        let c = &self.confusion;
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>12}{:>12}", "", "Pred. up", "Pred. down");
        let _ = writeln!(out, "{:<8}{:>12}{:>12}", "Up", c.up_up, c.up_down);
        let _ = writeln!(out, "{:<8}{:>12}{:>12}", "Down", c.down_up, c.down_down);
        out.push('\n');
        let _ = writeln!(out, "{:<18}{:.5}", "Loss", self.loss);
        let _ = writeln!(out, "{:<18}{}", "Decisions", c.total());
        let _ = writeln!(out, "{:<18}{}", "Winning trades", self.win_loss.wins);
        let _ = writeln!(out, "{:<18}{}", "Losing trades", self.win_loss.losses);
        let _ = writeln!(out, "{:<18}{}", "Win/loss ratio", self.ratio_text());
        if let Some(r) = self.strategy_return {
            let _ = writeln!(out, "{:<18}{:.6}", "Strategy return", r);
        }
        out
    }
}

/// Chronologically split windows over one dataset, shared by every predictor
/// in a comparison.
#[derive(Debug, Clone)]
pub struct Task<'a> {
    pub dataset: &'a DirectionDataset,
    pub p: usize,
    pub windows: Vec<Window>,
    pub train_len: usize,
}

impl<'a> Task<'a> {
    pub fn new(dataset: &'a DirectionDataset, p: usize, train_fraction: f64) -> Result<Self> {
        let windows = windows(dataset, p)?;
        let train_len = split(&windows, train_fraction)?.0.len();
        Ok(Self {
            dataset,
            p,
            windows,
            train_len,
        })
    }

    pub fn train_windows(&self) -> &[Window] {
        &self.windows[..self.train_len]
    }

    pub fn val_windows(&self) -> &[Window] {
        &self.windows[self.train_len..]
    }

    /// Rows available for fitting: everything up to the last training target.
    pub fn train_rows(&self) -> usize {
        self.windows[self.train_len - 1].end + 1
    }

    pub fn actual(&self) -> Vec<Vec<u8>> {
        self.val_windows().iter().map(Window::target).collect()
    }

    pub fn val_moves(&self) -> Vec<Vec<f64>> {
        self.val_windows()
            .iter()
            .map(|w| self.dataset.moves[w.end].clone())
            .collect()
    }

    pub fn val_open(&self) -> Vec<Vec<f64>> {
        self.val_windows()
            .iter()
            .map(|w| self.dataset.open[w.end].clone())
            .collect()
    }
}

/// Something that fits on a task's training part and predicts the direction
/// of every validation target.
pub trait DirectionPredictor: Sync {
    fn name(&self) -> String;
    fn predict(&self, task: &Task<'_>, seed: u64) -> Result<Vec<Vec<u8>>>;
}

/// Trains a fresh p-RBM (lags taken from the task) and predicts with lag 0
/// free.
#[derive(Debug, Clone)]
pub struct PrbmPredictor {
    pub m: usize,
    pub alpha: f64,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    pub k_pred: usize,
    pub mode: PredictMode,
}

impl PrbmPredictor {
    /// Initializes from `seed` and trains on the task's training windows.
    pub fn fit(&self, task: &Task<'_>, seed: u64) -> Result<Model> {
        let shape = ModelShape::new(task.dataset.n(), self.m, task.p, self.alpha)?;
        let stream = RngStream::new(seed);
        let model = Model::init(shape, stream.child_seed(0));
        let config = TrainConfig {
            seed: stream.child_seed(1),
            ..self.train.clone()
        };
        let data: Vec<BlockVisible> = task.train_windows().iter().map(|w| w.visible.clone()).collect();
        Ok(train(model, &data, &[], &config)?.0)
    }

    pub fn predict_with(&self, model: &Model, task: &Task<'_>, seed: u64) -> Result<Vec<Vec<u8>>> {
        let stream = RngStream::new(seed).split(2);
        task.val_windows()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut rng = stream.split(i as u64);
                Ok(predict_direction(model, &w.past(), self.k_pred, self.mode, &mut rng)?.directions)
            })
            .collect()
    }
}

impl DirectionPredictor for PrbmPredictor {
    fn name(&self) -> String {
        "p-RBM".into()
    }

    fn predict(&self, task: &Task<'_>, seed: u64) -> Result<Vec<Vec<u8>>> {
        let model = self.fit(task, seed)?;
        self.predict_with(&model, task, seed)
    }
}

/// Random walk with drift fit on the training moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct RwPredictor;

impl DirectionPredictor for RwPredictor {
    fn name(&self) -> String {
        "RW".into()
    }

    fn predict(&self, task: &Task<'_>, _seed: u64) -> Result<Vec<Vec<u8>>> {
        let model = fit_rw(&task.dataset.moves[..task.train_rows()])?;
        task.val_windows()
            .iter()
            .map(|w| Ok(predict_rw(&model, &task.dataset.moves[w.end - 1])?.directions))
            .collect()
    }
}

/// VAR(1) fit on the training moves, forecasting each target from the
/// previous bar's moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct VarPredictor;

impl DirectionPredictor for VarPredictor {
    fn name(&self) -> String {
        "VAR(1)".into()
    }

    fn predict(&self, task: &Task<'_>, _seed: u64) -> Result<Vec<Vec<u8>>> {
        let model = fit_var1(&task.dataset.moves[..task.train_rows()])?;
        task.val_windows()
            .iter()
            .map(|w| Ok(predict_var1(&model, &task.dataset.moves[w.end - 1])?.directions))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub losses: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn from_losses(rows: Vec<(String, Vec<f64>)>) -> Self {
        Self {
            rows: rows
                .into_iter()
                .map(|(model, losses)| {
                    let (mean, std) = mean_std(&losses);
                    ComparisonRow {
                        model,
                        losses,
                        mean,
                        std,
                    }
                })
                .collect(),
        }
    }

    fn iterations(&self) -> usize {
        self.rows.first().map_or(0, |r| r.losses.len())
    }

    /// Columns `Model, 1..N, Mean, Std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Model");
        for i in 1..=self.iterations() {
            let _ = write!(out, ",{i}");
        }
        out.push_str(",Mean,Std\n");
        for r in &self.rows {
            out.push_str(&r.model);
            for l in &r.losses {
                let _ = write!(out, ",{l:.6}");
            }
            let _ = writeln!(out, ",{:.6},{:.6}", r.mean, r.std);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}", "Model");
        for i in 1..=self.iterations() {
            let _ = write!(out, "{i:>9}");
        }
        let _ = writeln!(out, "{:>9}{:>9}", "Mean", "Std");
        for r in &self.rows {
            let _ = write!(out, "{:<10}", r.model);
            for l in &r.losses {
                let _ = write!(out, "{l:>9.4}");
            }
            let _ = writeln!(out, "{:>9.4}{:>9.4}", r.mean, r.std);
        }
        out
    }
}

/// Runs every predictor `iterations` times; run `i` of model `j` gets seed
/// `split(i).child_seed(j)` of the master stream.
pub fn compare_models(
    models: &[&dyn DirectionPredictor],
    task: &Task<'_>,
    iterations: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    if iterations == 0 {
        return Err(Error::Domain("comparison needs at least one iteration".into()));
    }
    let master = RngStream::new(seed);
    let actual = to_pm1(&task.actual())?;
    let mut rows = Vec::with_capacity(models.len());
    for (j, model) in models.iter().enumerate() {
        let losses = (0..iterations)
            .map(|i| {
                let predicted = model.predict(task, master.split(i as u64).child_seed(j as u64))?;
                misclassification_loss(&actual, &to_pm1(&predicted)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((model.name(), losses));
    }
    Ok(ComparisonTable::from_losses(rows))
}
