//! Bar ingestion, direction extraction, sliding windows and synthetic data.
//!
//! Input files are long-format CSV with header `timestamp,symbol,open,close`,
//! one row per (bar, stock), timestamps in ISO-8601. Rows must be grouped in
//! non-decreasing timestamp order. A bar that lacks a price for any stock is
//! dropped entirely and counted in [`BarTable::dropped`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::model::BlockVisible;
use crate::rng::RngStream;

pub const BAR_HEADER: [&str; 4] = ["timestamp", "symbol", "open", "close"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq)]
pub struct BarTable {
    pub timestamps: Vec<String>,
    pub symbols: Vec<String>,
    /// `open[t][i]` for bar `t`, stock `i`.
    pub open: Vec<Vec<f64>>,
    pub close: Vec<Vec<f64>>,
    /// Bars dropped for missing values.
    pub dropped: usize,
}

impl BarTable {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n(&self) -> usize {
        self.symbols.len()
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_price(field: &str, line: u64, what: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let x: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{what} {field:?} is not a number"),
    })?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Parse {
            line,
            msg: format!("{what} {x} must be a positive price"),
        });
    }
    Ok(Some(x))
}

struct Bar {
    stamp: String,
    at: NaiveDateTime,
    prices: BTreeMap<String, (Option<f64>, Option<f64>)>,
}

pub fn read_bars<R: Read>(reader: R) -> Result<BarTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != BAR_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", BAR_HEADER.join(",")),
        });
    }

    let mut bars: Vec<Bar> = Vec::new();
    let mut symbols = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let stamp = &record[0];
        let at = parse_timestamp(stamp).ok_or_else(|| Error::Parse {
            line,
            msg: format!("invalid timestamp {stamp:?}"),
        })?;
        let symbol = record[1].to_string();
        if symbol.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty symbol".into(),
            });
        }
        let open = parse_price(&record[2], line, "open")?;
        let close = parse_price(&record[3], line, "close")?;

        match bars.last_mut() {
            Some(last) if last.at == at => {
                if last.prices.insert(symbol.clone(), (open, close)).is_some() {
                    return Err(Error::Format(format!(
                        "line {line}: duplicate row for {symbol} at {stamp}"
                    )));
                }
            }
            Some(last) if last.at > at => {
                return Err(Error::Format(format!(
                    "line {line}: timestamp {stamp} precedes {}",
                    last.stamp
                )));
            }
            _ => bars.push(Bar {
                stamp: stamp.to_string(),
                at,
                prices: BTreeMap::from([(symbol.clone(), (open, close))]),
            }),
        }
        symbols.insert(symbol);
    }

    let symbols: Vec<String> = symbols.into_iter().collect();
    let mut table = BarTable {
        timestamps: Vec::new(),
        symbols,
        open: Vec::new(),
        close: Vec::new(),
        dropped: 0,
    };
    for bar in bars {
        let row: Option<Vec<(f64, f64)>> = table
            .symbols
            .iter()
            .map(|s| match bar.prices.get(s) {
                Some((Some(o), Some(c))) => Some((*o, *c)),
                _ => None,
            })
            .collect();
        match row {
            Some(row) => {
                table.timestamps.push(bar.stamp);
                table.open.push(row.iter().map(|r| r.0).collect());
                table.close.push(row.iter().map(|r| r.1).collect());
            }
            None => table.dropped += 1,
        }
    }
    if table.is_empty() {
        return Err(Error::Format("no complete bars in input".into()));
    }
    Ok(table)
}

pub fn load_bars(path: impl AsRef<Path>) -> Result<BarTable> {
    read_bars(File::open(path)?)
}

pub fn write_bars<W: Write>(table: &BarTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(BAR_HEADER).map_err(csv_err)?;
    for t in 0..table.len() {
        for (i, sym) in table.symbols.iter().enumerate() {
            wtr.write_record([
                table.timestamps[t].as_str(),
                sym,
                &table.open[t][i].to_string(),
                &table.close[t][i].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Aligned `{0,1}` direction sequences with their real-valued moves.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDataset {
    pub symbols: Vec<String>,
    pub timestamps: Vec<String>,
    /// `directions[t][i]`: 1 if stock `i` closed above its open in bar `t`.
    pub directions: Vec<Vec<u8>>,
    /// `close - open` per bar and stock.
    pub moves: Vec<Vec<f64>>,
    /// Opening prices, the capital basis of one share per trade.
    pub open: Vec<Vec<f64>>,
}

impl DirectionDataset {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    /// Bars back to long-format prices.
    pub fn to_bars(&self) -> BarTable {
        BarTable {
            timestamps: self.timestamps.clone(),
            symbols: self.symbols.clone(),
            open: self.open.clone(),
            close: self
                .open
                .iter()
                .zip(&self.moves)
                .map(|(o, d)| o.iter().zip(d).map(|(o, d)| o + d).collect())
                .collect(),
            dropped: 0,
        }
    }
}

/// 1 if the bar closed strictly above its open; flat bars count as down.
pub fn direction_of(mv: f64) -> u8 {
    u8::from(mv > 0.0)
}

pub fn directions(bars: &BarTable) -> DirectionDataset {
    let moves: Vec<Vec<f64>> = bars
        .open
        .iter()
        .zip(&bars.close)
        .map(|(o, c)| c.iter().zip(o).map(|(c, o)| c - o).collect())
        .collect();
    DirectionDataset {
        symbols: bars.symbols.clone(),
        timestamps: bars.timestamps.clone(),
        directions: moves
            .iter()
            .map(|row| row.iter().map(|&d| direction_of(d)).collect())
            .collect(),
        moves,
        open: bars.open.clone(),
    }
}

/// `p + 1` consecutive rows; lag 0 is row `end`, lag `i` is row `end - i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub end: usize,
    pub visible: BlockVisible,
}

impl Window {
    /// Lags `1..=p`, most recent first, as prediction input.
    pub fn past(&self) -> Vec<Vec<u8>> {
        (1..self.visible.lags())
            .map(|lag| self.visible.block(lag).iter().map(|&x| x as u8).collect())
            .collect()
    }

    pub fn target(&self) -> Vec<u8> {
        self.visible.block(0).iter().map(|&x| x as u8).collect()
    }
}

/// All `T - p` stride-1 windows in time order.
pub fn windows(dataset: &DirectionDataset, p: usize) -> Result<Vec<Window>> {
    let t = dataset.len();
    if t <= p {
        return Err(Error::Domain(format!(
            "{t} rows cannot hold a window of {} rows",
            p + 1
        )));
    }
    (p..t)
        .map(|end| {
            let blocks: Vec<&[u8]> = (0..=p).map(|lag| dataset.directions[end - lag].as_slice()).collect();
            Ok(Window {
                end,
                visible: BlockVisible::from_blocks(&blocks)?,
            })
        })
        .collect()
}

/// Number of training items for a chronological split: `floor(fraction * len)`.
pub fn train_count(len: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!("train fraction {fraction} outside (0, 1)")));
    }
    // the epsilon keeps products like 0.8 * 10 from flooring to 7
    let count = (fraction * len as f64 + 1e-9).floor() as usize;
    if count == 0 || count >= len {
        return Err(Error::Domain(format!(
            "splitting {len} windows at {fraction} leaves one side empty"
        )));
    }
    Ok(count)
}

/// Chronological split: the first `floor(fraction * len)` items train.
pub fn split<T>(items: &[T], fraction: f64) -> Result<(&[T], &[T])> {
    let count = train_count(items.len(), fraction)?;
    Ok(items.split_at(count))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    /// True Markov order of the generator.
    pub p_true: usize,
    /// Number of bars.
    pub t: usize,
    /// Scale of every logit; 0 gives independent fair coins.
    pub coupling: f64,
    pub seed: u64,
}

/// One term of the generator: unit reads `source` at `lag` steps back.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTerm {
    pub lag: usize,
    pub source: usize,
    pub weight: f64,
}

/// Generator structure: every unit has a lag-1 self term of weight 1 plus,
/// when another (lag, source) pair exists, one seeded cross term of weight
/// +-0.5.
pub fn synth_structure(n: usize, p_true: usize, rng: &mut RngStream) -> Vec<Vec<SynthTerm>> {
    (0..n)
        .map(|u| {
            let mut terms = vec![SynthTerm {
                lag: 1,
                source: u,
                weight: 1.0,
            }];
            let choices = n * p_true - 1;
            if choices > 0 {
                let mut pick = (rng.uniform() * choices as f64) as usize;
                // skip the self term at lag 1 (flat index u)
                if pick >= u {
                    pick += 1;
                }
                let weight = if rng.uniform() < 0.5 { 0.5 } else { -0.5 };
                terms.push(SynthTerm {
                    lag: pick / n + 1,
                    source: pick % n,
                    weight,
                });
            }
            terms
        })
        .collect()
}

/// Synthetic order-`p_true` Markov direction sequences.
///
/// Unit `u` at time `t` is 1 with probability
/// `logistic(coupling * sum_terms weight * (2 x[t - lag][source] - 1))`;
/// the first `p_true` rows are fair coins. Prices follow `close = open * (1 +-
/// r)` with `r` in `[0.0005, 0.0025)` signed by the direction, and the next
/// bar opens at the previous close.
pub fn synth_markov(config: &SynthConfig) -> Result<DirectionDataset> {
    let SynthConfig {
        n,
        p_true,
        t,
        coupling,
        seed,
    } = *config;
    if n == 0 || p_true == 0 || t <= p_true {
        return Err(Error::Domain(format!(
            "synthetic data needs n >= 1, p_true >= 1, T > p_true (n={n}, p_true={p_true}, T={t})"
        )));
    }
    if !coupling.is_finite() {
        return Err(Error::Domain("coupling must be finite".into()));
    }
    let master = RngStream::new(seed);
    let structure = synth_structure(n, p_true, &mut master.split(0));
    let mut rng = master.split(1);
    let mut price_rng = master.split(2);

    let mut directions: Vec<Vec<u8>> = Vec::with_capacity(t);
    for row in 0..t {
        let next: Vec<u8> = (0..n)
            .map(|u| {
                let q = if row < p_true {
                    0.5
                } else {
                    let logit: f64 = structure[u]
                        .iter()
                        .map(|term| {
                            let x = f64::from(directions[row - term.lag][term.source]);
                            term.weight * (2.0 * x - 1.0)
                        })
                        .sum();
                    crate::model::logistic(coupling * logit)
                };
                u8::from(rng.uniform() < q)
            })
            .collect();
        directions.push(next);
    }

    let start = NaiveDate::from_ymd_opt(2017, 6, 5)
        .and_then(|d| d.and_hms_opt(9, 30, 0))
        .expect("valid start date");
    let mut price = vec![100.0; n];
    let mut open = Vec::with_capacity(t);
    let mut moves = Vec::with_capacity(t);
    for row in &directions {
        let mut o = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for (p, &dir) in price.iter_mut().zip(row) {
            let r = 0.0005 + 0.002 * price_rng.uniform();
            let close = if dir == 1 { *p * (1.0 + r) } else { *p * (1.0 - r) };
            o.push(*p);
            d.push(close - *p);
            *p = close;
        }
        open.push(o);
        moves.push(d);
    }
    Ok(DirectionDataset {
        symbols: (0..n).map(|i| format!("S{i:03}")).collect(),
        timestamps: (0..t)
            .map(|k| (start + Duration::minutes(5 * k as i64)).format(TIMESTAMP_FORMAT).to_string())
            .collect(),
        directions,
        moves,
        open,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "timestamp,symbol,open,close
2017-06-05T09:30:00,AAPL,10,11
2017-06-05T09:30:00,MSFT,20,19
2017-06-05T09:35:00,AAPL,11,11
2017-06-05T09:35:00,MSFT,19,19.5
2017-06-05T09:40:00,AAPL,11,10.5
2017-06-05T09:40:00,MSFT,19.5,19.5
";

    #[test]
    fn loads_fixture() {
        let t = read_bars(FIXTURE.as_bytes()).unwrap();
        assert_eq!((t.len(), t.n(), t.dropped), (3, 2, 0));
        assert_eq!(t.symbols, vec!["AAPL", "MSFT"]);
        assert_eq!(t.close[1], vec![11.0, 19.5]);
    }

    #[test]
    fn shuffled_timestamps_rejected() {
        let bad = "timestamp,symbol,open,close
2017-06-05T09:35:00,AAPL,11,11
2017-06-05T09:30:00,AAPL,10,11
";
        assert!(matches!(read_bars(bad.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn missing_close_drops_bar() {
        let input = FIXTURE.replace("2017-06-05T09:35:00,MSFT,19,19.5", "2017-06-05T09:35:00,MSFT,19,");
        let t = read_bars(input.as_bytes()).unwrap();
        assert_eq!((t.len(), t.dropped), (2, 1));
        assert_eq!(t.timestamps, vec!["2017-06-05T09:30:00", "2017-06-05T09:40:00"]);

        let absent = FIXTURE.replace("2017-06-05T09:40:00,MSFT,19.5,19.5\n", "");
        let t = read_bars(absent.as_bytes()).unwrap();
        assert_eq!((t.len(), t.dropped), (2, 1));
    }

    #[test]
    fn malformed_rows_report_line() {
        let bad = FIXTURE.replace("20,19", "20,abc");
        match read_bars(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = FIXTURE.replace("2017-06-05T09:35:00,AAPL", "yesterday,AAPL");
        assert!(matches!(read_bars(bad.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let bad = FIXTURE.replace("10,11", "-10,11");
        assert!(matches!(read_bars(bad.as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_bars("a,b,c,d\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        let dup = format!("{FIXTURE}2017-06-05T09:40:00,AAPL,1,2\n");
        assert!(matches!(read_bars(dup.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn direction_rules() {
        let t = read_bars(FIXTURE.as_bytes()).unwrap();
        let d = directions(&t);
        assert_eq!(d.moves[0], vec![1.0, -1.0]);
        assert_eq!(d.directions, vec![vec![1, 0], vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn window_count_and_lag_order() {
        let ds = synth_markov(&SynthConfig {
            n: 2,
            p_true: 1,
            t: 5,
            coupling: 0.0,
            seed: 1,
        })
        .unwrap();
        let ws = windows(&ds, 2).unwrap();
        assert_eq!(ws.len(), 3);
        for w in &ws {
            assert_eq!(w.target(), ds.directions[w.end]);
            assert_eq!(w.past(), vec![ds.directions[w.end - 1].clone(), ds.directions[w.end - 2].clone()]);
        }
        assert!(matches!(windows(&ds, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn split_rules() {
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split(&items, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert!(a.iter().all(|x| !b.contains(x)));
        let (a, b) = split(&items[..3], 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (1, 2));
        assert!(split(&items[..1], 0.5).is_err());
        assert!(split(&items, 0.0).is_err());
        assert!(split(&items, 1.0).is_err());
    }

    #[test]
    fn synth_is_seeded() {
        let cfg = SynthConfig {
            n: 3,
            p_true: 2,
            t: 200,
            coupling: 2.0,
            seed: 9,
        };
        assert_eq!(synth_markov(&cfg).unwrap(), synth_markov(&cfg).unwrap());
        let other = synth_markov(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(other.directions, synth_markov(&SynthConfig { seed: 9, n: 3, p_true: 2, t: 200, coupling: 2.0 }).unwrap().directions);
    }

    #[test]
    fn synth_moves_match_directions() {
        let ds = synth_markov(&SynthConfig {
            n: 4,
            p_true: 2,
            t: 500,
            coupling: 3.0,
            seed: 2,
        })
        .unwrap();
        for (d, m) in ds.directions.iter().flatten().zip(ds.moves.iter().flatten()) {
            assert_eq!(*d, direction_of(*m));
            assert!(m.abs() > 0.0);
        }
        assert!(ds.open.iter().flatten().all(|&p| p > 0.0));
    }

    #[test]
    fn synth_structure_avoids_duplicate_self_term() {
        let mut rng = RngStream::new(3);
        for _ in 0..50 {
            let s = synth_structure(3, 2, &mut rng);
            for (u, terms) in s.iter().enumerate() {
                assert_eq!(terms.len(), 2);
                assert!(!(terms[1].lag == 1 && terms[1].source == u));
                assert!(terms[1].lag <= 2 && terms[1].source < 3);
            }
        }
        assert_eq!(synth_structure(1, 1, &mut rng)[0].len(), 1);
    }

    #[test]
    fn bar_csv_round_trip() {
        let ds = synth_markov(&SynthConfig {
            n: 3,
            p_true: 1,
            t: 40,
            coupling: 1.0,
            seed: 4,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_bars(&ds.to_bars(), &mut buf).unwrap();
        let back = directions(&read_bars(buf.as_slice()).unwrap());
        assert_eq!(back.directions, ds.directions);
        assert_eq!(back.timestamps, ds.timestamps);
        assert_eq!(back.symbols, vec!["S000", "S001", "S002"]);
    }

    #[test]
    fn timestamp_formats() {
        assert!(parse_timestamp("2017-06-05T09:30:00Z").is_some());
        assert!(parse_timestamp("2017-06-05T09:30:00-04:00").is_some());
        assert!(parse_timestamp("2017-06-05 09:30:00").is_some());
        assert!(parse_timestamp("2017-06-05").is_some());
        assert!(parse_timestamp("June 5").is_none());
    }
}
