//! Statistical properties of the synthetic Markov generator.

use prbm::data::{synth_markov, SynthConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn generate(n: usize, t: usize, coupling: f64, seed: u64) -> Vec<Vec<u8>> {
    synth_markov(&SynthConfig {
        n,
        p_true: 2,
        t,
        coupling,
        seed,
    })
    .unwrap()
    .directions
}

#[test]
fn zero_coupling_is_fair_and_uniform() {
    let rows = generate(3, 10_000, 0.0, 1);
    for u in 0..3 {
        let mean = rows.iter().map(|r| f64::from(r[u])).sum::<f64>() / rows.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "unit {u}: {mean}");
    }
    // joint states of each row are uniform over 2^3 cells
    let mut counts = [0.0; 8];
    for r in &rows {
        counts[(r[0] | r[1] << 1 | r[2] << 2) as usize] += 1.0;
    }
    let expected = rows.len() as f64 / 8.0;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(7.0).unwrap().cdf(stat);
    assert!(p > 0.001, "chi-square p = {p}");
}

#[test]
fn strong_self_coupling_gives_lag_one_autocorrelation() {
    let rows = generate(4, 10_000, 3.0, 2);
    for u in 0..4 {
        let x: Vec<f64> = rows.iter().map(|r| f64::from(r[u])).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|a| (a - mean).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let rho = cov / var;
        assert!(rho > 0.5, "unit {u}: {rho}");
    }
}
