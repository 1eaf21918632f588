//! Metric records and their CSV / line-delimited JSON persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training episode of one method and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub method: String,
    pub seed: u64,
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub moving_avg: f64,
}

/// One evaluation cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub seed: u64,
    pub axis_name: String,
    pub axis_value: f64,
    pub delivery_prob: f64,
    pub ci_half_width: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub window: usize,
    pub training: Vec<TrainingRow>,
    pub evaluations: Vec<SweepRow>,
}

impl RunMetrics {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn push_training(&mut self, method: &str, seed: u64, returns: &[f64]) {
        let ma = moving_average(returns, self.window);
        self.training.extend(returns.iter().zip(ma).enumerate().map(|(j, (&r, m))| TrainingRow {
            method: method.to_string(),
            seed,
            episode: j,
            episode_return: r,
            moving_avg: m,
        }));
    }

    /// Moving-average curve of one (method, seed) pair in episode order.
    pub fn curve(&self, method: &str, seed: u64) -> Vec<f64> {
        self.training
            .iter()
            .filter(|r| r.method == method && r.seed == seed)
            .map(|r| r.moving_avg)
            .collect()
    }
}

/// Trailing mean over the last `window` values; the first `window - 1`
/// entries average over what is available so far.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Mean of the last `fraction` of a curve (at least one point).
pub fn tail_mean(curve: &[f64], fraction: f64) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    let n = ((curve.len() as f64 * fraction).ceil() as usize).clamp(1, curve.len());
    curve[curve.len() - n..].iter().sum::<f64>() / n as f64
}

/// Divides every curve by the largest moving-average value across all of
/// them; returns the constant used.
pub fn normalize_curves(curves: &mut [Vec<f64>]) -> f64 {
    let max = curves
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v.abs()));
    if max.is_finite() && max > 0.0 {
        for v in curves.iter_mut().flatten() {
            *v /= max;
        }
    }
    max
}

/// 95% normal-approximation half-width of a binomial proportion.
pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_of_constant() {
        let v = vec![3.25; 357];
        for w in [1, 7, 100, 500] {
            assert!(moving_average(&v, w).iter().all(|&m| m == 3.25));
        }
    }

    #[test]
    fn moving_average_matches_direct_mean() {
        let v: Vec<f64> = (0..250).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let w = 20;
        let ma = moving_average(&v, w);
        for i in 0..v.len() {
            let lo = (i + 1).saturating_sub(w);
            let direct = v[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            assert!((ma[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_and_normalisation() {
        let c = (1..=10).map(f64::from).collect::<Vec<_>>();
        assert_eq!(tail_mean(&c, 0.1), 10.0);
        assert_eq!(tail_mean(&c, 0.2), 9.5);
        let mut curves = vec![vec![1.0, 2.0], vec![4.0, 3.0]];
        assert_eq!(normalize_curves(&mut curves), 4.0);
        assert_eq!(curves, vec![vec![0.25, 0.5], vec![1.0, 0.75]]);
    }

    #[test]
    fn half_width_edges() {
        assert_eq!(binomial_half_width(0.0, 10), 0.0);
        assert_eq!(binomial_half_width(1.0, 10), 0.0);
        assert!((binomial_half_width(0.5, 100) - 0.098).abs() < 1e-12);
    }

    #[test]
    fn csv_and_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunMetrics::new(3);
        let returns = [0.1, 1.0 / 3.0, 2.0f64.sqrt(), -7.5e-300, 123456.789];
        m.push_training("rifrl", 9, &returns);
        let p = dir.path().join("t.csv");
        write_csv(&p, &m.training).unwrap();
        let back: Vec<TrainingRow> = read_csv(&p).unwrap();
        assert_eq!(back, m.training);
        let j = dir.path().join("t.jsonl");
        write_jsonl(&j, &m.training).unwrap();
        let back: Vec<TrainingRow> = read_jsonl(&j).unwrap();
        assert_eq!(back, m.training);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("method,seed,episode,return,moving_avg\n"));
    }
}
