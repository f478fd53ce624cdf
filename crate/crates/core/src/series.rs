//! Estimates indexed by copy budget, and their mean squared error across
//! repetitions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One estimator's values on an increasing grid of copy budgets N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub estimator: String,
    pub protocol: String,
    pub seed: u64,
    pub repetition: usize,
    points: Vec<(usize, f64)>,
}

impl MomentSeries {
    pub fn new(estimator: impl Into<String>, protocol: impl Into<String>, seed: u64, repetition: usize) -> Self {
        MomentSeries { estimator: estimator.into(), protocol: protocol.into(), seed, repetition, points: Vec::new() }
    }

    /// Appends a point; N must exceed every N already present.
    pub fn push(&mut self, n: usize, value: f64) -> Result<()> {
        if n == 0 {
            return Err(Error::Config("copy budget must be positive".into()));
        }
        if let Some(&(last, _)) = self.points.last() {
            if n <= last {
                return Err(Error::Misaligned(format!("N = {n} after N = {last}")));
            }
        }
        self.points.push((n, value));
        Ok(())
    }

    pub fn from_points(
        estimator: impl Into<String>,
        protocol: impl Into<String>,
        seed: u64,
        repetition: usize,
        points: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self> {
        let mut s = Self::new(estimator, protocol, seed, repetition);
        for (n, v) in points {
            s.push(n, v)?;
        }
        Ok(s)
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn grid(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Mean over repetitions of (estimate − truth)² at every N.
pub fn empirical_mse(repetitions: &[MomentSeries], truth: f64) -> Result<MomentSeries> {
    if repetitions.len() < 2 {
        return Err(Error::InsufficientData(format!("{} repetitions; need at least 2", repetitions.len())));
    }
    let grid = repetitions[0].grid();
    if let Some(bad) = repetitions.iter().find(|r| r.grid() != grid) {
        return Err(Error::Misaligned(format!("repetition {} has a different N grid", bad.repetition)));
    }
    let first = &repetitions[0];
    let mut out = MomentSeries::new(format!("{}_mse", first.estimator), first.protocol.clone(), first.seed, 0);
    for (i, &n) in grid.iter().enumerate() {
        let mse = repetitions.iter().map(|r| (r.points[i].1 - truth).powi(2)).sum::<f64>() / repetitions.len() as f64;
        out.push(n, mse)?;
    }
    Ok(out)
}

/// Header of the per-estimator CSV files.
pub const SERIES_HEADER: [&str; 6] = ["N", "value", "repetition", "estimator", "protocol", "seed"];

/// Writes series rows (header first) in the order given.
pub fn write_series_csv<W: Write>(out: W, series: &[MomentSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    for s in series {
        for &(n, v) in &s.points {
            w.write_record([
                n.to_string(),
                format_value(v),
                s.repetition.to_string(),
                s.estimator.clone(),
                s.protocol.clone(),
                s.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rep: usize, values: &[f64]) -> MomentSeries {
        MomentSeries::from_points("P2", "hs", 7, rep, [64, 128, 256].into_iter().zip(values.iter().copied())).unwrap()
    }

    #[test]
    fn exact_repetitions_have_zero_error() {
        let reps = vec![series(0, &[0.82; 3]), series(1, &[0.82; 3])];
        let mse = empirical_mse(&reps, 0.82).unwrap();
        assert!(mse.points().iter().all(|p| p.1 == 0.0));
        assert_eq!(mse.grid(), vec![64, 128, 256]);
    }

    #[test]
    fn mse_values() {
        let reps = vec![series(0, &[1.0, 0.0, 0.5]), series(1, &[0.0, 0.0, 0.5])];
        let mse = empirical_mse(&reps, 0.5).unwrap();
        assert_eq!(mse.points(), &[(64, 0.25), (128, 0.25), (256, 0.0)]);
    }

    #[test]
    fn misaligned_grids_rejected() {
        let other = MomentSeries::from_points("P2", "hs", 7, 1, [(64, 0.8), (100, 0.8), (256, 0.8)]).unwrap();
        assert!(matches!(empirical_mse(&[series(0, &[0.8; 3]), other], 0.82), Err(Error::Misaligned(_))));
        assert!(empirical_mse(&[series(0, &[0.8; 3])], 0.82).is_err());
    }

    #[test]
    fn grid_must_increase() {
        let mut s = MomentSeries::new("P2", "os", 1, 0);
        s.push(10, 0.1).unwrap();
        assert!(s.push(10, 0.2).is_err());
        assert!(s.push(5, 0.2).is_err());
        assert!(s.push(0, 0.2).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &[series(3, &[0.5, 0.25, 0.125])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("N,value,repetition,estimator,protocol,seed"));
        assert_eq!(lines.next(), Some("64,0.5,3,P2,hs,7"));
        assert_eq!(text.lines().count(), 4);
    }
}
