//! Phase estimation with a noisy probe, with and without virtual
//! distillation through the controlled-SHIFT circuit.
//!
//! The probe passes V_θ = e^{−iθZ/2} and is read out in the Y basis. With
//! the linear calibration ⟨y⟩ ≈ a + bθ the estimate is θ̂ = (ȳ − a)/b; by
//! default the experimenter assumes a pure |+⟩ probe (a = 0, b = 1).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::hybrid_circuit;
use crate::error::{Error, Result};
use crate::qcore::{gates, DensityMatrix, Mat2, NoiseChannel};
use crate::rng::SeedStream;
use crate::series::format_value;

/// The phase gate V_θ = diag(e^{−iθ/2}, e^{iθ/2}).
pub fn phase_gate(theta: f64) -> Mat2 {
    gates::phase(theta)
}

/// V_θ ρ V_θ† on a single qubit.
pub fn evolve_phase(state: &DensityMatrix, theta: f64) -> Result<DensityMatrix> {
    if state.n_qubits() != 1 {
        return Err(Error::Dimension(format!("phase evolution acts on one qubit, got {}", state.n_qubits())));
    }
    Ok(state.rotate_local(&[phase_gate(theta)]))
}

/// Linear response ⟨y⟩ = a + bθ assumed by the experimenter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub a: f64,
    pub b: f64,
}

impl CalibrationPair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if b == 0.0 || !b.is_finite() || !a.is_finite() {
            return Err(Error::Config(format!("calibration slope b = {b} must be finite and nonzero")));
        }
        Ok(CalibrationPair { a, b })
    }

    /// a = b − 1 = 0: the pure |+⟩ probe.
    pub fn ideal() -> Self {
        CalibrationPair { a: 0.0, b: 1.0 }
    }

    /// a = Tr(Yρ), b = Tr(Xρ).
    pub fn from_probe(probe: &DensityMatrix) -> Result<Self> {
        Self::new(
            probe.expectation(&gates::pauli_y().to_matrix()),
            probe.expectation(&gates::pauli_x().to_matrix()),
        )
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.a) / self.b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetrologyConfig {
    pub theta_true: f64,
    pub probe: DensityMatrix,
    pub k: usize,
    /// Runs feeding the numerator.
    pub shots_num: usize,
    /// Runs feeding the denominator.
    pub shots_den: usize,
    pub gate_noise: NoiseChannel,
    pub calibration: CalibrationPair,
}

impl MetrologyConfig {
    /// Splits a budget of `copies` evenly between numerator and
    /// denominator blocks of k-copy runs.
    pub fn with_copies(theta: f64, probe: DensityMatrix, k: usize, copies: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config("distillation needs k ≥ 2".into()));
        }
        let runs = copies / k;
        let config = MetrologyConfig {
            theta_true: theta,
            probe,
            k,
            shots_num: runs / 2,
            shots_den: runs - runs / 2,
            gate_noise: NoiseChannel::None,
            calibration: CalibrationPair::ideal(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_true.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("|θ| = {} must be below π/2", self.theta_true.abs())));
        }
        if self.shots_num == 0 || self.shots_den == 0 {
            return Err(Error::Config("numerator and denominator need at least one run each".into()));
        }
        if self.probe.n_qubits() != 1 {
            return Err(Error::Dimension("the probe is a single qubit".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("distillation needs k ≥ 2".into()));
        }
        Ok(())
    }

    pub fn copies(&self) -> usize {
        self.k * (self.shots_num + self.shots_den)
    }
}

/// One run of the distillation circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MetrologyRecord {
    pub run: u64,
    /// True for the numerator block.
    pub numerator: bool,
    pub control_bit: u8,
    /// Y-basis outcome of the evolved copy, ±1.
    pub outcome: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetrologyOutcome {
    pub theta_hat: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub copies: usize,
    pub records: Vec<MetrologyRecord>,
}

/// Joint distribution of (b_c, o) for the distillation circuit, indexed
/// 2·b_c + (o == −1).
pub fn vd_distribution(probe: &DensityMatrix, theta: f64, k: usize, noise: NoiseChannel) -> Result<[f64; 4]> {
    let joint = probe.tensor_power(k)?;
    let state = hybrid_circuit(&joint, k, 1, noise)?;
    let mut locals = vec![Mat2::IDENTITY; state.n_qubits()];
    locals[1] = phase_gate(theta);
    let evolved = state.rotate_local(&locals);
    let reduced = evolved.marginal(&[0, 1])?;
    let y_basis = gates::hadamard() * gates::s_dagger();
    let p = reduced.rotate_local(&[gates::hadamard(), y_basis]).diagonal_probabilities()?;
    Ok([p[0], p[1], p[2], p[3]])
}

/// Exact E[(−1)^{b_c} o] and E[(−1)^{b_c}] for the distillation circuit.
pub fn vd_exact_moments(probe: &DensityMatrix, theta: f64, k: usize, noise: NoiseChannel) -> Result<(f64, f64)> {
    let p = vd_distribution(probe, theta, k, noise)?;
    Ok((p[0] - p[1] - p[2] + p[3], p[0] + p[1] - p[2] - p[3]))
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    crate::qcore::sample_index(probs, rng)
}

/// Simulates the distillation estimator: numerator runs 0..M, denominator
/// runs M..M+M′, each on its own sub-stream.
pub fn run_vd_metrology(config: &MetrologyConfig, stream: SeedStream) -> Result<MetrologyOutcome> {
    config.validate()?;
    let probs = vd_distribution(&config.probe, config.theta_true, config.k, config.gate_noise)?;
    let total = (config.shots_num + config.shots_den) as u64;
    let records: Vec<MetrologyRecord> = (0..total)
        .into_par_iter()
        .map(|run| {
            let o = draw(&probs, &mut stream.rng(run));
            MetrologyRecord {
                run,
                numerator: run < config.shots_num as u64,
                control_bit: (o >> 1) as u8,
                outcome: if o & 1 == 0 { 1 } else { -1 },
            }
        })
        .collect();
    let mut num = 0i64;
    let mut den = 0i64;
    for r in &records {
        let sign = if r.control_bit == 0 { 1 } else { -1 };
        if r.numerator {
            num += sign * r.outcome as i64;
        } else {
            den += sign;
        }
    }
    let numerator = num as f64 / config.shots_num as f64;
    let denominator = den as f64 / config.shots_den as f64;
    if denominator.abs() < crate::estimators::MIN_DENOMINATOR {
        return Err(Error::UnresolvedDenominator(denominator));
    }
    Ok(MetrologyOutcome {
        theta_hat: config.calibration.invert(numerator / denominator),
        numerator,
        denominator,
        copies: config.copies(),
        records,
    })
}

/// Single-copy baseline: Y measurement of V_θρV_θ†, averaged over `shots`.
pub fn run_raw_metrology(
    probe: &DensityMatrix,
    theta: f64,
    shots: usize,
    calibration: CalibrationPair,
    stream: SeedStream,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::Config("need at least one shot".into()));
    }
    let mu = evolve_phase(probe, theta)?.expectation(&gates::pauli_y().to_matrix());
    let probs = [(1.0 + mu) / 2.0, (1.0 - mu) / 2.0];
    let sum: i64 = (0..shots as u64)
        .into_par_iter()
        .map(|i| if draw(&probs, &mut stream.rng(i)) == 0 { 1 } else { -1 })
        .sum();
    Ok(calibration.invert(sum as f64 / shots as f64))
}

/// Bias and variance of θ̂ = (ȳ − a)/b over M single-copy shots of the
/// actual probe, with a, b taken from the assumed probe.
pub fn predict_estimator_stats(actual: &DensityMatrix, assumed: &DensityMatrix, theta: f64, shots: usize) -> Result<(f64, f64)> {
    let cal = CalibrationPair::from_probe(assumed)?;
    let mu = evolve_phase(actual, theta)?.expectation(&gates::pauli_y().to_matrix());
    Ok((cal.invert(mu) - theta, (1.0 - mu * mu) / (shots as f64 * cal.b * cal.b)))
}

/// Large-sample limit of the distillation estimate, Tr(Yρ_θ^k)/Tr(ρ^k)
/// passed through the calibration.
pub fn vd_asymptote(config: &MetrologyConfig) -> Result<f64> {
    let (num, den) = vd_exact_moments(&config.probe, config.theta_true, config.k, config.gate_noise)?;
    Ok(config.calibration.invert(num / den))
}

/// Large-sample limit of the single-copy estimate.
pub fn raw_asymptote(probe: &DensityMatrix, theta: f64, calibration: CalibrationPair) -> Result<f64> {
    Ok(calibration.invert(evolve_phase(probe, theta)?.expectation(&gates::pauli_y().to_matrix())))
}

/// Estimation methods compared in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Distillation circuit with the configured probe.
    Vd,
    /// Single-copy readout of the configured probe.
    Raw,
    /// Distillation circuit with an exactly pure |+⟩ probe.
    PureVd,
    /// Single-copy readout of an exactly pure |+⟩ probe.
    PureRaw,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vd, Method::Raw, Method::PureVd, Method::PureRaw];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Vd => "vd",
            Method::Raw => "raw",
            Method::PureVd => "pure_vd",
            Method::PureRaw => "pure_raw",
        }
    }
}

/// One row of a sweep: (N, θ̂, |θ̂ − θ|, method, seed).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetrologyPoint {
    pub n: usize,
    pub theta_hat: f64,
    pub delta: f64,
    pub method: Method,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub theta: f64,
    pub probe: DensityMatrix,
    pub k: usize,
    pub copies: Vec<usize>,
    pub seeds: Vec<u64>,
    pub gate_noise: NoiseChannel,
    pub methods: Vec<Method>,
}

fn plus_state() -> DensityMatrix {
    DensityMatrix::pure(&crate::mixture::QubitState::Plus.vector()).expect("|+⟩ is normalised")
}

/// One estimate for a method at a copy budget; the stream is fixed by
/// (seed, method, N) so any subset of the sweep reproduces.
pub fn estimate_point(spec: &SweepSpec, method: Method, n: usize, seed: u64) -> Result<MetrologyPoint> {
    let stream = SeedStream::new(seed).named(method.name()).child(n as u64);
    let probe = match method {
        Method::Vd | Method::Raw => spec.probe.clone(),
        Method::PureVd | Method::PureRaw => plus_state(),
    };
    let theta_hat = match method {
        Method::Vd | Method::PureVd => {
            let mut config = MetrologyConfig::with_copies(spec.theta, probe, spec.k, n)?;
            config.gate_noise = spec.gate_noise;
            run_vd_metrology(&config, stream)?.theta_hat
        }
        Method::Raw | Method::PureRaw => run_raw_metrology(&probe, spec.theta, n, CalibrationPair::ideal(), stream)?,
    };
    Ok(MetrologyPoint { n, theta_hat, delta: (theta_hat - spec.theta).abs(), method, seed })
}

/// Every (seed, method, N) point, ordered by seed, then method, then N.
pub fn metrology_sweep(spec: &SweepSpec) -> Result<Vec<MetrologyPoint>> {
    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        for &method in &spec.methods {
            for &n in &spec.copies {
                jobs.push((seed, method, n));
            }
        }
    }
    jobs.into_par_iter().map(|(seed, method, n)| estimate_point(spec, method, n, seed)).collect()
}

/// Median over seeds of δθ̂ for one method and budget.
pub fn median_delta(points: &[MetrologyPoint], method: Method, n: usize) -> Option<f64> {
    let mut d: Vec<f64> = points.iter().filter(|p| p.method == method && p.n == n).map(|p| p.delta).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    Some(if m % 2 == 1 { d[m / 2] } else { (d[m / 2 - 1] + d[m / 2]) / 2.0 })
}

pub fn write_metrology_csv<W: std::io::Write>(out: W, points: &[MetrologyPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "theta_hat", "delta", "method", "seed"])?;
    for p in points {
        w.write_record([p.n.to_string(), format_value(p.theta_hat), format_value(p.delta), p.method.name().into(), p.seed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Asymptotic predictions and per-(method, N) seed medians.
pub fn metrology_summary(spec: &SweepSpec, points: &[MetrologyPoint]) -> Result<serde_json::Value> {
    let cal = CalibrationPair::ideal();
    let mut vd = MetrologyConfig::with_copies(spec.theta, spec.probe.clone(), spec.k, 2 * spec.k)?;
    vd.gate_noise = spec.gate_noise;
    let mut pure_vd = vd.clone();
    pure_vd.probe = plus_state();
    let asymptotes = serde_json::json!({
        "vd": vd_asymptote(&vd)?,
        "raw": raw_asymptote(&spec.probe, spec.theta, cal)?,
        "pure_vd": vd_asymptote(&pure_vd)?,
        "pure_raw": raw_asymptote(&plus_state(), spec.theta, cal)?,
    });
    let mut medians = Vec::new();
    for &method in &spec.methods {
        for &n in &spec.copies {
            if let Some(m) = median_delta(points, method, n) {
                medians.push(serde_json::json!({ "method": method.name(), "N": n, "median_delta": m }));
            }
        }
    }
    Ok(serde_json::json!({
        "theta": spec.theta,
        "k": spec.k,
        "asymptotic_theta_hat": asymptotes,
        "median_delta": medians,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::ComplexMatrix;
    use std::f64::consts::PI;

    fn noisy() -> DensityMatrix {
        DensityMatrix::new(ComplexMatrix::from_real(2, &[0.5, 0.4, 0.4, 0.5]).unwrap()).unwrap()
    }

    fn y() -> ComplexMatrix {
        gates::pauli_y().to_matrix()
    }

    #[test]
    fn evolution_examples() {
        let rho = noisy();
        assert!(evolve_phase(&rho, 0.0).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
        let plus = plus_state();
        assert!((evolve_phase(&plus, PI / 2.0).unwrap().expectation(&y()) - 1.0).abs() < 1e-12);
        let got = evolve_phase(&rho, PI / 15.0).unwrap().expectation(&y());
        assert!((got - 0.8 * (PI / 15.0).sin()).abs() < 1e-12);
        assert!((got - 0.16632).abs() < 1e-5);
    }

    #[test]
    fn evolution_commutes_with_powers() {
        let rho = noisy();
        let theta = 0.37;
        let evolved = evolve_phase(&rho, theta).unwrap();
        let direct = evolved.power(3);
        let v = phase_gate(theta).to_matrix();
        let other = v.matmul(&rho.power(3)).matmul(&v.adjoint());
        assert!(direct.max_abs_diff(&other) < 1e-12);
    }

    #[test]
    fn exact_atoms_give_distilled_moments() {
        let theta = PI / 15.0;
        for probe in [noisy(), plus_state()] {
            for k in 2..=3 {
                let (num, den) = vd_exact_moments(&probe, theta, k, NoiseChannel::None).unwrap();
                let evolved = evolve_phase(&probe, theta).unwrap();
                assert!((num - evolved.observable_moment(&y(), k)).abs() < 1e-12);
                assert!((den - probe.moment(k)).abs() < 1e-12);
                assert!((den - evolved.moment(k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymptotes() {
        let theta = PI / 15.0;
        let pure = MetrologyConfig::with_copies(theta, plus_state(), 2, 1000).unwrap();
        assert!((vd_asymptote(&pure).unwrap() - 0.20791).abs() < 1e-5);
        let vd = MetrologyConfig::with_copies(theta, noisy(), 2, 1000).unwrap();
        let a = vd_asymptote(&vd).unwrap();
        assert!((a - theta.sin() * 0.8 / 0.82).abs() < 1e-12);
        assert!(((a - theta).abs() - 0.0066).abs() < 1e-4);
        let raw = raw_asymptote(&noisy(), theta, CalibrationPair::ideal()).unwrap();
        assert!(((raw - theta).abs() - 0.0431).abs() < 1e-4);
        let raw_pure = raw_asymptote(&plus_state(), theta, CalibrationPair::ideal()).unwrap();
        assert!(((raw_pure - theta).abs() - (theta - theta.sin())).abs() < 1e-12);
        assert!(((raw_pure - theta).abs() - 0.0015).abs() < 1e-4);
    }

    #[test]
    fn predicted_statistics() {
        let (bias, var) = predict_estimator_stats(&plus_state(), &plus_state(), 0.0, 400).unwrap();
        assert!(bias.abs() < 1e-15);
        assert!((var - 1.0 / 400.0).abs() < 1e-15);
        let (bias, _) = predict_estimator_stats(&noisy(), &plus_state(), PI / 15.0, 10).unwrap();
        assert!((bias - (0.16632 - 0.20944)).abs() < 1e-4);
        let (_, v1) = predict_estimator_stats(&noisy(), &plus_state(), 0.3, 100).unwrap();
        let (_, v2) = predict_estimator_stats(&noisy(), &plus_state(), 0.3, 200).unwrap();
        assert!((v1 / v2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn raw_is_symmetric_at_zero() {
        let est = run_raw_metrology(&noisy(), 0.0, 20000, CalibrationPair::ideal(), SeedStream::new(3)).unwrap();
        assert!(est.abs() < 5.0 / (20000f64).sqrt());
    }

    #[test]
    fn config_validation() {
        assert!(MetrologyConfig::with_copies(2.0, noisy(), 2, 100).is_err());
        assert!(MetrologyConfig::with_copies(0.1, noisy(), 2, 3).is_err());
        assert!(MetrologyConfig::with_copies(0.1, noisy(), 1, 100).is_err());
        assert!(CalibrationPair::new(0.0, 0.0).is_err());
        let c = MetrologyConfig::with_copies(0.1, noisy(), 2, 100).unwrap();
        assert_eq!((c.shots_num, c.shots_den, c.copies()), (25, 25, 100));
    }

    #[test]
    fn runs_are_reproducible() {
        let c = MetrologyConfig::with_copies(PI / 15.0, noisy(), 2, 2048).unwrap();
        let a = run_vd_metrology(&c, SeedStream::new(5)).unwrap();
        let b = run_vd_metrology(&c, SeedStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 1024);
        assert_eq!(a.copies, 2048);
    }
}
