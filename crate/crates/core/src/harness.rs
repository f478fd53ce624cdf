//! Experiment configuration, orchestration and result persistence.
//!
//! A run is fully determined by its [`ExperimentConfig`]: every
//! (protocol, repetition, N) point draws its shots and tuple subsamples
//! from its own branch of the master seed, and results are merged in a
//! fixed order, so output bytes do not depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characterization::{self, AngleTables, TruthTable};
use crate::engine::{collect_with, ShadowData, ShotEngine, StateSource};
use crate::error::{Error, Result};
use crate::estimators::{estimate_paired, EstimatorOptions, HybridPairing, Observable, DEFAULT_TUPLE_BUDGET, MIN_DENOMINATOR};
use crate::metrology::{self, Method, MetrologyPoint, SweepSpec};
use crate::mixture::{ProductMixture, ProductState};
use crate::qcore::{c, gates, ComplexMatrix, DensityMatrix, Mat2, NoiseChannel};
use crate::rng::SeedStream;
use crate::series::{empirical_mse, format_value, write_series_csv, MomentSeries};
use crate::shadows::Protocol;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Powers of two from 2⁶ to 2¹⁵.
pub fn default_copy_grid() -> Vec<usize> {
    (6..=15).map(|e| 1usize << e).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureTerm {
    pub label: String,
    pub p: f64,
}

/// Input state: a convex mixture of labelled product states spanning one
/// or more registers, or an explicit matrix of [re, im] pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Mixture {
        #[serde(default = "one")]
        qubits: usize,
        terms: Vec<MixtureTerm>,
    },
    Matrix { entries: Vec<Vec<[f64; 2]>> },
}

fn one() -> usize {
    1
}

impl StateSpec {
    /// The nine-term two-copy preparation of 0.8|+⟩⟨+| + 0.1·I.
    pub fn noisy_plus() -> Self {
        let m = ProductMixture::noisy_plus_two_copy();
        StateSpec::Mixture {
            qubits: 1,
            terms: m.terms().iter().map(|(p, s)| MixtureTerm { label: s.label(), p: *p }).collect(),
        }
    }

    pub fn mixture(&self) -> Result<Option<ProductMixture>> {
        match self {
            StateSpec::Mixture { qubits, terms } => {
                let parsed = terms.iter().map(|t| Ok((t.p, ProductState::parse(&t.label)?))).collect::<Result<Vec<_>>>()?;
                Ok(Some(ProductMixture::new(parsed, *qubits)?))
            }
            StateSpec::Matrix { .. } => Ok(None),
        }
    }
}

/// Single-copy density matrix described by a spec (for mixtures over
/// several registers, the register-0 marginal).
pub fn build_state(spec: &StateSpec) -> Result<DensityMatrix> {
    match spec {
        StateSpec::Mixture { .. } => spec.mixture()?.expect("mixture spec").single_copy(),
        StateSpec::Matrix { entries } => {
            let dim = entries.len();
            if entries.iter().any(|row| row.len() != dim) {
                return Err(Error::Config("state matrix must be square".into()));
            }
            let data = entries.iter().flatten().map(|[re, im]| c(*re, *im)).collect();
            DensityMatrix::new(ComplexMatrix::from_vec(dim, data)?)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Draw a pure product state per run by the mixture weights.
    #[default]
    Mixture,
    /// Use the assembled single-copy density matrix.
    Explicit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    Os,
    Hs,
    #[default]
    Both,
}

impl ProtocolChoice {
    pub fn protocols(&self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::Os => vec![Protocol::Os],
            ProtocolChoice::Hs => vec![Protocol::Hs],
            ProtocolChoice::Both => vec![Protocol::Os, Protocol::Hs],
        }
    }
}

impl std::str::FromStr for ProtocolChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "os" => Ok(ProtocolChoice::Os),
            "hs" => Ok(ProtocolChoice::Hs),
            "both" => Ok(ProtocolChoice::Both),
            other => Err(Error::Config(format!("unknown protocol '{other}' (os, hs, both)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// P̂_L = estimate of Tr(ρ^L).
    Moment,
    /// ô_L = estimate of Tr(Oρ^L).
    Observable,
    /// ô_L / P̂_L on the same tuples.
    Vd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthMode {
    /// Exact value from the known state.
    #[default]
    Analytic,
    /// Estimate from an independent, larger run of the same protocol.
    PlugIn { copies: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "StateSpec::noisy_plus")]
    pub state: StateSpec,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub protocol: ProtocolChoice,
    #[serde(default = "two")]
    pub k: usize,
    #[serde(default = "default_l")]
    pub l: Vec<usize>,
    #[serde(default = "default_copy_grid")]
    pub copies: Vec<usize>,
    #[serde(default = "twenty")]
    pub repetitions: usize,
    #[serde(default = "seven")]
    pub seed: u64,
    #[serde(default)]
    pub noise_p: f64,
    #[serde(default = "default_budget")]
    pub tuple_budget: u64,
    #[serde(default)]
    pub pairing: HybridPairing,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Pauli string, one letter per qubit of a register.
    #[serde(default = "default_observable")]
    pub observable: String,
    #[serde(default)]
    pub truth: TruthMode,
}

fn two() -> usize {
    2
}
fn twenty() -> usize {
    20
}
fn seven() -> u64 {
    7
}
fn default_l() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_budget() -> u64 {
    DEFAULT_TUPLE_BUDGET
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Moment]
}
fn default_observable() -> String {
    "X".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies.is_empty() || self.copies.contains(&0) {
            return Err(Error::Config("copy budgets must be positive".into()));
        }
        if self.copies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("copy budgets must be strictly increasing".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("need at least one repetition".into()));
        }
        if self.l.is_empty() || self.l.iter().any(|&l| l == 0 || l > 16) {
            return Err(Error::Config("degrees L must lie in 1..=16".into()));
        }
        if self.estimators.contains(&EstimatorKind::Moment) && self.l.contains(&1) {
            return Err(Error::Config("moments need L ≥ 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::Config(format!("noise strength {} outside [0, 1]", self.noise_p)));
        }
        if self.tuple_budget == 0 {
            return Err(Error::Config("tuple budget must be positive".into()));
        }
        if self.protocol != ProtocolChoice::Os {
            if self.k < 2 {
                return Err(Error::Config(format!("hybrid shadows need k ≥ 2, got {}", self.k)));
            }
            if let Some(n) = self.copies.iter().find(|&&n| n % self.k != 0) {
                return Err(Error::Config(format!("N = {n} is not divisible by k = {}; hybrid runs consume k copies each", self.k)));
            }
        }
        if let TruthMode::PlugIn { copies } = self.truth {
            if copies == 0 || (self.protocol != ProtocolChoice::Os && copies % self.k != 0) {
                return Err(Error::Config(format!("plug-in truth needs a positive multiple of k copies, got {copies}")));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Result<StateSource> {
        Ok(match (self.sampling, self.state.mixture()?) {
            (Sampling::Mixture, Some(m)) => StateSource::Mixture(m),
            _ => StateSource::Exact(build_state(&self.state)?),
        })
    }

    pub fn noise(&self) -> Result<NoiseChannel> {
        NoiseChannel::depolarizing(self.noise_p)
    }

    pub fn observable(&self, qubits: usize) -> Result<(Observable, ComplexMatrix)> {
        let ops = pauli_string(&self.observable)?;
        if ops.len() != qubits {
            return Err(Error::Config(format!("observable '{}' does not act on {qubits} qubits", self.observable)));
        }
        let dense = gates::product(&ops);
        Ok((Observable::Local(ops), dense))
    }

    /// Estimator names in output order.
    pub fn estimator_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for &l in &self.l {
            for kind in &self.estimators {
                names.push(estimator_name(*kind, l, &self.observable));
            }
        }
        names
    }
}

fn pauli_string(s: &str) -> Result<Vec<Mat2>> {
    if s.is_empty() {
        return Err(Error::Config("empty observable".into()));
    }
    s.chars()
        .map(|ch| match ch.to_ascii_uppercase() {
            'I' => Ok(Mat2::IDENTITY),
            'X' => Ok(gates::pauli_x()),
            'Y' => Ok(gates::pauli_y()),
            'Z' => Ok(gates::pauli_z()),
            other => Err(Error::Config(format!("unknown Pauli '{other}' in observable"))),
        })
        .collect()
}

pub fn estimator_name(kind: EstimatorKind, l: usize, observable: &str) -> String {
    match kind {
        EstimatorKind::Moment => format!("P{l}"),
        EstimatorKind::Observable => format!("{observable}{l}"),
        EstimatorKind::Vd => format!("VD{l}_{observable}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthValue {
    pub estimator: String,
    pub protocol: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub version: String,
    /// One series per (protocol, estimator, repetition).
    pub series: Vec<MomentSeries>,
    /// One series per (protocol, estimator); empty with a single repetition.
    pub mse: Vec<MomentSeries>,
    pub truths: Vec<TruthValue>,
    /// Not part of the deterministic output.
    pub wall_clock_seconds: f64,
}

impl ResultBundle {
    pub fn series_for(&self, estimator: &str, protocol: Protocol) -> Vec<&MomentSeries> {
        self.series.iter().filter(|s| s.estimator == estimator && s.protocol == protocol.name()).collect()
    }

    pub fn mse_for(&self, estimator: &str, protocol: Protocol) -> Option<&MomentSeries> {
        let name = format!("{estimator}_mse");
        self.mse.iter().find(|s| s.estimator == name && s.protocol == protocol.name())
    }
}

/// Evaluates every requested estimator on one data set.
fn evaluate(config: &ExperimentConfig, data: &ShadowData, obs: &Observable, stream: SeedStream) -> Result<Vec<f64>> {
    let opts = |l: usize| EstimatorOptions { tuple_budget: config.tuple_budget, pairing: config.pairing, stream: stream.child(l as u64) };
    let mut out = Vec::new();
    for &l in &config.l {
        let need_obs = config.estimators.iter().any(|k| *k != EstimatorKind::Moment);
        let need_moment = config.estimators.iter().any(|k| *k != EstimatorKind::Observable);
        let mut ops = Vec::new();
        if need_moment {
            ops.push(Observable::Identity);
        }
        if need_obs {
            ops.push(obs.clone());
        }
        let values = estimate_paired(data, l, &ops, &opts(l))?;
        let moment = if need_moment { values[0] } else { f64::NAN };
        let o = if need_obs { values[values.len() - 1] } else { f64::NAN };
        for kind in &config.estimators {
            out.push(match kind {
                EstimatorKind::Moment => moment,
                EstimatorKind::Observable => o,
                EstimatorKind::Vd => {
                    if moment.abs() < MIN_DENOMINATOR {
                        return Err(Error::UnresolvedDenominator(moment));
                    }
                    o / moment
                }
            });
        }
    }
    Ok(out)
}

fn analytic_truths(config: &ExperimentConfig, rho: &DensityMatrix, dense_obs: &ComplexMatrix) -> Vec<f64> {
    let mut out = Vec::new();
    for &l in &config.l {
        for kind in &config.estimators {
            out.push(match kind {
                EstimatorKind::Moment => rho.moment(l),
                EstimatorKind::Observable => rho.observable_moment(dense_obs, l),
                EstimatorKind::Vd => rho.observable_moment(dense_obs, l) / rho.moment(l),
            });
        }
    }
    out
}

/// Runs every (protocol, repetition, N) point of the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    let started = Instant::now();
    config.validate()?;
    let source = config.source()?;
    let rho = source.single_copy()?;
    let (obs, dense_obs) = config.observable(rho.n_qubits())?;
    let noise = config.noise()?;
    let master = SeedStream::new(config.seed);
    let names = config.estimator_names();
    let protocols = config.protocol.protocols();

    let engines = protocols
        .iter()
        .map(|&p| ShotEngine::new(&source, p, if p == Protocol::Hs { config.k } else { 1 }, if p == Protocol::Hs { noise } else { NoiseChannel::None }))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for (pi, p) in protocols.iter().enumerate() {
        for rep in 0..config.repetitions {
            for &n in &config.copies {
                jobs.push((pi, *p, rep, n));
            }
        }
    }
    let values: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(pi, p, rep, n)| {
            let engine = &engines[pi];
            let stream = master.named(p.name()).child(rep as u64).child(n as u64);
            let data = collect_with(engine, n / engine.copies_per_run(), stream.named("shots"))?;
            debug_assert_eq!(data.copies(), n);
            evaluate(config, &data, &obs, stream.named("tuples"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = Vec::new();
    let mut job = 0;
    for p in &protocols {
        let mut per_rep: Vec<Vec<MomentSeries>> = Vec::new();
        for rep in 0..config.repetitions {
            let mut row: Vec<MomentSeries> = names.iter().map(|e| MomentSeries::new(e.clone(), p.name(), config.seed, rep)).collect();
            for &n in &config.copies {
                for (s, v) in row.iter_mut().zip(&values[job]) {
                    s.push(n, *v)?;
                }
                job += 1;
            }
            per_rep.push(row);
        }
        for (ei, _) in names.iter().enumerate() {
            for rep in &per_rep {
                series.push(rep[ei].clone());
            }
        }
    }

    let mut truths = Vec::new();
    for (pi, p) in protocols.iter().enumerate() {
        let values = match config.truth {
            TruthMode::Analytic => analytic_truths(config, &rho, &dense_obs),
            TruthMode::PlugIn { copies } => {
                let engine = &engines[pi];
                let stream = master.named("truth").named(p.name());
                let data = collect_with(engine, copies / engine.copies_per_run(), stream.named("shots"))?;
                evaluate(config, &data, &obs, stream.named("tuples"))?
            }
        };
        for (name, value) in names.iter().zip(values) {
            truths.push(TruthValue { estimator: name.clone(), protocol: p.name().to_string(), value });
        }
    }

    let mut mse = Vec::new();
    if config.repetitions >= 2 {
        for t in &truths {
            let reps: Vec<MomentSeries> =
                series.iter().filter(|s| s.estimator == t.estimator && s.protocol == t.protocol).cloned().collect();
            mse.push(empirical_mse(&reps, t.value)?);
        }
    }

    Ok(ResultBundle {
        config: config.clone(),
        config_sha256: config.hash(),
        version: VERSION.to_string(),
        series,
        mse,
        truths,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (csv, json)"))),
        }
    }
}

/// All series of a bundle as one CSV table.
pub fn bundle_csv(bundle: &ResultBundle) -> Result<String> {
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &bundle.series)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// The bundle as JSON without the wall-clock field.
pub fn bundle_json(bundle: &ResultBundle) -> Result<String> {
    let mut value = serde_json::to_value(bundle)?;
    value.as_object_mut().expect("bundle is an object").remove("wall_clock_seconds");
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn manifest(config_hash: &str, seed: u64, files: &[String], wall_clock: f64, extra: serde_json::Value) -> Result<String> {
    let value = serde_json::json!({
        "version": VERSION,
        "seed": seed,
        "config_sha256": config_hash,
        "files": files,
        "wall_clock_seconds": wall_clock,
        "details": extra,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Writes one CSV per estimator plus `mse.csv` (or a single
/// `results.json`) and `manifest.json`; returns the files written.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match format {
        OutputFormat::Csv => {
            for name in bundle.config.estimator_names() {
                let rows: Vec<MomentSeries> = bundle.series.iter().filter(|s| s.estimator == name).cloned().collect();
                let path = dir.join(format!("{name}.csv"));
                write_series_csv(fs::File::create(&path)?, &rows)?;
                files.push(path);
            }
            if !bundle.mse.is_empty() {
                let path = dir.join("mse.csv");
                write_series_csv(fs::File::create(&path)?, &bundle.mse)?;
                files.push(path);
            }
        }
        OutputFormat::Json => {
            let path = dir.join("results.json");
            fs::write(&path, bundle_json(bundle)?)?;
            files.push(path);
        }
    }
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    let extra = serde_json::json!({ "config": bundle.config, "truths": bundle.truths });
    let path = dir.join("manifest.json");
    fs::write(&path, manifest(&bundle.config_sha256, bundle.config.seed, &names, bundle.wall_clock_seconds, extra)?)?;
    files.push(path);
    Ok(files)
}

/// Phase-estimation sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetrologyRunConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "two")]
    pub k: usize,
    #[serde(default = "default_metrology_copies")]
    pub copies: Vec<usize>,
    /// Number of independent seeds.
    #[serde(default = "twenty")]
    pub repetitions: usize,
    #[serde(default = "seven")]
    pub seed: u64,
    #[serde(default)]
    pub noise_p: f64,
    /// Probe state; defaults to 0.8|+⟩⟨+| + 0.1·I.
    #[serde(default = "StateSpec::noisy_plus")]
    pub probe: StateSpec,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
}

fn default_theta() -> f64 {
    std::f64::consts::PI / 15.0
}
fn default_metrology_copies() -> Vec<usize> {
    (6..=15).map(|e| 1usize << e).collect()
}
fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl Default for MetrologyRunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl MetrologyRunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }

    /// Per-repetition seeds derived from the master seed.
    pub fn seeds(&self) -> Vec<u64> {
        let master = SeedStream::new(self.seed).named("metrology");
        (0..self.repetitions as u64).map(|r| master.child(r).seed()).collect()
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        if self.copies.is_empty() || self.copies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("copy budgets must be strictly increasing".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("need at least one repetition".into()));
        }
        Ok(SweepSpec {
            theta: self.theta,
            probe: build_state(&self.probe)?,
            k: self.k,
            copies: self.copies.clone(),
            seeds: self.seeds(),
            gate_noise: NoiseChannel::depolarizing(self.noise_p)?,
            methods: self.methods.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetrologyBundle {
    pub config: MetrologyRunConfig,
    pub points: Vec<MetrologyPoint>,
    pub summary: serde_json::Value,
    pub wall_clock_seconds: f64,
}

pub fn run_metrology(config: &MetrologyRunConfig) -> Result<MetrologyBundle> {
    let started = Instant::now();
    let spec = config.sweep_spec()?;
    let points = metrology::metrology_sweep(&spec)?;
    let summary = metrology::metrology_summary(&spec, &points)?;
    Ok(MetrologyBundle { config: config.clone(), points, summary, wall_clock_seconds: started.elapsed().as_secs_f64() })
}

pub fn metrology_csv(bundle: &MetrologyBundle) -> Result<String> {
    let mut buf = Vec::new();
    metrology::write_metrology_csv(&mut buf, &bundle.points)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

pub fn metrology_json(bundle: &MetrologyBundle) -> Result<String> {
    let value = serde_json::json!({ "config": bundle.config, "summary": bundle.summary, "points": bundle.points });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn write_metrology(bundle: &MetrologyBundle, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = match format {
        OutputFormat::Csv => {
            let p = dir.join("metrology.csv");
            fs::write(&p, metrology_csv(bundle)?)?;
            p
        }
        OutputFormat::Json => {
            let p = dir.join("metrology.json");
            fs::write(&p, metrology_json(bundle)?)?;
            p
        }
    };
    let summary = dir.join("summary.json");
    fs::write(&summary, serde_json::to_string_pretty(&bundle.summary)? + "\n")?;
    let names = vec![path.file_name().unwrap().to_string_lossy().into_owned(), "summary.json".into()];
    let m = dir.join("manifest.json");
    let extra = serde_json::json!({ "config": bundle.config });
    fs::write(&m, manifest(&bundle.config.hash(), bundle.config.seed, &names, bundle.wall_clock_seconds, extra)?)?;
    Ok(vec![path, summary, m])
}

/// What to characterize.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CharacterizeRequest {
    pub truth_table: Option<PathBuf>,
    pub angles: Option<PathBuf>,
    pub target_fidelity: Option<f64>,
    pub noise_p: Option<f64>,
}

/// Rows of (quantity, value).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CharacterizeReport {
    pub rows: Vec<(String, f64)>,
}

impl CharacterizeReport {
    fn push(&mut self, key: impl Into<String>, value: f64) {
        self.rows.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == key).map(|r| r.1)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["quantity", "value"])?;
        for (k, v) in &self.rows {
            w.write_record([k.clone(), format_value(*v)])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let map: serde_json::Map<String, serde_json::Value> = self.rows.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        Ok(serde_json::to_string_pretty(&map)? + "\n")
    }
}

/// Ingests tables, verifies waveplate settings and simulates the gate.
/// Without a table or calibration target, the simulated gate (with
/// `noise_p`, default 0) is reported.
pub fn run_characterize(req: &CharacterizeRequest) -> Result<CharacterizeReport> {
    let mut report = CharacterizeReport::default();
    let tables = match &req.angles {
        Some(path) => AngleTables::load(path)?,
        None => AngleTables::published(),
    };
    let preps = characterization::verify_preparations(&tables)?;
    report.push("preparations_passed", preps.iter().filter(|(_, f)| (f - 1.0).abs() < 1e-10).count() as f64);
    report.push("preparations_total", preps.len() as f64);
    let checks = characterization::verify_measurements(&tables)?;
    report.push("measurements_passed", checks.iter().filter(|c| c.passed).count() as f64);
    report.push("measurements_total", checks.len() as f64);

    if let Some(path) = &req.truth_table {
        let table = TruthTable::load(path)?;
        report.push("table_f_zzz", characterization::classical_fidelity(&table));
    }
    let noise = match (req.target_fidelity, req.noise_p) {
        (Some(target), _) => {
            let n = characterization::calibrate_noise(target)?;
            report.push("target_process_fidelity", target);
            n
        }
        (None, Some(p)) => NoiseChannel::depolarizing(p)?,
        (None, None) => NoiseChannel::None,
    };
    let sim = characterization::characterize(noise)?;
    report.push("noise_p", sim.noise_p);
    report.push("f_zzz", sim.f_zzz);
    report.push("ghz_fidelity", sim.ghz_fidelity);
    for (name, v) in characterization::GHZ_CORRELATORS.iter().zip(sim.ghz.correlators) {
        report.push(format!("corr_{name}"), v);
    }
    report.push("process_fidelity", sim.process_fidelity);
    Ok(report)
}
