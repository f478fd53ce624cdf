//! Shot sampling for original and hybrid shadow runs.
//!
//! The pre-measurement state of a run only depends on which prepared
//! component was drawn, and the outcome distribution only on that and the
//! basis setting, so both are computed once and cached. A shot then costs
//! two uniform draws and a categorical draw.

use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::ProductMixture;
use crate::qcore::{bit_of, controlled_shift, gates, kron_vec, ComplexMatrix, DensityMatrix, NoiseChannel, MAX_QUBITS};
use crate::rng::SeedStream;
use crate::shadows::{PauliSetting, Protocol, RunRecord, ShadowSet, ShadowSnapshot};

/// Where each run's copies come from.
#[derive(Clone, Debug)]
pub enum StateSource {
    /// Every copy is the given single-copy state.
    Exact(DensityMatrix),
    /// Each run draws pure product states by the mixture weights.
    Mixture(ProductMixture),
}

impl StateSource {
    pub fn qubits_per_register(&self) -> usize {
        match self {
            StateSource::Exact(rho) => rho.n_qubits(),
            StateSource::Mixture(m) => m.qubits_per_register(),
        }
    }

    /// The single-copy state ρ this source prepares.
    pub fn single_copy(&self) -> Result<DensityMatrix> {
        match self {
            StateSource::Exact(rho) => Ok(rho.clone()),
            StateSource::Mixture(m) => m.single_copy(),
        }
    }
}

impl From<DensityMatrix> for StateSource {
    fn from(rho: DensityMatrix) -> Self {
        StateSource::Exact(rho)
    }
}

const MAX_COMPONENTS: usize = 1 << 12;
const MAX_CACHED: usize = 1 << 20;

/// Weighted list of joint (all copies of one run) preparations.
#[derive(Debug)]
struct Components {
    weights: Vec<f64>,
    sampler: Option<WeightedIndex<f64>>,
    build: ComponentBuild,
}

#[derive(Debug)]
enum ComponentBuild {
    Exact(DensityMatrix),
    /// One entry per component: indices into `terms`, one per draw.
    Products { terms: Vec<Vec<crate::qcore::C64>>, combos: Vec<Vec<usize>> },
}

impl Components {
    fn new(source: &StateSource, copies: usize) -> Result<Self> {
        match source {
            StateSource::Exact(rho) => Ok(Components {
                weights: vec![1.0],
                sampler: None,
                build: ComponentBuild::Exact(rho.tensor_power(copies)?),
            }),
            StateSource::Mixture(mix) => {
                let usable = if copies.is_multiple_of(mix.registers()) { mix.clone() } else { mix.register_marginal(0)? };
                let draws = copies / usable.registers();
                let n_terms = usable.terms().len();
                let count = n_terms.checked_pow(draws as u32).filter(|&c| c <= MAX_COMPONENTS).ok_or_else(|| {
                    Error::Config(format!("{n_terms} mixture terms over {draws} draws is too many components"))
                })?;
                let terms: Vec<_> = usable.terms().iter().map(|(_, s)| s.vector()).collect();
                let mut combos = Vec::with_capacity(count);
                let mut weights = Vec::with_capacity(count);
                for idx in 0..count {
                    let mut rest = idx;
                    let mut combo = vec![0; draws];
                    for slot in combo.iter_mut().rev() {
                        *slot = rest % n_terms;
                        rest /= n_terms;
                    }
                    weights.push(combo.iter().map(|&t| usable.terms()[t].0).product());
                    combos.push(combo);
                }
                let sampler = Some(
                    WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("mixture weights: {e}")))?,
                );
                Ok(Components { weights, sampler, build: ComponentBuild::Products { terms, combos } })
            }
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.as_ref().map_or(0, |s| s.sample(rng))
    }

    fn joint_vector_or_state(&self, index: usize) -> Result<DensityMatrix> {
        match &self.build {
            ComponentBuild::Exact(rho) => Ok(rho.clone()),
            ComponentBuild::Products { terms, combos } => {
                let psi = combos[index].iter().fold(vec![crate::qcore::ONE], |acc, &t| kron_vec(&acc, &terms[t]));
                DensityMatrix::pure(&psi)
            }
        }
    }
}

/// Sampler for one protocol on one source.
#[derive(Debug)]
pub struct ShotEngine {
    protocol: Protocol,
    k: usize,
    qubits: usize,
    noise: NoiseChannel,
    components: Components,
    prepared: Vec<OnceLock<DensityMatrix>>,
    n_settings: usize,
    cache: Option<Vec<OnceLock<Vec<f64>>>>,
}

impl ShotEngine {
    /// `k` is ignored for original shadows (one copy per run).
    pub fn new(source: &StateSource, protocol: Protocol, k: usize, noise: NoiseChannel) -> Result<Self> {
        let qubits = source.qubits_per_register();
        let copies = match protocol {
            Protocol::Os => 1,
            Protocol::Hs => {
                if k < 2 {
                    return Err(Error::Config(format!("hybrid shadows need k ≥ 2, got {k}")));
                }
                k
            }
        };
        let total = copies * qubits + usize::from(protocol == Protocol::Hs);
        if total > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { qubits: total, max: MAX_QUBITS });
        }
        let components = Components::new(source, copies)?;
        let n_settings = 3usize.pow((copies * qubits) as u32);
        let cache = (components.len() * n_settings <= MAX_CACHED)
            .then(|| (0..components.len() * n_settings).map(|_| OnceLock::new()).collect());
        let prepared = (0..components.len()).map(|_| OnceLock::new()).collect();
        Ok(ShotEngine { protocol, k: copies, qubits, noise, components, prepared, n_settings, cache })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn copies_per_run(&self) -> usize {
        self.k
    }

    pub fn qubits_per_register(&self) -> usize {
        self.qubits
    }

    /// Pre-measurement state of component `index`: ρ_J for original shadows,
    /// noisy CS_k(|+⟩⟨+| ⊗ ρ_J)CS_k† for hybrid runs.
    pub fn prepared_state(&self, index: usize) -> Result<&DensityMatrix> {
        if let Some(s) = self.prepared[index].get() {
            return Ok(s);
        }
        let joint = self.components.joint_vector_or_state(index)?;
        let state = match self.protocol {
            Protocol::Os => joint,
            Protocol::Hs => hybrid_circuit(&joint, self.k, self.qubits, self.noise)?,
        };
        Ok(self.prepared[index].get_or_init(|| state))
    }

    /// Component weights, for exact enumeration.
    pub fn component_weights(&self) -> &[f64] {
        &self.components.weights
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    /// Outcome distribution for a component and a flat setting index.
    /// Outcomes index the control bit (hybrid only) then every copy's qubits.
    pub fn distribution(&self, component: usize, setting: usize) -> Result<std::borrow::Cow<'_, [f64]>> {
        if let Some(cache) = &self.cache {
            let slot = &cache[component * self.n_settings + setting];
            if let Some(p) = slot.get() {
                return Ok(std::borrow::Cow::Borrowed(p));
            }
            let p = self.compute_distribution(component, setting)?;
            return Ok(std::borrow::Cow::Borrowed(slot.get_or_init(|| p)));
        }
        self.compute_distribution(component, setting).map(std::borrow::Cow::Owned)
    }

    fn compute_distribution(&self, component: usize, setting: usize) -> Result<Vec<f64>> {
        let state = self.prepared_state(component)?;
        let flat = PauliSetting::from_index(setting, self.k * self.qubits);
        let mut rotations = Vec::with_capacity(state.n_qubits());
        if self.protocol == Protocol::Hs {
            rotations.push(gates::hadamard());
        }
        rotations.extend(flat.rotations());
        state.rotate_local(&rotations).diagonal_probabilities()
    }

    /// One run with a uniformly random setting.
    pub fn shot<R: Rng + ?Sized>(&self, run: u64, rng: &mut R) -> Result<RunRecord> {
        let component = self.components.draw(rng);
        let setting = rng.gen_range(0..self.n_settings);
        self.shot_inner(run, component, setting, rng)
    }

    /// One run with the measurement setting forced (tests and diagnostics).
    pub fn shot_with_setting<R: Rng + ?Sized>(&self, run: u64, settings: &[PauliSetting], rng: &mut R) -> Result<RunRecord> {
        if settings.len() != self.k || settings.iter().any(|s| s.len() != self.qubits) {
            return Err(Error::Dimension(format!("need {} settings of {} qubits", self.k, self.qubits)));
        }
        let flat = PauliSetting(settings.iter().flat_map(|s| s.0.iter().copied()).collect());
        let component = self.components.draw(rng);
        self.shot_inner(run, component, flat.index(), rng)
    }

    fn shot_inner<R: Rng + ?Sized>(&self, run: u64, component: usize, setting: usize, rng: &mut R) -> Result<RunRecord> {
        let probs = self.distribution(component, setting)?;
        let outcome = crate::qcore::sample_index(&probs, rng);
        Ok(self.decode(run, setting, outcome))
    }

    /// Build the record for a given setting index and outcome index.
    pub fn decode(&self, run: u64, setting: usize, outcome: usize) -> RunRecord {
        let offset = usize::from(self.protocol == Protocol::Hs);
        let n_total = offset + self.k * self.qubits;
        let flat = PauliSetting::from_index(setting, self.k * self.qubits);
        let settings = flat.0.chunks(self.qubits).map(|c| PauliSetting(c.to_vec())).collect();
        let bits = (0..self.k)
            .map(|copy| (0..self.qubits).map(|q| bit_of(outcome, n_total, offset + copy * self.qubits + q)).collect())
            .collect();
        let control_bit = (self.protocol == Protocol::Hs).then(|| bit_of(outcome, n_total, 0));
        RunRecord { run, protocol: self.protocol, k: self.k, settings, bits, control_bit }
    }

    /// Every distinct (setting, outcome) record with its exact probability,
    /// settings uniform and components weighted. Records carry run id 0.
    pub fn atoms(&self) -> Result<Vec<(f64, RunRecord)>> {
        let mut out = Vec::new();
        for setting in 0..self.n_settings {
            let mut acc: Vec<f64> = Vec::new();
            for (component, w) in self.components.weights.iter().enumerate() {
                let probs = self.distribution(component, setting)?;
                acc.resize(probs.len(), 0.0);
                for (a, p) in acc.iter_mut().zip(probs.iter()) {
                    *a += w * p;
                }
            }
            for (outcome, p) in acc.into_iter().enumerate() {
                if p > 0.0 {
                    out.push((p / self.n_settings as f64, self.decode(0, setting, outcome)));
                }
            }
        }
        Ok(out)
    }

    /// `runs` shots, each on its own sub-stream of `stream`, in run order.
    pub fn sample_runs(&self, runs: usize, stream: SeedStream) -> Result<Vec<RunRecord>> {
        (0..runs as u64).into_par_iter().map(|i| self.shot(i, &mut stream.rng(i))).collect()
    }
}

/// Noisy controlled-SHIFT applied to |+⟩⟨+| ⊗ ρ_J.
pub fn hybrid_circuit(joint: &DensityMatrix, k: usize, qubits: usize, noise: NoiseChannel) -> Result<DensityMatrix> {
    let plus = DensityMatrix::pure(&gates::hadamard().apply([crate::qcore::ONE, crate::qcore::ZERO]))?;
    let input = plus.tensor(joint)?;
    let gate: ComplexMatrix = controlled_shift(k, qubits)?;
    crate::qcore::apply_channel(&input, &gate, noise)
}

/// Output of a collection: snapshot sets plus the raw records.
#[derive(Clone, Debug)]
pub struct ShadowData {
    pub protocol: Protocol,
    pub k: usize,
    pub hybrid: Option<ShadowSet>,
    pub plain: ShadowSet,
    pub records: Vec<RunRecord>,
}

impl ShadowData {
    /// Build the snapshot sets from run records.
    pub fn from_records(records: Vec<RunRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::InsufficientData("no runs recorded".into()))?;
        let (protocol, k) = (first.protocol, first.k);
        let mut hybrid = (protocol == Protocol::Hs).then(|| ShadowSet::new(k));
        let mut plain = ShadowSet::new(1);
        let mut seen = std::collections::HashSet::new();
        for rec in &records {
            if rec.protocol != protocol || rec.k != k {
                return Err(Error::InvalidState("records mix protocols or k".into()));
            }
            if !seen.insert(rec.run) {
                return Err(Error::InvalidState(format!("run {} recorded twice", rec.run)));
            }
            let (h, p) = rec.snapshots()?;
            if let (Some(set), Some(h)) = (hybrid.as_mut(), h) {
                set.push(h, rec.run)?;
            }
            for s in p {
                plain.push(s, rec.run)?;
            }
        }
        Ok(ShadowData { protocol, k, hybrid, plain, records })
    }

    /// Copies consumed: Σ copies over runs.
    pub fn copies(&self) -> usize {
        self.records.iter().map(RunRecord::copies_consumed).sum()
    }

    pub fn runs(&self) -> usize {
        self.records.len()
    }

    /// Restrict to runs satisfying `keep`.
    pub fn filter_runs(&self, keep: impl Fn(u64) -> bool + Copy) -> Result<ShadowData> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r.run)).cloned().collect();
        ShadowData::from_records(records)
    }
}

/// Sample `runs` runs of `protocol` and build the snapshot sets. For hybrid
/// runs N = k·runs copies are consumed, otherwise N = runs.
pub fn collect(
    source: &StateSource,
    protocol: Protocol,
    k: usize,
    runs: usize,
    noise: NoiseChannel,
    stream: SeedStream,
) -> Result<ShadowData> {
    if runs == 0 {
        return Err(Error::Config("at least one run is required".into()));
    }
    let engine = ShotEngine::new(source, protocol, k, noise)?;
    collect_with(&engine, runs, stream)
}

pub fn collect_with(engine: &ShotEngine, runs: usize, stream: SeedStream) -> Result<ShadowData> {
    ShadowData::from_records(engine.sample_runs(runs, stream)?)
}

/// One original-shadow run on `state`.
pub fn run_os_shot<R: Rng + ?Sized>(state: &DensityMatrix, rng: &mut R) -> Result<(RunRecord, ShadowSnapshot)> {
    let engine = ShotEngine::new(&StateSource::Exact(state.clone()), Protocol::Os, 1, NoiseChannel::None)?;
    let rec = engine.shot(0, rng)?;
    let (_, mut plain) = rec.snapshots()?;
    Ok((rec, plain.remove(0)))
}

/// One hybrid run on k copies of `state`: the record, the signed snapshot of
/// ρ^k and one plain snapshot per copy.
pub fn run_hs_shot<R: Rng + ?Sized>(
    state: &DensityMatrix,
    k: usize,
    gate_noise: NoiseChannel,
    rng: &mut R,
) -> Result<(RunRecord, ShadowSnapshot, Vec<ShadowSnapshot>)> {
    let engine = ShotEngine::new(&StateSource::Exact(state.clone()), Protocol::Hs, k, gate_noise)?;
    let rec = engine.shot(0, rng)?;
    let (hybrid, plain) = rec.snapshots()?;
    Ok((rec, hybrid.expect("hybrid run yields a hybrid snapshot"), plain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{c, ket, ComplexMatrix, Mat2};
    use crate::shadows::Pauli;

    fn noisy_plus() -> DensityMatrix {
        DensityMatrix::new(ComplexMatrix::from_real(2, &[0.5, 0.4, 0.4, 0.5]).unwrap()).unwrap()
    }

    fn plus() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::pure(&[c(s, 0.0), c(s, 0.0)]).unwrap()
    }

    #[test]
    fn forced_z_on_zero_state() {
        let zero = DensityMatrix::pure(&ket(0, 1)).unwrap();
        let engine = ShotEngine::new(&zero.clone().into(), Protocol::Os, 1, NoiseChannel::None).unwrap();
        let z = PauliSetting(vec![Pauli::Z]);
        let mut rng = SeedStream::new(3).rng(0);
        for run in 0..20 {
            let rec = engine.shot_with_setting(run, std::slice::from_ref(&z), &mut rng).unwrap();
            let (_, plain) = rec.snapshots().unwrap();
            assert!(plain[0].factors()[0].max_abs_diff(&Mat2::real(2.0, 0.0, 0.0, -1.0)) < 1e-15);
        }
    }

    #[test]
    fn pure_swap_test_never_fires() {
        let mut rng = SeedStream::new(11).rng(0);
        for _ in 0..200 {
            let (rec, hybrid, plain) = run_hs_shot(&plus(), 2, NoiseChannel::None, &mut rng).unwrap();
            assert_eq!(rec.control_bit, Some(0));
            assert_eq!(hybrid.sign(), 1);
            assert_eq!(plain.len(), 2);
            assert_eq!(rec.copies_consumed(), 2);
        }
    }

    #[test]
    fn copy_accounting() {
        let src: StateSource = noisy_plus().into();
        let os = collect(&src, Protocol::Os, 1, 100, NoiseChannel::None, SeedStream::new(1)).unwrap();
        assert_eq!(os.copies(), 100);
        assert!(os.hybrid.is_none());
        let hs = collect(&src, Protocol::Hs, 2, 100, NoiseChannel::None, SeedStream::new(1)).unwrap();
        assert_eq!(hs.copies(), 200);
        assert_eq!(hs.hybrid.as_ref().unwrap().len(), 100);
        assert_eq!(hs.plain.len(), 200);
        let hs3 = collect(&src, Protocol::Hs, 3, 10, NoiseChannel::None, SeedStream::new(1)).unwrap();
        assert_eq!(hs3.copies(), 30);
    }

    #[test]
    fn hybrid_needs_two_copies() {
        let src: StateSource = noisy_plus().into();
        assert!(ShotEngine::new(&src, Protocol::Hs, 1, NoiseChannel::None).is_err());
    }

    #[test]
    fn sampling_is_schedule_independent() {
        let src: StateSource = noisy_plus().into();
        let engine = ShotEngine::new(&src, Protocol::Hs, 2, NoiseChannel::None).unwrap();
        let par = engine.sample_runs(500, SeedStream::new(5)).unwrap();
        let serial: Vec<_> = (0..500u64).map(|i| engine.shot(i, &mut SeedStream::new(5).rng(i)).unwrap()).collect();
        assert_eq!(par, serial);
    }

    #[test]
    fn distributions_are_normalised() {
        let src = StateSource::Mixture(ProductMixture::noisy_plus_two_copy());
        let engine = ShotEngine::new(&src, Protocol::Hs, 2, NoiseChannel::depolarizing(0.1).unwrap()).unwrap();
        for comp in 0..engine.component_weights().len() {
            for s in 0..engine.n_settings() {
                let p = engine.distribution(comp, s).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
