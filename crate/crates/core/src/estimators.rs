//! Moment, observable and virtual-distillation estimators built from
//! shadow sets.
//!
//! Every estimator is an average of Re Tr[O · A₁ ⋯ A_m] over ordered tuples
//! of snapshots drawn from one pool per slot, where no two snapshots in a
//! tuple may come from the same run. When the number of candidate tuples
//! fits the tuple budget the average is exhaustive (a U-statistic);
//! otherwise a uniform sample of `tuple_budget` valid tuples is used.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::ShadowData;
use crate::error::{Error, Result};
use crate::qcore::{gates, ComplexMatrix, Mat2, C64, ONE};
use crate::rng::SeedStream;
use crate::shadows::{Protocol, ShadowSet, ShadowSnapshot};

pub const DEFAULT_TUPLE_BUDGET: u64 = 1_000_000;
const BATCH: u64 = 4096;
/// Below this magnitude a distillation denominator is treated as unresolved.
pub const MIN_DENOMINATOR: f64 = 1e-6;

/// How the q hybrid slots of a higher-moment estimator share the hybrid set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridPairing {
    /// Slot j draws from the j-th of q contiguous, disjoint blocks.
    #[default]
    DisjointBlocks,
    /// Every slot draws from the whole set (off-diagonal U-statistic).
    OffDiagonal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorOptions {
    pub tuple_budget: u64,
    pub pairing: HybridPairing,
    /// Source of randomness when tuples are subsampled.
    pub stream: SeedStream,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            tuple_budget: DEFAULT_TUPLE_BUDGET,
            pairing: HybridPairing::default(),
            stream: SeedStream::new(0),
        }
    }
}

/// Operator inserted in front of the snapshot product.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Identity,
    /// Tensor product of single-qubit operators.
    Local(Vec<Mat2>),
    Dense(ComplexMatrix),
}

impl Observable {
    pub fn pauli_x() -> Self {
        Observable::Local(vec![gates::pauli_x()])
    }

    pub fn pauli_y() -> Self {
        Observable::Local(vec![gates::pauli_y()])
    }

    pub fn to_dense(&self, n_qubits: usize) -> ComplexMatrix {
        match self {
            Observable::Identity => ComplexMatrix::identity(1 << n_qubits),
            Observable::Local(ops) => gates::product(ops),
            Observable::Dense(m) => m.clone(),
        }
    }

    fn check(&self, n_qubits: usize) -> Result<()> {
        let ok = match self {
            Observable::Identity => true,
            Observable::Local(ops) => ops.len() == n_qubits,
            Observable::Dense(m) => m.dim() == 1 << n_qubits && m.is_hermitian(crate::qcore::ALGEBRA_TOL),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("observable does not act Hermitian-ly on {n_qubits} qubits")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub l: usize,
    pub value: f64,
    /// Copies consumed by the data behind the estimate.
    pub copies: usize,
    pub protocol: Protocol,
    pub k: Option<usize>,
}

/// Per-qubit products and the overall sign of a snapshot tuple.
fn tuple_product(snaps: &[&ShadowSnapshot]) -> (f64, Vec<Mat2>) {
    let n = snaps[0].n_qubits();
    let mut sign = 1.0;
    let mut per_qubit = vec![Mat2::IDENTITY; n];
    for s in snaps {
        sign *= s.sign() as f64;
        for (acc, f) in per_qubit.iter_mut().zip(s.factors()) {
            *acc = *acc * *f;
        }
    }
    (sign, per_qubit)
}

fn contract(obs: &Observable, sign: f64, per_qubit: &[Mat2]) -> f64 {
    let t: C64 = match obs {
        Observable::Identity => per_qubit.iter().fold(ONE, |acc, m| acc * m.trace()),
        Observable::Local(ops) => per_qubit.iter().zip(ops).fold(ONE, |acc, (m, o)| acc * (*o * *m).trace()),
        Observable::Dense(o) => {
            let m = gates::product(per_qubit);
            let d = o.dim();
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    acc += o[(i, j)] * m[(j, i)];
                }
            }
            acc
        }
    };
    sign * t.re
}

/// Re Tr[O · A₁ ⋯ A_m], evaluated qubit by qubit.
pub fn kernel(snapshots: &[&ShadowSnapshot], obs: &Observable) -> f64 {
    assert!(!snapshots.is_empty(), "kernel of an empty tuple");
    let (sign, per_qubit) = tuple_product(snapshots);
    contract(obs, sign, &per_qubit)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug)]
struct BatchSum {
    sums: Vec<CompensatedSum>,
    count: u64,
}

impl BatchSum {
    fn new(n: usize) -> Self {
        BatchSum { sums: vec![CompensatedSum::default(); n], count: 0 }
    }
}

/// One slot's candidates.
#[derive(Clone, Copy)]
struct Pool<'a> {
    snaps: &'a [ShadowSnapshot],
    runs: &'a [u64],
}

impl<'a> Pool<'a> {
    fn whole(set: &'a ShadowSet) -> Self {
        Pool { snaps: set.snapshots(), runs: set.provenance() }
    }

    fn block(set: &'a ShadowSet, j: usize, blocks: usize) -> Self {
        let n = set.len();
        let (lo, hi) = (j * n / blocks, (j + 1) * n / blocks);
        Pool { snaps: &set.snapshots()[lo..hi], runs: &set.provenance()[lo..hi] }
    }

    fn len(&self) -> usize {
        self.snaps.len()
    }
}

fn distinct_runs(runs: &[u64]) -> bool {
    runs.iter().enumerate().all(|(i, r)| !runs[..i].contains(r))
}

fn accumulate(pools: &[Pool], picks: &[usize], observables: &[Observable], acc: &mut BatchSum) -> bool {
    let mut runs = [0u64; 16];
    let runs = &mut runs[..picks.len()];
    for (slot, (&p, pool)) in picks.iter().zip(pools).enumerate() {
        runs[slot] = pool.runs[p];
    }
    if !distinct_runs(runs) {
        return false;
    }
    let mut snaps = [&pools[0].snaps[0]; 16];
    for (slot, (&p, pool)) in picks.iter().zip(pools).enumerate() {
        snaps[slot] = &pool.snaps[p];
    }
    let (sign, per_qubit) = tuple_product(&snaps[..picks.len()]);
    for (sum, obs) in acc.sums.iter_mut().zip(observables) {
        sum.add(contract(obs, sign, &per_qubit));
    }
    acc.count += 1;
    true
}

/// Average of the kernels over valid tuples, one value per observable.
fn tuple_average(pools: &[Pool], observables: &[Observable], opts: &EstimatorOptions) -> Result<Vec<f64>> {
    if pools.is_empty() || pools.len() > 16 {
        return Err(Error::Config(format!("tuples of {} snapshots are not supported", pools.len())));
    }
    if let Some(empty) = pools.iter().position(|p| p.len() == 0) {
        return Err(Error::InsufficientData(format!("slot {empty} has no snapshots")));
    }
    let total = pools.iter().try_fold(1u64, |acc, p| acc.checked_mul(p.len() as u64));
    let n_obs = observables.len();

    let partials: Vec<BatchSum> = match total {
        Some(total) if total <= opts.tuple_budget => {
            let batches = total.div_ceil(BATCH);
            (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut acc = BatchSum::new(n_obs);
                    let mut picks = vec![0usize; pools.len()];
                    for idx in b * BATCH..total.min((b + 1) * BATCH) {
                        let mut rest = idx;
                        for (slot, pool) in picks.iter_mut().zip(pools).rev() {
                            *slot = (rest % pool.len() as u64) as usize;
                            rest /= pool.len() as u64;
                        }
                        accumulate(pools, &picks, observables, &mut acc);
                    }
                    acc
                })
                .collect()
        }
        _ => {
            let budget = opts.tuple_budget.max(1);
            let batches = budget.div_ceil(BATCH);
            (0..batches)
                .into_par_iter()
                .map(|b| -> Result<BatchSum> {
                    let target = BATCH.min(budget - b * BATCH);
                    let mut rng = opts.stream.rng(b);
                    let mut acc = BatchSum::new(n_obs);
                    let mut picks = vec![0usize; pools.len()];
                    let max_attempts = 64 * target + 1024;
                    let mut attempts = 0;
                    while acc.count < target {
                        attempts += 1;
                        if attempts > max_attempts {
                            return Err(Error::InsufficientData(
                                "too few tuples with distinct runs to subsample".into(),
                            ));
                        }
                        for (slot, pool) in picks.iter_mut().zip(pools) {
                            *slot = rng.gen_range(0..pool.len());
                        }
                        accumulate(pools, &picks, observables, &mut acc);
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut total_acc = BatchSum::new(n_obs);
    for part in &partials {
        for (t, s) in total_acc.sums.iter_mut().zip(&part.sums) {
            t.add(s.value());
        }
        total_acc.count += part.count;
    }
    if total_acc.count == 0 {
        return Err(Error::InsufficientData("no tuple of snapshots from distinct runs".into()));
    }
    Ok(total_acc.sums.iter().map(|s| s.value() / total_acc.count as f64).collect())
}

/// Number of snapshots per tuple for degree `l` from k-copy hybrid
/// snapshots: q + r with l = q·k + r.
pub fn tuple_arity(l: usize, k: usize) -> usize {
    l / k + l % k
}

fn os_pools(set: &ShadowSet, l: usize) -> Result<Vec<Pool<'_>>> {
    if set.power() != 1 {
        return Err(Error::InvalidState("original-shadow estimators need power-1 snapshots".into()));
    }
    if l == 0 || set.len() < l {
        return Err(Error::InsufficientData(format!("{} snapshots for a degree-{l} estimator", set.len())));
    }
    Ok(vec![Pool::whole(set); l])
}

fn hs_pools<'a>(hybrid: &'a ShadowSet, plain: &'a ShadowSet, l: usize, pairing: HybridPairing) -> Result<Vec<Pool<'a>>> {
    let k = hybrid.power();
    if k < 2 || plain.power() != 1 {
        return Err(Error::InvalidState("hybrid estimators need power-k (k ≥ 2) and power-1 sets".into()));
    }
    if l == 0 {
        return Err(Error::InsufficientData("degree 0".into()));
    }
    let (q, r) = (l / k, l % k);
    if hybrid.len() < q.max(1) && q > 0 {
        return Err(Error::InsufficientData(format!("{} hybrid snapshots for q = {q}", hybrid.len())));
    }
    if q > 1 && pairing == HybridPairing::DisjointBlocks && hybrid.len() < q {
        return Err(Error::InsufficientData(format!("cannot split {} hybrid snapshots into {q} blocks", hybrid.len())));
    }
    if plain.len() < r {
        return Err(Error::InsufficientData(format!("{} plain snapshots for r = {r}", plain.len())));
    }
    let mut pools = Vec::with_capacity(q + r);
    for j in 0..q {
        pools.push(match pairing {
            HybridPairing::DisjointBlocks => Pool::block(hybrid, j, q),
            HybridPairing::OffDiagonal => Pool::whole(hybrid),
        });
    }
    pools.extend(std::iter::repeat_n(Pool::whole(plain), r));
    Ok(pools)
}

fn check_observables(observables: &[Observable], set: &ShadowSet) -> Result<()> {
    if let Some(first) = set.snapshots().first() {
        for o in observables {
            o.check(first.n_qubits())?;
        }
    }
    Ok(())
}

/// Estimates of Tr(O_i ρ^l) for several operators on the same tuples.
pub fn estimate_paired(data: &ShadowData, l: usize, observables: &[Observable], opts: &EstimatorOptions) -> Result<Vec<f64>> {
    check_observables(observables, &data.plain)?;
    let pools = match data.protocol {
        Protocol::Os => os_pools(&data.plain, l)?,
        Protocol::Hs => {
            let hybrid = data.hybrid.as_ref().ok_or_else(|| Error::InsufficientData("no hybrid snapshots".into()))?;
            hs_pools(hybrid, &data.plain, l, opts.pairing)?
        }
    };
    tuple_average(&pools, observables, opts)
}

/// P̂_L from original-shadow snapshots: mean of Tr[ρ̂₁ ⋯ ρ̂_L] over
/// ordered tuples of distinct snapshots.
pub fn estimate_moment_os(set: &ShadowSet, l: usize, opts: &EstimatorOptions) -> Result<MomentEstimate> {
    if l < 2 {
        return Err(Error::Config("moments need L ≥ 2".into()));
    }
    let value = tuple_average(&os_pools(set, l)?, &[Observable::Identity], opts)?[0];
    Ok(MomentEstimate { l, value, copies: set.len(), protocol: Protocol::Os, k: None })
}

/// P̂_L from hybrid snapshots of ρ^k and plain snapshots of ρ: mean of
/// Tr[∏ \widehat{ρ^k} ∏ ρ̂] over tuples with q hybrid and r plain entries.
pub fn estimate_moment_hs(hybrid: &ShadowSet, plain: &ShadowSet, l: usize, opts: &EstimatorOptions) -> Result<MomentEstimate> {
    if l < 2 {
        return Err(Error::Config("moments need L ≥ 2".into()));
    }
    let k = hybrid.power();
    let value = tuple_average(&hs_pools(hybrid, plain, l, opts.pairing)?, &[Observable::Identity], opts)?[0];
    let runs: std::collections::BTreeSet<u64> = hybrid.provenance().iter().copied().collect();
    Ok(MomentEstimate { l, value, copies: k * runs.len(), protocol: Protocol::Hs, k: Some(k) })
}

/// Estimate of Tr(O ρ^l) (l ≥ 1).
pub fn estimate_observable(obs: &Observable, data: &ShadowData, l: usize, opts: &EstimatorOptions) -> Result<f64> {
    Ok(estimate_paired(data, l, std::slice::from_ref(obs), opts)?[0])
}

/// How numerator and denominator of a distilled expectation share data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VdPairing {
    /// Same tuples for Tr(Oρ^L) and Tr(ρ^L).
    #[default]
    Paired,
    /// Numerator from even runs, denominator from odd runs.
    Unpaired,
}

/// Distilled expectation Tr(Oρ^L)/Tr(ρ^L).
pub fn vd_expectation(obs: &Observable, l: usize, data: &ShadowData, opts: &EstimatorOptions, pairing: VdPairing) -> Result<f64> {
    let (num, den) = match pairing {
        VdPairing::Paired => {
            let v = estimate_paired(data, l, &[obs.clone(), Observable::Identity], opts)?;
            (v[0], v[1])
        }
        VdPairing::Unpaired => {
            let even = data.filter_runs(|r| r % 2 == 0)?;
            let odd = data.filter_runs(|r| r % 2 == 1)?;
            let num = estimate_observable(obs, &even, l, opts)?;
            let den = estimate_paired(&odd, l, &[Observable::Identity], &EstimatorOptions { stream: opts.stream.child(1), ..*opts })?[0];
            (num, den)
        }
    };
    if den.abs() < MIN_DENOMINATOR {
        return Err(Error::UnresolvedDenominator(den));
    }
    Ok(num / den)
}

/// Exact expectation of the degree-`l` estimator (moment when `obs` is the
/// identity) over weighted single-run atoms such as
/// [`crate::engine::ShotEngine::atoms`]. Slots of a tuple come from
/// different runs, so they are enumerated independently.
pub fn exact_expectation(atoms: &[(f64, crate::shadows::RunRecord)], l: usize, obs: &Observable) -> Result<f64> {
    let first = atoms.first().ok_or_else(|| Error::InsufficientData("no atoms".into()))?;
    let (protocol, k) = (first.1.protocol, first.1.k);
    let mut hybrid: Vec<(f64, ShadowSnapshot)> = Vec::new();
    let mut plain: Vec<(f64, ShadowSnapshot)> = Vec::new();
    for (w, rec) in atoms {
        let (h, p) = rec.snapshots()?;
        if let Some(h) = h {
            hybrid.push((*w, h));
        }
        let share = *w / p.len() as f64;
        plain.extend(p.into_iter().map(|s| (share, s)));
    }
    let slots: Vec<&[(f64, ShadowSnapshot)]> = match protocol {
        Protocol::Os => vec![&plain[..]; l],
        Protocol::Hs => {
            let mut v = vec![&hybrid[..]; l / k];
            v.extend(std::iter::repeat_n(&plain[..], l % k));
            v
        }
    };
    if slots.is_empty() {
        return Err(Error::Config("degree 0".into()));
    }
    let mut picks = vec![0usize; slots.len()];
    let mut sum = CompensatedSum::default();
    loop {
        let snaps: Vec<&ShadowSnapshot> = picks.iter().zip(&slots).map(|(&i, s)| &s[i].1).collect();
        let w: f64 = picks.iter().zip(&slots).map(|(&i, s)| s[i].0).product();
        sum.add(w * kernel(&snaps, obs));
        let mut slot = slots.len();
        loop {
            if slot == 0 {
                return Ok(sum.value());
            }
            slot -= 1;
            picks[slot] += 1;
            if picks[slot] < slots[slot].len() {
                break;
            }
            picks[slot] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::c;
    use crate::shadows::{inverse_map, PauliSetting};
    use proptest::prelude::*;

    fn rho_mat() -> Mat2 {
        Mat2::real(0.5, 0.4, 0.4, 0.5)
    }

    fn synthetic(power: usize, n: usize, m: Mat2) -> ShadowSet {
        ShadowSet::from_snapshots(power, (0..n).map(|i| (ShadowSnapshot::from_factors(power, 1, vec![m]).unwrap(), i as u64))).unwrap()
    }

    #[test]
    fn degenerate_sets_give_exact_moments() {
        let set = synthetic(1, 6, rho_mat());
        let opts = EstimatorOptions::default();
        for (l, truth) in [(2, 0.82), (3, 0.730), (4, 0.6562)] {
            let est = estimate_moment_os(&set, l, &opts).unwrap();
            assert!((est.value - truth).abs() < 1e-12, "L={l}");
            assert_eq!(est.copies, 6);
        }
    }

    #[test]
    fn two_snapshot_u_statistic() {
        let a = inverse_map(&PauliSetting::parse("X").unwrap(), &[0]).unwrap();
        let b = inverse_map(&PauliSetting::parse("Y").unwrap(), &[1]).unwrap();
        let set = ShadowSet::from_snapshots(1, [(a.clone(), 0), (b.clone(), 1)]).unwrap();
        let est = estimate_moment_os(&set, 2, &EstimatorOptions::default()).unwrap();
        let expect = (kernel(&[&a, &b], &Observable::Identity) + kernel(&[&b, &a], &Observable::Identity)) / 2.0;
        assert!((est.value - expect).abs() < 1e-15);
        let dense = a.to_dense().matmul(&b.to_dense()).trace().re;
        assert!((dense - kernel(&[&a, &b], &Observable::Identity)).abs() < 1e-14);
    }

    #[test]
    fn insufficient_data() {
        let set = synthetic(1, 2, rho_mat());
        assert!(matches!(estimate_moment_os(&set, 3, &EstimatorOptions::default()), Err(Error::InsufficientData(_))));
        let hybrid = synthetic(2, 0, rho_mat());
        assert!(estimate_moment_hs(&hybrid, &set, 2, &EstimatorOptions::default()).is_err());
    }

    #[test]
    fn hybrid_moments_on_synthetic_sets() {
        let r2 = rho_mat() * rho_mat();
        let hybrid = synthetic(2, 4, r2);
        // plain runs overlap the hybrid runs
        let plain = synthetic(1, 4, rho_mat());
        let opts = EstimatorOptions::default();
        for (l, truth) in [(2, 0.82), (3, 0.730), (4, 0.6562)] {
            for pairing in [HybridPairing::DisjointBlocks, HybridPairing::OffDiagonal] {
                let o = EstimatorOptions { pairing, ..opts };
                let est = estimate_moment_hs(&hybrid, &plain, l, &o).unwrap();
                assert!((est.value - truth).abs() < 1e-12);
                assert_eq!(est.copies, 8);
            }
        }
    }

    #[test]
    fn same_run_pairs_are_excluded() {
        // one run only: a hybrid and a plain snapshot that must never pair
        let hybrid = synthetic(2, 1, rho_mat());
        let plain = synthetic(1, 1, rho_mat());
        assert!(matches!(
            estimate_moment_hs(&hybrid, &plain, 3, &EstimatorOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn observable_identity_matches_moment() {
        let set = synthetic(1, 5, rho_mat());
        let data = ShadowData { protocol: Protocol::Os, k: 1, hybrid: None, plain: set.clone(), records: vec![] };
        let opts = EstimatorOptions::default();
        let m = estimate_moment_os(&set, 3, &opts).unwrap().value;
        let o = estimate_observable(&Observable::Identity, &data, 3, &opts).unwrap();
        assert!((m - o).abs() < 1e-15);
        let x = estimate_observable(&Observable::pauli_x(), &data, 3, &opts).unwrap();
        assert!((x - 0.728).abs() < 1e-12);
        let dense = Observable::Dense(gates::pauli_x().to_matrix());
        let xd = estimate_observable(&dense, &data, 3, &opts).unwrap();
        assert!((x - xd).abs() < 1e-14);
        let vd = vd_expectation(&Observable::pauli_x(), 3, &data, &opts, VdPairing::Paired).unwrap();
        assert!((vd - 0.728 / 0.730).abs() < 1e-12);
    }

    #[test]
    fn unresolved_denominator() {
        let zero = Mat2::real(0.0, 0.0, 0.0, 0.0);
        let set = synthetic(1, 4, zero);
        let data = ShadowData { protocol: Protocol::Os, k: 1, hybrid: None, plain: set, records: vec![] };
        let r = vd_expectation(&Observable::pauli_x(), 2, &data, &EstimatorOptions::default(), VdPairing::Paired);
        assert!(matches!(r, Err(Error::UnresolvedDenominator(_))));
    }

    #[test]
    fn arity_is_reduced_for_hybrid_tuples() {
        for k in 2..=4 {
            for l in (k + 1)..=8 {
                assert!(tuple_arity(l, k) < l, "L={l} k={k}");
            }
        }
        assert_eq!(tuple_arity(4, 2), 2);
        assert_eq!(tuple_arity(3, 2), 2);
    }

    #[test]
    fn subsampling_is_deterministic_and_close() {
        let settings = ["X", "Y", "Z"];
        let snaps: Vec<_> = (0..40)
            .map(|i| (inverse_map(&PauliSetting::parse(settings[i % 3]).unwrap(), &[(i / 3 % 2) as u8]).unwrap(), i as u64))
            .collect();
        let set = ShadowSet::from_snapshots(1, snaps).unwrap();
        let full = estimate_moment_os(&set, 2, &EstimatorOptions { tuple_budget: u64::MAX, ..Default::default() }).unwrap();
        let sub = EstimatorOptions { tuple_budget: 200_000, stream: SeedStream::new(9), ..Default::default() };
        // 40² = 1600 candidates fit, so still exhaustive
        assert_eq!(estimate_moment_os(&set, 2, &sub).unwrap().value, full.value);
        let small = EstimatorOptions { tuple_budget: 1000, stream: SeedStream::new(9), ..Default::default() };
        let a = estimate_moment_os(&set, 2, &small).unwrap().value;
        let b = estimate_moment_os(&set, 2, &small).unwrap().value;
        assert_eq!(a, b);
        assert!((a - full.value).abs() < 0.5);
    }

    fn arb_snapshot() -> impl Strategy<Value = ShadowSnapshot> {
        (0usize..3, 0u8..2, 0usize..3, 0u8..2).prop_map(|(p0, b0, p1, b1)| {
            let setting = PauliSetting(vec![crate::shadows::Pauli::ALL[p0], crate::shadows::Pauli::ALL[p1]]);
            inverse_map(&setting, &[b0, b1]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn u_statistic_is_permutation_invariant(snaps in prop::collection::vec(arb_snapshot(), 4..8), l in 2usize..4, rot in 0usize..8) {
            let items: Vec<_> = snaps.iter().cloned().enumerate().map(|(i, s)| (s, i as u64)).collect();
            let mut permuted = items.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.swap(0, len - 1);
            let opts = EstimatorOptions { tuple_budget: u64::MAX, ..Default::default() };
            let a = estimate_moment_os(&ShadowSet::from_snapshots(1, items).unwrap(), l, &opts).unwrap().value;
            let b = estimate_moment_os(&ShadowSet::from_snapshots(1, permuted).unwrap(), l, &opts).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn factorwise_kernel_matches_dense(snaps in prop::collection::vec(arb_snapshot(), 1..5)) {
            let refs: Vec<&ShadowSnapshot> = snaps.iter().collect();
            let mut dense = ComplexMatrix::identity(4);
            for s in &snaps {
                dense = dense.matmul(&s.to_dense());
            }
            let z = gates::product(&[gates::pauli_z(), gates::pauli_x()]);
            let expect = z.matmul(&dense).trace().re;
            let got = kernel(&refs, &Observable::Local(vec![gates::pauli_z(), gates::pauli_x()]));
            prop_assert!((expect - got).abs() < 1e-9);
            prop_assert!((dense.trace().re - kernel(&refs, &Observable::Identity)).abs() < 1e-9);
            let _ = c(0.0, 0.0);
        }
    }
}
