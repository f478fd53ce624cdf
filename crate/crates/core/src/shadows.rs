//! Local-Pauli classical shadows: settings, run records, snapshots and the
//! inverse measurement channel.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, gates, ComplexMatrix, Mat2, ONE};

/// Measurement basis for one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(&self) -> Mat2 {
        match self {
            Pauli::X => gates::pauli_x(),
            Pauli::Y => gates::pauli_y(),
            Pauli::Z => gates::pauli_z(),
        }
    }

    /// U with U·P·U† = Z, so that outcome bit 0 is the +1 eigenvalue.
    pub fn basis_rotation(&self) -> Mat2 {
        match self {
            Pauli::X => gates::hadamard(),
            Pauli::Y => gates::hadamard() * gates::s_dagger(),
            Pauli::Z => Mat2::IDENTITY,
        }
    }

    pub fn letter(&self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_letter(ch: char) -> Result<Pauli> {
        match ch {
            'X' | 'x' => Ok(Pauli::X),
            'Y' | 'y' => Ok(Pauli::Y),
            'Z' | 'z' => Ok(Pauli::Z),
            other => Err(Error::Config(format!("'{other}' is not a Pauli basis"))),
        }
    }

    fn index(&self) -> usize {
        match self {
            Pauli::X => 0,
            Pauli::Y => 1,
            Pauli::Z => 2,
        }
    }
}

/// One Pauli basis per qubit of a register.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliSetting(pub Vec<Pauli>);

impl PauliSetting {
    pub fn uniform<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        PauliSetting((0..n_qubits).map(|_| Pauli::ALL[rng.gen_range(0..3)]).collect())
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars().map(Pauli::from_letter).collect::<Result<Vec<_>>>().map(PauliSetting)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rotations(&self) -> Vec<Mat2> {
        self.0.iter().map(Pauli::basis_rotation).collect()
    }

    /// Base-3 index, qubit 0 most significant.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, p| acc * 3 + p.index())
    }

    pub fn from_index(mut index: usize, n_qubits: usize) -> Self {
        let mut v = vec![Pauli::Z; n_qubits];
        for slot in v.iter_mut().rev() {
            *slot = Pauli::ALL[index % 3];
            index /= 3;
        }
        PauliSetting(v)
    }
}

impl fmt::Display for PauliSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Original shadows: one copy per run.
    Os,
    /// Hybrid shadows: controlled-SHIFT on k copies per run.
    Hs,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Os => "os",
            Protocol::Hs => "hs",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "os" => Ok(Protocol::Os),
            "hs" => Ok(Protocol::Hs),
            other => Err(Error::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Everything one experimental run produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub run: u64,
    pub protocol: Protocol,
    /// Copies per hybrid run; 1 for original shadows.
    pub k: usize,
    /// One setting per measured copy.
    pub settings: Vec<PauliSetting>,
    /// One bit per qubit per copy.
    pub bits: Vec<Vec<u8>>,
    /// X-basis control outcome; present only for hybrid runs.
    pub control_bit: Option<u8>,
}

impl RunRecord {
    pub fn copies_consumed(&self) -> usize {
        match self.protocol {
            Protocol::Os => 1,
            Protocol::Hs => self.k,
        }
    }

    pub fn sign(&self) -> i8 {
        match self.control_bit {
            Some(1) => -1,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expect_copies = self.copies_consumed();
        let bad = |msg: String| Err(Error::InvalidState(format!("run {}: {msg}", self.run)));
        if self.k == 0 || (self.protocol == Protocol::Os && self.k != 1) {
            return bad(format!("k = {} is invalid for {}", self.k, self.protocol.name()));
        }
        if self.settings.len() != expect_copies || self.bits.len() != expect_copies {
            return bad(format!("expected {expect_copies} measured copies"));
        }
        if self.control_bit.is_some() != (self.protocol == Protocol::Hs) {
            return bad("control bit must be present exactly for hybrid runs".into());
        }
        if self.control_bit.is_some_and(|b| b > 1) || self.bits.iter().flatten().any(|&b| b > 1) {
            return bad("bits must be 0 or 1".into());
        }
        for (s, b) in self.settings.iter().zip(&self.bits) {
            if s.len() != b.len() {
                return bad("setting and outcome lengths differ".into());
            }
        }
        Ok(())
    }

    /// Hybrid snapshot of ρ^k (from copy 0) and one plain snapshot of ρ per
    /// measured copy. Original-shadow runs have no hybrid snapshot.
    pub fn snapshots(&self) -> Result<(Option<ShadowSnapshot>, Vec<ShadowSnapshot>)> {
        self.validate()?;
        let plain = self
            .settings
            .iter()
            .zip(&self.bits)
            .map(|(s, b)| inverse_map(s, b))
            .collect::<Result<Vec<_>>>()?;
        let hybrid = match self.protocol {
            Protocol::Os => None,
            Protocol::Hs => Some(plain[0].clone().with_power(self.k, self.sign())),
        };
        Ok((hybrid, plain))
    }
}

/// Signed tensor-product estimator of ρ^power, stored per qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowSnapshot {
    power: usize,
    sign: i8,
    factors: Vec<Mat2>,
}

impl ShadowSnapshot {
    pub fn power(&self) -> usize {
        self.power
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn factors(&self) -> &[Mat2] {
        &self.factors
    }

    pub fn n_qubits(&self) -> usize {
        self.factors.len()
    }

    fn with_power(mut self, power: usize, sign: i8) -> Self {
        self.power = power;
        self.sign = sign;
        self
    }

    /// Assemble a snapshot directly from factors (synthetic sets, tests).
    pub fn from_factors(power: usize, sign: i8, factors: Vec<Mat2>) -> Result<Self> {
        if power == 0 || !(sign == 1 || sign == -1) || factors.is_empty() {
            return Err(Error::InvalidState("snapshot needs power ≥ 1, sign ±1 and a factor".into()));
        }
        Ok(ShadowSnapshot { power, sign, factors })
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        gates::product(&self.factors).scale(c(self.sign as f64, 0.0))
    }

    /// Tr of the full snapshot, computed factor-wise.
    pub fn trace(&self) -> f64 {
        let t = self.factors.iter().fold(ONE, |acc, f| acc * f.trace());
        self.sign as f64 * t.re
    }
}

/// Per-qubit inverse channel 3·U†|b⟩⟨b|U − I, i.e. (I + 3(−1)^b P)/2.
pub fn inverse_factor(basis: Pauli, bit: u8) -> Mat2 {
    let s = if bit == 0 { 1.5 } else { -1.5 };
    let p = basis.matrix().scale(c(s, 0.0));
    Mat2::IDENTITY.scale(c(0.5, 0.0)) + p
}

/// Power-1 snapshot from one measured register.
pub fn inverse_map(setting: &PauliSetting, bits: &[u8]) -> Result<ShadowSnapshot> {
    if setting.len() != bits.len() || bits.is_empty() {
        return Err(Error::Dimension(format!("{} bases for {} outcome bits", setting.len(), bits.len())));
    }
    let factors = setting.0.iter().zip(bits).map(|(&p, &b)| inverse_factor(p, b)).collect();
    Ok(ShadowSnapshot { power: 1, sign: 1, factors })
}

/// Snapshots of equal power with the run that produced each one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShadowSet {
    power: usize,
    snapshots: Vec<ShadowSnapshot>,
    provenance: Vec<u64>,
}

impl ShadowSet {
    pub fn new(power: usize) -> Self {
        ShadowSet { power, snapshots: Vec::new(), provenance: Vec::new() }
    }

    pub fn push(&mut self, snapshot: ShadowSnapshot, run: u64) -> Result<()> {
        if snapshot.power != self.power {
            return Err(Error::InvalidState(format!(
                "snapshot of power {} in a set of power {}",
                snapshot.power, self.power
            )));
        }
        self.snapshots.push(snapshot);
        self.provenance.push(run);
        Ok(())
    }

    pub fn from_snapshots(power: usize, items: impl IntoIterator<Item = (ShadowSnapshot, u64)>) -> Result<Self> {
        let mut set = ShadowSet::new(power);
        for (s, run) in items {
            set.push(s, run)?;
        }
        Ok(set)
    }

    pub fn power(&self) -> usize {
        self.power
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[ShadowSnapshot] {
        &self.snapshots
    }

    pub fn provenance(&self) -> &[u64] {
        &self.provenance
    }

    /// Keep the entries whose run satisfies `keep`.
    pub fn filter_runs(&self, keep: impl Fn(u64) -> bool) -> ShadowSet {
        let mut out = ShadowSet::new(self.power);
        for (s, &run) in self.snapshots.iter().zip(&self.provenance) {
            if keep(run) {
                out.snapshots.push(s.clone());
                out.provenance.push(run);
            }
        }
        out
    }

    /// Element-wise mean of the dense snapshots.
    pub fn mean_dense(&self) -> Option<ComplexMatrix> {
        let first = self.snapshots.first()?;
        let mut acc = ComplexMatrix::zeros(first.to_dense().dim());
        for s in &self.snapshots {
            acc = &acc + &s.to_dense();
        }
        Some(acc.scale(c(1.0 / self.len() as f64, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{born_probabilities, DensityMatrix};

    fn close(a: &Mat2, b: &Mat2) -> bool {
        a.max_abs_diff(b) < 1e-14
    }

    #[test]
    fn inverse_map_examples() {
        assert!(close(&inverse_factor(Pauli::Z, 0), &Mat2::real(2.0, 0.0, 0.0, -1.0)));
        assert!(close(&inverse_factor(Pauli::X, 0), &Mat2::real(0.5, 1.5, 1.5, 0.5)));
        // 3 U†|b⟩⟨b|U − I computed the long way
        for p in Pauli::ALL {
            for b in 0..2u8 {
                let u = p.basis_rotation();
                let ket = if b == 0 { [ONE, c(0.0, 0.0)] } else { [c(0.0, 0.0), ONE] };
                let v = u.adjoint().apply(ket);
                let proj = Mat2::new(v[0] * v[0].conj(), v[0] * v[1].conj(), v[1] * v[0].conj(), v[1] * v[1].conj());
                let expect = proj.scale(c(3.0, 0.0)) + Mat2::IDENTITY.scale(c(-1.0, 0.0));
                assert!(close(&inverse_factor(p, b), &expect), "{p:?} {b}");
            }
        }
    }

    #[test]
    fn exact_average_of_inverse_map_is_identity_channel() {
        let rho = DensityMatrix::new(
            ComplexMatrix::from_vec(2, vec![c(0.7, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.3, 0.0)]).unwrap(),
        )
        .unwrap();
        let mut avg = Mat2::real(0.0, 0.0, 0.0, 0.0);
        for p in Pauli::ALL {
            let probs = born_probabilities(&rho, &p.basis_rotation().to_matrix()).unwrap();
            for b in 0..2u8 {
                avg = avg + inverse_factor(p, b).scale(c(probs[b as usize] / 3.0, 0.0));
            }
        }
        assert!(avg.max_abs_diff(&Mat2::from_matrix(rho.matrix()).unwrap()) < 1e-14);
    }

    #[test]
    fn factor_spectrum_and_traces() {
        for p in Pauli::ALL {
            for b in 0..2u8 {
                let f = inverse_factor(p, b);
                // eigenvalues {2, −1}: trace 1, determinant −2
                assert!((f.trace() - ONE).norm() < 1e-14);
                let det = f.0[0] * f.0[3] - f.0[1] * f.0[2];
                assert!((det - c(-2.0, 0.0)).norm() < 1e-14);
            }
        }
        let setting = PauliSetting::parse("XYZ").unwrap();
        let snap = inverse_map(&setting, &[0, 1, 1]).unwrap();
        assert!((snap.trace() - 1.0).abs() < 1e-14);
        let neg = snap.clone().with_power(2, -1);
        assert!((neg.trace() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn setting_index_roundtrip() {
        for i in 0..27 {
            assert_eq!(PauliSetting::from_index(i, 3).index(), i);
        }
        assert_eq!(PauliSetting::from_index(0, 2).to_string(), "XX");
    }

    #[test]
    fn record_validation() {
        let rec = RunRecord {
            run: 0,
            protocol: Protocol::Hs,
            k: 2,
            settings: vec![PauliSetting::parse("X").unwrap(), PauliSetting::parse("Z").unwrap()],
            bits: vec![vec![0], vec![1]],
            control_bit: Some(1),
        };
        let (hybrid, plain) = rec.snapshots().unwrap();
        let hybrid = hybrid.unwrap();
        assert_eq!((hybrid.power(), hybrid.sign()), (2, -1));
        assert_eq!(plain.len(), 2);
        assert!(plain.iter().all(|s| s.sign() == 1 && s.power() == 1));
        let mut missing = rec.clone();
        missing.control_bit = None;
        assert!(missing.validate().is_err());
        let mut short = rec;
        short.bits.pop();
        assert!(short.validate().is_err());
    }

    #[test]
    fn sets_are_homogeneous() {
        let s = inverse_map(&PauliSetting::parse("Z").unwrap(), &[0]).unwrap();
        let mut set = ShadowSet::new(2);
        assert!(set.push(s.clone(), 0).is_err());
        assert!(set.push(s.with_power(2, 1), 0).is_ok());
    }
}
