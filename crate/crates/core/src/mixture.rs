//! Convex mixtures of pure product states.
//!
//! The two-copy input used in the experiment is prepared shot by shot as a
//! random product state; a [`ProductMixture`] records those states and their
//! probabilities and can be assembled into a density matrix or sampled
//! term by term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, kron_vec, DensityMatrix, C64, ONE, ZERO};

/// Single-qubit pure states addressable by a one-character label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QubitState {
    Zero,
    One,
    Plus,
    Minus,
    /// (|0⟩ + i|1⟩)/√2
    PlusI,
    /// (|0⟩ − i|1⟩)/√2
    MinusI,
}

impl QubitState {
    pub fn from_char(ch: char) -> Result<Self> {
        Ok(match ch {
            '0' => QubitState::Zero,
            '1' => QubitState::One,
            '+' => QubitState::Plus,
            '-' => QubitState::Minus,
            'r' | 'R' => QubitState::PlusI,
            'l' | 'L' => QubitState::MinusI,
            other => return Err(Error::Config(format!("unknown single-qubit state label '{other}'"))),
        })
    }

    pub fn label(&self) -> char {
        match self {
            QubitState::Zero => '0',
            QubitState::One => '1',
            QubitState::Plus => '+',
            QubitState::Minus => '-',
            QubitState::PlusI => 'r',
            QubitState::MinusI => 'l',
        }
    }

    pub fn vector(&self) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            QubitState::Zero => [ONE, ZERO],
            QubitState::One => [ZERO, ONE],
            QubitState::Plus => [c(s, 0.0), c(s, 0.0)],
            QubitState::Minus => [c(s, 0.0), c(-s, 0.0)],
            QubitState::PlusI => [c(s, 0.0), c(0.0, s)],
            QubitState::MinusI => [c(s, 0.0), c(0.0, -s)],
        }
    }
}

/// Pure product state, qubit 0 first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProductState(pub Vec<QubitState>);

impl ProductState {
    pub fn parse(label: &str) -> Result<Self> {
        let qubits = label.chars().map(QubitState::from_char).collect::<Result<Vec<_>>>()?;
        if qubits.is_empty() {
            return Err(Error::Config("empty product-state label".into()));
        }
        Ok(ProductState(qubits))
    }

    pub fn label(&self) -> String {
        self.0.iter().map(QubitState::label).collect()
    }

    pub fn vector(&self) -> Vec<C64> {
        self.0.iter().fold(vec![ONE], |acc, q| kron_vec(&acc, &q.vector()))
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::pure(&self.vector()).expect("product of normalised qubits is normalised")
    }
}

/// Σ p_t |ψ_t⟩⟨ψ_t| over product states spanning `registers` copies of a
/// `qubits_per_register`-qubit system.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMixture {
    qubits_per_register: usize,
    registers: usize,
    terms: Vec<(f64, ProductState)>,
}

impl ProductMixture {
    pub fn new(terms: Vec<(f64, ProductState)>, qubits_per_register: usize) -> Result<Self> {
        let width = terms.first().map(|t| t.1 .0.len()).ok_or_else(|| Error::Config("mixture has no terms".into()))?;
        if qubits_per_register == 0 || width % qubits_per_register != 0 {
            return Err(Error::Config(format!(
                "labels of {width} qubits do not split into registers of {qubits_per_register}"
            )));
        }
        let mut total = 0.0;
        for (p, state) in &terms {
            if state.0.len() != width {
                return Err(Error::Config("mixture terms have different widths".into()));
            }
            if !(*p >= 0.0) {
                return Err(Error::Config(format!("negative probability {p} for |{}⟩", state.label())));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture probabilities sum to {total}, not 1")));
        }
        Ok(ProductMixture { qubits_per_register, registers: width / qubits_per_register, terms })
    }

    /// Parses `[("++", 0.64), ("+1", 0.08), …]`.
    pub fn from_labels(terms: &[(&str, f64)], qubits_per_register: usize) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(label, p)| Ok((*p, ProductState::parse(label)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parsed, qubits_per_register)
    }

    /// The nine-term preparation of ρ⊗ρ for ρ = 0.8|+⟩⟨+| + 0.1·I used in
    /// the moment and distillation experiments.
    pub fn noisy_plus_two_copy() -> Self {
        Self::from_labels(
            &[
                ("++", 0.64),
                ("+1", 0.08),
                ("+0", 0.08),
                ("1+", 0.08),
                ("11", 0.01),
                ("10", 0.01),
                ("0+", 0.08),
                ("01", 0.01),
                ("00", 0.01),
            ],
            1,
        )
        .expect("static mixture is valid")
    }

    pub fn qubits_per_register(&self) -> usize {
        self.qubits_per_register
    }

    pub fn registers(&self) -> usize {
        self.registers
    }

    pub fn terms(&self) -> &[(f64, ProductState)] {
        &self.terms
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.0).collect()
    }

    /// Assembled density matrix over all registers.
    pub fn density(&self) -> Result<DensityMatrix> {
        let parts: Vec<(f64, DensityMatrix)> = self.terms.iter().map(|(p, s)| (*p, s.density())).collect();
        DensityMatrix::mixture(&parts)
    }

    /// Mixture restricted to one register; identical labels are merged.
    pub fn register_marginal(&self, register: usize) -> Result<ProductMixture> {
        if register >= self.registers {
            return Err(Error::Config(format!("register {register} of {}", self.registers)));
        }
        let q = self.qubits_per_register;
        let mut merged: Vec<(f64, ProductState)> = Vec::new();
        for (p, state) in &self.terms {
            let part = ProductState(state.0[register * q..(register + 1) * q].to_vec());
            match merged.iter_mut().find(|(_, s)| *s == part) {
                Some(entry) => entry.0 += p,
                None => merged.push((*p, part)),
            }
        }
        ProductMixture::new(merged, q)
    }

    /// Single-copy state: the marginal on register 0.
    pub fn single_copy(&self) -> Result<DensityMatrix> {
        self.register_marginal(0)?.density()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::ComplexMatrix;

    #[test]
    fn two_copy_preparation_reproduces_noisy_plus() {
        let mix = ProductMixture::noisy_plus_two_copy();
        assert_eq!(mix.registers(), 2);
        let joint = mix.density().unwrap();
        let rho = ComplexMatrix::from_real(2, &[0.5, 0.4, 0.4, 0.5]).unwrap();
        assert!(joint.marginal(&[0]).unwrap().matrix().max_abs_diff(&rho) < 1e-12);
        assert!(joint.marginal(&[1]).unwrap().matrix().max_abs_diff(&rho) < 1e-12);
        // the nine-term mixture is exactly ρ⊗ρ
        let rr = rho.kron(&rho);
        assert!(joint.matrix().max_abs_diff(&rr) < 1e-12);
        assert!(mix.single_copy().unwrap().matrix().max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn trivial_mixtures() {
        let zero = ProductMixture::from_labels(&[("0", 1.0)], 1).unwrap().density().unwrap();
        assert!(zero.matrix().max_abs_diff(&ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, 0.0]).unwrap()) < 1e-15);
        let mixed = ProductMixture::from_labels(&[("0", 0.5), ("1", 0.5)], 1).unwrap().density().unwrap();
        assert!(mixed.matrix().max_abs_diff(DensityMatrix::maximally_mixed(1).matrix()) < 1e-15);
    }

    #[test]
    fn invalid_mixtures_rejected() {
        assert!(ProductMixture::from_labels(&[("0", 0.5), ("1", 0.4)], 1).is_err());
        assert!(ProductMixture::from_labels(&[("0", 1.2), ("1", -0.2)], 1).is_err());
        assert!(ProductMixture::from_labels(&[("0", 0.5), ("11", 0.5)], 1).is_err());
        assert!(ProductMixture::from_labels(&[("x", 1.0)], 1).is_err());
        assert!(ProductMixture::from_labels(&[("000", 1.0)], 2).is_err());
    }
}
