//! Exact unbiasedness of every estimator by enumerating all measurement
//! atoms with their Born weights.

use hshadow::engine::{ShotEngine, StateSource};
use hshadow::estimators::{exact_expectation, Observable};
use hshadow::mixture::ProductMixture;
use hshadow::qcore::{gates, ComplexMatrix, DensityMatrix, NoiseChannel};
use hshadow::shadows::Protocol;

fn noisy_plus() -> DensityMatrix {
    DensityMatrix::new(ComplexMatrix::from_real(2, &[0.5, 0.4, 0.4, 0.5]).unwrap()).unwrap()
}

fn check(source: &StateSource, rho: &DensityMatrix) {
    let x = gates::pauli_x().to_matrix();
    for protocol in [Protocol::Os, Protocol::Hs] {
        let engine = ShotEngine::new(source, protocol, 2, NoiseChannel::None).unwrap();
        let atoms = engine.atoms().unwrap();
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for l in 1..=4 {
            let p = exact_expectation(&atoms, l, &Observable::Identity).unwrap();
            let o = exact_expectation(&atoms, l, &Observable::pauli_x()).unwrap();
            assert!((p - rho.moment(l)).abs() < 1e-12, "{protocol:?} P_{l}: {p}");
            assert!((o - rho.observable_moment(&x, l)).abs() < 1e-12, "{protocol:?} X_{l}: {o}");
        }
    }
}

#[test]
fn estimators_are_exactly_unbiased_for_explicit_state() {
    let rho = noisy_plus();
    check(&StateSource::Exact(rho.clone()), &rho);
}

#[test]
fn estimators_are_exactly_unbiased_for_sampled_mixture() {
    check(&StateSource::Mixture(ProductMixture::noisy_plus_two_copy()), &noisy_plus());
}

#[test]
fn two_qubit_state_is_unbiased() {
    let psi = [0.6, 0.0, 0.0, 0.8].map(|v| hshadow::qcore::c(v, 0.0));
    let pure = DensityMatrix::pure(&psi).unwrap();
    let rho = DensityMatrix::mixture(&[(0.7, pure), (0.3, DensityMatrix::maximally_mixed(2))]).unwrap();
    let engine = ShotEngine::new(&StateSource::Exact(rho.clone()), Protocol::Hs, 2, NoiseChannel::None).unwrap();
    let atoms = engine.atoms().unwrap();
    for l in 2..=3 {
        let p = exact_expectation(&atoms, l, &Observable::Identity).unwrap();
        assert!((p - rho.moment(l)).abs() < 1e-12, "P_{l}: {p} vs {}", rho.moment(l));
    }
}
