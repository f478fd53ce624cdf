//! Benchmarks for the three-qubit controlled-SWAP (Fredkin) gate.
//!
//! Inputs are prepared and analysed with half- and quarter-wave plates;
//! only the net polarization unitaries are modelled. Qubit order is
//! |c t₁ t₂⟩ throughout.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, controlled_shift, gates, kron_vec, ComplexMatrix, DensityMatrix, Mat2, NoiseChannel, C64, ONE, ZERO};

/// Column-sum slack accepted for published tables (entries are rounded).
pub const INGEST_SLACK: f64 = 0.02;
/// Column-sum slack for simulated tables.
pub const SIMULATED_SLACK: f64 = 1e-10;
/// Round-off allowed on probabilities and correlators.
const PROB_SLACK: f64 = 1e-12;

/// Half-wave plate with fast axis at `theta_deg`, in the (H, V) basis.
pub fn hwp(theta_deg: f64) -> Mat2 {
    let t = 2.0 * theta_deg.to_radians();
    Mat2::real(-t.cos(), -t.sin(), -t.sin(), t.cos())
}

/// Quarter-wave plate with fast axis at `zeta_deg`, in the (H, V) basis.
pub fn qwp(zeta_deg: f64) -> Mat2 {
    let z = 2.0 * zeta_deg.to_radians();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat2::new(c(s, s * z.cos()), c(0.0, s * z.sin()), c(0.0, s * z.sin()), c(s, -s * z.cos()))
}

/// Polarization states.
pub fn horizontal() -> [C64; 2] {
    [ONE, ZERO]
}

pub fn vertical() -> [C64; 2] {
    [ZERO, ONE]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparationAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

/// State vector prepared by the three preparation plates: the control is
/// cos2θ₃|0⟩ + sin2θ₃|1⟩ (|V⟩ ↦ 0, |H⟩ ↦ 1), t₁ = cos2θ₁|0⟩ + sin2θ₁|1⟩,
/// t₂ = cos2θ₂|0⟩ + sin2θ₂|1⟩.
pub fn prepare_vector(angles: &PreparationAngles) -> Vec<C64> {
    let q = |deg: f64| {
        let t = 2.0 * deg.to_radians();
        [c(t.cos(), 0.0), c(t.sin(), 0.0)]
    };
    let ct1 = kron_vec(&q(angles.theta3), &q(angles.theta1));
    kron_vec(&ct1, &q(angles.theta2))
}

pub fn prepare_input(angles: &PreparationAngles) -> DensityMatrix {
    DensityMatrix::pure(&prepare_vector(angles)).expect("product of unit vectors is normalised")
}

/// The ideal gate: swap t₁ and t₂ when the control is 1.
pub fn fredkin() -> ComplexMatrix {
    controlled_shift(2, 1).expect("three qubits fit")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzedQubit {
    Control,
    Target1,
    Target2,
}

/// Physical polarization of a Pauli eigenstate label at one analyzer.
///
/// Z labels are positional (first = logical 0): the control and t₂ carry
/// logical 0 on |H⟩, t₁ on |V⟩. X and Y labels are polarization states,
/// |±⟩ = (|H⟩ ± |V⟩)/√2 and |R⟩, |L⟩ = (|H⟩ ± i|V⟩)/√2.
pub fn analyzer_target(qubit: AnalyzedQubit, label: &str) -> Result<[C64; 2]> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let logical = |bit: u8| match (qubit, bit) {
        (AnalyzedQubit::Target1, 0) | (AnalyzedQubit::Control, 1) | (AnalyzedQubit::Target2, 1) => vertical(),
        _ => horizontal(),
    };
    Ok(match (qubit, label) {
        (AnalyzedQubit::Control, "V") | (_, "0") => logical(0),
        (AnalyzedQubit::Control, "H") | (_, "1") => logical(1),
        (_, "+") => [c(s, 0.0), c(s, 0.0)],
        (_, "-") => [c(s, 0.0), c(-s, 0.0)],
        (_, "R") => [c(s, 0.0), c(0.0, s)],
        (_, "L") => [c(s, 0.0), c(0.0, -s)],
        _ => return Err(Error::Config(format!("unknown analyzer label '{label}' for {qubit:?}"))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub hwp: f64,
    pub qwp: f64,
}

impl AnalyzerSetting {
    /// The HWP acts first, then the QWP; a polarizer passes |H⟩.
    pub fn unitary(&self) -> Mat2 {
        qwp(self.qwp) * hwp(self.hwp)
    }

    pub fn success_probability(&self, polarization: [C64; 2]) -> f64 {
        self.unitary().apply(polarization)[0].norm_sqr()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementCheck {
    pub qubit: AnalyzedQubit,
    pub label: String,
    pub setting: AnalyzerSetting,
    pub success: f64,
    pub passed: bool,
}

impl MeasurementCheck {
    pub fn deficit(&self) -> f64 {
        1.0 - self.success
    }
}

/// Whether the analyzer maps the labelled state onto |H⟩ (within 1e-10).
pub fn measurement_projector(qubit: AnalyzedQubit, label: &str, setting: AnalyzerSetting) -> Result<MeasurementCheck> {
    let success = setting.success_probability(analyzer_target(qubit, label)?);
    Ok(MeasurementCheck {
        qubit,
        label: label.to_string(),
        setting,
        success,
        passed: (1.0 - success).abs() < crate::qcore::ALGEBRA_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparationEntry {
    pub label: String,
    #[serde(flatten)]
    pub angles: PreparationAngles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub label: String,
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerEntry {
    pub qubit: AnalyzedQubit,
    pub label: String,
    #[serde(flatten)]
    pub setting: AnalyzerSetting,
}

/// Waveplate settings for input preparation, two-copy target preparation
/// and Pauli-basis analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleTables {
    pub preparation: Vec<PreparationEntry>,
    pub hs_theta3: f64,
    pub hs_targets: Vec<TargetEntry>,
    pub measurement: Vec<AnalyzerEntry>,
}

const DEFAULT_ANGLES: &str = include_str!("../data/angles.json");

impl AngleTables {
    pub fn published() -> Self {
        serde_json::from_str(DEFAULT_ANGLES).expect("bundled angle tables parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Single-qubit state from a one-character label (0 1 + - r l).
fn qubit_vector(ch: char) -> Result<[C64; 2]> {
    Ok(crate::mixture::QubitState::from_char(ch)?.vector())
}

/// State named by an input-preparation label. Computational-basis labels
/// list the bits in plate order (θ₁, θ₂, θ₃) = (t₁, t₂, c); labels with
/// a superposition are written |c t₁ t₂⟩.
pub fn preparation_label_state(label: &str) -> Result<Vec<C64>> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() != 3 {
        return Err(Error::Config(format!("preparation label '{label}' is not three qubits")));
    }
    let order = if chars.iter().all(|ch| *ch == '0' || *ch == '1') { [2, 0, 1] } else { [0, 1, 2] };
    let mut v = vec![ONE];
    for i in order {
        v = kron_vec(&v, &qubit_vector(chars[i])?);
    }
    Ok(v)
}

/// State named by a two-copy target label |t₁ t₂⟩ with the control at |+⟩.
pub fn target_label_state(label: &str) -> Result<Vec<C64>> {
    let mut v = qubit_vector('+')?.to_vec();
    for ch in label.chars() {
        v = kron_vec(&v, &qubit_vector(ch)?);
    }
    if v.len() != 8 {
        return Err(Error::Config(format!("target label '{label}' is not two qubits")));
    }
    Ok(v)
}

/// |⟨expected|prepared⟩|² for each preparation entry.
pub fn verify_preparations(tables: &AngleTables) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for e in &tables.preparation {
        out.push((e.label.clone(), overlap(&preparation_label_state(&e.label)?, &prepare_vector(&e.angles))));
    }
    for e in &tables.hs_targets {
        let angles = PreparationAngles { theta1: e.theta1, theta2: e.theta2, theta3: tables.hs_theta3 };
        out.push((format!("+{}", e.label), overlap(&target_label_state(&e.label)?, &prepare_vector(&angles))));
    }
    Ok(out)
}

fn overlap(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

pub fn verify_measurements(tables: &AngleTables) -> Result<Vec<MeasurementCheck>> {
    tables.measurement.iter().map(|e| measurement_projector(e.qubit, &e.label, e.setting)).collect()
}

/// Output-by-input probabilities P(out | in), indices in |c t₁ t₂⟩ order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTable {
    /// probabilities[out][in]
    pub probabilities: [[f64; 8]; 8],
    pub uncertainties: Option<[[f64; 8]; 8]>,
}

/// Ideal output for each input: the control-1 inputs 101 and 110 swap.
pub const IDEAL_TRANSITIONS: [usize; 8] = [0, 1, 2, 3, 4, 6, 5, 7];

pub fn basis_label(index: usize) -> String {
    format!("{index:03b}")
}

impl TruthTable {
    pub fn new(probabilities: [[f64; 8]; 8], uncertainties: Option<[[f64; 8]; 8]>, slack: f64) -> Result<Self> {
        let t = TruthTable { probabilities, uncertainties };
        t.validate(slack)?;
        Ok(t)
    }

    pub fn column_sum(&self, input: usize) -> f64 {
        (0..8).map(|o| self.probabilities[o][input]).sum()
    }

    fn row_sum(&self, output: usize) -> f64 {
        self.probabilities[output].iter().sum()
    }

    /// Entries are probabilities and every column sums to 1 within `slack`.
    pub fn validate(&self, slack: f64) -> Result<()> {
        if let Some(p) = self.probabilities.iter().flatten().find(|p| !(**p >= -PROB_SLACK && **p <= 1.0 + PROB_SLACK)) {
            return Err(Error::TruthTable(format!("entry {p} is not a probability")));
        }
        let columns_ok = (0..8).all(|i| (self.column_sum(i) - 1.0).abs() <= slack);
        if !columns_ok {
            let rows_ok = (0..8).all(|o| (self.row_sum(o) - 1.0).abs() <= slack);
            let worst = (0..8).map(|i| self.column_sum(i)).fold(1.0, |w: f64, s| if (s - 1.0).abs() > (w - 1.0).abs() { s } else { w });
            return Err(Error::TruthTable(if rows_ok {
                "rows sum to 1 but columns do not; the table looks transposed (expected rows = outputs, columns = inputs)".into()
            } else {
                format!("a column sums to {worst}, outside 1 ± {slack}")
            }));
        }
        Ok(())
    }

    /// The largest entry of every column sits at the ideal transition.
    pub fn check_dominant_pattern(&self) -> Result<()> {
        for (input, &ideal) in IDEAL_TRANSITIONS.iter().enumerate() {
            let dominant = (0..8).max_by(|&a, &b| self.probabilities[a][input].total_cmp(&self.probabilities[b][input])).unwrap();
            if dominant != ideal {
                return Err(Error::TruthTable(format!(
                    "input {} is dominated by output {}, expected {}; the table may be transposed or mislabelled",
                    basis_label(input),
                    basis_label(dominant),
                    basis_label(ideal)
                )));
            }
        }
        Ok(())
    }

    /// Reads `output,000,000_err,001,…` CSV: one row per output, one column
    /// per input, optional `_err` columns.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let mut value_cols = [0usize; 8];
        let mut err_cols = [None; 8];
        for i in 0..8 {
            let label = basis_label(i);
            value_cols[i] = find(&label).ok_or_else(|| Error::TruthTable(format!("missing input column {label}")))?;
            err_cols[i] = find(&format!("{label}_err"));
        }
        let out_col = find("output").ok_or_else(|| Error::TruthTable("missing output column".into()))?;
        let has_err = err_cols.iter().all(Option::is_some);
        let mut probs = [[f64::NAN; 8]; 8];
        let mut errs = [[0.0; 8]; 8];
        let mut seen = [false; 8];
        for rec in rdr.records() {
            let rec = rec?;
            let label = rec.get(out_col).unwrap_or("");
            let out = (0..8).find(|&i| basis_label(i) == label).ok_or_else(|| Error::TruthTable(format!("unknown output label '{label}'")))?;
            if std::mem::replace(&mut seen[out], true) {
                return Err(Error::TruthTable(format!("output {label} appears twice")));
            }
            let parse = |col: usize| -> Result<f64> {
                let cell = rec.get(col).unwrap_or("");
                cell.parse().map_err(|_| Error::TruthTable(format!("bad number '{cell}' in row {label}")))
            };
            for i in 0..8 {
                probs[out][i] = parse(value_cols[i])?;
                if has_err {
                    errs[out][i] = parse(err_cols[i].unwrap())?;
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::TruthTable(format!("missing output row {}", basis_label(missing))));
        }
        let table = TruthTable::new(probs, has_err.then_some(errs), INGEST_SLACK)?;
        table.check_dominant_pattern()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["output".to_string()];
        for i in 0..8 {
            header.push(basis_label(i));
            if self.uncertainties.is_some() {
                header.push(format!("{}_err", basis_label(i)));
            }
        }
        w.write_record(&header)?;
        for o in 0..8 {
            let mut row = vec![basis_label(o)];
            for i in 0..8 {
                row.push(crate::series::format_value(self.probabilities[o][i]));
                if let Some(e) = &self.uncertainties {
                    row.push(crate::series::format_value(e[o][i]));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean probability of the eight ideal transitions.
pub fn classical_fidelity(t: &TruthTable) -> f64 {
    IDEAL_TRANSITIONS.iter().enumerate().map(|(i, &o)| t.probabilities[o][i]).sum::<f64>() / 8.0
}

/// ⟨XXX⟩, ⟨XYY⟩, ⟨YXY⟩, ⟨YYX⟩.
pub const GHZ_CORRELATORS: [&str; 4] = ["XXX", "XYY", "YXY", "YYX"];

fn correlator_sum(correlators: &[f64; 4]) -> f64 {
    correlators[0] + correlators[1] - correlators[2] + correlators[3]
}

/// Fidelity with (|010⟩ + |101⟩)/√2 from populations and correlators.
pub fn ghz_fidelity(p010: f64, p101: f64, correlators: &[f64; 4]) -> Result<f64> {
    let unit = -PROB_SLACK..=1.0 + PROB_SLACK;
    if !unit.contains(&p010) || !unit.contains(&p101) {
        return Err(Error::Config("populations must lie in [0, 1]".into()));
    }
    if correlators.iter().any(|c| !(-1.0 - PROB_SLACK..=1.0 + PROB_SLACK).contains(c)) {
        return Err(Error::Config("correlators must lie in [−1, 1]".into()));
    }
    Ok(0.5 * (p010 + p101) + correlator_sum(correlators) / 8.0)
}

pub fn process_fidelity(f_zzz: f64, correlators: &[f64; 4]) -> f64 {
    0.5 * f_zzz + correlator_sum(correlators) / 8.0
}

/// Gate output for a pure input, with the noise applied after the gate.
pub fn gate_output(input: &[C64], noise: NoiseChannel) -> Result<DensityMatrix> {
    crate::qcore::apply_channel(&DensityMatrix::pure(input)?, &fredkin(), noise)
}

pub fn simulate_truth_table(noise: NoiseChannel) -> Result<TruthTable> {
    let mut probs = [[0.0; 8]; 8];
    for input in 0..8 {
        let out = gate_output(&crate::qcore::ket(input, 3), noise)?.diagonal_probabilities()?;
        for (o, p) in out.into_iter().enumerate() {
            probs[o][input] = p;
        }
    }
    TruthTable::new(probs, None, SIMULATED_SLACK)
}

/// Expectation of a Pauli string such as "XYY" (qubit 0 first).
pub fn pauli_expectation(state: &DensityMatrix, string: &str) -> Result<f64> {
    let ops = string
        .chars()
        .map(|ch| match ch {
            'I' => Ok(Mat2::IDENTITY),
            'X' => Ok(gates::pauli_x()),
            'Y' => Ok(gates::pauli_y()),
            'Z' => Ok(gates::pauli_z()),
            other => Err(Error::Config(format!("unknown Pauli '{other}'"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if ops.len() != state.n_qubits() {
        return Err(Error::Dimension(format!("{string} on {} qubits", state.n_qubits())));
    }
    Ok(state.expectation(&gates::product(&ops)))
}

/// GHZ-generation data for the gate driven with |+10⟩.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GhzData {
    pub p010: f64,
    pub p101: f64,
    pub correlators: [f64; 4],
}

impl GhzData {
    pub fn fidelity(&self) -> Result<f64> {
        ghz_fidelity(self.p010, self.p101, &self.correlators)
    }
}

pub fn simulate_ghz(noise: NoiseChannel) -> Result<GhzData> {
    let out = gate_output(&preparation_label_state("+10")?, noise)?;
    let p = out.diagonal_probabilities()?;
    let mut correlators = [0.0; 4];
    for (c, s) in correlators.iter_mut().zip(GHZ_CORRELATORS) {
        *c = pauli_expectation(&out, s)?;
    }
    Ok(GhzData { p010: p[0b010], p101: p[0b101], correlators })
}

/// Exact process fidelity of the simulated gate.
pub fn simulated_process_fidelity(noise: NoiseChannel) -> Result<f64> {
    let f = classical_fidelity(&simulate_truth_table(noise)?);
    Ok(process_fidelity(f, &simulate_ghz(noise)?.correlators))
}

/// Depolarizing strength whose simulated process fidelity matches the target.
pub fn calibrate_noise(target: f64) -> Result<NoiseChannel> {
    let floor = simulated_process_fidelity(NoiseChannel::Depolarizing { p: 1.0 })?;
    if !(target > floor && target <= 1.0) {
        return Err(Error::Config(format!("process fidelity {target} is outside ({floor}, 1]")));
    }
    let f = |p: f64| simulated_process_fidelity(NoiseChannel::depolarizing(p)?);
    if f(0.0)? <= target {
        return Ok(NoiseChannel::None);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let achieved = f(p)?;
    if (achieved - target).abs() > 1e-4 {
        return Err(Error::Config(format!("calibration reached {achieved}, not {target}")));
    }
    NoiseChannel::depolarizing(p)
}

/// Summary of a characterization run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacterizationReport {
    pub noise_p: f64,
    pub f_zzz: f64,
    pub ghz: GhzData,
    pub ghz_fidelity: f64,
    pub process_fidelity: f64,
}

pub fn characterize(noise: NoiseChannel) -> Result<CharacterizationReport> {
    let table = simulate_truth_table(noise)?;
    let ghz = simulate_ghz(noise)?;
    let f_zzz = classical_fidelity(&table);
    Ok(CharacterizationReport {
        noise_p: noise.strength(),
        f_zzz,
        ghz_fidelity: ghz.fidelity()?,
        process_fidelity: process_fidelity(f_zzz, &ghz.correlators),
        ghz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn waveplate_examples() {
        assert!(hwp(0.0).max_abs_diff(&Mat2::real(-1.0, 0.0, 0.0, 1.0)) < 1e-15);
        let out = hwp(22.5).apply(vertical());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out[0] - c(-s, 0.0)).norm() < 1e-12 && (out[1] - c(s, 0.0)).norm() < 1e-12);
        // half of the output is found in |H⟩ (and in |V⟩); it is orthogonal to |+⟩
        assert!((out[0].norm_sqr() - 0.5).abs() < 1e-12);
        let plus_amp = (out[0] + out[1]) * s;
        assert!(plus_amp.norm_sqr() < 1e-12);
    }

    proptest! {
        #[test]
        fn plates_are_unitary(angle in -180.0f64..180.0) {
            prop_assert!(qwp(angle).to_matrix().unitarity_defect() < 1e-12);
            prop_assert!(hwp(angle).to_matrix().unitarity_defect() < 1e-12);
            let a = PreparationAngles { theta1: angle, theta2: angle * 0.3, theta3: -angle };
            let n: f64 = prepare_vector(&a).iter().map(|x| x.norm_sqr()).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn preparation_examples() {
        let zero = prepare_vector(&PreparationAngles { theta1: 0.0, theta2: 0.0, theta3: 0.0 });
        assert!((zero[0].norm_sqr() - 1.0).abs() < 1e-15);
        let ones = prepare_vector(&PreparationAngles { theta1: 45.0, theta2: 45.0, theta3: 45.0 });
        assert!((ones[7].norm_sqr() - 1.0).abs() < 1e-15);
        let mixed = prepare_vector(&PreparationAngles { theta1: 45.0, theta2: 22.5, theta3: 22.5 });
        let expect = target_label_state("1+").unwrap();
        assert!((overlap(&expect, &mixed) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn published_tables_verify() {
        let tables = AngleTables::published();
        assert_eq!(tables.preparation.len(), 9);
        assert_eq!(tables.hs_targets.len(), 9);
        assert_eq!(tables.measurement.len(), 18);
        for (label, f) in verify_preparations(&tables).unwrap() {
            assert!((f - 1.0).abs() < 1e-10, "{label}: {f}");
        }
        for check in verify_measurements(&tables).unwrap() {
            assert!(check.passed, "{check:?}");
        }
    }

    #[test]
    fn wrong_analyzer_angle_fails() {
        let bad = measurement_projector(AnalyzedQubit::Control, "+", AnalyzerSetting { hwp: 10.0, qwp: 0.0 }).unwrap();
        assert!(!bad.passed);
        assert!(bad.deficit() > 0.1);
        let good = measurement_projector(AnalyzedQubit::Control, "R", AnalyzerSetting { hwp: 0.0, qwp: 45.0 }).unwrap();
        assert!(good.passed);
    }

    #[test]
    fn ideal_gate() {
        let t = simulate_truth_table(NoiseChannel::None).unwrap();
        for (i, &o) in IDEAL_TRANSITIONS.iter().enumerate() {
            assert!((t.probabilities[o][i] - 1.0).abs() < 1e-12);
        }
        assert!((classical_fidelity(&t) - 1.0).abs() < 1e-12);
        let ghz = simulate_ghz(NoiseChannel::None).unwrap();
        assert!((ghz.fidelity().unwrap() - 1.0).abs() < 1e-12);
        for (got, want) in ghz.correlators.iter().zip([1.0, 1.0, -1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((simulated_process_fidelity(NoiseChannel::None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depolarized_gate() {
        let full = NoiseChannel::Depolarizing { p: 1.0 };
        assert!((classical_fidelity(&simulate_truth_table(full).unwrap()) - 0.125).abs() < 1e-12);
        assert!((simulated_process_fidelity(full).unwrap() - 0.0625).abs() < 1e-12);
        let mixed = ghz_fidelity(0.125, 0.125, &[0.0; 4]).unwrap();
        assert!((mixed - 0.125).abs() < 1e-15);
        let mut last = 1.0 + 1e-12;
        for i in 0..50 {
            let p = i as f64 / 49.0;
            let f = simulated_process_fidelity(NoiseChannel::depolarizing(p).unwrap()).unwrap();
            assert!(f <= last + 1e-12);
            assert!((f - (1.0 - 15.0 * p / 16.0)).abs() < 1e-12);
            last = f;
        }
    }

    #[test]
    fn calibration_round_trip() {
        assert_eq!(calibrate_noise(1.0).unwrap(), NoiseChannel::None);
        let n = calibrate_noise(0.935).unwrap();
        assert!((simulated_process_fidelity(n).unwrap() - 0.935).abs() < 1e-4);
        assert!((n.strength() - 0.065 * 16.0 / 15.0).abs() < 1e-9);
        let edge = calibrate_noise(0.0625 + 1e-6).unwrap();
        assert!(edge.strength() > 0.999);
        assert!(calibrate_noise(0.05).is_err());
        assert!(calibrate_noise(1.2).is_err());
    }

    #[test]
    fn published_fidelity_arithmetic() {
        let sum = 8.0 * (0.935 - 0.5 * 0.9898);
        let correlators = [sum / 4.0, sum / 4.0, -sum / 4.0, sum / 4.0];
        assert!((process_fidelity(0.9898, &correlators) - 0.935).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_transposition() {
        let t = simulate_truth_table(NoiseChannel::Depolarizing { p: 0.1 }).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TruthTable::from_csv(&buf[..]).unwrap();
        assert_eq!(back.probabilities, t.probabilities);

        // every input leaks 30 % into output 000: columns sum to 1, rows do not
        let mut leaky = [[0.0; 8]; 8];
        for (i, &o) in IDEAL_TRANSITIONS.iter().enumerate() {
            leaky[o][i] += 0.7;
            leaky[0][i] += 0.3;
        }
        assert!(TruthTable::new(leaky, None, INGEST_SLACK).is_ok());
        let mut transposed = [[0.0; 8]; 8];
        for o in 0..8 {
            for i in 0..8 {
                transposed[o][i] = leaky[i][o];
            }
        }
        let bad = TruthTable { probabilities: transposed, uncertainties: None };
        let msg = bad.validate(INGEST_SLACK).unwrap_err().to_string();
        assert!(msg.contains("transposed"), "{msg}");
        let mut swapped = t.probabilities;
        swapped.swap(5, 6);
        let bad = TruthTable { probabilities: swapped, uncertainties: None };
        assert!(bad.check_dominant_pattern().is_err());
    }
}
