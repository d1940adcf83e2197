//! Measurement core of a pin: the binary meter variable, its decoherence and
//! purification, the meter/pointer coupling `H = Λ M ⊗ P_z`, and the event
//! reading that selects one eigenstate from the diagonal mixture.
//!
//! Basis convention: `|0⟩` is "potential off" (`ΔU = 0`), `|1⟩` is
//! "potential on" (`ΔU = U0`). Pointer displacement is along `+z`.

use num_complex::Complex64;
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the trace, Hermiticity and positivity checks.
pub const TOLERANCE: f64 = 1e-12;
/// Allowed deviation of a probability vector's sum from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("density matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("density matrix has non-finite entries")]
    NonFinite,
    #[error("expected a diagonal density matrix (off-diagonal magnitude {0:e})")]
    NotDiagonal(f64),
    #[error("probability weights are invalid: {0}")]
    BadWeights(&'static str),
    #[error("pointer spread must be positive, got {0}")]
    BadSpread(f64),
    #[error("pointer not separated: {separation} < required {required}")]
    PointerNotSeparated { separation: f64, required: f64 },
}

/// A binary meter eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn index(self) -> usize {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.index() as u8
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(format!("bit must be 0 or 1, got {other}")),
        }
    }
}

/// 2×2 density matrix of a pin's meter variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Self, QuantumError> {
        let rho = Self { entries };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub fn diagonal(p0: f64, p1: f64) -> Result<Self, QuantumError> {
        Self::new([[Complex64::new(p0, 0.0), ZERO], [ZERO, Complex64::new(p1, 0.0)]])
    }

    /// `|m⟩⟨m|`.
    pub fn pure(bit: Bit) -> Self {
        let mut entries = [[ZERO; 2]; 2];
        entries[bit.index()][bit.index()] = Complex64::new(1.0, 0.0);
        Self { entries }
    }

    pub(crate) fn from_entries_unchecked(entries: [[Complex64; 2]; 2]) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[[Complex64; 2]; 2] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row][col]
    }

    /// Diagonal weights `(p0, p1)`.
    pub fn populations(&self) -> [f64; 2] {
        [self.entries[0][0].re, self.entries[1][1].re]
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn coherence(&self) -> f64 {
        self.entries[0][1].norm().max(self.entries[1][0].norm())
    }

    pub fn is_diagonal(&self) -> bool {
        self.coherence() <= TOLERANCE
    }

    pub fn purity(&self) -> f64 {
        let mut sum = 0.0;
        for row in &self.entries {
            for z in row {
                sum += z.norm_sqr();
            }
        }
        sum
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.entries[0][0].re;
        let d = self.entries[1][1].re;
        let b = 0.5 * (self.entries[0][1] + self.entries[1][0].conj());
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }

    pub fn check_invariants(&self) -> Result<(), QuantumError> {
        if self
            .entries
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(QuantumError::NonFinite);
        }
        let herm = (self.entries[0][1] - self.entries[1][0].conj())
            .norm()
            .max(self.entries[0][0].im.abs())
            .max(self.entries[1][1].im.abs());
        if herm > TOLERANCE {
            return Err(QuantumError::NotHermitian(herm));
        }
        let tr = self.trace().re;
        if (tr - 1.0).abs() > TOLERANCE {
            return Err(QuantumError::BadTrace(tr));
        }
        let min_eig = self.eigenvalues()[0];
        if min_eig < -TOLERANCE {
            return Err(QuantumError::NotPositive(min_eig));
        }
        Ok(())
    }

    fn require_diagonal(&self) -> Result<(), QuantumError> {
        if self.is_diagonal() {
            Ok(())
        } else {
            Err(QuantumError::NotDiagonal(self.coherence()))
        }
    }
}

// JSON form: row-major list of four [re, im] pairs.
impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flat: [[f64; 2]; 4] = [
            [self.entries[0][0].re, self.entries[0][0].im],
            [self.entries[0][1].re, self.entries[0][1].im],
            [self.entries[1][0].re, self.entries[1][0].im],
            [self.entries[1][1].re, self.entries[1][1].im],
        ];
        flat.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flat = <[[f64; 2]; 4]>::deserialize(d)?;
        let c = |i: usize| Complex64::new(flat[i][0], flat[i][1]);
        DensityMatrix::new([[c(0), c(1)], [c(2), c(3)]]).map_err(de::Error::custom)
    }
}

/// Meter state entangled with a fictitious reference system, stored as the
/// joint amplitude vector over `|m⟩ ⊗ |r⟩` (index `2m + r`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurifiedState {
    joint: [Complex64; 4],
}

impl PurifiedState {
    pub fn joint_amplitudes(&self) -> &[Complex64; 4] {
        &self.joint
    }

    /// Amplitudes of `|m⟩|r_m⟩`.
    pub fn schmidt_coefficients(&self) -> [Complex64; 2] {
        [self.joint[0], self.joint[3]]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.joint.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn meter_populations(&self) -> [f64; 2] {
        [
            self.joint[0].norm_sqr() + self.joint[1].norm_sqr(),
            self.joint[2].norm_sqr() + self.joint[3].norm_sqr(),
        ]
    }

    /// Multiplies the meter-1 branch by `e^{iθ}`.
    pub fn with_relative_phase(mut self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        self.joint[2] *= phase;
        self.joint[3] *= phase;
        self
    }

    /// Reduced state of the meter: `ρ_ij = Σ_r ψ(i,r) ψ*(j,r)`.
    pub fn trace_reference(&self) -> DensityMatrix {
        let mut entries = [[ZERO; 2]; 2];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..2)
                    .map(|r| self.joint[2 * i + r] * self.joint[2 * j + r].conj())
                    .sum();
            }
        }
        DensityMatrix::from_entries_unchecked(entries)
    }
}

/// Classical pointer of a pin: the superselected center-of-mass pair
/// `(Q_A, P_A)`, the position spread, and how far each meter branch has been
/// displaced along `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerState {
    pub q: f64,
    pub p_mom: f64,
    sigma_q: f64,
    shifts: [f64; 2],
}

impl PointerState {
    pub fn new(q: f64, p_mom: f64, sigma_q: f64) -> Result<Self, QuantumError> {
        if !(sigma_q.is_finite() && sigma_q > 0.0) {
            return Err(QuantumError::BadSpread(sigma_q));
        }
        Ok(Self {
            q,
            p_mom,
            sigma_q,
            shifts: [0.0; 2],
        })
    }

    pub fn sigma_q(&self) -> f64 {
        self.sigma_q
    }

    pub fn displacement(&self, branch: Bit) -> f64 {
        self.shifts[branch.index()]
    }

    pub fn branch_position(&self, branch: Bit) -> f64 {
        self.q + self.shifts[branch.index()]
    }

    pub fn separation(&self) -> f64 {
        (self.shifts[1] - self.shifts[0]).abs()
    }
}

/// Complete decoherence: erases the off-diagonal elements.
pub fn decohere(rho: &DensityMatrix) -> DensityMatrix {
    let [p0, p1] = rho.populations();
    DensityMatrix::from_entries_unchecked([[Complex64::new(p0, 0.0), ZERO], [ZERO, Complex64::new(p1, 0.0)]])
}

/// Schmidt purification `Σ_m sqrt(p_m) |m⟩|r_m⟩` of a diagonal state.
pub fn purify(rho: &DensityMatrix) -> Result<PurifiedState, QuantumError> {
    rho.require_diagonal()?;
    let [p0, p1] = rho.populations();
    let mut joint = [ZERO; 4];
    joint[0] = Complex64::new(p0.max(0.0).sqrt(), 0.0);
    joint[3] = Complex64::new(p1.max(0.0).sqrt(), 0.0);
    Ok(PurifiedState { joint })
}

/// Evolves under `H = Λ M ⊗ P_z` for a time `t`.
///
/// The generator translates the pointer branch correlated with meter value
/// `m` by `Λ m t` and, for a pointer of definite momentum `P_A`, attaches the
/// phase `e^{-i Λ m P_A t}` (units with ħ = 1) to that branch. Meter
/// populations are untouched because `H` commutes with `M`.
pub fn evolve_von_neumann(
    state: &PurifiedState,
    pointer: &PointerState,
    lambda: f64,
    t: f64,
) -> (PurifiedState, PointerState) {
    debug_assert!(lambda >= 0.0 && t >= 0.0);
    let mut pointer = *pointer;
    pointer.shifts[1] += lambda * t;
    let state = state.with_relative_phase(-lambda * pointer.p_mom * t);
    (state, pointer)
}

/// Restricts the observables to those commuting with the pointer's
/// center-of-mass operators: relative phases between meter branches carry no
/// observable content, leaving the diagonal mixture of meter eigenstates.
pub fn apply_superselection(state: &PurifiedState) -> DensityMatrix {
    decohere(&state.trace_reference())
}

/// Result of one projection-hypothesis event reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventReading {
    pub outcome: Bit,
    pub rho_after: DensityMatrix,
    pub surprisal: f64,
}

/// Selects one eigenstate from a diagonal mixture with Born weights.
///
/// A pure input fires immediately without consuming randomness. A mixed input
/// requires the pointer branches to be at least `eta · σ_Q` apart.
pub fn event_read<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    pointer: &PointerState,
    eta: f64,
    rng: &mut R,
) -> Result<EventReading, QuantumError> {
    rho.require_diagonal()?;
    let [p0, p1] = rho.populations();
    let definite = if p1 <= TOLERANCE {
        Some(Bit::Zero)
    } else if p0 <= TOLERANCE {
        Some(Bit::One)
    } else {
        None
    };
    if let Some(outcome) = definite {
        return Ok(EventReading {
            outcome,
            rho_after: DensityMatrix::pure(outcome),
            surprisal: 0.0,
        });
    }
    let required = eta * pointer.sigma_q;
    let separation = pointer.separation();
    if separation < required * (1.0 - TOLERANCE) {
        return Err(QuantumError::PointerNotSeparated { separation, required });
    }
    let u: f64 = rng.gen();
    let outcome = Bit::from_bool(u < p1);
    let p = if outcome == Bit::One { p1 } else { p0 };
    Ok(EventReading {
        outcome,
        rho_after: DensityMatrix::pure(outcome),
        surprisal: -p.log2(),
    })
}

/// `-Σ p log2 p` with `0 log 0 = 0`.
pub fn shannon_entropy(weights: &[f64]) -> Result<f64, QuantumError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(QuantumError::BadWeights("weights must be finite and >= 0"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(QuantumError::BadWeights("weights must sum to 1"));
    }
    Ok(weights
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0))
}

/// Entropy of a Bernoulli(p) event, in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    [p, 1.0 - p]
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum::<f64>()
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ready_pointer() -> PointerState {
        let p = PointerState::new(0.0, 0.0, 1.0).unwrap();
        let state = purify(&DensityMatrix::diagonal(0.5, 0.5).unwrap()).unwrap();
        evolve_von_neumann(&state, &p, 1.0, 3.0).1
    }

    #[test]
    fn validating_constructor() {
        assert!(DensityMatrix::diagonal(0.3, 0.7).is_ok());
        assert!(matches!(
            DensityMatrix::diagonal(0.3, 0.8),
            Err(QuantumError::BadTrace(_))
        ));
        assert!(matches!(
            DensityMatrix::new([[c(0.5, 0.0), c(0.1, 0.0)], [c(0.2, 0.0), c(0.5, 0.0)]]),
            Err(QuantumError::NotHermitian(_))
        ));
        assert!(matches!(
            DensityMatrix::new([[c(0.5, 0.0), c(0.9, 0.0)], [c(0.9, 0.0), c(0.5, 0.0)]]),
            Err(QuantumError::NotPositive(_))
        ));
        assert!(matches!(
            DensityMatrix::diagonal(-0.5, 1.5),
            Err(QuantumError::NotPositive(_))
        ));
    }

    #[test]
    fn decohere_examples() {
        let rho = DensityMatrix::diagonal(0.3, 0.7).unwrap();
        assert_eq!(decohere(&rho), rho);

        let plus = DensityMatrix::new([[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]]).unwrap();
        assert_eq!(decohere(&plus), DensityMatrix::diagonal(0.5, 0.5).unwrap());

        let rho = DensityMatrix::new([[c(0.25, 0.0), c(0.0, 0.1)], [c(0.0, -0.1), c(0.75, 0.0)]]).unwrap();
        let out = decohere(&rho);
        assert_eq!(out, DensityMatrix::diagonal(0.25, 0.75).unwrap());
        assert_eq!(decohere(&out), out);
    }

    #[test]
    fn purify_examples() {
        let s = purify(&DensityMatrix::pure(Bit::Zero)).unwrap();
        assert_eq!(s.joint_amplitudes(), &[c(1.0, 0.0), ZERO, ZERO, ZERO]);

        let s = purify(&DensityMatrix::diagonal(0.5, 0.5).unwrap()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.schmidt_coefficients()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((s.schmidt_coefficients()[1] - c(h, 0.0)).norm() < 1e-15);

        let rho = DensityMatrix::diagonal(0.25, 0.75).unwrap();
        let s = purify(&rho).unwrap();
        assert_eq!(s.schmidt_coefficients()[0], c(0.5, 0.0));
        assert!((s.schmidt_coefficients()[1].re - 0.75f64.sqrt()).abs() < 1e-15);
        let back = s.trace_reference();
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.get(i, j) - rho.get(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn purify_rejects_coherent_input() {
        let plus = DensityMatrix::new([[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]]).unwrap();
        assert!(matches!(purify(&plus), Err(QuantumError::NotDiagonal(_))));
    }

    #[test]
    fn evolution_examples() {
        let state = purify(&DensityMatrix::diagonal(0.25, 0.75).unwrap()).unwrap();
        let pointer = PointerState::new(0.0, 0.4, 1.0).unwrap();

        let (s0, p0) = evolve_von_neumann(&state, &pointer, 2.0, 0.0);
        assert_eq!(p0, pointer);
        assert_eq!(s0.meter_populations(), state.meter_populations());

        let (s, p) = evolve_von_neumann(&state, &pointer, 2.0, 3.0);
        assert_eq!(p.displacement(Bit::One), 6.0);
        assert_eq!(p.displacement(Bit::Zero), 0.0);
        let pops = s.meter_populations();
        assert!((pops[0] - 0.25).abs() < 1e-15 && (pops[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn superselection_examples() {
        for (p0, p1) in [(0.25, 0.75), (1.0, 0.0)] {
            let rho = DensityMatrix::diagonal(p0, p1).unwrap();
            let out = apply_superselection(&purify(&rho).unwrap());
            assert!((out.populations()[0] - p0).abs() < 1e-15);
            assert!(out.is_diagonal());
        }
        let base = purify(&DensityMatrix::diagonal(0.5, 0.5).unwrap()).unwrap();
        let reference = apply_superselection(&base);
        for k in 0..16 {
            let theta = k as f64 * 0.41;
            let out = apply_superselection(&base.with_relative_phase(theta));
            assert_eq!(decohere(&out), out);
            for i in 0..2 {
                assert!((out.populations()[i] - reference.populations()[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn event_read_pure_input_needs_no_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let unseparated = PointerState::new(0.0, 0.0, 1.0).unwrap();
        let r = event_read(&DensityMatrix::pure(Bit::Zero), &unseparated, 3.0, &mut rng).unwrap();
        assert_eq!(r.outcome, Bit::Zero);
        assert_eq!(r.surprisal, 0.0);
        let r = event_read(&DensityMatrix::pure(Bit::One), &unseparated, 3.0, &mut rng).unwrap();
        assert_eq!(r.outcome, Bit::One);
        assert_eq!(r.rho_after, DensityMatrix::pure(Bit::One));
    }

    #[test]
    fn event_read_requires_separation_for_mixed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = DensityMatrix::diagonal(0.5, 0.5).unwrap();
        let pointer = PointerState::new(0.0, 0.0, 1.0).unwrap();
        let state = purify(&rho).unwrap();
        let (_, short) = evolve_von_neumann(&state, &pointer, 1.0, 2.9);
        assert!(matches!(
            event_read(&rho, &short, 3.0, &mut rng),
            Err(QuantumError::PointerNotSeparated { .. })
        ));
        let r = event_read(&rho, &ready_pointer(), 3.0, &mut rng).unwrap();
        assert!((r.surprisal - 1.0).abs() < 1e-15);
    }

    #[test]
    fn event_read_is_seeded() {
        let rho = DensityMatrix::diagonal(0.4, 0.6).unwrap();
        let pointer = ready_pointer();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|_| event_read(&rho, &pointer, 3.0, &mut rng).unwrap().outcome)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.25, 0.75]).unwrap() - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!(shannon_entropy(&[0.5, 0.6]).is_err());
        assert!(shannon_entropy(&[-0.5, 1.5]).is_err());
        assert!((binary_entropy(0.25) - 0.811_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn density_matrix_json_shape() {
        let rho = DensityMatrix::new([[c(0.25, 0.0), c(0.0, 0.1)], [c(0.0, -0.1), c(0.75, 0.0)]]).unwrap();
        let json = serde_json::to_string(&rho).unwrap();
        assert_eq!(json, "[[0.25,0.0],[0.0,0.1],[0.0,-0.1],[0.75,0.0]]");
        let back: DensityMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rho);
        assert!(serde_json::from_str::<DensityMatrix>("[[1,0],[0,0],[0,0],[1,0]]").is_err());
    }
}
