//! Two-photon linear optics for the post-selected PPBS controlled-NOT.
//!
//! A single photon lives in one of 16 modes: four spatial arms (control,
//! target and the two discard ports of the compensating PPBSs), two
//! polarizations and two internal wavepacket states. Photon 1 (control)
//! always carries internal state `|0>`; photon 2 (target) carries
//! `sqrt(M)|0> + sqrt(1 - M)|1>`, so `M` is the squared wavepacket overlap.
//!
//! Two-photon states are stored as a symmetric amplitude matrix `A` with
//! `|psi> = sum_ij A_ij a_i^dag a_j^dag |0>`. A linear network with
//! single-photon unitary `U` acts as `A -> U A U^T`.
//!
//! Beam splitters transmit into the same arm label with amplitude
//! `sqrt(1 - r)` and reflect into the other arm with amplitude `i sqrt(r)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::mub::{BellState, Coincidence, PrimeDim};
use crate::numerics::{DensityOperator, Matrix, NumericsError, StateVector, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    #[error("mode match {0} outside [0, 1]")]
    ModeMatchOutOfRange(f64),
    #[error("reflectivity {0} outside [0, 1]")]
    ReflectivityOutOfRange(f64),
    #[error("HOM width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("beam splitter ports must be distinct")]
    SamePorts,
    #[error("expected a two-qubit (dimension 4) input, got dimension {0}")]
    NotTwoQubit(usize),
    #[error("post-selection never succeeds for this input")]
    NoCoincidences,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

const SPATIAL: usize = 4;
const MODES: usize = SPATIAL * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Control,
    Target,
    ControlDiscard,
    TargetDiscard,
}

impl Arm {
    fn index(self) -> usize {
        self as usize
    }
}

/// Flat single-photon mode index.
fn mode(arm: usize, pol: usize, internal: usize) -> usize {
    arm * 4 + pol * 2 + internal
}

/// Squared overlap of the two photons' internal wavepackets.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ModeMatch(f64);

impl ModeMatch {
    pub const PERFECT: ModeMatch = ModeMatch(1.0);

    pub fn new(m: f64) -> Result<Self, OpticsError> {
        if (0.0..=1.0).contains(&m) {
            Ok(Self(m))
        } else {
            Err(OpticsError::ModeMatchOutOfRange(m))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Internal state of photon 2: `sqrt(M)|0> + sqrt(1 - M)|1>`.
    fn target_internal(self) -> [C64; 2] {
        [C64::new(self.0.sqrt(), 0.0), C64::new((1.0 - self.0).sqrt(), 0.0)]
    }
}

/// Intensity reflectivities of a partially polarizing beam splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpbsSpec {
    pub reflectivity_h: f64,
    pub reflectivity_v: f64,
}

impl PpbsSpec {
    /// The interfering PPBS: reflects all V and a third of H.
    pub const INTERFERING: PpbsSpec = PpbsSpec {
        reflectivity_h: 1.0 / 3.0,
        reflectivity_v: 1.0,
    };

    /// The compensating PPBS: passes all H, dumps two thirds of V.
    pub const COMPENSATING: PpbsSpec = PpbsSpec {
        reflectivity_h: 0.0,
        reflectivity_v: 2.0 / 3.0,
    };

    pub fn new(reflectivity_h: f64, reflectivity_v: f64) -> Result<Self, OpticsError> {
        for r in [reflectivity_h, reflectivity_v] {
            if !(0.0..=1.0).contains(&r) {
                return Err(OpticsError::ReflectivityOutOfRange(r));
            }
        }
        Ok(Self {
            reflectivity_h,
            reflectivity_v,
        })
    }

    fn reflectivity(&self, pol: usize) -> f64 {
        if pol == 0 {
            self.reflectivity_h
        } else {
            self.reflectivity_v
        }
    }
}

/// At most two photons in the 16-mode space.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    vacuum: C64,
    pairs: Matrix,
}

impl TwoPhotonState {
    pub fn vacuum() -> Self {
        Self {
            vacuum: C64::new(1.0, 0.0),
            pairs: Matrix::zeros(MODES),
        }
    }

    /// `a^dag(u) a^dag(v) |0>` for single-photon wavefunctions on distinct arms.
    fn from_photons(u: &[C64], v: &[C64]) -> Self {
        let mut pairs = Matrix::zeros(MODES);
        for i in 0..MODES {
            for j in 0..MODES {
                pairs[(i, j)] = (u[i] * v[j] + v[i] * u[j]) * 0.5;
            }
        }
        Self {
            vacuum: C64::new(0.0, 0.0),
            pairs,
        }
    }

    /// Two H photons entering the control and target arms with the given overlap.
    pub fn hh_pair(mode_match: ModeMatch) -> Self {
        let mut u = vec![C64::new(0.0, 0.0); MODES];
        let mut v = vec![C64::new(0.0, 0.0); MODES];
        u[mode(Arm::Control.index(), 0, 0)] = C64::new(1.0, 0.0);
        for (k, a) in mode_match.target_internal().into_iter().enumerate() {
            v[mode(Arm::Target.index(), 0, k)] = a;
        }
        Self::from_photons(&u, &v)
    }

    /// Embeds a two-qubit polarization state `sum_pq psi_pq |p>_control |q>_target`.
    pub fn from_polarization(psi: &[C64], mode_match: ModeMatch) -> Result<Self, OpticsError> {
        if psi.len() != 4 {
            return Err(OpticsError::NotTwoQubit(psi.len()));
        }
        let eta = mode_match.target_internal();
        let mut pairs = Matrix::zeros(MODES);
        for p in 0..2 {
            for q in 0..2 {
                let amp = psi[2 * p + q];
                for (k, e) in eta.iter().enumerate() {
                    let i = mode(Arm::Control.index(), p, 0);
                    let j = mode(Arm::Target.index(), q, k);
                    pairs[(i, j)] += amp * e * 0.5;
                    pairs[(j, i)] += amp * e * 0.5;
                }
            }
        }
        Ok(Self {
            vacuum: C64::new(0.0, 0.0),
            pairs,
        })
    }

    pub fn vacuum_amplitude(&self) -> C64 {
        self.vacuum
    }

    /// Probability summed over every configuration, including discard ports.
    pub fn total_probability(&self) -> f64 {
        self.vacuum.norm_sqr() + 2.0 * self.pairs.entries().iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    /// Largest `|A_ij - A_ji|`; zero for a physical bosonic state.
    pub fn exchange_defect(&self) -> f64 {
        self.pairs.max_abs_diff(&self.pairs.transpose())
    }

    fn apply_unitary(&self, u: &Matrix) -> Self {
        Self {
            vacuum: self.vacuum,
            pairs: u.matmul(&self.pairs).matmul(&u.transpose()),
        }
    }

    /// Amplitude of one photon in mode `i` of the control arm and one in mode `j` of the target arm.
    fn coincidence_amplitude(&self, control_pol: usize, control_int: usize, target_pol: usize, target_int: usize) -> C64 {
        let i = mode(Arm::Control.index(), control_pol, control_int);
        let j = mode(Arm::Target.index(), target_pol, target_int);
        self.pairs[(i, j)] * 2.0
    }

    /// Probability of exactly one photon in each of the control and target arms.
    pub fn coincidence_probability(&self) -> f64 {
        let mut total = 0.0;
        for pc in 0..2 {
            for ic in 0..2 {
                for pt in 0..2 {
                    for it in 0..2 {
                        total += self.coincidence_amplitude(pc, ic, pt, it).norm_sqr();
                    }
                }
            }
        }
        total
    }
}

/// Single-photon unitary of a PPBS acting on `ports`.
fn ppbs_unitary(spec: &PpbsSpec, ports: (Arm, Arm)) -> Matrix {
    let mut u = Matrix::identity(MODES);
    let (a, b) = (ports.0.index(), ports.1.index());
    for pol in 0..2 {
        let r = spec.reflectivity(pol);
        let t = C64::new((1.0 - r).sqrt(), 0.0);
        let ir = C64::new(0.0, r.sqrt());
        for internal in 0..2 {
            let (ma, mb) = (mode(a, pol, internal), mode(b, pol, internal));
            u[(ma, ma)] = t;
            u[(mb, mb)] = t;
            u[(mb, ma)] = ir;
            u[(ma, mb)] = ir;
        }
    }
    u
}

fn waveplate_unitary(arm: Arm, jones: [[C64; 2]; 2]) -> Matrix {
    let mut u = Matrix::identity(MODES);
    let a = arm.index();
    for internal in 0..2 {
        for out in 0..2 {
            for inp in 0..2 {
                u[(mode(a, out, internal), mode(a, inp, internal))] = jones[out][inp];
            }
        }
    }
    u
}

fn swap_unitary(a: Arm, b: Arm) -> Matrix {
    let mut u = Matrix::zeros(MODES);
    let relabel = |arm: usize| {
        if arm == a.index() {
            b.index()
        } else if arm == b.index() {
            a.index()
        } else {
            arm
        }
    };
    for arm in 0..SPATIAL {
        for pol in 0..2 {
            for internal in 0..2 {
                u[(mode(relabel(arm), pol, internal), mode(arm, pol, internal))] = C64::new(1.0, 0.0);
            }
        }
    }
    u
}

/// Applies one PPBS to a two-photon state.
pub fn ppbs_apply(state: &TwoPhotonState, spec: &PpbsSpec, ports: (Arm, Arm)) -> Result<TwoPhotonState, OpticsError> {
    if ports.0 == ports.1 {
        return Err(OpticsError::SamePorts);
    }
    Ok(state.apply_unitary(&ppbs_unitary(spec, ports)))
}

/// Jones matrices of the fixed wave plates used by the gate and analyzers.
pub mod jones {
    use super::*;

    fn real(m: [[f64; 2]; 2]) -> [[C64; 2]; 2] {
        m.map(|row| row.map(|x| C64::new(x, 0.0)))
    }

    /// Half-wave plate at 22.5 degrees.
    pub fn hadamard() -> [[C64; 2]; 2] {
        real([[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]])
    }

    /// Half-wave plate at 0 degrees.
    pub fn phase_flip() -> [[C64; 2]; 2] {
        real([[1.0, 0.0], [0.0, -1.0]])
    }

    /// Half-wave plate at 45 degrees.
    pub fn bit_flip() -> [[C64; 2]; 2] {
        real([[0.0, 1.0], [1.0, 0.0]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Ppbs { spec: PpbsSpec, ports: (Arm, Arm) },
    WavePlate { arm: Arm, jones: [[C64; 2]; 2] },
    /// Relabels two arms; models which output port is called which.
    SwapArms(Arm, Arm),
}

impl Element {
    fn unitary(&self) -> Matrix {
        match self {
            Element::Ppbs { spec, ports } => ppbs_unitary(spec, *ports),
            Element::WavePlate { arm, jones } => waveplate_unitary(*arm, *jones),
            Element::SwapArms(a, b) => swap_unitary(*a, *b),
        }
    }
}

/// An ordered list of passive optical elements.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalCircuit {
    pub elements: Vec<Element>,
}

impl OpticalCircuit {
    /// Single-photon unitary of the whole network.
    pub fn unitary(&self) -> Matrix {
        self.elements
            .iter()
            .fold(Matrix::identity(MODES), |acc, e| e.unitary().matmul(&acc))
    }

    pub fn apply(&self, state: &TwoPhotonState) -> TwoPhotonState {
        state.apply_unitary(&self.unitary())
    }
}

/// The post-selected CNOT: control = photon 1, target = photon 2, H = |0>.
///
/// The interfering PPBS alone gives `diag(1, -1, -1, -1) / 3` on `HH, HV, VH, VV`
/// once the compensating PPBSs balance the V loss. Half-wave plates turn that
/// into `CNOT / 3`: Hadamards on the target around the gate and a phase flip on
/// each arm.
pub fn build_cnot_circuit() -> OpticalCircuit {
    use Element::*;
    OpticalCircuit {
        elements: vec![
            WavePlate {
                arm: Arm::Target,
                jones: jones::hadamard(),
            },
            Ppbs {
                spec: PpbsSpec::INTERFERING,
                ports: (Arm::Control, Arm::Target),
            },
            // each photon's own path leaves through the reflected port
            SwapArms(Arm::Control, Arm::Target),
            Ppbs {
                spec: PpbsSpec::COMPENSATING,
                ports: (Arm::Control, Arm::ControlDiscard),
            },
            Ppbs {
                spec: PpbsSpec::COMPENSATING,
                ports: (Arm::Target, Arm::TargetDiscard),
            },
            WavePlate {
                arm: Arm::Control,
                jones: jones::phase_flip(),
            },
            WavePlate {
                arm: Arm::Target,
                jones: jones::phase_flip(),
            },
            WavePlate {
                arm: Arm::Target,
                jones: jones::hadamard(),
            },
        ],
    }
}

/// Post-selected gate as Kraus operators on the polarization qubits, one per
/// pair of surviving internal states.
#[derive(Debug, Clone)]
pub struct PostSelectedGate {
    kraus: Vec<Matrix>,
}

impl PostSelectedGate {
    pub fn new(circuit: &OpticalCircuit, mode_match: ModeMatch) -> Self {
        let u = circuit.unitary();
        let mut kraus = vec![Matrix::zeros(4); 4];
        for input in 0..4 {
            let mut psi = [C64::new(0.0, 0.0); 4];
            psi[input] = C64::new(1.0, 0.0);
            let out = TwoPhotonState::from_polarization(&psi, mode_match)
                .expect("four amplitudes")
                .apply_unitary(&u);
            for ic in 0..2 {
                for it in 0..2 {
                    let k = &mut kraus[2 * ic + it];
                    for pc in 0..2 {
                        for pt in 0..2 {
                            k[(2 * pc + pt, input)] = out.coincidence_amplitude(pc, ic, pt, it);
                        }
                    }
                }
            }
        }
        Self { kraus }
    }

    pub fn cnot(mode_match: ModeMatch) -> Self {
        Self::new(&build_cnot_circuit(), mode_match)
    }

    /// Unnormalized post-selected output; its trace is the success probability.
    pub fn apply_unnormalized(&self, rho: &DensityOperator) -> Matrix {
        rho.conjugate_sum(&self.kraus)
    }

    /// Normalized post-selected state and success probability.
    pub fn apply(&self, rho: &DensityOperator) -> Result<(DensityOperator, f64), OpticsError> {
        if rho.dim() != 4 {
            return Err(OpticsError::NotTwoQubit(rho.dim()));
        }
        let out = self.apply_unnormalized(rho);
        let success = out.trace().re;
        if success <= 1e-15 {
            return Err(OpticsError::NoCoincidences);
        }
        let normalized = out.scale(C64::new(1.0 / success, 0.0));
        Ok((DensityOperator::from_matrix_unchecked(normalized), success))
    }
}

/// Runs the post-selected CNOT on a two-qubit polarization state.
pub fn run_cnot(input: &DensityOperator, mode_match: f64) -> Result<(DensityOperator, f64), OpticsError> {
    let m = ModeMatch::new(mode_match)?;
    PostSelectedGate::cnot(m).apply(input)
}

/// The ideal CNOT on two qubits, control first.
pub fn ideal_cnot() -> Matrix {
    let one = C64::new(1.0, 0.0);
    let mut m = Matrix::zeros(4);
    m[(0, 0)] = one;
    m[(1, 1)] = one;
    m[(3, 2)] = one;
    m[(2, 3)] = one;
    m
}

/// Computational-basis truth table of the post-selected gate.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    /// `probabilities[input][output]`, inputs and outputs ordered HH, HV, VH, VV.
    pub probabilities: [[f64; 4]; 4],
    pub success: [f64; 4],
    /// Mean probability of the correct CNOT output.
    pub average_fidelity: f64,
}

pub fn truth_table(mode_match: f64) -> Result<TruthTable, OpticsError> {
    let gate = PostSelectedGate::cnot(ModeMatch::new(mode_match)?);
    let mut probabilities = [[0.0; 4]; 4];
    let mut success = [0.0; 4];
    let mut fidelity = 0.0;
    for input in 0..4 {
        let rho = StateVector::basis(4, input)?.density();
        let (out, p) = gate.apply(&rho)?;
        success[input] = p;
        for output in 0..4 {
            probabilities[input][output] = out.matrix()[(output, output)].re.clamp(0.0, 1.0);
        }
        let correct = (input >> 1) * 2 + ((input >> 1) ^ (input & 1));
        fidelity += probabilities[input][correct];
    }
    Ok(TruthTable {
        probabilities,
        success,
        average_fidelity: fidelity / 4.0,
    })
}

/// Alice's Bell analyzer: the PPBS CNOT, then the control arm in {D, A} and
/// the target arm behind a 45 degree half-wave plate in {H, V}.
#[derive(Debug, Clone)]
pub struct EffectiveControlMeasurement {
    gate: PostSelectedGate,
    analyzer: [StateVector; 4],
}

impl EffectiveControlMeasurement {
    pub fn new(mode_match: ModeMatch) -> Self {
        let h = FRAC_1_SQRT_2;
        let control = [[h, h], [h, -h]];
        // a click in PBS port H behind the 45 degree plate means the gate emitted V
        let target = [[0.0, 1.0], [1.0, 0.0]];
        let analyzer = Coincidence::ALL.map(|c| {
            let u = control[c.control_bit()];
            let v = target[c.target_bit()];
            StateVector::new(
                [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]
                    .map(|x| C64::new(x, 0.0))
                    .to_vec(),
            )
            .expect("nonzero")
        });
        Self {
            gate: PostSelectedGate::cnot(mode_match),
            analyzer,
        }
    }

    /// Post-selected coincidence probabilities in `Coincidence::ALL` order.
    pub fn coincidences(&self, rho: &DensityOperator) -> Result<[f64; 4], OpticsError> {
        let (out, _) = self.gate.apply(rho)?;
        Ok(self.analyzer.each_ref().map(|v| out.expectation(v).clamp(0.0, 1.0)))
    }

    /// Coincidences relabelled as `(c', r')` cells through the Bell dictionary.
    pub fn outcome_distribution(&self, rho: &DensityOperator) -> Result<Vec<f64>, OpticsError> {
        let counts = self.coincidences(rho)?;
        let mut dist = vec![0.0; 4];
        for (c, p) in Coincidence::ALL.into_iter().zip(counts) {
            dist[c.outcome().index(PrimeDim::QUBIT)] = p;
        }
        Ok(dist)
    }
}

pub fn effective_control_measurement(mode_match: f64) -> Result<EffectiveControlMeasurement, OpticsError> {
    Ok(EffectiveControlMeasurement::new(ModeMatch::new(mode_match)?))
}

/// Coincidence distribution for each Bell-state input, rows in `BellState::ALL` order.
pub fn bell_table(mode_match: f64) -> Result<[(BellState, [f64; 4]); 4], OpticsError> {
    let analyzer = effective_control_measurement(mode_match)?;
    let mut rows = [(BellState::PhiPlus, [0.0; 4]); 4];
    for (row, bell) in rows.iter_mut().zip(BellState::ALL) {
        let psi = crate::mub::entangled_state(PrimeDim::QUBIT, bell.label()).expect("qubit label");
        *row = (bell, analyzer.coincidences(&psi.density())?);
    }
    Ok(rows)
}

/// Sampled Hong-Ou-Mandel scan.
#[derive(Debug, Clone, PartialEq)]
pub struct HomCurve {
    pub delays: Vec<f64>,
    pub coincidences: Vec<f64>,
    pub visibility: f64,
}

/// Coincidence rate of two H photons meeting on `spec` with overlap
/// `M0 exp(-tau^2 / (2 width^2))` at each delay.
pub fn hom_scan(delays: &[f64], m0: f64, width: f64, spec: &PpbsSpec) -> Result<HomCurve, OpticsError> {
    let m0 = ModeMatch::new(m0)?;
    if !(width > 0.0) || !width.is_finite() {
        return Err(OpticsError::InvalidWidth(width));
    }
    let unitary = ppbs_unitary(spec, (Arm::Control, Arm::Target));
    let coincidences: Vec<f64> = delays
        .iter()
        .map(|tau| {
            let overlap = m0.get() * (-(tau * tau) / (2.0 * width * width)).exp();
            TwoPhotonState::hh_pair(ModeMatch(overlap.clamp(0.0, 1.0)))
                .apply_unitary(&unitary)
                .coincidence_probability()
        })
        .collect();
    let max = coincidences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = coincidences.iter().copied().fold(f64::INFINITY, f64::min);
    let visibility = if max > 0.0 { ((max - min) / max).clamp(0.0, 1.0) } else { 0.0 };
    Ok(HomCurve {
        delays: delays.to_vec(),
        coincidences,
        visibility,
    })
}

/// `2 T R M0 / (T^2 + R^2)` for H photons.
pub fn hom_visibility_closed_form(m0: f64, spec: &PpbsSpec) -> f64 {
    let r = spec.reflectivity_h;
    let t = 1.0 - r;
    2.0 * t * r * m0 / (t * t + r * r)
}
