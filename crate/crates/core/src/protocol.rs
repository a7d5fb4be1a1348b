//! The retrodiction protocol: channel, readout, decoder, trials and the game.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mub::{entangled_basis, entangled_state, gf_inverse, mub_basis, BasisLabel, EntangledLabel, MubError, Outcome, PrimeDim};
use crate::numerics::{born_probabilities, DensityOperator, Matrix, NumericsError, Subsystem};
use crate::optics::{EffectiveControlMeasurement, ModeMatch, OpticsError};

/// Cells at or below this probability count as theoretically forbidden.
pub const ALLOWED_CELL_TOL: f64 = 1e-12;

/// Shots per shard; shard boundaries never depend on the worker count.
pub const SHARD_SIZE: u64 = 1 << 16;

/// Runs with at most this many events keep every individual record.
pub const RECORD_LIMIT: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Mub(#[from] MubError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("noise {noise} cannot act at stage {stage}")]
    StageMismatch { stage: Stage, noise: NoiseModel },
    #[error("noise parameter {value} outside [0, 1]")]
    ParameterOutOfRange { value: f64 },
    #[error("the optics backend reads out the qubit Bell basis and needs d = 2, s = 0, got d = {d}, s = {s}")]
    OpticsUnsupported { d: u32, s: u32 },
    #[error("at most one control-gate noise model may be given")]
    MultipleControlGates,
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("expected {expected} outcome counts, got {found}")]
    CountsLength { expected: usize, found: usize },
    #[error("state dimension {found} does not match d^2 = {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target reliability {target} is outside the achievable interval [{low}, {high}]")]
    Unreachable { target: f64, low: f64, high: f64 },
}

/// Where in the pipeline a noise model acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SharedState,
    ControlGate,
    OutcomeDistribution,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::SharedState => "shared_state",
            Stage::ControlGate => "control_gate",
            Stage::OutcomeDistribution => "outcome_distribution",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "parameter", rename_all = "snake_case")]
pub enum NoiseModel {
    Ideal,
    /// `lambda rho + (1 - lambda) I / d^2` on the prepared pair.
    WernerShared(f64),
    /// `(1 - p) q + p uniform` on Alice's outcome distribution.
    OutcomeWhiteNoise(f64),
    /// Alice's readout through the PPBS gate at mode match `M`.
    OpticsBackend(f64),
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Ideal => f.write_str("ideal"),
            NoiseModel::WernerShared(x) => write!(f, "werner:{x}"),
            NoiseModel::OutcomeWhiteNoise(x) => write!(f, "white:{x}"),
            NoiseModel::OpticsBackend(x) => write!(f, "optics:{x}"),
        }
    }
}

impl NoiseModel {
    pub fn validate(self) -> Result<Self, ProtocolError> {
        match self {
            NoiseModel::Ideal => Ok(self),
            NoiseModel::WernerShared(x) | NoiseModel::OutcomeWhiteNoise(x) | NoiseModel::OpticsBackend(x) => {
                if (0.0..=1.0).contains(&x) {
                    Ok(self)
                } else {
                    Err(ProtocolError::ParameterOutOfRange { value: x })
                }
            }
        }
    }

    /// `None` for `Ideal`, which is the identity at every stage.
    pub fn stage(self) -> Option<Stage> {
        match self {
            NoiseModel::Ideal => None,
            NoiseModel::WernerShared(_) => Some(Stage::SharedState),
            NoiseModel::OpticsBackend(_) => Some(Stage::ControlGate),
            NoiseModel::OutcomeWhiteNoise(_) => Some(Stage::OutcomeDistribution),
        }
    }
}

/// A one-parameter noise family for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    WernerShared,
    OutcomeWhiteNoise,
    OpticsBackend,
}

impl NoiseFamily {
    pub fn at(self, parameter: f64) -> NoiseModel {
        match self {
            NoiseFamily::WernerShared => NoiseModel::WernerShared(parameter),
            NoiseFamily::OutcomeWhiteNoise => NoiseModel::OutcomeWhiteNoise(parameter),
            NoiseFamily::OpticsBackend => NoiseModel::OpticsBackend(parameter),
        }
    }

    /// Parameter value at which the family is noiseless.
    pub fn noiseless_parameter(self) -> f64 {
        match self {
            NoiseFamily::OutcomeWhiteNoise => 0.0,
            NoiseFamily::WernerShared | NoiseFamily::OpticsBackend => 1.0,
        }
    }
}

/// Probabilities over Alice's `d^2` outcomes, indexed by `Outcome::index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    d: PrimeDim,
    probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    fn new(d: PrimeDim, probabilities: Vec<f64>) -> Self {
        debug_assert_eq!(probabilities.len(), d.as_usize() * d.as_usize());
        Self { d, probabilities }
    }

    pub fn uniform(d: PrimeDim) -> Self {
        let n = d.as_usize() * d.as_usize();
        Self::new(d, vec![1.0 / n as f64; n])
    }

    pub fn d(&self) -> PrimeDim {
        self.d
    }

    pub fn get(&self, outcome: Outcome) -> f64 {
        self.probabilities[outcome.index(self.d)]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn iter(&self) -> impl Iterator<Item = (Outcome, f64)> + '_ {
        let d = self.d;
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(k, &p)| (Outcome::from_index(d, k), p))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    fn mix_uniform(&self, p: f64) -> Self {
        let u = 1.0 / self.probabilities.len() as f64;
        Self::new(self.d, self.probabilities.iter().map(|q| (1.0 - p) * q + p * u).collect())
    }
}

/// How Alice reads out the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMeasurement {
    /// Exact projection onto `{|c', r'; s>}`.
    Ideal,
    /// The PPBS Bell analyzer at the given mode match (qubits only).
    Optics(ModeMatch),
}

/// An object a noise model can act on, tagged by its stage.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseTarget {
    SharedState(DensityOperator),
    ControlGate(ControlMeasurement),
    OutcomeDistribution(OutcomeDistribution),
}

impl NoiseTarget {
    pub fn stage(&self) -> Stage {
        match self {
            NoiseTarget::SharedState(_) => Stage::SharedState,
            NoiseTarget::ControlGate(_) => Stage::ControlGate,
            NoiseTarget::OutcomeDistribution(_) => Stage::OutcomeDistribution,
        }
    }
}

/// Applies `noise` at `stage`. `Ideal` is the identity everywhere.
pub fn apply_noise(stage: Stage, noise: NoiseModel, target: NoiseTarget) -> Result<NoiseTarget, ProtocolError> {
    let noise = noise.validate()?;
    if target.stage() != stage || noise.stage().is_some_and(|s| s != stage) {
        return Err(ProtocolError::StageMismatch { stage, noise });
    }
    Ok(match (noise, target) {
        (NoiseModel::Ideal, target) => target,
        (NoiseModel::WernerShared(lambda), NoiseTarget::SharedState(rho)) => {
            let mixed = DensityOperator::maximally_mixed(rho.dim())?;
            NoiseTarget::SharedState(rho.mix(&mixed, lambda))
        }
        (NoiseModel::OpticsBackend(m), NoiseTarget::ControlGate(_)) => {
            NoiseTarget::ControlGate(ControlMeasurement::Optics(ModeMatch::new(m)?))
        }
        (NoiseModel::OutcomeWhiteNoise(p), NoiseTarget::OutcomeDistribution(q)) => {
            NoiseTarget::OutcomeDistribution(q.mix_uniform(p))
        }
        (noise, _) => return Err(ProtocolError::StageMismatch { stage, noise }),
    })
}

fn check_pair_dim(rho: &DensityOperator, d: PrimeDim) -> Result<usize, ProtocolError> {
    let n = d.as_usize();
    if rho.dim() != n * n {
        return Err(ProtocolError::DimensionMismatch {
            expected: n * n,
            found: rho.dim(),
        });
    }
    Ok(n)
}

/// Subsystem the King measures. The decoding rule is exact for every `s`
/// only with the projector on the first factor of `|n>|c - n>`.
pub const KING_SUBSYSTEM: Subsystem = Subsystem::First;

/// The King's nonselective measurement in basis `b` on `KING_SUBSYSTEM`:
/// `sum_m (P_m x I) rho (P_m x I)` with `P_m = |m; b><m; b|`.
pub fn king_channel(rho: &DensityOperator, b: BasisLabel, d: PrimeDim) -> Result<DensityOperator, ProtocolError> {
    king_channel_on(rho, b, d, KING_SUBSYSTEM)
}

/// Nonselective measurement in basis `b` on the given subsystem.
pub fn king_channel_on(
    rho: &DensityOperator,
    b: BasisLabel,
    d: PrimeDim,
    measured: Subsystem,
) -> Result<DensityOperator, ProtocolError> {
    let n = check_pair_dim(rho, d)?;
    let projectors: Vec<Matrix> = mub_basis(d, b)?.iter().map(|v| v.outer()).collect();
    let index = |kept: usize, hit: usize| match measured {
        Subsystem::First => hit * n + kept,
        Subsystem::Second => kept * n + hit,
    };
    let m = rho.matrix();
    let mut out = Matrix::zeros(n * n);
    // blockwise over the untouched factor: B' = sum_m P_m B P_m
    let mut block = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for c in 0..n {
                    block[(a, c)] = m[(index(i, a), index(j, c))];
                }
            }
            let mut acc = Matrix::zeros(n);
            for p in &projectors {
                acc = acc.add(&p.matmul(&block).matmul(p));
            }
            for a in 0..n {
                for c in 0..n {
                    out[(index(i, a), index(j, c))] = acc[(a, c)];
                }
            }
        }
    }
    Ok(DensityOperator::from_matrix_unchecked(out))
}

/// Alice's outcome probabilities in the entangled basis `{|c', r'; s>}`.
pub fn alice_outcome_distribution(rho: &DensityOperator, s: u32, d: PrimeDim) -> Result<OutcomeDistribution, ProtocolError> {
    check_pair_dim(rho, d)?;
    let basis = entangled_basis(d, s)?;
    Ok(OutcomeDistribution::new(d, born_probabilities(rho, &basis)?))
}

/// Decoder verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecodeResult {
    Conclusive(BasisLabel),
    Inconclusive,
}

impl DecodeResult {
    pub fn basis(self) -> Option<BasisLabel> {
        match self {
            DecodeResult::Conclusive(b) => Some(b),
            DecodeResult::Inconclusive => None,
        }
    }
}

/// Infers the King's basis from the prepared label and Alice's outcome.
///
/// `c != c'` gives phase basis `s + (r - r') / (c' - c)` over GF(d);
/// `c = c'`, `r != r'` gives the computational basis; otherwise inconclusive.
pub fn decode(initial: EntangledLabel, outcome: Outcome, d: PrimeDim) -> Result<DecodeResult, ProtocolError> {
    let initial = initial.validate(d)?;
    d.check_residue(outcome.c)?;
    d.check_residue(outcome.r)?;
    Ok(if initial.c != outcome.c {
        let inv = gf_inverse(outcome.c as i64 - initial.c as i64, d)?;
        let b = initial.s as i64 + (initial.r as i64 - outcome.r as i64) * inv as i64;
        DecodeResult::Conclusive(BasisLabel::Phase(d.reduce(b)))
    } else if initial.r != outcome.r {
        DecodeResult::Conclusive(BasisLabel::Computational)
    } else {
        DecodeResult::Inconclusive
    })
}

/// Ideal outcome distribution for every basis choice.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalTable {
    pub d: PrimeDim,
    pub initial: EntangledLabel,
    /// One row per basis label, in `PrimeDim::basis_labels` order.
    pub rows: Vec<(BasisLabel, OutcomeDistribution)>,
}

impl TheoreticalTable {
    pub fn row(&self, b: BasisLabel) -> &OutcomeDistribution {
        &self.rows[b.ordinal()].1
    }

    /// Whether the ideal protocol can produce `outcome` when the King used `b`.
    pub fn is_allowed(&self, b: BasisLabel, outcome: Outcome) -> bool {
        self.row(b).get(outcome) > ALLOWED_CELL_TOL
    }

    /// Mass `dist` puts on the cells allowed under `b`.
    pub fn allowed_mass(&self, b: BasisLabel, dist: &OutcomeDistribution) -> f64 {
        dist.iter()
            .filter(|(o, _)| self.is_allowed(b, *o))
            .map(|(_, p)| p)
            .sum()
    }
}

pub fn theoretical_table(d: PrimeDim, initial: EntangledLabel) -> Result<TheoreticalTable, ProtocolError> {
    let initial = initial.validate(d)?;
    let rho = entangled_state(d, initial)?.density();
    let rows = d
        .basis_labels()
        .into_iter()
        .map(|b| {
            let after = king_channel(&rho, b, d)?;
            Ok((b, alice_outcome_distribution(&after, initial.s, d)?))
        })
        .collect::<Result<_, ProtocolError>>()?;
    Ok(TheoreticalTable { d, initial, rows })
}

/// Noise models sorted into the three pipeline stages.
#[derive(Debug, Clone, Default)]
struct NoisePipeline {
    shared: Vec<NoiseModel>,
    gate: Option<NoiseModel>,
    outcome: Vec<NoiseModel>,
}

impl NoisePipeline {
    fn new(d: PrimeDim, initial: EntangledLabel, noise: &[NoiseModel]) -> Result<Self, ProtocolError> {
        let mut pipeline = Self::default();
        for &n in noise {
            let n = n.validate()?;
            match n.stage() {
                None => {}
                Some(Stage::SharedState) => pipeline.shared.push(n),
                Some(Stage::OutcomeDistribution) => pipeline.outcome.push(n),
                Some(Stage::ControlGate) => {
                    if d.get() != 2 || initial.s != 0 {
                        return Err(ProtocolError::OpticsUnsupported { d: d.get(), s: initial.s });
                    }
                    if pipeline.gate.replace(n).is_some() {
                        return Err(ProtocolError::MultipleControlGates);
                    }
                }
            }
        }
        Ok(pipeline)
    }
}

/// Analytic outcome distributions per basis choice under a noise configuration.
#[derive(Debug, Clone)]
pub struct NoisyProtocol {
    pub d: PrimeDim,
    pub initial: EntangledLabel,
    prepared: DensityOperator,
    gate: Option<EffectiveControlMeasurement>,
    outcome_noise: Vec<NoiseModel>,
}

impl NoisyProtocol {
    pub fn new(d: PrimeDim, initial: EntangledLabel, noise: &[NoiseModel]) -> Result<Self, ProtocolError> {
        let initial = initial.validate(d)?;
        let pipeline = NoisePipeline::new(d, initial, noise)?;
        let mut target = NoiseTarget::SharedState(entangled_state(d, initial)?.density());
        for n in &pipeline.shared {
            target = apply_noise(Stage::SharedState, *n, target)?;
        }
        let NoiseTarget::SharedState(prepared) = target else {
            unreachable!("shared-state noise keeps the stage")
        };
        let mut gate = NoiseTarget::ControlGate(ControlMeasurement::Ideal);
        if let Some(n) = pipeline.gate {
            gate = apply_noise(Stage::ControlGate, n, gate)?;
        }
        let gate = match gate {
            NoiseTarget::ControlGate(ControlMeasurement::Optics(m)) => Some(EffectiveControlMeasurement::new(m)),
            _ => None,
        };
        Ok(Self {
            d,
            initial,
            prepared,
            gate,
            outcome_noise: pipeline.outcome,
        })
    }

    pub fn distribution(&self, b: BasisLabel) -> Result<OutcomeDistribution, ProtocolError> {
        let after = king_channel(&self.prepared, b.validate(self.d)?, self.d)?;
        let dist = match &self.gate {
            None => alice_outcome_distribution(&after, self.initial.s, self.d)?,
            Some(gate) => OutcomeDistribution::new(self.d, gate.outcome_distribution(&after)?),
        };
        let mut target = NoiseTarget::OutcomeDistribution(dist);
        for n in &self.outcome_noise {
            target = apply_noise(Stage::OutcomeDistribution, *n, target)?;
        }
        let NoiseTarget::OutcomeDistribution(dist) = target else {
            unreachable!("outcome noise keeps the stage")
        };
        Ok(dist)
    }
}

/// Analytic expected-mass reliability averaged uniformly over the d + 1 choices.
pub fn analytic_reliability(d: PrimeDim, initial: EntangledLabel, noise: &[NoiseModel]) -> Result<f64, ProtocolError> {
    let table = theoretical_table(d, initial)?;
    let protocol = NoisyProtocol::new(d, initial, noise)?;
    let labels = d.basis_labels();
    let mut total = 0.0;
    for &b in &labels {
        total += table.allowed_mass(b, &protocol.distribution(b)?);
    }
    Ok(total / labels.len() as f64)
}

/// A calibrated noise parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub family: NoiseFamily,
    pub parameter: f64,
    pub achieved: f64,
}

/// Finds the family parameter whose analytic reliability equals `target`.
///
/// Bisects on the analytic (not sampled) reliability, which is monotone in
/// each family's parameter.
pub fn calibrate_noise(
    target: f64,
    family: NoiseFamily,
    d: PrimeDim,
    initial: EntangledLabel,
) -> Result<Calibration, ProtocolError> {
    let eval = |x: f64| analytic_reliability(d, initial, &[family.at(x)]);
    let clean = family.noiseless_parameter();
    let noisy = 1.0 - clean;
    let (f_clean, f_noisy) = (eval(clean)?, eval(noisy)?);
    let (low, high) = if f_clean < f_noisy { (f_clean, f_noisy) } else { (f_noisy, f_clean) };
    const SLACK: f64 = 1e-12;
    if !(target >= low - SLACK && target <= high + SLACK) {
        return Err(ProtocolError::Unreachable { target, low, high });
    }
    for (x, f) in [(clean, f_clean), (noisy, f_noisy)] {
        if (f - target).abs() <= SLACK {
            return Ok(Calibration {
                family,
                parameter: x,
                achieved: f,
            });
        }
    }
    let (mut a, mut fa) = (clean, f_clean);
    let mut b = noisy;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let fm = eval(mid)?;
        if (fm - target).signum() == (fa - target).signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let parameter = 0.5 * (a + b);
    Ok(Calibration {
        family,
        parameter,
        achieved: eval(parameter)?,
    })
}

/// A run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub d: PrimeDim,
    pub initial: EntangledLabel,
    pub noise: Vec<NoiseModel>,
    pub shots: u64,
    pub seed: u64,
}

/// Which basis the King uses for each batch of shots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BSchedule {
    /// `shots` shots for each listed basis, in order.
    Each(Vec<BasisLabel>),
    /// `shots` shots in total, each with an independent uniform basis.
    UniformRandom,
}

impl BSchedule {
    pub fn all_bases(d: PrimeDim) -> Self {
        BSchedule::Each(d.basis_labels())
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of stream `k` derived from a scenario seed: `seed ^ splitmix64(k)`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    seed ^ splitmix64(k)
}

/// The generator behind every sampled quantity: ChaCha8 seeded from a `u64`.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A contiguous block of shots with its own generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shard {
    pub ordinal: u64,
    /// `None` draws a uniform basis per shot.
    pub b: Option<BasisLabel>,
    pub shots: u64,
}

/// One sampled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub b_true: BasisLabel,
    pub outcome: Outcome,
    pub decoded: DecodeResult,
}

/// Raw counts from one or more shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    /// `counts[b.ordinal()][outcome.index()]`.
    counts: Vec<Vec<u64>>,
    records: Vec<TrialRecord>,
}

impl Tally {
    fn empty(d: PrimeDim) -> Self {
        let n = d.as_usize();
        Self {
            counts: vec![vec![0; n * n]; n + 1],
            records: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: Tally) {
        for (row, other_row) in self.counts.iter_mut().zip(other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
        self.records.extend(other.records);
    }
}

/// Inverse-CDF sampler over the `d^2` cells.
#[derive(Debug, Clone)]
struct CellSampler {
    cumulative: Vec<f64>,
}

impl CellSampler {
    fn new(dist: &OutcomeDistribution) -> Self {
        let total = dist.total();
        let mut acc = 0.0;
        let cumulative = dist
            .probabilities()
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        // zero-probability trailing cells can never be chosen
        let mut k = k.min(self.cumulative.len() - 1);
        while k > 0 && self.cumulative[k] == self.cumulative[k - 1] {
            k -= 1;
        }
        k
    }
}

/// Everything needed to sample a scenario, precomputed once.
#[derive(Debug, Clone)]
pub struct TrialPlan {
    scenario: Scenario,
    schedule: BSchedule,
    table: TheoreticalTable,
    distributions: Vec<OutcomeDistribution>,
    samplers: Vec<CellSampler>,
    decoded: Vec<DecodeResult>,
    keep_records: bool,
}

impl TrialPlan {
    pub fn new(scenario: Scenario, schedule: BSchedule) -> Result<Self, ProtocolError> {
        let d = scenario.d;
        if scenario.shots == 0 {
            return Err(ProtocolError::ZeroShots);
        }
        if let BSchedule::Each(list) = &schedule {
            for b in list {
                b.validate(d)?;
            }
        }
        let protocol = NoisyProtocol::new(d, scenario.initial, &scenario.noise)?;
        let distributions = d
            .basis_labels()
            .into_iter()
            .map(|b| protocol.distribution(b))
            .collect::<Result<Vec<_>, _>>()?;
        let samplers = distributions.iter().map(CellSampler::new).collect();
        let decoded = Outcome::all(d)
            .map(|o| decode(scenario.initial, o, d))
            .collect::<Result<_, _>>()?;
        let total_events = match &schedule {
            BSchedule::Each(list) => scenario.shots.saturating_mul(list.len() as u64),
            BSchedule::UniformRandom => scenario.shots,
        };
        Ok(Self {
            table: theoretical_table(d, scenario.initial)?,
            keep_records: total_events <= RECORD_LIMIT,
            scenario,
            schedule,
            distributions,
            samplers,
            decoded,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &TheoreticalTable {
        &self.table
    }

    /// Analytic distribution the sampler draws from for basis `b`.
    pub fn distribution(&self, b: BasisLabel) -> &OutcomeDistribution {
        &self.distributions[b.ordinal()]
    }

    /// Fixed shard decomposition; ordinals are global and dense.
    pub fn shards(&self) -> Vec<Shard> {
        let split = |b: Option<BasisLabel>, out: &mut Vec<Shard>| {
            let mut left = self.scenario.shots;
            while left > 0 {
                let shots = left.min(SHARD_SIZE);
                out.push(Shard {
                    ordinal: out.len() as u64,
                    b,
                    shots,
                });
                left -= shots;
            }
        };
        let mut shards = Vec::new();
        match &self.schedule {
            BSchedule::Each(list) => {
                for &b in list {
                    split(Some(b), &mut shards);
                }
            }
            BSchedule::UniformRandom => split(None, &mut shards),
        }
        shards
    }

    pub fn run_shard(&self, shard: &Shard) -> Tally {
        let d = self.scenario.d;
        let labels = d.basis_labels();
        let mut rng = rng_for(derive_seed(self.scenario.seed, shard.ordinal));
        let mut tally = Tally::empty(d);
        for _ in 0..shard.shots {
            let b = match shard.b {
                Some(b) => b,
                None => labels[rng.gen_range(0..labels.len())],
            };
            let cell = self.samplers[b.ordinal()].sample(rng.gen::<f64>());
            tally.counts[b.ordinal()][cell] += 1;
            if self.keep_records {
                tally.records.push(TrialRecord {
                    b_true: b,
                    outcome: Outcome::from_index(d, cell),
                    decoded: self.decoded[cell],
                });
            }
        }
        tally
    }

    /// Merges shard tallies (in any order) into statistics.
    pub fn finish(&self, tallies: impl IntoIterator<Item = (u64, Tally)>) -> TrialStats {
        let d = self.scenario.d;
        let mut ordered: Vec<(u64, Tally)> = tallies.into_iter().collect();
        ordered.sort_by_key(|(k, _)| *k);
        let mut tally = Tally::empty(d);
        for (_, t) in ordered {
            tally.merge(t);
        }
        self.stats_from(tally)
    }

    fn stats_from(&self, tally: Tally) -> TrialStats {
        let d = self.scenario.d;
        let exercised: Vec<BasisLabel> = match &self.schedule {
            BSchedule::Each(list) => {
                let mut l = list.clone();
                l.sort();
                l.dedup();
                l
            }
            BSchedule::UniformRandom => d.basis_labels(),
        };
        let mut counts = Vec::new();
        let mut confusion = BTreeMap::new();
        let (mut total, mut conclusive, mut correct, mut allowed) = (0u64, 0u64, 0u64, 0u64);
        for &b in &exercised {
            for k in [DecodeResult::Inconclusive]
                .into_iter()
                .chain(d.basis_labels().into_iter().map(DecodeResult::Conclusive))
            {
                confusion.insert((b, k), 0u64);
            }
            for (cell, &n) in tally.counts[b.ordinal()].iter().enumerate() {
                let outcome = Outcome::from_index(d, cell);
                counts.push(CountEntry {
                    b_true: b,
                    outcome,
                    count: n,
                });
                let verdict = self.decoded[cell];
                *confusion.entry((b, verdict)).or_insert(0) += n;
                total += n;
                if self.table.is_allowed(b, outcome) {
                    allowed += n;
                }
                if let DecodeResult::Conclusive(guess) = verdict {
                    conclusive += n;
                    if guess == b {
                        correct += n;
                    }
                }
            }
        }
        let frac = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        TrialStats {
            total_events: total,
            counts,
            confusion: confusion
                .into_iter()
                .map(|((b_true, decoded), count)| ConfusionEntry { b_true, decoded, count })
                .collect(),
            conclusive_rate: frac(conclusive, total),
            reliability_expected_mass: frac(allowed, total),
            reliability_conclusive_accuracy: frac(correct, conclusive),
            records: tally.records,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub b_true: BasisLabel,
    pub outcome: Outcome,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub b_true: BasisLabel,
    pub decoded: DecodeResult,
    pub count: u64,
}

/// Aggregated Monte Carlo results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub total_events: u64,
    /// Every `(b_true, outcome)` cell of every exercised basis, sorted.
    pub counts: Vec<CountEntry>,
    /// Every `(b_true, verdict)` pair of every exercised basis, sorted.
    pub confusion: Vec<ConfusionEntry>,
    pub conclusive_rate: f64,
    /// Fraction of events in cells the ideal protocol allows for the true basis.
    pub reliability_expected_mass: f64,
    /// Fraction of conclusive verdicts naming the true basis (0 when none are conclusive).
    pub reliability_conclusive_accuracy: f64,
    /// Individual events, kept only for runs of at most `RECORD_LIMIT` events.
    pub records: Vec<TrialRecord>,
}

impl TrialStats {
    pub fn count(&self, b: BasisLabel, outcome: Outcome) -> u64 {
        self.counts
            .iter()
            .find(|e| e.b_true == b && e.outcome == outcome)
            .map_or(0, |e| e.count)
    }

    /// Counts for one basis in `Outcome::index` order.
    pub fn counts_for(&self, b: BasisLabel, d: PrimeDim) -> Vec<u64> {
        let mut out = vec![0; d.as_usize() * d.as_usize()];
        for e in self.counts.iter().filter(|e| e.b_true == b) {
            out[e.outcome.index(d)] = e.count;
        }
        out
    }
}

/// Samples a scenario on the calling thread.
pub fn run_trials(scenario: &Scenario, schedule: &BSchedule) -> Result<TrialStats, ProtocolError> {
    let plan = TrialPlan::new(scenario.clone(), schedule.clone())?;
    let tallies = plan.shards().iter().map(|s| (s.ordinal, plan.run_shard(s))).collect::<Vec<_>>();
    Ok(plan.finish(tallies))
}

/// Majority vote over the conclusive cells of one round.
///
/// Ties go to the lowest basis label. All-inconclusive input gives
/// `Inconclusive` with confidence 0.
pub fn decide_round(counts: &[u64], initial: EntangledLabel, d: PrimeDim) -> Result<(DecodeResult, f64), ProtocolError> {
    let cells = d.as_usize() * d.as_usize();
    if counts.len() != cells {
        return Err(ProtocolError::CountsLength {
            expected: cells,
            found: counts.len(),
        });
    }
    let mut votes = vec![0u64; d.as_usize() + 1];
    for (k, &n) in counts.iter().enumerate() {
        if let DecodeResult::Conclusive(b) = decode(initial, Outcome::from_index(d, k), d)? {
            votes[b.ordinal()] += n;
        }
    }
    let total: u64 = votes.iter().sum();
    if total == 0 {
        return Ok((DecodeResult::Inconclusive, 0.0));
    }
    let labels = d.basis_labels();
    let mut best = 0;
    for k in 1..votes.len() {
        if votes[k] > votes[best] {
            best = k;
        }
    }
    Ok((DecodeResult::Conclusive(labels[best]), votes[best] as f64 / total as f64))
}

/// Supplies the King's choice for each round.
pub trait KingSource {
    /// `None` ends the game.
    fn choose(&mut self, round: usize, d: PrimeDim) -> Option<BasisLabel>;
}

/// Replays a fixed list of choices.
#[derive(Debug, Clone)]
pub struct ScriptedKing {
    choices: Vec<BasisLabel>,
}

impl ScriptedKing {
    pub fn new(choices: Vec<BasisLabel>) -> Self {
        Self { choices }
    }
}

impl KingSource for ScriptedKing {
    fn choose(&mut self, round: usize, _d: PrimeDim) -> Option<BasisLabel> {
        self.choices.get(round).copied()
    }
}

/// Picks uniformly among the d + 1 bases with its own seeded generator.
#[derive(Debug, Clone)]
pub struct RandomKing {
    rng: ChaCha8Rng,
}

impl RandomKing {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng_for(derive_seed(seed, GAME_KING_STREAM)),
        }
    }
}

impl KingSource for RandomKing {
    fn choose(&mut self, _round: usize, d: PrimeDim) -> Option<BasisLabel> {
        let labels = d.basis_labels();
        Some(labels[self.rng.gen_range(0..labels.len())])
    }
}

const GAME_ROUND_STREAM: u64 = 1 << 63;
const GAME_KING_STREAM: u64 = (1 << 63) | (1 << 62);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub b_true: BasisLabel,
    pub guess: DecodeResult,
    pub confidence: f64,
    /// Outcome counts in `Outcome::index` order.
    pub counts: Vec<u64>,
}

impl RoundRecord {
    pub fn hit(&self) -> bool {
        self.guess == DecodeResult::Conclusive(self.b_true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub rounds: Vec<RoundRecord>,
    pub hit_rate: f64,
}

impl GameReport {
    pub fn hits(&self) -> usize {
        self.rounds.iter().filter(|r| r.hit()).count()
    }
}

/// Plays one round: `shots` shots with the King's basis `b`, then a majority vote.
///
/// The round's generator is seeded from the scenario seed and the round index.
pub fn play_round(scenario: &Scenario, round: usize, b: BasisLabel, shots: u64) -> Result<RoundRecord, ProtocolError> {
    let round_scenario = Scenario {
        shots,
        seed: derive_seed(scenario.seed, GAME_ROUND_STREAM | round as u64),
        ..scenario.clone()
    };
    let stats = run_trials(&round_scenario, &BSchedule::Each(vec![b]))?;
    let counts = stats.counts_for(b, scenario.d);
    let (guess, confidence) = decide_round(&counts, scenario.initial, scenario.d)?;
    Ok(RoundRecord {
        round,
        b_true: b,
        guess,
        confidence,
        counts,
    })
}

/// Plays up to `rounds` rounds, calling `on_round` after each.
pub fn run_game(
    rounds: usize,
    shots_per_round: u64,
    scenario: &Scenario,
    king: &mut dyn KingSource,
    mut on_round: impl FnMut(&RoundRecord),
) -> Result<GameReport, ProtocolError> {
    if shots_per_round == 0 {
        return Err(ProtocolError::ZeroShots);
    }
    let mut records = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let Some(b) = king.choose(round, scenario.d) else {
            break;
        };
        let record = play_round(scenario, round, b.validate(scenario.d)?, shots_per_round)?;
        on_round(&record);
        records.push(record);
    }
    let hits = records.iter().filter(|r| r.hit()).count();
    let hit_rate = if records.is_empty() { 0.0 } else { hits as f64 / records.len() as f64 };
    Ok(GameReport {
        rounds: records,
        hit_rate,
    })
}
