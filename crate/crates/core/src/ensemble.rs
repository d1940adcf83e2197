//! Many independent copies of one machine and the statistics of what they
//! learn.
//!
//! Member `i` draws from its own ChaCha stream `i` keyed by the master seed,
//! so a report depends only on `(config, program, n, seed)` and not on how
//! the members are scheduled across threads. Aggregation runs in member
//! order after all members finish.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::machine::{Machine, MachineConfig, MachineFault, Mode, PinTiming, RunStatus, Transfer, PIN_COUNT};
use crate::physics::PhysicsError;
use crate::quantum::{shannon_entropy, Bit};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least one member")]
    Empty,
    #[error("lambda_jitter = {0} must lie in [0, 1)")]
    BadJitter(f64),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("member {index}: {source}")]
    Member {
        index: u64,
        #[source]
        source: MachineFault,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Everything that determines an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub machine: MachineConfig,
    pub n_members: u64,
    pub master_seed: u64,
    pub max_cycles: u64,
    /// Per-member terminal velocity is scaled by a uniform draw from
    /// `[1 - lambda_jitter, 1 + lambda_jitter]`.
    pub lambda_jitter: f64,
}

impl EnsembleSpec {
    pub fn new(machine: MachineConfig, n_members: u64, master_seed: u64, max_cycles: u64) -> Self {
        Self {
            machine,
            n_members,
            master_seed,
            max_cycles,
            lambda_jitter: 0.0,
        }
    }
}

/// Random source used by every simulation entry point.
pub type SimRng = ChaCha8Rng;

/// Random source of member `index`.
pub fn member_rng(master_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PinTally {
    pub firings: u64,
    pub reads: u64,
    pub writes: u64,
    pub ones: u64,
    pub surprisal_bits: f64,
}

/// Final state of one member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberOutcome {
    pub index: u64,
    pub status: RunStatus,
    pub cycles: u64,
    /// Write-back outcomes in order, one character per bit.
    pub macrostate: String,
    pub information_bits: f64,
    pub predicted_bits: f64,
    pub pruned_mass: f64,
    pub peak_branch_count: usize,
    pub lambda_scale: f64,
    #[serde(skip)]
    pub pins: [PinTally; PIN_COUNT],
}

/// Runs member `index` to completion.
pub fn run_member(spec: &EnsembleSpec, image: &[u16], index: u64) -> Result<MemberOutcome, EnsembleError> {
    let mut rng = member_rng(spec.master_seed, index);
    let lambda_scale = if spec.lambda_jitter > 0.0 {
        1.0 + spec.lambda_jitter * rng.gen_range(-1.0..=1.0)
    } else {
        1.0
    };
    let config = MachineConfig {
        lambda_scale,
        ..spec.machine.clone()
    };
    let member_fault = |source| EnsembleError::Member { index, source };
    let mut machine = Machine::new(config, image).map_err(member_fault)?;
    let outcome = machine.run(spec.max_cycles, &mut rng).map_err(member_fault)?;

    let mut pins = [PinTally::default(); PIN_COUNT];
    for (tally, pin) in pins.iter_mut().zip(machine.pins()) {
        for e in pin.log() {
            tally.firings += 1;
            match e.transfer {
                Transfer::Read => tally.reads += 1,
                Transfer::Write => tally.writes += 1,
            }
            if e.outcome == Bit::One {
                tally.ones += 1;
            }
            tally.surprisal_bits += e.surprisal;
        }
    }
    Ok(MemberOutcome {
        index,
        status: outcome.status,
        cycles: machine.cycle(),
        macrostate: machine.macrostate_key(),
        information_bits: machine.information_bits(),
        predicted_bits: machine.predicted_bits(),
        pruned_mass: machine.registers().pruned_mass(),
        peak_branch_count: machine.registers().peak_branch_count(),
        lambda_scale,
        pins,
    })
}

fn check(spec: &EnsembleSpec) -> Result<PinTiming, EnsembleError> {
    if spec.n_members == 0 {
        return Err(EnsembleError::Empty);
    }
    if !(spec.lambda_jitter.is_finite() && (0.0..1.0).contains(&spec.lambda_jitter)) {
        return Err(EnsembleError::BadJitter(spec.lambda_jitter));
    }
    Ok(spec.machine.timing()?)
}

/// Runs every member in parallel. Results are in member order; on failure
/// the lowest failing index is reported.
pub fn run_members(spec: &EnsembleSpec, image: &[u16]) -> Result<Vec<MemberOutcome>, EnsembleError> {
    check(spec)?;
    let results: Vec<Result<MemberOutcome, EnsembleError>> = (0..spec.n_members)
        .into_par_iter()
        .map(|i| run_member(spec, image, i))
        .collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinSummary {
    pub pin: u8,
    pub firings: u64,
    pub reads: u64,
    pub writes: u64,
    /// Fraction of firings that read a 1.
    pub one_frequency: f64,
    pub mean_surprisal_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub n_members: u64,
    pub master_seed: u64,
    pub max_cycles: u64,
    pub lambda_jitter: f64,
    pub config: MachineConfig,
    pub timing: PinTiming,
    pub halted: u64,
    pub timeouts: u64,
    pub macrostate_count: usize,
    /// Members per macrostate key.
    pub histogram: BTreeMap<String, u64>,
    /// Shannon entropy of the observed macrostate frequencies.
    pub empirical_entropy_bits: f64,
    /// Mean over members of the entropy expected from the branch weights
    /// before each write-back.
    pub predicted_entropy_bits: f64,
    /// Mean summed surprisal per member.
    pub total_information_acquired_bits: f64,
    pub information_std_error_bits: f64,
    pub pruned_mass_max: f64,
    pub peak_branch_count_max: usize,
    pub pins: Vec<PinSummary>,
}

/// Aggregates member outcomes, in member order.
pub fn summarize(spec: &EnsembleSpec, timing: PinTiming, members: &[MemberOutcome]) -> EnsembleReport {
    let n = members.len() as f64;
    let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
    let mut tallies = [PinTally::default(); PIN_COUNT];
    for m in members {
        *histogram.entry(m.macrostate.clone()).or_default() += 1;
        for (t, p) in tallies.iter_mut().zip(&m.pins) {
            t.firings += p.firings;
            t.reads += p.reads;
            t.writes += p.writes;
            t.ones += p.ones;
            t.surprisal_bits += p.surprisal_bits;
        }
    }
    let frequencies: Vec<f64> = histogram.values().map(|&c| c as f64 / n).collect();
    let mean = |f: fn(&MemberOutcome) -> f64| members.iter().map(f).sum::<f64>() / n;
    let info_mean = mean(|m| m.information_bits);
    let info_std_error = if members.len() > 1 {
        let var = members
            .iter()
            .map(|m| (m.information_bits - info_mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let pins = tallies
        .iter()
        .enumerate()
        .map(|(i, t)| PinSummary {
            pin: i as u8,
            firings: t.firings,
            reads: t.reads,
            writes: t.writes,
            one_frequency: ratio(t.ones, t.firings),
            mean_surprisal_bits: if t.firings == 0 {
                0.0
            } else {
                t.surprisal_bits / t.firings as f64
            },
        })
        .collect();
    let timeouts = members.iter().filter(|m| m.status == RunStatus::Timeout).count() as u64;
    EnsembleReport {
        n_members: members.len() as u64,
        master_seed: spec.master_seed,
        max_cycles: spec.max_cycles,
        lambda_jitter: spec.lambda_jitter,
        config: spec.machine.clone(),
        timing,
        halted: members.len() as u64 - timeouts,
        timeouts,
        macrostate_count: histogram.len(),
        histogram,
        empirical_entropy_bits: shannon_entropy(&frequencies).expect("frequencies sum to one"),
        predicted_entropy_bits: mean(|m| m.predicted_bits),
        total_information_acquired_bits: info_mean,
        information_std_error_bits: info_std_error,
        pruned_mass_max: members.iter().map(|m| m.pruned_mass).fold(0.0, f64::max),
        peak_branch_count_max: members.iter().map(|m| m.peak_branch_count).max().unwrap_or(0),
        pins,
    }
}

pub fn run_ensemble(spec: &EnsembleSpec, image: &[u16]) -> Result<EnsembleReport, EnsembleError> {
    let timing = check(spec)?;
    let members = run_members(spec, image)?;
    Ok(summarize(spec, timing, &members))
}

/// Report plus the per-member outcomes it was built from.
pub fn run_ensemble_with_members(
    spec: &EnsembleSpec,
    image: &[u16],
) -> Result<(EnsembleReport, Vec<MemberOutcome>), EnsembleError> {
    let timing = check(spec)?;
    let members = run_members(spec, image)?;
    Ok((summarize(spec, timing, &members), members))
}

impl EnsembleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One CSV row per member.
pub fn write_members_csv<W: Write>(out: W, members: &[MemberOutcome]) -> Result<(), EnsembleError> {
    let mut w = csv::Writer::from_writer(out);
    for m in members {
        w.serialize(m)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// How one register model behaved on a program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub mode: Mode,
    /// Whether every member kept a single microstate throughout.
    pub always_pure: bool,
    pub peak_branch_count: usize,
    pub macrostate_count: usize,
    pub unique_outcome: bool,
    pub empirical_entropy_bits: f64,
    pub information_bits: f64,
    pub capacity_bits: u32,
    pub pruned_mass_max: f64,
}

impl ModelSummary {
    fn from_report(report: &EnsembleReport) -> Self {
        Self {
            mode: report.config.mode,
            always_pure: report.peak_branch_count_max <= 1,
            peak_branch_count: report.peak_branch_count_max,
            macrostate_count: report.macrostate_count,
            unique_outcome: report.macrostate_count == 1,
            empirical_entropy_bits: report.empirical_entropy_bits,
            information_bits: report.total_information_acquired_bits,
            capacity_bits: report.config.capacity_bits,
            pruned_mass_max: report.pruned_mass_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub fine: ModelSummary,
    pub coarse: ModelSummary,
}

/// Runs the same program and seed under both register models.
pub fn compare_models(spec: &EnsembleSpec, image: &[u16]) -> Result<ModelComparison, EnsembleError> {
    let run = |mode| {
        let s = EnsembleSpec {
            machine: spec.machine.clone().with_mode(mode),
            ..spec.clone()
        };
        run_ensemble(&s, image).map(|r| ModelSummary::from_report(&r))
    };
    Ok(ModelComparison {
        fine: run(Mode::Fine)?,
        coarse: run(Mode::Coarse)?,
    })
}
