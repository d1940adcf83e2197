//! Register file in either the fine-grained or coarse-grained model.
//!
//! The joint contents of all eight 8-bit registers form one 64-bit
//! microstate. The fine-grained model holds exactly one microstate. The
//! coarse-grained model holds a weighted set of microstates (branches); ALU
//! operations push every branch forward, `NOISE` splits branches, and pin
//! event readings condition the set on the observed bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::isa::{alu_execute, AluOp, Lane, NoiseWindow, Reg, REGISTER_BITS, REGISTER_COUNT};

/// Branch weights must sum to one within this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Fine,
    Coarse,
}

pub type Microstate = u64;

pub fn register_of(state: Microstate, reg: Reg) -> u8 {
    (state >> (8 * reg.index() as u32)) as u8
}

pub fn with_register(state: Microstate, reg: Reg, value: u8) -> Microstate {
    let shift = 8 * reg.index() as u32;
    (state & !(0xFFu64 << shift)) | ((value as u64) << shift)
}

pub fn bit_of(state: Microstate, reg: Reg, lane: Lane) -> bool {
    (register_of(state, reg) >> lane.index()) & 1 == 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterFile {
    mode: Mode,
    capacity_bits: u32,
    branches: BTreeMap<Microstate, f64>,
    pruned_mass: f64,
    peak_branches: usize,
}

impl RegisterFile {
    /// All registers zero, one branch of weight 1.
    pub fn new(mode: Mode, capacity_bits: u32) -> Self {
        Self {
            mode,
            capacity_bits,
            branches: BTreeMap::from([(0, 1.0)]),
            pruned_mass: 0.0,
            peak_branches: 1,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn capacity_bits(&self) -> u32 {
        self.capacity_bits
    }

    /// Maximum branch count `2^C`.
    pub fn capacity(&self) -> usize {
        if self.capacity_bits as usize >= usize::BITS as usize {
            usize::MAX
        } else {
            1usize << self.capacity_bits
        }
    }

    /// Branches in ascending microstate order.
    pub fn branches(&self) -> impl Iterator<Item = (Microstate, f64)> + '_ {
        self.branches.iter().map(|(&s, &w)| (s, w))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn peak_branch_count(&self) -> usize {
        self.peak_branches
    }

    /// Cumulative probability mass dropped by capacity enforcement.
    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }

    pub fn is_pure(&self) -> bool {
        self.branches.len() == 1
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.values().sum()
    }

    /// The microstate, if the file holds exactly one.
    pub fn microstate(&self) -> Option<Microstate> {
        if self.is_pure() {
            self.branches.keys().next().copied()
        } else {
            None
        }
    }

    /// Value of `reg` if it agrees across all branches.
    pub fn definite_value(&self, reg: Reg) -> Option<u8> {
        let mut values = self.branches.keys().map(|&s| register_of(s, reg));
        let first = values.next()?;
        values.all(|v| v == first).then_some(first)
    }

    /// Probability that bit `lane` of `reg` is 1.
    pub fn bit_marginal(&self, reg: Reg, lane: Lane) -> f64 {
        let p: f64 = self
            .branches
            .iter()
            .filter(|(&s, _)| bit_of(s, reg, lane))
            .map(|(_, &w)| w)
            .sum();
        p.clamp(0.0, 1.0)
    }

    /// Entropy of the branch weights in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.branches
            .values()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.log2())
            .sum::<f64>()
            .max(0.0)
    }

    /// Marginal distribution of one register's value.
    pub fn register_distribution(&self, reg: Reg) -> BTreeMap<u8, f64> {
        let mut out = BTreeMap::new();
        for (&s, &w) in &self.branches {
            *out.entry(register_of(s, reg)).or_insert(0.0) += w;
        }
        out
    }

    /// Applies `f` to every branch, merging branches that land on the same
    /// microstate.
    pub fn pushforward(&mut self, f: impl Fn(Microstate) -> Microstate) {
        let mut next = BTreeMap::new();
        for (&s, &w) in &self.branches {
            *next.entry(f(s)).or_insert(0.0) += w;
        }
        self.branches = next;
        self.normalize();
    }

    /// `dst ← dst op src` in every branch. `src` is read per branch.
    pub fn apply_alu(&mut self, op: AluOp, dst: Reg, src: impl Fn(Microstate) -> u8) {
        self.pushforward(|s| with_register(s, dst, alu_execute(op, register_of(s, dst), src(s)).value));
    }

    pub fn set_register(&mut self, reg: Reg, value: u8) {
        self.pushforward(|s| with_register(s, reg, value));
    }

    pub fn set_bit(&mut self, reg: Reg, lane: Lane, bit: bool) {
        let mask = 1u8 << lane.index();
        self.pushforward(|s| {
            let v = register_of(s, reg);
            with_register(s, reg, if bit { v | mask } else { v & !mask })
        });
    }

    /// Independent symmetric bit flips with probability `epsilon` on the
    /// selected bits of `reg`. The fine-grained model tracks a single
    /// microstate and ignores the channel.
    pub fn apply_noise(&mut self, reg: Reg, window: NoiseWindow, epsilon: f64) {
        if self.mode == Mode::Fine || epsilon <= 0.0 {
            return;
        }
        let bits = match window {
            NoiseWindow::Register => REGISTER_BITS,
            NoiseWindow::LowBit => 1,
        };
        for bit in 0..bits {
            let flip = 1u64 << (8 * reg.index() as u32 + bit);
            let mut next = BTreeMap::new();
            for (&s, &w) in &self.branches {
                *next.entry(s).or_insert(0.0) += w * (1.0 - epsilon);
                *next.entry(s ^ flip).or_insert(0.0) += w * epsilon;
            }
            next.retain(|_, w| *w > 0.0);
            self.branches = next;
            self.peak_branches = self.peak_branches.max(self.branches.len());
            self.enforce_capacity();
        }
        self.normalize();
    }

    /// Keeps only branches whose bit `lane` of `reg` equals `bit`, then
    /// renormalizes. Returns `false` (and leaves the file unchanged) if no
    /// branch is consistent with the observation.
    pub fn condition_on_bit(&mut self, reg: Reg, lane: Lane, bit: bool) -> bool {
        if !self.branches.keys().any(|&s| bit_of(s, reg, lane) == bit) {
            return false;
        }
        self.branches.retain(|&s, _| bit_of(s, reg, lane) == bit);
        self.normalize();
        true
    }

    /// Drops the lowest-weight branches beyond `2^C` (ties broken by keeping
    /// the smaller microstate) and renormalizes.
    fn enforce_capacity(&mut self) {
        let cap = self.capacity();
        if self.branches.len() <= cap {
            return;
        }
        let mut ranked: Vec<(Microstate, f64)> = self.branches().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = ranked.iter().map(|(_, w)| w).sum();
        let dropped: f64 = ranked[cap..].iter().map(|(_, w)| w).sum();
        self.pruned_mass += dropped / total;
        self.branches = ranked.into_iter().take(cap).collect();
        self.normalize();
    }

    fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 && total != 1.0 {
            for w in self.branches.values_mut() {
                *w /= total;
            }
        }
    }

    /// Snapshot of per-register values (definite ones only).
    pub fn definite_values(&self) -> [Option<u8>; REGISTER_COUNT] {
        std::array::from_fn(|i| self.definite_value(Reg::new(i as u8).expect("index < 8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: u8) -> Reg {
        Reg::new(i).unwrap()
    }

    fn lane(i: u8) -> Lane {
        Lane::new(i).unwrap()
    }

    fn coarse_with(branches: &[(Microstate, f64)], capacity_bits: u32) -> RegisterFile {
        let mut rf = RegisterFile::new(Mode::Coarse, capacity_bits);
        rf.branches = branches.iter().copied().collect();
        rf.peak_branches = branches.len();
        rf
    }

    #[test]
    fn microstate_packing() {
        let s = with_register(0, r(3), 0xAB);
        assert_eq!(s, 0xAB00_0000);
        assert_eq!(register_of(s, r(3)), 0xAB);
        assert!(bit_of(s, r(3), lane(0)));
        assert!(!bit_of(s, r(3), lane(2)));
    }

    #[test]
    fn fine_alu_updates_single_branch() {
        let mut rf = RegisterFile::new(Mode::Fine, 16);
        rf.set_register(r(1), 2);
        rf.set_register(r(2), 3);
        rf.apply_alu(AluOp::Add, r(1), |s| register_of(s, r(2)));
        assert_eq!(rf.definite_value(r(1)), Some(5));
        assert!(rf.is_pure());
    }

    #[test]
    fn branchwise_pushforward() {
        let mut rf = coarse_with(
            &[(with_register(0, r(1), 1), 0.5), (with_register(0, r(1), 2), 0.5)],
            16,
        );
        rf.apply_alu(AluOp::Add, r(1), |_| 1);
        let dist = rf.register_distribution(r(1));
        assert_eq!(dist, BTreeMap::from([(2, 0.5), (3, 0.5)]));
    }

    #[test]
    fn merge_on_collision() {
        let mut rf = coarse_with(&[(0, 0.5), (1, 0.5)], 16);
        rf.apply_alu(AluOp::And, r(0), |_| 0);
        assert_eq!(rf.branches().collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn noise_splits_low_bit() {
        let mut rf = RegisterFile::new(Mode::Coarse, 16);
        rf.apply_noise(r(1), NoiseWindow::LowBit, 0.5);
        assert_eq!(
            rf.branches().collect::<Vec<_>>(),
            vec![(0, 0.5), (with_register(0, r(1), 1), 0.5)]
        );
        assert_eq!(rf.bit_marginal(r(1), lane(0)), 0.5);
    }

    #[test]
    fn noise_on_full_register_enumerates_all_patterns() {
        let mut rf = RegisterFile::new(Mode::Coarse, 16);
        rf.apply_noise(r(0), NoiseWindow::Register, 0.25);
        assert_eq!(rf.branch_count(), 256);
        // weight of value v is 0.25^popcount(v) * 0.75^(8 - popcount(v))
        for (s, w) in rf.branches() {
            let k = (s as u8).count_ones() as i32;
            let expected = 0.25f64.powi(k) * 0.75f64.powi(8 - k);
            assert!((w - expected).abs() < 1e-15);
        }
        assert!((rf.total_weight() - 1.0).abs() < WEIGHT_TOLERANCE);
    }

    #[test]
    fn fine_mode_ignores_noise() {
        let mut rf = RegisterFile::new(Mode::Fine, 16);
        rf.apply_noise(r(1), NoiseWindow::Register, 0.5);
        assert!(rf.is_pure());
        assert_eq!(rf.microstate(), Some(0));
    }

    #[test]
    fn zero_capacity_prunes_after_split() {
        let mut rf = RegisterFile::new(Mode::Coarse, 0);
        rf.apply_noise(r(1), NoiseWindow::LowBit, 0.5);
        assert_eq!(rf.branch_count(), 1);
        assert_eq!(rf.pruned_mass(), 0.5);
        assert_eq!(rf.peak_branch_count(), 2);
        // tie goes to the smaller microstate
        assert_eq!(rf.microstate(), Some(0));
    }

    #[test]
    fn capacity_keeps_heaviest() {
        let mut rf = RegisterFile::new(Mode::Coarse, 1);
        rf.apply_noise(r(0), NoiseWindow::Register, 0.125);
        assert_eq!(rf.branch_count(), 2);
        assert!((rf.total_weight() - 1.0).abs() < WEIGHT_TOLERANCE);
        assert!(rf.pruned_mass() > 0.0);
    }

    #[test]
    fn conditioning_is_bayesian() {
        let one = with_register(0, r(1), 1);
        let mut rf = coarse_with(&[(0, 0.25), (one, 0.75)], 16);
        assert!(rf.condition_on_bit(r(1), lane(0), true));
        assert_eq!(rf.branches().collect::<Vec<_>>(), vec![(one, 1.0)]);
        assert!(!rf.condition_on_bit(r(1), lane(0), false));
        assert_eq!(rf.branch_count(), 1);
    }

    #[test]
    fn definite_values() {
        let rf = coarse_with(&[(0x0100, 0.5), (0x0101, 0.5)], 16);
        assert_eq!(rf.definite_value(r(1)), Some(1));
        assert_eq!(rf.definite_value(r(0)), None);
        assert!((rf.entropy_bits() - 1.0).abs() < 1e-15);
    }
}
