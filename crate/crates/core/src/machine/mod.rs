//! The stored-program machine.
//!
//! Program and data share one word-addressed memory. Each step fetches the
//! word at the program counter into the instruction register, decodes it and
//! executes it. Every bit that crosses between memory and the registers goes
//! through a pin (see [`pins`]); `LOAD` and `STORE` drive all eight pins in
//! parallel, `RDPIN` and `WRPIN` drive one.

pub mod isa;
pub mod pins;
pub mod registers;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::physics::{PhysicsError, PhysicsParams, DEFAULT_SEPARATION_THRESHOLD};
use crate::quantum::{binary_entropy, Bit, QuantumError};

pub use isa::{
    alu_execute, AluOp, AluOutput, DecodeError, Instruction, Lane, LoadSource, NoiseWindow, Opcode, Reg, Source,
    DATA_MEMORY_BASE, REGISTER_BITS, REGISTER_COUNT,
};
pub use pins::{PinDevice, PinEvent, PinTiming, Transfer, PIN_COUNT};
pub use registers::{Mode, RegisterFile};

pub const MEMORY_WORDS: usize = 256;
pub const DEFAULT_CAPACITY_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineFault {
    #[error("decode fault at pc {pc}: {source}")]
    Decode { pc: u16, source: DecodeError },
    #[error("memory fault: address {addr} outside {size}-word memory")]
    Memory { addr: u16, size: usize },
    #[error("machine is halted")]
    Halted,
    #[error("structural hazard: pin {pin} is busy")]
    StructuralHazard { pin: u8 },
    #[error("pin cannot fire: terminal velocity is zero and the bit is not definite")]
    PinCannotFire,
    #[error("JZ at pc {pc}: R{reg} is zero in some branches and non-zero in others")]
    IndefiniteCondition { pc: u16, reg: u8 },
    #[error("event reading on pin {pin} returned a value no branch holds")]
    InconsistentOutcome { pin: u8 },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// Static configuration of one machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineConfig {
    pub mode: Mode,
    pub capacity_bits: u32,
    pub physics: PhysicsParams,
    pub sigma_q: f64,
    pub eta: f64,
    pub t_cycle: f64,
    /// Multiplies the terminal velocity of every pin.
    pub lambda_scale: f64,
    pub memory_words: usize,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fine,
            capacity_bits: DEFAULT_CAPACITY_BITS,
            physics: PhysicsParams::default(),
            sigma_q: 1.0,
            eta: DEFAULT_SEPARATION_THRESHOLD,
            t_cycle: 1.0,
            lambda_scale: 1.0,
            memory_words: MEMORY_WORDS,
        }
    }
}

impl MachineConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn timing(&self) -> Result<PinTiming, PhysicsError> {
        PinTiming::new(&self.physics, self.sigma_q, self.eta, self.t_cycle, self.lambda_scale)
    }
}

/// One knowledge record written back to data memory by a pin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataRecord {
    pub cycle: u64,
    pub pin: u8,
    pub addr: u8,
    pub outcome: Bit,
    /// Marginal probability of a 1 before the reading.
    pub p_one: f64,
    pub surprisal: f64,
}

/// What one step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub pc: u16,
    pub word: u16,
    pub instruction: Instruction,
    pub cost: u64,
    pub pin_events: Vec<PinEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Halted,
    Timeout,
}

/// One line of the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub cost: u64,
    pub pc: u16,
    pub word: u16,
    pub instruction: String,
    /// Register values that agree across every branch; `null` otherwise.
    pub registers: [Option<u8>; REGISTER_COUNT],
    pub branch_count: usize,
    pub branch_entropy_bits: f64,
    pub pruned_mass: f64,
    pub pin_events: Vec<PinEvent>,
    pub information_bits: f64,
    pub predicted_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Machine {
    config: MachineConfig,
    timing: PinTiming,
    memory: Vec<u16>,
    pc: u16,
    ir: u16,
    registers: RegisterFile,
    pins: Vec<PinDevice>,
    cycle: u64,
    halted: bool,
    data_log: Vec<DataRecord>,
}

impl Machine {
    /// Builds a machine with `image` loaded at address 0.
    pub fn new(config: MachineConfig, image: &[u16]) -> Result<Self, MachineFault> {
        config.physics.validate()?;
        let timing = config.timing()?;
        let size = config.memory_words.clamp(1, MEMORY_WORDS);
        if image.len() > size {
            return Err(MachineFault::Memory {
                addr: image.len() as u16,
                size,
            });
        }
        let mut memory = vec![0u16; size];
        memory[..image.len()].copy_from_slice(image);
        Ok(Self {
            registers: RegisterFile::new(config.mode, config.capacity_bits),
            config,
            timing,
            memory,
            pc: 0,
            ir: 0,
            pins: (0..PIN_COUNT as u8).map(PinDevice::new).collect(),
            cycle: 0,
            halted: false,
            data_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn timing(&self) -> &PinTiming {
        &self.timing
    }

    pub fn memory(&self) -> &[u16] {
        &self.memory
    }

    pub fn pc(&self) -> u16 {
        self.pc
    }

    pub fn instruction_register(&self) -> u16 {
        self.ir
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.registers
    }

    /// Direct access for tests and harnesses that need a prepared state.
    pub fn registers_mut(&mut self) -> &mut RegisterFile {
        &mut self.registers
    }

    pub fn pins(&self) -> &[PinDevice] {
        &self.pins
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn data_log(&self) -> &[DataRecord] {
        &self.data_log
    }

    /// Bits of knowledge acquired so far: the summed surprisal of every
    /// write-back event.
    pub fn information_bits(&self) -> f64 {
        self.data_log.iter().fold(0.0, |acc, r| acc + r.surprisal)
    }

    /// Expected information of the write-backs so far, from the marginals
    /// before each reading.
    pub fn predicted_bits(&self) -> f64 {
        self.data_log.iter().fold(0.0, |acc, r| acc + binary_entropy(r.p_one))
    }

    /// The gained knowledge as a bit string in write-back order.
    pub fn macrostate_key(&self) -> String {
        self.data_log.iter().map(|r| r.outcome.as_char()).collect()
    }

    fn check_addr(&self, addr: u8) -> Result<usize, MachineFault> {
        let a = addr as usize;
        if a < self.memory.len() {
            Ok(a)
        } else {
            Err(MachineFault::Memory {
                addr: addr as u16,
                size: self.memory.len(),
            })
        }
    }

    /// One fetch/decode/execute cycle.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepRecord, MachineFault> {
        if self.halted {
            return Err(MachineFault::Halted);
        }
        let pc = self.pc;
        let word = *self.memory.get(pc as usize).ok_or(MachineFault::Memory {
            addr: pc,
            size: self.memory.len(),
        })?;
        let instruction = Instruction::decode(word).map_err(|source| MachineFault::Decode { pc, source })?;
        self.ir = word;
        let mut next_pc = pc + 1;
        let mut cost = 1;
        let mut pin_events = Vec::new();

        match instruction {
            Instruction::Load {
                dst,
                src: LoadSource::Imm(v),
            } => self.registers.set_register(dst, v),
            Instruction::Load {
                dst,
                src: LoadSource::Memory(addr),
            } => {
                let a = self.check_addr(addr)?;
                let value = self.memory[a] as u8;
                cost = self.timing.transfer_cycles(true)?;
                for lane in Lane::all() {
                    let bit = (value >> lane.index()) & 1 == 1;
                    pin_events.push(self.pin_read(lane, addr, bit, cost, rng)?);
                }
                self.registers.set_register(dst, value);
            }
            Instruction::Store { src, addr } => {
                let a = self.check_addr(addr)?;
                let definite = self.registers.definite_value(src).is_some();
                cost = self.timing.transfer_cycles(definite)?;
                self.memory[a] = 0;
                for lane in Lane::all() {
                    pin_events.push(self.pin_write(src, lane, addr, cost, rng)?);
                }
            }
            Instruction::Alu { op, dst, src } => match src {
                Source::Imm(v) => self.registers.apply_alu(op, dst, |_| v),
                Source::Reg(s) => self.registers.apply_alu(op, dst, |m| registers::register_of(m, s)),
            },
            Instruction::Not { reg } => self.registers.apply_alu(AluOp::Not, reg, |_| 0),
            Instruction::Jmp { target } => next_pc = target as u16,
            Instruction::Jz { reg, target } => {
                let value = self
                    .registers
                    .definite_value(reg)
                    .or_else(|| {
                        self.registers
                            .branches()
                            .all(|(m, _)| registers::register_of(m, reg) != 0)
                            .then_some(1)
                    })
                    .ok_or(MachineFault::IndefiniteCondition { pc, reg: reg.index() })?;
                if alu_execute(AluOp::Or, value, 0).zero {
                    next_pc = target as u16;
                }
            }
            Instruction::RdPin { reg, lane, addr } => {
                let a = self.check_addr(addr)?;
                let bit = (self.memory[a] >> lane.index()) & 1 == 1;
                cost = self.timing.transfer_cycles(true)?;
                pin_events.push(self.pin_read(lane, addr, bit, cost, rng)?);
                self.registers.set_bit(reg, lane, bit);
            }
            Instruction::WrPin { reg, lane, addr } => {
                self.check_addr(addr)?;
                let p = self.registers.bit_marginal(reg, lane);
                cost = self.timing.transfer_cycles(p == 0.0 || p == 1.0)?;
                pin_events.push(self.pin_write(reg, lane, addr, cost, rng)?);
            }
            Instruction::Noise { reg, window, level } => self.registers.apply_noise(reg, window, level as f64 / 256.0),
            Instruction::Halt => {
                self.halted = true;
                next_pc = pc;
            }
        }

        if next_pc as usize >= self.memory.len() {
            return Err(MachineFault::Memory {
                addr: next_pc,
                size: self.memory.len(),
            });
        }
        self.pc = next_pc;
        self.cycle += cost;
        Ok(StepRecord {
            pc,
            word,
            instruction,
            cost,
            pin_events,
        })
    }

    /// Memory → register transfer of one bit. Memory is classical, so the
    /// meter state is pure and the reading carries no information.
    fn pin_read<R: Rng + ?Sized>(
        &mut self,
        lane: Lane,
        addr: u8,
        bit: bool,
        cycles: u64,
        rng: &mut R,
    ) -> Result<PinEvent, MachineFault> {
        let p_one = if bit { 1.0 } else { 0.0 };
        let timing = self.timing;
        self.pins[lane.index() as usize].fire(&timing, Transfer::Read, addr, p_one, self.cycle, cycles, rng)
    }

    /// Register → memory transfer of bit `lane` of `reg` into the same bit of
    /// `memory[addr]`. The register ensemble is then conditioned on the
    /// observed value.
    fn pin_write<R: Rng + ?Sized>(
        &mut self,
        reg: Reg,
        lane: Lane,
        addr: u8,
        cycles: u64,
        rng: &mut R,
    ) -> Result<PinEvent, MachineFault> {
        let p_one = self.registers.bit_marginal(reg, lane);
        let timing = self.timing;
        let pin = lane.index();
        let event = self.pins[pin as usize].fire(&timing, Transfer::Write, addr, p_one, self.cycle, cycles, rng)?;
        let bit = event.outcome == Bit::One;
        if !self.registers.condition_on_bit(reg, lane, bit) {
            return Err(MachineFault::InconsistentOutcome { pin });
        }
        let a = addr as usize;
        let mask = 1u16 << lane.index();
        self.memory[a] = if bit {
            self.memory[a] | mask
        } else {
            self.memory[a] & !mask
        };
        self.data_log.push(DataRecord {
            cycle: self.cycle,
            pin,
            addr,
            outcome: event.outcome,
            p_one,
            surprisal: event.surprisal,
        });
        Ok(event)
    }

    pub fn trace_record(&self, step: &StepRecord) -> TraceRecord {
        TraceRecord {
            cycle: self.cycle,
            cost: step.cost,
            pc: step.pc,
            word: step.word,
            instruction: step.instruction.to_string(),
            registers: self.registers.definite_values(),
            branch_count: self.registers.branch_count(),
            branch_entropy_bits: self.registers.entropy_bits(),
            pruned_mass: self.registers.pruned_mass(),
            pin_events: step.pin_events.clone(),
            information_bits: self.information_bits(),
            predicted_bits: self.predicted_bits(),
        }
    }

    /// Steps until `HALT` or until the cycle counter reaches `max_cycles`,
    /// handing a trace record for every step to `observe`.
    pub fn run_observed<R, F>(
        &mut self,
        max_cycles: u64,
        rng: &mut R,
        mut observe: F,
    ) -> Result<RunOutcome, MachineFault>
    where
        R: Rng + ?Sized,
        F: FnMut(TraceRecord),
    {
        let mut steps = 0;
        while !self.halted {
            if self.cycle >= max_cycles {
                return Ok(RunOutcome {
                    status: RunStatus::Timeout,
                    steps,
                });
            }
            let record = self.step(rng)?;
            steps += 1;
            observe(self.trace_record(&record));
        }
        Ok(RunOutcome {
            status: RunStatus::Halted,
            steps,
        })
    }

    /// Runs without tracing.
    pub fn run<R: Rng + ?Sized>(&mut self, max_cycles: u64, rng: &mut R) -> Result<RunOutcome, MachineFault> {
        let mut steps = 0;
        while !self.halted {
            if self.cycle >= max_cycles {
                return Ok(RunOutcome {
                    status: RunStatus::Timeout,
                    steps,
                });
            }
            self.step(rng)?;
            steps += 1;
        }
        Ok(RunOutcome {
            status: RunStatus::Halted,
            steps,
        })
    }

    /// Runs and collects the full trace.
    pub fn run_traced<R: Rng + ?Sized>(
        &mut self,
        max_cycles: u64,
        rng: &mut R,
    ) -> Result<(RunOutcome, Vec<TraceRecord>), MachineFault> {
        let mut trace = Vec::new();
        let outcome = self.run_observed(max_cycles, rng, |r| trace.push(r))?;
        Ok((outcome, trace))
    }
}
