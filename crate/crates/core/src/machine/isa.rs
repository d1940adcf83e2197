//! Instruction set and its 16-bit encoding.
//!
//! ```text
//!  15    12 11   9  8  7            0
//! +--------+------+---+--------------+
//! | opcode | reg  | I |   operand    |
//! +--------+------+---+--------------+
//! ```
//!
//! `I` is the immediate flag for `LOAD` and the two-operand ALU ops. Pin
//! instructions reuse bits 8..0 as a 3-bit lane (bits 8..6) and a 6-bit offset
//! into the data-memory window (bits 5..0). `NOISE` uses bit 8 to restrict the
//! flip window to bit 0 and encodes the flip probability as `operand / 256`.
//!
//! Unused fields must be zero, so every decodable word re-encodes to itself.

use std::fmt;

use thiserror::Error;

pub const REGISTER_COUNT: usize = 8;
pub const REGISTER_BITS: u32 = 8;
/// First address of the data-memory window reachable by pin instructions.
pub const DATA_MEMORY_BASE: u8 = 0xC0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot decode word {word:#06x}: {reason}")]
pub struct DecodeError {
    pub word: u16,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Load = 0x0,
    Store = 0x1,
    Add = 0x2,
    Sub = 0x3,
    And = 0x4,
    Or = 0x5,
    Xor = 0x6,
    Not = 0x7,
    Shl = 0x8,
    Shr = 0x9,
    Jmp = 0xA,
    Jz = 0xB,
    RdPin = 0xC,
    WrPin = 0xD,
    Noise = 0xE,
    Halt = 0xF,
}

impl Opcode {
    pub const ALL: [Opcode; 16] = [
        Opcode::Load,
        Opcode::Store,
        Opcode::Add,
        Opcode::Sub,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Not,
        Opcode::Shl,
        Opcode::Shr,
        Opcode::Jmp,
        Opcode::Jz,
        Opcode::RdPin,
        Opcode::WrPin,
        Opcode::Noise,
        Opcode::Halt,
    ];

    pub fn from_nibble(n: u8) -> Self {
        Self::ALL[(n & 0xF) as usize]
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Xor => "XOR",
            Opcode::Not => "NOT",
            Opcode::Shl => "SHL",
            Opcode::Shr => "SHR",
            Opcode::Jmp => "JMP",
            Opcode::Jz => "JZ",
            Opcode::RdPin => "RDPIN",
            Opcode::WrPin => "WRPIN",
            Opcode::Noise => "NOISE",
            Opcode::Halt => "HALT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// Register index `R0..R7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Option<Self> {
        ((index as usize) < REGISTER_COUNT).then_some(Reg(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

/// Bit lane `0..7`; lane `i` is wired through pin `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lane(u8);

impl Lane {
    pub fn new(index: u8) -> Option<Self> {
        ((index as u32) < REGISTER_BITS).then_some(Lane(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Lane> {
        (0..REGISTER_BITS as u8).map(Lane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Not,
    Shl,
    Shr,
}

impl AluOp {
    pub fn opcode(self) -> Opcode {
        match self {
            AluOp::Add => Opcode::Add,
            AluOp::Sub => Opcode::Sub,
            AluOp::And => Opcode::And,
            AluOp::Or => Opcode::Or,
            AluOp::Xor => Opcode::Xor,
            AluOp::Not => Opcode::Not,
            AluOp::Shl => Opcode::Shl,
            AluOp::Shr => Opcode::Shr,
        }
    }

    fn binary_from_opcode(op: Opcode) -> Option<Self> {
        Some(match op {
            Opcode::Add => AluOp::Add,
            Opcode::Sub => AluOp::Sub,
            Opcode::And => AluOp::And,
            Opcode::Or => AluOp::Or,
            Opcode::Xor => AluOp::Xor,
            Opcode::Shl => AluOp::Shl,
            Opcode::Shr => AluOp::Shr,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AluOutput {
    pub value: u8,
    pub zero: bool,
}

/// Wrapping 8-bit ALU. `Not` ignores `b`; shifts by 8 or more yield zero.
pub fn alu_execute(op: AluOp, a: u8, b: u8) -> AluOutput {
    let value = match op {
        AluOp::Add => a.wrapping_add(b),
        AluOp::Sub => a.wrapping_sub(b),
        AluOp::And => a & b,
        AluOp::Or => a | b,
        AluOp::Xor => a ^ b,
        AluOp::Not => !a,
        AluOp::Shl => a.checked_shl(b as u32).unwrap_or(0),
        AluOp::Shr => a.checked_shr(b as u32).unwrap_or(0),
    };
    AluOutput {
        value,
        zero: value == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Reg(Reg),
    Imm(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadSource {
    Memory(u8),
    Imm(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseWindow {
    /// Every bit of the register flips independently.
    Register,
    /// Only bit 0 flips.
    LowBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    Load {
        dst: Reg,
        src: LoadSource,
    },
    Store {
        src: Reg,
        addr: u8,
    },
    Alu {
        op: AluOp,
        dst: Reg,
        src: Source,
    },
    Not {
        reg: Reg,
    },
    Jmp {
        target: u8,
    },
    Jz {
        reg: Reg,
        target: u8,
    },
    RdPin {
        reg: Reg,
        lane: Lane,
        addr: u8,
    },
    WrPin {
        reg: Reg,
        lane: Lane,
        addr: u8,
    },
    /// Flip probability is `level / 256`.
    Noise {
        reg: Reg,
        window: NoiseWindow,
        level: u8,
    },
    Halt,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Load { .. } => Opcode::Load,
            Instruction::Store { .. } => Opcode::Store,
            Instruction::Alu { op, .. } => op.opcode(),
            Instruction::Not { .. } => Opcode::Not,
            Instruction::Jmp { .. } => Opcode::Jmp,
            Instruction::Jz { .. } => Opcode::Jz,
            Instruction::RdPin { .. } => Opcode::RdPin,
            Instruction::WrPin { .. } => Opcode::WrPin,
            Instruction::Noise { .. } => Opcode::Noise,
            Instruction::Halt => Opcode::Halt,
        }
    }

    pub fn encode(&self) -> u16 {
        let word = |op: Opcode, reg: u8, low9: u16| ((op as u16) << 12) | ((reg as u16) << 9) | low9;
        const IMM: u16 = 0x100;
        match *self {
            Instruction::Load {
                dst,
                src: LoadSource::Memory(a),
            } => word(Opcode::Load, dst.0, a as u16),
            Instruction::Load {
                dst,
                src: LoadSource::Imm(v),
            } => word(Opcode::Load, dst.0, IMM | v as u16),
            Instruction::Store { src, addr } => word(Opcode::Store, src.0, addr as u16),
            Instruction::Alu {
                op: AluOp::Not, dst, ..
            } => word(Opcode::Not, dst.0, 0),
            Instruction::Alu { op, dst, src } => {
                let low = match src {
                    Source::Reg(r) => r.0 as u16,
                    Source::Imm(v) => IMM | v as u16,
                };
                word(op.opcode(), dst.0, low)
            }
            Instruction::Not { reg } => word(Opcode::Not, reg.0, 0),
            Instruction::Jmp { target } => word(Opcode::Jmp, 0, target as u16),
            Instruction::Jz { reg, target } => word(Opcode::Jz, reg.0, target as u16),
            Instruction::RdPin { reg, lane, addr } => word(Opcode::RdPin, reg.0, pin_field(lane, addr)),
            Instruction::WrPin { reg, lane, addr } => word(Opcode::WrPin, reg.0, pin_field(lane, addr)),
            Instruction::Noise { reg, window, level } => {
                let flag = match window {
                    NoiseWindow::Register => 0,
                    NoiseWindow::LowBit => IMM,
                };
                word(Opcode::Noise, reg.0, flag | level as u16)
            }
            Instruction::Halt => word(Opcode::Halt, 0, 0),
        }
    }

    pub fn decode(word: u16) -> Result<Self, DecodeError> {
        let opcode = Opcode::from_nibble((word >> 12) as u8);
        let reg = Reg(((word >> 9) & 0x7) as u8);
        let imm = word & 0x100 != 0;
        let operand = (word & 0xFF) as u8;
        let fail = |reason| Err(DecodeError { word, reason });
        match opcode {
            Opcode::Load => Ok(Instruction::Load {
                dst: reg,
                src: if imm {
                    LoadSource::Imm(operand)
                } else {
                    LoadSource::Memory(operand)
                },
            }),
            Opcode::Store if imm => fail("STORE takes no immediate"),
            Opcode::Store => Ok(Instruction::Store {
                src: reg,
                addr: operand,
            }),
            Opcode::Not if word & 0x1FF != 0 => fail("NOT takes no operand"),
            Opcode::Not => Ok(Instruction::Not { reg }),
            Opcode::Jmp if reg.0 != 0 || imm => fail("JMP takes only a target"),
            Opcode::Jmp => Ok(Instruction::Jmp { target: operand }),
            Opcode::Jz if imm => fail("JZ takes no immediate"),
            Opcode::Jz => Ok(Instruction::Jz { reg, target: operand }),
            Opcode::RdPin | Opcode::WrPin => {
                let lane = Lane(((word >> 6) & 0x7) as u8);
                let addr = DATA_MEMORY_BASE + (word & 0x3F) as u8;
                Ok(if opcode == Opcode::RdPin {
                    Instruction::RdPin { reg, lane, addr }
                } else {
                    Instruction::WrPin { reg, lane, addr }
                })
            }
            Opcode::Noise => Ok(Instruction::Noise {
                reg,
                window: if imm {
                    NoiseWindow::LowBit
                } else {
                    NoiseWindow::Register
                },
                level: operand,
            }),
            Opcode::Halt if word & 0x0FFF != 0 => fail("HALT takes no operands"),
            Opcode::Halt => Ok(Instruction::Halt),
            _ => {
                let op = AluOp::binary_from_opcode(opcode).expect("remaining opcodes are binary ALU ops");
                if imm {
                    Ok(Instruction::Alu {
                        op,
                        dst: reg,
                        src: Source::Imm(operand),
                    })
                } else if operand as usize >= REGISTER_COUNT {
                    fail("source register out of range")
                } else {
                    Ok(Instruction::Alu {
                        op,
                        dst: reg,
                        src: Source::Reg(Reg(operand)),
                    })
                }
            }
        }
    }
}

fn pin_field(lane: Lane, addr: u8) -> u16 {
    debug_assert!(addr >= DATA_MEMORY_BASE);
    ((lane.0 as u16) << 6) | (addr.wrapping_sub(DATA_MEMORY_BASE) as u16 & 0x3F)
}

/// Canonical assembly form: uppercase mnemonics, decimal operands.
impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.opcode().mnemonic();
        match *self {
            Instruction::Load {
                dst,
                src: LoadSource::Memory(a),
            } => write!(f, "{m} {dst}, {a}"),
            Instruction::Load {
                dst,
                src: LoadSource::Imm(v),
            } => write!(f, "{m} {dst}, #{v}"),
            Instruction::Store { src, addr } => write!(f, "{m} {src}, {addr}"),
            Instruction::Alu {
                op: AluOp::Not, dst, ..
            } => write!(f, "{m} {dst}"),
            Instruction::Alu {
                dst,
                src: Source::Reg(s),
                ..
            } => write!(f, "{m} {dst}, {s}"),
            Instruction::Alu {
                dst,
                src: Source::Imm(v),
                ..
            } => write!(f, "{m} {dst}, #{v}"),
            Instruction::Not { reg } => write!(f, "{m} {reg}"),
            Instruction::Jmp { target } => write!(f, "{m} {target}"),
            Instruction::Jz { reg, target } => write!(f, "{m} {reg}, {target}"),
            Instruction::RdPin { reg, lane, addr } | Instruction::WrPin { reg, lane, addr } => {
                write!(f, "{m} {reg}.{}, {addr}", lane.0)
            }
            Instruction::Noise {
                reg,
                window: NoiseWindow::Register,
                level,
            } => write!(f, "{m} {reg}, {level}"),
            Instruction::Noise {
                reg,
                window: NoiseWindow::LowBit,
                level,
            } => write!(f, "{m} {reg}.0, {level}"),
            Instruction::Halt => f.write_str(m),
        }
    }
}
