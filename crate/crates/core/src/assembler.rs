//! Two-pass assembler and disassembler for the machine's instruction set.
//!
//! Grammar, one statement per line:
//!
//! ```text
//! [label:] MNEMONIC [operand[, operand]] [; comment]
//! [label:] .org N
//! [label:] .word N
//! ```
//!
//! Operands are registers (`R3`), register bits (`R3.5`, used by the pin
//! instructions and by `NOISE` for its single-bit window), immediates (`#12`),
//! addresses and labels. Literals are decimal or `0x` hex. Mnemonics and
//! register names are case-insensitive.
//!
//! | form                     | meaning                                  |
//! |--------------------------|------------------------------------------|
//! | `LOAD Rd, addr`          | `Rd ← mem[addr]` through all eight pins  |
//! | `LOAD Rd, #imm`          | `Rd ← imm`                               |
//! | `STORE Rs, addr`         | `mem[addr] ← Rs` through all eight pins  |
//! | `ADD Rd, Rs` / `#imm`    | likewise `SUB AND OR XOR SHL SHR`        |
//! | `NOT Rd`                 |                                          |
//! | `JMP target`             |                                          |
//! | `JZ Rr, target`          | jump when `Rr == 0`                      |
//! | `RDPIN Rd.b, addr`       | bit `b` of `mem[addr]` → bit `b` of `Rd` |
//! | `WRPIN Rs.b, addr`       | bit `b` of `Rs` → bit `b` of `mem[addr]` |
//! | `NOISE Rr, level`        | flip each bit with prob. `level/256`     |
//! | `NOISE Rr.0, level`      | flip bit 0 only                          |
//!
//! Pin addresses must lie in the data-memory window `0xC0..=0xFF`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::machine::{
    AluOp, Instruction, Lane, LoadSource, NoiseWindow, Opcode, Reg, Source, DATA_MEMORY_BASE, MEMORY_WORDS,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    UnknownMnemonic(String),
    DuplicateLabel(String),
    UndefinedLabel(String),
    RegisterOutOfRange(String),
    OperandOutOfRange(String),
    MalformedLiteral(String),
    Syntax(String),
    Overlap(u16),
    ImageTooLarge(usize),
}

impl fmt::Display for AsmErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmErrorKind::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            AsmErrorKind::DuplicateLabel(l) => write!(f, "duplicate label `{l}`"),
            AsmErrorKind::UndefinedLabel(l) => write!(f, "undefined label `{l}`"),
            AsmErrorKind::RegisterOutOfRange(r) => write!(f, "register out of range: `{r}`"),
            AsmErrorKind::OperandOutOfRange(msg) => write!(f, "operand out of range: {msg}"),
            AsmErrorKind::MalformedLiteral(l) => write!(f, "malformed literal `{l}`"),
            AsmErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            AsmErrorKind::Overlap(a) => write!(f, "address {a} is already occupied"),
            AsmErrorKind::ImageTooLarge(n) => write!(f, "image needs {n} words, memory holds {MEMORY_WORDS}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct AsmError {
    pub kind: AsmErrorKind,
    pub line: usize,
    pub column: usize,
}

/// One resolved statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Instruction(Instruction),
    Word(u16),
}

impl Item {
    pub fn encode(&self) -> u16 {
        match self {
            Item::Instruction(i) => i.encode(),
            Item::Word(w) => *w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    pub line: usize,
    pub label: Option<String>,
    /// Address of `item`, if the line emits a word.
    pub address: Option<u16>,
    pub item: Option<Item>,
    pub comment: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceProgram {
    pub lines: Vec<SourceLine>,
    pub symbols: BTreeMap<String, u16>,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct RawLine<'a> {
    line: usize,
    label: Option<Token<'a>>,
    mnemonic: Option<Token<'a>>,
    operands: Vec<Token<'a>>,
    comment: Option<&'a str>,
    text: &'a str,
}

fn err(kind: AsmErrorKind, line: usize, column: usize) -> AsmError {
    AsmError { kind, line, column }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn looks_like_register(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 2 && (b[0] == b'R' || b[0] == b'r') && b[1].is_ascii_digit()
}

/// Splits one line into label, mnemonic, operands and comment, keeping
/// 1-based character columns.
fn split_line<'a>(line: usize, text: &'a str) -> Result<RawLine<'a>, AsmError> {
    let (code, comment) = match text.find(';') {
        Some(i) => (&text[..i], Some(text[i + 1..].trim())),
        None => (text, None),
    };
    let column_of = |byte: usize| text[..byte].chars().count() + 1;
    let offset = |s: &str| s.as_ptr() as usize - text.as_ptr() as usize;
    let token = |s: &'a str| Token {
        text: s,
        column: column_of(offset(s)),
    };

    let mut rest = code.trim();
    let mut label = None;
    if let Some(colon) = rest.find(':') {
        let name = rest[..colon].trim();
        if !is_identifier(name) || looks_like_register(name) {
            return Err(err(
                AsmErrorKind::Syntax(format!("invalid label `{name}`")),
                line,
                column_of(offset(rest)),
            ));
        }
        label = Some(token(name));
        rest = rest[colon + 1..].trim();
    }

    let mut mnemonic = None;
    let mut operands = Vec::new();
    if !rest.is_empty() {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        mnemonic = Some(token(&rest[..end]));
        let ops = rest[end..].trim();
        if !ops.is_empty() {
            for piece in ops.split(',') {
                let t = piece.trim();
                if t.is_empty() {
                    let col = column_of(offset(piece));
                    return Err(err(AsmErrorKind::Syntax("empty operand".into()), line, col));
                }
                operands.push(token(t));
            }
        }
    }
    Ok(RawLine {
        line,
        label,
        mnemonic,
        operands,
        comment,
        text,
    })
}

fn parse_literal(tok: Token<'_>, line: usize) -> Result<u32, AsmError> {
    let s = tok.text;
    let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16)
    } else if s.starts_with(|c: char| c.is_ascii_digit()) {
        s.parse::<u32>()
    } else {
        return Err(err(AsmErrorKind::MalformedLiteral(s.into()), line, tok.column));
    };
    parsed.map_err(|_| err(AsmErrorKind::MalformedLiteral(s.into()), line, tok.column))
}

fn bounded(tok: Token<'_>, line: usize, value: u32, max: u32, what: &str) -> Result<u32, AsmError> {
    if value > max {
        Err(err(
            AsmErrorKind::OperandOutOfRange(format!("{what} {value} exceeds {max}")),
            line,
            tok.column,
        ))
    } else {
        Ok(value)
    }
}

struct Resolver<'s> {
    symbols: &'s BTreeMap<String, u16>,
    line: usize,
}

impl Resolver<'_> {
    fn fail<T>(&self, kind: AsmErrorKind, tok: Token<'_>) -> Result<T, AsmError> {
        Err(err(kind, self.line, tok.column))
    }

    fn register(&self, tok: Token<'_>) -> Result<Reg, AsmError> {
        if tok.text.contains('.') {
            return self.fail(
                AsmErrorKind::Syntax(format!("expected a register, found `{}`", tok.text)),
                tok,
            );
        }
        self.register_bit(tok).map(|(r, _)| r)
    }

    /// `Rn` or `Rn.b`.
    fn register_bit(&self, tok: Token<'_>) -> Result<(Reg, Option<Lane>), AsmError> {
        if !looks_like_register(tok.text) {
            return self.fail(
                AsmErrorKind::Syntax(format!("expected a register, found `{}`", tok.text)),
                tok,
            );
        }
        let body = &tok.text[1..];
        let (reg_text, lane_text) = match body.split_once('.') {
            Some((r, b)) => (r, Some(b)),
            None => (body, None),
        };
        let index: u32 = reg_text
            .parse()
            .map_err(|_| err(AsmErrorKind::MalformedLiteral(tok.text.into()), self.line, tok.column))?;
        let reg = u8::try_from(index)
            .ok()
            .and_then(Reg::new)
            .ok_or_else(|| err(AsmErrorKind::RegisterOutOfRange(tok.text.into()), self.line, tok.column))?;
        let lane = match lane_text {
            None => None,
            Some(b) => {
                let bit: u32 = b
                    .parse()
                    .map_err(|_| err(AsmErrorKind::MalformedLiteral(tok.text.into()), self.line, tok.column))?;
                let bit = bounded(tok, self.line, bit, 7, "bit")?;
                Some(Lane::new(bit as u8).expect("bounded to 7"))
            }
        };
        Ok((reg, lane))
    }

    fn bit_operand(&self, tok: Token<'_>) -> Result<(Reg, Lane), AsmError> {
        match self.register_bit(tok)? {
            (r, Some(l)) => Ok((r, l)),
            (_, None) => self.fail(
                AsmErrorKind::Syntax(format!("expected `Rn.bit`, found `{}`", tok.text)),
                tok,
            ),
        }
    }

    fn immediate(&self, tok: Token<'_>) -> Option<Result<u8, AsmError>> {
        let body = tok.text.strip_prefix('#')?;
        let inner = Token {
            text: body,
            column: tok.column + 1,
        };
        Some(
            parse_literal(inner, self.line).and_then(|v| bounded(tok, self.line, v, 255, "immediate").map(|v| v as u8)),
        )
    }

    /// A literal or a label, bounded to `max`.
    fn value(&self, tok: Token<'_>, max: u32, what: &str) -> Result<u32, AsmError> {
        let v = if is_identifier(tok.text) && !looks_like_register(tok.text) {
            match self.symbols.get(tok.text) {
                Some(&a) => a as u32,
                None => return self.fail(AsmErrorKind::UndefinedLabel(tok.text.into()), tok),
            }
        } else {
            parse_literal(tok, self.line)?
        };
        bounded(tok, self.line, v, max, what)
    }

    fn address(&self, tok: Token<'_>) -> Result<u8, AsmError> {
        self.value(tok, 255, "address").map(|v| v as u8)
    }

    fn data_address(&self, tok: Token<'_>) -> Result<u8, AsmError> {
        let a = self.address(tok)?;
        if a < DATA_MEMORY_BASE {
            return self.fail(
                AsmErrorKind::OperandOutOfRange(format!(
                    "pin address {a} is outside data memory {DATA_MEMORY_BASE}..=255"
                )),
                tok,
            );
        }
        Ok(a)
    }
}

fn alu_op(op: Opcode) -> Option<AluOp> {
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

fn expect_operands(raw: &RawLine<'_>, mnemonic: Token<'_>, n: usize) -> Result<(), AsmError> {
    if raw.operands.len() == n {
        return Ok(());
    }
    let column = raw.operands.get(n).map_or(mnemonic.column, |t| t.column);
    Err(err(
        AsmErrorKind::Syntax(format!(
            "`{}` takes {n} operand(s), found {}",
            mnemonic.text,
            raw.operands.len()
        )),
        raw.line,
        column,
    ))
}

fn resolve_instruction(raw: &RawLine<'_>, mnemonic: Token<'_>, r: &Resolver<'_>) -> Result<Instruction, AsmError> {
    let op = Opcode::from_mnemonic(mnemonic.text).ok_or_else(|| {
        err(
            AsmErrorKind::UnknownMnemonic(mnemonic.text.into()),
            raw.line,
            mnemonic.column,
        )
    })?;
    let ops = &raw.operands;
    let arity = match op {
        Opcode::Halt => 0,
        Opcode::Not | Opcode::Jmp => 1,
        _ => 2,
    };
    expect_operands(raw, mnemonic, arity)?;
    Ok(match op {
        Opcode::Load => {
            let dst = r.register(ops[0])?;
            let src = match r.immediate(ops[1]) {
                Some(v) => LoadSource::Imm(v?),
                None => LoadSource::Memory(r.address(ops[1])?),
            };
            Instruction::Load { dst, src }
        }
        Opcode::Store => Instruction::Store {
            src: r.register(ops[0])?,
            addr: r.address(ops[1])?,
        },
        Opcode::Not => Instruction::Not {
            reg: r.register(ops[0])?,
        },
        Opcode::Jmp => Instruction::Jmp {
            target: r.address(ops[0])?,
        },
        Opcode::Jz => Instruction::Jz {
            reg: r.register(ops[0])?,
            target: r.address(ops[1])?,
        },
        Opcode::RdPin | Opcode::WrPin => {
            let (reg, lane) = r.bit_operand(ops[0])?;
            let addr = r.data_address(ops[1])?;
            if op == Opcode::RdPin {
                Instruction::RdPin { reg, lane, addr }
            } else {
                Instruction::WrPin { reg, lane, addr }
            }
        }
        Opcode::Noise => {
            let (reg, lane) = r.register_bit(ops[0])?;
            let window = match lane.map(Lane::index) {
                None => NoiseWindow::Register,
                Some(0) => NoiseWindow::LowBit,
                Some(_) => {
                    return r.fail(
                        AsmErrorKind::OperandOutOfRange("NOISE window supports bit 0 only".into()),
                        ops[0],
                    )
                }
            };
            let level = r.value(ops[1], 255, "noise level")? as u8;
            Instruction::Noise { reg, window, level }
        }
        Opcode::Halt => Instruction::Halt,
        _ => {
            let op = alu_op(op).expect("remaining opcodes are binary ALU ops");
            let dst = r.register(ops[0])?;
            let src = match r.immediate(ops[1]) {
                Some(v) => Source::Imm(v?),
                None => Source::Reg(r.register(ops[1])?),
            };
            Instruction::Alu { op, dst, src }
        }
    })
}

enum Directive {
    Org,
    Word,
}

fn directive(tok: Token<'_>) -> Option<Directive> {
    if tok.text.eq_ignore_ascii_case(".org") {
        Some(Directive::Org)
    } else if tok.text.eq_ignore_ascii_case(".word") {
        Some(Directive::Word)
    } else {
        None
    }
}

/// Parses assembly text and resolves every label.
///
/// The first pass lays out addresses and collects labels; the second resolves
/// operands, so labels may be referenced before they are defined.
pub fn parse(text: &str) -> Result<SourceProgram, AsmError> {
    let raw: Vec<RawLine<'_>> = text
        .lines()
        .enumerate()
        .map(|(i, l)| split_line(i + 1, l))
        .collect::<Result<_, _>>()?;

    let mut symbols = BTreeMap::new();
    let mut addresses = Vec::with_capacity(raw.len());
    let mut counter: u32 = 0;
    for line in &raw {
        if let Some(m) = line.mnemonic {
            if let Some(Directive::Org) = directive(m) {
                expect_operands(line, m, 1)?;
                let target = parse_literal(line.operands[0], line.line)?;
                counter = bounded(
                    line.operands[0],
                    line.line,
                    target,
                    (MEMORY_WORDS - 1) as u32,
                    ".org address",
                )?;
            }
        }
        if let Some(label) = line.label {
            if symbols.insert(label.text.to_string(), counter as u16).is_some() {
                return Err(err(
                    AsmErrorKind::DuplicateLabel(label.text.into()),
                    line.line,
                    label.column,
                ));
            }
        }
        let emits = matches!(line.mnemonic, Some(m) if !matches!(directive(m), Some(Directive::Org)));
        if emits {
            if counter as usize >= MEMORY_WORDS {
                let m = line.mnemonic.expect("emitting lines have a mnemonic");
                return Err(err(
                    AsmErrorKind::ImageTooLarge(counter as usize + 1),
                    line.line,
                    m.column,
                ));
            }
            addresses.push(Some(counter as u16));
            counter += 1;
        } else {
            addresses.push(None);
        }
    }

    let mut occupied = vec![false; MEMORY_WORDS];
    let mut lines = Vec::with_capacity(raw.len());
    for (line, address) in raw.iter().zip(addresses) {
        let resolver = Resolver {
            symbols: &symbols,
            line: line.line,
        };
        let item = match line.mnemonic {
            None => None,
            Some(m) => match directive(m) {
                Some(Directive::Org) => None,
                Some(Directive::Word) => {
                    expect_operands(line, m, 1)?;
                    Some(Item::Word(
                        resolver.value(line.operands[0], 0xFFFF, ".word value")? as u16
                    ))
                }
                None if m.text.starts_with('.') => {
                    return Err(err(
                        AsmErrorKind::Syntax(format!("unknown directive `{}`", m.text)),
                        line.line,
                        m.column,
                    ))
                }
                None => Some(Item::Instruction(resolve_instruction(line, m, &resolver)?)),
            },
        };
        if let Some(a) = address {
            if std::mem::replace(&mut occupied[a as usize], true) {
                let column = line.mnemonic.map_or(1, |m| m.column);
                return Err(err(AsmErrorKind::Overlap(a), line.line, column));
            }
        }
        lines.push(SourceLine {
            line: line.line,
            label: line.label.map(|l| l.text.to_string()),
            address,
            item,
            comment: line.comment.map(str::to_string),
            text: line.text.to_string(),
        });
    }
    Ok(SourceProgram { lines, symbols })
}

/// Lays the program out as a memory image starting at address 0. Gaps are
/// zero-filled.
pub fn assemble(program: &SourceProgram) -> Result<Vec<u16>, AsmError> {
    let mut image: Vec<u16> = Vec::new();
    for line in &program.lines {
        if let (Some(addr), Some(item)) = (line.address, line.item) {
            let a = addr as usize;
            if a >= MEMORY_WORDS {
                return Err(err(AsmErrorKind::ImageTooLarge(a + 1), line.line, 1));
            }
            if image.len() <= a {
                image.resize(a + 1, 0);
            }
            image[a] = item.encode();
        }
    }
    Ok(image)
}

/// `parse` followed by `assemble`.
pub fn assemble_text(text: &str) -> Result<Vec<u16>, AsmError> {
    assemble(&parse(text)?)
}

/// Address/word listing alongside the source.
pub fn listing(program: &SourceProgram) -> String {
    let mut out = String::new();
    for line in &program.lines {
        match (line.address, line.item) {
            (Some(a), Some(item)) => out.push_str(&format!("{a:3}  {:04X}  {}\n", item.encode(), line.text)),
            _ => out.push_str(&format!("           {}\n", line.text)),
        }
    }
    out
}

/// Canonical text for a memory image, one line per word. Words that do not
/// decode are emitted as `.word 0xNNNN`.
pub fn disassemble(image: &[u16]) -> String {
    let mut out = String::new();
    for &w in image {
        match Instruction::decode(w) {
            Ok(i) => out.push_str(&i.to_string()),
            Err(_) => out.push_str(&format!(".word 0x{w:04X}")),
        }
        out.push('\n');
    }
    out
}

/// Little-endian byte form of a memory image.
pub fn image_to_bytes(image: &[u16]) -> Vec<u8> {
    image.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Reads a little-endian image; a trailing odd byte is an error.
pub fn image_from_bytes(bytes: &[u8]) -> Result<Vec<u16>, String> {
    if !bytes.len().is_multiple_of(2) {
        return Err(format!("image has odd length {}", bytes.len()));
    }
    if bytes.len() / 2 > MEMORY_WORDS {
        return Err(format!(
            "image has {} words, memory holds {MEMORY_WORDS}",
            bytes.len() / 2
        ));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}
