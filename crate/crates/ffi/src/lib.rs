//! C ABI over the `reduction-machine` simulator.
//!
//! Handles (`RmImage`, `RmMachine`) are opaque and owned by the caller once
//! returned; free them with the matching `_free` function. Every fallible
//! call returns an `RmStatus`; on failure `rm_last_error_message` describes
//! the most recent error on the calling thread. Strings returned through out
//! parameters are freed with `rm_string_free`.
//!
//! Configuration is passed as the same flat JSON accepted by the command
//! line tool. A null configuration pointer means the defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reduction_machine::assembler::{assemble_text, disassemble};
use reduction_machine::config::RunConfig;
use reduction_machine::ensemble::{member_rng, run_ensemble, EnsembleSpec, SimRng};
use reduction_machine::machine::{Machine, Reg, RunStatus, MEMORY_WORDS};
use reduction_machine::physics::{self, PhysicsError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    AssemblyError = 3,
    ConfigError = 4,
    MachineFault = 5,
    /// The register differs between branches of the coarse model.
    Indefinite = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmRunStatus {
    Halted = 0,
    Timeout = 1,
}

/// Pointer kinematics of one pin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmKinematics {
    pub a_c: f64,
    pub tau_d: f64,
    pub lambda: f64,
    /// Meaningful only when `can_fire` is true.
    pub latency_cycles: u64,
    pub can_fire: bool,
}

/// A memory image.
pub struct RmImage {
    words: Vec<u16>,
}

/// A machine and its random source.
pub struct RmMachine {
    machine: Machine,
    rng: SimRng,
    max_cycles: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("nul bytes removed")));
}

struct Failure(RmStatus, String);

fn fail<T>(status: RmStatus, message: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, message.to_string()))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(RmStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(RmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn config(p: *const c_char) -> Result<RunConfig, Failure> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    RunConfig::from_json(text(p, "config")?).or_else(|e| fail(RmStatus::ConfigError, e))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(RmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(RmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    handle_mut(p, "output pointer")
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Assembles NUL-terminated source text.
///
/// # Safety
/// `source` must be a valid C string and `image` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_assemble(source: *const c_char, image: *mut *mut RmImage) -> RmStatus {
    guard(|| {
        let slot = out(image)?;
        let words = assemble_text(text(source, "source")?).or_else(|e| fail(RmStatus::AssemblyError, e))?;
        *slot = Box::into_raw(Box::new(RmImage { words }));
        Ok(())
    })
}

/// Wraps `len` words as an image.
///
/// # Safety
/// `words` must point to `len` readable words (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn rm_image_from_words(words: *const u16, len: usize, image: *mut *mut RmImage) -> RmStatus {
    guard(|| {
        let slot = out(image)?;
        if len > MEMORY_WORDS {
            return fail(
                RmStatus::InvalidArgument,
                format!("{len} words exceed memory of {MEMORY_WORDS}"),
            );
        }
        let words = if len == 0 {
            Vec::new()
        } else if words.is_null() {
            return fail(RmStatus::NullPointer, "words is null");
        } else {
            std::slice::from_raw_parts(words, len).to_vec()
        };
        *slot = Box::into_raw(Box::new(RmImage { words }));
        Ok(())
    })
}

/// Number of words in the image, or 0 for null.
///
/// # Safety
/// `image` must be null or a live image.
#[no_mangle]
pub unsafe extern "C" fn rm_image_len(image: *const RmImage) -> usize {
    image.as_ref().map_or(0, |i| i.words.len())
}

/// Copies up to `capacity` words into `buffer` and stores the total length
/// in `len`. Fails with `InvalidArgument` when the buffer is too small.
///
/// # Safety
/// `buffer` must have room for `capacity` words.
#[no_mangle]
pub unsafe extern "C" fn rm_image_words(
    image: *const RmImage,
    buffer: *mut u16,
    capacity: usize,
    len: *mut usize,
) -> RmStatus {
    guard(|| {
        let image = handle(image, "image")?;
        *out(len)? = image.words.len();
        if capacity < image.words.len() {
            return fail(RmStatus::InvalidArgument, "buffer too small");
        }
        if !image.words.is_empty() {
            if buffer.is_null() {
                return fail(RmStatus::NullPointer, "buffer is null");
            }
            ptr::copy_nonoverlapping(image.words.as_ptr(), buffer, image.words.len());
        }
        Ok(())
    })
}

/// Canonical assembly text for the image; free with `rm_string_free`.
///
/// # Safety
/// `image` must be a live image and `text_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_disassemble(image: *const RmImage, text_out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        let slot = out(text_out)?;
        *slot = into_c_string(disassemble(&handle(image, "image")?.words));
        Ok(())
    })
}

/// # Safety
/// `image` must be null or come from this library, and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_image_free(image: *mut RmImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Builds a machine from a configuration and an image. `seed` is used
/// as given; the configured seed is ignored.
///
/// # Safety
/// `config_json` must be null or a C string, `image` a live image.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_new(
    config_json: *const c_char,
    image: *const RmImage,
    seed: u64,
    machine: *mut *mut RmMachine,
) -> RmStatus {
    guard(|| {
        let slot = out(machine)?;
        let config = config(config_json)?;
        let image = handle(image, "image")?;
        let machine_config = config.machine_config().or_else(|e| fail(RmStatus::ConfigError, e))?;
        let m = Machine::new(machine_config, &image.words).or_else(|e| fail(RmStatus::MachineFault, e))?;
        *slot = Box::into_raw(Box::new(RmMachine {
            machine: m,
            rng: member_rng(seed, 0),
            max_cycles: config.max_cycles,
        }));
        Ok(())
    })
}

/// Executes one instruction and stores its cycle cost in `cost` (may be
/// null).
///
/// # Safety
/// `machine` must be a live machine.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_step(machine: *mut RmMachine, cost: *mut u64) -> RmStatus {
    guard(|| {
        let m = handle_mut(machine, "machine")?;
        let record = m
            .machine
            .step(&mut m.rng)
            .or_else(|e| fail(RmStatus::MachineFault, e))?;
        if let Some(c) = cost.as_mut() {
            *c = record.cost;
        }
        Ok(())
    })
}

/// Runs until `HALT` or `max_cycles` (0 means the configured limit).
///
/// # Safety
/// `machine` must be a live machine, `status` valid or null.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_run(
    machine: *mut RmMachine,
    max_cycles: u64,
    status: *mut RmRunStatus,
) -> RmStatus {
    guard(|| {
        let m = handle_mut(machine, "machine")?;
        let limit = if max_cycles == 0 { m.max_cycles } else { max_cycles };
        let outcome = m
            .machine
            .run(limit, &mut m.rng)
            .or_else(|e| fail(RmStatus::MachineFault, e))?;
        if let Some(s) = status.as_mut() {
            *s = match outcome.status {
                RunStatus::Halted => RmRunStatus::Halted,
                RunStatus::Timeout => RmRunStatus::Timeout,
            };
        }
        Ok(())
    })
}

/// Value of register `index` when every branch agrees on it; `Indefinite`
/// otherwise.
///
/// # Safety
/// `machine` must be a live machine and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_register(machine: *const RmMachine, index: u8, value: *mut u8) -> RmStatus {
    guard(|| {
        let m = handle(machine, "machine")?;
        let slot = out(value)?;
        let reg = Reg::new(index).ok_or_else(|| Failure(RmStatus::InvalidArgument, format!("no register R{index}")))?;
        match m.machine.registers().definite_value(reg) {
            Some(v) => {
                *slot = v;
                Ok(())
            }
            None => fail(RmStatus::Indefinite, format!("R{index} differs between branches")),
        }
    })
}

/// # Safety
/// `machine` must be a live machine and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_memory(machine: *const RmMachine, addr: u16, value: *mut u16) -> RmStatus {
    guard(|| {
        let m = handle(machine, "machine")?;
        let slot = out(value)?;
        match m.machine.memory().get(addr as usize) {
            Some(&w) => {
                *slot = w;
                Ok(())
            }
            None => fail(RmStatus::InvalidArgument, format!("address {addr} outside memory")),
        }
    })
}

/// Cycle counter, or 0 for null.
///
/// # Safety
/// `machine` must be null or a live machine.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_cycle(machine: *const RmMachine) -> u64 {
    machine.as_ref().map_or(0, |m| m.machine.cycle())
}

/// # Safety
/// `machine` must be null or a live machine.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_is_halted(machine: *const RmMachine) -> bool {
    machine.as_ref().is_some_and(|m| m.machine.is_halted())
}

/// Information acquired so far and the amount expected from the branch
/// weights, in bits. Either output may be null.
///
/// # Safety
/// `machine` must be a live machine.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_information(
    machine: *const RmMachine,
    acquired_bits: *mut f64,
    predicted_bits: *mut f64,
) -> RmStatus {
    guard(|| {
        let m = handle(machine, "machine")?;
        if let Some(a) = acquired_bits.as_mut() {
            *a = m.machine.information_bits();
        }
        if let Some(p) = predicted_bits.as_mut() {
            *p = m.machine.predicted_bits();
        }
        Ok(())
    })
}

/// # Safety
/// `machine` must be null or come from this library, and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_machine_free(machine: *mut RmMachine) {
    if !machine.is_null() {
        drop(Box::from_raw(machine));
    }
}

/// Runs `n_members` seeded copies and returns the report as JSON; free it
/// with `rm_string_free`.
///
/// # Safety
/// `config_json` must be null or a C string, `image` a live image and
/// `report_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_ensemble_json(
    config_json: *const c_char,
    image: *const RmImage,
    n_members: u64,
    seed: u64,
    report_json: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let slot = out(report_json)?;
        let config = config(config_json)?;
        let image = handle(image, "image")?;
        let spec = EnsembleSpec {
            machine: config.machine_config().or_else(|e| fail(RmStatus::ConfigError, e))?,
            n_members,
            master_seed: seed,
            max_cycles: config.max_cycles,
            lambda_jitter: config.lambda_jitter,
        };
        let report = run_ensemble(&spec, &image.words).or_else(|e| fail(RmStatus::MachineFault, e))?;
        *slot = into_c_string(report.to_json());
        Ok(())
    })
}

/// Pointer kinematics for a configuration.
///
/// # Safety
/// `config_json` must be null or a C string and `kinematics` valid.
#[no_mangle]
pub unsafe extern "C" fn rm_physics_kinematics(config_json: *const c_char, kinematics: *mut RmKinematics) -> RmStatus {
    guard(|| {
        let slot = out(kinematics)?;
        let config = config(config_json)?;
        let p = config.physics().or_else(|e| fail(RmStatus::ConfigError, e))?;
        let k = physics::kinematics(&p).or_else(|e| fail(RmStatus::ConfigError, e))?;
        let latency = match physics::latency_cycles(&k, config.sigma_q_m, config.eta, config.t_cycle_s) {
            Ok(c) => Some(c),
            Err(PhysicsError::PinCannotFire) => None,
            Err(e) => return fail(RmStatus::ConfigError, e),
        };
        *slot = RmKinematics {
            a_c: k.a_c,
            tau_d: k.tau_d,
            lambda: k.v_terminal,
            latency_cycles: latency.unwrap_or(0),
            can_fire: latency.is_some(),
        };
        Ok(())
    })
}
