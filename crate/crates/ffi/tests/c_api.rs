use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use reduction_machine_ffi::*;

const COIN: &str = "NOISE R1.0, 128\nWRPIN R1.0, 0xC0\nHALT\n";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn assemble(src: &str) -> *mut RmImage {
    let mut image = ptr::null_mut();
    assert_eq!(unsafe { rm_assemble(c(src).as_ptr(), &mut image) }, RmStatus::Ok);
    image
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { rm_string_free(p) };
    s
}

#[test]
fn assemble_and_read_back() {
    let image = assemble("loop: ADD R1, #1\nJMP loop\n");
    assert_eq!(unsafe { rm_image_len(image) }, 2);
    let mut buf = [0u16; 4];
    let mut len = 0;
    assert_eq!(
        unsafe { rm_image_words(image, buf.as_mut_ptr(), 4, &mut len) },
        RmStatus::Ok
    );
    assert_eq!(&buf[..len], &[0x2301, 0xA000]);
    assert_eq!(
        unsafe { rm_image_words(image, buf.as_mut_ptr(), 1, &mut len) },
        RmStatus::InvalidArgument
    );
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { rm_disassemble(image, &mut text) }, RmStatus::Ok);
    assert_eq!(take_string(text), "ADD R1, #1\nJMP 0\n");
    unsafe { rm_image_free(image) };
}

#[test]
fn assembly_errors_are_reported() {
    let mut image = ptr::null_mut();
    assert_eq!(
        unsafe { rm_assemble(c("ADD R9, #1").as_ptr(), &mut image) },
        RmStatus::AssemblyError
    );
    assert!(image.is_null());
    assert!(last_error().contains("register out of range"), "{}", last_error());
    assert_eq!(unsafe { rm_assemble(ptr::null(), &mut image) }, RmStatus::NullPointer);
}

#[test]
fn image_from_words() {
    let words = [0xF000u16];
    let mut image = ptr::null_mut();
    assert_eq!(
        unsafe { rm_image_from_words(words.as_ptr(), 1, &mut image) },
        RmStatus::Ok
    );
    assert_eq!(unsafe { rm_image_len(image) }, 1);
    unsafe { rm_image_free(image) };
    assert_eq!(
        unsafe { rm_image_from_words(words.as_ptr(), 257, &mut image) },
        RmStatus::InvalidArgument
    );
}

#[test]
fn run_a_machine() {
    let image = assemble(COIN);
    let config = c(r#"{"mode": "coarse"}"#);
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { rm_machine_new(config.as_ptr(), image, 9, &mut m) },
        RmStatus::Ok
    );
    let mut cost = 0;
    assert_eq!(unsafe { rm_machine_step(m, &mut cost) }, RmStatus::Ok);
    assert_eq!(cost, 1);
    let mut v = 0u8;
    assert_eq!(unsafe { rm_machine_register(m, 1, &mut v) }, RmStatus::Indefinite);
    let mut status = RmRunStatus::Timeout;
    assert_eq!(unsafe { rm_machine_run(m, 0, &mut status) }, RmStatus::Ok);
    assert_eq!(status, RmRunStatus::Halted);
    assert!(unsafe { rm_machine_is_halted(m) });
    assert_eq!(unsafe { rm_machine_cycle(m) }, 10);
    assert_eq!(unsafe { rm_machine_register(m, 1, &mut v) }, RmStatus::Ok);
    let mut word = 0u16;
    assert_eq!(unsafe { rm_machine_memory(m, 0xC0, &mut word) }, RmStatus::Ok);
    assert_eq!(word, v as u16);
    let (mut acquired, mut predicted) = (0.0, 0.0);
    assert_eq!(
        unsafe { rm_machine_information(m, &mut acquired, &mut predicted) },
        RmStatus::Ok
    );
    assert!((acquired - 1.0).abs() < 1e-12);
    assert_eq!(predicted, 1.0);
    assert_eq!(unsafe { rm_machine_step(m, ptr::null_mut()) }, RmStatus::MachineFault);
    assert!(last_error().contains("halted"));
    assert_eq!(unsafe { rm_machine_register(m, 8, &mut v) }, RmStatus::InvalidArgument);
    assert_eq!(
        unsafe { rm_machine_memory(m, 256, &mut word) },
        RmStatus::InvalidArgument
    );
    unsafe {
        rm_machine_free(m);
        rm_image_free(image);
    }
}

#[test]
fn bad_config() {
    let image = assemble("HALT");
    let mut m = ptr::null_mut();
    let config = c(r#"{"m_star_kg": -1.0}"#);
    assert_eq!(
        unsafe { rm_machine_new(config.as_ptr(), image, 0, &mut m) },
        RmStatus::ConfigError
    );
    assert!(last_error().contains("m_star"));
    let config = c(r#"{"nonsense": 1}"#);
    assert_eq!(
        unsafe { rm_machine_new(config.as_ptr(), image, 0, &mut m) },
        RmStatus::ConfigError
    );
    assert!(m.is_null());
    unsafe { rm_image_free(image) };
}

#[test]
fn ensemble_report() {
    let image = assemble(COIN);
    let config = c(r#"{"mode": "coarse"}"#);
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { rm_ensemble_json(config.as_ptr(), image, 200, 3, &mut json) },
        RmStatus::Ok
    );
    let first = take_string(json);
    assert!(first.contains("\"n_members\": 200"));
    assert_eq!(
        unsafe { rm_ensemble_json(config.as_ptr(), image, 200, 3, &mut json) },
        RmStatus::Ok
    );
    assert_eq!(take_string(json), first);
    assert_eq!(
        unsafe { rm_ensemble_json(config.as_ptr(), image, 0, 3, &mut json) },
        RmStatus::MachineFault
    );
    unsafe { rm_image_free(image) };
}

#[test]
fn kinematics() {
    let mut k = RmKinematics {
        a_c: 0.0,
        tau_d: 0.0,
        lambda: 0.0,
        latency_cycles: 0,
        can_fire: false,
    };
    assert_eq!(unsafe { rm_physics_kinematics(ptr::null(), &mut k) }, RmStatus::Ok);
    assert_eq!(
        (k.a_c, k.tau_d, k.lambda, k.latency_cycles, k.can_fire),
        (1.0, 1.0, 1.0, 8, true)
    );
    let zero = c(r#"{"u0_v": 0.0}"#);
    assert_eq!(unsafe { rm_physics_kinematics(zero.as_ptr(), &mut k) }, RmStatus::Ok);
    assert!(!k.can_fire);
    assert_eq!(k.lambda, 0.0);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(rm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/reduction_machine.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rm_assemble",
        "rm_machine_new",
        "rm_ensemble_json",
        "RM_STATUS_OK",
        "typedef struct RmMachine RmMachine",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
