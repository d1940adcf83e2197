//! Classical dynamics of the charged condensate pointer.
//!
//! A pin applies a potential step `U0` over a run length `l_r`. The condensed
//! bosons feel a constant Coulomb acceleration `a_C = e* U0 / (m* l_r)` and a
//! velocity-dependent drag `k_d V^d`, so the center-of-mass velocity obeys
//!
//! ```text
//! dV/dt = a_C - k_d V^d        (d = 1 or 2)
//! ```
//!
//! and relaxes to the terminal velocity `Λ = (a_C / k_d)^(1/d) = a_C τ_d`.
//! `Λ` is the coupling strength of the meter/pointer interaction used by
//! [`crate::quantum::evolve_von_neumann`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Resonant wavelength of the rotational water-molecule transition [m].
pub const RESONANT_WAVELENGTH_M: f64 = 400e-6;
/// Macroscopic radius of the condensate [m].
pub const BEC_RADIUS_M: f64 = 25e-6;
/// Operating temperature [K].
pub const TEMPERATURE_K: f64 = 300.0;
/// Default pin tubule diameter [m]; must stay below the resonant wavelength.
pub const DEFAULT_TUBE_DIAMETER_M: f64 = 200e-6;

/// Number of relaxation times after which the pointer counts as settled.
pub const SETTLE_RELAXATION_TIMES: f64 = 5.0;
/// Default branch separation, in units of the pointer spread, required before
/// an event reading is allowed.
pub const DEFAULT_SEPARATION_THRESHOLD: f64 = 3.0;
/// The integrator refuses steps coarser than `τ_d / STEP_GUARD_DIVISOR`.
pub const STEP_GUARD_DIVISOR: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("damping exponent must be 1 or 2, got {0}")]
    InvalidDampingExponent(u8),
    #[error("tube diameter {diameter} m is not below the resonant wavelength {wavelength} m")]
    TubeTooWide { diameter: f64, wavelength: f64 },
    #[error("no relaxation scale: quadratic damping with zero Coulomb acceleration")]
    NoRelaxationScale,
    #[error("step too coarse: dt = {dt} s must be below {limit} s")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("pin cannot fire: terminal velocity is zero (no potential applied)")]
    PinCannotFire,
}

/// Velocity-dependent damping law `k_d V^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Damping {
    /// `d = 1`, `k_1` in 1/s.
    Linear,
    /// `d = 2`, `k_2` in 1/m.
    Quadratic,
}

impl Damping {
    pub fn exponent(self) -> u8 {
        match self {
            Damping::Linear => 1,
            Damping::Quadratic => 2,
        }
    }
}

impl TryFrom<u8> for Damping {
    type Error = PhysicsError;

    fn try_from(d: u8) -> Result<Self, Self::Error> {
        match d {
            1 => Ok(Damping::Linear),
            2 => Ok(Damping::Quadratic),
            other => Err(PhysicsError::InvalidDampingExponent(other)),
        }
    }
}

impl From<Damping> for u8 {
    fn from(d: Damping) -> u8 {
        d.exponent()
    }
}

/// Parameters of one pin's pointer. Charge, mass, potential, run length and
/// damping constant are free; the geometry constants default to their physical
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub e_star: f64,
    pub m_star: f64,
    pub u0: f64,
    pub l_r: f64,
    pub damping: Damping,
    pub k_d: f64,
    pub tube_diameter: f64,
    pub resonant_wavelength: f64,
    pub bec_radius: f64,
    pub temperature: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            e_star: 1.0,
            m_star: 1.0,
            u0: 1.0,
            l_r: 1.0,
            damping: Damping::Linear,
            k_d: 1.0,
            tube_diameter: DEFAULT_TUBE_DIAMETER_M,
            resonant_wavelength: RESONANT_WAVELENGTH_M,
            bec_radius: BEC_RADIUS_M,
            temperature: TEMPERATURE_K,
        }
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), PhysicsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl PhysicsParams {
    /// Checks the parameters the dynamics depend on.
    pub fn validate_dynamics(&self) -> Result<(), PhysicsError> {
        require_positive("e_star", self.e_star)?;
        require_positive("m_star", self.m_star)?;
        require_positive("l_r", self.l_r)?;
        require_positive("k_d", self.k_d)?;
        if !(self.u0.is_finite() && self.u0 >= 0.0) {
            return Err(PhysicsError::InvalidParameter {
                name: "u0",
                value: self.u0,
                reason: "must be finite and >= 0",
            });
        }
        Ok(())
    }

    /// Checks that the tubule is narrower than the resonant wavelength.
    pub fn validate_geometry(&self) -> Result<(), PhysicsError> {
        require_positive("tube_diameter", self.tube_diameter)?;
        require_positive("resonant_wavelength", self.resonant_wavelength)?;
        if self.tube_diameter >= self.resonant_wavelength {
            return Err(PhysicsError::TubeTooWide {
                diameter: self.tube_diameter,
                wavelength: self.resonant_wavelength,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        self.validate_dynamics()?;
        self.validate_geometry()
    }
}

/// Derived pointer timescales. All three fields are zero for an undriven pin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerKinematics {
    pub a_c: f64,
    pub tau_d: f64,
    pub v_terminal: f64,
}

/// `a_C = e* U0 / (m* l_r)`.
pub fn coulomb_acceleration(p: &PhysicsParams) -> Result<f64, PhysicsError> {
    p.validate_dynamics()?;
    if p.u0 == 0.0 {
        return Ok(0.0);
    }
    Ok(p.e_star * p.u0 / (p.m_star * p.l_r))
}

/// `τ_1 = 1/k_1` or `τ_2 = 1/sqrt(a_C k_2)`.
pub fn relaxation_time(p: &PhysicsParams) -> Result<f64, PhysicsError> {
    let a_c = coulomb_acceleration(p)?;
    match p.damping {
        Damping::Linear => Ok(1.0 / p.k_d),
        Damping::Quadratic if a_c == 0.0 => Err(PhysicsError::NoRelaxationScale),
        Damping::Quadratic => Ok(1.0 / (a_c * p.k_d).sqrt()),
    }
}

/// `Λ = (a_C / k_d)^(1/d)`, independent of the initial velocity.
pub fn terminal_velocity(p: &PhysicsParams) -> Result<f64, PhysicsError> {
    let a_c = coulomb_acceleration(p)?;
    let ratio = a_c / p.k_d;
    Ok(match p.damping {
        Damping::Linear => ratio,
        Damping::Quadratic => ratio.sqrt(),
    })
}

pub fn kinematics(p: &PhysicsParams) -> Result<PointerKinematics, PhysicsError> {
    let a_c = coulomb_acceleration(p)?;
    if a_c == 0.0 {
        return Ok(PointerKinematics {
            a_c: 0.0,
            tau_d: 0.0,
            v_terminal: 0.0,
        });
    }
    Ok(PointerKinematics {
        a_c,
        tau_d: relaxation_time(p)?,
        v_terminal: terminal_velocity(p)?,
    })
}

fn acceleration(a_c: f64, k_d: f64, damping: Damping, v: f64) -> f64 {
    match damping {
        Damping::Linear => a_c - k_d * v,
        Damping::Quadratic => a_c - k_d * v * v,
    }
}

fn rk4_step(a_c: f64, k_d: f64, damping: Damping, v: f64, h: f64) -> f64 {
    let f = |v: f64| acceleration(a_c, k_d, damping, v);
    let k1 = f(v);
    let k2 = f(v + 0.5 * h * k1);
    let k3 = f(v + 0.5 * h * k2);
    let k4 = f(v + h * k3);
    v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Timescale the step guard compares against. An undriven pointer with
/// quadratic drag has no `τ_2`; its decay scale `1/(k_2 v0)` is used instead.
fn guard_timescale(p: &PhysicsParams, a_c: f64, v0: f64) -> Option<f64> {
    match p.damping {
        Damping::Linear => Some(1.0 / p.k_d),
        Damping::Quadratic if a_c > 0.0 => Some(1.0 / (a_c * p.k_d).sqrt()),
        Damping::Quadratic if v0 > 0.0 => Some(1.0 / (p.k_d * v0)),
        Damping::Quadratic => None,
    }
}

fn check_step(p: &PhysicsParams, a_c: f64, v0: f64, dt: f64) -> Result<(), PhysicsError> {
    require_positive("dt", dt)?;
    if let Some(scale) = guard_timescale(p, a_c, v0) {
        let limit = scale / STEP_GUARD_DIVISOR;
        if dt >= limit {
            return Err(PhysicsError::StepTooCoarse { dt, limit });
        }
    }
    Ok(())
}

fn check_start(v0: f64) -> Result<(), PhysicsError> {
    if v0.is_finite() && v0 >= 0.0 {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter {
            name: "v0",
            value: v0,
            reason: "must be finite and >= 0",
        })
    }
}

/// Integrates the pointer velocity from `v0` over `[0, t]` with the classical
/// fourth-order Runge-Kutta scheme.
///
/// The interval is split into `ceil(t/dt)` equal steps so the endpoint is hit
/// exactly. With quadratic damping and `v0 > Λ` the pointer decelerates along
/// the coth-type branch; that case is integrated as well.
pub fn integrate_velocity(p: &PhysicsParams, v0: f64, t: f64, dt: f64) -> Result<f64, PhysicsError> {
    let a_c = coulomb_acceleration(p)?;
    check_start(v0)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(PhysicsError::InvalidParameter {
            name: "t",
            value: t,
            reason: "must be finite and >= 0",
        });
    }
    check_step(p, a_c, v0, dt)?;
    if t == 0.0 {
        return Ok(v0);
    }
    let steps = (t / dt).ceil().max(1.0) as u64;
    let h = t / steps as f64;
    let mut v = v0;
    for _ in 0..steps {
        v = rk4_step(a_c, p.k_d, p.damping, v, h);
    }
    Ok(v)
}

/// Velocity samples `V(k dt)` for `k = 0..=steps`.
pub fn velocity_trajectory(p: &PhysicsParams, v0: f64, dt: f64, steps: usize) -> Result<Vec<f64>, PhysicsError> {
    let a_c = coulomb_acceleration(p)?;
    check_start(v0)?;
    check_step(p, a_c, v0, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut v = v0;
    out.push(v);
    for _ in 0..steps {
        v = rk4_step(a_c, p.k_d, p.damping, v, dt);
        out.push(v);
    }
    Ok(out)
}

/// Machine cycles needed before a pin may be read: the settle time `5 τ_d`
/// plus the time for the pointer branches to separate by `eta · sigma_q`.
pub fn readout_latency(p: &PhysicsParams, sigma_q: f64, eta: f64, t_cycle: f64) -> Result<u64, PhysicsError> {
    latency_cycles(&kinematics(p)?, sigma_q, eta, t_cycle)
}

/// [`readout_latency`] for already-derived kinematics.
pub fn latency_cycles(k: &PointerKinematics, sigma_q: f64, eta: f64, t_cycle: f64) -> Result<u64, PhysicsError> {
    require_positive("sigma_q", sigma_q)?;
    require_positive("eta", eta)?;
    require_positive("t_cycle", t_cycle)?;
    if k.v_terminal <= 0.0 {
        return Err(PhysicsError::PinCannotFire);
    }
    let seconds = SETTLE_RELAXATION_TIMES * k.tau_d + eta * sigma_q / k.v_terminal;
    Ok(((seconds / t_cycle).ceil() as u64).max(1))
}
