//! Pins between main memory and the registers.
//!
//! Every transfer of one bit runs the same pipeline: prepare the meter state
//! from the bit's marginal, decohere, purify, couple to the pointer for the
//! readout window, apply the superselection rule and read an event.

use rand::Rng;
use serde::Serialize;

use crate::physics::{self, PhysicsError, PhysicsParams, PointerKinematics, SETTLE_RELAXATION_TIMES};
use crate::quantum::{
    apply_superselection, decohere, event_read, evolve_von_neumann, purify, Bit, DensityMatrix, PointerState,
    QuantumError,
};

use super::MachineFault;

pub const PIN_COUNT: usize = 8;

/// Readout timing shared by all pins of one machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PinTiming {
    pub lambda: f64,
    pub tau_d: f64,
    pub u0: f64,
    pub sigma_q: f64,
    pub eta: f64,
    pub t_cycle: f64,
    /// `None` when the pointer is undriven.
    pub latency_cycles: Option<u64>,
}

impl PinTiming {
    /// `lambda_scale` multiplies the terminal velocity (per-member jitter).
    pub fn new(
        physics: &PhysicsParams,
        sigma_q: f64,
        eta: f64,
        t_cycle: f64,
        lambda_scale: f64,
    ) -> Result<Self, PhysicsError> {
        let k = physics::kinematics(physics)?;
        if !(lambda_scale.is_finite() && lambda_scale > 0.0) {
            return Err(PhysicsError::InvalidParameter {
                name: "lambda_scale",
                value: lambda_scale,
                reason: "must be finite and > 0",
            });
        }
        let scaled = PointerKinematics {
            v_terminal: k.v_terminal * lambda_scale,
            ..k
        };
        let latency_cycles = match physics::latency_cycles(&scaled, sigma_q, eta, t_cycle) {
            Ok(cycles) => Some(cycles),
            Err(PhysicsError::PinCannotFire) => None,
            Err(e) => return Err(e),
        };
        let lambda = scaled.v_terminal;
        Ok(Self {
            lambda,
            tau_d: k.tau_d,
            u0: physics.u0,
            sigma_q,
            eta,
            t_cycle,
            latency_cycles,
        })
    }

    /// Pointer coupling time after settling: whatever is left of the charged
    /// latency once `5 τ_d` has elapsed.
    fn coupling_window(&self, cycles: u64) -> f64 {
        (cycles as f64 * self.t_cycle - SETTLE_RELAXATION_TIMES * self.tau_d).max(0.0)
    }

    /// Cycles charged for a transfer. An undriven pin can only pass definite
    /// bits, which it does in a single cycle.
    pub fn transfer_cycles(&self, all_definite: bool) -> Result<u64, MachineFault> {
        match self.latency_cycles {
            Some(c) => Ok(c),
            None if all_definite => Ok(1),
            None => Err(MachineFault::PinCannotFire),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PinEvent {
    pub pin: u8,
    pub cycle: u64,
    pub transfer: Transfer,
    pub addr: u8,
    /// Meter weights `(p0, p1)` before the reading.
    pub weights: [f64; 2],
    pub outcome: Bit,
    pub surprisal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinDevice {
    id: u8,
    delta_u: f64,
    rho: DensityMatrix,
    pointer: Option<PointerState>,
    busy_until: u64,
    log: Vec<PinEvent>,
}

impl PinDevice {
    pub fn new(id: u8) -> Self {
        Self {
            id,
            delta_u: 0.0,
            rho: DensityMatrix::pure(Bit::Zero),
            pointer: None,
            busy_until: 0,
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    /// Current potential: `0` for meter state 0, `U0` for meter state 1.
    pub fn delta_u(&self) -> f64 {
        self.delta_u
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn pointer(&self) -> Option<&PointerState> {
        self.pointer.as_ref()
    }

    pub fn log(&self) -> &[PinEvent] {
        &self.log
    }

    pub fn is_busy(&self, cycle: u64) -> bool {
        self.busy_until > cycle
    }

    #[cfg(test)]
    pub(crate) fn hold_until(&mut self, cycle: u64) {
        self.busy_until = cycle;
    }

    /// Runs the reduction pipeline for a bit that is 1 with probability
    /// `p_one`. The pin stays busy for `cycles` starting at `cycle`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn fire<R: Rng + ?Sized>(
        &mut self,
        timing: &PinTiming,
        transfer: Transfer,
        addr: u8,
        p_one: f64,
        cycle: u64,
        cycles: u64,
        rng: &mut R,
    ) -> Result<PinEvent, MachineFault> {
        if self.is_busy(cycle) {
            return Err(MachineFault::StructuralHazard { pin: self.id });
        }
        let prepared = DensityMatrix::diagonal(1.0 - p_one, p_one).map_err(MachineFault::Quantum)?;
        let diagonal = decohere(&prepared);
        let purified = purify(&diagonal).map_err(MachineFault::Quantum)?;
        let pointer = PointerState::new(0.0, 0.0, timing.sigma_q).map_err(MachineFault::Quantum)?;
        let (evolved, pointer) = evolve_von_neumann(&purified, &pointer, timing.lambda, timing.coupling_window(cycles));
        let selected = apply_superselection(&evolved);
        let reading = event_read(&selected, &pointer, timing.eta, rng).map_err(|e| match e {
            QuantumError::PointerNotSeparated { .. } if timing.lambda == 0.0 => MachineFault::PinCannotFire,
            other => MachineFault::Quantum(other),
        })?;

        self.rho = reading.rho_after;
        self.delta_u = match reading.outcome {
            Bit::Zero => 0.0,
            Bit::One => timing.u0,
        };
        self.pointer = Some(pointer);
        self.busy_until = cycle + cycles;
        let event = PinEvent {
            pin: self.id,
            cycle,
            transfer,
            addr,
            weights: diagonal.populations(),
            outcome: reading.outcome,
            surprisal: reading.surprisal,
        };
        self.log.push(event);
        Ok(event)
    }
}
