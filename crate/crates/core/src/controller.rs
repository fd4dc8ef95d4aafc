//! Gap-flux PI controller, saturation pulse and the demagnetization loop.

use serde::{Deserialize, Serialize};

use crate::circuit::{gap_flux_from_magnet, CircuitParams};
use crate::error::{Error, Result};
use crate::hysteresis::SATURATION_FRACTION;
use crate::plant::{measure_b_g, Plant, PlantState, Sensor, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIGains {
    pub k_p: f64,
    pub k_i: f64,
    #[serde(rename = "U_max")]
    pub u_max: f64,
}

impl PIGains {
    pub const K_P: f64 = 2.07;
    pub const K_I: f64 = 150.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.k_p >= 0.0 && self.k_i >= 0.0 && self.u_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "PI gains need k_p >= 0, k_i >= 0, U_max > 0 (got {}, {}, {})",
                self.k_p, self.k_i, self.u_max
            )));
        }
        Ok(())
    }
}

impl Default for PIGains {
    fn default() -> Self {
        PIGains {
            k_p: Self::K_P,
            k_i: Self::K_I,
            u_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Saturating,
    Demagnetizing,
    Coasting,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub integrator: f64,
    pub phase: Phase,
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState {
            integrator: 0.0,
            phase: Phase::Idle,
        }
    }
}

impl ControllerState {
    /// Moves to `next`, rejecting jumps the tuning sequence does not allow.
    pub fn enter(&mut self, next: Phase) -> Result<()> {
        use Phase::*;
        let ok = matches!(
            (self.phase, next),
            (Idle, Saturating)
                | (Idle, Demagnetizing)
                | (Saturating, Demagnetizing)
                | (Demagnetizing, Coasting)
                | (Coasting, Done)
        );
        if !ok {
            return Err(Error::InvalidParams(format!(
                "controller phase {:?} cannot follow {:?}",
                next, self.phase
            )));
        }
        self.phase = next;
        Ok(())
    }
}

/// Corner-point flux density expressed as gap flux.
pub fn reference_transform(corner_b: f64, p: &CircuitParams) -> f64 {
    gap_flux_from_magnet(corner_b, p)
}

/// One PI update: integrate first, then form the output.
///
/// The integrator holds while the output is saturated and the error pushes
/// further into saturation.
pub fn pi_step(cs: ControllerState, error: f64, dt: f64, g: &PIGains) -> (f64, ControllerState) {
    let integrated = cs.integrator + error * dt;
    let raw = g.k_p * error + g.k_i * integrated;
    let winding_up = raw.abs() > g.u_max && error.signum() == raw.signum() && error != 0.0;
    let integrator = if winding_up {
        cs.integrator
    } else {
        integrated
    };
    let u = (g.k_p * error + g.k_i * integrator).clamp(-g.u_max, g.u_max);
    (u, ControllerState { integrator, ..cs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub voltage: f64,
    pub dwell: f64,
    pub timeout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub dt_control: f64,
    pub substeps: usize,
    pub settle_band: f64,
    pub settle_hold: usize,
    pub coast_current: f64,
    pub demag_timeout: f64,
    pub coast_timeout: f64,
}

impl LoopConfig {
    pub fn dt_plant(&self) -> f64 {
        self.dt_control / self.substeps as f64
    }
}

/// Sets `U_c = 0` and steps until `|I_c|` falls below the coast threshold.
pub fn coast(
    plant: &Plant,
    state: PlantState,
    cfg: &LoopConfig,
    trajectory: &mut Trajectory,
) -> Result<PlantState> {
    let start = state.t;
    let mut s = state;
    while s.i_c.abs() >= cfg.coast_current {
        if s.t - start > cfg.coast_timeout {
            return Err(Error::CoastTimeout {
                threshold: cfg.coast_current,
                timeout: cfg.coast_timeout,
            });
        }
        s = plant.advance(&s, 0.0, cfg.dt_control, cfg.substeps)?;
        trajectory.record(&s);
    }
    Ok(s)
}

/// Drives the magnet to positive saturation with a constant voltage, holds
/// for the dwell time, then coasts.
pub fn saturation_pulse(
    plant: &Plant,
    state: PlantState,
    pulse: &PulseConfig,
    cfg: &LoopConfig,
    trajectory: &mut Trajectory,
) -> Result<PlantState> {
    if !(pulse.voltage > 0.0) {
        return Err(Error::InvalidParams(format!(
            "saturation pulse voltage must be positive, got {}",
            pulse.voltage
        )));
    }
    let threshold = SATURATION_FRACTION * plant.magnet.major.b_sat();
    let start = state.t;
    let mut s = state;
    while s.magnet.b < threshold {
        if s.t - start > pulse.timeout {
            return Err(Error::InsufficientPulse {
                voltage: pulse.voltage,
                timeout: pulse.timeout,
            });
        }
        s = match plant.advance(&s, pulse.voltage, cfg.dt_control, cfg.substeps) {
            Ok(next) => next,
            Err(Error::StepOutOfRange { .. }) => {
                return Err(Error::InsufficientPulse {
                    voltage: pulse.voltage,
                    timeout: pulse.timeout,
                })
            }
            Err(e) => return Err(e),
        };
        trajectory.record(&s);
    }
    let dwell_end = s.t + pulse.dwell;
    while s.t < dwell_end - 1e-12 {
        s = plant.advance(&s, pulse.voltage, cfg.dt_control, cfg.substeps)?;
        trajectory.record(&s);
    }
    coast(plant, s, cfg, trajectory)
}

/// Summary of one closed-loop demagnetization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemagReport {
    pub reference: f64,
    /// Smallest `B_g - reference` seen before the coast.
    pub min_excess: f64,
    /// Gap flux when the loop released the coil.
    pub settled_b_g: f64,
    pub settle_time: f64,
}

/// Closes the gap-flux loop until the measured error stays inside the
/// settle band, then removes the voltage and coasts.
#[allow(clippy::too_many_arguments)]
pub fn run_demagnetization(
    plant: &Plant,
    state: PlantState,
    reference_b_g: f64,
    gains: &PIGains,
    sensor: &mut Sensor,
    cfg: &LoopConfig,
    cs: &mut ControllerState,
    trajectory: &mut Trajectory,
) -> Result<(PlantState, DemagReport)> {
    cs.enter(Phase::Demagnetizing)?;
    cs.integrator = 0.0;
    let start = state.t;
    let mut s = state;
    let mut inside = 0usize;
    let mut min_excess = s.b_g - reference_b_g;
    loop {
        let error = reference_b_g - measure_b_g(&s, sensor);
        if error.abs() < cfg.settle_band {
            inside += 1;
            if inside >= cfg.settle_hold {
                break;
            }
        } else {
            inside = 0;
        }
        if s.t - start > cfg.demag_timeout {
            trajectory.record_always(&s);
            return Err(Error::ControllerTimeout {
                timeout: cfg.demag_timeout,
                last_error: error,
                trajectory: Box::new(trajectory.clone()),
            });
        }
        let (u, next) = pi_step(*cs, error, cfg.dt_control, gains);
        *cs = next;
        s = plant.advance(&s, u, cfg.dt_control, cfg.substeps)?;
        min_excess = min_excess.min(s.b_g - reference_b_g);
        trajectory.record(&s);
    }
    let report = DemagReport {
        reference: reference_b_g,
        min_excess,
        settled_b_g: s.b_g,
        settle_time: s.t - start,
    };
    cs.enter(Phase::Coasting)?;
    let s = coast(plant, s, cfg, trajectory)?;
    cs.enter(Phase::Done)?;
    Ok((s, report))
}
