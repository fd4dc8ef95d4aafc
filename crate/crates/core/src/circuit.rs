//! Lumped magnetic circuit: flux conservation, Ampère's law and the load
//! line.
//!
//! Sign convention: positive coil current magnetizes the magnet in its
//! remanent direction. With `c = 2 k2 l_g A_m / (mu0 k1 A_g)` the circuit
//! constraint reads `L_m H_m + c B_m = N I_c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hysteresis::{MagnetMode, MagnetState, MajorLoop, CORNER_TOL, MU0};
use crate::root;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    #[serde(rename = "A_m")]
    pub a_m: f64,
    #[serde(rename = "A_g")]
    pub a_g: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    pub l_g: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub k1: f64,
    pub k2: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool); 8] = [
            ("A_m", self.a_m, self.a_m > 0.0),
            ("A_g", self.a_g, self.a_g > 0.0),
            ("L_m", self.l_m, self.l_m > 0.0),
            ("l_g", self.l_g, self.l_g > 0.0),
            ("N", self.n, self.n >= 1.0),
            ("R", self.r, self.r > 0.0),
            ("k1", self.k1, self.k1 > 0.0 && self.k1 <= 1.0),
            ("k2", self.k2, self.k2 >= 1.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} = {value} is not allowed"
                )));
            }
        }
        Ok(())
    }

    /// Copy with a different air gap.
    pub fn with_gap(&self, l_g: f64) -> Self {
        CircuitParams { l_g, ..*self }
    }

    /// Coefficient `c` of `B_m` in `L_m H_m + c B_m = N I_c`.
    pub fn flux_mmf_coefficient(&self) -> f64 {
        2.0 * self.k2 * self.l_g * self.a_m / (MU0 * self.k1 * self.a_g)
    }

    /// Coil current that holds the magnet at `(h_m, b_m)`.
    pub fn current_for(&self, h_m: f64, b_m: f64) -> f64 {
        (self.l_m * h_m + self.flux_mmf_coefficient() * b_m) / self.n
    }
}

pub fn gap_flux_from_magnet(b_m: f64, p: &CircuitParams) -> f64 {
    b_m * p.a_m / (p.k1 * p.a_g)
}

/// Magnet `(H_m, B_m)` implied by a gap-flux reading and the coil current.
pub fn magnet_fields_from_measurement(b_g: f64, i_c: f64, p: &CircuitParams) -> (f64, f64) {
    let b_m = p.k1 * b_g * p.a_g / p.a_m;
    let h_m = (p.n * i_c - 2.0 * p.k2 * p.l_g * b_g / MU0) / p.l_m;
    (h_m, b_m)
}

/// `B_m = slope * (H_m - h_intercept)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadLine {
    pub slope: f64,
    pub h_intercept: f64,
}

impl LoadLine {
    pub fn b_at(&self, h: f64) -> f64 {
        self.slope * (h - self.h_intercept)
    }
}

pub fn load_line(i_c: f64, p: &CircuitParams) -> LoadLine {
    LoadLine {
        slope: -MU0 * (p.k1 / p.k2) * (p.a_g * p.l_m) / (2.0 * p.a_m * p.l_g),
        h_intercept: p.n * i_c / p.l_m,
    }
}

/// Intersection of the load line for `i_c` with the characteristic the
/// magnet is currently on.
pub fn circuit_operating_point(
    state: &MagnetState,
    major: &MajorLoop,
    i_c: f64,
    p: &CircuitParams,
) -> Result<(f64, f64)> {
    p.validate()?;
    let ll = load_line(i_c, p);
    let (lo, hi) = (major.h_min(), major.h_max());

    let characteristic = |h: f64| match state.mode {
        MagnetMode::MajorDescending => major.descending(h),
        MagnetMode::MajorAscending => major.ascending(h).unwrap_or_else(|| major.descending(h)),
        MagnetMode::Recoil(line) => line.b_at(h),
    };
    let diff = |h: f64| characteristic(h) - ll.b_at(h);

    let no_intersection = || {
        let (c_lo, c_hi) = (characteristic(lo), characteristic(hi));
        let (l_lo, l_hi) = (ll.b_at(lo), ll.b_at(hi));
        Error::NoIntersection {
            h_min: lo,
            h_max: hi,
            char_min: c_lo.min(c_hi),
            char_max: c_lo.max(c_hi),
            load_min: l_lo.min(l_hi),
            load_max: l_lo.max(l_hi),
        }
    };

    let r = root::bisect(diff, lo, hi, CORNER_TOL, 0.0).ok_or_else(no_intersection)?;
    let h = r.x;
    let b = ll.b_at(h);

    if let MagnetMode::Recoil(line) = state.mode {
        // Two straight lines: closed form must agree with the bracketed solve.
        let h_closed = (ll.slope * ll.h_intercept + line.b_r_prime) / (ll.slope - line.slope());
        let b_closed = ll.b_at(h_closed);
        if (b_closed - b).abs() > CORNER_TOL {
            return Err(Error::CrossCheck {
                numeric: b,
                closed_form: b_closed,
            });
        }
    }
    Ok((h, b))
}
