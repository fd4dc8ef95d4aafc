//! Predict step: from a gap-flux set-point to the recoil line the magnet
//! has to end up on and the corner point that selects it.

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::hysteresis::{corner_point, MajorLoop, RecoilFit, CORNER_TOL, MU0};
use crate::root;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub b_o: f64,
    pub h_o: f64,
    pub b_r_prime: f64,
    pub mu_rec: f64,
    pub corner_h: f64,
    pub corner_b: f64,
}

/// Target magnet operating point `(H_o, B_o)` for a gap-flux set-point.
pub fn predict_target_point(b_g_set: f64, p: &CircuitParams) -> Result<(f64, f64)> {
    if !(b_g_set >= 0.0) {
        return Err(Error::OutOfRange {
            what: "B_g_set",
            value: b_g_set,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let b_o = p.k1 * (p.a_g / p.a_m) * b_g_set;
    let h_o = -2.0 * p.k2 * p.l_g * b_g_set / (p.l_m * MU0);
    Ok((h_o, b_o))
}

/// Remanence of the recoil line through `(H_o, B_o)` whose permeability
/// follows `fit`.
///
/// Solved by bisection and checked against the closed-form solution of the
/// linear equation.
pub fn required_remanence(h_o: f64, b_o: f64, fit: &RecoilFit) -> Result<(f64, f64)> {
    let den = 1.0 + fit.slope * MU0 * h_o;
    if den.abs() < 1e-9 {
        return Err(Error::Singular(format!(
            "1 + slope * mu0 * H_o = {den:e} at H_o = {h_o} A/m"
        )));
    }
    let residual = |b_r: f64| b_r - b_o + fit.mu_rec(b_r) * MU0 * h_o;
    let closed = (b_o - fit.intercept * MU0 * h_o) / den;

    let half_width = 1.0 + 2.0 * closed.abs();
    let numeric = root::bisect(residual, -half_width, half_width, 1e-12, 0.0)
        .ok_or_else(|| Error::Singular(format!("no remanence bracket for H_o = {h_o}")))?;
    if (numeric.x - closed).abs() > 1e-9 {
        return Err(Error::CrossCheck {
            numeric: numeric.x,
            closed_form: closed,
        });
    }
    Ok((numeric.x, fit.mu_rec(numeric.x)))
}

/// Range of remanence over which the recoil fit is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRange {
    pub min: f64,
    pub max: f64,
    /// Extrapolation allowed beyond the range, with a warning.
    pub margin: f64,
}

impl Default for FitRange {
    fn default() -> Self {
        FitRange {
            min: 0.0,
            max: 1.3,
            margin: 0.05,
        }
    }
}

impl FitRange {
    fn check(&self, b_set: f64, b_r_prime: f64) -> Result<()> {
        if b_r_prime >= self.min && b_r_prime <= self.max {
            return Ok(());
        }
        if b_r_prime >= self.min - self.margin && b_r_prime <= self.max + self.margin {
            log::warn!(
                "B_r' = {b_r_prime} T extrapolates the recoil fit beyond [{}, {}] T",
                self.min,
                self.max
            );
            return Ok(());
        }
        Err(Error::Unreachable {
            b_set,
            reason: format!(
                "required B_r' = {b_r_prime} T is outside the recoil fit range [{}, {}] T",
                self.min - self.margin,
                self.max + self.margin
            ),
        })
    }
}

pub fn predict(
    b_g_set: f64,
    p: &CircuitParams,
    major: &MajorLoop,
    fit: &RecoilFit,
) -> Result<PredictionResult> {
    predict_within(b_g_set, p, major, fit, &FitRange::default())
}

/// [`predict`] with an explicit fit validity range.
pub fn predict_within(
    b_g_set: f64,
    p: &CircuitParams,
    major: &MajorLoop,
    fit: &RecoilFit,
    range: &FitRange,
) -> Result<PredictionResult> {
    let (h_o, b_o) = predict_target_point(b_g_set, p)?;
    let unreachable = |reason: String| Error::Unreachable {
        b_set: b_g_set,
        reason,
    };

    if !major.contains(h_o) {
        return Err(unreachable(format!(
            "H_o = {h_o} A/m lies outside the BH data [{}, {}] A/m",
            major.h_min(),
            major.h_max()
        )));
    }
    let b_major = major.descending(h_o);
    if b_o > b_major + CORNER_TOL {
        return Err(unreachable(format!(
            "B_o = {b_o} T lies above the major branch ({b_major} T at H_o)"
        )));
    }

    let (b_r_prime, mu_rec) = required_remanence(h_o, b_o, fit)?;
    range.check(b_g_set, b_r_prime)?;

    let (corner_h, corner_b) =
        corner_point(major, b_r_prime, mu_rec).map_err(|e| unreachable(e.to_string()))?;
    if corner_h > h_o + 1e-6 {
        return Err(unreachable(format!(
            "corner H = {corner_h} A/m lies right of the target H_o = {h_o} A/m"
        )));
    }
    Ok(PredictionResult {
        b_o,
        h_o,
        b_r_prime,
        mu_rec,
        corner_h,
        corner_b,
    })
}
