#![allow(dead_code)]

use tunable_magnet::circuit::circuit_operating_point;
use tunable_magnet::config::Setup;
use tunable_magnet::hysteresis::{Branch, MagnetState, RecoilLine};
use tunable_magnet::plant::{Plant, PlantState};
use tunable_magnet::prediction::PredictionResult;

/// Plant at rest on the recoil line predicted for `b_set`, coil open.
pub fn resting_on_predicted_line(setup: &Setup, l_g: f64, b_set: f64) -> (Plant, PlantState) {
    let plant = setup.plant_for_gap(l_g).unwrap();
    let pred = setup
        .predictor_for_gap(l_g)
        .unwrap()
        .predict(b_set)
        .unwrap();
    let line = line_of(&pred);
    let (h, _) = circuit_operating_point(
        &MagnetState::on_recoil(line, pred.corner_h),
        &plant.magnet.major,
        0.0,
        &plant.params,
    )
    .unwrap();
    let mut s = plant.state_at(MagnetState::on_recoil(line, h), 0.0);
    s.i_c = 0.0;
    (plant, s)
}

pub fn line_of(pred: &PredictionResult) -> RecoilLine {
    RecoilLine {
        b_r_prime: pred.b_r_prime,
        mu_rec: pred.mu_rec,
        corner_h: pred.corner_h,
        corner_b: pred.corner_b,
        anchor: Branch::Descending,
    }
}

pub struct StepResponse {
    pub dc_gain: f64,
    pub rise_time: f64,
    pub stayed_on_line: bool,
}

/// Applies a constant voltage from rest and measures the gap-flux step:
/// final value over `u` and the time to 63.2 % of the change, linearly
/// interpolated between samples.
pub fn step_response(
    plant: &Plant,
    start: PlantState,
    u: f64,
    dt: f64,
    t_end: f64,
) -> StepResponse {
    let line = start.magnet.recoil_line().copied();
    let mut s = start;
    let mut path = vec![(0.0, start.b_g)];
    let mut stayed_on_line = true;
    while s.t - start.t < t_end {
        s = plant.step(&s, u, dt).unwrap();
        stayed_on_line &= s.magnet.recoil_line().copied() == line;
        path.push((s.t - start.t, s.b_g));
    }
    let delta = s.b_g - start.b_g;
    let target = start.b_g + 0.632_120_558_828_557_7 * delta;
    let rising = delta > 0.0;
    let k = path
        .iter()
        .position(|&(_, b)| if rising { b >= target } else { b <= target })
        .unwrap();
    let ((t0, b0), (t1, b1)) = (path[k - 1], path[k]);
    StepResponse {
        dc_gain: delta / u,
        rise_time: t0 + (target - b0) * (t1 - t0) / (b1 - b0),
        stayed_on_line,
    }
}
