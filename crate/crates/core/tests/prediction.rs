use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use tunable_magnet::circuit::{circuit_operating_point, gap_flux_from_magnet, CircuitParams};
use tunable_magnet::config::RunConfig;
use tunable_magnet::hysteresis::{Branch, MagnetState, MajorLoop, RecoilFit, RecoilLine, MU0};
use tunable_magnet::prediction::{predict, PredictionResult};
use tunable_magnet::Error;

fn nominal() -> CircuitParams {
    RunConfig::nominal().circuit
}

fn run(b_set: f64, p: &CircuitParams) -> PredictionResult {
    predict(b_set, p, &MajorLoop::bundled(), &RecoilFit::ALNICO5).unwrap()
}

/// Independent reference: closed-form target and remanence, corner by a
/// plain scan of the raw CSV with linear interpolation and bisection.
fn oracle(b_set: f64, p: &CircuitParams) -> (f64, f64, f64, f64, f64) {
    let text = include_str!("../data/alnico5_synthetic.csv");
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let h_o = -2.0 * p.k2 * p.l_g * b_set / (p.l_m * MU0);
    let b_o = p.k1 * p.a_g * b_set / p.a_m;
    let (a, c) = (0.955, 4.69);
    let b_r = (b_o - c * MU0 * h_o) / (1.0 + a * MU0 * h_o);
    let mu = a * b_r + c;
    let diff = |h: f64| {
        let k = rows
            .windows(2)
            .position(|w| w[1].0 <= h && h <= w[0].0)
            .unwrap();
        let ((h0, b0), (h1, b1)) = (rows[k], rows[k + 1]);
        let branch = b0 + (b1 - b0) * (h - h0) / (h1 - h0);
        b_r + mu * MU0 * h - branch
    };
    let k = rows
        .windows(2)
        .position(|w| diff(w[0].0) < 0.0 && diff(w[1].0) >= 0.0)
        .unwrap();
    let (mut lo, mut hi) = (rows[k + 1].0, rows[k].0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diff(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_c = 0.5 * (lo + hi);
    (h_o, b_o, b_r, h_c, b_r + mu * MU0 * h_c)
}

#[test]
fn golden_at_one_hundred_millitesla() {
    let p = nominal();
    let r = run(0.1, &p);
    let (h_o, b_o, b_r, h_c, b_c) = oracle(0.1, &p);
    assert_abs_diff_eq!(r.h_o, h_o, epsilon = 1e-9);
    assert_abs_diff_eq!(r.b_o, b_o, epsilon = 1e-12);
    assert_abs_diff_eq!(r.b_r_prime, b_r, epsilon = 1e-9);
    assert_abs_diff_eq!(r.corner_h, h_c, epsilon = 1e-3);
    assert_abs_diff_eq!(r.corner_b, b_c, epsilon = 1e-9);
    // Frozen from the oracle above.
    assert_abs_diff_eq!(r.h_o, -8753.521870054245, epsilon = 1e-6);
    assert_abs_diff_eq!(r.b_o, 0.425, epsilon = 1e-12);
    assert_abs_diff_eq!(r.b_r_prime, 0.48164973041804154, epsilon = 1e-9);
    assert_abs_diff_eq!(r.mu_rec, 5.149975492549564, epsilon = 1e-9);
    assert_abs_diff_eq!(r.corner_h, -48159.256246061006, epsilon = 1e-2);
    assert_abs_diff_eq!(r.corner_b, 0.16997987638980994, epsilon = 1e-8);
}

#[test]
fn negative_set_point_rejected() {
    let err = predict(
        -0.01,
        &nominal(),
        &MajorLoop::bundled(),
        &RecoilFit::ALNICO5,
    )
    .unwrap_err();
    assert!(matches!(err, Error::OutOfRange { .. }));
}

#[test]
fn huge_set_point_unreachable() {
    let err = predict(2.0, &nominal(), &MajorLoop::bundled(), &RecoilFit::ALNICO5).unwrap_err();
    assert!(matches!(err, Error::Unreachable { .. }), "{err}");
}

#[test]
fn zero_set_point_uses_line_through_origin() {
    let r = run(0.0, &nominal());
    assert_eq!(r.b_r_prime, 0.0);
    assert_eq!(r.h_o, 0.0);
    assert_abs_diff_eq!(r.corner_b, r.mu_rec * MU0 * r.corner_h, epsilon = 1e-9);
    assert!(r.corner_b < 0.0);
    let coercive = MajorLoop::bundled().coercive_field().unwrap();
    assert!(r.corner_h < coercive);
}

proptest! {
    #[test]
    fn stronger_set_points_need_stronger_lines(a in 0.0f64..0.18, b in 0.0f64..0.18) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = nominal();
        let (r_lo, r_hi) = (run(lo, &p), run(hi, &p));
        prop_assert!(r_lo.b_r_prime <= r_hi.b_r_prime);
        prop_assert!(r_lo.corner_b <= r_hi.corner_b + 1e-12);
    }

    #[test]
    fn predicted_line_reproduces_target(b_set in 0.0f64..0.18, l_g in 0.8e-3f64..1.4e-3) {
        let p = nominal().with_gap(l_g);
        let major = MajorLoop::bundled();
        let r = run(b_set, &p);
        let line = RecoilLine {
            b_r_prime: r.b_r_prime,
            mu_rec: r.mu_rec,
            corner_h: r.corner_h,
            corner_b: r.corner_b,
            anchor: Branch::Descending,
        };
        let state = MagnetState::on_recoil(line, r.corner_h);
        let (h, b) = circuit_operating_point(&state, &major, 0.0, &p).unwrap();
        prop_assert!((b - r.b_o).abs() <= 1e-6);
        prop_assert!((h - r.h_o).abs() * MU0 * r.mu_rec <= 1e-6);
        prop_assert!((gap_flux_from_magnet(b, &p) - b_set).abs() <= 1e-6);
    }

    #[test]
    fn wider_gap_needs_more(b_set in 0.01f64..0.15, l_g in 0.8e-3f64..1.3e-3, extra in 0.01e-3f64..0.2e-3) {
        let p = nominal();
        let narrow = run(b_set, &p.with_gap(l_g));
        let wide = run(b_set, &p.with_gap(l_g + extra));
        prop_assert!(wide.h_o.abs() > narrow.h_o.abs());
        prop_assert!(wide.b_r_prime > narrow.b_r_prime);
    }
}
