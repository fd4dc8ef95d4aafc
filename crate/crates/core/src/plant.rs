//! Coil, magnet and gap as a time-domain plant.
//!
//! The magnetics are quasi-static: at every instant the magnet sits where
//! the load line for the present coil current meets its active
//! characteristic. The only state equation is the coil circuit
//!
//! ```text
//! U_c = R I_c + N A_m dB_m/dt
//! ```
//!
//! integrated with backward Euler on the flux linkage. Each step solves for
//! the end-of-step magnet field by bisection over the hysteresis
//! characteristic, so kinks at corner points cannot destabilise it.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::{circuit_operating_point, gap_flux_from_magnet, CircuitParams};
use crate::error::{Error, Result};
use crate::hysteresis::{Direction, MagnetModel, MagnetState, MU0};
use crate::root;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub i_c: f64,
    pub u_c: f64,
    pub magnet: MagnetState,
    pub b_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub params: CircuitParams,
    pub magnet: MagnetModel,
    /// Amplifier output limit, V.
    pub u_max: f64,
}

/// Small-signal model `B_g(s) / U_c(s) = G_0 / (1 + s L / R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub g0: f64,
    pub inductance: f64,
    /// Differential permeability `dB_m/dH_m`, H/m.
    pub mu: f64,
}

impl Linearization {
    pub fn tau(&self, r: f64) -> f64 {
        self.inductance / r
    }
}

impl Plant {
    pub fn new(params: CircuitParams, magnet: MagnetModel, u_max: f64) -> Result<Self> {
        if !(u_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "U_max = {u_max} must be positive"
            )));
        }
        Ok(Plant {
            params,
            magnet,
            u_max,
        })
    }

    /// Plant at rest with the magnet in `magnet`, coil current from the
    /// circuit constraint.
    pub fn state_at(&self, magnet: MagnetState, t: f64) -> PlantState {
        PlantState {
            t,
            i_c: self.params.current_for(magnet.h, magnet.b),
            u_c: 0.0,
            magnet,
            b_g: gap_flux_from_magnet(magnet.b, &self.params),
        }
    }

    /// Thermally demagnetized magnet, no current.
    pub fn demagnetized(&self) -> Result<PlantState> {
        Ok(self.state_at(self.magnet.demagnetized()?, 0.0))
    }

    /// Magnet left on the major descending branch by a past saturation,
    /// resting where the zero-current load line crosses that branch.
    pub fn magnetized(&self) -> Result<PlantState> {
        let major = &self.magnet.major;
        let (h, _) =
            circuit_operating_point(&MagnetState::saturated(major), major, 0.0, &self.params)?;
        let mut state = self.state_at(MagnetState::on_major(major, h)?, 0.0);
        state.i_c = 0.0;
        Ok(state)
    }

    pub fn inductance_at(&self, mu: f64) -> f64 {
        let p = &self.params;
        p.n * p.n * p.a_m * mu / (p.l_m + mu * p.flux_mmf_coefficient())
    }

    /// Smallest `L/R` over the permeabilities the magnet can present.
    pub fn tau_min(&self) -> f64 {
        let mu_major = self.magnet.major.min_slope().max(MU0 * 1e-3);
        let mu_recoil = self.magnet.recoil.min_mu(&self.magnet.major) * MU0;
        self.inductance_at(mu_major.min(mu_recoil)) / self.params.r
    }

    /// One implicit step of length `dt` with applied voltage `u_c`.
    pub fn step(&self, s: &PlantState, u_c: f64, dt: f64) -> Result<PlantState> {
        let p = &self.params;
        let u = u_c.clamp(-self.u_max, self.u_max);
        let c = p.flux_mmf_coefficient();
        let flux_coef = p.n * p.a_m;
        let (h_n, b_n) = (s.magnet.h, s.magnet.b);
        let g_n = dt * (p.r * s.i_c - u);
        if g_n == 0.0 {
            return Ok(PlantState {
                t: s.t + dt,
                u_c: u,
                ..*s
            });
        }

        // Written as an increment on g_n so its sign at H_n is exact even
        // when the current is at roundoff level.
        let transition = |h: f64| self.magnet.transition(&s.magnet, h);
        let residual = |h: f64, b: f64| {
            g_n + flux_coef * (b - b_n) + dt * p.r * (p.l_m * (h - h_n) + c * (b - b_n)) / p.n
        };

        // g is non-decreasing in H with slope at least dt R L_m / N, which
        // bounds how far the root can be from H_n.
        let reach = g_n.abs() / (dt * p.r * p.l_m / p.n) * (1.0 + 1e-9) + 1e-12;
        let (lo_limit, hi_limit) = (self.magnet.major.h_min(), self.magnet.major.h_max());
        let (lo, hi) = if g_n < 0.0 {
            (h_n, (h_n + reach).min(hi_limit))
        } else {
            ((h_n - reach).max(lo_limit), h_n)
        };
        let mut err = None;
        let f = |h: f64| match transition(h) {
            Ok(m) => residual(h, m.b),
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        };
        let root = root::bisect(f, lo, hi, 0.0, 1e-6);
        if let Some(e) = err {
            return Err(e);
        }
        let root = root.ok_or(Error::StepOutOfRange {
            t: s.t + dt,
            i_c: s.i_c,
            h_m: h_n,
            u_c: u,
        })?;
        let next = transition(root.x)?;

        Ok(PlantState {
            t: s.t + dt,
            i_c: p.current_for(next.h, next.b),
            u_c: u,
            magnet: next,
            b_g: gap_flux_from_magnet(next.b, p),
        })
    }

    /// `substeps` implicit steps covering `dt` at constant voltage.
    pub fn advance(
        &self,
        s: &PlantState,
        u_c: f64,
        dt: f64,
        substeps: usize,
    ) -> Result<PlantState> {
        let h = dt / substeps as f64;
        let mut cur = *s;
        for _ in 0..substeps {
            cur = self.step(&cur, u_c, h)?;
        }
        Ok(cur)
    }

    /// Local DC gain and inductance, using the slope of the characteristic
    /// in the direction the applied voltage is pushing.
    pub fn linearize(&self, s: &PlantState) -> Result<Linearization> {
        let p = &self.params;
        let dir = if s.u_c - p.r * s.i_c >= 0.0 {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        let mu = self.magnet.differential_permeability(&s.magnet, dir)?;
        let den = p.l_m + mu * p.flux_mmf_coefficient();
        Ok(Linearization {
            g0: (p.a_m / (p.k1 * p.a_g)) * p.n * mu / (p.r * den),
            inductance: p.n * p.n * p.a_m * mu / den,
            mu,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SensorModel {
    pub fn noiseless() -> Self {
        SensorModel {
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Gap-flux sensor with its own random stream.
#[derive(Debug, Clone)]
pub struct Sensor {
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(model: &SensorModel) -> Result<Self> {
        Self::with_rng(model, ChaCha8Rng::seed_from_u64(model.seed))
    }

    pub fn with_rng(model: &SensorModel, rng: ChaCha8Rng) -> Result<Self> {
        if !(model.noise_sigma >= 0.0) || !model.noise_sigma.is_finite() {
            return Err(Error::InvalidParams(format!(
                "noise_sigma = {} must be finite and non-negative",
                model.noise_sigma
            )));
        }
        let noise = (model.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, model.noise_sigma).expect("sigma checked above"));
        Ok(Sensor { noise, rng })
    }

    pub fn read(&mut self, b_g: f64) -> f64 {
        match &self.noise {
            Some(n) => b_g + n.sample(&mut self.rng),
            None => b_g,
        }
    }
}

pub fn measure_b_g(s: &PlantState, sensor: &mut Sensor) -> f64 {
    sensor.read(s.b_g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub u_c: f64,
    pub i_c: f64,
    pub h_m: f64,
    pub b_m: f64,
    pub b_g: f64,
}

impl From<&PlantState> for TrajectorySample {
    fn from(s: &PlantState) -> Self {
        TrajectorySample {
            t: s.t,
            u_c: s.u_c,
            i_c: s.i_c,
            h_m: s.magnet.h,
            b_m: s.magnet.b,
            b_g: s.b_g,
        }
    }
}

/// Decimated record of plant states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    decimation: usize,
    seen: usize,
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["t_s", "U_c_V", "I_c_A", "H_m_A_per_m", "B_m_T", "B_g_T"];

impl Trajectory {
    /// Keeps every `decimation`-th offered sample (at least 1).
    pub fn new(decimation: usize) -> Self {
        Trajectory {
            samples: Vec::new(),
            decimation: decimation.max(1),
            seen: 0,
        }
    }

    pub fn record(&mut self, s: &PlantState) {
        if self.seen.is_multiple_of(self.decimation) {
            self.samples.push(s.into());
        }
        self.seen += 1;
    }

    /// Records `s` regardless of decimation, e.g. the final state.
    pub fn record_always(&mut self, s: &PlantState) {
        let sample: TrajectorySample = s.into();
        if self.samples.last() != Some(&sample) {
            self.samples.push(sample);
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRAJECTORY_HEADER)?;
        for s in &self.samples {
            w.write_record([s.t, s.u_c, s.i_c, s.h_m, s.b_m, s.b_g].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn plant() -> Plant {
        let params = CircuitParams {
            a_m: 1e-4,
            a_g: 5e-4,
            l_m: 0.02,
            l_g: 1e-3,
            n: 400.0,
            r: 2.0,
            k1: 0.85,
            k2: 1.1,
        };
        Plant::new(params, MagnetModel::bundled(), 30.0).unwrap()
    }

    #[test]
    fn rest_state_is_equilibrium() {
        let p = plant();
        let s = p.demagnetized().unwrap();
        let next = p.step(&s, 0.0, 1e-4).unwrap();
        assert_eq!(next.magnet, s.magnet);
        assert_eq!(next.i_c, 0.0);
        assert_eq!(next.b_g, s.b_g);
    }

    #[test]
    fn current_respects_constraint() {
        let p = plant();
        let mut s = p.demagnetized().unwrap();
        for _ in 0..200 {
            s = p.step(&s, -3.0, 2.5e-5).unwrap();
        }
        let expected = p.params.current_for(s.magnet.h, s.magnet.b);
        assert_abs_diff_eq!(s.i_c, expected, epsilon = 1e-12);
        assert!(s.i_c < 0.0 && s.b_g < 0.0);
    }

    #[test]
    fn voltage_is_clamped() {
        let p = plant();
        let s = p.demagnetized().unwrap();
        let next = p.step(&s, -100.0, 1e-5).unwrap();
        assert_eq!(next.u_c, -30.0);
    }

    #[test]
    fn driving_beyond_data_fails() {
        let p = plant();
        let mut s = p.demagnetized().unwrap();
        let mut failed = false;
        for _ in 0..20_000 {
            match p.step(&s, 30.0, 2.5e-5) {
                Ok(n) => s = n,
                Err(e) => {
                    assert!(matches!(e, Error::StepOutOfRange { .. }), "{e}");
                    failed = true;
                    break;
                }
            }
        }
        assert!(failed);
    }

    #[test]
    fn tau_min_is_positive() {
        let p = plant();
        let tau = p.tau_min();
        assert!(tau > 1e-4 && tau < 1e-2, "{tau}");
    }

    #[test]
    fn inductance_scales_with_turns_squared() {
        let p = plant();
        let mut q = p.clone();
        q.params.n *= 2.0;
        // Only the N^2 prefactor changes for fixed geometry and mu.
        let mu = 5.0 * MU0;
        let ratio = q.inductance_at(mu) / p.inductance_at(mu);
        assert_abs_diff_eq!(ratio, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let p = plant();
        let s = p.demagnetized().unwrap();
        let mut sensor = Sensor::new(&SensorModel::noiseless()).unwrap();
        assert_eq!(measure_b_g(&s, &mut sensor), s.b_g);
    }

    #[test]
    fn seeded_sensor_repeats() {
        let m = SensorModel {
            noise_sigma: 1e-4,
            seed: 7,
        };
        let mut a = Sensor::new(&m).unwrap();
        let mut b = Sensor::new(&m).unwrap();
        let xs: Vec<f64> = (0..100).map(|_| a.read(0.1)).collect();
        let ys: Vec<f64> = (0..100).map(|_| b.read(0.1)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sensor_variance() {
        let sigma = 2e-4;
        let mut s = Sensor::new(&SensorModel {
            noise_sigma: sigma,
            seed: 11,
        })
        .unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.read(0.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(Sensor::new(&SensorModel {
            noise_sigma: -1.0,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn trajectory_decimates() {
        let p = plant();
        let s = p.demagnetized().unwrap();
        let mut tr = Trajectory::new(3);
        for _ in 0..10 {
            tr.record(&s);
        }
        assert_eq!(tr.len(), 4);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,U_c_V,I_c_A,H_m_A_per_m,B_m_T,B_g_T\n"));
    }
}
