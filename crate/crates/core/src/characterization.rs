//! Recovering the BH characteristic and the recoil fit from logged coil
//! current and gap flux.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{magnet_fields_from_measurement, CircuitParams};
use crate::error::{Error, Result};
use crate::hysteresis::{MajorLoop, RecoilFit, MU0};
use crate::plant::{measure_b_g, Plant, PlantState, Sensor};

pub const LOG_HEADER: [&str; 3] = ["t_s", "I_c_A", "B_g_T"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSample {
    pub t: f64,
    pub i_c: f64,
    pub b_g: f64,
}

/// Time-ordered `(t, I_c, B_g)` record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementLog {
    pub samples: Vec<LogSample>,
}

impl MeasurementLog {
    pub fn new(samples: Vec<LogSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.i_c.is_finite() && s.b_g.is_finite()) {
                return Err(Error::InvalidLog(format!(
                    "non-finite value in row {}",
                    i + 1
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidLog(format!(
                    "time must be strictly increasing: row {} has t = {} after {}",
                    i + 1,
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(MeasurementLog { samples })
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(LOG_HEADER) {
            return Err(Error::InvalidLog(format!(
                "expected header \"{}\", found \"{}\"",
                LOG_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidLog(format!("row {}: bad field {}", i + 1, k + 1)))
            };
            samples.push(LogSample {
                t: field(0)?,
                i_c: field(1)?,
                b_g: field(2)?,
            });
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::InvalidLog(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOG_HEADER)?;
        for s in &self.samples {
            w.write_record([s.t.to_string(), s.i_c.to_string(), s.b_g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Magnet `(H_m, B_m)` for every log sample, in order.
pub fn estimate_bh_trajectory(log: &MeasurementLog, p: &CircuitParams) -> Vec<(f64, f64)> {
    log.samples
        .iter()
        .map(|s| magnet_fields_from_measurement(s.b_g, s.i_c, p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationHints {
    /// H must move back by more than this before a reversal counts, A/m.
    pub reversal_band: f64,
    /// Excursions narrower than this in H are skipped, A/m.
    pub min_span: f64,
    /// Turning points with `|B|` above this fraction of the largest `|B|`
    /// are treated as saturated.
    pub saturation_fraction: f64,
}

impl Default for SegmentationHints {
    fn default() -> Self {
        SegmentationHints {
            reversal_band: 100.0,
            min_span: 500.0,
            saturation_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Turn {
    Max,
    Min,
}

/// Indices of the H turning points, alternating, including both ends.
fn turning_points(h: &[f64], band: f64) -> Vec<(usize, Turn)> {
    let mut out = Vec::new();
    if h.is_empty() {
        return out;
    }
    let (mut hi, mut lo) = (0usize, 0usize);
    let mut dir: Option<Turn> = None;
    for i in 1..h.len() {
        match dir {
            None => {
                if h[i] > h[hi] {
                    hi = i;
                }
                if h[i] < h[lo] {
                    lo = i;
                }
                if h[hi] - h[lo] > band {
                    // Whichever extreme came first is a turning point.
                    if lo < hi {
                        out.push((lo, Turn::Min));
                        dir = Some(Turn::Max);
                    } else {
                        out.push((hi, Turn::Max));
                        dir = Some(Turn::Min);
                    }
                }
            }
            Some(Turn::Max) => {
                if h[i] > h[hi] {
                    hi = i;
                } else if h[hi] - h[i] > band {
                    out.push((hi, Turn::Max));
                    lo = i;
                    dir = Some(Turn::Min);
                }
            }
            Some(Turn::Min) => {
                if h[i] < h[lo] {
                    lo = i;
                } else if h[i] - h[lo] > band {
                    out.push((lo, Turn::Min));
                    hi = i;
                    dir = Some(Turn::Max);
                }
            }
        }
    }
    match dir {
        Some(Turn::Max) => out.push((hi, Turn::Max)),
        Some(Turn::Min) => out.push((lo, Turn::Min)),
        None => {}
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoilPoint {
    #[serde(rename = "B_r_prime_T")]
    pub b_r_prime: f64,
    pub mu_rec: f64,
}

/// Chord through the two corners of every unsaturated recoil excursion,
/// ordered by remanence.
pub fn extract_recoil_lines(traj: &[(f64, f64)], hints: &SegmentationHints) -> Vec<RecoilPoint> {
    let h: Vec<f64> = traj.iter().map(|p| p.0).collect();
    let b_peak = traj.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let saturated = |b: f64| b.abs() >= hints.saturation_fraction * b_peak;

    let turns = turning_points(&h, hints.reversal_band);
    let mut out = Vec::new();
    for w in turns.windows(2) {
        let ((i, ti), (j, tj)) = (w[0], w[1]);
        if ti != Turn::Min || tj != Turn::Max {
            continue;
        }
        let (h0, b0) = traj[i];
        let (h1, b1) = traj[j];
        if saturated(b0) || saturated(b1) {
            continue;
        }
        if h1 - h0 < hints.min_span {
            log::warn!(
                "skipping recoil excursion at t-index {i}: H span {} A/m is below {} A/m",
                h1 - h0,
                hints.min_span
            );
            continue;
        }
        let slope = (b1 - b0) / (h1 - h0);
        out.push(RecoilPoint {
            b_r_prime: b0 - slope * h0,
            mu_rec: slope / MU0,
        });
    }
    out.sort_by(|a, b| a.b_r_prime.total_cmp(&b.b_r_prime));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Standard errors; absent with only two points.
    pub slope_std_err: Option<f64>,
    pub intercept_std_err: Option<f64>,
    pub n: usize,
    pub points: Vec<RecoilPoint>,
}

impl FitReport {
    pub fn fit(&self) -> RecoilFit {
        RecoilFit {
            slope: self.slope,
            intercept: self.intercept,
        }
    }

    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["B_r_prime_T", "mu_rec"])?;
        for p in &self.points {
            w.write_record([p.b_r_prime.to_string(), p.mu_rec.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ordinary least squares `mu_rec = slope * B_r' + intercept`.
pub fn fit_recoil_permeability(points: &[RecoilPoint]) -> Result<FitReport> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "recoil fit needs at least 2 excursions, found {n}"
        )));
    }
    let nf = n as f64;
    let x_mean = points.iter().map(|p| p.b_r_prime).sum::<f64>() / nf;
    let y_mean = points.iter().map(|p| p.mu_rec).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.b_r_prime - x_mean).powi(2)).sum();
    if sxx <= f64::EPSILON * x_mean.abs().max(1.0) {
        return Err(Error::InsufficientData(
            "all excursions share the same B_r'".into(),
        ));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.b_r_prime - x_mean) * (p.mu_rec - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.mu_rec - slope * p.b_r_prime - intercept).powi(2))
        .sum();
    let (slope_std_err, intercept_std_err) = if n > 2 {
        let s2 = ssr / (nf - 2.0);
        (
            Some((s2 / sxx).sqrt()),
            Some((s2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(FitReport {
        slope,
        intercept,
        residual_rms: (ssr / nf).sqrt(),
        slope_std_err,
        intercept_std_err,
        n,
        points: points.to_vec(),
    })
}

/// Descending branch traced from the first positive saturation to the
/// following negative saturation.
pub fn extract_major_branch(traj: &[(f64, f64)], hints: &SegmentationHints) -> Result<MajorLoop> {
    let h: Vec<f64> = traj.iter().map(|p| p.0).collect();
    let turns = turning_points(&h, hints.reversal_band);
    let b_peak = traj.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let sat = |i: usize| traj[i].1.abs() >= hints.saturation_fraction * b_peak;

    let pass = turns.windows(2).find(|w| {
        let ((i, ti), (j, tj)) = (w[0], w[1]);
        ti == Turn::Max && tj == Turn::Min && sat(i) && sat(j) && traj[i].1 > 0.0 && traj[j].1 < 0.0
    });
    let Some(w) = pass else {
        return Err(Error::InsufficientData(
            "no descending pass between saturation polarities".into(),
        ));
    };
    let (start, end) = (w[0].0, w[1].0);

    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(end - start + 1);
    for &(hh, bb) in &traj[start..=end] {
        match samples.last() {
            Some(&(hl, bl)) if hh < hl => samples.push((hh, bb.min(bl))),
            Some(_) => {}
            None => samples.push((hh, bb)),
        }
    }
    MajorLoop::new(samples)
}

/// Current-driven low-frequency sweep through the major loop plus recoil
/// excursions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "peak_current_A")]
    pub peak_current: f64,
    #[serde(rename = "ramp_rate_A_per_s")]
    pub ramp_rate: f64,
    /// Lowest current of each recoil excursion, visited in order.
    #[serde(rename = "recoil_currents_A")]
    pub recoil_currents: Vec<f64>,
    /// Current each excursion returns to before the next one.
    #[serde(rename = "return_current_A")]
    pub return_current: f64,
    /// Current-loop gain of the drive, V/A.
    #[serde(rename = "tracking_gain_V_per_A")]
    pub tracking_gain: f64,
    /// Plant step, also the log sample period.
    #[serde(rename = "dt_s")]
    pub dt: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            peak_current: 5.8,
            ramp_rate: 40.0,
            recoil_currents: vec![-1.0, -1.3, -1.6, -1.9, -2.2],
            return_current: 0.0,
            tracking_gain: 20.0,
            dt: 2.5e-5,
        }
    }
}

impl SweepConfig {
    pub fn waypoints(&self) -> Vec<f64> {
        let mut w = vec![
            0.0,
            self.peak_current,
            -self.peak_current,
            self.peak_current,
        ];
        for &i in &self.recoil_currents {
            w.push(i);
            w.push(self.return_current);
        }
        w.push(0.0);
        w.dedup();
        w
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_current > 0.0 && self.ramp_rate > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidParams(
                "sweep needs positive peak current, ramp rate and dt".into(),
            ));
        }
        if !(self.tracking_gain >= 0.0) {
            return Err(Error::InvalidParams(
                "sweep tracking gain must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`simulate_sweep`]: the measurement log and the true magnet
/// path for comparison.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub log: MeasurementLog,
    pub truth: Vec<(f64, f64)>,
    pub final_state: PlantState,
}

pub fn simulate_sweep(
    plant: &Plant,
    start: PlantState,
    cfg: &SweepConfig,
    sensor: &mut Sensor,
) -> Result<Sweep> {
    cfg.validate()?;
    let waypoints = cfg.waypoints();
    let r = plant.params.r;
    let mut s = start;
    let mut samples = vec![LogSample {
        t: s.t,
        i_c: s.i_c,
        b_g: measure_b_g(&s, sensor),
    }];
    let mut truth = vec![(s.magnet.h, s.magnet.b)];
    let (mut b_min, mut b_max) = (s.magnet.b, s.magnet.b);

    for w in waypoints.windows(2) {
        let (from, to) = (w[0], w[1]);
        let steps = ((to - from).abs() / cfg.ramp_rate / cfg.dt).ceil().max(1.0) as usize;
        for k in 1..=steps {
            let i_ref = from + (to - from) * k as f64 / steps as f64;
            let u = r * i_ref + cfg.tracking_gain * (i_ref - s.i_c);
            s = plant.step(&s, u, cfg.dt)?;
            samples.push(LogSample {
                t: s.t,
                i_c: s.i_c,
                b_g: measure_b_g(&s, sensor),
            });
            truth.push((s.magnet.h, s.magnet.b));
            b_min = b_min.min(s.magnet.b);
            b_max = b_max.max(s.magnet.b);
        }
    }

    let needed = crate::hysteresis::SATURATION_FRACTION * plant.magnet.major.b_sat();
    if b_max < needed || b_min > -needed {
        return Err(Error::SweepUnsaturated {
            b_min,
            b_max,
            needed,
        });
    }
    Ok(Sweep {
        log: MeasurementLog::new(samples)?,
        truth,
        final_state: s,
    })
}
