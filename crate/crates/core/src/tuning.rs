//! Predict, saturate, demagnetize: one tuning cycle and repeated-cycle
//! campaigns.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::CircuitParams;
use crate::controller::{
    reference_transform, run_demagnetization, saturation_pulse, ControllerState, DemagReport,
    LoopConfig, PIGains, Phase, PulseConfig,
};
use crate::error::{Error, Result};
use crate::hysteresis::{MajorLoop, RecoilFit};
use crate::plant::{Plant, PlantState, Sensor, SensorModel, Trajectory};
use crate::prediction::{predict_within, FitRange, PredictionResult};

/// What the tuning method believes about the actuator.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub params: CircuitParams,
    pub major: MajorLoop,
    pub fit: RecoilFit,
    pub range: FitRange,
}

impl Predictor {
    pub fn predict(&self, b_g_set: f64) -> Result<PredictionResult> {
        predict_within(b_g_set, &self.params, &self.major, &self.fit, &self.range)
    }
}

/// Everything one tuning cycle needs at a fixed air gap.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: Plant,
    pub predictor: Predictor,
    pub gains: PIGains,
    pub loop_cfg: LoopConfig,
    pub pulse: PulseConfig,
    pub sensor: SensorModel,
    /// Remanence margin below which saturation is skipped, T.
    pub eps_b: f64,
    pub decimation: usize,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub b_g_set: f64,
    pub l_g: f64,
    pub final_b_g: f64,
    pub error: f64,
    pub saturated: bool,
    pub duration: f64,
    pub prediction: PredictionResult,
    pub demag: DemagReport,
    pub final_state: PlantState,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningSummary {
    #[serde(rename = "B_g_set_T")]
    pub b_g_set: f64,
    #[serde(rename = "l_g_m")]
    pub l_g: f64,
    #[serde(rename = "final_B_g_T")]
    pub final_b_g: f64,
    #[serde(rename = "error_T")]
    pub error: f64,
    pub saturated: bool,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "predicted_B_r_prime_T")]
    pub b_r_prime: f64,
    #[serde(rename = "reference_B_g_T")]
    pub reference: f64,
    #[serde(rename = "min_excess_T")]
    pub min_excess: f64,
}

impl TuningResult {
    pub fn summary(&self) -> TuningSummary {
        TuningSummary {
            b_g_set: self.b_g_set,
            l_g: self.l_g,
            final_b_g: self.final_b_g,
            error: self.error,
            saturated: self.saturated,
            duration: self.duration,
            b_r_prime: self.prediction.b_r_prime,
            reference: self.demag.reference,
            min_excess: self.demag.min_excess,
        }
    }
}

/// Runs one tuning cycle from `state`.
pub fn tune(
    b_g_set: f64,
    state: PlantState,
    sc: &Scenario,
    sensor: &mut Sensor,
) -> Result<TuningResult> {
    let prediction = sc.predictor.predict(b_g_set)?;
    let current = sc.plant.magnet.current_remanence(&state.magnet)?;
    let saturated = prediction.b_r_prime > current + sc.eps_b;

    let mut traj = Trajectory::new(sc.decimation);
    traj.record_always(&state);
    let mut cs = ControllerState::default();
    let mut s = state;
    if saturated {
        cs.enter(Phase::Saturating)?;
        s = saturation_pulse(&sc.plant, s, &sc.pulse, &sc.loop_cfg, &mut traj)?;
    }
    let reference = reference_transform(prediction.corner_b, &sc.predictor.params);
    let (s, demag) = run_demagnetization(
        &sc.plant,
        s,
        reference,
        &sc.gains,
        sensor,
        &sc.loop_cfg,
        &mut cs,
        &mut traj,
    )?;
    traj.record_always(&s);

    Ok(TuningResult {
        b_g_set,
        l_g: sc.predictor.params.l_g,
        final_b_g: s.b_g,
        error: s.b_g - b_g_set,
        saturated,
        duration: s.t - state.t,
        prediction,
        demag,
        final_state: s,
        trajectory: traj,
    })
}

/// Mean, MAE and 3-sigma precision of one campaign cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub mean: f64,
    pub mae: f64,
    pub precision_3sigma: f64,
    pub n: usize,
}

/// Statistics of repeated final gap fluxes against one set-point. The
/// precision uses the sample standard deviation and is 0 for one sample.
pub fn cell_stats(b_g_set: f64, finals: &[f64]) -> Option<CellStats> {
    if finals.is_empty() {
        return None;
    }
    let n = finals.len();
    let nf = n as f64;
    // Shifted by the first sample so identical results give exactly zero
    // spread.
    let origin = finals[0];
    let shift_mean = finals.iter().map(|b| b - origin).sum::<f64>() / nf;
    let mean = origin + shift_mean;
    let mae = finals.iter().map(|b| (b - b_g_set).abs()).sum::<f64>() / nf;
    let precision_3sigma = if n > 1 {
        let ss = finals
            .iter()
            .map(|b| (b - origin - shift_mean).powi(2))
            .sum::<f64>();
        3.0 * (ss / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(CellStats {
        mean,
        mae,
        precision_3sigma,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleOutcome {
    pub final_b_g: f64,
    pub error: f64,
    pub saturated: bool,
    pub duration: f64,
    pub min_excess: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub b_g_set: f64,
    pub l_g: f64,
    pub cycles: Vec<std::result::Result<CycleOutcome, String>>,
    pub stats: Option<CellStats>,
}

impl CellResult {
    pub fn failures(&self) -> impl Iterator<Item = &String> {
        self.cycles.iter().filter_map(|c| c.as_ref().err())
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &CycleOutcome> {
        self.cycles.iter().filter_map(|c| c.as_ref().ok())
    }
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub set_points: Vec<f64>,
    pub gaps: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel {
        workers: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel { workers: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Runs `n` independent cycles per (set-point, gap) cell, each on a fresh
/// magnetized plant with its own random stream.
///
/// `scenario_for` builds the scenario for a gap. Rows come back ordered by
/// descending set-point, then ascending gap. Results do not depend on the
/// execution strategy.
pub fn run_campaign<F>(
    spec: &CampaignSpec,
    scenario_for: F,
    exec: Execution,
) -> Result<Vec<CellResult>>
where
    F: Fn(f64) -> Result<Scenario>,
{
    if spec.n == 0 {
        return Err(Error::InvalidParams("campaign needs n >= 1".into()));
    }
    let mut set_points = spec.set_points.clone();
    set_points.sort_by(|a, b| b.total_cmp(a));
    let mut gaps = spec.gaps.clone();
    gaps.sort_by(f64::total_cmp);

    let scenarios: Vec<std::result::Result<Scenario, String>> = gaps
        .iter()
        .map(|&g| scenario_for(g).map_err(|e| format!("{}: {e}", e.kind())))
        .collect();

    let cells: Vec<(f64, usize)> = set_points
        .iter()
        .flat_map(|&b| (0..gaps.len()).map(move |gi| (b, gi)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|ci| (0..spec.n).map(move |rep| (ci, rep)))
        .collect();

    let run_job = |&(ci, rep): &(usize, usize)| -> std::result::Result<CycleOutcome, String> {
        let (b_set, gi) = cells[ci];
        let sc = scenarios[gi].as_ref().map_err(Clone::clone)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream((ci * spec.n + rep) as u64);
        run_cycle(b_set, sc, rng).map_err(|e| format!("{}: {e}", e.kind()))
    };

    let outcomes: Vec<_> = match exec {
        Execution::Sequential => jobs.iter().map(run_job).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => {
            use rayon::prelude::*;
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(w) = workers {
                builder = builder.num_threads(w.max(1));
            }
            let pool = builder
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(run_job).collect())
        }
    };

    let mut rows = Vec::with_capacity(cells.len());
    for (ci, chunk) in outcomes.chunks(spec.n).enumerate() {
        let (b_set, gi) = cells[ci];
        let finals: Vec<f64> = chunk
            .iter()
            .filter_map(|c| c.as_ref().ok())
            .map(|o| o.final_b_g)
            .collect();
        rows.push(CellResult {
            b_g_set: b_set,
            l_g: gaps[gi],
            cycles: chunk.to_vec(),
            stats: cell_stats(b_set, &finals),
        });
    }
    Ok(rows)
}

fn run_cycle(b_set: f64, sc: &Scenario, rng: ChaCha8Rng) -> Result<CycleOutcome> {
    let mut sensor = Sensor::with_rng(&sc.sensor, rng)?;
    let fresh = sc.plant.magnetized()?;
    let r = tune(b_set, fresh, sc, &mut sensor)?;
    Ok(CycleOutcome {
        final_b_g: r.final_b_g,
        error: r.error,
        saturated: r.saturated,
        duration: r.duration,
        min_excess: r.demag.min_excess,
    })
}

pub const CAMPAIGN_HEADER: [&str; 7] = [
    "B_g_set_T",
    "l_g_m",
    "mean_T",
    "MAE_T",
    "precision_3sigma_T",
    "n",
    "errors",
];

/// Writes one row per cell. Cells without a successful cycle leave the
/// statistics empty; failed cycles are summarised in the `errors` column.
pub fn write_campaign_csv<W: Write>(rows: &[CellResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CAMPAIGN_HEADER)?;
    for row in rows {
        let failures: Vec<&String> = row.failures().collect();
        let errors = match failures.first() {
            None => String::new(),
            Some(first) => format!("{} failed; first: {first}", failures.len()),
        };
        let (mean, mae, p3, n) = match &row.stats {
            Some(s) => (
                s.mean.to_string(),
                s.mae.to_string(),
                s.precision_3sigma.to_string(),
                s.n,
            ),
            None => (String::new(), String::new(), String::new(), 0),
        };
        w.write_record([
            row.b_g_set.to_string(),
            row.l_g.to_string(),
            mean,
            mae,
            p3,
            n.to_string(),
            errors,
        ])?;
    }
    w.flush()?;
    Ok(())
}
