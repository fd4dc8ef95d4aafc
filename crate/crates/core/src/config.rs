//! JSON run configuration.
//!
//! Dataset paths are resolved relative to the directory of the config file.
//! The word `"bundled"` selects the dataset compiled into the crate.
//! Everything is parsed and validated before any simulation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::characterization::{SegmentationHints, SweepConfig};
use crate::circuit::CircuitParams;
use crate::controller::{LoopConfig, PIGains, PulseConfig};
use crate::error::{Error, Result};
use crate::hysteresis::{MagnetModel, MajorLoop, RecoilFit, RecoilModel, RecoilTable};
use crate::plant::{Plant, SensorModel};
use crate::prediction::FitRange;
use crate::tuning::{Predictor, Scenario};

pub const BUNDLED: &str = "bundled";

const NOMINAL: &str = include_str!("../../../configs/nominal.json");
const MISMATCH: &str = include_str!("../../../configs/mismatch.json");
const RECOIL_MISMATCH: &str = include_str!("../../../configs/recoil_mismatch.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k_p: f64,
    pub k_i: f64,
    #[serde(rename = "U_max")]
    pub u_max: f64,
    pub dt_control: f64,
    #[serde(rename = "settle_band_T")]
    pub settle_band: f64,
    pub settle_hold: usize,
    #[serde(rename = "coast_current_A")]
    pub coast_current: f64,
    #[serde(rename = "demag_timeout_s")]
    pub demag_timeout: f64,
    #[serde(rename = "coast_timeout_s")]
    pub coast_timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    #[serde(rename = "voltage_V")]
    pub voltage: f64,
    #[serde(rename = "dwell_s")]
    pub dwell: f64,
    #[serde(rename = "timeout_s")]
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// Plant integration steps per control period.
    pub substeps: usize,
    pub trajectory_decimation: usize,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection {
            substeps: 4,
            trajectory_decimation: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub slope: f64,
    pub intercept: f64,
    #[serde(rename = "valid_min_T", default)]
    pub valid_min: f64,
    #[serde(rename = "valid_max_T", default = "default_valid_max")]
    pub valid_max: f64,
    #[serde(rename = "margin_T", default = "default_margin")]
    pub margin: f64,
}

fn default_valid_max() -> f64 {
    FitRange::default().max
}

fn default_margin() -> f64 {
    FitRange::default().margin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    #[serde(rename = "noise_sigma_T")]
    pub noise_sigma: f64,
}

/// Deliberate differences between the plant and the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSection {
    /// Plant recoil permeability table; `None` means the plant uses the
    /// predictor's linear fit.
    pub plant_recoil_table: Option<String>,
    /// `k1_plant(l_g) = k1 + slope * (l_g - reference_gap)`.
    #[serde(rename = "k1_gap_slope_per_m")]
    pub k1_gap_slope: f64,
    #[serde(rename = "k1_reference_gap_m")]
    pub k1_reference_gap: f64,
}

impl Default for MismatchSection {
    fn default() -> Self {
        MismatchSection {
            plant_recoil_table: None,
            k1_gap_slope: 0.0,
            k1_reference_gap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    #[serde(rename = "eps_B_T")]
    pub eps_b: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection { eps_b: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizationSection {
    #[serde(rename = "reversal_band_A_per_m")]
    pub reversal_band: f64,
    #[serde(rename = "min_span_A_per_m")]
    pub min_span: f64,
    pub saturation_fraction: f64,
}

impl Default for CharacterizationSection {
    fn default() -> Self {
        let h = SegmentationHints::default();
        CharacterizationSection {
            reversal_band: h.reversal_band,
            min_span: h.min_span,
            saturation_fraction: h.saturation_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bh_dataset: String,
    pub circuit: CircuitParams,
    pub controller: ControllerSection,
    pub pulse: PulseSection,
    #[serde(default)]
    pub plant: PlantSection,
    pub recoil_fit: FitSection,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub mismatch: MismatchSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub characterization: CharacterizationSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_output_dir() -> String {
    "out".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))
    }

    /// Perfect-model configuration shipped with the crate.
    pub fn nominal() -> Self {
        Self::from_json(NOMINAL).expect("embedded nominal config parses")
    }

    /// Recoil-table and gap-dependent k1 mismatch, shipped with the crate.
    pub fn mismatch() -> Self {
        Self::from_json(MISMATCH).expect("embedded mismatch config parses")
    }

    /// Recoil-table mismatch only; k1 matches at every gap.
    pub fn recoil_mismatch() -> Self {
        Self::from_json(RECOIL_MISMATCH).expect("embedded recoil mismatch config parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A parsed, validated configuration with its datasets loaded.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub major: MajorLoop,
    pub plant_recoil: RecoilModel,
    pub base_dir: PathBuf,
}

impl Setup {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(RunConfig::from_json(&text)?, base)
    }

    pub fn from_config(config: RunConfig, base_dir: PathBuf) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let major = if config.bh_dataset == BUNDLED {
            MajorLoop::bundled()
        } else {
            let path = resolve(&config.bh_dataset);
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "BH dataset {} does not exist",
                    path.display()
                )));
            }
            MajorLoop::from_csv_path(&path)?
        };
        let plant_recoil = match config.mismatch.plant_recoil_table.as_deref() {
            None => RecoilModel::Linear(config.fit()),
            Some(BUNDLED) => RecoilModel::Table(RecoilTable::bundled_synthetic()),
            Some(p) => {
                let path = resolve(p);
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "recoil table {} does not exist",
                        path.display()
                    )));
                }
                RecoilModel::Table(RecoilTable::from_csv_path(&path)?)
            }
        };
        let setup = Setup {
            config,
            major,
            plant_recoil,
            base_dir,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn nominal() -> Self {
        Self::from_config(RunConfig::nominal(), PathBuf::new()).expect("nominal config is valid")
    }

    pub fn mismatch() -> Self {
        Self::from_config(RunConfig::mismatch(), PathBuf::new()).expect("mismatch config is valid")
    }

    pub fn recoil_mismatch() -> Self {
        Self::from_config(RunConfig::recoil_mismatch(), PathBuf::new())
            .expect("recoil mismatch config is valid")
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.circuit.validate()?;
        self.gains().validate()?;
        c.fit().validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        let ctl = &c.controller;
        if !(ctl.dt_control > 0.0) {
            return bad(format!("dt_control = {} must be positive", ctl.dt_control));
        }
        if c.plant.substeps == 0 || c.plant.trajectory_decimation == 0 {
            return bad("plant substeps and trajectory_decimation must be >= 1".into());
        }
        if !(ctl.settle_band > 0.0) || ctl.settle_hold == 0 {
            return bad("settle_band_T must be positive and settle_hold >= 1".into());
        }
        if !(ctl.coast_current > 0.0 && ctl.demag_timeout > 0.0 && ctl.coast_timeout > 0.0) {
            return bad("coast current and timeouts must be positive".into());
        }
        // Saturation is driven with positive voltage, demagnetization with
        // negative voltage.
        if !(c.pulse.voltage > 0.0) {
            return bad(format!(
                "pulse voltage_V = {} must be positive (magnetizing polarity)",
                c.pulse.voltage
            ));
        }
        if c.pulse.voltage > ctl.u_max {
            return bad(format!(
                "pulse voltage {} V exceeds the amplifier limit U_max = {} V",
                c.pulse.voltage, ctl.u_max
            ));
        }
        if !(c.pulse.dwell >= 0.0 && c.pulse.timeout > 0.0) {
            return bad("pulse dwell must be >= 0 and timeout > 0".into());
        }
        if !(c.sensor.noise_sigma >= 0.0) {
            return bad("noise_sigma_T must be >= 0".into());
        }
        if !(c.tuning.eps_b >= 0.0) {
            return bad("eps_B_T must be >= 0".into());
        }
        c.sweep.validate()?;
        let plant = self.plant_for_gap(c.circuit.l_g)?;
        let dt_plant = ctl.dt_control / c.plant.substeps as f64;
        let tau_min = plant.tau_min();
        if dt_plant > tau_min / 10.0 {
            return bad(format!(
                "plant step {dt_plant} s exceeds tau_min / 10 = {} s",
                tau_min / 10.0
            ));
        }
        Ok(())
    }

    pub fn gains(&self) -> PIGains {
        let c = &self.config.controller;
        PIGains {
            k_p: c.k_p,
            k_i: c.k_i,
            u_max: c.u_max,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        let c = &self.config.controller;
        LoopConfig {
            dt_control: c.dt_control,
            substeps: self.config.plant.substeps,
            settle_band: c.settle_band,
            settle_hold: c.settle_hold,
            coast_current: c.coast_current,
            demag_timeout: c.demag_timeout,
            coast_timeout: c.coast_timeout,
        }
    }

    pub fn pulse(&self) -> PulseConfig {
        let p = &self.config.pulse;
        PulseConfig {
            voltage: p.voltage,
            dwell: p.dwell,
            timeout: p.timeout,
        }
    }

    pub fn sensor(&self, seed: u64) -> SensorModel {
        SensorModel {
            noise_sigma: self.config.sensor.noise_sigma,
            seed,
        }
    }

    pub fn hints(&self) -> SegmentationHints {
        let c = &self.config.characterization;
        SegmentationHints {
            reversal_band: c.reversal_band,
            min_span: c.min_span,
            saturation_fraction: c.saturation_fraction,
        }
    }

    /// Circuit the plant actually has at gap `l_g`.
    pub fn plant_params(&self, l_g: f64) -> Result<CircuitParams> {
        let c = &self.config;
        let k1 = c.circuit.k1 + c.mismatch.k1_gap_slope * (l_g - c.mismatch.k1_reference_gap);
        let p = CircuitParams {
            k1,
            ..c.circuit.with_gap(l_g)
        };
        p.validate()?;
        Ok(p)
    }

    pub fn plant_for_gap(&self, l_g: f64) -> Result<Plant> {
        Plant::new(
            self.plant_params(l_g)?,
            MagnetModel::new(self.major.clone(), self.plant_recoil.clone()),
            self.config.controller.u_max,
        )
    }

    pub fn predictor_for_gap(&self, l_g: f64) -> Result<Predictor> {
        let params = self.config.circuit.with_gap(l_g);
        params.validate()?;
        Ok(Predictor {
            params,
            major: self.major.clone(),
            fit: self.config.fit(),
            range: self.config.fit_range(),
        })
    }

    pub fn scenario(&self, l_g: f64) -> Result<Scenario> {
        let plant = self.plant_for_gap(l_g)?;
        let loop_cfg = self.loop_config();
        let tau_min = plant.tau_min();
        if loop_cfg.dt_plant() > tau_min / 10.0 {
            return Err(Error::Config(format!(
                "plant step {} s exceeds tau_min / 10 = {} s at l_g = {l_g} m",
                loop_cfg.dt_plant(),
                tau_min / 10.0
            )));
        }
        Ok(Scenario {
            plant,
            predictor: self.predictor_for_gap(l_g)?,
            gains: self.gains(),
            loop_cfg,
            pulse: self.pulse(),
            sensor: self.sensor(self.config.seed),
            eps_b: self.config.tuning.eps_b,
            decimation: self.config.plant.trajectory_decimation,
        })
    }
}

impl RunConfig {
    pub fn fit(&self) -> RecoilFit {
        RecoilFit {
            slope: self.recoil_fit.slope,
            intercept: self.recoil_fit.intercept,
        }
    }

    pub fn fit_range(&self) -> FitRange {
        FitRange {
            min: self.recoil_fit.valid_min,
            max: self.recoil_fit.valid_max,
            margin: self.recoil_fit.margin,
        }
    }
}
