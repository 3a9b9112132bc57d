//! Case configuration: a TOML file describing one loop design and the
//! scenarios run on it.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use reset_shaping::hosidf::{BaseLinearLoop, CglpStage, LoopModel, PlantResponse, DEFAULT_ORDERS};
use reset_shaping::lti::{make_nrc, make_tracking_controller, log_grid, NrcParams, TrackingParams};
use reset_shaping::plant::{build_modal_plant, load_frf_csv, ModalPlant};
use reset_shaping::reset::base_linear;
use reset_shaping::sim::{NoiseSpec, Scenario, SeriesOrder, SignalSpec, SweepSelector, DEFAULT_TS};
use reset_shaping::tuning::{make_shaping_filter, tune_cglp, CglpDesign, ShapingParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub plant: PlantSpec,
    pub nrc: NrcSpec,
    pub tracking: TrackingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cglp: Option<CglpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shaping: Option<ShapingParams>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub scenario: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantSpec {
    Modal(ModalPlant),
    /// Measured response; relative paths resolve against the config file.
    /// Usable for analysis only.
    Frf { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrcSpec {
    pub gamma: f64,
    pub corner_multiplier: f64,
    /// Defaults to the lowest modal frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_mode_hz: Option<f64>,
    /// Defaults to |G(0)| of the modal plant or the lowest FRF sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant_dc_gain: Option<f64>,
}

/// Either explicit corners or a phase-lead target to tune for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CglpSpec {
    #[serde(default)]
    pub gamma_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_l_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_f_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_lead_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_hz: Option<f64>,
}

impl CglpSpec {
    pub fn resolve(&self) -> Result<CglpDesign, CliError> {
        let corners = (self.omega_l_hz, self.omega_f_hz);
        let target = (self.phase_lead_deg, self.target_hz);
        match (corners, target) {
            ((Some(l), Some(f)), (None, None)) => Ok(CglpDesign::from_corners(l, f, self.gamma_r)?),
            ((None, None), (Some(phi), Some(t))) => Ok(tune_cglp(phi, t, self.gamma_r)?),
            _ => Err(CliError::Config(
                "cglp: give either omega_l_hz + omega_f_hz or phase_lead_deg + target_hz".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points_per_decade: usize,
    pub orders: Vec<u32>,
    pub base_linear_loop: BaseLinearLoop,
    /// Fold the simulator's one-sample computation delay into the plant used
    /// for frequency-domain analysis.
    pub computation_delay: bool,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            f_min_hz: 1.0,
            f_max_hz: 10_000.0,
            points_per_decade: 200,
            orders: DEFAULT_ORDERS.to_vec(),
            base_linear_loop: BaseLinearLoop::Full,
            computation_delay: true,
        }
    }
}

impl AnalysisSpec {
    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.f_min_hz, self.f_max_hz, self.points_per_decade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub ts: f64,
    pub duration_s: f64,
    pub reference: SignalSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<SignalSpec>,
    pub noise: NoiseSpec,
    pub settle_periods: usize,
    pub min_settle_s: f64,
    pub seed: u64,
    pub series_order: SeriesOrder,
    pub sweep: SweepSpec,
    pub rms: RmsSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            ts: DEFAULT_TS,
            duration_s: 0.2,
            reference: SignalSpec::sine(80.0, 1.0),
            disturbance: None,
            noise: NoiseSpec::None,
            settle_periods: 10,
            min_settle_s: 0.1,
            seed: 0,
            series_order: SeriesOrder::LeadLagFirst,
            sweep: SweepSpec::default(),
            rms: RmsSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points_per_decade: usize,
    pub selector: SweepSelector,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { f_min_hz: 10.0, f_max_hz: 1000.0, points_per_decade: 10, selector: SweepSelector::Ser }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmsSpec {
    pub freqs_hz: Vec<f64>,
    pub amplitude: f64,
    pub delay_samples: usize,
    pub settle_periods: usize,
    pub analysis_periods: usize,
}

impl Default for RmsSpec {
    fn default() -> Self {
        Self {
            freqs_hz: vec![1.0, 5.0, 10.0, 20.0, 50.0, 100.0, 150.0, 200.0, 300.0],
            amplitude: 1.0,
            delay_samples: 0,
            settle_periods: 3,
            analysis_periods: 2,
        }
    }
}

impl CaseConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            let at = match inner.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].lines().count().max(1);
                    format!(" (line {line})")
                }
                None => String::new(),
            };
            CliError::Config(if path == "." { format!("{msg}{at}") } else { format!("{path}: {msg}{at}") })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Resolves every block into analysis and simulation models.
    /// `base_dir` anchors relative FRF paths.
    pub fn build(&self, base_dir: &Path) -> Result<BuiltCase, CliError> {
        let ctx = |e: reset_shaping::Error| CliError::Module { case: self.name.clone(), source: e };
        let ts = self.scenario.ts;
        let (plant, sim_plant, dc, first_mode) = match &self.plant {
            PlantSpec::Modal(m) => {
                let built = build_modal_plant(m).map_err(ctx)?;
                let first = m.modes.iter().map(|x| x.freq_hz).fold(f64::INFINITY, f64::min);
                let analysis = if self.analysis.computation_delay {
                    let d = built.tf.delay_s() + ts;
                    built.tf.clone().set_delay(d).map_err(ctx)?
                } else {
                    built.tf.clone()
                };
                (PlantResponse::Rational(analysis), Some(built.tf), m.dc_gain.abs(), first)
            }
            PlantSpec::Frf { path } => {
                let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                if !p.exists() {
                    return Err(CliError::Config(format!("plant.path: {} does not exist", p.display())));
                }
                let mut pts = load_frf_csv(&p).map_err(ctx)?;
                if self.analysis.computation_delay {
                    for q in &mut pts {
                        q.response *= Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * q.freq_hz * ts);
                    }
                }
                let dc = pts[0].response.norm();
                (PlantResponse::Measured(pts), None, dc, f64::NAN)
            }
        };
        let first_mode = self.nrc.first_mode_hz.unwrap_or(first_mode);
        if !first_mode.is_finite() {
            return Err(CliError::Config("nrc.first_mode_hz is required for an FRF plant".into()));
        }
        let (nrc, damping) = make_nrc(
            self.nrc.gamma,
            self.nrc.corner_multiplier,
            self.nrc.plant_dc_gain.unwrap_or(dc),
            first_mode,
        )
        .map_err(ctx)?;
        let tracking = make_tracking_controller(&self.tracking).map_err(ctx)?;
        let design = self.cglp.as_ref().map(|c| c.resolve()).transpose()?;
        let stage = match &design {
            Some(d) => d.stage().map_err(ctx)?,
            None => CglpStage::identity(),
        };
        let shaping = match &self.shaping {
            Some(p) => Some(make_shaping_filter(p, &base_linear(&stage.reset)).map_err(ctx)?),
            None => None,
        };
        let model = LoopModel {
            plant,
            damping,
            tracking,
            cglp: stage,
            shaping,
            base_linear_loop: self.analysis.base_linear_loop,
        };
        model.validate().map_err(ctx)?;
        let sim_model = sim_plant.map(|g| LoopModel { plant: PlantResponse::Rational(g), ..model.clone() });
        Ok(BuiltCase { name: self.name.clone(), model, sim_model, nrc, design })
    }

    /// Simulation scenario for the given reference.
    pub fn scenario(&self, built: &BuiltCase, reference: SignalSpec) -> Result<Scenario, CliError> {
        let model = built.sim_model.clone().ok_or_else(|| {
            CliError::Config("simulation needs a modal plant (plant.kind = \"modal\")".into())
        })?;
        let s = &self.scenario;
        Ok(Scenario {
            model,
            ts: s.ts,
            duration_s: s.duration_s,
            reference,
            disturbance: s.disturbance,
            noise: s.noise,
            settle_periods: s.settle_periods,
            min_settle_s: s.min_settle_s,
            seed: s.seed,
            series_order: s.series_order,
        })
    }
}

/// A configuration resolved into concrete transfer functions.
#[derive(Debug, Clone)]
pub struct BuiltCase {
    pub name: String,
    /// Analysis model (includes the computation delay when configured).
    pub model: LoopModel,
    /// Simulation model; `None` for measured plants.
    pub sim_model: Option<LoopModel>,
    pub nrc: NrcParams,
    pub design: Option<CglpDesign>,
}

/// Directory of the shipped case presets.
pub fn presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("cases")
}

/// Loads `case<n>.toml` from the shipped presets.
pub fn load_preset(n: usize) -> Result<CaseConfig, CliError> {
    CaseConfig::load(&presets_dir().join(format!("case{n}.toml")))
}
