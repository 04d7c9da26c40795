//! Configuration, sweeps and figure-data emission.
//!
//! Every command takes a resolved [`ExperimentConfig`] and returns a typed
//! result; [`Emit::artifact`] renders it as CSV tables plus a JSON summary that
//! embeds the configuration, its hash and [`SCHEMA_VERSION`].

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    computational_channel, population_and_phase, propagate_lindblad, propagate_state, Closure, ComputationalChannel,
    DensityMatrix, DrivenHamiltonian,
    IntegratorConfig, StateVector,
};
use crate::effective::{
    bright_state, build_h_eff, eigens_h_i0, effective_embedding, paper_blocks, z1_closed_form_eigenvalues, BlockId,
};
use crate::gates::{
    average_fidelity, fidelity, gate_matrix, holonomy_check, mu_state, rotation, BasisOrder, Family, FidelityForm,
    GateBackend, MuPoint, DYNAMICAL_TOL, PROJECTOR_TOL,
};
use crate::model::{
    bright_normalization, build_basis, build_jump_operators, BasisMode, HamiltonianTerms, Level, SystemParams,
    COMPUTATIONAL_PAIRS,
};
use crate::sta::{
    adiabatic_pulses, designed_pulses, fitted_pulses, verify_dressed_frame, AngleSchedule, BetaForm,
    FrameCheckConfig, PaperSchedule, PulseFamily, PulseSchedule,
};
use crate::{Error, Result, C64};

pub const SCHEMA_VERSION: u32 = 1;

/// Inclusive uniform axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub const fn new(start: f64, stop: f64, count: usize) -> Self {
        Self { start, stop, count }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.count < 2 {
            return Err(Error::Config(format!("axis {name}: count {} must be at least 2", self.count)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config(format!("axis {name}: non-finite bounds")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.count.max(2) - 1;
        (0..=n)
            .map(|k| {
                if k == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / n as f64
                }
            })
            .collect()
    }
}

/// Relative imperfections: `delta_t = dT/T`, `delta_omega = dOmega/Omega`
/// (both pulse peaks), `delta_lambda = dlambda/lambda`, `delta_upsilon =
/// dupsilon/upsilon`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variations {
    pub delta_t: f64,
    pub delta_omega: f64,
    pub delta_lambda: f64,
    pub delta_upsilon: f64,
}

impl Variations {
    pub const LIMIT: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_t", self.delta_t),
            ("delta_omega", self.delta_omega),
            ("delta_lambda", self.delta_lambda),
            ("delta_upsilon", self.delta_upsilon),
        ] {
            if !(v.is_finite() && v.abs() <= Self::LIMIT) {
                return Err(Error::Config(format!("variation {name} = {v} outside [-0.5, 0.5]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdiabaticUnits {
    /// `amplitude` is the peak of the physical drives `Omega_1`, `Omega_3`.
    #[default]
    Physical,
    /// `amplitude` is the peak of the effective couplings `N3 Omega`.
    Effective,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdiabaticSettings {
    /// Peak amplitude in units of `1/T`.
    pub amplitude: f64,
    pub units: AdiabaticUnits,
    /// Protocol durations in units of `T`.
    pub tau: Axis,
    /// Samples of the shortcut curve on `[0, T]`.
    pub sta_samples: usize,
}

impl Default for AdiabaticSettings {
    fn default() -> Self {
        Self {
            amplitude: 30.0,
            units: AdiabaticUnits::Physical,
            tau: Axis::new(0.5, 6.0, 12),
            sta_samples: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourSettings {
    pub amplitude: Axis,
    pub lambda_t: Axis,
}

impl Default for ContourSettings {
    fn default() -> Self {
        Self {
            amplitude: Axis::new(0.3, 1.2, 19),
            lambda_t: Axis::new(30.0, 200.0, 18),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuScanSettings {
    /// Points per axis on `[0, 2 pi)`.
    pub grid_n: usize,
    /// Value of the held angle in each slice.
    pub fixed: f64,
}

impl Default for MuScanSettings {
    fn default() -> Self {
        Self { grid_n: 21, fixed: PI / 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemParams,
    /// Amplitude `A` of `beta(t)`.
    pub amplitude: f64,
    pub pulses: PulseFamily,
    pub beta_form: BetaForm,
    /// RK4 steps per gate time for state propagation.
    pub state_steps: usize,
    /// RK4 steps per gate time for density matrices.
    pub density_steps: usize,
    /// Points per axis of the `mu` quadrature.
    pub grid_n: usize,
    pub fidelity_form: FidelityForm,
    pub variations: Variations,
    pub contour: ContourSettings,
    pub mu_scan: MuScanSettings,
    /// Variation fractions for both robustness grids.
    pub robustness: Axis,
    /// Rates in units of `lambda` for the three dissipation sweeps.
    pub decoherence: Axis,
    /// Samples per trace.
    pub trace_samples: usize,
    pub adiabatic: AdiabaticSettings,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: SystemParams::default(),
            amplitude: 0.55,
            pulses: PulseFamily::Fitted,
            beta_form: BetaForm::Repaired,
            state_steps: IntegratorConfig::STATE_STEPS,
            density_steps: IntegratorConfig::DENSITY_STEPS,
            grid_n: crate::gates::DEFAULT_GRID_N,
            fidelity_form: FidelityForm::Standard,
            variations: Variations::default(),
            contour: ContourSettings::default(),
            mu_scan: MuScanSettings::default(),
            robustness: Axis::new(-0.1, 0.1, 5),
            decoherence: Axis::new(0.0, 0.01, 5),
            trace_samples: 200,
            adiabatic: AdiabaticSettings::default(),
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.system.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!("amplitude {} must be positive", self.amplitude)));
        }
        if self.state_steps < 2 || self.density_steps < 2 {
            return Err(Error::Config("step counts must be at least 2".into()));
        }
        if self.grid_n < 4 || self.mu_scan.grid_n < 2 {
            return Err(Error::Config("grid_n must be at least 4 and mu_scan.grid_n at least 2".into()));
        }
        if self.trace_samples < 2 || self.adiabatic.sta_samples < 2 {
            return Err(Error::Config("sample counts must be at least 2".into()));
        }
        if !(self.adiabatic.amplitude.is_finite() && self.adiabatic.amplitude > 0.0) {
            return Err(Error::Config("adiabatic amplitude must be positive".into()));
        }
        self.variations.validate()?;
        self.contour.amplitude.validate("contour.amplitude")?;
        self.contour.lambda_t.validate("contour.lambda_t")?;
        self.robustness.validate("robustness")?;
        self.decoherence.validate("decoherence")?;
        self.adiabatic.tau.validate("adiabatic.tau")?;
        for v in self.robustness.values() {
            if v.abs() > Variations::LIMIT {
                return Err(Error::Config(format!("robustness fraction {v} outside [-0.5, 0.5]")));
            }
        }
        if self.decoherence.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Config("decoherence rates must be non-negative".into()));
        }
        if self.adiabatic.tau.values().iter().any(|&v| v <= 0.0) {
            return Err(Error::Config("adiabatic durations must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    /// SHA-256 of the configuration with `output` cleared.
    pub fn hash(&self) -> String {
        let keyed = ExperimentConfig {
            output: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&keyed).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn gate_time(&self) -> f64 {
        self.system.gate_time
    }

    /// RK4 configuration for states over `duration`, scaled from the per-`T` step count.
    pub fn state_integrator(&self, duration: f64) -> IntegratorConfig {
        IntegratorConfig::states(duration).with_steps(self.scaled_steps(self.state_steps, duration))
    }

    pub fn density_integrator(&self, duration: f64) -> IntegratorConfig {
        IntegratorConfig::density(duration).with_steps(self.scaled_steps(self.density_steps, duration))
    }

    fn scaled_steps(&self, per_t: usize, duration: f64) -> usize {
        ((per_t as f64 * duration / self.gate_time()).ceil() as usize).max(2)
    }

    /// The shortcut schedule for amplitude `a` over the nominal gate time.
    pub fn schedule(&self, a: f64) -> Result<PaperSchedule> {
        PaperSchedule::new(a, self.gate_time(), self.beta_form)
    }

    /// Pulses of `family` for the nominal parameters.
    pub fn pulses_for(&self, family: PulseFamily) -> Result<PulseSchedule> {
        self.pulses_with(family, &self.system, self.amplitude)
    }

    fn pulses_with(&self, family: PulseFamily, p: &SystemParams, a: f64) -> Result<PulseSchedule> {
        let t = p.gate_time;
        match family {
            PulseFamily::Designed => {
                let s: Arc<dyn AngleSchedule> = Arc::new(PaperSchedule::new(a, t, self.beta_form)?);
                designed_pulses(s, p.n3())
            }
            PulseFamily::Fitted => fitted_pulses(t),
            PulseFamily::Adiabatic => self.adiabatic_pulses(p, t),
        }
    }

    /// Adiabatic pulses of total duration `tau` (amplitudes in units of the nominal `1/T`).
    pub fn adiabatic_pulses(&self, p: &SystemParams, tau: f64) -> Result<PulseSchedule> {
        let amp = self.adiabatic.amplitude / self.gate_time();
        let amp = match self.adiabatic.units {
            AdiabaticUnits::Physical => amp,
            AdiabaticUnits::Effective => amp / p.n3(),
        };
        adiabatic_pulses(tau, amp)
    }

    /// System parameters and pulses under the imperfections `v`. Pulses are
    /// generated for the nominal couplings; `delta_t` stretches the waveform to
    /// `T (1 + delta_t)` at unchanged peak amplitude.
    pub fn perturbed(&self, v: &Variations) -> Result<(SystemParams, PulseSchedule)> {
        v.validate()?;
        let nominal = self.pulses_for(self.pulses)?;
        let stretched_t = self.gate_time() * (1.0 + v.delta_t);
        let stretched = SystemParams {
            gate_time: stretched_t,
            ..self.system
        };
        let pulses = if v.delta_t == 0.0 {
            nominal
        } else {
            match self.pulses {
                PulseFamily::Designed => {
                    let s: Arc<dyn AngleSchedule> = Arc::new(PaperSchedule::new(self.amplitude, stretched_t, self.beta_form)?);
                    designed_pulses(s, self.system.n3())?
                }
                other => self.pulses_with(other, &stretched, self.amplitude)?,
            }
        };
        let scale = (1.0 + v.delta_t) * (1.0 + v.delta_omega);
        let p = SystemParams {
            lambda: self.system.lambda * (1.0 + v.delta_lambda),
            upsilon: self.system.upsilon * (1.0 + v.delta_upsilon),
            gate_time: stretched_t,
            ..self.system
        };
        Ok((p, pulses.with_amplitude_scale(scale)))
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config("workers must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub coords: Vec<f64>,
    pub value: f64,
}

/// Metric on the tensor grid of `axes`, in row-major axis order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub name: String,
    pub axes: Vec<SweepAxis>,
    pub metric: String,
    pub points: Vec<SweepPoint>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn value_at(&self, coords: &[f64]) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.coords.iter().zip(coords).all(|(a, b)| (a - b).abs() < 1e-12))
            .map(|p| p.value)
    }

    pub fn min(&self) -> f64 {
        self.points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in &self.axes {
            let _ = write!(s, "{},", a.name);
        }
        let _ = writeln!(s, "{}", self.metric);
        for p in &self.points {
            for c in &p.coords {
                let _ = write!(s, "{c},");
            }
            let _ = writeln!(s, "{}", p.value);
        }
        s
    }
}

fn sweep_2d<F>(name: &str, metric: &str, x: (&str, Vec<f64>), y: (&str, Vec<f64>), cfg: &ExperimentConfig, f: F) -> Result<SweepResult>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let cells: Vec<(f64, f64)> = x.1.iter().flat_map(|&a| y.1.iter().map(move |&b| (a, b))).collect();
    let values: Vec<f64> = cells.par_iter().map(|&(a, b)| f(a, b)).collect::<Result<_>>()?;
    Ok(SweepResult {
        name: name.into(),
        axes: vec![
            SweepAxis { name: x.0.into(), values: x.1.clone() },
            SweepAxis { name: y.0.into(), values: y.1.clone() },
        ],
        metric: metric.into(),
        points: cells
            .into_iter()
            .zip(values)
            .map(|((a, b), value)| SweepPoint { coords: vec![a, b], value })
            .collect(),
        provenance: Provenance::of(cfg),
    })
}

/// Rendered output of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub command: String,
    /// `(file stem, CSV body)`.
    pub tables: Vec<(String, String)>,
    pub summary: serde_json::Value,
}

impl Artifact {
    fn new(command: &str, cfg: &ExperimentConfig, tables: Vec<(String, String)>, summary: serde_json::Value) -> Self {
        let header = format!(
            "# holo-gate {} schema_version={SCHEMA_VERSION} config_hash={}\n",
            command,
            cfg.hash()
        );
        let tables = tables.into_iter().map(|(n, body)| (n, format!("{header}{body}"))).collect();
        let summary = serde_json::json!({
            "command": command,
            "provenance": Provenance::of(cfg),
            "config": cfg,
            "summary": summary,
        });
        Self {
            command: command.into(),
            tables,
            summary,
        }
    }

    /// Writes `<stem>.csv` for each table and `<command>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (stem, body) in &self.tables {
            let p = dir.join(format!("{stem}.csv"));
            std::fs::write(&p, body)?;
            out.push(p);
        }
        let p = dir.join(format!("{}.json", self.command));
        let mut json = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Config(e.to_string()))?;
        json.push('\n');
        std::fs::write(&p, json)?;
        out.push(p);
        Ok(out)
    }
}

pub trait Emit {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact>;
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
}

pub const PULSE_GRID: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PulseSummary {
    pub designed_peak: f64,
    pub fitted_peak: f64,
    pub fitted_omega3_peak: f64,
    pub fitted_omega3_peak_t: f64,
    /// `max_t |designed - fitted| / designed_peak` over both pulses.
    pub relative_sup_difference: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseTable {
    pub t: Vec<f64>,
    pub omega1_designed: Vec<f64>,
    pub omega3_designed: Vec<f64>,
    pub omega1_fitted: Vec<f64>,
    pub omega3_fitted: Vec<f64>,
    pub summary: PulseSummary,
}

/// Designed and fitted waveforms on a [`PULSE_GRID`]-point grid over `[0, T]`.
pub fn cmd_pulses(cfg: &ExperimentConfig) -> Result<PulseTable> {
    cfg.validate()?;
    let designed = cfg.pulses_for(PulseFamily::Designed)?;
    let fitted = cfg.pulses_for(PulseFamily::Fitted)?;
    let tt = cfg.gate_time();
    let t: Vec<f64> = (0..PULSE_GRID).map(|k| tt * k as f64 / (PULSE_GRID - 1) as f64).collect();
    let d: Vec<(f64, f64)> = t.iter().map(|&x| designed.omegas(x)).collect();
    let f: Vec<(f64, f64)> = t.iter().map(|&x| fitted.omegas(x)).collect();
    let peak = |v: &[(f64, f64)]| v.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
    let designed_peak = peak(&d);
    let (k3, o3) = f
        .iter()
        .enumerate()
        .map(|(k, x)| (k, x.1))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let sup = d
        .iter()
        .zip(&f)
        .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
        .fold(0.0, f64::max);
    Ok(PulseTable {
        summary: PulseSummary {
            designed_peak,
            fitted_peak: peak(&f),
            fitted_omega3_peak: o3,
            fitted_omega3_peak_t: t[k3],
            relative_sup_difference: sup / designed_peak,
        },
        omega1_designed: d.iter().map(|x| x.0).collect(),
        omega3_designed: d.iter().map(|x| x.1).collect(),
        omega1_fitted: f.iter().map(|x| x.0).collect(),
        omega3_fitted: f.iter().map(|x| x.1).collect(),
        t,
    })
}

impl Emit for PulseTable {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let mut s = String::from("t,omega1_designed,omega3_designed,omega1_fitted,omega3_fitted\n");
        for k in 0..self.t.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.t[k], self.omega1_designed[k], self.omega3_designed[k], self.omega1_fitted[k], self.omega3_fitted[k]
            );
        }
        Ok(Artifact::new("pulses", cfg, vec![("pulses".into(), s)], to_json(&self.summary)?))
    }
}

/// Average infidelity of the full-model unitary for `psi0` inputs.
pub fn full_model_infidelity(cfg: &ExperimentConfig, p: &SystemParams, pulses: &PulseSchedule, family: Family) -> Result<f64> {
    let backend = GateBackend::full_unitary(p, pulses, &cfg.state_integrator(p.gate_time))?;
    Ok(average_fidelity(cfg.grid_n, &backend, family, cfg.fidelity_form)?.infidelity())
}

/// `1 - F_e` over amplitude `A` and `lambda T` with designed pulses and the
/// full model. `upsilon` keeps its ratio to `lambda`.
pub fn cmd_contour(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let tt = cfg.gate_time();
    let ratio = cfg.system.upsilon / cfg.system.lambda;
    sweep_2d(
        "contour",
        "infidelity",
        ("amplitude", cfg.contour.amplitude.values()),
        ("lambda_t", cfg.contour.lambda_t.values()),
        cfg,
        |a, lt| {
            let p = SystemParams {
                lambda: lt / tt,
                upsilon: ratio * lt / tt,
                ..cfg.system
            };
            let pulses = cfg.pulses_with(PulseFamily::Designed, &p, a)?;
            full_model_infidelity(cfg, &p, &pulses, Family::Psi0)
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuSlicePoint {
    pub slice: String,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub infidelity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuScan {
    pub points: Vec<MuSlicePoint>,
}

impl MuScan {
    pub fn slice(&self, name: &str) -> impl Iterator<Item = &MuSlicePoint> {
        let name = name.to_string();
        self.points.iter().filter(move |p| p.slice == name)
    }

    pub fn max(&self) -> f64 {
        self.points.iter().map(|p| p.infidelity).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.points.iter().map(|p| p.infidelity).fold(f64::INFINITY, f64::min)
    }
}

/// The two slices (`mu3` held, then `mu1` held) for an arbitrary backend.
pub fn mu_scan_with(cfg: &ExperimentConfig, backend: &GateBackend) -> MuScan {
    let n = cfg.mu_scan.grid_n;
    let fixed = cfg.mu_scan.fixed;
    let grid: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
    let mut pts = Vec::with_capacity(2 * n * n);
    for (name, hold_first) in [("mu3_fixed", false), ("mu1_fixed", true)] {
        for &a in &grid {
            for &b in &grid {
                let mu = if hold_first {
                    MuPoint::new(fixed, a, b)
                } else {
                    MuPoint::new(a, b, fixed)
                };
                pts.push((name, mu));
            }
        }
    }
    let points = pts
        .par_iter()
        .map(|(name, mu)| MuSlicePoint {
            slice: (*name).into(),
            mu1: mu.mu1,
            mu2: mu.mu2,
            mu3: mu.mu3,
            infidelity: 1.0 - fidelity(*mu, backend, Family::Psi0, cfg.fidelity_form),
        })
        .collect();
    MuScan { points }
}

pub fn cmd_mu_scan(cfg: &ExperimentConfig) -> Result<MuScan> {
    cfg.validate()?;
    let pulses = cfg.pulses_for(cfg.pulses)?;
    let backend = GateBackend::full_unitary(&cfg.system, &pulses, &cfg.state_integrator(cfg.gate_time()))?;
    Ok(mu_scan_with(cfg, &backend))
}

impl Emit for MuScan {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let mut s = String::from("slice,mu1,mu2,mu3,infidelity\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{},{}", p.slice, p.mu1, p.mu2, p.mu3, p.infidelity);
        }
        let summary = serde_json::json!({ "max_infidelity": self.max(), "min_infidelity": self.min() });
        Ok(Artifact::new("mu-scan", cfg, vec![("mu_scan".into(), s)], summary))
    }
}

/// `1 - F_to` (Toffoli family, full-model unitary) under the imperfections
/// `v` applied on top of the configured ones.
pub fn robustness_point(cfg: &ExperimentConfig, v: &Variations) -> Result<f64> {
    let (p, pulses) = cfg.perturbed(v)?;
    full_model_infidelity(cfg, &p, &pulses, Family::Phi0)
}

/// Two grids: (`delta_upsilon`, `delta_lambda`) and (`delta_omega`, `delta_t`).
pub fn cmd_robustness(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let axis = cfg.robustness.values();
    let base = cfg.variations;
    let couplings = sweep_2d(
        "robustness_couplings",
        "infidelity",
        ("delta_upsilon", axis.clone()),
        ("delta_lambda", axis.clone()),
        cfg,
        |a, b| {
            robustness_point(
                cfg,
                &Variations {
                    delta_upsilon: base.delta_upsilon + a,
                    delta_lambda: base.delta_lambda + b,
                    ..base
                },
            )
        },
    )?;
    let controls = sweep_2d(
        "robustness_controls",
        "infidelity",
        ("delta_omega", axis.clone()),
        ("delta_t", axis),
        cfg,
        |a, b| {
            robustness_point(
                cfg,
                &Variations {
                    delta_omega: base.delta_omega + a,
                    delta_t: base.delta_t + b,
                    ..base
                },
            )
        },
    )?;
    Ok(vec![couplings, controls])
}

impl Emit for Vec<SweepResult> {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let command = match self.first().map(|s| s.name.as_str()) {
            Some(n) if n.starts_with("robustness") => "robustness",
            Some(n) if n.starts_with("decoherence") => "decoherence",
            _ => "sweep",
        };
        let tables = self.iter().map(|s| (s.name.clone(), s.to_csv())).collect();
        let summary: Vec<serde_json::Value> = self
            .iter()
            .map(|s| serde_json::json!({ "name": s.name, "min": s.min(), "max": s.max() }))
            .collect();
        Ok(Artifact::new(command, cfg, tables, serde_json::Value::Array(summary)))
    }
}

impl Emit for SweepResult {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let summary = serde_json::json!({ "name": self.name, "min": self.min(), "max": self.max() });
        Ok(Artifact::new(&self.name, cfg, vec![(self.name.clone(), self.to_csv())], summary))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissipationChannel {
    Gamma,
    KappaC,
    KappaF,
}

impl DissipationChannel {
    pub const ALL: [DissipationChannel; 3] = [Self::Gamma, Self::KappaC, Self::KappaF];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::KappaC => "kappa_c",
            Self::KappaF => "kappa_f",
        }
    }

    /// `p` with only this rate set, to `rate_over_lambda * lambda`.
    pub fn apply(self, p: &SystemParams, rate_over_lambda: f64) -> SystemParams {
        let r = rate_over_lambda * p.lambda;
        let mut q = SystemParams {
            gamma: 0.0,
            kappa_c: 0.0,
            kappa_f: 0.0,
            ..*p
        };
        match self {
            Self::Gamma => q.gamma = r,
            Self::KappaC => q.kappa_c = r,
            Self::KappaF => q.kappa_f = r,
        }
        q
    }
}

/// `F_to` (Toffoli family) through the master-equation channel.
pub fn lindblad_fidelity(cfg: &ExperimentConfig, p: &SystemParams, pulses: &PulseSchedule) -> Result<f64> {
    let backend = GateBackend::lindblad(p, pulses, &cfg.density_integrator(p.gate_time))?;
    Ok(average_fidelity(cfg.grid_n, &backend, Family::Phi0, cfg.fidelity_form)?.average)
}

/// Three one-dimensional sweeps of `gamma`, `kappa_c`, `kappa_f` (others zero).
pub fn cmd_decoherence(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let pulses = cfg.pulses_for(cfg.pulses)?;
    let xs = cfg.decoherence.values();
    let mut jobs: Vec<(usize, Option<DissipationChannel>)> = Vec::new();
    let has_zero = xs.iter().any(|&x| x == 0.0);
    if has_zero {
        jobs.push((usize::MAX, None));
    }
    for (c, ch) in DissipationChannel::ALL.into_iter().enumerate() {
        for (k, &x) in xs.iter().enumerate() {
            if x != 0.0 {
                jobs.push((c * xs.len() + k, Some(ch)));
            }
        }
    }
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(idx, ch)| {
            let p = match ch {
                None => DissipationChannel::Gamma.apply(&cfg.system, 0.0),
                Some(ch) => ch.apply(&cfg.system, xs[idx % xs.len()]),
            };
            lindblad_fidelity(cfg, &p, &pulses)
        })
        .collect::<Result<_>>()?;
    let zero = if has_zero { Some(values[0]) } else { None };
    let lookup: std::collections::HashMap<usize, f64> = jobs
        .iter()
        .zip(&values)
        .filter(|(j, _)| j.1.is_some())
        .map(|(j, v)| (j.0, *v))
        .collect();
    Ok(DissipationChannel::ALL
        .into_iter()
        .enumerate()
        .map(|(c, ch)| SweepResult {
            name: format!("decoherence_{}", ch.name()),
            axes: vec![SweepAxis {
                name: format!("{}_over_lambda", ch.name()),
                values: xs.clone(),
            }],
            metric: "fidelity".into(),
            points: xs
                .iter()
                .enumerate()
                .map(|(k, &x)| SweepPoint {
                    coords: vec![x],
                    value: if x == 0.0 { zero.unwrap_or(f64::NAN) } else { lookup[&(c * xs.len() + k)] },
                })
                .collect(),
            provenance: Provenance::of(cfg),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub population: Vec<f64>,
    pub phase: Vec<f64>,
    pub norm: Vec<f64>,
}

impl TraceSeries {
    pub fn final_population(&self) -> f64 {
        *self.population.last().unwrap_or(&f64::NAN)
    }

    pub fn final_phase(&self) -> f64 {
        *self.phase.last().unwrap_or(&f64::NAN)
    }

    /// `max_t |1 - population(t)|`.
    pub fn max_population_deviation(&self) -> f64 {
        self.population.iter().map(|p| (1.0 - p).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Traces {
    pub series: Vec<TraceSeries>,
}

pub fn z_plus_label(x: Level, y: Level) -> String {
    format!("{},{},+", x.tag(), y.tag())
}

/// Population and phase of each `Z+` computational state under the full model.
pub fn cmd_traces(cfg: &ExperimentConfig) -> Result<Traces> {
    cfg.validate()?;
    let p = &cfg.system;
    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, p)?;
    let pulses = cfg.pulses_for(cfg.pulses)?;
    let h = DrivenHamiltonian::full_model(&terms, p.vartheta, &pulses);
    let icfg = cfg.state_integrator(p.gate_time);
    let stride = (icfg.steps / cfg.trace_samples).max(1);
    let icfg = icfg.with_stride(stride);
    let series = COMPUTATIONAL_PAIRS
        .par_iter()
        .map(|&(x, y)| {
            let v = basis.dressed_third_atom(x, y, true, p.vartheta)?;
            let tr = propagate_state(&h, &StateVector(v.clone()), &icfg)?;
            let pp = population_and_phase(&tr, &v)?;
            Ok(TraceSeries {
                label: z_plus_label(x, y),
                norm: tr.states.iter().map(|s| s.norm()).collect(),
                times: pp.times,
                population: pp.population,
                phase: pp.phase,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Traces { series })
}

impl Traces {
    pub fn get(&self, label: &str) -> Option<&TraceSeries> {
        self.series.iter().find(|s| s.label == label)
    }
}

impl Emit for Traces {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let mut s = String::from("t,label,population,phase\n");
        for ser in &self.series {
            for k in 0..ser.times.len() {
                let _ = writeln!(s, "{},\"{}\",{},{}", ser.times[k], ser.label, ser.population[k], ser.phase[k]);
            }
        }
        let summary: Vec<serde_json::Value> = self
            .series
            .iter()
            .map(|t| {
                serde_json::json!({
                    "label": t.label,
                    "final_population": t.final_population(),
                    "final_phase": t.final_phase(),
                    "max_population_deviation": t.max_population_deviation(),
                    "max_norm_drift": t.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max),
                })
            })
            .collect();
        Ok(Artifact::new("traces", cfg, vec![("traces".into(), s)], serde_json::Value::Array(summary)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdiabaticCompare {
    /// `(t / T, F_e(t))` along the shortcut protocol.
    pub sta: Vec<(f64, f64)>,
    /// `(tau / T, F_e)` of the adiabatic protocol of total duration `tau`.
    pub adiabatic: Vec<(f64, f64)>,
}

impl AdiabaticCompare {
    pub fn adiabatic_at(&self, tau_over_t: f64) -> Option<f64> {
        self.adiabatic.iter().find(|(x, _)| (x - tau_over_t).abs() < 1e-9).map(|x| x.1)
    }

    pub fn sta_final(&self) -> f64 {
        self.sta.last().map(|x| x.1).unwrap_or(f64::NAN)
    }
}

/// Effective-model `F_e` along the shortcut protocol and of the adiabatic
/// protocol versus its duration.
pub fn cmd_adiabatic_compare(cfg: &ExperimentConfig) -> Result<AdiabaticCompare> {
    cfg.validate()?;
    let p = &cfg.system;
    let tt = p.gate_time;
    let pulses = cfg.pulses_for(cfg.pulses)?;
    let h = DrivenHamiltonian::effective(&pulses, p.n3());
    let icfg = cfg.state_integrator(tt);
    let stride = (icfg.steps / cfg.adiabatic.sta_samples).max(1);
    let tr = propagate_state(&h, &StateVector::basis(3, 0), &icfg.with_stride(stride))?;
    let sta = tr
        .times
        .par_iter()
        .zip(tr.states.par_iter())
        .map(|(&t, s)| {
            let b = GateBackend::from_effective_amplitude(p.vartheta, s.0[0]);
            Ok((t / tt, average_fidelity(cfg.grid_n, &b, Family::Psi0, cfg.fidelity_form)?.average))
        })
        .collect::<Result<_>>()?;
    let adiabatic = cfg
        .adiabatic
        .tau
        .values()
        .par_iter()
        .map(|&x| {
            let tau = x * tt;
            let q = SystemParams { gate_time: tau, ..*p };
            let ad = cfg.adiabatic_pulses(p, tau)?;
            let b = GateBackend::effective(&q, &ad, &cfg.state_integrator(tau))?;
            Ok((x, average_fidelity(cfg.grid_n, &b, Family::Psi0, cfg.fidelity_form)?.average))
        })
        .collect::<Result<_>>()?;
    Ok(AdiabaticCompare { sta, adiabatic })
}

impl Emit for AdiabaticCompare {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let mut s = String::from("protocol,t_over_T,fidelity\n");
        for (x, f) in &self.sta {
            let _ = writeln!(s, "sta,{x},{f}");
        }
        for (x, f) in &self.adiabatic {
            let _ = writeln!(s, "adiabatic,{x},{f}");
        }
        let summary = serde_json::json!({ "sta_final": self.sta_final(), "adiabatic": self.adiabatic });
        Ok(Artifact::new("adiabatic-compare", cfg, vec![("adiabatic_compare".into(), s)], summary))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("< {tol:e}"),
            passed: value < tol,
        }
    }

    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl Emit for ValidationReport {
    fn artifact(&self, cfg: &ExperimentConfig) -> Result<Artifact> {
        let mut s = String::from("check,value,threshold,passed\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{},\"{}\",{}", c.name, c.value, c.threshold, c.passed);
        }
        let summary = serde_json::json!({ "passed": self.passed(), "checks": self.checks });
        Ok(Artifact::new("validate", cfg, vec![("validate".into(), s)], summary))
    }
}

/// RK4 error ratio `e(h) / e(h/2)` against an `h/8` reference, for the
/// effective model driven by `pulses` from `steps` coarse steps.
pub fn rk4_order_ratio(p: &SystemParams, pulses: &PulseSchedule, steps: usize) -> Result<f64> {
    let h = DrivenHamiltonian::effective(pulses, p.n3());
    let run = |n: usize| -> Result<Vec<C64>> {
        let c = IntegratorConfig::states(pulses.duration()).with_steps(n);
        Ok(propagate_state(&h, &StateVector::basis(3, 0), &c)?.last().0.clone())
    };
    let reference = run(8 * steps)?;
    let err = |x: &[C64]| x.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(err(&run(steps)?) / err(&run(2 * steps)?))
}

/// `max ||psi(T) - psi(0)||` over the four `Z-` states under the full model.
pub fn z_minus_drift(p: &SystemParams, pulses: &PulseSchedule, cfg: &IntegratorConfig) -> Result<f64> {
    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, p)?;
    let h = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
    COMPUTATIONAL_PAIRS
        .par_iter()
        .map(|&(x, y)| {
            let v = basis.dressed_third_atom(x, y, false, p.vartheta)?;
            let tr = propagate_state(&h, &StateVector(v.clone()), cfg)?;
            Ok(tr.last().0.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Largest entry difference between two channels' matrix-unit images.
pub fn channel_distance(a: &ComputationalChannel, b: &ComputationalChannel) -> f64 {
    let k = a.dim();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            worst = (a.image(i, j) - b.image(i, j)).iter().fold(worst, |w, z| w.max(z.norm()));
        }
    }
    worst
}

/// Closed-system master-equation channel against conjugation by the full-model
/// unitary.
pub fn zero_rate_channel_defect(cfg: &ExperimentConfig, pulses: &PulseSchedule) -> Result<f64> {
    let p = DissipationChannel::Gamma.apply(&cfg.system, 0.0);
    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, &p)?;
    let h = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
    let comp = basis.computational_indices()?;
    let jumps = build_jump_operators(&basis, &p)?;
    let ch = computational_channel(&h, &jumps, &comp, &cfg.density_integrator(p.gate_time))?;
    let GateBackend::Unitary { u, .. } = GateBackend::full_unitary(&p, pulses, &cfg.state_integrator(p.gate_time))? else {
        unreachable!("full_unitary returns a unitary backend")
    };
    Ok(channel_distance(&ch, &ComputationalChannel::from_unitary(&u)))
}

/// Trace drift of the master equation (every rate at `rate_over_lambda`)
/// from `|g_l,g_r,+>` over the reachable closure, with its smallest eigenvalue.
pub fn lindblad_trace_drift(cfg: &ExperimentConfig, pulses: &PulseSchedule, rate_over_lambda: f64) -> Result<(f64, f64)> {
    let r = rate_over_lambda * cfg.system.lambda;
    let p = SystemParams {
        gamma: r,
        kappa_c: r,
        kappa_f: r,
        ..cfg.system
    };
    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, &p)?;
    let h = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
    let jumps = build_jump_operators(&basis, &p)?;
    let comp = basis.computational_indices()?;
    let c = Closure::new(&h, &jumps, &comp);
    let psi = c.restrict(&basis.dressed_third_atom(Level::Gl, Level::Gr, true, p.vartheta)?);
    let out = propagate_lindblad(&c.hamiltonian, &c.jumps, &DensityMatrix::pure(&psi), &cfg.density_integrator(p.gate_time))?;
    Ok((out.trace_drift, out.min_eigenvalue))
}

/// Static model, eigenstructure, shortcut and dynamical invariants.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let p = cfg.system;
    let mut checks = Vec::new();

    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, &p)?;
    checks.push(Check::below(
        "hamiltonian_hermiticity",
        terms.at(1.3, -0.7, 0.4).hermiticity_defect(),
        1e-12,
    ));
    checks.push(Check::within(
        "basis_dimension",
        basis.dim() as f64,
        216.0,
        216.0,
    ));
    checks.push(Check::within(
        "jump_channel_count",
        build_jump_operators(&basis, &p)?.len() as f64,
        15.0,
        15.0,
    ));
    checks.push(Check::below(
        "n3_equal_couplings",
        (bright_normalization(1.0, 1.0) - 1.0 / 5f64.sqrt()).abs(),
        1e-15,
    ));

    let z1 = &paper_blocks()?[0];
    debug_assert_eq!(z1.id, BlockId::ZPlus1);
    let mut bright_residual = 0.0f64;
    let mut eig_residual = 0.0f64;
    for &l in &[30.0, 75.0, 150.0, 220.0, 300.0] {
        for &u in &[30.0, 75.0, 150.0, 220.0, 300.0] {
            let h = crate::effective::block_hamiltonian(z1, l, u)?;
            bright_residual = bright_residual.max((&h * bright_state(l, u)).norm() / l.max(u));
            let num = eigens_h_i0(z1, l, u)?.eigenvalues;
            let cf = z1_closed_form_eigenvalues(l, u);
            let scale = l.max(u);
            for (a, b) in num.iter().zip(cf.iter()) {
                eig_residual = eig_residual.max((a - b).abs() / scale);
            }
        }
    }
    checks.push(Check::below("bright_state_residual", bright_residual, 1e-12));
    checks.push(Check::below("closed_form_eigenvalues", eig_residual, 1e-10));

    let emb = effective_embedding(&basis, &p)?;
    let (o1, o3) = (0.8, 1.7);
    let heff = build_h_eff(&p, o1, o3);
    let hfull = terms.at(o1, o3 * p.vartheta.sin(), o3 * p.vartheta.cos());
    let mut coupling_residual = 0.0f64;
    for a in 0..3 {
        let ha = hfull.apply(&emb[a]);
        for (b, e) in emb.iter().enumerate() {
            let v: C64 = e.iter().zip(&ha).map(|(x, y)| x.conj() * y).sum();
            coupling_residual = coupling_residual.max((v - heff.matrix[(b, a)]).norm());
        }
    }
    checks.push(Check::below("effective_couplings", coupling_residual, 1e-12));

    let r = rotation(p.vartheta);
    let z0 = gate_matrix(p.vartheta, BasisOrder::Z0).matrix;
    let zpm = gate_matrix(p.vartheta, BasisOrder::Zpm).matrix;
    checks.push(Check::below("gate_algebra", (r.transpose() * zpm * r - z0).amax(), 1e-12));
    let mut norm_defect = 0.0f64;
    for &fam in &[Family::Psi0, Family::PsiT, Family::Phi0, Family::PhiT] {
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let mu = MuPoint::new(TAU * i as f64 / 5.0, TAU * j as f64 / 5.0, TAU * k as f64 / 5.0);
                    norm_defect = norm_defect.max((mu_state(mu, fam).norm() - 1.0).abs());
                }
            }
        }
    }
    checks.push(Check::below("mu_family_norm", norm_defect, 1e-12));

    let sched: Arc<dyn AngleSchedule> = Arc::new(cfg.schedule(cfg.amplitude)?);
    let frame = verify_dressed_frame(sched.as_ref(), &FrameCheckConfig::default())?;
    checks.push(Check::below("dressed_frame_offdiag", frame.max_offdiag, 1e-10));
    checks.push(Check::below("dressed_frame_tdse", frame.max_tdse_residual, 1e-8));
    let hol = holonomy_check(sched.clone(), &p, &cfg.state_integrator(p.gate_time), 200)?;
    checks.push(Check::below("holonomy_projector", hol.projector_residual, PROJECTOR_TOL));
    checks.push(Check::below("holonomy_dynamical", hol.max_dynamical, DYNAMICAL_TOL));

    let designed = designed_pulses(sched, p.n3())?;
    let eff = GateBackend::effective(&p, &designed, &cfg.state_integrator(p.gate_time))?;
    let fe = average_fidelity(cfg.grid_n, &eff, Family::Psi0, FidelityForm::Standard)?;
    checks.push(Check::below("effective_shortcut_infidelity", fe.infidelity().abs(), 1e-6));

    let fitted = fitted_pulses(p.gate_time)?;
    checks.push(Check::within("rk4_order_ratio", rk4_order_ratio(&p, &fitted, 200)?, 8.0, 32.0));
    checks.push(Check::below(
        "z_minus_inertness",
        z_minus_drift(&p, &fitted, &cfg.state_integrator(p.gate_time))?,
        1e-10,
    ));
    checks.push(Check::below(
        "zero_rate_lindblad_vs_unitary",
        zero_rate_channel_defect(cfg, &fitted)?,
        1e-6,
    ));
    let (drift, min_eig) = lindblad_trace_drift(cfg, &fitted, 0.005)?;
    checks.push(Check::below("lindblad_trace_preservation", drift, 1e-7));
    checks.push(Check::below("lindblad_positivity", -min_eig, 1e-9));
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values_inclusive() {
        let a = Axis::new(-0.1, 0.1, 5);
        let v = a.values();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], -0.1);
        assert_eq!(v[4], 0.1);
        assert!(v[2].abs() < 1e-15);
        assert!(Axis::new(0.0, 1.0, 1).validate("x").is_err());
    }

    #[test]
    fn config_round_trip_and_hash() {
        let cfg = ExperimentConfig::default();
        let s = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.amplitude = 0.6;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("amplitude = 0.7\n[system]\nlambda = 120.0\n").unwrap();
        assert_eq!(cfg.amplitude, 0.7);
        assert_eq!(cfg.system.lambda, 120.0);
        assert_eq!(cfg.system.upsilon, 150.0);
        assert_eq!(cfg.grid_n, 12);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[variations]\ndelta_t = 0.6\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[robustness]\nstart = 0.0\nstop = 0.1\ncount = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(ExperimentConfig::from_toml_str("bogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml_str("schema_version = 99\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn perturbation_scales_parameters() {
        let cfg = ExperimentConfig::default();
        let v = Variations {
            delta_t: 0.1,
            delta_omega: -0.1,
            delta_lambda: 0.05,
            delta_upsilon: -0.05,
        };
        let (p, pulses) = cfg.perturbed(&v).unwrap();
        assert!((p.gate_time - 1.1).abs() < 1e-15);
        assert!((p.lambda - 157.5).abs() < 1e-12);
        assert!((p.upsilon - 142.5).abs() < 1e-12);
        assert!((pulses.duration() - 1.1).abs() < 1e-15);
        let nominal = fitted_pulses(1.0).unwrap();
        let stretched = pulses.omega3(0.55);
        assert!((stretched - 0.9 * nominal.omega3(0.5)).abs() < 1e-12);
    }

    #[test]
    fn pulses_table_shape_and_values() {
        let t = cmd_pulses(&ExperimentConfig::default()).unwrap();
        assert_eq!(t.t.len(), PULSE_GRID);
        assert_eq!(t.t[0], 0.0);
        assert_eq!(*t.t.last().unwrap(), 1.0);
        assert!((t.summary.designed_peak - 28.0).abs() < 0.05 * 28.0);
        assert!((t.summary.fitted_omega3_peak - 24.5).abs() < 1e-3);
        assert!((t.summary.fitted_omega3_peak_t - 0.5).abs() < 1e-3);
        assert!(t.summary.relative_sup_difference < 0.15);
    }

    #[test]
    fn strict_beta_errors_at_half_gate() {
        let cfg = ExperimentConfig {
            beta_form: BetaForm::Printed,
            ..Default::default()
        };
        match cmd_pulses(&cfg) {
            Err(Error::SingularSchedule { t, .. }) => assert!((t - 0.5).abs() < 1e-9, "t = {t}"),
            other => panic!("expected singular schedule, got {other:?}"),
        }
    }

    #[test]
    fn artifact_embeds_config_and_is_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = cmd_pulses(&cfg).unwrap().artifact(&cfg).unwrap();
        let b = cmd_pulses(&cfg).unwrap().artifact(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.tables[0].1.starts_with("# holo-gate pulses schema_version=1"));
        assert_eq!(a.summary["provenance"]["config_hash"], cfg.hash());
        assert_eq!(a.summary["config"]["amplitude"], 0.55);
    }

    #[test]
    fn exact_backend_mu_scan_is_zero() {
        let cfg = ExperimentConfig {
            mu_scan: MuScanSettings { grid_n: 6, fixed: PI / 20.0 },
            ..Default::default()
        };
        let scan = mu_scan_with(&cfg, &GateBackend::exact(cfg.system.vartheta));
        assert_eq!(scan.points.len(), 72);
        assert!(scan.max().abs() < 1e-12);
        assert!(scan.slice("mu1_fixed").all(|p| p.mu1 == PI / 20.0));
        assert!(scan.slice("mu3_fixed").all(|p| p.mu3 == PI / 20.0));
    }

    #[test]
    fn dissipation_channel_isolates_rate() {
        let p = SystemParams {
            gamma: 9.0,
            ..Default::default()
        };
        let q = DissipationChannel::KappaF.apply(&p, 0.01);
        assert_eq!(q.gamma, 0.0);
        assert_eq!(q.kappa_c, 0.0);
        assert!((q.kappa_f - 1.5).abs() < 1e-12);
    }

    #[test]
    fn worker_pool_runs_closure() {
        assert_eq!(with_workers(Some(2), || rayon::current_num_threads()).unwrap(), 2);
        assert!(with_workers(Some(0), || ()).is_err());
    }
}
