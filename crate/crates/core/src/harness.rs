//! Closed-loop simulation: scenario files, the per-interval loop, run logs,
//! reports and comparisons.
//!
//! Each control interval runs in a fixed order: sample the traces, read the
//! true state, falsify sensors, run the controller, falsify actuators,
//! integrate the plant over the interval with fixed sub-steps, then log.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{
    self, inject, inject_actuator, ActuatorLimits, AttackSignal, AttackTarget, SynthesisResult,
    SynthesisSettings,
};
use crate::error::{Error, Result};
use crate::metrics::{self, heat_pump_terms, EnergyMeter, RunReport, J_PER_KWH};
use crate::model::{ControlInput, Disturbance, Integrator, ThermalState, N_INPUTS, N_STATES};
use crate::mpc::{MpcConfig, MpcController};
use crate::params::BuildingParams;
use crate::pi::{pi_step, PiConfig, PiState};
use crate::traces::{synth_winter, Interpolation, ScenarioTraces, WinterConfig};
use crate::zone::{ZoneId, N_ZONES};

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pi,
    #[default]
    Mpc,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Pi => "pi",
            ControllerKind::Mpc => "mpc",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pi" => Ok(ControllerKind::Pi),
            "mpc" => Ok(ControllerKind::Mpc),
            _ => Err(Error::Config(format!("unknown controller `{s}` (expected pi or mpc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub pi: PiConfig,
    pub mpc: MpcConfig,
}

impl ControllerConfig {
    pub fn interval(&self) -> f64 {
        match self.kind {
            ControllerKind::Pi => self.pi.interval_s,
            ControllerKind::Mpc => self.mpc.interval_s,
        }
    }

    pub fn valve_step(&self) -> f64 {
        match self.kind {
            ControllerKind::Pi if self.pi.valve_step > 0.0 => self.pi.valve_step,
            ControllerKind::Pi => 0.1,
            ControllerKind::Mpc => self.mpc.valve_step,
        }
    }
}

/// Where disturbance and setpoint traces come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracesConfig {
    /// CSV file, relative to the scenario file. Without one, synthetic
    /// winter traces are generated from `synthetic` and the run seed.
    pub file: Option<PathBuf>,
    pub interpolation: Interpolation,
    pub synthetic: WinterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub target: AttackTarget,
    pub lower: f64,
    pub upper: f64,
    /// Window in trace time, s; defaults to the logged span.
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
    /// Length of each piecewise-constant segment of the search, s.
    pub granularity_s: f64,
    pub starts: usize,
    pub max_iter: usize,
    /// Finite-difference step of the search, K.
    pub fd_step: f64,
    /// Fixed constant bias instead of a synthesized one.
    pub bias: Option<f64>,
    /// Precomputed `k,T_A_K` signal file instead of a synthesized one.
    pub signal: Option<PathBuf>,
    pub limits: ActuatorLimits,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            target: AttackTarget::Sensor(ZoneId::South),
            lower: -5.0,
            upper: 5.0,
            start_s: None,
            end_s: None,
            granularity_s: 3600.0,
            starts: 3,
            max_iter: 20,
            fd_step: 0.05,
            bias: None,
            signal: None,
            limits: ActuatorLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Logged length, s.
    pub horizon_s: f64,
    pub substep_s: f64,
    pub seed: u64,
    /// Trace time at which the simulation starts, s.
    pub start_s: f64,
    /// Unlogged settling time before the logged span, s.
    pub warmup_s: f64,
    /// Uniform initial temperature, °C, unless `initial_state` is given.
    pub initial_temp: f64,
    pub initial_state: Option<Vec<f64>>,
    pub baseline_years: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon_s: 86_400.0,
            substep_s: 60.0,
            seed: 0,
            start_s: 0.0,
            warmup_s: 0.0,
            initial_temp: 21.0,
            initial_state: None,
            baseline_years: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub building: BuildingParams,
    #[serde(default)]
    pub traces: TracesConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    r >= 0.0 && (r - r.round()).abs() < 1e-9
}

impl Scenario {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut sc: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        sc.base_dir = base_dir.into();
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.building.validate()?;
        match self.controller.kind {
            ControllerKind::Pi => self.controller.pi.validate()?,
            ControllerKind::Mpc => self.controller.mpc.validate()?,
        }
        let run = &self.run;
        let ts = self.interval();
        if !(run.substep_s > 0.0) {
            return Err(Error::Config("run.substep_s must be positive".into()));
        }
        if !is_multiple(ts, run.substep_s) {
            return Err(Error::Config(format!(
                "control interval {ts} s is not a multiple of the {} s sub-step",
                run.substep_s
            )));
        }
        if !(run.horizon_s > 0.0) || !is_multiple(run.horizon_s, ts) {
            return Err(Error::Config(format!(
                "horizon {} s must be a positive multiple of the {ts} s control interval",
                run.horizon_s
            )));
        }
        if !is_multiple(run.warmup_s, ts) {
            return Err(Error::Config(format!(
                "warmup {} s must be a multiple of the {ts} s control interval",
                run.warmup_s
            )));
        }
        if let Some(x) = &run.initial_state {
            if x.len() != N_STATES {
                return Err(Error::LengthMismatch {
                    left: N_STATES,
                    right: x.len(),
                });
            }
        }
        if !(run.baseline_years > 0.0) {
            return Err(Error::Config("run.baseline_years must be positive".into()));
        }
        if let Some(a) = &self.attack {
            let (s, e) = self.attack_window(a);
            if !(a.lower <= a.upper) {
                return Err(Error::Config("attack bounds are inverted".into()));
            }
            if s < self.log_start() - EPS || e > self.log_end() + EPS || s > e {
                return Err(Error::Config(format!(
                    "attack window [{s}, {e}) must lie within the logged span [{}, {})",
                    self.log_start(),
                    self.log_end()
                )));
            }
            if !is_multiple(s - self.run.start_s, ts) || !is_multiple(e - s, ts) {
                return Err(Error::Config("attack window must align with control intervals".into()));
            }
        }
        Ok(())
    }

    pub fn interval(&self) -> f64 {
        self.controller.interval()
    }

    pub fn log_start(&self) -> f64 {
        self.run.start_s + self.run.warmup_s
    }

    pub fn log_end(&self) -> f64 {
        self.log_start() + self.run.horizon_s
    }

    pub fn attack_window(&self, a: &AttackConfig) -> (f64, f64) {
        (
            a.start_s.unwrap_or(self.log_start()),
            a.end_s.unwrap_or(self.log_end()),
        )
    }

    pub fn with_controller(&self, kind: ControllerKind) -> Self {
        let mut sc = self.clone();
        sc.controller.kind = kind;
        sc
    }

    pub fn without_attack(&self) -> Self {
        let mut sc = self.clone();
        sc.attack = None;
        sc
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_traces(&self) -> Result<ScenarioTraces> {
        let traces = match &self.traces.file {
            Some(f) => ScenarioTraces::load_csv(self.resolve(f), self.traces.interpolation)?,
            None => {
                let mut t = synth_winter(self.run.seed, &self.traces.synthetic)?;
                t.set_mode(self.traces.interpolation);
                t
            }
        };
        if traces.start() > self.run.start_s + EPS || traces.end() < self.log_end() - EPS {
            return Err(Error::OutOfRange {
                t: self.log_end(),
                start: traces.start(),
                end: traces.end(),
            });
        }
        Ok(traces)
    }

    pub fn initial_state(&self) -> ThermalState {
        match &self.run.initial_state {
            Some(v) => {
                let mut x = [0.0; N_STATES];
                x.copy_from_slice(v);
                ThermalState(x)
            }
            None => ThermalState::uniform(self.run.initial_temp),
        }
    }

    /// Attack search settings for this scenario's attack block.
    pub fn synthesis_settings(&self) -> Result<SynthesisSettings> {
        let a = self
            .attack
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [attack] section".into()))?;
        Ok(SynthesisSettings {
            target: a.target,
            lower: a.lower,
            upper: a.upper,
            window: self.attack_window(a),
            interval: self.interval(),
            granularity: a.granularity_s,
            starts: a.starts,
            max_iter: a.max_iter,
            fd_step: a.fd_step,
            seed: self.run.seed,
        })
    }
}

/// One control interval of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub k: usize,
    /// Trace time at the start of the interval, s.
    pub t: f64,
    /// True state at the start of the interval.
    pub state: ThermalState,
    /// Room readings as the controller saw them.
    pub measured: [f64; N_ZONES],
    pub setpoints: [f64; N_ZONES],
    /// Input applied to the plant, after any actuator falsification.
    pub input: ControlInput,
    pub dist: Disturbance,
    pub bias: f64,
    /// Clamped heat-pump power at the start of the interval, W.
    pub power: f64,
    /// Unclamped heat-pump power at the start of the interval, W.
    pub power_raw: f64,
    /// Heat-pump energy per room over the interval, J.
    pub energy_j: [f64; N_ZONES],
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub controller: String,
    pub attacked: bool,
    pub interval: f64,
    pub valve_step: f64,
    pub records: Vec<Record>,
    pub final_state: ThermalState,
    /// Set when the run aborted; `records` then holds the partial log.
    pub failure: Option<String>,
}

enum ControllerState {
    Pi(PiState),
    Mpc(Box<MpcController>),
}

impl Clone for ControllerState {
    fn clone(&self) -> Self {
        match self {
            ControllerState::Pi(s) => ControllerState::Pi(s.clone()),
            ControllerState::Mpc(c) => ControllerState::Mpc(c.clone()),
        }
    }
}

/// A closed-loop run in progress. Cloning takes a snapshot.
#[derive(Clone)]
pub struct Simulation<'a> {
    sc: &'a Scenario,
    traces: &'a ScenarioTraces,
    attack: Option<AttackSignal>,
    limits: ActuatorLimits,
    integ: Integrator,
    ctl: ControllerState,
    t: f64,
    state: ThermalState,
    meter: EnergyMeter,
    log: RunLog,
}

impl<'a> Simulation<'a> {
    pub fn new(sc: &'a Scenario, traces: &'a ScenarioTraces, attack: Option<AttackSignal>) -> Result<Self> {
        sc.validate()?;
        if let Some(a) = &attack {
            a.validate()?;
            if !a.values.is_empty() && !is_multiple(a.interval, sc.interval()) {
                return Err(Error::Config("attack signal interval differs from the control interval".into()));
            }
        }
        let ctl = match sc.controller.kind {
            ControllerKind::Pi => ControllerState::Pi(PiState::new(&sc.controller.pi)),
            ControllerKind::Mpc => ControllerState::Mpc(Box::new(MpcController::new(
                sc.controller.mpc.clone(),
                sc.run.substep_s,
            )?)),
        };
        let x0 = sc.initial_state();
        x0.check_finite()?;
        let limits = sc.attack.as_ref().map(|a| a.limits).unwrap_or_default();
        Ok(Simulation {
            sc,
            traces,
            limits,
            integ: Integrator::new(sc.run.substep_s)?,
            ctl,
            t: sc.run.start_s,
            state: x0,
            meter: EnergyMeter::default(),
            log: RunLog {
                controller: sc.controller.kind.label().to_string(),
                attacked: attack.is_some(),
                interval: sc.interval(),
                valve_step: sc.controller.valve_step(),
                records: Vec::new(),
                final_state: x0,
                failure: None,
            },
            attack,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &ThermalState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.log.failure.is_some() || self.t >= self.sc.log_end() - EPS
    }

    /// Total heat-pump energy of the logged part so far, kWh.
    pub fn energy_kwh(&self) -> f64 {
        self.meter.total_kwh()
    }

    /// Replaces the attack from the current time on.
    pub fn set_attack(&mut self, attack: Option<AttackSignal>) {
        self.log.attacked = attack.is_some();
        self.attack = attack;
    }

    fn bias(&self) -> f64 {
        self.attack.as_ref().map(|a| a.bias_at(self.t)).unwrap_or(0.0)
    }

    /// Advances one control interval.
    pub fn step(&mut self) -> Result<()> {
        let sc = self.sc;
        let ts = sc.interval();
        let t = self.t;
        let sample = self.traces.sample(t)?;
        let x = self.state;
        let bias = self.bias();

        let true_rooms = x.rooms();
        let measured = match &self.attack {
            Some(a) => inject(&true_rooms, a, t),
            None => true_rooms,
        };

        let mut fallback = false;
        let commanded = match &mut self.ctl {
            ControllerState::Pi(st) => {
                let (u, next) = pi_step(&sc.controller.pi, st, &measured, &sample.setpoints)?;
                *st = next;
                u
            }
            ControllerState::Mpc(c) => {
                let mut xm = x;
                for z in ZoneId::ALL {
                    xm.set_room(z, measured[z.index()]);
                }
                let n = c.cfg.horizon;
                let mut refs = Vec::with_capacity(n);
                let mut dists = Vec::with_capacity(n);
                for j in 0..n {
                    refs.push(self.traces.sample_clamped(t + ts * (j + 1) as f64)?.setpoints);
                    dists.push(self.traces.sample_clamped(t + ts * j as f64)?.dist);
                }
                let out = c.step(&xm, &refs, &dists, &sc.building)?;
                fallback = out.fallback;
                out.input
            }
        };
        let input = match &self.attack {
            Some(a) => inject_actuator(&commanded, a, t, &self.limits),
            None => commanded,
        };

        let d = sample.dist;
        let p = &sc.building;
        let clamp = |q: [f64; N_ZONES]| q.map(|v| v.max(0.0));
        let q0 = heat_pump_terms(&x, &input, &d, p);
        let mut before = clamp(q0);
        let mut interval_meter = EnergyMeter::default();
        let h = self.integ.substep;
        let first = ((t - sc.run.start_s) / h).round() as usize;
        let next = self.integ.advance_with(&x, &input, &d, p, ts, first, |_, xn| {
            let after = clamp(heat_pump_terms(xn, &input, &d, p));
            interval_meter.add(&before, &after, h);
            before = after;
        })?;

        if t >= sc.log_start() - EPS {
            for i in 0..N_ZONES {
                self.meter.joules[i] += interval_meter.joules[i];
            }
            self.log.records.push(Record {
                k: self.log.records.len(),
                t,
                state: x,
                measured,
                setpoints: sample.setpoints,
                input,
                dist: d,
                bias,
                power: q0.iter().map(|v| v.max(0.0)).sum(),
                power_raw: q0.iter().sum(),
                energy_j: interval_meter.joules,
                fallback,
            });
        }
        self.state = next;
        self.log.final_state = next;
        self.t = t + ts;
        Ok(())
    }

    /// Steps until `t_end` (trace time) or the end of the run. A runtime
    /// error stops the run and is recorded in the log.
    pub fn run_until(&mut self, t_end: f64) {
        while !self.is_done() && self.t < t_end - EPS {
            if let Err(e) = self.step() {
                self.log.failure = Some(format!("t={} s: {e}", self.t));
            }
        }
    }

    pub fn finish(mut self) -> RunLog {
        self.run_until(f64::INFINITY);
        self.log
    }
}

/// Runs the closed loop with an explicit attack signal (or none).
pub fn simulate(sc: &Scenario, traces: &ScenarioTraces, attack: Option<&AttackSignal>) -> Result<RunLog> {
    Ok(Simulation::new(sc, traces, attack.cloned())?.finish())
}

/// Searches the bias trajectory that maximizes total heat-pump energy of
/// the closed loop. The unattacked run is simulated once up to the window
/// start; every candidate resumes from that snapshot.
pub fn synthesize_attack(sc: &Scenario, traces: &ScenarioTraces) -> Result<SynthesisResult> {
    let settings = sc.synthesis_settings()?;
    let mut base = Simulation::new(sc, traces, None)?;
    base.run_until(settings.window.0);
    if let Some(f) = &base.log.failure {
        return Err(Error::ControllerFault(format!("baseline run failed before the attack window: {f}")));
    }
    let energy = |sig: &AttackSignal| -> Option<f64> {
        let mut sim = base.clone();
        sim.set_attack(Some(sig.clone()));
        let log = sim.finish();
        log.failure.is_none().then(|| log.total_energy_kwh())
    };
    attack::synthesize(&settings, energy)
}

/// The attack signal a scenario asks for: a fixed bias, a signal file, or
/// a synthesized trajectory. `None` without an attack block.
pub fn resolve_attack(sc: &Scenario, traces: &ScenarioTraces) -> Result<Option<AttackSignal>> {
    let Some(a) = &sc.attack else {
        return Ok(None);
    };
    let settings = sc.synthesis_settings()?;
    let (start, end) = settings.window;
    let sig = if let Some(b) = a.bias {
        AttackSignal::constant(a.target, (a.lower, a.upper), (start, end), sc.interval(), b)?
    } else if let Some(path) = &a.signal {
        let path = sc.resolve(path);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let values = AttackSignal::read_values(file, &path.display().to_string())?;
        let sig = AttackSignal {
            target: a.target,
            lower: a.lower,
            upper: a.upper,
            start,
            end,
            interval: sc.interval(),
            values,
        };
        sig.validate()?;
        sig
    } else {
        synthesize_attack(sc, traces)?.signal
    };
    Ok(Some(sig))
}

/// Loads traces, resolves the attack and runs the scenario.
pub fn run(sc: &Scenario) -> Result<RunLog> {
    let traces = sc.load_traces()?;
    let attack = resolve_attack(sc, &traces)?;
    simulate(sc, &traces, attack.as_ref())
}

const LOG_META: [&str; 6] = ["k", "t_s", "controller", "attacked", "interval_s", "valve_step"];

impl RunLog {
    pub fn total_energy_kwh(&self) -> f64 {
        self.energy_kwh().iter().sum()
    }

    pub fn energy_kwh(&self) -> [f64; N_ZONES] {
        let mut j = [0.0; N_ZONES];
        for r in &self.records {
            for i in 0..N_ZONES {
                j[i] += r.energy_j[i];
            }
        }
        j.map(|v| v / J_PER_KWH)
    }

    pub fn horizon_s(&self) -> f64 {
        self.records.len() as f64 * self.interval
    }

    pub fn valve_series(&self, z: ZoneId) -> Vec<f64> {
        self.records.iter().map(|r| r.input.valve(z)).collect()
    }

    /// Table row for this run. With a baseline, the lifespan is scaled by
    /// the baseline-to-this energy ratio; otherwise it is the baseline life.
    pub fn report(&self, baseline: Option<&RunLog>, baseline_years: f64) -> Result<RunReport> {
        if self.records.is_empty() {
            return Err(Error::Config("run log has no records".into()));
        }
        let mut mse = [0.0; N_ZONES];
        let mut valve_ops = [0; N_ZONES];
        for z in ZoneId::ALL {
            let sp: Vec<f64> = self.records.iter().map(|r| r.setpoints[z.index()]).collect();
            let tr: Vec<f64> = self.records.iter().map(|r| r.state.room(z)).collect();
            mse[z.index()] = metrics::mse(&sp, &tr)?;
            valve_ops[z.index()] = metrics::valve_cycles(&self.valve_series(z), self.valve_step)?;
        }
        let total = self.total_energy_kwh();
        let lifespan_years = match baseline {
            Some(b) => {
                if b.records.len() as f64 * b.interval != self.horizon_s() {
                    return Err(Error::Config("baseline covers a different horizon".into()));
                }
                metrics::lifespan_estimate(total, b.total_energy_kwh(), baseline_years)?
            }
            None => baseline_years,
        };
        Ok(RunReport {
            controller: self.controller.clone(),
            attacked: self.attacked,
            mse,
            energy_kwh: self.energy_kwh(),
            total_energy_kwh: total,
            lifespan_years,
            valve_ops,
            intervals: self.records.len(),
            fallback_intervals: self.records.iter().filter(|r| r.fallback).count(),
            horizon_s: self.horizon_s(),
        })
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = LOG_META.iter().map(|s| s.to_string()).collect();
        h.extend((0..N_STATES).map(ThermalState::label));
        h.extend(ZoneId::ALL.map(|z| format!("meas[{z}]")));
        h.extend(ZoneId::ALL.map(|z| format!("sp[{z}]")));
        h.extend(ControlInput::CHANNELS.iter().map(|s| s.to_string()));
        h.extend(["T_e", "phi_s", "phi_ig", "T_A_K", "Q_W", "Q_raw_W"].map(String::from));
        h.extend(ZoneId::ALL.map(|z| format!("E[{z}]_J")));
        h.push("fallback".into());
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        w.write_record(Self::csv_header()).map_err(err)?;
        for r in &self.records {
            let mut row = vec![
                r.k.to_string(),
                r.t.to_string(),
                self.controller.clone(),
                u8::from(self.attacked).to_string(),
                self.interval.to_string(),
                self.valve_step.to_string(),
            ];
            let u = r.input.to_array();
            let misc = [r.dist.outdoor, r.dist.solar, r.dist.internal, r.bias, r.power, r.power_raw];
            let nums = r
                .state
                .0
                .iter()
                .chain(&r.measured)
                .chain(&r.setpoints)
                .chain(&u)
                .chain(&misc)
                .chain(&r.energy_j);
            row.extend(nums.map(|v| v.to_string()));
            row.push(u8::from(r.fallback).to_string());
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a log written by [`RunLog::write_csv`]. The final state is not
    /// stored and is set to the last record's state.
    pub fn read_csv<R: std::io::Read>(r: R, name: &str) -> Result<RunLog> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                path: name.into(),
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected = Self::csv_header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse {
                path: name.into(),
                row: 1,
                message: "unexpected header".into(),
            });
        }
        let mut log = RunLog {
            controller: String::new(),
            attacked: false,
            interval: 0.0,
            valve_step: 0.0,
            records: Vec::new(),
            final_state: ThermalState::uniform(0.0),
            failure: None,
        };
        for (n, rec) in rdr.records().enumerate() {
            let row = n + 2;
            let perr = |m: String| Error::Parse {
                path: name.into(),
                row,
                message: m,
            };
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let f = |i: usize| rec[i].parse::<f64>().map_err(|e| perr(format!("{}: {e}", expected[i])));
            let flag = |i: usize| match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(perr(format!("{}: expected 0 or 1, got `{other}`", expected[i]))),
            };
            log.controller = rec[2].to_string();
            log.attacked = flag(3)?;
            log.interval = f(4)?;
            log.valve_step = f(5)?;
            let k = rec[0].parse::<usize>().map_err(|e| perr(format!("k: {e}")))?;
            let mut c = LOG_META.len();
            let mut take = |len: usize| -> Result<Vec<f64>> {
                let v = (c..c + len).map(&f).collect::<Result<Vec<_>>>()?;
                c += len;
                Ok(v)
            };
            let mut state = [0.0; N_STATES];
            state.copy_from_slice(&take(N_STATES)?);
            let arr5 = |v: Vec<f64>| -> [f64; N_ZONES] { [v[0], v[1], v[2], v[3], v[4]] };
            let measured = arr5(take(N_ZONES)?);
            let setpoints = arr5(take(N_ZONES)?);
            let mut u = [0.0; N_INPUTS];
            u.copy_from_slice(&take(N_INPUTS)?);
            let misc = take(6)?;
            let energy_j = arr5(take(N_ZONES)?);
            let fallback = flag(c)?;
            log.records.push(Record {
                k,
                t: f(1)?,
                state: ThermalState(state),
                measured,
                setpoints,
                input: ControlInput::from_array(u),
                dist: Disturbance {
                    outdoor: misc[0],
                    solar: misc[1],
                    internal: misc[2],
                },
                bias: misc[3],
                power: misc[4],
                power_raw: misc[5],
                energy_j,
                fallback,
            });
        }
        if let Some(last) = log.records.last() {
            log.final_state = last.state;
        }
        Ok(log)
    }
}

/// Paired deltas between two reports, `b` relative to `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: RunReport,
    pub b: RunReport,
    /// (field, a, b, b − a, percent change).
    pub rows: Vec<(String, f64, f64, f64, f64)>,
}

fn report_fields(r: &RunReport) -> Vec<(String, f64)> {
    let mut v = Vec::new();
    for z in ZoneId::ALL {
        v.push((format!("mse_{z}_K2"), r.mse[z.index()]));
    }
    for z in ZoneId::ALL {
        v.push((format!("energy_{z}_kWh"), r.energy_kwh[z.index()]));
    }
    v.push(("energy_total_kWh".into(), r.total_energy_kwh));
    v.push(("lifespan_years".into(), r.lifespan_years));
    for z in ZoneId::ALL {
        v.push((format!("valve_ops_{z}"), r.valve_ops[z.index()] as f64));
    }
    v.push(("fallback_intervals".into(), r.fallback_intervals as f64));
    v
}

pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if (a.horizon_s - b.horizon_s).abs() > EPS {
        return Err(Error::Config(format!(
            "cannot compare runs over different horizons ({} s vs {} s)",
            a.horizon_s, b.horizon_s
        )));
    }
    let rows = report_fields(a)
        .into_iter()
        .zip(report_fields(b))
        .map(|((name, va), (_, vb))| {
            let pct = if va != 0.0 { 100.0 * (vb - va) / va.abs() } else { f64::NAN };
            (name, va, vb, vb - va, pct)
        })
        .collect();
    Ok(Comparison {
        a: a.clone(),
        b: b.clone(),
        rows,
    })
}

impl Comparison {
    fn labels(&self) -> (String, String) {
        (
            format!("{}_{}", self.a.controller, self.a.condition()),
            format!("{}_{}", self.b.controller, self.b.condition()),
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let (la, lb) = self.labels();
        let mut w = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        w.write_record(["field", &la, &lb, "delta", "change_pct"]).map_err(err)?;
        for (name, a, b, d, p) in &self.rows {
            w.write_record([name.clone(), a.to_string(), b.to_string(), d.to_string(), p.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write: {e}")))
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let (la, lb) = self.labels();
        let mut out = format!("{:<22} {:>14} {:>14} {:>14} {:>10}\n", "field", la, lb, "delta", "change %");
        for (name, a, b, d, p) in &self.rows {
            let pct = if p.is_finite() { format!("{p:.2}") } else { "-".into() };
            out += &format!("{name:<22} {a:>14.4} {b:>14.4} {d:>14.4} {pct:>10}\n");
        }
        out
    }
}
