//! False-data injection: additive sensor and actuator biases, and synthesis
//! of the bias trajectory that maximizes heat-pump energy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlInput;
use crate::solver::{self, BoxProblem, GradientMode, SolveResult};
use crate::zone::{ZoneId, N_ZONES};

/// What the attacker falsifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackTarget {
    /// A room temperature reading, before it reaches the controller.
    Sensor(ZoneId),
    SupplyWater,
    SupplyAir,
    Valve(ZoneId),
}

impl AttackTarget {
    pub fn is_sensor(self) -> bool {
        matches!(self, AttackTarget::Sensor(_))
    }
}

impl fmt::Display for AttackTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackTarget::Sensor(z) => write!(f, "sensor:{z}"),
            AttackTarget::SupplyWater => f.write_str("actuator:supply_water"),
            AttackTarget::SupplyAir => f.write_str("actuator:supply_air"),
            AttackTarget::Valve(z) => write!(f, "actuator:valve:{z}"),
        }
    }
}

impl FromStr for AttackTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let zone = |name: &str| name.parse::<ZoneId>().map_err(Error::Config);
        match parts.as_slice() {
            ["sensor", z] => Ok(AttackTarget::Sensor(zone(z)?)),
            ["actuator", "supply_water"] => Ok(AttackTarget::SupplyWater),
            ["actuator", "supply_air"] => Ok(AttackTarget::SupplyAir),
            ["actuator", "valve", z] => Ok(AttackTarget::Valve(zone(z)?)),
            _ => Err(Error::Config(format!(
                "unknown attack target `{s}` (expected sensor:<zone>, actuator:supply_water, actuator:supply_air or actuator:valve:<zone>)"
            ))),
        }
    }
}

impl TryFrom<String> for AttackTarget {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttackTarget> for String {
    fn from(t: AttackTarget) -> String {
        t.to_string()
    }
}

/// Physical ranges that falsified actuator commands are clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    pub supply_water: [f64; 2],
    pub supply_air: [f64; 2],
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits {
            supply_water: [10.0, 60.0],
            supply_air: [10.0, 35.0],
        }
    }
}

/// Bias trajectory, one value per control interval of the attack window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    pub target: AttackTarget,
    pub lower: f64,
    pub upper: f64,
    /// Window start, s of trace time (inclusive).
    pub start: f64,
    /// Window end, s of trace time (exclusive).
    pub end: f64,
    /// Control interval the values are indexed by, s.
    pub interval: f64,
    pub values: Vec<f64>,
}

impl AttackSignal {
    /// Constant bias over the window.
    pub fn constant(
        target: AttackTarget,
        bounds: (f64, f64),
        window: (f64, f64),
        interval: f64,
        bias: f64,
    ) -> Result<Self> {
        let n = window_intervals(window, interval)?;
        let s = AttackSignal {
            target,
            lower: bounds.0,
            upper: bounds.1,
            start: window.0,
            end: window.1,
            interval,
            values: vec![bias; n],
        };
        s.validate()?;
        Ok(s)
    }

    /// An attack that never changes anything.
    pub fn null(target: AttackTarget, interval: f64) -> Self {
        AttackSignal {
            target,
            lower: 0.0,
            upper: 0.0,
            start: 0.0,
            end: 0.0,
            interval,
            values: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower <= self.upper) {
            return Err(Error::Config("attack bounds are inverted".into()));
        }
        let n = window_intervals((self.start, self.end), self.interval)?;
        if n != self.values.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: self.values.len(),
            });
        }
        if let Some(k) = self
            .values
            .iter()
            .position(|v| !(self.lower..=self.upper).contains(v))
        {
            return Err(Error::Config(format!(
                "attack value {} at k={k} outside [{}, {}]",
                self.values[k], self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Bias at trace time `t`; zero outside the window.
    pub fn bias_at(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            return 0.0;
        }
        let k = ((t - self.start) / self.interval + 1e-9).floor() as usize;
        self.values.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.bias_at(t) != 0.0
    }

    /// Writes `k,T_A_K` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        w.write_record(["k", "T_A_K"]).map_err(err)?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([k.to_string(), v.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write: {e}")))
    }

    /// Reads values written by [`AttackSignal::write_csv`] into a signal
    /// with the given metadata.
    pub fn read_values<R: std::io::Read>(r: R, name: &str) -> Result<Vec<f64>> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut out = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let row = n + 2;
            let perr = |m: String| Error::Parse {
                path: name.to_string(),
                row,
                message: m,
            };
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let k: usize = rec
                .get(0)
                .ok_or_else(|| perr("missing k".into()))?
                .parse()
                .map_err(|e| perr(format!("k: {e}")))?;
            if k != out.len() {
                return Err(perr(format!("expected k={}, found {k}", out.len())));
            }
            let v: f64 = rec
                .get(1)
                .ok_or_else(|| perr("missing T_A_K".into()))?
                .parse()
                .map_err(|e| perr(format!("T_A_K: {e}")))?;
            out.push(v);
        }
        Ok(out)
    }
}

fn window_intervals(window: (f64, f64), interval: f64) -> Result<usize> {
    if !(interval > 0.0) || !(window.0 <= window.1) {
        return Err(Error::Config("attack window needs start ≤ end and a positive interval".into()));
    }
    let n = (window.1 - window.0) / interval;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "attack window length {} s is not a multiple of the {interval} s control interval",
            window.1 - window.0
        )));
    }
    Ok(n.round() as usize)
}

/// Falsified room readings: the target zone reads `T_r + T_A(t)`.
pub fn inject(measured: &[f64; N_ZONES], atk: &AttackSignal, t: f64) -> [f64; N_ZONES] {
    let mut out = *measured;
    if let AttackTarget::Sensor(z) = atk.target {
        out[z.index()] += atk.bias_at(t);
    }
    out
}

/// Falsified actuator command, clamped to the channel's physical range.
pub fn inject_actuator(
    u: &ControlInput,
    atk: &AttackSignal,
    t: f64,
    limits: &ActuatorLimits,
) -> ControlInput {
    let b = atk.bias_at(t);
    let mut out = *u;
    if b == 0.0 {
        return out;
    }
    match atk.target {
        AttackTarget::Sensor(_) => {}
        AttackTarget::SupplyWater => {
            let [lo, hi] = limits.supply_water;
            out.supply_water = (u.supply_water + b).clamp(lo, hi);
        }
        AttackTarget::SupplyAir => {
            let [lo, hi] = limits.supply_air;
            out.supply_air = (u.supply_air + b).clamp(lo, hi);
        }
        AttackTarget::Valve(z) => {
            out.valves[z.index()] = (u.valves[z.index()] + b).clamp(0.0, 1.0);
        }
    }
    out
}

/// Settings of the trajectory search.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSettings {
    pub target: AttackTarget,
    pub lower: f64,
    pub upper: f64,
    pub window: (f64, f64),
    /// Controller interval the output signal is indexed by, s.
    pub interval: f64,
    /// Length of each piecewise-constant segment, s.
    pub granularity: f64,
    pub starts: usize,
    pub max_iter: usize,
    /// Absolute finite-difference step, K.
    pub fd_step: f64,
    pub seed: u64,
}

impl SynthesisSettings {
    /// Number of controller intervals in each segment, and the segment count.
    pub fn segments(&self) -> Result<(usize, usize)> {
        let n = window_intervals(self.window, self.interval)?;
        let per = (self.granularity / self.interval).round();
        if per < 1.0 || (self.granularity / self.interval - per).abs() > 1e-9 {
            return Err(Error::Config(
                "attack granularity must be a positive multiple of the control interval".into(),
            ));
        }
        let per = per as usize;
        Ok((per, n.div_ceil(per)))
    }

    /// Expands per-segment values into a per-interval signal.
    pub fn expand(&self, segment_values: &[f64]) -> Result<AttackSignal> {
        let n = window_intervals(self.window, self.interval)?;
        let (per, _) = self.segments()?;
        let values = (0..n).map(|k| segment_values[k / per]).collect();
        Ok(AttackSignal {
            target: self.target,
            lower: self.lower,
            upper: self.upper,
            start: self.window.0,
            end: self.window.1,
            interval: self.interval,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub signal: AttackSignal,
    /// Total heat-pump energy of the best closed-loop run, kWh.
    pub energy_kwh: f64,
    /// Every start's result, best first.
    pub runs: Vec<SolveResult>,
}

/// Maximizes `energy(signal)` over piecewise-constant signals in the box.
/// `energy` runs the closed loop and returns total heat-pump energy in kWh,
/// or `None` if the run diverged; such candidates are discarded.
pub fn synthesize<F>(settings: &SynthesisSettings, energy: F) -> Result<SynthesisResult>
where
    F: Fn(&AttackSignal) -> Option<f64>,
{
    if !(settings.lower <= settings.upper) {
        return Err(Error::Config("attack bounds are inverted".into()));
    }
    if !(settings.fd_step > 0.0) || settings.starts < 1 {
        return Err(Error::Config("attack search needs fd_step > 0 and at least one start".into()));
    }
    let (_, nseg) = settings.segments()?;
    let objective = |v: &[f64]| -> f64 {
        match settings.expand(v).ok().and_then(|s| energy(&s)) {
            Some(e) if e.is_finite() => -e,
            _ => f64::INFINITY,
        }
    };
    let mut problem = BoxProblem::new(vec![settings.lower; nseg], vec![settings.upper; nseg])?;
    problem.gradient = GradientMode::FiniteDifference {
        rel: 0.0,
        abs: settings.fd_step,
    };
    problem.max_iter = settings.max_iter;
    problem.tol = 1e-6;
    // constant biases at either bound come first: bang-bang signals are
    // natural candidates for an energy-maximizing attack
    let corners = [vec![settings.lower; nseg], vec![settings.upper; nseg]];
    let starts = solver::default_starts(&problem, &corners, settings.starts, settings.seed);
    let runs = solver::solve_multistart(&problem, &objective, &starts);
    let best = &runs[0];
    if !best.value.is_finite() {
        return Err(Error::ControllerFault(
            "every attack candidate diverged".into(),
        ));
    }
    let signal = settings.expand(&best.x)?;
    Ok(SynthesisResult {
        signal,
        energy_kwh: -best.value,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn south(bias: f64) -> AttackSignal {
        AttackSignal::constant(
            AttackTarget::Sensor(ZoneId::South),
            (-5.0, 5.0),
            (3.0 * 3600.0, 6.0 * 3600.0),
            300.0,
            bias,
        )
        .unwrap()
    }

    #[test]
    fn sensor_bias_examples() {
        let mut m = [21.0; N_ZONES];
        m[ZoneId::West.index()] = 20.0;
        assert_eq!(inject(&m, &south(0.0), 4.0 * 3600.0), m);
        let out = inject(&m, &south(5.0), 4.0 * 3600.0);
        assert_eq!(out[ZoneId::South.index()], 26.0);
        for z in ZoneId::ALL {
            if z != ZoneId::South {
                assert_eq!(out[z.index()], m[z.index()]);
            }
        }
        assert_eq!(inject(&m, &south(5.0), 2.0 * 3600.0), m);
        assert_eq!(inject(&m, &south(5.0), 6.0 * 3600.0), m);
    }

    #[test]
    fn actuator_bias_examples() {
        let u = ControlInput {
            supply_water: 35.0,
            supply_air: 20.0,
            valves: [0.8; N_ZONES],
        };
        let lim = ActuatorLimits::default();
        let t = 1800.0;
        let mk = |target, b| AttackSignal::constant(target, (-5.0, 5.0), (0.0, 3600.0), 300.0, b).unwrap();
        assert_eq!(inject_actuator(&u, &mk(AttackTarget::SupplyWater, 0.0), t, &lim), u);
        let v = inject_actuator(&u, &mk(AttackTarget::Valve(ZoneId::East), 0.5), t, &lim);
        assert_eq!(v.valves[ZoneId::East.index()], 1.0);
        assert_eq!(v.valves[ZoneId::West.index()], 0.8);
        let w = inject_actuator(&u, &mk(AttackTarget::SupplyWater, 3.0), t, &lim);
        assert_eq!(w.supply_water, 38.0);
        assert_eq!(w.valves, u.valves);
        // sensor attacks never touch actuators
        assert_eq!(inject_actuator(&u, &mk(AttackTarget::Sensor(ZoneId::South), 3.0), t, &lim), u);
    }

    #[test]
    fn target_round_trip() {
        for s in ["sensor:south", "actuator:supply_water", "actuator:supply_air", "actuator:valve:center"] {
            assert_eq!(s.parse::<AttackTarget>().unwrap().to_string(), s);
        }
        assert!("sensor:attic".parse::<AttackTarget>().is_err());
        assert!("pump".parse::<AttackTarget>().is_err());
    }

    #[test]
    fn signal_validation() {
        let mut s = south(1.0);
        assert!(s.validate().is_ok());
        s.values[0] = 5.5;
        assert!(s.validate().is_err());
        s.values.pop();
        assert!(matches!(s.validate(), Err(Error::LengthMismatch { .. })));
        assert!(AttackSignal::constant(AttackTarget::SupplyAir, (-1.0, 1.0), (0.0, 1000.0), 300.0, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = south(0.0);
        for (k, v) in s.values.iter_mut().enumerate() {
            *v = (k as f64 * 0.37).sin() * 4.9;
        }
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,T_A_K\n0,"));
        assert_eq!(AttackSignal::read_values(&buf[..], "mem").unwrap(), s.values);
    }

    fn settings(lower: f64, upper: f64, granularity: f64) -> SynthesisSettings {
        SynthesisSettings {
            target: AttackTarget::Sensor(ZoneId::South),
            lower,
            upper,
            window: (0.0, 3600.0),
            interval: 300.0,
            granularity,
            starts: 3,
            max_iter: 50,
            fd_step: 1e-3,
            seed: 7,
        }
    }

    #[test]
    fn expansion_is_piecewise_constant() {
        let s = settings(-5.0, 5.0, 900.0);
        assert_eq!(s.segments().unwrap(), (3, 4));
        let sig = s.expand(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(sig.values, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0]);
        assert!(settings(-5.0, 5.0, 450.0).segments().is_err());
    }

    #[test]
    fn synthesis_finds_concave_peak() {
        // energy peaks at a bias of 1.7 on every segment
        let s = settings(-5.0, 5.0, 1800.0);
        let r = synthesize(&s, |sig| {
            Some(100.0 - sig.values.iter().map(|v| (v - 1.7).powi(2)).sum::<f64>())
        })
        .unwrap();
        for v in &r.signal.values {
            assert!((v - 1.7).abs() < 1e-4, "{v}");
        }
        assert!((r.energy_kwh - 100.0).abs() < 1e-6);
    }

    #[test]
    fn collapsed_bounds_give_null_attack() {
        let s = settings(0.0, 0.0, 3600.0);
        let r = synthesize(&s, |sig| Some(10.0 + sig.values.iter().sum::<f64>())).unwrap();
        assert!(r.signal.values.iter().all(|v| *v == 0.0));
        assert_eq!(r.energy_kwh, 10.0);
    }

    #[test]
    fn diverging_candidates_are_discarded() {
        let s = settings(-5.0, 5.0, 3600.0);
        // runs with a negative bias "diverge"; the search stays on the valid side
        let r = synthesize(&s, |sig| (sig.values[0] >= 0.0).then(|| sig.values[0])).unwrap();
        assert!(r.signal.values[0] > 4.9);
    }

    #[test]
    fn wider_box_never_worse() {
        let f = |sig: &AttackSignal| Some(sig.values.iter().map(|v| (2.0 * v).sin() + 0.1 * v).sum::<f64>());
        let narrow = synthesize(&settings(-1.0, 1.0, 1800.0), f).unwrap();
        let wide = synthesize(&settings(-5.0, 5.0, 1800.0), f).unwrap();
        assert!(wide.energy_kwh >= narrow.energy_kwh - 1e-9);
    }
}
