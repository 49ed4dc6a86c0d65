//! Rule-based supervisor with per-room PI valve loops.
//!
//! The supervisor picks one of two supply-temperature levels: if any room's
//! tracking error exceeds the comfort tolerance the relevant supply is
//! boosted, otherwise it returns to its normal level. Each room's valve is
//! driven by its own PI loop, clamped to [0, 1] and quantized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlInput;
use crate::zone::N_ZONES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Heating,
    Cooling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiConfig {
    /// Controller period, s.
    pub interval_s: f64,
    /// Proportional gain per room, valve fraction per K.
    pub kp: [f64; N_ZONES],
    /// Integral gain per room, valve fraction per K·s.
    pub ki: [f64; N_ZONES],
    /// Comfort tolerance band, K.
    pub tolerance: f64,
    /// Supply water levels, °C. Heating boosts to `high`.
    pub water: Levels,
    /// Supply air levels, °C. Cooling boosts to `low`.
    pub air: Levels,
    pub mode: Mode,
    /// Bound on |integral|, K·s.
    pub integral_limit: f64,
    /// Valve quantization step; 0 leaves commands continuous.
    pub valve_step: f64,
    /// Valve command at zero error and zero integral.
    pub valve_bias: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        PiConfig {
            interval_s: 60.0,
            kp: [0.3; N_ZONES],
            ki: [2.0e-4; N_ZONES],
            tolerance: 1.0,
            // low-temperature water keeps the loop close to its capacity
            // limit, which is what makes its tracking visibly worse than MPC
            water: Levels {
                low: 20.0,
                high: 24.0,
            },
            air: Levels {
                low: 18.0,
                high: 22.0,
            },
            mode: Mode::Heating,
            integral_limit: 3600.0,
            valve_step: 0.1,
            valve_bias: 0.5,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pi: {m}")));
        if !(self.interval_s > 0.0) {
            return bad("interval_s must be positive");
        }
        if self.kp.iter().chain(&self.ki).any(|g| !(*g >= 0.0)) {
            return bad("gains must be nonnegative");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.water.low < self.water.high) || !(self.air.low < self.air.high) {
            return bad("level pairs need low < high");
        }
        if !(self.integral_limit >= 0.0) {
            return bad("integral_limit must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.valve_step) {
            return bad("valve_step must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.valve_bias) {
            return bad("valve_bias must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn quantize(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        if self.valve_step > 0.0 {
            ((v / self.valve_step).round() * self.valve_step).clamp(0.0, 1.0)
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub integral: [f64; N_ZONES],
    pub boosted: bool,
    pub valves: [f64; N_ZONES],
}

impl PiState {
    pub fn new(cfg: &PiConfig) -> Self {
        PiState {
            integral: [0.0; N_ZONES],
            boosted: false,
            valves: [cfg.quantize(cfg.valve_bias); N_ZONES],
        }
    }
}

/// One controller period. Positive error means the room needs more of the
/// current mode's effort (heat in heating mode, cooling in cooling mode).
pub fn pi_step(
    cfg: &PiConfig,
    st: &PiState,
    measured: &[f64; N_ZONES],
    setpoints: &[f64; N_ZONES],
) -> Result<(ControlInput, PiState)> {
    if let Some(i) = measured.iter().position(|v| !v.is_finite()) {
        return Err(Error::ControllerFault(format!("non-finite measurement in room {i}")));
    }
    let dt = cfg.interval_s;
    let mut next = st.clone();
    let mut errors = [0.0; N_ZONES];
    for i in 0..N_ZONES {
        errors[i] = match cfg.mode {
            Mode::Heating => setpoints[i] - measured[i],
            Mode::Cooling => measured[i] - setpoints[i],
        };
    }
    next.boosted = errors.iter().any(|e| e.abs() > cfg.tolerance);

    for i in 0..N_ZONES {
        let lim = cfg.integral_limit;
        next.integral[i] = (st.integral[i] + errors[i] * dt).clamp(-lim, lim);
        let raw = cfg.valve_bias + cfg.kp[i] * errors[i] + cfg.ki[i] * next.integral[i];
        next.valves[i] = cfg.quantize(raw);
    }

    let (supply_water, supply_air) = match (cfg.mode, next.boosted) {
        (Mode::Heating, false) => (cfg.water.low, cfg.air.high),
        (Mode::Heating, true) => (cfg.water.high, cfg.air.high),
        (Mode::Cooling, false) => (cfg.water.low, cfg.air.high),
        (Mode::Cooling, true) => (cfg.water.low, cfg.air.low),
    };
    Ok((
        ControlInput {
            supply_water,
            supply_air,
            valves: next.valves,
        },
        next,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zone::ZoneId;

    #[test]
    fn zero_error_holds_bias_and_low_level() {
        let cfg = PiConfig::default();
        let st = PiState::new(&cfg);
        let (u, next) = pi_step(&cfg, &st, &[21.0; N_ZONES], &[21.0; N_ZONES]).unwrap();
        assert_eq!(u.valves, [cfg.quantize(cfg.valve_bias); N_ZONES]);
        assert_eq!(u.supply_water, cfg.water.low);
        assert_eq!(next.integral, [0.0; N_ZONES]);
    }

    #[test]
    fn large_error_escalates_water() {
        let cfg = PiConfig::default();
        let st = PiState::new(&cfg);
        let mut meas = [21.0; N_ZONES];
        meas[ZoneId::South.index()] = 18.0;
        let (u, next) = pi_step(&cfg, &st, &meas, &[21.0; N_ZONES]).unwrap();
        assert_eq!(u.supply_water, cfg.water.high);
        assert!(next.boosted);
        assert!(u.valves[ZoneId::South.index()] > u.valves[ZoneId::North.index()]);
    }

    #[test]
    fn cooling_boosts_air() {
        let cfg = PiConfig {
            mode: Mode::Cooling,
            ..PiConfig::default()
        };
        let st = PiState::new(&cfg);
        let (u, _) = pi_step(&cfg, &st, &[25.0; N_ZONES], &[21.0; N_ZONES]).unwrap();
        assert_eq!(u.supply_air, cfg.air.low);
    }

    #[test]
    fn nan_measurement_faults() {
        let cfg = PiConfig::default();
        let st = PiState::new(&cfg);
        let mut meas = [21.0; N_ZONES];
        meas[2] = f64::NAN;
        assert!(matches!(
            pi_step(&cfg, &st, &meas, &[21.0; N_ZONES]),
            Err(Error::ControllerFault(_))
        ));
    }

    #[test]
    fn matches_closed_form_first_order_loop() {
        // Plant x⁺ = a·x + b·u, loop u = kp·e + ki·I⁺ with I⁺ = I + e·dt,
        // e = r − x. The closed loop is z⁺ = M·z + c with z = (x, I); its
        // k-step solution comes from diagonalizing M.
        let (a, b, kp, ki, dt, r) = (0.9, 0.2, 0.4, 0.0005, 60.0, 1.0);
        let cfg = PiConfig {
            interval_s: dt,
            kp: [kp; N_ZONES],
            ki: [ki; N_ZONES],
            integral_limit: 1e12,
            valve_step: 0.0,
            valve_bias: 0.0,
            ..PiConfig::default()
        };
        // u = (kp + ki·dt)(r − x) + ki·I
        let g = kp + ki * dt;
        let m = [[a - b * g, b * ki], [-dt, 1.0]];
        let c = [b * g * r, dt * r];
        // fixed point z* = (I − M)⁻¹ c
        let (p, q, s, t) = (1.0 - m[0][0], -m[0][1], -m[1][0], 1.0 - m[1][1]);
        let det = p * t - q * s;
        let zs = [(t * c[0] - q * c[1]) / det, (-s * c[0] + p * c[1]) / det];
        let tr = m[0][0] + m[1][1];
        let dm = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = tr * tr / 4.0 - dm;
        assert!(disc > 0.0, "test assumes real eigenvalues");
        let (l1, l2) = (tr / 2.0 + disc.sqrt(), tr / 2.0 - disc.sqrt());
        // e(k) = z(k) − z* = M^k e(0), with M^k = (λ1^k (M − λ2 I) − λ2^k (M − λ1 I)) / (λ1 − λ2)
        let e0 = [-zs[0], -zs[1]];
        let closed = |k: i32| -> f64 {
            let (p1, p2) = (l1.powi(k), l2.powi(k));
            let row = [
                (p1 * (m[0][0] - l2) - p2 * (m[0][0] - l1)) / (l1 - l2),
                (p1 * m[0][1] - p2 * m[0][1]) / (l1 - l2),
            ];
            zs[0] + row[0] * e0[0] + row[1] * e0[1]
        };

        let mut st = PiState::new(&cfg);
        st.valves = [0.0; N_ZONES];
        let mut x = 0.0;
        for k in 0..60 {
            assert!((x - closed(k)).abs() < 1e-9, "k={k}: {x} vs {}", closed(k));
            let (u, next) = pi_step(&cfg, &st, &[x; N_ZONES], &[r; N_ZONES]).unwrap();
            st = next;
            x = a * x + b * u.valves[0];
        }
    }

    proptest::proptest! {
        #[test]
        fn outputs_saturated_and_integral_bounded(
            seq in proptest::collection::vec(proptest::array::uniform5(-40.0f64..40.0), 1..80)
        ) {
            let cfg = PiConfig::default();
            let mut st = PiState::new(&cfg);
            for meas in seq {
                let (u, next) = pi_step(&cfg, &st, &meas, &[21.0; N_ZONES]).unwrap();
                for v in u.valves {
                    proptest::prop_assert!((0.0..=1.0).contains(&v));
                    let lvl = v / cfg.valve_step;
                    proptest::prop_assert!((lvl - lvl.round()).abs() < 1e-9);
                }
                proptest::prop_assert!(u.supply_water == cfg.water.low || u.supply_water == cfg.water.high);
                proptest::prop_assert!(u.supply_air == cfg.air.low || u.supply_air == cfg.air.high);
                for i in next.integral {
                    proptest::prop_assert!(i.abs() <= cfg.integral_limit);
                }
                st = next;
            }
        }

        #[test]
        fn larger_error_never_closes_valve(e1 in 0.0f64..10.0, extra in 0.0f64..10.0, i0 in -3600.0f64..3600.0) {
            let cfg = PiConfig::default();
            let mut st = PiState::new(&cfg);
            st.integral = [i0; N_ZONES];
            let s = ZoneId::South.index();
            let mut m1 = [21.0; N_ZONES];
            m1[s] = 21.0 - e1;
            let mut m2 = m1;
            m2[s] -= extra;
            let (u1, _) = pi_step(&cfg, &st, &m1, &[21.0; N_ZONES]).unwrap();
            let (u2, _) = pi_step(&cfg, &st, &m2, &[21.0; N_ZONES]).unwrap();
            proptest::prop_assert!(u2.valves[s] >= u1.valves[s]);
        }
    }
}
