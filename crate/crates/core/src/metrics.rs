//! Tracking error, heat-pump power and energy, lifespan and valve wear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlInput, Disturbance, ThermalState};
use crate::params::BuildingParams;
use crate::zone::{ZoneId, N_ZONES};

pub const KELVIN: f64 = 273.15;
pub const J_PER_KWH: f64 = 3.6e6;

pub fn mse(setpoints: &[f64], actual: &[f64]) -> Result<f64> {
    if setpoints.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: setpoints.len(),
            right: actual.len(),
        });
    }
    if setpoints.is_empty() {
        return Err(Error::Config("mse of an empty series".into()));
    }
    let sum: f64 = setpoints
        .iter()
        .zip(actual)
        .map(|(s, a)| (s - a) * (s - a))
        .sum();
    Ok(sum / setpoints.len() as f64)
}

/// Per-room heat-pump power terms, W, before clamping:
/// m̂·c_wt·(1−w_f)·V·(T_SW − T_f)·(T_r − T_e)/T_r with T_r in kelvin.
pub fn heat_pump_terms(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &BuildingParams,
) -> [f64; N_ZONES] {
    let g = params.water_conductance();
    ZoneId::ALL.map(|z| {
        let tr = state.room(z);
        g * input.valve(z) * (input.supply_water - state.floor(z)) * (tr - dist.outdoor)
            / (tr + KELVIN)
    })
}

/// Total heat-pump power, W, with each room's term clamped at zero.
pub fn heat_pump_power(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &BuildingParams,
) -> f64 {
    heat_pump_terms(state, input, dist, params)
        .iter()
        .map(|q| q.max(0.0))
        .sum()
}

/// Trapezoidal energy accumulator over per-room clamped power samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyMeter {
    /// Accumulated energy per room, J.
    pub joules: [f64; N_ZONES],
}

impl EnergyMeter {
    /// Adds one trapezoid between two clamped power samples `dt` apart.
    pub fn add(&mut self, before: &[f64; N_ZONES], after: &[f64; N_ZONES], dt: f64) {
        for i in 0..N_ZONES {
            self.joules[i] += 0.5 * dt * (before[i].max(0.0) + after[i].max(0.0));
        }
    }

    pub fn kwh(&self) -> [f64; N_ZONES] {
        self.joules.map(|j| j / J_PER_KWH)
    }

    pub fn total_kwh(&self) -> f64 {
        self.joules.iter().sum::<f64>() / J_PER_KWH
    }
}

/// Trapezoidal integral of a sampled power trace, W → kWh.
pub fn trapezoid_kwh(power: &[f64], dt: f64) -> f64 {
    power
        .windows(2)
        .map(|w| 0.5 * dt * (w[0].max(0.0) + w[1].max(0.0)))
        .sum::<f64>()
        / J_PER_KWH
}

/// Baseline life scaled by the ratio of normal to attacked consumption.
pub fn lifespan_estimate(energy_attacked: f64, energy_normal: f64, baseline_years: f64) -> Result<f64> {
    if !(energy_normal > 0.0) {
        return Err(Error::Config("normal-operation energy must be positive".into()));
    }
    if !(energy_attacked > 0.0) {
        return Err(Error::Config("attacked energy must be positive".into()));
    }
    Ok(baseline_years * energy_normal / energy_attacked)
}

/// Quantization level index of a valve command.
pub fn valve_level(v: f64, step: f64) -> i64 {
    (v / step).round() as i64
}

/// Number of changes of the quantized command along the series.
pub fn valve_cycles(series: &[f64], step: f64) -> Result<usize> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("quantization step must be positive, got {step}")));
    }
    Ok(series
        .windows(2)
        .filter(|w| valve_level(w[0], step) != valve_level(w[1], step))
        .count())
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub controller: String,
    pub attacked: bool,
    pub mse: [f64; N_ZONES],
    pub energy_kwh: [f64; N_ZONES],
    pub total_energy_kwh: f64,
    pub lifespan_years: f64,
    pub valve_ops: [usize; N_ZONES],
    pub intervals: usize,
    pub fallback_intervals: usize,
    /// Logged simulation length, s.
    pub horizon_s: f64,
}

impl RunReport {
    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["controller".to_string(), "condition".to_string()];
        h.extend(ZoneId::ALL.map(|z| format!("mse_{z}_K2")));
        h.extend(ZoneId::ALL.map(|z| format!("energy_{z}_kWh")));
        h.push("energy_total_kWh".into());
        h.push("lifespan_years".into());
        h.extend(ZoneId::ALL.map(|z| format!("valve_ops_{z}")));
        h.push("intervals".into());
        h.push("fallback_intervals".into());
        h.push("horizon_s".into());
        h
    }

    pub fn condition(&self) -> &'static str {
        if self.attacked {
            "attack"
        } else {
            "normal"
        }
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![self.controller.clone(), self.condition().to_string()];
        r.extend(self.mse.iter().map(|v| v.to_string()));
        r.extend(self.energy_kwh.iter().map(|v| v.to_string()));
        r.push(self.total_energy_kwh.to_string());
        r.push(self.lifespan_years.to_string());
        r.extend(self.valve_ops.iter().map(|v| v.to_string()));
        r.push(self.intervals.to_string());
        r.push(self.fallback_intervals.to_string());
        r.push(self.horizon_s.to_string());
        r
    }

    pub fn write_csv<W: std::io::Write>(reports: &[RunReport], w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        w.write_record(Self::csv_header()).map_err(err)?;
        for r in reports {
            w.write_record(r.csv_row()).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write: {e}")))
    }

    pub fn read_csv<R: std::io::Read>(r: R, name: &str) -> Result<Vec<RunReport>> {
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
            if rec.len() != Self::csv_header().len() {
                return Err(perr(format!("expected {} fields", Self::csv_header().len())));
            }
            let f = |i: usize| rec[i].parse::<f64>().map_err(|e| perr(format!("field {i}: {e}")));
            let u = |i: usize| rec[i].parse::<usize>().map_err(|e| perr(format!("field {i}: {e}")));
            let attacked = match &rec[1] {
                "attack" => true,
                "normal" => false,
                other => return Err(perr(format!("unknown condition `{other}`"))),
            };
            let mut rep = RunReport {
                controller: rec[0].to_string(),
                attacked,
                mse: [0.0; N_ZONES],
                energy_kwh: [0.0; N_ZONES],
                total_energy_kwh: f(12)?,
                lifespan_years: f(13)?,
                valve_ops: [0; N_ZONES],
                intervals: u(19)?,
                fallback_intervals: u(20)?,
                horizon_s: f(21)?,
            };
            for i in 0..N_ZONES {
                rep.mse[i] = f(2 + i)?;
                rep.energy_kwh[i] = f(7 + i)?;
                rep.valve_ops[i] = u(14 + i)?;
            }
            out.push(rep);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[5.0; 7], &[3.0; 7]).unwrap(), 4.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    fn one_zone_params() -> BuildingParams {
        // m̂·c_wt·(1−w_f) = 100 W/K
        BuildingParams {
            water_flow: 0.1,
            water_heat: 1000.0,
            flow_derating: 0.0,
            ..BuildingParams::default()
        }
    }

    #[test]
    fn power_single_zone_substitution() {
        let p = one_zone_params();
        let mut x = ThermalState::uniform(0.0);
        x.0[ZoneId::South.room_index()] = 20.0;
        x.0[ZoneId::South.floor_index()] = 25.0;
        let mut u = ControlInput {
            supply_water: 35.0,
            supply_air: 20.0,
            valves: [0.0; N_ZONES],
        };
        u.valves[ZoneId::South.index()] = 1.0;
        let d = Disturbance {
            outdoor: 0.0,
            ..Disturbance::default()
        };
        let q = heat_pump_power(&x, &u, &d, &p);
        let expected = 100.0 * 10.0 * 20.0 / 293.15;
        assert!((q - expected).abs() < 1e-12);
        assert!((q - 68.22).abs() < 5e-3);
    }

    #[test]
    fn power_vanishes() {
        let p = BuildingParams::default();
        let x = ThermalState::uniform(21.0);
        let mut u = ControlInput {
            supply_water: 40.0,
            supply_air: 20.0,
            valves: [0.0; N_ZONES],
        };
        let d = Disturbance {
            outdoor: 0.0,
            ..Disturbance::default()
        };
        assert_eq!(heat_pump_power(&x, &u, &d, &p), 0.0);
        u.valves = [1.0; N_ZONES];
        let warm = Disturbance {
            outdoor: 21.0,
            ..Disturbance::default()
        };
        assert_eq!(heat_pump_power(&x, &u, &warm, &p), 0.0);
        // water colder than the slab is clamped rather than negative
        u.supply_water = 10.0;
        assert_eq!(heat_pump_power(&x, &u, &d, &p), 0.0);
    }

    #[test]
    fn lifespan_examples() {
        assert_eq!(lifespan_estimate(100.0, 100.0, 15.0).unwrap(), 15.0);
        let l = lifespan_estimate(100.0 * 15.0 / 13.21, 100.0, 15.0).unwrap();
        assert!((l - 13.21).abs() < 1e-12);
        assert_eq!(lifespan_estimate(200.0, 100.0, 15.0).unwrap(), 7.5);
        assert!(lifespan_estimate(1.0, 0.0, 15.0).is_err());
    }

    #[test]
    fn valve_cycle_examples() {
        assert_eq!(valve_cycles(&[0.3; 10], 0.1).unwrap(), 0);
        let alt: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
        assert_eq!(valve_cycles(&alt, 0.1).unwrap(), 8);
        assert_eq!(valve_cycles(&[0.0, 0.04, 0.11, 0.11, 0.29], 0.1).unwrap(), 2);
        assert!(valve_cycles(&[0.0], 0.0).is_err());
    }

    #[test]
    fn trapezoid_is_additive() {
        let p: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin().abs() * 500.0).collect();
        let whole = trapezoid_kwh(&p, 60.0);
        for split in [1, 17, 50, 99] {
            let parts = trapezoid_kwh(&p[..=split], 60.0) + trapezoid_kwh(&p[split..], 60.0);
            assert!((parts - whole).abs() <= 1e-9 * whole);
        }
    }

    #[test]
    fn report_csv_round_trip() {
        let r = RunReport {
            controller: "mpc".into(),
            attacked: true,
            mse: [1.5, 1.6, 1.7, 4.2, 0.1],
            energy_kwh: [1.0, 2.0, 3.0, 4.0, 5.0],
            total_energy_kwh: 15.0,
            lifespan_years: 13.21,
            valve_ops: [1, 2, 3, 4, 5],
            intervals: 288,
            fallback_intervals: 0,
            horizon_s: 86400.0,
        };
        let mut buf = Vec::new();
        RunReport::write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        assert_eq!(RunReport::read_csv(buf.as_slice(), "mem").unwrap(), vec![r]);
    }

    proptest::proptest! {
        #[test]
        fn lifespan_scale_invariant(a in 0.1f64..1e4, n in 0.1f64..1e4, s in 1e-3f64..1e3) {
            let l1 = lifespan_estimate(a, n, 15.0).unwrap();
            let l2 = lifespan_estimate(a * s, n * s, 15.0).unwrap();
            proptest::prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs());
        }

        #[test]
        fn mse_translation_invariant(
            v in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
            c in -100.0f64..100.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m1 = mse(&a, &b).unwrap();
            let a2: Vec<f64> = a.iter().map(|x| x + c).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + c).collect();
            let m2 = mse(&a2, &b2).unwrap();
            proptest::prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
        }
    }
}
