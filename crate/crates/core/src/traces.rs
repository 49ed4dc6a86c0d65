//! Time-indexed weather, gain and setpoint profiles.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Disturbance;
use crate::zone::{ZoneId, N_ZONES};

pub const DAY: f64 = 86_400.0;

pub const CSV_HEADER: [&str; 9] = [
    "t_s",
    "Te_C",
    "phi_s_Wm2",
    "phi_ig_W",
    "sp_center_C",
    "sp_west_C",
    "sp_east_C",
    "sp_south_C",
    "sp_north_C",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Hold,
    #[default]
    Linear,
}

/// A uniformly sampled scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub period: f64,
    pub start: f64,
    pub samples: Vec<f64>,
    pub mode: Interpolation,
}

impl Profile {
    pub fn new(period: f64, start: f64, samples: Vec<f64>, mode: Interpolation) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::Config(format!("profile period must be positive, got {period}")));
        }
        if samples.len() < 2 {
            return Err(Error::Config("profile needs at least 2 samples".into()));
        }
        Ok(Profile {
            period,
            start,
            samples,
            mode,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.period * (self.samples.len() - 1) as f64
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        let end = self.end();
        if !(t >= self.start && t <= end) {
            return Err(Error::OutOfRange {
                t,
                start: self.start,
                end,
            });
        }
        let pos = (t - self.start) / self.period;
        let last = self.samples.len() - 1;
        let i = (pos.floor() as usize).min(last);
        let frac = pos - i as f64;
        if i == last || frac == 0.0 {
            return Ok(self.samples[i]);
        }
        Ok(match self.mode {
            Interpolation::Hold => self.samples[i],
            Interpolation::Linear => {
                let (a, b) = (self.samples[i], self.samples[i + 1]);
                a + (b - a) * frac
            }
        })
    }
}

/// Everything the plant and the controllers read from the outside world.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTraces {
    pub outdoor: Profile,
    pub solar: Profile,
    pub internal: Profile,
    pub setpoints: [Profile; N_ZONES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub dist: Disturbance,
    pub setpoints: [f64; N_ZONES],
}

impl ScenarioTraces {
    pub fn new(
        outdoor: Profile,
        solar: Profile,
        internal: Profile,
        setpoints: [Profile; N_ZONES],
    ) -> Result<Self> {
        let t = ScenarioTraces {
            outdoor,
            solar,
            internal,
            setpoints,
        };
        let (s, e) = (t.outdoor.start, t.outdoor.end());
        for p in t.profiles() {
            if p.start != s || p.end() != e {
                return Err(Error::Config("trace profiles must share the same time coverage".into()));
            }
        }
        Ok(t)
    }

    fn profiles(&self) -> impl Iterator<Item = &Profile> {
        [&self.outdoor, &self.solar, &self.internal]
            .into_iter()
            .chain(self.setpoints.iter())
    }

    pub fn start(&self) -> f64 {
        self.outdoor.start
    }

    pub fn end(&self) -> f64 {
        self.outdoor.end()
    }

    pub fn sample(&self, t: f64) -> Result<TraceSample> {
        let mut setpoints = [0.0; N_ZONES];
        for (sp, p) in setpoints.iter_mut().zip(&self.setpoints) {
            *sp = p.sample(t)?;
        }
        Ok(TraceSample {
            dist: Disturbance {
                outdoor: self.outdoor.sample(t)?,
                solar: self.solar.sample(t)?,
                internal: self.internal.sample(t)?,
            },
            setpoints,
        })
    }

    /// Like [`sample`](Self::sample) but holds the last value past the end,
    /// for forecasts that look beyond the recorded coverage.
    pub fn sample_clamped(&self, t: f64) -> Result<TraceSample> {
        self.sample(t.clamp(self.start(), self.end()))
    }

    pub fn set_mode(&mut self, mode: Interpolation) {
        self.outdoor.mode = mode;
        self.solar.mode = mode;
        self.internal.mode = mode;
        for p in &mut self.setpoints {
            p.mode = mode;
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, mode: Interpolation) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &name, mode)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, name: &str, mode: Interpolation) -> Result<Self> {
        let perr = |row: usize, message: String| Error::Parse {
            path: name.to_string(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        let mut cols = [0usize; 9];
        for (slot, want) in cols.iter_mut().zip(CSV_HEADER) {
            *slot = header
                .iter()
                .position(|h| h == want)
                .ok_or_else(|| perr(1, format!("missing column `{want}`")))?;
        }
        let mut rows: Vec<[f64; 9]> = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            // header is row 1
            let row = n + 2;
            let rec = rec.map_err(|e| perr(row, e.to_string()))?;
            let mut vals = [0.0; 9];
            for (v, (&c, want)) in vals.iter_mut().zip(cols.iter().zip(CSV_HEADER)) {
                let field = rec.get(c).ok_or_else(|| perr(row, format!("missing `{want}`")))?;
                *v = field
                    .parse::<f64>()
                    .map_err(|e| perr(row, format!("`{want}`: {e}")))?;
                if !v.is_finite() {
                    return Err(perr(row, format!("`{want}` is not finite")));
                }
            }
            if let Some(prev) = rows.last() {
                if vals[0] <= prev[0] {
                    return Err(perr(row, "t_s is not strictly increasing".into()));
                }
            }
            rows.push(vals);
        }
        if rows.len() < 2 {
            return Err(perr(rows.len() + 1, "need at least 2 data rows".into()));
        }
        let start = rows[0][0];
        let period = rows[1][0] - rows[0][0];
        for (n, r) in rows.iter().enumerate() {
            let expect = start + period * n as f64;
            if (r[0] - expect).abs() > 1e-6 * period.max(1.0) {
                return Err(perr(n + 2, format!("irregular sample period (expected t_s = {expect})")));
            }
        }
        let column = |c: usize| -> Result<Profile> {
            Profile::new(period, start, rows.iter().map(|r| r[c]).collect(), mode)
        };
        if rows.iter().any(|r| r[2] < 0.0 || r[3] < 0.0) {
            let n = rows.iter().position(|r| r[2] < 0.0 || r[3] < 0.0).unwrap();
            return Err(perr(n + 2, "solar and internal gains must be nonnegative".into()));
        }
        ScenarioTraces::new(
            column(1)?,
            column(2)?,
            column(3)?,
            [column(4)?, column(5)?, column(6)?, column(7)?, column(8)?],
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        w.write_record(CSV_HEADER).map_err(to_err)?;
        for i in 0..self.outdoor.samples.len() {
            let t = self.start() + self.outdoor.period * i as f64;
            let mut rec = vec![
                t.to_string(),
                self.outdoor.samples[i].to_string(),
                self.solar.samples[i].to_string(),
                self.internal.samples[i].to_string(),
            ];
            rec.extend(self.setpoints.iter().map(|p| p.samples[i].to_string()));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write: {e}")))?;
        Ok(())
    }
}

/// Parameters of the synthetic winter generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WinterConfig {
    pub days: u32,
    pub period_s: f64,
    /// Daily mean outdoor temperature, °C.
    pub mean_c: f64,
    /// Diurnal half-swing of the outdoor temperature, K.
    pub amplitude_k: f64,
    /// Hour of the outdoor minimum.
    pub coldest_hour: f64,
    /// Amplitude of a seeded second harmonic, zero mean over each day.
    pub wobble_k: f64,
    /// Clear-sky peak irradiance, W/m².
    pub solar_peak: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    /// Lowest seeded daily clearness factor (1 = always clear).
    pub min_clearness: f64,
    pub gain_occupied: f64,
    pub gain_vacant: f64,
    pub occupied_from_hour: f64,
    pub occupied_to_hour: f64,
    pub setpoint_c: f64,
    /// Night setback target; `None` keeps the setpoint constant.
    pub setback_c: Option<f64>,
    pub setback_from_hour: f64,
    pub setback_to_hour: f64,
}

impl Default for WinterConfig {
    fn default() -> Self {
        WinterConfig {
            days: 7,
            period_s: 300.0,
            mean_c: 0.0,
            amplitude_k: 5.0,
            coldest_hour: 4.0,
            wobble_k: 1.0,
            solar_peak: 250.0,
            sunrise_hour: 7.5,
            sunset_hour: 16.5,
            min_clearness: 0.4,
            gain_occupied: 300.0,
            gain_vacant: 50.0,
            occupied_from_hour: 8.0,
            occupied_to_hour: 18.0,
            setpoint_c: 21.0,
            setback_c: None,
            setback_from_hour: 22.0,
            setback_to_hour: 6.0,
        }
    }
}

impl WinterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("winter traces: {m}")));
        if self.days < 1 {
            return bad("length must be at least one day");
        }
        if !(self.period_s > 0.0) || DAY % self.period_s != 0.0 {
            return bad("sample period must divide one day");
        }
        if self.amplitude_k < 0.0 || self.wobble_k < 0.0 || self.solar_peak < 0.0 {
            return bad("amplitudes must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.min_clearness) {
            return bad("min_clearness must lie in [0, 1]");
        }
        if self.gain_occupied < 0.0 || self.gain_vacant < 0.0 {
            return bad("internal gains must be nonnegative");
        }
        if !(self.sunrise_hour < self.sunset_hour) {
            return bad("sunrise must precede sunset");
        }
        Ok(())
    }
}

/// Synthetic winter weather: sinusoidal outdoor temperature, half-sine
/// daytime sun, office-hours occupancy gains, constant or setback setpoint.
pub fn synth_winter(seed: u64, cfg: &WinterConfig) -> Result<ScenarioTraces> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = cfg.days as usize;
    let phases: Vec<f64> = (0..days).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let clearness: Vec<f64> = (0..days)
        .map(|_| rng.gen_range(cfg.min_clearness..=1.0))
        .collect();

    let per_day = (DAY / cfg.period_s) as usize;
    let n = days * per_day + 1;
    let mut te = Vec::with_capacity(n);
    let mut sun = Vec::with_capacity(n);
    let mut gains = Vec::with_capacity(n);
    let mut sp = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * cfg.period_s;
        let day = ((t / DAY) as usize).min(days - 1);
        let hour = (t - day as f64 * DAY) / 3600.0;
        let diurnal = 2.0 * PI * (hour - cfg.coldest_hour) / 24.0;
        te.push(
            cfg.mean_c - cfg.amplitude_k * diurnal.cos()
                + cfg.wobble_k * (4.0 * PI * hour / 24.0 + phases[day]).sin(),
        );
        let solar = if hour > cfg.sunrise_hour && hour < cfg.sunset_hour {
            let x = (hour - cfg.sunrise_hour) / (cfg.sunset_hour - cfg.sunrise_hour);
            cfg.solar_peak * clearness[day] * (PI * x).sin()
        } else {
            0.0
        };
        sun.push(solar.max(0.0));
        let weekday = day % 7 < 5;
        let occupied =
            weekday && hour >= cfg.occupied_from_hour && hour < cfg.occupied_to_hour;
        gains.push(if occupied {
            cfg.gain_occupied
        } else {
            cfg.gain_vacant
        });
        let night = hour >= cfg.setback_from_hour || hour < cfg.setback_to_hour;
        sp.push(match cfg.setback_c {
            Some(v) if night => v,
            _ => cfg.setpoint_c,
        });
    }
    let mk = |s: Vec<f64>| Profile::new(cfg.period_s, 0.0, s, Interpolation::Linear);
    let sp_profile = mk(sp)?;
    ScenarioTraces::new(
        mk(te)?,
        mk(sun)?,
        mk(gains)?,
        ZoneId::ALL.map(|_| sp_profile.clone()),
    )
}

/// Single-day shorthand for [`synth_winter`] with default settings.
pub fn synth_winter_day(seed: u64, days: u32) -> Result<ScenarioTraces> {
    synth_winter(
        seed,
        &WinterConfig {
            days,
            ..WinterConfig::default()
        },
    )
}
