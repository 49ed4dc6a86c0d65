//! Three-node RC dynamics of the five-room building and its RK4 integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::BuildingParams;
use crate::zone::{ZoneId, N_ZONES};

pub const N_STATES: usize = 14;
pub const N_INPUTS: usize = 7;

/// Temperatures are considered diverged outside this band (°C).
pub const PLAUSIBLE_MIN: f64 = -50.0;
pub const PLAUSIBLE_MAX: f64 = 80.0;

pub type StateJacobian = [[f64; N_STATES]; N_STATES];
pub type InputJacobian = [[f64; N_INPUTS]; N_STATES];

/// Node temperatures in °C, laid out as
/// `[Tr,c Tf,c | Tr,w Tf,w Tw,w | Tr,e Tf,e Tw,e | Tr,s Tf,s Tw,s | Tr,n Tf,n Tw,n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState(pub [f64; N_STATES]);

impl ThermalState {
    pub fn uniform(t: f64) -> Self {
        ThermalState([t; N_STATES])
    }

    pub fn room(&self, z: ZoneId) -> f64 {
        self.0[z.room_index()]
    }

    pub fn floor(&self, z: ZoneId) -> f64 {
        self.0[z.floor_index()]
    }

    pub fn wall(&self, z: ZoneId) -> Option<f64> {
        z.wall_index().map(|i| self.0[i])
    }

    pub fn rooms(&self) -> [f64; N_ZONES] {
        ZoneId::ALL.map(|z| self.room(z))
    }

    pub fn set_room(&mut self, z: ZoneId, t: f64) {
        self.0[z.room_index()] = t;
    }

    pub fn label(i: usize) -> String {
        for z in ZoneId::ALL {
            if i == z.room_index() {
                return format!("T_room[{z}]");
            }
            if i == z.floor_index() {
                return format!("T_floor[{z}]");
            }
            if Some(i) == z.wall_index() {
                return format!("T_wall[{z}]");
            }
        }
        format!("x[{i}]")
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("state {}", Self::label(i)))),
            None => Ok(()),
        }
    }

    fn check_plausible(&self, step: usize) -> Result<()> {
        for (i, &v) in self.0.iter().enumerate() {
            if !(PLAUSIBLE_MIN..=PLAUSIBLE_MAX).contains(&v) {
                return Err(Error::Divergence {
                    step,
                    component: Self::label(i),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Heat-pump supply temperatures and per-room valve openings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Supply water temperature T_SW, °C.
    pub supply_water: f64,
    /// Supply air temperature T_SA, °C.
    pub supply_air: f64,
    /// Valve openings in [0, 1], zone order.
    pub valves: [f64; N_ZONES],
}

impl ControlInput {
    pub const CHANNELS: [&'static str; N_INPUTS] = [
        "T_SW", "T_SA", "V_center", "V_west", "V_east", "V_south", "V_north",
    ];

    pub fn to_array(&self) -> [f64; N_INPUTS] {
        let v = self.valves;
        [self.supply_water, self.supply_air, v[0], v[1], v[2], v[3], v[4]]
    }

    pub fn from_array(a: [f64; N_INPUTS]) -> Self {
        ControlInput {
            supply_water: a[0],
            supply_air: a[1],
            valves: [a[2], a[3], a[4], a[5], a[6]],
        }
    }

    pub fn valve(&self, z: ZoneId) -> f64 {
        self.valves[z.index()]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.to_array().iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("input {}", Self::CHANNELS[i]))),
            None => Ok(()),
        }
    }
}

/// Measured disturbances: outdoor temperature, solar irradiance, internal gains.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    /// T_e, °C.
    pub outdoor: f64,
    /// φ_s, W/m².
    pub solar: f64,
    /// φ_ig, W per room.
    pub internal: f64,
}

impl Disturbance {
    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("T_e", self.outdoor),
            ("phi_s", self.solar),
            ("phi_ig", self.internal),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("disturbance {name}")));
            }
        }
        Ok(())
    }
}

/// State derivative in K/s. Validates every input for finiteness.
pub fn dynamics(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &BuildingParams,
) -> Result<[f64; N_STATES]> {
    state.check_finite()?;
    input.check_finite()?;
    dist.check_finite()?;
    Ok(derivative(state, input, dist, params))
}

pub(crate) fn derivative(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    p: &BuildingParams,
) -> [f64; N_STATES] {
    let x = &state.0;
    let mut dx = [0.0; N_STATES];
    let g_water = p.water_conductance();
    let te = dist.outdoor;
    for z in ZoneId::ALL {
        let i = z.index();
        let (ri, fi) = (z.room_index(), z.floor_index());
        let (tr, tf) = (x[ri], x[fi]);
        let valve = input.valves[i];

        let mut room = p.r_room_floor[i] * (tf - tr)
            + p.r_ext[i] * (te - tr)
            + (1.0 - p.gain_wall_frac) * dist.internal
            + p.air_exchange * valve * (input.supply_air - tr);
        for &k in z.neighbors() {
            room += p.r_room_room[i][k.index()] * (x[k.room_index()] - tr);
        }

        let mut floor = p.r_room_floor[i] * (tr - tf)
            + p.solar_floor_frac * dist.solar * p.window_area[i]
            + g_water * valve * (input.supply_water - tf);

        if let Some(wi) = z.wall_index() {
            let tw = x[wi];
            room += p.r_room_wall[i] * (tw - tr);
            floor += p.r_wall_floor[i] * (tw - tf);
            let wall = p.r_room_wall[i] * (tr - tw)
                + p.gain_wall_frac * dist.internal
                + p.r_wall_floor[i] * (tf - tw)
                + p.r_ext[i] * (te - tw)
                + p.solar_wall_frac * dist.solar * p.wall_area[i];
            dx[wi] = wall / p.c_wall[i];
        }
        dx[ri] = room / p.c_room[i];
        dx[fi] = floor / p.c_floor[i];
    }
    dx
}

/// ∂f/∂x. The dynamics are affine in the state, so this depends only on
/// the valve openings.
pub fn state_jacobian(input: &ControlInput, p: &BuildingParams) -> StateJacobian {
    let mut a = [[0.0; N_STATES]; N_STATES];
    let g_water = p.water_conductance();
    for z in ZoneId::ALL {
        let i = z.index();
        let (ri, fi) = (z.room_index(), z.floor_index());
        let (cr, cf) = (p.c_room[i], p.c_floor[i]);
        let valve = input.valves[i];

        let g_rf = p.r_room_floor[i];
        a[ri][fi] += g_rf / cr;
        a[ri][ri] -= (g_rf + p.r_ext[i] + p.air_exchange * valve) / cr;
        for &k in z.neighbors() {
            let g = p.r_room_room[i][k.index()];
            a[ri][k.room_index()] += g / cr;
            a[ri][ri] -= g / cr;
        }
        a[fi][ri] += g_rf / cf;
        a[fi][fi] -= (g_rf + g_water * valve) / cf;

        if let Some(wi) = z.wall_index() {
            let cw = p.c_wall[i];
            let (g_rw, g_wf) = (p.r_room_wall[i], p.r_wall_floor[i]);
            a[ri][wi] += g_rw / cr;
            a[ri][ri] -= g_rw / cr;
            a[fi][wi] += g_wf / cf;
            a[fi][fi] -= g_wf / cf;
            a[wi][ri] += g_rw / cw;
            a[wi][fi] += g_wf / cw;
            a[wi][wi] -= (g_rw + g_wf + p.r_ext[i]) / cw;
        }
    }
    a
}

/// ∂f/∂u at the given state, columns ordered as [`ControlInput::to_array`].
pub fn input_jacobian(
    state: &ThermalState,
    input: &ControlInput,
    p: &BuildingParams,
) -> InputJacobian {
    let mut b = [[0.0; N_INPUTS]; N_STATES];
    input_jacobian_into(&state.0, input, p, &mut b);
    b
}

pub(crate) fn input_jacobian_into(
    x: &[f64; N_STATES],
    input: &ControlInput,
    p: &BuildingParams,
    b: &mut InputJacobian,
) {
    let g_water = p.water_conductance();
    for z in ZoneId::ALL {
        let i = z.index();
        let (ri, fi) = (z.room_index(), z.floor_index());
        let valve = input.valves[i];
        let (cr, cf) = (p.c_room[i], p.c_floor[i]);
        b[ri][1] = p.air_exchange * valve / cr;
        b[ri][2 + i] = p.air_exchange * (input.supply_air - x[ri]) / cr;
        b[fi][0] = g_water * valve / cf;
        b[fi][2 + i] = g_water * (input.supply_water - x[fi]) / cf;
    }
}

/// One classical RK4 step with inputs held over `dt` seconds.
pub fn integrate_step(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &BuildingParams,
    dt: f64,
) -> Result<ThermalState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    state.check_finite()?;
    input.check_finite()?;
    dist.check_finite()?;
    let next = rk4(state, input, dist, params, dt);
    next.check_plausible(0)?;
    Ok(next)
}

pub(crate) fn rk4(
    state: &ThermalState,
    input: &ControlInput,
    dist: &Disturbance,
    p: &BuildingParams,
    dt: f64,
) -> ThermalState {
    let x = &state.0;
    let k1 = derivative(state, input, dist, p);
    let k2 = derivative(&offset(x, &k1, dt / 2.0), input, dist, p);
    let k3 = derivative(&offset(x, &k2, dt / 2.0), input, dist, p);
    let k4 = derivative(&offset(x, &k3, dt), input, dist, p);
    let mut out = *x;
    for i in 0..N_STATES {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    ThermalState(out)
}

#[inline]
pub(crate) fn offset(x: &[f64; N_STATES], k: &[f64; N_STATES], h: f64) -> ThermalState {
    let mut y = *x;
    for i in 0..N_STATES {
        y[i] += h * k[i];
    }
    ThermalState(y)
}

/// Fixed-step integration of a longer interval under zero-order hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub substep: f64,
}

impl Integrator {
    pub fn new(substep: f64) -> Result<Self> {
        if !(substep > 0.0) {
            return Err(Error::Config(format!("integrator sub-step must be positive, got {substep}")));
        }
        Ok(Integrator { substep })
    }

    /// Number of sub-steps covering `duration`; `duration` must be a
    /// multiple of the sub-step.
    pub fn substeps(&self, duration: f64) -> usize {
        (duration / self.substep).round() as usize
    }

    /// Advances over `duration`, calling `visit` after each sub-step with its
    /// index and the new state. Divergence reports `first_step` plus the
    /// local sub-step index.
    pub fn advance_with<F: FnMut(usize, &ThermalState)>(
        &self,
        state: &ThermalState,
        input: &ControlInput,
        dist: &Disturbance,
        params: &BuildingParams,
        duration: f64,
        first_step: usize,
        mut visit: F,
    ) -> Result<ThermalState> {
        let mut x = *state;
        for n in 0..self.substeps(duration) {
            x = rk4(&x, input, dist, params, self.substep);
            x.check_plausible(first_step + n)?;
            visit(n, &x);
        }
        Ok(x)
    }

    pub fn advance(
        &self,
        state: &ThermalState,
        input: &ControlInput,
        dist: &Disturbance,
        params: &BuildingParams,
        duration: f64,
    ) -> Result<ThermalState> {
        self.advance_with(state, input, dist, params, duration, 0, |_, _| {})
    }
}
