//! Lumped RC constants of the five-room building.
//!
//! Per-zone arrays are ordered center, west, east, south, north. Conductances
//! are in W/K, capacities in J/K, areas in m². The center room has no
//! external wall, so its wall entries are ignored by the dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zone::{ZoneId, N_ZONES};

pub type PerZone = [f64; N_ZONES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildingParams {
    /// Room-air heat capacity.
    pub c_room: PerZone,
    /// Floor slab heat capacity.
    pub c_floor: PerZone,
    /// External wall heat capacity.
    pub c_wall: PerZone,
    /// Symmetric room-to-room conductance matrix; nonzero only for adjacent rooms.
    pub r_room_room: [[f64; N_ZONES]; N_ZONES],
    /// Room-to-floor conductance.
    pub r_room_floor: PerZone,
    /// Wall-to-floor conductance.
    pub r_wall_floor: PerZone,
    /// Room-to-wall conductance.
    pub r_room_wall: PerZone,
    /// Exterior conductance, used both for the room and the wall node.
    pub r_ext: PerZone,
    pub wall_area: PerZone,
    pub window_area: PerZone,
    /// Share of solar gain absorbed by the external wall.
    pub solar_wall_frac: f64,
    /// Share of internal gains absorbed by the wall (the room gets the rest).
    pub gain_wall_frac: f64,
    /// Share of window solar gain absorbed by the floor.
    pub solar_floor_frac: f64,
    /// Nominal water mass flow per fully open valve, kg/s.
    pub water_flow: f64,
    /// Water specific heat, J/(kg K).
    pub water_heat: f64,
    /// Flow derating fraction.
    pub flow_derating: f64,
    /// Supply-air exchange coefficient per unit valve opening, W/K.
    pub air_exchange: f64,
}

impl BuildingParams {
    /// Water-side conductance of a fully open valve: m̂·c_wt·(1−w_f).
    pub fn water_conductance(&self) -> f64 {
        self.water_flow * self.water_heat * (1.0 - self.flow_derating)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("building: {m}")));
        for z in ZoneId::ALL {
            let i = z.index();
            if !(self.c_room[i] > 0.0) || !(self.c_floor[i] > 0.0) {
                return bad(format!("capacities of {z} must be positive"));
            }
            if z.has_wall() && !(self.c_wall[i] > 0.0) {
                return bad(format!("wall capacity of {z} must be positive"));
            }
            for (name, v) in [
                ("r_room_floor", self.r_room_floor[i]),
                ("r_wall_floor", self.r_wall_floor[i]),
                ("r_room_wall", self.r_room_wall[i]),
                ("r_ext", self.r_ext[i]),
                ("wall_area", self.wall_area[i]),
                ("window_area", self.window_area[i]),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return bad(format!("{name}[{z}] must be finite and nonnegative"));
                }
            }
            for k in ZoneId::ALL {
                let g = self.r_room_room[i][k.index()];
                if !(g >= 0.0) || !g.is_finite() {
                    return bad(format!("r_room_room[{z}][{k}] must be finite and nonnegative"));
                }
                if g != self.r_room_room[k.index()][i] {
                    return bad(format!("r_room_room is not symmetric at {z}/{k}"));
                }
                if g != 0.0 && !z.is_adjacent(k) {
                    return bad(format!("r_room_room couples non-adjacent rooms {z}/{k}"));
                }
            }
        }
        for (name, v) in [
            ("solar_wall_frac", self.solar_wall_frac),
            ("gain_wall_frac", self.gain_wall_frac),
            ("solar_floor_frac", self.solar_floor_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.flow_derating) {
            return bad("flow_derating must lie in [0, 1)".into());
        }
        if !(self.water_flow >= 0.0) || !(self.water_heat > 0.0) || !(self.air_exchange >= 0.0) {
            return bad("flow constants must be nonnegative".into());
        }
        Ok(())
    }
}

impl Default for BuildingParams {
    /// Five-room office with room-air time constants near one hour, floors
    /// near ten hours and walls near thirty hours.
    fn default() -> Self {
        let core = 40.0;
        let side = 15.0;
        let mut rr = [[0.0; N_ZONES]; N_ZONES];
        for a in ZoneId::ALL {
            for &b in a.neighbors() {
                let g = if a == ZoneId::Center || b == ZoneId::Center {
                    core
                } else {
                    side
                };
                rr[a.index()][b.index()] = g;
            }
        }
        BuildingParams {
            c_room: [2.0e6, 1.5e6, 1.5e6, 1.5e6, 1.5e6],
            c_floor: [1.2e7, 8.0e6, 8.0e6, 8.0e6, 8.0e6],
            c_wall: [1.5e7, 1.5e7, 1.5e7, 1.5e7, 1.5e7],
            r_room_room: rr,
            r_room_floor: [300.0, 200.0, 200.0, 200.0, 200.0],
            r_wall_floor: [0.0, 20.0, 20.0, 20.0, 20.0],
            r_room_wall: [0.0, 90.0, 90.0, 90.0, 90.0],
            r_ext: [10.0, 30.0, 30.0, 35.0, 30.0],
            wall_area: [0.0, 30.0, 30.0, 30.0, 30.0],
            window_area: [0.0, 6.0, 6.0, 10.0, 4.0],
            solar_wall_frac: 0.4,
            gain_wall_frac: 0.3,
            solar_floor_frac: 0.6,
            water_flow: 0.05,
            water_heat: 4186.0,
            flow_derating: 0.1,
            air_exchange: 60.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        BuildingParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_asymmetric_coupling() {
        let mut p = BuildingParams::default();
        p.r_room_room[0][1] += 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_non_adjacent_coupling() {
        let mut p = BuildingParams::default();
        let (w, e) = (ZoneId::West.index(), ZoneId::East.index());
        p.r_room_room[w][e] = 5.0;
        p.r_room_room[e][w] = 5.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_bad_fractions() {
        let mut p = BuildingParams::default();
        p.flow_derating = 1.0;
        assert!(p.validate().is_err());
        let mut p = BuildingParams::default();
        p.gain_wall_frac = -0.1;
        assert!(p.validate().is_err());
    }
}
