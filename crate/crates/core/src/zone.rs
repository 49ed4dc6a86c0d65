use std::fmt;

use serde::{Deserialize, Serialize};

pub const N_ZONES: usize = 5;

/// One of the five rooms. The center room is interior and has no
/// external-wall node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneId {
    Center,
    West,
    East,
    South,
    North,
}

impl ZoneId {
    pub const ALL: [ZoneId; N_ZONES] = [
        ZoneId::Center,
        ZoneId::West,
        ZoneId::East,
        ZoneId::South,
        ZoneId::North,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ZoneId> {
        Self::ALL.get(i).copied()
    }

    pub const fn name(self) -> &'static str {
        match self {
            ZoneId::Center => "center",
            ZoneId::West => "west",
            ZoneId::East => "east",
            ZoneId::South => "south",
            ZoneId::North => "north",
        }
    }

    pub const fn has_wall(self) -> bool {
        !matches!(self, ZoneId::Center)
    }

    /// Position of the room-air temperature in the state vector.
    pub const fn room_index(self) -> usize {
        match self {
            ZoneId::Center => 0,
            ZoneId::West => 2,
            ZoneId::East => 5,
            ZoneId::South => 8,
            ZoneId::North => 11,
        }
    }

    pub const fn floor_index(self) -> usize {
        self.room_index() + 1
    }

    pub const fn wall_index(self) -> Option<usize> {
        match self {
            ZoneId::Center => None,
            z => Some(z.room_index() + 2),
        }
    }

    /// Rooms sharing an interior partition with this one.
    pub const fn neighbors(self) -> &'static [ZoneId] {
        use ZoneId::*;
        match self {
            Center => &[West, East, South, North],
            West => &[Center, South, North],
            East => &[Center, South, North],
            South => &[Center, West, East],
            North => &[Center, West, East],
        }
    }

    pub fn is_adjacent(self, other: ZoneId) -> bool {
        self.neighbors().contains(&other)
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ZoneId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ZoneId::ALL
            .into_iter()
            .find(|z| z.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown zone `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_symmetric() {
        for a in ZoneId::ALL {
            assert!(!a.is_adjacent(a));
            for b in ZoneId::ALL {
                assert_eq!(a.is_adjacent(b), b.is_adjacent(a), "{a}-{b}");
            }
        }
        assert!(!ZoneId::West.is_adjacent(ZoneId::East));
        assert!(!ZoneId::South.is_adjacent(ZoneId::North));
    }

    #[test]
    fn state_layout_covers_fourteen_slots() {
        let mut seen = [false; 14];
        for z in ZoneId::ALL {
            seen[z.room_index()] = true;
            seen[z.floor_index()] = true;
            if let Some(w) = z.wall_index() {
                seen[w] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }
}
