use serde::{Deserialize, Serialize};

use crate::{Result, TrafficError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    N,
    E,
    S,
    W,
}

impl Approach {
    pub fn index(self) -> usize {
        match self {
            Approach::N => 0,
            Approach::E => 1,
            Approach::S => 2,
            Approach::W => 3,
        }
    }

    pub fn opposite(self) -> Approach {
        match self {
            Approach::N => Approach::S,
            Approach::S => Approach::N,
            Approach::E => Approach::W,
            Approach::W => Approach::E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementKind {
    Through,
    Left,
    Right,
    UTurn,
}

pub type MovementId = usize;

/// One origin-destination flow through the junction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Movement {
    pub id: MovementId,
    pub label: String,
    pub approach: Approach,
    pub kind: MovementKind,
    /// Global lane index the movement enters from.
    pub entry_lane: usize,
    /// Meters of junction-interior path from the stop line to the exit.
    pub path_length_m: f64,
}

/// Conflict between two movements: interior offsets (meters past the stop
/// line) at which each path reaches the shared crossing point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub own_offset_m: f64,
    pub foe_offset_m: f64,
}

/// Shared kinematic parameters; one deceleration rate for all vehicles.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub length_m: f64,
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub reaction_time_s: f64,
    /// Critical gap for permitted lefts, seconds.
    pub gap_accept_s: f64,
    /// Half-window margin added to half the vehicle length when deciding
    /// conflict-point occupancy.
    pub collision_margin_m: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        VehicleSpec {
            length_m: 5.0,
            accel_mps2: 2.6,
            decel_mps2: 4.5,
            reaction_time_s: 1.0,
            gap_accept_s: 4.0,
            collision_margin_m: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Geometry {
    pub lanes_per_approach: usize,
    pub approach_length_m: f64,
    pub cell_size_m: f64,
    pub speed_limit_mps: f64,
    pub movements: Vec<Movement>,
    pub vehicle: VehicleSpec,
    /// Dense symmetric conflict matrix indexed by movement id pairs.
    conflicts: Vec<Vec<Option<ConflictPoint>>>,
    /// Movements entering from each lane.
    lane_movements: Vec<Vec<MovementId>>,
}

impl Geometry {
    pub fn new(
        lanes_per_approach: usize,
        approach_length_m: f64,
        cell_size_m: f64,
        speed_limit_mps: f64,
        movements: Vec<Movement>,
        conflict_list: &[(MovementId, MovementId, f64, f64)],
        vehicle: VehicleSpec,
    ) -> Result<Self> {
        let n = movements.len();
        let mut conflicts = vec![vec![None; n]; n];
        for &(a, b, off_a, off_b) in conflict_list {
            if a == b {
                return Err(TrafficError::Config(format!(
                    "movement {a} cannot conflict with itself"
                )));
            }
            if a >= n || b >= n {
                return Err(TrafficError::Config(format!(
                    "conflict references movement {} out of range",
                    a.max(b)
                )));
            }
            conflicts[a][b] = Some(ConflictPoint {
                own_offset_m: off_a,
                foe_offset_m: off_b,
            });
            conflicts[b][a] = Some(ConflictPoint {
                own_offset_m: off_b,
                foe_offset_m: off_a,
            });
        }
        let mut lane_movements = vec![Vec::new(); 4 * lanes_per_approach];
        for m in &movements {
            if m.entry_lane < lane_movements.len() {
                lane_movements[m.entry_lane].push(m.id);
            }
        }
        let geo = Geometry {
            lanes_per_approach,
            approach_length_m,
            cell_size_m,
            speed_limit_mps,
            movements,
            vehicle,
            conflicts,
            lane_movements,
        };
        geo.validate()?;
        Ok(geo)
    }

    fn validate(&self) -> Result<()> {
        for m in &self.movements {
            if m.entry_lane >= self.lane_count() {
                return Err(TrafficError::Config(format!(
                    "movement {} enters unknown lane {}",
                    m.label, m.entry_lane
                )));
            }
            if m.path_length_m <= 0.0 {
                return Err(TrafficError::Config(format!(
                    "movement {} has non-positive path length",
                    m.label
                )));
            }
        }
        // Conflict offsets must lie on the interior paths.
        for a in 0..self.movements.len() {
            for b in 0..self.movements.len() {
                if let Some(cp) = self.conflicts[a][b] {
                    if cp.own_offset_m < 0.0 || cp.own_offset_m > self.movements[a].path_length_m {
                        return Err(TrafficError::Config(format!(
                            "conflict offset {} off the path of {}",
                            cp.own_offset_m, self.movements[a].label
                        )));
                    }
                }
            }
        }
        // Every lane serves at least one movement.
        for lane in 0..self.lane_count() {
            if !self.movements.iter().any(|m| m.entry_lane == lane) {
                return Err(TrafficError::Config(format!("lane {lane} serves no movement")));
            }
        }
        Ok(())
    }

    pub fn lane_count(&self) -> usize {
        4 * self.lanes_per_approach
    }

    pub fn movement_count(&self) -> usize {
        self.movements.len()
    }

    /// Stop line distance from the approach entry; same for all approaches.
    pub fn stop_line_m(&self) -> f64 {
        self.approach_length_m
    }

    pub fn conflict(&self, a: MovementId, b: MovementId) -> Option<ConflictPoint> {
        self.conflicts[a][b]
    }

    pub fn movements_on_lane(&self, lane: usize) -> &[MovementId] {
        &self.lane_movements[lane]
    }

    pub fn conflicts_of(&self, m: MovementId) -> impl Iterator<Item = (MovementId, ConflictPoint)> + '_ {
        self.conflicts[m]
            .iter()
            .enumerate()
            .filter_map(|(id, cp)| cp.map(|c| (id, c)))
    }

    pub fn movement_by_label(&self, label: &str) -> Result<MovementId> {
        self.movements
            .iter()
            .find(|m| m.label == label)
            .map(|m| m.id)
            .ok_or_else(|| TrafficError::UnknownMovement(label.to_string()))
    }

    /// Opposing through movements of a left turn: conflicting movements of
    /// kind `Through` coming from the opposite approach.
    pub fn opposing_throughs(&self, left: MovementId) -> Vec<MovementId> {
        let opp = self.movements[left].approach.opposite();
        self.conflicts_of(left)
            .filter(|(id, _)| {
                self.movements[*id].kind == MovementKind::Through
                    && self.movements[*id].approach == opp
            })
            .map(|(id, _)| id)
            .collect()
    }

    pub fn cells_per_lane(&self) -> usize {
        (self.approach_length_m / self.cell_size_m).ceil() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_lane() * self.lane_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Geometry {
        let mk = |id, label: &str, approach, kind, lane| Movement {
            id,
            label: label.into(),
            approach,
            kind,
            entry_lane: lane,
            path_length_m: 20.0,
        };
        let movements = vec![
            mk(0, "N_T", Approach::N, MovementKind::Through, 0),
            mk(1, "E_T", Approach::E, MovementKind::Through, 1),
            mk(2, "S_L", Approach::S, MovementKind::Left, 2),
            mk(3, "W_T", Approach::W, MovementKind::Through, 3),
        ];
        Geometry::new(
            1,
            100.0,
            5.0,
            13.89,
            movements,
            &[(2, 0, 12.0, 14.0)],
            VehicleSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn conflict_relation_is_symmetric_with_swapped_offsets() {
        let g = toy();
        let ab = g.conflict(2, 0).unwrap();
        let ba = g.conflict(0, 2).unwrap();
        assert_eq!(ab.own_offset_m, ba.foe_offset_m);
        assert_eq!(ab.foe_offset_m, ba.own_offset_m);
    }

    #[test]
    fn no_self_conflicts() {
        let g = toy();
        assert!(g.conflict(0, 0).is_none());
        let movements = g.movements.clone();
        let err = Geometry::new(1, 100.0, 5.0, 13.89, movements, &[(0, 0, 1.0, 1.0)], VehicleSpec::default());
        assert!(err.is_err());
    }

    #[test]
    fn opposing_through_lookup() {
        let g = toy();
        assert_eq!(g.opposing_throughs(2), vec![0]);
    }
}
