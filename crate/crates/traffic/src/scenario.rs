//! Declarative scenario files: geometry, movement/conflict tables, signal
//! plans, demand profiles, and safety rules, parsed from TOML.

use serde::{Deserialize, Serialize};

use crate::geometry::{Approach, Geometry, Movement, MovementKind, VehicleSpec};
use crate::safety::{RuleConfig, SafetyConfig};
use crate::signal::{CyclicPlan, PhaseDef};
use crate::sim::DemandProfile;
use crate::{Result, TrafficError};

pub const SYNTHETIC_4X12: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/synthetic-4x12.toml"));
pub const COLOGNE_LIKE_8LANE: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/cologne-like-8lane.toml"));

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    schema: String,
    name: String,
    geometry: GeometrySection,
    #[serde(default)]
    vehicle: VehicleSpec,
    #[serde(rename = "movements")]
    movements: Vec<MovementRow>,
    #[serde(rename = "conflicts", default)]
    conflicts: Vec<ConflictRow>,
    signal: SignalSection,
    #[serde(rename = "phases")]
    phases: Vec<PhaseRow>,
    demand: DemandSection,
    #[serde(default)]
    safety: SafetySection,
}

#[derive(Debug, Deserialize)]
struct GeometrySection {
    lanes_per_approach: usize,
    approach_length_m: f64,
    cell_size_m: f64,
    speed_limit_mps: f64,
}

#[derive(Debug, Deserialize)]
struct MovementRow {
    label: String,
    approach: Approach,
    kind: MovementKind,
    /// Lane index within the approach.
    entry_lane: usize,
    path_length_m: f64,
}

#[derive(Debug, Deserialize)]
struct ConflictRow {
    a: String,
    b: String,
    a_offset_m: f64,
    b_offset_m: f64,
}

#[derive(Debug, Deserialize)]
struct SignalSection {
    yellow_s: f64,
    all_red_s: f64,
    acyclic_exec_s: f64,
}

#[derive(Debug, Deserialize)]
struct PhaseRow {
    label: String,
    protected: Vec<String>,
    permitted: Vec<String>,
    min_s: f64,
    max_s: f64,
    initial_s: f64,
}

#[derive(Debug, Deserialize)]
struct DemandSection {
    ignore_foe_prob: f64,
    rates: Vec<RateRow>,
}

#[derive(Debug, Deserialize)]
struct RateRow {
    movement: String,
    /// Piecewise-constant steps: pairs of (start time s, rate veh/h).
    steps: Vec<(f64, f64)>,
}

#[derive(Debug, Default, Deserialize)]
struct SafetySection {
    #[serde(default = "default_window")]
    speed_window_s: f64,
    #[serde(default = "default_sample_period")]
    speed_sample_period_s: f64,
    #[serde(default)]
    rules: Vec<RuleConfig>,
}

fn default_window() -> f64 {
    300.0
}

fn default_sample_period() -> f64 {
    5.0
}

/// A fully-resolved scenario ready to instantiate simulations and signal
/// engines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub geometry: Geometry,
    pub phases: Vec<PhaseDef>,
    pub initial_plan: CyclicPlan,
    pub acyclic_exec_s: f64,
    pub demand: DemandProfile,
    pub safety: SafetyConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.schema != "tsc-scenario-v1" {
            return Err(TrafficError::Config(format!(
                "unsupported scenario schema {:?}",
                file.schema
            )));
        }
        let lanes_per_approach = file.geometry.lanes_per_approach;
        let movements: Vec<Movement> = file
            .movements
            .iter()
            .enumerate()
            .map(|(id, row)| {
                if row.entry_lane >= lanes_per_approach {
                    return Err(TrafficError::Config(format!(
                        "movement {}: entry lane {} exceeds {} lanes per approach",
                        row.label, row.entry_lane, lanes_per_approach
                    )));
                }
                Ok(Movement {
                    id,
                    label: row.label.clone(),
                    approach: row.approach,
                    kind: row.kind,
                    entry_lane: row.approach.index() * lanes_per_approach + row.entry_lane,
                    path_length_m: row.path_length_m,
                })
            })
            .collect::<Result<_>>()?;

        let find = |label: &str| -> Result<usize> {
            movements
                .iter()
                .find(|m| m.label == label)
                .map(|m| m.id)
                .ok_or_else(|| TrafficError::UnknownMovement(label.to_string()))
        };

        let conflict_list = file
            .conflicts
            .iter()
            .map(|c| Ok((find(&c.a)?, find(&c.b)?, c.a_offset_m, c.b_offset_m)))
            .collect::<Result<Vec<_>>>()?;

        let geometry = Geometry::new(
            lanes_per_approach,
            file.geometry.approach_length_m,
            file.geometry.cell_size_m,
            file.geometry.speed_limit_mps,
            movements.clone(),
            &conflict_list,
            file.vehicle,
        )?;

        let phases = file
            .phases
            .iter()
            .map(|p| {
                Ok(PhaseDef {
                    label: p.label.clone(),
                    protected: p.protected.iter().map(|l| find(l)).collect::<Result<_>>()?,
                    permitted: p.permitted.iter().map(|l| find(l)).collect::<Result<_>>()?,
                    min_duration_s: p.min_s,
                    max_duration_s: p.max_s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        crate::signal::validate_phases(&geometry, &phases)?;

        let initial_plan = CyclicPlan {
            durations_s: file.phases.iter().map(|p| p.initial_s).collect(),
            yellow_s: file.signal.yellow_s,
            all_red_s: file.signal.all_red_s,
        };

        if !(0.0..=1.0).contains(&file.demand.ignore_foe_prob) {
            return Err(TrafficError::Config(
                "ignore_foe_prob must lie in [0, 1]".into(),
            ));
        }
        let mut rates = vec![Vec::new(); geometry.movement_count()];
        for row in &file.demand.rates {
            let id = find(&row.movement)?;
            for &(t, r) in &row.steps {
                if r < 0.0 {
                    return Err(TrafficError::Config(format!(
                        "negative arrival rate for {}",
                        row.movement
                    )));
                }
                rates[id].push((t, r));
            }
            rates[id].sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        let demand = DemandProfile {
            rates_per_movement: rates,
            ignore_foe_prob: file.demand.ignore_foe_prob,
        };

        let safety = SafetyConfig {
            speed_window_s: file.safety.speed_window_s,
            speed_sample_period_s: file.safety.speed_sample_period_s,
            rules: file.safety.rules,
        };

        Ok(Scenario {
            name: file.name,
            geometry,
            phases,
            initial_plan,
            acyclic_exec_s: file.signal.acyclic_exec_s,
            demand,
            safety,
        })
    }

    /// Resolves a builtin scenario by name.
    pub fn builtin(name: &str) -> Option<Result<Self>> {
        match name {
            "synthetic-4x12" => Some(Self::from_toml(SYNTHETIC_4X12)),
            "cologne-like-8lane" => Some(Self::from_toml(COLOGNE_LIKE_8LANE)),
            _ => None,
        }
    }
}
