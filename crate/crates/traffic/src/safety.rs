//! Rule-based safety model: watches traffic conditions around permitted
//! left turns, flags actions that would expose an unsafe permitted left,
//! and produces minimally-corrected actions plus the desired safe
//! advantage distribution used by the loss/reward integrations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use tsc_nn::{softmax, KL_FLOOR};

use crate::geometry::{Geometry, MovementId, MovementKind};
use crate::sim::Simulation;
use crate::signal::{Indication, IndicationFrame};
use crate::{Result, TrafficError};

/// 45 mph in meters per second.
pub const MPH_45_MPS: f64 = 20.1168;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleConfig {
    /// Permitted left is unsafe when the 85th-percentile speed of opposing
    /// traffic exceeds the threshold.
    #[serde(rename = "speed_85th")]
    Speed85th { threshold_mps: f64, enabled: bool },
    /// Permitted left is unsafe while any opposing through vehicle could
    /// reach the shared conflict point within the horizon.
    ConflictArrival { horizon_s: f64, enabled: bool },
    /// Permitted left is unsafe when the opposing approach has at least
    /// `min_lanes` demand-carrying through lanes.
    OpposingLanes { min_lanes: usize, enabled: bool },
}

impl RuleConfig {
    pub fn id(&self) -> &'static str {
        match self {
            RuleConfig::Speed85th { .. } => "speed_85th",
            RuleConfig::ConflictArrival { .. } => "conflict_arrival",
            RuleConfig::OpposingLanes { .. } => "opposing_lanes",
        }
    }

    pub fn enabled(&self) -> bool {
        match self {
            RuleConfig::Speed85th { enabled, .. }
            | RuleConfig::ConflictArrival { enabled, .. }
            | RuleConfig::OpposingLanes { enabled, .. } => *enabled,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub speed_window_s: f64,
    pub speed_sample_period_s: f64,
    pub rules: Vec<RuleConfig>,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            speed_window_s: 300.0,
            speed_sample_period_s: 5.0,
            rules: vec![
                RuleConfig::Speed85th {
                    threshold_mps: MPH_45_MPS,
                    enabled: true,
                },
                RuleConfig::ConflictArrival {
                    horizon_s: 4.0,
                    enabled: true,
                },
                RuleConfig::OpposingLanes {
                    min_lanes: 3,
                    enabled: true,
                },
            ],
        }
    }
}

/// Nearest-rank percentile.
pub fn percentile_nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as f64;
    let rank = (pct / 100.0 * n).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Rolling window of approaching-through speed samples per movement, from
/// which the 85th-percentile opposing speed is read.
#[derive(Clone, Debug)]
pub struct SpeedTracker {
    window_s: f64,
    sample_period_s: f64,
    last_sample_s: f64,
    samples: Vec<VecDeque<(f64, f64)>>,
    cached_p85: Vec<Option<f64>>,
}

impl SpeedTracker {
    pub fn new(config: &SafetyConfig, geometry: &Geometry) -> Self {
        SpeedTracker {
            window_s: config.speed_window_s,
            sample_period_s: config.speed_sample_period_s,
            last_sample_s: f64::NEG_INFINITY,
            samples: vec![VecDeque::new(); geometry.movement_count()],
            cached_p85: vec![None; geometry.movement_count()],
        }
    }

    pub fn observe(&mut self, sim: &Simulation) {
        let t = sim.time_s();
        if t - self.last_sample_s + 1e-9 < self.sample_period_s {
            return;
        }
        self.last_sample_s = t;
        let geo = sim.geometry();
        for m in &geo.movements {
            if m.kind != MovementKind::Through {
                continue;
            }
            let ring = &mut self.samples[m.id];
            for v in sim.lane_vehicles(m.entry_lane) {
                if v.movement == m.id {
                    ring.push_back((t, v.speed_mps));
                }
            }
            while ring.front().is_some_and(|&(ts, _)| ts < t - self.window_s) {
                ring.pop_front();
            }
            let mut speeds: Vec<f64> = ring.iter().map(|&(_, s)| s).collect();
            speeds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            self.cached_p85[m.id] = percentile_nearest_rank(&speeds, 85.0);
        }
    }

    pub fn p85(&self, movement: MovementId) -> Option<f64> {
        self.cached_p85[movement]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoeSample {
    pub movement: MovementId,
    pub speed_mps: f64,
    pub dist_to_conflict_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftMode {
    Protected,
    Permitted,
    Prohibited,
}

/// Everything the rules need to judge one left-turn movement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeftObservation {
    pub movement: MovementId,
    pub mode: LeftMode,
    /// Approaching (pre-stop-line) vehicles on conflicting through
    /// movements, regardless of their current indication; rules filter by
    /// which throughs are live in the configuration under judgment.
    pub foes: Vec<FoeSample>,
    /// 85th-percentile speed of the opposing through traffic, when the
    /// rolling window holds any samples.
    pub speed_85th_mps: Option<f64>,
    /// Opposing-approach through lanes with nonzero arrival rate now.
    pub opposing_lanes_with_demand: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SafetyObservation {
    pub time_s: f64,
    pub lefts: Vec<LeftObservation>,
}

/// Derives the rule inputs from the current simulation state.
pub fn observe(sim: &Simulation, frame: &IndicationFrame, tracker: &SpeedTracker) -> SafetyObservation {
    let geo = sim.geometry();
    let stop = geo.stop_line_m();
    let t = sim.time_s();
    let mut lefts = Vec::new();
    for m in &geo.movements {
        if m.kind != MovementKind::Left {
            continue;
        }
        let mode = match frame.indication(m.id) {
            Indication::ProtectedGreen => LeftMode::Protected,
            Indication::PermittedGreen => LeftMode::Permitted,
            _ => LeftMode::Prohibited,
        };
        let mut foes = Vec::new();
        for (foe_mov, cp) in geo.conflicts_of(m.id) {
            if geo.movements[foe_mov].kind != MovementKind::Through {
                continue;
            }
            let lane = geo.movements[foe_mov].entry_lane;
            for v in sim.lane_vehicles(lane) {
                if v.movement == foe_mov {
                    foes.push(FoeSample {
                        movement: foe_mov,
                        speed_mps: v.speed_mps,
                        dist_to_conflict_m: (stop + cp.foe_offset_m) - v.pos_m,
                    });
                }
            }
        }
        let opposing = geo.opposing_throughs(m.id);
        let speed_85th_mps = opposing
            .iter()
            .filter_map(|&om| tracker.p85(om))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        let mut lanes = std::collections::BTreeSet::new();
        for &om in &opposing {
            if sim.demand().rate_at(om, t) > 0.0 {
                lanes.insert(geo.movements[om].entry_lane);
            }
        }
        lefts.push(LeftObservation {
            movement: m.id,
            mode,
            foes,
            speed_85th_mps,
            opposing_lanes_with_demand: lanes.len(),
        });
    }
    SafetyObservation { time_s: t, lefts }
}

/// What one action would expose: the permitted lefts it enables (or whose
/// exposure it increases) and the through movements live alongside them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionContext {
    pub exposed_lefts: Vec<MovementId>,
    pub active_throughs: Vec<MovementId>,
}

/// Rule verdict for a left under a given set of live throughs.
fn left_unsafe(
    rule: &RuleConfig,
    obs: &LeftObservation,
    active_throughs: &[MovementId],
    speed_limit_mps: f64,
) -> bool {
    if !rule.enabled() {
        return false;
    }
    match rule {
        RuleConfig::Speed85th { threshold_mps, .. } => obs
            .speed_85th_mps
            .is_some_and(|v| v > *threshold_mps),
        RuleConfig::ConflictArrival { horizon_s, .. } => obs.foes.iter().any(|f| {
            active_throughs.contains(&f.movement)
                && f.dist_to_conflict_m / speed_limit_mps < *horizon_s
        }),
        RuleConfig::OpposingLanes { min_lanes, .. } => obs.opposing_lanes_with_demand >= *min_lanes,
    }
}

/// Rule ids triggered for one left in a context.
pub fn triggered_rules(
    rules: &[RuleConfig],
    obs: &LeftObservation,
    active_throughs: &[MovementId],
    speed_limit_mps: f64,
) -> Vec<&'static str> {
    rules
        .iter()
        .filter(|r| left_unsafe(r, obs, active_throughs, speed_limit_mps))
        .map(|r| r.id())
        .collect()
}

/// Per-action unsafe flags before any action has been proposed.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionAssessment {
    pub unsafe_flags: Vec<bool>,
    pub triggered: Vec<Vec<&'static str>>,
    /// Left movements whose rules fired, per action.
    pub flagged_lefts: Vec<Vec<MovementId>>,
}

impl ActionAssessment {
    pub fn flags_f64(&self) -> Vec<f64> {
        self.unsafe_flags.iter().map(|&b| f64::from(u8::from(b))).collect()
    }

    pub fn any_unsafe(&self) -> bool {
        self.unsafe_flags.iter().any(|&b| b)
    }
}

/// Evaluates every action's exposure against the rules.
pub fn assess(
    rules: &[RuleConfig],
    obs: &SafetyObservation,
    contexts: &[ActionContext],
    speed_limit_mps: f64,
) -> ActionAssessment {
    let mut unsafe_flags = Vec::with_capacity(contexts.len());
    let mut triggered = Vec::with_capacity(contexts.len());
    let mut flagged_lefts = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let mut action_rules: Vec<&'static str> = Vec::new();
        let mut lefts = Vec::new();
        for left in &obs.lefts {
            if !ctx.exposed_lefts.contains(&left.movement) {
                continue;
            }
            let hits = triggered_rules(rules, left, &ctx.active_throughs, speed_limit_mps);
            if !hits.is_empty() {
                lefts.push(left.movement);
                for h in hits {
                    if !action_rules.contains(&h) {
                        action_rules.push(h);
                    }
                }
            }
        }
        unsafe_flags.push(!lefts.is_empty());
        triggered.push(action_rules);
        flagged_lefts.push(lefts);
    }
    ActionAssessment {
        unsafe_flags,
        triggered,
        flagged_lefts,
    }
}

/// Full verdict for a proposed action.
#[derive(Clone, Debug)]
pub struct SafetyVerdict {
    pub assessment: ActionAssessment,
    pub proposed: usize,
    /// Same action index, with the offending permitted lefts forced red.
    pub corrected: CorrectedAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedAction {
    pub index: usize,
    /// Movements whose permitted green is overridden to red during the
    /// action's execution window.
    pub overrides: Vec<MovementId>,
}

/// Builds the verdict for a proposed action: a safe proposal passes through
/// untouched; an unsafe one keeps its phase identity and only reddens the
/// triggered permitted lefts.
pub fn evaluate(
    rules: &[RuleConfig],
    obs: &SafetyObservation,
    contexts: &[ActionContext],
    speed_limit_mps: f64,
    proposed: usize,
) -> SafetyVerdict {
    let assessment = assess(rules, obs, contexts, speed_limit_mps);
    let overrides = if assessment.unsafe_flags[proposed] {
        assessment.flagged_lefts[proposed].clone()
    } else {
        Vec::new()
    };
    SafetyVerdict {
        assessment,
        proposed,
        corrected: CorrectedAction {
            index: proposed,
            overrides,
        },
    }
}

/// Permitted lefts that must show red right now. The continuous enforcement
/// path of the action-filter integration.
pub fn tick_overrides(
    rules: &[RuleConfig],
    obs: &SafetyObservation,
    frame: &IndicationFrame,
    speed_limit_mps: f64,
) -> Vec<MovementId> {
    let active: Vec<MovementId> = (0..frame.movement_count())
        .filter(|&m| frame.base_indication(m).is_green())
        .collect();
    obs.lefts
        .iter()
        .filter(|left| {
            frame.base_indication(left.movement) == Indication::PermittedGreen
                && !triggered_rules(rules, left, &active, speed_limit_mps).is_empty()
        })
        .map(|left| left.movement)
        .collect()
}

/// Desired safe advantage distribution.
///
/// When the proposed action is safe this is exactly the softmax of the
/// advantages, so the divergence term vanishes. Otherwise unsafe entries are
/// floored and the remaining mass is renormalized over safe actions,
/// preserving their ratios.
pub fn desired_distribution(verdict: &SafetyVerdict, advantages: &[f64]) -> Result<Vec<f64>> {
    if advantages.len() != verdict.assessment.unsafe_flags.len() {
        return Err(TrafficError::Config(format!(
            "advantage vector length {} does not match action count {}",
            advantages.len(),
            verdict.assessment.unsafe_flags.len()
        )));
    }
    let q = softmax(advantages)?;
    if !verdict.assessment.unsafe_flags[verdict.proposed] {
        return Ok(q);
    }
    let flags = &verdict.assessment.unsafe_flags;
    if flags.iter().all(|&b| b) {
        return Err(TrafficError::Config(
            "no safe action exists; the rule set must leave at least one".into(),
        ));
    }
    Ok(tsc_nn::redistribute_to_unflagged(&q, flags, KL_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs_with(foes: Vec<FoeSample>, p85: Option<f64>, lanes: usize) -> SafetyObservation {
        SafetyObservation {
            time_s: 0.0,
            lefts: vec![LeftObservation {
                movement: 0,
                mode: LeftMode::Permitted,
                foes,
                speed_85th_mps: p85,
                opposing_lanes_with_demand: lanes,
            }],
        }
    }

    fn contexts() -> Vec<ActionContext> {
        vec![
            ActionContext {
                exposed_lefts: vec![0],
                active_throughs: vec![1],
            },
            ActionContext::default(),
        ]
    }

    #[test]
    fn no_opposing_vehicles_means_all_safe() {
        let rules = SafetyConfig::default().rules;
        let a = assess(&rules, &obs_with(vec![], None, 1), &contexts(), 13.89);
        assert!(!a.any_unsafe());
    }

    #[test]
    fn fast_opposing_traffic_flags_permitted_left() {
        // 85th percentile above 45 mph (20.1168 m/s).
        let rules = SafetyConfig::default().rules;
        let a = assess(&rules, &obs_with(vec![], Some(22.0), 1), &contexts(), 25.0);
        assert!(a.unsafe_flags[0]);
        assert!(a.triggered[0].contains(&"speed_85th"));
        assert!(!a.unsafe_flags[1], "action exposing no left stays safe");
    }

    #[test]
    fn speed_rule_is_monotone_in_speed() {
        let rules = SafetyConfig::default().rules;
        let base = 20.2;
        let a = assess(&rules, &obs_with(vec![], Some(base), 1), &contexts(), 25.0);
        assert!(a.unsafe_flags[0]);
        for bump in [0.1, 1.0, 5.0] {
            let higher = assess(
                &rules,
                &obs_with(vec![], Some(base + bump), 1),
                &contexts(),
                25.0,
            );
            assert!(higher.unsafe_flags[0]);
        }
    }

    #[test]
    fn conflict_arrival_uses_speed_limit_bound() {
        let rules = SafetyConfig::default().rules;
        // Foe 50 m out with a 13.89 m/s limit: lower-bound arrival 3.6 s < 4.
        let foe = FoeSample {
            movement: 1,
            speed_mps: 5.0,
            dist_to_conflict_m: 50.0,
        };
        let a = assess(&rules, &obs_with(vec![foe], None, 1), &contexts(), 13.89);
        assert!(a.unsafe_flags[0]);
        let far = FoeSample {
            movement: 1,
            speed_mps: 13.89,
            dist_to_conflict_m: 60.0,
        };
        let b = assess(&rules, &obs_with(vec![far], None, 1), &contexts(), 13.89);
        assert!(!b.unsafe_flags[0]);
    }

    #[test]
    fn inactive_through_does_not_trigger_arrival_rule() {
        let rules = SafetyConfig::default().rules;
        let foe = FoeSample {
            movement: 5,
            speed_mps: 10.0,
            dist_to_conflict_m: 10.0,
        };
        // Context activates only movement 1; the foe is on movement 5.
        let a = assess(&rules, &obs_with(vec![foe], None, 1), &contexts(), 13.89);
        assert!(!a.unsafe_flags[0]);
    }

    #[test]
    fn empty_rule_set_is_all_safe() {
        let a = assess(&[], &obs_with(vec![], Some(30.0), 9), &contexts(), 13.89);
        assert!(!a.any_unsafe());
    }

    #[test]
    fn correction_is_identity_for_safe_actions() {
        let rules = SafetyConfig::default().rules;
        let obs = obs_with(vec![], None, 1);
        let v = evaluate(&rules, &obs, &contexts(), 13.89, 0);
        assert_eq!(v.corrected.index, 0);
        assert!(v.corrected.overrides.is_empty());
    }

    #[test]
    fn correction_keeps_action_and_reddens_the_left() {
        let rules = SafetyConfig::default().rules;
        let obs = obs_with(vec![], Some(25.0), 1);
        let v = evaluate(&rules, &obs, &contexts(), 25.0, 0);
        assert_eq!(v.corrected.index, 0);
        assert_eq!(v.corrected.overrides, vec![0]);
    }

    #[test]
    fn desired_distribution_passthrough_when_safe() {
        let rules = SafetyConfig::default().rules;
        let obs = obs_with(vec![], Some(25.0), 1);
        // Proposed action 1 exposes nothing, so it is safe even though
        // action 0 is flagged.
        let v = evaluate(&rules, &obs, &contexts(), 25.0, 1);
        let adv = [0.3, -0.7];
        let d = desired_distribution(&v, &adv).unwrap();
        assert_eq!(d, softmax(&adv).unwrap());
        let (kl, _) = tsc_nn::kl_divergence(&d, &softmax(&adv).unwrap()).unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn desired_distribution_shifts_mass_to_safe_actions() {
        let rules = SafetyConfig::default().rules;
        let obs = obs_with(vec![], Some(25.0), 1);
        let v = evaluate(&rules, &obs, &contexts(), 25.0, 0);
        let d = desired_distribution(&v, &[0.0, 0.0]).unwrap();
        assert!((d[0] - KL_FLOOR).abs() < 1e-15);
        assert!((d[1] - (1.0 - KL_FLOOR)).abs() < 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_nearest_rank_examples() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile_nearest_rank(&data, 85.0), Some(9.0));
        assert_eq!(percentile_nearest_rank(&data, 100.0), Some(10.0));
        assert_eq!(percentile_nearest_rank(&[], 85.0), None);
    }
}
