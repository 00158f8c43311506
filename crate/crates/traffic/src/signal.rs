//! Signal phase machinery: cyclic and acyclic action spaces, yellow-change
//! and all-red insertion, permitted/protected left semantics, and the
//! fixed-time controller.

use serde::{Deserialize, Serialize};

use crate::geometry::{Geometry, MovementId};
use crate::{Result, TrafficError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indication {
    ProtectedGreen,
    PermittedGreen,
    Yellow,
    Red,
}

impl Indication {
    pub fn is_green(self) -> bool {
        matches!(self, Indication::ProtectedGreen | Indication::PermittedGreen)
    }

    pub fn code(self) -> char {
        match self {
            Indication::ProtectedGreen => 'G',
            Indication::PermittedGreen => 'g',
            Indication::Yellow => 'y',
            Indication::Red => 'r',
        }
    }

    pub fn from_code(c: char) -> Option<Indication> {
        match c {
            'G' => Some(Indication::ProtectedGreen),
            'g' => Some(Indication::PermittedGreen),
            'y' => Some(Indication::Yellow),
            'r' => Some(Indication::Red),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Green,
    Yellow,
    AllRed,
}

/// A set of movements granted right-of-way together. Permitted movements
/// proceed by yielding during the phase's green.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseDef {
    pub label: String,
    pub protected: Vec<MovementId>,
    pub permitted: Vec<MovementId>,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

/// Fixed-order cycle; only durations change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicPlan {
    pub durations_s: Vec<f64>,
    pub yellow_s: f64,
    pub all_red_s: f64,
}

impl CyclicPlan {
    pub fn cycle_length_s(&self, phase_count: usize) -> f64 {
        let greens: f64 = self.durations_s.iter().sum();
        greens + phase_count as f64 * (self.yellow_s + self.all_red_s)
    }
}

/// Validates the phase table against the conflict matrix.
///
/// Protected movements of one phase must be mutually conflict-free, and a
/// permitted movement must have a live conflict with some protected movement
/// of the same phase (otherwise it would simply be protected).
pub fn validate_phases(geometry: &Geometry, phases: &[PhaseDef]) -> Result<()> {
    for phase in phases {
        for (i, &a) in phase.protected.iter().enumerate() {
            for &b in &phase.protected[i + 1..] {
                if geometry.conflict(a, b).is_some() {
                    return Err(TrafficError::Config(format!(
                        "phase {}: protected movements {} and {} conflict",
                        phase.label, geometry.movements[a].label, geometry.movements[b].label
                    )));
                }
            }
        }
        for &m in &phase.permitted {
            let yields_to_green = phase
                .protected
                .iter()
                .any(|&g| geometry.conflict(m, g).is_some());
            if !yields_to_green {
                return Err(TrafficError::Config(format!(
                    "phase {}: permitted movement {} conflicts with no green movement",
                    phase.label, geometry.movements[m].label
                )));
            }
        }
        if phase.min_duration_s > phase.max_duration_s {
            return Err(TrafficError::Config(format!(
                "phase {}: min duration exceeds max",
                phase.label
            )));
        }
    }
    Ok(())
}

/// Agent-facing action, cyclic or acyclic depending on the run mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Adjust one phase duration in the plan for the next cycle.
    Cyclic { phase: usize, delta_steps: i8 },
    /// Run phase `phase` for the fixed execution time.
    Acyclic { phase: usize },
}

pub const CYCLIC_DELTA_S: f64 = 5.0;

/// Cyclic action indices: 0 is the shared no-op, then (phase, +step) and
/// (phase, -step) pairs. 2 * phases + 1 actions in total.
pub fn cyclic_action_count(phase_count: usize) -> usize {
    2 * phase_count + 1
}

pub fn cyclic_action_from_index(index: usize, phase_count: usize) -> Option<Action> {
    if index == 0 {
        return Some(Action::Cyclic { phase: 0, delta_steps: 0 });
    }
    let i = index - 1;
    if i >= 2 * phase_count {
        return None;
    }
    let phase = i / 2;
    let delta_steps = if i % 2 == 0 { 1 } else { -1 };
    Some(Action::Cyclic { phase, delta_steps })
}

pub fn acyclic_action_from_index(index: usize, phase_count: usize) -> Option<Action> {
    (index < phase_count).then_some(Action::Acyclic { phase: index })
}

/// Applies a cyclic adjustment: the selected duration moves by
/// `delta_steps * CYCLIC_DELTA_S`, clamped into `[min, max]`. Other phases
/// are untouched.
pub fn apply_cyclic_action(plan: &CyclicPlan, phases: &[PhaseDef], action: Action) -> Result<CyclicPlan> {
    let Action::Cyclic { phase, delta_steps } = action else {
        return Err(TrafficError::Config("apply_cyclic_action needs a cyclic action".into()));
    };
    if phase >= plan.durations_s.len() {
        return Err(TrafficError::UnknownPhase(phase));
    }
    let mut next = plan.clone();
    let def = &phases[phase];
    let d = next.durations_s[phase] + f64::from(delta_steps) * CYCLIC_DELTA_S;
    next.durations_s[phase] = d.clamp(def.min_duration_s, def.max_duration_s);
    Ok(next)
}

/// Per-movement indications at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicationFrame {
    pub interval: IntervalKind,
    pub active_phase: usize,
    pub time_in_interval_s: f64,
    indications: Vec<Indication>,
    /// Safety overrides: permitted greens forced red, one flag per movement.
    overrides: Vec<bool>,
}

impl IndicationFrame {
    /// Indication for one movement, with any permitted-left override applied.
    pub fn indication(&self, movement: MovementId) -> Indication {
        let base = self.indications[movement];
        if self.overrides[movement] && base == Indication::PermittedGreen {
            Indication::Red
        } else {
            base
        }
    }

    pub fn base_indication(&self, movement: MovementId) -> Indication {
        self.indications[movement]
    }

    pub fn overridden(&self, movement: MovementId) -> bool {
        self.overrides[movement] && self.indications[movement] == Indication::PermittedGreen
    }

    pub fn set_override(&mut self, movement: MovementId, on: bool) {
        self.overrides[movement] = on;
    }

    pub fn movement_count(&self) -> usize {
        self.indications.len()
    }

    /// Compact per-movement code string, e.g. `GgrrYy...`, post-override.
    pub fn code_string(&self) -> String {
        (0..self.indications.len())
            .map(|m| self.indication(m).code())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Fixed,
    Cyclic,
    Acyclic,
}

#[derive(Clone, Debug)]
enum EngineState {
    /// Fixed and cyclic modes walk phase-by-phase through the plan.
    InCycle {
        phase: usize,
        interval: IntervalKind,
        elapsed_s: f64,
    },
    /// Acyclic mode executes a queue of scheduled intervals.
    Scheduled {
        queue: std::collections::VecDeque<(IntervalKind, usize, f64)>,
        elapsed_s: f64,
    },
}

/// Deterministic signal state machine.
///
/// In `Fixed` mode it cycles forever on preset timings. In `Cyclic` mode it
/// requests one action per completed cycle, which adjusts one phase duration
/// of the next cycle. In `Acyclic` mode it requests an action every fixed
/// execution interval; phase changes insert yellow then all-red.
#[derive(Clone, Debug)]
pub struct SignalEngine {
    phases: Vec<PhaseDef>,
    plan: CyclicPlan,
    mode: ControlMode,
    acyclic_exec_s: f64,
    state: EngineState,
    movement_count: usize,
    pending_decision: bool,
    /// Count of completed green->yellow->all-red phase transitions.
    transitions: u64,
}

impl SignalEngine {
    pub fn new(
        geometry: &Geometry,
        phases: Vec<PhaseDef>,
        plan: CyclicPlan,
        mode: ControlMode,
        acyclic_exec_s: f64,
    ) -> Result<Self> {
        validate_phases(geometry, &phases)?;
        if plan.durations_s.len() != phases.len() {
            return Err(TrafficError::Config(format!(
                "plan has {} durations for {} phases",
                plan.durations_s.len(),
                phases.len()
            )));
        }
        for (i, &d) in plan.durations_s.iter().enumerate() {
            if d < phases[i].min_duration_s || d > phases[i].max_duration_s {
                return Err(TrafficError::Config(format!(
                    "phase {} duration {} outside [{}, {}]",
                    phases[i].label, d, phases[i].min_duration_s, phases[i].max_duration_s
                )));
            }
        }
        let state = match mode {
            ControlMode::Fixed | ControlMode::Cyclic => EngineState::InCycle {
                phase: 0,
                interval: IntervalKind::Green,
                elapsed_s: 0.0,
            },
            ControlMode::Acyclic => EngineState::Scheduled {
                queue: std::collections::VecDeque::from([(IntervalKind::Green, 0, acyclic_exec_s)]),
                elapsed_s: 0.0,
            },
        };
        Ok(SignalEngine {
            movement_count: geometry.movement_count(),
            phases,
            plan,
            mode,
            acyclic_exec_s,
            state,
            pending_decision: false,
            transitions: 0,
        })
    }

    pub fn phases(&self) -> &[PhaseDef] {
        &self.phases
    }

    pub fn plan(&self) -> &CyclicPlan {
        &self.plan
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn action_count(&self) -> usize {
        match self.mode {
            ControlMode::Fixed => 0,
            ControlMode::Cyclic => cyclic_action_count(self.phases.len()),
            ControlMode::Acyclic => self.phases.len(),
        }
    }

    pub fn action_from_index(&self, index: usize) -> Option<Action> {
        match self.mode {
            ControlMode::Fixed => None,
            ControlMode::Cyclic => cyclic_action_from_index(index, self.phases.len()),
            ControlMode::Acyclic => acyclic_action_from_index(index, self.phases.len()),
        }
    }

    /// True when the controller is waiting for an agent decision.
    pub fn needs_decision(&self) -> bool {
        self.pending_decision
    }

    pub fn transitions(&self) -> u64 {
        self.transitions
    }

    /// Applies the agent's action. Cyclic actions reshape next cycle's plan;
    /// acyclic actions schedule the next interval sequence.
    pub fn apply_action(&mut self, action: Action) -> Result<()> {
        match (self.mode, action) {
            (ControlMode::Cyclic, Action::Cyclic { .. }) => {
                self.plan = apply_cyclic_action(&self.plan, &self.phases, action)?;
                self.pending_decision = false;
                Ok(())
            }
            (ControlMode::Acyclic, Action::Acyclic { phase }) => {
                if phase >= self.phases.len() {
                    return Err(TrafficError::UnknownPhase(phase));
                }
                let current = self.active_phase();
                let exec = self.acyclic_exec_s;
                let (yellow, all_red) = (self.plan.yellow_s, self.plan.all_red_s);
                let EngineState::Scheduled { queue, .. } = &mut self.state else {
                    unreachable!("acyclic engine uses scheduled state");
                };
                // The exhausted green that triggered this decision is still
                // at the front; replace it with the new schedule.
                if self.pending_decision {
                    queue.pop_front();
                }
                if phase == current {
                    queue.push_back((IntervalKind::Green, phase, exec));
                } else {
                    queue.push_back((IntervalKind::Yellow, current, yellow));
                    queue.push_back((IntervalKind::AllRed, current, all_red));
                    queue.push_back((IntervalKind::Green, phase, exec));
                }
                self.pending_decision = false;
                Ok(())
            }
            _ => Err(TrafficError::Config(
                "action variant does not match the control mode".into(),
            )),
        }
    }

    pub fn active_phase(&self) -> usize {
        match &self.state {
            EngineState::InCycle { phase, .. } => *phase,
            EngineState::Scheduled { queue, .. } => queue.front().map_or(0, |f| f.1),
        }
    }

    fn interval_duration(&self, phase: usize, interval: IntervalKind) -> f64 {
        match interval {
            IntervalKind::Green => self.plan.durations_s[phase],
            IntervalKind::Yellow => self.plan.yellow_s,
            IntervalKind::AllRed => self.plan.all_red_s,
        }
    }

    /// Builds the indication frame for the current instant.
    pub fn frame(&self) -> IndicationFrame {
        let (phase, interval, elapsed) = match &self.state {
            EngineState::InCycle {
                phase,
                interval,
                elapsed_s,
            } => (*phase, *interval, *elapsed_s),
            EngineState::Scheduled { queue, elapsed_s } => {
                let front = queue.front().expect("schedule never empty");
                (front.1, front.0, *elapsed_s)
            }
        };
        let mut indications = vec![Indication::Red; self.movement_count];
        let def = &self.phases[phase];
        match interval {
            IntervalKind::Green => {
                for &m in &def.protected {
                    indications[m] = Indication::ProtectedGreen;
                }
                for &m in &def.permitted {
                    indications[m] = Indication::PermittedGreen;
                }
            }
            IntervalKind::Yellow => {
                for &m in def.protected.iter().chain(&def.permitted) {
                    indications[m] = Indication::Yellow;
                }
            }
            IntervalKind::AllRed => {}
        }
        IndicationFrame {
            interval,
            active_phase: phase,
            time_in_interval_s: elapsed,
            indications,
            overrides: vec![false; self.movement_count],
        }
    }

    /// Advances the state machine by `dt`. Returns true if a decision point
    /// was reached (cycle completed / acyclic interval exhausted).
    pub fn advance(&mut self, dt: f64) -> bool {
        if self.pending_decision {
            return true;
        }
        match &mut self.state {
            EngineState::InCycle {
                phase,
                interval,
                elapsed_s,
            } => {
                *elapsed_s += dt;
                let duration = match *interval {
                    IntervalKind::Green => self.plan.durations_s[*phase],
                    IntervalKind::Yellow => self.plan.yellow_s,
                    IntervalKind::AllRed => self.plan.all_red_s,
                };
                if *elapsed_s + 1e-9 >= duration {
                    *elapsed_s = 0.0;
                    match *interval {
                        IntervalKind::Green => *interval = IntervalKind::Yellow,
                        IntervalKind::Yellow => *interval = IntervalKind::AllRed,
                        IntervalKind::AllRed => {
                            self.transitions += 1;
                            *interval = IntervalKind::Green;
                            let next = (*phase + 1) % self.phases.len();
                            *phase = next;
                            if next == 0 && self.mode == ControlMode::Cyclic {
                                self.pending_decision = true;
                            }
                        }
                    }
                }
            }
            EngineState::Scheduled { queue, elapsed_s } => {
                *elapsed_s += dt;
                let front = *queue.front().expect("schedule never empty");
                if *elapsed_s + 1e-9 >= front.2 {
                    *elapsed_s = 0.0;
                    if front.0 == IntervalKind::AllRed {
                        self.transitions += 1;
                    }
                    if queue.len() > 1 {
                        queue.pop_front();
                    } else {
                        // Last scheduled interval exhausted: hold and ask.
                        self.pending_decision = true;
                    }
                }
            }
        }
        self.pending_decision
    }

    /// Left movements whose permitted green would be enabled (acyclic) or
    /// whose permitted exposure would increase (cyclic) by each action.
    /// Index 0..action_count.
    pub fn action_exposures(&self) -> Vec<Vec<MovementId>> {
        match self.mode {
            ControlMode::Fixed => Vec::new(),
            ControlMode::Acyclic => self
                .phases
                .iter()
                .map(|p| p.permitted.clone())
                .collect(),
            ControlMode::Cyclic => {
                let n = cyclic_action_count(self.phases.len());
                (0..n)
                    .map(|i| match cyclic_action_from_index(i, self.phases.len()) {
                        Some(Action::Cyclic { phase, delta_steps }) if delta_steps > 0 => {
                            self.phases[phase].permitted.clone()
                        }
                        _ => Vec::new(),
                    })
                    .collect()
            }
        }
    }
}

/// Closed-form fixed-time schedule: the indication frame at absolute time
/// `t` for a plan cycled from `t = 0`. Oracle counterpart of running the
/// engine tick by tick.
pub fn fixed_time_frame_at(
    phases: &[PhaseDef],
    plan: &CyclicPlan,
    movement_count: usize,
    t: f64,
) -> (usize, IntervalKind) {
    let cycle = plan.cycle_length_s(phases.len());
    let mut rem = t % cycle;
    let _ = movement_count;
    for (i, &d) in plan.durations_s.iter().enumerate() {
        if rem < d {
            return (i, IntervalKind::Green);
        }
        rem -= d;
        if rem < plan.yellow_s {
            return (i, IntervalKind::Yellow);
        }
        rem -= plan.yellow_s;
        if rem < plan.all_red_s {
            return (i, IntervalKind::AllRed);
        }
        rem -= plan.all_red_s;
    }
    (0, IntervalKind::Green)
}
