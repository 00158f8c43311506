//! Signal machinery: plan adjustment, acyclic scheduling, fixed-time
//! periodicity, and conflict exclusion over generated timelines.

use proptest::prelude::*;
use tsc_nn::SeededRng;
use tsc_traffic::signal::{
    apply_cyclic_action, cyclic_action_count, cyclic_action_from_index, fixed_time_frame_at,
    Action, ControlMode, Indication, IntervalKind, SignalEngine,
};
use tsc_traffic::Scenario;

fn synthetic() -> Scenario {
    Scenario::builtin("synthetic-4x12").unwrap().unwrap()
}

fn engine(mode: ControlMode) -> (Scenario, SignalEngine) {
    let s = synthetic();
    let e = SignalEngine::new(
        &s.geometry,
        s.phases.clone(),
        s.initial_plan.clone(),
        mode,
        s.acyclic_exec_s,
    )
    .unwrap();
    (s, e)
}

#[test]
fn cyclic_action_indexing_covers_nine_actions() {
    assert_eq!(cyclic_action_count(4), 9);
    assert_eq!(
        cyclic_action_from_index(0, 4),
        Some(Action::Cyclic { phase: 0, delta_steps: 0 })
    );
    let mut seen = std::collections::HashSet::new();
    for i in 0..9 {
        seen.insert(format!("{:?}", cyclic_action_from_index(i, 4).unwrap()));
    }
    assert_eq!(seen.len(), 9);
    assert_eq!(cyclic_action_from_index(9, 4), None);
}

#[test]
fn zero_delta_leaves_plan_unchanged() {
    let s = synthetic();
    let next = apply_cyclic_action(
        &s.initial_plan,
        &s.phases,
        Action::Cyclic { phase: 2, delta_steps: 0 },
    )
    .unwrap();
    assert_eq!(next, s.initial_plan);
}

#[test]
fn positive_delta_moves_duration_within_max() {
    let s = synthetic();
    let next = apply_cyclic_action(
        &s.initial_plan,
        &s.phases,
        Action::Cyclic { phase: 0, delta_steps: 1 },
    )
    .unwrap();
    assert_eq!(next.durations_s[0], 35.0);
    for other in 1..4 {
        assert_eq!(next.durations_s[other], s.initial_plan.durations_s[other]);
    }
}

#[test]
fn clamped_at_min_and_idempotent() {
    let s = synthetic();
    let mut plan = s.initial_plan.clone();
    plan.durations_s[1] = 10.0; // already at min
    let once = apply_cyclic_action(&plan, &s.phases, Action::Cyclic { phase: 1, delta_steps: -1 }).unwrap();
    assert_eq!(once.durations_s[1], 10.0);
    let twice =
        apply_cyclic_action(&once, &s.phases, Action::Cyclic { phase: 1, delta_steps: -1 }).unwrap();
    assert_eq!(once, twice, "clamped action must be idempotent");
}

#[test]
fn fixed_time_cycle_length_matches_sum() {
    let s = synthetic();
    let mut plan = s.initial_plan.clone();
    plan.durations_s = vec![30.0, 15.0, 30.0, 15.0];
    assert_eq!(plan.cycle_length_s(4), 110.0);
}

#[test]
fn fixed_time_is_periodic() {
    let (s, mut eng) = engine(ControlMode::Fixed);
    let cycle = s.initial_plan.cycle_length_s(s.phases.len()) as usize;
    let mut frames = Vec::new();
    for _ in 0..(3 * cycle) {
        frames.push(eng.frame().code_string());
        eng.advance(1.0);
    }
    for t in 0..cycle {
        assert_eq!(frames[t], frames[t + cycle], "t={t}");
        assert_eq!(frames[t], frames[t + 2 * cycle], "t={t}");
    }
}

#[test]
fn fixed_time_engine_matches_closed_form_schedule() {
    let (s, mut eng) = engine(ControlMode::Fixed);
    for t in 0..3600 {
        let frame = eng.frame();
        let (phase, interval) =
            fixed_time_frame_at(&s.phases, &s.initial_plan, s.geometry.movement_count(), t as f64);
        assert_eq!(frame.active_phase, phase, "t={t}");
        assert_eq!(frame.interval, interval, "t={t}");
        eng.advance(1.0);
    }
}

#[test]
fn acyclic_same_phase_extends_without_yellow() {
    let (_, mut eng) = engine(ControlMode::Acyclic);
    for _ in 0..10 {
        assert!(!eng.needs_decision());
        eng.advance(1.0);
    }
    assert!(eng.needs_decision());
    eng.apply_action(Action::Acyclic { phase: 0 }).unwrap();
    // Green continues seamlessly.
    for _ in 0..10 {
        let f = eng.frame();
        assert_eq!(f.interval, IntervalKind::Green);
        assert_eq!(f.active_phase, 0);
        eng.advance(1.0);
    }
    assert!(eng.needs_decision());
}

#[test]
fn acyclic_phase_change_inserts_yellow_then_all_red() {
    let (_, mut eng) = engine(ControlMode::Acyclic);
    for _ in 0..10 {
        eng.advance(1.0);
    }
    assert!(eng.needs_decision());
    eng.apply_action(Action::Acyclic { phase: 2 }).unwrap();
    let mut seq = Vec::new();
    for _ in 0..15 {
        let f = eng.frame();
        seq.push((f.interval, f.active_phase));
        eng.advance(1.0);
    }
    // 3 s yellow and 2 s all-red on the outgoing phase, then 10 s green.
    let expect: Vec<(IntervalKind, usize)> = std::iter::repeat_n((IntervalKind::Yellow, 0), 3)
        .chain(std::iter::repeat_n((IntervalKind::AllRed, 0), 2))
        .chain(std::iter::repeat_n((IntervalKind::Green, 2), 10))
        .collect();
    assert_eq!(seq, expect);
}

#[test]
fn acyclic_rejects_unknown_phase() {
    let (_, mut eng) = engine(ControlMode::Acyclic);
    for _ in 0..10 {
        eng.advance(1.0);
    }
    assert!(eng.apply_action(Action::Acyclic { phase: 99 }).is_err());
}

#[test]
fn no_conflicting_protected_greens_under_random_acyclic_control() {
    let s = synthetic();
    for seed in 0..10 {
        let mut eng = SignalEngine::new(
            &s.geometry,
            s.phases.clone(),
            s.initial_plan.clone(),
            ControlMode::Acyclic,
            s.acyclic_exec_s,
        )
        .unwrap();
        let mut rng = SeededRng::new(seed);
        for _ in 0..2000 {
            if eng.needs_decision() {
                let phase = rng.gen_range_usize(s.phases.len());
                eng.apply_action(Action::Acyclic { phase }).unwrap();
            }
            let frame = eng.frame();
            let greens: Vec<usize> = (0..s.geometry.movement_count())
                .filter(|&m| frame.indication(m) == Indication::ProtectedGreen)
                .collect();
            for (i, &a) in greens.iter().enumerate() {
                for &b in &greens[i + 1..] {
                    assert!(
                        s.geometry.conflict(a, b).is_none(),
                        "conflicting protected greens {a} and {b}"
                    );
                }
            }
            eng.advance(1.0);
        }
    }
}

#[test]
fn phase_changes_are_separated_by_yellow_plus_all_red() {
    // Every maximal yellow run lasts exactly yellow_s and is followed by at
    // least all_red_s of red for that movement, in both control modes.
    let s = synthetic();
    for mode in [ControlMode::Fixed, ControlMode::Acyclic] {
        let mut eng = SignalEngine::new(
            &s.geometry,
            s.phases.clone(),
            s.initial_plan.clone(),
            mode,
            s.acyclic_exec_s,
        )
        .unwrap();
        let mut rng = SeededRng::new(7);
        let mut history: Vec<String> = Vec::new();
        for _ in 0..1500 {
            if eng.needs_decision() {
                let phase = rng.gen_range_usize(s.phases.len());
                eng.apply_action(Action::Acyclic { phase }).unwrap();
            }
            history.push(eng.frame().code_string());
            eng.advance(1.0);
        }
        for m in 0..s.geometry.movement_count() {
            let codes: Vec<char> = history.iter().map(|h| h.chars().nth(m).unwrap()).collect();
            let mut t = 0;
            while t < codes.len() {
                if codes[t] == 'y' {
                    let start = t;
                    while t < codes.len() && codes[t] == 'y' {
                        t += 1;
                    }
                    let run = t - start;
                    if t + 2 <= codes.len() {
                        assert_eq!(run, 3, "movement {m}: yellow run of {run} ticks");
                        assert_eq!(codes[t], 'r');
                        assert_eq!(codes[t + 1], 'r');
                    }
                } else {
                    t += 1;
                }
            }
        }
    }
}

#[test]
fn permitted_left_override_reddens_only_that_movement() {
    let s = synthetic();
    let eng = SignalEngine::new(
        &s.geometry,
        s.phases.clone(),
        s.initial_plan.clone(),
        ControlMode::Fixed,
        s.acyclic_exec_s,
    )
    .unwrap();
    let mut frame = eng.frame();
    let nl = s.geometry.movement_by_label("N_L").unwrap();
    let sl = s.geometry.movement_by_label("S_L").unwrap();
    let nt = s.geometry.movement_by_label("N_T").unwrap();
    assert_eq!(frame.indication(nl), Indication::PermittedGreen);
    assert_eq!(frame.indication(nt), Indication::ProtectedGreen);
    frame.set_override(nl, true);
    assert_eq!(frame.indication(nl), Indication::Red);
    assert_eq!(frame.indication(sl), Indication::PermittedGreen);
    assert_eq!(frame.indication(nt), Indication::ProtectedGreen);
    // Overrides only bite on permitted green.
    frame.set_override(nt, true);
    assert_eq!(frame.indication(nt), Indication::ProtectedGreen);
}

#[test]
fn cyclic_engine_requests_one_decision_per_cycle() {
    let (s, mut eng) = engine(ControlMode::Cyclic);
    let cycle = s.initial_plan.cycle_length_s(4) as usize;
    let mut decisions = 0;
    for _ in 0..=(3 * cycle) {
        if eng.needs_decision() {
            decisions += 1;
            eng.apply_action(Action::Cyclic { phase: 0, delta_steps: 0 }).unwrap();
        }
        eng.advance(1.0);
    }
    assert_eq!(decisions, 3);
}

proptest! {
    #[test]
    fn cyclic_durations_stay_in_bounds_under_any_action_sequence(
        actions in proptest::collection::vec(0usize..9, 1..60),
    ) {
        let s = synthetic();
        let mut plan = s.initial_plan.clone();
        for idx in actions {
            let action = cyclic_action_from_index(idx, 4).unwrap();
            plan = apply_cyclic_action(&plan, &s.phases, action).unwrap();
            for (i, &d) in plan.durations_s.iter().enumerate() {
                prop_assert!(d >= s.phases[i].min_duration_s);
                prop_assert!(d <= s.phases[i].max_duration_s);
            }
        }
    }
}
