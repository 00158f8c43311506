//! Rule-engine oracles: predicate-enumeration equivalence, correction
//! closure, and the renormalized safe advantage distribution.

use tsc_nn::{kl_divergence, softmax, SeededRng, KL_FLOOR};
use tsc_traffic::safety::{
    assess, desired_distribution, evaluate, observe, tick_overrides, ActionContext, FoeSample,
    LeftMode, LeftObservation, RuleConfig, SafetyConfig, SafetyObservation, SpeedTracker,
};
use tsc_traffic::signal::{ControlMode, Indication, SignalEngine};
use tsc_traffic::sim::Simulation;
use tsc_traffic::Scenario;

fn synthetic() -> Scenario {
    Scenario::builtin("synthetic-4x12").unwrap().unwrap()
}

fn random_observation(rng: &mut SeededRng, lefts: usize) -> SafetyObservation {
    SafetyObservation {
        time_s: 0.0,
        lefts: (0..lefts)
            .map(|i| {
                let foe_count = rng.gen_range_usize(4);
                LeftObservation {
                    movement: i,
                    mode: LeftMode::Permitted,
                    foes: (0..foe_count)
                        .map(|_| FoeSample {
                            movement: lefts + rng.gen_range_usize(3),
                            speed_mps: rng.uniform(0.0, 25.0),
                            dist_to_conflict_m: rng.uniform(0.0, 150.0),
                        })
                        .collect(),
                    speed_85th_mps: if rng.next_f64() < 0.5 {
                        Some(rng.uniform(0.0, 30.0))
                    } else {
                        None
                    },
                    opposing_lanes_with_demand: rng.gen_range_usize(5),
                }
            })
            .collect(),
    }
}

fn random_contexts(rng: &mut SeededRng, lefts: usize, actions: usize) -> Vec<ActionContext> {
    (0..actions)
        .map(|_| ActionContext {
            exposed_lefts: (0..lefts).filter(|_| rng.next_f64() < 0.5).collect(),
            active_throughs: (lefts..lefts + 3).filter(|_| rng.next_f64() < 0.7).collect(),
        })
        .collect()
}

/// Independent re-evaluation of every rule predicate on every action.
fn brute_force_flags(
    rules: &[RuleConfig],
    obs: &SafetyObservation,
    contexts: &[ActionContext],
    vmax: f64,
) -> Vec<bool> {
    contexts
        .iter()
        .map(|ctx| {
            obs.lefts.iter().any(|left| {
                if !ctx.exposed_lefts.contains(&left.movement) {
                    return false;
                }
                rules.iter().any(|rule| match rule {
                    RuleConfig::Speed85th { threshold_mps, enabled } => {
                        *enabled && left.speed_85th_mps.map_or(false, |v| v > *threshold_mps)
                    }
                    RuleConfig::ConflictArrival { horizon_s, enabled } => {
                        *enabled
                            && left.foes.iter().any(|f| {
                                ctx.active_throughs.contains(&f.movement)
                                    && f.dist_to_conflict_m / vmax < *horizon_s
                            })
                    }
                    RuleConfig::OpposingLanes { min_lanes, enabled } => {
                        *enabled && left.opposing_lanes_with_demand >= *min_lanes
                    }
                })
            })
        })
        .collect()
}

#[test]
fn flags_equal_predicate_enumeration_on_random_observations() {
    let rules = SafetyConfig::default().rules;
    let mut rng = SeededRng::new(31);
    for _ in 0..500 {
        let obs = random_observation(&mut rng, 4);
        let contexts = random_contexts(&mut rng, 4, 9);
        let got = assess(&rules, &obs, &contexts, 13.89);
        let expect = brute_force_flags(&rules, &obs, &contexts, 13.89);
        assert_eq!(got.unsafe_flags, expect);
    }
}

#[test]
fn verdicts_are_deterministic() {
    let rules = SafetyConfig::default().rules;
    let mut rng1 = SeededRng::new(8);
    let mut rng2 = SeededRng::new(8);
    for _ in 0..50 {
        let o1 = random_observation(&mut rng1, 3);
        let o2 = random_observation(&mut rng2, 3);
        let c1 = random_contexts(&mut rng1, 3, 4);
        let c2 = random_contexts(&mut rng2, 3, 4);
        let a1 = assess(&rules, &o1, &c1, 13.89);
        let a2 = assess(&rules, &o2, &c2, 13.89);
        assert_eq!(a1, a2);
    }
}

#[test]
fn corrected_actions_are_always_safe_on_reevaluation() {
    // Closure: applying the correction's overrides removes the exposed
    // lefts, and re-assessing the corrected exposure reports safe.
    let rules = SafetyConfig::default().rules;
    let mut rng = SeededRng::new(77);
    for _ in 0..300 {
        let obs = random_observation(&mut rng, 4);
        let contexts = random_contexts(&mut rng, 4, 6);
        let proposed = rng.gen_range_usize(6);
        let verdict = evaluate(&rules, &obs, &contexts, 13.89, proposed);
        assert_eq!(verdict.corrected.index, proposed, "phase identity preserved");
        // Remove overridden lefts from the executed exposure and re-check.
        let mut corrected_ctx = contexts[proposed].clone();
        corrected_ctx
            .exposed_lefts
            .retain(|m| !verdict.corrected.overrides.contains(m));
        let re = assess(&rules, &obs, &[corrected_ctx], 13.89);
        assert!(!re.unsafe_flags[0], "corrected action must re-evaluate safe");
        if !verdict.assessment.unsafe_flags[proposed] {
            assert!(verdict.corrected.overrides.is_empty(), "safe actions pass through");
        }
    }
}

#[test]
fn desired_distribution_matches_renormalization_oracle() {
    let rules = SafetyConfig::default().rules;
    let mut rng = SeededRng::new(15);
    let mut saw_unsafe = 0;
    for _ in 0..500 {
        let obs = random_observation(&mut rng, 4);
        let contexts = random_contexts(&mut rng, 4, 6);
        let proposed = rng.gen_range_usize(6);
        let verdict = evaluate(&rules, &obs, &contexts, 13.89, proposed);
        let adv: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        if verdict.assessment.unsafe_flags.iter().all(|&b| b) {
            assert!(desired_distribution(&verdict, &adv).is_err());
            continue;
        }
        let d = desired_distribution(&verdict, &adv).unwrap();
        let q = softmax(&adv).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if !verdict.assessment.unsafe_flags[proposed] {
            assert_eq!(d, q, "safe proposal passes the agent's own distribution through");
            continue;
        }
        saw_unsafe += 1;
        let flags = &verdict.assessment.unsafe_flags;
        let k = flags.iter().filter(|&&b| b).count();
        let unsafe_mass: f64 = d.iter().zip(flags).filter(|(_, &f)| f).map(|(v, _)| v).sum();
        assert!(unsafe_mass <= k as f64 * KL_FLOOR + 1e-15);
        // Safe-entry ratios preserved (oracle: direct renormalization).
        let safe_mass: f64 = q.iter().zip(flags).filter(|(_, &f)| !f).map(|(v, _)| v).sum();
        for i in 0..6 {
            if !flags[i] {
                let expect = q[i] * (1.0 - k as f64 * KL_FLOOR) / safe_mass;
                assert!((d[i] - expect).abs() < 1e-12);
            }
        }
        // And the KL against the agent's own distribution is positive.
        let q_floored = tsc_nn::floor_distribution(&q, KL_FLOOR);
        let (kl, _) = kl_divergence(&d, &q_floored).unwrap();
        assert!(kl > 0.0);
    }
    assert!(saw_unsafe > 20, "random scenarios must exercise the unsafe path");
}

#[test]
fn kl_zero_iff_proposed_action_safe() {
    let rules = SafetyConfig::default().rules;
    let mut rng = SeededRng::new(99);
    for _ in 0..300 {
        let obs = random_observation(&mut rng, 3);
        let contexts = random_contexts(&mut rng, 3, 5);
        let proposed = rng.gen_range_usize(5);
        let verdict = evaluate(&rules, &obs, &contexts, 13.89, proposed);
        if verdict.assessment.unsafe_flags.iter().all(|&b| b) {
            continue;
        }
        let adv: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let d = desired_distribution(&verdict, &adv).unwrap();
        let q = tsc_nn::floor_distribution(&softmax(&adv).unwrap(), KL_FLOOR);
        let d_floored = tsc_nn::floor_distribution(&d, KL_FLOOR);
        let (kl, _) = kl_divergence(&d_floored, &q).unwrap();
        if verdict.assessment.unsafe_flags[proposed] {
            assert!(kl > 1e-5, "unsafe proposal must produce positive divergence");
        } else {
            assert!(kl <= 1e-5, "safe proposal must produce zero divergence, got {kl}");
        }
    }
}

#[test]
fn observation_derives_from_simulation_deterministically() {
    let s = synthetic();
    let mut sim = Simulation::new(s.geometry.clone(), s.demand.clone(), 5);
    let mut engine = SignalEngine::new(
        &s.geometry,
        s.phases.clone(),
        s.initial_plan.clone(),
        ControlMode::Fixed,
        s.acyclic_exec_s,
    )
    .unwrap();
    let mut tracker = SpeedTracker::new(&s.safety, &s.geometry);
    for _ in 0..120 {
        let frame = engine.frame();
        sim.step(&frame, 1.0);
        tracker.observe(&sim);
        engine.advance(1.0);
    }
    let frame = engine.frame();
    let a = observe(&sim, &frame, &tracker);
    let b = observe(&sim, &frame, &tracker);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a.lefts.len(), 4, "one observation per left movement");
    // Synthetic approaches have a single opposing through lane, so the
    // multi-lane rule can never fire there.
    assert!(a.lefts.iter().all(|l| l.opposing_lanes_with_demand <= 1));
}

#[test]
fn tick_overrides_cover_exactly_triggered_permitted_lefts() {
    let s = synthetic();
    let mut sim = Simulation::new(s.geometry.clone(), s.demand.clone(), 2);
    let mut engine = SignalEngine::new(
        &s.geometry,
        s.phases.clone(),
        s.initial_plan.clone(),
        ControlMode::Fixed,
        s.acyclic_exec_s,
    )
    .unwrap();
    let tracker = SpeedTracker::new(&s.safety, &s.geometry);
    let nl = s.geometry.movement_by_label("N_L").unwrap();
    let st = s.geometry.movement_by_label("S_T").unwrap();
    // Opposing through bearing down on the conflict point.
    sim.place_vehicle(st, 80.0, 13.0, false, None);
    let frame = engine.frame();
    let obs = observe(&sim, &frame, &tracker);
    let overrides = tick_overrides(&s.safety.rules, &obs, &frame, s.geometry.speed_limit_mps);
    assert!(overrides.contains(&nl), "N_L faces an imminent foe");
    // S_L's foe is N_T traffic, none present.
    let sl = s.geometry.movement_by_label("S_L").unwrap();
    assert!(!overrides.contains(&sl));
    // During the lefts' protected phase nothing is permitted, so no overrides.
    for _ in 0..36 {
        engine.advance(1.0);
    }
    let frame2 = engine.frame();
    assert_eq!(frame2.active_phase, 1);
    let obs2 = observe(&sim, &frame2, &tracker);
    assert!(tick_overrides(&s.safety.rules, &obs2, &frame2, s.geometry.speed_limit_mps).is_empty());
}

#[test]
fn speed_tracker_fills_percentile_after_samples() {
    let s = synthetic();
    let mut demand = s.demand.clone();
    demand.ignore_foe_prob = 0.0;
    let mut sim = Simulation::new(s.geometry.clone(), demand, 9);
    let mut engine = SignalEngine::new(
        &s.geometry,
        s.phases.clone(),
        s.initial_plan.clone(),
        ControlMode::Fixed,
        s.acyclic_exec_s,
    )
    .unwrap();
    let mut tracker = SpeedTracker::new(&s.safety, &s.geometry);
    let st = s.geometry.movement_by_label("S_T").unwrap();
    assert_eq!(tracker.p85(st), None, "empty window yields no percentile");
    for _ in 0..300 {
        let frame = engine.frame();
        sim.step(&frame, 1.0);
        tracker.observe(&sim);
        engine.advance(1.0);
    }
    let p = tracker.p85(st).expect("window must fill under demand");
    assert!(p > 0.0 && p <= s.geometry.speed_limit_mps + 1e-9);
}
