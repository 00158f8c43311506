//! Vehicle kinematics and junction semantics.
//!
//! Motion follows a Krauss-style safe-velocity rule: a follower never goes
//! faster than it could while still stopping behind its leader even if the
//! leader brakes hard. Signals and yielding are modeled as a virtual wall at
//! the stop line that is lifted when entry is allowed. A vehicle within
//! braking distance of the line when the wall would appear is committed and
//! proceeds; this both keeps decelerations physical and reproduces the
//! yellow-onset entry rule.
//!
//! Vehicles flagged `ignores_foes` skip the junction-entry foe checks (gap
//! acceptance and clearing vehicles already inside) but still obey signals
//! and car-following. They are the collision stress mechanism.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use tsc_nn::SeededRng;

use crate::events::Event;
use crate::geometry::{Geometry, MovementId, MovementKind};
use crate::metrics::MetricsLedger;
use crate::signal::{Indication, IndicationFrame};

/// Speed below which a vehicle counts as stopped/waiting.
pub const STOP_SPEED_MPS: f64 = 0.1;
/// Minimum clear space behind the entry point required to spawn.
const SPAWN_CLEARANCE_M: f64 = 2.0;
/// Slack added to the braking distance when latching entry commitment.
const COMMIT_SLACK_M: f64 = 0.5;
/// Interior meters over which paths leaving the same lane still share
/// pavement; within it vehicles follow across movements.
const DIVERGE_ZONE_M: f64 = 10.0;
/// A vehicle has crossed the stop line only once its front is strictly
/// past it; stopping exactly on the line is still waiting.
const CROSSING_EPS_M: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemandProfile {
    /// Per movement: piecewise-constant (start time s, rate veh/h) steps,
    /// sorted by start time. Empty means zero demand.
    pub rates_per_movement: Vec<Vec<(f64, f64)>>,
    pub ignore_foe_prob: f64,
}

impl DemandProfile {
    pub fn zero(movement_count: usize) -> Self {
        DemandProfile {
            rates_per_movement: vec![Vec::new(); movement_count],
            ignore_foe_prob: 0.0,
        }
    }

    pub fn rate_at(&self, movement: MovementId, t: f64) -> f64 {
        let steps = &self.rates_per_movement[movement];
        let mut rate = 0.0;
        for &(start, r) in steps {
            if t + 1e-9 >= start {
                rate = r;
            } else {
                break;
            }
        }
        rate
    }
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub id: u64,
    pub movement: MovementId,
    /// Front-bumper position, meters from the approach entry. The stop line
    /// sits at `geometry.stop_line_m()`; interior positions exceed it.
    pub pos_m: f64,
    /// Position at the start of the current tick, for swept checks.
    pub prev_pos_m: f64,
    pub speed_mps: f64,
    pub vmax_mps: f64,
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub length_m: f64,
    pub waiting_s: f64,
    pub entered_at_s: f64,
    pub ignores_foes: bool,
    /// Latched once the vehicle is inside braking distance with entry
    /// allowed; a committed vehicle no longer yields to late check flips.
    pub committed: bool,
    /// Movement indication shown when the front crossed the stop line.
    pub entered_on: Option<Indication>,
}

impl Vehicle {
    pub fn center_m(&self) -> f64 {
        self.pos_m - 0.5 * self.length_m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time_s: f64,
    pub vehicle_a: u64,
    pub vehicle_b: u64,
    pub movement_a: MovementId,
    pub movement_b: MovementId,
    pub offset_a_m: f64,
    pub offset_b_m: f64,
    pub entered_on_a: Indication,
    pub entered_on_b: Indication,
}

impl CollisionEvent {
    /// True when either party entered the junction on yellow (or during
    /// all-red, which can only follow a yellow commitment).
    pub fn involves_yellow_entry(&self) -> bool {
        self.entered_on_a == Indication::Yellow || self.entered_on_b == Indication::Yellow
    }
}

#[derive(Clone, Debug, Default)]
pub struct StepEvents {
    pub spawned: Vec<u64>,
    pub exited: Vec<u64>,
    pub collisions: Vec<CollisionEvent>,
}

/// One simulated intersection. Deterministic per (geometry, demand, seed).
#[derive(Clone, Debug)]
pub struct Simulation {
    geometry: Geometry,
    demand: DemandProfile,
    rng: SeededRng,
    time_s: f64,
    vehicles: Vec<Option<Vehicle>>,
    /// Pre-stop-line vehicles per lane, most advanced first.
    lane_queues: Vec<VecDeque<u64>>,
    /// Junction-interior vehicles per movement, most advanced first.
    interior_queues: Vec<VecDeque<u64>>,
    pub ledger: MetricsLedger,
    spawned_total: u64,
    exited_total: u64,
    collided_total: u64,
    event_log: Vec<Event>,
    log_events: bool,
}

impl Simulation {
    pub fn new(geometry: Geometry, demand: DemandProfile, seed: u64) -> Self {
        let lanes = geometry.lane_count();
        let movements = geometry.movement_count();
        assert_eq!(
            demand.rates_per_movement.len(),
            movements,
            "demand table must cover every movement"
        );
        Simulation {
            lane_queues: vec![VecDeque::new(); lanes],
            interior_queues: vec![VecDeque::new(); movements],
            geometry,
            demand,
            rng: SeededRng::new(seed),
            time_s: 0.0,
            vehicles: Vec::new(),
            ledger: MetricsLedger::default(),
            spawned_total: 0,
            exited_total: 0,
            collided_total: 0,
            event_log: Vec::new(),
            log_events: false,
        }
    }

    pub fn enable_event_log(&mut self) {
        self.log_events = true;
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.event_log)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn demand(&self) -> &DemandProfile {
        &self.demand
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn spawned_total(&self) -> u64 {
        self.spawned_total
    }

    pub fn exited_total(&self) -> u64 {
        self.exited_total
    }

    pub fn collided_total(&self) -> u64 {
        self.collided_total
    }

    pub fn alive_count(&self) -> u64 {
        self.vehicles.iter().filter(|v| v.is_some()).count() as u64
    }

    pub fn vehicle(&self, id: u64) -> Option<&Vehicle> {
        self.vehicles.get(id as usize).and_then(|v| v.as_ref())
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.iter().filter_map(|v| v.as_ref())
    }

    /// Pre-stop-line vehicles of one lane, most advanced first.
    pub fn lane_vehicles(&self, lane: usize) -> impl Iterator<Item = &Vehicle> + '_ {
        self.lane_queues[lane]
            .iter()
            .map(move |&id| self.vehicles[id as usize].as_ref().expect("queued id alive"))
    }

    /// Junction-interior vehicles of one movement, most advanced first.
    pub fn interior_vehicles(&self, movement: MovementId) -> impl Iterator<Item = &Vehicle> + '_ {
        self.interior_queues[movement]
            .iter()
            .map(move |&id| self.vehicles[id as usize].as_ref().expect("queued id alive"))
    }

    /// Krauss safe velocity for a gap to a leader moving at `v_lead`.
    fn v_safe(&self, gap_m: f64, v_lead: f64) -> f64 {
        if gap_m <= 0.0 {
            return 0.0;
        }
        let b = self.geometry.vehicle.decel_mps2;
        let tau = self.geometry.vehicle.reaction_time_s;
        let bt = b * tau;
        -bt + (bt * bt + v_lead * v_lead + 2.0 * b * gap_m).sqrt()
    }

    fn braking_distance(&self, speed: f64) -> f64 {
        speed * speed / (2.0 * self.geometry.vehicle.decel_mps2)
    }

    /// True when every conflicting vehicle already inside the junction has
    /// cleared its conflict point with `movement`.
    pub fn junction_clear_for(&self, movement: MovementId) -> bool {
        let stop = self.geometry.stop_line_m();
        let margin = self.geometry.vehicle.collision_margin_m;
        for (foe_mov, cp) in self.geometry.conflicts_of(movement) {
            for foe in self.interior_vehicles(foe_mov) {
                let center_q = foe.center_m() - stop;
                let cleared = center_q > cp.foe_offset_m + 0.5 * foe.length_m + margin;
                if !cleared {
                    return false;
                }
            }
        }
        true
    }

    /// Gap acceptance for a permitted left: reject if any approaching foe on
    /// a conflicting, currently-movable through could reach the shared
    /// conflict point within the critical gap. Arrival time is bounded below
    /// by distance over the speed limit, so an accelerating foe can never
    /// beat the estimate.
    pub fn gap_acceptable(&self, movement: MovementId, frame: &IndicationFrame) -> bool {
        let stop = self.geometry.stop_line_m();
        let vmax = self.geometry.speed_limit_mps;
        let horizon = self.geometry.vehicle.gap_accept_s;
        for (foe_mov, cp) in self.geometry.conflicts_of(movement) {
            if self.geometry.movements[foe_mov].kind != MovementKind::Through {
                continue;
            }
            if frame.indication(foe_mov) == Indication::Red {
                continue;
            }
            let lane = self.geometry.movements[foe_mov].entry_lane;
            for foe in self.lane_vehicles(lane) {
                if foe.movement != foe_mov {
                    continue;
                }
                let dist = (stop + cp.foe_offset_m) - foe.pos_m;
                if dist / vmax < horizon {
                    return false;
                }
            }
        }
        true
    }

    /// May `v` cross the stop line under the current indications?
    fn entry_allowed(&self, v: &Vehicle, frame: &IndicationFrame, dist_to_line: f64) -> bool {
        let indication = frame.indication(v.movement);
        let is_left = self.geometry.movements[v.movement].kind == MovementKind::Left;
        match indication {
            Indication::Red => false,
            Indication::ProtectedGreen => v.ignores_foes || self.junction_clear_for(v.movement),
            Indication::PermittedGreen => {
                v.ignores_foes
                    || (self.junction_clear_for(v.movement) && self.gap_acceptable(v.movement, frame))
            }
            Indication::Yellow => {
                if dist_to_line > self.braking_distance(v.speed_mps) + COMMIT_SLACK_M {
                    return false;
                }
                if v.ignores_foes {
                    return true;
                }
                let clear = self.junction_clear_for(v.movement);
                if is_left {
                    clear && self.gap_acceptable(v.movement, frame)
                } else {
                    clear
                }
            }
        }
    }

    /// Advances the world by `dt` under the given signal indications.
    pub fn step(&mut self, frame: &IndicationFrame, dt: f64) -> StepEvents {
        let mut events = StepEvents::default();
        self.update_interior(dt);
        self.update_approaches(frame, dt);
        self.cross_stop_lines(frame, &mut events);
        self.process_exits(&mut events);
        self.process_collisions(dt, &mut events);
        self.spawn_vehicles(dt, &mut events);
        self.time_s += dt;
        self.sample_metrics();
        events
    }

    fn accelerate_target(&self, v: &Vehicle, dt: f64) -> f64 {
        (v.speed_mps + v.accel_mps2 * dt).min(v.vmax_mps)
    }

    fn apply_motion(&mut self, id: u64, new_speed: f64, dt: f64) {
        let v = self.vehicles[id as usize].as_mut().expect("alive");
        v.prev_pos_m = v.pos_m;
        v.speed_mps = new_speed.clamp(0.0, v.vmax_mps);
        v.pos_m += v.speed_mps * dt;
        if v.speed_mps < STOP_SPEED_MPS {
            v.waiting_s += dt;
            self.ledger.cumulative_waiting_s += dt;
        }
    }

    /// Nearest vehicle ahead on a sibling movement sharing the entry lane,
    /// considered only while `v` is still in the shared divergence zone.
    fn diverge_zone_leader(&self, v: &Vehicle) -> Option<(f64, f64, f64)> {
        let stop = self.geometry.stop_line_m();
        if v.pos_m - stop > DIVERGE_ZONE_M {
            return None;
        }
        let lane = self.geometry.movements[v.movement].entry_lane;
        let mut best: Option<(f64, f64, f64)> = None;
        for &sibling in self.geometry.movements_on_lane(lane) {
            if sibling == v.movement {
                continue;
            }
            // Least-advanced sibling vehicle that is still ahead of v.
            for &id in self.interior_queues[sibling].iter().rev() {
                let u = self.vehicles[id as usize].as_ref().expect("alive");
                if u.pos_m > v.pos_m {
                    if best.is_none() || u.pos_m < best.unwrap().0 {
                        best = Some((u.pos_m, u.length_m, u.speed_mps));
                    }
                    break;
                }
            }
        }
        best
    }

    fn update_interior(&mut self, dt: f64) {
        for movement in 0..self.interior_queues.len() {
            for idx in 0..self.interior_queues[movement].len() {
                let id = self.interior_queues[movement][idx];
                let v = self.vehicles[id as usize].as_ref().expect("alive");
                let mut target = self.accelerate_target(v, dt);
                if idx > 0 {
                    let lead_id = self.interior_queues[movement][idx - 1];
                    let lead = self.vehicles[lead_id as usize].as_ref().expect("alive");
                    let gap = lead.pos_m - lead.length_m - v.pos_m;
                    target = target.min(self.v_safe(gap, lead.speed_mps));
                }
                if let Some((pos, len, speed)) = self.diverge_zone_leader(v) {
                    target = target.min(self.v_safe(pos - len - v.pos_m, speed));
                }
                self.apply_motion(id, target, dt);
            }
        }
    }

    fn update_approaches(&mut self, frame: &IndicationFrame, dt: f64) {
        let stop = self.geometry.stop_line_m();
        for lane in 0..self.lane_queues.len() {
            for idx in 0..self.lane_queues[lane].len() {
                let id = self.lane_queues[lane][idx];
                let v = self.vehicles[id as usize].as_ref().expect("alive");
                let mut target = self.accelerate_target(v, dt);

                // Car following: the vehicle directly ahead in this lane, or
                // for the lane leader, the tail of its movement's interior
                // queue (same path continues past the line).
                if idx > 0 {
                    let lead_id = self.lane_queues[lane][idx - 1];
                    let lead = self.vehicles[lead_id as usize].as_ref().expect("alive");
                    let gap = lead.pos_m - lead.length_m - v.pos_m;
                    target = target.min(self.v_safe(gap, lead.speed_mps));
                } else {
                    if let Some(&tail_id) = self.interior_queues[v.movement].back() {
                        let lead = self.vehicles[tail_id as usize].as_ref().expect("alive");
                        let gap = lead.pos_m - lead.length_m - v.pos_m;
                        target = target.min(self.v_safe(gap, lead.speed_mps));
                    }
                    if let Some((pos, len, speed)) = self.diverge_zone_leader(v) {
                        target = target.min(self.v_safe(pos - len - v.pos_m, speed));
                    }
                }

                // Signal / yielding wall at the stop line. Only evaluated in
                // the zone where it could bind.
                let dist = stop - v.pos_m;
                let wall_zone = v.vmax_mps * v.vmax_mps / (2.0 * v.decel_mps2)
                    + v.vmax_mps * self.geometry.vehicle.reaction_time_s
                    + 2.0;
                if !v.committed && dist <= wall_zone {
                    let allowed = self.entry_allowed(v, frame, dist);
                    if allowed && dist <= self.braking_distance(v.speed_mps) + COMMIT_SLACK_M {
                        let vm = self.vehicles[id as usize].as_mut().expect("alive");
                        vm.committed = true;
                    } else if !allowed {
                        target = target.min(self.v_safe(dist, 0.0));
                    }
                }
                self.apply_motion(id, target, dt);
            }
        }
    }

    fn cross_stop_lines(&mut self, frame: &IndicationFrame, _events: &mut StepEvents) {
        let stop = self.geometry.stop_line_m();
        for lane in 0..self.lane_queues.len() {
            while let Some(&front) = self.lane_queues[lane].front() {
                let v = self.vehicles[front as usize].as_ref().expect("alive");
                if v.pos_m < stop + CROSSING_EPS_M {
                    break;
                }
                let movement = v.movement;
                let indication = frame.indication(movement);
                self.lane_queues[lane].pop_front();
                let vm = self.vehicles[front as usize].as_mut().expect("alive");
                vm.entered_on = Some(indication);
                self.interior_queues[movement].push_back(front);
            }
        }
    }

    fn process_exits(&mut self, events: &mut StepEvents) {
        let stop = self.geometry.stop_line_m();
        for movement in 0..self.interior_queues.len() {
            let path = self.geometry.movements[movement].path_length_m;
            while let Some(&front) = self.interior_queues[movement].front() {
                let v = self.vehicles[front as usize].as_ref().expect("alive");
                if v.pos_m - v.length_m < stop + path {
                    break;
                }
                self.interior_queues[movement].pop_front();
                self.vehicles[front as usize] = None;
                self.exited_total += 1;
                self.ledger.throughput += 1;
                events.exited.push(front);
                if self.log_events {
                    self.event_log.push(Event::Exit {
                        t: self.time_s,
                        vehicle: front,
                    });
                }
            }
        }
    }

    /// Collision scan over the current state without mutating it.
    pub fn detect_collisions(&self) -> Vec<CollisionEvent> {
        let stop = self.geometry.stop_line_m();
        let margin = self.geometry.vehicle.collision_margin_m;
        let mut found = Vec::new();
        let n = self.geometry.movement_count();
        for a in 0..n {
            for b in (a + 1)..n {
                let Some(cp) = self.geometry.conflict(a, b) else {
                    continue;
                };
                for va in self.interior_vehicles(a) {
                    let qa = va.center_m() - stop;
                    if (qa - cp.own_offset_m).abs() > 0.5 * va.length_m + margin {
                        continue;
                    }
                    for vb in self.interior_vehicles(b) {
                        let qb = vb.center_m() - stop;
                        if (qb - cp.foe_offset_m).abs() <= 0.5 * vb.length_m + margin {
                            found.push(CollisionEvent {
                                time_s: self.time_s,
                                vehicle_a: va.id,
                                vehicle_b: vb.id,
                                movement_a: a,
                                movement_b: b,
                                offset_a_m: cp.own_offset_m,
                                offset_b_m: cp.foe_offset_m,
                                entered_on_a: va.entered_on.unwrap_or(Indication::Red),
                                entered_on_b: vb.entered_on.unwrap_or(Indication::Red),
                            });
                        }
                    }
                }
            }
        }
        found
    }

    /// Time window within the last tick during which a vehicle's center sat
    /// inside `[off - w, off + w]`, assuming linear motion.
    fn occupancy_window(prev_q: f64, cur_q: f64, off: f64, w: f64, dt: f64) -> Option<(f64, f64)> {
        let v = (cur_q - prev_q) / dt;
        if v.abs() < 1e-12 {
            return ((cur_q - off).abs() <= w).then_some((0.0, dt));
        }
        let t_in = ((off - w) - prev_q) / v;
        let t_out = ((off + w) - prev_q) / v;
        let (lo, hi) = (t_in.max(0.0), t_out.min(dt));
        (lo <= hi).then_some((lo, hi))
    }

    /// Collision scan over the motion of the last tick: two conflicting
    /// vehicles collide if their conflict-point occupancy windows overlap in
    /// time, so fast vehicles cannot step over each other between ticks.
    fn detect_collisions_swept(&self, dt: f64) -> Vec<CollisionEvent> {
        let stop = self.geometry.stop_line_m();
        let margin = self.geometry.vehicle.collision_margin_m;
        let mut found = Vec::new();
        let n = self.geometry.movement_count();
        for a in 0..n {
            for b in (a + 1)..n {
                let Some(cp) = self.geometry.conflict(a, b) else {
                    continue;
                };
                for va in self.interior_vehicles(a) {
                    let wa = 0.5 * va.length_m + margin;
                    let Some((a_in, a_out)) = Self::occupancy_window(
                        va.prev_pos_m - 0.5 * va.length_m - stop,
                        va.center_m() - stop,
                        cp.own_offset_m,
                        wa,
                        dt,
                    ) else {
                        continue;
                    };
                    for vb in self.interior_vehicles(b) {
                        let wb = 0.5 * vb.length_m + margin;
                        let Some((b_in, b_out)) = Self::occupancy_window(
                            vb.prev_pos_m - 0.5 * vb.length_m - stop,
                            vb.center_m() - stop,
                            cp.foe_offset_m,
                            wb,
                            dt,
                        ) else {
                            continue;
                        };
                        if a_in.max(b_in) <= a_out.min(b_out) {
                            found.push(CollisionEvent {
                                time_s: self.time_s,
                                vehicle_a: va.id,
                                vehicle_b: vb.id,
                                movement_a: a,
                                movement_b: b,
                                offset_a_m: cp.own_offset_m,
                                offset_b_m: cp.foe_offset_m,
                                entered_on_a: va.entered_on.unwrap_or(Indication::Red),
                                entered_on_b: vb.entered_on.unwrap_or(Indication::Red),
                            });
                        }
                    }
                }
            }
        }
        found
    }

    fn process_collisions(&mut self, dt: f64, events: &mut StepEvents) {
        let detected = self.detect_collisions_swept(dt);
        let mut removed: Vec<u64> = Vec::new();
        for ev in detected {
            if removed.contains(&ev.vehicle_a) || removed.contains(&ev.vehicle_b) {
                continue;
            }
            removed.push(ev.vehicle_a);
            removed.push(ev.vehicle_b);
            for id in [ev.vehicle_a, ev.vehicle_b] {
                let movement = self.vehicles[id as usize].as_ref().expect("alive").movement;
                self.interior_queues[movement].retain(|&q| q != id);
                self.vehicles[id as usize] = None;
                self.collided_total += 1;
            }
            self.ledger.collision_count += 1;
            if self.log_events {
                self.event_log.push(Event::Collision(Box::new(ev.clone())));
            }
            events.collisions.push(ev);
        }
    }

    fn spawn_vehicles(&mut self, dt: f64, events: &mut StepEvents) {
        let spec = self.geometry.vehicle;
        let vmax = self.geometry.speed_limit_mps;
        let mut lane_used = vec![false; self.lane_queues.len()];
        for movement in 0..self.geometry.movement_count() {
            let rate = self.demand.rate_at(movement, self.time_s);
            if rate <= 0.0 {
                continue;
            }
            let p = (rate * dt / 3600.0).min(1.0);
            if self.rng.next_f64() >= p {
                continue;
            }
            let lane = self.geometry.movements[movement].entry_lane;
            if lane_used[lane] {
                continue;
            }
            // Entry blocked when the last vehicle's tail is too close.
            let back = self.lane_queues[lane]
                .back()
                .map(|&id| self.vehicles[id as usize].as_ref().expect("alive"));
            if let Some(b) = back {
                if b.pos_m - b.length_m < spec.length_m + SPAWN_CLEARANCE_M {
                    continue;
                }
            }
            let ignores = self.rng.next_f64() < self.demand.ignore_foe_prob;
            let speed = match back {
                Some(b) => {
                    let gap = b.pos_m - b.length_m - spec.length_m;
                    self.v_safe(gap, b.speed_mps).min(vmax)
                }
                None => vmax,
            };
            let id = self.vehicles.len() as u64;
            self.vehicles.push(Some(Vehicle {
                id,
                movement,
                pos_m: spec.length_m,
                prev_pos_m: spec.length_m,
                speed_mps: speed,
                vmax_mps: vmax,
                accel_mps2: spec.accel_mps2,
                decel_mps2: spec.decel_mps2,
                length_m: spec.length_m,
                waiting_s: 0.0,
                entered_at_s: self.time_s,
                ignores_foes: ignores,
                committed: false,
                entered_on: None,
            }));
            self.lane_queues[lane].push_back(id);
            self.spawned_total += 1;
            self.ledger.entered += 1;
            lane_used[lane] = true;
            events.spawned.push(id);
            if self.log_events {
                self.event_log.push(Event::Spawn {
                    t: self.time_s,
                    vehicle: id,
                    movement,
                    ignores_foes: ignores,
                });
            }
        }
    }

    fn sample_metrics(&mut self) {
        let stopped = self
            .vehicles()
            .filter(|v| v.speed_mps < STOP_SPEED_MPS)
            .count();
        self.ledger.record_tick(stopped);
    }

    /// Queue length (stopped vehicles before the line) and max waiting time
    /// among them, per lane.
    pub fn lane_queue_stats(&self, lane: usize) -> (usize, f64) {
        let mut count = 0;
        let mut max_wait: f64 = 0.0;
        for v in self.lane_vehicles(lane) {
            if v.speed_mps < STOP_SPEED_MPS {
                count += 1;
                max_wait = max_wait.max(v.waiting_s);
            }
        }
        (count, max_wait)
    }

    /// Conservation check: every spawned vehicle is either still present,
    /// exited, or removed by a collision.
    pub fn conserves_vehicles(&self) -> bool {
        self.spawned_total == self.alive_count() + self.exited_total + self.collided_total
    }

    /// Places a vehicle directly, bypassing demand. Useful for scripting
    /// specific situations; queue ordering is preserved by insertion.
    pub fn place_vehicle(
        &mut self,
        movement: MovementId,
        pos_m: f64,
        speed_mps: f64,
        ignores_foes: bool,
        entered_on: Option<Indication>,
    ) -> u64 {
        self.place_vehicle_waiting(movement, pos_m, speed_mps, ignores_foes, entered_on, 0.0)
    }

    /// [`Simulation::place_vehicle`] with a pre-aged waiting ledger.
    pub fn place_vehicle_waiting(
        &mut self,
        movement: MovementId,
        pos_m: f64,
        speed_mps: f64,
        ignores_foes: bool,
        entered_on: Option<Indication>,
        waiting_s: f64,
    ) -> u64 {
        let spec = self.geometry.vehicle;
        let vmax = self.geometry.speed_limit_mps;
        let stop = self.geometry.stop_line_m();
        let id = self.vehicles.len() as u64;
        self.ledger.cumulative_waiting_s += waiting_s;
        self.vehicles.push(Some(Vehicle {
            id,
            movement,
            pos_m,
            prev_pos_m: pos_m,
            speed_mps: speed_mps.clamp(0.0, vmax),
            vmax_mps: vmax,
            accel_mps2: spec.accel_mps2,
            decel_mps2: spec.decel_mps2,
            length_m: spec.length_m,
            waiting_s,
            entered_at_s: self.time_s,
            ignores_foes,
            committed: pos_m >= stop,
            entered_on,
        }));
        let in_interior = pos_m >= stop;
        let lane = self.geometry.movements[movement].entry_lane;
        // Most advanced first.
        let at = {
            let queue = if in_interior {
                &self.interior_queues[movement]
            } else {
                &self.lane_queues[lane]
            };
            queue
                .iter()
                .position(|&other| {
                    self.vehicles[other as usize]
                        .as_ref()
                        .is_some_and(|v| v.pos_m < pos_m)
                })
                .unwrap_or(queue.len())
        };
        if in_interior {
            self.interior_queues[movement].insert(at, id);
        } else {
            self.lane_queues[lane].insert(at, id);
        }
        self.spawned_total += 1;
        self.ledger.entered += 1;
        id
    }
}
