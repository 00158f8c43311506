//! The two state encoders agents observe the intersection through.

use serde::{Deserialize, Serialize};

use crate::sim::{Simulation, STOP_SPEED_MPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Grid,
    Lane,
}

pub fn encoded_len(kind: EncoderKind, sim: &Simulation) -> usize {
    match kind {
        EncoderKind::Grid => 2 * sim.geometry().cell_count(),
        EncoderKind::Lane => 2 * sim.geometry().lane_count(),
    }
}

pub fn encode(kind: EncoderKind, sim: &Simulation) -> Vec<f64> {
    match kind {
        EncoderKind::Grid => encode_grid(sim),
        EncoderKind::Lane => encode_lane(sim),
    }
}

/// Square-cell rasterization of the approaches: each cell contributes an
/// (occupancy, speed / vmax) pair, cells ordered lane-major from the
/// approach entry toward the stop line. Length is 2 x cell count. When
/// several vehicles share a cell the most advanced one provides the speed.
pub fn encode_grid(sim: &Simulation) -> Vec<f64> {
    let geo = sim.geometry();
    let cells = geo.cells_per_lane();
    let cell_size = geo.cell_size_m;
    let vmax = geo.speed_limit_mps;
    let mut out = vec![0.0; 2 * cells * geo.lane_count()];
    for lane in 0..geo.lane_count() {
        // Most advanced first; the first writer of a cell wins.
        for v in sim.lane_vehicles(lane) {
            let cell = ((v.pos_m / cell_size) as usize).min(cells - 1);
            let idx = 2 * (lane * cells + cell);
            if out[idx] == 0.0 {
                out[idx] = 1.0;
                out[idx + 1] = (v.speed_mps / vmax).clamp(0.0, 1.0);
            }
        }
    }
    out
}

const QUEUE_SCALE: f64 = 50.0;
const WAIT_SCALE_S: f64 = 300.0;

/// Per lane: (queue length / 50, max waiting among the stopped / 300 s).
pub fn encode_lane(sim: &Simulation) -> Vec<f64> {
    let geo = sim.geometry();
    let mut out = vec![0.0; 2 * geo.lane_count()];
    for lane in 0..geo.lane_count() {
        let mut queue = 0usize;
        let mut max_wait: f64 = 0.0;
        for v in sim.lane_vehicles(lane) {
            if v.speed_mps < STOP_SPEED_MPS {
                queue += 1;
                max_wait = max_wait.max(v.waiting_s);
            }
        }
        out[2 * lane] = queue as f64 / QUEUE_SCALE;
        out[2 * lane + 1] = max_wait / WAIT_SCALE_S;
    }
    out
}
