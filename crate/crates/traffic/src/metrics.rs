use serde::{Deserialize, Serialize};

/// Running totals over one episode.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricsLedger {
    pub cumulative_waiting_s: f64,
    /// Vehicles that entered the modeled area.
    pub entered: u64,
    /// Vehicles that fully traversed the junction.
    pub throughput: u64,
    pub collision_count: u64,
    stopped_sum: u64,
    tick_count: u64,
}

impl MetricsLedger {
    pub fn record_tick(&mut self, stopped_now: usize) {
        self.stopped_sum += stopped_now as u64;
        self.tick_count += 1;
    }

    pub fn mean_stopped(&self) -> f64 {
        if self.tick_count == 0 {
            0.0
        } else {
            self.stopped_sum as f64 / self.tick_count as f64
        }
    }

    /// Episode summary. Average waiting time is cumulative waiting over
    /// vehicles entered (at least one to avoid dividing by zero).
    pub fn snapshot(&self, horizon_s: f64) -> EpisodeMetrics {
        assert!(horizon_s > 0.0, "snapshot horizon must be positive");
        EpisodeMetrics {
            avg_waiting_s: self.cumulative_waiting_s / (self.entered.max(1) as f64),
            throughput: self.throughput,
            mean_stopped: self.mean_stopped(),
            collisions: self.collision_count,
            horizon_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub avg_waiting_s: f64,
    pub throughput: u64,
    pub mean_stopped: f64,
    pub collisions: u64,
    pub horizon_s: f64,
}
