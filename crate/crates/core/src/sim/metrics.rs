use serde::{Deserialize, Serialize};

use super::config::Protocol;

/// Reception counters of EC events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Intended receivers reached.
    pub ri: u64,
    /// Unintended receivers reached.
    pub ru: u64,
    /// Intended receivers missed.
    pub ni: u64,
    /// Unintended in-range receivers left alone.
    pub nu: u64,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.ri += other.ri;
        self.ru += other.ru;
        self.ni += other.ni;
        self.nu += other.nu;
    }

    pub fn hit_rate(&self) -> Option<f64> {
        hit_rate(self.ri, self.ni)
    }

    pub fn disturbance_rate(&self) -> Option<f64> {
        disturbance_rate(self.ri, self.ru)
    }
}

/// `RI / (RI + NI)`, undefined without intended receivers.
pub fn hit_rate(ri: u64, ni: u64) -> Option<f64> {
    (ri + ni > 0).then(|| ri as f64 / (ri + ni) as f64)
}

/// `RU / (RU + RI)`, undefined without receptions.
pub fn disturbance_rate(ri: u64, ru: u64) -> Option<f64> {
    (ri + ru > 0).then(|| ru as f64 / (ru + ri) as f64)
}

/// Linear-interpolated quantile of unsorted samples, `q` in `[0, 1]`.
pub fn quantile(samples: &[f64], q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

pub fn mean(samples: &[f64]) -> Option<f64> {
    (!samples.is_empty()).then(|| samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub protocol: Protocol,
    pub num_uavs: usize,
    pub v_max: f64,
    pub events: u64,
    pub counters: Counters,
    pub hit_rate: Option<f64>,
    pub disturbance_rate: Option<f64>,
    pub latency_samples: u64,
    pub latency_mean_ms: Option<f64>,
    pub latency_p50_ms: Option<f64>,
    pub latency_p90_ms: Option<f64>,
    pub mapping_checks: u64,
    pub mapping_correct: u64,
    pub mapping_accuracy: Option<f64>,
    pub ad_range_p90_m: Option<f64>,
    pub vd_range_p90_m: Option<f64>,
    pub fused_range_p90_m: Option<f64>,
}

/// Raw samples gathered during a run.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    pub events: u64,
    pub counters: Counters,
    pub latencies_ms: Vec<f64>,
    pub mapping_checks: u64,
    pub mapping_correct: u64,
    pub ad_range_errors: Vec<f64>,
    pub vd_range_errors: Vec<f64>,
    pub fused_range_errors: Vec<f64>,
}

impl Accumulator {
    pub fn finish(&self, seed: u64, protocol: Protocol, num_uavs: usize, v_max: f64) -> MetricsRecord {
        MetricsRecord {
            seed,
            protocol,
            num_uavs,
            v_max,
            events: self.events,
            counters: self.counters,
            hit_rate: self.counters.hit_rate(),
            disturbance_rate: self.counters.disturbance_rate(),
            latency_samples: self.latencies_ms.len() as u64,
            latency_mean_ms: mean(&self.latencies_ms),
            latency_p50_ms: quantile(&self.latencies_ms, 0.5),
            latency_p90_ms: quantile(&self.latencies_ms, 0.9),
            mapping_checks: self.mapping_checks,
            mapping_correct: self.mapping_correct,
            mapping_accuracy: (self.mapping_checks > 0)
                .then(|| self.mapping_correct as f64 / self.mapping_checks as f64),
            ad_range_p90_m: quantile(&self.ad_range_errors, 0.9),
            vd_range_p90_m: quantile(&self.vd_range_errors, 0.9),
            fused_range_p90_m: quantile(&self.fused_range_errors, 0.9),
        }
    }
}
