use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::{DistinguishabilityRule, WeightSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Broadcast,
    Feedback,
    Dpi,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Broadcast, Protocol::Feedback, Protocol::Dpi];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Broadcast => "broadcast",
            Protocol::Feedback => "feedback",
            Protocol::Dpi => "dpi",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "broadcast" => Ok(Protocol::Broadcast),
            "feedback" => Ok(Protocol::Feedback),
            "dpi" => Ok(Protocol::Dpi),
            other => Err(Error::InvalidInput(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Source of the relative velocity in a visual identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VdVelocity {
    /// Velocity estimate of the track the detection is associated with.
    #[default]
    Track,
    /// Difference of the last two converted positions over one frame.
    FiniteDifference,
}

/// Every knob of one simulation run. Lengths in m, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_uavs: usize,
    pub region: [f64; 3],
    pub v_min: f64,
    pub v_max: f64,
    pub beacon_interval: f64,
    pub vd_interval: f64,
    pub comm_range: f64,
    pub sense_range: f64,
    /// Transmitters within this range of each other share the medium.
    pub carrier_sense_range: f64,
    pub rssi_sigma: f64,
    pub gnss_sigma: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub sigma_appearance: f64,
    /// EC senders drawn per second.
    pub ec_rate: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub tx_airtime: f64,
    pub proc_jitter_mean: f64,
    pub duration: f64,
    /// No EC events are generated before this time.
    pub warmup: f64,
    /// Deliveries later than this after creation are lost.
    pub settle_timeout: f64,
    pub seed: u64,
    pub protocol: Protocol,
    /// Minimum pairwise distance kept by the mobility model; 0 disables it.
    pub min_separation: f64,
    /// Process noise density of the neighbor tracker (m^2/s^3).
    pub track_q: f64,
    /// Fuse beacons as full position + velocity observations.
    pub ad_full_state: bool,
    pub vd_velocity: VdVelocity,
    /// Range scale of the magnitude-aware position similarity used by the
    /// matcher; absent or 0 keeps the plain cosine.
    pub position_scale: Option<f64>,
    /// Standard deviations of slack the DPI sender allows each intended-receiver
    /// test; 0 classifies on the point estimate.
    pub dpi_margin: f64,
    /// Per-axis velocity standard deviation (m/s) a track must reach before
    /// it takes part in identity matching.
    pub velocity_sd_gate: f64,
    /// Speed scale of the magnitude-aware velocity similarity (m/s); 0 is off.
    pub velocity_scale: Option<f64>,
    pub distinguishability: DistinguishabilityRule,
    pub weight_source: WeightSource,
    pub assoc_gate: f64,
    pub assoc_position_weight: f64,
    pub assoc_position_scale: Option<f64>,
    /// Frames a track may go undetected before it is dropped.
    pub max_misses: u32,
    pub log_path: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_uavs: 40,
            region: [600.0, 600.0, 150.0],
            v_min: 5.0,
            v_max: 40.0,
            beacon_interval: 1.0,
            vd_interval: 0.1,
            comm_range: 150.0,
            sense_range: 150.0,
            carrier_sense_range: 300.0,
            rssi_sigma: 5.0 / 10f64.sqrt(),
            gnss_sigma: 3.0,
            sigma_r: 0.5,
            sigma_theta: 0.02,
            sigma_phi: 0.02,
            sigma_appearance: 0.05,
            ec_rate: 10.0,
            alpha: 1.0,
            epsilon: 0.02,
            tx_airtime: 0.002,
            proc_jitter_mean: 0.001,
            duration: 10.0,
            warmup: 2.0,
            settle_timeout: 1.0,
            seed: 0,
            protocol: Protocol::Dpi,
            min_separation: 0.0,
            track_q: 50.0,
            ad_full_state: true,
            vd_velocity: VdVelocity::Track,
            position_scale: Some(20.0),
            velocity_scale: None,
            dpi_margin: 1.0,
            velocity_sd_gate: 6.0,
            distinguishability: DistinguishabilityRule::Literal,
            weight_source: WeightSource::Visual,
            assoc_gate: 0.5,
            assoc_position_weight: 0.7,
            assoc_position_scale: Some(10.0),
            max_misses: 3,
            log_path: None,
        }
    }
}

impl SimConfig {
    /// Checks every field and reports all offenders at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) && !(v == f64::INFINITY && name.ends_with("range")) {
                bad.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        positive("beacon_interval", self.beacon_interval);
        positive("vd_interval", self.vd_interval);
        positive("comm_range", self.comm_range);
        positive("sense_range", self.sense_range);
        positive("carrier_sense_range", self.carrier_sense_range);
        positive("ec_rate", self.ec_rate);
        positive("alpha", self.alpha);
        positive("epsilon", self.epsilon);
        positive("tx_airtime", self.tx_airtime);
        positive("settle_timeout", self.settle_timeout);
        for (k, axis) in self.region.iter().enumerate() {
            positive(&format!("region[{k}]"), *axis);
        }
        if self.velocity_sd_gate.is_nan() || self.velocity_sd_gate <= 0.0 {
            bad.push(format!("velocity_sd_gate must be > 0 (got {})", self.velocity_sd_gate));
        }
        let nonneg = [
            ("v_min", self.v_min),
            ("rssi_sigma", self.rssi_sigma),
            ("gnss_sigma", self.gnss_sigma),
            ("sigma_r", self.sigma_r),
            ("sigma_theta", self.sigma_theta),
            ("sigma_phi", self.sigma_phi),
            ("sigma_appearance", self.sigma_appearance),
            ("proc_jitter_mean", self.proc_jitter_mean),
            ("duration", self.duration),
            ("warmup", self.warmup),
            ("min_separation", self.min_separation),
            ("track_q", self.track_q),
            ("dpi_margin", self.dpi_margin),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if !(self.v_max.is_finite() && self.v_max >= self.v_min) {
            bad.push(format!("v_max must be >= v_min (got {} < {})", self.v_max, self.v_min));
        }
        if !(0.0..=1.0).contains(&self.assoc_gate) {
            bad.push(format!("assoc_gate must be in [0, 1] (got {})", self.assoc_gate));
        }
        if !(0.0..=1.0).contains(&self.assoc_position_weight) {
            bad.push(format!(
                "assoc_position_weight must be in [0, 1] (got {})",
                self.assoc_position_weight
            ));
        }
        for (name, s) in [
            ("position_scale", self.position_scale),
            ("velocity_scale", self.velocity_scale),
            ("assoc_position_scale", self.assoc_position_scale),
        ] {
            if let Some(s) = s {
                if !(s >= 0.0 && s.is_finite()) {
                    bad.push(format!("{name} must be >= 0 when set (got {s})"));
                }
            }
        }
        if self.min_separation > 0.0 && self.num_uavs > 1 {
            // loose packing bound; rejection sampling stalls well before it
            let cell = self.min_separation.powi(3);
            let volume: f64 = self.region.iter().product();
            if (self.num_uavs as f64) * cell > 0.5 * volume {
                bad.push(format!(
                    "min_separation {} too large for {} UAVs in the region",
                    self.min_separation, self.num_uavs
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.vd_interval - 1e-9).ceil().max(0.0) as u64
    }
}
