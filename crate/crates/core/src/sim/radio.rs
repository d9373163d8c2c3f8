use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mobility::UavNode;
use crate::identity::DigitalIdentity;

/// Self-reported kinematics broadcast by every node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub did: DigitalIdentity,
    pub sent_at: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// A beacon as held by one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconRecord {
    pub beacon: Beacon,
    /// Range estimate from received signal strength (m).
    pub rssi_range: f64,
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

pub(crate) fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma))
}

/// Builds the beacon `node` sends at `now`. Position carries isotropic
/// GNSS noise, velocity a tenth of it per axis.
pub fn emit_beacon<R: Rng + ?Sized>(node: &UavNode, now: f64, gnss_sigma: f64, rng: &mut R) -> Beacon {
    Beacon {
        did: node.did,
        sent_at: now,
        position: node.position + gaussian3(rng, gnss_sigma),
        velocity: node.velocity + gaussian3(rng, 0.1 * gnss_sigma),
    }
}

/// Range estimate for one reception: true distance plus Gaussian noise,
/// floored at zero.
pub fn rssi_range<R: Rng + ?Sized>(distance: f64, rssi_sigma: f64, rng: &mut R) -> f64 {
    (distance + gaussian(rng, rssi_sigma)).max(0.0)
}

#[derive(Debug, Clone, Copy)]
struct Reservation {
    start: f64,
    end: f64,
    at: Vector3<f64>,
}

/// Shared channel with per-node FIFO transmit queues. A transmission waits
/// for the sender's previous one and for every overlapping transmission
/// within carrier-sense range.
#[derive(Debug, Clone)]
pub struct Medium {
    airtime: f64,
    sense_range: f64,
    busy_until: Vec<f64>,
    active: Vec<Reservation>,
}

impl Medium {
    pub fn new(nodes: usize, airtime: f64, sense_range: f64) -> Self {
        Medium {
            airtime,
            sense_range,
            busy_until: vec![0.0; nodes],
            active: Vec::new(),
        }
    }

    /// Queues one message from `node` (located at `at`) requested at
    /// `request`; returns the time its last bit is on the air.
    pub fn transmit(&mut self, node: usize, at: Vector3<f64>, request: f64) -> f64 {
        let mut start = request.max(self.busy_until[node]);
        let r2 = self.sense_range * self.sense_range;
        loop {
            let end = start + self.airtime;
            let blocker = self
                .active
                .iter()
                .filter(|b| b.start < end && b.end > start && (b.at - at).norm_squared() <= r2)
                .map(|b| b.end)
                .fold(f64::NEG_INFINITY, f64::max);
            if blocker == f64::NEG_INFINITY {
                break;
            }
            start = blocker;
        }
        let end = start + self.airtime;
        self.busy_until[node] = end;
        self.active.push(Reservation { start, end, at });
        end
    }

    /// Forgets transmissions that ended before `t`.
    pub fn prune(&mut self, t: f64) {
        self.active.retain(|b| b.end >= t);
    }
}
