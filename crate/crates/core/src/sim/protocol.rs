use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::{Protocol, SimConfig};
use super::metrics::Counters;
use super::mobility::UavNode;
use super::perception::{BoundEstimate, OwnFix, Perception};
use super::radio::{gaussian3, rssi_range, Medium};
use crate::identity::DigitalIdentity;

const STATIONARY: f64 = 1e-9;
/// Shortest gap between two range samples used for a range rate.
const MIN_RATE_BASELINE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub receiver: DigitalIdentity,
    pub received_at: f64,
}

/// One emergency message and what happened to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcEvent {
    pub sender: DigitalIdentity,
    pub created_at: f64,
    /// Ground-truth intended receivers at creation.
    pub intended: BTreeSet<DigitalIdentity>,
    /// Every node within communication range at creation.
    pub in_range: BTreeSet<DigitalIdentity>,
    pub deliveries: Vec<Delivery>,
}

impl EcEvent {
    /// Deliveries that arrive within `timeout` of creation.
    pub fn settled(&self, timeout: f64) -> impl Iterator<Item = &Delivery> {
        self.deliveries
            .iter()
            .filter(move |d| d.received_at - self.created_at <= timeout)
    }

    pub fn counters(&self, timeout: f64) -> Counters {
        let received: BTreeSet<DigitalIdentity> = self.settled(timeout).map(|d| d.receiver).collect();
        let ri = received.intersection(&self.intended).count() as u64;
        let ru = received.len() as u64 - ri;
        let unintended_in_range = self.in_range.difference(&self.intended).count() as u64;
        Counters {
            ri,
            ru,
            ni: self.intended.len() as u64 - ri,
            nu: unintended_in_range - ru,
        }
    }

    /// Latencies (ms) of settled deliveries to intended receivers.
    pub fn intended_latencies_ms(&self, timeout: f64) -> Vec<f64> {
        self.settled(timeout)
            .filter(|d| self.intended.contains(&d.receiver))
            .map(|d| (d.received_at - self.created_at) * 1e3)
            .collect()
    }
}

fn unit(v: &Vector3<f64>) -> Option<Vector3<f64>> {
    let n = v.norm();
    (n >= STATIONARY).then(|| v / n)
}

/// The "approaching neighbors behind" test on one relative geometry. A
/// stationary sender has no heading, so only the approaching test applies.
pub fn is_intended(
    rel_position: &Vector3<f64>,
    rel_velocity: &Vector3<f64>,
    sender_velocity: &Vector3<f64>,
    comm_range: f64,
) -> bool {
    let behind = unit(sender_velocity).is_none_or(|h| rel_position.dot(&h) < 0.0);
    rel_position.norm() <= comm_range && behind && rel_velocity.dot(rel_position) < 0.0
}

/// [`is_intended`] on an uncertain estimate: each of the three tests passes
/// if it holds within `margin` standard deviations. A zero margin is the
/// point-estimate test.
pub fn plausibly_intended(e: &BoundEstimate, sender_velocity: &Vector3<f64>, comm_range: f64, margin: f64) -> bool {
    let p = &e.position;
    let v = &e.velocity;
    let p_pp = e.covariance.fixed_view::<3, 3>(0, 0);
    let p_vv = e.covariance.fixed_view::<3, 3>(3, 3);
    let sd = |a: &Vector3<f64>, m: &nalgebra::MatrixView3<f64, nalgebra::U1, nalgebra::U6>| {
        (a.transpose() * m * a)[(0, 0)].max(0.0).sqrt()
    };
    let behind = unit(sender_velocity).is_none_or(|h| p.dot(&h) < margin * sd(&h, &p_pp));
    let in_range = match unit(p) {
        Some(u) => p.norm() <= comm_range + margin * sd(&u, &p_pp),
        None => true,
    };
    let closing_sd = (sd(p, &p_vv).powi(2) + sd(v, &p_pp).powi(2)).sqrt();
    // a range rate within rounding of zero is not an approach
    in_range && behind && v.dot(p) < margin * closing_sd - STATIONARY * p.norm()
}

/// Ground-truth intended receivers of `sender`.
pub fn intended_set(sender: usize, nodes: &[UavNode], comm_range: f64) -> BTreeSet<DigitalIdentity> {
    let s = &nodes[sender];
    nodes
        .iter()
        .enumerate()
        .filter(|&(q, n)| {
            q != sender
                && is_intended(
                    &(n.position - s.position),
                    &(n.velocity - s.velocity),
                    &s.velocity,
                    comm_range,
                )
        })
        .map(|(_, n)| n.did)
        .collect()
}

pub fn in_range_set(sender: usize, nodes: &[UavNode], comm_range: f64) -> Vec<usize> {
    let s = nodes[sender].position;
    (0..nodes.len())
        .filter(|&q| q != sender && (nodes[q].position - s).norm() <= comm_range)
        .collect()
}

/// Everything a protocol may consult or consume while handling one event.
pub struct ProtocolContext<'a, R: Rng> {
    pub cfg: &'a SimConfig,
    pub nodes: &'a [UavNode],
    pub perceptions: &'a [Perception],
    pub fixes: &'a [OwnFix],
    /// Time of the perception frame the neighbor tables reflect.
    pub frame_time: f64,
    pub medium: &'a mut Medium,
    pub rng: &'a mut R,
}

impl<R: Rng> ProtocolContext<'_, R> {
    fn jitter(&mut self) -> f64 {
        if self.cfg.proc_jitter_mean > 0.0 {
            Exp::new(1.0 / self.cfg.proc_jitter_mean)
                .expect("positive rate")
                .sample(self.rng)
        } else {
            0.0
        }
    }

    fn index_of(&self, did: DigitalIdentity) -> Option<usize> {
        self.nodes.iter().position(|n| n.did == did)
    }
}

/// Carries out `event` under `protocol`, appending its deliveries.
pub fn run_protocol<R: Rng>(event: &mut EcEvent, protocol: Protocol, ctx: &mut ProtocolContext<'_, R>) {
    let Some(s) = ctx.index_of(event.sender) else { return };
    let t0 = event.created_at;
    let me = ctx.nodes[s].position;
    let range = ctx.cfg.comm_range;
    let neighbors = in_range_set(s, ctx.nodes, range);
    match protocol {
        Protocol::Broadcast => {
            let end = ctx.medium.transmit(s, me, t0);
            for q in neighbors {
                let received_at = end + ctx.jitter();
                event.deliveries.push(Delivery {
                    receiver: ctx.nodes[q].did,
                    received_at,
                });
            }
        }
        Protocol::Feedback => {
            let query_end = ctx.medium.transmit(s, me, t0);
            let mut heard: Vec<(f64, usize)> = neighbors.iter().map(|&q| (query_end + ctx.jitter(), q)).collect();
            heard.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let own = ctx.fixes[s];
            let heading = ctx.nodes[s].velocity;
            let mut decide_at = query_end;
            let mut targets = Vec::new();
            for (t_q, q) in heard {
                let node = &ctx.nodes[q];
                let reply_end = ctx.medium.transmit(q, node.position, t_q);
                let arrival = reply_end + ctx.jitter();
                decide_at = decide_at.max(arrival);
                let reported_pos = node.position + gaussian3(ctx.rng, ctx.cfg.gnss_sigma);
                let reported_vel = node.velocity + gaussian3(ctx.rng, 0.1 * ctx.cfg.gnss_sigma);
                let rssi_now = rssi_range((node.position - me).norm(), ctx.cfg.rssi_sigma, ctx.rng);
                let rel = reported_pos - own.position_at(arrival);
                let behind = unit(&heading).is_none_or(|h| rel.dot(&h) < 0.0);
                let closing = match ctx.perceptions[s].beacons.get(&node.did) {
                    Some(prev) if arrival - prev.beacon.sent_at >= MIN_RATE_BASELINE => {
                        rssi_now < prev.rssi_range
                    }
                    _ => (reported_vel - own.velocity).dot(&rel) < 0.0,
                };
                if behind && closing {
                    targets.push(q);
                }
            }
            targets.sort_unstable();
            for q in targets {
                let end = ctx.medium.transmit(s, me, decide_at);
                let received_at = end + ctx.jitter();
                event.deliveries.push(Delivery {
                    receiver: ctx.nodes[q].did,
                    received_at,
                });
            }
        }
        Protocol::Dpi => {
            let lead = (t0 - ctx.frame_time).max(0.0);
            let heading = ctx.nodes[s].velocity;
            let margin = ctx.cfg.dpi_margin;
            let mut targets: Vec<DigitalIdentity> = ctx.perceptions[s]
                .bound_estimates(lead)
                .filter(|e| plausibly_intended(e, &heading, range, margin))
                .map(|e| e.did)
                .collect();
            targets.sort_unstable();
            targets.dedup();
            for did in targets {
                let end = ctx.medium.transmit(s, me, t0);
                let Some(q) = ctx.index_of(did) else { continue };
                if (ctx.nodes[q].position - me).norm() <= range {
                    let received_at = end + ctx.jitter();
                    event.deliveries.push(Delivery { receiver: did, received_at });
                }
            }
        }
    }
}
