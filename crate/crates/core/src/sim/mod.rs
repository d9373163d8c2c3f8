//! Discrete-time swarm simulator for emergency messaging.

mod config;
mod metrics;
mod mobility;
mod perception;
mod protocol;
mod radio;
mod sensing;

use std::fmt::Write as _;
use std::fs;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{Protocol, SimConfig, VdVelocity};
pub use metrics::{disturbance_rate, hit_rate, mean, quantile, Accumulator, Counters, MetricsRecord};
pub use mobility::{random_appearance, step_mobility, Arena, Motion, UavNode};
pub use perception::{
    AuditoryEntry, FrameDetection, FrameReport, OwnFix, Perception, PerceptionParams, Track,
};
pub use protocol::{
    in_range_set, intended_set, is_intended, run_protocol, Delivery, EcEvent, ProtocolContext,
};
pub use radio::{emit_beacon, rssi_range, Beacon, BeaconRecord, Medium};
pub use sensing::{sense_visual, VisualDetection, VisualNoise};

use crate::error::{Error, Result};
use crate::identity::{DigitalIdentity, ObservationSet};

/// Independent random streams, so that e.g. the mobility of a seed is the
/// same under every protocol.
#[derive(Debug, Clone)]
struct Streams {
    mobility: ChaCha8Rng,
    radio: ChaCha8Rng,
    vision: ChaCha8Rng,
    events: ChaCha8Rng,
    protocol: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            mobility: stream(1),
            radio: stream(2),
            vision: stream(3),
            events: stream(4),
            protocol: stream(5),
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub events: Vec<EcEvent>,
}

impl RunOutput {
    /// One structured line per event.
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let c = e.counters(f64::INFINITY);
            let lat: Vec<String> = e
                .deliveries
                .iter()
                .map(|d| format!("{:.6}", (d.received_at - e.created_at) * 1e3))
                .collect();
            let _ = writeln!(
                out,
                "sender={} created_at={:.6} protocol={} intended={} ri={} ru={} latency_ms=[{}]",
                e.sender,
                e.created_at,
                self.metrics.protocol,
                e.intended.len(),
                c.ri,
                c.ru,
                lat.join(",")
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Beacon(usize),
    Event(usize),
}

/// One simulation in progress.
pub struct Simulation {
    cfg: SimConfig,
    arena: Arena,
    nodes: Vec<UavNode>,
    perceptions: Vec<Perception>,
    fixes: Vec<OwnFix>,
    medium: Medium,
    params: Option<PerceptionParams>,
    rng: Streams,
    next_beacon: Vec<f64>,
    schedule: Vec<(f64, usize)>,
    acc: Accumulator,
    events: Vec<EcEvent>,
}

impl Simulation {
    /// Random-waypoint swarm placed uniformly in the region.
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let arena = Arena::new(cfg.region, cfg.v_min, cfg.v_max);
        let mut rng = Streams::new(cfg.seed);
        let mut nodes: Vec<UavNode> = Vec::with_capacity(cfg.num_uavs);
        for i in 0..cfg.num_uavs {
            let mut placed = None;
            for _ in 0..10_000 {
                let p = arena.sample_point(&mut rng.mobility);
                if nodes
                    .iter()
                    .all(|n| (n.position - p).norm() > cfg.min_separation)
                {
                    placed = Some(p);
                    break;
                }
            }
            let p = placed.ok_or_else(|| {
                Error::Config(vec![format!(
                    "could not place UAV {i} with min_separation {}",
                    cfg.min_separation
                )])
            })?;
            nodes.push(UavNode::new_waypoint(did_of(i), p, &arena, &mut rng.mobility));
        }
        Self::assemble(cfg, arena, nodes, rng)
    }

    /// A swarm with caller-provided initial nodes. Their identities are
    /// reassigned to match their order.
    pub fn with_nodes(cfg: &SimConfig, mut nodes: Vec<UavNode>) -> Result<Self> {
        let cfg = SimConfig {
            num_uavs: nodes.len(),
            ..cfg.clone()
        };
        cfg.validate()?;
        let arena = Arena::new(cfg.region, cfg.v_min, cfg.v_max);
        for (i, n) in nodes.iter_mut().enumerate() {
            if !arena.contains(&n.position) {
                return Err(Error::InvalidInput(format!("node {i} starts outside the region")));
            }
            n.did = did_of(i);
        }
        let rng = Streams::new(cfg.seed);
        Self::assemble(&cfg, arena, nodes, rng)
    }

    fn assemble(cfg: &SimConfig, arena: Arena, nodes: Vec<UavNode>, mut rng: Streams) -> Result<Self> {
        let n = nodes.len();
        let next_beacon = (0..n)
            .map(|_| rng.radio.random::<f64>() * cfg.beacon_interval)
            .collect();
        let fixes = nodes
            .iter()
            .map(|node| OwnFix::from_beacon(&emit_beacon(node, 0.0, cfg.gnss_sigma, &mut rng.radio)))
            .collect();
        let schedule = ec_schedule(cfg, n, &mut rng.events);
        let params = match cfg.protocol {
            Protocol::Dpi => Some(PerceptionParams::from_config(cfg)?),
            _ => None,
        };
        Ok(Simulation {
            cfg: cfg.clone(),
            arena,
            medium: Medium::new(n, cfg.tx_airtime, cfg.carrier_sense_range),
            perceptions: vec![Perception::default(); n],
            nodes,
            fixes,
            params,
            rng,
            next_beacon,
            schedule,
            acc: Accumulator::default(),
            events: Vec::new(),
        })
    }

    pub fn nodes(&self) -> &[UavNode] {
        &self.nodes
    }

    pub fn perceptions(&self) -> &[Perception] {
        &self.perceptions
    }

    pub fn run(mut self) -> Result<RunOutput> {
        for k in 0..self.cfg.ticks() {
            self.tick(k)?;
        }
        let metrics = self
            .acc
            .finish(self.cfg.seed, self.cfg.protocol, self.nodes.len(), self.cfg.v_max);
        let out = RunOutput {
            metrics,
            events: self.events,
        };
        if let Some(path) = &self.cfg.log_path {
            fs::write(path, out.event_log())
                .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(out)
    }

    /// Advances the world by one visual frame.
    pub fn tick(&mut self, k: u64) -> Result<()> {
        let dt = self.cfg.vd_interval;
        let t0 = k as f64 * dt;
        let t1 = ((k + 1) as f64 * dt).min(self.cfg.duration.max(t0));
        if self.params.is_some() {
            self.perceive(t0)?;
        }

        let mut actions: Vec<(f64, Action)> = Vec::new();
        for (i, next) in self.next_beacon.iter_mut().enumerate() {
            while *next < t1 {
                actions.push((*next, Action::Beacon(i)));
                *next += self.cfg.beacon_interval;
            }
        }
        for (idx, &(t, _)) in self.schedule.iter().enumerate() {
            if t >= t0 && t < t1 {
                actions.push((t, Action::Event(idx)));
            }
        }
        actions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, action) in actions {
            match action {
                Action::Beacon(i) => self.beacon(i, t),
                Action::Event(idx) => self.ec_event(self.schedule[idx].1, t, t0),
            }
        }

        self.move_nodes(dt);
        self.medium.prune(t0 - 1.0);
        Ok(())
    }

    fn beacon(&mut self, i: usize, t: f64) {
        let cfg = &self.cfg;
        let b = emit_beacon(&self.nodes[i], t, cfg.gnss_sigma, &mut self.rng.radio);
        self.fixes[i] = OwnFix::from_beacon(&b);
        let at = self.nodes[i].position;
        self.medium.transmit(i, at, t);
        for j in 0..self.nodes.len() {
            if j == i {
                continue;
            }
            let dist = (self.nodes[j].position - at).norm();
            if dist > cfg.comm_range {
                continue;
            }
            let rssi = rssi_range(dist, cfg.rssi_sigma, &mut self.rng.radio);
            if self.params.is_some() && dist <= cfg.sense_range {
                self.acc.ad_range_errors.push((rssi - dist).abs());
            }
            self.perceptions[j].receive(BeaconRecord {
                beacon: b,
                rssi_range: rssi,
            });
        }
    }

    fn ec_event(&mut self, sender: usize, t: f64, frame_time: f64) {
        let range = self.cfg.comm_range;
        let mut event = EcEvent {
            sender: self.nodes[sender].did,
            created_at: t,
            intended: intended_set(sender, &self.nodes, range),
            in_range: in_range_set(sender, &self.nodes, range)
                .into_iter()
                .map(|q| self.nodes[q].did)
                .collect(),
            deliveries: Vec::new(),
        };
        let mut ctx = ProtocolContext {
            cfg: &self.cfg,
            nodes: &self.nodes,
            perceptions: &self.perceptions,
            fixes: &self.fixes,
            frame_time,
            medium: &mut self.medium,
            rng: &mut self.rng.protocol,
        };
        run_protocol(&mut event, self.cfg.protocol, &mut ctx);
        let timeout = self.cfg.settle_timeout;
        self.acc.events += 1;
        self.acc.counters.add(&event.counters(timeout));
        self.acc.latencies_ms.extend(event.intended_latencies_ms(timeout));
        self.events.push(event);
    }

    fn perceive(&mut self, now: f64) -> Result<()> {
        let params = self.params.as_ref().expect("perception enabled");
        let noise = VisualNoise {
            sigma_r: self.cfg.sigma_r,
            sigma_theta: self.cfg.sigma_theta,
            sigma_phi: self.cfg.sigma_phi,
            sigma_appearance: self.cfg.sigma_appearance,
        };
        for s in 0..self.nodes.len() {
            let frame: Vec<FrameDetection> = (0..self.nodes.len())
                .filter(|&q| q != s)
                .filter_map(|q| {
                    let det = sense_visual(
                        &self.nodes[s],
                        &self.nodes[q],
                        &noise,
                        self.cfg.sense_range,
                        &mut self.rng.vision,
                    )?;
                    Some(FrameDetection {
                        detection: det,
                        target: q,
                        true_range: (self.nodes[q].position - self.nodes[s].position).norm(),
                    })
                })
                .collect();
            let report = self.perceptions[s].step(now, &frame, &self.fixes[s], params, did_of)?;
            self.perceptions[s].expire(now, self.cfg.beacon_interval);
            self.acc.mapping_checks += report.mapping_checks;
            self.acc.mapping_correct += report.mapping_correct;
            self.acc.vd_range_errors.extend(report.vd_range_errors);
            self.acc.fused_range_errors.extend(report.fused_range_errors);
        }
        Ok(())
    }

    fn move_nodes(&mut self, dt: f64) {
        let sep = self.cfg.min_separation;
        for i in 0..self.nodes.len() {
            let mut next = self.nodes[i].clone();
            step_mobility(&mut next, dt, &self.arena, &mut self.rng.mobility);
            let crowded = sep > 0.0
                && self
                    .nodes
                    .iter()
                    .enumerate()
                    .any(|(j, o)| j != i && (o.position - next.position).norm() <= sep);
            if !crowded {
                self.nodes[i] = next;
            } else if matches!(self.nodes[i].motion, Motion::Waypoint { .. }) {
                // hold position and pick another leg
                self.nodes[i].redraw_leg(&self.arena, &mut self.rng.mobility);
            } else {
                self.nodes[i].velocity = nalgebra::Vector3::zeros();
            }
        }
    }
}

/// Digital identity of the node at `index`.
pub fn did_of(index: usize) -> DigitalIdentity {
    DigitalIdentity(index as u32 + 1)
}

/// EC senders and creation times: `ec_rate` distinct senders per second
/// after warmup, uniform within each second.
fn ec_schedule<R: Rng>(cfg: &SimConfig, n: usize, rng: &mut R) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut start = cfg.warmup;
    while start < cfg.duration {
        let len = (cfg.duration - start).min(1.0);
        let expected = cfg.ec_rate * len;
        let mut k = expected.floor() as usize;
        if rng.random::<f64>() < expected - expected.floor() {
            k += 1;
        }
        let mut batch: Vec<(f64, usize)> = sample(rng, n, k.min(n))
            .into_iter()
            .map(|s| (start + rng.random::<f64>() * len, s))
            .collect();
        batch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(batch);
        start += 1.0;
    }
    out
}

/// The two observation sets node `s` would match at `now`, built from
/// noiseless geometry. Exposed for inspection and tests.
pub fn build_observation_sets(
    sim: &Simulation,
    s: usize,
    now: f64,
    epoch: u64,
) -> Result<(ObservationSet, ObservationSet)> {
    use crate::fusion::unbiased_convert;
    use crate::identity::{Domain, FeatureVector, PhysicalIdentity};
    let feature = |v: nalgebra::Vector3<f64>| FeatureVector::new(vec![v.x, v.y, v.z]);
    let me = &sim.nodes[s];
    let mut quiet = ChaCha8Rng::seed_from_u64(0);
    let mut visual = Vec::new();
    for (q, other) in sim.nodes.iter().enumerate() {
        if q == s {
            continue;
        }
        if let Some(det) = sense_visual(me, other, &VisualNoise::NONE, sim.cfg.sense_range, &mut quiet) {
            let pos = unbiased_convert(&det.polar).debiased();
            visual.push(PhysicalIdentity::new(
                vec![feature(pos)?, feature(other.velocity - me.velocity)?],
                Domain::Visual,
                epoch,
            )?);
        }
    }
    let entries = sim.perceptions[s].auditory_entries(now, &sim.fixes[s], sim.cfg.beacon_interval);
    let auditory = entries
        .iter()
        .map(|e| {
            PhysicalIdentity::new(
                vec![feature(e.rel_position)?, feature(e.rel_velocity)?],
                Domain::Auditory,
                epoch,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        ObservationSet::visual(epoch, visual)?,
        ObservationSet::auditory(epoch, auditory, entries.iter().map(|e| e.did).collect())?,
    ))
}

/// Runs one configuration to completion.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    Simulation::new(cfg)?.run()
}
