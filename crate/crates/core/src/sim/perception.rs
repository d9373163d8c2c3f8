use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use super::config::{SimConfig, VdVelocity};
use super::radio::{Beacon, BeaconRecord};
use super::sensing::VisualDetection;
use crate::associate::{associate, AssociationConfig, AssociationInput};
use crate::error::Result;
use crate::fusion::{
    bind_identity, fuse_domains, kf_predict, kf_update, kf_update_state, unbiased_convert,
    ConvertedMeasurement, MotionModel, TrackState,
};
use crate::identity::{
    matching_weights, Domain, DigitalIdentity, FeatureVector, ObservationSet, PhysicalIdentity,
    SimilarityConfig, COST_CAP,
};
use crate::matcher::{bim_match_costs, build_cost_matrix, ExchangeGuard, MatcherParams};

/// Visual frames a track needs before it takes part in matching.
const MIN_HITS_FOR_MATCHING: u32 = 3;
const APPEARANCE_SMOOTHING: f64 = 0.2;

/// Parameters of the perception pipeline, derived from [`SimConfig`].
#[derive(Debug, Clone)]
pub struct PerceptionParams {
    pub motion: MotionModel,
    pub association: AssociationConfig,
    pub similarity: SimilarityConfig,
    pub matcher: MatcherParams,
    pub beacon_interval: f64,
    pub gnss_sigma: f64,
    pub ad_full_state: bool,
    pub vd_velocity: VdVelocity,
    /// Per-axis variance of a neighbor's absolute velocity, the prior of a
    /// new track.
    pub velocity_var: f64,
    pub max_misses: u32,
    /// Tracks join matching once their velocity standard deviation (m/s,
    /// per axis) drops to this.
    pub velocity_sd_gate: f64,
}

impl PerceptionParams {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Ok(PerceptionParams {
            motion: MotionModel::new(cfg.vd_interval, cfg.track_q)?,
            association: AssociationConfig {
                gate: cfg.assoc_gate,
                position_weight: cfg.assoc_position_weight,
                magnitude_scale: cfg.assoc_position_scale,
                ..AssociationConfig::default()
            },
            similarity: SimilarityConfig {
                distinguishability: cfg.distinguishability,
                weight_source: cfg.weight_source,
                magnitude_scales: (cfg.position_scale.is_some() || cfg.velocity_scale.is_some())
                    .then(|| vec![cfg.position_scale.unwrap_or(0.0), cfg.velocity_scale.unwrap_or(0.0)]),
            },
            matcher: MatcherParams {
                alpha: cfg.alpha,
                epsilon: cfg.epsilon,
                exchange: ExchangeGuard::default(),
            },
            beacon_interval: cfg.beacon_interval,
            gnss_sigma: cfg.gnss_sigma,
            ad_full_state: cfg.ad_full_state,
            vd_velocity: cfg.vd_velocity,
            // random heading, speed uniform in [v_min, v_max]
            velocity_var: ((cfg.v_min.powi(2) + cfg.v_min * cfg.v_max + cfg.v_max.powi(2)) / 9.0).max(1.0),
            max_misses: cfg.max_misses,
            velocity_sd_gate: cfg.velocity_sd_gate,
        })
    }
}

/// One neighbor track held by an observer.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub state: TrackState,
    /// Debiased converted position of the two most recent detections.
    pub last_position: Option<Vector3<f64>>,
    pub prev_position: Option<Vector3<f64>>,
    pub hits: u32,
    pub misses: u32,
    /// Node index behind the last associated detection. Only used to score
    /// the simulation, never by the pipeline itself.
    pub truth: Option<usize>,
    /// Send time of the last beacon fused into this track.
    pub last_fused: Option<f64>,
    /// Has entered matching at least once.
    pub eligible: bool,
}

/// A detection handed to the pipeline, with the hidden labels used for
/// scoring.
#[derive(Debug, Clone)]
pub struct FrameDetection {
    pub detection: VisualDetection,
    pub target: usize,
    pub true_range: f64,
}

/// The observer's own kinematics as known from its GNSS fixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwnFix {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub at: f64,
}

impl OwnFix {
    pub fn from_beacon(b: &Beacon) -> Self {
        OwnFix {
            position: b.position,
            velocity: b.velocity,
            at: b.sent_at,
        }
    }

    pub fn position_at(&self, now: f64) -> Vector3<f64> {
        self.position + self.velocity * (now - self.at)
    }
}

/// One auditory identity with the data needed to fuse it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditoryEntry {
    pub did: DigitalIdentity,
    pub sent_at: f64,
    pub rel_position: Vector3<f64>,
    pub rel_velocity: Vector3<f64>,
    pub age: f64,
}

/// A bound neighbor extrapolated to the time of use.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub did: DigitalIdentity,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub covariance: Matrix6<f64>,
}

/// Scoring output of one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameReport {
    pub matched: bool,
    pub mapping_checks: u64,
    pub mapping_correct: u64,
    pub vd_range_errors: Vec<f64>,
    pub fused_range_errors: Vec<f64>,
}

/// Neighbor table plus beacon cache of one node.
#[derive(Debug, Clone, Default)]
pub struct Perception {
    pub tracks: Vec<Track>,
    pub beacons: BTreeMap<DigitalIdentity, BeaconRecord>,
    pub new_beacons: bool,
    pub epoch: u64,
}

fn to_feature(v: Vector3<f64>) -> FeatureVector {
    FeatureVector::new(vec![v.x, v.y, v.z]).expect("finite kinematics")
}

impl Perception {
    pub fn receive(&mut self, record: BeaconRecord) {
        self.beacons.insert(record.beacon.did, record);
        self.new_beacons = true;
    }

    /// Auditory entries from beacons no older than two beacon intervals,
    /// extrapolated to `now` with their reported velocity.
    pub fn auditory_entries(&self, now: f64, own: &OwnFix, beacon_interval: f64) -> Vec<AuditoryEntry> {
        let me = own.position_at(now);
        self.beacons
            .values()
            .filter(|r| now - r.beacon.sent_at <= 2.0 * beacon_interval + 1e-9)
            .map(|r| {
                let b = &r.beacon;
                let age = (now - b.sent_at).max(0.0);
                AuditoryEntry {
                    did: b.did,
                    sent_at: b.sent_at,
                    rel_position: b.position + b.velocity * age - me,
                    rel_velocity: b.velocity - own.velocity,
                    age,
                }
            })
            .collect()
    }

    /// Drops beacons too old to ever be used again.
    pub fn expire(&mut self, now: f64, beacon_interval: f64) {
        self.beacons
            .retain(|_, r| now - r.beacon.sent_at <= 2.0 * beacon_interval + 1e-9);
    }

    /// Tracks whose bound identity is known, with their estimated relative
    /// position extrapolated by `lead` seconds.
    pub fn bound_estimates(&self, lead: f64) -> impl Iterator<Item = BoundEstimate> + '_ {
        let mut f = Matrix6::identity();
        f.fixed_view_mut::<3, 3>(0, 3).fill_diagonal(lead);
        self.tracks.iter().filter_map(move |t| {
            t.state.bound_did.map(|did| BoundEstimate {
                did,
                position: t.state.position() + t.state.velocity() * lead,
                velocity: t.state.velocity(),
                covariance: f * t.state.p * f.transpose(),
            })
        })
    }

    /// One visual frame: predict, associate, update and spawn, then match
    /// against the auditory set if new beacons arrived since the last match.
    pub fn step(
        &mut self,
        now: f64,
        frame: &[FrameDetection],
        own: &OwnFix,
        params: &PerceptionParams,
        did_of: impl Fn(usize) -> DigitalIdentity,
    ) -> Result<FrameReport> {
        self.epoch += 1;
        let epoch = self.epoch;
        for t in &mut self.tracks {
            t.state = kf_predict(&t.state, &params.motion);
        }

        let converted: Vec<ConvertedMeasurement> =
            frame.iter().map(|d| unbiased_convert(&d.detection.polar)).collect();
        let inputs: Vec<AssociationInput> = frame
            .iter()
            .zip(&converted)
            .map(|(d, z)| AssociationInput {
                measurement: *z,
                appearance: Some(d.detection.appearance.clone()),
            })
            .collect();
        let states: Vec<TrackState> = self.tracks.iter().map(|t| t.state.clone()).collect();
        let assoc = associate(&inputs, &states, &params.association)?;

        // visual identities: (track index, measurement index)
        let mut seen: Vec<(usize, usize)> = Vec::new();
        let mut fresh_visual = false;
        let mut vd_updated: Vec<Option<TrackState>> = vec![None; self.tracks.len()];
        for &(k, i) in &assoc.mapping {
            let updated = kf_update(&self.tracks[i].state, &converted[k])?;
            let vel_sd = (updated.p.fixed_view::<3, 3>(3, 3).trace() / 3.0).sqrt();
            vd_updated[i] = Some(updated);
            let t = &mut self.tracks[i];
            t.hits += 1;
            t.misses = 0;
            t.truth = Some(frame[k].target);
            t.prev_position = t.last_position;
            t.last_position = Some(converted[k].debiased());
            let app = &frame[k].detection.appearance;
            t.state.appearance = Some(match &t.state.appearance {
                Some(old) if old.dim() == app.dim() => {
                    let v = old
                        .values()
                        .iter()
                        .zip(app.values())
                        .map(|(a, b)| (1.0 - APPEARANCE_SMOOTHING) * a + APPEARANCE_SMOOTHING * b)
                        .collect();
                    FeatureVector::new(v)?
                }
                _ => app.clone(),
            });
            if t.hits >= MIN_HITS_FOR_MATCHING && vel_sd <= params.velocity_sd_gate {
                seen.push((i, k));
                fresh_visual |= !t.eligible;
                t.eligible = true;
            }
        }

        let mut report = FrameReport::default();
        let ad = if (self.new_beacons || fresh_visual) && !seen.is_empty() {
            self.auditory_entries(now, own, params.beacon_interval)
        } else {
            Vec::new()
        };
        let mut ad_for_track: Vec<Option<usize>> = vec![None; self.tracks.len()];
        if !ad.is_empty() {
            self.new_beacons = false;
            report.matched = true;
            let visual: Vec<PhysicalIdentity> = seen
                .iter()
                .map(|&(i, k)| {
                    let upd = vd_updated[i].as_ref().expect("seen tracks were updated");
                    let vel = match (params.vd_velocity, self.tracks[i].prev_position) {
                        (VdVelocity::FiniteDifference, Some(prev)) => {
                            (converted[k].debiased() - prev) / params.motion.dt
                        }
                        _ => upd.velocity(),
                    };
                    PhysicalIdentity::new(
                        vec![to_feature(converted[k].debiased()), to_feature(vel)],
                        Domain::Visual,
                        epoch,
                    )
                })
                .collect::<Result<_>>()?;
            let auditory: Vec<PhysicalIdentity> = ad
                .iter()
                .map(|e| {
                    PhysicalIdentity::new(
                        vec![to_feature(e.rel_position), to_feature(e.rel_velocity)],
                        Domain::Auditory,
                        epoch,
                    )
                })
                .collect::<Result<_>>()?;
            let vf_set = ObservationSet::visual(epoch, visual)?;
            let af_set = ObservationSet::auditory(epoch, auditory, ad.iter().map(|e| e.did).collect())?;
            let w = matching_weights(&vf_set, &af_set, &params.similarity)?;
            let costs = build_cost_matrix(&vf_set, &af_set, &w, &params.similarity)?;
            let result = bim_match_costs(&costs, &params.matcher)?.result;
            for pair in &result.pairs {
                if pair.cost >= COST_CAP {
                    continue;
                }
                let (i, _) = seen[pair.visual];
                let did = ad[pair.auditory].did;
                for other in &mut self.tracks {
                    if other.state.bound_did == Some(did) {
                        other.state.bound_did = None;
                    }
                }
                self.tracks[i].state = bind_identity(&self.tracks[i].state, did);
                ad_for_track[i] = Some(pair.auditory);
            }
            // scoring: every matched-eligible track whose neighbor is audible
            for &(i, _) in &seen {
                let Some(truth) = self.tracks[i].truth else { continue };
                let truth_did = did_of(truth);
                if ad.iter().any(|e| e.did == truth_did) {
                    report.mapping_checks += 1;
                    if self.tracks[i].state.bound_did == Some(truth_did) {
                        report.mapping_correct += 1;
                    }
                }
            }
        }

        for &(k, i) in &assoc.mapping {
            let predicted = self.tracks[i].state.clone();
            let vd_state = vd_updated[i].take().expect("associated tracks were updated");
            let fresh_ad = ad_for_track[i]
                .map(|j| ad[j])
                .filter(|e| self.tracks[i].last_fused.is_none_or(|t| e.sent_at > t));
            let mut next = match fresh_ad {
                Some(e) if params.ad_full_state => {
                    let mut z = Vector6::zeros();
                    z.fixed_rows_mut::<3>(0).copy_from(&e.rel_position);
                    z.fixed_rows_mut::<3>(3).copy_from(&e.rel_velocity);
                    let (pv, vv) = ad_variances(params.gnss_sigma, e.age);
                    let mut r = Matrix6::zeros();
                    for d in 0..3 {
                        r[(d, d)] = pv;
                        r[(d + 3, d + 3)] = vv;
                    }
                    kf_update_state(&vd_state, &z, &r)?
                }
                Some(e) => {
                    let (pv, _) = ad_variances(params.gnss_sigma, e.age);
                    let ad_z = ConvertedMeasurement::cartesian(e.rel_position, Matrix3::identity() * pv);
                    fuse_domains(&predicted, &converted[k], &ad_z)?
                }
                None => vd_state,
            };
            if let Some(e) = fresh_ad {
                self.tracks[i].last_fused = Some(e.sent_at);
            }
            next.bound_did = self.tracks[i].state.bound_did;
            next.appearance = self.tracks[i].state.appearance.clone();
            next.epoch = epoch;
            self.tracks[i].state = next;
            if self.tracks[i].state.bound_did.is_some() {
                let truth = frame[k].true_range;
                report.vd_range_errors.push((converted[k].debiased().norm() - truth).abs());
                report
                    .fused_range_errors
                    .push((self.tracks[i].state.position().norm() - truth).abs());
            }
        }

        for &i in &assoc.unassociated_tracks {
            self.tracks[i].misses += 1;
        }
        for &k in &assoc.unassociated_measurements {
            let mut state = TrackState::from_measurement(&converted[k], params.velocity_var, epoch);
            state.x.fixed_rows_mut::<3>(3).copy_from(&(-own.velocity));
            state.appearance = Some(frame[k].detection.appearance.clone());
            self.tracks.push(Track {
                state,
                last_position: Some(converted[k].debiased()),
                prev_position: None,
                hits: 1,
                misses: 0,
                truth: Some(frame[k].target),
                last_fused: None,
                eligible: false,
            });
        }
        self.tracks.retain(|t| t.misses <= params.max_misses);
        Ok(report)
    }
}

/// Per-axis variances of a relative beacon position and velocity: both ends
/// carry GNSS noise, and the position is extrapolated over `age`.
fn ad_variances(gnss_sigma: f64, age: f64) -> (f64, f64) {
    let vel = 2.0 * (0.1 * gnss_sigma).powi(2);
    let pos = 2.0 * gnss_sigma.powi(2) + age * age * vel;
    (pos.max(1e-6), vel.max(1e-8))
}
