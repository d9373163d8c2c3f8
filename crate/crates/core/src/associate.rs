//! Frame-to-frame association of visual measurements with predicted tracks.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fusion::{ConvertedMeasurement, TrackState};
use crate::identity::{cosine_unchecked, FeatureVector, SIMILARITY_FLOOR};
use crate::matcher::{bim_match_costs, CostMatrix, ExchangeGuard, MatcherParams};

/// Weight of the Euclidean tie-breaker added to association costs. Far below
/// any meaningful cost difference.
const TIE_BREAK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationConfig {
    /// Scores below this never associate.
    pub gate: f64,
    /// Blend between positional and appearance similarity when both sides
    /// carry an appearance vector.
    pub position_weight: f64,
    /// Optional range scale for the positional score, see
    /// [`crate::identity::slot_similarity`].
    pub magnitude_scale: Option<f64>,
    pub matcher: MatcherParams,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            gate: 0.5,
            position_weight: 0.7,
            magnitude_scale: None,
            matcher: MatcherParams {
                alpha: 1.0,
                epsilon: 1e-3,
                exchange: ExchangeGuard::Balanced,
            },
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gate) {
            return invalid(format!("gate {} outside [0, 1]", self.gate));
        }
        if !(0.0..=1.0).contains(&self.position_weight) {
            return invalid(format!("position weight {} outside [0, 1]", self.position_weight));
        }
        self.matcher.validate()
    }
}

/// One visual detection as seen by the associator.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationInput {
    pub measurement: ConvertedMeasurement,
    pub appearance: Option<FeatureVector>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// `(measurement index, track index)`, ordered by measurement.
    pub mapping: Vec<(usize, usize)>,
    pub unassociated_measurements: Vec<usize>,
    pub unassociated_tracks: Vec<usize>,
}

impl AssociationResult {
    pub fn track_for(&self, measurement: usize) -> Option<usize> {
        self.mapping.iter().find(|(k, _)| *k == measurement).map(|&(_, i)| i)
    }
}

fn position_score(y: &Vector3<f64>, pred: &Vector3<f64>, scale: Option<f64>) -> f64 {
    let d = cosine_unchecked(y.as_slice(), pred.as_slice());
    match scale {
        Some(s) if s > 0.0 => d * (-(y.norm() - pred.norm()).abs() / s).exp(),
        _ => d,
    }
}

/// Similarity of every measurement (rows) to every predicted track
/// (columns).
pub fn score_matrix(
    measurements: &[AssociationInput],
    tracks: &[TrackState],
    cfg: &AssociationConfig,
) -> Vec<Vec<f64>> {
    measurements
        .iter()
        .map(|m| {
            let y = m.measurement.debiased();
            tracks
                .iter()
                .map(|t| {
                    let s_pos = position_score(&y, &t.position(), cfg.magnitude_scale);
                    match (&m.appearance, &t.appearance) {
                        (Some(a), Some(b)) if a.dim() == b.dim() => {
                            let s_app = cosine_unchecked(a.values(), b.values());
                            cfg.position_weight * s_pos + (1.0 - cfg.position_weight) * s_app
                        }
                        _ => s_pos,
                    }
                })
                .collect()
        })
        .collect()
}

/// Zeroes every score below `threshold`.
pub fn gate(scores: &[Vec<f64>], threshold: f64) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| row.iter().map(|&s| if s < threshold { 0.0 } else { s }).collect())
        .collect()
}

/// One-to-one association maximizing similarity between measurements and
/// the tracks' predicted positions. Gated pairs are never associated.
pub fn associate(
    measurements: &[AssociationInput],
    tracks: &[TrackState],
    cfg: &AssociationConfig,
) -> Result<AssociationResult> {
    cfg.validate()?;
    let scores = gate(&score_matrix(measurements, tracks, cfg), cfg.gate);
    let mut out = AssociationResult::default();
    let mut track_used = vec![false; tracks.len()];
    for (rows, cols) in components(&scores, tracks.len()) {
        if let ([k], [i]) = (rows.as_slice(), cols.as_slice()) {
            out.mapping.push((*k, *i));
            track_used[*i] = true;
            continue;
        }
        let costs = CostMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            let (k, i) = (rows[a], cols[b]);
            let dist = (measurements[k].measurement.debiased() - tracks[i].position()).norm();
            1.0 / scores[k][i].max(SIMILARITY_FLOOR) + TIE_BREAK * dist / (1.0 + dist)
        })?;
        let matched = bim_match_costs(&costs, &cfg.matcher)?.result;
        for pair in &matched.pairs {
            let (k, i) = (rows[pair.visual], cols[pair.auditory]);
            if scores[k][i] > 0.0 {
                out.mapping.push((k, i));
                track_used[i] = true;
            }
        }
    }
    out.mapping.sort_unstable();
    out.unassociated_measurements = (0..measurements.len())
        .filter(|k| out.mapping.iter().all(|(m, _)| m != k))
        .collect();
    out.unassociated_tracks = (0..tracks.len()).filter(|&i| !track_used[i]).collect();
    Ok(out)
}

/// Groups measurements and tracks linked by ungated scores. Gated pairs
/// cost the same as padding, so components can be matched independently.
fn components(scores: &[Vec<f64>], tracks: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let rows = scores.len();
    let mut parent: Vec<usize> = (0..rows + tracks).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (k, row) in scores.iter().enumerate() {
        for (i, &s) in row.iter().enumerate() {
            if s > 0.0 {
                let (a, b) = (find(&mut parent, k), find(&mut parent, rows + i));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut slot = vec![usize::MAX; rows + tracks];
    for x in 0..rows + tracks {
        let r = find(&mut parent, x);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push((Vec::new(), Vec::new()));
        }
        let g = &mut groups[slot[r]];
        if x < rows {
            g.0.push(x);
        } else {
            g.1.push(x - rows);
        }
    }
    groups.retain(|(r, c)| !r.is_empty() && !c.is_empty());
    groups
}
