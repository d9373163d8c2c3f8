//! Identity types and the weighted feature similarity used to compare
//! physical identities observed in the visual and auditory domains.
//!
//! A physical identity is an ordered list of feature slots (relative
//! position, relative velocity, ...). Two identities are compared slot by
//! slot with a clamped cosine similarity, and the slot scores are combined
//! by a weighted harmonic mean whose weights reflect how well each slot
//! separates the neighbors currently in view.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM_TOL: f64 = 1e-9;

/// Floor applied to each slot similarity before it is inverted in the
/// harmonic mean.
pub const SIMILARITY_FLOOR: f64 = 1e-6;

/// Sentinel cost. Dominates every real matching cost and marks virtual
/// (padding) entries of a cost matrix.
pub const COST_CAP: f64 = 1e6;

/// A vector-valued physical feature. Dimension is at least 2 and every
/// entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return invalid(format!(
                "feature dimension must be >= 2, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("feature entries must be finite");
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<[f64; 3]> for FeatureVector {
    /// Panics if any entry is not finite.
    fn from(v: [f64; 3]) -> Self {
        FeatureVector::new(v.to_vec()).expect("finite 3-vector")
    }
}

impl From<nalgebra::Vector3<f64>> for FeatureVector {
    fn from(v: nalgebra::Vector3<f64>) -> Self {
        FeatureVector::from([v.x, v.y, v.z])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Visual,
    Auditory,
}

/// Unique network address of a UAV.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct DigitalIdentity(pub u32);

impl fmt::Display for DigitalIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = (0x0a00_0000u32 | (self.0 & 0x00ff_ffff)).to_be_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

/// The set of features describing one observed UAV in one domain at one
/// epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalIdentity {
    pub features: Vec<FeatureVector>,
    pub domain: Domain,
    pub epoch: u64,
}

impl PhysicalIdentity {
    pub fn new(features: Vec<FeatureVector>, domain: Domain, epoch: u64) -> Result<Self> {
        if features.is_empty() {
            return invalid("a physical identity needs at least one feature");
        }
        Ok(PhysicalIdentity {
            features,
            domain,
            epoch,
        })
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    fn schema(&self) -> Vec<usize> {
        self.features.iter().map(FeatureVector::dim).collect()
    }

    fn same_schema(&self, other: &PhysicalIdentity) -> bool {
        self.features.len() == other.features.len()
            && self.features.iter().zip(&other.features).all(|(a, b)| a.dim() == b.dim())
    }
}

/// All identities seen in one domain at one epoch. Auditory sets carry one
/// digital identity per member, visual sets carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub domain: Domain,
    pub epoch: u64,
    identities: Vec<PhysicalIdentity>,
    digital_ids: Option<Vec<DigitalIdentity>>,
}

impl ObservationSet {
    pub fn visual(epoch: u64, identities: Vec<PhysicalIdentity>) -> Result<Self> {
        Self::checked(Domain::Visual, epoch, identities, None)
    }

    pub fn auditory(
        epoch: u64,
        identities: Vec<PhysicalIdentity>,
        digital_ids: Vec<DigitalIdentity>,
    ) -> Result<Self> {
        if digital_ids.len() != identities.len() {
            return invalid(format!(
                "auditory set has {} identities but {} digital ids",
                identities.len(),
                digital_ids.len()
            ));
        }
        Self::checked(Domain::Auditory, epoch, identities, Some(digital_ids))
    }

    fn checked(
        domain: Domain,
        epoch: u64,
        identities: Vec<PhysicalIdentity>,
        digital_ids: Option<Vec<DigitalIdentity>>,
    ) -> Result<Self> {
        if let Some(first) = identities.first() {
            let schema = first.schema();
            for (idx, id) in identities.iter().enumerate() {
                if id.domain != domain {
                    return invalid(format!("identity {idx} is not in the {domain:?} domain"));
                }
                if id.schema() != schema {
                    return invalid(format!("identity {idx} does not match the set's feature schema"));
                }
            }
        }
        Ok(ObservationSet {
            domain,
            epoch,
            identities,
            digital_ids,
        })
    }

    pub fn identities(&self) -> &[PhysicalIdentity] {
        &self.identities
    }

    pub fn digital_ids(&self) -> Option<&[DigitalIdentity]> {
        self.digital_ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    /// Per-slot dimensions, `None` for an empty set.
    pub fn schema(&self) -> Option<Vec<usize>> {
        self.identities.first().map(PhysicalIdentity::schema)
    }

    fn slot(&self, k: usize) -> Vec<&FeatureVector> {
        self.identities.iter().map(|id| &id.features[k]).collect()
    }
}

/// How the distinguishability of one member within a feature slot is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistinguishabilityRule {
    /// Sum over the other members of "similar to this one and to no other".
    #[default]
    Literal,
    /// Product over the other members of "dissimilar to this one".
    Exclusive,
}

/// Which observation sets feed the dynamic weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    #[default]
    Visual,
    /// Average of the raw weights computed on each nonempty set.
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub distinguishability: DistinguishabilityRule,
    pub weight_source: WeightSource,
    /// Per-slot magnitude scales. When set, slot similarity becomes
    /// `D * exp(-| |a| - |b| | / scale)`; `None` keeps the plain cosine.
    pub magnitude_scales: Option<Vec<f64>>,
}

impl SimilarityConfig {
    fn scale(&self, slot: usize) -> Option<f64> {
        self.magnitude_scales
            .as_ref()
            .and_then(|s| s.get(slot).copied())
            .filter(|s| *s > 0.0)
    }
}

/// Clamped cosine similarity in `[0, 1]`.
///
/// Two (numerically) zero vectors are identical, a zero and a nonzero vector
/// share nothing.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(cosine_unchecked(a.values(), b.values()))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    match (na < ZERO_NORM_TOL, nb < ZERO_NORM_TOL) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(0.0, 1.0),
    }
}

/// Slot similarity, optionally attenuated by the difference in magnitude.
pub fn slot_similarity(
    a: &FeatureVector,
    b: &FeatureVector,
    magnitude_scale: Option<f64>,
) -> Result<f64> {
    let d = cosine_similarity(a, b)?;
    Ok(match magnitude_scale {
        Some(s) if s > 0.0 => d * (-(a.norm() - b.norm()).abs() / s).exp(),
        _ => d,
    })
}

fn distinguishability_from_row(row: &[f64], i: usize, rule: DistinguishabilityRule) -> f64 {
    distinguishability_with(row, i, rule, &mut Vec::new())
}

/// `scratch` holds prefix products between calls.
fn distinguishability_with(row: &[f64], i: usize, rule: DistinguishabilityRule, scratch: &mut Vec<f64>) -> f64 {
    let others = || row.iter().enumerate().filter(move |&(m, _)| m != i).map(|(_, &d)| d);
    if row.len() <= 1 {
        return 1.0;
    }
    match rule {
        DistinguishabilityRule::Exclusive => others().map(|d| 1.0 - d).product(),
        DistinguishabilityRule::Literal => {
            // prefix[j] * suffix = product of (1 - d_m) over m != j
            scratch.clear();
            scratch.push(1.0);
            for d in others() {
                let last = *scratch.last().expect("seeded");
                scratch.push(last * (1.0 - d));
            }
            let mut suffix = 1.0;
            let mut total = 0.0;
            let n = row.len() - 1;
            for (j, d) in others_rev(row, i).enumerate() {
                let idx = n - 1 - j;
                total += d * scratch[idx] * suffix;
                suffix *= 1.0 - d;
            }
            total.clamp(0.0, 1.0)
        }
    }
}

fn others_rev(row: &[f64], i: usize) -> impl Iterator<Item = f64> + '_ {
    row.iter().enumerate().rev().filter(move |&(m, _)| m != i).map(|(_, &d)| d)
}

fn slot_distinguishability<F: Borrow<FeatureVector>>(
    slot: &[F],
    rule: DistinguishabilityRule,
    magnitude_scale: Option<f64>,
) -> Result<Vec<f64>> {
    let n = slot.len();
    let mut sim = vec![0.0; n * n];
    for a in 0..n {
        sim[a * n + a] = 1.0;
        for b in (a + 1)..n {
            let d = slot_similarity(slot[a].borrow(), slot[b].borrow(), magnitude_scale)?;
            sim[a * n + b] = d;
            sim[b * n + a] = d;
        }
    }
    let mut scratch = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| distinguishability_with(&sim[i * n..(i + 1) * n], i, rule, &mut scratch))
        .collect())
}

/// Distinguishability of member `i` within one feature slot.
///
/// A singleton slot scores 1: with nothing to confuse it with, the member is
/// fully distinguishable.
pub fn distinguishability<F: Borrow<FeatureVector>>(
    slot: &[F],
    i: usize,
    rule: DistinguishabilityRule,
) -> Result<f64> {
    if i >= slot.len() {
        return invalid(format!("index {i} out of range for slot of {}", slot.len()));
    }
    let row = slot
        .iter()
        .map(|f| cosine_similarity(slot[i].borrow(), f.borrow()))
        .collect::<Result<Vec<_>>>()?;
    Ok(distinguishability_from_row(&row, i, rule))
}

/// Raw and normalized per-slot weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl WeightVector {
    /// Normalizes `raw`, falling back to uniform weights when they sum to 0.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return invalid("weight vector needs at least one slot");
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("raw weights must be finite and nonnegative");
        }
        let total: f64 = raw.iter().sum();
        let normalized = if total > 0.0 {
            raw.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / raw.len() as f64; raw.len()]
        };
        Ok(WeightVector { raw, normalized })
    }

    pub fn uniform(slots: usize) -> Result<Self> {
        Self::from_raw(vec![1.0; slots])
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

fn raw_weights(set: &ObservationSet, cfg: &SimilarityConfig) -> Result<Vec<f64>> {
    let k_f = set.identities[0].num_features();
    (0..k_f)
        .map(|k| {
            let p = slot_distinguishability(&set.slot(k), cfg.distinguishability, cfg.scale(k))?;
            Ok(p.iter().sum::<f64>() / p.len() as f64)
        })
        .collect()
}

/// Per-slot weights: the mean distinguishability of the set's members in
/// each slot, then normalized to sum to 1.
pub fn dynamic_weights(set: &ObservationSet, cfg: &SimilarityConfig) -> Result<WeightVector> {
    if set.is_empty() {
        return invalid("cannot weight an empty observation set");
    }
    WeightVector::from_raw(raw_weights(set, cfg)?)
}

/// Weights for one visual/auditory matching call, honoring
/// [`SimilarityConfig::weight_source`].
pub fn matching_weights(
    visual: &ObservationSet,
    auditory: &ObservationSet,
    cfg: &SimilarityConfig,
) -> Result<WeightVector> {
    match cfg.weight_source {
        WeightSource::Visual => dynamic_weights(visual, cfg),
        WeightSource::Both => {
            let sets: Vec<&ObservationSet> =
                [visual, auditory].into_iter().filter(|s| !s.is_empty()).collect();
            if sets.is_empty() {
                return invalid("cannot weight two empty observation sets");
            }
            let per_set = sets
                .iter()
                .map(|s| raw_weights(s, cfg))
                .collect::<Result<Vec<_>>>()?;
            let k_f = per_set[0].len();
            if per_set.iter().any(|w| w.len() != k_f) {
                return invalid("visual and auditory sets have different feature counts");
            }
            let raw = (0..k_f)
                .map(|k| per_set.iter().map(|w| w[k]).sum::<f64>() / per_set.len() as f64)
                .collect();
            WeightVector::from_raw(raw)
        }
    }
}

/// Weighted harmonic mean of the per-slot similarities of two identities.
pub fn pairwise_similarity(
    vf: &PhysicalIdentity,
    af: &PhysicalIdentity,
    w: &WeightVector,
    cfg: &SimilarityConfig,
) -> Result<f64> {
    if !vf.same_schema(af) {
        return invalid("identities have different feature schemas");
    }
    if w.len() != vf.num_features() {
        return invalid(format!(
            "{} weights for {} feature slots",
            w.len(),
            vf.num_features()
        ));
    }
    let mut denom = 0.0;
    for (k, (a, b)) in vf.features.iter().zip(&af.features).enumerate() {
        let d = slot_similarity(a, b, cfg.scale(k))?.max(SIMILARITY_FLOOR);
        denom += w.normalized[k] / d;
    }
    if denom <= 0.0 {
        // every weight is zero; cannot happen for a normalized vector
        return invalid("weights sum to zero");
    }
    Ok((1.0 / denom).min(1.0))
}

/// Reciprocal of a similarity, capped at [`COST_CAP`].
pub fn matching_cost(s: f64) -> Result<f64> {
    if s.is_nan() || s <= 0.0 {
        return invalid(format!("similarity must be positive, got {s}"));
    }
    Ok((1.0 / s).min(COST_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn visual(members: Vec<Vec<Vec<f64>>>) -> ObservationSet {
        let ids = members
            .into_iter()
            .map(|slots| {
                PhysicalIdentity::new(slots.iter().map(|s| fv(s)).collect(), Domain::Visual, 0)
                    .unwrap()
            })
            .collect();
        ObservationSet::visual(0, ids).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&fv(&[1., 0., 0.]), &fv(&[1., 0., 0.])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1., 0.]), &fv(&[0., 1.])).unwrap(), 0.0);
        assert_relative_eq!(
            cosine_similarity(&fv(&[1., 2., 2.]), &fv(&[2., 4., 4.])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine_similarity(&fv(&[1., 0.]), &fv(&[-1., 0.])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_vectors() {
        assert_eq!(cosine_similarity(&fv(&[0., 0.]), &fv(&[0., 0.])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[0., 0.]), &fv(&[1., 0.])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&fv(&[3., 1.]), &fv(&[1e-12, 0.])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&fv(&[1., 0.]), &fv(&[1., 0., 0.])),
            Err(crate::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn feature_vector_rejects_scalars_and_nan() {
        assert!(FeatureVector::new(vec![1.0]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn distinguishability_examples() {
        // D(0,1) = cos(60 deg) = 0.5
        let two = [fv(&[1., 0.]), fv(&[0.5, 3f64.sqrt() / 2.])];
        assert_relative_eq!(
            distinguishability(&two, 0, DistinguishabilityRule::Literal).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // D(0,1) = 1, D(0,2) = 0
        let three = [fv(&[1., 0.]), fv(&[2., 0.]), fv(&[0., 1.])];
        assert_relative_eq!(
            distinguishability(&three, 0, DistinguishabilityRule::Literal).unwrap(),
            1.0
        );
        // D(0,1) = D(0,2) = 0
        let orth = [fv(&[1., 0., 0.]), fv(&[0., 1., 0.]), fv(&[0., 0., 1.])];
        assert_eq!(distinguishability(&orth, 0, DistinguishabilityRule::Literal).unwrap(), 0.0);
        assert_eq!(distinguishability(&orth, 0, DistinguishabilityRule::Exclusive).unwrap(), 1.0);
    }

    #[test]
    fn singleton_is_fully_distinguishable() {
        let one = [fv(&[1., 2.])];
        assert_eq!(distinguishability(&one, 0, DistinguishabilityRule::Literal).unwrap(), 1.0);
        assert_eq!(distinguishability(&one, 0, DistinguishabilityRule::Exclusive).unwrap(), 1.0);
        assert!(distinguishability(&one, 1, DistinguishabilityRule::Literal).is_err());
    }

    #[test]
    fn prefix_products_match_direct_evaluation() {
        let row = [0.3, 1.0, 0.7, 0.2, 0.9];
        for i in 0..row.len() {
            let mut direct = 0.0;
            for j in 0..row.len() {
                if j == i {
                    continue;
                }
                let mut prod = 1.0;
                for (m, v) in row.iter().enumerate() {
                    if m != i && m != j {
                        prod *= 1.0 - v;
                    }
                }
                direct += row[j] * prod;
            }
            assert_relative_eq!(
                distinguishability_from_row(&row, i, DistinguishabilityRule::Literal),
                direct.clamp(0.0, 1.0),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn weights_two_member_example() {
        let s60 = 3f64.sqrt() / 2.;
        let set = visual(vec![
            vec![vec![1., 0.], vec![1., 1.]],
            vec![vec![0.5, s60], vec![2., 2.]],
        ]);
        let w = dynamic_weights(&set, &SimilarityConfig::default()).unwrap();
        assert_relative_eq!(w.raw[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.raw[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.normalized[0], 1. / 3., epsilon = 1e-12);
        assert_relative_eq!(w.normalized[1], 2. / 3., epsilon = 1e-12);
    }

    #[test]
    fn weights_fall_back_to_uniform() {
        // Every slot orthogonal across three members: literal rule gives 0.
        let set = visual(vec![
            vec![vec![1., 0., 0.], vec![1., 0., 0.]],
            vec![vec![0., 1., 0.], vec![0., 1., 0.]],
            vec![vec![0., 0., 1.], vec![0., 0., 1.]],
        ]);
        let w = dynamic_weights(&set, &SimilarityConfig::default()).unwrap();
        assert_eq!(w.raw, vec![0.0, 0.0]);
        assert_eq!(w.normalized, vec![0.5, 0.5]);

        let same = WeightVector::from_raw(vec![0.4; 3]).unwrap();
        for v in same.normalized {
            assert_relative_eq!(v, 1. / 3.);
        }
    }

    #[test]
    fn weights_reject_empty_set() {
        let empty = ObservationSet::visual(0, vec![]).unwrap();
        assert!(dynamic_weights(&empty, &SimilarityConfig::default()).is_err());
    }

    #[test]
    fn observation_set_schema_checks() {
        let a = PhysicalIdentity::new(vec![fv(&[1., 0.])], Domain::Visual, 0).unwrap();
        let b = PhysicalIdentity::new(vec![fv(&[1., 0., 0.])], Domain::Visual, 0).unwrap();
        assert!(ObservationSet::visual(0, vec![a.clone(), b]).is_err());
        assert!(ObservationSet::auditory(0, vec![a.clone()], vec![]).is_err());
        // domain tag must agree with the set
        assert!(ObservationSet::auditory(0, vec![a], vec![DigitalIdentity(1)]).is_err());
    }

    #[test]
    fn pairwise_similarity_examples() {
        let cfg = SimilarityConfig::default();
        let w = WeightVector::uniform(2).unwrap();
        let s60 = 3f64.sqrt() / 2.;
        let vf = PhysicalIdentity::new(vec![fv(&[1., 0.]), fv(&[1., 0.])], Domain::Visual, 0)
            .unwrap();
        let same = PhysicalIdentity::new(vec![fv(&[2., 0.]), fv(&[3., 0.])], Domain::Auditory, 0)
            .unwrap();
        assert_relative_eq!(pairwise_similarity(&vf, &same, &w, &cfg).unwrap(), 1.0);

        let half = PhysicalIdentity::new(
            vec![fv(&[1., 0.]), fv(&[0.5, s60])],
            Domain::Auditory,
            0,
        )
        .unwrap();
        assert_relative_eq!(
            pairwise_similarity(&vf, &half, &w, &cfg).unwrap(),
            2. / 3.,
            epsilon = 1e-12
        );

        let orth = PhysicalIdentity::new(vec![fv(&[0., 1.]), fv(&[1., 0.])], Domain::Auditory, 0)
            .unwrap();
        let s = pairwise_similarity(&vf, &orth, &w, &cfg).unwrap();
        assert!(s <= 2. * SIMILARITY_FLOOR && s > 0.0);

        let wrong = PhysicalIdentity::new(vec![fv(&[1., 0.])], Domain::Auditory, 0).unwrap();
        assert!(pairwise_similarity(&vf, &wrong, &w, &cfg).is_err());
    }

    #[test]
    fn cost_examples() {
        assert_eq!(matching_cost(1.0).unwrap(), 1.0);
        assert_relative_eq!(matching_cost(2. / 3.).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(matching_cost(1e-9).unwrap(), COST_CAP);
        assert!(matching_cost(0.0).is_err());
        assert!(matching_cost(-1.0).is_err());
        assert!(matching_cost(f64::NAN).is_err());
    }

    #[test]
    fn magnitude_aware_similarity_separates_ranges() {
        let near = fv(&[10., 0., 0.]);
        let far = fv(&[100., 0., 0.]);
        assert_eq!(slot_similarity(&near, &far, None).unwrap(), 1.0);
        let s = slot_similarity(&near, &far, Some(30.0)).unwrap();
        assert_relative_eq!(s, (-3.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn weights_from_both_domains() {
        let cfg = SimilarityConfig {
            weight_source: WeightSource::Both,
            ..Default::default()
        };
        let v = visual(vec![vec![vec![1., 0.]], vec![vec![0., 1.]]]);
        let a_id = |x: f64, y: f64| {
            PhysicalIdentity::new(vec![fv(&[x, y])], Domain::Auditory, 0).unwrap()
        };
        let a = ObservationSet::auditory(
            0,
            vec![a_id(1., 0.), a_id(1., 0.)],
            vec![DigitalIdentity(1), DigitalIdentity(2)],
        )
        .unwrap();
        // visual members orthogonal -> 0, auditory identical -> 1
        let w = matching_weights(&v, &a, &cfg).unwrap();
        assert_relative_eq!(w.raw[0], 0.5);
    }

    #[test]
    fn digital_identity_display() {
        assert_eq!(DigitalIdentity(0x0102).to_string(), "10.0.1.2");
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0..50.0f64, 3)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_bounded_scale_invariant(
            a in vec3(), b in vec3(), la in 0.01..100.0f64, lb in 0.01..100.0f64
        ) {
            let (fa, fb) = (fv(&a), fv(&b));
            let d = cosine_similarity(&fa, &fb).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, cosine_similarity(&fb, &fa).unwrap());
            prop_assume!(fa.norm() > 1e-3 && fb.norm() > 1e-3);
            let sa = fv(&a.iter().map(|x| x * la).collect::<Vec<_>>());
            let sb = fv(&b.iter().map(|x| x * lb).collect::<Vec<_>>());
            prop_assert!((cosine_similarity(&sa, &sb).unwrap() - d).abs() < 1e-9);
        }

        #[test]
        fn weights_are_permutation_invariant(
            members in prop::collection::vec((vec3(), vec3()), 1..7),
            rot in 0usize..7,
        ) {
            let build = |ms: &[(Vec<f64>, Vec<f64>)]| {
                visual(ms.iter().map(|(p, v)| vec![p.clone(), v.clone()]).collect())
            };
            let cfg = SimilarityConfig::default();
            let w = dynamic_weights(&build(&members), &cfg).unwrap();
            let mut perm = members.clone();
            let r = rot % perm.len();
            perm.rotate_left(r);
            let wp = dynamic_weights(&build(&perm), &cfg).unwrap();
            for k in 0..2 {
                prop_assert!((w.raw[k] - wp.raw[k]).abs() < 1e-12);
            }
            let total: f64 = w.normalized.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(w.normalized.iter().all(|x| *x >= 0.0));

            // per-member scores follow the permutation
            let slot: Vec<FeatureVector> = members.iter().map(|(p, _)| fv(p)).collect();
            let slot_p: Vec<FeatureVector> = perm.iter().map(|(p, _)| fv(p)).collect();
            for i in 0..slot.len() {
                let ip = (i + slot.len() - r) % slot.len();
                let a = distinguishability(&slot, i, DistinguishabilityRule::Literal).unwrap();
                let b = distinguishability(&slot_p, ip, DistinguishabilityRule::Literal).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn harmonic_mean_bounds_and_monotonicity(
            d in prop::collection::vec(0.001..1.0f64, 1..6),
            raw in prop::collection::vec(0.01..1.0f64, 6),
            bump in 0.0..1.0f64,
            slot in 0usize..6,
        ) {
            let k_f = d.len();
            let w = WeightVector::from_raw(raw[..k_f].to_vec()).unwrap();
            // 2-D unit vectors at angle acos(d_k) realize each slot similarity
            let mk = |ds: &[f64], dom| {
                let feats = ds.iter().map(|x| fv(&[*x, (1.0 - x * x).max(0.0).sqrt()])).collect();
                PhysicalIdentity::new(feats, dom, 0).unwrap()
            };
            let ones = vec![1.0; k_f];
            let vf = mk(&ones, Domain::Visual);
            let af = mk(&d, Domain::Auditory);
            let cfg = SimilarityConfig::default();
            let s = pairwise_similarity(&vf, &af, &w, &cfg).unwrap();
            let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let upper = d.iter().zip(&w.normalized).map(|(x, wk)| x / wk)
                .fold(f64::INFINITY, f64::min);
            prop_assert!(s >= dmin - 1e-9);
            prop_assert!(s <= upper + 1e-9);
            prop_assert!(matching_cost(s).unwrap() >= 1.0);

            let mut raised = d.clone();
            let k = slot % k_f;
            raised[k] = (raised[k] + bump).min(1.0);
            let s2 = pairwise_similarity(&vf, &mk(&raised, Domain::Auditory), &w, &cfg).unwrap();
            prop_assert!(s2 >= s - 1e-12);
        }
    }
}
