//! One-to-one assignment between visual and auditory identity sets.
//!
//! The matcher runs in three phases over a square, padded cost matrix:
//! every row first picks its cheapest column, conflicts are then removed by
//! a forward auction with per-column prices, and finally an exchange pass
//! swaps partners between matched pairs to even out the individual costs.

mod auction;
mod brute;
mod exchange;

pub use auction::{initial_match, resolve_conflicts, AuctionState};
pub use brute::{brute_force_match, Objective, BRUTE_FORCE_MAX};
pub use exchange::{exchange_pass, ExchangeGuard, ExchangeReport};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::identity::{
    matching_cost, pairwise_similarity, ObservationSet, SimilarityConfig, WeightVector, COST_CAP,
};

/// Square cost matrix. Rows are visual identities, columns auditory ones;
/// the smaller side is padded with virtual identities whose costs are
/// [`COST_CAP`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    size: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Builds a padded matrix from a `rows x cols` cost function. Costs are
    /// clamped to [`COST_CAP`].
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut cost: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let size = rows.max(cols);
        let mut entries = vec![COST_CAP; size * size];
        for i in 0..rows {
            for j in 0..cols {
                let c = cost(i, j);
                if c.is_nan() || c < 0.0 {
                    return invalid(format!("cost ({i},{j}) = {c} is not a nonnegative number"));
                }
                entries[i * size + j] = c.min(COST_CAP);
            }
        }
        Ok(CostMatrix {
            rows,
            cols,
            size,
            entries,
        })
    }

    /// Builds a padded matrix from real (unpadded) rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("cost rows have different lengths");
        }
        Self::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    /// Costs from similarities via [`matching_cost`].
    pub fn from_similarities(sims: &[Vec<f64>]) -> Result<Self> {
        let costs = sims
            .iter()
            .map(|row| row.iter().map(|&s| matching_cost(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&costs)
    }

    /// Number of real visual identities (K_v).
    pub fn real_rows(&self) -> usize {
        self.rows
    }

    /// Number of real auditory identities (K_a).
    pub fn real_cols(&self) -> usize {
        self.cols
    }

    /// Side of the padded square.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn is_virtual(&self, i: usize, j: usize) -> bool {
        i >= self.rows || j >= self.cols
    }

    /// Returns a copy with every real entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * factor)
    }
}

/// Matches two observation sets: costs are reciprocals of the weighted
/// pairwise similarity.
pub fn build_cost_matrix(
    vf_set: &ObservationSet,
    af_set: &ObservationSet,
    w: &WeightVector,
    cfg: &SimilarityConfig,
) -> Result<CostMatrix> {
    if let (Some(a), Some(b)) = (vf_set.schema(), af_set.schema()) {
        if a != b {
            return invalid("visual and auditory sets use different feature schemas");
        }
    }
    let (vf, af) = (vf_set.identities(), af_set.identities());
    let mut costs = vec![vec![0.0; af.len()]; vf.len()];
    for (i, v) in vf.iter().enumerate() {
        for (j, a) in af.iter().enumerate() {
            costs[i][j] = matching_cost(pairwise_similarity(v, a, w, cfg)?)?;
        }
    }
    CostMatrix::from_fn(vf.len(), af.len(), |i, j| costs[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherParams {
    /// Competing rate; scales every auction bid.
    pub alpha: f64,
    /// Minimum bid increment; breaks stalls between equally cheap columns.
    pub epsilon: f64,
    pub exchange: ExchangeGuard,
}

impl Default for MatcherParams {
    fn default() -> Self {
        MatcherParams {
            alpha: 1.0,
            epsilon: 0.02,
            exchange: ExchangeGuard::default(),
        }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub visual: usize,
    pub auditory: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// Real matches, ordered by visual index.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_visual: Vec<usize>,
    pub unmatched_auditory: Vec<usize>,
    /// Mean matched cost over N = min(K_v, K_a).
    pub f1: f64,
    /// Population standard deviation of the matched costs.
    pub f2: f64,
    /// Binary K_v x K_a assignment matrix.
    pub assignment: Vec<Vec<u8>>,
}

impl AssignmentResult {
    pub fn empty(rows: usize, cols: usize) -> Self {
        AssignmentResult {
            pairs: Vec::new(),
            unmatched_visual: (0..rows).collect(),
            unmatched_auditory: (0..cols).collect(),
            f1: 0.0,
            f2: 0.0,
            assignment: vec![vec![0; cols]; rows],
        }
    }

    /// Builds the result from a full row-to-column assignment of the padded
    /// matrix, dropping virtual pairs.
    pub fn from_assignment(c: &CostMatrix, row_to_col: &[usize]) -> Result<Self> {
        let real: Vec<(usize, usize)> = row_to_col
            .iter()
            .enumerate()
            .filter(|&(i, &j)| !c.is_virtual(i, j))
            .map(|(i, &j)| (i, j))
            .collect();
        Self::from_real_pairs(c, &real)
    }

    pub(crate) fn from_real_pairs(c: &CostMatrix, real: &[(usize, usize)]) -> Result<Self> {
        let (rows, cols) = (c.real_rows(), c.real_cols());
        let mut out = Self::empty(rows, cols);
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(i, j) in real {
            if i >= rows || j >= cols {
                return Err(Error::Internal(format!("pair ({i},{j}) is virtual")));
            }
            if row_used[i] || col_used[j] {
                return Err(Error::Internal(format!("pair ({i},{j}) breaks one-to-one")));
            }
            row_used[i] = true;
            col_used[j] = true;
            out.assignment[i][j] = 1;
            out.pairs.push(MatchedPair {
                visual: i,
                auditory: j,
                cost: c.get(i, j),
            });
        }
        out.pairs.sort_by_key(|p| p.visual);
        out.unmatched_visual = (0..rows).filter(|&i| !row_used[i]).collect();
        out.unmatched_auditory = (0..cols).filter(|&j| !col_used[j]).collect();
        let costs: Vec<f64> = out.pairs.iter().map(|p| p.cost).collect();
        let (f1, f2) = objective_terms(&costs, rows.min(cols));
        out.f1 = f1;
        out.f2 = f2;
        Ok(out)
    }

    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).sum()
    }

    pub fn max_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).fold(0.0, f64::max)
    }

    /// The visual index matched to auditory `j`, if any.
    pub fn visual_for(&self, j: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.auditory == j).map(|p| p.visual)
    }
}

/// `(f1, f2)` for a list of matched costs with divisor `n`.
pub fn objective_terms(costs: &[f64], n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let n = n as f64;
    let f1 = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - f1).powi(2)).sum::<f64>() / n;
    (f1, var.sqrt())
}

/// Every intermediate stage of one matcher run.
#[derive(Debug, Clone, PartialEq)]
pub struct BimOutcome {
    pub result: AssignmentResult,
    /// Result after the auction, before the exchange pass.
    pub after_auction: AssignmentResult,
    pub auction: AuctionState,
    pub exchange: ExchangeReport,
}

/// Runs initial match, conflict resolution and the exchange pass on a cost
/// matrix.
pub fn bim_match_costs(c: &CostMatrix, params: &MatcherParams) -> Result<BimOutcome> {
    params.validate()?;
    if c.real_rows().min(c.real_cols()) == 0 {
        let empty = AssignmentResult::empty(c.real_rows(), c.real_cols());
        return Ok(BimOutcome {
            result: empty.clone(),
            after_auction: empty,
            auction: AuctionState::default(),
            exchange: ExchangeReport::default(),
        });
    }
    let auction = resolve_conflicts(c, params)?;
    let mut assignment = auction.assignment()?;
    let after_auction = AssignmentResult::from_assignment(c, &assignment)?;
    let exchange = exchange_pass(c, &mut assignment, params.exchange);
    let result = AssignmentResult::from_assignment(c, &assignment)?;
    Ok(BimOutcome {
        result,
        after_auction,
        auction,
        exchange,
    })
}

/// Matches visual identities against auditory ones.
pub fn bim_match(
    vf_set: &ObservationSet,
    af_set: &ObservationSet,
    w: &WeightVector,
    cfg: &SimilarityConfig,
    params: &MatcherParams,
) -> Result<AssignmentResult> {
    let c = build_cost_matrix(vf_set, af_set, w, cfg)?;
    Ok(bim_match_costs(&c, params)?.result)
}
