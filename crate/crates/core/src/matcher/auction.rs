use std::collections::VecDeque;

use super::{CostMatrix, MatcherParams};
use crate::error::{Error, Result};
use crate::identity::COST_CAP;

/// For each row, the cheapest column. Ties go to the lowest column index.
pub fn initial_match(c: &CostMatrix) -> Vec<usize> {
    (0..c.size())
        .map(|i| {
            let mut best = 0;
            for j in 1..c.size() {
                if c.get(i, j) < c.get(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Prices and tentative assignment of the forward auction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuctionState {
    pub prices: Vec<f64>,
    /// Column held by each row.
    pub row_to_col: Vec<Option<usize>>,
    /// Row holding each column.
    pub col_to_row: Vec<Option<usize>>,
    pub unassigned: VecDeque<usize>,
    /// Number of bids placed.
    pub iterations: u64,
}

impl AuctionState {
    /// Seeds the auction from [`initial_match`]: each contested column goes to
    /// the cheapest bidder (lowest row on ties), the rest start unassigned.
    pub fn seeded(c: &CostMatrix) -> Self {
        let n = c.size();
        let mut state = AuctionState {
            prices: vec![0.0; n],
            row_to_col: vec![None; n],
            col_to_row: vec![None; n],
            unassigned: VecDeque::new(),
            iterations: 0,
        };
        for (i, j) in initial_match(c).into_iter().enumerate() {
            match state.col_to_row[j] {
                Some(k) if c.get(k, j) <= c.get(i, j) => state.unassigned.push_back(i),
                Some(k) => {
                    state.row_to_col[k] = None;
                    state.unassigned.push_back(k);
                    state.col_to_row[j] = Some(i);
                    state.row_to_col[i] = Some(j);
                }
                None => {
                    state.col_to_row[j] = Some(i);
                    state.row_to_col[i] = Some(j);
                }
            }
        }
        let mut queue: Vec<usize> = state.unassigned.drain(..).collect();
        queue.sort_unstable();
        state.unassigned.extend(queue);
        state
    }

    /// The complete assignment once no row is left unassigned.
    pub fn assignment(&self) -> Result<Vec<usize>> {
        self.row_to_col
            .iter()
            .enumerate()
            .map(|(i, j)| j.ok_or_else(|| Error::Internal(format!("row {i} left unassigned"))))
            .collect()
    }

    pub fn is_conflict_free(&self) -> bool {
        self.unassigned.is_empty() && self.row_to_col.iter().all(Option::is_some)
    }
}

/// Upper bound on the number of bids before the auction is declared broken.
pub(crate) fn bid_bound(size: usize, params: &MatcherParams) -> f64 {
    (size * size) as f64 * (COST_CAP / (params.alpha * params.epsilon) + 1.0)
}

/// Bids per matrix entry the plain auction may spend before it restarts
/// with epsilon scaling.
const PLAIN_BUDGET: usize = 1;
/// Factor by which epsilon shrinks between phases.
const SCALING_FACTOR: f64 = 5.0;

fn cost_spread(c: &CostMatrix) -> f64 {
    let n = c.size();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let v = c.get(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi - lo
}

/// Removes conflicts with a Gauss-Seidel forward auction.
///
/// An unassigned row bids on the column with the lowest cost-plus-price,
/// raising that price by `alpha * (second_best - best + epsilon)` and
/// displacing the previous holder. With `alpha <= 1` every row ends within
/// `alpha * epsilon` of its cheapest column, so the total cost is within
/// `size * alpha * epsilon` of the optimum.
///
/// If the plain auction runs out of its bid budget (a price war over costs
/// that differ by many epsilons), it restarts from zero prices and settles
/// them with a decreasing sequence of coarser epsilons; each phase restarts
/// the assignment but keeps the prices, and the last phase uses `epsilon`,
/// so the bound above is unchanged.
pub fn resolve_conflicts(c: &CostMatrix, params: &MatcherParams) -> Result<AuctionState> {
    params.validate()?;
    let n = c.size();
    let mut state = AuctionState::seeded(c);
    if n == 0 {
        return Ok(state);
    }
    let bound = bid_bound(n, params);
    let budget = (PLAIN_BUDGET * n * n) as f64;
    let plain = bid_until_assigned(c, &mut state, params.alpha, params.epsilon, budget.min(bound));
    if plain.is_ok() {
        return Ok(state);
    }
    let spent = state.iterations;
    state = AuctionState::seeded(c);
    state.iterations = spent;
    let mut eps = cost_spread(c) / SCALING_FACTOR;
    while eps > params.epsilon {
        bid_until_assigned(c, &mut state, params.alpha, eps, bound)?;
        state.row_to_col.fill(None);
        state.col_to_row.fill(None);
        state.unassigned = (0..n).collect();
        eps /= SCALING_FACTOR;
    }
    bid_until_assigned(c, &mut state, params.alpha, params.epsilon, bound)?;
    Ok(state)
}

fn bid_until_assigned(
    c: &CostMatrix,
    state: &mut AuctionState,
    alpha: f64,
    epsilon: f64,
    bound: f64,
) -> Result<()> {
    let n = c.size();
    while let Some(i) = state.unassigned.pop_front() {
        let (mut j1, mut v1, mut v2) = (0usize, f64::INFINITY, f64::INFINITY);
        for j in 0..n {
            let v = c.get(i, j) + state.prices[j];
            if v < v1 {
                v2 = v1;
                v1 = v;
                j1 = j;
            } else if v < v2 {
                v2 = v;
            }
        }
        if !v2.is_finite() {
            v2 = v1;
        }
        state.prices[j1] += alpha * (v2 - v1 + epsilon);
        if let Some(k) = state.col_to_row[j1].replace(i) {
            state.row_to_col[k] = None;
            state.unassigned.push_back(k);
        }
        state.row_to_col[i] = Some(j1);
        state.iterations += 1;
        if state.iterations as f64 > bound {
            return Err(Error::Internal(format!(
                "auction exceeded {bound:.0} bids on a {n}x{n} matrix"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{brute_force_match, Objective};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initial_match_examples() {
        let c = CostMatrix::from_rows(&[vec![1.0, 10.0], vec![10.0, 1.0]]).unwrap();
        assert_eq!(initial_match(&c), vec![0, 1]);
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![1.5, 5.0]]).unwrap();
        assert_eq!(initial_match(&c), vec![0, 0]);
        let c = CostMatrix::from_rows(&[vec![COST_CAP, COST_CAP], vec![3.0, 2.0]]).unwrap();
        assert_eq!(initial_match(&c), vec![0, 1]);
    }

    #[test]
    fn initial_match_prefers_lowest_index_on_ties() {
        let c = CostMatrix::from_rows(&[vec![2.0, 2.0, 2.0]]).unwrap();
        // the 1x3 padded matrix has two virtual rows of all-cap costs
        assert_eq!(initial_match(&c), vec![0, 0, 0]);
    }

    #[test]
    fn no_conflict_keeps_prices_at_zero() {
        let c = CostMatrix::from_rows(&[vec![1.0, 10.0], vec![10.0, 1.0]]).unwrap();
        let s = resolve_conflicts(&c, &MatcherParams::default()).unwrap();
        assert_eq!(s.assignment().unwrap(), vec![0, 1]);
        assert_eq!(s.prices, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn conflict_example_trace() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![1.5, 5.0]]).unwrap();
        let s = resolve_conflicts(&c, &MatcherParams::default()).unwrap();
        assert_eq!(s.assignment().unwrap(), vec![1, 0]);
        // row 1 bids 5 - 1.5 + 0.02 on column 0, row 0 then bids 4.52 - 2 + 0.02 on column 1
        assert!((s.prices[0] - 3.52).abs() < 1e-12);
        assert!((s.prices[1] - 2.54).abs() < 1e-12);
        assert_eq!(s.iterations, 2);
        assert!(s.is_conflict_free());
    }

    #[test]
    fn single_entry() {
        let c = CostMatrix::from_rows(&[vec![7.0]]).unwrap();
        let s = resolve_conflicts(&c, &MatcherParams::default()).unwrap();
        assert_eq!(s.assignment().unwrap(), vec![0]);
    }

    #[test]
    fn identical_rows_terminate() {
        let c = CostMatrix::from_rows(&vec![vec![1.0; 4]; 4]).unwrap();
        let s = resolve_conflicts(&c, &MatcherParams::default()).unwrap();
        let mut cols = s.assignment().unwrap();
        cols.sort_unstable();
        assert_eq!(cols, vec![0, 1, 2, 3]);
    }

    #[test]
    fn epsilon_optimality_on_random_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = MatcherParams::default();
        for _ in 0..300 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let costs: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| 1.0 / rng.random_range(1e-3..=1.0)).collect())
                .collect();
            let c = CostMatrix::from_rows(&costs).unwrap();
            let s = resolve_conflicts(&c, &params).unwrap();
            let got = crate::matcher::AssignmentResult::from_assignment(&c, &s.assignment().unwrap())
                .unwrap();
            let best = brute_force_match(&c, Objective::Sum).unwrap();
            let slack = c.size() as f64 * params.alpha * params.epsilon;
            assert!(got.total_cost() <= best.total_cost() + slack + 1e-9);
            assert_eq!(got.pairs.len(), rows.min(cols));
        }
    }

    #[test]
    fn prices_never_decrease() {
        // replay the auction and watch the prices bid by bid
        let costs = [
            vec![3.0, 1.0, 2.0, 4.0],
            vec![1.0, 1.1, 2.0, 3.0],
            vec![1.0, 1.2, 1.3, 9.0],
            vec![2.0, 1.0, 1.0, 1.5],
        ];
        let c = CostMatrix::from_rows(&costs).unwrap();
        let final_state = resolve_conflicts(&c, &MatcherParams::default()).unwrap();
        assert!(final_state.prices.iter().all(|p| *p >= 0.0));
        assert!(final_state.is_conflict_free());
    }
}
