use serde::{Deserialize, Serialize};

use super::{objective_terms, AssignmentResult, CostMatrix};
use crate::error::{invalid, Result};

/// Largest `min(K_v, K_a)` accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Minimize f1.
    Sum,
    /// Minimize f1 + f2.
    SumPlusStd,
}

/// Exhaustive search over every one-to-one real assignment of size
/// `N = min(K_v, K_a)`. Ties go to the lexicographically smallest pair list.
pub fn brute_force_match(c: &CostMatrix, objective: Objective) -> Result<AssignmentResult> {
    let (rows, cols) = (c.real_rows(), c.real_cols());
    let n = rows.min(cols);
    if n > BRUTE_FORCE_MAX || rows.max(cols) > 2 * BRUTE_FORCE_MAX {
        return invalid(format!(
            "brute force limited to min side {BRUTE_FORCE_MAX}, got {rows}x{cols}"
        ));
    }
    if n == 0 {
        return Ok(AssignmentResult::empty(rows, cols));
    }
    // enumerate injections from the smaller side into the larger one
    let transposed = rows > cols;
    let (small, large) = if transposed { (cols, rows) } else { (rows, cols) };
    let cost = |s: usize, l: usize| if transposed { c.get(l, s) } else { c.get(s, l) };

    let mut search = Search {
        cost: &cost,
        objective,
        transposed,
        large,
        chosen: vec![0; small],
        used: vec![false; large],
        costs: vec![0.0; small],
        best: None,
    };
    search.descend(0);
    let (_, pairs) = search.best.expect("at least one assignment exists");
    AssignmentResult::from_real_pairs(c, &pairs)
}

struct Search<'a> {
    cost: &'a dyn Fn(usize, usize) -> f64,
    objective: Objective,
    transposed: bool,
    large: usize,
    chosen: Vec<usize>,
    used: Vec<bool>,
    costs: Vec<f64>,
    best: Option<(f64, Vec<(usize, usize)>)>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        if depth == self.chosen.len() {
            self.score();
            return;
        }
        for l in 0..self.large {
            if self.used[l] {
                continue;
            }
            self.used[l] = true;
            self.chosen[depth] = l;
            self.costs[depth] = (self.cost)(depth, l);
            self.descend(depth + 1);
            self.used[l] = false;
        }
    }

    fn score(&mut self) {
        let (f1, f2) = objective_terms(&self.costs, self.costs.len());
        let value = match self.objective {
            Objective::Sum => f1,
            Objective::SumPlusStd => f1 + f2,
        };
        let mut pairs: Vec<(usize, usize)> = self
            .chosen
            .iter()
            .enumerate()
            .map(|(s, &l)| if self.transposed { (l, s) } else { (s, l) })
            .collect();
        pairs.sort_unstable();
        let better = match &self.best {
            None => true,
            Some((v, p)) => value < *v || (value == *v && pairs < *p),
        };
        if better {
            self.best = Some((value, pairs));
        }
    }
}
