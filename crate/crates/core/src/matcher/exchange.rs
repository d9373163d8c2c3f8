use serde::{Deserialize, Serialize};

use super::{objective_terms, CostMatrix};

/// Which swaps the exchange pass is allowed to execute, beyond the base
/// rule `c(i,j) >= max(c(i,q), c(p,j))` with a strict drop of the pair's
/// maximum cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeGuard {
    /// Base rule only.
    MaxOnly,
    /// Additionally reject swaps that raise the mean (f1) or the spread (f2)
    /// of the matched real costs.
    #[default]
    Balanced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExchangeReport {
    pub swaps: usize,
}

struct RealCosts {
    costs: Vec<f64>,
    n: usize,
}

impl RealCosts {
    fn of(c: &CostMatrix, a: &[usize]) -> Self {
        RealCosts {
            costs: a
                .iter()
                .enumerate()
                .filter(|&(i, &j)| !c.is_virtual(i, j))
                .map(|(i, &j)| c.get(i, j))
                .collect(),
            n: c.real_rows().min(c.real_cols()),
        }
    }
}

/// Swaps partners between matched pairs to balance individual costs.
///
/// Pairs are visited from the most expensive down. For pair `(i, j)` the
/// candidates are the other pairs `(p, q)` with
/// `c(i,j) >= max(c(i,q), c(p,j))`; the one with the smallest
/// `max(c(i,q), c(p,j))` is swapped in, provided the swap strictly lowers
/// `max(c(i,j), c(p,q))` and passes `guard`. The scan restarts after every
/// swap and stops when no pair admits one. Each swap strictly lowers a pair
/// maximum drawn from a finite set of entries, so the pass terminates.
pub fn exchange_pass(c: &CostMatrix, row_to_col: &mut [usize], guard: ExchangeGuard) -> ExchangeReport {
    let n = row_to_col.len();
    let mut report = ExchangeReport::default();
    if n < 2 {
        return report;
    }
    loop {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            c.get(b, row_to_col[b])
                .total_cmp(&c.get(a, row_to_col[a]))
                .then(a.cmp(&b))
        });
        let base = match guard {
            ExchangeGuard::Balanced => {
                let real = RealCosts::of(c, row_to_col);
                Some(objective_terms(&real.costs, real.n))
            }
            ExchangeGuard::MaxOnly => None,
        };

        let mut chosen = None;
        for &i in &order {
            let j = row_to_col[i];
            let cij = c.get(i, j);
            let mut best: Option<(usize, f64)> = None;
            for p in 0..n {
                if p == i {
                    continue;
                }
                let q = row_to_col[p];
                let loss = c.get(i, q).max(c.get(p, j));
                if cij < loss || loss >= cij.max(c.get(p, q)) {
                    continue;
                }
                if let Some((f1, f2)) = base {
                    row_to_col.swap(i, p);
                    let real = RealCosts::of(c, row_to_col);
                    row_to_col.swap(i, p);
                    let (g1, g2) = objective_terms(&real.costs, real.n);
                    if g1 > f1 || g2 > f2 {
                        continue;
                    }
                }
                if best.is_none_or(|(_, b)| loss < b) {
                    best = Some((p, loss));
                }
            }
            if let Some((p, _)) = best {
                chosen = Some((i, p));
                break;
            }
        }
        match chosen {
            Some((i, p)) => {
                row_to_col.swap(i, p);
                report.swaps += 1;
            }
            None => return report,
        }
    }
}
