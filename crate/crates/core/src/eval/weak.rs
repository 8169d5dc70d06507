//! Weak-signal co-occurrence and univariate logistic fits predicting future
//! streams from weak-signal counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{InteractionRecord, ItemType, Signal};
use crate::error::{Error, Result};

pub const FIT_TOLERANCE: f64 = 1e-8;
pub const FIT_MAX_ITERATIONS: usize = 500_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub signal: Signal,
    pub intercept: f64,
    pub coefficient: f64,
    pub odds_ratio: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_samples: u64,
    pub n_positive: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFit {
    pub signal: Signal,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSignalReport {
    pub cutoff: i64,
    /// Row and column order of `cooccurrence`.
    pub signals: Vec<Signal>,
    /// `[i][j]`: share of (user, item) pairs with signal i that also have j.
    pub cooccurrence: Vec<Vec<f64>>,
    pub fits: Vec<LogisticFit>,
    pub skipped: Vec<SkippedFit>,
}

/// Co-occurrence over (user, item) pairs. Rows of absent signals are zero
/// apart from the diagonal, which is always 1.
pub fn cooccurrence_matrix(interactions: &[InteractionRecord]) -> Vec<Vec<f64>> {
    let mut per_pair: BTreeMap<(&str, &str), [bool; 4]> = BTreeMap::new();
    for r in interactions {
        per_pair.entry((&r.user_id, &r.item_id)).or_default()[r.signal.index()] = true;
    }
    let mut both = [[0u64; 4]; 4];
    for has in per_pair.values() {
        for i in 0..4 {
            if !has[i] {
                continue;
            }
            for j in 0..4 {
                if has[j] {
                    both[i][j] += 1;
                }
            }
        }
    }
    (0..4)
        .map(|i| {
            (0..4)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if both[i][i] == 0 {
                        0.0
                    } else {
                        both[i][j] as f64 / both[i][i] as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Observations sharing one feature value: `(x, count, positives)`.
pub type Group = (f64, f64, f64);

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of `intercept + coefficient·x`.
pub fn logistic_nll(groups: &[Group], intercept: f64, coefficient: f64) -> f64 {
    let total: f64 = groups.iter().map(|g| g.1).sum();
    groups
        .iter()
        .map(|&(x, n, pos)| {
            let z = intercept + coefficient * x;
            n * softplus(z) - pos * z
        })
        .sum::<f64>()
        / total
}

fn gradient(groups: &[Group], b: [f64; 2]) -> [f64; 2] {
    let total: f64 = groups.iter().map(|g| g.1).sum();
    let mut g = [0.0; 2];
    for &(x, n, pos) in groups {
        let r = n * sigmoid(b[0] + b[1] * x) - pos;
        g[0] += r;
        g[1] += r * x;
    }
    [g[0] / total, g[1] / total]
}

/// True when some threshold on x puts every positive on one side and every
/// negative on the other (ties allowed), so no finite optimum exists.
pub fn is_separable(groups: &[Group]) -> bool {
    let pos_x = groups.iter().filter(|g| g.2 > 0.0).map(|g| g.0);
    let neg_x = groups.iter().filter(|g| g.1 - g.2 > 0.0).map(|g| g.0);
    let (pmin, pmax) = pos_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (nmin, nmax) = neg_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    pmin >= nmax || pmax <= nmin
}

/// Gradient descent with backtracking line search until the largest
/// gradient component drops below `tolerance`. Separable data never counts
/// as converged.
pub fn fit_logistic(groups: &[Group], tolerance: f64, max_iterations: usize) -> (f64, f64, bool, usize) {
    let (b0, b1, converged, it) = descend(groups, tolerance, max_iterations);
    (b0, b1, converged && !is_separable(groups), it)
}

fn descend(groups: &[Group], tolerance: f64, max_iterations: usize) -> (f64, f64, bool, usize) {
    let mut b = [0.0f64; 2];
    let mut step = 1.0;
    let mut f = logistic_nll(groups, b[0], b[1]);
    for it in 0..max_iterations {
        let g = gradient(groups, b);
        if g[0].abs().max(g[1].abs()) < tolerance {
            return (b[0], b[1], true, it);
        }
        let gg = g[0] * g[0] + g[1] * g[1];
        step *= 2.0;
        loop {
            let cand = [b[0] - step * g[0], b[1] - step * g[1]];
            let fc = logistic_nll(groups, cand[0], cand[1]);
            if fc <= f - 0.5 * step * gg {
                b = cand;
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return (b[0], b[1], false, it);
            }
        }
    }
    (b[0], b[1], false, max_iterations)
}

/// Co-occurrence plus, per weak signal, a logistic fit of "the user streams
/// the audiobook at or after `cutoff`" on the number of that signal before
/// `cutoff`. The population is every user × audiobook in the log, minus
/// pairs already streamed before the cutoff.
pub fn weak_signal_analysis(interactions: &[InteractionRecord], cutoff: i64) -> Result<WeakSignalReport> {
    let present: BTreeSet<Signal> = interactions.iter().map(|r| r.signal).collect();
    if present.len() < 2 {
        return Err(Error::Invalid("weak-signal analysis needs at least two signal types".into()));
    }
    let users: BTreeSet<&str> = interactions.iter().map(|r| r.user_id.as_str()).collect();
    let books: BTreeSet<&str> = interactions
        .iter()
        .filter(|r| r.item_type == ItemType::Audiobook)
        .map(|r| r.item_id.as_str())
        .collect();

    #[derive(Default)]
    struct PairState {
        before: [u32; 4],
        streamed_after: bool,
    }
    let mut pairs: BTreeMap<(&str, &str), PairState> = BTreeMap::new();
    for r in interactions.iter().filter(|r| r.item_type == ItemType::Audiobook) {
        let p = pairs.entry((&r.user_id, &r.item_id)).or_default();
        if r.timestamp < cutoff {
            p.before[r.signal.index()] += 1;
        } else if r.signal == Signal::Stream {
            p.streamed_after = true;
        }
    }
    let population = (users.len() * books.len()) as u64;
    let eligible: Vec<&PairState> = pairs.values().filter(|p| p.before[Signal::Stream.index()] == 0).collect();
    let silent = population - pairs.len() as u64;

    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for signal in Signal::WEAK {
        let mut grouped: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        grouped.insert(0, (silent, 0));
        for p in &eligible {
            let e = grouped.entry(p.before[signal.index()]).or_insert((0, 0));
            e.0 += 1;
            e.1 += u64::from(p.streamed_after);
        }
        let n: u64 = grouped.values().map(|g| g.0).sum();
        let pos: u64 = grouped.values().map(|g| g.1).sum();
        if pos == 0 || pos == n {
            skipped.push(SkippedFit {
                signal,
                reason: format!("degenerate labels: {pos} positives out of {n}"),
            });
            continue;
        }
        let groups: Vec<Group> = grouped
            .iter()
            .filter(|(_, g)| g.0 > 0)
            .map(|(&x, &(c, p))| (x as f64, c as f64, p as f64))
            .collect();
        if groups.len() < 2 {
            skipped.push(SkippedFit {
                signal,
                reason: format!("no {} signals before the cutoff", signal.as_str()),
            });
            continue;
        }
        let (b0, b1, converged, iterations) = fit_logistic(&groups, FIT_TOLERANCE, FIT_MAX_ITERATIONS);
        fits.push(LogisticFit {
            signal,
            intercept: b0,
            coefficient: b1,
            odds_ratio: b1.exp(),
            converged,
            iterations,
            n_samples: n,
            n_positive: pos,
        });
    }
    Ok(WeakSignalReport {
        cutoff,
        signals: Signal::ALL.to_vec(),
        cooccurrence: cooccurrence_matrix(interactions),
        fits,
        skipped,
    })
}
