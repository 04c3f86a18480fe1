use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::encode::ConfigEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    SmallestSize,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Seconds.
    pub latency: f64,
    pub fallback: FallbackPolicy,
}

/// Outcome of [`select_config`]; indices point into the candidate slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Feasible(usize),
    /// Nothing fit the budget; smallest payload chosen anyway.
    Infeasible(usize),
    Skip,
}

impl Selection {
    pub fn index(&self) -> Option<usize> {
        match *self {
            Selection::Feasible(i) | Selection::Infeasible(i) => Some(i),
            Selection::Skip => None,
        }
    }
}

pub fn is_feasible(e: &ConfigEntry, budget: &BudgetParams) -> bool {
    e.cost(budget.bandwidth) <= budget.latency
}

/// Highest-accuracy candidate whose transfer plus preparation time fits the
/// latency budget. Ties prefer smaller payload, then smaller K, then lower id.
pub fn select_config(candidates: &[&ConfigEntry], budget: &BudgetParams) -> Selection {
    let better = |a: &ConfigEntry, b: &ConfigEntry| -> Ordering {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.payload_size.cmp(&b.payload_size))
            .then(a.k.cmp(&b.k))
            .then(a.id.cmp(&b.id))
    };
    let feasible = candidates
        .iter()
        .enumerate()
        .filter(|(_, e)| is_feasible(e, budget))
        .min_by(|a, b| better(a.1, b.1));
    if let Some((i, _)) = feasible {
        return Selection::Feasible(i);
    }
    match budget.fallback {
        FallbackPolicy::Skip => Selection::Skip,
        FallbackPolicy::SmallestSize => candidates
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.payload_size
                    .cmp(&b.1.payload_size)
                    .then(b.1.accuracy.total_cmp(&a.1.accuracy))
                    .then(a.1.id.cmp(&b.1.id))
            })
            .map_or(Selection::Skip, |(i, _)| Selection::Infeasible(i)),
    }
}
