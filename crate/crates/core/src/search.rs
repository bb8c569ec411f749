//! Search over green-window selections.
//!
//! Combinations of reachable windows are enumerated earliest-first, each one
//! solved by [`solve_fixed_window`], with a sound bound for pruning.

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::scenario::Scenario;
use crate::scp::{solve_fixed_window, SolveResult};
use crate::signals::{reachable_windows, WindowSelection};

/// Above this many combinations the search logs a warning.
pub const COMBINATION_WARNING: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NodeStatus {
    Solved {
        objective: f64,
    },
    Infeasible {
        reason: String,
    },
    /// Later intersection closes before the earlier one opens.
    OutOfOrder,
    Pruned {
        bound: f64,
        incumbent: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub selection: WindowSelection,
    pub lower_bound: f64,
    #[serde(flatten)]
    pub status: NodeStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchLog {
    /// Reachable window indices per intersection.
    pub reachable: Vec<Vec<usize>>,
    pub nodes: Vec<SearchNode>,
    pub warnings: Vec<String>,
}

impl SearchLog {
    pub fn solved(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.status, NodeStatus::Solved { .. }))
            .count()
    }

    pub fn pruned(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.status, NodeStatus::Pruned { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: SolveResult,
    pub log: SearchLog,
}

/// Idle fuel over the horizon plus the best conceivable time term. Valid for
/// any (partial) selection.
pub fn lower_bound(_partial: &[usize], s: &Scenario) -> f64 {
    s.weights.fuel * s.fuel_curve.idle_rate * s.horizon.duration - s.weights.time * s.horizon.speed_limit
}

/// Cartesian product in lexicographic order.
pub(crate) fn combinations(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for &w in set {
                let mut c = prefix.clone();
                c.push(w);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// Whether consecutive selected windows leave room for increasing crossing
/// times.
pub fn windows_ordered(s: &Scenario, sel: &[usize]) -> bool {
    sel.windows(2)
        .zip(s.intersections.windows(2))
        .all(|(w, ints)| ints[1].windows[w[1]].t_g2r > ints[0].windows[w[0]].t_r2g)
}

/// Tie-break: lower objective, then earlier windows.
fn better(obj: f64, sel: &WindowSelection, best: &SolveResult) -> bool {
    obj < best.objective.total || (obj == best.objective.total && sel.0 < best.selection.0)
}

pub fn search(s: &Scenario) -> Result<SearchOutcome, PlanError> {
    let margin = s.solver.crossing_margin;
    let reachable: Vec<Vec<usize>> = s
        .intersections
        .iter()
        .map(|i| reachable_windows(i, &s.horizon, margin))
        .collect();
    let mut log = SearchLog {
        reachable: reachable.clone(),
        ..SearchLog::default()
    };
    let combos = combinations(&reachable);
    if combos.len() > COMBINATION_WARNING {
        log.warnings.push(format!("{} window combinations", combos.len()));
    }
    let mut best: Option<SolveResult> = None;
    for combo in combos {
        let selection = WindowSelection(combo);
        let bound = lower_bound(&selection.0, s);
        let status = if !windows_ordered(s, &selection.0) {
            NodeStatus::OutOfOrder
        } else if let Some(inc) = best.as_ref().filter(|b| bound > b.objective.total) {
            NodeStatus::Pruned {
                bound,
                incumbent: inc.objective.total,
            }
        } else {
            match solve_fixed_window(s, &selection) {
                Ok(r) => {
                    let objective = r.objective.total;
                    if best.as_ref().is_none_or(|b| better(objective, &selection, b)) {
                        best = Some(r);
                    }
                    NodeStatus::Solved { objective }
                }
                Err(e) => NodeStatus::Infeasible { reason: e.to_string() },
            }
        };
        log.nodes.push(SearchNode {
            selection,
            lower_bound: bound,
            status,
        });
    }
    match best {
        Some(best) => Ok(SearchOutcome { best, log }),
        None => Err(PlanError::GloballyInfeasible(reachable)),
    }
}

/// Solve every combination of every window without reachability filtering or
/// pruning; the reference the search is checked against.
pub fn exhaustive_search(s: &Scenario) -> Option<SolveResult> {
    let all: Vec<Vec<usize>> = s.intersections.iter().map(|i| (0..i.windows.len()).collect()).collect();
    let mut best: Option<SolveResult> = None;
    for combo in combinations(&all) {
        let sel = WindowSelection(combo);
        if let Ok(r) = solve_fixed_window(s, &sel) {
            if best.as_ref().is_none_or(|b| better(r.objective.total, &sel, b)) {
                best = Some(r);
            }
        }
    }
    best
}
