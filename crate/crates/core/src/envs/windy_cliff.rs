//! Windy cliff walking on a 4×10 grid.
//!
//! Rows are indexed top to bottom. The agent starts in the bottom-left cell
//! and must reach the bottom-right goal. Three hazard zones lie along the
//! bottom row between them. After the chosen move resolves (moves off the
//! grid leave the agent in place), wind pushes the agent one row down with
//! probability `wind_prob`. The goal is absorbing with zero signals.
//!
//! Raw signals are a reward of 20 for entering the goal, -1 for entering any
//! other cell, and a cost of 10 for entering a cell of zone `k`; the
//! threshold on each discounted cost is 1.5. The tabular model stores the
//! rescaled signals `r' = (r + 1) / 21`, `c' = c / 10`, `d' = d / 10` so that
//! all entries lie in `[0, 1]`. Expected signals are taken over the next
//! cell, so `r'(s, a)` is the probability of entering the goal.

use serde::{Deserialize, Serialize};

use crate::cmdp::{Dynamics, TabularCmdp};
use crate::error::{Error, Result};

pub const ROWS: usize = 4;
pub const COLS: usize = 10;
pub const RAW_GOAL_REWARD: f64 = 20.0;
pub const RAW_STEP_REWARD: f64 = -1.0;
pub const RAW_ZONE_COST: f64 = 10.0;
pub const RAW_THRESHOLD: f64 = 1.5;

/// Actions in index order.
pub const ACTIONS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub zones: [Vec<(usize, usize)>; 3],
    pub wind_prob: f64,
}

impl GridSpec {
    pub fn standard(wind_prob: f64) -> Self {
        GridSpec {
            rows: ROWS,
            cols: COLS,
            start: (3, 0),
            goal: (3, 9),
            zones: [
                (1..=3).map(|c| (3, c)).collect(),
                (4..=6).map(|c| (3, c)).collect(),
                (7..=8).map(|c| (3, c)).collect(),
            ],
            wind_prob,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.wind_prob) {
            return Err(Error::invalid("env.wind_prob", format!("{} not in [0,1]", self.wind_prob)));
        }
        let inside = |(r, c): (usize, usize)| r < self.rows && c < self.cols;
        if !inside(self.start) || !inside(self.goal) {
            return Err(Error::invalid("grid", "start or goal out of bounds"));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, zone) in self.zones.iter().enumerate() {
            for &cell in zone {
                if !inside(cell) || cell == self.start || cell == self.goal || !seen.insert(cell) {
                    return Err(Error::invalid(
                        format!("grid.zones[{k}]"),
                        format!("cell {cell:?} out of bounds, overlapping, or on start/goal"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn index(&self, (r, c): (usize, usize)) -> usize {
        r * self.cols + c
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s / self.cols, s % self.cols)
    }

    /// Deterministic move with boundary clamping.
    pub fn apply_move(&self, (r, c): (usize, usize), action: usize) -> (usize, usize) {
        let (dr, dc) = ACTIONS[action];
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            (r, c)
        } else {
            (nr as usize, nc as usize)
        }
    }

    /// Next-cell distribution `(cell, probability)` after move then wind.
    pub fn successors(&self, cell: (usize, usize), action: usize) -> Vec<((usize, usize), f64)> {
        let moved = self.apply_move(cell, action);
        let blown = self.apply_move(moved, 2);
        if blown == moved || self.wind_prob == 0.0 {
            vec![(moved, 1.0)]
        } else if self.wind_prob == 1.0 {
            vec![(blown, 1.0)]
        } else {
            vec![(moved, 1.0 - self.wind_prob), (blown, self.wind_prob)]
        }
    }

    pub fn zone_of(&self, cell: (usize, usize)) -> Option<usize> {
        self.zones.iter().position(|z| z.contains(&cell))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindyCliffParams {
    pub wind_prob: f64,
    pub discount: f64,
}

impl Default for WindyCliffParams {
    fn default() -> Self {
        WindyCliffParams {
            wind_prob: 0.4,
            discount: 0.95,
        }
    }
}

/// The tabular model plus the raw-scale signals it was rescaled from.
#[derive(Debug, Clone)]
pub struct WindyCliff {
    pub cmdp: TabularCmdp,
    pub grid: GridSpec,
    pub raw_reward: Vec<f64>,
    pub raw_costs: Vec<Vec<f64>>,
    pub raw_thresholds: Vec<f64>,
}

impl WindyCliff {
    pub fn reward_to_raw(r: f64) -> f64 {
        r * (RAW_GOAL_REWARD - RAW_STEP_REWARD) + RAW_STEP_REWARD
    }

    pub fn cost_to_raw(c: f64) -> f64 {
        c * RAW_ZONE_COST
    }
}

pub fn windycliff_with(p: &WindyCliffParams) -> Result<WindyCliff> {
    let grid = GridSpec::standard(p.wind_prob);
    grid.validate()?;
    let ns = grid.rows * grid.cols;
    let na = ACTIONS.len();
    let goal = grid.index(grid.goal);
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    let mut raw_reward = vec![0.0; ns * na];
    let mut costs = vec![vec![0.0; ns * na]; 3];
    let mut raw_costs = vec![vec![0.0; ns * na]; 3];
    for s in 0..ns {
        for a in 0..na {
            let k = s * na + a;
            let base = k * ns;
            if s == goal {
                transition[base + goal] = 1.0;
                continue;
            }
            for (next, prob) in grid.successors(grid.cell(s), a) {
                let s2 = grid.index(next);
                transition[base + s2] += prob;
                if s2 == goal {
                    reward[k] += prob;
                    raw_reward[k] += prob * RAW_GOAL_REWARD;
                } else {
                    raw_reward[k] += prob * RAW_STEP_REWARD;
                }
                if let Some(z) = grid.zone_of(next) {
                    costs[z][k] += prob;
                    raw_costs[z][k] += prob * RAW_ZONE_COST;
                }
            }
        }
    }
    let mut initial_dist = vec![0.0; ns];
    initial_dist[grid.index(grid.start)] = 1.0;
    let cmdp = TabularCmdp::new(
        Dynamics {
            n_states: ns,
            n_actions: na,
            transition,
            discount: p.discount,
            initial_dist,
        },
        reward,
        costs,
        vec![RAW_THRESHOLD / RAW_ZONE_COST; 3],
    )?;
    Ok(WindyCliff {
        cmdp,
        grid,
        raw_reward,
        raw_costs,
        raw_thresholds: vec![RAW_THRESHOLD; 3],
    })
}

pub fn windycliff(wind_prob: f64) -> Result<TabularCmdp> {
    windycliff_with(&WindyCliffParams {
        wind_prob,
        ..WindyCliffParams::default()
    })
    .map(|w| w.cmdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_row_up_stays() {
        let w = windycliff_with(&WindyCliffParams {
            wind_prob: 0.0,
            discount: 0.9,
        })
        .unwrap();
        let g = &w.grid;
        for c in 0..COLS {
            let s = g.index((0, c));
            let row = w.cmdp.dynamics.next_state_probs(s, 0);
            assert_eq!(row[s], 1.0);
        }
    }

    #[test]
    fn entering_zone_two_costs() {
        let w = windycliff_with(&WindyCliffParams {
            wind_prob: 0.0,
            discount: 0.9,
        })
        .unwrap();
        let g = &w.grid;
        // from (2,5) moving down lands in (3,5), a Z2 cell
        let k = g.index((2, 5)) * 4 + 2;
        let raw: Vec<f64> = w.raw_costs.iter().map(|c| c[k]).collect();
        assert_eq!(raw, vec![0.0, 10.0, 0.0]);
        let scaled: Vec<f64> = w.cmdp.costs.iter().map(|c| c[k]).collect();
        assert_eq!(scaled, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rows_sum_to_one_for_any_wind() {
        for &wind in &[0.0, 0.13, 0.4, 1.0] {
            windycliff(wind).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn goal_is_absorbing_and_rewarded() {
        let w = windycliff_with(&WindyCliffParams::default()).unwrap();
        let g = &w.grid;
        let goal = g.index(g.goal);
        for a in 0..4 {
            assert_eq!(w.cmdp.dynamics.next_state_probs(goal, a)[goal], 1.0);
            assert_eq!(w.cmdp.reward[goal * 4 + a], 0.0);
        }
        // (2,9) moving down enters the goal regardless of wind
        let k = g.index((2, 9)) * 4 + 2;
        assert!((w.cmdp.reward[k] - 1.0).abs() < 1e-15);
        assert!((w.raw_reward[k] - 20.0).abs() < 1e-15);
        assert_eq!(WindyCliff::reward_to_raw(0.0), -1.0);
        assert_eq!(WindyCliff::cost_to_raw(0.15), 1.5);
    }

    #[test]
    fn zones_are_valid() {
        GridSpec::standard(0.4).validate().unwrap();
        let mut bad = GridSpec::standard(0.4);
        bad.zones[0].push((3, 0));
        assert!(bad.validate().is_err());
    }
}
