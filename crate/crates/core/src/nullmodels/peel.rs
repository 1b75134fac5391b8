//! Removal of nodes whose link probabilities are forced to zero (no links
//! left to place) or one (linked to every remaining candidate).
//!
//! Forced multipliers get magnitudes that shrink with the peeling step, so the
//! node peeled first decides the probability of any pair of peeled nodes.

use super::FitError;

const PEEL_SCALE: f64 = 1.0e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RoleState {
    Active(usize),
    Zero(usize),
    Full(usize),
}

impl RoleState {
    /// Multiplier for a peeled role, `None` while active.
    pub(crate) fn forced_multiplier(self, total_steps: usize) -> Option<f64> {
        match self {
            RoleState::Active(_) => None,
            RoleState::Zero(step) => Some(PEEL_SCALE * (total_steps - step) as f64),
            RoleState::Full(step) => Some(-PEEL_SCALE * (total_steps - step) as f64),
        }
    }

    pub(crate) fn residual(self) -> Option<usize> {
        match self {
            RoleState::Active(k) => Some(k),
            _ => None,
        }
    }
}

pub(crate) struct Peeled {
    pub rows: Vec<RoleState>,
    pub cols: Vec<RoleState>,
    pub steps: usize,
}

struct Side {
    res: Vec<i64>,
    state: Vec<Option<RoleState>>,
    active: usize,
}

impl Side {
    fn new(deg: &[usize]) -> Self {
        Self { res: deg.iter().map(|&d| d as i64).collect(), state: vec![None; deg.len()], active: deg.len() }
    }

    fn is_active(&self, i: usize) -> bool {
        self.state[i].is_none()
    }

    fn finish(self) -> Vec<RoleState> {
        self.state.into_iter().zip(self.res).map(|(s, r)| s.unwrap_or(RoleState::Active(r as usize))).collect()
    }
}

/// Peels rows and columns of a two-sided model. With `paired`, row `i` and
/// column `i` are the out- and in-role of the same node and never link.
pub(crate) fn peel_two_sided(row_deg: &[usize], col_deg: &[usize], paired: bool) -> Result<Peeled, FitError> {
    let mut rows = Side::new(row_deg);
    let mut cols = Side::new(col_deg);
    let mut step = 0usize;
    loop {
        let a = sweep(&mut rows, &mut cols, paired, "row", &mut step)?;
        let b = sweep(&mut cols, &mut rows, paired, "column", &mut step)?;
        if !a && !b {
            break;
        }
    }
    Ok(Peeled { rows: rows.finish(), cols: cols.finish(), steps: step })
}

fn sweep(side: &mut Side, other: &mut Side, paired: bool, label: &str, step: &mut usize) -> Result<bool, FitError> {
    let mut changed = false;
    for i in 0..side.res.len() {
        if !side.is_active(i) {
            continue;
        }
        let own = paired && other.is_active(i);
        let cap = (other.active - usize::from(own)) as i64;
        let r = side.res[i];
        if r < 0 || r > cap {
            return Err(FitError::Infeasible(format!("{label} {i} needs {r} links but only {cap} partners remain")));
        }
        if r == 0 {
            side.state[i] = Some(RoleState::Zero(*step));
        } else if r == cap {
            side.state[i] = Some(RoleState::Full(*step));
            for j in 0..other.res.len() {
                if other.is_active(j) && !(paired && j == i) {
                    other.res[j] -= 1;
                }
            }
        } else {
            continue;
        }
        *step += 1;
        side.active -= 1;
        changed = true;
    }
    Ok(changed)
}

/// Peels a symmetric (undirected) model.
pub(crate) fn peel_symmetric(deg: &[usize]) -> Result<(Vec<RoleState>, usize), FitError> {
    let mut side = Side::new(deg);
    let mut step = 0usize;
    loop {
        let mut changed = false;
        for i in 0..side.res.len() {
            if !side.is_active(i) {
                continue;
            }
            let cap = side.active as i64 - 1;
            let r = side.res[i];
            if r < 0 || r > cap {
                return Err(FitError::Infeasible(format!("node {i} needs {r} links but only {cap} partners remain")));
            }
            if r == 0 {
                side.state[i] = Some(RoleState::Zero(step));
            } else if r == cap {
                side.state[i] = Some(RoleState::Full(step));
                for j in 0..side.res.len() {
                    if j != i && side.is_active(j) {
                        side.res[j] -= 1;
                    }
                }
            } else {
                continue;
            }
            step += 1;
            side.active -= 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    Ok((side.finish(), step))
}
