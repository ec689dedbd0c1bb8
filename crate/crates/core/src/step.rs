//! Right-continuous nondecreasing step functions used as CDF bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for monotonicity and range checks on levels.
pub const LEVEL_TOL: f64 = 1e-12;

/// What happens to the right of the last breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// The last level is 1.
    Closed,
    /// The function stays at its last level (< 1) until `jump_at`, where it
    /// jumps to 1. `jump_at` may be `+∞`.
    Open { jump_at: f64 },
}

/// Step CDF: `level_before` on `(-∞, x_1)`, `levels[j]` on `[x_j, x_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
    level_before: f64,
    tail: Tail,
}

/// A maximal `p`-interval `(p_lo, p_hi]` on which a generalized inverse is
/// constant and equal to `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePiece {
    pub p_lo: f64,
    pub p_hi: f64,
    pub x: f64,
}

impl StepCdf {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>, level_before: f64, tail: Tail) -> Result<Self> {
        if breakpoints.len() != levels.len() {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints but {} levels",
                breakpoints.len(),
                levels.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
        }
        let in_range = |v: f64| (-LEVEL_TOL..=1.0 + LEVEL_TOL).contains(&v);
        if !in_range(level_before) || levels.iter().any(|&v| !in_range(v)) {
            return Err(Error::InvalidInput("step levels must lie in [0, 1]".into()));
        }
        let mut prev = level_before;
        for &v in &levels {
            if v < prev - LEVEL_TOL {
                return Err(Error::InvalidInput("step levels must be nondecreasing".into()));
            }
            prev = v;
        }
        let last = levels.last().copied().unwrap_or(level_before);
        match tail {
            Tail::Closed if (last - 1.0).abs() > LEVEL_TOL => {
                return Err(Error::InvalidInput(format!(
                    "closed step CDF must end at level 1, ends at {last}"
                )));
            }
            Tail::Open { jump_at } if jump_at.is_nan() || breakpoints.last().is_some_and(|&b| jump_at <= b) => {
                return Err(Error::InvalidInput(
                    "open tail jump must lie beyond the last breakpoint".into(),
                ));
            }
            _ => {}
        }
        Ok(Self {
            breakpoints,
            levels,
            level_before,
            tail,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level_before(&self) -> f64 {
        self.level_before
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn last_level(&self) -> f64 {
        self.levels.last().copied().unwrap_or(self.level_before)
    }

    /// `F(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        if let Tail::Open { jump_at } = self.tail {
            if x >= jump_at {
                return 1.0;
            }
        }
        // index of the first breakpoint > x
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        if idx == 0 {
            self.level_before
        } else {
            self.levels[idx - 1]
        }
    }

    /// Left limit `F(x-)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        if let Tail::Open { jump_at } = self.tail {
            if x > jump_at {
                return 1.0;
            }
        }
        let idx = self.breakpoints.partition_point(|&b| b < x);
        if idx == 0 {
            self.level_before
        } else {
            self.levels[idx - 1]
        }
    }

    /// Generalized inverse `inf{x : F(x) >= p}` for `p` in `(0, 1]`.
    ///
    /// Returns `-∞` when `p` is already reached before the first breakpoint,
    /// and the open-tail jump location when `p` exceeds the last level.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidInput(format!("inverse level {p} outside (0, 1]")));
        }
        if self.level_before >= p {
            return Ok(f64::NEG_INFINITY);
        }
        let idx = self.levels.partition_point(|&v| v < p);
        if idx < self.levels.len() {
            return Ok(self.breakpoints[idx]);
        }
        match self.tail {
            Tail::Open { jump_at } if jump_at.is_finite() => Ok(jump_at),
            Tail::Open { .. } => Err(Error::InverseUnbounded(p)),
            // a closed function reaches 1 at its last breakpoint
            Tail::Closed => Ok(*self.breakpoints.last().unwrap_or(&f64::NEG_INFINITY)),
        }
    }

    /// Partition of `(0, 1]` into intervals on which the inverse is constant.
    ///
    /// Values below the first breakpoint become `floor` (`-∞` when `None`),
    /// and the open tail contributes its jump location. Empty intervals are
    /// dropped; every returned `x` is at least `floor`.
    pub fn quantile_pieces(&self, floor: Option<f64>) -> Vec<QuantilePiece> {
        let floor_x = floor.unwrap_or(f64::NEG_INFINITY);
        let clamp = |x: f64| if x < floor_x { floor_x } else { x };
        let mut pieces = Vec::with_capacity(self.levels.len() + 2);
        let mut prev = self.level_before.clamp(0.0, 1.0);
        if prev > 0.0 {
            pieces.push(QuantilePiece {
                p_lo: 0.0,
                p_hi: prev,
                x: floor_x,
            });
        }
        for (&x, &level) in self.breakpoints.iter().zip(&self.levels) {
            let level = level.min(1.0);
            if level > prev {
                pieces.push(QuantilePiece {
                    p_lo: prev,
                    p_hi: level,
                    x: clamp(x),
                });
                prev = level;
            }
        }
        if prev < 1.0 {
            let x = match self.tail {
                Tail::Open { jump_at } => jump_at,
                Tail::Closed => *self.breakpoints.last().unwrap_or(&floor_x),
            };
            pieces.push(QuantilePiece {
                p_lo: prev,
                p_hi: 1.0,
                x: clamp(x),
            });
        }
        pieces
    }

    /// Applies a level map `g` (nondecreasing, `g(1) = 1`) to every level.
    pub fn map_levels(&self, g: impl Fn(f64) -> f64) -> Result<StepCdf> {
        let levels = self.levels.iter().map(|&v| g(v)).collect();
        StepCdf::new(self.breakpoints.clone(), levels, g(self.level_before), self.tail)
    }

    /// Re-expresses the function on a finer grid that contains every current
    /// breakpoint.
    pub fn on_grid(&self, grid: &[f64]) -> Result<StepCdf> {
        let levels = grid.iter().map(|&x| self.eval(x)).collect();
        StepCdf::new(grid.to_vec(), levels, self.level_before, self.tail)
    }
}

/// `∫_0^1 g(F^-(p)) w(a, b) dp` over the pieces of a generalized inverse, where
/// `mass(a, b)` is the weight of `(a, b]`. Pieces with zero mass are skipped
/// so that `g` is never evaluated at an irrelevant infinite endpoint.
pub fn integrate_pieces(
    pieces: &[QuantilePiece],
    mut mass: impl FnMut(f64, f64) -> f64,
    mut g: impl FnMut(f64) -> f64,
) -> f64 {
    let mut total = 0.0;
    for piece in pieces {
        let m = mass(piece.p_lo, piece.p_hi);
        if m != 0.0 {
            total += m * g(piece.x);
        }
    }
    total
}

/// Common refinement of two piece partitions: `(p_lo, p_hi, x_first, x_second)`.
pub fn merge_pieces(first: &[QuantilePiece], second: &[QuantilePiece]) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::with_capacity(first.len() + second.len());
    let (mut i, mut j) = (0, 0);
    let mut lo = 0.0;
    while i < first.len() && j < second.len() {
        let hi = first[i].p_hi.min(second[j].p_hi);
        if hi > lo {
            out.push((lo, hi, first[i].x, second[j].x));
            lo = hi;
        }
        if first[i].p_hi <= hi {
            i += 1;
        }
        if second[j].p_hi <= hi {
            j += 1;
        }
    }
    out
}
