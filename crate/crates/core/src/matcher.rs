//! Scanline stereo correspondence with a SAD cost, a tolerance gate, and a
//! cost-based uniqueness constraint.
//!
//! Two row matchers are provided: [`match_row_oracle`] is the literal
//! reference procedure, and [`match_row_fast`] is an optimized variant that
//! must produce cell-for-cell identical output. [`match_pair`] applies the
//! fast matcher to every row of a pair, rows in parallel.

use crate::imageio::{GrayImage, Rgb, StereoPair};
use rayon::prelude::*;
use thiserror::Error;

/// Largest possible SAD over three 8-bit channels.
pub const MAX_SAD: u16 = 765;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("disparity {0} collides with the 255 unmatched sentinel; keep max disparity below 255")]
    DisparityOverflow(u32),
}

/// Matching parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Fraction of [`MAX_SAD`] a candidate may cost and still be accepted.
    pub tolerance_fraction: f64,
    /// Largest disparity searched, in pixels.
    pub max_disparity: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tolerance_fraction: 0.025,
            max_disparity: 64,
        }
    }
}

impl MatchConfig {
    /// Default config with the disparity search capped to fit `width`.
    pub fn for_width(width: usize) -> Self {
        Self {
            max_disparity: width.saturating_sub(1).clamp(1, 64),
            ..Self::default()
        }
    }

    pub fn validate_for_width(&self, width: usize) -> Result<(), MatchError> {
        if !self.tolerance_fraction.is_finite()
            || !(0.0..=1.0).contains(&self.tolerance_fraction)
        {
            return Err(MatchError::ConfigInvalid(format!(
                "tolerance fraction {} must be within [0, 1]",
                self.tolerance_fraction
            )));
        }
        if self.max_disparity < 1 {
            return Err(MatchError::ConfigInvalid(
                "max disparity must be at least 1".into(),
            ));
        }
        if self.max_disparity >= width {
            return Err(MatchError::ConfigInvalid(format!(
                "max disparity {} must be below the image width {}",
                self.max_disparity, width
            )));
        }
        Ok(())
    }
}

/// One disparity-map cell: a left pixel is either unmatched or matched at a
/// disparity with the SAD cost that won it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Unmatched,
    Matched { disparity: u32, cost: u16 },
}

impl Cell {
    pub fn disparity(self) -> Option<u32> {
        match self {
            Cell::Matched { disparity, .. } => Some(disparity),
            Cell::Unmatched => None,
        }
    }

    pub fn is_matched(self) -> bool {
        matches!(self, Cell::Matched { .. })
    }
}

/// Per-left-pixel disparities for a whole image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl DisparityMap {
    /// Panics if `cells.len() != width * height`.
    pub fn new(width: usize, height: usize, cells: Vec<Cell>) -> Self {
        assert_eq!(cells.len(), width * height, "cell count must be width * height");
        Self { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn row(&self, y: usize) -> &[Cell] {
        &self.cells[y * self.width..(y + 1) * self.width]
    }

    pub fn matched_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_matched()).count()
    }

    /// Renders disparities as gray values with 255 reserved for unmatched
    /// cells. Fails if any matched disparity reaches the sentinel.
    pub fn to_gray_image(&self) -> Result<GrayImage, MatchError> {
        let mut pixels = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            match *cell {
                Cell::Unmatched => pixels.push(255),
                Cell::Matched { disparity, .. } => {
                    if disparity >= 255 {
                        return Err(MatchError::DisparityOverflow(disparity));
                    }
                    pixels.push(disparity as u8);
                }
            }
        }
        Ok(GrayImage::new(self.width, self.height, pixels))
    }
}

/// Sum of absolute per-channel differences, in `[0, 765]`.
pub fn sad(p: Rgb, q: Rgb) -> u16 {
    u16::from(p.r.abs_diff(q.r)) + u16::from(p.g.abs_diff(q.g)) + u16::from(p.b.abs_diff(q.b))
}

/// Largest SAD accepted by the tolerance gate: `floor(tolerance * 765)`.
pub fn sad_threshold(cfg: &MatchConfig) -> u16 {
    (cfg.tolerance_fraction * f64::from(MAX_SAD)).floor() as u16
}

/// Reference row matcher: the literal procedure.
///
/// For each left column `x`, in left-to-right order:
/// candidate right columns are `max(0, x - max_disparity)..=x`; candidates
/// costing more than the threshold are discarded; the survivors are tried in
/// (cost, disparity) order. A candidate column already claimed by an earlier
/// left pixel is taken over only on strictly lower cost, permanently
/// unmatching the earlier pixel; otherwise the next candidate is tried. A
/// left pixel with no remaining candidate stays unmatched.
pub fn match_row_oracle(left_row: &[Rgb], right_row: &[Rgb], cfg: &MatchConfig) -> Vec<Cell> {
    assert_eq!(left_row.len(), right_row.len(), "rows must be the same length");
    let width = left_row.len();
    let threshold = sad_threshold(cfg);
    let mut cells = vec![Cell::Unmatched; width];
    // claimed[x_right] holds the left column currently matched to x_right.
    let mut claimed: Vec<Option<usize>> = vec![None; width];

    for x_left in 0..width {
        let mut candidates: Vec<(u16, u32)> = Vec::new();
        for x_right in x_left.saturating_sub(cfg.max_disparity)..=x_left {
            let cost = sad(left_row[x_left], right_row[x_right]);
            if cost <= threshold {
                candidates.push((cost, (x_left - x_right) as u32));
            }
        }
        candidates.sort_unstable();

        for (cost, disparity) in candidates {
            let x_right = x_left - disparity as usize;
            match claimed[x_right] {
                None => {
                    claimed[x_right] = Some(x_left);
                    cells[x_left] = Cell::Matched { disparity, cost };
                    break;
                }
                Some(previous) => {
                    let previous_cost = match cells[previous] {
                        Cell::Matched { cost, .. } => cost,
                        Cell::Unmatched => unreachable!("claimant must hold a match"),
                    };
                    if cost < previous_cost {
                        cells[previous] = Cell::Unmatched;
                        claimed[x_right] = Some(x_left);
                        cells[x_left] = Cell::Matched { disparity, cost };
                        break;
                    }
                    // Lost on cost: fall through to the next-best candidate.
                }
            }
        }
    }
    cells
}

/// SAD with an early abort once the running sum exceeds `limit`.
#[inline]
fn sad_within(p: Rgb, q: Rgb, limit: u16) -> Option<u16> {
    let mut total = u16::from(p.r.abs_diff(q.r));
    if total > limit {
        return None;
    }
    total += u16::from(p.g.abs_diff(q.g));
    if total > limit {
        return None;
    }
    total += u16::from(p.b.abs_diff(q.b));
    (total <= limit).then_some(total)
}

struct RowClaims {
    cells: Vec<Cell>,
    claimed: Vec<Option<usize>>,
}

impl RowClaims {
    fn new(width: usize) -> Self {
        Self {
            cells: vec![Cell::Unmatched; width],
            claimed: vec![None; width],
        }
    }

    /// Tries to give `x_left` the candidate; returns false if an earlier
    /// claimant kept the column (ties keep the earlier claimant).
    fn try_claim(&mut self, x_left: usize, cost: u16, disparity: u32) -> bool {
        let x_right = x_left - disparity as usize;
        if let Some(previous) = self.claimed[x_right] {
            let previous_cost = match self.cells[previous] {
                Cell::Matched { cost, .. } => cost,
                Cell::Unmatched => unreachable!("claimant must hold a match"),
            };
            if cost >= previous_cost {
                return false;
            }
            // Strictly cheaper: the earlier pixel is unmatched for good.
            self.cells[previous] = Cell::Unmatched;
        }
        self.claimed[x_right] = Some(x_left);
        self.cells[x_left] = Cell::Matched { disparity, cost };
        true
    }
}

/// Optimized row matcher; cell-for-cell identical to [`match_row_oracle`].
///
/// Costs are evaluated with an early abort against the threshold, the
/// best candidate is picked in one pass (stopping at the first zero-cost
/// hit, which nothing can beat), and the full candidate ordering is only
/// materialized when a conflict forces a fallback.
pub fn match_row_fast(left_row: &[Rgb], right_row: &[Rgb], cfg: &MatchConfig) -> Vec<Cell> {
    assert_eq!(left_row.len(), right_row.len(), "rows must be the same length");
    let width = left_row.len();
    let threshold = sad_threshold(cfg);
    let mut row = RowClaims::new(width);
    let mut candidates: Vec<(u16, u32)> = Vec::with_capacity(cfg.max_disparity + 1);

    for x_left in 0..width {
        let window = x_left.min(cfg.max_disparity);
        let left_pixel = left_row[x_left];
        candidates.clear();

        let mut best: Option<(u16, u32)> = None;
        let mut resume = window + 1;
        for d in 0..=window {
            if let Some(cost) = sad_within(left_pixel, right_row[x_left - d], threshold) {
                let candidate = (cost, d as u32);
                candidates.push(candidate);
                if best.is_none_or(|b| candidate < b) {
                    best = Some(candidate);
                }
                if cost == 0 {
                    // Unbeatable: lowest cost, and every later candidate has
                    // a larger disparity.
                    resume = d + 1;
                    break;
                }
            }
        }

        let Some((cost, disparity)) = best else { continue };
        if row.try_claim(x_left, cost, disparity) {
            continue;
        }

        // The best candidate lost its conflict; finish the scan and walk the
        // remaining candidates in (cost, disparity) order.
        for d in resume..=window {
            if let Some(cost) = sad_within(left_pixel, right_row[x_left - d], threshold) {
                candidates.push((cost, d as u32));
            }
        }
        candidates.sort_unstable();
        for &(cost, disparity) in &candidates {
            if row.try_claim(x_left, cost, disparity) {
                break;
            }
        }
    }
    row.cells
}

/// Matches every row of the pair independently (rows run in parallel; the
/// result does not depend on scheduling).
pub fn match_pair(pair: &StereoPair, cfg: &MatchConfig) -> Result<DisparityMap, MatchError> {
    cfg.validate_for_width(pair.width())?;
    let (left, right) = (pair.left(), pair.right());
    let rows: Vec<Vec<Cell>> = (0..pair.height())
        .into_par_iter()
        .map(|y| match_row_fast(left.row(y), right.row(y), cfg))
        .collect();
    let cells = rows.into_iter().flatten().collect();
    Ok(DisparityMap::new(pair.width(), pair.height(), cells))
}
