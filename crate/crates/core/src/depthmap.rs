//! Disparity-to-depth conversion and grayscale rendering.
//!
//! Depth is relative (the focal-length x baseline product is normalized to
//! 1), so a matched disparity `d >= 1` maps to depth `1/d`. Rendering is
//! invariant under uniform depth rescaling, which is what makes the
//! normalization harmless.

use crate::imageio::GrayImage;
use crate::matcher::{Cell, DisparityMap};

/// One depth-map cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthCell {
    Unmatched,
    Depth(f64),
}

impl DepthCell {
    pub fn depth(self) -> Option<f64> {
        match self {
            DepthCell::Depth(v) => Some(v),
            DepthCell::Unmatched => None,
        }
    }
}

/// Per-pixel relative depth with the source map's dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    cells: Vec<DepthCell>,
}

impl DepthMap {
    /// Panics if `cells.len() != width * height`.
    pub fn new(width: usize, height: usize, cells: Vec<DepthCell>) -> Self {
        assert_eq!(cells.len(), width * height, "cell count must be width * height");
        Self { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> DepthCell {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[DepthCell] {
        &self.cells
    }

    /// Same map with every depth multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|c| match *c {
                DepthCell::Depth(v) => DepthCell::Depth(v * factor),
                DepthCell::Unmatched => DepthCell::Unmatched,
            })
            .collect();
        Self::new(self.width, self.height, cells)
    }
}

/// Converts disparities to relative depth.
///
/// A matched cell with disparity `d >= 1` becomes depth `1/d`. Zero
/// disparity means "at infinity" in the pinhole model; such cells get a
/// finite sentinel depth of twice the largest measured depth (or 1 when no
/// cell has a positive disparity), which renders them darker than every
/// measured pixel yet distinct from the white reserved for unmatched ones.
pub fn disparity_to_depth(map: &DisparityMap) -> DepthMap {
    let min_positive = map
        .cells()
        .iter()
        .filter_map(|c| c.disparity().filter(|&d| d >= 1))
        .min();
    let cap = min_positive.map_or(1.0, |d| 2.0 * (1.0 / f64::from(d)));

    let cells = map
        .cells()
        .iter()
        .map(|c| match *c {
            Cell::Unmatched => DepthCell::Unmatched,
            Cell::Matched { disparity: 0, .. } => DepthCell::Depth(cap),
            Cell::Matched { disparity, .. } => DepthCell::Depth(1.0 / f64::from(disparity)),
        })
        .collect();
    DepthMap::new(map.width(), map.height(), cells)
}

/// Renders depth to gray: `round(255 - depth * 255 / maxdepth)`, clamped.
///
/// The pixel holding the maximum depth renders to 0 (black); unmatched
/// pixels render to 255 (white); a map with no matched cell renders all
/// white. The ratio to maxdepth is taken before scaling by 255 so that
/// uniform depth rescaling cannot disturb the quantization.
pub fn render(depth: &DepthMap) -> GrayImage {
    let maxdepth = depth
        .cells()
        .iter()
        .filter_map(|c| c.depth())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))));

    let pixels = depth
        .cells()
        .iter()
        .map(|c| match (c.depth(), maxdepth) {
            (Some(v), Some(max)) => {
                let gray = 255.0 - (v / max) * 255.0;
                gray.round().clamp(0.0, 255.0) as u8
            }
            _ => 255,
        })
        .collect();
    GrayImage::new(depth.width(), depth.height(), pixels)
}
