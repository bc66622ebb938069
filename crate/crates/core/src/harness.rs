//! Synthetic stereo pairs with exact ground truth, and scoring of matcher
//! output against that truth.
//!
//! A scene is an ordered stack of textured layers (back to front), each a
//! rectangle in left-image coordinates carrying one disparity. The left image
//! composites the layers in place; the right image composites them shifted
//! left by their disparity. Layer texture is per-pixel noise, rejection
//! sampled so that no two left pixels within `2 * max_disparity` columns of
//! each other on a scanline are within the SAD threshold — any correct match
//! is therefore unique, and matcher failures are algorithmic rather than
//! ambiguity artifacts. Right-image pixels that no shifted layer covers, and
//! layer pixels only visible in the right image, are drawn so that they match
//! no left pixel that could search them.
//!
//! Scene files are plain text: `width = <n>`, `height = <n>`, and one
//! `layer = <disparity> <x> <y> <w> <h> <seed>` line per layer, back to
//! front. Blank lines and `#` comments are ignored.

use crate::imageio::{Rgb, RgbImage, StereoPair};
use crate::matcher::{sad, sad_threshold, Cell, DisparityMap, MatchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("invalid scene: {0}")]
    SceneInvalid(String),
    #[error("scene parse error at line {line}: {message}")]
    SceneParse { line: usize, message: String },
    #[error("dimension mismatch: result is {result_width}x{result_height}, truth is {truth_width}x{truth_height}")]
    DimensionMismatch {
        result_width: usize,
        result_height: usize,
        truth_width: usize,
        truth_height: usize,
    },
}

/// Axis-aligned rectangle in left-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x && px < self.x + self.width && py >= self.y && py < self.y + self.height
    }

    fn clipped(&self, frame_width: usize, frame_height: usize) -> Self {
        let x = self.x.min(frame_width);
        let y = self.y.min(frame_height);
        Self {
            x,
            y,
            width: (self.x + self.width).min(frame_width) - x,
            height: (self.y + self.height).min(frame_height) - y,
        }
    }
}

/// One textured plane at a fixed disparity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub disparity: u32,
    pub region: Rect,
    pub texture_seed: u64,
}

/// Layers ordered back to front; front layers occlude back layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Layer>,
}

/// Matcher accuracy against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Fraction of left pixels the result matched.
    pub density: f64,
    /// Among pixels matched in both maps, the fraction whose disparity
    /// disagrees with truth.
    pub bad_pixel_rate: f64,
    /// Mean absolute disparity error over the same support.
    pub mean_abs_disparity_error: f64,
}

const REJECTION_ATTEMPTS: usize = 10_000;

fn random_pixel(rng: &mut ChaCha8Rng) -> Rgb {
    Rgb::new(rng.random(), rng.random(), rng.random())
}

/// Draws a pixel whose SAD to every reference exceeds `threshold`.
fn draw_distinct(
    rng: &mut ChaCha8Rng,
    threshold: u16,
    references: &[Rgb],
) -> Result<Rgb, HarnessError> {
    for _ in 0..REJECTION_ATTEMPTS {
        let candidate = random_pixel(rng);
        if references.iter().all(|&r| sad(candidate, r) > threshold) {
            return Ok(candidate);
        }
    }
    Err(HarnessError::SceneInvalid(format!(
        "could not draw a texture sample distinct from its neighbors; \
         the tolerance threshold {threshold} leaves too little color space"
    )))
}

fn validate(scene: &SyntheticScene, cfg: &MatchConfig) -> Result<Vec<Rect>, HarnessError> {
    if scene.width == 0 || scene.height == 0 {
        return Err(HarnessError::SceneInvalid("zero scene dimension".into()));
    }
    for (i, layer) in scene.layers.iter().enumerate() {
        if layer.disparity as usize >= scene.width {
            return Err(HarnessError::SceneInvalid(format!(
                "layer {i} disparity {} must be below the scene width {}",
                layer.disparity, scene.width
            )));
        }
        if layer.disparity as usize > cfg.max_disparity {
            return Err(HarnessError::SceneInvalid(format!(
                "layer {i} disparity {} exceeds the configured max disparity {}",
                layer.disparity, cfg.max_disparity
            )));
        }
    }
    Ok(scene
        .layers
        .iter()
        .map(|l| l.region.clipped(scene.width, scene.height))
        .collect())
}

/// Composites a scene into a stereo pair plus exact ground truth.
///
/// Ground truth marks a left pixel `Matched` with its layer's disparity when
/// its correspondent is inside the right frame and not occluded there, and
/// `Unmatched` otherwise. Generation is deterministic given the scene;
/// `cfg` supplies the SAD threshold and search range the texture constraints
/// are enforced against.
pub fn generate_pair(
    scene: &SyntheticScene,
    cfg: &MatchConfig,
) -> Result<(StereoPair, DisparityMap), HarnessError> {
    let regions = validate(scene, cfg)?;
    let (width, height) = (scene.width, scene.height);
    let threshold = sad_threshold(cfg);
    let window = 2 * cfg.max_disparity;

    let mut layer_rngs: Vec<ChaCha8Rng> = scene
        .layers
        .iter()
        .map(|l| ChaCha8Rng::seed_from_u64(l.texture_seed))
        .collect();
    let hole_seed = scene
        .layers
        .iter()
        .fold(0x9E37_79B9_7F4A_7C15u64, |acc, l| {
            acc.rotate_left(13) ^ l.texture_seed.wrapping_mul(0x0100_0000_01B3)
        });
    let mut hole_rng = ChaCha8Rng::seed_from_u64(hole_seed);

    let mut left_pixels = Vec::with_capacity(width * height);
    let mut right_pixels = Vec::with_capacity(width * height);
    let mut truth = Vec::with_capacity(width * height);

    let mut left_row = vec![Rgb::default(); width];
    for y in 0..height {
        // Frontmost layer owning each left pixel; every pixel must be covered.
        let mut owner = vec![usize::MAX; width];
        for x in 0..width {
            match (0..scene.layers.len())
                .rev()
                .find(|&i| regions[i].contains(x, y))
            {
                Some(i) => owner[x] = i,
                None => {
                    return Err(HarnessError::SceneInvalid(format!(
                        "no layer covers pixel ({x}, {y}); scenes need a full-frame back layer"
                    )))
                }
            }
        }

        // Frontmost layer visible at each right column, if any.
        let visible_right: Vec<Option<usize>> = (0..width)
            .map(|x_right| {
                (0..scene.layers.len()).rev().find(|&i| {
                    regions[i].contains(x_right + scene.layers[i].disparity as usize, y)
                })
            })
            .collect();

        for x in 0..width {
            let references = &left_row[x.saturating_sub(window)..x];
            left_row[x] = draw_distinct(&mut layer_rngs[owner[x]], threshold, references)?;
        }

        for x_right in 0..width {
            let anti_match = &left_row[x_right..(x_right + cfg.max_disparity + 1).min(width)];
            let value = match visible_right[x_right] {
                Some(layer) => {
                    let source = x_right + scene.layers[layer].disparity as usize;
                    if owner[source] == layer {
                        // The same layer sample is visible in both images.
                        left_row[source]
                    } else {
                        // Visible only in the right image (disoccluded); must
                        // not match any left pixel that can search it.
                        draw_distinct(&mut layer_rngs[layer], threshold, anti_match)?
                    }
                }
                // No shifted layer reaches this column.
                None => draw_distinct(&mut hole_rng, threshold, anti_match)?,
            };
            right_pixels.push(value);
        }

        for x in 0..width {
            let layer = owner[x];
            let disparity = scene.layers[layer].disparity;
            let cell = match x.checked_sub(disparity as usize) {
                Some(x_right) if visible_right[x_right] == Some(layer) => {
                    Cell::Matched { disparity, cost: 0 }
                }
                _ => Cell::Unmatched,
            };
            truth.push(cell);
        }

        left_pixels.extend_from_slice(&left_row);
    }

    let left = RgbImage::new(width, height, left_pixels);
    let right = RgbImage::new(width, height, right_pixels);
    let pair = StereoPair::new(left, right).expect("generated images share dimensions");
    Ok((pair, DisparityMap::new(width, height, truth)))
}

/// Adds independent per-channel uniform jitter in `[-amplitude, +amplitude]`
/// to every pixel, clamped to the channel range.
pub fn jitter(img: &RgbImage, amplitude: u8, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = i16::from(amplitude);
    let mut shift = |v: u8| -> u8 {
        let jittered = i16::from(v) + rng.random_range(-amplitude..=amplitude);
        jittered.clamp(0, 255) as u8
    };
    let pixels = img
        .pixels()
        .iter()
        .map(|p| Rgb::new(shift(p.r), shift(p.g), shift(p.b)))
        .collect();
    RgbImage::new(img.width(), img.height(), pixels)
}

/// Scores a disparity map against ground truth.
pub fn evaluate(result: &DisparityMap, truth: &DisparityMap) -> Result<EvalReport, HarnessError> {
    if result.width() != truth.width() || result.height() != truth.height() {
        return Err(HarnessError::DimensionMismatch {
            result_width: result.width(),
            result_height: result.height(),
            truth_width: truth.width(),
            truth_height: truth.height(),
        });
    }

    let total = result.cells().len();
    let mut matched = 0usize;
    let mut support = 0usize;
    let mut bad = 0usize;
    let mut error_sum = 0u64;

    for (r, t) in result.cells().iter().zip(truth.cells()) {
        let Some(rd) = r.disparity() else { continue };
        matched += 1;
        let Some(td) = t.disparity() else { continue };
        support += 1;
        let diff = u64::from(rd.abs_diff(td));
        if diff > 0 {
            bad += 1;
        }
        error_sum += diff;
    }

    Ok(EvalReport {
        density: matched as f64 / total as f64,
        bad_pixel_rate: if support == 0 { 0.0 } else { bad as f64 / support as f64 },
        mean_abs_disparity_error: if support == 0 {
            0.0
        } else {
            error_sum as f64 / support as f64
        },
    })
}

/// Parses the plain-text scene format described in the module docs.
pub fn parse_scene(text: &str) -> Result<SyntheticScene, HarnessError> {
    let mut width = None;
    let mut height = None;
    let mut layers = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(HarnessError::SceneParse {
            line,
            message: "expected `key = value`".into(),
        })?;
        let parse = |token: &str, what: &str| -> Result<u64, HarnessError> {
            token.parse().map_err(|_| HarnessError::SceneParse {
                line,
                message: format!("invalid {what} `{token}`"),
            })
        };
        match key.trim() {
            "width" => width = Some(parse(value.trim(), "width")? as usize),
            "height" => height = Some(parse(value.trim(), "height")? as usize),
            "layer" => {
                let fields: Vec<&str> = value.split_whitespace().collect();
                if fields.len() != 6 {
                    return Err(HarnessError::SceneParse {
                        line,
                        message: format!(
                            "layer needs 6 fields (disparity x y w h seed), found {}",
                            fields.len()
                        ),
                    });
                }
                layers.push(Layer {
                    disparity: parse(fields[0], "disparity")? as u32,
                    region: Rect::new(
                        parse(fields[1], "rect x")? as usize,
                        parse(fields[2], "rect y")? as usize,
                        parse(fields[3], "rect width")? as usize,
                        parse(fields[4], "rect height")? as usize,
                    ),
                    texture_seed: parse(fields[5], "seed")?,
                })
            }
            other => {
                return Err(HarnessError::SceneParse {
                    line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let width = width.ok_or(HarnessError::SceneParse {
        line: 0,
        message: "missing `width`".into(),
    })?;
    let height = height.ok_or(HarnessError::SceneParse {
        line: 0,
        message: "missing `height`".into(),
    })?;
    Ok(SyntheticScene { width, height, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::match_pair;
    use proptest::prelude::*;

    fn cfg(tolerance: f64, max_disparity: usize) -> MatchConfig {
        MatchConfig {
            tolerance_fraction: tolerance,
            max_disparity,
        }
    }

    fn full_frame(width: usize, height: usize, disparity: u32, seed: u64) -> SyntheticScene {
        SyntheticScene {
            width,
            height,
            layers: vec![Layer {
                disparity,
                region: Rect::new(0, 0, width, height),
                texture_seed: seed,
            }],
        }
    }

    #[test]
    fn zero_shift_scene_yields_identical_images() {
        let (pair, truth) = generate_pair(&full_frame(16, 4, 0, 7), &cfg(0.025, 4)).unwrap();
        assert_eq!(pair.left(), pair.right());
        assert!(truth
            .cells()
            .iter()
            .all(|&c| c == Cell::Matched { disparity: 0, cost: 0 }));
    }

    #[test]
    fn uniform_shift_scene_is_the_shift_construction() {
        let k = 3;
        let (pair, truth) = generate_pair(&full_frame(16, 4, k, 7), &cfg(0.025, 4)).unwrap();
        for y in 0..4 {
            for x in 0..16 {
                let expected = if x >= k as usize {
                    Cell::Matched { disparity: k, cost: 0 }
                } else {
                    Cell::Unmatched
                };
                assert_eq!(truth.cell(x, y), expected, "({x}, {y})");
            }
            for x_right in 0..16 - k as usize {
                assert_eq!(
                    pair.right().pixel(x_right, y),
                    pair.left().pixel(x_right + k as usize, y)
                );
            }
        }
    }

    #[test]
    fn occlusion_scene_has_the_band_of_the_disparity_difference() {
        // Back layer at disparity 2 behind a front rectangle at disparity 5:
        // left pixels just left of the rectangle land, in the right image,
        // where the rectangle went — a band exactly 3 columns wide.
        let scene = SyntheticScene {
            width: 32,
            height: 8,
            layers: vec![
                Layer { disparity: 2, region: Rect::new(0, 0, 32, 8), texture_seed: 1 },
                Layer { disparity: 5, region: Rect::new(10, 2, 12, 4), texture_seed: 2 },
            ],
        };
        let (_, truth) = generate_pair(&scene, &cfg(0.025, 8)).unwrap();

        // Independent re-derivation, pixel by pixel: find the owning layer by
        // scanning front to back, shift, and check what is visible there.
        let in_rect = |x: usize, y: usize| x >= 10 && x < 22 && y >= 2 && y < 6;
        for y in 0..8 {
            for x in 0..32 {
                let (d, layer_is_front) = if in_rect(x, y) { (5, true) } else { (2, false) };
                let expected = match x.checked_sub(d) {
                    None => Cell::Unmatched,
                    Some(x_right) => {
                        let front_visible = in_rect(x_right + 5, y);
                        if front_visible == layer_is_front {
                            Cell::Matched { disparity: d as u32, cost: 0 }
                        } else {
                            Cell::Unmatched
                        }
                    }
                };
                assert_eq!(truth.cell(x, y), expected, "({x}, {y})");
            }
        }

        // The band itself: rows the rectangle crosses, columns [7, 10).
        for y in 2..6 {
            for x in 7..10 {
                assert_eq!(truth.cell(x, y), Cell::Unmatched, "({x}, {y})");
            }
            assert_eq!(truth.cell(6, y), Cell::Matched { disparity: 2, cost: 0 });
            assert_eq!(truth.cell(10, y), Cell::Matched { disparity: 5, cost: 0 });
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let scene = SyntheticScene {
            width: 24,
            height: 6,
            layers: vec![
                Layer { disparity: 1, region: Rect::new(0, 0, 24, 6), texture_seed: 9 },
                Layer { disparity: 4, region: Rect::new(5, 1, 10, 3), texture_seed: 11 },
            ],
        };
        let a = generate_pair(&scene, &cfg(0.025, 6)).unwrap();
        let b = generate_pair(&scene, &cfg(0.025, 6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_disparity_must_stay_below_width() {
        let scene = full_frame(8, 2, 8, 1);
        assert!(matches!(
            generate_pair(&scene, &cfg(0.025, 64)),
            Err(HarnessError::SceneInvalid(_))
        ));
    }

    #[test]
    fn scene_disparity_must_stay_within_search_range() {
        let scene = full_frame(16, 2, 5, 1);
        assert!(matches!(
            generate_pair(&scene, &cfg(0.025, 4)),
            Err(HarnessError::SceneInvalid(_))
        ));
    }

    #[test]
    fn uncovered_pixels_invalidate_the_scene() {
        let scene = SyntheticScene {
            width: 8,
            height: 2,
            layers: vec![Layer { disparity: 0, region: Rect::new(0, 0, 4, 2), texture_seed: 1 }],
        };
        assert!(matches!(
            generate_pair(&scene, &cfg(0.025, 2)),
            Err(HarnessError::SceneInvalid(_))
        ));
    }

    #[test]
    fn matcher_recovers_a_generated_scene_exactly() {
        let config = cfg(0.025, 8);
        let scene = SyntheticScene {
            width: 48,
            height: 6,
            layers: vec![
                Layer { disparity: 2, region: Rect::new(0, 0, 48, 6), texture_seed: 3 },
                Layer { disparity: 7, region: Rect::new(12, 1, 20, 4), texture_seed: 4 },
            ],
        };
        let (pair, truth) = generate_pair(&scene, &config).unwrap();
        let result = match_pair(&pair, &config).unwrap();
        let report = evaluate(&result, &truth).unwrap();
        assert_eq!(report.bad_pixel_rate, 0.0);
        assert_eq!(report.mean_abs_disparity_error, 0.0);
        for (r, t) in result.cells().iter().zip(truth.cells()) {
            assert_eq!(r.disparity(), t.disparity());
        }
    }

    #[test]
    fn evaluate_examples() {
        let truth = DisparityMap::new(2, 2, vec![Cell::Matched { disparity: 2, cost: 0 }; 4]);
        let same = evaluate(&truth, &truth).unwrap();
        assert_eq!(same.density, 1.0);
        assert_eq!(same.bad_pixel_rate, 0.0);
        assert_eq!(same.mean_abs_disparity_error, 0.0);

        let empty = DisparityMap::new(2, 2, vec![Cell::Unmatched; 4]);
        let vacuous = evaluate(&empty, &truth).unwrap();
        assert_eq!(vacuous.density, 0.0);
        assert_eq!(vacuous.bad_pixel_rate, 0.0);
        assert_eq!(vacuous.mean_abs_disparity_error, 0.0);

        let off = DisparityMap::new(2, 2, vec![Cell::Matched { disparity: 3, cost: 0 }; 4]);
        let report = evaluate(&off, &truth).unwrap();
        assert_eq!(report.density, 1.0);
        assert_eq!(report.bad_pixel_rate, 1.0);
        assert_eq!(report.mean_abs_disparity_error, 1.0);
    }

    #[test]
    fn evaluate_rejects_mismatched_dimensions() {
        let a = DisparityMap::new(2, 2, vec![Cell::Unmatched; 4]);
        let b = DisparityMap::new(3, 2, vec![Cell::Unmatched; 6]);
        assert!(matches!(
            evaluate(&a, &b),
            Err(HarnessError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parses_a_scene_file() {
        let text = "\
# two layers, back to front
width = 32
height = 8

layer = 2 0 0 32 8 1
layer = 5 10 2 12 4 2   # front rectangle
";
        let scene = parse_scene(text).unwrap();
        assert_eq!((scene.width, scene.height), (32, 8));
        assert_eq!(scene.layers.len(), 2);
        assert_eq!(scene.layers[1].disparity, 5);
        assert_eq!(scene.layers[1].region, Rect::new(10, 2, 12, 4));
        assert_eq!(scene.layers[1].texture_seed, 2);
    }

    #[test]
    fn scene_parse_errors_carry_line_numbers() {
        assert_eq!(
            parse_scene("width = 4\nheight = 2\nlayer = 1 2 3\n"),
            Err(HarnessError::SceneParse {
                line: 3,
                message: "layer needs 6 fields (disparity x y w h seed), found 3".into()
            })
        );
        assert!(matches!(
            parse_scene("width = nope\n"),
            Err(HarnessError::SceneParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_scene("speed = 4\n"),
            Err(HarnessError::SceneParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_scene("width = 4\n"),
            Err(HarnessError::SceneParse { line: 0, .. })
        ));
    }

    #[test]
    fn jitter_is_bounded_and_deterministic() {
        let img = RgbImage::from_fn(16, 4, |x, y| Rgb::new((x * 16) as u8, (y * 60) as u8, 128));
        let a = jitter(&img, 6, 42);
        let b = jitter(&img, 6, 42);
        assert_eq!(a, b);
        for (p, q) in img.pixels().iter().zip(a.pixels()) {
            assert!(p.r.abs_diff(q.r) <= 6);
            assert!(p.g.abs_diff(q.g) <= 6);
            assert!(p.b.abs_diff(q.b) <= 6);
        }
        assert_ne!(jitter(&img, 6, 43), a);
    }

    fn arb_scene() -> impl Strategy<Value = (SyntheticScene, MatchConfig)> {
        (8usize..32, 1usize..5, 1usize..7).prop_flat_map(|(w, h, max_disparity)| {
            let layer = (0u32..=max_disparity as u32, 0usize..w, 0usize..h, 1usize..w, 1usize..h.max(2), any::<u64>())
                .prop_map(|(d, x, y, rw, rh, seed)| Layer {
                    disparity: d,
                    region: Rect::new(x, y, rw, rh),
                    texture_seed: seed,
                });
            (
                0u32..=max_disparity as u32,
                any::<u64>(),
                proptest::collection::vec(layer, 0..3),
            )
                .prop_map(move |(back_d, back_seed, mut layers)| {
                    layers.insert(
                        0,
                        Layer {
                            disparity: back_d,
                            region: Rect::new(0, 0, w, h),
                            texture_seed: back_seed,
                        },
                    );
                    (
                        SyntheticScene { width: w, height: h, layers },
                        cfg(0.025, max_disparity),
                    )
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ground_truth_is_sound((scene, config) in arb_scene()) {
            let (pair, truth) = generate_pair(&scene, &config).unwrap();
            for y in 0..scene.height {
                for x in 0..scene.width {
                    if let Some(d) = truth.cell(x, y).disparity() {
                        prop_assert_eq!(
                            pair.right().pixel(x - d as usize, y),
                            pair.left().pixel(x, y)
                        );
                    }
                }
            }
        }

        #[test]
        fn left_texture_is_distinct_within_the_search_window((scene, config) in arb_scene()) {
            let (pair, _) = generate_pair(&scene, &config).unwrap();
            let threshold = sad_threshold(&config);
            let window = 2 * config.max_disparity;
            for y in 0..scene.height {
                let row = pair.left().row(y);
                for a in 0..row.len() {
                    for b in a + 1..row.len().min(a + window + 1) {
                        prop_assert!(sad(row[a], row[b]) > threshold);
                    }
                }
            }
        }

        #[test]
        fn evaluate_is_reflexively_zero((scene, config) in arb_scene()) {
            let (_, truth) = generate_pair(&scene, &config).unwrap();
            let report = evaluate(&truth, &truth).unwrap();
            prop_assert_eq!(report.bad_pixel_rate, 0.0);
            prop_assert_eq!(report.mean_abs_disparity_error, 0.0);
        }
    }
}
