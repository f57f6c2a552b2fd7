//! Datasets for the two training experiments.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::Matrix;
use crate::rng::stream;

/// Regression pairs `(x, t(x))` with rows of `x` as samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub x: Matrix,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub train: RegressionSet,
    pub test: RegressionSet,
}

/// `t(x) = exp(-‖2x - 1‖²)`
pub fn synthetic_target(x: &[f64]) -> f64 {
    (-x.iter().map(|v| (2.0 * v - 1.0).powi(2)).sum::<f64>()).exp()
}

fn regression_set(n: usize, rng: &mut impl Rng) -> RegressionSet {
    let mut x = Matrix::zeros(n, 3);
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..3 {
            x[(i, j)] = rng.random_range(-1.0..=1.0);
        }
        t.push(synthetic_target(x.row(i)));
    }
    RegressionSet { x, t }
}

/// 1000 training and 1000 test pairs with `x` uniform on `[-1, 1]³`.
pub fn build_synthetic_task(data_seed: u64) -> SyntheticTask {
    build_synthetic_task_sized(data_seed, 1000, 1000)
}

pub fn build_synthetic_task_sized(data_seed: u64, n_train: usize, n_test: usize) -> SyntheticTask {
    let mut rng = stream(data_seed, "synthetic/data");
    let train = regression_set(n_train, &mut rng);
    let test = regression_set(n_test, &mut rng);
    SyntheticTask { train, test }
}

/// Labelled images, one flattened 8x8 glyph per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSet {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphTask {
    pub train: ClassificationSet,
    pub test: ClassificationSet,
}

pub const GLYPH_SIDE: usize = 8;
pub const GLYPH_CLASSES: usize = 10;

// Seven-segment digits on a 6x8 canvas: a top, b upper right, c lower right,
// d bottom, e lower left, f upper left, g middle.
const SEGMENTS: [&str; 10] = ["abcdef", "bc", "abdeg", "abcdg", "bcfg", "acdfg", "acdefg", "abc", "abcdefg", "abcdfg"];

fn prototype(class: usize) -> [[f64; GLYPH_SIDE]; GLYPH_SIDE] {
    let mut g = [[0.0; GLYPH_SIDE]; GLYPH_SIDE];
    let (left, right, top, mid, bottom) = (1, 6, 0, 3, 7);
    let hline = |g: &mut [[f64; 8]; 8], r: usize| (left..=right).for_each(|c| g[r][c] = 1.0);
    for s in SEGMENTS[class].chars() {
        match s {
            'a' => hline(&mut g, top),
            'd' => hline(&mut g, bottom),
            'g' => hline(&mut g, mid),
            'b' => (top..=mid).for_each(|r| g[r][right] = 1.0),
            'c' => (mid..=bottom).for_each(|r| g[r][right] = 1.0),
            'f' => (top..=mid).for_each(|r| g[r][left] = 1.0),
            'e' => (mid..=bottom).for_each(|r| g[r][left] = 1.0),
            _ => unreachable!(),
        }
    }
    g
}

fn glyph_set(n: usize, noise: f64, rng: &mut impl Rng) -> ClassificationSet {
    let normal = Normal::new(0.0, noise).expect("positive noise");
    let protos: Vec<_> = (0..GLYPH_CLASSES).map(prototype).collect();
    let mut x = Matrix::zeros(n, GLYPH_SIDE * GLYPH_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = rng.random_range(0..GLYPH_CLASSES);
        let (dr, dc): (i64, i64) = (rng.random_range(-1..=1), rng.random_range(-1..=1));
        for r in 0..GLYPH_SIDE {
            for c in 0..GLYPH_SIDE {
                let (sr, sc) = (r as i64 - dr, c as i64 - dc);
                let ink = if (0..8).contains(&sr) && (0..8).contains(&sc) {
                    protos[class][sr as usize][sc as usize]
                } else {
                    0.0
                };
                // strokes randomly fade
                let ink = ink * rng.random_range(0.5..=1.0);
                x[(i, r * GLYPH_SIDE + c)] = (ink + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
        labels.push(class);
    }
    ClassificationSet { x, labels }
}

/// Noisy, shifted seven-segment digits with pixels in `[0, 1]`.
pub fn build_glyph_task(data_seed: u64, n_train: usize, n_test: usize) -> GlyphTask {
    let mut rng = stream(data_seed, "glyphs/data");
    let train = glyph_set(n_train, 0.3, &mut rng);
    let test = glyph_set(n_test, 0.3, &mut rng);
    GlyphTask { train, test }
}
