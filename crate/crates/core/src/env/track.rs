use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackConfig {
    pub tiles: usize,
    pub tile_length: f32,
    /// Upper bound on |curvature| (radians per unit length).
    pub max_curvature: f32,
    /// Largest per-tile increment of the raw curvature random walk.
    pub curvature_step: f32,
    /// Low-pass coefficient in `[0, 1)`; larger is smoother.
    pub smoothing: f32,
    /// Drift of the curvature walk in `[-1, 1]`; positive favours left turns.
    pub turn_bias: f32,
    /// Leading tiles kept straight.
    pub straight_start: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            tiles: 100,
            tile_length: 0.12,
            max_curvature: 0.2,
            curvature_step: 0.08,
            smoothing: 0.7,
            turn_bias: 0.0,
            straight_start: 4,
        }
    }
}

/// Open track centerline: `tiles + 1` points, tile `i` spans points `i` and
/// `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    points: Vec<[f32; 2]>,
    tile_length: f32,
}

impl Track {
    /// Deterministic per `(seed, config)`. `config.tiles` is raised to 10 if
    /// smaller.
    pub fn generate(seed: u64, config: &TrackConfig) -> Self {
        let tiles = config.tiles.max(10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_k = config.max_curvature.max(0.0);
        let alpha = config.smoothing.clamp(0.0, 0.999);
        let bias = config.turn_bias.clamp(-1.0, 1.0);

        let mut points = Vec::with_capacity(tiles + 1);
        let (mut x, mut y, mut heading) = (0.0f32, 0.0f32, 0.0f32);
        let (mut raw, mut curvature) = (0.0f32, 0.0f32);
        points.push([x, y]);
        for i in 0..tiles {
            // draw unconditionally so the stream does not depend on the lead-in
            let u: f32 = rng.random_range(-1.0..=1.0);
            if i >= config.straight_start {
                raw = (raw + (u + 0.5 * bias) * config.curvature_step).clamp(-max_k, max_k);
                curvature = (alpha * curvature + (1.0 - alpha) * raw).clamp(-max_k, max_k);
                heading += curvature * config.tile_length;
            }
            x += config.tile_length * libm::cosf(heading);
            y += config.tile_length * libm::sinf(heading);
            points.push([x, y]);
        }
        Self {
            points,
            tile_length: config.tile_length,
        }
    }

    /// Builds a track from explicit centerline points (at least 11).
    pub fn from_points(points: Vec<[f32; 2]>) -> Option<Self> {
        if points.len() < 11 {
            return None;
        }
        let d = |a: [f32; 2], b: [f32; 2]| libm::hypotf(b[0] - a[0], b[1] - a[1]);
        let tile_length = d(points[0], points[1]);
        Some(Self {
            points,
            tile_length,
        })
    }

    pub fn tiles(&self) -> usize {
        self.points.len() - 1
    }

    pub fn tile_length(&self) -> f32 {
        self.tile_length
    }

    pub fn points(&self) -> &[[f32; 2]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f32; 2] {
        self.points[i]
    }

    pub fn tile_heading(&self, tile: usize) -> f32 {
        let a = self.points[tile];
        let b = self.points[tile + 1];
        libm::atan2f(b[1] - a[1], b[0] - a[0])
    }

    /// Heading change between consecutive tiles, wrapped to `(-pi, pi]`.
    pub fn heading_deltas(&self) -> Vec<f32> {
        (1..self.tiles())
            .map(|i| {
                let mut d = self.tile_heading(i) - self.tile_heading(i - 1);
                while d > core::f32::consts::PI {
                    d -= 2.0 * core::f32::consts::PI;
                }
                while d <= -core::f32::consts::PI {
                    d += 2.0 * core::f32::consts::PI;
                }
                d
            })
            .collect()
    }

    /// Distance from `(x, y)` to tile `i`'s segment.
    pub fn segment_distance(&self, i: usize, x: f32, y: f32) -> f32 {
        let [ax, ay] = self.points[i];
        let [bx, by] = self.points[i + 1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + t * dx, ay + t * dy);
        libm::hypotf(x - px, y - py)
    }

    /// Closest tile and the distance to it. Ties go to the lower index.
    pub fn nearest(&self, x: f32, y: f32) -> (usize, f32) {
        let mut best = (0, f32::INFINITY);
        for i in 0..self.tiles() {
            let d = self.segment_distance(i, x, y);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Tiles whose segment comes within `radius` of `(x, y)`.
    pub(crate) fn tiles_near(&self, x: f32, y: f32, radius: f32) -> Vec<usize> {
        (0..self.tiles())
            .filter(|&i| self.segment_distance(i, x, y) <= radius)
            .collect()
    }
}
