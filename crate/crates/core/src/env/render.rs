use alloc::vec;
use alloc::vec::Vec;

use super::{CarState, EnvConfig, Track};

pub const OBS_SIDE: usize = 16;
pub const OBS_DIM: usize = OBS_SIDE * OBS_SIDE;
/// Bottom row holds the speed bar instead of track pixels.
pub const SPEED_ROW: usize = OBS_SIDE - 1;
/// Pixel right-behind the car position, which sits on the corner shared by
/// pixels (7, 7), (7, 8), (8, 7) and (8, 8).
pub const CENTER_PIXEL: usize = 8 * OBS_SIDE + 8;

/// World units covered by one pixel.
const PIXEL_SIZE: f32 = 0.3;

/// 16x16 grayscale raster, row-major, values in `[0, 1]`. Row 0 is furthest
/// ahead of the car.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(Vec<f32>);

impl Observation {
    pub fn new(pixels: Vec<f32>) -> Option<Self> {
        (pixels.len() == OBS_DIM).then_some(Self(pixels))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn pixel(&self, row: usize, col: usize) -> f32 {
        self.0[row * OBS_SIDE + col]
    }
}

/// Local offset of a pixel center: `(forward, right)` in world units.
pub(crate) fn pixel_offset(row: usize, col: usize) -> (f32, f32) {
    let half = OBS_SIDE as f32 / 2.0 - 0.5;
    (
        (half - row as f32) * PIXEL_SIZE,
        (col as f32 - half) * PIXEL_SIZE,
    )
}

pub(crate) fn render(track: &Track, config: &EnvConfig, state: &CarState) -> Observation {
    let mut pixels = vec![0.0f32; OBS_DIM];
    let (sin, cos) = (libm::sinf(state.heading), libm::cosf(state.heading));
    let view_radius = PIXEL_SIZE * OBS_SIDE as f32 * core::f32::consts::FRAC_1_SQRT_2
        + config.half_width
        + PIXEL_SIZE;
    let candidates = track.tiles_near(state.x, state.y, view_radius);

    if !candidates.is_empty() {
        for row in 0..SPEED_ROW {
            for col in 0..OBS_SIDE {
                let (fwd, right) = pixel_offset(row, col);
                let wx = state.x + fwd * cos + right * sin;
                let wy = state.y + fwd * sin - right * cos;
                let d = candidates
                    .iter()
                    .map(|&i| track.segment_distance(i, wx, wy))
                    .fold(f32::INFINITY, f32::min);
                // one-pixel soft edge centred on the track border
                let v = (config.half_width - d) / PIXEL_SIZE + 0.5;
                pixels[row * OBS_SIDE + col] = v.clamp(0.0, 1.0);
            }
        }
    }

    let filled = ((OBS_SIDE as f32 * state.speed / config.v_max) as usize).min(OBS_SIDE);
    for px in pixels[SPEED_ROW * OBS_SIDE..SPEED_ROW * OBS_SIDE + filled].iter_mut() {
        *px = 1.0;
    }
    Observation(pixels)
}
