//! Synthetic radar sequences: Gaussian rain cells carried by a uniform wind
//! (the predictable part) plus short-lived blobs that appear, vanish or
//! deform between frames (the unpredictable part).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RadarSequence, RainField, DEFAULT_INTERVAL_SECONDS, RAIN_CAP};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_cells: usize,
    /// Peak rain rate range of advected cells, mm/h.
    pub cell_intensity_range: (f64, f64),
    /// Gaussian width range of advected cells, pixels.
    pub cell_sigma_range: (f64, f64),
    /// `(dx, dy)` in pixels per frame.
    pub advection_velocity: (f64, f64),
    /// Per-frame probability of each noise event (spawn, removal, deformation).
    pub noise_rate: f64,
    pub noise_intensity_range: (f64, f64),
    pub noise_sigma_range: (f64, f64),
    pub interval_seconds: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_cells: 4,
            cell_intensity_range: (1.0, 19.0),
            cell_sigma_range: (3.0, 8.0),
            advection_velocity: (1.0, 0.5),
            noise_rate: 0.2,
            noise_intensity_range: (2.0, 12.0),
            noise_sigma_range: (1.5, 3.0),
            interval_seconds: DEFAULT_INTERVAL_SECONDS,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        for (name, (lo, hi)) in [
            ("cell_intensity_range", self.cell_intensity_range),
            ("noise_intensity_range", self.noise_intensity_range),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= RAIN_CAP) {
                return fail(format!("{name} ({lo}, {hi}) must satisfy 0 <= lo <= hi <= {RAIN_CAP}"));
            }
        }
        for (name, (lo, hi)) in [
            ("cell_sigma_range", self.cell_sigma_range),
            ("noise_sigma_range", self.noise_sigma_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail(format!("{name} ({lo}, {hi}) must be positive and ordered"));
            }
        }
        let (vx, vy) = self.advection_velocity;
        if !vx.is_finite() || !vy.is_finite() {
            return fail("advection_velocity must be finite".into());
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Adds `amp * exp(-r^2 / 2 sigma^2)` to a `side x side` grid, truncated at 4 sigma.
fn splat(grid: &mut [f64], side: usize, cx: f64, cy: f64, sigma: f64, amp: f64) {
    let reach = 4.0 * sigma;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let y1 = ((cy + reach).ceil().max(0.0) as usize).min(side);
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil().max(0.0) as usize).min(side);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in y0..y1 {
        let dy = y as f64 - cy;
        for x in x0..x1 {
            let dx = x as f64 - cx;
            grid[y * side + x] += amp * (-(dx * dx + dy * dy) * inv).exp();
        }
    }
}

/// Semi-Lagrangian step: `out(x, y) = in(x - dx, y - dy)` with bilinear
/// interpolation and zero inflow from outside the grid.
pub fn advect_bilinear(grid: &[f64], height: usize, width: usize, (dx, dy): (f64, f64)) -> Vec<f64> {
    let sample = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
            0.0
        } else {
            grid[r as usize * width + c as usize]
        }
    };
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let sy = y as f64 - dy;
        let ry = sy.floor();
        let fy = sy - ry;
        for x in 0..width {
            let sx = x as f64 - dx;
            let rx = sx.floor();
            let fx = sx - rx;
            let (r, c) = (ry as isize, rx as isize);
            let top = (1.0 - fx) * sample(r, c) + fx * sample(r, c + 1);
            let bottom = (1.0 - fx) * sample(r + 1, c) + fx * sample(r + 1, c + 1);
            out[y * width + x] = (1.0 - fy) * top + fy * bottom;
        }
    }
    out
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

/// Generates a `length`-frame, `size x size` sequence. Pure in its inputs.
pub fn generate_synthetic(cfg: &SyntheticConfig, length: usize, size: usize) -> Result<RadarSequence> {
    cfg.validate()?;
    if size < 32 {
        return Err(Error::Config(format!("synthetic frames need size >= 32, got {size}")));
    }
    if length == 0 {
        return Err(Error::Config("synthetic sequence needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (vx, vy) = cfg.advection_velocity;
    let travel = vx.abs().max(vy.abs()) * (length - 1) as f64;
    let margin = (travel + 4.0 * cfg.cell_sigma_range.1).ceil() as usize + 1;
    let side = size + 2 * margin;

    // Each cell is placed so that it sits inside the view at a random time.
    let mut canvas = vec![0.0; side * side];
    for _ in 0..cfg.num_cells {
        let t = rng.random_range(0.0..length as f64);
        let px = rng.random_range(0.0..size as f64);
        let py = rng.random_range(0.0..size as f64);
        let amp = draw(&mut rng, cfg.cell_intensity_range);
        let sigma = draw(&mut rng, cfg.cell_sigma_range);
        let cx = margin as f64 + px - vx * t;
        let cy = margin as f64 + py - vy * t;
        splat(&mut canvas, side, cx, cy, sigma, amp);
    }
    canvas.iter_mut().for_each(|v| *v = v.min(RAIN_CAP));

    let mut blobs: Vec<Blob> = Vec::new();
    let mut frames = Vec::with_capacity(length);
    for t in 0..length {
        if t > 0 {
            canvas = advect_bilinear(&canvas, side, side, cfg.advection_velocity);
            for b in &mut blobs {
                b.cx += vx;
                b.cy += vy;
            }
            if rng.random::<f64>() < cfg.noise_rate && !blobs.is_empty() {
                let i = rng.random_range(0..blobs.len());
                blobs.remove(i);
            }
            if rng.random::<f64>() < cfg.noise_rate && !blobs.is_empty() {
                let i = rng.random_range(0..blobs.len());
                blobs[i].sigma *= rng.random_range(0.6..1.6);
                blobs[i].amp = (blobs[i].amp * rng.random_range(0.5..1.5)).min(RAIN_CAP);
            }
        }
        if rng.random::<f64>() < cfg.noise_rate {
            let sigma = draw(&mut rng, cfg.noise_sigma_range);
            let inset = 2.0 * sigma;
            blobs.push(Blob {
                cx: rng.random_range(inset..size as f64 - inset),
                cy: rng.random_range(inset..size as f64 - inset),
                sigma,
                amp: draw(&mut rng, cfg.noise_intensity_range),
            });
        }

        let mut view = vec![0.0; size * size];
        for (y, row) in view.chunks_mut(size).enumerate() {
            let src = (y + margin) * side + margin;
            row.copy_from_slice(&canvas[src..src + size]);
        }
        for b in &blobs {
            splat(&mut view, size, b.cx, b.cy, b.sigma, b.amp);
        }
        view.iter_mut().for_each(|v| *v = v.clamp(0.0, RAIN_CAP));
        frames.push(RainField::new(size, size, view)?);
    }
    RadarSequence::new(
        format!("synthetic-{:016x}", cfg.seed),
        cfg.interval_seconds,
        frames,
    )
}
