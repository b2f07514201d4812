//! Procedural flood scenes: a fine water mask plus multispectral imagery
//! whose statistics separate water from land, but not cleanly.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, MultispectralTile, TileMeta, TileSource};
use crate::rng;

/// Per-channel land reflectance, cycled when there are more channels.
const LAND_MEAN: [f64; 4] = [0.42, 0.48, 0.55, 0.62];
/// Water minus land per channel at full contrast (water is dark in the
/// longer-wavelength bands).
const WATER_OFFSET: [f64; 4] = [-0.06, -0.14, -0.26, -0.38];

const MAX_ATTEMPTS: usize = 20;
const DISGUISE_LEVEL: f64 = 0.15;
const DISGUISE_RAMP: f64 = 0.25;
const COVERAGE_SLACK: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub water_coverage_target: f64,
    /// Large water bodies.
    pub blob_count: usize,
    /// Small ponds, mostly below the coarse blur's resolving power.
    pub pond_count: usize,
    pub spectral_contrast: f64,
    pub noise_sigma: f64,
    /// Strength of low-frequency terrain texture; part of it mimics the
    /// water signature (shadows, wet soil) and produces look-alikes.
    pub texture_amplitude: f64,
    pub meters_per_pixel: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 64,
            height: 64,
            channels: 4,
            water_coverage_target: 0.3,
            blob_count: 3,
            pond_count: 4,
            spectral_contrast: 0.6,
            noise_sigma: 0.06,
            texture_amplitude: 1.0,
            meters_per_pixel: 10.0,
            seed: 42,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.width == 0 || self.height == 0 || self.channels == 0 {
            return bad("scene dimensions must be positive");
        }
        if !(self.water_coverage_target > 0.0 && self.water_coverage_target < 1.0) {
            return bad("water_coverage_target must be in (0,1)");
        }
        if self.blob_count == 0 {
            return bad("blob_count must be >= 1");
        }
        if !(self.spectral_contrast > 0.0 && self.spectral_contrast <= 1.0) {
            return bad("spectral_contrast must be in (0,1]");
        }
        if !(self.noise_sigma >= 0.0 && self.texture_amplitude >= 0.0) {
            return bad("noise_sigma and texture_amplitude must be >= 0");
        }
        if !(self.meters_per_pixel > 0.0) {
            return bad("meters_per_pixel must be > 0");
        }
        Ok(())
    }

    pub fn land_mean(c: usize) -> f64 {
        LAND_MEAN[c % LAND_MEAN.len()]
    }

    /// Configured water-minus-land offset of channel `c` at this contrast.
    pub fn water_offset(&self, c: usize) -> f64 {
        self.spectral_contrast * WATER_OFFSET[c % WATER_OFFSET.len()]
    }
}

/// Smooth lattice noise in [-1, 1] with the given cell size in pixels.
fn value_noise(w: usize, h: usize, cell: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let v = |i: usize, j: usize| lattice[j * gw + i];
            let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
            let bot = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

fn water_field(p: &SceneParams, rng: &mut impl Rng) -> Vec<f64> {
    let (w, h) = (p.width, p.height);
    let side = w.min(h) as f64;
    let mut field = vec![0.0; w * h];
    let bump = |cx: f64, cy: f64, r: f64, amp: f64, field: &mut Vec<f64>| {
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                field[y * w + x] += amp * (-d2 / (2.0 * r * r)).exp();
            }
        }
    };
    for _ in 0..p.blob_count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let r = side * (0.10 + 0.14 * rng.random::<f64>());
        bump(cx, cy, r, 1.0, &mut field);
    }
    for _ in 0..p.pond_count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let r = 1.2 + 1.6 * rng.random::<f64>();
        bump(cx, cy, r, 1.6, &mut field);
    }
    let coarse = value_noise(w, h, side / 3.0, rng);
    let fine = value_noise(w, h, 5.0, rng);
    for ((f, a), b) in field.iter_mut().zip(&coarse).zip(&fine) {
        *f += 0.25 * a + 0.12 * b;
    }
    field
}

/// Threshold at the level that floods `frac` of the pixels.
fn threshold_fraction(field: &[f64], frac: f64) -> f64 {
    let mut sorted = field.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (((1.0 - frac) * sorted.len() as f64) as usize).min(sorted.len() - 1);
    sorted[idx]
}

fn fine_mask(p: &SceneParams, rng: &mut impl Rng) -> Result<BinaryMask> {
    for _ in 0..MAX_ATTEMPTS {
        let field = water_field(p, rng);
        let jitter = (rng.random::<f64>() - 0.5) * 0.1;
        let frac = (p.water_coverage_target + jitter).clamp(0.01, 0.99);
        let level = threshold_fraction(&field, frac);
        let data: Vec<u8> = field.iter().map(|&v| u8::from(v >= level)).collect();
        let mask = BinaryMask::new(p.width, p.height, data)?;
        let cov = mask.water_fraction();
        let n = mask.data().len();
        if (cov - p.water_coverage_target).abs() <= COVERAGE_SLACK
            && mask.water_count() > 0
            && mask.water_count() < n
        {
            return Ok(mask);
        }
    }
    Err(Error::CoverageUnreachable {
        target: p.water_coverage_target,
        attempts: MAX_ATTEMPTS,
    })
}

/// One synthetic scene: imagery and its fine water mask.
pub fn gen_scene(p: &SceneParams) -> Result<(MultispectralTile, BinaryMask)> {
    p.validate()?;
    let mut rng = rng::stream(p.seed, "scene");
    let mask = fine_mask(p, &mut rng)?;
    let (w, h) = (p.width, p.height);
    let side = w.min(h) as f64;

    // Look-alike land takes on the water signature and hidden water (e.g.
    // flooded vegetation) the land signature, both in smooth patches.
    let lookalike = value_noise(w, h, side / 5.0, &mut rng);
    let hidden = value_noise(w, h, side / 5.0, &mut rng);
    let ramp = |v: f64| ((v - DISGUISE_LEVEL) / DISGUISE_RAMP).clamp(0.0, 1.0);
    let noise = Normal::new(0.0, p.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut data = Vec::with_capacity(w * h * p.channels);
    for c in 0..p.channels {
        let own = value_noise(w, h, side / 4.0, &mut rng);
        let offset = p.water_offset(c);
        for i in 0..w * h {
            let water = mask.data()[i] == 1;
            let mix = if water {
                1.0 - p.texture_amplitude * ramp(hidden[i])
            } else {
                p.texture_amplitude * ramp(lookalike[i])
            };
            let base = SceneParams::land_mean(c) + mix * offset + p.texture_amplitude * 0.03 * own[i];
            let eps = if p.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            data.push((base + eps).clamp(0.0, 1.0));
        }
    }
    let meta = TileMeta {
        tile_id: String::new(),
        meters_per_pixel: p.meters_per_pixel,
        seed: Some(p.seed),
        source: TileSource::Synthetic,
    };
    Ok((MultispectralTile::new(w, h, p.channels, data, meta)?, mask))
}
