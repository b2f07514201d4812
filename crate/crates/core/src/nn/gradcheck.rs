//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Minimum number of coordinates probed overall.
    pub min_coords: usize,
    /// Denominator floor for the relative error so near-zero gradients are
    /// compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-5,
            min_coords: 200,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `segment[index]` of the worst coordinate.
    pub worst: String,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// A named slice of the flat coordinate vector (one parameter or input).
#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub len: usize,
}

impl Segment {
    pub fn new(name: impl Into<String>, len: usize) -> Self {
        Segment {
            name: name.into(),
            len,
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `f(x)` returns the scalar objective and its analytic gradient. Each
/// segment gets a random share of the probe budget; small problems are
/// checked exhaustively.
pub fn grad_check<F>(x0: &[f64], segments: &[Segment], mut f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let total: usize = segments.iter().map(|s| s.len).sum();
    assert_eq!(total, x0.len(), "segments must cover the coordinate vector");
    let (_, analytic) = f(x0)?;

    let mut rng = rng::stream(cfg.seed, "gradcheck");
    let share = cfg.min_coords.div_ceil(segments.len().max(1)).max(8);
    let mut probes: Vec<(usize, usize, usize)> = Vec::new(); // (segment, local, global)
    let mut off = 0;
    for (si, s) in segments.iter().enumerate() {
        if total <= cfg.min_coords || s.len <= share {
            probes.extend((0..s.len).map(|j| (si, j, off + j)));
        } else {
            let mut idx = sample(&mut rng, s.len, share).into_vec();
            idx.sort_unstable();
            probes.extend(idx.into_iter().map(|j| (si, j, off + j)));
        }
        off += s.len;
    }

    let mut x = x0.to_vec();
    let mut worst = (0.0f64, String::new());
    for &(si, j, g) in &probes {
        let orig = x[g];
        x[g] = orig + cfg.eps;
        let (fp, _) = f(&x)?;
        x[g] = orig - cfg.eps;
        let (fm, _) = f(&x)?;
        x[g] = orig;
        let numeric = (fp - fm) / (2.0 * cfg.eps);
        let e = rel_err(analytic[g], numeric, cfg.floor);
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, format!("{}[{j}]", segments[si].name));
        }
    }
    Ok(GradCheckReport {
        max_rel_err: worst.0,
        worst: worst.1,
        checked: probes.len(),
        tol: cfg.tol,
        passed: worst.0 <= cfg.tol,
    })
}
