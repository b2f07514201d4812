//! Synthetic crowdsourced points: perimeter walks (trained collectors),
//! clustered reports (social media), GPS jitter and rasterization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::contour::Contour;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GeoPoint, PointSet, Scenario};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseLevel {
    None,
    Low,
    High,
}

impl NoiseLevel {
    pub fn default_radius_m(&self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Low => 50.0,
            NoiseLevel::High => 100.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseLevel::None => "none",
            NoiseLevel::Low => "low",
            NoiseLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseLevel::None),
            "low" => Ok(NoiseLevel::Low),
            "high" => Ok(NoiseLevel::High),
            other => Err(Error::InvalidParam(format!("unknown noise level {other:?}"))),
        }
    }
}

/// Shape of the radial GPS error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseShape {
    /// Radius uniform in `[0, r_max]`.
    Uniform,
    /// Radius `|N(0, r_max/2)|`, truncated at `r_max`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Manifest tag, e.g. `tdc-low`.
    pub name: String,
    pub scenario: Scenario,
    pub n_points: usize,
    pub noise_level: NoiseLevel,
    pub noise_radius_m: f64,
    pub noise_shape: NoiseShape,
    pub clusters: usize,
    pub cluster_sigma_px: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, noise_level: NoiseLevel) -> Self {
        ScenarioConfig {
            name: format!("{}-{}", scenario.as_str(), noise_level.as_str()),
            scenario,
            n_points: 30,
            noise_level,
            noise_radius_m: noise_level.default_radius_m(),
            noise_shape: NoiseShape::Uniform,
            clusters: 3,
            cluster_sigma_px: 5.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.n_points = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(20..=50).contains(&self.n_points) {
            return Err(Error::InvalidParam(format!(
                "n_points {} outside [20, 50]",
                self.n_points
            )));
        }
        if !(self.noise_radius_m >= 0.0 && self.noise_radius_m.is_finite()) {
            return Err(Error::InvalidParam("noise radius must be >= 0".into()));
        }
        if self.scenario == Scenario::Sm && (self.clusters == 0 || !(self.cluster_sigma_px > 0.0)) {
            return Err(Error::InvalidParam(
                "sm scenario needs clusters >= 1 and cluster_sigma_px > 0".into(),
            ));
        }
        Ok(())
    }

    /// The four dispersion × noise cells of the point ablation.
    pub fn ablation_grid() -> Vec<ScenarioConfig> {
        vec![
            ScenarioConfig::new(Scenario::Sm, NoiseLevel::Low),
            ScenarioConfig::new(Scenario::Sm, NoiseLevel::High),
            ScenarioConfig::new(Scenario::Tdc, NoiseLevel::Low),
            ScenarioConfig::new(Scenario::Tdc, NoiseLevel::High),
        ]
    }
}

/// Largest-remainder split of `n` across `weights`; ties go to the larger weight.
pub fn allocate_points(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(weights[b].total_cmp(&weights[a]))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}

fn check_contours(contours: &[Contour]) -> Result<f64> {
    if contours.is_empty() {
        return Err(Error::InvalidParam("empty contour list".into()));
    }
    let total: f64 = contours.iter().map(|c| c.edge_length()).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParam("contours have zero walkable length".into()));
    }
    Ok(total)
}

fn longest_first(contours: &[Contour]) -> Vec<&Contour> {
    let mut sorted: Vec<&Contour> = contours.iter().collect();
    sorted.sort_by(|a, b| b.edge_length().total_cmp(&a.edge_length()));
    sorted
}

/// Evenly spaced points along each loop, loops weighted by length.
pub fn sample_points_tdc(contours: &[Contour], cfg: &ScenarioConfig) -> Result<PointSet> {
    if cfg.scenario != Scenario::Tdc {
        return Err(Error::InvalidParam("tdc sampler given a non-tdc config".into()));
    }
    check_contours(contours)?;
    let loops = longest_first(contours);
    let weights: Vec<f64> = loops.iter().map(|c| c.edge_length()).collect();
    let alloc = allocate_points(&weights, cfg.n_points);
    let mut rng = rng::stream(cfg.seed, "tdc");
    let mut points = Vec::with_capacity(cfg.n_points);
    for (c, &k) in loops.iter().zip(&alloc) {
        if k == 0 {
            continue;
        }
        let step = c.edge_length() / k as f64;
        let offset = rng.random::<f64>() * step;
        points.extend((0..k).map(|i| c.point_at(offset + i as f64 * step)));
    }
    Ok(PointSet {
        points,
        scenario: Scenario::Tdc,
        noise_radius_m: cfg.noise_radius_m,
        seed: cfg.seed,
    })
}

/// Points clustered around a few random anchor vertices, jittered along the
/// contour so they stay on the edge.
pub fn sample_points_sm(contours: &[Contour], cfg: &ScenarioConfig) -> Result<PointSet> {
    if cfg.scenario != Scenario::Sm {
        return Err(Error::InvalidParam("sm sampler given a non-sm config".into()));
    }
    if cfg.clusters == 0 || !(cfg.cluster_sigma_px > 0.0) {
        return Err(Error::InvalidParam("sm needs clusters >= 1 and sigma > 0".into()));
    }
    check_contours(contours)?;
    let loops = longest_first(contours);
    // (loop, vertex) pairs that start a walkable segment
    let candidates: Vec<(usize, usize)> = loops
        .iter()
        .enumerate()
        .flat_map(|(li, c)| {
            c.frame_flags()
                .iter()
                .enumerate()
                .filter(|(_, f)| !**f)
                .map(move |(vi, _)| (li, vi))
        })
        .collect();
    let mut rng = rng::stream(cfg.seed, "sm");
    let anchors: Vec<(usize, f64)> = (0..cfg.clusters)
        .map(|_| {
            let (li, vi) = candidates[rng.random_range(0..candidates.len())];
            (li, loops[li].arc_at_vertex(vi))
        })
        .collect();
    let points = (0..cfg.n_points)
        .map(|i| {
            let (li, s) = anchors[i % anchors.len()];
            let z: f64 = StandardNormal.sample(&mut rng);
            loops[li].point_at(s + cfg.cluster_sigma_px * z)
        })
        .collect();
    Ok(PointSet {
        points,
        scenario: Scenario::Sm,
        noise_radius_m: cfg.noise_radius_m,
        seed: cfg.seed,
    })
}

pub fn sample_points(contours: &[Contour], cfg: &ScenarioConfig) -> Result<PointSet> {
    match cfg.scenario {
        Scenario::Tdc => sample_points_tdc(contours, cfg),
        Scenario::Sm => sample_points_sm(contours, cfg),
    }
}

/// Displace each point by a random angle and a radius up to
/// `noise_radius_m / meters_per_pixel` pixels.
pub fn apply_gps_noise(ps: &PointSet, cfg: &ScenarioConfig, meters_per_pixel: f64) -> Result<PointSet> {
    if !(meters_per_pixel > 0.0) {
        return Err(Error::InvalidParam("meters_per_pixel must be > 0".into()));
    }
    let mut out = ps.clone();
    out.noise_radius_m = cfg.noise_radius_m;
    if cfg.noise_level == NoiseLevel::None || cfg.noise_radius_m == 0.0 {
        return Ok(out);
    }
    let r_max = cfg.noise_radius_m / meters_per_pixel;
    let mut rng = rng::stream(cfg.seed, "gps");
    for p in &mut out.points {
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let radius = match cfg.noise_shape {
            NoiseShape::Uniform => rng.random::<f64>() * r_max,
            NoiseShape::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z.abs() * r_max / 2.0).min(r_max)
            }
        };
        p.x += radius * angle.cos();
        p.y += radius * angle.sin();
    }
    Ok(out)
}

/// Stamp each in-bounds point into a blank mask; returns the mask and the
/// number of points dropped for falling outside the tile.
pub fn rasterize_points(ps: &PointSet, width: usize, height: usize) -> (BinaryMask, usize) {
    rasterize_points_stamped(ps, width, height, 1)
}

/// Like [`rasterize_points`] with a square `stamp`×`stamp` footprint
/// (odd sizes, centered on the point's pixel).
pub fn rasterize_points_stamped(
    ps: &PointSet,
    width: usize,
    height: usize,
    stamp: usize,
) -> (BinaryMask, usize) {
    let mut mask = BinaryMask::zeros(width, height);
    let half = (stamp.max(1) / 2) as i64;
    let mut dropped = 0;
    for p in &ps.points {
        let (cx, cy) = (p.x.floor(), p.y.floor());
        if !(cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64) {
            dropped += 1;
            continue;
        }
        let (cx, cy) = (cx as i64, cy as i64);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && x < width as i64 && y < height as i64 {
                    mask.set(x as usize, y as usize);
                }
            }
        }
    }
    (mask, dropped)
}

/// Mean distance from each point to its nearest neighbour.
pub fn mean_nearest_neighbor(points: &[GeoPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let sum: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.dist(q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / points.len() as f64
}
