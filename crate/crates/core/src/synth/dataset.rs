use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::blur::coarsen_mask;
use super::contour::extract_contours;
use super::points::{apply_gps_noise, rasterize_points_stamped, sample_points, ScenarioConfig};
use super::scene::{gen_scene, SceneParams};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestRecord};
use crate::raster::{write_tile, Raster};
use crate::rng;

pub const MIN_POINTS: usize = 20;
pub const MAX_POINTS: usize = 50;

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n_tiles: usize,
    /// Tiles at the end of the index range held out for testing.
    pub test_tiles: usize,
    /// Template; tile `i` uses `scene.seed + i`.
    pub scene: SceneParams,
    pub scenarios: Vec<ScenarioConfig>,
    pub sigma: f64,
    pub threshold: f64,
    pub stamp: usize,
}

impl DatasetSpec {
    /// The standard desk benchmark: 200 train + 50 test tiles, every
    /// ablation scenario.
    pub fn benchmark(seed: u64) -> Self {
        DatasetSpec {
            n_tiles: 250,
            test_tiles: 50,
            scene: SceneParams {
                seed,
                ..SceneParams::default()
            },
            scenarios: ScenarioConfig::ablation_grid(),
            sigma: 8.0,
            threshold: 0.5,
            stamp: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub tiles: usize,
    pub water_fraction_min: f64,
    pub water_fraction_mean: f64,
    pub water_fraction_max: f64,
    pub points_min: usize,
    pub points_max: usize,
    pub dropped_points: usize,
}

fn tile_id(i: usize, spec: &DatasetSpec) -> String {
    let n_train = spec.n_tiles - spec.test_tiles;
    if i < n_train {
        format!("train-{i:05}")
    } else {
        format!("test-{:05}", i - n_train)
    }
}

struct TileOutput {
    record: ManifestRecord,
    water_fraction: f64,
    dropped: usize,
}

fn gen_tile(i: usize, spec: &DatasetSpec, out_dir: &Path) -> Result<TileOutput> {
    let seed = spec.scene.seed.wrapping_add(i as u64);
    let id = tile_id(i, spec);
    let (mut imagery, fine) = gen_scene(&SceneParams {
        seed,
        ..spec.scene.clone()
    })?;
    imagery.meta.tile_id = id.clone();
    let coarse = coarsen_mask(&fine, spec.sigma, spec.threshold)?;
    let n_points = rng::stream(seed, "n_points").random_range(MIN_POINTS..=MAX_POINTS);
    let contours = extract_contours(&fine)?;

    let rel = |dir: &str| PathBuf::from(dir).join(format!("{id}.s2c"));
    let mut record = ManifestRecord {
        tile_id: id.clone(),
        imagery: rel("imagery"),
        fine: rel("fine"),
        coarse: rel("coarse"),
        points: Vec::with_capacity(spec.scenarios.len()),
        seed,
        n_points,
    };
    let mut dropped = 0;
    let mut rasters: Vec<(PathBuf, Raster)> = Vec::new();
    for sc in &spec.scenarios {
        let cfg = ScenarioConfig {
            n_points,
            seed: rng::derive(seed, &sc.name),
            ..sc.clone()
        };
        cfg.validate()?;
        let clean = sample_points(&contours, &cfg)?;
        let noisy = apply_gps_noise(&clean, &cfg, imagery.meta.meters_per_pixel)?;
        let (mask, d) = rasterize_points_stamped(&noisy, fine.width(), fine.height(), spec.stamp);
        dropped += d;
        let path = PathBuf::from("points").join(&sc.name).join(format!("{id}.s2c"));
        rasters.push((path.clone(), mask.into()));
        record.points.push((sc.name.clone(), path));
    }
    let water_fraction = fine.water_fraction();
    rasters.push((record.imagery.clone(), imagery.into()));
    rasters.push((record.fine.clone(), fine.into()));
    rasters.push((record.coarse.clone(), coarse.into()));
    for (p, r) in &rasters {
        write_tile(r, &out_dir.join(p))?;
    }
    Ok(TileOutput {
        record,
        water_fraction,
        dropped,
    })
}

fn header(spec: &DatasetSpec, summary: &DatasetSummary) -> Vec<String> {
    let s = &spec.scene;
    let px = (s.width * s.height) as f64;
    let chip = 512.0 * 512.0;
    let mut h = vec![
        "floodrefine dataset manifest v1".to_string(),
        format!(
            "tiles={} train={} test={} base_seed={}",
            spec.n_tiles,
            spec.n_tiles - spec.test_tiles,
            spec.test_tiles,
            s.seed
        ),
        format!(
            "scene width={} height={} channels={} water_coverage_target={} blob_count={} pond_count={} \
             spectral_contrast={} noise_sigma={} texture_amplitude={} meters_per_pixel={}",
            s.width,
            s.height,
            s.channels,
            s.water_coverage_target,
            s.blob_count,
            s.pond_count,
            s.spectral_contrast,
            s.noise_sigma,
            s.texture_amplitude,
            s.meters_per_pixel
        ),
        format!("coarsen sigma={} threshold={} stamp={}", spec.sigma, spec.threshold, spec.stamp),
    ];
    for sc in &spec.scenarios {
        h.push(format!(
            "scenario {} kind={} noise={} noise_radius_m={} noise_shape={:?} clusters={} cluster_sigma_px={}",
            sc.name,
            sc.scenario.as_str(),
            sc.noise_level.as_str(),
            sc.noise_radius_m,
            sc.noise_shape,
            sc.clusters,
            sc.cluster_sigma_px
        ));
    }
    h.push(format!(
        "point_density tile={}x{} min={:.6} max={:.6} same_counts_on_512x512={:.6}..{:.6}",
        s.width,
        s.height,
        summary.points_min as f64 / px,
        summary.points_max as f64 / px,
        summary.points_min as f64 / chip,
        summary.points_max as f64 / chip
    ));
    h.push(format!(
        "water_fraction min={:.4} mean={:.4} max={:.4} dropped_points={}",
        summary.water_fraction_min,
        summary.water_fraction_mean,
        summary.water_fraction_max,
        summary.dropped_points
    ));
    h
}

/// Generate imagery, fine and coarse masks and point rasters for every
/// tile, write them under `out_dir` and save `manifest.tsv`.
pub fn gen_dataset(spec: &DatasetSpec, out_dir: &Path, jobs: usize) -> Result<(Manifest, DatasetSummary)> {
    if spec.test_tiles > spec.n_tiles {
        return Err(Error::InvalidParam("test_tiles exceeds n_tiles".into()));
    }
    if spec.n_tiles == 0 {
        return Err(Error::InvalidParam("n_tiles must be >= 1".into()));
    }
    let mut dirs = vec![out_dir.join("imagery"), out_dir.join("fine"), out_dir.join("coarse")];
    dirs.extend(spec.scenarios.iter().map(|s| out_dir.join("points").join(&s.name)));
    for d in &dirs {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let outputs: Vec<TileOutput> = pool.install(|| {
        (0..spec.n_tiles)
            .into_par_iter()
            .map(|i| gen_tile(i, spec, out_dir))
            .collect::<Result<Vec<_>>>()
    })?;

    let fractions: Vec<f64> = outputs.iter().map(|o| o.water_fraction).collect();
    let summary = DatasetSummary {
        tiles: outputs.len(),
        water_fraction_min: fractions.iter().cloned().fold(f64::INFINITY, f64::min),
        water_fraction_mean: fractions.iter().sum::<f64>() / fractions.len() as f64,
        water_fraction_max: fractions.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        points_min: outputs.iter().map(|o| o.record.n_points).min().unwrap_or(0),
        points_max: outputs.iter().map(|o| o.record.n_points).max().unwrap_or(0),
        dropped_points: outputs.iter().map(|o| o.dropped).sum(),
    };
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        header: header(spec, &summary),
        records: outputs.into_iter().map(|o| o.record).collect(),
    };
    manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok((manifest, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::read_tile;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            n_tiles: 3,
            test_tiles: 1,
            ..DatasetSpec::benchmark(42)
        }
    }

    #[test]
    fn three_tiles_structure() {
        let dir = tempfile::tempdir().unwrap();
        let (m, summary) = gen_dataset(&small_spec(), dir.path(), 1).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(summary.tiles, 3);
        let reloaded = Manifest::load(&dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(reloaded.records, m.records);
        for r in &m.records {
            assert_eq!(r.points.len(), 4);
            assert!((MIN_POINTS..=MAX_POINTS).contains(&r.n_points));
            for p in [&r.imagery, &r.fine, &r.coarse] {
                read_tile(&dir.path().join(p)).unwrap();
            }
        }
        assert_eq!(m.records[2].tile_id, "test-00000");
        assert_eq!(m.records[2].seed, 44);
    }
}
