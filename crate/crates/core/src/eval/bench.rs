use std::collections::BTreeMap;

use rayon::prelude::*;

use super::evaluate::{evaluate_samples, EvalReport};
use super::paper::{PaperRow, TABLE1, TABLE2};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split, TileSample};
use crate::refiner::{train_sets, train_stage1, Checkpoint, EpochMetrics, LabelKind, ModelKind, Stage, TrainConfig, TrainSet};

/// Model, training labels and point raster of one trained network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellSpec {
    pub kind: ModelKind,
    pub labels: LabelKind,
    pub points: Option<String>,
}

impl CellSpec {
    pub fn new(kind: ModelKind, labels: LabelKind, points: Option<&str>) -> Self {
        CellSpec {
            kind,
            labels,
            points: points.map(String::from),
        }
    }

    /// Stable identifier, also used for checkpoint file names.
    pub fn id(&self) -> String {
        format!(
            "{}-{}{}",
            self.kind,
            self.labels,
            self.points.as_ref().map(|p| format!("-{p}")).unwrap_or_default()
        )
    }
}

/// Tags of the four dispersion × noise cells, in table order.
pub const ABLATION_TAGS: [&str; 4] = ["sm-low", "sm-high", "tdc-low", "tdc-high"];
/// Scenario used for the annotation-granularity table's points row.
pub const BENCHMARK_POINTS: &str = "tdc-low";

pub fn benchmark_cells(points: &str) -> Vec<CellSpec> {
    use LabelKind::*;
    use ModelKind::*;
    vec![
        CellSpec::new(Unet, Coarse, None),
        CellSpec::new(Refiner, Coarse, None),
        CellSpec::new(Refiner, Coarse, Some(points)),
        CellSpec::new(Unet, Fine, None),
        CellSpec::new(Refiner, Fine, None),
    ]
}

pub fn ablation_cells() -> Vec<CellSpec> {
    let mut v = vec![CellSpec::new(ModelKind::Refiner, LabelKind::Coarse, None)];
    v.extend(
        ABLATION_TAGS
            .iter()
            .map(|t| CellSpec::new(ModelKind::Refiner, LabelKind::Coarse, Some(t))),
    );
    v
}

#[derive(Debug, Clone)]
pub struct RowResult {
    pub cell: CellSpec,
    pub per_seed: Vec<(u64, EvalReport)>,
    pub median_acc: f64,
    pub median_miou: f64,
    pub paper: PaperRow,
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub title: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<RowResult>,
}

impl ResultTable {
    pub fn row(&self, label: &str) -> Option<&RowResult> {
        self.rows.iter().find(|r| r.paper.label == label)
    }

    pub fn miou_for_seed(&self, row: usize, seed: u64) -> Option<f64> {
        self.rows[row]
            .per_seed
            .iter()
            .find(|(s, _)| *s == seed)
            .map(|(_, r)| r.miou)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Trains each (cell, seed) once and shares stage 1 between cells with the
/// same labels and seed, so the two tables reuse each other's networks.
pub struct Runner {
    pub template: TrainConfig,
    pub jobs: usize,
    train: Vec<TileSample>,
    val: Vec<TileSample>,
    test: Vec<TileSample>,
    checkpoints: BTreeMap<(CellSpec, u64), Checkpoint>,
    reports: BTreeMap<(CellSpec, u64), EvalReport>,
    stage1: BTreeMap<(LabelKind, u64), (Stage, Vec<EpochMetrics>)>,
}

type SeedResults = (Vec<(CellSpec, Checkpoint, EvalReport)>, Vec<(LabelKind, (Stage, Vec<EpochMetrics>))>);

impl Runner {
    /// Load every tile with all point rasters in `tags`.
    pub fn new(manifest: &Manifest, tags: &[String], template: TrainConfig, jobs: usize) -> Result<Self> {
        template.validate()?;
        let train = manifest.load_split(Split::Train, tags)?;
        let test = manifest.load_split(Split::Test, tags)?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::Manifest("benchmark needs train and test tiles".into()));
        }
        let val = test.iter().take(template.val_tiles).cloned().collect();
        Ok(Runner {
            template,
            jobs: jobs.max(1),
            train,
            val,
            test,
            checkpoints: BTreeMap::new(),
            reports: BTreeMap::new(),
            stage1: BTreeMap::new(),
        })
    }

    pub fn test_samples(&self) -> &[TileSample] {
        &self.test
    }

    pub fn checkpoint(&self, cell: &CellSpec, seed: u64) -> Option<&Checkpoint> {
        self.checkpoints.get(&(cell.clone(), seed))
    }

    pub fn report(&self, cell: &CellSpec, seed: u64) -> Option<&EvalReport> {
        self.reports.get(&(cell.clone(), seed))
    }

    fn config(&self, cell: &CellSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            label_kind: cell.labels,
            points: cell.points.clone(),
            seed,
            ..self.template.clone()
        }
    }

    fn run_seed(&self, cells: &[CellSpec], seed: u64) -> Result<SeedResults> {
        let mut stage1: BTreeMap<LabelKind, (Stage, Vec<EpochMetrics>)> = self
            .stage1
            .iter()
            .filter(|((_, s), _)| *s == seed)
            .map(|((l, _), v)| (*l, v.clone()))
            .collect();
        let mut out = Vec::new();
        for cell in cells {
            let cfg = self.config(cell, seed);
            let tr = TrainSet::from_samples(&self.train, cell.labels, cell.points.as_deref())?;
            let val = TrainSet::from_samples(&self.val, cell.labels, cell.points.as_deref())?;
            if !stage1.contains_key(&cell.labels) {
                stage1.insert(cell.labels, train_stage1(&tr, &val, &cfg)?);
            }
            let s1 = stage1[&cell.labels].clone();
            let ckpt = train_sets(&tr, &val, cell.kind, &cfg, Some(s1))?;
            let report = evaluate_samples(&ckpt, &self.test, cell.points.as_deref(), 0.5)?;
            out.push((cell.clone(), ckpt, report));
        }
        Ok((out, stage1.into_iter().collect()))
    }

    /// Train and evaluate whatever `(cell, seed)` pairs are not cached yet.
    pub fn ensure(&mut self, cells: &[CellSpec], seeds: &[u64]) -> Result<()> {
        let todo: Vec<(u64, Vec<CellSpec>)> = seeds
            .iter()
            .map(|&s| {
                let missing = cells
                    .iter()
                    .filter(|c| !self.reports.contains_key(&((*c).clone(), s)))
                    .cloned()
                    .collect();
                (s, missing)
            })
            .filter(|(_, m): &(u64, Vec<CellSpec>)| !m.is_empty())
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let this = &*self;
        let results: Vec<(u64, SeedResults)> = pool.install(|| {
            todo.par_iter()
                .map(|(s, cells)| Ok((*s, this.run_seed(cells, *s)?)))
                .collect::<Result<_>>()
        })?;
        for (seed, (items, stage1)) in results {
            for (labels, s1) in stage1 {
                self.stage1.insert((labels, seed), s1);
            }
            for (cell, ckpt, report) in items {
                self.checkpoints.insert((cell.clone(), seed), ckpt);
                self.reports.insert((cell, seed), report);
            }
        }
        Ok(())
    }

    fn table(&mut self, title: &str, cells: Vec<CellSpec>, paper: &[PaperRow; 5], seeds: &[u64]) -> Result<ResultTable> {
        if seeds.is_empty() {
            return Err(Error::InvalidParam("at least one seed is required".into()));
        }
        self.ensure(&cells, seeds)?;
        let rows = cells
            .into_iter()
            .zip(paper.iter())
            .map(|(cell, &p)| {
                let per_seed: Vec<(u64, EvalReport)> = seeds
                    .iter()
                    .map(|&s| (s, self.reports[&(cell.clone(), s)].clone()))
                    .collect();
                let accs: Vec<f64> = per_seed.iter().map(|(_, r)| r.accuracy).collect();
                let mious: Vec<f64> = per_seed.iter().map(|(_, r)| r.miou).collect();
                RowResult {
                    cell,
                    median_acc: median(&accs),
                    median_miou: median(&mious),
                    per_seed,
                    paper: p,
                }
            })
            .collect();
        Ok(ResultTable {
            title: title.to_string(),
            seeds: seeds.to_vec(),
            rows,
        })
    }

    pub fn benchmark(&mut self, seeds: &[u64], points: &str) -> Result<ResultTable> {
        self.table(BENCHMARK_TITLE, benchmark_cells(points), &TABLE1, seeds)
    }

    pub fn ablation(&mut self, seeds: &[u64]) -> Result<ResultTable> {
        self.table(ABLATION_TITLE, ablation_cells(), &TABLE2, seeds)
    }
}

pub const BENCHMARK_TITLE: &str = "Annotation granularity and points";
pub const ABLATION_TITLE: &str = "Point dispersion and GPS noise";

fn require_tags(manifest: &Manifest, tags: &[String]) -> Result<()> {
    let have = manifest.scenario_tags();
    for t in tags {
        if !have.contains(t) {
            return Err(Error::Manifest(format!("manifest has no point rasters for scenario {t:?}")));
        }
    }
    Ok(())
}

/// The five-row granularity table for `seeds`.
pub fn run_benchmark(manifest: &Manifest, seeds: &[u64], template: &TrainConfig, points: &str, jobs: usize) -> Result<ResultTable> {
    let tags = vec![points.to_string()];
    require_tags(manifest, &tags)?;
    Runner::new(manifest, &tags, template.clone(), jobs)?.benchmark(seeds, points)
}

/// The five-row dispersion × noise table for `seeds`.
pub fn run_ablation(manifest: &Manifest, seeds: &[u64], template: &TrainConfig, jobs: usize) -> Result<ResultTable> {
    let tags: Vec<String> = ABLATION_TAGS.iter().map(|s| s.to_string()).collect();
    require_tags(manifest, &tags)?;
    Runner::new(manifest, &tags, template.clone(), jobs)?.ablation(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn table_layouts() {
        assert_eq!(benchmark_cells("tdc-low").len(), 5);
        let ab = ablation_cells();
        assert_eq!(ab.len(), 5);
        assert_eq!(ab[0], benchmark_cells("tdc-low")[1]);
        assert_eq!(ab[3], benchmark_cells("tdc-low")[2]);
        assert_eq!(ab[3].id(), "refiner-coarse-tdc-low");
    }
}
