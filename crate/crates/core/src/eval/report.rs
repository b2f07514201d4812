use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::bench::{median, CellSpec, ResultTable, RowResult};
use super::evaluate::EvalReport;
use super::metrics::Confusion;
use super::paper::{TABLE1, TABLE2};
use crate::error::{Error, Result};
use crate::manifest::TileSample;
use crate::raster::{export_image, ProbabilityMask};
use crate::refiner::{infer, Checkpoint, LabelKind, ModelKind};

pub const BANNER: &str = "NOTE: desk-scale synthetic data vs published results; different data — directional comparison only";
pub const AGGREGATION: &str = "metrics: global (micro) confusion over all test tiles, truth = fine masks, threshold p >= 0.5";

fn pad(s: &str, w: usize) -> String {
    format!("{s:<w$}")
}

/// Aligned text table: medians, published values, then per-seed mIoU.
pub fn render_table(t: &ResultTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== {} ==", t.title);
    let _ = writeln!(out, "{BANNER}");
    let _ = writeln!(out, "{AGGREGATION}");
    let seeds: Vec<String> = t.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "seeds: {}", seeds.join(","));
    let lw = t.rows.iter().map(|r| r.paper.label.len()).max().unwrap_or(4).max(4);
    let mut head = format!("{}  {:>7} {:>7}  |  {:>9} {:>10}  |", pad("Row", lw), "Acc", "mIoU", "Paper Acc", "Paper mIoU");
    for s in &t.seeds {
        let _ = write!(head, " {:>8}", format!("s{s}"));
    }
    let _ = writeln!(out, "{head}");
    let _ = writeln!(out, "{}", "-".repeat(head.len()));
    for r in &t.rows {
        let mut line = format!(
            "{}  {:>7.2} {:>7.2}  |  {:>9.1} {:>10.1}  |",
            pad(r.paper.label, lw),
            r.median_acc,
            r.median_miou,
            r.paper.acc,
            r.paper.miou
        );
        for (_, rep) in &r.per_seed {
            let _ = write!(line, " {:>8.2}", rep.miou);
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "(median over seeds; per-seed columns are mIoU)");
    out
}

/// Tab-separated form of [`render_table`], one row per table row.
pub fn render_tsv(t: &ResultTable) -> String {
    let mut out = String::from("row\tcell_id\tacc\tmiou\tpaper_acc\tpaper_miou");
    for s in &t.seeds {
        let _ = write!(out, "\tmiou_s{s}");
    }
    out.push('\n');
    for r in &t.rows {
        let _ = write!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{}",
            r.paper.label,
            r.cell.id(),
            r.median_acc,
            r.median_miou,
            r.paper.acc,
            r.paper.miou
        );
        for (_, rep) in &r.per_seed {
            let _ = write!(out, "\t{:.4}", rep.miou);
        }
        out.push('\n');
    }
    out
}

/// Published values alone, in the same layout.
pub fn render_paper_reference() -> String {
    let mut out = String::new();
    for (title, rows) in [("Published: annotation granularity", &TABLE1), ("Published: dispersion x noise", &TABLE2)] {
        let _ = writeln!(out, "== {title} ==");
        for r in rows.iter() {
            let _ = writeln!(out, "{}  {:>5.1} / {:.1}", pad(r.label, 24), r.acc, r.miou);
        }
    }
    out
}

/// One `key=value` block per (row, seed), then one per row median.
pub fn render_summary(t: &ResultTable) -> String {
    let mut out = String::new();
    for r in &t.rows {
        for (seed, rep) in &r.per_seed {
            let _ = writeln!(out, "[cell]\ntable={}\nrow={}\ncell_id={}\nseed={seed}", t.title, r.paper.label, r.cell.id());
            out.push_str(&rep.render());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "[median]\ntable={}\nrow={}\ncell_id={}\nacc={:.4}\nmiou={:.4}\npaper_acc={}\npaper_miou={}\n",
            t.title, r.paper.label, r.cell.id(), r.median_acc, r.median_miou, r.paper.acc, r.paper.miou
        );
    }
    out
}

fn parse_cell_id(id: &str) -> Result<CellSpec> {
    let bad = || Error::Config(format!("bad cell id {id:?}"));
    let mut it = id.splitn(3, '-');
    let kind = ModelKind::parse(it.next().ok_or_else(bad)?)?;
    let labels = LabelKind::parse(it.next().ok_or_else(bad)?)?;
    Ok(CellSpec::new(kind, labels, it.next()))
}

/// Rebuild tables from [`render_summary`] output (one or more tables).
pub fn parse_summary(text: &str) -> Result<Vec<ResultTable>> {
    let mut tables: Vec<ResultTable> = Vec::new();
    for block in text.split("\n\n").map(str::trim).filter(|b| !b.is_empty()) {
        let mut lines = block.lines();
        if lines.next() != Some("[cell]") {
            continue;
        }
        let kv: Vec<(&str, &str)> = lines.filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| {
            kv.iter()
                .find(|(a, _)| *a == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("summary block lacks {k:?}")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Config(format!("bad {k}"))) };
        let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Config(format!("bad {k}"))) };
        let opt = |k: &str| -> Result<Option<f64>> {
            match get(k)? {
                "excluded" => Ok(None),
                v => v.parse().map(Some).map_err(|_| Error::Config(format!("bad {k}"))),
            }
        };
        let title = get("table")?;
        let label = get("row")?;
        let seed = int("seed")?;
        let report = EvalReport {
            accuracy: num("acc")?,
            miou: num("miou")?,
            iou_water: opt("iou_water")?,
            iou_land: opt("iou_nonwater")?,
            confusion: Confusion {
                tp: int("tp")?,
                fp: int("fp")?,
                tn: int("tn")?,
                fn_: int("fn")?,
            },
            tiles: int("tiles")? as usize,
            cell: get("cell")?.to_string(),
        };
        let paper = TABLE1
            .iter()
            .chain(TABLE2.iter())
            .find(|p| p.label == label)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown row {label:?}")))?;
        let idx = match tables.iter().position(|t| t.title == title) {
            Some(i) => i,
            None => {
                tables.push(ResultTable {
                    title: title.to_string(),
                    seeds: Vec::new(),
                    rows: Vec::new(),
                });
                tables.len() - 1
            }
        };
        let t = &mut tables[idx];
        if !t.seeds.contains(&seed) {
            t.seeds.push(seed);
        }
        let cell = parse_cell_id(get("cell_id")?)?;
        match t.rows.iter_mut().find(|r| r.paper.label == label) {
            Some(r) => r.per_seed.push((seed, report)),
            None => t.rows.push(RowResult {
                cell,
                per_seed: vec![(seed, report)],
                median_acc: 0.0,
                median_miou: 0.0,
                paper,
            }),
        }
    }
    for t in &mut tables {
        for r in &mut t.rows {
            let a: Vec<f64> = r.per_seed.iter().map(|(_, e)| e.accuracy).collect();
            let m: Vec<f64> = r.per_seed.iter().map(|(_, e)| e.miou).collect();
            r.median_acc = median(&a);
            r.median_miou = median(&m);
        }
    }
    Ok(tables)
}

/// Mean of all bands, used as a single-channel preview.
pub fn imagery_composite(s: &TileSample) -> Result<ProbabilityMask> {
    let t = &s.imagery;
    let n = t.width() * t.height();
    let mut acc = vec![0.0; n];
    for c in 0..t.channels() {
        for (a, v) in acc.iter_mut().zip(t.channel(c)) {
            *a += v;
        }
    }
    let k = t.channels() as f64;
    ProbabilityMask::new(t.width(), t.height(), acc.into_iter().map(|v| (v / k).clamp(0.0, 1.0)).collect())
}

pub const PANEL_NAMES: [&str; 5] = ["imagery", "truth", "unet", "refiner", "refiner_points"];

/// Write the five qualitative panels for each sample; returns files written.
pub fn export_panels(
    samples: &[TileSample],
    unet: &Checkpoint,
    refiner: &Checkpoint,
    refiner_points: &Checkpoint,
    points_tag: &str,
    out_dir: &Path,
) -> Result<usize> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut n = 0;
    for s in samples {
        let pts = s
            .points(points_tag)
            .ok_or_else(|| Error::Manifest(format!("tile {} lacks points {points_tag:?}", s.tile_id)))?;
        let (_, u) = infer(unet, &s.imagery, None, 0.5)?;
        let (_, r) = infer(refiner, &s.imagery, None, 0.5)?;
        let (_, rp) = infer(refiner_points, &s.imagery, Some(pts), 0.5)?;
        let path = |name: &str| out_dir.join(format!("{}_{name}.pgm", s.tile_id));
        export_image(&imagery_composite(s)?, &path(PANEL_NAMES[0]))?;
        export_image(&s.fine, &path(PANEL_NAMES[1]))?;
        export_image(&u, &path(PANEL_NAMES[2]))?;
        export_image(&r, &path(PANEL_NAMES[3]))?;
        export_image(&rp, &path(PANEL_NAMES[4]))?;
        n += PANEL_NAMES.len();
    }
    Ok(n)
}
