//! Dataset manifest: one tab-separated record per tile.
//!
//! ```text
//! tile_id<TAB>imagery<TAB>fine<TAB>coarse<TAB>tag:points[,tag:points…]<TAB>seed<TAB>n_points
//! ```
//!
//! Paths are relative to the manifest's directory. Lines starting with `#`
//! carry generation parameters. Tile ids start with `train-` or `test-`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{read_tile, BinaryMask, MultispectralTile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn prefix(&self) -> &'static str {
        match self {
            Split::Train => "train-",
            Split::Test => "test-",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParam(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub tile_id: String,
    pub imagery: PathBuf,
    pub fine: PathBuf,
    pub coarse: PathBuf,
    pub points: Vec<(String, PathBuf)>,
    pub seed: u64,
    pub n_points: usize,
}

impl ManifestRecord {
    pub fn split(&self) -> Option<Split> {
        [Split::Train, Split::Test]
            .into_iter()
            .find(|s| self.tile_id.starts_with(s.prefix()))
    }

    pub fn points_path(&self, tag: &str) -> Option<&Path> {
        self.points
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, p)| p.as_path())
    }

    fn to_line(&self) -> String {
        let points = self
            .points
            .iter()
            .map(|(t, p)| format!("{t}:{}", p.display()))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.tile_id,
            self.imagery.display(),
            self.fine.display(),
            self.coarse.display(),
            points,
            self.seed,
            self.n_points
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| Error::Manifest(format!("line {lineno}: {what}"));
        if cols.len() != 7 {
            return Err(bad(&format!("expected 7 columns, found {}", cols.len())));
        }
        let points = if cols[4].is_empty() {
            Vec::new()
        } else {
            cols[4]
                .split(',')
                .map(|entry| {
                    entry
                        .split_once(':')
                        .map(|(t, p)| (t.to_string(), PathBuf::from(p)))
                        .ok_or_else(|| bad("point entry must be tag:path"))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(ManifestRecord {
            tile_id: cols[0].to_string(),
            imagery: PathBuf::from(cols[1]),
            fine: PathBuf::from(cols[2]),
            coarse: PathBuf::from(cols[3]),
            points,
            seed: cols[5].parse().map_err(|_| bad("seed"))?,
            n_points: cols[6].parse().map_err(|_| bad("n_points"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory the relative paths resolve against.
    pub root: PathBuf,
    /// Comment lines, without the leading `# `.
    pub header: Vec<String>,
    pub records: Vec<ManifestRecord>,
}

/// A tile's rasters loaded into memory.
#[derive(Debug, Clone)]
pub struct TileSample {
    pub tile_id: String,
    pub imagery: MultispectralTile,
    pub fine: BinaryMask,
    pub coarse: BinaryMask,
    pub points: Vec<(String, BinaryMask)>,
}

impl TileSample {
    pub fn points(&self, tag: &str) -> Option<&BinaryMask> {
        self.points.iter().find(|(t, _)| t == tag).map(|(_, m)| m)
    }
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            let _ = writeln!(out, "# {h}");
        }
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut header = Vec::new();
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix('#') {
                header.push(h.trim_start().to_string());
            } else if !line.trim().is_empty() {
                records.push(ManifestRecord::parse(line, i + 1)?);
            }
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            header,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &root)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split() == Some(split))
    }

    /// Point tags present on every record.
    pub fn scenario_tags(&self) -> Vec<String> {
        let Some(first) = self.records.first() else {
            return Vec::new();
        };
        first
            .points
            .iter()
            .map(|(t, _)| t.clone())
            .filter(|t| self.records.iter().all(|r| r.points_path(t).is_some()))
            .collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Load one record; `tags` limits which point rasters are read.
    pub fn load_sample(&self, r: &ManifestRecord, tags: &[String]) -> Result<TileSample> {
        let mut imagery = read_tile(&self.resolve(&r.imagery))?.into_multispectral()?;
        imagery.meta.tile_id = r.tile_id.clone();
        imagery.meta.seed = Some(r.seed);
        let fine = read_tile(&self.resolve(&r.fine))?.into_binary()?;
        let coarse = read_tile(&self.resolve(&r.coarse))?.into_binary()?;
        let mut points = Vec::with_capacity(tags.len());
        for tag in tags {
            let p = r.points_path(tag).ok_or_else(|| {
                Error::Manifest(format!("tile {} has no point raster for {tag:?}", r.tile_id))
            })?;
            points.push((tag.clone(), read_tile(&self.resolve(p))?.into_binary()?));
        }
        Ok(TileSample {
            tile_id: r.tile_id.clone(),
            imagery,
            fine,
            coarse,
            points,
        })
    }

    pub fn load_split(&self, split: Split, tags: &[String]) -> Result<Vec<TileSample>> {
        self.records_in(split).map(|r| self.load_sample(r, tags)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_roundtrip() {
        let m = Manifest {
            root: PathBuf::from("/data"),
            header: vec!["tiles=1".into()],
            records: vec![ManifestRecord {
                tile_id: "test-0000".into(),
                imagery: "imagery/test-0000.s2c".into(),
                fine: "fine/test-0000.s2c".into(),
                coarse: "coarse/test-0000.s2c".into(),
                points: vec![
                    ("tdc-low".into(), "points/tdc-low/test-0000.s2c".into()),
                    ("sm-high".into(), "points/sm-high/test-0000.s2c".into()),
                ],
                seed: 42,
                n_points: 31,
            }],
        };
        let text = m.render();
        assert!(text.starts_with("# tiles=1\ntest-0000\timagery/"));
        assert_eq!(Manifest::parse(&text, Path::new("/data")).unwrap(), m);
        assert_eq!(m.records[0].split(), Some(Split::Test));
        assert_eq!(m.scenario_tags(), vec!["tdc-low", "sm-high"]);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(Manifest::parse("a\tb\tc\n", Path::new(".")).is_err());
        assert!(Manifest::parse("a\tb\tc\td\tbad\t1\t2\n", Path::new(".")).is_err());
        assert!(Manifest::parse("a\tb\tc\td\t\tx\t2\n", Path::new(".")).is_err());
    }
}
