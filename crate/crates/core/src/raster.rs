//! Raster and point types, the S2C container format and PGM export.
//!
//! S2C layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "S2C1"
//! 4       1     kind (0 = multispectral f64, 1 = binary mask u8, 2 = probability f64)
//! 5       4     channels u32
//! 9       4     width u32
//! 13      4     height u32
//! 17      8     meters_per_pixel f64
//! 25      7     reserved, zero
//! 32      ..    payload, channel-major then row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"S2C1";
pub const HEADER_LEN: usize = 32;
/// Sentinel-2 ground sampling distance.
pub const DEFAULT_METERS_PER_PIXEL: f64 = 10.0;
const MAX_SIDE: usize = i32::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileSource {
    Synthetic,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileMeta {
    pub tile_id: String,
    pub meters_per_pixel: f64,
    pub seed: Option<u64>,
    pub source: TileSource,
}

impl Default for TileMeta {
    fn default() -> Self {
        TileMeta {
            tile_id: String::new(),
            meters_per_pixel: DEFAULT_METERS_PER_PIXEL,
            seed: None,
            source: TileSource::Synthetic,
        }
    }
}

/// H×W×C reflectance raster normalized to [0, 1].
#[derive(Debug, Clone)]
pub struct MultispectralTile {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    pub meta: TileMeta,
}

impl MultispectralTile {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        meta: TileMeta,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Invariant("tile needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Invariant(format!(
                "tile data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Invariant(format!("reflectance {v} outside [0, 1]")));
        }
        if !(meta.meters_per_pixel > 0.0 && meta.meters_per_pixel.is_finite()) {
            return Err(Error::Invariant("meters_per_pixel must be positive".into()));
        }
        Ok(MultispectralTile {
            width,
            height,
            channels,
            data,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Plane of one channel, row-major.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Raster content and ground sampling are compared; the identity fields of
/// [`TileMeta`] are not stored in the container and do not take part.
impl PartialEq for MultispectralTile {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self.meta.meters_per_pixel.to_bits() == other.meta.meters_per_pixel.to_bits()
            && bits_eq(&self.data, &other.data)
    }
}

/// Per-pixel water labels, 1 = water.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Invariant(format!(
                "mask data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| **v > 1) {
            return Err(Error::Invariant(format!("mask value {v} not in {{0,1}}")));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        BinaryMask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub(crate) fn set(&mut self, x: usize, y: usize) {
        self.data[y * self.width + x] = 1;
    }

    pub fn water_count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn water_fraction(&self) -> f64 {
        self.water_count() as f64 / self.data.len().max(1) as f64
    }
}

/// Per-pixel water probability in [0, 1].
#[derive(Debug, Clone)]
pub struct ProbabilityMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ProbabilityMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Invariant(format!(
                "probability data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Invariant(format!("probability {v} outside [0, 1]")));
        }
        Ok(ProbabilityMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Water wherever `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| u8::from(p >= threshold)).collect(),
        }
    }
}

impl PartialEq for ProbabilityMask {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && bits_eq(&self.data, &other.data)
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Fractional pixel position: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    pub fn dist(&self, other: &GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Trained data collector: regular spacing along the perimeter.
    Tdc,
    /// Social media: points clustered around a few anchors.
    Sm,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Tdc => "tdc",
            Scenario::Sm => "sm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tdc" => Ok(Scenario::Tdc),
            "sm" => Ok(Scenario::Sm),
            other => Err(Error::InvalidParam(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Synthetic crowdsourced reports with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<GeoPoint>,
    pub scenario: Scenario,
    pub noise_radius_m: f64,
    pub seed: u64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Any raster the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Multispectral(MultispectralTile),
    Binary(BinaryMask),
    Probability(ProbabilityMask),
}

impl Raster {
    pub fn kind_byte(&self) -> u8 {
        match self {
            Raster::Multispectral(_) => 0,
            Raster::Binary(_) => 1,
            Raster::Probability(_) => 2,
        }
    }

    pub fn into_multispectral(self) -> Result<MultispectralTile> {
        match self {
            Raster::Multispectral(t) => Ok(t),
            _ => Err(Error::Invariant("expected a multispectral tile".into())),
        }
    }

    pub fn into_binary(self) -> Result<BinaryMask> {
        match self {
            Raster::Binary(m) => Ok(m),
            _ => Err(Error::Invariant("expected a binary mask".into())),
        }
    }

    pub fn into_probability(self) -> Result<ProbabilityMask> {
        match self {
            Raster::Probability(m) => Ok(m),
            _ => Err(Error::Invariant("expected a probability mask".into())),
        }
    }
}

impl From<MultispectralTile> for Raster {
    fn from(t: MultispectralTile) -> Self {
        Raster::Multispectral(t)
    }
}

impl From<BinaryMask> for Raster {
    fn from(m: BinaryMask) -> Self {
        Raster::Binary(m)
    }
}

impl From<ProbabilityMask> for Raster {
    fn from(m: ProbabilityMask) -> Self {
        Raster::Probability(m)
    }
}

/// Serialize a raster into S2C bytes.
pub fn encode(raster: &Raster) -> Result<Vec<u8>> {
    let (channels, width, height, mpp) = match raster {
        Raster::Multispectral(t) => (t.channels, t.width, t.height, t.meta.meters_per_pixel),
        Raster::Binary(m) => (1, m.width, m.height, DEFAULT_METERS_PER_PIXEL),
        Raster::Probability(m) => (1, m.width, m.height, DEFAULT_METERS_PER_PIXEL),
    };
    if width > MAX_SIDE || height > MAX_SIDE || channels > u32::MAX as usize {
        return Err(Error::InvalidParam(format!(
            "dimensions {width}x{height}x{channels} not representable"
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + width * height * channels * 8);
    out.extend_from_slice(MAGIC);
    out.push(raster.kind_byte());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&mpp.to_le_bytes());
    out.resize(HEADER_LEN, 0);
    match raster {
        Raster::Multispectral(t) => t.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Raster::Binary(m) => out.extend_from_slice(&m.data),
        Raster::Probability(m) => m.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

/// Parse S2C bytes, validating every type invariant.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Raster> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{}: header", origin.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let kind = bytes[4];
    let channels = u32_at(5);
    let width = u32_at(9);
    let height = u32_at(13);
    let mpp = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
    let elem = match kind {
        0 | 2 => 8,
        1 => 1,
        k => return Err(Error::Invariant(format!("unknown raster kind {k}"))),
    };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Invariant("header dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * elem {
        return Err(Error::Truncated(format!(
            "{}: payload {} bytes, header implies {}",
            origin.display(),
            payload.len(),
            count * elem
        )));
    }
    let floats = || -> Result<Vec<f64>> {
        let v: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invariant("non-finite value in payload".into()));
        }
        Ok(v)
    };
    match kind {
        0 => {
            let meta = TileMeta {
                tile_id: origin
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                meters_per_pixel: mpp,
                seed: None,
                source: TileSource::Ingested,
            };
            Ok(Raster::Multispectral(MultispectralTile::new(
                width,
                height,
                channels,
                floats()?,
                meta,
            )?))
        }
        1 => {
            if channels != 1 {
                return Err(Error::Invariant("mask must have one channel".into()));
            }
            Ok(Raster::Binary(BinaryMask::new(width, height, payload.to_vec())?))
        }
        _ => {
            if channels != 1 {
                return Err(Error::Invariant("probability mask must have one channel".into()));
            }
            Ok(Raster::Probability(ProbabilityMask::new(width, height, floats()?)?))
        }
    }
}

pub fn write_tile(raster: &Raster, path: &Path) -> Result<()> {
    let bytes = encode(raster)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tile(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Masks that can be exported as a graymap.
pub trait GrayImage {
    fn dims(&self) -> (usize, usize);
    fn gray_bytes(&self) -> Vec<u8>;
}

impl GrayImage for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn gray_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }
}

impl GrayImage for ProbabilityMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn gray_bytes(&self) -> Vec<u8> {
        // round half up
        self.data.iter().map(|&p| (255.0 * p + 0.5).floor() as u8).collect()
    }
}

pub fn pgm_bytes(img: &dyn GrayImage) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.gray_bytes());
    out
}

pub fn export_image(img: &dyn GrayImage, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&pgm_bytes(img)).map_err(|e| Error::io(path, e))
}

/// Clamp raw band values to `[lo, hi]` and map them affinely onto [0, 1].
pub fn normalize_bands(
    raw: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    lo: f64,
    hi: f64,
    meta: TileMeta,
) -> Result<MultispectralTile> {
    if !(hi > lo) {
        return Err(Error::InvalidParam(format!("normalization needs hi > lo, got [{lo}, {hi}]")));
    }
    let span = hi - lo;
    let data = raw.iter().map(|&v| (v.clamp(lo, hi) - lo) / span).collect();
    MultispectralTile::new(width, height, channels, data, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(w: usize, h: usize, c: usize, data: Vec<f64>) -> MultispectralTile {
        MultispectralTile::new(w, h, c, data, TileMeta::default()).unwrap()
    }

    #[test]
    fn zero_tile_layout() {
        let t = tile(2, 2, 1, vec![0.0; 4]);
        let bytes = encode(&t.clone().into()).unwrap();
        assert_eq!(&bytes[..4], b"S2C1");
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 8);
        assert!(bytes[25..32].iter().all(|&b| b == 0));
        let back = decode(&bytes, Path::new("t.s2c")).unwrap();
        assert_eq!(back, Raster::Multispectral(t));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&BinaryMask::zeros(2, 2).into()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::BadMagic(_))));
    }

    #[test]
    fn mask_value_two_rejected() {
        let mut bytes = encode(&BinaryMask::zeros(2, 2).into()).unwrap();
        bytes[HEADER_LEN + 1] = 2;
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::Invariant(_))));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode(&tile(3, 3, 2, vec![0.25; 18]).into()).unwrap();
        let err = decode(&bytes[..bytes.len() - 3], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)));
        assert!(matches!(decode(&bytes[..10], Path::new("x")), Err(Error::Truncated(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let p = ProbabilityMask::new(1, 1, vec![0.5]).unwrap();
        let mut bytes = encode(&p.into()).unwrap();
        bytes[HEADER_LEN..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn unknown_kind_rejected() {
        let mut bytes = encode(&BinaryMask::zeros(1, 1).into()).unwrap();
        bytes[4] = 9;
        assert!(decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn pgm_header_and_values() {
        let m = BinaryMask::new(3, 2, vec![1, 0, 1, 1, 1, 0]).unwrap();
        let bytes = pgm_bytes(&m);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[11..], &[255, 0, 255, 255, 255, 0]);
        let all = BinaryMask::from_fn(4, 4, |_, _| true);
        assert!(pgm_bytes(&all)[11..].iter().all(|&b| b == 255));
    }

    #[test]
    fn pgm_rounds_half_up() {
        let p = ProbabilityMask::new(3, 1, vec![0.5, 0.0, 1.0]).unwrap();
        assert_eq!(&pgm_bytes(&p)[11..], &[128, 0, 255]);
    }

    #[test]
    fn normalize_examples() {
        let t = normalize_bands(&[2.0, 6.0, 4.0, 106.0], 2, 2, 1, 2.0, 6.0, TileMeta::default()).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 0.5, 1.0]);
        assert!(normalize_bands(&[0.0], 1, 1, 1, 1.0, 1.0, TileMeta::default()).is_err());
    }

    #[test]
    fn constructors_enforce_invariants() {
        assert!(MultispectralTile::new(2, 2, 0, vec![], TileMeta::default()).is_err());
        assert!(MultispectralTile::new(1, 1, 1, vec![1.5], TileMeta::default()).is_err());
        assert!(BinaryMask::new(2, 1, vec![0]).is_err());
        assert!(ProbabilityMask::new(1, 1, vec![-0.1]).is_err());
    }

    #[test]
    fn threshold_tie_is_water() {
        let p = ProbabilityMask::new(2, 1, vec![0.5, 0.4999999]).unwrap();
        assert_eq!(p.threshold(0.5).data(), &[1, 0]);
    }
}
