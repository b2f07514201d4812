//! Marching squares at iso-level 0.5 on a binary mask.
//!
//! Pixel `(c, r)` covers `[c, c+1) × [r, r+1)` and its sample sits at the
//! center `(c + 0.5, r + 0.5)`. The mask is padded with one ring of
//! non-water so every loop closes; segments running along that outer frame
//! are flagged and excluded from the walkable arc length, since they do not
//! correspond to a real water edge.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GeoPoint};

/// One closed boundary loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    vertices: Vec<GeoPoint>,
    /// `frame[i]` marks segment `vertices[i] -> vertices[i+1 mod n]` as lying
    /// on the tile frame.
    frame: Vec<bool>,
    /// Cumulative walkable length at the start of each segment.
    cum: Vec<f64>,
    length: f64,
    edge_length: f64,
}

impl Contour {
    /// Closed polyline with no frame segments.
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self> {
        let n = vertices.len();
        Self::with_frame(vertices, vec![false; n])
    }

    pub fn with_frame(vertices: Vec<GeoPoint>, frame: Vec<bool>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Invariant("contour needs at least 3 vertices".into()));
        }
        if frame.len() != vertices.len() {
            return Err(Error::Invariant("frame flags must match vertex count".into()));
        }
        if vertices.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Invariant("non-finite contour vertex".into()));
        }
        let n = vertices.len();
        let mut cum = Vec::with_capacity(n);
        let mut length = 0.0;
        let mut edge_length = 0.0;
        for i in 0..n {
            cum.push(edge_length);
            let seg = vertices[i].dist(&vertices[(i + 1) % n]);
            length += seg;
            if !frame[i] {
                edge_length += seg;
            }
        }
        Ok(Contour {
            vertices,
            frame,
            cum,
            length,
            edge_length,
        })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn frame_flags(&self) -> &[bool] {
        &self.frame
    }

    /// Total closed-loop arc length, frame segments included.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Arc length of segments lying on a real water edge.
    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Position at walkable arc length `s` (wrapped into `[0, edge_length)`).
    pub fn point_at(&self, s: f64) -> GeoPoint {
        let s = s.rem_euclid(self.edge_length.max(f64::MIN_POSITIVE));
        let n = self.vertices.len();
        // last walkable segment whose start is <= s
        let mut idx = self.cum.partition_point(|&c| c <= s).saturating_sub(1);
        while self.frame[idx] {
            idx = (idx + n - 1) % n;
        }
        let a = self.vertices[idx];
        let b = self.vertices[(idx + 1) % n];
        let seg = a.dist(&b);
        let t = if seg > 0.0 {
            ((s - self.cum[idx]) / seg).clamp(0.0, 1.0)
        } else {
            0.0
        };
        GeoPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Walkable arc position of vertex `i`.
    pub fn arc_at_vertex(&self, i: usize) -> f64 {
        self.cum[i]
    }
}

/// Doubled coordinates of an edge midpoint in the padded grid; unique per edge.
type EdgeKey = (i64, i64);

/// Closed contours of the water region, longest walkable loop first.
pub fn extract_contours(mask: &BinaryMask) -> Result<Vec<Contour>> {
    let water = mask.water_count();
    if water == 0 || water == mask.data().len() {
        return Err(Error::NoBoundary);
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    // padded grid corner (i, j) <-> pixel (i-1, j-1)
    let at = |i: i64, j: i64| -> bool {
        let (x, y) = (i - 1, j - 1);
        x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize) == 1
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..=h {
        for i in 0..=w {
            let tl = at(i, j);
            let tr = at(i + 1, j);
            let br = at(i + 1, j + 1);
            let bl = at(i, j + 1);
            let top = (2 * i + 1, 2 * j);
            let bottom = (2 * i + 1, 2 * j + 2);
            let left = (2 * i, 2 * j + 1);
            let right = (2 * i + 2, 2 * j + 1);
            if tl == br && tr == bl && tl != tr {
                // Saddle: water joins diagonally, the two dry corners are cut off.
                if tl {
                    segments.push((top, right));
                    segments.push((left, bottom));
                } else {
                    segments.push((top, left));
                    segments.push((right, bottom));
                }
                continue;
            }
            let mut crossed = Vec::with_capacity(2);
            if tl != tr {
                crossed.push(top);
            }
            if tr != br {
                crossed.push(right);
            }
            if bl != br {
                crossed.push(bottom);
            }
            if tl != bl {
                crossed.push(left);
            }
            if crossed.len() == 2 {
                segments.push((crossed[0], crossed[1]));
            }
        }
    }

    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::with_capacity(segments.len() * 2);
    for (s, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }

    let to_point = |k: EdgeKey| GeoPoint::new(k.0 as f64 / 2.0 - 0.5, k.1 as f64 / 2.0 - 0.5);
    // Both ends on the border: a frame run or a frame corner chamfer.
    let border = |p: GeoPoint| p.x == 0.0 || p.y == 0.0 || p.x == w as f64 || p.y == h as f64;
    let on_frame = |a: GeoPoint, b: GeoPoint| border(a) && border(b);

    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let first = segments[start].0;
        let mut keys = vec![first];
        let mut cur = segments[start].1;
        let mut guard = 0;
        while cur != first {
            keys.push(cur);
            let next = incident[&cur]
                .iter()
                .copied()
                .find(|&s| !used[s])
                .ok_or_else(|| Error::Invariant("open contour chain".into()))?;
            used[next] = true;
            let (a, b) = segments[next];
            cur = if a == cur { b } else { a };
            guard += 1;
            if guard > segments.len() {
                return Err(Error::Invariant("contour chain did not close".into()));
            }
        }
        let vertices: Vec<GeoPoint> = keys.into_iter().map(to_point).collect();
        let n = vertices.len();
        let frame = (0..n)
            .map(|i| on_frame(vertices[i], vertices[(i + 1) % n]))
            .collect();
        loops.push(Contour::with_frame(vertices, frame)?);
    }
    // Stable: equal lengths keep scan order.
    loops.sort_by(|a, b| b.edge_length.total_cmp(&a.edge_length));
    Ok(loops)
}
