use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbabilityMask};

/// Normalized 1-D Gaussian weights for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("blur sigma must be > 0, got {sigma}")));
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    Ok(k)
}

/// Symmetric reflection (edge sample repeated) for any offset.
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

fn convolve_rows(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, wt) in k.iter().enumerate() {
                acc += wt * row[reflect(x as i64 + j as i64 - r, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, wt) in k.iter().enumerate() {
            let sy = reflect(y as i64 + j as i64 - r, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += wt * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur of the {0,1} field with reflect padding.
pub fn gaussian_blur(mask: &BinaryMask, sigma: f64) -> Result<ProbabilityMask> {
    let k = gaussian_kernel(sigma)?;
    let (w, h) = (mask.width(), mask.height());
    let field: Vec<f64> = mask.data().iter().map(|&v| v as f64).collect();
    let blurred = convolve_cols(&convolve_rows(&field, w, h, &k), w, h, &k);
    ProbabilityMask::new(w, h, blurred.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Blur then threshold (`p >= threshold` is water).
pub fn coarsen_mask(fine: &BinaryMask, sigma: f64, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParam(format!("threshold must be in (0,1), got {threshold}")));
    }
    Ok(gaussian_blur(fine, sigma)?.threshold(threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(30, 3), 0);
    }

    #[test]
    fn constant_field_stays_constant() {
        let m = BinaryMask::from_fn(9, 7, |_, _| true);
        for sigma in [0.5, 2.0, 8.0] {
            let p = gaussian_blur(&m, sigma).unwrap();
            assert!(p.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_center_weight_and_mass() {
        // Oracle: direct 1-D weights, squared by separability.
        let sigma: f64 = 2.0;
        let r = 6i64;
        let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / 8.0).exp()).collect();
        let norm: f64 = raw.iter().sum();
        let center = (1.0 / norm) * (1.0 / norm);
        assert_eq!((3.0 * sigma).ceil() as i64, r);

        let m = BinaryMask::from_fn(33, 33, |x, y| x == 16 && y == 16);
        let p = gaussian_blur(&m, sigma).unwrap();
        assert!((p.get(16, 16) - center).abs() < 1e-15);
        let total: f64 = p.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_positive_sigma_rejected() {
        let m = BinaryMask::zeros(4, 4);
        assert!(gaussian_blur(&m, 0.0).is_err());
        assert!(gaussian_blur(&m, -1.0).is_err());
        assert!(coarsen_mask(&m, 1.0, 1.0).is_err());
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let m = BinaryMask::from_fn(20, 20, |x, y| (x * 7 + y * 3) % 5 < 2);
        assert_eq!(coarsen_mask(&m, 0.1, 0.5).unwrap(), m);
    }

    #[test]
    fn small_square_erased() {
        let m = BinaryMask::from_fn(64, 64, |x, y| (30..33).contains(&x) && (30..33).contains(&y));
        let blurred = gaussian_blur(&m, 5.0).unwrap();
        let peak = blurred.data().iter().cloned().fold(0.0, f64::max);
        assert!(peak < 0.5, "peak {peak}");
        assert_eq!(coarsen_mask(&m, 5.0, 0.5).unwrap().water_count(), 0);
    }

    #[test]
    fn half_plane_boundary_stays_put() {
        // Analytic profile of a blurred step through pixel centers: the
        // 0.5 level sits exactly on the step, so the mask is unchanged up to
        // one column of drift.
        let m = BinaryMask::from_fn(48, 16, |x, _| x >= 20);
        for sigma in [1.0, 3.0, 8.0] {
            let c = coarsen_mask(&m, sigma, 0.5).unwrap();
            let diff = m.data().iter().zip(c.data()).filter(|(a, b)| a != b).count();
            assert!(diff <= 16, "sigma {sigma}: {diff} pixels moved");
            for y in 0..16 {
                for x in 0..48 {
                    if x + 1 < 20 || x > 20 {
                        assert_eq!(c.get(x, y), m.get(x, y));
                    }
                }
            }
        }
    }
}
