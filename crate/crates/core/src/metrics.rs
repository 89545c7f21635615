//! Image-quality metrics: PSNR, NRMSE and windowed SSIM.
//!
//! PSNR and NRMSE are normalized by the reference, so argument order matters.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Smallest image side accepted by [`ssim`].
pub const SSIM_MIN_SIDE: usize = 7;
/// Nominal Gaussian window side and width.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// A reference image and its reconstruction, of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    reference: Matrix,
    reconstruction: Matrix,
    data_range: f64,
}

impl ImagePair {
    pub fn new(reference: Matrix, reconstruction: Matrix) -> Result<Self> {
        Self::with_range(reference, reconstruction, 1.0)
    }

    pub fn with_range(reference: Matrix, reconstruction: Matrix, data_range: f64) -> Result<Self> {
        if reference.shape() != reconstruction.shape() {
            return Err(Error::ShapeMismatch(reference.shape(), reconstruction.shape()));
        }
        if !reference.is_finite() || !reconstruction.is_finite() {
            return Err(Error::DomainError("image pixels must be finite".into()));
        }
        if !(data_range > 0.0 && data_range.is_finite()) {
            return Err(Error::DomainError(format!("data range {data_range} must be positive")));
        }
        Ok(Self {
            reference,
            reconstruction,
            data_range,
        })
    }

    /// Builds a pair from flat row-major pixel vectors.
    pub fn from_slices(rows: usize, cols: usize, reference: &[f64], reconstruction: &[f64]) -> Result<Self> {
        if reference.len() != rows * cols || reconstruction.len() != rows * cols {
            return Err(Error::ShapeMismatch(
                (reference.len(), 1),
                (reconstruction.len(), 1),
            ));
        }
        Self::new(
            Matrix::from_vec(rows, cols, reference.to_vec()),
            Matrix::from_vec(rows, cols, reconstruction.to_vec()),
        )
    }

    pub fn reference(&self) -> &Matrix {
        &self.reference
    }

    pub fn reconstruction(&self) -> &Matrix {
        &self.reconstruction
    }

    pub fn data_range(&self) -> f64 {
        self.data_range
    }

    pub fn mse(&self) -> f64 {
        let n = self.reference.len() as f64;
        self.reference
            .as_slice()
            .iter()
            .zip(self.reconstruction.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n
    }
}

/// `10 log10(range^2 / MSE)` in decibels; `+inf` for identical images.
pub fn psnr(p: &ImagePair) -> f64 {
    let mse = p.mse();
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (p.data_range * p.data_range / mse).log10()
}

/// `sqrt(MSE) / sqrt(mean(reference^2))`.
pub fn nrmse(p: &ImagePair) -> Result<f64> {
    let n = p.reference.len() as f64;
    let ref_ms = p.reference.norm_sq() / n;
    if ref_ms == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok((p.mse() / ref_ms).sqrt())
}

/// Normalized 1-d Gaussian taps of odd length `size`.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Window side used for an image: 11, or the largest odd side that fits.
pub fn ssim_window_size(rows: usize, cols: usize) -> usize {
    let side = rows.min(cols).min(SSIM_WINDOW);
    if side.is_multiple_of(2) {
        side - 1
    } else {
        side
    }
}

/// Gaussian-weighted window means over every fully contained window position.
fn filter_valid(image: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let w = taps.len();
    let (out_rows, out_cols) = (rows - w + 1, cols - w + 1);
    let mut horizontal = vec![0.0; rows * out_cols];
    for r in 0..rows {
        for c in 0..out_cols {
            horizontal[r * out_cols + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * image[r * cols + c + k])
                .sum();
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for r in 0..out_rows {
        for c in 0..out_cols {
            out[r * out_cols + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horizontal[(r + k) * out_cols + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all window positions that lie inside the image.
///
/// Window statistics are Gaussian-weighted (sigma 1.5) with population
/// (weighted, not sample-corrected) variances. Images narrower than 11 pixels
/// use the largest odd window that fits.
pub fn ssim(p: &ImagePair) -> Result<f64> {
    let (rows, cols) = p.reference.shape();
    if rows < SSIM_MIN_SIDE || cols < SSIM_MIN_SIDE {
        return Err(Error::TooSmall {
            rows,
            cols,
            min: SSIM_MIN_SIDE,
        });
    }
    let taps = gaussian_taps(ssim_window_size(rows, cols), SSIM_SIGMA);
    let x = p.reference.as_slice();
    let y = p.reconstruction.as_slice();
    let product = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(&a, &b)| f(a, b)).collect() };

    let mx = filter_valid(x, rows, cols, &taps);
    let my = filter_valid(y, rows, cols, &taps);
    let mxx = filter_valid(&product(&|a, _| a * a), rows, cols, &taps);
    let myy = filter_valid(&product(&|_, b| b * b), rows, cols, &taps);
    let mxy = filter_valid(&product(&|a, b| a * b), rows, cols, &taps);

    let c1 = (SSIM_K1 * p.data_range).powi(2);
    let c2 = (SSIM_K2 * p.data_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// All three metrics for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
}

pub fn quality(p: &ImagePair) -> Result<QualityReport> {
    Ok(QualityReport {
        psnr: psnr(p),
        ssim: ssim(p)?,
        nrmse: nrmse(p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen::<f64>())
    }

    /// Window-by-window SSIM with an unnormalized 2-d kernel.
    fn brute_ssim(x: &Matrix, y: &Matrix, range: f64) -> f64 {
        let (rows, cols) = x.shape();
        let mut w = rows.min(cols).min(11);
        if w % 2 == 0 {
            w -= 1;
        }
        let h = (w / 2) as f64;
        let mut kernel = vec![vec![0.0; w]; w];
        for (a, row) in kernel.iter_mut().enumerate() {
            for (b, k) in row.iter_mut().enumerate() {
                let (da, db) = (a as f64 - h, b as f64 - h);
                *k = (-(da * da + db * db) / 4.5).exp();
            }
        }
        let mass: f64 = kernel.iter().flatten().sum();
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let mut total = 0.0;
        let mut count = 0.0;
        for r0 in 0..=rows - w {
            for c0 in 0..=cols - w {
                let (mut sx, mut sy) = (0.0, 0.0);
                for a in 0..w {
                    for b in 0..w {
                        sx += kernel[a][b] * x.get(r0 + a, c0 + b);
                        sy += kernel[a][b] * y.get(r0 + a, c0 + b);
                    }
                }
                let (ux, uy) = (sx / mass, sy / mass);
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for a in 0..w {
                    for b in 0..w {
                        let dx = x.get(r0 + a, c0 + b) - ux;
                        let dy = y.get(r0 + a, c0 + b) - uy;
                        vx += kernel[a][b] * dx * dx;
                        vy += kernel[a][b] * dy * dy;
                        cov += kernel[a][b] * dx * dy;
                    }
                }
                let (vx, vy, cov) = (vx / mass, vy / mass, cov / mass);
                total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        total / count
    }

    fn brute_psnr(x: &Matrix, y: &Matrix, range: f64) -> f64 {
        let mut se = 0.0;
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                se += (x.get(r, c) - y.get(r, c)).powi(2);
            }
        }
        20.0 * range.log10() - 10.0 * (se / x.len() as f64).log10()
    }

    fn brute_nrmse(x: &Matrix, y: &Matrix) -> f64 {
        let (mut se, mut ss) = (0.0, 0.0);
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                se += (x.get(r, c) - y.get(r, c)).powi(2);
                ss += x.get(r, c).powi(2);
            }
        }
        (se / ss).sqrt()
    }

    #[test]
    fn psnr_examples() {
        let a = Matrix::zeros(4, 4);
        assert_eq!(psnr(&ImagePair::new(a.clone(), a.clone()).unwrap()), f64::INFINITY);
        let half = Matrix::filled(4, 4, 0.5);
        let p = psnr(&ImagePair::new(a, half).unwrap());
        assert!((p - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((p - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn nrmse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(5, 6, &mut rng);
        assert_eq!(nrmse(&ImagePair::new(x.clone(), x.clone()).unwrap()).unwrap(), 0.0);
        let mut doubled = x.clone();
        doubled.add_scaled(1.0, &x);
        assert!((nrmse(&ImagePair::new(x.clone(), doubled).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            nrmse(&ImagePair::new(Matrix::zeros(3, 3), Matrix::filled(3, 3, 0.1)).unwrap()),
            Err(Error::DegenerateReference)
        ));
    }

    #[test]
    fn nrmse_scales_with_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_image(8, 8, &mut rng);
        let noise = random_image(8, 8, &mut rng);
        let with = |alpha: f64| {
            let mut y = x.clone();
            y.add_scaled(alpha, &noise);
            nrmse(&ImagePair::new(x.clone(), y).unwrap()).unwrap()
        };
        assert!((with(2.0) / with(0.5) - 4.0).abs() < 1e-12);
        assert!((with(0.3) / with(0.1) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_image(16, 16, &mut rng);
        let noise = Matrix::from_fn(16, 16, |_, _| rng.gen_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for step in 1..=20 {
            let mut y = x.clone();
            y.add_scaled(step as f64 * 0.01, &noise);
            let v = psnr(&ImagePair::new(x.clone(), y).unwrap());
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ssim_identity_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(7, 7), (8, 12), (11, 11), (16, 16), (20, 13)] {
            let x = random_image(r, c, &mut rng);
            let y = random_image(r, c, &mut rng);
            assert!((ssim(&ImagePair::new(x.clone(), x.clone()).unwrap()).unwrap() - 1.0).abs() < 1e-12);
            let v = ssim(&ImagePair::new(x, y).unwrap()).unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ssim_of_negative_is_negative() {
        // checkerboard has zero-mean structure in every window
        let x = Matrix::from_fn(11, 11, |r, c| if (r + c) % 2 == 0 { 0.9 } else { 0.1 });
        let neg = Matrix::from_fn(11, 11, |r, c| 1.0 - x.get(r, c));
        let p = ImagePair::new(x.clone(), neg.clone()).unwrap();
        let v = ssim(&p).unwrap();
        assert!(v < 0.0, "{v}");
        assert!((v - brute_ssim(&x, &neg, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_and_mismatched() {
        assert!(matches!(
            ssim(&ImagePair::new(Matrix::zeros(6, 9), Matrix::zeros(6, 9)).unwrap()),
            Err(Error::TooSmall { rows: 6, cols: 9, min: 7 })
        ));
        assert!(matches!(
            ImagePair::new(Matrix::zeros(3, 4), Matrix::zeros(4, 3)),
            Err(Error::ShapeMismatch((3, 4), (4, 3)))
        ));
        assert!(ImagePair::new(Matrix::filled(2, 2, f64::NAN), Matrix::zeros(2, 2)).is_err());
        assert_eq!(ssim_window_size(8, 30), 7);
        assert_eq!(ssim_window_size(64, 64), 11);
        assert_eq!(ssim_window_size(10, 9), 9);
    }

    #[test]
    fn metrics_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let rows = rng.gen_range(7..=24);
            let cols = rng.gen_range(7..=24);
            let range = if rng.gen_bool(0.5) { 1.0 } else { 255.0 };
            let x = Matrix::from_fn(rows, cols, |_, _| range * rng.gen::<f64>());
            let y = Matrix::from_fn(rows, cols, |r, c| (x.get(r, c) + range * rng.gen_range(-0.2..0.2)).clamp(0.0, range));
            let p = ImagePair::with_range(x.clone(), y.clone(), range).unwrap();
            assert!((psnr(&p) - brute_psnr(&x, &y, range)).abs() < 1e-9);
            assert!((nrmse(&p).unwrap() - brute_nrmse(&x, &y)).abs() < 1e-9);
            assert!((ssim(&p).unwrap() - brute_ssim(&x, &y, range)).abs() < 1e-9);
        }
    }
}
