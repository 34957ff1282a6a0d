//! Image-quality metrics on `[0, 1]` clips.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::clip::VideoClip;

/// Returned when the compared signals are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

fn check_shape(a: &VideoClip, b: &VideoClip) -> Result<(), EvalError> {
    if !a.same_shape(b) {
        return Err(EvalError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.frames(),
            a.height(),
            a.width(),
            b.frames(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Mean squared error over all channels of the selected pixels.
/// `mask` has one entry per pixel (`frames * height * width`).
pub fn mse(a: &VideoClip, b: &VideoClip, mask: Option<&[bool]>) -> Result<f64, EvalError> {
    check_shape(a, b)?;
    let pixels = a.frames() * a.height() * a.width();
    let (sum, count) = match mask {
        None => (
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>(),
            pixels,
        ),
        Some(m) => {
            if m.len() != pixels {
                return Err(EvalError::Shape(format!("mask has {} entries for {pixels} pixels", m.len())));
            }
            let mut sum = 0.0;
            let mut count = 0;
            for (p, _) in m.iter().enumerate().filter(|(_, keep)| **keep) {
                for c in 0..3 {
                    sum += (a.data()[3 * p + c] - b.data()[3 * p + c]).powi(2);
                }
                count += 1;
            }
            (sum, count)
        }
    };
    if count == 0 {
        return Err(EvalError::EmptyMask);
    }
    Ok(sum / (3 * count) as f64)
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &VideoClip, b: &VideoClip, mask: Option<&[bool]>) -> Result<f64, EvalError> {
    Ok(psnr_from_mse(mse(a, b, mask)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    /// Side of the square uniform window, slid with stride 1.
    pub window: usize,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            window: 8,
        }
    }
}

/// Summed-area table of one channel, `(h + 1) x (w + 1)`.
fn integral(values: impl Iterator<Item = f64>, h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    let vals: Vec<f64> = values.collect();
    for i in 0..h {
        let mut row = 0.0;
        for j in 0..w {
            row += vals[i * w + j];
            s[(i + 1) * (w + 1) + j + 1] = s[i * (w + 1) + j + 1] + row;
        }
    }
    s
}

fn window_sum(s: &[f64], w: usize, i: usize, j: usize, k: usize) -> f64 {
    let stride = w + 1;
    s[(i + k) * stride + j + k] - s[i * stride + j + k] - s[(i + k) * stride + j] + s[i * stride + j]
}

/// Mean local SSIM over all window positions, channels and frames, for unit
/// dynamic range and population (1/N) window statistics.
pub fn ssim(a: &VideoClip, b: &VideoClip, params: &SsimParams) -> Result<f64, EvalError> {
    check_shape(a, b)?;
    let (h, w, k) = (a.height(), a.width(), params.window);
    if k == 0 || h < k || w < k {
        return Err(EvalError::WindowTooLarge {
            window: k,
            height: h,
            width: w,
        });
    }
    let c1 = params.k1 * params.k1;
    let c2 = params.k2 * params.k2;
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for f in 0..a.frames() {
        let (fa, fb) = (a.frame(f), b.frame(f));
        for c in 0..3 {
            let chan = |x: &'_ [f64]| (0..h * w).map(move |p| x[3 * p + c]).collect::<Vec<f64>>();
            let (xa, xb) = (chan(fa), chan(fb));
            let sa = integral(xa.iter().copied(), h, w);
            let sb = integral(xb.iter().copied(), h, w);
            let saa = integral(xa.iter().map(|v| v * v), h, w);
            let sbb = integral(xb.iter().map(|v| v * v), h, w);
            let sab = integral(xa.iter().zip(&xb).map(|(x, y)| x * y), h, w);
            for i in 0..=h - k {
                for j in 0..=w - k {
                    let ma = window_sum(&sa, w, i, j, k) / n;
                    let mb = window_sum(&sb, w, i, j, k) / n;
                    let va = (window_sum(&saa, w, i, j, k) / n - ma * ma).max(0.0);
                    let vb = (window_sum(&sbb, w, i, j, k) / n - mb * mb).max(0.0);
                    let cov = window_sum(&sab, w, i, j, k) / n - ma * mb;
                    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clip(seed: u64, n: usize, h: usize, w: usize) -> VideoClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoClip::new(n, h, w, (0..n * h * w * 3).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn uniform(v: f64) -> VideoClip {
        VideoClip::new(2, 4, 4, vec![v; 96]).unwrap()
    }

    /// Window statistics written out directly from the definition.
    fn ssim_textbook(a: &VideoClip, b: &VideoClip, k: usize) -> f64 {
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let mut scores = Vec::new();
        for f in 0..a.frames() {
            for c in 0..3 {
                for i in 0..=a.height() - k {
                    for j in 0..=a.width() - k {
                        let mut xs = Vec::new();
                        let mut ys = Vec::new();
                        for di in 0..k {
                            for dj in 0..k {
                                xs.push(a.pixel(f, i + di, j + dj)[c]);
                                ys.push(b.pixel(f, i + di, j + dj)[c]);
                            }
                        }
                        let n = xs.len() as f64;
                        let mx = xs.iter().sum::<f64>() / n;
                        let my = ys.iter().sum::<f64>() / n;
                        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
                        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
                        let cxy = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
                        scores.push(
                            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)),
                        );
                    }
                }
            }
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    #[test]
    fn psnr_examples() {
        let a = random_clip(1, 2, 4, 4);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP_DB);
        let p = psnr(&uniform(0.25), &uniform(0.75), None).unwrap();
        assert!((p - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((p - 6.0206).abs() < 1e-4);
        // Differ only on pixel 0; masking it out gives the cap.
        let mut d = a.data().to_vec();
        d[0] = 1.0 - d[0];
        let b = VideoClip::new(2, 4, 4, d).unwrap();
        let mut mask = vec![true; 32];
        mask[0] = false;
        assert_eq!(psnr(&a, &b, Some(&mask)).unwrap(), PSNR_CAP_DB);
        assert!(matches!(psnr(&a, &b, Some(&[false; 32])), Err(EvalError::EmptyMask)));
        assert!(psnr(&a, &b, Some(&[true; 3])).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = random_clip(2, 2, 10, 12);
        assert!((ssim(&a, &a, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-12);
        let inv = VideoClip::new(2, 10, 12, a.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv, &SsimParams::default()).unwrap() < 1.0);
        let small = random_clip(3, 1, 6, 6);
        assert!(matches!(
            ssim(&small, &small, &SsimParams::default()),
            Err(EvalError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn ssim_matches_textbook_formula() {
        for seed in 0..5 {
            let a = random_clip(seed, 2, 11, 9);
            let b = random_clip(seed + 100, 2, 11, 9);
            let fast = ssim(&a, &b, &SsimParams::default()).unwrap();
            let slow = ssim_textbook(&a, &b, 8);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    proptest! {
        #[test]
        fn masked_mse_partitions_full_mse(seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 48)) {
            let a = random_clip(seed, 3, 4, 4);
            let b = random_clip(seed ^ 1, 3, 4, 4);
            let full = mse(&a, &b, None).unwrap();
            let inv: Vec<bool> = bits.iter().map(|x| !x).collect();
            let w = bits.iter().filter(|x| **x).count() as f64 / bits.len() as f64;
            let m = if w > 0.0 { mse(&a, &b, Some(&bits)).unwrap() } else { 0.0 };
            let r = if w < 1.0 { mse(&a, &b, Some(&inv)).unwrap() } else { 0.0 };
            prop_assert!((full - (w * m + (1.0 - w) * r)).abs() < 1e-9);
        }

        #[test]
        fn ssim_bounded(seed in any::<u64>()) {
            let a = random_clip(seed, 1, 9, 9);
            let b = random_clip(seed ^ 7, 1, 9, 9);
            let s = ssim(&a, &b, &SsimParams::default()).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
