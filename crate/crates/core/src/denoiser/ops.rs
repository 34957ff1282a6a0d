//! Dense kernels shared by the forward and backward passes.
//!
//! Activations are `[frames, h, w, ch]` row-major, so a "row" is one spatial
//! site of one frame and convolution is im2col followed by a GEMM.

/// Row-major matrix view with optional transpose, for [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub trans: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            trans: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            trans: !self.trans,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.trans {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a * b + beta * c` with `c` row-major `m x n`.
pub(crate) fn gemm(a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output buffer has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the strides describe exactly the `m x k`, `k x n` and `m x n`
    // extents of the three buffers, whose lengths were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 3x3, zero-padded, stride 1 patches of each frame: `[frames*h*w, 9*ch]`.
pub(crate) fn im2col(x: &[f64], frames: usize, h: usize, w: usize, ch: usize) -> Vec<f64> {
    let k = 9 * ch;
    let mut cols = vec![0.0; frames * h * w * k];
    for f in 0..frames {
        for i in 0..h {
            for j in 0..w {
                let row = ((f * h + i) * w + j) * k;
                for ky in 0..3 {
                    let y = i + ky;
                    if y == 0 || y > h {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = j + kx;
                        if xx == 0 || xx > w {
                            continue;
                        }
                        let src = ((f * h + y - 1) * w + xx - 1) * ch;
                        let dst = row + (ky * 3 + kx) * ch;
                        cols[dst..dst + ch].copy_from_slice(&x[src..src + ch]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto `dx`.
pub(crate) fn col2im(dcols: &[f64], frames: usize, h: usize, w: usize, ch: usize, dx: &mut [f64]) {
    let k = 9 * ch;
    for f in 0..frames {
        for i in 0..h {
            for j in 0..w {
                let row = ((f * h + i) * w + j) * k;
                for ky in 0..3 {
                    let y = i + ky;
                    if y == 0 || y > h {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = j + kx;
                        if xx == 0 || xx > w {
                            continue;
                        }
                        let dst = ((f * h + y - 1) * w + xx - 1) * ch;
                        let src = row + (ky * 3 + kx) * ch;
                        for c in 0..ch {
                            dx[dst + c] += dcols[src + c];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Sum of the rows of a `rows x cols` matrix, accumulated into `out`.
pub(crate) fn add_row_sums(m: &[f64], cols: usize, out: &mut [f64]) {
    for row in m.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|v| (v as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let mut c = vec![0.0; m * n];
        gemm(Mat::new(&a, m, k), Mat::new(&b, k, n), 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let at = transpose(&a, m, k);
        let bt = transpose(&b, k, n);
        let mut c2 = vec![1.0; m * n];
        gemm(Mat::new(&at, k, m).t(), Mat::new(&bt, n, k).t(), 1.0, &mut c2);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (f, h, w, ch) = (2, 3, 4, 2);
        let x: Vec<f64> = (0..f * h * w * ch).map(|v| (v as f64 * 0.3).sin()).collect();
        let cols = im2col(&x, f, h, w, ch);
        let y: Vec<f64> = (0..cols.len()).map(|v| (v as f64 * 0.7).cos()).collect();
        let mut back = vec![0.0; x.len()];
        col2im(&y, f, h, w, ch, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn silu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6;
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
