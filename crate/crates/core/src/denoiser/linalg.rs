//! Dense kernels for the conv net: GEMM dispatch and im2col/col2im with
//! zero "same" padding. Matrices are row-major unless a name says otherwise.

use std::fmt::Debug;

use num_traits::Float;

pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `c = alpha * a · b + beta * c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                assert!(c.len() >= m * n, "gemm output too small");
                // SAFETY: every operand extent was bounds-checked above and
                // `c` is an exclusive, contiguous m×n row-major block.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn of_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// `c (m×n) = a (m×k) · b (k×n)`, overwriting or accumulating into `c`.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, a, k as isize, 1, b, n as isize, 1, beta, c);
}

/// `c (m×n) = a (m×k) · bᵀ` where `b` is stored n×k.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, a, k as isize, 1, b, 1, k as isize, beta, c);
}

/// `c (m×n) = aᵀ · b` where `a` is stored k×m and `b` is k×n.
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, a, 1, m as isize, b, n as isize, 1, beta, c);
}

/// Unfolds `channels × h × w` into `(channels·k·k) × (h·w)` patches.
pub fn im2col<T: Scalar>(
    input: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    out: &mut Vec<T>,
) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    out.clear();
    out.resize(channels * k * k * hw, T::zero());
    for ch in 0..channels {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            let dy = ki as isize - pad;
            for kj in 0..k {
                let dx = kj as isize - pad;
                let row = &mut out[((ch * k + ki) * k + kj) * hw..][..hw];
                let c_lo = (-dx).max(0) as usize;
                let c_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for r in 0..h {
                    let sr = r as isize + dy;
                    if sr < 0 || sr >= h as isize || c_lo >= c_hi {
                        continue;
                    }
                    let src = &plane[sr as usize * w..(sr as usize + 1) * w];
                    let dst = &mut row[r * w..(r + 1) * w];
                    let sc_lo = (c_lo as isize + dx) as usize;
                    dst[c_lo..c_hi].copy_from_slice(&src[sc_lo..sc_lo + (c_hi - c_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds patch gradients back onto the image grid.
pub fn col2im<T: Scalar>(cols: &[T], channels: usize, h: usize, w: usize, k: usize, out: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    out[..channels * hw].fill(T::zero());
    for ch in 0..channels {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            let dy = ki as isize - pad;
            for kj in 0..k {
                let dx = kj as isize - pad;
                let row = &cols[((ch * k + ki) * k + kj) * hw..][..hw];
                let c_lo = (-dx).max(0) as usize;
                let c_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for r in 0..h {
                    let sr = r as isize + dy;
                    if sr < 0 || sr >= h as isize || c_lo >= c_hi {
                        continue;
                    }
                    let sc_lo = (c_lo as isize + dx) as usize;
                    let dst = &mut plane[sr as usize * w + sc_lo..][..c_hi - c_lo];
                    for (d, s) in dst.iter_mut().zip(&row[r * w + c_lo..r * w + c_hi]) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree_with_loops() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut expect = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    expect[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c, false);
        assert!(c.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));

        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        gemm_nt(m, k, n, &a, &bt, &mut c, false);
        assert!(c.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));

        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        gemm_tn(m, k, n, &at, &b, &mut c, true);
        assert!(c
            .iter()
            .zip(&expect)
            .all(|(x, y)| (x - 2.0 * y).abs() < 1e-12));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (ch, h, w, k) = (2, 5, 6, 3);
        let x: Vec<f64> = (0..ch * h * w)
            .map(|i| ((i * 7) % 11) as f64 - 5.0)
            .collect();
        let y: Vec<f64> = (0..ch * k * k * h * w)
            .map(|i| ((i * 3) % 7) as f64 - 3.0)
            .collect();
        let mut cols = Vec::new();
        im2col(&x, ch, h, w, k, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; ch * h * w];
        col2im(&y, ch, h, w, k, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn im2col_center_tap_is_identity() {
        let (h, w, k) = (4, 3, 3);
        let x: Vec<f64> = (0..h * w).map(|i| i as f64).collect();
        let mut cols = Vec::new();
        im2col(&x, 1, h, w, k, &mut cols);
        assert_eq!(&cols[4 * h * w..5 * h * w], &x[..]);
        // Top-left tap of the first pixel reads the zero padding.
        assert_eq!(cols[0], 0.0);
    }
}
