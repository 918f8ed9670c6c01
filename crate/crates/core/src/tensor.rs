//! Dense row-major matrix helpers over `f64` slices.
//!
//! Products go through `matrixmultiply`, which computes every output element
//! with the same accumulation order regardless of how many rows are in the
//! left operand. Scores therefore do not depend on batch composition.

/// `out = a · b` (or `out += a · b` when `accumulate`), `a` is `m×k`, `b` is `k×n`.
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above and strides describe row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out (+)= aᵀ · b` where `a` is `m×k` and `b` is `m×n`; `out` is `k×n`.
pub fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), m * n);
    assert_eq!(out.len(), k * n);
    if k == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: as above; `a` is read column-major to form its transpose.
    unsafe {
        matrixmultiply::dgemm(
            k, m, n, 1.0,
            a.as_ptr(), 1, k as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out (+)= a · bᵀ` where `a` is `m×n` and `b` is `k×n`; `out` is `m×k`.
pub fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize, accumulate: bool) {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * k);
    if m == 0 || k == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: as above; `b` is read column-major to form its transpose.
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0,
            a.as_ptr(), n as isize, 1,
            b.as_ptr(), 1, n as isize,
            beta,
            out.as_mut_ptr(), k as isize, 1,
        );
    }
}

/// Adds `bias` to every row of the `rows×bias.len()` matrix `x`.
pub fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of `x` accumulated into `out`.
pub fn add_column_sums(x: &[f64], out: &mut [f64]) {
    for row in x.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// `ln softmax(row)[index]` without forming the full distribution.
pub fn log_softmax_at(row: &[f64], index: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
    row[index] - max - sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
            }
        }
        out
    }

    fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut t = vec![0.0; a.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        t
    }

    fn fill(n: usize, salt: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + salt) * 0.7311).sin()).collect()
    }

    #[test]
    fn products_agree_with_naive() {
        let (m, k, n) = (7, 5, 3);
        let a = fill(m * k, 1.0);
        let b = fill(k * n, 2.0);
        let expect = naive(&a, &b, m, k, n);
        let mut out = vec![0.0; m * n];
        matmul(&a, &b, &mut out, m, k, n, false);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
        let at = transpose(&a, m, k);
        let mut out2 = vec![1.0; m * n];
        matmul_tn(&at, &b, &mut out2, k, m, n, true);
        for (x, y) in out2.iter().zip(&expect) {
            assert!((x - 1.0 - y).abs() < 1e-12);
        }
        let bt = transpose(&b, k, n);
        let mut out3 = vec![0.0; m * n];
        matmul_nt(&a, &bt, &mut out3, m, k, n, false);
        for (x, y) in out3.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_do_not_depend_on_row_count() {
        let (k, n) = (96, 200);
        let b = fill(k * n, 3.0);
        let a = fill(37 * k, 4.0);
        let mut all = vec![0.0; 37 * n];
        matmul(&a, &b, &mut all, 37, k, n, false);
        for i in [0, 5, 17, 36] {
            let mut one = vec![0.0; n];
            matmul(&a[i * k..(i + 1) * k], &b, &mut one, 1, k, n, false);
            assert_eq!(one, all[i * n..(i + 1) * n]);
        }
    }

    #[test]
    fn softmax_is_normalized() {
        let mut row = vec![1000.0, 1001.0, -5.0];
        softmax_in_place(&mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax_at(&[1000.0, 1001.0, -5.0], 1);
        assert!((lp - row[1].ln()).abs() < 1e-12);
    }
}
