//! Dense linear-algebra primitives shared by the convolution and dense layers.
//!
//! `gemm` accumulates every output element in ascending reduction order on
//! top of its existing value, so callers get the same rounding as a plain
//! triple loop.

const MR: usize = 4;
const NR: usize = 8;

/// `c += a · b` for row-major `a` (m×k), `b` (k×n), `c` (m×n).
pub(crate) fn gemm(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        match rows {
            4 => row_panel::<4>(n, k, a, b, c, i),
            3 => row_panel::<3>(n, k, a, b, c, i),
            2 => row_panel::<2>(n, k, a, b, c, i),
            _ => row_panel::<1>(n, k, a, b, c, i),
        }
        i += rows;
    }
}

fn row_panel<const R: usize>(n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64], i: usize) {
    let mut j = 0;
    while j + NR <= n {
        block::<R, NR>(n, k, a, b, c, i, j);
        j += NR;
    }
    match n - j {
        0 => {}
        1 => block::<R, 1>(n, k, a, b, c, i, j),
        2 => block::<R, 2>(n, k, a, b, c, i, j),
        3 => block::<R, 3>(n, k, a, b, c, i, j),
        4 => block::<R, 4>(n, k, a, b, c, i, j),
        5 => block::<R, 5>(n, k, a, b, c, i, j),
        6 => block::<R, 6>(n, k, a, b, c, i, j),
        _ => block::<R, 7>(n, k, a, b, c, i, j),
    }
}

/// `R × W` tile of `c` starting at `(i, j)`, held in registers across the
/// whole reduction.
#[inline(always)]
fn block<const R: usize, const W: usize>(
    n: usize,
    k: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    i: usize,
    j: usize,
) {
    let mut acc = [[0.0f64; W]; R];
    for (ii, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i + ii) * n + j..][..W]);
    }
    let arows: [&[f64]; R] = std::array::from_fn(|ii| &a[(i + ii) * k..][..k]);
    for r in 0..k {
        let brow: &[f64; W] = b[r * n + j..][..W].try_into().unwrap();
        for ii in 0..R {
            let av = arows[ii][r];
            for jj in 0..W {
                acc[ii][jj] += av * brow[jj];
            }
        }
    }
    for (ii, row) in acc.iter().enumerate() {
        c[(i + ii) * n + j..][..W].copy_from_slice(row);
    }
}

/// Inner product with eight interleaved partial sums.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Row-major transpose of an `rows × cols` matrix.
pub(crate) fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for (r, row) in src.chunks_exact(cols).enumerate().take(rows) {
        for (c, &v) in row.iter().enumerate() {
            out[c * rows + r] = v;
        }
    }
    out
}
