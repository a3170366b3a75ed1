//! Reference computations shared by integration tests.

use kseg::geometry::Domain;

/// Dense-band Cholesky solve of the 5-point Dirichlet problem on the
/// interior nodes, boundary values taken from `psi`.
pub fn banded_harmonic(dom: &Domain, psi: &[f64]) -> Vec<f64> {
    let interior = dom.interior_nodes().to_vec();
    let n = interior.len();
    let mut index = vec![usize::MAX; dom.len()];
    for (r, &p) in interior.iter().enumerate() {
        index[p] = r;
    }
    let mut bw = 0;
    for (r, &p) in interior.iter().enumerate() {
        for q in dom.neighbours(p) {
            if index[q] != usize::MAX {
                bw = bw.max(r.abs_diff(index[q]));
            }
        }
    }
    // band[r][t] holds A[r][r - t]
    let mut band = vec![vec![0.0f64; bw + 1]; n];
    let mut b = vec![0.0; n];
    for (r, &p) in interior.iter().enumerate() {
        band[r][0] = 4.0;
        for q in dom.neighbours(p) {
            if index[q] == usize::MAX {
                b[r] += psi[q];
            } else if index[q] < r {
                band[r][r - index[q]] = -1.0;
            }
        }
    }
    for r in 0..n {
        // columns left to right: entry (r, c) needs (r, j) for j < c
        for t in (1..=bw.min(r)).rev() {
            let c = r - t;
            let mut s = band[r][t];
            for m in 1..=bw {
                if t + m > bw || m > c {
                    break;
                }
                s -= band[r][t + m] * band[c][m];
            }
            band[r][t] = s / band[c][0];
        }
        let d = band[r][0] - band[r][1..=bw.min(r)].iter().map(|v| v * v).sum::<f64>();
        band[r][0] = d.sqrt();
    }
    let mut y = vec![0.0; n];
    for r in 0..n {
        let mut s = b[r];
        for t in 1..=bw.min(r) {
            s -= band[r][t] * y[r - t];
        }
        y[r] = s / band[r][0];
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = y[r];
        for t in 1..=bw.min(n - 1 - r) {
            s -= band[r + t][t] * x[r + t];
        }
        x[r] = s / band[r][0];
    }
    let mut out = psi.to_vec();
    for (r, &p) in interior.iter().enumerate() {
        out[p] = x[r];
    }
    out
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}
