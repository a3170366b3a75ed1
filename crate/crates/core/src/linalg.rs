//! Matrix-free conjugate gradients for the 5-point Dirichlet Laplacian on a
//! subset of interior nodes (node units: the operator is `h^2 * (-Delta)`).

use crate::geometry::Domain;
use crate::{Error, Result};

pub(crate) struct MaskedLaplacian<'a> {
    pub dom: &'a Domain,
    /// Nodes carrying unknowns; all must be interior.
    pub free: &'a [bool],
    /// Optional diagonal added to the operator (node units).
    pub shift: Option<&'a [f64]>,
}

impl MaskedLaplacian<'_> {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for p in 0..out.len() {
            if !self.free[p] {
                out[p] = 0.0;
                continue;
            }
            let mut acc = 4.0 * x[p];
            for q in self.dom.neighbours(p) {
                if self.free[q] {
                    acc -= x[q];
                }
            }
            if let Some(s) = self.shift {
                acc += s[p] * x[p];
            }
            out[p] = acc;
        }
    }

    /// Right-hand side contribution of fixed neighbour values.
    pub fn dirichlet_rhs(&self, fixed: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; fixed.len()];
        for p in 0..fixed.len() {
            if !self.free[p] {
                continue;
            }
            for q in self.dom.neighbours(p) {
                if !self.free[q] {
                    b[p] += fixed[q];
                }
            }
        }
        b
    }

    /// Solves `A x = b` on the free nodes starting from `x`. Stops when the
    /// Euclidean residual norm drops below `tol`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
        let n = b.len();
        let mut ax = vec![0.0; n];
        self.apply(x, &mut ax);
        let mut r: Vec<f64> = (0..n).map(|p| if self.free[p] { b[p] - ax[p] } else { 0.0 }).collect();
        let mut d = r.clone();
        let mut rr = dot(&r, &r);
        let mut ad = vec![0.0; n];
        for it in 0..max_iter {
            if rr.sqrt() <= tol {
                return Ok(it);
            }
            self.apply(&d, &mut ad);
            let dad = dot(&d, &ad);
            if dad <= 0.0 {
                return Err(Error::NoConvergence {
                    what: "conjugate gradients (operator not positive definite)".into(),
                    iterations: it,
                });
            }
            let step = rr / dad;
            for p in 0..n {
                x[p] += step * d[p];
                r[p] -= step * ad[p];
            }
            let rr_new = dot(&r, &r);
            let ratio = rr_new / rr;
            rr = rr_new;
            for p in 0..n {
                d[p] = r[p] + ratio * d[p];
            }
        }
        if rr.sqrt() <= tol {
            return Ok(max_iter);
        }
        Err(Error::NoConvergence {
            what: "conjugate gradients".into(),
            iterations: max_iter,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete harmonic function equal to `fixed` off the free set.
pub(crate) fn harmonic_fill(dom: &Domain, free: &[bool], fixed: &[f64]) -> Result<Vec<f64>> {
    let op = MaskedLaplacian { dom, free, shift: None };
    let b = op.dirichlet_rhs(fixed);
    let mut x: Vec<f64> = (0..fixed.len()).map(|p| if free[p] { 0.0 } else { fixed[p] }).collect();
    let mut xf: Vec<f64> = vec![0.0; fixed.len()];
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    op.solve(&b, &mut xf, 1e-14 * scale, 20 * fixed.len() + 100)?;
    for p in 0..x.len() {
        if free[p] {
            x[p] = xf[p];
        }
    }
    Ok(x)
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian `-Delta_h` on the
/// interior nodes, by inverse power iteration with CG inner solves.
pub(crate) fn smallest_dirichlet_eigenvalue(dom: &Domain, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let free: Vec<bool> = (0..dom.len()).map(|p| dom.is_interior(p)).collect();
    let op = MaskedLaplacian {
        dom,
        free: &free,
        shift: None,
    };
    let n = dom.len();
    let mut x: Vec<f64> = free.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    normalize(&mut x);
    let mut ax = vec![0.0; n];
    let mut mu_prev = f64::INFINITY;
    for _ in 0..max_iter {
        let mut y = vec![0.0; n];
        op.solve(&x, &mut y, 1e-13, 20 * n + 100)?;
        normalize(&mut y);
        x = y;
        op.apply(&x, &mut ax);
        let mu = dot(&x, &ax);
        if (mu - mu_prev).abs() <= rel_tol * mu {
            return Ok(mu / (dom.h * dom.h));
        }
        mu_prev = mu;
    }
    Err(Error::NoConvergence {
        what: "inverse power iteration".into(),
        iterations: max_iter,
    })
}

fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rectangle, laplacian};

    #[test]
    fn eigenvalue_matches_closed_form() {
        let dom = build_rectangle(33, 33, 1.0 / 32.0).unwrap();
        let lam = smallest_dirichlet_eigenvalue(&dom, 1e-10, 1000).unwrap();
        let h = dom.h;
        let exact = 8.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((lam - exact).abs() < 1e-6 * exact, "{lam} vs {exact}");
    }

    #[test]
    fn harmonic_fill_is_discrete_harmonic() {
        let dom = build_rectangle(12, 9, 0.1).unwrap();
        let free: Vec<bool> = (0..dom.len()).map(|p| dom.is_interior(p)).collect();
        let fixed = dom.sample(|x, y| (3.0 * x).sin() + y * y);
        let u = harmonic_fill(&dom, &free, &fixed).unwrap();
        let l = laplacian(&dom, &u);
        assert!(l.iter().all(|v| v.abs() * dom.h * dom.h < 1e-12));
    }
}
