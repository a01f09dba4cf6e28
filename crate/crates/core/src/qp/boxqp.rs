//! Box-constrained convex QP `min ½xᵀHx + gᵀx` subject to `lo ≤ x ≤ hi`.
//!
//! Each iteration fixes the variables held at a bound by the gradient and
//! takes a Newton step on the remaining face, projected back onto the box
//! with backtracking. When that fails to decrease the objective a projected
//! Barzilai–Borwein gradient step with exact line search is taken instead.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxQpOptions {
    /// Stop once the projected-gradient infinity norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
}

fn projected_gradient(x: &DVector<f64>, grad: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| (x[i] - grad[i]).clamp(lo[i], hi[i]) - x[i]),
    )
}

fn project(x: &mut DVector<f64>, lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Newton step on the free face, `None` if the reduced system is singular.
fn face_step(h: &DMatrix<f64>, grad: &DVector<f64>, free: &[usize]) -> Option<DVector<f64>> {
    let m = free.len();
    if m == 0 {
        return None;
    }
    let mut hff = DMatrix::zeros(m, m);
    let mut gf = DVector::zeros(m);
    let mut diag_max = 0.0f64;
    for (a, &i) in free.iter().enumerate() {
        gf[a] = -grad[i];
        for (b, &j) in free.iter().enumerate() {
            hff[(a, b)] = h[(i, j)];
        }
        diag_max = diag_max.max(h[(i, i)]);
    }
    // ridge against flat directions of the objective
    let ridge = 1e-12 * diag_max.max(1e-300);
    for a in 0..m {
        hff[(a, a)] += ridge;
    }
    let chol = hff.cholesky()?;
    let df = chol.solve(&gf);
    let mut d = DVector::zeros(grad.len());
    for (a, &i) in free.iter().enumerate() {
        d[i] = df[a];
    }
    Some(d)
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &[f64],
    lo: &[f64],
    hi: &[f64],
    x0: &[f64],
    opts: &BoxQpOptions,
) -> BoxQpResult {
    let n = g.len();
    let gv = DVector::from_column_slice(g);
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + gv.dot(x);
    let mut x = DVector::from_column_slice(x0);
    project(&mut x, lo, hi);
    let mut f = objective(&x);
    let mut iterations = 0;
    let mut lambda = 1.0;
    let mut pg;
    loop {
        let grad = h * &x + &gv;
        pg = projected_gradient(&x, &grad, lo, hi).amax();
        if pg < opts.tol || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] && grad[i] > 0.0) || (x[i] >= hi[i] && grad[i] < 0.0)))
            .collect();
        let mut accepted = false;
        if let Some(d) = face_step(h, &grad, &free) {
            let mut t = 1.0;
            for _ in 0..30 {
                let mut cand = &x + &d * t;
                project(&mut cand, lo, hi);
                let fc = objective(&cand);
                let decrease = grad.dot(&(&cand - &x));
                if fc <= f + 1e-4 * decrease && fc < f {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // projected gradient step with BB length, exact along the segment
            let mut d = DVector::from_iterator(n, (0..n).map(|i| (x[i] - lambda * grad[i]).clamp(lo[i], hi[i]) - x[i]));
            let hd = h * &d;
            let gd = grad.dot(&d);
            let dhd = d.dot(&hd);
            if gd >= 0.0 {
                break;
            }
            let t = if dhd > 0.0 { (-gd / dhd).min(1.0) } else { 1.0 };
            d *= t;
            x += &d;
            project(&mut x, lo, hi);
            f = objective(&x);
            lambda = if dhd > 0.0 { (d.dot(&d) / (t * t * dhd)).clamp(1e-12, 1e12) } else { 1e12 };
        }
    }
    BoxQpResult {
        x: x.iter().copied().collect(),
        objective: f,
        iterations,
        converged: pg < opts.tol,
        projected_gradient: pg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = solve_box_qp(&h, &[-1.0, -2.0], &[-10.0; 2], &[10.0; 2], &[0.0; 2], &BoxQpOptions::default());
        assert!((r.x[0] - 1.0 / 11.0).abs() < 1e-9);
        assert!((r.x[1] - 7.0 / 11.0).abs() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn active_bound() {
        let h = DMatrix::identity(2, 2) * 2.0;
        let r = solve_box_qp(&h, &[-4.0, 2.0], &[-1.0; 2], &[1.0; 2], &[0.0; 2], &BoxQpOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn coupled_bounds_match_enumeration() {
        // strongly coupled 3-variable problem; check against every face
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 1.9, 0.0, 1.9, 2.0, 1.9, 0.0, 1.9, 2.0]) + DMatrix::identity(3, 3) * 0.1;
        let g = [-1.0, 0.5, -2.0];
        let (lo, hi) = ([-0.5; 3], [0.7; 3]);
        let r = solve_box_qp(&h, &g, &lo, &hi, &[0.0; 3], &BoxQpOptions::default());
        let f = |x: &[f64]| {
            let xv = DVector::from_column_slice(x);
            0.5 * xv.dot(&(&h * &xv)) + DVector::from_column_slice(&g).dot(&xv)
        };
        let mut best = f64::INFINITY;
        let steps = 140;
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    let p = |k: usize| lo[0] + (hi[0] - lo[0]) * k as f64 / steps as f64;
                    best = best.min(f(&[p(a), p(b), p(c)]));
                }
            }
        }
        assert!(r.objective <= best + 1e-12);
        assert!(r.converged);
    }
}
