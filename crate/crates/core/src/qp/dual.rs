//! Dual active-set method of Goldfarb and Idnani for strictly convex QPs:
//! `min ½xᵀGx + aᵀx` subject to `Eᵀx = e` and `Cᵀx ≥ b`.
//!
//! Starts from the unconstrained minimiser and adds violated constraints one
//! at a time while keeping the iterate dual feasible. The projections use a
//! fresh thin QR of `L⁻¹N` (G = LLᵀ, N the active normals) at every step,
//! which is cheap at the problem sizes used here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub g: DMatrix<f64>,
    pub a: DVector<f64>,
    /// Equality normals as columns.
    pub c_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Inequality normals as columns.
    pub c_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl QpProblem {
    /// Problem with no constraints yet.
    pub fn new(g: DMatrix<f64>, a: DVector<f64>) -> Self {
        let n = a.len();
        Self {
            g,
            a,
            c_eq: DMatrix::zeros(n, 0),
            b_eq: DVector::zeros(0),
            c_ineq: DMatrix::zeros(n, 0),
            b_ineq: DVector::zeros(0),
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) + self.a.dot(x)
    }

    /// Largest constraint violation at `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (self.c_eq.transpose() * x - &self.b_eq).amax();
        let ineq = (&self.b_ineq - self.c_ineq.transpose() * x).max().max(0.0);
        if self.b_eq.is_empty() {
            if self.b_ineq.is_empty() {
                0.0
            } else {
                ineq
            }
        } else {
            eq.max(if self.b_ineq.is_empty() { 0.0 } else { ineq })
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Active inequality indices at the solution.
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Con {
    Eq(usize),
    Ineq(usize),
}

const FEAS_TOL: f64 = 1e-10;
const ZERO: f64 = 1e-14;

struct Workspace<'a> {
    prob: &'a QpProblem,
    l: DMatrix<f64>,
}

impl Workspace<'_> {
    fn normal(&self, c: Con) -> DVector<f64> {
        match c {
            Con::Eq(i) => self.prob.c_eq.column(i).into_owned(),
            Con::Ineq(i) => self.prob.c_ineq.column(i).into_owned(),
        }
    }

    fn slack(&self, c: Con, x: &DVector<f64>) -> f64 {
        match c {
            Con::Eq(i) => self.prob.c_eq.column(i).dot(x) - self.prob.b_eq[i],
            Con::Ineq(i) => self.prob.c_ineq.column(i).dot(x) - self.prob.b_ineq[i],
        }
    }

    /// Primal direction `z` and dual direction `r` for adding normal `np`.
    fn directions(&self, active: &[Con], np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = np.len();
        let v = self.l.solve_lower_triangular(np).expect("non-singular factor");
        if active.is_empty() {
            let z = self.l.transpose().solve_upper_triangular(&v).expect("non-singular factor");
            return (z, DVector::zeros(0));
        }
        let mut nmat = DMatrix::zeros(n, active.len());
        for (k, &c) in active.iter().enumerate() {
            nmat.set_column(k, &self.normal(c));
        }
        let ln = self.l.solve_lower_triangular(&nmat).expect("non-singular factor");
        let qr = ln.qr();
        let q = qr.q();
        let r = qr.r();
        let qtv = q.transpose() * &v;
        let proj = &v - &q * &qtv;
        let z = self.l.transpose().solve_upper_triangular(&proj).expect("non-singular factor");
        let rd = r
            .solve_upper_triangular(&qtv)
            .unwrap_or_else(|| DVector::from_element(active.len(), f64::INFINITY));
        (z, rd)
    }
}

pub fn solve_qp(prob: &QpProblem) -> Result<QpSolution> {
    let n = prob.a.len();
    let chol = prob
        .g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("QP Hessian is not positive definite".into()))?;
    let ws = Workspace { prob, l: chol.l() };
    let mut x = -chol.solve(&prob.a);
    let mut active: Vec<Con> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let max_iter = 10 * (n + prob.b_eq.len() + prob.b_ineq.len()) + 100;

    let mut pending_eq: Vec<usize> = (0..prob.b_eq.len()).collect();
    pending_eq.reverse();
    loop {
        let p = if let Some(i) = pending_eq.pop() {
            Con::Eq(i)
        } else {
            let mut worst = None;
            let mut worst_s = -FEAS_TOL;
            for i in 0..prob.b_ineq.len() {
                if active.contains(&Con::Ineq(i)) {
                    continue;
                }
                let scale = 1.0 + prob.b_ineq[i].abs();
                let s = ws.slack(Con::Ineq(i), &x) / scale;
                if s < worst_s {
                    worst_s = s;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => Con::Ineq(i),
                None => break,
            }
        };
        let np = ws.normal(p);
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::QpInfeasible);
            }
            let (z, r) = ws.directions(&active, &np);
            // partial step: largest step keeping active inequality multipliers non-negative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, &c) in active.iter().enumerate() {
                if matches!(c, Con::Ineq(_)) && r[k] > ZERO {
                    let t = u[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let s_p = ws.slack(p, &x);
            let is_eq = matches!(p, Con::Eq(_));
            let full = active.len() >= n;
            let t2 = if !full && z.amax() > 1e-12 * (1.0 + x.amax()) && zn.abs() > ZERO {
                let t = -s_p / zn;
                if is_eq { t } else { t.max(0.0) }
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::QpInfeasible);
            }
            if t2.is_infinite() {
                for k in 0..active.len() {
                    u[k] -= t1 * r[k];
                }
                u_p += t1;
                let k = drop.expect("finite partial step has an index");
                active.remove(k);
                u.remove(k);
                continue;
            }
            let t = if is_eq { t2 } else { t1.min(t2) };
            x += &z * t;
            for k in 0..active.len() {
                u[k] -= t * r[k];
            }
            u_p += t;
            if is_eq || t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let k = drop.expect("finite partial step has an index");
            active.remove(k);
            u.remove(k);
        }
    }
    let objective = prob.objective(&x);
    Ok(QpSolution {
        x,
        objective,
        active: active
            .iter()
            .filter_map(|c| match c {
                Con::Ineq(i) => Some(*i),
                Con::Eq(_) => None,
            })
            .collect(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadprog_reference_problem() {
        // classic example: min -dᵀx + ½xᵀx s.t. Aᵀx ≥ b
        let g = DMatrix::identity(3, 3);
        let a = DVector::from_vec(vec![0.0, -5.0, 0.0]);
        let mut p = QpProblem::new(g, a);
        p.c_ineq = DMatrix::from_row_slice(3, 3, &[-4.0, 2.0, 0.0, -3.0, 1.0, -2.0, 0.0, 0.0, 1.0]);
        p.b_ineq = DVector::from_vec(vec![-8.0, 2.0, 0.0]);
        let s = solve_qp(&p).unwrap();
        let expected = [0.476190476190476, 1.047619047619048, 2.095238095238095];
        for i in 0..3 {
            assert!((s.x[i] - expected[i]).abs() < 1e-9, "{}", s.x);
        }
        assert!((s.objective + 2.380952380952381).abs() < 1e-9);
    }

    #[test]
    fn equality_constraint() {
        // min x² + y² s.t. x + y = 2
        let mut p = QpProblem::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2));
        p.c_eq = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        p.b_eq = DVector::from_vec(vec![2.0]);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // x ≥ 1 and -x ≥ 0
        let mut p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1));
        p.c_ineq = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        p.b_ineq = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(solve_qp(&p), Err(Error::QpInfeasible)));
    }
}
