use nalgebra::DMatrix;

use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::qp::{solve_box_qp, BoxQpOptions};
use crate::track::CenterlineTrack;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinCurvConfig {
    /// Extra clearance kept from the track edge beyond the vehicle half-width (m).
    pub margin: f64,
    pub max_outer: usize,
    /// Outer loop stops when no offset moves more than this (m).
    pub alpha_tol: f64,
    pub qp: BoxQpOptions,
}

impl Default for MinCurvConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            max_outer: 10,
            alpha_tol: 1e-3,
            qp: BoxQpOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinCurvResult {
    /// Offsets along the right-hand normal of each centerline point (m).
    pub alpha: Vec<f64>,
    pub alpha_min: Vec<f64>,
    pub alpha_max: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub centerline_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Heading change at each vertex over the mean length of its two segments.
pub fn vertex_curvature(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let mut heading = Vec::with_capacity(n);
    let mut len = Vec::with_capacity(n);
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        heading.push((b[1] - a[1]).atan2(b[0] - a[0]));
        len.push((b[0] - a[0]).hypot(b[1] - a[1]));
    }
    (0..n)
        .map(|i| {
            let p = (i + n - 1) % n;
            wrap_angle(heading[i] - heading[p]) / (0.5 * (len[p] + len[i]))
        })
        .collect()
}

/// Σ κ_i² over the vertices of a closed path.
pub fn curvature_objective(points: &[[f64; 2]]) -> f64 {
    vertex_curvature(points).iter().map(|k| k * k).sum()
}

/// Unit right-hand normals from centered tangents.
pub fn right_normals(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[(i + n - 1) % n];
            let b = points[(i + 1) % n];
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            let l = tx.hypot(ty);
            [ty / l, -tx / l]
        })
        .collect()
}

fn offset_points(center: &[[f64; 2]], normals: &[[f64; 2]], alpha: &[f64]) -> Vec<[f64; 2]> {
    center
        .iter()
        .zip(normals)
        .zip(alpha)
        .map(|((c, nv), a)| [c[0] + a * nv[0], c[1] + a * nv[1]])
        .collect()
}

/// Cyclic tridiagonal Jacobian of the vertex curvature w.r.t. the offsets:
/// row i holds ∂κ_i/∂α_{i-1}, ∂κ_i/∂α_i, ∂κ_i/∂α_{i+1}.
pub fn curvature_jacobian(points: &[[f64; 2]], normals: &[[f64; 2]]) -> Vec<[f64; 3]> {
    let n = points.len();
    let seg: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            [b[0] - a[0], b[1] - a[1]]
        })
        .collect();
    let len: Vec<f64> = seg.iter().map(|d| d[0].hypot(d[1])).collect();
    // gradient of a segment heading w.r.t. its end point, and of its length
    let gh = |d: [f64; 2], l: f64| [-d[1] / (l * l), d[0] / (l * l)];
    let gl = |d: [f64; 2], l: f64| [d[0] / l, d[1] / l];
    let dotn = |g: [f64; 2], nv: [f64; 2]| g[0] * nv[0] + g[1] * nv[1];
    (0..n)
        .map(|i| {
            let p = (i + n - 1) % n;
            let q = (i + 1) % n;
            let (d0, l0) = (seg[p], len[p]);
            let (d1, l1) = (seg[i], len[i]);
            let m = 0.5 * (l0 + l1);
            let delta = {
                let h0 = d0[1].atan2(d0[0]);
                let h1 = d1[1].atan2(d1[0]);
                wrap_angle(h1 - h0)
            };
            let (g0, g1) = (gh(d0, l0), gh(d1, l1));
            let (u0, u1) = (gl(d0, l0), gl(d1, l1));
            // ∂Δ/∂p and ∂m/∂p for p_{i-1}, p_i, p_{i+1}
            let dd = [g0, [-g0[0] - g1[0], -g0[1] - g1[1]], g1];
            let dm = [
                [-0.5 * u0[0], -0.5 * u0[1]],
                [0.5 * (u0[0] - u1[0]), 0.5 * (u0[1] - u1[1])],
                [0.5 * u1[0], 0.5 * u1[1]],
            ];
            let idx = [p, i, q];
            let mut row = [0.0; 3];
            for k in 0..3 {
                let nv = normals[idx[k]];
                row[k] = (dotn(dd[k], nv) * m - delta * dotn(dm[k], nv)) / (m * m);
            }
            row
        })
        .collect()
}

/// Dense `2 JᵀJ`.
fn normal_matrix(jac: &[[f64; 3]]) -> DMatrix<f64> {
    let n = jac.len();
    let mut h = DMatrix::zeros(n, n);
    for (i, row) in jac.iter().enumerate() {
        let idx = [(i + n - 1) % n, i, (i + 1) % n];
        for a in 0..3 {
            for b in 0..3 {
                h[(idx[a], idx[b])] += 2.0 * row[a] * row[b];
            }
        }
    }
    h
}

fn jac_mul(jac: &[[f64; 3]], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let r = jac[i];
        out[i] = r[0] * x[(i + n - 1) % n] + r[1] * x[i] + r[2] * x[(i + 1) % n];
    }
}

fn jac_t_mul(jac: &[[f64; 3]], r: &[f64], out: &mut [f64]) {
    let n = r.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        let row = jac[i];
        out[(i + n - 1) % n] += row[0] * r[i];
        out[i] += row[1] * r[i];
        out[(i + 1) % n] += row[2] * r[i];
    }
}

/// Lateral offset bounds along the right-hand normal.
pub fn offset_bounds(track: &CenterlineTrack, half_width: f64, margin: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::with_capacity(track.len());
    let mut hi = Vec::with_capacity(track.len());
    for i in 0..track.len() {
        let l = -(track.w_left()[i] - half_width - margin);
        let h = track.w_right()[i] - half_width - margin;
        if l > h {
            return Err(Error::InfeasibleBounds(i));
        }
        lo.push(l);
        hi.push(h);
    }
    Ok((lo, hi))
}

/// Minimum-curvature offsets by sequential linearisation of the curvature.
///
/// Each outer iteration linearises κ(α) about the current offsets and solves
/// the box-constrained least-squares problem `min ‖κ₀ + J(α − α₀)‖²`. The
/// iterate with the lowest true objective is returned.
pub fn minimum_curvature(track: &CenterlineTrack, params: &VehicleParams, cfg: &MinCurvConfig) -> Result<MinCurvResult> {
    let center = track.points();
    let n = center.len();
    let (lo, hi) = offset_bounds(track, params.half_width(), cfg.margin)?;
    let normals = right_normals(center);
    let centerline_objective = curvature_objective(center);
    let mut alpha = vec![0.0; n];
    let mut best = (centerline_objective, alpha.clone());
    let mut converged = false;
    let mut iterations = 0;
    let mut jx = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..cfg.max_outer {
        iterations += 1;
        let pts = offset_points(center, &normals, &alpha);
        let kappa = vertex_curvature(&pts);
        let jac = curvature_jacobian(&pts, &normals);
        // residual offset b = κ₀ − Jα₀ so that r(α) = b + Jα
        jac_mul(&jac, &alpha, &mut jx);
        let b: Vec<f64> = kappa.iter().zip(&jx).map(|(k, j)| k - j).collect();
        let mut g = vec![0.0; n];
        jac_t_mul(&jac, &b, &mut g);
        g.iter_mut().for_each(|v| *v *= 2.0);
        let hess = normal_matrix(&jac);
        let sol = solve_box_qp(&hess, &g, &lo, &hi, &alpha, &cfg.qp);
        let step = sol
            .x
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = sol.x;
        tmp.copy_from_slice(&alpha);
        let obj = curvature_objective(&offset_points(center, &normals, &alpha));
        if obj < best.0 {
            best = (obj, tmp.clone());
        }
        if step < cfg.alpha_tol {
            converged = true;
            break;
        }
    }
    let (objective, alpha) = best;
    Ok(MinCurvResult {
        points: offset_points(center, &normals, &alpha),
        alpha,
        alpha_min: lo,
        alpha_max: hi,
        centerline_objective,
        objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::shapes;

    #[test]
    fn jacobian_matches_finite_differences() {
        let track = shapes::ellipse(6.0, 3.0, 0.7, 1.0).unwrap();
        let center = track.points();
        let normals = right_normals(center);
        let n = center.len();
        let alpha: Vec<f64> = (0..n).map(|i| 0.2 * (i as f64 * 0.7).sin()).collect();
        let pts = offset_points(center, &normals, &alpha);
        let jac = curvature_jacobian(&pts, &normals);
        let h = 1e-6;
        for j in [0, 5, n - 1] {
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[j] += h;
            am[j] -= h;
            let kp = vertex_curvature(&offset_points(center, &normals, &ap));
            let km = vertex_curvature(&offset_points(center, &normals, &am));
            for (i, off) in [((j + n - 1) % n, 2), (j, 1), ((j + 1) % n, 0)] {
                let fd = (kp[i] - km[i]) / (2.0 * h);
                assert!((fd - jac[i][off]).abs() < 1e-5 * (1.0 + fd.abs()), "i={i} j={j} {fd} {}", jac[i][off]);
            }
        }
    }

    #[test]
    fn straights_stay_straight() {
        let track = shapes::rectangle(40.0, 20.0, 1.0, 1.0).unwrap();
        let res = minimum_curvature(&track, &VehicleParams::default(), &MinCurvConfig::default()).unwrap();
        let kappa = vertex_curvature(&res.points);
        // middle of the long bottom straight
        for i in 15..25 {
            assert!(kappa[i].abs() < 1e-3, "{i}: {}", kappa[i]);
        }
        assert!(res.objective < res.centerline_objective);
    }
}
