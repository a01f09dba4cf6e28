//! Model predictive contouring control on a kinematic bicycle.
//!
//! The horizon is condensed onto the control sequence. Each iteration
//! linearises the rollout, the contouring/lag errors and the friction limit
//! about the current nominal sequence and solves the resulting convex QP for
//! a control correction.

use nalgebra::{DMatrix, DVector};

use crate::config::KvConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::qp::{solve_qp, QpProblem};
use crate::sim::{Action, Observation, Planner};
use crate::track::PathParameterization;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MpccState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Approximate centerline progress, unwrapped along the horizon.
    pub s: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MpccControl {
    pub delta: f64,
    pub v: f64,
    pub s_dot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpccWeights {
    pub q_c: f64,
    pub q_l: f64,
    pub q_s: f64,
    pub r_delta: f64,
}

impl Default for MpccWeights {
    fn default() -> Self {
        Self {
            q_c: 0.5,
            q_l: 10.0,
            q_s: 1.0,
            r_delta: 0.5,
        }
    }
}

impl MpccWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.q_c, self.q_l, self.q_s, self.r_delta];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("weights must be non-negative: {self:?}")));
        }
        if self.q_l < self.q_c {
            return Err(Error::Config("lag weight must be at least the contouring weight".into()));
        }
        Ok(())
    }
}

/// Control boxes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlBounds {
    pub delta: (f64, f64),
    pub v: (f64, f64),
    pub s_dot: (f64, f64),
}

impl ControlBounds {
    pub fn from_params(p: &VehicleParams) -> Self {
        Self {
            delta: (-p.delta_max, p.delta_max),
            v: (0.0, p.v_max),
            s_dot: (0.0, p.v_max),
        }
    }

    fn lo(&self, j: usize) -> f64 {
        [self.delta.0, self.v.0, self.s_dot.0][j]
    }

    fn hi(&self, j: usize) -> f64 {
        [self.delta.1, self.v.1, self.s_dot.1][j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpccConfig {
    pub weights: MpccWeights,
    pub horizon: usize,
    pub dt: f64,
    /// Clearance kept from the track edge by the car's centre (m).
    pub margin: f64,
    /// Linearisations per solve, doubled while no iterate is feasible.
    pub max_iter: usize,
    pub friction_slack: f64,
    /// Fraction of the friction limit the plan may use.
    pub friction_use: f64,
    /// Speed change allowed per horizon step, `None` to disable.
    pub max_dv: Option<f64>,
    /// Penalty on the size of each correction.
    pub trust: f64,
    pub bounds: Option<ControlBounds>,
}

impl Default for MpccConfig {
    fn default() -> Self {
        Self {
            weights: MpccWeights::default(),
            horizon: 15,
            dt: 0.1,
            margin: 0.3,
            max_iter: 3,
            friction_slack: 1e-6,
            friction_use: 0.8,
            max_dv: Some(0.95),
            trust: 1e-3,
            bounds: None,
        }
    }
}

impl MpccConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(&[
            "q_c", "q_l", "q_s", "r_delta", "horizon", "dt", "margin", "max_iter", "max_dv", "trust",
            "friction_use",
        ])?;
        let mut c = Self::default();
        cfg.read_f64("q_c", &mut c.weights.q_c)?;
        cfg.read_f64("q_l", &mut c.weights.q_l)?;
        cfg.read_f64("q_s", &mut c.weights.q_s)?;
        cfg.read_f64("r_delta", &mut c.weights.r_delta)?;
        cfg.read_usize("horizon", &mut c.horizon)?;
        cfg.read_f64("dt", &mut c.dt)?;
        cfg.read_f64("margin", &mut c.margin)?;
        cfg.read_usize("max_iter", &mut c.max_iter)?;
        cfg.read_f64("trust", &mut c.trust)?;
        cfg.read_f64("friction_use", &mut c.friction_use)?;
        if let Some(v) = cfg.get("max_dv") {
            c.max_dv = if v == "none" {
                None
            } else {
                let mut dv = 0.0;
                cfg.read_f64("max_dv", &mut dv)?;
                Some(dv)
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.horizon == 0 || self.max_iter == 0 || !(self.dt > 0.0) || !(self.margin >= 0.0) || !(self.trust > 0.0)
            || !(self.friction_use > 0.0 && self.friction_use <= 1.0)
        {
            return Err(Error::Config(format!("invalid MPCC settings {self:?}")));
        }
        Ok(())
    }
}

/// Contouring and lag errors against the path point at the state's `s`.
pub fn contouring_lag_errors(state: &MpccState, path: &PathParameterization) -> (f64, f64) {
    let pt = path.point(state.s);
    let (sin, cos) = pt.phi.sin_cos();
    let dx = state.x - pt.x;
    let dy = state.y - pt.y;
    (sin * dx - cos * dy, -cos * dx - sin * dy)
}

/// Lateral force strictly below the friction limit; mass cancels.
pub fn friction_ok(v: f64, delta: f64, p: &VehicleParams) -> bool {
    v * v * delta.abs().tan() / p.wheelbase() < p.mu * p.g
}

/// Kinematic bicycle step.
pub fn predict(state: &MpccState, u: &MpccControl, wheelbase: f64, dt: f64) -> MpccState {
    let (sin, cos) = state.theta.sin_cos();
    MpccState {
        x: state.x + u.v * cos * dt,
        y: state.y + u.v * sin * dt,
        theta: state.theta + u.v * u.delta.tan() / wheelbase * dt,
        s: state.s + u.s_dot * dt,
    }
}

pub fn rollout(start: &MpccState, controls: &[MpccControl], wheelbase: f64, dt: f64) -> Vec<MpccState> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*start);
    for u in controls {
        let next = predict(out.last().expect("non-empty"), u, wheelbase, dt);
        out.push(next);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpccSolution {
    pub controls: Vec<MpccControl>,
    /// `horizon + 1` states starting at the pinned initial state.
    pub states: Vec<MpccState>,
    pub objective: f64,
    /// Largest violation of the contouring bounds and friction limit.
    pub violation: f64,
    pub iterations: usize,
}

impl MpccSolution {
    pub fn first(&self) -> MpccControl {
        self.controls[0]
    }
}

/// Outcome of one planning query.
#[derive(Clone, Debug, PartialEq)]
pub enum MpccOutcome {
    Solved(MpccSolution),
    /// The QP had no feasible point; carries the emergency action.
    Fallback(Action),
}

const FEASIBLE_TOL: f64 = 1e-4;

pub struct Mpcc {
    path: PathParameterization,
    params: VehicleParams,
    cfg: MpccConfig,
    bounds: ControlBounds,
    warm: Option<Vec<MpccControl>>,
    hint: Option<usize>,
}

impl Mpcc {
    pub fn new(path: PathParameterization, params: VehicleParams, cfg: MpccConfig) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let bounds = cfg.bounds.unwrap_or_else(|| ControlBounds::from_params(&params));
        Ok(Self {
            path,
            params,
            cfg,
            bounds,
            warm: None,
            hint: None,
        })
    }

    pub fn config(&self) -> &MpccConfig {
        &self.cfg
    }

    pub fn path(&self) -> &PathParameterization {
        &self.path
    }

    /// Control sequence the next solve starts from.
    pub fn warm_start(&self) -> Option<&[MpccControl]> {
        self.warm.as_deref()
    }

    pub fn initial_state(&mut self, pose: &Pose2) -> MpccState {
        let proj = match self.hint {
            Some(h) => self.path.project_near(pose.x, pose.y, h, 40),
            None => self.path.project(pose.x, pose.y),
        };
        self.hint = Some(proj.segment);
        MpccState {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            s: proj.s,
        }
    }

    /// Contouring bounds `(lo, hi)` at progress `s`.
    pub fn contouring_bounds(&self, s: f64) -> (f64, f64) {
        let (wl, wr) = self.path.widths(s);
        (-(wl - self.cfg.margin), wr - self.cfg.margin)
    }

    /// Nonlinear objective of a horizon.
    pub fn objective(&self, states: &[MpccState], controls: &[MpccControl]) -> f64 {
        let w = &self.cfg.weights;
        controls
            .iter()
            .zip(&states[1..])
            .map(|(u, st)| {
                let (ec, el) = contouring_lag_errors(st, &self.path);
                w.q_c * ec * ec + w.q_l * el * el - w.q_s * u.s_dot * self.cfg.dt + w.r_delta * u.delta * u.delta
            })
            .sum()
    }

    fn lateral_limit(&self) -> f64 {
        self.cfg.friction_use * self.params.mu * self.params.g - self.cfg.friction_slack
    }

    /// Largest violation of the friction limit and of the contouring bounds,
    /// the latter widened to admit the initial state's own error.
    pub fn violation(&self, states: &[MpccState], controls: &[MpccControl]) -> f64 {
        let limit = self.lateral_limit();
        let (ec0, _) = contouring_lag_errors(&states[0], &self.path);
        let mut worst: f64 = 0.0;
        for (u, st) in controls.iter().zip(&states[1..]) {
            let (ec, _) = contouring_lag_errors(st, &self.path);
            let (lo, hi) = self.contouring_bounds(st.s);
            let (lo, hi) = (lo.min(ec0), hi.max(ec0));
            worst = worst.max(lo - ec).max(ec - hi);
            let lat = u.v * u.v * u.delta.abs().tan() / self.params.wheelbase();
            worst = worst.max(lat - limit);
        }
        worst
    }

    /// Nominal controls that follow the centerline at the current speed.
    pub fn default_guess(&self, start: &MpccState, speed: f64) -> Vec<MpccControl> {
        let v = speed.clamp(self.bounds.v.0.max(0.5), self.bounds.v.1);
        let l = self.params.wheelbase();
        (0..self.cfg.horizon)
            .map(|k| {
                let kappa = self.path.curvature(start.s + v * self.cfg.dt * k as f64);
                MpccControl {
                    delta: (l * kappa).atan().clamp(self.bounds.delta.0, self.bounds.delta.1),
                    v,
                    s_dot: v.clamp(self.bounds.s_dot.0, self.bounds.s_dot.1),
                }
            })
            .collect()
    }

    /// Clamps a guess into the boxes and the friction limit.
    fn repair(&self, controls: &mut [MpccControl]) {
        let limit = self.lateral_limit() * self.params.wheelbase();
        for u in controls.iter_mut() {
            u.delta = u.delta.clamp(self.bounds.delta.0, self.bounds.delta.1);
            u.v = u.v.clamp(self.bounds.v.0, self.bounds.v.1);
            u.s_dot = u.s_dot.clamp(self.bounds.s_dot.0, self.bounds.s_dot.1);
            let t = u.delta.abs().tan();
            if t > 0.0 && u.v * u.v * t >= limit {
                u.v = ((limit / t).sqrt() * (1.0 - 1e-12)).max(self.bounds.v.0);
            }
        }
    }

    /// Builds and solves the QP for a correction to `nominal`.
    fn correction(&self, speed: f64, states: &[MpccState], nominal: &[MpccControl]) -> Result<Vec<MpccControl>> {
        let n = nominal.len();
        let nv = 3 * n;
        let dt = self.cfg.dt;
        let l = self.params.wheelbase();
        let w = self.cfg.weights;

        // sens[k] maps the correction onto the state deviation at step k
        let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
        sens.push(DMatrix::zeros(4, nv));
        for k in 0..n {
            let st = &states[k];
            let u = &nominal[k];
            let (sin, cos) = st.theta.sin_cos();
            let prev = &sens[k];
            let mut next = prev.clone();
            // A = I + d(x, y)/dtheta
            for c in 0..nv {
                let th = prev[(2, c)];
                next[(0, c)] += -u.v * sin * dt * th;
                next[(1, c)] += u.v * cos * dt * th;
            }
            let cd = u.delta.cos();
            next[(0, 3 * k + 1)] += cos * dt;
            next[(1, 3 * k + 1)] += sin * dt;
            next[(2, 3 * k)] += u.v * dt / (l * cd * cd);
            next[(2, 3 * k + 1)] += u.delta.tan() * dt / l;
            next[(3, 3 * k + 2)] += dt;
            sens.push(next);
        }

        // never demand more than the initial state already satisfies
        let (ec0, _) = contouring_lag_errors(&states[0], &self.path);

        let mut g = DMatrix::<f64>::identity(nv, nv) * (2.0 * self.cfg.trust);
        let mut a = DVector::<f64>::zeros(nv);
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();

        for k in 1..=n {
            let st = &states[k];
            let pt = self.path.point(st.s);
            let (sin, cos) = pt.phi.sin_cos();
            let dx = st.x - pt.x;
            let dy = st.y - pt.y;
            let ec = sin * dx - cos * dy;
            let el = -cos * dx - sin * dy;
            let grad_c = [sin, -cos, 0.0, -pt.kappa * el];
            let grad_l = [-cos, -sin, 0.0, pt.kappa * ec + 1.0];
            let s = &sens[k];
            let jc = DVector::from_fn(nv, |c, _| (0..4).map(|r| grad_c[r] * s[(r, c)]).sum::<f64>());
            let jl = DVector::from_fn(nv, |c, _| (0..4).map(|r| grad_l[r] * s[(r, c)]).sum::<f64>());
            g.ger(2.0 * w.q_c, &jc, &jc, 1.0);
            g.ger(2.0 * w.q_l, &jl, &jl, 1.0);
            a.axpy(2.0 * w.q_c * ec, &jc, 1.0);
            a.axpy(2.0 * w.q_l * el, &jl, 1.0);

            let (lo, hi) = self.contouring_bounds(st.s);
            let (lo, hi) = (lo.min(ec0), hi.max(ec0));
            rows.push((jc.clone(), lo - ec));
            rows.push((-jc, ec - hi));
        }

        let limit = self.lateral_limit() * l;
        for (k, u) in nominal.iter().enumerate() {
            let (id, iv, is) = (3 * k, 3 * k + 1, 3 * k + 2);
            g[(id, id)] += 2.0 * w.r_delta;
            a[id] += 2.0 * w.r_delta * u.delta;
            a[is] -= w.q_s * dt;

            for (j, idx) in [(0, id), (1, iv), (2, is)] {
                let cur = [u.delta, u.v, u.s_dot][j];
                let mut e = DVector::zeros(nv);
                e[idx] = 1.0;
                rows.push((e.clone(), self.bounds.lo(j) - cur));
                rows.push((-e, cur - self.bounds.hi(j)));
            }

            // |delta| <= atan(limit / v^2), linearised in v
            let v0 = u.v.max(1e-3);
            let h = (limit / (v0 * v0)).atan();
            let c = limit / (v0 * v0);
            let dh = -2.0 * c / v0 / (1.0 + c * c);
            for sign in [1.0, -1.0] {
                let mut e = DVector::zeros(nv);
                e[id] = -sign;
                e[iv] = dh;
                rows.push((e, sign * u.delta - h - dh * (u.v - v0)));
            }

            if let Some(dv) = self.cfg.max_dv {
                let prev_v = if k == 0 { speed } else { nominal[k - 1].v };
                let mut e = DVector::zeros(nv);
                e[iv] = 1.0;
                if k > 0 {
                    e[iv - 3] = -1.0;
                }
                let diff = u.v - prev_v;
                rows.push((e.clone(), -dv - diff));
                rows.push((-e, diff - dv));
            }
        }

        let mut c_ineq = DMatrix::zeros(nv, rows.len());
        let mut b_ineq = DVector::zeros(rows.len());
        for (i, (e, b)) in rows.into_iter().enumerate() {
            c_ineq.set_column(i, &e);
            b_ineq[i] = b;
        }
        let mut prob = QpProblem::new(g, a);
        prob.c_ineq = c_ineq;
        prob.b_ineq = b_ineq;
        let sol = solve_qp(&prob)?;
        Ok(nominal
            .iter()
            .enumerate()
            .map(|(k, u)| MpccControl {
                delta: u.delta + sol.x[3 * k],
                v: u.v + sol.x[3 * k + 1],
                s_dot: u.s_dot + sol.x[3 * k + 2],
            })
            .collect())
    }

    /// Iterated linearisation from an explicit nominal sequence.
    pub fn solve_with_guess(&self, start: &MpccState, speed: f64, guess: &[MpccControl]) -> Result<MpccSolution> {
        if guess.len() != self.cfg.horizon {
            return Err(Error::Config(format!(
                "guess has {} controls, horizon is {}",
                guess.len(),
                self.cfg.horizon
            )));
        }
        let l = self.params.wheelbase();
        let dt = self.cfg.dt;
        let mut nominal = guess.to_vec();
        self.repair(&mut nominal);
        let mut best: Option<MpccSolution> = None;
        for it in 1..=2 * self.cfg.max_iter {
            if it > self.cfg.max_iter && best.as_ref().is_some_and(|b| b.violation <= FEASIBLE_TOL) {
                break;
            }
            let states = rollout(start, &nominal, l, dt);
            let mut next = self.correction(speed, &states, &nominal)?;
            self.repair(&mut next);
            let states = rollout(start, &next, l, dt);
            let cand = MpccSolution {
                objective: self.objective(&states, &next),
                violation: self.violation(&states, &next),
                controls: next.clone(),
                states,
                iterations: it,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let cf = cand.violation <= FEASIBLE_TOL;
                    let bf = b.violation <= FEASIBLE_TOL;
                    match (cf, bf) {
                        (true, false) => true,
                        (false, true) => false,
                        (true, true) => cand.objective < b.objective,
                        (false, false) => cand.violation < b.violation,
                    }
                }
            };
            let step = next
                .iter()
                .zip(&nominal)
                .map(|(a, b)| (a.delta - b.delta).abs().max((a.v - b.v).abs()).max((a.s_dot - b.s_dot).abs()))
                .fold(0.0, f64::max);
            if better {
                best = Some(cand);
            }
            nominal = next;
            if step < 1e-9 {
                break;
            }
        }
        Ok(best.expect("at least one iteration"))
    }

    /// Solves from `pose` with the shifted previous solution as warm start.
    pub fn solve(&mut self, pose: &Pose2, speed: f64) -> Result<MpccOutcome> {
        let start = self.initial_state(pose);
        let guess = match self.warm.take() {
            Some(mut prev) => {
                prev.rotate_left(1);
                let last = prev[prev.len() - 2];
                *prev.last_mut().expect("non-empty") = last;
                prev
            }
            None => self.default_guess(&start, speed),
        };
        match self.solve_with_guess(&start, speed, &guess) {
            Ok(sol) => {
                self.warm = Some(sol.controls.clone());
                Ok(MpccOutcome::Solved(sol))
            }
            Err(Error::QpInfeasible) => {
                self.warm = None;
                Ok(MpccOutcome::Fallback(Action {
                    speed: 0.4 * speed,
                    steering: 0.0,
                    flagged: true,
                }))
            }
            Err(e) => Err(e),
        }
    }
}

impl Planner for Mpcc {
    fn reset(&mut self) {
        self.warm = None;
        self.hint = None;
    }

    fn plan(&mut self, obs: &Observation<'_>) -> Result<Action> {
        Ok(match self.solve(&obs.pose, obs.speed)? {
            MpccOutcome::Solved(sol) => {
                let u = sol.first();
                Action::new(u.v, u.delta)
            }
            MpccOutcome::Fallback(a) => a,
        })
    }
}
