//! Single-track vehicle model with slip, its kinematic low-speed fallback,
//! and the fixed-step integrator used by the simulator.
//!
//! The dynamic branch follows the CommonRoad single-track formulation with
//! linear cornering stiffness and longitudinal load transfer. Below
//! [`KINEMATIC_SPEED`] the 1/v terms are singular and the kinematic bicycle is
//! used instead.

use crate::config::KvConfig;
use crate::error::{Error, Result};

/// Speed below which the kinematic model replaces the dynamic one.
pub const KINEMATIC_SPEED: f64 = 0.1;

/// RK4 is stable on the negative real axis up to |z| ~ 2.78; substeps keep
/// the stiff 1/v decay terms below this bound.
const RK4_STABLE_Z: f64 = 2.0;
const MAX_SUBSTEPS: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DynamicState {
    pub x: f64,
    pub y: f64,
    pub delta: f64,
    pub v: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub beta: f64,
}

impl DynamicState {
    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta,
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.x,
            self.y,
            self.delta,
            self.v,
            self.theta,
            self.theta_dot,
            self.beta,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            delta: a[2],
            v: a[3],
            theta: a[4],
            theta_dot: a[5],
            beta: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Steering-angle velocity and longitudinal acceleration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlDerivatives {
    pub v_delta: f64,
    pub a: f64,
}

impl ControlDerivatives {
    pub fn new(v_delta: f64, a: f64) -> Self {
        Self { v_delta, a }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams {
    pub m: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub h_cg: f64,
    pub i_z: f64,
    pub c_sf: f64,
    pub c_sr: f64,
    pub mu: f64,
    pub g: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub delta_max: f64,
    pub v_delta_max: f64,
    /// Body width, used for collision and track-bound margins.
    pub width: f64,
    /// Proportional gain from steering error to steering rate (1/s).
    pub k_delta: f64,
    /// Proportional gain from speed error to acceleration (1/s).
    pub k_v: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 3.47,
            l_f: 0.162,
            l_r: 0.33 - 0.162,
            h_cg: 0.074,
            i_z: 0.047,
            c_sf: 5.0,
            c_sr: 5.0,
            mu: 1.0,
            g: 9.81,
            a_max: 9.5,
            v_max: 8.0,
            delta_max: 0.4,
            v_delta_max: 3.2,
            width: 0.31,
            k_delta: 100.0,
            k_v: 10.0,
        }
    }
}

const PARAM_KEYS: &[&str] = &[
    "m",
    "l_f",
    "l_r",
    "L",
    "h_cg",
    "I_z",
    "C_sf",
    "C_sr",
    "mu",
    "g",
    "a_max",
    "v_max",
    "delta_max",
    "v_delta_max",
    "width",
    "k_delta",
    "k_v",
];

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Applies the keys present in `cfg` on top of the defaults.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(PARAM_KEYS)?;
        let mut p = Self::default();
        cfg.read_f64("m", &mut p.m)?;
        cfg.read_f64("l_f", &mut p.l_f)?;
        let mut wheelbase = p.wheelbase();
        let has_lr = cfg.get("l_r").is_some();
        cfg.read_f64("l_r", &mut p.l_r)?;
        if let Some(_) = cfg.get("L") {
            cfg.read_f64("L", &mut wheelbase)?;
            if has_lr {
                if (p.l_f + p.l_r - wheelbase).abs() > 1e-12 {
                    return Err(Error::Config("L must equal l_f + l_r".into()));
                }
            } else {
                p.l_r = wheelbase - p.l_f;
            }
        } else if !has_lr && cfg.get("l_f").is_some() {
            p.l_r = wheelbase - p.l_f;
        }
        cfg.read_f64("h_cg", &mut p.h_cg)?;
        cfg.read_f64("I_z", &mut p.i_z)?;
        cfg.read_f64("C_sf", &mut p.c_sf)?;
        cfg.read_f64("C_sr", &mut p.c_sr)?;
        cfg.read_f64("mu", &mut p.mu)?;
        cfg.read_f64("g", &mut p.g)?;
        cfg.read_f64("a_max", &mut p.a_max)?;
        cfg.read_f64("v_max", &mut p.v_max)?;
        cfg.read_f64("delta_max", &mut p.delta_max)?;
        cfg.read_f64("v_delta_max", &mut p.v_delta_max)?;
        cfg.read_f64("width", &mut p.width)?;
        cfg.read_f64("k_delta", &mut p.k_delta)?;
        cfg.read_f64("k_v", &mut p.k_v)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut cfg = KvConfig::default();
        for (k, v) in [
            ("m", self.m),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("h_cg", self.h_cg),
            ("I_z", self.i_z),
            ("C_sf", self.c_sf),
            ("C_sr", self.c_sr),
            ("mu", self.mu),
            ("g", self.g),
            ("a_max", self.a_max),
            ("v_max", self.v_max),
            ("delta_max", self.delta_max),
            ("v_delta_max", self.v_delta_max),
            ("width", self.width),
            ("k_delta", self.k_delta),
            ("k_v", self.k_v),
        ] {
            cfg.insert(k, v);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("h_cg", self.h_cg),
            ("I_z", self.i_z),
            ("C_sf", self.c_sf),
            ("C_sr", self.c_sr),
            ("g", self.g),
            ("a_max", self.a_max),
            ("v_max", self.v_max),
            ("delta_max", self.delta_max),
            ("v_delta_max", self.v_delta_max),
            ("width", self.width),
            ("k_delta", self.k_delta),
            ("k_v", self.k_v),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("`{name}` must be positive, got {value}")));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 1.2) {
            return Err(Error::Config(format!("mu must be in (0, 1.2], got {}", self.mu)));
        }
        Ok(())
    }
}

/// Dynamic single-track derivatives. Fails for |v| below the kinematic threshold.
pub fn derivatives(
    state: &DynamicState,
    u: ControlDerivatives,
    p: &VehicleParams,
) -> Result<[f64; 7]> {
    if state.v.abs() < KINEMATIC_SPEED {
        return Err(Error::SingularSpeed(state.v));
    }
    Ok(dynamic_rhs(state, u, p))
}

fn dynamic_rhs(s: &DynamicState, u: ControlDerivatives, p: &VehicleParams) -> [f64; 7] {
    let DynamicState {
        delta,
        v,
        theta,
        theta_dot,
        beta,
        ..
    } = *s;
    let (lf, lr) = (p.l_f, p.l_r);
    // normal-load terms with longitudinal transfer
    let front = p.g * lr - u.a * p.h_cg;
    let rear = p.g * lf + u.a * p.h_cg;
    let csf_front = p.c_sf * front;
    let csr_rear = p.c_sr * rear;

    let yaw_acc = p.mu * p.m / (p.i_z * (lr + lf))
        * (lf * csf_front * delta + (lr * csr_rear - lf * csf_front) * beta
            - (lf * lf * csf_front + lr * lr * csr_rear) * theta_dot / v);

    let slip_rate = p.mu / (v * (lr + lf))
        * (csf_front * delta - (csr_rear + csf_front) * beta
            + (csr_rear * lr - csf_front * lf) * theta_dot / v)
        - theta_dot;

    [
        v * (theta + beta).cos(),
        v * (theta + beta).sin(),
        u.v_delta,
        u.a,
        theta_dot,
        yaw_acc,
        slip_rate,
    ]
}

/// Kinematic bicycle derivatives; valid at every speed.
///
/// The yaw-rate component is the time derivative of `v tan(delta) / L`, and
/// the slip angle is held (the integrator resets it to zero afterwards).
pub fn kinematic_derivatives(
    state: &DynamicState,
    u: ControlDerivatives,
    p: &VehicleParams,
) -> [f64; 7] {
    let l = p.wheelbase();
    let tan_d = state.delta.tan();
    let cos_d = state.delta.cos();
    [
        state.v * state.theta.cos(),
        state.v * state.theta.sin(),
        u.v_delta,
        u.a,
        state.v * tan_d / l,
        (u.a * tan_d + state.v * u.v_delta / (cos_d * cos_d)) / l,
        0.0,
    ]
}

fn rk4(y: [f64; 7], dt: f64, f: impl Fn(&DynamicState) -> [f64; 7]) -> [f64; 7] {
    let at = |base: &[f64; 7], k: &[f64; 7], h: f64| {
        DynamicState::from_array(std::array::from_fn(|i| base[i] + h * k[i]))
    };
    let k1 = f(&DynamicState::from_array(y));
    let k2 = f(&at(&y, &k1, 0.5 * dt));
    let k3 = f(&at(&y, &k2, 0.5 * dt));
    let k4 = f(&at(&y, &k3, dt));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Largest magnitude of the 1/v decay rates in the dynamic branch.
fn dynamic_stiffness(v: f64, p: &VehicleParams) -> f64 {
    let l = p.wheelbase();
    let loads = p.c_sf * (p.g * p.l_r + p.a_max * p.h_cg) + p.c_sr * (p.g * p.l_f + p.a_max * p.h_cg);
    let slip = p.mu * loads / (v.abs() * l);
    let yaw = p.mu * p.m / (p.i_z * l)
        * (p.l_f * p.l_f * p.c_sf * (p.g * p.l_r + p.a_max * p.h_cg)
            + p.l_r * p.l_r * p.c_sr * (p.g * p.l_f + p.a_max * p.h_cg))
        / v.abs();
    slip.max(yaw)
}

/// Advances the state by `dt` seconds under constant `u`.
///
/// The branch is chosen from the speed at the start of the step. At low
/// speed the dynamic branch is split into equal RK4 substeps so that the
/// stiff slip and yaw-rate decay stays inside the RK4 stability region; above
/// roughly 0.5 m/s a single RK4 step is taken.
pub fn step(
    state: &DynamicState,
    u: ControlDerivatives,
    p: &VehicleParams,
    dt: f64,
) -> Result<DynamicState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let u = ControlDerivatives {
        v_delta: u.v_delta.clamp(-p.v_delta_max, p.v_delta_max),
        a: u.a.clamp(-p.a_max, p.a_max),
    };
    let mut next = if state.v.abs() >= KINEMATIC_SPEED {
        let stiff = dynamic_stiffness(state.v, p);
        let n = ((dt * stiff / RK4_STABLE_Z).ceil() as usize).clamp(1, MAX_SUBSTEPS);
        let h = dt / n as f64;
        let mut y = state.to_array();
        for _ in 0..n {
            y = rk4(y, h, |s| dynamic_rhs(s, u, p));
        }
        DynamicState::from_array(y)
    } else {
        let y = rk4(state.to_array(), dt, |s| kinematic_derivatives(s, u, p));
        let mut s = DynamicState::from_array(y);
        s.beta = 0.0;
        s
    };
    next.delta = next.delta.clamp(-p.delta_max, p.delta_max);
    next.v = next.v.clamp(0.0, p.v_max);
    if next.v < KINEMATIC_SPEED {
        next.theta_dot = next.v * next.delta.tan() / p.wheelbase();
        next.beta = 0.0;
    }
    if !next.is_finite() {
        return Err(Error::IntegrationDiverged(Box::new(next)));
    }
    Ok(next)
}

/// Saturating proportional map from absolute speed/steering targets to the
/// rate inputs the model consumes.
pub fn speed_steer_to_derivative_controls(
    target_v: f64,
    target_delta: f64,
    state: &DynamicState,
    p: &VehicleParams,
) -> ControlDerivatives {
    let v_delta = (p.k_delta * (target_delta - state.delta)).clamp(-p.v_delta_max, p.v_delta_max);
    let a = (p.k_v * (target_v - state.v)).clamp(-p.a_max, p.a_max);
    ControlDerivatives { v_delta, a }
}
