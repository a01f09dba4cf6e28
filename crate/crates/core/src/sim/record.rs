use std::fmt;
use std::path::Path;

use super::Action;
use crate::csvio::fmt_sig;
use crate::error::{Error, Result};
use crate::geometry::Pose2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    LapComplete,
    Crash,
    Timeout,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::LapComplete => "lap_complete",
            Terminal::Crash => "crash",
            Terminal::Timeout => "timeout",
        }
    }
}

impl std::str::FromStr for Terminal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Terminal::LapComplete, Terminal::Crash, Terminal::Timeout]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "terminal",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One control step: the state at the planner query and the action taken.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub pose: Pose2,
    pub estimate: Option<Pose2>,
    pub action: Action,
    pub v: f64,
    pub delta: f64,
    pub beta: f64,
    /// Unwrapped progress since the start (m).
    pub progress: f64,
    pub reward: f64,
    pub scan: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub start_s: f64,
    pub track_length: f64,
    pub control_hz: u32,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
    pub lap_time: Option<f64>,
    pub end_time: f64,
    pub end_pose: Pose2,
    pub progress: f64,
}

pub const RECORD_HEADER: &str = "t_s,x_m,y_m,theta_rad,est_x_m,est_y_m,est_theta_rad,\
speed_cmd_mps,steer_cmd_rad,v_mps,delta_rad,beta_rad,progress_m,reward,flag";

impl EpisodeRecord {
    pub fn completed(&self) -> bool {
        self.terminal == Terminal::LapComplete
    }

    /// Share of the lap covered before termination, in [0, 1].
    pub fn progress_fraction(&self) -> f64 {
        (self.progress / self.track_length).clamp(0.0, 1.0)
    }

    pub fn flagged_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.action.flagged).count()
    }

    /// Mean position error of the pose estimate, if a filter was active.
    pub fn mean_localisation_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self
            .steps
            .iter()
            .filter_map(|s| s.estimate.map(|e| e.distance(&s.pose)))
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "# terminal={} lap_time_s={} progress_pct={:.3} start_s={:.3}",
            self.terminal,
            self.lap_time.map(|t| format!("{t:.2}")).unwrap_or_default(),
            100.0 * self.progress_fraction(),
            self.start_s
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.steps.len() + 2));
        out.push_str(RECORD_HEADER);
        out.push('\n');
        for s in &self.steps {
            let (ex, ey, et) = match s.estimate {
                Some(e) => (fmt_sig(e.x, 9), fmt_sig(e.y, 9), fmt_sig(e.theta, 9)),
                None => (String::new(), String::new(), String::new()),
            };
            let row = [
                fmt_sig(s.t, 9),
                fmt_sig(s.pose.x, 9),
                fmt_sig(s.pose.y, 9),
                fmt_sig(s.pose.theta, 9),
                ex,
                ey,
                et,
                fmt_sig(s.action.speed, 9),
                fmt_sig(s.action.steering, 9),
                fmt_sig(s.v, 9),
                fmt_sig(s.delta, 9),
                fmt_sig(s.beta, 9),
                fmt_sig(s.progress, 9),
                fmt_sig(s.reward, 9),
                (s.action.flagged as u8).to_string(),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Localisation log: true pose, estimate and position error per step.
    pub fn localisation_csv(&self) -> String {
        let mut out = String::from("t_s,true_x_m,true_y_m,true_theta_rad,est_x_m,est_y_m,est_theta_rad,error_m\n");
        for s in &self.steps {
            if let Some(e) = s.estimate {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    fmt_sig(s.t, 9),
                    fmt_sig(s.pose.x, 9),
                    fmt_sig(s.pose.y, 9),
                    fmt_sig(s.pose.theta, 9),
                    fmt_sig(e.x, 9),
                    fmt_sig(e.y, 9),
                    fmt_sig(e.theta, 9),
                    fmt_sig(e.distance(&s.pose), 9)
                ));
            }
        }
        out
    }
}
