use super::Setup;
use crate::csvio::fmt_sig;
use crate::error::{Error, Result};
use crate::localization::PfConfig;
use crate::pursuit::PurePursuit;
use crate::raceline::Raceline;
use crate::sim::{episode_rng, Action, Lidar, PoseSource, SimConfig, Simulator, Terminal};
use crate::track::TrackMap;

pub const PF_REPORT_HEADER: &str = "particles,steps,terminal,mean_error_m,max_error_m,max_weight_sum_error";
pub const PF_TIMING_HEADER: &str = "particles,updates,mean_update_ms";

/// Speed of the reference lap (m/s).
pub const REFERENCE_SPEED: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PfReportRow {
    pub particles: usize,
    pub steps: usize,
    pub terminal: Terminal,
    pub mean_error_m: f64,
    pub max_error_m: f64,
    /// Largest |Σw − 1| after any update.
    pub max_weight_sum_error: f64,
    pub mean_update_ms: f64,
}

/// Drives one lap of the centerline at constant speed with the true pose
/// while a filter of each size tracks the car alongside.
pub fn localisation_report(map: &TrackMap, setup: &Setup, counts: &[usize], seed: u64) -> Result<Vec<PfReportRow>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("particle counts must be positive".into()));
    }
    let reference = Raceline::from_centerline(&map.centerline, REFERENCE_SPEED)?;
    let sim_cfg = SimConfig {
        timeout_s: 2.0 * map.path.length() / REFERENCE_SPEED,
        ..setup.sim.clone()
    };
    counts
        .iter()
        .map(|&n| {
            let pf = PfConfig {
                n_particles: n,
                ..setup.pf.clone()
            };
            let mut pp = PurePursuit::new(reference.clone(), setup.params, setup.pursuit);
            let lidar = Lidar::new(&sim_cfg.lidar)?;
            let source = PoseSource::Filter(pf);
            let mut sim = Simulator::new(map, setup.params, &sim_cfg, lidar, &source, 0.0, episode_rng(seed, 0))?;
            let mut errors = Vec::new();
            let mut norm: f64 = 0.0;
            let terminal = loop {
                sim.sense()?;
                let truth = sim.true_pose();
                let est = sim.estimate().expect("filter active");
                errors.push(est.distance(&truth));
                norm = norm.max(sim.filter().expect("filter active").last_normalisation_error());
                let steer = pp.act(&truth, sim.state().v).steering;
                if let Some(t) = sim.advance(Action::new(REFERENCE_SPEED, steer))? {
                    break t;
                }
            };
            let (time, updates) = sim.filter_time();
            Ok(PfReportRow {
                particles: n,
                steps: errors.len(),
                terminal,
                mean_error_m: errors.iter().sum::<f64>() / errors.len() as f64,
                max_error_m: errors.iter().copied().fold(0.0, f64::max),
                max_weight_sum_error: norm,
                mean_update_ms: 1e3 * time.as_secs_f64() / updates.max(1) as f64,
            })
        })
        .collect()
}

/// Accuracy table and, separately, the wall-clock timing table.
pub fn pf_report_csv(rows: &[PfReportRow]) -> (String, String) {
    let mut data = String::from(PF_REPORT_HEADER);
    data.push('\n');
    let mut timing = String::from(PF_TIMING_HEADER);
    timing.push('\n');
    for r in rows {
        data.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.particles,
            r.steps,
            r.terminal,
            fmt_sig(r.mean_error_m, 9),
            fmt_sig(r.max_error_m, 9),
            fmt_sig(r.max_weight_sum_error, 3)
        ));
        timing.push_str(&format!("{},{},{}\n", r.particles, r.steps, fmt_sig(r.mean_update_ms, 4)));
    }
    (data, timing)
}
