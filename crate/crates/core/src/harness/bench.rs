use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{par_map, BenchmarkSummary, LapRow, Manifest, PlannerKind, RunConfig, Setup};
use crate::error::{Error, Result};
use crate::ftg::FollowTheGap;
use crate::mpcc::Mpcc;
use crate::pursuit::PurePursuit;
use crate::raceline::{plan_raceline, Raceline};
use crate::rl::Agent;
use crate::sim::{episode_rng, run_episode, EpisodeRecord, Planner, PoseSource, SimConfig};
use crate::track::TrackMap;

/// Episode timeout as a multiple of the pure-pursuit reference lap.
pub const TIMEOUT_FACTOR: f64 = 2.5;
const REFERENCE_TIMEOUT_S: f64 = 300.0;

/// Start positions for `n` laps. They depend on the seed and the track
/// length only, so every planner starts from the same places.
pub fn start_positions(seed: u64, n: usize, length: f64) -> Vec<f64> {
    // stream 0 is reserved here; episodes draw from streams 1 and up
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..length)).collect()
}

pub fn build_raceline(map: &TrackMap, setup: &Setup) -> Result<Raceline> {
    Ok(plan_raceline(&map.centerline, &setup.params, &setup.mincurv)?.raceline)
}

/// Lap time of pure pursuit from the start line with the true pose.
pub fn reference_lap_time(map: &TrackMap, setup: &Setup, raceline: &Raceline) -> Result<Option<f64>> {
    let mut pp = PurePursuit::new(raceline.clone(), setup.params, setup.pursuit);
    let sim = SimConfig {
        timeout_s: REFERENCE_TIMEOUT_S,
        ..setup.sim.clone()
    };
    let r = run_episode(&mut pp, map, &setup.params, &sim, &PoseSource::True, 0.0, episode_rng(sim.seed, 0))?;
    Ok(r.lap_time)
}

enum Recipe {
    Pp(Raceline),
    Mpcc,
    Ftg,
    E2e(Agent),
}

impl Recipe {
    fn build(&self, map: &TrackMap, setup: &Setup) -> Result<Box<dyn Planner>> {
        Ok(match self {
            Recipe::Pp(rl) => Box::new(PurePursuit::new(rl.clone(), setup.params, setup.pursuit)),
            Recipe::Mpcc => Box::new(Mpcc::new(map.path.clone(), setup.params, setup.mpcc.clone())?),
            Recipe::Ftg => Box::new(FollowTheGap::new(setup.ftg, &setup.params)?),
            Recipe::E2e(agent) => Box::new(agent.clone()),
        })
    }
}

/// A finished batch of laps.
#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub config: RunConfig,
    pub summary: BenchmarkSummary,
    pub records: Vec<EpisodeRecord>,
    pub timeout_s: f64,
    /// Pure-pursuit lap the timeout derives from, if it completed.
    pub reference_lap_s: Option<f64>,
}

impl BenchmarkRun {
    /// Writes config, detail, summary and per-lap records under the run's
    /// stem, then reloads the summary to check it against the detail rows.
    pub fn write(&self, manifest: &mut Manifest) -> Result<()> {
        let hash = self.config.hash()?;
        let stem = self.config.stem();
        let mut config = self.config.canonical()?;
        config.push_str(&format!("timeout_s = {}\n", self.timeout_s));
        manifest.write(&format!("{stem}/config.txt"), config, &hash)?;
        let detail = self.summary.detail_csv();
        let summary = self.summary.summary_csv();
        manifest.write(&format!("{stem}/detail.csv"), &detail, &hash)?;
        manifest.write(&format!("{stem}/summary.csv"), &summary, &hash)?;
        for (i, r) in self.records.iter().enumerate() {
            manifest.write(&format!("{stem}/laps/lap_{i:03}.csv"), r.to_csv(), &hash)?;
        }
        let detail_path = manifest.root().join(format!("{stem}/detail.csv"));
        let summary_path = manifest.root().join(format!("{stem}/summary.csv"));
        let read = |p: &std::path::Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        BenchmarkSummary::load(&read(&summary_path)?, &read(&detail_path)?, &summary_path.display().to_string())?;
        Ok(())
    }
}

pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let map = cfg.map.load()?;
    run_benchmark_on(cfg, &map)
}

/// Runs `cfg.n_laps` seeded laps on an already loaded map.
pub fn run_benchmark_on(cfg: &RunConfig, map: &TrackMap) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let setup = cfg.setup()?;
    let raceline = build_raceline(map, &setup)?;
    let reference_lap_s = reference_lap_time(map, &setup, &raceline)?;
    let timeout_s = TIMEOUT_FACTOR * reference_lap_s.unwrap_or_else(|| raceline.lap_time());
    let recipe = match cfg.planner {
        PlannerKind::Pp => Recipe::Pp(raceline),
        PlannerKind::Mpcc => Recipe::Mpcc,
        PlannerKind::Ftg => Recipe::Ftg,
        PlannerKind::E2e => {
            let path = cfg.checkpoint.as_ref().ok_or_else(|| Error::Config("the e2e planner needs a checkpoint".into()))?;
            Recipe::E2e(Agent::load(path)?)
        }
    };
    let sim = SimConfig {
        timeout_s,
        ..setup.sim.clone()
    };
    let pose_source = cfg.pose_source(&setup);
    let starts = start_positions(cfg.seed, cfg.n_laps, map.path.length());
    let runs = par_map(&starts, |lap, &s0| -> Result<EpisodeRecord> {
        let mut planner = recipe.build(map, &setup)?;
        run_episode(
            planner.as_mut(),
            map,
            &setup.params,
            &sim,
            &pose_source,
            s0,
            episode_rng(cfg.seed, lap as u64),
        )
    });
    let records = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let laps = records.iter().enumerate().map(|(i, r)| LapRow::from_record(i, r)).collect();
    Ok(BenchmarkRun {
        config: cfg.clone(),
        summary: BenchmarkSummary::from_laps(cfg.planner.name(), map.name.clone(), laps),
        records,
        timeout_s,
        reference_lap_s,
    })
}
