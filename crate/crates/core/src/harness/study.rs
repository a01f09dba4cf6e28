use super::{build_raceline, config_hash, par_map, reference_lap_time, Manifest, MapSpec, Setup, TIMEOUT_FACTOR};
use crate::config::KvConfig;
use crate::csvio::fmt_sig;
use crate::error::{Error, Result};
use crate::rl::train::curve_csv;
use crate::rl::{evaluate, train, Agent, CurveRow, RewardKind, TrainConfig};
use crate::sim::{EpisodeRecord, SimConfig};
use crate::track::TrackMap;

pub const MATRIX_HEADER: &str =
    "reward,seed,train_map,test_map,laps,completion_pct,mean_progress_pct,mean_lap_time_s,median_abs_beta_rad";

/// Agents trained for every (reward, seed, map) and raced on every map.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub maps: Vec<MapSpec>,
    pub rewards: Vec<RewardKind>,
    pub seeds: Vec<u64>,
    /// Training settings; the seed is replaced per agent.
    pub train: TrainConfig,
    pub eval_laps: usize,
    pub mu: f64,
    pub control_hz: u32,
    pub overrides: KvConfig,
}

impl StudyConfig {
    pub fn new(maps: Vec<MapSpec>, train: TrainConfig) -> Self {
        Self {
            maps,
            rewards: RewardKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            train,
            eval_laps: 10,
            mu: 0.9,
            control_hz: 25,
            overrides: KvConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() || self.rewards.is_empty() || self.seeds.is_empty() || self.eval_laps == 0 {
            return Err(Error::Config("a reward study needs maps, rewards, seeds and evaluation laps".into()));
        }
        self.maps.iter().try_for_each(MapSpec::check)?;
        self.train.validate()?;
        if !(super::MU_RANGE.0..=super::MU_RANGE.1).contains(&self.mu) {
            return Err(Error::Config(format!("friction {} out of range", self.mu)));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        let mut kv = self.overrides.clone();
        let maps: Vec<String> = self.maps.iter().map(|m| m.fingerprint()).collect::<Result<_>>()?;
        kv.insert("study.maps", maps.join(" "));
        let rewards: Vec<&str> = self.rewards.iter().map(|r| r.name()).collect();
        kv.insert("study.rewards", rewards.join(" "));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        kv.insert("study.seeds", seeds.join(" "));
        kv.insert("study.train", format!("{:?}", TrainConfig { seed: 0, ..self.train }));
        kv.insert("study.eval_laps", self.eval_laps);
        kv.insert("study.mu", format!("{:016x}", self.mu.to_bits()));
        kv.insert("study.control_hz", self.control_hz);
        Ok(config_hash(&kv.to_text()))
    }
}

#[derive(Clone, Debug)]
pub struct TrainedSummary {
    pub reward: RewardKind,
    pub seed: u64,
    pub map: String,
    pub curve: Vec<CurveRow>,
    pub episodes: usize,
    pub updates: usize,
    pub agent: Agent,
}

impl TrainedSummary {
    pub fn stem(&self) -> String {
        format!("{}_{}_s{}", self.reward, self.map, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct CrossEval {
    pub reward: RewardKind,
    pub seed: u64,
    pub train_map: String,
    pub test_map: String,
    pub completion_pct: f64,
    pub mean_progress_pct: f64,
    pub mean_lap_time: Option<f64>,
    pub median_abs_beta: f64,
    pub records: Vec<EpisodeRecord>,
}

impl CrossEval {
    fn new(reward: RewardKind, seed: u64, train_map: &str, test_map: &str, records: Vec<EpisodeRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let times: Vec<f64> = records.iter().filter_map(|r| r.lap_time).collect();
        let mut beta: Vec<f64> = records.iter().flat_map(|r| r.steps.iter().map(|s| s.beta.abs())).collect();
        beta.sort_by(f64::total_cmp);
        Self {
            reward,
            seed,
            train_map: train_map.to_string(),
            test_map: test_map.to_string(),
            completion_pct: 100.0 * records.iter().filter(|r| r.completed()).count() as f64 / n,
            mean_progress_pct: 100.0 * records.iter().map(EpisodeRecord::progress_fraction).sum::<f64>() / n,
            mean_lap_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            median_abs_beta: super::plots::percentile(&beta, 0.5),
            records,
        }
    }

    pub fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.reward,
            self.seed,
            self.train_map,
            self.test_map,
            self.records.len(),
            fmt_sig(self.completion_pct, 9),
            fmt_sig(self.mean_progress_pct, 9),
            self.mean_lap_time.map(|t| fmt_sig(t, 9)).unwrap_or_default(),
            fmt_sig(self.median_abs_beta, 9)
        )
    }
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub trained: Vec<TrainedSummary>,
    pub matrix: Vec<CrossEval>,
}

impl StudyResult {
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from(MATRIX_HEADER);
        out.push('\n');
        for c in &self.matrix {
            out.push_str(&c.row());
            out.push('\n');
        }
        out
    }

    /// Cross-evaluation rows of one reward on its own training map.
    pub fn home(&self, reward: RewardKind) -> impl Iterator<Item = &CrossEval> {
        self.matrix
            .iter()
            .filter(move |c| c.reward == reward && c.train_map == c.test_map)
    }

    pub fn write(&self, manifest: &mut Manifest, hash: &str) -> Result<()> {
        for t in &self.trained {
            let stem = t.stem();
            manifest.write(&format!("agents/{stem}.agent"), t.agent.to_text(), hash)?;
            manifest.write(&format!("curves/{stem}_curve.csv"), curve_csv(&t.curve), hash)?;
        }
        manifest.write("matrix.csv", self.matrix_csv(), hash)
    }
}

struct MapContext {
    name: String,
    map: TrackMap,
    raceline: crate::raceline::Raceline,
    timeout_s: f64,
}

pub fn reward_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let setup = Setup::resolve(&cfg.overrides, cfg.mu, cfg.control_hz, 1)?;
    let maps: Vec<MapContext> = cfg
        .maps
        .iter()
        .map(|spec| {
            let map = spec.load()?;
            let raceline = build_raceline(&map, &setup)?;
            let reference = reference_lap_time(&map, &setup, &raceline)?;
            Ok(MapContext {
                name: spec.name(),
                timeout_s: TIMEOUT_FACTOR * reference.unwrap_or_else(|| raceline.lap_time()),
                map,
                raceline,
            })
        })
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for &reward in &cfg.rewards {
        for &seed in &cfg.seeds {
            for m in 0..maps.len() {
                jobs.push((reward, seed, m));
            }
        }
    }
    let trained = par_map(&jobs, |_, &(reward, seed, m)| -> Result<TrainedSummary> {
        let ctx = &maps[m];
        let tc = TrainConfig { seed, ..cfg.train };
        let out = train(&ctx.map, &setup.params, &setup.sim, reward, &tc, Some(&ctx.raceline))?;
        Ok(TrainedSummary {
            reward,
            seed,
            map: ctx.name.clone(),
            curve: out.curve,
            episodes: out.episodes,
            updates: out.updates,
            agent: out.agent,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for t in 0..trained.len() {
        for m in 0..maps.len() {
            pairs.push((t, m));
        }
    }
    let matrix = par_map(&pairs, |_, &(t, m)| -> Result<CrossEval> {
        let agent = &trained[t];
        let ctx = &maps[m];
        let sim = SimConfig {
            timeout_s: ctx.timeout_s,
            ..setup.sim.clone()
        };
        let records = evaluate(&agent.agent, &ctx.map, &setup.params, &sim, cfg.eval_laps, agent.seed)?;
        Ok(CrossEval::new(agent.reward, agent.seed, &agent.map, &ctx.name, records))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult { trained, matrix })
}
