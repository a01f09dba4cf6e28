//! Experiment engine: seeded lap batches, sweeps, training studies,
//! localisation reports and plot data, all written under one output
//! directory with a hashed manifest.

mod bench;
mod manifest;
mod pf_report;
pub mod plots;
mod study;
mod summary;
mod sweep;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::KvConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::ftg::FtgConfig;
use crate::localization::PfConfig;
use crate::mpcc::MpccConfig;
use crate::pursuit::PursuitParams;
use crate::raceline::MinCurvConfig;
use crate::sim::{PoseSource, SimConfig};
use crate::track::{CenterlineTrack, OccupancyGrid, ShippedTrack, TrackMap};

pub use bench::{
    build_raceline, reference_lap_time, run_benchmark, run_benchmark_on, start_positions, BenchmarkRun,
    TIMEOUT_FACTOR,
};
pub use manifest::{sha256_hex, Manifest, ManifestEntry, MANIFEST_FILE};
pub use pf_report::{localisation_report, pf_report_csv, PfReportRow, PF_REPORT_HEADER};
pub use study::{reward_study, CrossEval, StudyConfig, StudyResult, TrainedSummary};
pub use summary::{BenchmarkSummary, LapRow, DETAIL_HEADER, SUMMARY_HEADER};
pub use sweep::{friction_sweep, sweep_csv, SweepCell, SweepConfig, SWEEP_HEADER};

/// Clearance kept from the track edge by benchmark racelines (m).
pub const BENCH_RACELINE_MARGIN: f64 = 0.6;
pub const MU_RANGE: (f64, f64) = (0.3, 1.2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerKind {
    Pp,
    Mpcc,
    Ftg,
    E2e,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [PlannerKind::Pp, PlannerKind::Mpcc, PlannerKind::Ftg, PlannerKind::E2e];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Pp => "pp",
            PlannerKind::Mpcc => "mpcc",
            PlannerKind::Ftg => "ftg",
            PlannerKind::E2e => "e2e",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::Unknown {
            kind: "planner",
            name: s.to_string(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoseKind {
    True,
    Pf,
}

impl PoseKind {
    pub fn name(self) -> &'static str {
        match self {
            PoseKind::True => "true",
            PoseKind::Pf => "pf",
        }
    }
}

impl fmt::Display for PoseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(PoseKind::True),
            "pf" => Ok(PoseKind::Pf),
            _ => Err(Error::Unknown {
                kind: "pose source",
                name: s.to_string(),
            }),
        }
    }
}

/// A shipped track by name, or a centerline CSV on disk.
///
/// A file map uses `<stem>.pgm` with its `<stem>.meta` sidecar as the
/// raster when both sit next to the CSV, and rasterises the centerline
/// otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    Shipped(ShippedTrack),
    File(PathBuf),
}

impl MapSpec {
    pub fn parse(s: &str) -> Self {
        match ShippedTrack::from_name(s) {
            Some(t) => MapSpec::Shipped(t),
            None => MapSpec::File(PathBuf::from(s)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MapSpec::Shipped(t) => t.name().to_string(),
            MapSpec::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "map".into()),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            MapSpec::File(p) if !p.is_file() => Err(Error::Config(format!("map file {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }

    fn raster_files(path: &Path) -> Option<(PathBuf, PathBuf)> {
        let image = path.with_extension("pgm");
        let meta = path.with_extension("meta");
        (image.is_file() && meta.is_file()).then_some((image, meta))
    }

    pub fn load(&self) -> Result<TrackMap> {
        match self {
            MapSpec::Shipped(t) => Ok(TrackMap::shipped(*t)),
            MapSpec::File(p) => {
                self.check()?;
                let centerline = CenterlineTrack::load(p)?;
                match Self::raster_files(p) {
                    Some((image, meta)) => {
                        let grid = OccupancyGrid::load(image, meta)?;
                        Ok(TrackMap::with_grid(self.name(), centerline, grid))
                    }
                    None => TrackMap::from_centerline(self.name(), centerline),
                }
            }
        }
    }

    /// Text identifying the map in config hashes: the name for shipped
    /// tracks, the content hash for files.
    fn fingerprint(&self) -> Result<String> {
        match self {
            MapSpec::Shipped(t) => Ok(t.name().to_string()),
            MapSpec::File(p) => {
                let mut text = file_hash(p)?;
                if let Some((image, meta)) = Self::raster_files(p) {
                    text = format!("{text}+{}+{}", file_hash(&image)?, file_hash(&meta)?);
                }
                Ok(text)
            }
        }
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapSpec::Shipped(t) => f.write_str(t.name()),
            MapSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Parameters resolved from defaults, the run settings and overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub params: VehicleParams,
    pub sim: SimConfig,
    pub pf: PfConfig,
    pub pursuit: PursuitParams,
    pub mpcc: MpccConfig,
    pub ftg: FtgConfig,
    pub mincurv: MinCurvConfig,
}

const OVERRIDE_SECTIONS: [&str; 8] = ["vehicle", "sim", "pf", "pp", "mpcc", "ftg", "raceline", "train"];

impl Setup {
    /// Overrides are `section.key = value` with sections `vehicle`, `sim`,
    /// `pf`, `pp`, `mpcc`, `ftg` and `raceline` (margin only). A `train`
    /// section is accepted and left to the trainer. `mu`, `control_hz` and
    /// the particle count from the run win over the file.
    pub fn resolve(overrides: &KvConfig, mu: f64, control_hz: u32, particles: usize) -> Result<Self> {
        for key in overrides.keys() {
            let section = key.split_once('.').map(|(s, _)| s).unwrap_or("");
            if !OVERRIDE_SECTIONS.contains(&section) {
                return Err(Error::Config(format!("unknown override `{key}`")));
            }
        }
        let mut vehicle = overrides.section("vehicle");
        vehicle.insert("mu", mu);
        let params = VehicleParams::from_config(&vehicle)?;
        let mut sim_kv = overrides.section("sim");
        sim_kv.insert("control_hz", control_hz);
        let sim = SimConfig::from_config(&sim_kv)?;
        let mut pf_kv = overrides.section("pf");
        pf_kv.insert("n_particles", particles);
        let pf = PfConfig::from_config(&pf_kv)?;
        let pursuit = PursuitParams::from_config(&overrides.section("pp"))?;
        let mpcc = MpccConfig::from_config(&overrides.section("mpcc"))?;
        let ftg = FtgConfig::from_config(&overrides.section("ftg"), &params)?;
        let rl_kv = overrides.section("raceline");
        rl_kv.reject_unknown(&["margin"])?;
        let mut mincurv = MinCurvConfig {
            margin: BENCH_RACELINE_MARGIN,
            ..MinCurvConfig::default()
        };
        rl_kv.read_f64("margin", &mut mincurv.margin)?;
        if !(mincurv.margin >= 0.0) {
            return Err(Error::Config("raceline margin must be non-negative".into()));
        }
        Ok(Self {
            params,
            sim,
            pf,
            pursuit,
            mpcc,
            ftg,
            mincurv,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub planner: PlannerKind,
    pub map: MapSpec,
    pub n_laps: usize,
    pub seed: u64,
    pub mu: f64,
    pub control_hz: u32,
    pub pose: PoseKind,
    pub particles: usize,
    /// Trained agent, required by `e2e`.
    pub checkpoint: Option<PathBuf>,
    pub overrides: KvConfig,
}

impl RunConfig {
    pub fn new(planner: PlannerKind, map: MapSpec) -> Self {
        Self {
            planner,
            map,
            n_laps: 10,
            seed: 0,
            mu: 0.9,
            control_hz: 25,
            pose: PoseKind::True,
            particles: 1000,
            checkpoint: None,
            overrides: KvConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.map.check()?;
        if !(MU_RANGE.0..=MU_RANGE.1).contains(&self.mu) {
            return Err(Error::Config(format!(
                "friction {} outside [{}, {}]",
                self.mu, MU_RANGE.0, MU_RANGE.1
            )));
        }
        if self.n_laps == 0 {
            return Err(Error::Config("at least one lap is needed".into()));
        }
        if self.particles == 0 {
            return Err(Error::Config("at least one particle is needed".into()));
        }
        match (&self.checkpoint, self.planner) {
            (None, PlannerKind::E2e) => Err(Error::Config("the e2e planner needs a checkpoint".into())),
            (Some(p), _) if !p.is_file() => Err(Error::Config(format!("checkpoint {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        Setup::resolve(&self.overrides, self.mu, self.control_hz, self.particles)
    }

    pub fn pose_source(&self, setup: &Setup) -> PoseSource {
        match self.pose {
            PoseKind::True => PoseSource::True,
            PoseKind::Pf => PoseSource::Filter(setup.pf.clone()),
        }
    }

    /// Every setting that can change the result, one `key = value` per line.
    pub fn canonical(&self) -> Result<String> {
        let mut kv = self.overrides.clone();
        kv.insert("run.planner", self.planner);
        kv.insert("run.map", self.map.fingerprint()?);
        kv.insert("run.n_laps", self.n_laps);
        kv.insert("run.seed", self.seed);
        kv.insert("run.mu", format!("{:016x}", self.mu.to_bits()));
        kv.insert("run.control_hz", self.control_hz);
        kv.insert("run.pose", self.pose);
        if self.pose == PoseKind::Pf {
            kv.insert("run.particles", self.particles);
        }
        if let Some(p) = &self.checkpoint {
            kv.insert("run.checkpoint", file_hash(p)?);
        }
        Ok(kv.to_text())
    }

    /// Short hash of [`RunConfig::canonical`].
    pub fn hash(&self) -> Result<String> {
        Ok(config_hash(&self.canonical()?))
    }

    /// Directory name of this run's artifacts.
    pub fn stem(&self) -> String {
        let mut stem = format!("{}_{}_mu{}_hz{}_{}", self.planner, self.map.name(), self.mu, self.control_hz, self.pose);
        if self.pose == PoseKind::Pf {
            stem.push_str(&format!("{}", self.particles));
        }
        stem
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_string()
}

/// Maps `f` over `items` on up to `available_parallelism` threads,
/// returning results in input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= items.len() {
                            break out;
                        }
                        out.push((i, f(i, &items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, r) in done.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every index visited")).collect()
}

/// Writes `content` to `out/rel`, creating parent directories.
pub fn write_artifact(out: &Path, rel: &str, content: &[u8]) -> Result<PathBuf> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        assert_eq!(par_map(&items, |i, x| i * 100 + x), (0..37).map(|i| 101 * i).collect::<Vec<_>>());
    }

    #[test]
    fn names_round_trip() {
        for p in PlannerKind::ALL {
            assert_eq!(p.name().parse::<PlannerKind>().unwrap(), p);
        }
        assert!("rrt".parse::<PlannerKind>().is_err());
        assert_eq!("pf".parse::<PoseKind>().unwrap(), PoseKind::Pf);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(PlannerKind::Pp, MapSpec::parse("oval"));
        c.validate().unwrap();
        c.mu = 1.3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.mu = 0.9;
        c.planner = PlannerKind::E2e;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig::new(PlannerKind::Pp, MapSpec::parse("/nonexistent/track.csv"));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::new(PlannerKind::Pp, MapSpec::parse("oval"));
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn overrides_resolve_and_reject_typos() {
        let kv = KvConfig::parse("vehicle.m = 4\npp.k_ld = 0.2\nraceline.margin = 0.3", "t").unwrap();
        let s = Setup::resolve(&kv, 0.7, 10, 200).unwrap();
        assert_eq!((s.params.m, s.params.mu, s.sim.control_hz, s.pf.n_particles), (4.0, 0.7, 10, 200));
        assert_eq!((s.pursuit.k_ld, s.mincurv.margin), (0.2, 0.3));
        let bad = KvConfig::parse("vehicle.mass = 4", "t").unwrap();
        assert!(Setup::resolve(&bad, 0.9, 25, 10).is_err());
        let bad = KvConfig::parse("m = 4", "t").unwrap();
        assert!(Setup::resolve(&bad, 0.9, 25, 10).is_err());
    }
}
