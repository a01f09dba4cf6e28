use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use racekit::config::KvConfig;
use racekit::harness::plots::{plot_files, Trace};
use racekit::harness::{
    config_hash, friction_sweep, localisation_report, pf_report_csv, reward_study, run_benchmark, sweep_csv, MapSpec,
    Manifest, PlannerKind, PoseKind, RunConfig, Setup, StudyConfig, SweepConfig,
};
use racekit::raceline::plan_raceline;
use racekit::rl::train::curve_csv;
use racekit::rl::{train, RewardKind, TrainConfig};
use racekit::track::track_stats;

#[derive(Parser)]
#[command(name = "bench", about = "Seeded racing benchmarks on shipped or user-supplied tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Shipped track name (oval, stadium, wiggle) or a centerline CSV.
    #[arg(long, default_value = "oval")]
    map: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    friction: f64,
    #[arg(long = "control-hz", default_value_t = 25)]
    control_hz: u32,
    /// `section.key = value` overrides for vehicle, sim, pf, pp, mpcc, ftg,
    /// raceline and train settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a minimum-curvature raceline with its speed profile.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run seeded laps with one planner.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "pp")]
        planner: String,
        #[arg(long, default_value_t = 10)]
        laps: usize,
        #[arg(long, default_value = "true")]
        pose: String,
        #[arg(long, default_value_t = 1000)]
        particles: usize,
        /// Trained agent for the e2e planner.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross planners with friction, pose source and control rate.
    Sweep {
        #[arg(long, default_value = "oval")]
        map: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "pp,mpcc")]
        planner: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9")]
        friction: Vec<f64>,
        #[arg(long = "control-hz", value_delimiter = ',', default_value = "10,25")]
        control_hz: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "true,pf")]
        pose: Vec<String>,
        #[arg(long, default_value_t = 10)]
        laps: usize,
        #[arg(long, default_value_t = 1000)]
        particles: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train one end-to-end agent.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "tal")]
        reward: String,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train every reward on every map and seed, then cross-evaluate.
    RewardStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long = "maps", value_delimiter = ',')]
        maps: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "cth,progress,tal")]
        reward: Vec<String>,
        #[arg(long = "seeds", value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Evaluation laps per agent and map.
        #[arg(long, default_value_t = 10)]
        laps: usize,
    },
    /// Localisation error and update time against the particle count.
    PfReport {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,500,1000")]
        particles: Vec<usize>,
    },
    /// Length, straight share and corner count of a track.
    Stats {
        /// Track to measure; falls back to the AUT_CENTERLINE environment variable.
        #[arg(long)]
        map: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Plot data and gnuplot stubs from the lap records under `--out`.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn is_config(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<racekit::Error>(),
        Some(
            racekit::Error::Config(_)
                | racekit::Error::Unknown { .. }
                | racekit::Error::Schema { .. }
                | racekit::Error::Parse { .. }
                | racekit::Error::InvalidTrack(_)
                | racekit::Error::InvalidGrid(_)
        )
    )
}

trait Phase<T> {
    /// Errors while resolving inputs are configuration errors.
    fn config(self) -> Outcome<T>;
    /// Errors while running are runtime failures unless they are about
    /// the configuration.
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| {
            let e = e.into();
            if is_config(&e) {
                Failure::Config(e)
            } else {
                Failure::Runtime(e)
            }
        })
    }
}

fn overrides(path: &Option<PathBuf>) -> Outcome<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p).with_context(|| format!("reading {}", p.display())).config(),
        None => Ok(KvConfig::default()),
    }
}

fn parse_list<T: std::str::FromStr<Err = racekit::Error>>(items: &[String]) -> Outcome<Vec<T>> {
    items.iter().map(|s| s.parse::<T>()).collect::<Result<_, _>>().config()
}

fn finish(manifest: &Manifest) -> Outcome<()> {
    manifest.save().runtime()?;
    println!("wrote {}", manifest.root().join(racekit::harness::MANIFEST_FILE).display());
    Ok(())
}

fn train_config(kv: &KvConfig, setup: &Setup, seed: u64, steps: Option<usize>) -> Outcome<TrainConfig> {
    let mut tc = TrainConfig::from_config(&kv.section("train"), &setup.params).config()?;
    tc.seed = seed;
    if let Some(s) = steps {
        tc.steps = s;
    }
    tc.validate().config()?;
    Ok(tc)
}

fn lap_files(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            lap_files(&path, found)?;
        } else if path.parent().and_then(Path::file_name).is_some_and(|n| n == "laps")
            && path.extension().is_some_and(|e| e == "csv")
        {
            found.push(path);
        }
    }
    Ok(())
}

fn execute(command: Command) -> Outcome<()> {
    match command {
        Command::Plan { common } => {
            let kv = overrides(&common.config)?;
            let setup = Setup::resolve(&kv, common.friction, common.control_hz, 1).config()?;
            let spec = MapSpec::parse(&common.map);
            let map = spec.load().config()?;
            let report = plan_raceline(&map.centerline, &setup.params, &setup.mincurv).runtime()?;
            let hash = config_hash(&format!("plan\n{}{:?}\n{:?}", kv.to_text(), setup, spec));
            let mut manifest = Manifest::open(&common.out).runtime()?;
            let stem = format!("plan_{}_mu{}", spec.name(), common.friction);
            manifest.write(&format!("{stem}/raceline.csv"), report.raceline.to_csv(), &hash).runtime()?;
            manifest.write(&format!("{stem}/plan.txt"), format!("{}\n", report.summary()), &hash).runtime()?;
            println!("{}", report.summary());
            finish(&manifest)
        }
        Command::Run {
            common,
            planner,
            laps,
            pose,
            particles,
            checkpoint,
        } => {
            let cfg = RunConfig {
                planner: planner.parse().config()?,
                map: MapSpec::parse(&common.map),
                n_laps: laps,
                seed: common.seed,
                mu: common.friction,
                control_hz: common.control_hz,
                pose: pose.parse().config()?,
                particles,
                checkpoint,
                overrides: overrides(&common.config)?,
            };
            cfg.validate().config()?;
            cfg.setup().config()?;
            let run = run_benchmark(&cfg).runtime()?;
            let mut manifest = Manifest::open(&common.out).runtime()?;
            run.write(&mut manifest).runtime()?;
            println!("{}", racekit::harness::SUMMARY_HEADER);
            println!("{}", run.summary.summary_row());
            finish(&manifest)
        }
        Command::Sweep {
            map,
            seed,
            config,
            out,
            planner,
            friction,
            control_hz,
            pose,
            laps,
            particles,
            checkpoint,
        } => {
            let mut cfg = SweepConfig::new(parse_list::<PlannerKind>(&planner)?, MapSpec::parse(&map));
            cfg.mus = friction;
            cfg.control_hz = control_hz;
            cfg.poses = parse_list::<PoseKind>(&pose)?;
            cfg.n_laps = laps;
            cfg.seed = seed;
            cfg.particles = particles;
            cfg.checkpoint = checkpoint;
            cfg.overrides = overrides(&config)?;
            cfg.validate().config()?;
            let hash = cfg.hash().config()?;
            let cells = friction_sweep(&cfg).runtime()?;
            let mut manifest = Manifest::open(&out).runtime()?;
            for c in &cells {
                c.run.write(&mut manifest).runtime()?;
            }
            let table = sweep_csv(&cells);
            manifest
                .write(&format!("sweep_{}.csv", cfg.map.name()), &table, &hash)
                .runtime()?;
            print!("{table}");
            finish(&manifest)
        }
        Command::Train { common, reward, steps } => {
            let kv = overrides(&common.config)?;
            let setup = Setup::resolve(&kv, common.friction, common.control_hz, 1).config()?;
            let kind: RewardKind = reward.parse().config()?;
            let tc = train_config(&kv, &setup, common.seed, steps)?;
            let spec = MapSpec::parse(&common.map);
            let map = spec.load().config()?;
            let raceline = racekit::harness::build_raceline(&map, &setup).runtime()?;
            let out = train(&map, &setup.params, &setup.sim, kind, &tc, Some(&raceline)).runtime()?;
            let hash = config_hash(&format!("train\n{}{:?}\n{:?}\n{}", kv.to_text(), tc, spec, kind));
            let stem = format!("{kind}_{}_s{}", spec.name(), common.seed);
            let mut manifest = Manifest::open(&common.out).runtime()?;
            manifest.write(&format!("agents/{stem}.agent"), out.agent.to_text(), &hash).runtime()?;
            manifest
                .write(&format!("curves/{stem}_curve.csv"), curve_csv(&out.curve), &hash)
                .runtime()?;
            println!("episodes={} updates={}", out.episodes, out.updates);
            finish(&manifest)
        }
        Command::RewardStudy {
            common,
            maps,
            reward,
            seeds,
            steps,
            laps,
        } => {
            let kv = overrides(&common.config)?;
            let setup = Setup::resolve(&kv, common.friction, common.control_hz, 1).config()?;
            let tc = train_config(&kv, &setup, common.seed, steps)?;
            let maps = if maps.is_empty() { vec![common.map.clone()] } else { maps };
            let mut cfg = StudyConfig::new(maps.iter().map(|m| MapSpec::parse(m)).collect(), tc);
            cfg.rewards = parse_list::<RewardKind>(&reward)?;
            cfg.seeds = seeds;
            cfg.eval_laps = laps;
            cfg.mu = common.friction;
            cfg.control_hz = common.control_hz;
            cfg.overrides = kv;
            cfg.validate().config()?;
            let hash = cfg.hash().config()?;
            let result = reward_study(&cfg).runtime()?;
            let mut manifest = Manifest::open(&common.out).runtime()?;
            result.write(&mut manifest, &hash).runtime()?;
            let traces: Vec<Trace> = result
                .matrix
                .iter()
                .filter(|c| c.train_map == c.test_map)
                .flat_map(|c| c.records.iter().map(|r| Trace::from_record(c.reward.name(), r)))
                .collect();
            for (name, content) in plot_files(&traces) {
                manifest.write(&format!("plots/study_{name}"), content, &hash).runtime()?;
            }
            print!("{}", result.matrix_csv());
            finish(&manifest)
        }
        Command::PfReport { common, particles } => {
            let kv = overrides(&common.config)?;
            let setup = Setup::resolve(&kv, common.friction, common.control_hz, 1).config()?;
            let spec = MapSpec::parse(&common.map);
            let map = spec.load().config()?;
            let rows = localisation_report(&map, &setup, &particles, common.seed).runtime()?;
            let hash = config_hash(&format!("pf\n{}{:?}\n{:?}\n{:?}\n{}", kv.to_text(), setup, spec, particles, common.seed));
            let (data, timing) = pf_report_csv(&rows);
            let mut manifest = Manifest::open(&common.out).runtime()?;
            manifest.write(&format!("pf_{}.csv", spec.name()), &data, &hash).runtime()?;
            manifest
                .write_timing(&format!("pf_{}_timing.csv", spec.name()), &timing, &hash)
                .runtime()?;
            print!("{data}{timing}");
            finish(&manifest)
        }
        Command::Stats { map, out } => {
            let Some(map) = map.or_else(|| std::env::var("AUT_CENTERLINE").ok()) else {
                println!("track statistics: skipped (no --map and AUT_CENTERLINE unset)");
                return Ok(());
            };
            let spec = MapSpec::parse(&map);
            spec.check().config()?;
            let track = spec.load().config()?;
            let s = track_stats(&track.path);
            let table = format!(
                "map,length_m,straight_pct,corners\n{},{:.4},{:.4},{}\n",
                spec.name(),
                s.length,
                s.straight_pct,
                s.corner_count
            );
            let hash = config_hash(&format!("stats\n{:?}", spec));
            let mut manifest = Manifest::open(&out).runtime()?;
            manifest.write(&format!("stats_{}.csv", spec.name()), &table, &hash).runtime()?;
            print!("{table}");
            finish(&manifest)
        }
        Command::Plot { out } => {
            let mut files = Vec::new();
            if out.is_dir() {
                lap_files(&out, &mut files)
                    .with_context(|| format!("scanning {}", out.display()))
                    .runtime()?;
            }
            files.sort();
            let mut traces = Vec::new();
            for f in &files {
                let text = std::fs::read_to_string(f)
                    .with_context(|| format!("reading {}", f.display()))
                    .runtime()?;
                // label each lap by its run directory
                let label = f
                    .parent()
                    .and_then(Path::parent)
                    .and_then(Path::file_name)
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                traces.push(Trace::parse(&label, &text, &f.display().to_string()).runtime()?);
            }
            let rels: Vec<String> = files
                .iter()
                .map(|f| f.strip_prefix(&out).unwrap_or(f).display().to_string())
                .collect();
            let hash = config_hash(&format!("plot\n{}", rels.join("\n")));
            let mut manifest = Manifest::open(&out).runtime()?;
            for (name, content) in plot_files(&traces) {
                manifest.write(&format!("plots/{name}"), content, &hash).runtime()?;
            }
            println!("{} lap records", traces.len());
            finish(&manifest)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
