//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or I/O failure, 2 optimization
//! finished without a solution meeting the CRLB threshold, 3 evaluated
//! HAPS positions violate the placement region.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citymodel::LinkState;
use crate::crlb::{average_crlb, evaluate_receivers, CrlbValue, ReceiverEvaluation};
use crate::fixtures;
use crate::geodesy::GeodeticPosition;
use crate::optimizer::{self, fast_nondominated_sort, objective_rows, GaParams, GenomeSpace, Objectives, RunOutcome};
use crate::scenario::{Scenario, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_FEASIBLE: i32 = 2;
pub const EXIT_INFEASIBLE_INPUT: i32 = 3;

pub const LOG_ENV: &str = "HAPS_DEPLOY_LOG";

#[derive(Debug, Parser)]
#[command(name = "haps-deploy", version, about = "Optimize HAPS count and placement for urban GNSS positioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimizer and write trace.csv, result.json, final_front.csv
    Run(RunArgs),
    /// Evaluate a fixed set of HAPS positions
    Eval(EvalArgs),
    /// Per-receiver satellite visibility report
    Visibility(CommonArgs),
    /// Write a synthetic scenario (config.json plus city.obj)
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// CRLB threshold in meters
    #[arg(long)]
    pub tau: Option<f64>,
    /// Elevation mask in degrees
    #[arg(long = "theta-min")]
    pub theta_min: Option<f64>,
    #[arg(long = "out-dir", default_value = "haps-out")]
    pub out_dir: PathBuf,
    /// Worker threads for evaluation (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSON list of [lat_deg, lon_deg, alt_m] HAPS positions
    #[arg(long)]
    pub haps: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    Desk,
    OpenSky,
    Canyon,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub kind: FixtureKind,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Code(i32),
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => with_threads(a.common.threads, || cmd_run(a)),
        Command::Eval(a) => with_threads(a.common.threads, || cmd_eval(a)),
        Command::Visibility(a) => with_threads(a.threads, || cmd_visibility(a)),
        Command::Fixture(a) => cmd_fixture(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Code(c)) => c,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    match threads {
        Some(0) => Err(anyhow::anyhow!("--threads must be at least 1").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(f)
        }
        None => f(),
    }
}

fn load_config(common: &CommonArgs) -> anyhow::Result<ScenarioConfig> {
    let mut config = ScenarioConfig::read(&common.config)?;
    if let Some(t) = common.tau {
        config.tau_m = Some(t);
    }
    if let Some(t) = common.theta_min {
        config.theta_min_deg = Some(t);
    }
    Ok(config)
}

fn build(config: ScenarioConfig, common: &CommonArgs) -> anyhow::Result<Scenario> {
    let base = common.config.parent().unwrap_or_else(|| Path::new("."));
    Ok(Scenario::from_config(config, base)?)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub n_haps: usize,
    pub avg_crlb_m: f64,
    pub positions: Vec<GeodeticPosition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_count: usize,
    pub best_crlb_m: f64,
    pub per_count_best_m: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub tau_m: f64,
    pub tau_feasible: bool,
    pub best: Configuration,
    pub baseline_crlb_m: f64,
    pub per_count_best: Vec<Configuration>,
    pub trace: Vec<TraceRow>,
    pub ga: GaParams,
    pub config: ScenarioConfig,
}

impl RunReport {
    pub fn new(scenario: &Scenario, params: &GaParams, outcome: &RunOutcome, baseline: f64) -> Self {
        let space = GenomeSpace::from_params(scenario.cone, params);
        let configuration = |o: &Objectives, ind| Configuration {
            n_haps: o.n_haps,
            avg_crlb_m: o.avg_crlb,
            positions: space.active_positions(ind),
        };
        Self {
            seed: params.seed,
            tau_m: params.tau,
            tau_feasible: outcome.best_objectives.avg_crlb <= params.tau,
            best: configuration(&outcome.best_objectives, &outcome.best),
            baseline_crlb_m: baseline,
            per_count_best: outcome.per_count_best.values().map(|(o, i)| configuration(o, i)).collect(),
            trace: outcome
                .trace
                .iter()
                .map(|t| TraceRow {
                    generation: t.generation,
                    best_count: t.best_objectives.n_haps,
                    best_crlb_m: t.best_objectives.avg_crlb,
                    per_count_best_m: t.per_count_best.clone(),
                })
                .collect(),
            ga: params.clone(),
            config: scenario.config.clone(),
        }
    }

    /// One row per generation; `crlb_0` is the satellite-only baseline.
    pub fn trace_csv(&self) -> String {
        let n_max = self.ga.n_max;
        let mut out = String::from("generation,best_count,best_crlb_m");
        for k in 0..=n_max {
            let _ = write!(out, ",crlb_{k}");
        }
        out.push('\n');
        for row in &self.trace {
            let _ = write!(out, "{},{},{}", row.generation, row.best_count, row.best_crlb_m);
            for k in 0..=n_max {
                out.push(',');
                let v = if k == 0 {
                    Some(self.baseline_crlb_m)
                } else {
                    row.per_count_best_m.get(&k).copied()
                };
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn final_front_csv(objectives: &[Objectives]) -> String {
    let (_, ranks) = fast_nondominated_sort(&objective_rows(objectives));
    let mut out = String::from("index,n_haps,avg_crlb_m,rank\n");
    for (i, (o, r)) in objectives.iter().zip(ranks).enumerate() {
        let _ = writeln!(out, "{i},{},{},{r}", o.n_haps, o.avg_crlb);
    }
    out
}

pub fn plot_script(n_max: usize) -> String {
    let mut s = String::from(
        "# gnuplot -p plot.gp\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'generation'\n\
         set multiplot layout 3,1\n\
         set ylabel 'best HAPS count'\n\
         plot 'trace.csv' using 1:2 with steps\n\
         set ylabel 'best CRLB per count [m]'\n",
    );
    let cols: Vec<String> = (1..=n_max)
        .map(|k| format!("'trace.csv' using 1:{} with lines", k + 4))
        .collect();
    let _ = writeln!(s, "plot {}", cols.join(", "));
    s.push_str(
        "set xlabel 'HAPS count'\n\
         set ylabel 'CRLB [m]'\n\
         plot 'final_front.csv' using 2:3 with points\n\
         unset multiplot\n",
    );
    s
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let common = &args.common;
    let mut config = load_config(common)?;
    if let Some(s) = args.seed {
        config.seed = Some(s);
    }
    if let Some(g) = args.generations {
        config.ga.n_g = g;
    }
    if let Some(p) = args.population {
        config.ga.n_pop = p;
    }
    let scenario = build(config, common)?;
    let params = scenario.ga.clone();
    let baseline = average_crlb(&[], &scenario)?;
    info!("satellite-only baseline {baseline:.3} m");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let outcome = optimizer::run(&scenario, &params, &mut rng)?;
    let report = RunReport::new(&scenario, &params, &outcome, baseline);

    let dir = &common.out_dir;
    write_file(dir, "trace.csv", &report.trace_csv())?;
    write_file(dir, "result.json", &to_json(&report))?;
    write_file(dir, "final_front.csv", &final_front_csv(&outcome.final_objectives))?;
    write_file(dir, "plot.gp", &plot_script(params.n_max))?;

    println!("baseline (satellites only): {baseline:.3} m");
    println!(
        "best: {} HAPS, average CRLB {:.3} m (threshold {} m)",
        report.best.n_haps, report.best.avg_crlb_m, params.tau
    );
    for c in &report.per_count_best {
        println!("  {} HAPS: {:.3} m", c.n_haps, c.avg_crlb_m);
    }
    println!("outputs written to {}", dir.display());
    if report.tau_feasible {
        Ok(())
    } else {
        warn!("no configuration reached the {} m threshold", params.tau);
        Err(Failure::Code(EXIT_NO_FEASIBLE))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverReport {
    pub receiver: usize,
    pub position: GeodeticPosition,
    pub crlb_m: Option<f64>,
    pub satellites_los: usize,
    pub satellites_nlos: usize,
    pub haps_los: usize,
    pub haps_nlos: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_haps: usize,
    pub avg_crlb_m: f64,
    pub haps: Vec<GeodeticPosition>,
    pub receivers: Vec<ReceiverReport>,
}

impl EvalReport {
    pub fn new(scenario: &Scenario, haps: &[GeodeticPosition], per: &[ReceiverEvaluation]) -> Self {
        let avg = per.iter().map(|r| r.crlb.or_penalty()).sum::<f64>() / per.len() as f64;
        Self {
            n_haps: haps.len(),
            avg_crlb_m: avg,
            haps: haps.to_vec(),
            receivers: per
                .iter()
                .zip(&scenario.receivers)
                .enumerate()
                .map(|(j, (r, ctx))| ReceiverReport {
                    receiver: j,
                    position: ctx.position,
                    crlb_m: match r.crlb {
                        CrlbValue::Finite(v) => Some(v),
                        CrlbValue::Infeasible => None,
                    },
                    satellites_los: r.satellites_los,
                    satellites_nlos: r.satellites_nlos,
                    haps_los: r.haps_los,
                    haps_nlos: r.haps_nlos,
                })
                .collect(),
        }
    }

    pub fn csv(&self) -> String {
        let mut out =
            String::from("receiver,lat_deg,lon_deg,alt_m,crlb_m,satellites_los,satellites_nlos,haps_los,haps_nlos\n");
        for r in &self.receivers {
            let crlb = r.crlb_m.map(|v| v.to_string()).unwrap_or_else(|| "infeasible".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.receiver,
                r.position.lat,
                r.position.lon,
                r.position.alt,
                crlb,
                r.satellites_los,
                r.satellites_nlos,
                r.haps_los,
                r.haps_nlos
            );
        }
        out
    }
}

/// Human-readable reasons each position falls outside the placement region.
pub fn placement_violations(scenario: &Scenario, haps: &[GeodeticPosition]) -> Vec<String> {
    let cone = &scenario.cone;
    let mut out = Vec::new();
    for (i, h) in haps.iter().enumerate() {
        if !h.is_valid() {
            out.push(format!("HAPS {i}: invalid coordinates {h:?}"));
            continue;
        }
        if !cone.altitude_ok(h) {
            out.push(format!(
                "HAPS {i}: altitude constraint violated, {} m outside [{}, {}] m",
                h.alt, cone.min_alt, cone.max_alt
            ));
        }
        if !cone.elevation_ok(h) {
            let el = cone.elevation_of(h).unwrap_or(f64::NAN);
            out.push(format!(
                "HAPS {i}: elevation constraint violated, {el:.4} deg below the {} deg minimum at the region center",
                cone.min_elevation
            ));
        }
    }
    out
}

fn read_haps(path: &Path) -> anyhow::Result<Vec<GeodeticPosition>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {} as a list of [lat, lon, alt]", path.display()))
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let common = &args.common;
    let scenario = build(load_config(common)?, common)?;
    let haps = read_haps(&args.haps)?;
    let violations = placement_violations(&scenario, &haps);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(Failure::Code(EXIT_INFEASIBLE_INPUT));
    }
    let per = evaluate_receivers(&haps, &scenario)?;
    let report = EvalReport::new(&scenario, &haps, &per);
    write_file(&common.out_dir, "eval.json", &to_json(&report))?;
    write_file(&common.out_dir, "eval_receivers.csv", &report.csv())?;
    println!("{} HAPS, average CRLB {:.6} m", report.n_haps, report.avg_crlb_m);
    print!("{}", report.csv());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRow {
    pub receiver: usize,
    pub position: GeodeticPosition,
    pub visible: usize,
    pub los: usize,
    pub nlos: usize,
}

pub fn visibility_rows(scenario: &Scenario) -> Vec<VisibilityRow> {
    scenario
        .receivers
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let los = r.satellites.iter().filter(|s| s.state == LinkState::Los).count();
            VisibilityRow {
                receiver: j,
                position: r.position,
                visible: r.satellites.len(),
                los,
                nlos: r.satellites.len() - los,
            }
        })
        .collect()
}

pub fn visibility_csv(rows: &[VisibilityRow]) -> String {
    let mut out = String::from("receiver,lat_deg,lon_deg,alt_m,visible,los,nlos\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.receiver, r.position.lat, r.position.lon, r.position.alt, r.visible, r.los, r.nlos
        );
    }
    out
}

fn cmd_visibility(args: &CommonArgs) -> CmdResult {
    let scenario = build(load_config(args)?, args)?;
    let csv = visibility_csv(&visibility_rows(&scenario));
    write_file(&args.out_dir, "visibility.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_fixture(args: &FixtureArgs) -> CmdResult {
    let fixture = match args.kind {
        FixtureKind::Desk => fixtures::desk_scale(),
        FixtureKind::OpenSky => fixtures::open_sky(),
        FixtureKind::Canyon => fixtures::canyon(),
    };
    let path = fixture.write_to(&args.out_dir)?;
    println!("{}", path.display());
    Ok(())
}
