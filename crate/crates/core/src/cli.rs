//! The `parcelsim` command line: `simulate` and `coverage`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::load_config;
use crate::coverage::{coverage, read_reference, read_selections};
use crate::error::{Result, SimError};
use crate::network::ZoneClass;
use crate::report::{self, FailedScenario, RunManifest, ScenarioEntry};
use crate::scenario::{run_suite, Simulation};

pub const CONFIG_ENV: &str = "PARCELSIM_CONFIG";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_DEVIATION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "parcelsim", version, about = "Monte Carlo simulation of parcel carrier selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate tariffs, run scenarios and write result tables.
    Simulate(SimulateArgs),
    /// Compare simulated selections against reference orders.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn md(self) -> bool {
        matches!(self, Format::Md | Format::Both)
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    /// Configuration file (TOML).
    #[arg(long, env = CONFIG_ENV)]
    pub config: PathBuf,
    /// Scenario id to run; repeat for several. Runs all scenarios when omitted.
    #[arg(long)]
    pub scenario: Vec<String>,
    /// Master seed for every scenario, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CoverageArgs {
    /// Simulated selections CSV (`<scenario>_selections.csv` from `simulate`).
    #[arg(long)]
    pub results: PathBuf,
    /// Reference orders CSV.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

pub fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Coverage(args) => cmd_coverage(&args),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| SimError::io(path, e))
}

/// Removes files listed by a previous manifest in `out`.
fn clear_previous_run(out: &Path) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
        for f in old.files() {
            let p = out.join(f);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| SimError::io(p, e))?;
            }
        }
    }
    fs::remove_file(&path).map_err(|e| SimError::io(path, e))
}

pub fn cmd_simulate(args: &SimulateArgs) -> u8 {
    match simulate(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<u8> {
    let started = Instant::now();
    let config_text = fs::read(&args.config).map_err(|e| SimError::io(&args.config, e))?;
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
        for s in &mut config.scenarios {
            s.master_seed = Some(seed);
        }
    }
    let scenarios = if args.scenario.is_empty() {
        config.scenarios.clone()
    } else {
        args.scenario
            .iter()
            .map(|id| {
                config
                    .scenario(id)
                    .cloned()
                    .ok_or_else(|| SimError::invalid(format!("unknown scenario {id}")))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = args.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| SimError::invalid(format!("thread pool: {e}")))?
    };
    let sim = Simulation::prepare(config)?;
    let timed: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        scenarios
            .par_iter()
            .map(|s| {
                let t = Instant::now();
                let r = run_suite(std::slice::from_ref(s), &sim).pop().expect("one result");
                (r, t.elapsed().as_millis())
            })
            .collect()
    });

    fs::create_dir_all(&args.out).map_err(|e| SimError::io(&args.out, e))?;
    clear_previous_run(&args.out)?;

    let calibration_file = if sim.calibration.is_empty() {
        None
    } else {
        write_file(&args.out, "calibration.csv", &report::calibration_csv(&sim.calibration)?)?;
        Some("calibration.csv".to_string())
    };

    let mut entries = Vec::new();
    let mut failed = Vec::new();
    let mut gate_failed = false;
    for (scenario, (result, ms)) in scenarios.iter().zip(timed) {
        let res = match result {
            Ok(r) => r,
            Err(e) => {
                eprintln!("scenario {} failed: {e}", scenario.id);
                failed.push(FailedScenario {
                    id: scenario.id.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let id = &res.scenario_id;
        let mut files = Vec::new();
        if args.format.csv() {
            let name = format!("{id}.csv");
            write_file(&args.out, &name, &report::scenario_csv(&res)?)?;
            files.push(name);
        }
        if args.format.md() {
            let name = format!("{id}.md");
            write_file(&args.out, &name, &report::scenario_markdown(&res))?;
            files.push(name);
        }
        for (suffix, body) in [
            ("replications", report::replications_csv(&res)?),
            ("deviation", report::deviation_csv(&res)?),
            ("selections", report::selections_csv(&res)?),
        ] {
            let name = format!("{id}_{suffix}.csv");
            write_file(&args.out, &name, &body)?;
            files.push(name);
        }
        if !res.calibration.is_empty() {
            let name = format!("{id}_calibration.csv");
            write_file(&args.out, &name, &report::calibration_csv(&res.calibration)?)?;
            files.push(name);
        }
        gate_failed |= res.gate_failed;

        println!(
            "scenario {id}: dropped {} orders over {} replications in {ms} ms{}",
            res.total_dropped(),
            res.replications,
            if res.gate_failed { " [deviation gate FAILED]" } else { "" }
        );
        for d in &res.dropped {
            if d.mean > 0.0 {
                let reasons: Vec<String> = d.by_reason.iter().map(|(r, n)| format!("{}={n}", r.as_str())).collect();
                println!("  {}: mean dropped {:.1} ({})", d.network, d.mean, reasons.join(", "));
            }
        }
        entries.push(ScenarioEntry {
            id: id.clone(),
            results_file: files[0].clone(),
            files,
            dropped_total: res.total_dropped(),
            deviation_gate_failed: res.gate_failed,
        });
    }

    let scenario_ids: Vec<String> = scenarios.iter().map(|s| s.id.clone()).collect();
    let seed_bytes = sim.config.seed.to_le_bytes();
    let ids_joined = scenario_ids.join(",");
    let manifest = RunManifest {
        manifest_id: report::fingerprint(&[&config_text, &seed_bytes, ids_joined.as_bytes()]),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: args.config.display().to_string(),
        master_seed: sim.config.seed,
        scenario_ids,
        calibration_file,
        scenarios: entries,
        failed_scenarios: failed.clone(),
        deviation_gate_failed: gate_failed,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out, MANIFEST_FILE, &json)?;
    println!("finished in {} ms", started.elapsed().as_millis());

    Ok(if !failed.is_empty() {
        EXIT_ERROR
    } else if gate_failed {
        EXIT_DEVIATION
    } else {
        EXIT_OK
    })
}

pub fn cmd_coverage(args: &CoverageArgs) -> u8 {
    match coverage_cmd(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn coverage_cmd(args: &CoverageArgs) -> Result<u8> {
    let open = |p: &Path| fs::File::open(p).map_err(|e| SimError::io(p, e));
    let simulated = read_selections(open(&args.results)?)?;
    let reference = read_reference(open(&args.reference)?)?;

    let mut tables = Vec::new();
    for class in ZoneClass::ALL {
        match coverage(&simulated, &reference, class) {
            Ok(t) => tables.push(t),
            Err(SimError::EmptyReference(c)) => eprintln!("note: no reference orders for {c} zones; table skipped"),
            Err(e) => return Err(e),
        }
    }
    if tables.is_empty() {
        return Err(SimError::invalid("reference file has no rows"));
    }
    fs::create_dir_all(&args.out).map_err(|e| SimError::io(&args.out, e))?;
    for t in &tables {
        let stem = format!("coverage_{}", t.zone_class.as_str());
        if args.format.csv() {
            write_file(&args.out, &format!("{stem}.csv"), &report::coverage_csv(t)?)?;
        }
        if args.format.md() {
            write_file(&args.out, &format!("{stem}.md"), &report::coverage_markdown(t))?;
        }
        let avgs: Vec<String> = t
            .networks
            .iter()
            .zip(&t.averages)
            .map(|(n, a)| format!("{n}={}", a.map_or_else(|| "absent".into(), |v| format!("{v:.2}"))))
            .collect();
        println!("coverage {}: {}", t.zone_class, avgs.join(" "));
        for (c, n) in t.missing_reference() {
            println!("  not covered: {c} in {n} has simulated orders but no reference");
        }
    }
    Ok(EXIT_OK)
}
