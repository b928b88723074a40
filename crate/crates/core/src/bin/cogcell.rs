//! Command-line front end: `run`, `sweep`, `figure` and `validate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cogcell::metrics::{write_csv, MetricsRecord};
use cogcell::scenario::{
    self, default_floorplan, fig4a, fig4bc, fig5b, fig5b_route, load_scenario, run_scenario,
    Scenario, ScenarioError, Sweep,
};
use cogcell::sim::SimTime;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "cogcell", version, about = "Hybrid 2.4/60 GHz WLAN simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write `<run-id>.metrics.csv`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write `<run-id>.trace.log`.
        #[arg(long)]
        trace: bool,
    },
    /// Run a parameter sweep into one combined CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted scenario key, e.g. `devices` or `mmwave.beamwidth_deg`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Replicates per point.
        #[arg(long, default_value_t = 1)]
        seeds: u32,
    },
    /// Reproduce a named figure as a table.
    Figure {
        name: FigureName,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<u32>,
        /// fig5b: beamwidths to compare.
        #[arg(long, value_delimiter = ',', default_value = "30,20")]
        beamwidths: Vec<f64>,
        /// fig4a: device counts.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30")]
        devices: Vec<usize>,
        /// fig4bc: station counts, half REQ60 and half WIFI24.
        #[arg(long, value_delimiter = ',', default_value = "4,10,20")]
        stations: Vec<usize>,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; the default floor plan when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any scenario key, e.g. `--set mmwave.beamwidth_deg=30`.
    #[arg(long = "set", value_parser = parse_key_value)]
    overrides: Vec<(String, String)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureName {
    Fig4a,
    Fig4bc,
    Fig5b,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

enum Failure {
    Config(String),
    Invariant(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

impl Common {
    fn scenario(&self) -> Result<Scenario, Failure> {
        let mut s = match &self.scenario {
            Some(p) => load_scenario(p, &self.overrides)?,
            None => {
                let mut s = default_floorplan();
                for (k, v) in &self.overrides {
                    s = scenario::apply_override(&s, k, v)?;
                }
                s
            }
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(d) = self.duration_s {
            s.duration_s = d;
        }
        scenario::validate(&s, None)?;
        Ok(s)
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| io_fail(&dir, e))?;
        Ok(dir)
    }
}

fn write_records(path: &Path, rows: &[MetricsRecord]) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| io_fail(path, e))?;
    write_csv(file, rows).map_err(|e| io_fail(path, e))
}

fn check_valid(rows: &[MetricsRecord]) -> Result<(), Failure> {
    match rows.iter().find(|r| !r.valid) {
        Some(r) => Err(Failure::Invariant(format!(
            "run {} invalid: {}",
            r.run_id, r.diagnostic
        ))),
        None => Ok(()),
    }
}

fn write_table(
    out: Option<&Path>,
    name: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<(), Failure> {
    println!(
        "{}",
        header
            .iter()
            .map(|h| format!("{h:>16}"))
            .collect::<String>()
    );
    for r in &rows {
        println!(
            "{}",
            r.iter().map(|c| format!("{c:>16}")).collect::<String>()
        );
    }
    if let Some(dir) = out {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_fail(&path, e))?;
        w.write_record(header).map_err(|e| io_fail(&path, e))?;
        for r in &rows {
            w.write_record(r).map_err(|e| io_fail(&path, e))?;
        }
        w.flush().map_err(|e| io_fail(&path, e))?;
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { common } => {
            let s = common.scenario()?;
            println!(
                "ok: {} ({} devices, {} s)",
                s.run_id,
                s.devices.len(),
                s.duration_s
            );
            Ok(())
        }
        Command::Run { common, trace } => {
            let s = common.scenario()?;
            let dir = common.out_dir()?;
            let out = run_scenario(&s, trace)?;
            write_records(
                &dir.join(format!("{}.metrics.csv", s.run_id)),
                std::slice::from_ref(&out.record),
            )?;
            if let Some(lines) = &out.trace {
                let path = dir.join(format!("{}.trace.log", s.run_id));
                let mut text = lines.join("\n");
                text.push('\n');
                fs::write(&path, text).map_err(|e| io_fail(&path, e))?;
            }
            eprintln!("{}", out.record.summary());
            check_valid(std::slice::from_ref(&out.record))
        }
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
        } => {
            let base = common.scenario()?;
            let dir = common.out_dir()?;
            let sweep = Sweep {
                base,
                axis,
                values,
                seeds_per_point: seeds,
            };
            let rows = scenario::run_sweep(&sweep)?;
            let path = dir.join(format!("{}-sweep.metrics.csv", sweep.base.run_id));
            write_records(&path, &rows)?;
            eprintln!("{} rows -> {}", rows.len(), path.display());
            check_valid(&rows)
        }
        Command::Figure {
            name,
            common,
            seeds,
            beamwidths,
            devices,
            stations,
        } => {
            let s = common.scenario()?;
            let out = common.out.as_ref().map(|_| common.out_dir()).transpose()?;
            let out = out.as_deref();
            let f = |v: f64| format!("{v:.3}");
            match name {
                FigureName::Fig4a => {
                    let params = s.discovery.params(&s.mmwave.sweep);
                    let rows = fig4a(
                        s.mmwave.beamwidth_deg,
                        &devices,
                        seeds.unwrap_or(20),
                        s.seed,
                        &params,
                        &s.mac.params(),
                    )
                    .map_err(|e| Failure::Config(e.to_string()))?;
                    let rows = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.devices.to_string(),
                                f(r.standalone_ms),
                                f(r.assisted_ms),
                                f(r.speedup),
                            ]
                        })
                        .collect();
                    write_table(
                        out,
                        "fig4a",
                        &["devices", "standalone_ms", "assisted_ms", "speedup"],
                        rows,
                    )
                }
                FigureName::Fig4bc => {
                    let duration = SimTime::from_secs_f64(common.duration_s.unwrap_or(5.0));
                    let rows = fig4bc(
                        &s.mac.params(),
                        &stations,
                        seeds.unwrap_or(20),
                        s.seed,
                        duration,
                    );
                    let rows = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.stations.to_string(),
                                f(r.req60_delay_us),
                                f(r.wifi24_delay_us),
                                format!("{:.5}", r.req60_tau),
                                format!("{:.5}", r.wifi24_tau),
                                format!("{}/{}", r.ordered_runs, r.runs),
                            ]
                        })
                        .collect();
                    let header = [
                        "stations",
                        "req60_delay_us",
                        "wifi24_delay_us",
                        "req60_tau",
                        "wifi24_tau",
                        "ordered",
                    ];
                    write_table(out, "fig4bc", &header, rows)
                }
                FigureName::Fig5b => {
                    let params = s.beamtrack.params(&s.mmwave.sweep);
                    let rows = fig5b(
                        &beamwidths,
                        &fig5b_route(1),
                        s.mobility.speed_mps,
                        &params,
                        seeds.unwrap_or(1),
                        s.seed,
                    )
                    .map_err(|e| Failure::Config(e.to_string()))?;
                    let rows = rows
                        .iter()
                        .map(|r| {
                            vec![
                                f(r.beamwidth_deg),
                                r.mode.to_string(),
                                f(r.rebeams),
                                f(r.cost_ms),
                            ]
                        })
                        .collect();
                    write_table(
                        out,
                        "fig5b",
                        &["beamwidth_deg", "mode", "rebeams", "cost_ms"],
                        rows,
                    )
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
