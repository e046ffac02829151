//! Command-line front end: run a study config, run a named preset, or probe
//! a saved field dump along a line.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trapsim::dump::{parse_line_spec, probe_to_csv, read_field_dump};
use trapsim::runner::{
    cases_to_csv, parse_config, preset, run_sweep, CaseResult, PipelineError, Session, StudyConfig,
};

#[derive(Parser)]
#[command(name = "trapsim", about = "Ion trap + cavity mirror electrostatics studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution in micrometers (overrides the config).
    #[arg(long)]
    resolution: Option<f64>,
    /// Solver relative residual tolerance (overrides the config).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Concurrent case workers (overrides the config / TRAPSIM_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Force deterministic execution metadata in reports.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a study configuration file (TOML).
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Execute a named preset: table1, fig3..fig8.
    Preset {
        name: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Sample a saved field dump along a line: spec "x0,y0,z0:x1,y1,z1:n" (meters).
    Probe {
        dump: PathBuf,
        line: String,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_flags(cfg: &mut StudyConfig, flags: &RunFlags) {
    if let Some(out) = &flags.out {
        cfg.output.directory = out.display().to_string();
    }
    if let Some(res) = flags.resolution {
        cfg.grid.resolution = res * 1e-6;
    }
    if let Some(tol) = flags.tolerance {
        cfg.solver.tolerance = tol;
    }
    if let Some(w) = flags.workers {
        cfg.output.workers = w;
    }
    if flags.deterministic {
        cfg.output.deterministic = true;
    }
}

type SweepOutcome = (Option<f64>, Result<CaseResult, PipelineError>);

fn write_outputs(dir: &Path, name: &str, results: &[SweepOutcome]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (_, r) in results {
        if let Ok(case) = r {
            let path = dir.join(format!("{}.json", case.case_id));
            let json = serde_json::to_string_pretty(case).expect("serializable case");
            std::fs::write(path, json)?;
        }
    }
    let csv = cases_to_csv(results);
    std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    Ok(())
}

fn report_progress(results: &[SweepOutcome]) -> usize {
    let mut failures = 0;
    for (v, r) in results {
        match r {
            Ok(case) => {
                let depth = case
                    .report
                    .as_ref()
                    .and_then(|rep| rep.axes[0].depth_ev)
                    .map(|d| format!("depth_x {d:.4} eV"))
                    .unwrap_or_default();
                let e = case
                    .charge_field
                    .map(|e| {
                        let m = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                        format!("|E| {m:.4e} V/m")
                    })
                    .unwrap_or_default();
                eprintln!(
                    "done {} ({} iters, {:.1}s) {depth}{e}",
                    case.case_id,
                    case.solve.iterations,
                    case.wall_time.as_secs_f64()
                );
            }
            Err(e) => {
                failures += 1;
                let tag = v.map(|v| format!(" (sweep {v})")).unwrap_or_default();
                eprintln!("FAILED case{tag}: {e}");
            }
        }
    }
    failures
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, flags } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            apply_flags(&mut cfg, &flags);
            for note in &cfg.notes {
                eprintln!("note: {note}");
            }
            let session = Session::default();
            let results = match run_sweep(&session, &cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            let dir = PathBuf::from(&cfg.output.directory);
            let stem = config
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "run".into());
            if let Err(e) = write_outputs(&dir, &stem, &results) {
                eprintln!("cannot write outputs: {e}");
                return ExitCode::FAILURE;
            }
            let failures = report_progress(&results);
            eprintln!("outputs in {}", dir.display());
            if failures > 0 {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Command::Preset { name, flags } => {
            let configs = match preset(&name) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            let session = Session::default();
            let mut all = Vec::new();
            let mut dir = PathBuf::from("out");
            for mut cfg in configs {
                apply_flags(&mut cfg, &flags);
                dir = PathBuf::from(&cfg.output.directory);
                match run_sweep(&session, &cfg) {
                    Ok(mut r) => all.append(&mut r),
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::FAILURE;
                    }
                }
            }
            if let Err(e) = write_outputs(&dir, &name, &all) {
                eprintln!("cannot write outputs: {e}");
                return ExitCode::FAILURE;
            }
            let failures = report_progress(&all);
            eprintln!("outputs in {}", dir.display());
            if failures > 0 {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Command::Probe { dump, line, out } => {
            let loaded = match read_field_dump(&dump) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            let points = match parse_line_spec(&line) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            let csv = probe_to_csv(&loaded, &points);
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, csv) {
                        eprintln!("cannot write {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{csv}"),
            }
            ExitCode::SUCCESS
        }
    }
}
