use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use meshpon_core::scenario::ScenarioConfig;
use meshpon_sim::config::{self, Overrides};
use meshpon_sim::report::{compare, read_rows, write_rows};
use meshpon_sim::sweep::{run_sweep, summary_rows, write_artifacts};

#[derive(Parser)]
#[command(name = "meshpon-sim", version, about = "Mesh-PON fronthaul latency simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a load sweep and write summary.csv plus charts.
    Run {
        config: PathBuf,
        /// Loads as percent or fractions, e.g. `25,50,75`.
        #[arg(long)]
        loads: Option<String>,
        /// Slot duration(s), e.g. `500us` or `500us,250us`.
        #[arg(long)]
        slot: Option<String>,
        /// DBA policy for every slice: sr, codba or codba_cgs.
        #[arg(long)]
        dba: Option<String>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        cgs_occupancy_estimate: bool,
        /// Write per-run packet traces.
        #[arg(long)]
        trace: bool,
        /// Simulated seconds per run.
        #[arg(long)]
        duration: Option<f64>,
        /// Results root (default from the config, usually `results`).
        #[arg(long)]
        out: Option<String>,
    },
    /// Per-load latency deltas, candidate minus baseline.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        /// Restrict the baseline side to one class.
        #[arg(long)]
        baseline_class: Option<String>,
        /// Restrict the candidate side to one class.
        #[arg(long)]
        candidate_class: Option<String>,
        /// Where to write the delta CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and list every violation.
    Validate { config: PathBuf },
}

fn load_valid(path: &Path, o: &Overrides) -> Result<ScenarioConfig, ExitCode> {
    let mut cfg = config::load_scenario(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })?;
    o.apply(&mut cfg);
    let v = cfg.validate();
    if !v.is_empty() {
        eprintln!("{}: {} violation(s)", path.display(), v.len());
        for x in &v {
            eprintln!("  - {x}");
        }
        return Err(ExitCode::from(2));
    }
    Ok(cfg)
}

fn overrides(
    loads: Option<String>,
    slot: Option<String>,
    dba: Option<String>,
    seeds: Option<u32>,
    jobs: Option<usize>,
    cgs_occupancy_estimate: bool,
    trace: bool,
    duration: Option<f64>,
    out: Option<String>,
) -> Result<Overrides> {
    Ok(Overrides {
        loads: loads.as_deref().map(config::parse_loads).transpose()?,
        slots_us: slot.as_deref().map(config::parse_slots).transpose()?,
        dba: dba.as_deref().map(config::parse_dba).transpose()?,
        seeds,
        jobs,
        cgs_occupancy_estimate,
        trace,
        duration_s: duration,
        output_dir: out,
    })
}

fn run(cfg: ScenarioConfig) -> Result<()> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S").to_string();
    let dir = Path::new(&cfg.output_dir).join(&cfg.name).join(stamp);
    let n = meshpon_sim::sweep::jobs(&cfg).len();
    eprintln!("{}: {n} run(s), {} s each", cfg.name, cfg.duration_s);
    let t0 = std::time::Instant::now();
    let runs = run_sweep(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    for r in &runs {
        let c = &r.checks;
        if !c.grant_violations.is_empty() || !c.packets_conserved() || !c.bytes_conserved() {
            eprintln!("warning: load {} seed {} failed internal checks: {c:?}", r.load, r.seed);
        }
    }
    let files = write_artifacts(&cfg, &runs, &dir)?;
    std::fs::write(dir.join("scenario.toml"), toml::to_string_pretty(&cfg)?)?;
    write_rows(std::io::stdout(), &summary_rows(&runs))?;
    eprintln!("done in {:.1} s; wrote {} file(s) to {}", t0.elapsed().as_secs_f64(), files.len() + 1, dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config, loads, slot, dba, seeds, jobs, cgs_occupancy_estimate, trace, duration, out } => {
            let o = match overrides(loads, slot, dba, seeds, jobs, cgs_occupancy_estimate, trace, duration, out) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match load_valid(&config, &o) {
                Ok(cfg) => run(cfg),
                Err(code) => return code,
            }
        }
        Cmd::Compare { baseline, candidate, baseline_class, candidate_class, out } => (|| {
            let read = |p: &Path| -> Result<_> {
                let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Ok(read_rows(f)?)
            };
            let (a, b) = (read(&baseline)?, read(&candidate)?);
            let deltas = compare(&a, &b, baseline_class.as_deref(), candidate_class.as_deref())?;
            write_rows(std::io::stdout(), &deltas)?;
            let out = out.unwrap_or_else(|| candidate.with_extension("delta.csv"));
            write_rows(std::fs::File::create(&out)?, &deltas)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        })(),
        Cmd::Validate { config } => match load_valid(&config, &Overrides::default()) {
            Ok(_) => {
                println!("{}: ok", config.display());
                Ok(())
            }
            Err(code) => return code,
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
