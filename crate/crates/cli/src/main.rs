use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cfmimo::experiment::{
    run_nmse_sweep, run_phase_grid, run_se_cdf, run_sum_se_sweep, run_validation, Corruption, ExperimentConfig,
    FigureData,
};
use cfmimo::mcsim::Verdict;

/// Cell-free massive MIMO downlink SE under phase noise and asynchronous
/// reception.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Channel-estimation NMSE against phase-noise variance.
    Fig1(Common),
    /// Per-UE SE distributions (ideal, oscillator, delay).
    Fig2(Common),
    /// Sum SE against phase-noise variance per transmission mode.
    Fig3(Common),
    /// Sum SE over the AP/UE phase-variance grid.
    Fig4(Common),
    /// Check closed-form SINR against Monte Carlo on a small scenario.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, hide = true)]
        corrupt: Option<CorruptArg>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config, merged onto the command's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Number of random layouts.
    #[arg(long)]
    scenes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorruptArg {
    Numerator,
}

enum Kind {
    Fig(u8),
    Validate,
}

impl Common {
    fn load(&self, kind: &Kind) -> Result<ExperimentConfig> {
        let base = match kind {
            Kind::Validate => ExperimentConfig::desk(),
            Kind::Fig(_) => ExperimentConfig::default(),
        };
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p, &base).with_context(|| format!("loading {}", p.display()))?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(n) = self.scenes {
            cfg.num_scenes = n;
        }
        if let Some(t) = self.trials {
            match kind {
                Kind::Fig(2) => cfg.fig2.mc_trials = t,
                _ => cfg.mc.trials = t,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(fig: &FigureData, cfg: &ExperimentConfig) -> Result<()> {
    let (csv, meta) = fig.write(&cfg.out_dir)?;
    println!("wrote {} ({} rows) and {}", csv.display(), fig.rows.len(), meta.display());
    Ok(())
}

fn run(cli: Cli) -> Result<Verdict> {
    let (common, kind, corrupt) = match &cli.cmd {
        Cmd::Fig1(c) => (c, Kind::Fig(1), None),
        Cmd::Fig2(c) => (c, Kind::Fig(2), None),
        Cmd::Fig3(c) => (c, Kind::Fig(3), None),
        Cmd::Fig4(c) => (c, Kind::Fig(4), None),
        Cmd::Validate { common, corrupt } => (common, Kind::Validate, *corrupt),
    };
    let cfg = common.load(&kind)?;
    match kind {
        Kind::Fig(n) => {
            let fig = match n {
                1 => run_nmse_sweep(&cfg)?,
                2 => run_se_cdf(&cfg)?,
                3 => run_sum_se_sweep(&cfg)?,
                _ => run_phase_grid(&cfg)?,
            };
            write(&fig, &cfg)?;
            Ok(Verdict::Pass)
        }
        Kind::Validate => {
            let corrupt = corrupt.map(|CorruptArg::Numerator| Corruption::Numerator);
            let (report, fig) = run_validation(&cfg, corrupt)?;
            write(&fig, &cfg)?;
            let failed = report.entries.iter().filter(|e| !e.pass).count();
            let inconclusive = report.entries.iter().filter(|e| e.inconclusive).count();
            println!(
                "scenario {}: {} entries, {} failed, {} inconclusive, max rel err {:.4} (tol {}), {} trials",
                report.scenario_id,
                report.entries.len(),
                failed,
                inconclusive,
                report.max_rel_err,
                report.tol_rel,
                report.trials
            );
            println!("verdict: {:?}", report.verdict);
            Ok(report.verdict)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap uses exit status 2 for usage errors; 2 means a failed
            // validation here.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(v) => ExitCode::from(v.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
