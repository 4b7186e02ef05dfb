use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use divgp::experiments::{self, ExperimentConfig};
use divgp::Result;

#[derive(Parser)]
#[command(name = "divgp", version, about = "Divergence-free and curl-free GP regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error and rate table over the refinement ladder (convergence.csv).
    Convergence(Common),
    /// Finite-difference divergence/curl of the posterior mean (certificate.csv).
    Certificate(Common),
    /// Posterior tail frequencies against the Chebyshev bound (chebyshev.csv).
    Chebyshev(Common),
    /// Power function on a grid (powermap.csv).
    Powermap(Common),
    /// Prior, posterior or KL field samples (samples.csv).
    Sample(Common),
    /// Analytic kernel Hessians against finite differences (kernel_check.csv).
    KernelCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if !self.quiet {
            for w in cfg.regression_kernel()?.warnings() {
                eprintln!("warning: {w}");
            }
        }
        Ok(cfg)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn wrote(c: &Common, name: &str) {
    c.say(format!("wrote {}", Path::new(&c.out).join(name).display()));
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Convergence(c) => {
            let cfg = c.load()?;
            let report = experiments::run_convergence(&cfg)?;
            report.write_csv(c.create("convergence.csv")?)?;
            c.say(format!(
                "evaluation grid: {} points, margin {:.4}",
                report.grid_points, report.margin
            ));
            for (level, msg) in &report.failures {
                eprintln!("level {level} failed: {msg}");
            }
            for (norm, rate) in &report.rates {
                let predicted = experiments::predicted_rate(
                    experiments::rate_order(&cfg)?,
                    norm.s,
                    cfg.dim(),
                    norm.q,
                );
                match rate {
                    Some(r) => {
                        if r.dropped > 0 {
                            eprintln!("{}: dropped {} non-positive errors", norm.tag(), r.dropped);
                        }
                        c.say(format!(
                            "{}: observed rate {:.3} (pairwise {:?}), predicted {:.3}",
                            norm.tag(),
                            r.slope,
                            r.pairwise.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                            predicted
                        ));
                    }
                    None => c.say(format!("{}: too few usable levels for a rate", norm.tag())),
                }
            }
            wrote(&c, "convergence.csv");
            Ok(report.failures.is_empty())
        }
        Command::Certificate(c) => {
            let cfg = c.load()?;
            let report = experiments::run_divergence_certificate(&cfg)?;
            report.write_csv(c.create("certificate.csv")?)?;
            c.say(format!(
                "{:?} certificate: max scaled residual {:.3e} (tolerance {:.1e}) {}",
                report.structure,
                report.max_residual,
                report.tolerance,
                verdict(report.passed)
            ));
            wrote(&c, "certificate.csv");
            Ok(report.passed)
        }
        Command::Chebyshev(c) => {
            let cfg = c.load()?;
            let report = experiments::run_chebyshev_check(&cfg)?;
            report.write_csv(c.create("chebyshev.csv")?)?;
            let vacuous = report.rows.iter().filter(|r| r.bound > 1.0).count();
            c.say(format!(
                "chebyshev: {} checks, {} vacuous (bound > 1), {}",
                report.rows.len(),
                vacuous,
                verdict(report.passed)
            ));
            wrote(&c, "chebyshev.csv");
            Ok(report.passed)
        }
        Command::Powermap(c) => {
            let cfg = c.load()?;
            let report = experiments::run_power_map(&cfg)?;
            report.write_csv(c.create("powermap.csv")?)?;
            c.say(format!("max power function per level: {:?}", report.level_maxima));
            c.say(format!("max at data sites: {:.3e}", report.max_at_sites));
            if let Some(v) = report.bound_violations {
                c.say(format!("sup-error bound violations: {v}"));
            }
            wrote(&c, "powermap.csv");
            Ok(report.bound_violations.unwrap_or(0) == 0)
        }
        Command::Sample(c) => {
            let cfg = c.load()?;
            let report = experiments::run_sample(&cfg)?;
            report.write_csv(c.create("samples.csv")?)?;
            c.say(format!(
                "{} samples on {} grid points",
                report.samples.len(),
                report.grid.len()
            ));
            wrote(&c, "samples.csv");
            Ok(true)
        }
        Command::KernelCheck(c) => {
            let cfg = c.load()?;
            let report = experiments::run_kernel_check(&cfg)?;
            report.write_csv(c.create("kernel_check.csv")?)?;
            let ok = report.max_hessian_error <= 1e-5 && report.max_laplacian_error <= 1e-12;
            c.say(format!(
                "max hessian error {:.3e}, max laplacian-trace error {:.3e} {}",
                report.max_hessian_error,
                report.max_laplacian_error,
                verdict(ok)
            ));
            wrote(&c, "kernel_check.csv");
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
