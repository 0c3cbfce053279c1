mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::RunConfig;
use output::{Artifact, Exit};

const FORMATS: &str = "\
Exit codes: 0 success, 1 configuration error (no output written), 2 certificate
failure, 3 solver failure.

Every output starts with a provenance comment
  # toric-legendre <version> config-sha256=<hash of the config file>
(a \"provenance\" field in JSON). CSV numbers carry 17 significant digits.

CSV columns:
  w-eval          x_1..x_n, alpha_1..alpha_n, w, dw_dx_1..dw_dx_n,
                  dw_dalpha_1..dw_dalpha_n, mixed_det
  forward         alpha_1..alpha_n, g, x_1..x_n, grad_norm, status
  invert          alpha_1..alpha_n, x_1..x_n, v_value, v_grad_1..v_grad_n, residual
  spectral-check  hbar, lambda_min, c_alpha, gap, gap_over_hbar

JSON reports:
  polytope-verify  dim, facets, normals, offsets, bounded, delzant, simple,
                   smooth, failures, vertices, analytic_center, fingerprint
  certify          condition, region, pass, worst_margin, witness, samples,
                   sub_checks (grid scans), note";

/// Generalized Legendre transform experiments on toric polytopes.
#[derive(Parser, Debug)]
#[command(name = "toric-legendre", version, after_long_help = FORMATS, after_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check simplicity and smoothness at every vertex.
    PolytopeVerify(Common),
    /// Evaluate the kinetic term W and its derivatives at sample points.
    WEval(Common),
    /// Sample G(α) = min_x V(x) + W(x, α) over the alpha box.
    Forward(Common),
    /// Reconstruct V at x(α) from G, by exact oracle or from a forward table.
    Invert(Common),
    /// Run one sampled certificate or hypothesis check.
    Certify(Common),
    /// Lowest radial eigenvalues against the classical value c_α.
    SpectralCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path; overrides the config's "output". Standard output if neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid sweeps and scans.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn load(common: &Common) -> Result<(RunConfig, String), String> {
    let bytes = std::fs::read(&common.config).map_err(|e| format!("{}: {e}", common.config.display()))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| format!("{}: {e}", common.config.display()))?;
    Ok((RunConfig::parse(text)?, output::provenance(&bytes)))
}

fn run(command: &Command) -> Result<(Artifact, Option<PathBuf>), (Exit, String)> {
    let common = match command {
        Command::PolytopeVerify(c)
        | Command::WEval(c)
        | Command::Forward(c)
        | Command::Invert(c)
        | Command::Certify(c)
        | Command::SpectralCheck(c) => c,
    };
    if common.threads == 0 {
        return Err((Exit::Config, "--threads must be at least 1".into()));
    }
    let (cfg, prov) = load(common).map_err(|e| (Exit::Config, e))?;
    let dir = common.config.parent().unwrap_or(Path::new("."));
    let out = common.out.clone().or_else(|| cfg.output.as_ref().map(|o| dir.join(o)));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| (Exit::Config, e.to_string()))?;
    let result = pool.install(|| match command {
        Command::PolytopeVerify(_) => commands::polytope_verify(&cfg, &prov),
        Command::WEval(_) => commands::w_eval_cmd(&cfg, &prov),
        Command::Forward(_) => commands::forward(&cfg, &prov, common.threads),
        Command::Invert(_) => commands::invert(&cfg, &prov, dir),
        Command::Certify(_) => commands::certify(&cfg, &prov),
        Command::SpectralCheck(_) => commands::spectral_check(&cfg, &prov),
    });
    match result {
        Ok(a) => Ok((a, out)),
        Err(Failure::Config(m)) => Err((Exit::Config, m)),
        Err(Failure::Solver(m)) => Err((Exit::Solver, m)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Config as u8 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok((artifact, out)) => {
            let written = match &out {
                Some(path) => std::fs::write(path, &artifact.body).map_err(|e| format!("{}: {e}", path.display())),
                None => {
                    print!("{}", artifact.body);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(Exit::Config as u8);
            }
            match artifact.exit {
                Exit::Certificate => eprintln!("certificate failed"),
                Exit::Solver => eprintln!("solver did not converge everywhere"),
                _ => {}
            }
            ExitCode::from(artifact.exit as u8)
        }
        Err((exit, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(exit as u8)
        }
    }
}
