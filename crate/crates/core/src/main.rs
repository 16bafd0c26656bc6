use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use affsym::report::{self, Command, Format, RunConfig, RunError, SurfaceConfig};

/// Equiaffine apparatus and pointwise symmetry of hypersurfaces in R^4.
///
/// Exit status: 0 when every check passes, 1 on check failures, 2 on
/// configuration, domain or I/O errors.
#[derive(Parser, Debug)]
#[command(name = "affsym", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// JSON run configuration; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Catalog id, e.g. `z2z2` or `proper_warped:hyperbolic_xyz`.
    #[arg(long, global = true)]
    surface: Option<String>,

    /// Single point `t,u,v`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    point: Option<String>,

    /// Lattice `t=start:stop:count,u=...,v=...`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,

    /// Report file; standard output when absent.
    #[arg(long, global = true)]
    output: Option<String>,

    /// `json` or `csv`.
    #[arg(long, global = true)]
    format: Option<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Classifier zero threshold.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[arg(long, global = true)]
    point_tol: Option<f64>,

    #[arg(long, global = true)]
    fd_tol: Option<f64>,

    #[arg(long, global = true)]
    structure_tol: Option<f64>,

    #[arg(long, global = true)]
    symmetry_tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Symmetry group and normal-form parameters at one point.
    Classify,
    /// Per-point classification, residuals and frame fields over a grid.
    Scan,
    /// Residual table of the fundamental and structure equations.
    Verify,
    /// Sampled surface points and the definiteness report.
    Construct,
}

fn build_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let base = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            Some(report::parse_config(&text)?)
        }
        None => None,
    };
    let command = match (cli.command, &base) {
        (Some(c), _) => match c {
            Cmd::Classify => Command::Classify,
            Cmd::Scan => Command::Scan,
            Cmd::Verify => Command::Verify,
            Cmd::Construct => Command::Construct,
        },
        (None, Some(b)) => b.command,
        (None, None) => return Err(RunError::Config("no command given".into())),
    };
    let surface = match (&cli.surface, &base) {
        (Some(s), _) => SurfaceConfig::Id(s.clone()),
        (None, Some(b)) => b.surface.clone(),
        (None, None) => return Err(RunError::Config("no surface given (use --surface)".into())),
    };
    let mut cfg = base.unwrap_or(RunConfig {
        command,
        surface: surface.clone(),
        point: None,
        grid: None,
        tolerances: Default::default(),
        output: Default::default(),
        seed: 0,
    });
    cfg.command = command;
    cfg.surface = surface;
    if let Some(p) = &cli.point {
        cfg.point = Some(report::parse_point(p)?);
    }
    if let Some(g) = &cli.grid {
        cfg.grid = Some(g.clone());
    }
    if let Some(o) = &cli.output {
        cfg.output.path = Some(o.clone());
    }
    if let Some(f) = &cli.format {
        cfg.output.format = f.parse::<Format>()?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let t = &mut cfg.tolerances;
    for (slot, flag) in [
        (&mut t.classify, cli.tol),
        (&mut t.point, cli.point_tol),
        (&mut t.fd, cli.fd_tol),
        (&mut t.structure, cli.structure_tol),
        (&mut t.symmetry, cli.symmetry_tol),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<u8, RunError> {
    let cfg = build_config(cli)?;
    let out = report::run(&cfg)?;
    let text = out.rendered(cfg.output.format);
    match &cfg.output.path {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| RunError::Io(format!("{path}: {e}")))?
        }
        None => print!("{text}"),
    }
    Ok(out.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("affsym: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
