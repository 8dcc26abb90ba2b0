use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use stefan::config::RunConfig;
use stefan::evolution::{run, SimState};
use stefan::geometry::{BoundaryField, FieldKind, NormalGraph};
use stefan::output::{self, EventsSummary};
use stefan::{evolution, overlap, report, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CAP: u8 = 4;

#[derive(Parser)]
#[command(
    name = "stefan",
    version,
    about = "Quasistationary Stefan flow with overlap cutting"
)]
struct Cli {
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the initial curve and its frame description.
    Shapegen(Common),
    /// Solve the Robin problem once on the initial curve.
    Solve(Common),
    /// Report the initial melting diagnostics.
    Diagnose(Common),
    /// Run the flow and write frames and events.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Extra Robin solves per step.
        #[arg(long)]
        picard: Option<usize>,
    },
    /// Render a curve CSV to SVG.
    Render {
        /// Curve CSV with columns s,x,y and optionally mask.
        #[arg(long)]
        input: PathBuf,
        /// SVG file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn load(common: &Common) -> stefan::Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output.directory = out.clone();
    }
    fs::create_dir_all(&cfg.output.directory)
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.output.directory.display())))?;
    let dir = cfg.output.directory.clone();
    Ok((cfg, dir))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn shapegen(common: &Common) -> stefan::Result<u8> {
    let (cfg, dir) = load(common)?;
    let init = cfg.initial()?;
    let curve = &init.frame.base;
    fs::write(dir.join("initial.csv"), curve.to_csv())?;
    fs::write(dir.join("frame.json"), json(&init.frame.to_file()))?;
    let mask = vec![false; curve.len()];
    fs::write(dir.join("initial.svg"), output::render_svg(curve, &mask))?;
    info!("wrote {} nodes to {}", curve.len(), dir.display());
    Ok(0)
}

fn solve(common: &Common) -> stefan::Result<u8> {
    let (cfg, dir) = load(common)?;
    let init = cfg.initial()?;
    let frame = &init.frame;
    let n = frame.len();
    let rho = NormalGraph::zeros(n);
    let h = BoundaryField::new(FieldKind::Curvature, frame.geom.curvature.clone())?;
    let cut = overlap::cut(frame, &rho)?;
    let h_tilde = overlap::cut_curvature(&h, &cut.mask)?;
    let (system, sol) =
        evolution::robin_solve(frame, &frame.base, &cut, &h_tilde, cfg.solver.opening)?;
    if let Some(w) = system.warning() {
        warn!(
            "near-touching boundary (gap {:.3e}), condition estimate {:.3e}",
            w.min_gap, w.condition_estimate
        );
    }
    let mut text = String::from("s,u,H,sigma\n");
    for i in 0..n {
        text.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            stefan::geometry::param(i, n),
            sol.u.values[i],
            h_tilde.values[i],
            sol.sigma.values[i]
        ));
    }
    fs::write(dir.join("trace.csv"), text)?;
    info!("residual {:.3e}", sol.residual);
    Ok(0)
}

fn diagnose(common: &Common) -> stefan::Result<u8> {
    let (cfg, dir) = load(common)?;
    let init = cfg.initial()?;
    let rep = report::diagnose(&init.frame, init.bridge_x, cfg.solver.opening)?;
    fs::write(dir.join("report.json"), json(&rep))?;
    let r = cfg.shape.spec.radius;
    println!(
        "u range      [{:.6}, {:.6}]  (bounds [{:.6}, 1])",
        rep.u_min,
        rep.u_max,
        -1.0 / r
    );
    for p in &rep.probes {
        match p.u {
            Some(u) => println!("u({:.3}, {:+.3}) = {u:.6}", p.x, p.y),
            None => println!("u({:.3}, {:+.3}) outside the liquid", p.x, p.y),
        }
    }
    for (k, f) in rep.flats.iter().enumerate() {
        println!(
            "flat {k}: H - u in [{:.4}, {:.4}], negative on {:.4} of {:.4}",
            f.min_h_minus_u, f.max_h_minus_u, f.negative_length, f.flat_length
        );
    }
    println!(
        "robin energy {:.6} (pi = {:.6})",
        rep.energy.robin,
        std::f64::consts::PI
    );
    println!("melting prediction: {}", rep.verdict());
    Ok(0)
}

fn simulate(common: &Common, picard: Option<usize>) -> stefan::Result<u8> {
    let (mut cfg, dir) = load(common)?;
    if let Some(k) = picard {
        cfg.step.picard = k;
    }
    let init = cfg.initial()?;
    let out = run(SimState::new(init.frame), &cfg.step_config())?;
    output::write_run(&dir, &out, common.config.as_deref(), cfg.output.svg)?;
    let summary = EventsSummary::from_run(&out, common.config.as_deref().map(Path::new));
    for e in &summary.events {
        info!("{:?} at t = {:.6} ({})", e.kind, e.t, e.detail);
    }
    Ok(if out.failed() {
        EXIT_NUMERIC
    } else if out.capped() {
        EXIT_CAP
    } else {
        0
    })
}

fn render(input: &Path, out: &Path) -> stefan::Result<u8> {
    let text = fs::read_to_string(input)?;
    let (curve, mask) = output::read_frame_csv(&text)?;
    fs::write(out, output::render_svg(&curve, &mask))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Shapegen(c) => shapegen(c),
        Command::Solve(c) => solve(c),
        Command::Diagnose(c) => diagnose(c),
        Command::Simulate { common, picard } => simulate(common, *picard),
        Command::Render { input, out } => render(input, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
