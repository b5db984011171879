// SPDX-License-Identifier: Apache-2.0

//! Subcommands of the `f2fplace` binary: place, eval, gen and render.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use f2fplace::evaluate::{check_legality, report, CheckOptions};
use f2fplace::flow::{place, FlowOptions};
use f2fplace::global_place::{AlphaSetting, GpConfig};
use f2fplace::io::{parse_design, parse_solution, render_solution_svg, render_state_svg, write_design, write_solution, DieView};
use f2fplace::model::Design;
use f2fplace::synth::{generate, SynthParams};
use f2fplace::wirelength::WlModel;
use f2fplace::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "f2fplace", version, about = "Placement for face-to-face bonded two-die 3D ICs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Place a design and write the solution.
    Place(PlaceArgs),
    /// Score a solution and check its legality.
    Eval(EvalArgs),
    /// Write a seeded synthetic design.
    Gen(GenArgs),
    /// Draw a solution as SVG.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bistratal,
    Plain,
}

#[derive(Args, Debug, Default)]
pub struct PlaceArgs {
    /// Design file.
    pub input: PathBuf,
    /// Solution file to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Global placement settings as `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cut weight, a number or `auto`.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub stop_overflow: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop after legalization.
    #[arg(long)]
    pub skip_dp: bool,
    /// Write the per-iteration global placement trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write `<prefix>_gp.svg`, `<prefix>_top.svg` and `<prefix>_bottom.svg`.
    #[arg(long)]
    pub svg: Option<String>,
    #[arg(long, value_enum)]
    pub wl_model: Option<ModelArg>,
    /// Drop the finite-difference depth gradient.
    #[arg(long)]
    pub no_fda: bool,
    /// Recheck the exact wirelength after every detailed-placement commit.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub design: PathBuf,
    pub solution: PathBuf,
    /// Print `key=value` lines instead of the table.
    #[arg(long)]
    pub kv: bool,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub cells: usize,
    /// Net count; defaults to 0.967 per cell.
    #[arg(long)]
    pub nets: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Width multiplier of the top technology.
    #[arg(long, default_value_t = 1.3)]
    pub hetero: f64,
    #[arg(long, default_value_t = 0.70)]
    pub top_util: f64,
    #[arg(long, default_value_t = 0.75)]
    pub bottom_util: f64,
    /// Share of the combined die capacity taken by cells.
    #[arg(long, default_value_t = 0.8)]
    pub fill: f64,
    #[arg(long, default_value_t = 10.0)]
    pub row_height: f64,
    #[arg(long, default_value_t = 4.0)]
    pub terminal_size: f64,
    #[arg(long, default_value_t = 4.0)]
    pub terminal_spacing: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Top,
    Bottom,
    Both,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    pub design: PathBuf,
    pub solution: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ViewArg::Both)]
    pub die: ViewArg,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_design(path: &Path) -> Result<Design> {
    parse_design(&read(path)?).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Validation(format!("{}:{line}: {msg}", path.display())),
        other => other,
    })
}

/// Config file first, then command-line overrides.
pub fn effective_config(args: &PlaceArgs) -> Result<FlowOptions> {
    let mut gp = GpConfig::default();
    if let Some(path) = &args.config {
        gp.apply_text(&read(path)?)?;
    }
    if let Some(s) = args.seed {
        gp.seed = s;
    }
    if let Some(a) = &args.alpha {
        gp.alpha = if a == "auto" {
            AlphaSetting::Auto
        } else {
            AlphaSetting::Fixed(a.parse().map_err(|_| Error::Config(format!("invalid --alpha {a:?}")))?)
        };
    }
    if let Some(v) = args.stop_overflow {
        gp.stop_overflow = v;
    }
    if let Some(v) = args.max_iters {
        gp.max_iters = v;
    }
    if let Some(m) = args.wl_model {
        gp.model = match m {
            ModelArg::Bistratal => WlModel::Bistratal,
            ModelArg::Plain => WlModel::Plain,
        };
    }
    if args.no_fda {
        gp.fda = false;
    }
    gp.validate()?;
    let mut opts = FlowOptions { gp, skip_dp: args.skip_dp, ..Default::default() };
    opts.detail.audit = args.audit;
    Ok(opts)
}

fn print_config(out: &mut dyn Write, opts: &FlowOptions) {
    for line in opts.gp.to_text().lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "# skip_dp = {}", opts.skip_dp);
    let _ = writeln!(out, "# dp_rounds = {}", opts.detail.rounds);
    let _ = writeln!(out, "# audit = {}", opts.detail.audit);
}

pub fn cmd_place(args: &PlaceArgs, out: &mut dyn Write) -> Result<()> {
    let opts = effective_config(args)?;
    print_config(out, &opts);
    let design = load_design(&args.input)?;
    let start = Instant::now();
    let result = place(&design, &opts)?;
    let runtime = start.elapsed().as_secs_f64();
    write(&args.output, &write_solution(&design, &result.solution))?;
    if let Some(path) = &args.trace {
        write(path, &result.gp.trace.to_csv())?;
    }
    if let Some(prefix) = &args.svg {
        write(Path::new(&format!("{prefix}_gp.svg")), &render_state_svg(&design, &result.gp.state, DieView::Both))?;
        for (view, name) in [(DieView::Top, "top"), (DieView::Bottom, "bottom")] {
            let svg = render_solution_svg(&design, &result.solution, view);
            write(Path::new(&format!("{prefix}_{name}.svg")), &svg)?;
        }
    }
    let last = result.gp.trace.records.last();
    let _ = writeln!(
        out,
        "global placement: {} iterations, overflow {:.4}, {} cut nets, polarized {:.4}, converged {}",
        result.gp.iterations,
        last.map_or(0.0, |r| r.overflow),
        last.map_or(0, |r| r.cut),
        result.gp.polarized,
        result.gp.converged
    );
    let _ = writeln!(out, "legalized wirelength {:.2}", result.legal_wl);
    if !result.refine_history.is_empty() {
        let hist: Vec<String> = result.refine_history.iter().map(|w| format!("{w:.2}")).collect();
        let _ = writeln!(
            out,
            "detailed placement: {} swaps, {} reorders, wirelength {}",
            result.swaps,
            result.reorders,
            hist.join(" -> ")
        );
    }
    let rep = report(&design, &result.solution, Some(runtime))?;
    let _ = write!(out, "{}", rep.to_text());
    Ok(())
}

/// Returns whether the solution is legal.
pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<bool> {
    let design = load_design(&args.design)?;
    let sol = parse_solution(&read(&args.solution)?, &design)?;
    let rep = report(&design, &sol, None)?;
    let legality = check_legality(&design, &sol, &CheckOptions::default());
    if args.kv {
        let _ = write!(out, "{}legal={}\nviolations={}\n", rep.to_kv(), legality.is_legal(), legality.violations.len());
    } else {
        let _ = write!(out, "{}", rep.to_text());
        let _ = writeln!(out, "legal       {}", legality.is_legal());
    }
    for v in &legality.violations {
        let _ = writeln!(out, "violation: {v}");
    }
    Ok(legality.is_legal())
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let params = SynthParams {
        cells: args.cells,
        nets: args.nets,
        seed: args.seed,
        hetero: args.hetero,
        top_util: args.top_util,
        bottom_util: args.bottom_util,
        fill: args.fill,
        row_height: args.row_height,
        terminal_size: args.terminal_size,
        terminal_spacing: args.terminal_spacing,
    };
    let _ = writeln!(out, "# {params:?}");
    let design = generate(&params)?;
    write(&args.output, &write_design(&design))?;
    let _ = writeln!(
        out,
        "wrote {} cells, {} nets, {} pins to {}",
        design.num_nodes(),
        design.num_nets(),
        design.num_pins(),
        args.output.display()
    );
    Ok(())
}

pub fn cmd_render(args: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    let design = load_design(&args.design)?;
    let sol = parse_solution(&read(&args.solution)?, &design)?;
    let view = match args.die {
        ViewArg::Top => DieView::Top,
        ViewArg::Bottom => DieView::Bottom,
        ViewArg::Both => DieView::Both,
    };
    let _ = writeln!(out, "# view = {:?}", args.die);
    write(&args.output, &render_solution_svg(&design, &sol, view))?;
    Ok(())
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Place(a) => cmd_place(a, out).map(|_| 0),
        Command::Eval(a) => cmd_eval(a, out).map(|legal| if legal { 0 } else { 1 }),
        Command::Gen(a) => cmd_gen(a, out).map(|_| 0),
        Command::Render(a) => cmd_render(a, out).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
