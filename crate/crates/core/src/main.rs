use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use patchmg::bench::{describe, diagnose, run, BenchSpec, Problem};
use patchmg::krylov::KspType;
use patchmg::multigrid::{CycleType, LevelAccel};
use patchmg::patchsmoother::{ConstructType, LocalType, Weighting};
use patchmg::topology::CellType;

#[derive(Parser)]
#[command(name = "patchmg", about = "Patch-smoothed multigrid experiments on 2D finite element problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and print an iteration-count table.
    Bench {
        problem: String,
        #[command(flatten)]
        opts: Opts,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the spectrum of the additive patch-preconditioned operator.
    Diagnose {
        problem: String,
        #[command(flatten)]
        opts: Opts,
        #[arg(long, default_value_t = 60)]
        lanczos_its: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cell {
    Tri,
    Quad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Construct {
    Star,
    Vanka,
    Pardecomp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Local {
    Additive,
    Multiplicative,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ksp {
    Cg,
    Gmres,
    Richardson,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cycle {
    V,
    F,
}

#[derive(Args)]
struct Opts {
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    base: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    cell: Option<Cell>,
    #[arg(long, value_delimiter = ',')]
    refine: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    param: Option<Vec<f64>>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_enum)]
    construct_type: Option<Construct>,
    #[arg(long)]
    construct_dim: Option<usize>,
    #[arg(long, value_enum)]
    local_type: Option<Local>,
    #[arg(long, allow_negative_numbers = true)]
    damping: Option<f64>,
    #[arg(long)]
    pou: bool,
    /// Solve patches with LU factors instead of explicit inverses.
    #[arg(long)]
    lu: bool,
    #[arg(long, value_delimiter = ',')]
    exclude_subspaces: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    ksp: Option<Ksp>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long, value_enum)]
    cycle: Option<Cycle>,
    #[arg(long)]
    smooth: Option<usize>,
    #[arg(long)]
    cheby_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn build_spec(problem: &str, o: &Opts) -> patchmg::Result<BenchSpec> {
    let problem: Problem = problem.parse()?;
    let mut s = BenchSpec::new(problem);
    if let Some(b) = &o.base {
        s.base = (b[0], b[1]);
    }
    if let Some(c) = o.cell {
        s.cell = match c {
            Cell::Tri => CellType::Triangle,
            Cell::Quad => CellType::Quadrilateral,
        };
    }
    if let Some(r) = &o.refine {
        s.refinements = r.clone();
    }
    if let Some(p) = &o.param {
        s.params = p.clone();
    }
    if let Some(k) = o.degree {
        s.degree = k;
    }
    if let Some(c) = o.construct_type {
        s.smoother.construct_type = match c {
            Construct::Star => ConstructType::Star,
            Construct::Vanka => ConstructType::Vanka,
            Construct::Pardecomp => ConstructType::Pardecomp,
        };
    }
    if let Some(d) = o.construct_dim {
        s.smoother.construct_dim = d;
    }
    if let Some(l) = o.local_type {
        s.smoother.local_type = match l {
            Local::Additive => LocalType::Additive,
            Local::Multiplicative => LocalType::Multiplicative,
        };
    }
    if let Some(d) = o.damping {
        s.damping = Some(d);
        if !matches!(s.cycle.accel, LevelAccel::Richardson { .. }) {
            s.cycle.accel = LevelAccel::Richardson { scale: d };
        }
    }
    if o.lu {
        s.smoother.dense_inverse = false;
    }
    if o.pou {
        s.smoother.weighting = Weighting::PartitionOfUnity;
    }
    if let Some(e) = &o.exclude_subspaces {
        s.smoother.exclude_subspaces = e.clone();
    }
    if let Some(k) = o.ksp {
        s.ksp.ksp_type = match k {
            Ksp::Cg => KspType::Cg,
            Ksp::Gmres => KspType::Gmres,
            Ksp::Richardson => KspType::Richardson,
        };
    }
    if let Some(r) = o.rtol {
        s.ksp.rtol = r;
    }
    if let Some(m) = o.maxit {
        s.ksp.maxit = m;
    }
    if let Some(r) = o.restart {
        s.ksp.restart = r;
    }
    if let Some(c) = o.cycle {
        s.cycle.cycle = match c {
            Cycle::V => CycleType::V,
            Cycle::F => CycleType::F,
        };
    }
    if let Some(m) = o.smooth {
        s.cycle.pre_smooth = m;
        s.cycle.post_smooth = m;
    }
    if let Some(k) = o.cheby_order {
        s.cycle.accel = LevelAccel::Chebyshev { order: k, bounds: None };
    }
    s.seed = o.seed;
    s.validate()?;
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench { problem, opts, format, out } => build_spec(&problem, &opts).and_then(|spec| {
            eprintln!("{}", describe(&spec));
            let table = run(&spec)?;
            let text = match format {
                Format::Csv => table.to_csv(),
                Format::Md => table.to_markdown(),
            };
            match out {
                Some(path) => fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }),
        Command::Diagnose { problem, opts, lanczos_its } => build_spec(&problem, &opts).and_then(|spec| {
            let r = spec.refinements.first().copied().unwrap_or(0);
            let p = spec.params.first().copied().unwrap_or(1.0);
            let d = diagnose(&spec, r, p, lanczos_its)?;
            println!("{d}");
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
