use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use onperc::checkpoint::Checkpoint;
use onperc::config::{GridValue, RawSpec, Recipe};
use onperc::experiments::run_experiment;
use onperc::lattice::{BondMask, LatticeGraph};
use onperc::observables::{energy_per_bond, ising_magnetization};
use onperc::output::{analyze_point, analyze_run, fmt_f64, verdict_lines, write_outcome, OBSERVABLE_HEADER};
use onperc::rng::{grid_stream, mask_stream, seeded};
use onperc::sampler::{ChainState, Schedule};
use onperc::spin::ModelParams;
use onperc::Error;

const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "onperc", version, about = "Percolation analysis of two-dimensional O(N) spin models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single chain, optionally stopping early with a checkpoint.
    Simulate {
        #[command(flatten)]
        spec: SpecFlags,
        /// Checkpoint path (default: <output>/chain.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop once the chain has done this many sweeps in total.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Recompute estimates and fits from the files of a finished run.
    Analyze { dir: PathBuf },
    /// Run a named recipe over its parameter grid.
    Experiment {
        recipe: String,
        #[command(flatten)]
        spec: SpecFlags,
    },
    /// Run the oracle suite.
    Validate {
        #[command(flatten)]
        spec: SpecFlags,
    },
    /// Continue a checkpointed chain.
    Resume {
        checkpoint: PathBuf,
        /// Stop once the chain has done this many sweeps in total.
        #[arg(long)]
        stop_after: Option<u64>,
        /// Expected β; the resume is refused if it differs from the stored one.
        #[arg(long)]
        beta: Option<f64>,
        /// Expected number of spin components.
        #[arg(long)]
        n: Option<usize>,
    },
}

/// Flags mirroring the spec file; they override values read from `--config`.
#[derive(Args, Default)]
struct SpecFlags {
    /// TOML spec file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma list of β values.
    #[arg(long)]
    beta: Option<String>,
    /// standard, cut or richard.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    richard_b: Option<f64>,
    /// triangular or square.
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    dilution: Option<String>,
    #[arg(long)]
    thermalization: Option<u64>,
    #[arg(long)]
    measurements: Option<u64>,
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    cluster_every: Option<u64>,
    /// reference or random.
    #[arg(long)]
    axis: Option<String>,
    /// sequential or checkerboard.
    #[arg(long)]
    order: Option<String>,
    /// hot or cold.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    strict: Option<bool>,
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long)]
    c_values: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn keyword<T: DeserializeOwned>(flag: &str, value: &Option<String>) -> Result<Option<T>, Failure> {
    value
        .as_ref()
        .map(|v| {
            serde_json::from_value(serde_json::Value::String(v.clone()))
                .map_err(|_| Failure::Usage(format!("invalid value `{v}` for --{flag}")))
        })
        .transpose()
}

fn grid(value: &Option<String>) -> Option<GridValue> {
    value.as_ref().map(|s| GridValue::Text(s.clone()))
}

impl SpecFlags {
    fn raw(&self) -> Result<RawSpec, Failure> {
        let mut raw = match &self.config {
            Some(p) => RawSpec::from_file(p)?,
            None => RawSpec::default(),
        };
        let mut f = RawSpec {
            seed: self.seed,
            output: self.output.clone(),
            ..RawSpec::default()
        };
        f.model.n = self.n;
        f.model.beta = grid(&self.beta);
        f.model.variant = keyword("variant", &self.variant)?;
        f.model.epsilon = grid(&self.epsilon);
        f.model.richard_b = self.richard_b;
        f.lattice.kind = keyword("lattice", &self.lattice)?;
        f.lattice.sizes = grid(&self.sizes);
        f.lattice.dilution = grid(&self.dilution);
        let s = &mut f.schedule;
        s.thermalization = self.thermalization;
        s.measurements = self.measurements;
        s.interval = self.interval;
        s.cluster_every = self.cluster_every;
        s.axis = keyword("axis", &self.axis)?;
        s.order = keyword("order", &self.order)?;
        s.start = keyword("start", &self.start)?;
        s.strict = self.strict;
        f.analysis.significance = self.significance;
        f.analysis.c_values = grid(&self.c_values);
        f.analysis.threads = self.threads;
        raw.overlay(&f);
        Ok(raw)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(Error::io(path.display().to_string(), e).to_string())
}

fn experiment(recipe: Option<Recipe>, flags: &SpecFlags) -> Result<u8, Failure> {
    let spec = flags.raw()?.resolve(recipe)?;
    println!("running {} over {} grid points, seed {}", spec.recipe, spec.grid()?.len(), spec.seed);
    let outcome = run_experiment(&spec)?;
    let manifest = write_outcome(&outcome, &spec.output)?;
    for f in &outcome.failures {
        eprintln!("grid point {} failed: {}", f.point.index, f.error);
    }
    print!("{}", verdict_lines(&outcome.verdicts));
    println!(
        "wrote {} files to {} in {:.1} s",
        manifest.files.len() + 1,
        spec.output.display(),
        outcome.seconds
    );
    Ok(if outcome.verdicts_pass() && outcome.failures.is_empty() { 0 } else { EXIT_VERDICT })
}

struct Chain {
    graph: LatticeGraph,
    params: ModelParams,
    mask: BondMask,
    schedule: Schedule,
    chain: ChainState,
    seed: u64,
}

/// Advances `c` to `stop` sweeps, appending energy and magnetization rows to
/// `observables.csv` next to the checkpoint, then saves the checkpoint.
fn advance(c: &mut Chain, stop: Option<u64>, ckpt: &Path) -> Result<(), Failure> {
    let dir = ckpt.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv = dir.join("observables.csv");
    let fresh = c.chain.sweeps == 0 || !csv.exists();
    let mut rows = String::new();
    if fresh {
        rows.push_str(OBSERVABLE_HEADER);
        rows.push('\n');
    }
    let end = stop.unwrap_or(u64::MAX);
    let (graph, params, mask) = (&c.graph, &c.params, &c.mask);
    c.chain.run_until(graph, params, mask, &c.schedule, end, |k, ch| {
        let e = energy_per_bond(&ch.config, graph, mask);
        let m = ising_magnetization(&ch.config, &params.axis);
        rows.push_str(&format!("{k},energy,{}\n{k},magnetization,{}\n", fmt_f64(e), fmt_f64(m)));
    })?;
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&csv)
        .map_err(|e| io_err(&csv, e))?;
    file.write_all(rows.as_bytes()).map_err(|e| io_err(&csv, e))?;
    Checkpoint::capture(&c.chain, &c.graph, &c.params, &c.mask, &c.schedule, c.seed)?.save(ckpt)?;
    let total = c.schedule.total_sweeps();
    println!(
        "{} of {} sweeps, acceptance {:.3}, checkpoint {}",
        c.chain.sweeps,
        total,
        c.chain.acceptance_rate(),
        ckpt.display()
    );
    Ok(())
}

fn simulate(flags: &SpecFlags, checkpoint: Option<PathBuf>, stop: Option<u64>) -> Result<u8, Failure> {
    let spec = flags.raw()?.resolve(Some(Recipe::Custom))?;
    let points = spec.grid()?;
    let [point] = points.as_slice() else {
        return Err(Failure::Usage(format!(
            "simulate runs one chain but the grid has {} points; use `experiment custom` for grids",
            points.len()
        )));
    };
    let graph = LatticeGraph::new(spec.lattice, point.size)?;
    let mask = if point.dilution > 0.0 {
        BondMask::dilute(&graph, point.dilution, &mut seeded(spec.seed, mask_stream(0)))?
    } else {
        BondMask::full(&graph)
    };
    let chain = ChainState::new(&graph, &point.params, &mask, spec.start, seeded(spec.seed, grid_stream(0)))?;
    let mut c = Chain {
        graph,
        params: point.params.clone(),
        mask,
        schedule: spec.schedule.clone(),
        chain,
        seed: spec.seed,
    };
    let ckpt = checkpoint.unwrap_or_else(|| spec.output.join("chain.ckpt"));
    advance(&mut c, stop, &ckpt)?;
    Ok(0)
}

fn resume(path: &Path, stop: Option<u64>, beta: Option<f64>, n: Option<usize>) -> Result<u8, Failure> {
    let cp = Checkpoint::load(path)?;
    let mut expected = cp.header.params.clone();
    if let Some(b) = beta {
        expected.beta = b;
    }
    if let Some(n) = n {
        expected.n = n;
    }
    cp.ensure_params(&expected)?;
    let r = cp.restore()?;
    let mut c = Chain {
        graph: r.graph,
        params: r.params,
        mask: r.mask,
        schedule: r.schedule,
        chain: r.chain,
        seed: r.seed,
    };
    advance(&mut c, stop, path)?;
    Ok(0)
}

fn analyze(dir: &Path) -> Result<u8, Failure> {
    let results = if dir.join("manifest.json").exists() {
        analyze_run(dir)?
    } else {
        let cp = Checkpoint::load(&dir.join("chain.ckpt"))?;
        vec![analyze_point(dir, cp.header.size * cp.header.size)?]
    };
    for a in &results {
        println!("{}", a.dir);
        for (name, e) in &a.estimates {
            println!("  {name:<24} {:>14.6e} ± {:.2e}  (tau {:.1})", e.mean, e.error, e.tau);
        }
        if let Some(f) = &a.two_point_fit {
            let best = f.best();
            let params: Vec<String> = best
                .params
                .iter()
                .map(|p| format!("{} = {:.4} ± {:.4}", p.name, p.value, p.error))
                .collect();
            println!("  two-point fit {:?}: {}", best.model, params.join(", "));
        }
        if let Some(e) = &a.two_point_fit_error {
            println!("  two-point fit failed: {e}");
        }
    }
    let path = dir.join("analysis.json");
    let json = serde_json::to_vec_pretty(&results).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Simulate { spec, checkpoint, stop_after } => simulate(&spec, checkpoint, stop_after),
        Command::Analyze { dir } => analyze(&dir),
        Command::Experiment { recipe, spec } => {
            let recipe: Recipe = recipe.parse()?;
            experiment(Some(recipe), &spec)
        }
        Command::Validate { spec } => experiment(Some(Recipe::Validate), &spec),
        Command::Resume { checkpoint, stop_after, beta, n } => resume(&checkpoint, stop_after, beta, n),
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
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
