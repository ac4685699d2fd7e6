use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fknockoff::basis::Domain;
use fknockoff::experiment::{
    aggregate, bench_specs, detail_rows, emit_report, observed_panels, parse_config, run_pipeline, working_basis,
    ExperimentError, ExperimentSpec, Method,
};
use fknockoff::fpca::fit_fpca;
use fknockoff::knockoff::{estimate_theta_c, sample_knockoffs, solve_r, write_theta_csv};
use fknockoff::simgen::{self, Model};

#[derive(Parser, Debug)]
#[command(author, version, about = "Functional model-X knockoff selection", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate simulated curves, responses and the true support
    Simulate(Common),
    /// Estimate the score correlation, solve for the diagonal and sample knockoffs
    Knockoffs(Common),
    /// Run the regression selection pipeline (SFLR or FFLR)
    Select(Common),
    /// Run the graphical-model selection pipeline
    Fggm(Common),
    /// Run a grid of methods and sizes and write one combined report
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key = value file applied before the flags below
    #[arg(long)]
    config: Option<PathBuf>,

    /// sflr, fflr or fggm
    #[arg(long)]
    model: Option<String>,

    /// KF1, KF2, KF3 or GL
    #[arg(long)]
    method: Option<String>,

    #[arg(long)]
    p: Option<usize>,

    #[arg(long)]
    n: Option<usize>,

    /// Target FDR level
    #[arg(long)]
    q: Option<f64>,

    /// 1 selects the knockoff+ threshold
    #[arg(long)]
    delta: Option<u8>,

    /// and / or
    #[arg(long)]
    rule: Option<String>,

    #[arg(long)]
    replicates: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads, 0 for all cores
    #[arg(long)]
    threads: Option<usize>,

    /// Fixed shrinkage intensity instead of the estimated one
    #[arg(long)]
    gamma: Option<f64>,

    /// HBIC multiplier in [0.1, 3]
    #[arg(long)]
    hbar: Option<f64>,

    /// Observe covariates at random points with noise and pre-smooth them
    #[arg(long)]
    partial: bool,

    /// Observation points per curve in the partial setting
    #[arg(long = "L")]
    points: Option<usize>,

    #[arg(long)]
    noise_sd: Option<f64>,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,

    /// Comma-separated methods; defaults to all four
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,

    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',', default_value = "100")]
    ns: Vec<usize>,

    /// Comma-separated variable counts
    #[arg(long, value_delimiter = ',', default_value = "50")]
    ps: Vec<usize>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("method", self.method.clone());
        push("p", self.p.map(|v| v.to_string()));
        push("n", self.n.map(|v| v.to_string()));
        push("q", self.q.map(|v| v.to_string()));
        push("delta", self.delta.map(|v| v.to_string()));
        push("rule", self.rule.clone());
        push("replicates", self.replicates.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("threads", self.threads.map(|v| v.to_string()));
        push("gamma", self.gamma.map(|v| v.to_string()));
        push("hbar", self.hbar.map(|v| v.to_string()));
        push("partial", self.partial.then(|| "true".to_string()));
        push("L", self.points.map(|v| v.to_string()));
        push("noise_sd", self.noise_sd.map(|v| v.to_string()));
        out
    }

    /// Config file first, then flags. The model is resolved before anything
    /// else so that model-dependent defaults apply.
    fn spec(&self, forced: Option<Model>) -> Result<ExperimentSpec, ExperimentError> {
        let file: BTreeMap<String, String> = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let model = match (forced, &self.model, file.get("model")) {
            (Some(m), _, _) => m,
            (None, Some(m), _) | (None, None, Some(m)) => m.parse().map_err(ExperimentError::Config)?,
            (None, None, None) => Model::Sflr,
        };
        if forced.is_some_and(|f| self.model.as_deref().is_some_and(|m| m.parse::<Model>() != Ok(f))) {
            return Err(ExperimentError::Config(format!("this subcommand requires model {model}")));
        }
        let mut spec = ExperimentSpec::new(model, Method::Kf1, 100, 50, 1);
        for (k, v) in &file {
            if k != "model" {
                spec.set(k, v)?;
            }
        }
        for (k, v) in self.overrides() {
            spec.set(k, &v)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

fn simulate(args: &Common) -> Result<(), ExperimentError> {
    let spec = args.spec(None)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let grid = Domain::unit().grid(spec.eval_grid);
    for r in 0..spec.replicates {
        let seeds = simgen::replicate_seeds(spec.sim.seed, r as u64);
        let data = simgen::generate(&spec.sim, &mut simgen::rng_from(seeds.data))?;
        let curves = args.out.join(format!("replicate_{r}_curves.csv"));
        let response = args.out.join(format!("replicate_{r}_response.csv"));
        let has_response = spec.sim.model != Model::Fggm;
        simgen::write_sim_csv(&data, &grid, &curves, has_response.then_some(response.as_path()))?;
        simgen::write_truth_csv(&args.out.join(format!("replicate_{r}_truth.csv")), &data.truth)?;
    }
    log::info!("wrote {} replicate(s) to {}", spec.replicates, args.out.display());
    Ok(())
}

fn knockoffs(args: &Common) -> Result<(), ExperimentError> {
    let spec = args.spec(None)?;
    let variant = spec
        .method
        .variant()
        .ok_or_else(|| ExperimentError::Config("GL builds no knockoffs; choose KF1, KF2 or KF3".into()))?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let seeds = simgen::replicate_seeds(spec.sim.seed, 0);
    let data = simgen::generate(&spec.sim, &mut simgen::rng_from(seeds.data))?;
    let basis = working_basis(spec.interior_knots)?;
    let (panel, _) = observed_panels(&spec, &data, basis.clone(), seeds.corruption)?;
    let fpca = fit_fpca(&panel, spec.fraction)?;
    let theta = solve_r(&estimate_theta_c(&fpca, spec.gamma)?, variant)?;
    write_theta_csv(
        &theta,
        &args.out.join("theta_c.csv"),
        &args.out.join("theta_meta.csv"),
        &args.out.join("theta_r.csv"),
    )?;
    let panel = sample_knockoffs(&fpca, &theta, basis, seeds.knockoff)?;
    let path = args.out.join("knockoff_scores.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["sample_id", "variable_id", "component", "score"])?;
    for (j, block) in panel.scores.iter().enumerate() {
        for i in 0..block.nrows() {
            for l in 0..block.ncols() {
                w.write_record([i.to_string(), j.to_string(), l.to_string(), format!("{:.17e}", block[(i, l)])])?;
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    println!(
        "variant={} gamma={:.6} slack_min_eig={:.3e} clipped={}",
        variant,
        theta.gamma,
        theta.slack_min_eig.unwrap_or(f64::NAN),
        panel.clipped
    );
    Ok(())
}

fn run_specs(specs: &[ExperimentSpec], out: &Path) -> Result<(), ExperimentError> {
    let mut summaries = Vec::new();
    let mut details = Vec::new();
    for spec in specs {
        let results = run_pipeline(spec)?;
        details.extend(detail_rows(spec, &results));
        let s = aggregate(spec, &results)?;
        println!(
            "{} {} p={} n={} q={} delta={} rule={} fdr={:.4} power={:.4} replicates={}",
            s.model, s.method, s.p, s.n, s.q, s.delta, s.rule, s.fdr, s.power, s.n_replicates
        );
        summaries.push(s);
    }
    emit_report(&summaries, &details, out)
}

fn select(args: &Common, forced: Option<Model>) -> Result<(), ExperimentError> {
    let spec = args.spec(forced)?;
    if forced.is_none() && spec.sim.model == Model::Fggm {
        return Err(ExperimentError::Config("use the fggm subcommand for graphical models".into()));
    }
    run_specs(std::slice::from_ref(&spec), &args.out)
}

fn bench(args: &BenchArgs) -> Result<(), ExperimentError> {
    let base = args.common.spec(None)?;
    let methods: Vec<Method> = if !args.methods.is_empty() {
        args.methods
            .iter()
            .map(|m| m.parse().map_err(ExperimentError::Config))
            .collect::<Result<_, _>>()?
    } else if args.common.method.is_some() {
        vec![base.method]
    } else {
        vec![Method::Kf1, Method::Kf2, Method::Kf3, Method::Gl]
    };
    let specs = bench_specs(&base, &methods, &args.ns, &args.ps);
    for s in &specs {
        s.validate()?;
    }
    run_specs(&specs, &args.common.out)
}

fn exit_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Config(_) | ExperimentError::Io(_) => 2,
        ExperimentError::Numerical(_) | ExperimentError::NoSuccess => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Knockoffs(a) => knockoffs(a),
        Command::Select(a) => select(a, None),
        Command::Fggm(a) => select(a, Some(Model::Fggm)),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
