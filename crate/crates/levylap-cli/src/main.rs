use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levylap_cli::{run, CliError, ExperimentConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "levylap", version, about = "Finite-truncation Lévy Laplacian verification suites")]
struct Cli {
    /// Base configuration file (TOML or JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = "reports")]
    output: PathBuf,
    /// Comma-separated output formats: json, csv, text.
    #[arg(long, global = true, value_delimiter = ',', default_value = "json,csv,text")]
    format: Vec<String>,
    /// `real` embeds wall clock and build info; `fixed` makes reports
    /// byte-reproducible.
    #[arg(long, global = true, default_value = "real")]
    stamp: String,
    /// Print every configuration default and exit.
    #[arg(long, global = true)]
    explain: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args, Default, Clone)]
struct Overrides {
    /// Connection: catalog name or JSON file.
    #[arg(long)]
    connection: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    conn_seed: Option<u64>,
    /// Path: preset (zero|unit|acceptance) or JSON file.
    #[arg(long)]
    path: Option<String>,
    /// Chaos vector: preset (diagonal|random) or JSON file.
    #[arg(long)]
    chaos: Option<String>,
    #[arg(long)]
    chaos_seed: Option<u64>,
    /// Cosine truncation J.
    #[arg(long)]
    j_max: Option<usize>,
    /// Highest chaos level n_max.
    #[arg(long)]
    chaos_levels: Option<usize>,
    /// Test vector: `random` or JSON file.
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    xi_seed: Option<u64>,
    /// Laplacian order s.
    #[arg(long)]
    order: Option<f64>,
    /// Cesàro truncation N_max.
    #[arg(long)]
    nmax: Option<usize>,
    /// Direction count (synonym for --nmax used by verify-thm1).
    #[arg(long)]
    dirs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Monte Carlo seed count.
    #[arg(long)]
    seeds: Option<usize>,
    /// Cameron–Martin finite-difference step.
    #[arg(long)]
    eps: Option<f64>,
    /// Verdict tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// Monte Carlo sample count (fock-props).
    #[arg(long)]
    samples: Option<usize>,
    /// Random instance count (fock-props).
    #[arg(long)]
    instances: Option<usize>,
    /// Base-space dimension d.
    #[arg(long)]
    dims: Option<usize>,
    /// Basis family for density checks: sine | cosine.
    #[arg(long)]
    family: Option<String>,
    /// Density test function: one | half | third.
    #[arg(long)]
    test_fn: Option<String>,
    /// Density truncation list, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Sequence-lemma orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    s_list: Option<Vec<f64>>,
    /// Sequence name for the lemma check.
    #[arg(long)]
    sequence: Option<String>,
    /// Kernel grid resolution (prop2).
    #[arg(long)]
    grid: Option<usize>,
    /// prop2 case name.
    #[arg(long)]
    case: Option<String>,
}

#[derive(Subcommand, Clone)]
enum Cmd {
    /// Holonomy Laplace identity for the deterministic transport.
    VerifyGf(Overrides),
    /// Stochastic holonomy identity, Monte Carlo trend acceptance.
    VerifyThm1(Overrides),
    /// Coefficient/transform picture isomorphism.
    VerifyMain(Overrides),
    /// Vanishing-diagonal decay of the order-1 transform estimate.
    Prop1(Overrides),
    /// Kernel-split consistency: Cesàro estimate vs diagonal integral.
    Prop2(Overrides),
    /// Weak-uniform-density defect of the trigonometric bases.
    Density(Overrides),
    /// Two-chain sequence lemma at finite truncation.
    SeqLemma(Overrides),
    /// Fock-algebra adjointness, norm bounds and Parseval sampling.
    FockProps(Overrides),
    /// List built-in connections, paths, chaos and test-vector presets.
    Catalog(Overrides),
}

impl Cmd {
    fn suite(&self) -> &'static str {
        match self {
            Cmd::VerifyGf(_) => "verify-gf",
            Cmd::VerifyThm1(_) => "verify-thm1",
            Cmd::VerifyMain(_) => "verify-main",
            Cmd::Prop1(_) => "prop1",
            Cmd::Prop2(_) => "prop2",
            Cmd::Density(_) => "density",
            Cmd::SeqLemma(_) => "seq-lemma",
            Cmd::FockProps(_) => "fock-props",
            Cmd::Catalog(_) => "catalog",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Cmd::VerifyGf(o)
            | Cmd::VerifyThm1(o)
            | Cmd::VerifyMain(o)
            | Cmd::Prop1(o)
            | Cmd::Prop2(o)
            | Cmd::Density(o)
            | Cmd::SeqLemma(o)
            | Cmd::FockProps(o)
            | Cmd::Catalog(o) => o,
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = &o.$field { cfg.$field = v.clone(); })*
        };
    }
    take!(connection, beta, conn_seed, path, chaos, chaos_seed, j_max, chaos_levels, xi, xi_seed,
          order, steps, eps, dims, family, test_fn, sequence, grid, case);
    if let Some(v) = o.nmax {
        cfg.n_max = v;
    }
    if let Some(v) = o.dirs {
        cfg.n_max = v;
    }
    if let Some(v) = o.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = o.tol {
        cfg.tol = Some(v);
    }
    if let Some(v) = o.samples {
        cfg.mc_samples = v;
    }
    if let Some(v) = o.instances {
        cfg.instances = v;
    }
    if let Some(v) = &o.n_list {
        cfg.n_list = v.clone();
    }
    if let Some(v) = &o.s_list {
        cfg.s_list = v.clone();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if cli.explain {
        print!("{}", ExperimentConfig::explain());
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.cmd else {
        eprintln!("a subcommand is required; see --help");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let fixed_stamp = match cli.stamp.as_str() {
        "fixed" => true,
        "real" => false,
        other => {
            eprintln!("configuration error at stamp: expected real|fixed, got `{other}`");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };

    let mut cfg = match &cli.config {
        Some(p) => match ExperimentConfig::from_file(p) {
            Ok(c) => c,
            Err(e) => return exit_with(e),
        },
        None => ExperimentConfig::default(),
    };
    cfg.suite = cmd.suite().to_string();
    apply_overrides(&mut cfg, cmd.overrides());

    match run(&cfg, fixed_stamp) {
        Ok(report) => {
            print!("{}", report.to_text());
            if let Err(e) = report.emit(&cli.format, &cli.output) {
                return exit_with(e);
            }
            ExitCode::from(report.verdict.exit_code() as u8)
        }
        Err(e) => exit_with(e),
    }
}

fn exit_with(e: CliError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(e.exit_code() as u8)
}
