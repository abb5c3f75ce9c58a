//! `addsvm` command-line front end.

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use addsvm::kernel::KernelKind;
use addsvm::measure::{load_csv, load_features_csv};
use addsvm::robustness::{bias_check, bif_compare, BiasOptions};
use addsvm::simlab::{run_consistency, SimSpec};
use addsvm::table::{fmt_f64, Table};
use addsvm::{train, Error, KernelSpec, LossSpec, Result, SvmModel};
use clap::{Parser, Subcommand};

use config::{base_dir, read_toml, BiasConfig, BifConfig, KernelFile, ProxyContext, TrainConfig};

const KERNEL_SCHEMA: &str = "\
Kernel tables (key `type` selects the variant):
  { type = \"gaussian\", gamma = 2.0, input_dim = 2 }      exp(-|x-x'|^2 / gamma^2)
  { type = \"polynomial\", degree = 2, offset = 1.0, input_dim = 1 }   (<x,x'> + offset)^degree
  { type = \"dot\", input_dim = 2 }
  { type = \"sum\", blocks = [ { range = [0, 0], kernel = {...} }, { range = [1, 1], kernel = {...} } ] }
  { type = \"product\", blocks = [...] }                    same block layout as sum
Block ranges are inclusive 0-based coordinate ranges that must tile the input.

Losses: \"pinball:TAU\", \"eps-insensitive:EPS\", \"hinge\" (targets must be -1 or 1).";

const MEASURE_SCHEMA: &str = "\
Measure tables `[p]` and `[q]` (key `source` selects the variant):
  source = \"csv\",    path = \"p.csv\", target = \"y\", features = [\"x1\", \"x2\"]   (features optional)
  source = \"points\", x = [[0.1, 0.2], [0.5, 0.5]], y = [1.0, -2.0], w = [0.3, 0.7]  (w optional)
  source = \"sim\",    n = 200, seed = 1, noise_scale = 1.0   (simulated data on [0,1]^2)
  source = \"smooth-proxy\", inputs = [[...], ...], alpha = [...], half_levels = 100, spread = 1.0
                       (bif-check only; a measure whose pinball SVM has coefficients alpha)
Relative paths resolve against the config file's directory.
CSV files: comma separated, one header row, '.' decimal separator.";

const TRAIN_HELP: &str = "\
Config file (TOML):
  lambda = 0.1
  loss = \"pinball:0.5\"
  target = \"y\"                 # optional, default \"y\"
  features = [\"x1\", \"x2\"]      # optional, default: every other column
  [kernel]
  type = \"gaussian\"
  gamma = 2.0
  input_dim = 2
  [solver]                     # optional
  tol = 1e-10                  # relative duality-gap tolerance
  kkt_tol = 1e-6
  max_sweeps = 100000

The model file is JSON with fields format, version, kernel, loss, lambda,
objective, support, alpha and features.

Exit codes: 0 converged, 2 input error, 3 not converged (model still written).";

const PREDICT_HELP: &str = "\
Reads feature rows from a CSV file with a header. Columns are chosen by
--features, else by the feature names stored in the model, else all columns.
Output CSV has a `prediction` column, plus `component_1..component_s` for sum
kernels (the additive parts, which add up to the prediction).";

const BIAS_HELP: &str = "\
Config file (TOML):
  lambda = 0.1
  loss = \"pinball:0.5\"
  eps = [0.05, 0.1, 0.2, 0.4]        # optional
  probes = 10000                     # optional, quasi-random sup-norm probes
  domain = [[0.0, 1.0], [0.0, 1.0]]  # optional, default: bounding box of both supports
  [kernel] ...
  [p] ...
  [q] ...
  [solver] ...                       # optional, as for train

Output CSV columns: eps, h_norm, sup_norm_est, bound_h, bound_sup, pass.
Exit codes: 0 all rows pass, 1 some row fails, 2 input error, 3 numeric failure.";

const BIF_HELP: &str = "\
Compares (T((1-eps)P + eps Q) - T(P)) / eps with the closed-form pinball
influence function, in RKHS norm.

Config file (TOML):
  tau = 0.5
  lambda = 0.1
  eps = [0.1, 0.03, 0.01]            # optional, in decreasing order
  [kernel] ...
  [p] ...
  [q] ...

Output CSV columns: eps, fd_vs_closed_h_norm, atom_flags.
Exit codes: 0 distances nonincreasing and no atom collisions, 1 otherwise
(collisions are reported as excluded), 2 input error, 3 numeric failure.";

const SIMULATE_HELP: &str = "\
Config file (TOML, every key optional):
  n_grid = [200, 800, 3200]
  seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
  variants = [\"grbf\", \"additive-grbf\", \"semiparametric\"]
             # or tables { name = \"mine\", kernel = { ... } } on [0,1]^2
  tau = 0.5
  lambda_a = 0.05          # lambda_n = lambda_a * n^(-lambda_b)
  lambda_b = 0.45
  noise_scale = 1.0        # scale of the Cauchy noise
  test_size = 10000
  mc_size = 10000          # Monte-Carlo points for d0
  grid_size = 41           # prediction grid points per axis
  tol = 1e-10

Writes trend.csv, summary.csv, timings.csv and grid_<variant>.csv into the
output directory. All files except timings.csv are byte-identical across
reruns. Exit code 3 if any cell failed to train.";

const KERNEL_INFO_HELP: &str = "\
Config file (TOML):
  domain = [[0.0, 1.0], [0.0, 1.0]]   # optional, needed to bound polynomial and dot kernels
  [kernel] ...";

#[derive(Parser)]
#[command(name = "addsvm", version, about = "Support vector machines for additive models")]
#[command(after_long_help = "Exit codes: 0 success, 1 certification failure, 2 input error, 3 numeric or convergence failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an SVM on a CSV file and write the model.
    #[command(after_long_help = format!("{TRAIN_HELP}\n\n{KERNEL_SCHEMA}"))]
    Train {
        /// Training data (CSV with header).
        #[arg(long)]
        data: PathBuf,
        /// Training config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Overrides `lambda` from the config.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Predict with a saved model.
    #[command(after_long_help = PREDICT_HELP)]
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Feature rows (CSV with header).
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated feature column names.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// Output CSV; standard output if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the gross-error bias bounds on (1-eps)P + eps Q.
    #[command(after_long_help = format!("{BIAS_HELP}\n\n{MEASURE_SCHEMA}\n\n{KERNEL_SCHEMA}"))]
    BiasCheck {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; standard output if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare finite differences with the pinball influence function.
    #[command(after_long_help = format!("{BIF_HELP}\n\n{MEASURE_SCHEMA}\n\n{KERNEL_SCHEMA}"))]
    BifCheck {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; standard output if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the simulated consistency study.
    #[command(after_long_help = SIMULATE_HELP)]
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the block structure and sup-norm bound of a kernel.
    #[command(after_long_help = format!("{KERNEL_INFO_HELP}\n\n{KERNEL_SCHEMA}"))]
    KernelInfo {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Status {
    Ok,
    CertificationFailed,
    NumericFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CertificationFailed) => ExitCode::from(1),
        Ok(Status::NumericFailure) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<Status> {
    match cmd {
        Command::Train {
            data,
            config,
            model,
            lambda,
        } => cmd_train(&data, &config, &model, lambda),
        Command::Predict {
            model,
            data,
            features,
            output,
        } => cmd_predict(&model, &data, features, output.as_deref()),
        Command::BiasCheck { config, output } => cmd_bias(&config, output.as_deref()),
        Command::BifCheck { config, output } => cmd_bif(&config, output.as_deref()),
        Command::Simulate { config, out_dir } => cmd_simulate(&config, &out_dir),
        Command::KernelInfo { config } => cmd_kernel_info(&config),
    }
}

fn emit(table: &Table, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => table.write(p),
        None => std::io::stdout()
            .write_all(table.to_csv_string().as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn domain_pairs(d: &Option<Vec<[f64; 2]>>) -> Option<Vec<(f64, f64)>> {
    d.as_ref().map(|v| v.iter().map(|[a, b]| (*a, *b)).collect())
}

fn cmd_train(data: &Path, config: &Path, out: &Path, lambda: Option<f64>) -> Result<Status> {
    let cfg: TrainConfig = read_toml(config)?;
    let lambda = lambda.unwrap_or(cfg.lambda);
    let (p, dataset) = load_csv(data, &cfg.target, cfg.features.as_deref())?;
    let (model, rep) = train(&cfg.kernel, &cfg.loss, &p, lambda, &cfg.solver.options())?;
    let model = model.with_features(dataset.feature_names.clone())?;
    model.save(out)?;
    println!("model: {}", out.display());
    println!("rows: {}  atoms: {}  support points: {}", dataset.len(), p.len(), model.support().len());
    println!("kernel: {}", cfg.kernel.describe());
    println!("loss: {}  lambda: {}", cfg.loss, fmt_f64(lambda));
    println!("sweeps: {}", rep.sweeps);
    println!("objective: {}", fmt_f64(rep.final_objective));
    println!("duality gap: {:e}", rep.duality_gap);
    println!("kkt residual: {:e}", rep.kkt_residual);
    println!("rkhs norm: {}", fmt_f64(model.rkhs_norm()));
    println!("converged: {}", rep.converged);
    Ok(if rep.converged { Status::Ok } else { Status::NumericFailure })
}

fn cmd_predict(model: &Path, data: &Path, features: Option<Vec<String>>, output: Option<&Path>) -> Result<Status> {
    let m = SvmModel::load(model)?;
    let names = features.or_else(|| m.features().map(<[String]>::to_vec));
    let ds = load_features_csv(data, names.as_deref())?;
    if ds.feature_names.len() != m.kernel().input_dim() {
        return Err(Error::Input(format!(
            "{}: {} feature columns but the model expects {}",
            data.display(),
            ds.feature_names.len(),
            m.kernel().input_dim()
        )));
    }
    let blocks = m.kernel().sum_blocks().map_or(0, |b| b.len());
    let mut header = vec!["prediction".to_string()];
    header.extend((1..=blocks).map(|j| format!("component_{j}")));
    let mut t = Table::new(header);
    let pred = m.predict_many(&ds.xs)?;
    for (x, f) in ds.xs.iter().zip(pred) {
        let mut row = vec![fmt_f64(f)];
        if blocks > 0 {
            row.extend(m.additive_components(x)?.into_iter().map(fmt_f64));
        }
        t.push(row);
    }
    emit(&t, output)?;
    Ok(Status::Ok)
}

fn cmd_bias(config: &Path, output: Option<&Path>) -> Result<Status> {
    let cfg: BiasConfig = read_toml(config)?;
    let base = base_dir(config);
    let tau = match cfg.loss {
        LossSpec::Pinball { tau } => Some(tau),
        _ => None,
    };
    let ctx = ProxyContext {
        kernel: &cfg.kernel,
        tau,
        lambda: cfg.lambda,
    };
    let p = cfg.p.build("p", &base, &ctx)?;
    let q = cfg.q.build("q", &base, &ctx)?;
    let opts = BiasOptions {
        train: cfg.solver.options(),
        probes: cfg.probes,
        domain: domain_pairs(&cfg.domain),
        ..BiasOptions::default()
    };
    let curve = bias_check(&cfg.kernel, &cfg.loss, cfg.lambda, &p, &q, &cfg.eps, &opts)?;
    emit(&curve.to_table(), output)?;
    let failed = curve.rows.iter().filter(|r| !r.pass).count();
    eprintln!(
        "{} of {} rows pass (||k|| = {}, |L|_1 = {}, ||P - Q||_M = {})",
        curve.rows.len() - failed,
        curve.rows.len(),
        fmt_f64(curve.kernel_bound),
        fmt_f64(curve.lipschitz),
        fmt_f64(curve.tv_norm)
    );
    if curve.rows.iter().any(|r| !r.converged) {
        return Ok(Status::NumericFailure);
    }
    Ok(if failed == 0 { Status::Ok } else { Status::CertificationFailed })
}

fn cmd_bif(config: &Path, output: Option<&Path>) -> Result<Status> {
    let cfg: BifConfig = read_toml(config)?;
    let base = base_dir(config);
    let ctx = ProxyContext {
        kernel: &cfg.kernel,
        tau: Some(cfg.tau),
        lambda: cfg.lambda,
    };
    let p = cfg.p.build("p", &base, &ctx)?;
    let q = cfg.q.build("q", &base, &ctx)?;
    let report = bif_compare(&cfg.kernel, cfg.tau, cfg.lambda, &p, &q, &cfg.eps, &cfg.solver.options())?;
    emit(&report.to_table(), output)?;
    eprintln!("closed-form influence norm: {}", fmt_f64(report.closed_norm));
    if !report.flagged.is_empty() {
        eprintln!(
            "atom-collision, excluded: {} input(s) have a target atom at the fitted value",
            report.flagged.len()
        );
        return Ok(Status::CertificationFailed);
    }
    Ok(if report.pass() { Status::Ok } else { Status::CertificationFailed })
}

fn cmd_simulate(config: &Path, out_dir: &Path) -> Result<Status> {
    let spec: SimSpec = read_toml(config)?;
    spec.validate().map_err(|e| Error::Parse {
        path: config.to_path_buf(),
        message: e.to_string(),
    })?;
    let report = run_consistency(&spec)?;
    report.write(out_dir)?;
    for s in &report.summary {
        println!(
            "{:<16} n={:<6} median d0={}  median risk={}  ok {}/{}",
            s.variant,
            s.n,
            fmt_f64(s.median_d0),
            fmt_f64(s.median_test_risk),
            s.ok_runs,
            s.runs
        );
    }
    let failed = report.failures().count();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed; see the status column of trend.csv");
        return Ok(Status::NumericFailure);
    }
    Ok(Status::Ok)
}

fn describe_blocks(k: &KernelSpec, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match k.kind() {
        KernelKind::Sum(blocks) | KernelKind::Product(blocks) => {
            for b in blocks {
                out.push_str(&format!(
                    "{pad}coordinates {}..={}: {}\n",
                    b.range.start,
                    b.range.end,
                    b.kernel.describe()
                ));
                describe_blocks(&b.kernel, indent + 2, out);
            }
        }
        _ => {}
    }
}

fn cmd_kernel_info(config: &Path) -> Result<Status> {
    let cfg: KernelFile = read_toml(config)?;
    let domain = domain_pairs(&cfg.domain);
    let cert = cfg.kernel.sup_norm_bound(domain.as_deref())?;
    println!("kernel: {}", cfg.kernel.describe());
    println!("input dimension: {}", cfg.kernel.input_dim());
    let mut blocks = String::new();
    describe_blocks(&cfg.kernel, 2, &mut blocks);
    if !blocks.is_empty() {
        println!("blocks:\n{}", blocks.trim_end());
    }
    if cert.is_bounded() {
        println!("sup-norm bound: {}", fmt_f64(cert.sup_norm));
    } else {
        println!("sup-norm bound: unbounded (supply a finite `domain`)");
    }
    if let Some(d) = &cert.domain_box {
        let parts: Vec<String> = d.iter().map(|(a, b)| format!("[{}, {}]", fmt_f64(*a), fmt_f64(*b))).collect();
        println!("domain: {}", parts.join(" x "));
    }
    Ok(Status::Ok)
}
