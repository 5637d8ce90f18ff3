use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccboost::data::{
    self, gen_blobs, gen_contaminated_regression, gen_glm, gen_long_servedio, gen_survival, CsvOptions, Family,
    LabelColumns, SurvivalParams,
};
use ccboost::metrics::evaluate;
use ccboost::{
    irboost, weight_snapshot, BoostConfig, ConcaveKind, ConcaveSpec, Dataset, Error, IrcoConfig,
    IrcoResult, LabelKind, Loss, LossKind, OuterMode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

mod output;

use output::{write_importance, write_predictions, write_rho, write_weights};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ccboost", version, about = "Robust gradient boosting with concave-convex losses")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Fit a robust model and write the model document, weights and objective trace.
    Train(TrainArgs),
    /// Write observation weights of an existing model.
    Weights(WeightsArgs),
    /// Write raw or transformed predictions.
    Predict(PredictArgs),
    /// Print metrics appropriate to the model's loss.
    Eval(EvalArgs),
    /// Write the gain-based feature importance table.
    Importance(ImportanceArgs),
    /// Generate synthetic datasets.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long)]
    data: PathBuf,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Zero-based label column (default: last column).
    #[arg(long, conflicts_with_all = ["lower_col", "upper_col"])]
    label_col: Option<usize>,
    /// Zero-based lower-bound column for interval labels.
    #[arg(long, requires = "upper_col")]
    lower_col: Option<usize>,
    /// Zero-based upper-bound column for interval labels.
    #[arg(long, requires = "lower_col")]
    upper_col: Option<usize>,
}

impl DataArgs {
    fn options(&self, kind: LabelKind) -> CsvOptions {
        let label_columns = match (self.label_col, self.lower_col, self.upper_col) {
            (Some(c), _, _) => LabelColumns::Single(c),
            (None, Some(lower), Some(upper)) => LabelColumns::Interval { lower, upper },
            _ => LabelColumns::Auto,
        };
        CsvOptions {
            header: !self.no_header,
            label_kind: kind,
            label_columns,
        }
    }

    fn load(&self, kind: LabelKind) -> ccboost::Result<Dataset> {
        data::load_csv(&self.data, &self.options(kind))
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct LossArgs {
    /// Convex loss, e.g. reg:squarederror, binary:logitraw, multi:softprob, survival:aft.
    #[arg(long, default_value = "reg:squarederror", value_parser = parse_loss_kind)]
    dfun: String,
    /// Number of classes for multi:softprob.
    #[arg(long)]
    num_class: Option<usize>,
    /// Variance power for reg:tweedie.
    #[arg(long)]
    tweedie_power: Option<f64>,
    /// Normal scale for survival:aft.
    #[arg(long)]
    aft_scale: Option<f64>,
}

impl LossArgs {
    fn loss(&self) -> ccboost::Result<Loss> {
        let kind: LossKind = self.dfun.parse()?;
        let loss = Loss::from_kind(kind, self.num_class, self.tweedie_power, self.aft_scale)?;
        loss.validate()?;
        Ok(loss)
    }
}

fn parse_loss_kind(s: &str) -> Result<String, String> {
    s.parse::<LossKind>().map(|_| s.to_string()).map_err(|e| e.to_string())
}

fn parse_concave_kind(s: &str) -> Result<ConcaveKind, String> {
    s.parse::<ConcaveKind>().map_err(|e| e.to_string())
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct ConcaveArgs {
    /// Concave component: hcave, acave, bcave, ccave, dcave, ecave, gcave or tcave.
    #[arg(long, default_value = "ccave", value_parser = parse_concave_kind)]
    cfun: ConcaveKind,
    /// Robustness parameter sigma.
    #[arg(long = "s", default_value_t = 1.0)]
    s: f64,
    /// Breakpoint delta (required by ecave).
    #[arg(long)]
    delta: Option<f64>,
}

impl ConcaveArgs {
    fn spec(&self) -> ConcaveSpec {
        ConcaveSpec {
            kind: self.cfun,
            sigma: self.s,
            delta: self.delta,
        }
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct BoostArgs {
    #[arg(long, default_value_t = 100)]
    nrounds: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    /// Shrinkage (learning rate).
    #[arg(long, default_value_t = 0.3)]
    eta: f64,
    /// L2 penalty on leaf values.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// L1 penalty on leaf values.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Minimum split gain.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    min_child_hessian: f64,
    #[arg(long, default_value_t = 1.0)]
    subsample: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    base_score: Option<f64>,
}

impl BoostArgs {
    fn config(&self) -> BoostConfig {
        BoostConfig {
            nrounds: self.nrounds,
            learning_rate: self.eta,
            reg_lambda: self.lambda,
            reg_alpha: self.alpha,
            gamma: self.gamma,
            max_depth: self.max_depth,
            min_child_hessian: self.min_child_hessian,
            subsample: self.subsample,
            seed: self.seed,
            base_score: self.base_score,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Refit,
    Continue,
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct IrcoArgs {
    /// Outer reweighting iterations.
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    /// Relative objective decrease below which the outer loop stops.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value = "refit")]
    mode: ModeArg,
}

impl IrcoArgs {
    fn config(&self) -> IrcoConfig {
        IrcoConfig {
            outer_iterations: self.k,
            tolerance: self.tol,
            mode: match self.mode {
                ModeArg::Refit => OuterMode::Refit,
                ModeArg::Continue => OuterMode::Continue,
            },
        }
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    concave: ConcaveArgs,
    #[command(flatten)]
    boost: BoostArgs,
    #[command(flatten)]
    irco: IrcoArgs,
    /// Model document to write.
    #[arg(long, default_value = "model.ccboost.json")]
    model_out: PathBuf,
    /// Weights CSV (index, weight).
    #[arg(long, default_value = "weights.csv")]
    weights_out: PathBuf,
    /// Objective trace CSV (iteration, rho).
    #[arg(long, default_value = "rho.csv")]
    rho_out: PathBuf,
    /// How many of the smallest weights to report.
    #[arg(long, default_value_t = 4)]
    top_k: usize,
    /// Only compute weights of the model given by --model.
    #[arg(long, requires = "model")]
    weights_only: bool,
    /// Existing model document (with --weights-only).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Weights CSV (index, weight); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    top_k: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Map raw scores to the response scale.
    #[arg(long)]
    transform: bool,
    /// Use boosting rounds begin..end, written as begin:end.
    #[arg(long, value_parser = parse_range)]
    iteration_range: Option<(usize, usize)>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_range)]
    iteration_range: Option<(usize, usize)>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Importance CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a text dump of every tree to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory for the generated files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    kind: SimulateKind,
}

#[derive(Subcommand)]
enum SimulateKind {
    /// Long-Servedio classification data (train.csv, test.csv).
    Ls {
        #[arg(long, default_value_t = 400)]
        ntr: usize,
        #[arg(long, default_value_t = 200)]
        nte: usize,
        /// Label contamination probability, in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        percon: f64,
    },
    /// Linear data with shifted responses (data.csv, outliers.csv).
    Regression {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        n_outliers: usize,
        #[arg(long, default_value_t = 50.0)]
        shift: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
    },
    /// Gaussian clusters with class labels (data.csv).
    Blobs {
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long, default_value_t = 3)]
        num_class: usize,
        #[arg(long, default_value_t = 1.5)]
        separation: f64,
    },
    /// Right-censored log-normal survival data (train.csv, test.csv, outliers.csv).
    Survival {
        #[arg(long, default_value_t = 150)]
        ntr: usize,
        #[arg(long, default_value_t = 150)]
        nte: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 0.3)]
        censored: f64,
        #[arg(long, default_value_t = 0.5)]
        noise_sd: f64,
        #[arg(long, default_value_t = 10)]
        n_outliers: usize,
        #[arg(long, default_value_t = 100.0)]
        outlier_factor: f64,
    },
    /// GLM responses (data.csv).
    Glm {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Bernoulli,
    Poisson,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (b, e) = s.split_once(':').ok_or("expected begin:end")?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range start '{b}'"))?;
    let e: usize = e.trim().parse().map_err(|_| format!("bad range end '{e}'"))?;
    if b > e {
        return Err(format!("range start {b} exceeds end {e}"));
    }
    Ok((b, e))
}

/// Settings echoed into every model document.
#[derive(Serialize, Deserialize)]
struct RunConfig {
    command: String,
    #[serde(flatten)]
    train: TrainArgs,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    run_config: RunConfig,
    result: IrcoResult,
}

fn read_document(path: &Path) -> ccboost::Result<ModelDocument> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    doc.result.model.validate()?;
    Ok(doc)
}

fn output(path: Option<&Path>) -> ccboost::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn smallest(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn print_smallest(weights: &[f64], k: usize) {
    let idx = smallest(weights, k);
    let list: Vec<String> = idx.iter().map(|&i| format!("{i} ({:.4})", weights[i])).collect();
    println!("smallest weights: {}", list.join(", "));
}

fn snapshot(doc: &ModelDocument, data: &Dataset) -> ccboost::Result<Vec<f64>> {
    let r = &doc.result;
    let cc = r.concave.validate()?;
    let shift_c = r.loss.shift_constant(data.labels())?;
    weight_snapshot(&r.model, data, &cc, shift_c)
}

fn cmd_train(args: TrainArgs) -> ccboost::Result<()> {
    if args.weights_only {
        let path = args.model.as_deref().expect("clap requires --model");
        let doc = read_document(path)?;
        let data = args.data.load(doc.result.loss.kind().label_kind())?;
        let w = snapshot(&doc, &data)?;
        write_weights(output(Some(&args.weights_out))?, &w)?;
        print_smallest(&w, args.top_k);
        return Ok(());
    }
    let loss = args.loss.loss()?;
    let cc = args.concave.spec();
    cc.validate()?;
    let data = args.data.load(loss.kind().label_kind())?;
    let result = irboost(&data, &loss, &cc, &args.boost.config(), &args.irco.config())?;

    write_weights(output(Some(&args.weights_out))?, &result.weight_update)?;
    write_rho(output(Some(&args.rho_out))?, &result.rho_trace)?;
    println!("rho: {}", result.rho_trace.last().expect("trace starts with the initial fit"));
    println!("niter: {}", result.niter);
    println!("outer iterations: {} ({:?})", result.rho_trace.len() - 1, result.stop);
    print_smallest(&result.weight_update, args.top_k);

    let model_out = args.model_out.clone();
    let doc = ModelDocument {
        run_config: RunConfig {
            command: "train".into(),
            train: args,
        },
        result,
    };
    let mut w = output(Some(&model_out))?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.flush()?;
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> ccboost::Result<()> {
    let doc = read_document(&args.model)?;
    let data = args.data.load(doc.result.loss.kind().label_kind())?;
    let w = snapshot(&doc, &data)?;
    write_weights(output(args.out.as_deref())?, &w)?;
    if args.out.is_some() {
        print_smallest(&w, args.top_k);
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> ccboost::Result<()> {
    let doc = read_document(&args.model)?;
    let model = &doc.result.model;
    let opts = args.data.options(model.loss.kind().label_kind());
    let features = data::read_feature_matrix(File::open(&args.data.data)?, &opts, model.n_features)?;
    let scores = model.predict(features.view(), args.iteration_range)?;
    write_predictions(output(args.out.as_deref())?, model, &scores, args.transform)
}

fn cmd_eval(args: EvalArgs) -> ccboost::Result<()> {
    let doc = read_document(&args.model)?;
    let model = &doc.result.model;
    let data = args.data.load(model.loss.kind().label_kind())?;
    let scores = model.predict(data.features(), args.iteration_range)?;
    for m in evaluate(&model.loss, data.labels(), scores.view())? {
        println!("{},{}", m.name, m.value);
    }
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> ccboost::Result<()> {
    let doc = read_document(&args.model)?;
    let model = &doc.result.model;
    write_importance(output(args.out.as_deref())?, model)?;
    if let Some(path) = &args.dump {
        std::fs::write(path, model.dump())?;
    }
    Ok(())
}

fn write_indices(path: &Path, indices: &[usize]) -> ccboost::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index"])?;
    for i in indices {
        w.write_record([i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> ccboost::Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    let seed = args.seed;
    match args.kind {
        SimulateKind::Ls { ntr, nte, percon } => {
            let ls = gen_long_servedio(ntr, nte, percon, seed)?;
            data::save_csv(dir.join("train.csv"), &ls.train)?;
            data::save_csv(dir.join("test.csv"), &ls.test)?;
            write_indices(&dir.join("flipped.csv"), &ls.flipped)?;
        }
        SimulateKind::Regression {
            n,
            p,
            n_outliers,
            shift,
            noise_sd,
        } => {
            let g = gen_contaminated_regression(n, p, n_outliers, shift, noise_sd, seed)?;
            data::save_csv(dir.join("data.csv"), &g.data)?;
            write_indices(&dir.join("outliers.csv"), &g.outliers)?;
        }
        SimulateKind::Blobs {
            n,
            p,
            num_class,
            separation,
        } => {
            data::save_csv(dir.join("data.csv"), &gen_blobs(n, p, num_class, separation, seed)?)?;
        }
        SimulateKind::Survival {
            ntr,
            nte,
            p,
            censored,
            noise_sd,
            n_outliers,
            outlier_factor,
        } => {
            let params = SurvivalParams {
                n_train: ntr,
                n_test: nte,
                p,
                censored_fraction: censored,
                noise_sd,
                n_outliers,
                outlier_factor,
            };
            let s = gen_survival(&params, seed)?;
            data::save_csv(dir.join("train.csv"), &s.train)?;
            data::save_csv(dir.join("test.csv"), &s.test)?;
            write_indices(&dir.join("outliers.csv"), &s.outliers)?;
        }
        SimulateKind::Glm { family, n, p } => {
            let family = match family {
                FamilyArg::Gaussian => Family::Gaussian,
                FamilyArg::Bernoulli => Family::Bernoulli,
                FamilyArg::Poisson => Family::Poisson,
            };
            data::save_csv(dir.join("data.csv"), &gen_glm(family, n, p, seed)?)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric_failure() {
        EXIT_NUMERIC
    } else if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_USAGE
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("CCBOOST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("CCBOOST_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }

    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
