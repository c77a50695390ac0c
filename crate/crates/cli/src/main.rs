//! `icqf` command-line front end. Every failure ends the process with a
//! nonzero status and one JSON line on stderr: `{"error": kind, "message": ...}`.

use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icqf::detect::write_bench_csv;
use icqf::io::{load_confound_specs, load_confound_table, read_json, write_json};
use icqf::rank::{make_bcv_plan, DEFAULT_BETA_GRID, DEFAULT_BLOCKS, DEFAULT_FOLDS};
use icqf::*;

#[derive(Parser)]
#[command(name = "icqf", version, about = "Bounded, sparse, confound-aware factorization of questionnaire data")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model; writes model/, report.json and loadings.csv.
    Fit(FitArgs),
    /// Infer factor scores for new participants with a trained model.
    Transform(TransformArgs),
    /// Choose k (and optionally β) by blockwise cross-validation.
    SelectRank(SelectRankArgs),
    /// Generate a synthetic dataset with known factors.
    Synth(SynthArgs),
    /// Greedily match the factors of two fitted models.
    Match(MatchArgs),
    /// Rank-detection benchmark over noise levels and schemes.
    BenchDetect(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Response matrix CSV with a header of question ids.
    #[arg(long)]
    input: PathBuf,
    /// Cell text that marks a missing answer.
    #[arg(long, default_value = "NA")]
    mask_token: String,
    /// Confound table CSV (one row per participant).
    #[arg(long)]
    confounds: Option<PathBuf>,
    /// JSON list of `{name, kind, levels?}` selecting the confound columns.
    #[arg(long, requires = "confounds")]
    confound_spec: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Admm,
    Cd,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Nndsvd,
    Random,
}

#[derive(Args)]
struct SolverArgs {
    /// SolverConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Lift all upper bounds and drop the intercept (plain ℓ₁-NMF).
    #[arg(long)]
    baseline_l1nmf: bool,
    /// Seed for random initialization and any resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "NA")]
    mask_token: String,
    /// Confound table for the new participants; the trained encoding is reused.
    #[arg(long)]
    confounds: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Accepted for uniformity; inference is deterministic.
    #[allow(dead_code)]
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectRankArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Candidate ranks: `lo..hi` (inclusive) or a comma list.
    #[arg(long, default_value = "2..20")]
    k_grid: String,
    /// Candidate β values (comma list); `default` uses the built-in grid.
    #[arg(long, default_value = "0.1")]
    beta_grid: String,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Confound column whose values stratify the row split.
    #[arg(long)]
    stratify_by: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    k_star: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    /// Two model directories.
    #[arg(num_args = 2, required = true)]
    models: Vec<PathBuf>,
    /// Accepted for uniformity; matching is deterministic.
    #[allow(dead_code)]
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma list of bcv, bic1, ccc, dispersion.
    #[arg(long, default_value = "bcv")]
    scheme: String,
    /// Comma list of noise levels.
    #[arg(long, default_value = "0.1,0.3")]
    delta: String,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value = "2..20")]
    k_grid: String,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for bench.csv and bench.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| IcqfError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Transform(a) => cmd_transform(a),
        Command::SelectRank(a) => cmd_select_rank(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Match(a) => cmd_match(a),
        Command::BenchDetect(a) => cmd_bench(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| IcqfError::Invalid(format!("cannot create {}: {e}", dir.display())))
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig> {
    let mut cfg: SolverConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    if let Some(s) = a.solver {
        cfg.solver = solver_kind(s);
    }
    match a.init {
        Some(InitArg::Random) => cfg.init = InitKind::Random { seed: a.seed },
        Some(InitArg::Nndsvd) => cfg.init = InitKind::Nndsvd,
        None => {
            if let InitKind::Random { .. } = cfg.init {
                cfg.init = InitKind::Random { seed: a.seed };
            }
        }
    }
    cfg.baseline_l1nmf |= a.baseline_l1nmf;
    cfg.validate()?;
    Ok(cfg)
}

fn solver_kind(s: SolverArg) -> SolverKind {
    match s {
        SolverArg::Admm => SolverKind::Admm,
        SolverArg::Cd => SolverKind::Cd,
        SolverArg::Auto => SolverKind::Auto,
    }
}

/// Loads the matrix and its confounds. Without a confound table the design
/// is a lone intercept, or nothing at all for the ℓ₁-NMF baseline.
fn load_inputs(a: &DataArgs, baseline: bool) -> Result<(MaskedMatrix, EncodedConfounds, Vec<RawConfound>)> {
    let data = load_masked_matrix(&a.input, &a.mask_token)?;
    let n = data.nrows();
    let Some(table) = &a.confounds else {
        let conf = if baseline { EncodedConfounds::none(n) } else { EncodedConfounds::intercept_only(n) };
        return Ok((data, conf, Vec::new()));
    };
    let spec_path = a
        .confound_spec
        .as_ref()
        .ok_or_else(|| IcqfError::Config("--confounds needs --confound-spec to declare column kinds".into()))?;
    let specs = load_confound_specs(spec_path)?;
    let raw = load_confound_table(table, &specs)?;
    let conf = encode_confounds(&raw, n)?;
    Ok((data, conf, raw))
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = solver_config(&a.solver)?;
    let (data, conf, _) = load_inputs(&a.data, cfg.baseline_l1nmf)?;
    data.check_coverage()?;
    let (model, report) = fit(&data, &conf, &cfg)?;
    create_dir(&a.out)?;
    save_model(a.out.join("model"), &model, &conf, data.column_ids())?;
    write_json(a.out.join("report.json"), &report)?;
    write_json(a.out.join("config.json"), &cfg)?;
    save_loading_table(a.out.join("loadings.csv"), &model, &conf, data.column_ids())
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let (trained, meta) = load_model(&a.model)?;
    let data = load_masked_matrix(&a.input, &a.mask_token)?;
    if data.column_ids() != meta.question_ids.as_slice() {
        return Err(IcqfError::Dimension("input questions differ from the trained model's".into()));
    }
    let n = data.nrows();
    let encoder = &meta.confound_encoder;
    let conf = match (&a.confounds, encoder.columns.is_empty()) {
        (None, true) if encoder.intercept => EncodedConfounds::intercept_only(n),
        (None, true) => EncodedConfounds::none(n),
        (None, false) => return Err(IcqfError::Config("the model was trained with confounds; pass --confounds".into())),
        (Some(table), _) => {
            let specs: Vec<ConfoundSpec> = encoder
                .columns
                .iter()
                .map(|c| match c {
                    ColumnEncoding::Continuous { name, .. } => ConfoundSpec {
                        name: name.clone(),
                        kind: ConfoundKind::Continuous,
                        levels: None,
                    },
                    ColumnEncoding::Categorical { name, levels } => ConfoundSpec {
                        name: name.clone(),
                        kind: ConfoundKind::Categorical,
                        levels: Some(levels.clone()),
                    },
                })
                .collect();
            encoder.encode(&load_confound_table(table, &specs)?, n)?
        }
    };
    let mut cfg: SolverConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(s) = a.solver {
        cfg.solver = solver_kind(s);
    }
    let (w, report) = transform(&data, &conf, &trained, &cfg)?;
    create_dir(&a.out)?;
    let header: Vec<String> = (0..trained.k).map(|f| format!("factor_{f}")).collect();
    icqf::io::save_matrix(a.out.join("W_new.csv"), &header, &w)?;
    write_json(a.out.join("transform_report.json"), &report)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| IcqfError::Config(format!("bad {what} value {x:?}"))))
        .collect()
}

fn parse_k_grid(s: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| IcqfError::Config(format!("bad k range {s:?}")))?;
        let hi: usize = hi.trim().parse().map_err(|_| IcqfError::Config(format!("bad k range {s:?}")))?;
        let range: RangeInclusive<usize> = lo..=hi;
        if range.is_empty() || lo == 0 {
            return Err(IcqfError::Config(format!("empty or zero k range {s:?}")));
        }
        return Ok(range.collect());
    }
    parse_list(s, "k")
}

fn cmd_select_rank(a: SelectRankArgs) -> Result<()> {
    let cfg = solver_config(&a.solver)?;
    let (data, conf, raw) = load_inputs(&a.data, cfg.baseline_l1nmf)?;
    let k_grid = parse_k_grid(&a.k_grid)?;
    let beta_grid = if a.beta_grid == "default" { DEFAULT_BETA_GRID.to_vec() } else { parse_list(&a.beta_grid, "beta")? };
    let strata: Option<Vec<String>> = match &a.stratify_by {
        None => None,
        Some(name) => {
            let col = raw
                .iter()
                .find(|r| &r.name == name)
                .ok_or_else(|| IcqfError::Config(format!("--stratify-by {name:?} is not a declared confound")))?;
            Some(match &col.data {
                RawColumnData::Categorical(v) => v.clone(),
                RawColumnData::Continuous(v) => v.iter().map(|x| x.to_string()).collect(),
            })
        }
    };
    let (n, m) = data.dim();
    let (br, bc) = (DEFAULT_BLOCKS.min(n), DEFAULT_BLOCKS.min(m));
    let plan = make_bcv_plan(n, m, br, bc, a.folds.min(br * bc), a.solver.seed, strata.as_deref())?;
    let result = select_k(&data, &conf, &k_grid, &beta_grid, &plan, &cfg)?;
    create_dir(&a.out)?;
    write_json(a.out.join("rank_selection.json"), &result)?;
    result.write_surface_csv(a.out.join("error_surface.csv"))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n: a.n,
        m: a.m,
        k_star: a.k_star,
        delta: a.delta,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let ds = gen_dataset(&spec)?;
    create_dir(&a.out)?;
    ds.save(&a.out)
}

fn cmd_match(a: MatchArgs) -> Result<()> {
    let (ma, _) = load_model(&a.models[0])?;
    let (mb, _) = load_model(&a.models[1])?;
    let result = greedy_match_factors(ma.rq.view(), mb.rq.view())?;
    match &a.out {
        Some(p) => write_json(p, &result),
        None => {
            let text = serde_json::to_string_pretty(&result)?;
            writeln!(std::io::stdout(), "{text}").map_err(|e| IcqfError::Invalid(format!("stdout: {e}")))
        }
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let schemes: Vec<DetectScheme> = parse_list(&a.scheme, "scheme")?;
    let spec = BenchSpec {
        deltas: parse_list(&a.delta, "delta")?,
        replicates: a.replicates,
        schemes,
        seed: a.seed,
        settings: DetectSettings {
            k_grid: parse_k_grid(&a.k_grid)?,
            beta: a.beta,
            ..DetectSettings::default()
        },
        ..BenchSpec::default()
    };
    let rows = bench_detect(&spec)?;
    create_dir(&a.out)?;
    write_bench_csv(&rows, a.out.join("bench.csv"))?;
    write_json(a.out.join("bench.json"), &rows)
}
