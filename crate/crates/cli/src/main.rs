//! `btd`: generation, decomposition, uniqueness checks and Monte-Carlo
//! experiments for block-term decompositions in rank-(1, L, L) terms.
//!
//! Exit codes: 0 success, 2 input error, 3 solver failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use btd_core::decomposition::{add_noise, random_btd, NoiseSpec, Snr};
use btd_core::experiment::{run_experiment, ExperimentConfig, DEFAULT_CONDITION_CAP};
use btd_core::gf::{verify_generic_q2_dim, verify_phi_full_rank, GfVerificationResult, DEFAULT_TRIALS};
use btd_core::io::{self, AnyTensor};
use btd_core::sjbd::EvdVariant;
use btd_core::solver::{decompose, CaseChoice, SolveMode, SolverOptions, SOLVER_RANK_TOL};
use btd_core::uniqueness::{check_main_theorem, generic_bounds, parameter_count_s, UniquenessReport, UNIQUENESS_RANK_TOL};
use btd_core::{BlockTermDecomposition, Field, Scalar, Tensor3};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

/// Environment variable overriding the default rank threshold.
const RANK_TOL_ENV: &str = "BTD_RANK_TOL";

#[derive(Parser)]
#[command(name = "btd", version, about = "Algebraic block-term decomposition in rank-(1,L,L) terms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random tensor (BTD1) and its ground-truth decomposition (JSON).
    Generate(GenerateArgs),
    /// Decompose a BTD1 tensor and print a JSON report.
    Decompose(DecomposeArgs),
    /// Monte-Carlo detection frequencies and errors over an SNR grid, as CSV.
    Experiment(ExperimentArgs),
    /// Uniqueness conditions for given dimensions and sizes or a decomposition file.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Tensor dimensions `I,J,K`.
    #[arg(long, value_parser = parse_dims)]
    dims: [usize; 3],
    /// Term sizes, e.g. `2,3,4` or `1x47,2`.
    #[arg(long, value_parser = parse_sizes)]
    sizes: Sizes,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FieldArg::Real)]
    field: FieldArg,
    /// Signal-to-noise ratio in dB, or `inf` for exact data.
    #[arg(long, default_value = "inf")]
    snr: Snr,
    /// Output prefix; writes `<prefix>.btd` and `<prefix>.json`.
    #[arg(long, default_value = "tensor")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Scenario1,
    Scenario2,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Auto,
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvdArg {
    Single,
    Cpd,
}

#[derive(Args)]
struct EvdOptions {
    /// How joint eigenvectors are extracted in the block diagonalisation.
    #[arg(long, value_enum, default_value_t = EvdArg::Single)]
    evd: EvdArg,
    /// Weight of the identity slice in the `cpd` variant.
    #[arg(long, default_value_t = 2.0)]
    omega: f64,
}

impl EvdOptions {
    fn variant(&self) -> EvdVariant {
        match self.evd {
            EvdArg::Single => EvdVariant::Single,
            EvdArg::Cpd => EvdVariant::Cpd { omega: self.omega },
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// BTD1 tensor file.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = CaseArg::Auto)]
    case: CaseArg,
    /// Number of terms, when known.
    #[arg(long)]
    known_r: Option<usize>,
    /// Sum of the term sizes, when known.
    #[arg(long)]
    known_suml: Option<usize>,
    /// Relative rank threshold; defaults to `BTD_RANK_TOL` or 1e-8.
    #[arg(long)]
    rank_tol: Option<f64>,
    #[command(flatten)]
    evd: EvdOptions,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = parse_dims)]
    dims: [usize; 3],
    #[arg(long, value_parser = parse_sizes)]
    sizes: Sizes,
    /// Comma-separated SNR grid in dB; `inf` selects exact mode.
    #[arg(long, value_delimiter = ',', default_value = "20,25,30,35,40,45,50")]
    snr: Vec<Snr>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Largest accepted condition number of the first and third unfoldings.
    #[arg(long, default_value_t = DEFAULT_CONDITION_CAP)]
    cap: f64,
    #[command(flatten)]
    evd: EvdOptions,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `frequencies.csv` and `errors.csv`; standard output when absent.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_parser = parse_dims, required_unless_present = "decomposition")]
    dims: Option<[usize; 3]>,
    #[arg(long, value_parser = parse_sizes, required_unless_present = "decomposition")]
    sizes: Option<Sizes>,
    /// Decomposition JSON file to check instead of a random instance.
    #[arg(long, conflicts_with_all = ["dims", "sizes"])]
    decomposition: Option<PathBuf>,
    /// Also certify the generic rank conditions over finite fields.
    #[arg(long)]
    gf: bool,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

/// Term sizes parsed from one argument.
#[derive(Clone, Debug, PartialEq)]
struct Sizes(Vec<usize>);

/// Failure classes mapped to exit codes.
enum Failure {
    Input(String),
    Solver(String),
}

impl From<btd_core::Error> for Failure {
    fn from(e: btd_core::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[i, j, k] if i > 0 && j > 0 && k > 0 => Ok([i, j, k]),
        _ => Err("expected three positive integers `I,J,K`".into()),
    }
}

/// Parses `2,3,4` or `1x47,2`, where `LxN` repeats size `L` `N` times.
fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        let (size, count) = match item.split_once('x') {
            Some((l, n)) => (l, n.parse::<usize>().map_err(|e| format!("`{item}`: {e}"))?),
            None => (item, 1),
        };
        let size = size.parse::<usize>().map_err(|e| format!("`{item}`: {e}"))?;
        if size == 0 {
            return Err("sizes must be positive".into());
        }
        out.extend(std::iter::repeat_n(size, count));
    }
    if out.is_empty() {
        return Err("at least one size is required".into());
    }
    Ok(Sizes(out))
}

fn rank_tol(flag: Option<f64>, default: f64) -> Result<f64, Failure> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(RANK_TOL_ENV) {
        Ok(v) => f64::from_str(&v).map_err(|_| Failure::Input(format!("{RANK_TOL_ENV} is not a number: `{v}`"))),
        Err(_) => Ok(default),
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write_output(text: &str, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            emit(&format!("{text}\n"));
            Ok(())
        }
    }
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn generate_in<T: Scalar>(args: &GenerateArgs) -> Result<(), Failure> {
    let d = random_btd::<T>(args.dims, &args.sizes.0, args.seed)?;
    let t = add_noise(&d.compose(), NoiseSpec { snr: args.snr, seed: args.seed.wrapping_add(1) })?;
    let tensor_path = with_suffix(&args.out, ".btd");
    let truth_path = with_suffix(&args.out, ".json");
    io::save_btd1(&t, &tensor_path)?;
    io::save_decomposition(&d, &truth_path)?;
    eprintln!("wrote {} and {}", tensor_path.display(), truth_path.display());
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    match args.field {
        FieldArg::Real => generate_in::<f64>(&args),
        FieldArg::Complex => generate_in::<Complex64>(&args),
    }
}

fn decompose_in<T: Scalar>(t: &Tensor3<T>, opts: &SolverOptions, out: Option<&Path>) -> Result<(), Failure> {
    match decompose(t, opts) {
        Ok(rep) => {
            let text = serde_json::to_string_pretty(&io::solve_report_to_json(&rep)).expect("report serializes");
            write_output(&text, out)
        }
        Err(e) => {
            let text = serde_json::to_string_pretty(&json!({ "error": e.to_string() })).expect("error serializes");
            write_output(&text, out)?;
            Err(Failure::Solver(e.to_string()))
        }
    }
}

fn cmd_decompose(args: DecomposeArgs) -> Result<(), Failure> {
    let tensor = io::load_btd1(&args.input).map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let opts = SolverOptions {
        case: match args.case {
            CaseArg::Auto => CaseChoice::Auto,
            CaseArg::One => CaseChoice::One,
            CaseArg::Two => CaseChoice::Two,
            CaseArg::Three => CaseChoice::Three,
        },
        mode: match args.mode {
            ModeArg::Exact => SolveMode::Exact,
            ModeArg::Scenario1 => SolveMode::Scenario1,
            ModeArg::Scenario2 => SolveMode::Scenario2,
        },
        known_r: args.known_r,
        known_sum_l: args.known_suml,
        rank_tol: rank_tol(args.rank_tol, SOLVER_RANK_TOL)?,
        evd_variant: args.evd.variant(),
        seed: args.seed,
    };
    match &tensor {
        AnyTensor::Real(t) => decompose_in(t, &opts, args.out.as_deref()),
        AnyTensor::Complex(t) => decompose_in(t, &opts, args.out.as_deref()),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig {
        dims: args.dims,
        sizes: args.sizes.0,
        snrs: args.snr,
        trials: args.trials,
        condition_cap: args.cap,
        evd_variant: args.evd.variant(),
        seed: args.seed,
    };
    let start = Instant::now();
    let res = run_experiment(&cfg)?;
    eprintln!(
        "{} trials, {} rejected draws (condition cap {}), {:.1} s",
        cfg.trials,
        res.rejected_draws,
        cfg.condition_cap,
        start.elapsed().as_secs_f64()
    );
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
            write_output(&res.frequency_csv(), Some(&dir.join("frequencies.csv")))?;
            write_output(&res.error_csv(), Some(&dir.join("errors.csv")))?;
            eprintln!("wrote {}/frequencies.csv and {}/errors.csv", dir.display(), dir.display());
        }
        None => {
            emit(&format!("{}\n{}", res.frequency_csv(), res.error_csv()));
        }
    }
    Ok(())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn opt_yes_no(b: Option<bool>) -> &'static str {
    b.map_or("n/a", yes_no)
}

fn render_generic(dims: [usize; 3], sizes: &[usize], lines: &mut Vec<String>) -> Value {
    let g = generic_bounds(dims, sizes);
    let p = parameter_count_s(dims, sizes).ok();
    lines.push("generic bounds".into());
    lines.push(format!("  kappa_B = {}, kappa_C = {}", g.kappa_b, g.kappa_c));
    lines.push(format!("  row 1 (two full-rank factors):              {}", yes_no(g.row1)));
    lines.push(format!("  row 2 (I >= R, one full-rank factor):       {}", yes_no(g.row2)));
    lines.push(format!("  row 3 (I >= R, kappa_B + kappa_C >= R + 2): {}", yes_no(g.row3)));
    lines.push(format!("  row 4 (equal sizes, upon verification):     {}", opt_yes_no(g.row4)));
    lines.push(format!("  row 5 (no full-rank factor):                {}", yes_no(g.row5)));
    lines.push(format!("  row 6 (counts; needs Phi verification):     {}", yes_no(g.row6)));
    lines.push(format!("  row 7 (equal sizes, (J-L)(K-L) >= R):       {}", opt_yes_no(g.row7)));
    lines.push(format!("  row 8 ((I-1)(J-1) >= sum L):                {}", yes_no(g.row8)));
    let m = g.main_generic;
    lines.push(format!("  generic main theorem with K = {}", m.k_used));
    lines.push(format!("    assumptions (IJ >= sum L, d_1 >= 1):      {}", yes_no(m.assumptions)));
    lines.push(format!("    first factor unique:                      {}", yes_no(m.assumptions && m.first_factor_inequality)));
    lines.push(format!("    overall unique (I >= R or K = sum L):     {}", yes_no(m.assumptions && m.overall)));
    lines.push("    (both subject to the generic null-space dimension of Q2; see --gf)".into());
    match p {
        Some(p) => lines.push(format!("parameter count S = {} vs IJK = {}: {}", p.s, p.ijk, if p.passes { "S < IJK" } else { "S >= IJK (not unique)" })),
        None => lines.push("parameter count: not applicable (some L_r > min(J, K))".into()),
    }
    json!({ "bounds": g, "parameter_count": p })
}

fn render_report(rep: &UniquenessReport, lines: &mut Vec<String>) {
    let a = &rep.assumptions;
    let c = &rep.conditions;
    let s = &rep.statements;
    lines.push(format!("instance {:?}, sizes {:?}", rep.dims, rep.sizes));
    lines.push("necessary conditions (full column rank)".into());
    lines.push(format!("  [vec E_r]:      {}", yes_no(rep.necessary.vec_e_fcr)));
    lines.push(format!("  [a_r (x) B_r]:  {}", yes_no(rep.necessary.a_b_fcr)));
    lines.push(format!("  [a_r (x) C_r]:  {}", yes_no(rep.necessary.a_c_fcr)));
    lines.push(format!("rank A = {}, k-rank A = {}{}", rep.rank_a, rep.k_a.value, if rep.k_a.exact { "" } else { " (lower bound)" }));
    lines.push("assumptions".into());
    lines.push(format!("  r(T_(3)) = K:                 {}", yes_no(a.t3_full_rank)));
    lines.push(format!("  d_r = {:?}, all >= 1:        {}", a.d, yes_no(a.d_r_positive.iter().all(|&x| x))));
    lines.push(format!("  F subset ranks (k_A >= 2):    {}", yes_no(a.f_rank_ok)));
    lines.push(format!("  dim null Q2 = {} vs Q = {}:   {}", a.q2_null_dim, a.q, yes_no(a.q2_dim_ok)));
    lines.push("conditions".into());
    lines.push(format!("  (a) K >= sum L - min L + 1, k_A >= 2: {}", yes_no(c.a)));
    lines.push(format!("  (b) r_A = R:                          {}", yes_no(c.b)));
    lines.push(format!("  (c) k_A = r_A < R, F and G ranks:     {}", yes_no(c.c)));
    lines.push(format!("  (d) rank [E_1; ...; E_R] = sum L:     {}", yes_no(c.d)));
    lines.push(format!("  (e) counting inequality:              {}", yes_no(c.e)));
    lines.push("statements".into());
    lines.push(format!("  (i)   A computable by EVD:              {}", yes_no(s.s1_a_by_evd)));
    lines.push(format!("  (ii)  decomposition computable by EVD:  {}", yes_no(s.s2_overall_by_evd)));
    lines.push(format!("  (iii) first factors select columns of A: {}", yes_no(s.s3_first_factor_selection)));
    lines.push(format!("  (iv)  first factor matrix unique:       {}", yes_no(s.s4_first_factor_unique)));
    lines.push(format!("  (v)   decomposition unique:             {}", yes_no(s.s5_overall_unique)));
    for n in &rep.not_evaluated {
        lines.push(format!("  not evaluated (subset cap): {n}"));
    }
}

fn render_gf(label: &str, r: &GfVerificationResult, lines: &mut Vec<String>) {
    let verdict = match &r.verdict {
        btd_core::gf::Verdict::Certified => "certified".to_string(),
        btd_core::gf::Verdict::Inconclusive => "inconclusive".to_string(),
        btd_core::gf::Verdict::Impossible { reason } => format!("cannot hold: {reason}"),
    };
    lines.push(format!(
        "{label} over {}: {verdict} (rank {} of {} expected, {} trial(s))",
        r.field, r.witnessed_rank, r.expected, r.trials
    ));
}

fn check_decomposition<T: Scalar>(d: &BlockTermDecomposition<T>, tol: f64, lines: &mut Vec<String>) -> Result<Value, Failure> {
    let rep = check_main_theorem(d, None, tol)?;
    render_report(&rep, lines);
    Ok(serde_json::to_value(&rep).expect("report serializes"))
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let tol = rank_tol(args.rank_tol, UNIQUENESS_RANK_TOL)?;
    let mut lines = Vec::new();
    let mut out = serde_json::Map::new();
    let (dims, sizes) = match &args.decomposition {
        Some(path) => {
            let v = io::load_decomposition_json(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let (report, dims, sizes) = match io::decomposition_field(&v)? {
                Field::Real => {
                    let d = io::decomposition_from_json::<f64>(&v)?;
                    (check_decomposition(&d, tol, &mut lines)?, d.dims(), d.sizes())
                }
                Field::Complex => {
                    let d = io::decomposition_from_json::<Complex64>(&v)?;
                    (check_decomposition(&d, tol, &mut lines)?, d.dims(), d.sizes())
                }
            };
            out.insert("instance".into(), report);
            (dims, sizes)
        }
        None => {
            let dims = args.dims.expect("clap enforces --dims");
            let sizes = args.sizes.clone().expect("clap enforces --sizes").0;
            match random_btd::<f64>(dims, &sizes, args.seed) {
                Ok(d) => {
                    lines.push(format!("random instance (seed {})", args.seed));
                    out.insert("instance".into(), check_decomposition(&d, tol, &mut lines)?);
                }
                Err(e) => lines.push(format!("no random instance: {e}")),
            }
            (dims, sizes)
        }
    };
    let generic = render_generic(dims, &sizes, &mut lines);
    out.insert("generic".into(), generic);
    if args.gf {
        let [i, j, k] = dims;
        let q2 = verify_generic_q2_dim(i, j, k, &sizes, args.trials, args.seed);
        let phi = verify_phi_full_rank(i, j, &sizes, args.trials, args.seed);
        render_gf("generic dim null Q2", &q2, &mut lines);
        render_gf("Phi full column rank", &phi, &mut lines);
        out.insert("gf_q2_dim".into(), serde_json::to_value(&q2).expect("serializes"));
        out.insert("gf_phi_full_rank".into(), serde_json::to_value(&phi).expect("serializes"));
    }
    if args.json {
        emit(&format!("{}\n", serde_json::to_string_pretty(&Value::Object(out)).expect("serializes")));
    } else {
        emit(&format!("{}\n", lines.join("\n")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_grammar() {
        assert_eq!(parse_sizes("2,3,4").unwrap().0, vec![2, 3, 4]);
        let v = parse_sizes("1x47,2").unwrap().0;
        assert_eq!(v.len(), 48);
        assert_eq!(v.iter().sum::<usize>(), 49);
        assert!(parse_sizes("0").is_err());
        assert!(parse_sizes("1xq").is_err());
    }

    #[test]
    fn dims_grammar() {
        assert_eq!(parse_dims("3,8,8").unwrap(), [3, 8, 8]);
        assert!(parse_dims("3,8").is_err());
        assert!(parse_dims("3,0,8").is_err());
    }
}
