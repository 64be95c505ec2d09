use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use rlattice::analysis::{self, ConvergenceConfig, TestFunction};
use rlattice::approx::exact_sq_error_fixed;
use rlattice::{
    approximate, randomized_cbc, selftest, Alpha, CbcConfig, Error, FourierPolynomial, LatticeRule,
    ShiftedLatticeRule, Weights,
};

#[derive(Parser)]
#[command(name = "rlattice", version, about = "Randomized rank-1 lattice rules and approximation in weighted Korobov spaces")]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism. Never changes results.
    #[arg(long, global = true, env = "RLATTICE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a generating vector with the randomized CBC construction.
    Construct(ConstructArgs),
    /// Approximate a function from samples on a randomly shifted lattice.
    Approximate(ApproximateArgs),
    /// Monte Carlo study of the approximation error as M grows.
    Convergence(ConvergenceArgs),
    /// Brute-force ω(ℓ) table for d = 2.
    Omega(OmegaArgs),
    /// The RMSE lower bound √2 min(γ1, γ2) / (3 M^(α/2+1/2)).
    Lowerbound(LowerboundArgs),
    /// Run the built-in oracle battery.
    Selftest,
}

#[derive(Args)]
struct Space {
    /// Smoothness parameter α > 1/2.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Comma-separated coordinate weights.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    gamma: Vec<f64>,
}

impl Space {
    fn parse(&self) -> Result<(Alpha, Weights), Failure> {
        Ok((Alpha::new(self.alpha)?, Weights::new(self.gamma.clone())?))
    }
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long = "M")]
    m: u64,
    /// Dimension; defaults to the number of weights.
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("function").required(true).args(["fn_path", "kernel"])))]
#[command(group(ArgGroup::new("threshold").required(true).args(["t", "lambda"])))]
struct ApproximateArgs {
    /// FourierPolynomial JSON file: {"dim": d, "terms": [{"h": [...], "re": x, "im": y}, ...]}.
    #[arg(long = "fn")]
    fn_path: Option<PathBuf>,
    /// Use the reproducing kernel truncated to |h_j| ≤ --kernel-radius.
    #[arg(long)]
    kernel: bool,
    #[arg(long, default_value_t = 32)]
    kernel_radius: i64,
    #[arg(long = "M")]
    m: u64,
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long)]
    seed: u64,
    /// Index set threshold.
    #[arg(long = "T")]
    t: Option<f64>,
    /// Choose T = M^(λ − λβ/(2α) + 1/4); requires --beta.
    #[arg(long, requires = "beta")]
    lambda: Option<f64>,
    #[arg(long, requires = "lambda")]
    beta: Option<f64>,
    /// Also report the exact squared L2 error for the drawn shift.
    #[arg(long)]
    exact_error: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("function").required(true).args(["fn_path", "kernel", "fooling"])))]
struct ConvergenceArgs {
    /// Comma-separated values of M.
    #[arg(long = "M-list", value_delimiter = ',', required = true)]
    m_list: Vec<u64>,
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long = "fn")]
    fn_path: Option<PathBuf>,
    /// Kernel truncated to |h_j| ≤ --kernel-radius, scaled to unit norm.
    #[arg(long)]
    kernel: bool,
    #[arg(long, default_value_t = 64)]
    kernel_radius: i64,
    /// The fooling polynomial p_M, rebuilt for each M.
    #[arg(long)]
    fooling: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the slope fit and rate exponent as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct OmegaArgs {
    #[arg(long = "M")]
    m: u64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    gamma: Vec<f64>,
    /// Table covers |ℓ_j| ≤ radius.
    #[arg(long, default_value_t = 30)]
    radius: i64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long = "M")]
    m: u64,
    #[command(flatten)]
    space: Space,
    /// Also print the upper-bound report as JSON.
    #[arg(long)]
    report: bool,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NegativeCriterion(_) => Failure::Invariant(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// At least 16 significant digits, positional for moderate magnitudes.
fn fmt_sig(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() {
        format!("{x}")
    } else if (1e-4..1e6).contains(&a) {
        let places = (15 - a.log10().floor() as i32).max(0) as usize;
        format!("{x:.places$}")
    } else {
        format!("{x:.15e}")
    }
}

fn dimension(d: Option<usize>, gamma: &Weights) -> Result<usize, Failure> {
    let d = d.unwrap_or(gamma.len());
    if d == 0 {
        return Err(Failure::Usage("dimension must be at least 1".into()));
    }
    gamma.check_dim(d)?;
    Ok(d)
}

fn read_polynomial(path: &Path) -> Result<FourierPolynomial, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct ConstructOutput {
    #[serde(rename = "N")]
    n: u64,
    z: Vec<u64>,
    #[serde(rename = "M")]
    m: u64,
    d: usize,
    alpha: f64,
    gamma: Vec<f64>,
    tau: f64,
    seed: u64,
    candidate_set_sizes: Vec<usize>,
    /// R_{N,s} after each step.
    scores: Vec<f64>,
    bounds: Vec<f64>,
    /// bound − score per step; negative would be an invariant violation.
    bound_margins: Vec<f64>,
}

fn cmd_construct(a: &ConstructArgs) -> Result<(), Failure> {
    let (alpha, gamma) = a.space.parse()?;
    let d = dimension(a.d, &gamma)?;
    let cfg = CbcConfig {
        m: a.m,
        d,
        alpha,
        gamma: gamma.clone(),
        tau: a.tau,
        seed: a.seed,
    };
    let r = randomized_cbc(&cfg)?;
    let n = r.rule.n_points();
    let grid = analysis::default_lambda_grid(alpha)?;
    let bounds = (1..=d)
        .map(|s| analysis::theorem3_bound(n, s, alpha, &gamma, a.tau, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let margins: Vec<f64> = bounds.iter().zip(&r.per_step_scores).map(|(b, s)| b - s).collect();
    let out = ConstructOutput {
        n,
        z: r.rule.gen().to_vec(),
        m: a.m,
        d,
        alpha: alpha.value(),
        gamma: gamma.as_slice()[..d].to_vec(),
        tau: a.tau,
        seed: a.seed,
        candidate_set_sizes: r.candidate_set_sizes.clone(),
        scores: r.per_step_scores.clone(),
        bounds,
        bound_margins: margins.clone(),
    };
    emit(a.out.as_deref(), &to_json(&out))?;
    if let Some(s) = margins.iter().position(|&m| m < 0.0) {
        return Err(Failure::Invariant(format!("criterion exceeds its bound at step {}", s + 1)));
    }
    Ok(())
}

#[derive(Serialize)]
struct ApproximateOutput<'a> {
    approximant: &'a rlattice::Approximant,
    exact_sq_error: f64,
}

fn cmd_approximate(a: &ApproximateArgs) -> Result<(), Failure> {
    let (alpha, gamma) = a.space.parse()?;
    let f = match &a.fn_path {
        Some(p) => read_polynomial(p)?,
        None => {
            let d = dimension(a.d, &gamma)?;
            let g = Weights::new(gamma.as_slice()[..d].to_vec())?;
            rlattice::KernelFunction::new(alpha, g, d)?.truncated(a.kernel_radius)
        }
    };
    let d = a.d.unwrap_or(f.dim());
    if d != f.dim() {
        return Err(Failure::Usage(format!("--d {d} does not match the function dimension {}", f.dim())));
    }
    gamma.check_dim(d)?;
    let t = match (a.t, a.lambda, a.beta) {
        (Some(t), _, _) => t,
        (None, Some(l), Some(b)) => analysis::corollary_t(a.m, alpha, l, b)?,
        _ => unreachable!("clap enforces the threshold group"),
    };
    let cfg = CbcConfig {
        m: a.m,
        d,
        alpha,
        gamma: Weights::new(gamma.as_slice()[..d].to_vec())?,
        tau: a.tau,
        seed: a.seed,
    };
    let approx = approximate(&f, &cfg, t)?;
    let text = if a.exact_error {
        let p = &approx.provenance;
        let rule = ShiftedLatticeRule::new(LatticeRule::new(p.n, p.z.clone())?, p.shift.clone())?;
        let err = exact_sq_error_fixed(&f, &rule, &approx.index_set)?;
        to_json(&ApproximateOutput {
            approximant: &approx,
            exact_sq_error: err,
        })
    } else {
        to_json(&approx)
    };
    emit(a.out.as_deref(), &text)
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<(), Failure> {
    let (alpha, gamma) = a.space.parse()?;
    let function = if let Some(p) = &a.fn_path {
        TestFunction::Fixed(read_polynomial(p)?)
    } else if a.kernel {
        TestFunction::Fixed(analysis::kernel_test_function(alpha, &gamma, a.kernel_radius)?)
    } else {
        TestFunction::Fooling
    };
    let report = analysis::convergence_experiment(&ConvergenceConfig {
        m_list: a.m_list.clone(),
        alpha,
        gamma,
        tau: a.tau,
        seed: a.seed,
        n_trials: a.trials,
        lambda: a.lambda,
        beta: a.beta,
        function,
    })?;
    emit(a.out.as_deref(), &report.to_csv())?;
    eprintln!(
        "slope {} (95% CI [{}, {}]); proven rate exponent {}; fitted constant {} (fitted, not proven)",
        fmt_sig(report.fit.slope),
        fmt_sig(report.fit.ci_low),
        fmt_sig(report.fit.ci_high),
        fmt_sig(report.rate_exponent),
        fmt_sig(report.fitted_constant),
    );
    if let Some(p) = &a.summary {
        #[derive(Serialize)]
        struct Summary<'a> {
            fit: &'a analysis::SlopeFit,
            rate_exponent: f64,
            fitted_constant: f64,
        }
        let s = Summary {
            fit: &report.fit,
            rate_exponent: report.rate_exponent,
            fitted_constant: report.fitted_constant,
        };
        emit(Some(p), &to_json(&s))?;
    }
    Ok(())
}

fn cmd_omega(a: &OmegaArgs) -> Result<(), Failure> {
    let alpha = Alpha::new(a.alpha)?;
    let gamma = Weights::new(a.gamma.clone())?;
    let table = analysis::omega_table(a.m, a.tau, alpha, &gamma, a.radius)?;
    emit(a.out.as_deref(), &table.to_csv())?;
    let bad = table.counterexamples();
    eprintln!(
        "{} entries, {} flagged vanishing, {} counterexamples; empirical c = {} (fitted, not proven)",
        table.entries.len(),
        table.flagged_count(),
        bad.len(),
        fmt_sig(table.fitted_c)
    );
    if !bad.is_empty() {
        return Err(Failure::Invariant(format!("flagged entries with nonzero omega: {bad:?}")));
    }
    Ok(())
}

fn cmd_lowerbound(a: &LowerboundArgs) -> Result<(), Failure> {
    let (alpha, gamma) = a.space.parse()?;
    let v = analysis::rmse_lower_bound(a.m, alpha, &gamma)?;
    let mut text = format!("{}\n", fmt_sig(v));
    if a.report {
        text.push_str(&to_json(&analysis::bound_report(a.m, alpha, &gamma, a.tau, None)?));
    }
    emit(None, &text)
}

fn cmd_selftest() -> Result<(), Failure> {
    let checks = selftest::run_all();
    let mut out = String::new();
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
    }
    emit(None, &out)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Invariant(format!("{failed} self-test checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Construct(a) => cmd_construct(a),
        Command::Approximate(a) => cmd_approximate(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Omega(a) => cmd_omega(a),
        Command::Lowerbound(a) => cmd_lowerbound(a),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("invariant violated: {m}");
            ExitCode::from(1)
        }
    }
}
