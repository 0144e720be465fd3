use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use noda_core::diagnostics::{self, SignatureCheck};
use noda_core::io::{self as nio, HistoryFile, HistoryFormat};
use noda_core::{
    generate, mmatrix, solve_mmatrix, solve_perron, Algorithm, HistoryF64, NodaError, ProblemMode, SolveOptionsF64,
    SparseMatrixF64,
};

use crate::{Algo, CommonArgs, SolveArgs, VerifyArgs};
use crate::{EXIT_FAILURE, EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_POSITIVITY, EXIT_VALIDATION};

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Positivity(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Positivity(_) => EXIT_POSITIVITY,
            Failure::Other(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Positivity(m) => f.write_str(m),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<NodaError> for Failure {
    fn from(e: NodaError) -> Self {
        match e {
            NodaError::PositivityAtRisk { .. } | NodaError::ContractViolation { .. } => {
                Failure::Positivity(e.to_string())
            }
            NodaError::Io(_) | NodaError::Json(_) | NodaError::OracleInconsistency(_) | NodaError::ZeroVector(_) => {
                Failure::Other(e.into())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn load_matrix(spec: &str) -> Result<SparseMatrixF64, Failure> {
    let m = match spec.strip_prefix("gen:") {
        Some(g) => generate::from_spec(g)?,
        None => {
            let file = File::open(spec).map_err(|e| Failure::Validation(format!("cannot open '{spec}': {e}")))?;
            nio::parse_matrix_market(BufReader::new(file)).map_err(|e| Failure::Validation(format!("{spec}: {e}")))?
        }
    };
    // CG needs symmetry; trust a declared hint, otherwise check exactly
    let sym = m.symmetric_hint() || m.is_symmetric();
    Ok(m.with_symmetric_hint(sym))
}

fn options(common: &CommonArgs, algorithm: Algorithm, gamma: f64) -> Result<SolveOptionsF64, Failure> {
    let opts = SolveOptionsF64 {
        algorithm,
        gamma,
        outer_tol: common.tol,
        max_outer: common.max_outer,
        inner_cap: common.inner_cap,
        inner_method: common.inner.into(),
        x0: common.x0.clone(),
        ..SolveOptionsF64::default()
    };
    opts.validate()?;
    Ok(opts)
}

/// Runs one algorithm; the power method on an M-matrix works on `σI − A`.
fn run(
    matrix: &SparseMatrixF64,
    mode: ProblemMode,
    opts: &SolveOptionsF64,
    sigma: Option<f64>,
) -> Result<HistoryF64, NodaError> {
    match (mode, opts.algorithm) {
        (ProblemMode::MSmallest, Algorithm::Power) => {
            let (sigma, h) = mmatrix::power_on_shift(matrix, sigma, opts)?;
            log::info!("power method on sigma*I - A with sigma = {sigma}");
            Ok(h)
        }
        (ProblemMode::Perron, _) => solve_perron(matrix, opts),
        (ProblemMode::MSmallest, _) => solve_mmatrix(matrix, opts),
    }
}

fn prepare(common: &CommonArgs) -> Result<SparseMatrixF64, Failure> {
    if common.deterministic {
        noda_core::sparse::set_matvec_threads(1);
    }
    load_matrix(&common.matrix)
}

fn describe(m: &SparseMatrixF64) -> String {
    let sym = if m.symmetric_hint() { "symmetric" } else { "unsymmetric" };
    format!("n = {}, nnz = {}, {sym}", m.n(), m.nnz())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

fn status_code(h: &HistoryF64) -> u8 {
    if !h.positivity_preserved {
        EXIT_POSITIVITY
    } else if !h.converged {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    }
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let common = &args.common;
    let matrix = prepare(common)?;
    let mode: ProblemMode = common.mode.into();
    let opts = options(common, args.algo.into(), common.gamma)?;
    if common.sigma.is_some() && !(mode == ProblemMode::MSmallest && args.algo == Algo::Power) {
        log::warn!("--sigma only applies to the power method in mmatrix mode; ignored");
    }
    let h = run(&matrix, mode, &opts, common.sigma)?;

    if let Some(path) = &args.history {
        let file = HistoryFile::from_history(&h, &common.matrix, !common.deterministic);
        let sink =
            File::create(path).map_err(|e| Failure::Other(anyhow::anyhow!("cannot create {}: {e}", path.display())))?;
        let mut sink = BufWriter::new(sink);
        nio::write_history(&file, HistoryFormat::from_path(path), &mut sink)?;
        sink.flush().map_err(|e| Failure::Other(e.into()))?;
    }

    let last = h.last();
    println!("matrix      {} ({})", common.matrix, describe(&matrix));
    println!("mode        {}", mode_name(mode));
    println!("algorithm   {} (gamma = {})", h.algorithm.name(), common.gamma);
    println!("eigenvalue  {:.16e}", last.lambda);
    println!("residual    {:.3e}", last.relative_residual);
    println!("I_outer     {}", h.i_outer);
    println!("I_inner     {}", h.i_inner);
    println!("I_total     {}", h.i_total);
    println!("CPU time    {:.3} s", h.wall_time.as_secs_f64());
    println!("converged   {}", yes_no(h.converged));
    println!("positivity  {}", yes_no(h.positivity_preserved));
    Ok(status_code(&h))
}

fn mode_name(mode: ProblemMode) -> &'static str {
    match mode {
        ProblemMode::Perron => "nonneg",
        ProblemMode::MSmallest => "mmatrix",
    }
}

pub fn compare(common: &CommonArgs) -> Outcome {
    let matrix = prepare(common)?;
    let mode: ProblemMode = common.mode.into();
    let runs = [
        (Algorithm::Ni, common.gamma, "NI".to_string()),
        (Algorithm::Ini1, 0.8, "INI_1 (gamma=0.8)".to_string()),
        (Algorithm::Ini1, 0.1, "INI_1 (gamma=0.1)".to_string()),
        (Algorithm::Ini2, common.gamma, format!("INI_2 (gamma={})", common.gamma)),
        (Algorithm::Power, common.gamma, "power".to_string()),
    ];
    println!("matrix: {} ({}), mode: {}, tol: {:e}", common.matrix, describe(&matrix), mode_name(mode), common.tol);
    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10} {:>24}",
        "method", "I_outer", "I_inner", "I_total", "CPU (s)", "Positivity", "Converged", "eigenvalue"
    );
    for (algorithm, gamma, label) in runs {
        let opts = options(common, algorithm, gamma)?;
        match run(&matrix, mode, &opts, common.sigma) {
            Ok(h) => {
                println!(
                    "{:<20} {:>8} {:>8} {:>8} {:>10.4} {:>10} {:>10} {:>24.16e}",
                    label,
                    h.i_outer,
                    h.i_inner,
                    h.i_total,
                    h.wall_time.as_secs_f64(),
                    yes_no(h.positivity_preserved),
                    if h.converged { "Yes" } else { "No" },
                    h.eigenvalue()
                );
            }
            Err(e) => match Failure::from(e) {
                Failure::Positivity(msg) => {
                    println!(
                        "{label:<20} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}   {msg}",
                        "-", "-", "-", "-", "No", "No"
                    );
                }
                other => return Err(other),
            },
        }
    }
    Ok(EXIT_OK)
}

/// Signatures the theory predicts for each algorithm.
fn expected_checks(algo: Algo) -> &'static [&'static str] {
    match algo {
        Algo::Ini1 => &["linear factor"],
        Algo::Ini2 => &["linear factor", "superlinear"],
        Algo::Ni => &["superlinear", "quadratic"],
        Algo::Power => &[],
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
}

pub fn verify(args: &VerifyArgs) -> Outcome {
    let common = &args.common;
    let matrix = prepare(common)?;
    let mode: ProblemMode = common.mode.into();
    let reference = diagnostics::dense_reference(&matrix, mode, args.oracle_cap)?;
    let opts = options(common, args.algo.into(), common.gamma)?;
    let h = run(&matrix, mode, &opts, common.sigma)?;
    let report = diagnostics::rate_report(&h, &reference)?;

    println!(
        "matrix: {} ({}), algorithm: {}, gamma = {}",
        common.matrix,
        describe(&matrix),
        h.algorithm.name(),
        common.gamma
    );
    println!("reference eigenvalue {:.16e} (residual {:.1e})", reference.value, reference.achieved_residual);
    println!("{:>3} {:>24} {:>10} {:>10} {:>10} {:>10}", "k", "lambda", "eps_k", "rho_k", "alpha_k", "tan_phi_k");
    for (k, s) in h.states.iter().enumerate() {
        let floor = if report.at_floor[k] { "*" } else { "" };
        let rho = report.rho.get(k).copied();
        let alpha = k.checked_sub(1).and_then(|j| report.order_estimates.get(j).copied().flatten());
        println!(
            "{:>3} {:>24.16e} {:>9.3e}{floor:1} {:>10} {:>10} {:>10.3e}",
            k,
            s.lambda,
            report.eps[k],
            fmt_opt(rho),
            alpha.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into()),
            report.tan_phi[k]
        );
    }
    println!("(* = at the rounding floor; rho_k = eps_(k+1)/eps_k, alpha_k from eps_(k-1), eps_k, eps_(k+1))");

    let expected = expected_checks(args.algo);
    let mut failed = false;
    let checks: [SignatureCheck; 3] =
        [report.linear_factor_check(), report.superlinear_check(), report.quadratic_check()];
    for c in &checks {
        let applies = expected.contains(&c.name.as_str());
        let verdict = match (c.passed, applies) {
            (None, _) => "n/a",
            (Some(true), true) => "PASS",
            (Some(false), true) => {
                failed = true;
                "FAIL"
            }
            (Some(true), false) => "pass (not expected)",
            (Some(false), false) => "fail (not expected)",
        };
        println!("{:<14} {:<20} {}", c.name, verdict, c.detail);
    }
    let code = status_code(&h);
    if code != EXIT_OK {
        return Ok(code);
    }
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}
