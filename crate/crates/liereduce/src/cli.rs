//! Command-line front end: argument parsing, file handling, and report
//! assembly over the library's checking and reduction entry points.
//!
//! Exit codes are a stable contract: 0 when every check passes, 1 when a
//! mathematical check fails or cannot be completed, 2 for parse and usage
//! errors, 3 for internal faults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algebra::{
    combination_name, derived_series, killing_radical, reduction_chain, search_max_solvable,
    solvability_level, structure_constants, transitivity_check, verify_algebra_axioms,
    AxiomViolation, StructureConstants,
};
use crate::error::{Error, Result};
use crate::expr::{equals_probabilistic, EqualityConfig, Expr, Rational, Verdict};
use crate::jet::{check_symmetry, load_problem, OdeSystem, VectorField};
use crate::linalg::q;
use crate::parser::{parse_chart, parse_expression, parse_problem, ChartSpec};
use crate::reduce::{
    final_report, load_session, run_chain, run_step, save_session, SessionState,
};
use crate::report::{witness_string, Format, Report};

/// Trial budget for the heuristic solvable-subalgebra search.
const SOLVABLE_SEARCH_BUDGET: usize = 10_000;

const EXAMPLE_PROBLEM: &str = include_str!("../fixtures/worked_example.prob");
const EXAMPLE_STEP1: &str = include_str!("../fixtures/step1.chart");
const EXAMPLE_BRANCH_A: &str = include_str!("../fixtures/branch_a.chart");
const EXAMPLE_BRANCH_B: &str = include_str!("../fixtures/branch_b.chart");

#[derive(Parser)]
#[command(
    name = "liereduce",
    version,
    about = "Verifies Lie point symmetries of ODE systems and reduces their order along the coset chain of a solvable symmetry algebra"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatOpt {
    Text,
    Structured,
}

#[derive(Args)]
struct CommonOpts {
    /// Seed for every probabilistic identity check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample points per identity check; values below 3 are raised to 3.
    #[arg(long, default_value_t = 8)]
    trials: usize,
    /// Relative tolerance for numeric agreement.
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    /// Report format; the structured form is byte-stable for equal inputs.
    #[arg(long, value_enum, default_value_t = FormatOpt::Text)]
    format: FormatOpt,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify that each declared generator is a point symmetry.
    Check {
        problem: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Structure constants, axioms, derived series, and solvability.
    Algebra {
        problem: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Coset reduction plan with per-coset transitivity checks.
    Plan {
        problem: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Apply one chart to a session, consuming the next coset.
    Step {
        /// Problem file; required when the session file does not exist yet.
        problem: Option<PathBuf>,
        /// Session file to read and, on success, update in place.
        #[arg(long)]
        session: PathBuf,
        /// Chart file rectifying the next coset.
        #[arg(long)]
        chart: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run the whole reduction chain from a problem file.
    Chain {
        problem: PathBuf,
        /// Chart files, one per coset in chain order; falls back to charts
        /// embedded in the problem file.
        #[arg(long = "chart")]
        charts: Vec<PathBuf>,
        /// Persist the final session state to this path.
        #[arg(long)]
        session: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Re-derive the bundled worked example, asserting every intermediate.
    VerifyPaperExample {
        #[command(flatten)]
        opts: CommonOpts,
    },
}

/// Resolved settings of one invocation.
pub struct RunConfig {
    pub command: &'static str,
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub trials: usize,
    pub rel_tol: f64,
    pub format: Format,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    fn from_opts(command: &'static str, input: Option<PathBuf>, opts: &CommonOpts) -> RunConfig {
        RunConfig {
            command,
            input,
            seed: opts.seed,
            trials: opts.trials.max(3),
            rel_tol: opts.rel_tol,
            format: match opts.format {
                FormatOpt::Text => Format::Text,
                FormatOpt::Structured => Format::Structured,
            },
            output: opts.output.clone(),
        }
    }

    fn equality(&self, boxes: &BTreeMap<String, (Rational, Rational)>) -> EqualityConfig {
        EqualityConfig {
            seed: self.seed,
            trials: self.trials,
            rel_tol: self.rel_tol,
            boxes: boxes.clone(),
            ..EqualityConfig::default()
        }
    }
}

/// Parses the process arguments, runs the selected command, writes the
/// report, and maps the outcome onto the exit-code contract.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help and --version arrive here but are not usage errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let (cfg, outcome) = dispatch(cli);
    match outcome {
        Ok(mut report) => {
            report.elapsed_ms = Some(started.elapsed().as_millis());
            let rendered = report.render(cfg.format);
            if let Some(path) = &cfg.output {
                if let Err(e) = fs::write(path, &rendered) {
                    eprintln!("error: {e}");
                    return 2;
                }
            } else {
                print!("{rendered}");
            }
            if report.ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> (RunConfig, Result<Report>) {
    match cli.command {
        Cmd::Check { problem, opts } => {
            let cfg = RunConfig::from_opts("check", Some(problem), &opts);
            let out = cmd_check(&cfg);
            (cfg, out)
        }
        Cmd::Algebra { problem, opts } => {
            let cfg = RunConfig::from_opts("algebra", Some(problem), &opts);
            let out = cmd_algebra(&cfg);
            (cfg, out)
        }
        Cmd::Plan { problem, opts } => {
            let cfg = RunConfig::from_opts("plan", Some(problem), &opts);
            let out = cmd_plan(&cfg);
            (cfg, out)
        }
        Cmd::Step {
            problem,
            session,
            chart,
            opts,
        } => {
            let cfg = RunConfig::from_opts("step", problem, &opts);
            let out = cmd_step(&cfg, &session, &chart);
            (cfg, out)
        }
        Cmd::Chain {
            problem,
            charts,
            session,
            opts,
        } => {
            let cfg = RunConfig::from_opts("chain", Some(problem), &opts);
            let out = cmd_chain(&cfg, &charts, session.as_deref());
            (cfg, out)
        }
        Cmd::VerifyPaperExample { opts } => {
            let cfg = RunConfig::from_opts("verify-paper-example", None, &opts);
            let out = verify_example(&cfg, EXAMPLE_PROBLEM);
            (cfg, out)
        }
    }
}

fn read_input(cfg: &RunConfig) -> Result<String> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Internal("command dispatched without an input path".into()))?;
    Ok(fs::read_to_string(path)?)
}

/// Records one symmetry verdict, naming the first failing component.
fn report_symmetry(
    report: &mut Report,
    field: &VectorField,
    sys: &OdeSystem,
    cfg: &EqualityConfig,
) -> Result<bool> {
    let sc = check_symmetry(field, sys, cfg)?;
    let name = format!("symmetry {}", sc.generator);
    if sc.passed {
        report.check(name, true, format!("lambda = {}", sc.lambda));
    } else {
        let (coord, verdict) = sc
            .components
            .iter()
            .find(|(_, v)| !v.is_equal())
            .ok_or_else(|| Error::Internal("failed symmetry check without a failing component".into()))?;
        let witness = match verdict {
            Verdict::Unequal(w) => Some(witness_string(w)),
            Verdict::Equal => None,
        };
        report.check_with_witness(
            name,
            false,
            format!("component {coord} breaks the condition; lambda = {}", sc.lambda),
            witness,
        );
    }
    Ok(sc.passed)
}

fn cmd_check(cfg: &RunConfig) -> Result<Report> {
    let p = parse_problem(&read_input(cfg)?)?;
    let (sys, fields) = load_problem(&p)?;
    let eq = cfg.equality(&p.boxes);
    let mut report = Report::new(cfg.command, cfg.seed);
    for f in &fields {
        report_symmetry(&mut report, f, &sys, &eq)?;
    }
    Ok(report)
}

fn axiom_check(report: &mut Report, name: &str, first: Option<&AxiomViolation>) {
    match first {
        None => report.check(name, true, ""),
        Some(v) => report.check(name, false, v.to_string()),
    }
}

fn bracket_lines(c: &StructureConstants) -> Vec<String> {
    let r = c.dimension();
    let mut lines = Vec::new();
    for m in 0..r {
        for n in (m + 1)..r {
            lines.push(format!(
                "[{}, {}] = {}",
                c.names[m],
                c.names[n],
                combination_name(c.entry(m, n), &c.names)
            ));
        }
    }
    lines
}

fn cmd_algebra(cfg: &RunConfig) -> Result<Report> {
    let p = parse_problem(&read_input(cfg)?)?;
    let mut report = Report::new(cfg.command, cfg.seed);
    let c = if p.generators.is_empty() {
        let spec = p.structure.as_ref().ok_or_else(|| {
            Error::Structure("the problem declares neither generators nor a structure block".into())
        })?;
        StructureConstants::from_spec(spec, &[])?
    } else {
        let (_, fields) = load_problem(&p)?;
        let eq = cfg.equality(&p.boxes);
        let c = structure_constants(&fields, &eq)?;
        if let Some(spec) = &p.structure {
            let names: Vec<String> = fields.iter().map(|f| f.name.clone()).collect();
            let declared = StructureConstants::from_spec(spec, &names)?;
            report.check(
                "declared structure block matches the computed constants",
                c.same_brackets(&declared),
                "",
            );
        }
        c
    };

    report.block("structure constants", bracket_lines(&c));
    let violations = verify_algebra_axioms(&c);
    axiom_check(
        &mut report,
        "antisymmetry",
        violations
            .iter()
            .find(|v| matches!(v, AxiomViolation::Antisymmetry { .. })),
    );
    axiom_check(
        &mut report,
        "Jacobi identity",
        violations
            .iter()
            .find(|v| matches!(v, AxiomViolation::Jacobi { .. })),
    );
    axiom_check(
        &mut report,
        "trace property",
        violations
            .iter()
            .find(|v| matches!(v, AxiomViolation::Trace { .. })),
    );

    let series = derived_series(&c);
    let dims: Vec<String> = series.dimensions().iter().map(|d| d.to_string()).collect();
    report.block(
        "derived series",
        vec![format!("dimensions {}", dims.join(" -> "))],
    );
    match solvability_level(&c) {
        Some(level) => {
            report.note(format!("solvable, level {level}"));
            let plan = reduction_chain(&c)?;
            let lines: Vec<String> = plan
                .steps
                .iter()
                .enumerate()
                .map(|(i, step)| {
                    let members: Vec<String> = step
                        .coset
                        .iter()
                        .map(|v| combination_name(v, &c.names))
                        .collect();
                    format!("coset {}: {}", i + 1, members.join(", "))
                })
                .collect();
            report.block("coset chain", lines);
        }
        None => report.note(format!(
            "not solvable: derived series stabilizes at dimension {}",
            series.levels.last().map(|l| l.len()).unwrap_or(0)
        )),
    }

    let radical = killing_radical(&c)?;
    report.note(format!("Killing radical dimension {}", radical.len()));
    let found = search_max_solvable(&c, SOLVABLE_SEARCH_BUDGET, cfg.seed)?;
    report.note(format!(
        "largest solvable subalgebra found: dimension {} (level {}, {} trials)",
        found.basis.len(),
        found.level,
        found.trials_used
    ));
    Ok(report)
}

/// Coordinate directions a coset must move: the dependents, widened by the
/// independent variable when the coset is larger than their count.
fn transitivity_subspace(sys: &OdeSystem, coset_size: usize) -> Vec<String> {
    let mut subspace: Vec<String> = sys.dependents.iter().map(|(n, _)| n.clone()).collect();
    if coset_size > subspace.len() {
        subspace.push(sys.independent.clone());
    }
    subspace
}

fn cmd_plan(cfg: &RunConfig) -> Result<Report> {
    let p = parse_problem(&read_input(cfg)?)?;
    let (sys, fields) = load_problem(&p)?;
    let eq = cfg.equality(&p.boxes);
    let state = SessionState::new(sys, fields, p.boxes.clone(), &eq)?;
    let mut report = Report::new(cfg.command, cfg.seed);
    for n in &state.notes {
        report.note(n.clone());
    }
    report.note(format!("system dimension {}", state.original_dimension));
    report.note(format!(
        "algebra dimension {}",
        state.constants.dimension()
    ));
    if let Some(level) = solvability_level(&state.constants) {
        report.note(format!("solvability level {level}"));
    }

    let plan = reduction_chain(&state.constants)?;
    let lines: Vec<String> = state
        .pending
        .iter()
        .enumerate()
        .map(|(i, names)| format!("coset {}: {}", i + 1, names.join(", ")))
        .collect();
    report.block("plan", lines);
    for (i, step) in plan.steps.iter().enumerate() {
        report.check(
            format!("coset {} brackets fall in the deeper derived algebra", i + 1),
            step.abelian_mod_deeper,
            "",
        );
    }

    for (i, names) in state.pending.iter().enumerate() {
        let members: Vec<VectorField> = names
            .iter()
            .map(|n| {
                state
                    .generators
                    .iter()
                    .find(|g| &g.name == n)
                    .cloned()
                    .ok_or_else(|| Error::Internal(format!("pending generator `{n}` not found")))
            })
            .collect::<Result<_>>()?;
        let subspace = transitivity_subspace(&state.system, members.len());
        let name = format!("transitivity coset {} on {}", i + 1, subspace.join(", "));
        match transitivity_check(&members, &subspace, &eq) {
            Ok(true) => report.check(name, true, ""),
            Ok(false) => report.check(name, false, "generic rank falls below the coset size"),
            Err(Error::Shape(m)) => report.check(name, false, m),
            Err(e) => return Err(e),
        }
    }

    report.note(format!(
        "predicted residual dimension {}",
        state.predicted_residual()
    ));
    Ok(report)
}

fn step_block(report: &mut Report, rendered: &str, step: usize) {
    report.block(
        format!("step {step}"),
        rendered.lines().map(String::from).collect(),
    );
}

fn open_session(cfg: &RunConfig, session: &Path) -> Result<SessionState> {
    if session.exists() {
        if cfg.input.is_some() {
            return Err(Error::Session(format!(
                "session `{}` already exists; the problem argument only starts a new one",
                session.display()
            )));
        }
        return load_session(&fs::read_to_string(session)?);
    }
    let path = cfg.input.as_ref().ok_or_else(|| {
        Error::Session(format!(
            "session `{}` does not exist; give a problem file to start one",
            session.display()
        ))
    })?;
    let p = parse_problem(&fs::read_to_string(path)?)?;
    let (sys, fields) = load_problem(&p)?;
    let eq = cfg.equality(&p.boxes);
    SessionState::new(sys, fields, p.boxes.clone(), &eq)
}

fn cmd_step(cfg: &RunConfig, session: &Path, chart: &Path) -> Result<Report> {
    let state = open_session(cfg, session)?;
    let spec = parse_chart(&fs::read_to_string(chart)?)?;
    let eq = cfg.equality(&state.boxes);
    let mut report = Report::new(cfg.command, cfg.seed);
    let (step_report, next) = run_step(&state, &spec, &eq);
    let rendered = step_report.render();
    step_block(&mut report, &rendered, step_report.step);
    match next {
        Ok(mut s) => {
            s.reports.push(rendered);
            fs::write(session, save_session(&s)?)?;
            report.note(format!(
                "session saved: {} coset(s) remain",
                s.pending.len()
            ));
            Ok(report)
        }
        Err(e @ Error::Internal(_)) => Err(e),
        // The session file stays untouched; the report carries the failure.
        Err(e) => {
            report.check("step completed", false, e.to_string());
            Ok(report)
        }
    }
}

fn cmd_chain(cfg: &RunConfig, charts: &[PathBuf], session: Option<&Path>) -> Result<Report> {
    let p = parse_problem(&read_input(cfg)?)?;
    let (sys, fields) = load_problem(&p)?;
    let eq = cfg.equality(&p.boxes);
    let state = SessionState::new(sys, fields, p.boxes.clone(), &eq)?;
    let specs: Vec<ChartSpec> = if charts.is_empty() {
        if p.charts.is_empty() {
            return Err(Error::Reduction(
                "no chart files given and none embedded in the problem".into(),
            ));
        }
        p.charts.clone()
    } else {
        charts
            .iter()
            .map(|path| parse_chart(&fs::read_to_string(path)?))
            .collect::<Result<_>>()?
    };

    let mut report = Report::new(cfg.command, cfg.seed);
    for n in &state.notes {
        report.note(n.clone());
    }
    let (step_reports, outcome) = run_chain(&state, &specs, &eq);
    for sr in &step_reports {
        step_block(&mut report, &sr.render(), sr.step);
    }
    match outcome {
        Ok(out) => {
            report.block("final", out.final_report.clone());
            if let Some(path) = session {
                fs::write(path, save_session(&out.state)?)?;
            }
            Ok(report)
        }
        Err(e @ Error::Internal(_)) => Err(e),
        Err(e) => {
            report.check("chain completed", false, e.to_string());
            Ok(report)
        }
    }
}

/// Probabilistic comparison of a computed expression against its expected
/// form, recorded as a named check.
fn expect_expr(
    report: &mut Report,
    name: &str,
    got: &Expr,
    want: &str,
    eq: &EqualityConfig,
) -> Result<()> {
    let w = parse_expression(want)?;
    let v = equals_probabilistic(got, &w, eq)?;
    let detail = match v {
        Verdict::Equal => format!("{got}"),
        Verdict::Unequal(_) => format!("expected {w}, got {got}"),
    };
    report.check_verdict(name, detail, &v);
    Ok(())
}

/// Looks up `lhs = rhs` among rendered equations and compares the right-hand
/// side against the expected expression.
fn expect_equation(
    report: &mut Report,
    name: &str,
    lines: &[String],
    lhs: &str,
    want: &str,
    eq: &EqualityConfig,
) -> Result<()> {
    let needle = format!("{lhs} = ");
    match lines.iter().find(|l| l.starts_with(&needle)) {
        None => {
            report.check(name, false, format!("no equation for `{lhs}`"));
            Ok(())
        }
        Some(line) => {
            let rhs = parse_expression(&line[needle.len()..])?;
            expect_expr(report, name, &rhs, want, eq)
        }
    }
}

/// Re-derives the bundled worked example end to end, asserting every
/// intermediate. Stages short-circuit so the first divergence is the first
/// failed check in the report.
fn verify_example(cfg: &RunConfig, problem_text: &str) -> Result<Report> {
    let mut report = Report::new(cfg.command, cfg.seed);
    let p = parse_problem(problem_text)?;
    let (sys, fields) = load_problem(&p)?;
    let eq = cfg.equality(&p.boxes);

    for f in &fields {
        report_symmetry(&mut report, f, &sys, &eq)?;
    }
    if !report.ok {
        return Ok(report);
    }

    let c = structure_constants(&fields, &eq)?;
    let expected = StructureConstants::from_upper_brackets(
        vec!["Z1".into(), "Z2".into(), "Z3".into()],
        &[
            (0, 2, vec![q(1), q(0), q(0)]),
            (1, 2, vec![q(0), q(1), q(0)]),
        ],
    )?;
    report.check(
        "structure constants [Z1,Z2] = 0, [Z2,Z3] = Z2, [Z3,Z1] = -Z1",
        c.same_brackets(&expected),
        bracket_lines(&c).join("; "),
    );
    let dims = derived_series(&c).dimensions();
    report.check(
        "derived series dimensions 3 -> 2 -> 0",
        dims == vec![3, 2, 0],
        format!("got {dims:?}"),
    );
    report.check(
        "solvability level 2",
        solvability_level(&c) == Some(2),
        format!("got {:?}", solvability_level(&c)),
    );
    if !report.ok {
        return Ok(report);
    }

    let state = SessionState::new(sys, fields, p.boxes.clone(), &eq)?;
    let want_chain = vec![
        vec!["Z1".to_string(), "Z2".to_string()],
        vec!["Z3".to_string()],
    ];
    report.check(
        "coset chain {Z1, Z2} then {Z3}",
        state.pending == want_chain,
        format!("got {:?}", state.pending),
    );
    report.check(
        "system dimension 5",
        state.original_dimension == 5,
        format!("got {}", state.original_dimension),
    );
    report.check(
        "predicted residual dimension 2",
        state.predicted_residual() == 2,
        format!("got {}", state.predicted_residual()),
    );
    if !report.ok {
        return Ok(report);
    }

    // Step 1: rectify the Abelian coset {Z1, Z2}.
    let step1 = parse_chart(EXAMPLE_STEP1)?;
    let (r1, next1) = run_step(&state, &step1, &eq);
    let s1 = match next1 {
        Ok(s) => s,
        Err(e) => {
            report.check("step 1 completes", false, e.to_string());
            return Ok(report);
        }
    };
    expect_equation(&mut report, "transformed u_2", &r1.transformed_equations, "u_2", "-w_2", &eq)?;
    expect_equation(
        &mut report,
        "transformed w_3",
        &r1.transformed_equations,
        "w_3",
        "u_1 - 2*w_1 + 3*w_2",
        &eq,
    )?;
    expect_expr(&mut report, "restricted p_1", &s1.system.rhs["p"], "-q_1", &eq)?;
    expect_expr(
        &mut report,
        "restricted q_2",
        &s1.system.rhs["q"],
        "p - 2*q + 3*q_1",
        &eq,
    )?;
    let quads: Vec<String> = s1.quadratures.iter().map(|q| q.to_string()).collect();
    report.check(
        "step 1 quadratures",
        quads == ["u = int(p) dtau + c1", "w = int(q) dtau + c2"],
        quads.join("; "),
    );
    match s1.generators.iter().find(|g| g.name == "Z3") {
        None => report.check("reduced Z3 survives", false, "generator missing"),
        Some(z3) => {
            expect_expr(&mut report, "reduced Z3 d/dtau", &z3.xi, "1", &eq)?;
            expect_expr(&mut report, "reduced Z3 d/dp", &z3.coefficient("p"), "p", &eq)?;
            expect_expr(&mut report, "reduced Z3 d/dq", &z3.coefficient("q"), "q", &eq)?;
        }
    }
    if !report.ok {
        return Ok(report);
    }

    // Branch A: sigma = exp(-tau) p becomes the new independent variable.
    let branch_a = parse_chart(EXAMPLE_BRANCH_A)?;
    let (_, next2) = run_step(&s1, &branch_a, &eq);
    match next2 {
        Err(e) => report.check("branch A completes", false, e.to_string()),
        Ok(s2) => {
            expect_expr(
                &mut report,
                "branch A residual m_2",
                &s2.system.rhs["m"],
                "-(1 + m_1)^2 * (2*m*m_1 + (m_1 - 1)*k) / (m + k)^2",
                &eq,
            )?;
            match s2.algebraic.first() {
                Some(rel) if rel.var == "v" && rel.eliminated => {
                    expect_expr(
                        &mut report,
                        "branch A eliminated v",
                        &rel.rhs,
                        "-(1 + m_1) / (k + m)",
                        &eq,
                    )?;
                }
                other => report.check(
                    "branch A eliminated v",
                    false,
                    format!("got {other:?}"),
                ),
            }
            report.check(
                "branch A third quadrature",
                s2.quadratures.len() == 3 && s2.quadratures[2].target == "h",
                s2.quadratures.iter().map(|q| q.to_string()).collect::<Vec<_>>().join("; "),
            );
            report.check(
                "branch A residual dimension 2",
                s2.system.dimension() == 2,
                format!("got {}", s2.system.dimension()),
            );
            let closing = final_report(&s2)?;
            report.check(
                "branch A dimension accounting",
                closing
                    .iter()
                    .any(|l| l == "residual dimension 2 (predicted 2 from 5 minus 3)"),
                closing.join("; "),
            );
            report.check(
                "branch A solvable-span certificate",
                closing
                    .iter()
                    .any(|l| l.starts_with("certificate: consumed generators")),
                "",
            );
        }
    }
    if !report.ok {
        return Ok(report);
    }

    // Branch B: the sigma/m roles swap and the chain driver runs both steps.
    let branch_b = parse_chart(EXAMPLE_BRANCH_B)?;
    let (_, outcome) = run_chain(&state, &[step1, branch_b], &eq);
    match outcome {
        Err(e) => report.check("branch B completes", false, e.to_string()),
        Ok(out) => {
            expect_expr(
                &mut report,
                "branch B residual m_1",
                &out.state.system.rhs["m"],
                "-1 - v*(m + k)",
                &eq,
            )?;
            expect_expr(
                &mut report,
                "branch B residual v_1",
                &out.state.system.rhs["v"],
                "-v^2 * (1 + v*m)",
                &eq,
            )?;
            let last = out
                .state
                .quadratures
                .last()
                .map(|q| q.to_string())
                .unwrap_or_default();
            report.check(
                "branch B third quadrature",
                last == "h = int(v) dk + c3",
                last.clone(),
            );
            report.check(
                "branch B residual dimension 2",
                out.state.system.dimension() == 2,
                format!("got {}", out.state.system.dimension()),
            );
            report.check(
                "branch B solvable-span certificate",
                out.final_report
                    .iter()
                    .any(|l| l.starts_with("certificate: consumed generators")),
                "",
            );
        }
    }
    Ok(report)
}
