//! Tests for charts, system transport, restriction, step/chain drivers,
//! and session round-trips.

use super::*;
use crate::expr::RationalPoint;
use crate::jet::load_problem;
use crate::linalg::qr;
use crate::parser::{parse_chart, parse_expression, parse_problem};
use crate::testutil::{mixed_config, mixed_problem};

const CHART_STEP1: &str = r#"
chart step1 {
  s = t;
  u = ln(x) - exp(t)*y;
  w = exp(t)*y;
  targets Z1 -> u, Z2 -> w;
  rename s -> tau, u' -> p, w' -> q;
  inverse { t = s; x = exp(u + w); y = exp(-s)*w; }
}
"#;

const CHART_BRANCH_A: &str = r#"
chart branchA {
  sigma = exp(-tau) * p;
  m = exp(-tau) * q;
  h = tau;
  targets Z3 -> h;
  rename sigma -> k, h' -> v;
  inverse { tau = h; p = exp(h) * sigma; q = exp(h) * m; }
}
"#;

const CHART_BRANCH_B: &str = r#"
chart branchB {
  sigma = exp(-tau) * q;
  m = exp(-tau) * p;
  h = tau;
  targets Z3 -> h;
  rename sigma -> k, h' -> v;
  inverse { tau = h; p = exp(h) * m; q = exp(h) * sigma; }
}
"#;

fn expr(s: &str) -> Expr {
    parse_expression(s).unwrap()
}

fn assert_same(got: &Expr, want: &str, cfg: &EqualityConfig) {
    let w = expr(want);
    assert!(
        equals_probabilistic(got, &w, cfg).unwrap().is_equal(),
        "expected `{w}`, got `{got}`"
    );
}

fn state0() -> SessionState {
    let (sys, gens) = mixed_problem();
    let mut boxes = BTreeMap::new();
    boxes.insert("x".to_string(), (qr(1, 2), qr(2, 1)));
    SessionState::new(sys, gens, boxes, &mixed_config()).unwrap()
}

fn state1() -> SessionState {
    let spec = parse_chart(CHART_STEP1).unwrap();
    let (report, next) = run_step(&state0(), &spec, &mixed_config());
    let mut s = next.unwrap_or_else(|e| panic!("step 1 failed: {e}\n{}", report.render()));
    s.reports.push(report.render());
    s
}

fn equation_rhs(line: &str, lhs: &str) -> Expr {
    let rest = line
        .strip_prefix(&format!("{lhs} = "))
        .unwrap_or_else(|| panic!("expected `{lhs} = ...`, got `{line}`"));
    expr(rest)
}

#[test]
fn opening_plans_the_coset_chain() {
    let s = state0();
    assert_eq!(s.pending, vec![vec!["Z1", "Z2"], vec!["Z3"]]);
    assert!(s.consumed.is_empty());
    assert_eq!(s.original_dimension, 5);
    assert_eq!(s.next_constant, 1);
    assert_eq!(s.predicted_residual(), 2);
}

#[test]
fn opening_rejects_a_non_symmetry() {
    let (sys, mut gens) = mixed_problem();
    gens[0].coeffs.insert("y".into(), Expr::var("x"));
    let err = SessionState::new(sys, gens, BTreeMap::new(), &mixed_config()).unwrap_err();
    assert!(err.to_string().contains("not a symmetry"), "{err}");
}

#[test]
fn opening_realigns_mixed_cosets() {
    let (sys, gens) = mixed_problem();
    // V2 = Z2 + Z3 mixes the derived algebra with its complement, so the
    // planned cosets are not unit vectors in this basis.
    let v2 = VectorField::new(
        "V2",
        "t",
        Expr::add(gens[1].xi.clone(), gens[2].xi.clone()),
        {
            let mut c = gens[1].coeffs.clone();
            for (var, e) in &gens[2].coeffs {
                let cur = c.entry(var.clone()).or_insert_with(Expr::zero);
                *cur = Expr::add(cur.clone(), e.clone());
            }
            c
        },
    );
    let mixed = vec![gens[0].clone(), v2, gens[2].clone()];
    let s = SessionState::new(sys, mixed, BTreeMap::new(), &mixed_config()).unwrap();
    let names: Vec<&str> = s.generators.iter().map(|g| g.name.as_str()).collect();
    assert_eq!(names, vec!["Y1", "Y2", "Y3"]);
    assert_eq!(s.pending, vec![vec!["Y1", "Y2"], vec!["Y3"]]);
    assert!(s.notes.iter().any(|n| n.contains("basis changed")));
}

#[test]
fn step1_transforms_and_restricts() {
    let cfg = mixed_config();
    let spec = parse_chart(CHART_STEP1).unwrap();
    let (report, next) = run_step(&state0(), &spec, &cfg);
    let s = next.expect("step 1 should succeed");

    assert!(report.ok);
    assert_eq!(report.coset, vec!["Z1", "Z2"]);
    assert_eq!(report.survivors, vec!["Z3"]);
    assert!(report.autonomy.is_empty());
    assert_eq!(report.dimension_before, 5);
    assert_eq!(report.dimension_after, 3);

    assert_eq!(report.transformed_equations.len(), 2);
    assert_same(
        &equation_rhs(&report.transformed_equations[0], "u_2"),
        "-w_2",
        &cfg,
    );
    assert_same(
        &equation_rhs(&report.transformed_equations[1], "w_3"),
        "u_1 - 2*w_1 + 3*w_2",
        &cfg,
    );

    assert_eq!(s.system.independent, "tau");
    assert_eq!(
        s.system.dependents,
        vec![("p".to_string(), 1), ("q".to_string(), 2)]
    );
    assert_same(&s.system.rhs["p"], "-q_1", &cfg);
    assert_same(&s.system.rhs["q"], "p - 2*q + 3*q_1", &cfg);

    let quads: Vec<String> = s.quadratures.iter().map(|q| q.to_string()).collect();
    assert_eq!(quads, vec!["u = int(p) dtau + c1", "w = int(q) dtau + c2"]);
    assert_eq!(s.next_constant, 3);
    assert!(s.algebraic.is_empty());

    assert_eq!(s.generators.len(), 1);
    let z3 = &s.generators[0];
    assert_eq!(z3.name, "Z3");
    assert_same(&z3.xi, "1", &cfg);
    assert_same(&z3.coefficient("p"), "p", &cfg);
    assert_same(&z3.coefficient("q"), "q", &cfg);

    assert_eq!(s.consumed, vec![vec!["Z1", "Z2"]]);
    assert_eq!(s.pending, vec![vec!["Z3"]]);
    assert_eq!(s.predicted_residual(), 2);
}

#[test]
fn step_reports_render_deterministically() {
    let spec = parse_chart(CHART_STEP1).unwrap();
    let (r1, _) = run_step(&state0(), &spec, &mixed_config());
    let (r2, _) = run_step(&state0(), &spec, &mixed_config());
    assert_eq!(r1.render(), r2.render());
    assert!(r1.render().contains("dimension 5 -> 3"));
    assert!(r1.render().contains("result ok"));
    assert!(r1.render().contains("quadrature u = int(p) dtau + c1"));
}

#[test]
fn branch_a_eliminates_the_algebraic_relation() {
    let cfg = mixed_config();
    let spec = parse_chart(CHART_BRANCH_A).unwrap();
    let (report, next) = run_step(&state1(), &spec, &cfg);
    let s = next.unwrap_or_else(|e| panic!("branch A failed: {e}\n{}", report.render()));

    assert!(report.ok);
    assert_eq!(report.dimension_before, 3);
    assert_eq!(report.dimension_after, 2);

    // Transformed system before restriction, still in sigma.
    assert_eq!(report.transformed_equations.len(), 2);
    assert_same(
        &equation_rhs(&report.transformed_equations[1], "h_1"),
        "-(1 + m_1) / (sigma + m)",
        &cfg,
    );
    assert_same(
        &equation_rhs(&report.transformed_equations[0], "m_2"),
        "-(1 + m_1)^2 * (2*m*m_1 + (m_1 - 1)*sigma) / (m + sigma)^2",
        &cfg,
    );

    assert_eq!(s.system.independent, "k");
    assert_eq!(s.system.dependents, vec![("m".to_string(), 2)]);
    assert_same(
        &s.system.rhs["m"],
        "-(1 + m_1)^2 * (2*m*m_1 + (m_1 - 1)*k) / (m + k)^2",
        &cfg,
    );

    // Exact value pin for the final equation.
    let mut point = RationalPoint::new();
    point.set("k", qr(1, 1));
    point.set("m", qr(2, 1));
    point.set("m_1", qr(3, 1));
    let value = evaluate_rational(&s.system.rhs["m"], &point, &Washout::new(0)).unwrap();
    assert_eq!(value, qr(-224, 9));

    assert_eq!(s.algebraic.len(), 1);
    let rel = &s.algebraic[0];
    assert_eq!(rel.var, "v");
    assert!(rel.eliminated);
    assert_same(&rel.rhs, "-(1 + m_1) / (k + m)", &cfg);

    assert_eq!(s.quadratures.len(), 3);
    let q = &s.quadratures[2];
    assert_eq!(q.target, "h");
    assert_eq!(q.independent, "k");
    assert_eq!(q.constant, "c3");
    assert_same(&q.integrand, "-(1 + m_1) / (k + m)", &cfg);

    assert!(s.pending.is_empty());
    assert!(s.generators.is_empty());
}

#[test]
fn branch_b_keeps_the_first_order_pair() {
    let cfg = mixed_config();
    let spec = parse_chart(CHART_BRANCH_B).unwrap();
    let (report, next) = run_step(&state1(), &spec, &cfg);
    let s = next.unwrap_or_else(|e| panic!("branch B failed: {e}\n{}", report.render()));

    assert!(report.ok);
    assert_eq!(
        s.system.dependents,
        vec![("m".to_string(), 1), ("v".to_string(), 1)]
    );
    assert_same(&s.system.rhs["m"], "-1 - v*(m + k)", &cfg);
    assert_same(&s.system.rhs["v"], "-v^2 * (1 + v*m)", &cfg);
    assert!(s.algebraic.is_empty());
    assert_eq!(
        s.quadratures.last().unwrap().to_string(),
        "h = int(v) dk + c3"
    );
    assert_eq!(s.system.dimension(), 2);
}

#[test]
fn chain_runs_to_the_residual_system() {
    let cfg = mixed_config();
    let charts = vec![
        parse_chart(CHART_STEP1).unwrap(),
        parse_chart(CHART_BRANCH_A).unwrap(),
    ];
    let (reports, outcome) = run_chain(&state0(), &charts, &cfg);
    let outcome = outcome.expect("chain should complete");
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.ok));
    assert_eq!(outcome.state.system.dimension(), 2);
    assert_eq!(outcome.state.quadratures.len(), 3);
    assert_eq!(outcome.state.reports.len(), 2);
    let joined = outcome.final_report.join("\n");
    assert!(
        joined.contains("residual dimension 2 (predicted 2 from 5 minus 3)"),
        "{joined}"
    );
    assert!(joined.contains("Z1, Z2, Z3"), "{joined}");
    assert!(joined.contains("solvable subalgebra"), "{joined}");
}

#[test]
fn chain_rejects_a_chart_count_mismatch() {
    let charts = vec![parse_chart(CHART_STEP1).unwrap()];
    let (reports, outcome) = run_chain(&state0(), &charts, &mixed_config());
    assert!(reports.is_empty());
    let err = outcome.unwrap_err();
    assert!(err.to_string().contains("one per remaining coset"), "{err}");
}

#[test]
fn step_rejects_a_chart_for_the_wrong_coset() {
    let spec = parse_chart(CHART_BRANCH_A).unwrap();
    let (report, next) = run_step(&state0(), &spec, &mixed_config());
    let err = next.unwrap_err();
    assert!(!report.ok);
    assert!(err.to_string().contains("next coset"), "{err}");
}

#[test]
fn step_rejects_swapped_targets() {
    let swapped = CHART_STEP1.replace(
        "targets Z1 -> u, Z2 -> w;",
        "targets Z1 -> w, Z2 -> u;",
    );
    let spec = parse_chart(&swapped).unwrap();
    let (report, next) = run_step(&state0(), &spec, &mixed_config());
    let err = next.unwrap_err();
    assert!(report.checks.iter().any(|c| !c.passed));
    assert!(err.to_string().contains("rectify"), "{err}");
}

#[test]
fn step_runs_out_of_cosets() {
    let cfg = mixed_config();
    let spec_a = parse_chart(CHART_BRANCH_A).unwrap();
    let (_, done) = run_step(&state1(), &spec_a, &cfg);
    let done = done.unwrap();
    let (_, err) = run_step(&done, &spec_a, &cfg);
    assert!(err.unwrap_err().to_string().contains("no remaining cosets"));
}

#[test]
fn autonomy_target_keeps_the_dimension() {
    let cfg = EqualityConfig::default();
    let p = parse_problem(
        "independent t\n\
         dependent x order 2\n\
         equation diff(x, t, 2) = exp(-x)\n\
         generator Z1 = d/dt\n",
    )
    .unwrap();
    let (sys, gens) = load_problem(&p).unwrap();
    let s0 = SessionState::new(sys, gens, BTreeMap::new(), &cfg).unwrap();
    assert_eq!(s0.pending, vec![vec!["Z1"]]);

    let spec = parse_chart(
        "chart shift {\n  s = t;\n  z = x;\n  targets Z1 -> s;\n  inverse { t = s; x = z; }\n}\n",
    )
    .unwrap();
    let (report, next) = run_step(&s0, &spec, &cfg);
    let s = next.unwrap_or_else(|e| panic!("autonomy step failed: {e}\n{}", report.render()));
    assert!(report.ok);
    assert_eq!(report.autonomy, vec!["Z1"]);
    assert_eq!(report.dimension_before, 2);
    assert_eq!(report.dimension_after, 2);
    assert!(s.quadratures.is_empty());
    assert_same(&s.system.rhs["z"], "exp(-z)", &cfg);
    assert_eq!(s.autonomy, vec!["Z1"]);

    let closing = final_report(&s).unwrap().join("\n");
    assert!(
        closing.contains("residual dimension 2 (predicted 2 from 2 minus 0)"),
        "{closing}"
    );
}

#[test]
fn identity_chart_fixes_the_system() {
    let cfg = mixed_config();
    let (sys, _) = mixed_problem();
    let spec = parse_chart(
        "chart rename {\n  s = t;\n  a = x;\n  b = y;\n  targets Z1 -> s;\n  \
         inverse { t = s; x = a; y = b; }\n}\n",
    )
    .unwrap();
    let chart = Chart::new(&spec, &sys).unwrap();
    let out = transform_system(&sys, &chart, &cfg).unwrap();
    assert_eq!(
        out.dependents,
        vec![("a".to_string(), 2), ("b".to_string(), 3)]
    );
    assert_same(&out.rhs["a"], "a_1^2 / a", &cfg);
    assert_same(&out.rhs["b"], "exp(-s) * a_1 / a - b", &cfg);
}

#[test]
fn degenerate_chart_is_detected() {
    let cfg = mixed_config();
    let (sys, _) = mixed_problem();
    let spec = parse_chart(
        "chart flat {\n  s = 1;\n  a = x;\n  b = y;\n  targets Z1 -> s;\n  \
         inverse { t = s; x = a; y = b; }\n}\n",
    )
    .unwrap();
    let chart = Chart::new(&spec, &sys).unwrap();
    let err = transform_system(&sys, &chart, &cfg).unwrap_err();
    assert!(err.to_string().contains("degenerate"), "{err}");
}

#[test]
fn chart_names_must_be_fresh_and_unambiguous() {
    let (sys, _) = mixed_problem();
    let reused = parse_chart(
        "chart c {\n  s = t;\n  x = x;\n  b = y;\n  targets Z1 -> s;\n  \
         inverse { t = s; x = x; y = b; }\n}\n",
    )
    .unwrap();
    let err = Chart::new(&reused, &sys).unwrap_err();
    assert!(err.to_string().contains("fresh"), "{err}");

    let jetlike = parse_chart(
        "chart c {\n  s = t;\n  z = x;\n  z_1 = y;\n  targets Z1 -> s;\n  \
         inverse { t = s; x = z; y = z_1; }\n}\n",
    )
    .unwrap();
    let err = Chart::new(&jetlike, &sys).unwrap_err();
    assert!(err.to_string().contains("collides with a jet"), "{err}");
}

#[test]
fn chart_requires_a_derivative_rename_per_target() {
    let (sys, _) = mixed_problem();
    let missing = CHART_STEP1.replace("rename s -> tau, u' -> p, w' -> q;", "rename w' -> q;");
    let spec = parse_chart(&missing).unwrap();
    let err = Chart::new(&spec, &sys).unwrap_err();
    assert!(err.to_string().contains("no name for `u'`"), "{err}");
}

#[test]
fn verify_chart_rejects_a_broken_inverse() {
    let cfg = mixed_config();
    let (sys, gens) = mixed_problem();
    let broken = CHART_STEP1.replace("y = exp(-s)*w;", "y = exp(-s)*u;");
    let spec = parse_chart(&broken).unwrap();
    let chart = Chart::new(&spec, &sys).unwrap();
    let err = verify_chart(&chart, &gens[..2], &cfg).unwrap_err();
    assert!(err.to_string().contains("round-trip"), "{err}");
}

#[test]
fn session_text_round_trips() {
    let s = state1();
    let text = save_session(&s).unwrap();
    let loaded = load_session(&text).unwrap();

    assert_eq!(loaded.step, s.step);
    assert_eq!(loaded.original_dimension, s.original_dimension);
    assert_eq!(loaded.next_constant, s.next_constant);
    assert_eq!(loaded.consumed, s.consumed);
    assert_eq!(loaded.pending, s.pending);
    assert_eq!(loaded.autonomy, s.autonomy);
    assert_eq!(loaded.notes, s.notes);
    assert_eq!(loaded.reports, s.reports);
    assert_eq!(loaded.original_names, s.original_names);
    assert!(loaded.original_constants.same_brackets(&s.original_constants));
    assert!(loaded.constants.same_brackets(&s.constants));
    assert_eq!(loaded.system.independent, s.system.independent);
    assert_eq!(loaded.system.dependents, s.system.dependents);
    for (dep, _) in &s.system.dependents {
        assert_eq!(
            loaded.system.rhs[dep].to_string(),
            s.system.rhs[dep].to_string()
        );
    }
    assert_eq!(loaded.generators.len(), s.generators.len());
    for (a, b) in loaded.generators.iter().zip(&s.generators) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.xi.to_string(), b.xi.to_string());
        assert_eq!(a.coeffs.len(), b.coeffs.len());
    }
    let quads: Vec<String> = loaded.quadratures.iter().map(|q| q.to_string()).collect();
    let want: Vec<String> = s.quadratures.iter().map(|q| q.to_string()).collect();
    assert_eq!(quads, want);
    assert_eq!(loaded.boxes, s.boxes);
}

#[test]
fn loaded_sessions_resume_identically() {
    let cfg = mixed_config();
    let s = state1();
    let loaded = load_session(&save_session(&s).unwrap()).unwrap();
    let spec = parse_chart(CHART_BRANCH_A).unwrap();
    let (direct, _) = run_step(&s, &spec, &cfg);
    let (resumed, next) = run_step(&loaded, &spec, &cfg);
    assert!(next.is_ok());
    assert_eq!(direct.render(), resumed.render());
}

#[test]
fn session_loader_rejects_malformed_input() {
    assert!(load_session("nonsense").is_err());
    let s = state1();
    let text = save_session(&s).unwrap();
    let broken = format!("{text}\nmystery line\n");
    let err = load_session(&broken).unwrap_err();
    assert!(err.to_string().contains("unknown session line"), "{err}");
    let wrong_step = text.replace("step 1", "step 2");
    let err = load_session(&wrong_step).unwrap_err();
    assert!(err.to_string().contains("consumed"), "{err}");
}

#[test]
fn fresh_session_round_trips_and_completes() {
    let cfg = mixed_config();
    let s = state0();
    let loaded = load_session(&save_session(&s).unwrap()).unwrap();
    let charts = vec![
        parse_chart(CHART_STEP1).unwrap(),
        parse_chart(CHART_BRANCH_B).unwrap(),
    ];
    let (_, outcome) = run_chain(&loaded, &charts, &cfg);
    let outcome = outcome.expect("chain from loaded session should complete");
    assert_eq!(outcome.state.system.dimension(), 2);
}
