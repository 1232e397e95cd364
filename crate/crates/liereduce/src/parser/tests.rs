use super::*;
use crate::expr::{equals_probabilistic, EqualityConfig};

const SAMPLE_PROBLEM: &str = r#"
# second order in x, third order in y
independent t
dependent x order 2
dependent y order 3
equation diff(x,t,2) = x_1^2 / x
equation diff(y,t,3) = exp(-t)*x_1/x - y
generator Z1 = x*d/dx
generator Z2 = x*d/dx + exp(-t)*d/dy
generator Z3 = d/dt + x*ln(x)*d/dx
box x in [1/2, 2]
structure {
  [Z1,Z2] = 0;
  [Z2,Z3] = Z2;
  [Z3,Z1] = -Z1;
}
"#;

#[test]
fn expression_product_with_function() {
    let e = parse_expression("x*ln(x)").unwrap();
    assert_eq!(
        e,
        Expr::mul(Expr::var("x"), Expr::ln(Expr::var("x")))
    );
}

#[test]
fn power_tower_is_right_associative() {
    let e = parse_expression("2^3^2").unwrap();
    assert_eq!(e, Expr::int(512));
}

#[test]
fn unary_minus_binds_looser_than_power() {
    let e = parse_expression("-x^2").unwrap();
    assert_eq!(e, Expr::neg(Expr::powi(Expr::var("x"), 2)));
}

#[test]
fn dangling_operator_is_located() {
    let err = parse_expression("x +").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 1, column 4"), "got: {msg}");
    assert!(msg.contains("expected expression"), "got: {msg}");
}

#[test]
fn derivative_notations_agree() {
    let a = parse_expression("diff(y,t,2)").unwrap();
    let b = parse_expression("y''").unwrap();
    assert_eq!(a, b);
    assert_eq!(a, Expr::var("y_2"));
    assert_eq!(parse_expression("diff(y,t)").unwrap(), Expr::var("y_1"));
}

#[test]
fn unknown_function_rejected() {
    let err = parse_expression("tan(x)").unwrap_err();
    assert!(err.to_string().contains("unknown function `tan`"));
}

#[test]
fn sample_problem_parses() {
    let p = parse_problem(SAMPLE_PROBLEM).unwrap();
    assert_eq!(p.independent.as_deref(), Some("t"));
    assert_eq!(
        p.dependents,
        vec![("x".to_string(), 2), ("y".to_string(), 3)]
    );
    assert_eq!(p.generators.len(), 3);
    let g3 = p.generator("Z3").unwrap();
    assert_eq!(g3.coefficients[0].0, "t");
    assert!(g3.coefficients[0].1.is_one());
    assert_eq!(g3.coefficients[1].0, "x");
    assert_eq!(
        g3.coefficients[1].1,
        Expr::mul(Expr::var("x"), Expr::ln(Expr::var("x")))
    );
    let s = p.structure.as_ref().unwrap();
    assert_eq!(s.brackets.len(), 3);
    assert!(p.boxes.contains_key("x"));
}

#[test]
fn minimal_problem_without_generators() {
    let p = parse_problem(
        "independent t\ndependent y order 1\nequation y' = y",
    )
    .unwrap();
    assert!(p.generators.is_empty());
    assert_eq!(p.equations["y"], Expr::var("y"));
}

#[test]
fn equation_order_must_match_declaration() {
    let err = parse_problem(
        "independent t\ndependent y order 2\nequation diff(y,t,3) = 0",
    )
    .unwrap_err();
    assert!(err.to_string().contains("order 3"), "got: {err}");
    assert!(err.to_string().contains("order 2"), "got: {err}");
}

#[test]
fn rhs_beyond_jet_space_rejected() {
    let err = parse_problem(
        "independent t\ndependent y order 2\nequation diff(y,t,2) = y_2",
    )
    .unwrap_err();
    assert!(err.to_string().contains("jet space"), "got: {err}");
}

#[test]
fn missing_equation_rejected() {
    let err = parse_problem("independent t\ndependent y order 1").unwrap_err();
    assert!(err.to_string().contains("no equation"));
}

#[test]
fn chart_requires_inverse() {
    let err = parse_chart("chart c { s = t; u = x; }").unwrap_err();
    assert!(err.to_string().contains("inverse"), "got: {err}");
}

#[test]
fn chart_duplicate_name_rejected() {
    let err = parse_chart(
        "chart c { s = t; s = x; inverse { t = s; } }",
    )
    .unwrap_err();
    assert!(err.to_string().contains("two expressions"), "got: {err}");
}

#[test]
fn chart_block_full_form() {
    let text = r#"
chart step1 {
  s = t;
  u = ln(x) - exp(t)*y;
  w = exp(t)*y;
  targets Z1 -> u, Z2 -> w;
  rename s -> tau, u' -> p, w' -> q;
  inverse {
    t = s;
    x = exp(u + w);
    y = exp(-s)*w;
  }
}
"#;
    let c = parse_chart(text).unwrap();
    assert_eq!(c.name, "step1");
    assert_eq!(c.new_independent(), "s");
    let deps: Vec<&str> = c.new_dependents().map(|(n, _)| n.as_str()).collect();
    assert_eq!(deps, vec!["u", "w"]);
    assert_eq!(c.targets, vec![
        ("Z1".to_string(), "u".to_string()),
        ("Z2".to_string(), "w".to_string()),
    ]);
    assert_eq!(c.renames.len(), 3);
    assert_eq!(
        c.renames[1],
        (RenameItem::FirstDerivative("u".to_string()), "p".to_string())
    );
    assert_eq!(c.inverse_expr("t").unwrap(), &Expr::var("s"));
}

#[test]
fn generator_without_dd_factor_rejected() {
    let err = parse_problem(
        "independent t\ndependent y order 1\nequation y' = 0\ngenerator Z = x*y",
    )
    .unwrap_err();
    assert!(err.to_string().contains("d/d factor"), "got: {err}");
}

#[test]
fn generator_on_undeclared_coordinate_rejected() {
    let err = parse_problem(
        "independent t\ndependent y order 1\nequation y' = 0\ngenerator Z = d/dw",
    )
    .unwrap_err();
    assert!(err.to_string().contains("base coordinate"), "got: {err}");
}

#[test]
fn generator_coefficient_must_be_point_function() {
    let err = parse_problem(
        "independent t\ndependent y order 1\nequation y' = 0\ngenerator Z = y_1*d/dy",
    )
    .unwrap_err();
    assert!(err.to_string().contains("base coordinates"), "got: {err}");
}

#[test]
fn jet_name_roundtrip() {
    assert_eq!(jet_name("x", 0), "x");
    assert_eq!(jet_name("x", 2), "x_2");
    let deps = vec![("x".to_string(), 2), ("long_name".to_string(), 1)];
    assert_eq!(split_jet_name("x_2", &deps), Some(("x", 2)));
    assert_eq!(split_jet_name("long_name_1", &deps), Some(("long_name", 1)));
    assert_eq!(split_jet_name("x_0", &deps), None);
    assert_eq!(split_jet_name("z_1", &deps), None);
    assert_eq!(split_jet_name("x", &deps), None);
}

#[test]
fn structure_block_decomposes_linearly() {
    let p = parse_problem(
        "structure { basis X1, X2, X3; [X1,X2] = -X3; [X1,X3] = -X2; [X2,X3] = X1; }",
    )
    .unwrap();
    let s = p.structure.unwrap();
    let names: Vec<String> = s.basis.clone().unwrap();
    let coeffs = decompose_linear(&s.brackets[0].2, &names).unwrap();
    assert_eq!(coeffs[0], Rational::from_integer(0.into()));
    assert_eq!(coeffs[2], Rational::from_integer((-1).into()));
    // Non-linear right-hand side is rejected.
    let bad = parse_expression("X1*X2").unwrap();
    assert!(decompose_linear(&bad, &names).is_err());
}

#[test]
fn print_parse_roundtrip() {
    let sources = [
        "x*ln(x)",
        "exp(-t)*x_1/x - y",
        "(1 + m_1)^2*(2*m*m_1 + (m_1 - 1)*k)/(m + k)^2",
        "x^(1/2) + 2^x",
        "1/(x*y) - sin(t)*cos(t)",
        "-(x + 1)/(y - 2)",
        "ln(x) - exp(t)*y",
    ];
    let cfg = EqualityConfig::default();
    for src in sources {
        let e = parse_expression(src).unwrap();
        let printed = e.to_string();
        let back = parse_expression(&printed)
            .unwrap_or_else(|err| panic!("printed form `{printed}` failed to parse: {err}"));
        assert_eq!(back, e, "round trip changed `{src}` -> `{printed}`");
        assert!(equals_probabilistic(&back, &e, &cfg).unwrap().is_equal());
    }
}

#[test]
fn reserved_name_d_rejected() {
    let err = parse_problem(
        "independent d\ndependent y order 1\nequation y' = 0",
    )
    .unwrap_err();
    assert!(err.to_string().contains("reserved"), "got: {err}");
}

#[test]
fn jet_collision_rejected() {
    let err = parse_problem(
        "independent t\ndependent x order 2\ndependent x_1 order 1\nequation x'' = 0\nequation diff(x_1,t,1) = 0",
    )
    .unwrap_err();
    assert!(err.to_string().contains("collides"), "got: {err}");
}
