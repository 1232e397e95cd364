//! Shared fixtures and randomized-case generators for the integration
//! suites. Every generator is seeded, so failures replay exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use liereduce::algebra::{
    change_basis, derived_series, reduction_chain, solvability_level, verify_algebra_axioms,
    StructureConstants,
};
use liereduce::expr::{EqualityConfig, Expr, Rational};
use liereduce::jet::{commutator, load_problem, prolong, OdeSystem, VectorField};
use liereduce::linalg::{q, QMat, QVec};
use liereduce::parser::{parse_chart, parse_problem, ChartSpec};
use liereduce::reduce::{run_chain, SessionState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    fs::read_to_string(fixture(name)).unwrap()
}

pub fn chart(name: &str) -> ChartSpec {
    parse_chart(&read_fixture(name)).unwrap()
}

pub type Boxes = BTreeMap<String, (Rational, Rational)>;

/// The bundled worked example: system, generators, and sampling boxes.
pub fn worked_example() -> (OdeSystem, Vec<VectorField>, Boxes) {
    let p = parse_problem(&read_fixture("worked_example.prob")).unwrap();
    let (sys, fields) = load_problem(&p).unwrap();
    (sys, fields, p.boxes)
}

/// Pinned tolerances: 8 sample points, relative tolerance 1e-9.
pub fn config(seed: u64, boxes: &Boxes) -> EqualityConfig {
    EqualityConfig {
        seed,
        boxes: boxes.clone(),
        ..EqualityConfig::default()
    }
}

pub fn opened_worked_example(seed: u64) -> (SessionState, EqualityConfig) {
    let (sys, fields, boxes) = worked_example();
    let cfg = config(seed, &boxes);
    let state = SessionState::new(sys, fields, boxes, &cfg).unwrap();
    (state, cfg)
}

/// Autonomous single-equation problem whose only generator rectifies the
/// independent direction, so reduction drops no dimension.
pub const AUTONOMY_PROBLEM: &str = "independent t\n\
    dependent x order 2\n\
    equation diff(x, t, 2) = exp(-x)\n\
    generator Z1 = d/dt\n";

pub const AUTONOMY_CHART: &str =
    "chart shift {\n  s = t;\n  z = x;\n  targets Z1 -> s;\n  inverse { t = s; x = z; }\n}\n";

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random polynomial of total degree at most 2 with small integer
/// coefficients over the given variables.
pub fn random_polynomial(rng: &mut ChaCha20Rng, vars: &[&str]) -> Expr {
    let terms = rng.gen_range(1..=3);
    let mut out = Vec::new();
    for _ in 0..terms {
        let mut factors = vec![Expr::int(rng.gen_range(-3..=3))];
        for _ in 0..rng.gen_range(0..=2usize) {
            factors.push(Expr::var(vars[rng.gen_range(0..vars.len())]));
        }
        out.push(Expr::product(factors));
    }
    Expr::sum(out)
}

/// Random field over base coordinates (t, x, y) with polynomial
/// coefficients on every direction.
pub fn random_point_field(rng: &mut ChaCha20Rng, name: &str) -> VectorField {
    let vars = ["t", "x", "y"];
    let mut coeffs = BTreeMap::new();
    coeffs.insert("x".to_string(), random_polynomial(rng, &vars));
    coeffs.insert("y".to_string(), random_polynomial(rng, &vars));
    VectorField::new(name, "t", random_polynomial(rng, &vars), coeffs)
}

fn e(parts: &[i64]) -> QVec {
    parts.iter().map(|&n| q(n)).collect()
}

fn names(r: usize) -> Vec<String> {
    (1..=r).map(|i| format!("X{i}")).collect()
}

fn abelian(r: usize) -> StructureConstants {
    StructureConstants::from_upper_brackets(names(r), &[]).unwrap()
}

/// [X1, X2] = X2, the smallest non-Abelian solvable algebra.
fn borel2() -> StructureConstants {
    StructureConstants::from_upper_brackets(names(2), &[(0, 1, e(&[0, 1]))]).unwrap()
}

/// [X1, X2] = X3, nilpotent.
fn heisenberg() -> StructureConstants {
    StructureConstants::from_upper_brackets(names(3), &[(0, 1, e(&[0, 0, 1]))]).unwrap()
}

/// [X1, X3] = X1, [X2, X3] = X2, the worked example's algebra type.
fn solvable3() -> StructureConstants {
    StructureConstants::from_upper_brackets(
        names(3),
        &[(0, 2, e(&[1, 0, 0])), (1, 2, e(&[0, 1, 0]))],
    )
    .unwrap()
}

fn direct_sum(a: &StructureConstants, b: &StructureConstants) -> StructureConstants {
    let (ra, rb) = (a.dimension(), b.dimension());
    let r = ra + rb;
    let mut entries = Vec::new();
    for m in 0..ra {
        for n in (m + 1)..ra {
            let mut v = a.entry(m, n).to_vec();
            v.resize(r, q(0));
            entries.push((m, n, v));
        }
    }
    for m in 0..rb {
        for n in (m + 1)..rb {
            let mut v = vec![q(0); ra];
            v.extend_from_slice(b.entry(m, n));
            entries.push((ra + m, ra + n, v));
        }
    }
    StructureConstants::from_upper_brackets(names(r), &entries).unwrap()
}

/// Random solvable structure constants of dimension 1..=5: a direct sum of
/// known solvable blocks pushed through a random invertible basis change.
pub fn random_solvable(rng: &mut ChaCha20Rng) -> StructureConstants {
    let base = match rng.gen_range(0..8) {
        0 => abelian(rng.gen_range(1..=5)),
        1 => borel2(),
        2 => heisenberg(),
        3 => solvable3(),
        4 => direct_sum(&borel2(), &abelian(rng.gen_range(1..=3))),
        5 => direct_sum(&heisenberg(), &abelian(rng.gen_range(1..=2))),
        6 => direct_sum(&solvable3(), &abelian(rng.gen_range(1..=2))),
        _ => direct_sum(&borel2(), &borel2()),
    };
    let r = base.dimension();
    loop {
        let rows: Vec<QVec> = (0..r)
            .map(|_| (0..r).map(|_| q(rng.gen_range(-2..=2))).collect())
            .collect();
        let p = QMat::from_rows(rows);
        if p.rank() == r {
            return change_basis(&base, &p, None).unwrap();
        }
    }
}

const FIELD_COORDS: [&str; 3] = ["t", "x", "y"];

/// Antisymmetry and the Jacobi identity, asserted exactly on the canonical
/// forms of the bracket coefficients.
pub fn suite_commutator_axioms(cases: usize, seed: u64) {
    let mut r = rng(seed);
    for case in 0..cases {
        let x = random_point_field(&mut r, "X");
        let y = random_point_field(&mut r, "Y");
        let w = random_point_field(&mut r, "W");
        let xy = commutator(&x, &y).unwrap();
        let yx = commutator(&y, &x).unwrap();
        for c in FIELD_COORDS {
            assert!(
                Expr::add(xy.coefficient(c), yx.coefficient(c)).is_zero(),
                "antisymmetry broke on `{c}` in case {case}"
            );
        }
        let a = commutator(&xy, &w).unwrap();
        let b = commutator(&commutator(&y, &w).unwrap(), &x).unwrap();
        let d = commutator(&commutator(&w, &x).unwrap(), &y).unwrap();
        for c in FIELD_COORDS {
            let total = Expr::sum(vec![a.coefficient(c), b.coefficient(c), d.coefficient(c)]);
            assert!(total.is_zero(), "Jacobi broke on `{c}` in case {case}");
        }
    }
}

fn jet_pair_system() -> OdeSystem {
    let p = parse_problem(
        "independent t\n\
         dependent x order 2\n\
         dependent y order 2\n\
         equation diff(x, t, 2) = x_1\n\
         equation diff(y, t, 2) = y_1 + x\n",
    )
    .unwrap();
    OdeSystem::from_problem(&p).unwrap()
}

/// Free prolongation is a bracket homomorphism: pr[X, Y] = [pr X, pr Y] on
/// every jet coordinate up to the prolongation order.
pub fn suite_prolongation_brackets(cases: usize, seed: u64) {
    let sys = jet_pair_system();
    let coords = ["t", "x", "y", "x_1", "y_1", "x_2", "y_2"];
    let mut r = rng(seed);
    for case in 0..cases {
        let x = random_point_field(&mut r, "X");
        let y = random_point_field(&mut r, "Y");
        let lhs = prolong(&commutator(&x, &y).unwrap(), &sys, 2).unwrap();
        let rhs = commutator(
            &prolong(&x, &sys, 2).unwrap(),
            &prolong(&y, &sys, 2).unwrap(),
        )
        .unwrap();
        for c in coords {
            assert_eq!(
                lhs.coefficient(c),
                rhs.coefficient(c),
                "prolonged bracket diverged on `{c}` in case {case}"
            );
        }
    }
}

/// Every coset of a solvable algebra brackets into the deeper derived
/// algebra, so its members commute on the reduced system.
pub fn suite_coset_containment(cases: usize, seed: u64) {
    let mut r = rng(seed);
    for case in 0..cases {
        let c = random_solvable(&mut r);
        assert!(
            verify_algebra_axioms(&c).is_empty(),
            "generated tensor violates the axioms in case {case}"
        );
        let plan = reduction_chain(&c).unwrap();
        for (i, step) in plan.steps.iter().enumerate() {
            assert!(
                step.abelian_mod_deeper,
                "coset {i} escaped the deeper derived algebra in case {case}"
            );
        }
    }
}

/// Derived series of a solvable algebra: dimensions strictly decrease down
/// to zero.
pub fn suite_derived_series_decrease(cases: usize, seed: u64) {
    let mut r = rng(seed);
    for case in 0..cases {
        let c = random_solvable(&mut r);
        let series = derived_series(&c);
        assert!(series.terminated, "series failed to terminate in case {case}");
        let dims = series.dimensions();
        assert_eq!(*dims.last().unwrap(), 0);
        for w in dims.windows(2) {
            assert!(w[0] > w[1], "series stalled at {dims:?} in case {case}");
        }
    }
}

/// Replays the certificate of a finished chain: consumed generators close
/// under the original brackets and span a solvable subalgebra.
pub fn assert_certified_span(state: &SessionState, final_lines: &[String]) {
    assert!(
        final_lines
            .iter()
            .any(|l| l.starts_with("certificate: consumed generators")),
        "final report lacks the certificate: {final_lines:?}"
    );
    let c = &state.original_constants;
    let consumed: Vec<String> = state.consumed.iter().flatten().cloned().collect();
    let idx: Vec<usize> = consumed
        .iter()
        .map(|n| c.names.iter().position(|m| m == n).unwrap())
        .collect();
    let mut entries = Vec::new();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate().skip(a + 1) {
            let row = c.entry(i, j);
            let mut v = vec![q(0); idx.len()];
            for (l, coeff) in row.iter().enumerate() {
                if *coeff == q(0) {
                    continue;
                }
                let pos = idx
                    .iter()
                    .position(|&k| k == l)
                    .expect("consumed bracket escapes the consumed span");
                v[pos] = coeff.clone();
            }
            entries.push((a, b, v));
        }
    }
    let sub = StructureConstants::from_upper_brackets(consumed, &entries).unwrap();
    assert!(
        solvability_level(&sub).is_some(),
        "consumed span is not solvable"
    );
}

/// Runs full reduction chains under many seeds; every successful run must
/// produce a replayable solvable-span certificate.
pub fn suite_chain_certificates(cases: usize) {
    let step1 = chart("step1.chart");
    let branch_a = chart("branch_a.chart");
    let branch_b = chart("branch_b.chart");
    let autonomy_chart = parse_chart(AUTONOMY_CHART).unwrap();
    let autonomy = parse_problem(AUTONOMY_PROBLEM).unwrap();

    let mut done = 0usize;
    let mut seed = 0u64;
    while done < cases {
        for variant in 0..3 {
            if done == cases {
                return;
            }
            let (state, cfg, specs) = match variant {
                0 => {
                    let (state, cfg) = opened_worked_example(seed);
                    (state, cfg, vec![step1.clone(), branch_a.clone()])
                }
                1 => {
                    let (state, cfg) = opened_worked_example(seed);
                    (state, cfg, vec![step1.clone(), branch_b.clone()])
                }
                _ => {
                    let (sys, fields) = load_problem(&autonomy).unwrap();
                    let cfg = config(seed, &BTreeMap::new());
                    let state = SessionState::new(sys, fields, BTreeMap::new(), &cfg).unwrap();
                    (state, cfg, vec![autonomy_chart.clone()])
                }
            };
            let (_, outcome) = run_chain(&state, &specs, &cfg);
            let out = outcome
                .unwrap_or_else(|e| panic!("chain failed under seed {seed} variant {variant}: {e}"));
            assert_certified_span(&out.state, &out.final_report);
            done += 1;
        }
        seed += 1;
    }
}
