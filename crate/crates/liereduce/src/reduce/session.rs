//! Plain-text session files. The system, generators, and structure are
//! stored as ordinary problem text so they parse back through the same
//! grammar; scalar state rides in prefixed header lines and step reports are
//! kept verbatim.

use super::{AlgebraicRelation, Quadrature, SessionState};
use crate::algebra::StructureConstants;
use crate::error::{Error, Result};
use crate::expr::{Expr, Rational};
use crate::jet::load_problem;
use crate::parser::{parse_expression, parse_problem};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt::Write as _;

const HEADER: &str = "liereduce session v1";

fn structure_lines(out: &mut String, c: &StructureConstants, with_basis: bool) {
    out.push_str("structure {\n");
    if with_basis {
        let _ = writeln!(out, "  basis {};", c.names.join(", "));
    }
    let r = c.dimension();
    for a in 0..r {
        for b in (a + 1)..r {
            let v = c.entry(a, b);
            if v.iter().all(|x| x.is_zero()) {
                continue;
            }
            let mut rhs = Expr::zero();
            for (l, x) in v.iter().enumerate() {
                if x.is_zero() {
                    continue;
                }
                rhs = Expr::add(
                    rhs,
                    Expr::mul(Expr::num(x.clone()), Expr::var(c.names[l].clone())),
                );
            }
            let _ = writeln!(out, "  [{}, {}] = {};", c.names[a], c.names[b], rhs);
        }
    }
    out.push_str("}\n");
}

/// Renders the session as text. Fails if a generator is not a point field,
/// since the stored grammar has no jet coefficients.
pub fn save_session(state: &SessionState) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "step {}", state.step);
    let _ = writeln!(out, "original dimension {}", state.original_dimension);
    let _ = writeln!(out, "next constant {}", state.next_constant);
    for coset in &state.consumed {
        let _ = writeln!(out, "consumed {}", coset.join(", "));
    }
    if !state.autonomy.is_empty() {
        let _ = writeln!(out, "autonomy {}", state.autonomy.join(", "));
    }
    for coset in &state.pending {
        let _ = writeln!(out, "pending {}", coset.join(", "));
    }
    for n in &state.notes {
        let _ = writeln!(out, "note {n}");
    }

    out.push_str("begin original structure\n");
    structure_lines(&mut out, &state.original_constants, true);
    out.push_str("end original structure\n");

    out.push_str("begin problem\n");
    let sys = &state.system;
    let _ = writeln!(out, "independent {}", sys.independent);
    for (dep, k) in &sys.dependents {
        let _ = writeln!(out, "dependent {dep} order {k}");
    }
    for (dep, k) in &sys.dependents {
        let _ = writeln!(
            out,
            "equation diff({dep}, {}, {k}) = {}",
            sys.independent, sys.rhs[dep]
        );
    }
    for g in &state.generators {
        if !g.is_point_field(sys) {
            return Err(Error::Session(format!(
                "generator `{}` has jet coefficients; sessions store point generators only",
                g.name
            )));
        }
        let mut terms: Vec<String> = Vec::new();
        if !g.xi.is_zero() {
            terms.push(format!("({})*d/d{}", g.xi, g.independent));
        }
        for (var, c) in &g.coeffs {
            terms.push(format!("({c})*d/d{var}"));
        }
        if terms.is_empty() {
            terms.push(format!("(0)*d/d{}", g.independent));
        }
        let _ = writeln!(out, "generator {} = {}", g.name, terms.join(" + "));
    }
    for (var, (lo, hi)) in &state.boxes {
        let _ = writeln!(out, "box {var} in [{lo}, {hi}]");
    }
    if !state.generators.is_empty() {
        structure_lines(&mut out, &state.constants, false);
    }
    out.push_str("end problem\n");

    for q in &state.quadratures {
        let _ = writeln!(out, "quadrature {q}");
    }
    for a in &state.algebraic {
        let status = if a.eliminated { "eliminated" } else { "retained" };
        let _ = writeln!(out, "algebraic {status} {a}");
    }
    for (i, r) in state.reports.iter().enumerate() {
        let _ = writeln!(out, "begin report {}", i + 1);
        out.push_str(r);
        if !r.ends_with('\n') {
            out.push('\n');
        }
        let _ = writeln!(out, "end report {}", i + 1);
    }
    Ok(out)
}

fn bad(line: &str, why: &str) -> Error {
    Error::Session(format!("{why}: `{line}`"))
}

fn name_list(rest: &str) -> Vec<String> {
    rest.split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

fn parse_count(line: &str, rest: &str) -> Result<usize> {
    rest.trim()
        .parse()
        .map_err(|_| bad(line, "expected an integer"))
}

fn parse_quadrature_line(line: &str, rest: &str) -> Result<Quadrature> {
    let (target, tail) = rest
        .split_once(" = int(")
        .ok_or_else(|| bad(line, "malformed quadrature"))?;
    let (integrand_text, tail) = tail
        .rsplit_once(") d")
        .ok_or_else(|| bad(line, "malformed quadrature"))?;
    let (independent, constant) = tail
        .split_once(" + ")
        .ok_or_else(|| bad(line, "malformed quadrature"))?;
    let integrand = parse_expression(integrand_text)
        .map_err(|e| Error::Session(format!("quadrature integrand: {e}")))?;
    let digits = constant.strip_prefix('c').unwrap_or("");
    if digits.is_empty() || digits.parse::<usize>().is_err() {
        return Err(bad(line, "quadrature constant must be c<n>"));
    }
    Ok(Quadrature {
        target: target.trim().to_string(),
        integrand,
        independent: independent.trim().to_string(),
        constant: constant.trim().to_string(),
    })
}

fn parse_algebraic_line(line: &str, rest: &str) -> Result<AlgebraicRelation> {
    let (status, rest) = rest
        .split_once(' ')
        .ok_or_else(|| bad(line, "malformed algebraic relation"))?;
    let eliminated = match status {
        "eliminated" => true,
        "retained" => false,
        _ => return Err(bad(line, "algebraic status must be eliminated or retained")),
    };
    let (var, rhs_text) = rest
        .split_once(" = ")
        .ok_or_else(|| bad(line, "malformed algebraic relation"))?;
    let rhs = parse_expression(rhs_text)
        .map_err(|e| Error::Session(format!("algebraic right-hand side: {e}")))?;
    Ok(AlgebraicRelation {
        var: var.trim().to_string(),
        rhs,
        eliminated,
    })
}

/// Rebuilds a session from its text form, validating name consistency but
/// not re-running the verification pipeline.
pub fn load_session(text: &str) -> Result<SessionState> {
    let raw: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < raw.len() && raw[i].trim().is_empty() {
        i += 1;
    }
    if i >= raw.len() || raw[i].trim() != HEADER {
        return Err(Error::Session(format!(
            "missing session header; expected `{HEADER}`"
        )));
    }
    i += 1;

    let mut step: Option<usize> = None;
    let mut original_dimension: Option<usize> = None;
    let mut next_constant: Option<usize> = None;
    let mut consumed: Vec<Vec<String>> = Vec::new();
    let mut autonomy: Vec<String> = Vec::new();
    let mut pending: Vec<Vec<String>> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut quadratures: Vec<Quadrature> = Vec::new();
    let mut algebraic: Vec<AlgebraicRelation> = Vec::new();
    let mut reports: Vec<(usize, String)> = Vec::new();
    let mut original_text: Option<String> = None;
    let mut problem_text: Option<String> = None;

    let section = |raw: &[&str], i: &mut usize, end: &str| -> Result<String> {
        let mut body = String::new();
        while *i < raw.len() {
            if raw[*i].trim() == end {
                *i += 1;
                return Ok(body);
            }
            body.push_str(raw[*i]);
            body.push('\n');
            *i += 1;
        }
        Err(Error::Session(format!("section not closed by `{end}`")))
    };

    while i < raw.len() {
        let line = raw[i].trim().to_string();
        i += 1;
        if line.is_empty() {
            continue;
        }
        if line == "begin original structure" {
            if original_text.is_some() {
                return Err(bad(&line, "duplicate section"));
            }
            original_text = Some(section(&raw, &mut i, "end original structure")?);
        } else if line == "begin problem" {
            if problem_text.is_some() {
                return Err(bad(&line, "duplicate section"));
            }
            problem_text = Some(section(&raw, &mut i, "end problem")?);
        } else if let Some(rest) = line.strip_prefix("begin report ") {
            let idx = parse_count(&line, rest)?;
            let body = section(&raw, &mut i, &format!("end report {idx}"))?;
            reports.push((idx, body.trim_end_matches('\n').to_string()));
        } else if let Some(rest) = line.strip_prefix("step ") {
            step = Some(parse_count(&line, rest)?);
        } else if let Some(rest) = line.strip_prefix("original dimension ") {
            original_dimension = Some(parse_count(&line, rest)?);
        } else if let Some(rest) = line.strip_prefix("next constant ") {
            next_constant = Some(parse_count(&line, rest)?);
        } else if let Some(rest) = line.strip_prefix("consumed ") {
            consumed.push(name_list(rest));
        } else if let Some(rest) = line.strip_prefix("autonomy ") {
            autonomy.extend(name_list(rest));
        } else if let Some(rest) = line.strip_prefix("pending ") {
            pending.push(name_list(rest));
        } else if let Some(rest) = line.strip_prefix("note ") {
            notes.push(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("quadrature ") {
            quadratures.push(parse_quadrature_line(&line, rest)?);
        } else if let Some(rest) = line.strip_prefix("algebraic ") {
            algebraic.push(parse_algebraic_line(&line, rest)?);
        } else {
            return Err(bad(&line, "unknown session line"));
        }
    }

    let step = step.ok_or_else(|| Error::Session("missing `step` line".into()))?;
    let original_dimension = original_dimension
        .ok_or_else(|| Error::Session("missing `original dimension` line".into()))?;
    let next_constant =
        next_constant.ok_or_else(|| Error::Session("missing `next constant` line".into()))?;
    let original_text =
        original_text.ok_or_else(|| Error::Session("missing original structure section".into()))?;
    let problem_text =
        problem_text.ok_or_else(|| Error::Session("missing problem section".into()))?;

    let op = parse_problem(&original_text)?;
    let ospec = op
        .structure
        .ok_or_else(|| Error::Session("original structure section has no structure block".into()))?;
    if ospec.basis.is_none() {
        return Err(Error::Session(
            "original structure block must declare its basis".into(),
        ));
    }
    let original_constants = StructureConstants::from_spec(&ospec, &[])?;

    let p = parse_problem(&problem_text)?;
    let (system, generators) = load_problem(&p)?;
    let gen_names: Vec<String> = generators.iter().map(|g| g.name.clone()).collect();
    let constants = match &p.structure {
        Some(s) => {
            let c = StructureConstants::from_spec(s, &gen_names)?;
            if c.names != gen_names {
                return Err(Error::Session(
                    "structure basis does not match the declared generators".into(),
                ));
            }
            c
        }
        None => StructureConstants::from_upper_brackets(gen_names.clone(), &[])?,
    };

    let original_names = original_constants.names.clone();
    for coset in &consumed {
        for n in coset {
            if !original_names.contains(n) {
                return Err(Error::Session(format!(
                    "consumed generator `{n}` is not in the original basis"
                )));
            }
        }
    }
    for n in &autonomy {
        if !consumed.iter().flatten().any(|c| c == n) {
            return Err(Error::Session(format!(
                "autonomy generator `{n}` was never consumed"
            )));
        }
    }
    for coset in &pending {
        for n in coset {
            if !gen_names.contains(n) {
                return Err(Error::Session(format!(
                    "pending generator `{n}` is not a current generator"
                )));
            }
        }
    }
    if consumed.len() != step {
        return Err(Error::Session(format!(
            "session records {} consumed cosets but claims step {step}",
            consumed.len()
        )));
    }
    if system.dimension() > original_dimension {
        return Err(Error::Session(format!(
            "current dimension {} exceeds the original {original_dimension}",
            system.dimension()
        )));
    }
    if next_constant == 0 {
        return Err(Error::Session("constant counter must start at 1".into()));
    }
    for q in &quadratures {
        let n: usize = q.constant[1..].parse().expect("validated on parse");
        if n >= next_constant {
            return Err(Error::Session(format!(
                "quadrature constant {} is not below the counter {next_constant}",
                q.constant
            )));
        }
    }

    reports.sort_by_key(|(idx, _)| *idx);
    let reports: Vec<String> = reports.into_iter().map(|(_, r)| r).collect();
    let boxes: BTreeMap<String, (Rational, Rational)> = p.boxes.clone();

    Ok(SessionState {
        step,
        system,
        generators,
        constants,
        original_names,
        original_constants,
        pending,
        consumed,
        autonomy,
        quadratures,
        algebraic,
        boxes,
        original_dimension,
        next_constant,
        reports,
        notes,
    })
}
