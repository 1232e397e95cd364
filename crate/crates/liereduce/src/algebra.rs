//! Exact rational Lie-algebra analysis: structure constants recovered from
//! vector fields, axiom verification, derived series and solvability, coset
//! chains, inheritance and invariance checks, transitivity, the Killing
//! radical, and a budgeted search for large solvable subalgebras.
//!
//! Everything downstream of structure-constant extraction runs over exact
//! rationals, so series, cosets, and radicals are reproducible bit for bit.

use crate::error::{Error, Result};
use crate::expr::{
    equals_probabilistic, evaluate_rational, EqualityConfig, EvalError, Expr, Rational,
    RationalPoint, Washout,
};
use crate::jet::{commutator, VectorField};
use crate::linalg::{in_span, QMat, QVec};
use crate::parser::{decompose_linear, StructureSpec};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;

/// The tensor C^L_{MN} of an r-dimensional algebra: entry(m, n) is the
/// coefficient vector of [Z_m, Z_n] in the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    pub names: Vec<String>,
    c: Vec<Vec<QVec>>,
}

impl StructureConstants {
    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn entry(&self, m: usize, n: usize) -> &QVec {
        &self.c[m][n]
    }

    pub fn component(&self, m: usize, n: usize, l: usize) -> &Rational {
        &self.c[m][n][l]
    }

    /// Builds the tensor from the brackets of the upper triangle; the lower
    /// triangle is filled antisymmetrically and the diagonal is zero.
    pub fn from_upper_brackets(
        names: Vec<String>,
        entries: &[(usize, usize, QVec)],
    ) -> Result<StructureConstants> {
        let r = names.len();
        let mut c = vec![vec![vec![Rational::zero(); r]; r]; r];
        for (m, n, v) in entries {
            if *m >= r || *n >= r || v.len() != r {
                return Err(Error::Structure(format!(
                    "bracket entry ({m},{n}) out of range for dimension {r}"
                )));
            }
            if m == n && v.iter().any(|x| !x.is_zero()) {
                return Err(Error::Structure(format!(
                    "[{}, {}] must vanish",
                    names[*m], names[*n]
                )));
            }
            c[*m][*n] = v.clone();
            c[*n][*m] = v.iter().map(|x| -x.clone()).collect();
        }
        Ok(StructureConstants { names, c })
    }

    /// Builds the tensor from a parsed structure block, decomposing each
    /// right-hand side as a constant combination of the basis names.
    pub fn from_spec(
        spec: &StructureSpec,
        default_names: &[String],
    ) -> Result<StructureConstants> {
        let names: Vec<String> = spec
            .basis
            .clone()
            .unwrap_or_else(|| default_names.to_vec());
        let r = names.len();
        if r == 0 {
            return Err(Error::Structure(
                "structure block needs a basis or declared generators".into(),
            ));
        }
        let index = |n: &str| -> Result<usize> {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Structure(format!("`{n}` is not a basis element")))
        };
        let mut c = vec![vec![vec![Rational::zero(); r]; r]; r];
        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (a, b, rhs, span) in &spec.brackets {
            let (i, j) = (index(a)?, index(b)?);
            let v = decompose_linear(rhs, &names)
                .map_err(|_| span.error(format!("[{a},{b}] is not a constant combination of the basis")))?;
            if i == j {
                if v.iter().any(|x| !x.is_zero()) {
                    return Err(span.error(format!("[{a},{a}] must vanish")));
                }
                continue;
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                let prev = &c[i][j];
                if *prev != v {
                    return Err(span.error(format!("[{a},{b}] declared inconsistently twice")));
                }
                continue;
            }
            c[i][j] = v.clone();
            c[j][i] = v.iter().map(|x| -x.clone()).collect();
        }
        Ok(StructureConstants { names, c })
    }

    /// Bracket of two coefficient vectors: [v, w]^L = v^M w^N C^L_{MN}.
    pub fn bracket(&self, v: &[Rational], w: &[Rational]) -> QVec {
        let r = self.dimension();
        let mut out = vec![Rational::zero(); r];
        for m in 0..r {
            if v[m].is_zero() {
                continue;
            }
            for n in 0..r {
                if w[n].is_zero() {
                    continue;
                }
                let scale = &v[m] * &w[n];
                for l in 0..r {
                    let cc = &self.c[m][n][l];
                    if !cc.is_zero() {
                        out[l] += &scale * cc;
                    }
                }
            }
        }
        out
    }

    /// Structure constants induced on a subspace that closes under the
    /// bracket, expressed in the given basis rows.
    pub fn induced(&self, basis: &[QVec]) -> Result<StructureConstants> {
        let s = basis.len();
        let r = self.dimension();
        let mut cols = QMat::zeros(r, s);
        for (j, b) in basis.iter().enumerate() {
            for i in 0..r {
                cols.set(i, j, b[i].clone());
            }
        }
        let names: Vec<String> = basis.iter().map(|b| combination_name(b, &self.names)).collect();
        let mut entries = Vec::new();
        for i in 0..s {
            for j in (i + 1)..s {
                let br = self.bracket(&basis[i], &basis[j]);
                let coeffs = cols.solve_unique(&br).ok_or_else(|| {
                    Error::NotClosed(format!(
                        "[{}, {}] leaves the subspace",
                        names[i], names[j]
                    ))
                })?;
                entries.push((i, j, coeffs));
            }
        }
        StructureConstants::from_upper_brackets(names, &entries)
    }

    /// True when the two tensors agree entry for entry (names ignored).
    pub fn same_brackets(&self, other: &StructureConstants) -> bool {
        self.c == other.c
    }
}

/// Human-readable name for a rational combination of basis elements.
pub fn combination_name(v: &[Rational], names: &[String]) -> String {
    let mut out = String::new();
    for (i, x) in v.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        let mag = x.abs();
        let part = if mag.is_one() {
            names[i].clone()
        } else {
            format!("{}*{}", mag, names[i])
        };
        if out.is_empty() {
            if x.is_negative() {
                out.push('-');
            }
        } else if x.is_negative() {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&part);
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn rational_box_for<'a>(cfg: &'a EqualityConfig, var: &str) -> &'a (Rational, Rational) {
    cfg.boxes.get(var).unwrap_or(&cfg.default_box)
}

/// Draws one rational sample point for the given variables inside the
/// configured boxes, on a grid of 64 interior steps.
pub(crate) fn sample_rational_point(
    vars: &BTreeSet<String>,
    cfg: &EqualityConfig,
    rng: &mut ChaCha20Rng,
) -> RationalPoint {
    let mut p = RationalPoint::new();
    for v in vars {
        let (lo, hi) = rational_box_for(cfg, v);
        let k = rng.gen_range(1..=63i64);
        let step = Rational::new(k.into(), 64.into());
        p.set(v.clone(), lo + (hi - lo) * step);
    }
    p
}

/// Value vector of a field at a point: its coefficients on the given
/// coordinates, evaluated exactly under the washout.
fn field_values(
    field: &VectorField,
    coords: &[String],
    point: &RationalPoint,
    w: &Washout,
) -> std::result::Result<QVec, EvalError> {
    coords
        .iter()
        .map(|c| evaluate_rational(&field.coefficient(c), point, w))
        .collect()
}

const MAX_SAMPLING_ATTEMPTS: usize = 64;

/// Recovers exact rational structure constants from vector fields: every
/// commutator is matched against constant combinations of the basis by
/// exact solves at random rational points, then the combination is verified
/// symbolically.
pub fn structure_constants(
    fields: &[VectorField],
    cfg: &EqualityConfig,
) -> Result<StructureConstants> {
    let r = fields.len();
    if r == 0 {
        return Err(Error::Structure("no generators given".into()));
    }
    let names: Vec<String> = fields.iter().map(|f| f.name.clone()).collect();

    let mut coords: BTreeSet<String> = BTreeSet::new();
    let mut vars: BTreeSet<String> = BTreeSet::new();
    for f in fields {
        coords.insert(f.independent.clone());
        coords.extend(f.coeffs.keys().cloned());
        vars.extend(f.referenced_vars());
    }
    let coords: Vec<String> = coords.into_iter().collect();

    let brackets: Vec<Vec<VectorField>> = fields
        .iter()
        .map(|a| {
            fields
                .iter()
                .map(|b| commutator(a, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // Sample points until the stacked coefficient matrix of the basis fields
    // reaches full column rank; failure to reach it means dependence.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x7374727563747572);
    let mut rows: Vec<QVec> = Vec::new();
    let mut points: Vec<(RationalPoint, Washout)> = Vec::new();
    let mut attempts = 0;
    while points.len() < r + 2 {
        if attempts > MAX_SAMPLING_ATTEMPTS {
            return Err(Error::ExhaustedSampling {
                attempts,
                context: "sampling points for structure-constant extraction".into(),
            });
        }
        attempts += 1;
        let point = sample_rational_point(&vars, cfg, &mut rng);
        let w = Washout::new(cfg.seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(attempts as u64)));
        let mut point_rows = Vec::with_capacity(coords.len());
        let mut ok = true;
        for coord in &coords {
            let mut row = Vec::with_capacity(r);
            for f in fields {
                match evaluate_rational(&f.coefficient(coord), &point, &w) {
                    Ok(v) => row.push(v),
                    Err(EvalError::Unbound(v)) => {
                        return Err(Error::Unbound(v));
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            point_rows.push(row);
        }
        if !ok {
            continue;
        }
        rows.extend(point_rows);
        points.push((point, w));
    }
    let a = QMat::from_rows(rows.clone());
    if a.rank() < r {
        return Err(Error::DependentBasis(
            "the fields do not have full rank as a basis at sampled points".into(),
        ));
    }

    let mut entries = Vec::new();
    for m in 0..r {
        for n in (m + 1)..r {
            let br = &brackets[m][n];
            let mut b = Vec::with_capacity(rows.len());
            for (point, w) in &points {
                for coord in &coords {
                    let v = evaluate_rational(&br.coefficient(coord), point, w)
                        .map_err(|e| Error::Internal(format!(
                            "bracket evaluation failed at a point where the basis evaluated: {e:?}"
                        )))?;
                    b.push(v);
                }
            }
            let coeffs = a.solve_unique(&b).ok_or_else(|| {
                Error::NotClosed(format!(
                    "[{}, {}] is not a constant combination of the basis",
                    names[m], names[n]
                ))
            })?;
            // Symbolic confirmation on every coordinate.
            for coord in &coords {
                let mut combo = Expr::zero();
                for (k, f) in fields.iter().enumerate() {
                    if coeffs[k].is_zero() {
                        continue;
                    }
                    combo = Expr::add(
                        combo,
                        Expr::mul(Expr::num(coeffs[k].clone()), f.coefficient(coord)),
                    );
                }
                let verdict = equals_probabilistic(&br.coefficient(coord), &combo, cfg)?;
                if !verdict.is_equal() {
                    return Err(Error::NotClosed(format!(
                        "[{}, {}] fails symbolic confirmation on the {coord} component",
                        names[m], names[n]
                    )));
                }
            }
            entries.push((m, n, coeffs));
        }
    }
    StructureConstants::from_upper_brackets(names, &entries)
}

/// A violated axiom instance, with the offending indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AxiomViolation {
    Antisymmetry { l: usize, m: usize, n: usize },
    Jacobi { m: usize, n: usize, s: usize, r: usize },
    Trace { n: usize, s: usize },
}

impl std::fmt::Display for AxiomViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxiomViolation::Antisymmetry { l, m, n } => {
                write!(f, "antisymmetry fails at C^{l}_{{{m},{n}}}")
            }
            AxiomViolation::Jacobi { m, n, s, r } => {
                write!(f, "Jacobi identity fails at (M,N,S,R) = ({m},{n},{s},{r})")
            }
            AxiomViolation::Trace { n, s } => {
                write!(f, "trace property fails at (N,S) = ({n},{s})")
            }
        }
    }
}

/// Exact verification of antisymmetry, the Jacobi identity, and the trace
/// property C^K_{NS} C^M_{MK} = 0. Returns every violation found.
pub fn verify_algebra_axioms(c: &StructureConstants) -> Vec<AxiomViolation> {
    let r = c.dimension();
    let mut out = Vec::new();
    for m in 0..r {
        for n in 0..r {
            for l in 0..r {
                if *c.component(m, n, l) != -c.component(n, m, l).clone() {
                    out.push(AxiomViolation::Antisymmetry { l, m, n });
                }
            }
        }
    }
    for m in 0..r {
        for n in 0..r {
            for s in 0..r {
                for rr in 0..r {
                    let mut total = Rational::zero();
                    for k in 0..r {
                        total += c.component(m, n, k) * c.component(s, k, rr)
                            + c.component(n, s, k) * c.component(m, k, rr)
                            + c.component(s, m, k) * c.component(n, k, rr);
                    }
                    if !total.is_zero() {
                        out.push(AxiomViolation::Jacobi { m, n, s, r: rr });
                    }
                }
            }
        }
    }
    // tau_K = C^M_{MK} is the trace of ad; the property is sum_K C^K_{NS} tau_K = 0.
    let tau: Vec<Rational> = (0..r)
        .map(|k| (0..r).map(|m| c.component(m, k, m).clone()).sum())
        .collect();
    for n in 0..r {
        for s in 0..r {
            let mut total = Rational::zero();
            for k in 0..r {
                total += c.component(n, s, k) * &tau[k];
            }
            if !total.is_zero() {
                out.push(AxiomViolation::Trace { n, s });
            }
        }
    }
    out
}

/// Descending chain g^(0) superset g^(1) superset ... where each level is
/// the bracket span of the previous one.
#[derive(Debug, Clone)]
pub struct DerivedSeries {
    /// Canonical (reduced-row) basis per level; levels[0] is the whole space.
    pub levels: Vec<Vec<QVec>>,
    /// True when the series reached {0}; false when it stabilized above it.
    pub terminated: bool,
}

impl DerivedSeries {
    pub fn dimensions(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.len()).collect()
    }
}

pub fn derived_series(c: &StructureConstants) -> DerivedSeries {
    let r = c.dimension();
    let mut levels: Vec<Vec<QVec>> = vec![QMat::identity(r).rows_vec().to_vec()];
    loop {
        let current = levels.last().unwrap();
        if current.is_empty() {
            return DerivedSeries {
                levels,
                terminated: true,
            };
        }
        let mut brackets = Vec::new();
        for i in 0..current.len() {
            for j in (i + 1)..current.len() {
                brackets.push(c.bracket(&current[i], &current[j]));
            }
        }
        let next = QMat::from_rows(brackets).row_space_basis();
        if next.len() >= current.len() {
            // No decrease: stabilized (growth can only happen for tensors
            // that violate the axioms; treated as stabilization too).
            return DerivedSeries {
                levels,
                terminated: false,
            };
        }
        let empty = next.is_empty();
        levels.push(next);
        if empty {
            return DerivedSeries {
                levels,
                terminated: true,
            };
        }
    }
}

/// Smallest n with g^(n) = {0}, or None when the series stabilizes above
/// zero dimension.
pub fn solvability_level(c: &StructureConstants) -> Option<usize> {
    let series = derived_series(c);
    if series.terminated {
        Some(series.levels.len() - 1)
    } else {
        None
    }
}

/// Exact complements B^(i)_(i+1) of each derived algebra inside its
/// predecessor, deepest first. Original basis vectors are preferred as
/// representatives; ties break in input order.
pub fn cosets(series: &DerivedSeries) -> Vec<Vec<QVec>> {
    let r = series.levels[0].len();
    let mut out = Vec::new();
    for i in (0..series.levels.len() - 1).rev() {
        let outer = &series.levels[i];
        let inner = &series.levels[i + 1];
        let want = outer.len() - inner.len();
        let mut picked: Vec<QVec> = Vec::new();
        let mut span: Vec<QVec> = inner.clone();
        let mut candidates: Vec<QVec> = Vec::new();
        for k in 0..r {
            let mut e = vec![Rational::zero(); r];
            e[k] = Rational::one();
            candidates.push(e);
        }
        candidates.extend(outer.iter().cloned());
        for cand in candidates {
            if picked.len() == want {
                break;
            }
            if !in_span(outer, &cand) || in_span(&span, &cand) {
                continue;
            }
            span.push(cand.clone());
            span = QMat::from_rows(span).row_space_basis();
            picked.push(cand);
        }
        out.push(picked);
    }
    out
}

/// One coset of the reduction chain, with its runtime obligations.
#[derive(Debug, Clone)]
pub struct PlanStep {
    /// Coset members as coefficient vectors in the original basis.
    pub coset: Vec<QVec>,
    /// Brackets of coset members land in the deeper derived algebra, so the
    /// members commute on the reduced system; recorded for the report.
    pub abelian_mod_deeper: bool,
}

/// Ordered chain of cosets, deepest derived algebra first.
#[derive(Debug, Clone)]
pub struct ReductionPlan {
    pub steps: Vec<PlanStep>,
    pub level: usize,
    pub dimension: usize,
}

impl ReductionPlan {
    /// Predicted residual dimension after consuming all r generators.
    pub fn predicted_residual(&self, system_dimension: usize) -> Result<usize> {
        if self.dimension > system_dimension {
            return Err(Error::Reduction(format!(
                "algebra dimension {} exceeds system dimension {}",
                self.dimension, system_dimension
            )));
        }
        Ok(system_dimension - self.dimension)
    }
}

/// Builds the coset chain for a solvable algebra, checking each coset's
/// brackets land in the deeper derived algebra.
pub fn reduction_chain(c: &StructureConstants) -> Result<ReductionPlan> {
    let series = derived_series(c);
    if !series.terminated {
        let dim = series.levels.last().unwrap().len();
        return Err(Error::NotSolvable {
            level: series.levels.len() - 1,
            dim,
        });
    }
    let level = series.levels.len() - 1;
    let chain = cosets(&series);
    let mut steps = Vec::new();
    for (idx, coset) in chain.iter().enumerate() {
        // Coset at position idx complements g^(i+1) in g^(i) with
        // i = level - 1 - idx; deeper derived algebra is g^(i+1).
        let deeper = &series.levels[level - idx];
        let mut abelian = true;
        for a in 0..coset.len() {
            for b in (a + 1)..coset.len() {
                let br = c.bracket(&coset[a], &coset[b]);
                if !in_span(deeper, &br) {
                    abelian = false;
                }
            }
        }
        steps.push(PlanStep {
            coset: coset.clone(),
            abelian_mod_deeper: abelian,
        });
    }
    Ok(ReductionPlan {
        steps,
        level,
        dimension: c.dimension(),
    })
}

/// Every bracket of the Abelian set with the candidate must stay inside the
/// span of the Abelian set for the candidate to inherit onto the reduction.
pub fn check_inheritance(
    c: &StructureConstants,
    abelian: &[usize],
    candidate: usize,
) -> Result<bool> {
    for (ai, &i) in abelian.iter().enumerate() {
        for &j in &abelian[ai + 1..] {
            if c.entry(i, j).iter().any(|x| !x.is_zero()) {
                return Err(Error::Inheritance(format!(
                    "[{}, {}] is nonzero, the set is not Abelian",
                    c.names[i], c.names[j]
                )));
            }
        }
    }
    for &i in abelian {
        let br = c.entry(i, candidate);
        for (l, x) in br.iter().enumerate() {
            if !x.is_zero() && !abelian.contains(&l) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Definition 1: [sub, whole] stays inside the subspace.
pub fn check_invariant_subalgebra(c: &StructureConstants, sub: &[QVec]) -> Result<bool> {
    let r = c.dimension();
    for i in 0..sub.len() {
        for j in (i + 1)..sub.len() {
            let br = c.bracket(&sub[i], &sub[j]);
            if !in_span(sub, &br) {
                return Err(Error::NotClosed(
                    "the subspace is not closed under the bracket".into(),
                ));
            }
        }
    }
    for v in sub {
        for m in 0..r {
            let mut e = vec![Rational::zero(); r];
            e[m] = Rational::one();
            if !in_span(sub, &c.bracket(v, &e)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

const TRANSITIVITY_POINT_SETS: usize = 5;

/// Whether the fields act transitively along the given coordinate
/// directions: the m x d coefficient matrix must have generic rank m.
/// Decided by exact evaluation at several random points, majority vote.
pub fn transitivity_check(
    fields: &[VectorField],
    subspace: &[String],
    cfg: &EqualityConfig,
) -> Result<bool> {
    let m = fields.len();
    if m == 0 || m > subspace.len() {
        return Err(Error::Shape(format!(
            "{m} fields cannot act transitively on {} coordinates",
            subspace.len()
        )));
    }
    let mut vars: BTreeSet<String> = BTreeSet::new();
    for f in fields {
        vars.extend(f.referenced_vars());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x7472616e73697469);
    let mut full_rank_votes = 0;
    let mut sets_done = 0;
    let mut attempts = 0;
    while sets_done < TRANSITIVITY_POINT_SETS {
        if attempts > MAX_SAMPLING_ATTEMPTS {
            return Err(Error::ExhaustedSampling {
                attempts,
                context: "sampling points for the transitivity check".into(),
            });
        }
        attempts += 1;
        let point = sample_rational_point(&vars, cfg, &mut rng);
        let w = Washout::new(cfg.seed.wrapping_add(0x6b65cc8b * attempts as u64));
        let mut rows = Vec::with_capacity(m);
        let mut ok = true;
        for f in fields {
            match field_values(f, subspace, &point, &w) {
                Ok(row) => rows.push(row),
                Err(EvalError::Unbound(v)) => return Err(Error::Unbound(v)),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        sets_done += 1;
        if QMat::from_rows(rows).rank() == m {
            full_rank_votes += 1;
        }
    }
    Ok(full_rank_votes * 2 > TRANSITIVITY_POINT_SETS)
}

/// Trace form of the adjoint representation, kappa_{MN} = C^R_{MS} C^S_{NR}.
pub fn killing_form(c: &StructureConstants) -> QMat {
    let r = c.dimension();
    let mut k = QMat::zeros(r, r);
    for m in 0..r {
        for n in 0..r {
            let mut total = Rational::zero();
            for rr in 0..r {
                for s in 0..r {
                    total += c.component(m, s, rr) * c.component(n, rr, s);
                }
            }
            k.set(m, n, total);
        }
    }
    k
}

/// Cartan criterion: the maximal solvable ideal is the kappa-orthogonal
/// complement of the derived algebra. The returned basis is re-verified
/// solvable on its induced constants.
pub fn killing_radical(c: &StructureConstants) -> Result<Vec<QVec>> {
    let r = c.dimension();
    let kappa = killing_form(c);
    let series = derived_series(c);
    let derived = &series.levels[std::cmp::min(1, series.levels.len() - 1)];
    if derived.is_empty() {
        // Abelian: the whole algebra is its own radical.
        return Ok(QMat::identity(r).rows_vec().to_vec());
    }
    let mut rows = Vec::with_capacity(derived.len());
    for d in derived {
        rows.push(kappa.mul_vec(d));
    }
    let radical = QMat::from_rows(rows).nullspace();
    if !radical.is_empty() {
        let induced = c.induced(&radical).map_err(|_| {
            Error::Internal("Killing radical is not closed under the bracket".into())
        })?;
        if solvability_level(&induced).is_none() {
            return Err(Error::Internal(
                "Killing radical failed its own solvability check".into(),
            ));
        }
    }
    Ok(radical)
}

/// Result of the solvable-subalgebra search: a verified solvable closed
/// subspace, its level, and a basis change putting it first.
#[derive(Debug, Clone)]
pub struct SolvableSearch {
    pub basis: Vec<QVec>,
    pub level: usize,
    /// Invertible matrix whose first rows are the subalgebra basis.
    pub change_of_basis: QMat,
    pub trials_used: usize,
}

pub(crate) fn closed_subspace(c: &StructureConstants, basis: &[QVec]) -> bool {
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            if !in_span(basis, &c.bracket(&basis[i], &basis[j])) {
                return false;
            }
        }
    }
    true
}

pub(crate) fn subspace_solvable(c: &StructureConstants, basis: &[QVec]) -> Option<usize> {
    if basis.is_empty() {
        return Some(0);
    }
    let induced = c.induced(basis).ok()?;
    solvability_level(&induced)
}

/// Budgeted heuristic search for a maximal solvable subalgebra: starts from
/// the Killing radical, tries every basis-subset subalgebra, then grows the
/// best candidate with random small-integer vectors. The result is a lower
/// bound with a verified certificate.
pub fn search_max_solvable(
    c: &StructureConstants,
    budget: usize,
    seed: u64,
) -> Result<SolvableSearch> {
    let r = c.dimension();
    if r == 0 {
        return Err(Error::Structure("empty algebra".into()));
    }
    let mut trials = 0usize;
    let mut best: Vec<QVec> = Vec::new();

    let radical = killing_radical(c)?;
    if !radical.is_empty() {
        best = QMat::from_rows(radical).row_space_basis();
    }

    // Basis subsets, largest first, bounded by the budget. Enumeration is
    // only affordable for small dimensions; the random phase covers the rest.
    let subset_cap = if r <= 20 { r } else { 0 };
    'subsets: for size in (best.len().max(1)..=subset_cap).rev() {
        if size <= best.len() {
            break;
        }
        for mask in 0u32..(1u32 << r) {
            if mask.count_ones() as usize != size {
                continue;
            }
            if trials >= budget {
                break 'subsets;
            }
            trials += 1;
            let subset: Vec<QVec> = (0..r)
                .filter(|k| mask & (1 << k) != 0)
                .map(|k| {
                    let mut e = vec![Rational::zero(); r];
                    e[k] = Rational::one();
                    e
                })
                .collect();
            if closed_subspace(c, &subset) && subspace_solvable(c, &subset).is_some() {
                best = subset;
                break 'subsets;
            }
        }
    }

    // Random small-integer growth.
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x736f6c7661626c65);
    while trials < budget && best.len() < r {
        trials += 1;
        let base: Vec<QVec> = if trials % 3 == 0 || best.is_empty() {
            let mut v = vec![Rational::zero(); r];
            while v.iter().all(|x| x.is_zero()) {
                for x in v.iter_mut() {
                    *x = Rational::from_integer(rng.gen_range(-2i64..=2).into());
                }
            }
            vec![v]
        } else {
            best.clone()
        };
        let mut v = vec![Rational::zero(); r];
        for x in v.iter_mut() {
            *x = Rational::from_integer(rng.gen_range(-2i64..=2).into());
        }
        if in_span(&base, &v) {
            continue;
        }
        let mut cand = base;
        cand.push(v);
        let cand = QMat::from_rows(cand).row_space_basis();
        if cand.len() <= best.len() {
            continue;
        }
        if closed_subspace(c, &cand) && subspace_solvable(c, &cand).is_some() {
            best = cand;
        }
    }

    let best = QMat::from_rows(best).row_space_basis();
    let level = subspace_solvable(c, &best)
        .ok_or_else(|| Error::Internal("search produced a non-solvable candidate".into()))?;

    // Completion to an invertible basis change: subalgebra rows first.
    let mut p_rows = best.clone();
    for k in 0..r {
        if p_rows.len() == r {
            break;
        }
        let mut e = vec![Rational::zero(); r];
        e[k] = Rational::one();
        if !in_span(&p_rows, &e) {
            p_rows.push(e);
        }
    }
    Ok(SolvableSearch {
        basis: best,
        level,
        change_of_basis: QMat::from_rows(p_rows),
        trials_used: trials,
    })
}

/// Transforms the tensor under Y_A = P_A^M X_M:
/// Ctilde^C_{AB} = P_A^M P_B^N C^L_{MN} (P^{-1})_L^C.
pub fn change_basis(
    c: &StructureConstants,
    p: &QMat,
    names: Option<Vec<String>>,
) -> Result<StructureConstants> {
    let r = c.dimension();
    let p_inv = p
        .inverse()
        .ok_or_else(|| Error::Structure("basis change matrix is singular".into()))?;
    let names = names.unwrap_or_else(|| (1..=r).map(|i| format!("Y{i}")).collect());
    if names.len() != r {
        return Err(Error::Structure(format!(
            "expected {r} names for the new basis, got {}",
            names.len()
        )));
    }
    let mut entries = Vec::new();
    for a in 0..r {
        for b in (a + 1)..r {
            let br = c.bracket(p.row(a), p.row(b));
            // Convert the old-basis vector to new-basis coordinates.
            let mut v = vec![Rational::zero(); r];
            for l in 0..r {
                if br[l].is_zero() {
                    continue;
                }
                for cc in 0..r {
                    v[cc] += &br[l] * p_inv.get(l, cc);
                }
            }
            entries.push((a, b, v));
        }
    }
    StructureConstants::from_upper_brackets(names, &entries)
}
