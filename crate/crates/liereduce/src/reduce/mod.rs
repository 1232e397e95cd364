//! Reduction steps along the coset chain: chart verification, the change of
//! variables it induces on systems and generators, restriction to the
//! rectified hypersurfaces with emitted quadratures, and the session
//! bookkeeping that strings successive steps together.

mod session;
#[cfg(test)]
mod tests;

use crate::algebra::{
    change_basis, check_inheritance, closed_subspace, reduction_chain, sample_rational_point,
    structure_constants, subspace_solvable, transitivity_check, StructureConstants,
};
use crate::error::{Error, Result};
use crate::expr::{
    equals_probabilistic, evaluate_rational, is_zero_probabilistic, solve_linear_symbolic,
    EqualityConfig, Expr, Rational, Washout,
};
use crate::jet::{
    check_symmetry, commutator, free_total_derivative, prolong, OdeSystem, VectorField,
};
use crate::linalg::{QMat, QVec};
use crate::parser::{jet_name, split_jet_name, ChartSpec, RenameItem};
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use session::{load_session, save_session};

/// A validated change of coordinates: forward point map, explicit inverse,
/// the coset generators it claims to rectify, and the names taken by the
/// restricted variables. The Jacobian of the forward map is cached.
#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    pub new_independent: String,
    pub new_dependents: Vec<String>,
    pub forward: Vec<(String, Expr)>,
    pub inverse: Vec<(String, Expr)>,
    /// Generator name -> the new coordinate it rectifies.
    pub targets: Vec<(String, String)>,
    pub independent_rename: Option<String>,
    /// Rectified variable -> name of its first derivative after restriction.
    pub derivative_renames: Vec<(String, String)>,
    /// Rows follow `forward`, columns the old base coordinates.
    pub jacobian: Vec<Vec<Expr>>,
}

impl Chart {
    pub fn new(spec: &ChartSpec, sys: &OdeSystem) -> Result<Chart> {
        let mut old_coords = vec![sys.independent.clone()];
        old_coords.extend(sys.dependents.iter().map(|(n, _)| n.clone()));

        if spec.forward.len() != old_coords.len() {
            return Err(Error::Chart(format!(
                "chart `{}` introduces {} coordinates but the system has {}",
                spec.name,
                spec.forward.len(),
                old_coords.len()
            )));
        }
        let new_coords: Vec<String> = spec.forward.iter().map(|(n, _)| n.clone()).collect();
        for n in &new_coords {
            if old_coords.contains(n) {
                return Err(Error::Chart(format!(
                    "chart `{}` reuses the coordinate name `{n}`; new names must be fresh",
                    spec.name
                )));
            }
        }
        // A new name that reads as a jet of another new name would make the
        // transformed jet space ambiguous.
        let dummy: Vec<(String, usize)> = new_coords.iter().map(|n| (n.clone(), 1)).collect();
        for n in &new_coords {
            if split_jet_name(n, &dummy).is_some() {
                return Err(Error::Chart(format!(
                    "chart `{}` name `{n}` collides with a jet of another new coordinate",
                    spec.name
                )));
            }
        }
        for (n, e) in &spec.forward {
            for v in e.free_vars() {
                if !old_coords.contains(&v) {
                    return Err(Error::Chart(format!(
                        "chart `{}` defines `{n}` using `{v}`, which is not a base coordinate",
                        spec.name
                    )));
                }
            }
        }
        for old in &old_coords {
            if spec.inverse_expr(old).is_none() {
                return Err(Error::Chart(format!(
                    "chart `{}` has no inverse expression for `{old}`",
                    spec.name
                )));
            }
        }
        for (n, e) in &spec.inverse {
            if !old_coords.contains(n) {
                return Err(Error::Chart(format!(
                    "chart `{}` inverts `{n}`, which is not a base coordinate",
                    spec.name
                )));
            }
            for v in e.free_vars() {
                if !new_coords.contains(&v) {
                    return Err(Error::Chart(format!(
                        "chart `{}` inverse for `{n}` uses `{v}`, which is not a new coordinate",
                        spec.name
                    )));
                }
            }
        }

        let new_independent = spec.forward[0].0.clone();
        let new_dependents: Vec<String> = new_coords[1..].to_vec();
        for (gen, var) in &spec.targets {
            if !new_coords.contains(var) {
                return Err(Error::Chart(format!(
                    "chart `{}` targets `{gen}` onto `{var}`, which it does not define",
                    spec.name
                )));
            }
        }

        let mut independent_rename = None;
        let mut derivative_renames = Vec::new();
        let mut taken: BTreeSet<String> = new_coords.iter().cloned().collect();
        taken.extend(old_coords.iter().cloned());
        for (item, to) in &spec.renames {
            if !taken.insert(to.clone()) {
                return Err(Error::Chart(format!(
                    "chart `{}` rename target `{to}` collides with another name",
                    spec.name
                )));
            }
            match item {
                RenameItem::Var(v) => {
                    if *v != new_independent {
                        return Err(Error::Chart(format!(
                            "chart `{}` renames `{v}`; only the new independent variable \
                             can be renamed directly",
                            spec.name
                        )));
                    }
                    independent_rename = Some(to.clone());
                }
                RenameItem::FirstDerivative(v) => {
                    if !spec.targets.iter().any(|(_, tv)| tv == v) {
                        return Err(Error::Chart(format!(
                            "chart `{}` renames `{v}'` but `{v}` is not a rectified coordinate",
                            spec.name
                        )));
                    }
                    derivative_renames.push((v.clone(), to.clone()));
                }
            }
        }
        for (_, var) in &spec.targets {
            if *var != new_independent
                && !derivative_renames.iter().any(|(v, _)| v == var)
            {
                return Err(Error::Chart(format!(
                    "chart `{}` rectifies `{var}` but gives no name for `{var}'` \
                     after restriction",
                    spec.name
                )));
            }
        }

        let jacobian = spec
            .forward
            .iter()
            .map(|(_, e)| old_coords.iter().map(|v| e.differentiate(v)).collect())
            .collect();

        Ok(Chart {
            name: spec.name.clone(),
            new_independent,
            new_dependents,
            forward: spec.forward.clone(),
            inverse: spec.inverse.clone(),
            targets: spec.targets.clone(),
            independent_rename,
            derivative_renames,
            jacobian,
        })
    }

    pub fn forward_expr(&self, var: &str) -> Option<&Expr> {
        self.forward.iter().find(|(n, _)| n == var).map(|(_, e)| e)
    }

    pub fn inverse_expr(&self, var: &str) -> Option<&Expr> {
        self.inverse.iter().find(|(n, _)| n == var).map(|(_, e)| e)
    }

    /// Substitution map sending old base coordinates to their expressions in
    /// the new coordinates.
    pub fn inverse_map(&self) -> BTreeMap<String, Expr> {
        self.inverse
            .iter()
            .map(|(n, e)| (n.clone(), e.clone()))
            .collect()
    }

    /// Substitution map sending new coordinates to their expressions in the
    /// old base coordinates.
    pub fn forward_map(&self) -> BTreeMap<String, Expr> {
        self.forward
            .iter()
            .map(|(n, e)| (n.clone(), e.clone()))
            .collect()
    }

    /// New coordinates rectified onto dependent directions, in target order,
    /// with the names their first derivatives take on restriction.
    pub fn rectified_dependents(&self) -> Vec<(String, String)> {
        self.targets
            .iter()
            .filter(|(_, var)| *var != self.new_independent)
            .map(|(_, var)| {
                let to = self
                    .derivative_renames
                    .iter()
                    .find(|(v, _)| v == var)
                    .map(|(_, t)| t.clone())
                    .expect("validated at construction");
                (var.clone(), to)
            })
            .collect()
    }

    /// Generators the chart rectifies onto the new independent direction.
    pub fn autonomy_targets(&self) -> Vec<String> {
        self.targets
            .iter()
            .filter(|(_, var)| *var == self.new_independent)
            .map(|(gen, _)| gen.clone())
            .collect()
    }

    pub fn restricted_independent(&self) -> String {
        self.independent_rename
            .clone()
            .unwrap_or_else(|| self.new_independent.clone())
    }

    /// Jet renames applied on restriction: every jet of a rectified variable
    /// drops one level onto the restricted name, and the new independent
    /// takes its renamed form. Levels run up to `max_level`.
    fn restriction_renames(&self, max_level: usize) -> BTreeMap<String, Expr> {
        let mut map = BTreeMap::new();
        for (var, to) in self.rectified_dependents() {
            for j in 1..=max_level.max(1) {
                map.insert(
                    jet_name(&var, j),
                    Expr::var(jet_name(&to, j - 1)),
                );
            }
        }
        if let Some(t) = &self.independent_rename {
            map.insert(self.new_independent.clone(), Expr::var(t.clone()));
        }
        map
    }
}

/// One verified identity, kept for the step report.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckRecord {
    fn pass(label: impl Into<String>, detail: impl Into<String>) -> CheckRecord {
        CheckRecord {
            label: label.into(),
            passed: true,
            detail: detail.into(),
        }
    }

    fn fail(label: impl Into<String>, detail: impl Into<String>) -> CheckRecord {
        CheckRecord {
            label: label.into(),
            passed: false,
            detail: detail.into(),
        }
    }
}

/// Outcome of `verify_chart`: per-identity verdicts. Round-trip or Jacobian
/// failures abort with an error; a rectification miss only clears `passed`.
#[derive(Debug, Clone)]
pub struct ChartReport {
    pub chart: String,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

const CHART_SAMPLING_ATTEMPTS: usize = 64;

/// Checks that the chart round-trips, has a nonsingular Jacobian at sampled
/// points, and rectifies each coset member: Z_i applied to its target
/// coordinate is 1, to every other new coordinate 0.
pub fn verify_chart(
    chart: &Chart,
    coset: &[VectorField],
    cfg: &EqualityConfig,
) -> Result<ChartReport> {
    let mut checks = Vec::new();
    let forward_map = chart.forward_map();
    let inverse_map = chart.inverse_map();

    for (old, inv) in &chart.inverse {
        let composed = inv.substitute(&forward_map);
        match equals_probabilistic(&composed, &Expr::var(old.clone()), cfg)? {
            v if v.is_equal() => {
                checks.push(CheckRecord::pass(format!("round-trip {old}"), ""));
            }
            _ => {
                return Err(Error::Chart(format!(
                    "chart `{}` round-trip failed: inverse of `{old}` does not compose \
                     to the identity",
                    chart.name
                )))
            }
        }
    }
    for (new, fwd) in &chart.forward {
        let composed = fwd.substitute(&inverse_map);
        match equals_probabilistic(&composed, &Expr::var(new.clone()), cfg)? {
            v if v.is_equal() => {
                checks.push(CheckRecord::pass(format!("round-trip {new}"), ""));
            }
            _ => {
                return Err(Error::Chart(format!(
                    "chart `{}` round-trip failed: forward map of `{new}` does not \
                     compose to the identity",
                    chart.name
                )))
            }
        }
    }

    // Jacobian determinant at sampled points: exact rational evaluation,
    // nonsingular at every point that evaluates cleanly.
    let n = chart.forward.len();
    let mut vars: BTreeSet<String> = BTreeSet::new();
    for row in &chart.jacobian {
        for e in row {
            vars.extend(e.free_vars());
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x6a61636f6269616e);
    let mut nonsingular = 0;
    let mut points_done = 0;
    let mut attempts = 0;
    while points_done < cfg.effective_trials() {
        if attempts > CHART_SAMPLING_ATTEMPTS {
            return Err(Error::ExhaustedSampling {
                attempts,
                context: "sampling points for the chart Jacobian".into(),
            });
        }
        attempts += 1;
        let point = sample_rational_point(&vars, cfg, &mut rng);
        let w = Washout::new(cfg.seed.wrapping_add(0x6a61 * attempts as u64));
        let mut rows: Vec<QVec> = Vec::with_capacity(n);
        let mut clean = true;
        for row in &chart.jacobian {
            let mut vals = Vec::with_capacity(n);
            for e in row {
                match evaluate_rational(e, &point, &w) {
                    Ok(v) => vals.push(v),
                    Err(_) => {
                        clean = false;
                        break;
                    }
                }
            }
            if !clean {
                break;
            }
            rows.push(vals);
        }
        if !clean {
            continue;
        }
        points_done += 1;
        if QMat::from_rows(rows).rank() == n {
            nonsingular += 1;
        }
    }
    if nonsingular == 0 {
        return Err(Error::Chart(format!(
            "chart `{}` has a singular Jacobian at all {points_done} sampled points",
            chart.name
        )));
    }
    checks.push(CheckRecord::pass(
        "jacobian nonsingular",
        format!("{nonsingular} of {points_done} sample points"),
    ));

    // Rectification identities. The coset and the targets must be in
    // bijection by generator name.
    let mut passed = true;
    for z in coset {
        if !chart.targets.iter().any(|(g, _)| *g == z.name) {
            return Err(Error::Chart(format!(
                "chart `{}` has no target for coset generator `{}`",
                chart.name, z.name
            )));
        }
    }
    for (gen, _) in &chart.targets {
        if !coset.iter().any(|z| z.name == *gen) {
            return Err(Error::Chart(format!(
                "chart `{}` targets `{gen}`, which is not in the coset",
                chart.name
            )));
        }
    }
    for z in coset {
        let target = &chart
            .targets
            .iter()
            .find(|(g, _)| *g == z.name)
            .expect("checked above")
            .1;
        for (new, fwd) in &chart.forward {
            let expected = if new == target { Expr::one() } else { Expr::zero() };
            let got = z.apply(fwd);
            let label = format!("rectify {}({new})", z.name);
            let want = if new == target { "= 1" } else { "= 0" };
            if equals_probabilistic(&got, &expected, cfg)?.is_equal() {
                checks.push(CheckRecord::pass(label, want));
            } else {
                passed = false;
                checks.push(CheckRecord::fail(label, format!("expected {want}")));
            }
        }
    }

    Ok(ChartReport {
        chart: chart.name.clone(),
        checks,
        passed,
    })
}

/// Pushforward of a point generator: the new coefficient on each new
/// coordinate is V applied to its forward expression, rewritten through the
/// inverse map.
pub fn transform_field(v: &VectorField, chart: &Chart) -> Result<VectorField> {
    let inverse_map = chart.inverse_map();
    let mut xi = Expr::zero();
    let mut coeffs = BTreeMap::new();
    for (new, fwd) in &chart.forward {
        let c = v.apply(fwd).substitute(&inverse_map);
        for free in c.free_vars() {
            if free != chart.new_independent && !chart.new_dependents.contains(&free) {
                return Err(Error::Chart(format!(
                    "transforming `{}` leaves `{free}` unresolved; the inverse map does \
                     not cover it",
                    v.name
                )));
            }
        }
        if *new == chart.new_independent {
            xi = c;
        } else {
            coeffs.insert(new.clone(), c);
        }
    }
    Ok(VectorField::new(
        v.name.clone(),
        chart.new_independent.clone(),
        xi,
        coeffs,
    ))
}

/// Per-dependent maximum jet level appearing in `e` (level 0 for a bare
/// variable occurrence).
fn jet_levels(e: &Expr, deps: &[(String, usize)]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = BTreeMap::new();
    for v in e.free_vars() {
        if deps.iter().any(|(n, _)| *n == v) {
            out.entry(v).or_insert(0);
        } else if let Some((dep, j)) = split_jet_name(&v, deps) {
            let entry = out.entry(dep.to_string()).or_insert(0);
            if j > *entry {
                *entry = j;
            }
        }
    }
    out
}

struct SolveContext<'a> {
    t: &'a str,
    dummy: &'a [(String, usize)],
    orders: BTreeMap<String, usize>,
    solved: BTreeMap<String, Expr>,
}

impl SolveContext<'_> {
    /// Replaces jets of already-solved variables at or above their assigned
    /// order by on-shell values, to a fixpoint.
    fn pushdown(&self, e: &Expr) -> Result<Expr> {
        let mut cur = e.clone();
        for _ in 0..64 {
            let mut replaced = false;
            for v in cur.free_vars() {
                let Some((dep, j)) = split_jet_name(&v, self.dummy) else {
                    continue;
                };
                let dep = dep.to_string();
                let Some(rhs) = self.solved.get(&dep) else {
                    continue;
                };
                let k = self.orders[&dep];
                if j < k {
                    continue;
                }
                let mut val = rhs.clone();
                for _ in k..j {
                    val = free_total_derivative(self.t, self.dummy, &val)?;
                }
                cur = cur.substitute_var(&v, &val);
                replaced = true;
                break;
            }
            if !replaced {
                return Ok(cur);
            }
        }
        Err(Error::Reduction(
            "on-shell substitution of transformed jets did not terminate".into(),
        ))
    }
}

/// Transforms the system through the chart: old jets are expressed in the
/// new coordinates by the chain rule off the explicit inverse, the resulting
/// equations are assigned new top derivatives and solved into explicit form,
/// and every output equation is verified against its pre-solve residual.
pub fn transform_system(
    sys: &OdeSystem,
    chart: &Chart,
    cfg: &EqualityConfig,
) -> Result<OdeSystem> {
    let t = chart.new_independent.clone();
    let dummy: Vec<(String, usize)> =
        chart.new_dependents.iter().map(|n| (n.clone(), 1)).collect();

    // Degeneracy: the new independent must actually move along solutions.
    let dt = sys.total_derivative(&chart.forward[0].1)?;
    if is_zero_probabilistic(&dt, cfg)?.is_equal() {
        return Err(Error::Chart(format!(
            "degenerate chart `{}`: the total derivative of `{t}` vanishes identically",
            chart.name
        )));
    }
    let h = chart
        .inverse_expr(&sys.independent)
        .expect("validated at construction")
        .clone();
    let dh = free_total_derivative(&t, &dummy, &h)?;
    if is_zero_probabilistic(&dh, cfg)?.is_equal() {
        return Err(Error::Chart(format!(
            "degenerate chart `{}`: the inverse of `{}` is constant along the new fibers",
            chart.name, sys.independent
        )));
    }

    // Old on-shell coordinates as functions on the new jet space.
    let mut old_map: BTreeMap<String, Expr> = BTreeMap::new();
    old_map.insert(sys.independent.clone(), h.clone());
    for (dep, k) in &sys.dependents {
        let mut cur = chart
            .inverse_expr(dep)
            .expect("validated at construction")
            .clone();
        old_map.insert(dep.clone(), cur.clone());
        for j in 1..=*k {
            cur = Expr::div(free_total_derivative(&t, &dummy, &cur)?, dh.clone());
            old_map.insert(jet_name(dep, j), cur.clone());
        }
    }

    struct Residual {
        old_dep: String,
        pre: Expr,
        cleared: Expr,
        levels: BTreeMap<String, usize>,
        max_level: usize,
    }
    let mut residuals: Vec<Residual> = Vec::new();
    for (dep, k) in &sys.dependents {
        let pre = Expr::sub(
            old_map[&jet_name(dep, *k)].clone(),
            sys.rhs[dep].substitute(&old_map),
        );
        let cleared = pre.clear_denominators();
        let levels = jet_levels(&cleared, &dummy);
        let max_level = levels.values().copied().max().unwrap_or(0);
        residuals.push(Residual {
            old_dep: dep.clone(),
            pre,
            cleared,
            levels,
            max_level,
        });
    }

    // Assignment: highest-order equations claim the highest-order new
    // variable they contain; ties follow chart declaration order.
    let mut order_idx: Vec<usize> = (0..residuals.len()).collect();
    order_idx.sort_by(|&a, &b| residuals[b].max_level.cmp(&residuals[a].max_level));
    let mut assigned: Vec<Option<(String, usize)>> = vec![None; residuals.len()];
    let mut used: BTreeSet<String> = BTreeSet::new();
    for &i in &order_idx {
        let mut best: Option<(String, usize)> = None;
        for dep in &chart.new_dependents {
            if used.contains(dep) {
                continue;
            }
            let lvl = residuals[i].levels.get(dep).copied().unwrap_or(0);
            if lvl == 0 {
                continue;
            }
            if best.as_ref().map_or(true, |(_, b)| lvl > *b) {
                best = Some((dep.clone(), lvl));
            }
        }
        let Some((dep, lvl)) = best else {
            return Err(Error::Reduction(format!(
                "transformed equation from `{}` contains no derivative of an \
                 unassigned new variable",
                residuals[i].old_dep
            )));
        };
        used.insert(dep.clone());
        assigned[i] = Some((dep, lvl));
    }
    let orders: BTreeMap<String, usize> = assigned
        .iter()
        .map(|a| a.clone().expect("every equation assigned"))
        .collect();
    let total: usize = orders.values().sum();
    if total != sys.dimension() {
        return Err(Error::Reduction(format!(
            "transformed orders sum to {total} but the system has dimension {}; \
             the chart does not preserve the jet dimension",
            sys.dimension()
        )));
    }

    // Solve ascending by assigned order, same-order equations jointly.
    let mut ctx = SolveContext {
        t: &t,
        dummy: &dummy,
        orders: orders.clone(),
        solved: BTreeMap::new(),
    };
    let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, a) in assigned.iter().enumerate() {
        blocks
            .entry(a.as_ref().expect("assigned").1)
            .or_default()
            .push(i);
    }
    for (&order, idxs) in &blocks {
        let unknowns: Vec<String> = idxs
            .iter()
            .map(|&i| jet_name(&assigned[i].as_ref().expect("assigned").0, order))
            .collect();
        let mut matrix: Vec<Vec<Expr>> = Vec::with_capacity(idxs.len());
        let mut rhs_col: Vec<Expr> = Vec::with_capacity(idxs.len());
        let zero_unknowns: BTreeMap<String, Expr> = unknowns
            .iter()
            .map(|u| (u.clone(), Expr::zero()))
            .collect();
        for &i in idxs {
            let r = ctx.pushdown(&residuals[i].cleared)?;
            for v in r.free_vars() {
                let Some((dep, j)) = split_jet_name(&v, &dummy) else {
                    continue;
                };
                if j >= ctx.orders[dep] && !ctx.solved.contains_key(dep) && !unknowns.contains(&v)
                {
                    return Err(Error::Reduction(format!(
                        "equation assigned to order {order} references `{v}`, which is \
                         only solved later; the chart does not triangularize"
                    )));
                }
            }
            let mut row = Vec::with_capacity(unknowns.len());
            for x in &unknowns {
                let c = r.differentiate(x);
                if unknowns.iter().any(|u| c.contains_var(u)) {
                    return Err(Error::Reduction(format!(
                        "transformed equation from `{}` is not linear in the new top \
                         derivatives",
                        residuals[i].old_dep
                    )));
                }
                row.push(c);
            }
            matrix.push(row);
            rhs_col.push(Expr::neg(r.substitute(&zero_unknowns)));
        }
        let solutions: Vec<Expr> = if idxs.len() == 1 {
            let c = matrix[0][0].clone();
            if c.is_zero() || is_zero_probabilistic(&c, cfg)?.is_equal() {
                return Err(Error::Reduction(format!(
                    "singular highest-derivative solve: the coefficient of `{}` vanishes",
                    unknowns[0]
                )));
            }
            vec![Expr::div(rhs_col[0].clone(), c)]
        } else {
            solve_linear_symbolic(&matrix, &rhs_col, cfg).map_err(|e| {
                Error::Reduction(format!(
                    "singular highest-derivative solve for {}: {e}",
                    unknowns.join(", ")
                ))
            })?
        };
        for (pos, &i) in idxs.iter().enumerate() {
            let dep = assigned[i].as_ref().expect("assigned").0.clone();
            let rhs = ctx.pushdown(&solutions[pos])?;
            for v in rhs.free_vars() {
                let in_range = v == t
                    || chart.new_dependents.contains(&v)
                    || split_jet_name(&v, &dummy)
                        .map_or(false, |(d, j)| j < ctx.orders[d]);
                if !in_range {
                    return Err(Error::Reduction(format!(
                        "solved form for `{dep}` references `{v}` outside the reduced \
                         jet space"
                    )));
                }
            }
            ctx.solved.insert(dep, rhs);
        }
    }

    let new_deps: Vec<(String, usize)> = chart
        .new_dependents
        .iter()
        .map(|n| (n.clone(), orders[n]))
        .collect();
    let out = OdeSystem::new(t.clone(), new_deps, ctx.solved.clone())?;

    // Residual verification against the pre-solve forms.
    for res in &residuals {
        let max_level = jet_levels(&res.pre, &dummy)
            .values()
            .copied()
            .max()
            .unwrap_or(0);
        let onshell = out.on_shell_jets(max_level)?;
        let value = res.pre.substitute(&onshell);
        if !is_zero_probabilistic(&value, cfg)?.is_equal() {
            return Err(Error::Reduction(format!(
                "transformed equation for `{}` failed the residual check against its \
                 pre-solve form",
                res.old_dep
            )));
        }
    }
    Ok(out)
}

/// Per-variable cyclicity verdicts: true iff no right-hand side depends on
/// any of the given variables.
#[derive(Debug, Clone)]
pub struct CyclicReport {
    pub checks: Vec<CheckRecord>,
    pub cyclic: bool,
}

pub fn check_cyclic(sys: &OdeSystem, vars: &[String], cfg: &EqualityConfig) -> Result<CyclicReport> {
    let mut checks = Vec::new();
    let mut cyclic = true;
    for (dep, _) in &sys.dependents {
        let rhs = &sys.rhs[dep];
        for v in vars {
            let d = rhs.differentiate(v);
            let label = format!("cyclic: rhs({dep}) independent of {v}");
            if d.is_zero() || is_zero_probabilistic(&d, cfg)?.is_equal() {
                checks.push(CheckRecord::pass(label, ""));
            } else {
                cyclic = false;
                checks.push(CheckRecord::fail(label, "right-hand side depends on it"));
            }
        }
    }
    Ok(CyclicReport { checks, cyclic })
}

/// One first integral left to quadrature: target = ∫ integrand d(independent)
/// + constant.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub target: String,
    pub integrand: Expr,
    pub independent: String,
    pub constant: String,
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = int({}) d{} + {}",
            self.target, self.integrand, self.independent, self.constant
        )
    }
}

/// An order-zero relation produced when a rectified variable of order one is
/// restricted. When the right-hand side is explicit the relation is
/// eliminated by substitution into the quadrature integrand.
#[derive(Debug, Clone)]
pub struct AlgebraicRelation {
    pub var: String,
    pub rhs: Expr,
    pub eliminated: bool,
}

impl fmt::Display for AlgebraicRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.var, self.rhs)
    }
}

#[derive(Debug, Clone)]
pub struct Restriction {
    pub system: OdeSystem,
    pub quadratures: Vec<Quadrature>,
    pub algebraic: Vec<AlgebraicRelation>,
    pub checks: Vec<CheckRecord>,
}

/// Restricts the transformed system to the hypersurfaces of the rectified
/// variables: each drops one order onto its renamed first derivative, one
/// quadrature per rectified variable is emitted, and order-zero results
/// become algebraic relations.
pub fn restrict(
    sys: &OdeSystem,
    chart: &Chart,
    first_constant: usize,
    cfg: &EqualityConfig,
) -> Result<Restriction> {
    let rectified = chart.rectified_dependents();
    let level_zero: Vec<String> = rectified.iter().map(|(v, _)| v.clone()).collect();
    let cyc = check_cyclic(sys, &level_zero, cfg)?;
    let mut checks = cyc.checks;
    if !cyc.cyclic {
        return Err(Error::Reduction(format!(
            "restriction blocked: right-hand sides depend on {}",
            level_zero.join(", ")
        )));
    }

    let new_independent = chart.restricted_independent();
    let max_order = sys.dependents.iter().map(|(_, k)| *k).max().unwrap_or(0);
    let renames = chart.restriction_renames(max_order);

    let mut new_deps: Vec<(String, usize)> = Vec::new();
    let mut rhs: BTreeMap<String, Expr> = BTreeMap::new();
    let mut algebraic: Vec<AlgebraicRelation> = Vec::new();
    for (dep, k) in &sys.dependents {
        let renamed_rhs = sys.rhs[dep].substitute(&renames);
        match rectified.iter().find(|(v, _)| v == dep) {
            Some((_, to)) if *k >= 2 => {
                new_deps.push((to.clone(), k - 1));
                rhs.insert(to.clone(), renamed_rhs);
            }
            Some((_, to)) => {
                if renamed_rhs.contains_var(to) {
                    return Err(Error::Reduction(format!(
                        "algebraic relation for `{to}` is not explicit in `{to}`"
                    )));
                }
                algebraic.push(AlgebraicRelation {
                    var: to.clone(),
                    rhs: renamed_rhs,
                    eliminated: true,
                });
            }
            None => {
                new_deps.push((dep.clone(), *k));
                rhs.insert(dep.clone(), renamed_rhs);
            }
        }
    }

    // Eliminate explicit order-zero relations from the surviving equations.
    for rel in &algebraic {
        for e in rhs.values_mut() {
            *e = e.substitute_var(&rel.var, &rel.rhs);
        }
    }

    let system = OdeSystem::new(new_independent.clone(), new_deps, rhs)?;
    let expected = sys.dimension() - rectified.len();
    if system.dimension() != expected {
        return Err(Error::Internal(format!(
            "restriction dimension accounting broke: got {}, expected {expected}",
            system.dimension()
        )));
    }
    checks.push(CheckRecord::pass(
        "dimension accounting",
        format!("{} -> {}", sys.dimension(), system.dimension()),
    ));

    let onshell = system.on_shell_coordinates();
    let mut quadratures = Vec::new();
    for (i, (var, to)) in rectified.iter().enumerate() {
        let mut integrand = Expr::var(to.clone());
        for rel in &algebraic {
            integrand = integrand.substitute_var(&rel.var, &rel.rhs);
        }
        let q = Quadrature {
            target: var.clone(),
            integrand,
            independent: new_independent.clone(),
            constant: format!("c{}", first_constant + i),
        };
        for v in q.integrand.free_vars() {
            if !onshell.contains(&v) {
                return Err(Error::Internal(format!(
                    "quadrature for `{var}` references `{v}`, which did not survive \
                     the restriction"
                )));
            }
        }
        checks.push(CheckRecord::pass(
            format!("quadrature hygiene: {var}"),
            "integrand references only surviving variables",
        ));
        quadratures.push(q);
    }

    Ok(Restriction {
        system,
        quadratures,
        algebraic,
        checks,
    })
}

/// Reduces an inherited generator across a restriction: prolong once in the
/// rectified coordinates, keep the components on surviving coordinates, and
/// rename jets down one level. Fails if a component still depends on a
/// dropped rectified coordinate.
pub fn reduce_generator(
    z: &VectorField,
    transformed: &OdeSystem,
    chart: &Chart,
    restricted: &OdeSystem,
    cfg: &EqualityConfig,
) -> Result<VectorField> {
    let prolonged = prolong(z, transformed, 1)?;
    let max_order = transformed
        .dependents
        .iter()
        .map(|(_, k)| *k)
        .max()
        .unwrap_or(1);
    let renames = chart.restriction_renames(max_order);
    let rectified = chart.rectified_dependents();

    let mut components: Vec<(String, Expr)> = Vec::new();
    components.push((
        restricted.independent.clone(),
        prolonged.xi.substitute(&renames),
    ));
    for (dep, _) in &restricted.dependents {
        let source = rectified
            .iter()
            .find(|(_, to)| to == dep)
            .map(|(var, _)| jet_name(var, 1))
            .unwrap_or_else(|| dep.clone());
        components.push((dep.clone(), prolonged.coefficient(&source).substitute(&renames)));
    }

    for (coord, coeff) in &components {
        for (dropped, _) in &rectified {
            if !coeff.contains_var(dropped) {
                continue;
            }
            let d = coeff.differentiate(dropped);
            if !is_zero_probabilistic(&d, cfg)?.is_equal() {
                return Err(Error::Inheritance(format!(
                    "reduced component of `{}` on `{coord}` retains dependence on the \
                     dropped coordinate `{dropped}`",
                    z.name
                )));
            }
        }
        restricted.check_on_shell(coeff).map_err(|_| {
            Error::Reduction(format!(
                "reduced component of `{}` on `{coord}` leaves the reduced jet space",
                z.name
            ))
        })?;
    }

    let mut it = components.into_iter();
    let (_, xi) = it.next().expect("independent first");
    let coeffs: BTreeMap<String, Expr> = it.collect();
    Ok(VectorField::new(
        z.name.clone(),
        restricted.independent.clone(),
        xi,
        coeffs,
    ))
}

/// Brackets of the reduced generators must reproduce the inherited structure
/// constants.
pub fn reduced_brackets_match(
    constants: &StructureConstants,
    survivor_indices: &[usize],
    reduced: &[VectorField],
    cfg: &EqualityConfig,
) -> Result<Vec<CheckRecord>> {
    let mut checks = Vec::new();
    let mut coords: Vec<String> = Vec::new();
    if let Some(f) = reduced.first() {
        coords.push(f.independent.clone());
        let mut deps: BTreeSet<String> = BTreeSet::new();
        for g in reduced {
            deps.extend(g.coeffs.keys().cloned());
        }
        coords.extend(deps);
    }
    for a in 0..reduced.len() {
        for b in (a + 1)..reduced.len() {
            let com = commutator(&reduced[a], &reduced[b])?;
            let cvec = constants.entry(survivor_indices[a], survivor_indices[b]);
            for coord in &coords {
                let mut expected = Expr::zero();
                for (q, &idx) in survivor_indices.iter().enumerate() {
                    let coeff = &cvec[idx];
                    if coeff.is_zero() {
                        continue;
                    }
                    expected = Expr::add(
                        expected,
                        Expr::mul(
                            Expr::num(coeff.clone()),
                            reduced[q].coefficient(coord),
                        ),
                    );
                }
                if !equals_probabilistic(&com.coefficient(coord), &expected, cfg)?.is_equal() {
                    return Err(Error::Inheritance(format!(
                        "[{}, {}] does not reproduce the inherited structure constants \
                         on `{coord}`",
                        reduced[a].name, reduced[b].name
                    )));
                }
            }
            checks.push(CheckRecord::pass(
                format!("brackets: [{}, {}] reproduce C", reduced[a].name, reduced[b].name),
                "",
            ));
        }
    }
    Ok(checks)
}

/// Everything one step records: consumed coset, check verdicts in pipeline
/// order, the transformed and reduced equations, and the emitted
/// quadratures. Rendering is deterministic.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub chart: String,
    pub coset: Vec<String>,
    pub survivors: Vec<String>,
    pub autonomy: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub transformed_equations: Vec<String>,
    pub reduced_equations: Vec<String>,
    pub quadratures: Vec<String>,
    pub algebraic: Vec<String>,
    pub dimension_before: usize,
    pub dimension_after: usize,
    pub ok: bool,
}

impl StepReport {
    fn new(step: usize, chart: String, dimension: usize) -> StepReport {
        StepReport {
            step,
            chart,
            coset: Vec::new(),
            survivors: Vec::new(),
            autonomy: Vec::new(),
            checks: Vec::new(),
            transformed_equations: Vec::new(),
            reduced_equations: Vec::new(),
            quadratures: Vec::new(),
            algebraic: Vec::new(),
            dimension_before: dimension,
            dimension_after: dimension,
            ok: false,
        }
    }

    pub fn render(&self) -> String {
        let mut out = Vec::new();
        out.push(format!("step {} chart {}", self.step, self.chart));
        out.push(format!("coset {}", self.coset.join(", ")));
        out.push(format!("survivors {}", self.survivors.join(", ")));
        if !self.autonomy.is_empty() {
            out.push(format!("autonomy {}", self.autonomy.join(", ")));
        }
        out.push(format!(
            "dimension {} -> {}",
            self.dimension_before, self.dimension_after
        ));
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            if c.detail.is_empty() {
                out.push(format!("check {}: {verdict}", c.label));
            } else {
                out.push(format!("check {}: {verdict} ({})", c.label, c.detail));
            }
        }
        for e in &self.transformed_equations {
            out.push(format!("transformed {e}"));
        }
        for e in &self.reduced_equations {
            out.push(format!("reduced {e}"));
        }
        for q in &self.quadratures {
            out.push(format!("quadrature {q}"));
        }
        for a in &self.algebraic {
            out.push(format!("algebraic {a}"));
        }
        out.push(format!("result {}", if self.ok { "ok" } else { "aborted" }));
        out.join("\n")
    }
}

fn render_equations(sys: &OdeSystem) -> Vec<String> {
    sys.dependents
        .iter()
        .map(|(dep, k)| format!("{} = {}", jet_name(dep, *k), sys.rhs[dep]))
        .collect()
}

/// The whole state of a reduction session: the current system and surviving
/// generators, the algebra they satisfy, what has been consumed, what is
/// still planned, and everything emitted so far.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub step: usize,
    pub system: OdeSystem,
    pub generators: Vec<VectorField>,
    pub constants: StructureConstants,
    pub original_names: Vec<String>,
    pub original_constants: StructureConstants,
    /// Remaining cosets, next first, as generator name lists.
    pub pending: Vec<Vec<String>>,
    pub consumed: Vec<Vec<String>>,
    /// Consumed generators that rectified the independent direction and so
    /// dropped no dimension.
    pub autonomy: Vec<String>,
    pub quadratures: Vec<Quadrature>,
    pub algebraic: Vec<AlgebraicRelation>,
    pub boxes: BTreeMap<String, (Rational, Rational)>,
    pub original_dimension: usize,
    pub next_constant: usize,
    pub reports: Vec<String>,
    pub notes: Vec<String>,
}

impl SessionState {
    /// Opens a session: verifies every generator is a symmetry, recovers the
    /// structure constants, and lays out the coset chain. Cosets that are
    /// not aligned with named generators trigger a basis change to fresh
    /// names Y1..Yr.
    pub fn new(
        system: OdeSystem,
        generators: Vec<VectorField>,
        boxes: BTreeMap<String, (Rational, Rational)>,
        cfg: &EqualityConfig,
    ) -> Result<SessionState> {
        for g in &generators {
            let check = check_symmetry(g, &system, cfg)?;
            if !check.passed {
                let failing = check
                    .components
                    .iter()
                    .find(|(_, v)| !v.is_equal())
                    .map(|(c, _)| c.clone())
                    .unwrap_or_default();
                return Err(Error::Reduction(format!(
                    "generator `{}` is not a symmetry of the system (component `{failing}`)",
                    g.name
                )));
            }
        }
        let constants = structure_constants(&generators, cfg)?;
        let mut notes = Vec::new();
        let (generators, constants) = match align_cosets(&constants, &generators)? {
            None => (generators, constants),
            Some((gens, cons)) => {
                notes.push(
                    "coset chain was not aligned with named generators; basis changed to Y1.."
                        .to_string(),
                );
                (gens, cons)
            }
        };
        let plan = reduction_chain(&constants)?;
        let dimension = system.dimension();
        plan.predicted_residual(dimension)?;
        let mut pending = Vec::new();
        for step in &plan.steps {
            let mut names = Vec::new();
            for v in &step.coset {
                let idx = unit_index(v).ok_or_else(|| {
                    Error::Internal("aligned plan still contains non-unit cosets".into())
                })?;
                names.push(constants.names[idx].clone());
            }
            if !step.abelian_mod_deeper {
                notes.push(format!(
                    "coset {} is Abelian only modulo the deeper derived algebra",
                    names.join(", ")
                ));
            }
            pending.push(names);
        }
        let original_names = constants.names.clone();
        Ok(SessionState {
            step: 0,
            system,
            generators,
            original_names,
            original_constants: constants.clone(),
            constants,
            pending,
            consumed: Vec::new(),
            autonomy: Vec::new(),
            quadratures: Vec::new(),
            algebraic: Vec::new(),
            boxes,
            original_dimension: dimension,
            next_constant: 1,
            reports: Vec::new(),
            notes,
        })
    }

    /// Residual dimension expected once the remaining plan is consumed,
    /// counting generators already flagged as autonomy-only.
    pub fn predicted_residual(&self) -> usize {
        let consumed_drop: usize = self
            .consumed
            .iter()
            .flatten()
            .filter(|n| !self.autonomy.contains(n))
            .count();
        let pending: usize = self.pending.iter().map(|c| c.len()).sum();
        self.original_dimension
            .saturating_sub(consumed_drop + pending)
    }
}

fn unit_index(v: &[Rational]) -> Option<usize> {
    let mut idx = None;
    for (i, x) in v.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        if !x.is_one() || idx.is_some() {
            return None;
        }
        idx = Some(i);
    }
    idx
}

/// When the planned cosets are unit vectors this is a no-op. Otherwise the
/// basis is changed so each coset member becomes a named generator.
fn align_cosets(
    constants: &StructureConstants,
    generators: &[VectorField],
) -> Result<Option<(Vec<VectorField>, StructureConstants)>> {
    let plan = reduction_chain(constants)?;
    let all_units = plan
        .steps
        .iter()
        .all(|s| s.coset.iter().all(|v| unit_index(v).is_some()));
    if all_units {
        return Ok(None);
    }
    let rows: Vec<QVec> = plan
        .steps
        .iter()
        .flat_map(|s| s.coset.iter().cloned())
        .collect();
    let p = QMat::from_rows(rows);
    let changed = change_basis(constants, &p, None)?;
    let new_plan = reduction_chain(&changed)?;
    if !new_plan
        .steps
        .iter()
        .all(|s| s.coset.iter().all(|v| unit_index(v).is_some()))
    {
        return Err(Error::Reduction(
            "could not align the coset chain with named generators; supply a \
             basis whose derived series is coordinate-aligned"
            .into(),
        ));
    }
    let mut fields = Vec::new();
    for (i, name) in changed.names.iter().enumerate() {
        let mut xi = Expr::zero();
        let mut coeffs: BTreeMap<String, Expr> = BTreeMap::new();
        for (j, g) in generators.iter().enumerate() {
            let c = p.get(i, j).clone();
            if c.is_zero() {
                continue;
            }
            let w = Expr::num(c);
            xi = Expr::add(xi, Expr::mul(w.clone(), g.xi.clone()));
            for (var, e) in &g.coeffs {
                let cur = coeffs.entry(var.clone()).or_insert_with(Expr::zero);
                *cur = Expr::add(cur.clone(), Expr::mul(w.clone(), e.clone()));
            }
        }
        fields.push(VectorField::new(
            name.clone(),
            generators[0].independent.clone(),
            xi,
            coeffs,
        ));
    }
    Ok(Some((fields, changed)))
}

/// Executes one reduction step. The report is produced whether or not the
/// step succeeds; on failure the returned error describes the first check
/// that broke and the state is left untouched.
pub fn run_step(
    state: &SessionState,
    spec: &ChartSpec,
    cfg: &EqualityConfig,
) -> (StepReport, Result<SessionState>) {
    let mut report = StepReport::new(
        state.step + 1,
        spec.name.clone(),
        state.system.dimension(),
    );
    let out = run_step_inner(state, spec, cfg, &mut report);
    match &out {
        Ok(_) => report.ok = true,
        Err(e) => {
            report.ok = false;
            report
                .checks
                .push(CheckRecord::fail("step aborted", e.to_string()));
        }
    }
    (report, out)
}

fn run_step_inner(
    state: &SessionState,
    spec: &ChartSpec,
    cfg: &EqualityConfig,
    report: &mut StepReport,
) -> Result<SessionState> {
    let coset_names = state
        .pending
        .first()
        .ok_or_else(|| Error::Reduction("the plan has no remaining cosets".into()))?
        .clone();
    report.coset = coset_names.clone();

    let target_gens: BTreeSet<&str> = spec.targets.iter().map(|(g, _)| g.as_str()).collect();
    let coset_set: BTreeSet<&str> = coset_names.iter().map(|s| s.as_str()).collect();
    if target_gens != coset_set {
        return Err(Error::Reduction(format!(
            "chart `{}` targets {{{}}} but the next coset is {{{}}}",
            spec.name,
            target_gens.into_iter().collect::<Vec<_>>().join(", "),
            coset_names.join(", ")
        )));
    }
    let chart = Chart::new(spec, &state.system)?;

    let index_of = |name: &str| -> Result<usize> {
        state
            .generators
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::Reduction(format!("no current generator named `{name}`")))
    };
    let coset_idx: Vec<usize> = coset_names
        .iter()
        .map(|n| index_of(n))
        .collect::<Result<_>>()?;
    let coset_fields: Vec<VectorField> = coset_idx
        .iter()
        .map(|&i| state.generators[i].clone())
        .collect();
    let survivor_idx: Vec<usize> = (0..state.generators.len())
        .filter(|i| !coset_idx.contains(i))
        .collect();
    report.survivors = survivor_idx
        .iter()
        .map(|&i| state.generators[i].name.clone())
        .collect();
    report.autonomy = chart.autonomy_targets();

    // Coset must be Abelian, exactly.
    for (a, &i) in coset_idx.iter().enumerate() {
        for &j in &coset_idx[a + 1..] {
            if state.constants.entry(i, j).iter().any(|x| !x.is_zero()) {
                return Err(Error::Reduction(format!(
                    "coset is not Abelian: [{}, {}] is nonzero",
                    state.generators[i].name, state.generators[j].name
                )));
            }
        }
    }
    report
        .checks
        .push(CheckRecord::pass("coset abelian", "exact structure constants"));

    // Transitivity on the coordinates being replaced.
    let mut subspace: Vec<String> = state
        .system
        .dependents
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    if !report.autonomy.is_empty() {
        subspace.push(state.system.independent.clone());
    }
    if !transitivity_check(&coset_fields, &subspace, cfg)? {
        return Err(Error::Reduction(format!(
            "coset does not act transitively on {}",
            subspace.join(", ")
        )));
    }
    report.checks.push(CheckRecord::pass(
        format!("transitivity on {}", subspace.join(", ")),
        "",
    ));

    // Inheritance for every survivor.
    for &s in &survivor_idx {
        let ok = check_inheritance(&state.constants, &coset_idx, s)?;
        if !ok {
            return Err(Error::Inheritance(format!(
                "generator `{}` does not satisfy the inheritance condition for this coset",
                state.generators[s].name
            )));
        }
        report.checks.push(CheckRecord::pass(
            format!("inheritance: {}", state.generators[s].name),
            "",
        ));
    }

    let chart_report = verify_chart(&chart, &coset_fields, cfg)?;
    report.checks.extend(chart_report.checks.clone());
    if !chart_report.passed {
        return Err(Error::Chart(format!(
            "chart `{}` does not rectify the coset",
            chart.name
        )));
    }

    let transformed = transform_system(&state.system, &chart, cfg)?;
    report.transformed_equations = render_equations(&transformed);
    report.checks.push(CheckRecord::pass(
        "transform: residuals verified",
        format!("{} equations solved", transformed.dependents.len()),
    ));

    let transformed_survivors: Vec<VectorField> = survivor_idx
        .iter()
        .map(|&i| transform_field(&state.generators[i], &chart))
        .collect::<Result<_>>()?;

    let mut cyclic_vars: Vec<String> = chart
        .rectified_dependents()
        .into_iter()
        .map(|(v, _)| v)
        .collect();
    if !report.autonomy.is_empty() {
        cyclic_vars.push(chart.new_independent.clone());
    }
    let cyc = check_cyclic(&transformed, &cyclic_vars, cfg)?;
    report.checks.extend(cyc.checks.clone());
    if !cyc.cyclic {
        return Err(Error::Reduction(format!(
            "transformed system is not cyclic in {}",
            cyclic_vars.join(", ")
        )));
    }

    let restriction = restrict(&transformed, &chart, state.next_constant, cfg)?;
    report.checks.extend(restriction.checks.clone());
    report.reduced_equations = render_equations(&restriction.system);
    report.quadratures = restriction.quadratures.iter().map(|q| q.to_string()).collect();
    report.algebraic = restriction.algebraic.iter().map(|a| a.to_string()).collect();
    report.dimension_after = restriction.system.dimension();

    let mut reduced: Vec<VectorField> = Vec::new();
    for tf in &transformed_survivors {
        let r = reduce_generator(tf, &transformed, &chart, &restriction.system, cfg)?;
        report.checks.push(CheckRecord::pass(
            format!("reduce: {} free of dropped coordinates", r.name),
            "",
        ));
        reduced.push(r);
    }

    report.checks.extend(reduced_brackets_match(
        &state.constants,
        &survivor_idx,
        &reduced,
        cfg,
    )?);

    for r in &reduced {
        let check = check_symmetry(r, &restriction.system, cfg)?;
        if !check.passed {
            let failing = check
                .components
                .iter()
                .find(|(_, v)| !v.is_equal())
                .map(|(c, _)| c.clone())
                .unwrap_or_default();
            return Err(Error::Reduction(format!(
                "reduced generator `{}` is not a symmetry of the reduced system \
                 (component `{failing}`)",
                r.name
            )));
        }
        report.checks.push(CheckRecord::pass(
            format!("symmetry re-check: {}", r.name),
            format!("lambda = {}", check.lambda),
        ));
    }

    // Inherited structure constants: the original tensor restricted to the
    // surviving indices.
    let survivor_names: Vec<String> = survivor_idx
        .iter()
        .map(|&i| state.constants.names[i].clone())
        .collect();
    let mut entries = Vec::new();
    for a in 0..survivor_idx.len() {
        for b in (a + 1)..survivor_idx.len() {
            let full = state.constants.entry(survivor_idx[a], survivor_idx[b]);
            let v: QVec = survivor_idx.iter().map(|&l| full[l].clone()).collect();
            entries.push((a, b, v));
        }
    }
    let sub_constants = StructureConstants::from_upper_brackets(survivor_names, &entries)?;

    let onshell: BTreeSet<String> = restriction
        .system
        .on_shell_coordinates()
        .into_iter()
        .collect();
    let boxes: BTreeMap<String, (Rational, Rational)> = state
        .boxes
        .iter()
        .filter(|(k, _)| onshell.contains(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    let mut next = SessionState {
        step: state.step + 1,
        system: restriction.system,
        generators: reduced,
        constants: sub_constants,
        original_names: state.original_names.clone(),
        original_constants: state.original_constants.clone(),
        pending: state.pending[1..].to_vec(),
        consumed: state.consumed.clone(),
        autonomy: state.autonomy.clone(),
        quadratures: state.quadratures.clone(),
        algebraic: state.algebraic.clone(),
        boxes,
        original_dimension: state.original_dimension,
        next_constant: state.next_constant + restriction.quadratures.len(),
        reports: state.reports.clone(),
        notes: state.notes.clone(),
    };
    next.consumed.push(coset_names);
    next.autonomy.extend(report.autonomy.clone());
    next.quadratures.extend(restriction.quadratures);
    next.algebraic.extend(restriction.algebraic);
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub state: SessionState,
    pub final_report: Vec<String>,
}

/// Folds `run_step` over one chart per remaining coset and closes with the
/// final accounting: residual dimension, quadratures, and the solvable-span
/// certificate for the consumed generators.
pub fn run_chain(
    state: &SessionState,
    specs: &[ChartSpec],
    cfg: &EqualityConfig,
) -> (Vec<StepReport>, Result<ChainOutcome>) {
    let mut reports = Vec::new();
    if specs.len() != state.pending.len() {
        return (
            reports,
            Err(Error::Reduction(format!(
                "chain needs {} charts (one per remaining coset), got {}",
                state.pending.len(),
                specs.len()
            ))),
        );
    }
    let mut current = state.clone();
    for (i, spec) in specs.iter().enumerate() {
        let (report, next) = run_step(&current, spec, cfg);
        let rendered = report.render();
        reports.push(report);
        match next {
            Ok(mut s) => {
                s.reports.push(rendered);
                current = s;
            }
            Err(e) => {
                let tagged = match e {
                    Error::Internal(m) => {
                        Error::Internal(format!("step {} ({}): {m}", i + 1, spec.name))
                    }
                    other => Error::Reduction(format!(
                        "step {} ({}): {other}",
                        i + 1,
                        spec.name
                    )),
                };
                return (reports, Err(tagged));
            }
        }
    }
    let closing = match final_report(&current) {
        Ok(r) => r,
        Err(e) => return (reports, Err(e)),
    };
    (
        reports,
        Ok(ChainOutcome {
            state: current,
            final_report: closing,
        }),
    )
}

/// Chain closing report: dimension accounting and the certificate that the
/// consumed generators span a solvable subalgebra of the original symmetry
/// algebra.
pub fn final_report(state: &SessionState) -> Result<Vec<String>> {
    let mut out = Vec::new();
    out.push(format!("steps completed {}", state.step));
    let consumed: Vec<String> = state.consumed.iter().flatten().cloned().collect();
    let drop = consumed
        .iter()
        .filter(|n| !state.autonomy.contains(n))
        .count();
    let predicted = state.original_dimension - drop;
    let actual = state.system.dimension();
    if state.pending.is_empty() && actual != predicted {
        return Err(Error::Internal(format!(
            "dimension accounting broke: residual {actual}, predicted {predicted}"
        )));
    }
    out.push(format!(
        "residual dimension {actual} (predicted {predicted} from {} minus {drop})",
        state.original_dimension
    ));
    if !state.pending.is_empty() {
        out.push(format!(
            "chain incomplete: {} cosets remain",
            state.pending.len()
        ));
    }
    for q in &state.quadratures {
        out.push(format!("quadrature {q}"));
    }
    for a in &state.algebraic {
        let tag = if a.eliminated { " (eliminated)" } else { "" };
        out.push(format!("algebraic {a}{tag}"));
    }
    if consumed.is_empty() {
        out.push("certificate: no generators consumed".into());
    } else {
        let r = state.original_constants.dimension();
        let mut basis: Vec<QVec> = Vec::new();
        for name in &consumed {
            let idx = state
                .original_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    Error::Internal(format!("consumed generator `{name}` has no original index"))
                })?;
            let mut e = vec![Rational::zero(); r];
            e[idx] = Rational::one();
            basis.push(e);
        }
        if !closed_subspace(&state.original_constants, &basis) {
            return Err(Error::Internal(
                "consumed generators do not span a subalgebra; the certificate fails".into(),
            ));
        }
        let level = subspace_solvable(&state.original_constants, &basis).ok_or_else(|| {
            Error::Internal(
                "consumed generators span a non-solvable subalgebra; the certificate fails"
                    .into(),
            )
        })?;
        out.push(format!(
            "certificate: consumed generators {{{}}} span a solvable subalgebra \
             (derived length {level})",
            consumed.join(", ")
        ));
    }
    for n in &state.notes {
        out.push(format!("note {n}"));
    }
    Ok(out)
}
