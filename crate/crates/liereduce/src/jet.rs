//! Jet-space machinery: the on-shell total derivative operator, prolongation
//! of point generators, commutators of vector fields, and the symmetry
//! condition itself.
//!
//! A system in solved form defines the operator
//!
//! ```text
//! A = d/dx + sum_nu [ nu_1 d/dnu + ... + nu_{k-1} d/dnu_{k-2} + omega^nu d/dnu_{k-1} ]
//! ```
//!
//! on the coordinates (x, nu_j for j < k_nu). A point generator Z is a
//! symmetry of the system exactly when its prolongation satisfies
//! [Z, A] = lambda A with lambda = -A(xi), which is what `check_symmetry`
//! tests component by component.

use crate::error::{Error, Result};
use crate::expr::{
    equals_probabilistic, EqualityConfig, Expr, Verdict,
};
use crate::parser::{jet_name, split_jet_name, GeneratorSpec, ProblemDescription};
use std::collections::BTreeMap;

/// An ODE system in solved form. Every dependent has order at least one;
/// algebraic (order-zero) definitions produced by reductions live outside
/// the system.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    pub independent: String,
    pub dependents: Vec<(String, usize)>,
    /// Right-hand side omega per dependent: the solved expression for the
    /// top-order derivative, a function on the on-shell jet space.
    pub rhs: BTreeMap<String, Expr>,
}

impl OdeSystem {
    pub fn new(
        independent: impl Into<String>,
        dependents: Vec<(String, usize)>,
        rhs: BTreeMap<String, Expr>,
    ) -> Result<OdeSystem> {
        let sys = OdeSystem {
            independent: independent.into(),
            dependents,
            rhs,
        };
        for (dep, k) in &sys.dependents {
            if *k == 0 {
                return Err(Error::Internal(format!(
                    "dependent `{dep}` has order zero; algebraic variables are not system coordinates"
                )));
            }
            if !sys.rhs.contains_key(dep) {
                return Err(Error::Internal(format!("dependent `{dep}` has no equation")));
            }
        }
        if sys.rhs.len() != sys.dependents.len() {
            return Err(Error::Internal(
                "equation count does not match dependent count".into(),
            ));
        }
        Ok(sys)
    }

    pub fn from_problem(p: &ProblemDescription) -> Result<OdeSystem> {
        let independent = p
            .independent
            .clone()
            .ok_or_else(|| Error::Internal("problem has no independent variable".into()))?;
        OdeSystem::new(independent, p.dependents.clone(), p.equations.clone())
    }

    pub fn order_of(&self, dep: &str) -> Option<usize> {
        self.dependents
            .iter()
            .find(|(n, _)| n == dep)
            .map(|(_, k)| *k)
    }

    /// Total system dimension: the sum of the orders. This is the count of
    /// first integrals a complete integration must produce.
    pub fn dimension(&self) -> usize {
        self.dependents.iter().map(|(_, k)| *k).sum()
    }

    /// Coordinates of the on-shell jet space, independent first, then each
    /// dependent's jets from level 0 up to one below its order.
    pub fn on_shell_coordinates(&self) -> Vec<String> {
        let mut out = vec![self.independent.clone()];
        for (dep, k) in &self.dependents {
            for j in 0..*k {
                out.push(jet_name(dep, j));
            }
        }
        out
    }

    pub(crate) fn check_on_shell(&self, f: &Expr) -> Result<()> {
        let coords = self.on_shell_coordinates();
        for v in f.free_vars() {
            if !coords.contains(&v) {
                if let Some((dep, j)) = split_jet_name(&v, &self.dependents) {
                    let max = self.order_of(dep).unwrap_or(0);
                    return Err(Error::OrderOutOfRange {
                        order: j,
                        max: max.saturating_sub(1),
                    });
                }
                return Err(Error::MismatchedUniverse(format!(
                    "`{v}` is not a coordinate of this system's jet space"
                )));
            }
        }
        Ok(())
    }

    /// One application of the on-shell operator A. The input must live on
    /// the on-shell jet space; the output does too, because top derivatives
    /// are replaced by the right-hand sides.
    pub fn total_derivative(&self, f: &Expr) -> Result<Expr> {
        self.check_on_shell(f)?;
        let mut acc = f.differentiate(&self.independent);
        for v in f.free_vars() {
            if v == self.independent {
                continue;
            }
            let (dep, j) = match split_jet_name(&v, &self.dependents) {
                Some(x) => x,
                None => {
                    let dep = self
                        .dependents
                        .iter()
                        .find(|(n, _)| *n == v)
                        .map(|(n, _)| n.as_str())
                        .expect("checked on-shell");
                    (dep, 0)
                }
            };
            let k = self.order_of(dep).expect("dependent exists");
            let velocity = if j + 1 < k {
                Expr::var(jet_name(dep, j + 1))
            } else {
                self.rhs[dep].clone()
            };
            acc = Expr::add(acc, Expr::mul(velocity, f.differentiate(&v)));
        }
        Ok(acc)
    }

    /// Map from out-of-range jet names to their on-shell values, covering
    /// levels up to `max_level` for every dependent: nu_k = omega^nu and
    /// each further level is A of the previous one.
    pub(crate) fn on_shell_jets(&self, max_level: usize) -> Result<BTreeMap<String, Expr>> {
        let mut map = BTreeMap::new();
        for (dep, k) in &self.dependents {
            let mut current = self.rhs[dep].clone();
            let mut level = *k;
            loop {
                if level > max_level {
                    break;
                }
                map.insert(jet_name(dep, level), current.clone());
                current = self.total_derivative(&current)?;
                level += 1;
            }
        }
        Ok(map)
    }
}

/// A vector field on the jet space: a coefficient on the independent
/// direction plus named coefficients on dependent-variable jets. Point
/// generators carry only level-zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub name: String,
    pub independent: String,
    pub xi: Expr,
    pub coeffs: BTreeMap<String, Expr>,
}

impl VectorField {
    pub fn new(
        name: impl Into<String>,
        independent: impl Into<String>,
        xi: Expr,
        coeffs: BTreeMap<String, Expr>,
    ) -> VectorField {
        let mut coeffs = coeffs;
        coeffs.retain(|_, e| !e.is_zero());
        VectorField {
            name: name.into(),
            independent: independent.into(),
            xi,
            coeffs,
        }
    }

    /// Builds a point field from its parsed form, validating coordinates.
    pub fn from_spec(spec: &GeneratorSpec, sys: &OdeSystem) -> Result<VectorField> {
        let mut xi = Expr::zero();
        let mut coeffs = BTreeMap::new();
        for (var, coeff) in &spec.coefficients {
            if *var == sys.independent {
                xi = coeff.clone();
            } else if sys.order_of(var).is_some() {
                coeffs.insert(var.clone(), coeff.clone());
            } else {
                return Err(Error::MismatchedUniverse(format!(
                    "generator `{}` acts on `{var}`, which is not a coordinate of the system",
                    spec.name
                )));
            }
        }
        Ok(VectorField::new(
            spec.name.clone(),
            sys.independent.clone(),
            xi,
            coeffs,
        ))
    }

    pub fn coefficient(&self, var: &str) -> Expr {
        if var == self.independent {
            self.xi.clone()
        } else {
            self.coeffs.get(var).cloned().unwrap_or_else(Expr::zero)
        }
    }

    /// Applies the field as a derivation: xi d f/dx + sum eta_c d f/dc.
    pub fn apply(&self, f: &Expr) -> Expr {
        let mut acc = if self.xi.is_zero() {
            Expr::zero()
        } else {
            Expr::mul(self.xi.clone(), f.differentiate(&self.independent))
        };
        for v in f.free_vars() {
            if v == self.independent {
                continue;
            }
            if let Some(c) = self.coeffs.get(&v) {
                acc = Expr::add(acc, Expr::mul(c.clone(), f.differentiate(&v)));
            }
        }
        acc
    }

    /// True when every coefficient is a function of the base coordinates
    /// only and no jet coordinate carries a coefficient.
    pub fn is_point_field(&self, sys: &OdeSystem) -> bool {
        let base: Vec<&str> = std::iter::once(self.independent.as_str())
            .chain(self.dependents_of(sys))
            .collect();
        let point_fn = |e: &Expr| e.free_vars().iter().all(|v| base.contains(&v.as_str()));
        point_fn(&self.xi)
            && self.coeffs.iter().all(|(var, coeff)| {
                sys.order_of(var).is_some() && point_fn(coeff)
            })
    }

    fn dependents_of<'a>(&self, sys: &'a OdeSystem) -> impl Iterator<Item = &'a str> {
        sys.dependents.iter().map(|(n, _)| n.as_str())
    }

    /// All variables the coefficients reference.
    pub fn referenced_vars(&self) -> std::collections::BTreeSet<String> {
        let mut vars = self.xi.free_vars();
        for c in self.coeffs.values() {
            vars.extend(c.free_vars());
        }
        vars
    }
}

impl std::fmt::Display for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if !self.xi.is_zero() {
            parts.push(format_component(&self.xi, &self.independent));
        }
        for (var, coeff) in &self.coeffs {
            parts.push(format_component(coeff, var));
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        write!(f, "{}", parts.join(" + "))
    }
}

fn format_component(coeff: &Expr, var: &str) -> String {
    if coeff.is_one() {
        format!("d/d{var}")
    } else {
        format!("({coeff})*d/d{var}")
    }
}

/// Lie bracket [V, W]: coefficients V(W_c) - W(V_c) on every coordinate
/// either field touches.
pub fn commutator(v: &VectorField, w: &VectorField) -> Result<VectorField> {
    if v.independent != w.independent {
        return Err(Error::MismatchedUniverse(format!(
            "`{}` uses independent `{}` but `{}` uses `{}`",
            v.name, v.independent, w.name, w.independent
        )));
    }
    let xi = Expr::sub(v.apply(&w.xi), w.apply(&v.xi));
    let mut coeffs = BTreeMap::new();
    let mut vars: Vec<&String> = v.coeffs.keys().collect();
    for k in w.coeffs.keys() {
        if !vars.contains(&k) {
            vars.push(k);
        }
    }
    for var in vars {
        let wc = w.coefficient(var);
        let vc = v.coefficient(var);
        coeffs.insert(var.clone(), Expr::sub(v.apply(&wc), w.apply(&vc)));
    }
    Ok(VectorField::new(
        format!("[{},{}]", v.name, w.name),
        v.independent.clone(),
        xi,
        coeffs,
    ))
}

/// Free prolongation of a point generator to the given jet order:
/// eta^(j) = D(eta^(j-1)) - nu_j D(xi) with D the free total derivative.
/// No substitution of the system right-hand sides happens here.
pub fn prolong(field: &VectorField, sys: &OdeSystem, order: usize) -> Result<VectorField> {
    let max = sys.dependents.iter().map(|(_, k)| *k).max().unwrap_or(0);
    if order > max {
        return Err(Error::OrderOutOfRange { order, max });
    }
    if !field.is_point_field(sys) {
        return Err(Error::MismatchedUniverse(format!(
            "`{}` is not a point generator on this system's base coordinates",
            field.name
        )));
    }
    let mut coeffs = field.coeffs.clone();
    for (dep, _) in &sys.dependents {
        coeffs.entry(dep.clone()).or_insert_with(Expr::zero);
    }
    for (dep, _) in &sys.dependents {
        for j in 1..=order {
            let prev = coeffs[&jet_name(dep, j - 1)].clone();
            let d_prev = free_total_derivative(&sys.independent, &sys.dependents, &prev)?;
            let d_xi = free_total_derivative(&sys.independent, &sys.dependents, &field.xi)?;
            let eta = Expr::sub(d_prev, Expr::mul(Expr::var(jet_name(dep, j)), d_xi));
            coeffs.insert(jet_name(dep, j), eta);
        }
    }
    Ok(VectorField::new(
        field.name.clone(),
        field.independent.clone(),
        field.xi.clone(),
        coeffs,
    ))
}

/// Free total derivative on the unbounded jet space: d/dx plus each jet
/// variable advancing to its successor. Every non-independent variable in
/// `f` must be a jet of a listed dependent.
pub fn free_total_derivative(
    independent: &str,
    dependents: &[(String, usize)],
    f: &Expr,
) -> Result<Expr> {
    let mut acc = f.differentiate(independent);
    for v in f.free_vars() {
        if v == independent {
            continue;
        }
        let successor = if dependents.iter().any(|(n, _)| *n == v) {
            jet_name(&v, 1)
        } else if let Some((dep, j)) = split_jet_name(&v, dependents) {
            jet_name(dep, j + 1)
        } else {
            return Err(Error::MismatchedUniverse(format!(
                "`{v}` is neither the independent variable nor a jet of a dependent"
            )));
        };
        acc = Expr::add(acc, Expr::mul(Expr::var(successor), f.differentiate(&v)));
    }
    Ok(acc)
}

/// Prolongs a point generator so that each dependent carries coefficients up
/// to one below its own order, with any out-of-range jets introduced by the
/// free recursion replaced by their on-shell values.
pub fn prolong_on_shell(field: &VectorField, sys: &OdeSystem) -> Result<VectorField> {
    let max_needed = sys
        .dependents
        .iter()
        .map(|(_, k)| k.saturating_sub(1))
        .max()
        .unwrap_or(0);
    let full = prolong(field, sys, max_needed)?;
    let onshell = sys.on_shell_jets(max_needed)?;
    let mut coeffs = BTreeMap::new();
    for (dep, k) in &sys.dependents {
        for j in 0..*k {
            let c = full.coefficient(&jet_name(dep, j)).substitute(&onshell);
            coeffs.insert(jet_name(dep, j), c);
        }
    }
    Ok(VectorField::new(
        field.name.clone(),
        field.independent.clone(),
        field.xi.clone(),
        coeffs,
    ))
}

/// Outcome of the symmetry condition for one generator.
#[derive(Debug, Clone)]
pub struct SymmetryCheck {
    pub generator: String,
    /// The proportionality factor lambda = -A(xi).
    pub lambda: Expr,
    /// Per-coordinate verdicts for [Z, A] = lambda A.
    pub components: Vec<(String, Verdict)>,
    pub passed: bool,
}

/// Tests whether `field` is a point symmetry of `sys` by checking
/// [Z^(pr), A] = lambda A coordinate by coordinate.
pub fn check_symmetry(
    field: &VectorField,
    sys: &OdeSystem,
    cfg: &EqualityConfig,
) -> Result<SymmetryCheck> {
    let z = prolong_on_shell(field, sys)?;
    let lambda = Expr::neg(sys.total_derivative(&field.xi)?);
    let mut components = Vec::new();
    let mut passed = true;

    // Coefficient of A on each coordinate.
    let mut a_coeffs: Vec<(String, Expr)> = vec![(sys.independent.clone(), Expr::one())];
    for (dep, k) in &sys.dependents {
        for j in 0..*k {
            let velocity = if j + 1 < *k {
                Expr::var(jet_name(dep, j + 1))
            } else {
                sys.rhs[dep].clone()
            };
            a_coeffs.push((jet_name(dep, j), velocity));
        }
    }

    for (coord, a_c) in &a_coeffs {
        let z_c = z.coefficient(coord);
        // [Z, A]_c = Z(A_c) - A(Z_c)
        let lhs = Expr::sub(z.apply(a_c), sys.total_derivative(&z_c)?);
        let rhs = Expr::mul(lambda.clone(), a_c.clone());
        let verdict = equals_probabilistic(&lhs, &rhs, cfg)?;
        if !verdict.is_equal() {
            passed = false;
        }
        components.push((coord.clone(), verdict));
    }

    Ok(SymmetryCheck {
        generator: field.name.clone(),
        lambda,
        components,
        passed,
    })
}

/// Builds the system and its generator fields from a parsed problem.
pub fn load_problem(p: &ProblemDescription) -> Result<(OdeSystem, Vec<VectorField>)> {
    let sys = OdeSystem::from_problem(p)?;
    let fields = p
        .generators
        .iter()
        .map(|g| VectorField::from_spec(g, &sys))
        .collect::<Result<Vec<_>>>()?;
    Ok((sys, fields))
}
