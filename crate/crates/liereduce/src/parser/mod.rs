//! Recursive-descent parser for the problem description language.
//!
//! A problem file declares one independent variable, dependent variables
//! with their orders, one equation per dependent in solved form, point
//! symmetry generators, optional sampling boxes, optional charts, and an
//! optional block of expected structure constants. Charts may also live in
//! standalone files.
//!
//! Derivatives are written `diff(y, t, k)` or with apostrophes (`y''`); both
//! resolve to the internal jet names `y_1`, `y_2`, ... used everywhere
//! downstream.

mod lexer;

pub use lexer::{SourceSpan, Tok, Token};

use crate::error::{Error, Result};
use crate::expr::{Expr, Rational};
use std::collections::{BTreeMap, BTreeSet};

/// A point symmetry generator as written: named coefficients on the base
/// coordinates (independent plus dependents).
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub name: String,
    /// Coefficient per coordinate name, in declaration order of appearance.
    pub coefficients: Vec<(String, Expr)>,
    pub span: SourceSpan,
}

/// What a rename statement in a chart refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RenameItem {
    /// Rename a coordinate itself (used for the new independent).
    Var(String),
    /// Rename the first derivative of a rectified coordinate.
    FirstDerivative(String),
}

/// A chart as written: forward definitions (first entry is the new
/// independent), a mandatory inverse block, generator targets, and the
/// renames applied on restriction.
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub name: String,
    pub forward: Vec<(String, Expr)>,
    pub inverse: Vec<(String, Expr)>,
    pub targets: Vec<(String, String)>,
    pub renames: Vec<(RenameItem, String)>,
    pub span: SourceSpan,
}

impl ChartSpec {
    pub fn new_independent(&self) -> &str {
        &self.forward[0].0
    }

    pub fn new_dependents(&self) -> impl Iterator<Item = &(String, Expr)> {
        self.forward.iter().skip(1)
    }

    pub fn forward_expr(&self, var: &str) -> Option<&Expr> {
        self.forward
            .iter()
            .find(|(n, _)| n == var)
            .map(|(_, e)| e)
    }

    pub fn inverse_expr(&self, var: &str) -> Option<&Expr> {
        self.inverse
            .iter()
            .find(|(n, _)| n == var)
            .map(|(_, e)| e)
    }
}

/// Expected structure constants block. With a `basis` line the block stands
/// alone; without one the names refer to the declared generators.
#[derive(Debug, Clone)]
pub struct StructureSpec {
    pub basis: Option<Vec<String>>,
    /// Brackets as written: ([a, b], right-hand side, span).
    pub brackets: Vec<(String, String, Expr, SourceSpan)>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Default)]
pub struct ProblemDescription {
    pub independent: Option<String>,
    /// Dependent variables with their orders, in declaration order.
    pub dependents: Vec<(String, usize)>,
    /// Solved right-hand side per dependent.
    pub equations: BTreeMap<String, Expr>,
    pub generators: Vec<GeneratorSpec>,
    pub boxes: BTreeMap<String, (Rational, Rational)>,
    pub charts: Vec<ChartSpec>,
    pub structure: Option<StructureSpec>,
}

impl ProblemDescription {
    pub fn order_of(&self, dep: &str) -> Option<usize> {
        self.dependents
            .iter()
            .find(|(n, _)| n == dep)
            .map(|(_, k)| *k)
    }

    pub fn chart(&self, name: &str) -> Option<&ChartSpec> {
        self.charts.iter().find(|c| c.name == name)
    }

    pub fn generator(&self, name: &str) -> Option<&GeneratorSpec> {
        self.generators.iter().find(|g| g.name == name)
    }
}

/// Internal jet variable name for the k-th derivative of `dep`.
pub fn jet_name(dep: &str, k: usize) -> String {
    if k == 0 {
        dep.to_string()
    } else {
        format!("{dep}_{k}")
    }
}

/// Recognizes internal jet names against a set of dependents: `x_2` is the
/// second jet of `x` when `x` is declared.
pub fn split_jet_name<'a>(name: &str, dependents: &'a [(String, usize)]) -> Option<(&'a str, usize)> {
    let (base, idx) = name.rsplit_once('_')?;
    let k: usize = idx.parse().ok()?;
    if k == 0 {
        return None;
    }
    dependents
        .iter()
        .find(|(n, _)| n == base)
        .map(|(n, _)| (n.as_str(), k))
}

const FUNCTIONS: [&str; 5] = ["exp", "ln", "sin", "cos", "sqrt"];
const KEYWORDS: [&str; 11] = [
    "independent",
    "dependent",
    "order",
    "equation",
    "generator",
    "box",
    "in",
    "chart",
    "inverse",
    "targets",
    "rename",
];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Order stated by each equation's left-hand side, checked against the
    /// declarations once the whole file is in.
    equation_orders: Vec<(String, usize, SourceSpan)>,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            tokens: lexer::lex(text)?,
            pos: 0,
            equation_orders: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<Token> {
        if self.peek() == want {
            Ok(self.next())
        } else {
            Err(self
                .span()
                .error(format!("expected {}, found {}", want.describe(), self.peek().describe())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.span();
                self.next();
                Ok((s, span))
            }
            other => Err(self
                .span()
                .error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn expect_usize(&mut self) -> Result<(usize, SourceSpan)> {
        match self.peek().clone() {
            Tok::Int(n) => {
                let span = self.span();
                use num_traits::ToPrimitive;
                let v = n
                    .to_usize()
                    .ok_or_else(|| span.error("integer literal too large"))?;
                self.next();
                Ok((v, span))
            }
            other => Err(self
                .span()
                .error(format!("expected integer, found {}", other.describe()))),
        }
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    // ----- expression grammar -----
    //
    // expr   := term (('+'|'-') term)*
    // term   := unary (('*'|'/') unary)*
    // unary  := '-' unary | power
    // power  := atom ('^' unary)?          (right-associative)
    // atom   := Int | '(' expr ')' | Ident | Ident'(..)' | Ident primes
    //           | diff(name, name [, k])

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut acc = self.parse_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    let rhs = self.parse_term()?;
                    acc = Expr::add(acc, rhs);
                }
                Tok::Minus => {
                    self.next();
                    let rhs = self.parse_term()?;
                    acc = Expr::sub(acc, rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut acc = self.parse_unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.next();
                    let rhs = self.parse_unary()?;
                    acc = Expr::mul(acc, rhs);
                }
                Tok::Slash => {
                    self.next();
                    let rhs = self.parse_unary()?;
                    acc = Expr::div(acc, rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Tok::Minus) {
            self.next();
            let inner = self.parse_unary()?;
            return Ok(Expr::neg(inner));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.next();
            let expo = self.parse_unary()?;
            return Ok(Expr::pow(base, expo));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Expr::num(Rational::from_integer(n)))
            }
            Tok::LParen => {
                self.next();
                let e = self.parse_expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.next();
                if name == "diff" && matches!(self.peek(), Tok::LParen) {
                    let (dep, k, _) = self.parse_diff_args()?;
                    return Ok(Expr::var(jet_name(&dep, k)));
                }
                if matches!(self.peek(), Tok::LParen) {
                    if !FUNCTIONS.contains(&name.as_str()) {
                        return Err(span.error(format!(
                            "unknown function `{name}` (expected one of exp, ln, sin, cos, sqrt)"
                        )));
                    }
                    self.next();
                    let arg = self.parse_expr()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(match name.as_str() {
                        "exp" => Expr::exp(arg),
                        "ln" => Expr::ln(arg),
                        "sin" => Expr::sin(arg),
                        "cos" => Expr::cos(arg),
                        "sqrt" => Expr::sqrt(arg),
                        _ => unreachable!(),
                    });
                }
                if let Tok::Primes(k) = *self.peek() {
                    self.next();
                    return Ok(Expr::var(jet_name(&name, k)));
                }
                Ok(Expr::var(name))
            }
            other => Err(span.error(format!("expected expression, found {}", other.describe()))),
        }
    }

    /// Parses `(dep, indep [, k])` after `diff`. Returns (dep, k, span).
    fn parse_diff_args(&mut self) -> Result<(String, usize, SourceSpan)> {
        self.expect(&Tok::LParen)?;
        let (dep, span) = self.expect_ident()?;
        self.expect(&Tok::Comma)?;
        let (_indep, _) = self.expect_ident()?;
        let k = if matches!(self.peek(), Tok::Comma) {
            self.next();
            let (k, kspan) = self.expect_usize()?;
            if k == 0 {
                return Err(kspan.error("derivative order in diff(...) must be at least 1"));
            }
            k
        } else {
            1
        };
        self.expect(&Tok::RParen)?;
        Ok((dep, k, span))
    }

    /// Parses a derivative reference for an equation left-hand side:
    /// `diff(y, t, k)` or `y''`. Returns (dependent, order, span).
    fn parse_jet_ref(&mut self) -> Result<(String, usize, SourceSpan)> {
        let (name, span) = self.expect_ident()?;
        if name == "diff" {
            return self.parse_diff_args();
        }
        if let Tok::Primes(k) = *self.peek() {
            self.next();
            return Ok((name, k, span));
        }
        Err(span.error("equation left-hand side must be a derivative (diff(...) or primes)"))
    }

    // ----- generator grammar -----
    //
    // genexpr := ['-'] genterm (('+'|'-') genterm)*
    // genterm := factor (('*'|'/') factor)*   with exactly one `d/dvar`

    fn parse_generator_rhs(&mut self) -> Result<Vec<(String, Expr)>> {
        let mut coeffs: Vec<(String, Expr)> = Vec::new();
        let mut negative = matches!(self.peek(), Tok::Minus);
        if negative {
            self.next();
        }
        loop {
            let (var, coeff) = self.parse_generator_term()?;
            let signed = if negative { Expr::neg(coeff) } else { coeff };
            if let Some((_, existing)) = coeffs.iter_mut().find(|(v, _)| *v == var) {
                *existing = Expr::add(existing.clone(), signed);
            } else {
                coeffs.push((var, signed));
            }
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    negative = false;
                }
                Tok::Minus => {
                    self.next();
                    negative = true;
                }
                _ => return Ok(coeffs),
            }
        }
    }

    fn at_dd_factor(&self) -> bool {
        if let (Tok::Ident(a), Tok::Slash, Tok::Ident(b)) =
            (self.peek(), self.peek_at(1), self.peek_at(2))
        {
            a == "d" && b.len() > 1 && b.starts_with('d')
        } else {
            false
        }
    }

    fn parse_generator_term(&mut self) -> Result<(String, Expr)> {
        let span = self.span();
        let mut dd: Option<String> = None;
        let mut factors: Vec<Expr> = Vec::new();
        loop {
            if self.at_dd_factor() {
                self.next(); // d
                self.next(); // slash
                let (name, nspan) = self.expect_ident()?;
                let var = name[1..].to_string();
                if dd.replace(var).is_some() {
                    return Err(nspan.error("generator term contains two d/d factors"));
                }
            } else {
                factors.push(self.parse_power()?);
            }
            match self.peek() {
                Tok::Star => {
                    self.next();
                }
                Tok::Slash => {
                    self.next();
                    if self.at_dd_factor() {
                        return Err(self.span().error("cannot divide by a d/d factor"));
                    }
                    let divisor = self.parse_power()?;
                    factors.push(Expr::powi(divisor, -1));
                }
                _ => break,
            }
        }
        let Some(var) = dd else {
            return Err(span.error("generator term lacks a d/d factor"));
        };
        let coeff = if factors.is_empty() {
            Expr::one()
        } else {
            Expr::product(factors)
        };
        Ok((var, coeff))
    }

    // ----- statements -----

    fn parse_problem(&mut self) -> Result<ProblemDescription> {
        let mut p = ProblemDescription::default();
        while !self.at_eof() {
            let (kw, span) = self.expect_ident()?;
            match kw.as_str() {
                "independent" => {
                    let (name, nspan) = self.expect_ident()?;
                    if p.independent.replace(name).is_some() {
                        return Err(nspan.error("independent variable declared twice"));
                    }
                }
                "dependent" => {
                    let (name, nspan) = self.expect_ident()?;
                    let (okw, ospan) = self.expect_ident()?;
                    if okw != "order" {
                        return Err(ospan.error("expected `order` after dependent name"));
                    }
                    let (k, kspan) = self.expect_usize()?;
                    if k == 0 {
                        return Err(kspan.error("dependent order must be at least 1"));
                    }
                    if p.dependents.iter().any(|(n, _)| *n == name) {
                        return Err(nspan.error(format!("dependent `{name}` declared twice")));
                    }
                    p.dependents.push((name, k));
                }
                "equation" => {
                    let (dep, k, jspan) = self.parse_jet_ref()?;
                    self.expect(&Tok::Eq)?;
                    let rhs = self.parse_expr()?;
                    if p.equations.insert(dep.clone(), rhs).is_some() {
                        return Err(jspan.error(format!("second equation for `{dep}`")));
                    }
                    self.equation_orders.push((dep, k, jspan));
                }
                "generator" => {
                    let (name, nspan) = self.expect_ident()?;
                    self.expect(&Tok::Eq)?;
                    let coefficients = self.parse_generator_rhs()?;
                    if p.generators.iter().any(|g| g.name == name) {
                        return Err(nspan.error(format!("generator `{name}` declared twice")));
                    }
                    p.generators.push(GeneratorSpec {
                        name,
                        coefficients,
                        span: nspan,
                    });
                }
                "box" => {
                    let (var, vspan) = self.expect_ident()?;
                    let (inkw, ispan) = self.expect_ident()?;
                    if inkw != "in" {
                        return Err(ispan.error("expected `in` after box variable"));
                    }
                    self.expect(&Tok::LBracket)?;
                    let lo = self.parse_rational()?;
                    self.expect(&Tok::Comma)?;
                    let hi = self.parse_rational()?;
                    self.expect(&Tok::RBracket)?;
                    if lo >= hi {
                        return Err(vspan.error("box lower bound must be below upper bound"));
                    }
                    if p.boxes.insert(var.clone(), (lo, hi)).is_some() {
                        return Err(vspan.error(format!("box for `{var}` declared twice")));
                    }
                }
                "chart" => {
                    let chart = self.parse_chart_block()?;
                    if p.charts.iter().any(|c| c.name == chart.name) {
                        return Err(chart
                            .span
                            .error(format!("chart `{}` declared twice", chart.name)));
                    }
                    p.charts.push(chart);
                }
                "structure" => {
                    let s = self.parse_structure_block(span)?;
                    if p.structure.replace(s).is_some() {
                        return Err(span.error("structure block declared twice"));
                    }
                }
                other => {
                    return Err(span.error(format!(
                        "unknown statement `{other}` (expected independent, dependent, equation, generator, box, chart, or structure)"
                    )));
                }
            }
        }
        validate_problem(&p, &self.equation_orders)?;
        Ok(p)
    }

    /// Parses a rational literal: optional sign, integer, optional /integer.
    fn parse_rational(&mut self) -> Result<Rational> {
        let span = self.span();
        let e = self.parse_expr()?;
        e.as_num()
            .cloned()
            .ok_or_else(|| span.error("expected a rational constant"))
    }

    fn parse_chart_block(&mut self) -> Result<ChartSpec> {
        let (name, span) = self.expect_ident()?;
        self.expect(&Tok::LBrace)?;
        let mut forward: Vec<(String, Expr)> = Vec::new();
        let mut inverse: Vec<(String, Expr)> = Vec::new();
        let mut targets: Vec<(String, String)> = Vec::new();
        let mut renames: Vec<(RenameItem, String)> = Vec::new();
        let mut saw_inverse = false;
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.next();
                    break;
                }
                Tok::Ident(kw) if kw == "inverse" => {
                    let ispan = self.span();
                    self.next();
                    if saw_inverse {
                        return Err(ispan.error("chart has two inverse blocks"));
                    }
                    saw_inverse = true;
                    self.expect(&Tok::LBrace)?;
                    while !matches!(self.peek(), Tok::RBrace) {
                        let (var, vspan) = self.expect_ident()?;
                        self.expect(&Tok::Eq)?;
                        let e = self.parse_expr()?;
                        self.expect(&Tok::Semi)?;
                        if inverse.iter().any(|(n, _)| *n == var) {
                            return Err(
                                vspan.error(format!("inverse maps `{var}` twice"))
                            );
                        }
                        inverse.push((var, e));
                    }
                    self.expect(&Tok::RBrace)?;
                }
                Tok::Ident(kw) if kw == "targets" => {
                    self.next();
                    loop {
                        let (gen, gspan) = self.expect_ident()?;
                        self.expect(&Tok::Arrow)?;
                        let (var, _) = self.expect_ident()?;
                        if targets.iter().any(|(g, _)| *g == gen) {
                            return Err(gspan.error(format!("generator `{gen}` targeted twice")));
                        }
                        if targets.iter().any(|(_, v)| *v == var) {
                            return Err(gspan.error(format!("variable `{var}` targeted twice")));
                        }
                        targets.push((gen, var));
                        if matches!(self.peek(), Tok::Comma) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect(&Tok::Semi)?;
                }
                Tok::Ident(kw) if kw == "rename" => {
                    self.next();
                    loop {
                        let (from, fspan) = self.expect_ident()?;
                        let item = if let Tok::Primes(k) = *self.peek() {
                            self.next();
                            if k != 1 {
                                return Err(fspan
                                    .error("only first derivatives can be renamed on restriction"));
                            }
                            RenameItem::FirstDerivative(from)
                        } else {
                            RenameItem::Var(from)
                        };
                        self.expect(&Tok::Arrow)?;
                        let (to, _) = self.expect_ident()?;
                        if renames.iter().any(|(i, _)| *i == item) {
                            return Err(fspan.error("duplicate rename for the same item"));
                        }
                        renames.push((item, to));
                        if matches!(self.peek(), Tok::Comma) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect(&Tok::Semi)?;
                }
                Tok::Ident(_) => {
                    let (var, vspan) = self.expect_ident()?;
                    self.expect(&Tok::Eq)?;
                    let e = self.parse_expr()?;
                    self.expect(&Tok::Semi)?;
                    if forward.iter().any(|(n, _)| *n == var) {
                        return Err(vspan.error(format!("chart maps two expressions to `{var}`")));
                    }
                    forward.push((var, e));
                }
                other => {
                    return Err(self
                        .span()
                        .error(format!("unexpected {} in chart block", other.describe())));
                }
            }
        }
        if forward.len() < 2 {
            return Err(span.error(
                "chart must define the new independent variable and at least one new dependent",
            ));
        }
        if !saw_inverse {
            return Err(span.error("chart lacks an inverse block; explicit inverses are required"));
        }
        if inverse.is_empty() {
            return Err(span.error("chart inverse block is empty"));
        }
        Ok(ChartSpec {
            name,
            forward,
            inverse,
            targets,
            renames,
            span,
        })
    }

    fn parse_structure_block(&mut self, span: SourceSpan) -> Result<StructureSpec> {
        self.expect(&Tok::LBrace)?;
        let mut basis: Option<Vec<String>> = None;
        let mut brackets = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.next();
                    break;
                }
                Tok::Ident(kw) if kw == "basis" => {
                    let bspan = self.span();
                    self.next();
                    if basis.is_some() {
                        return Err(bspan.error("basis declared twice in structure block"));
                    }
                    let mut names = Vec::new();
                    loop {
                        let (n, nspan) = self.expect_ident()?;
                        if names.contains(&n) {
                            return Err(nspan.error(format!("basis name `{n}` repeated")));
                        }
                        names.push(n);
                        if matches!(self.peek(), Tok::Comma) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect(&Tok::Semi)?;
                    basis = Some(names);
                }
                Tok::LBracket => {
                    let bspan = self.span();
                    self.next();
                    let (a, _) = self.expect_ident()?;
                    self.expect(&Tok::Comma)?;
                    let (b, _) = self.expect_ident()?;
                    self.expect(&Tok::RBracket)?;
                    self.expect(&Tok::Eq)?;
                    let rhs = self.parse_expr()?;
                    self.expect(&Tok::Semi)?;
                    brackets.push((a, b, rhs, bspan));
                }
                other => {
                    return Err(self
                        .span()
                        .error(format!("unexpected {} in structure block", other.describe())));
                }
            }
        }
        Ok(StructureSpec {
            basis,
            brackets,
            span,
        })
    }
}

fn validate_problem(
    p: &ProblemDescription,
    equation_orders: &[(String, usize, SourceSpan)],
) -> Result<()> {
    let span0 = SourceSpan { line: 1, col: 1 };

    // Reserved and colliding names.
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let mut all_names: Vec<(String, SourceSpan)> = Vec::new();
    if let Some(ind) = &p.independent {
        all_names.push((ind.clone(), span0));
    }
    for (d, _) in &p.dependents {
        all_names.push((d.clone(), span0));
    }
    for (name, span) in &all_names {
        if name == "d" {
            return Err(span.error("`d` is reserved for the d/d notation"));
        }
        if !declared.insert(name.clone()) {
            return Err(span.error(format!("name `{name}` declared twice")));
        }
        if split_jet_name(name, &p.dependents).is_some() {
            return Err(span.error(format!(
                "name `{name}` collides with a jet of another dependent variable"
            )));
        }
    }

    let needs_system =
        !p.dependents.is_empty() || !p.equations.is_empty() || !p.generators.is_empty();
    if needs_system && p.independent.is_none() {
        return Err(span0.error("no independent variable declared"));
    }

    // Equations: one per dependent, order matching the declaration, and
    // right-hand sides on the on-shell jet space.
    for (dep, k, span) in equation_orders {
        match p.order_of(dep) {
            None => return Err(span.error(format!("equation for undeclared dependent `{dep}`"))),
            Some(ord) if ord != *k => {
                return Err(span.error(format!(
                    "equation gives `{dep}` order {k} but it is declared with order {ord}"
                )))
            }
            _ => {}
        }
    }
    for (dep, _) in &p.dependents {
        if !p.equations.contains_key(dep) {
            return Err(span0.error(format!("dependent `{dep}` has no equation")));
        }
    }
    let allowed = on_shell_names(p);
    for (dep, rhs) in &p.equations {
        for v in rhs.free_vars() {
            if !allowed.contains(&v) {
                return Err(span0.error(format!(
                    "equation for `{dep}` references `{v}`, which is not on the jet space \
                     (jets run to one below each declared order)"
                )));
            }
        }
    }

    // Generators: point fields on the base coordinates.
    let base: BTreeSet<String> = p
        .independent
        .iter()
        .cloned()
        .chain(p.dependents.iter().map(|(n, _)| n.clone()))
        .collect();
    for g in &p.generators {
        if KEYWORDS.contains(&g.name.as_str()) || FUNCTIONS.contains(&g.name.as_str()) {
            return Err(g.span.error(format!("generator name `{}` is reserved", g.name)));
        }
        for (var, coeff) in &g.coefficients {
            if !base.contains(var) {
                return Err(g.span.error(format!(
                    "generator `{}` has a d/d{var} component but `{var}` is not a base coordinate",
                    g.name
                )));
            }
            for v in coeff.free_vars() {
                if !base.contains(&v) {
                    return Err(g.span.error(format!(
                        "generator `{}` coefficient references `{v}`; point generators may only \
                         reference base coordinates",
                        g.name
                    )));
                }
            }
        }
    }

    // Structure block: names must resolve.
    if let Some(s) = &p.structure {
        let names: Vec<String> = match &s.basis {
            Some(b) => b.clone(),
            None => {
                if p.generators.is_empty() {
                    return Err(s.span.error(
                        "structure block without basis requires declared generators",
                    ));
                }
                p.generators.iter().map(|g| g.name.clone()).collect()
            }
        };
        for (a, b, _, span) in &s.brackets {
            for n in [a, b] {
                if !names.contains(n) {
                    return Err(span.error(format!("bracket references unknown name `{n}`")));
                }
            }
        }
    }

    Ok(())
}

/// Names of the on-shell jet space: the independent plus each dependent's
/// jets up to one below its order.
fn on_shell_names(p: &ProblemDescription) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(ind) = &p.independent {
        out.insert(ind.clone());
    }
    for (dep, k) in &p.dependents {
        for j in 0..*k {
            out.insert(jet_name(dep, j));
        }
    }
    out
}

/// Parses a standalone expression.
pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    let e = p.parse_expr()?;
    if !p.at_eof() {
        return Err(p
            .span()
            .error(format!("trailing input after expression: {}", p.peek().describe())));
    }
    Ok(e)
}

/// Parses a full problem description.
pub fn parse_problem(text: &str) -> Result<ProblemDescription> {
    let mut p = Parser::new(text)?;
    p.parse_problem()
}

/// Parses a standalone chart file: comments plus exactly one chart block.
pub fn parse_chart(text: &str) -> Result<ChartSpec> {
    let mut p = Parser::new(text)?;
    let (kw, span) = p.expect_ident()?;
    if kw != "chart" {
        return Err(span.error("chart file must start with a chart block"));
    }
    let chart = p.parse_chart_block()?;
    if !p.at_eof() {
        return Err(p
            .span()
            .error("trailing input after chart block"));
    }
    Ok(chart)
}

/// Decomposes an expression as an exact linear combination of the given
/// names. Fails when any coefficient is non-constant or a remainder is left.
pub fn decompose_linear(e: &Expr, names: &[String]) -> Result<Vec<Rational>> {
    use num_traits::Zero;
    let mut coeffs = Vec::with_capacity(names.len());
    let mut remainder = e.clone();
    for n in names {
        let c = e.differentiate(n);
        let c = c.as_num().cloned().ok_or_else(|| {
            Error::Structure(format!("coefficient of `{n}` in `{e}` is not constant"))
        })?;
        if !c.is_zero() {
            remainder = Expr::sub(
                remainder,
                Expr::mul(Expr::num(c.clone()), Expr::var(n.clone())),
            );
        }
        coeffs.push(c);
    }
    if !remainder.is_zero() {
        return Err(Error::Structure(format!(
            "`{e}` is not a linear combination of the declared names (remainder `{remainder}`)"
        )));
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests;
