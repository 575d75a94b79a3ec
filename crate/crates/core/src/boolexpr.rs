//! Boolean interaction programs over two inputs `x` and `y`.
//!
//! Distinctness between expressions is decided by a deliberately weak
//! canonicalizer: it flattens nested identical AND/OR nodes, sorts their
//! children and removes duplicate children. Nothing else is rewritten, so
//! `NOT NOT x` and `x` stay distinct, as do `0 AND x` and `0`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};

/// Deepest expression space the enumerator builds unless told otherwise.
pub const DEFAULT_DEPTH_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Not,
    And,
    Or,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Not, Op::And, Op::Or];

    pub fn name(self) -> &'static str {
        match self {
            Op::Not => "NOT",
            Op::And => "AND",
            Op::Or => "OR",
        }
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NOT" | "¬" | "!" => Ok(Op::Not),
            "AND" | "∧" | "&" => Ok(Op::And),
            "OR" | "∨" | "|" => Ok(Op::Or),
            _ => Err(Error::UnknownOperator(s.to_string())),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type OpSet = BTreeSet<Op>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

/// Expression tree. AND/OR nodes are n-ary; the parser always builds them
/// binary and canonicalization flattens them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Var),
    Const(bool),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    pub fn x() -> Self {
        Expr::Var(Var::X)
    }

    pub fn y() -> Self {
        Expr::Var(Var::Y)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::And(vec![a, b])
    }

    pub fn or(a: Expr, b: Expr) -> Self {
        Expr::Or(vec![a, b])
    }

    fn op(&self) -> Option<Op> {
        match self {
            Expr::Var(_) | Expr::Const(_) => None,
            Expr::Not(_) => Some(Op::Not),
            Expr::And(_) => Some(Op::And),
            Expr::Or(_) => Some(Op::Or),
        }
    }

    fn children(&self) -> &[Expr] {
        match self {
            Expr::Var(_) | Expr::Const(_) => &[],
            Expr::Not(c) => std::slice::from_ref(c),
            Expr::And(cs) | Expr::Or(cs) => cs,
        }
    }

    /// Operators appearing anywhere in the tree.
    pub fn ops_used(&self) -> OpSet {
        let mut out = OpSet::new();
        self.walk(&mut |e| {
            if let Some(op) = e.op() {
                out.insert(op);
            }
        });
        out
    }

    pub fn uses_constants(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Const(_)));
        found
    }

    fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// 4-bit truth table; bit `2x + y` holds `f(x, y)`.
    pub fn truth_table(&self) -> u8 {
        let mut t = 0;
        for x in [false, true] {
            for y in [false, true] {
                if eval_expr(self, x, y) {
                    t |= 1 << (2 * u8::from(x) + u8::from(y));
                }
            }
        }
        t
    }

    /// Hypothesis text in the emission schema.
    pub fn to_text(&self) -> String {
        format!("EXPR: {self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Const(b) => write!(f, "{}", u8::from(*b)),
            Expr::Not(c) => write!(f, "NOT {c}"),
            Expr::And(cs) | Expr::Or(cs) => {
                let sep = if matches!(self, Expr::And(_)) {
                    " AND "
                } else {
                    " OR "
                };
                f.write_str("(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn eval_expr(expr: &Expr, x: bool, y: bool) -> bool {
    match expr {
        Expr::Var(Var::X) => x,
        Expr::Var(Var::Y) => y,
        Expr::Const(b) => *b,
        Expr::Not(c) => !eval_expr(c, x, y),
        Expr::And(cs) => cs.iter().all(|c| eval_expr(c, x, y)),
        Expr::Or(cs) => cs.iter().any(|c| eval_expr(c, x, y)),
    }
}

/// Leaves have depth 0; every operator node adds one.
pub fn depth(expr: &Expr) -> usize {
    expr.children()
        .iter()
        .map(|c| 1 + depth(c))
        .max()
        .unwrap_or(0)
}

/// Bottom-up canonicalization: flatten nested identical AND/OR nodes, sort
/// children by their canonical serialization, drop repeated children. A
/// node left with a single child is replaced by that child.
pub fn canon_expr(expr: &Expr) -> Expr {
    match expr {
        Expr::Var(_) | Expr::Const(_) => expr.clone(),
        Expr::Not(c) => Expr::not(canon_expr(c)),
        Expr::And(cs) => assemble(Op::And, cs.iter().map(canon_expr).collect()),
        Expr::Or(cs) => assemble(Op::Or, cs.iter().map(canon_expr).collect()),
    }
}

/// Combines already-canonical children under an associative operator.
fn assemble(op: Op, children: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(children.len());
    for c in children {
        match (op, c) {
            (Op::And, Expr::And(inner)) | (Op::Or, Expr::Or(inner)) => flat.extend(inner),
            (_, other) => flat.push(other),
        }
    }
    let mut keyed: Vec<(String, Expr)> = flat.into_iter().map(|e| (e.to_string(), e)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    if keyed.len() == 1 {
        return keyed.pop().map(|(_, e)| e).expect("one child");
    }
    let children = keyed.into_iter().map(|(_, e)| e).collect();
    match op {
        Op::And => Expr::And(children),
        Op::Or => Expr::Or(children),
        Op::Not => unreachable!("NOT is unary"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Not,
    And,
    Or,
    LParen,
    RParen,
    X,
    Y,
    Zero,
    One,
}

fn tokenize(text: &str) -> std::result::Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let position = toks.len() + 1;
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            let tok = match word.to_ascii_uppercase().as_str() {
                "NOT" => Tok::Not,
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "X" => Tok::X,
                "Y" => Tok::Y,
                "0" => Tok::Zero,
                "1" => Tok::One,
                _ => return Err(ParseError::new(position, format!("unknown word `{word}`"))),
            };
            toks.push(tok);
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '¬' | '!' => Tok::Not,
            '∧' | '&' => Tok::And,
            '∨' | '|' => Tok::Or,
            other => {
                return Err(ParseError::new(
                    position,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        chars.next();
        toks.push(tok);
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).copied()
    }

    fn error(&self, message: &str) -> ParseError {
        ParseError::new(self.pos + 1, message)
    }

    fn expr(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(tok @ (Tok::And | Tok::Or)) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if tok == Tok::And {
                Expr::and(lhs, rhs)
            } else {
                Expr::or(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let tok = self
            .peek()
            .ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        match tok {
            Tok::Not => Ok(Expr::not(self.term()?)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.error("expected `)`")),
                }
            }
            Tok::X => Ok(Expr::x()),
            Tok::Y => Ok(Expr::y()),
            Tok::Zero => Ok(Expr::Const(false)),
            Tok::One => Ok(Expr::Const(true)),
            Tok::And | Tok::Or | Tok::RParen => {
                self.pos -= 1;
                Err(self.error("expected operand"))
            }
        }
    }
}

/// Parses an expression in the grammar
///
/// ```text
/// expr := term (('AND' | 'OR') term)*
/// term := 'NOT' term | '(' expr ')' | 'x' | 'y' | '0' | '1'
/// ```
///
/// AND and OR share one precedence level and associate to the left; NOT
/// binds tightest. `¬ ∧ ∨` and `! & |` are accepted as symbol spellings and
/// keywords are case-insensitive. Error positions count tokens from 1.
pub fn parse_expr(text: &str) -> std::result::Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos < parser.toks.len() {
        return Err(parser.error("unexpected trailing token"));
    }
    Ok(expr)
}

/// Parses an `EXPR:` hypothesis line.
pub fn parse_expr_line(text: &str) -> std::result::Result<Expr, ParseError> {
    let body = text
        .trim_start()
        .strip_prefix("EXPR:")
        .ok_or_else(|| ParseError::new(1, "expected `EXPR:` header"))?;
    parse_expr(body)
}

/// One observed phenotype triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhenotypeObservation {
    pub x: bool,
    pub y: bool,
    pub pi: bool,
}

/// Operator set, depth bound and constant switch defining a hypothesis space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExprSpace {
    pub ops: OpSet,
    pub depth: usize,
    pub allow_constants: bool,
}

/// A proposal outside the instance's expression space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintViolation(pub String);

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExprSpace {
    pub fn new(ops: impl IntoIterator<Item = Op>, depth: usize, allow_constants: bool) -> Self {
        Self {
            ops: ops.into_iter().collect(),
            depth,
            allow_constants,
        }
    }

    /// Checks operators, depth (on the tree as given) and constants.
    pub fn admits(&self, expr: &Expr) -> std::result::Result<(), ConstraintViolation> {
        if let Some(op) = expr.ops_used().difference(&self.ops).next() {
            return Err(ConstraintViolation(format!(
                "operator {op} not in the allowed set"
            )));
        }
        let d = depth(expr);
        if d > self.depth {
            return Err(ConstraintViolation(format!(
                "depth {d} exceeds bound {}",
                self.depth
            )));
        }
        if !self.allow_constants && expr.uses_constants() {
            return Err(ConstraintViolation("constants are not allowed".into()));
        }
        Ok(())
    }
}

type EnumKey = (Vec<Op>, usize, bool);

/// Canonical members of an expression space, each with a binary tree of
/// minimal depth that canonicalizes to it. Both lists share one order.
#[derive(Debug)]
pub struct Enumeration {
    pub canonical: Vec<Expr>,
    pub witnesses: Vec<Expr>,
}

fn enumeration_cache() -> &'static Mutex<HashMap<EnumKey, Arc<Enumeration>>> {
    static CACHE: OnceLock<Mutex<HashMap<EnumKey, Arc<Enumeration>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Every canonical expression reachable by a tree of depth `<= d`, sorted
/// by canonical serialization. Uses [`DEFAULT_DEPTH_LIMIT`].
pub fn enumerate_exprs(ops: &OpSet, d: usize, allow_constants: bool) -> Result<Arc<Vec<Expr>>> {
    Ok(Arc::new(
        enumerate_space(ops, d, allow_constants, DEFAULT_DEPTH_LIMIT)?
            .canonical
            .clone(),
    ))
}

pub fn enumerate_exprs_with_limit(
    ops: &OpSet,
    d: usize,
    allow_constants: bool,
    depth_limit: usize,
) -> Result<Arc<Vec<Expr>>> {
    Ok(Arc::new(
        enumerate_space(ops, d, allow_constants, depth_limit)?
            .canonical
            .clone(),
    ))
}

/// Cached enumeration with witnesses.
pub fn enumerate_space(
    ops: &OpSet,
    d: usize,
    allow_constants: bool,
    depth_limit: usize,
) -> Result<Arc<Enumeration>> {
    if d > depth_limit {
        return Err(Error::LimitExceeded(format!(
            "depth {d} exceeds the enumeration limit of {depth_limit}"
        )));
    }
    let key = (ops.iter().copied().collect::<Vec<_>>(), d, allow_constants);
    if let Some(hit) = enumeration_cache().lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let built = Arc::new(build_enumeration(ops, d, allow_constants));
    enumeration_cache()
        .lock()
        .expect("cache lock")
        .insert(key, Arc::clone(&built));
    Ok(built)
}

/// Level-wise closure: level k adds the canonical forms of every operator
/// applied to level k-1 members, skipping combinations whose operands were
/// all available one level earlier. Uncached and without a depth limit;
/// [`enumerate_space`] is the guarded entry point.
pub fn build_enumeration(ops: &OpSet, d: usize, allow_constants: bool) -> Enumeration {
    // canonical key -> (canonical form, witness tree)
    let mut all: BTreeMap<String, (Expr, Expr)> = BTreeMap::new();
    let mut leaves = vec![Expr::x(), Expr::y()];
    if allow_constants {
        leaves.extend([Expr::Const(false), Expr::Const(true)]);
    }
    for e in leaves {
        all.insert(e.to_string(), (e.clone(), e));
    }
    let mut fresh: BTreeSet<String> = all.keys().cloned().collect();

    for _ in 0..d {
        let items: Vec<(&String, &(Expr, Expr))> = all.iter().collect();
        let is_new: Vec<bool> = items.iter().map(|(k, _)| fresh.contains(*k)).collect();
        let mut next: BTreeMap<String, (Expr, Expr)> = BTreeMap::new();
        let mut offer = |canonical: Expr, witness: Expr| {
            let k = canonical.to_string();
            if !all_contains(&items, &k) {
                next.entry(k).or_insert((canonical, witness));
            }
        };
        if ops.contains(&Op::Not) {
            for (i, (_, (c, w))) in items.iter().enumerate() {
                if is_new[i] {
                    offer(Expr::not(c.clone()), Expr::not(w.clone()));
                }
            }
        }
        for op in [Op::And, Op::Or] {
            if !ops.contains(&op) {
                continue;
            }
            for i in 0..items.len() {
                for j in i + 1..items.len() {
                    if is_new[i] || is_new[j] {
                        let ((ci, wi), (cj, wj)) = (items[i].1, items[j].1);
                        let canonical = assemble(op, vec![ci.clone(), cj.clone()]);
                        let witness = match op {
                            Op::And => Expr::and(wi.clone(), wj.clone()),
                            _ => Expr::or(wi.clone(), wj.clone()),
                        };
                        offer(canonical, witness);
                    }
                }
            }
        }
        fresh = next.keys().cloned().collect();
        all.extend(next);
        if fresh.is_empty() {
            break;
        }
    }
    let (canonical, witnesses) = all.into_values().unzip();
    Enumeration {
        canonical,
        witnesses,
    }
}

fn all_contains<T>(items: &[(&String, T)], key: &str) -> bool {
    items.binary_search_by(|(k, _)| k.as_str().cmp(key)).is_ok()
}

fn consistent(expr: &Expr, obs: &[PhenotypeObservation]) -> bool {
    obs.iter().all(|o| eval_expr(expr, o.x, o.y) == o.pi)
}

/// Members agreeing with every observation.
pub fn filter_consistent(exprs: &[Expr], obs: &[PhenotypeObservation]) -> Vec<Expr> {
    exprs
        .iter()
        .filter(|e| consistent(e, obs))
        .cloned()
        .collect()
}

/// Functional agreement on all observed pairs; proposals outside the
/// expression space are a constraint violation rather than invalid.
pub fn validate_expr(
    expr: &Expr,
    obs: &[PhenotypeObservation],
    space: &ExprSpace,
) -> std::result::Result<bool, ConstraintViolation> {
    space.admits(expr)?;
    Ok(consistent(expr, obs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoolDifficulty {
    Basic,
    Extended,
    Full,
}

impl BoolDifficulty {
    pub const ALL: [BoolDifficulty; 3] = [
        BoolDifficulty::Basic,
        BoolDifficulty::Extended,
        BoolDifficulty::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoolDifficulty::Basic => "basic",
            BoolDifficulty::Extended => "extended",
            BoolDifficulty::Full => "full",
        }
    }

    pub fn level(self) -> u32 {
        match self {
            BoolDifficulty::Basic => 1,
            BoolDifficulty::Extended => 2,
            BoolDifficulty::Full => 3,
        }
    }

    pub fn space(self) -> ExprSpace {
        match self {
            BoolDifficulty::Basic => ExprSpace::new(Op::ALL, 2, false),
            BoolDifficulty::Extended => ExprSpace::new(Op::ALL, 3, false),
            BoolDifficulty::Full => ExprSpace::new(Op::ALL, 3, true),
        }
    }

    /// Number of the four input pairs that are observed.
    pub fn coverage(self) -> usize {
        match self {
            BoolDifficulty::Basic => 4,
            BoolDifficulty::Extended => 3,
            BoolDifficulty::Full => 2,
        }
    }
}

impl FromStr for BoolDifficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" | "1" => Ok(BoolDifficulty::Basic),
            "extended" | "2" => Ok(BoolDifficulty::Extended),
            "full" | "3" => Ok(BoolDifficulty::Full),
            _ => Err(Error::InvalidParameters(format!(
                "unknown Boolean difficulty `{s}`"
            ))),
        }
    }
}

/// A Boolean task instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolInstance {
    pub space: ExprSpace,
    pub observations: Vec<PhenotypeObservation>,
    /// Canonical serializations of the admissible set, sorted.
    pub admissible: Vec<String>,
    /// Depth-respecting tree for each entry of `admissible`.
    pub witnesses: Vec<Expr>,
}

impl BoolInstance {
    pub fn from_observations(
        space: ExprSpace,
        observations: Vec<PhenotypeObservation>,
    ) -> Result<Self> {
        let space_members = enumerate_space(
            &space.ops,
            space.depth,
            space.allow_constants,
            DEFAULT_DEPTH_LIMIT,
        )?;
        let (admissible, witnesses) = space_members
            .canonical
            .iter()
            .zip(&space_members.witnesses)
            .filter(|(c, _)| consistent(c, &observations))
            .map(|(c, w)| (c.to_string(), w.clone()))
            .unzip();
        Ok(Self {
            space,
            observations,
            admissible,
            witnesses,
        })
    }
}

/// Draws a target uniformly from the preset's expression space and reveals
/// its outputs on a seed-chosen subset of the four input pairs.
pub fn generate_bool_instance(difficulty: BoolDifficulty, seed: u64) -> Result<BoolInstance> {
    let space = difficulty.space();
    let members = enumerate_space(
        &space.ops,
        space.depth,
        space.allow_constants,
        DEFAULT_DEPTH_LIMIT,
    )?;
    let candidates = &members.canonical;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = &candidates[rng.random_range(0..candidates.len())];
    let mut picks = rand::seq::index::sample(&mut rng, 4, difficulty.coverage()).into_vec();
    picks.sort_unstable();
    let observations = picks
        .into_iter()
        .map(|p| {
            let (x, y) = (p & 2 != 0, p & 1 != 0);
            PhenotypeObservation {
                x,
                y,
                pi: eval_expr(target, x, y),
            }
        })
        .collect();
    BoolInstance::from_observations(space, observations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn c(s: &str) -> String {
        canon_expr(&p(s)).to_string()
    }

    fn table(rows: [(u8, u8, u8); 4]) -> Vec<PhenotypeObservation> {
        rows.iter()
            .map(|&(x, y, pi)| PhenotypeObservation {
                x: x == 1,
                y: y == 1,
                pi: pi == 1,
            })
            .collect()
    }

    /// Every expression tree of depth <= d, binary AND/OR, no sharing.
    fn naive_trees(ops: &OpSet, d: usize, constants: bool) -> Vec<Expr> {
        let mut leaves = vec![Expr::x(), Expr::y()];
        if constants {
            leaves.extend([Expr::Const(false), Expr::Const(true)]);
        }
        if d == 0 {
            return leaves;
        }
        let smaller = naive_trees(ops, d - 1, constants);
        let mut out = leaves;
        if ops.contains(&Op::Not) {
            out.extend(smaller.iter().cloned().map(Expr::not));
        }
        for a in &smaller {
            for b in &smaller {
                if ops.contains(&Op::And) {
                    out.push(Expr::and(a.clone(), b.clone()));
                }
                if ops.contains(&Op::Or) {
                    out.push(Expr::or(a.clone(), b.clone()));
                }
            }
        }
        out
    }

    fn naive_canonical(ops: &OpSet, d: usize, constants: bool) -> BTreeSet<String> {
        naive_trees(ops, d, constants)
            .iter()
            .map(|e| canon_expr(e).to_string())
            .collect()
    }

    fn basic() -> OpSet {
        Op::ALL.into_iter().collect()
    }

    #[test]
    fn eval_examples() {
        assert!(eval_expr(&p("x AND NOT y"), true, false));
        assert!(!eval_expr(&p("x OR y"), false, false));
        let nand = p("NOT (x AND y)");
        for (x, y) in [(false, false), (false, true), (true, false), (true, true)] {
            assert_eq!(eval_expr(&nand, x, y), !(x && y));
        }
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth(&p("x")), 0);
        assert_eq!(depth(&p("NOT x")), 1);
        assert_eq!(depth(&p("(x AND y) OR NOT x")), 2);
        assert_eq!(depth(&p("x AND y AND x")), 2);
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(c("y AND x"), c("x AND y"));
        assert_eq!(c("x AND x"), c("x"));
        assert_eq!(c("(x AND y) AND x"), c("x AND y"));
        assert_eq!(c("y AND x"), "(x AND y)");
        assert_eq!(c("x AND (y AND x)"), "(x AND y)");
        // No rewriting beyond the three symmetries.
        assert_ne!(c("NOT NOT x"), c("x"));
        assert_ne!(c("0 AND x"), c("0"));
        assert_ne!(c("NOT (x AND y)"), c("NOT x OR NOT y"));
        assert_ne!(c("x AND (x OR y)"), c("x"));
        // Collapse exposes a new flattening opportunity one level up.
        assert_eq!(c("x OR ((y OR 1) AND (1 OR y))"), "(1 OR x OR y)");
    }

    #[test]
    fn parse_examples() {
        assert_eq!(p("x AND NOT y"), Expr::and(Expr::x(), Expr::not(Expr::y())));
        assert_eq!(p("NOT (x OR y)"), Expr::not(Expr::or(Expr::x(), Expr::y())));
        let err = parse_expr("x AND AND y").unwrap_err();
        assert_eq!(err.position, 3);
        assert_eq!(p("x ∧ ¬y"), p("x AND NOT y"));
        assert_eq!(p("!x | y & 1"), p("(NOT x OR y) AND 1"));
        assert_eq!(p("x and not Y"), p("x AND NOT y"));
        assert!(parse_expr("").is_err());
        assert!(parse_expr("(x AND y").is_err());
        assert!(parse_expr("x y").is_err());
        assert!(parse_expr("x XOR y").is_err());
        assert!(parse_expr("z").is_err());
        assert_eq!(parse_expr_line("EXPR: x OR y").unwrap(), p("x OR y"));
        assert!(parse_expr_line("x OR y").is_err());
    }

    #[test]
    fn display_round_trips_through_parser() {
        for s in ["x", "NOT (x AND y)", "((x OR y) AND NOT 1)", "NOT NOT x"] {
            let e = canon_expr(&p(s));
            assert_eq!(canon_expr(&p(&e.to_string())), e);
        }
    }

    #[test]
    fn enumerate_small_depths() {
        let d0 = enumerate_exprs(&basic(), 0, false).unwrap();
        assert_eq!(d0.len(), 2);
        let d1: BTreeSet<String> = enumerate_exprs(&basic(), 1, false)
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect();
        let expected: BTreeSet<String> = ["x", "y", "NOT x", "NOT y", "(x AND y)", "(x OR y)"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(d1, expected);
        assert_eq!(d1, naive_canonical(&basic(), 1, false));
    }

    #[test]
    fn enumeration_matches_naive_oracle() {
        for constants in [false, true] {
            for d in 0..=2 {
                let got: BTreeSet<String> = enumerate_exprs(&basic(), d, constants)
                    .unwrap()
                    .iter()
                    .map(ToString::to_string)
                    .collect();
                assert_eq!(
                    got,
                    naive_canonical(&basic(), d, constants),
                    "d={d} c={constants}"
                );
            }
        }
        let and_only: OpSet = [Op::And].into_iter().collect();
        let got: BTreeSet<String> = enumerate_exprs(&and_only, 2, false)
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(got, naive_canonical(&and_only, 2, false));
    }

    #[test]
    fn witnesses_respect_depth() {
        for (d, constants) in [(1, true), (2, false), (2, true), (3, false)] {
            let space = ExprSpace::new(Op::ALL, d, constants);
            let e = enumerate_space(&space.ops, d, constants, DEFAULT_DEPTH_LIMIT).unwrap();
            for (c, w) in e.canonical.iter().zip(&e.witnesses) {
                assert_eq!(&canon_expr(w), c);
                assert!(space.admits(w).is_ok(), "{w}");
                assert_eq!(canon_expr(&parse_expr(&w.to_string()).unwrap()), *c);
            }
        }
    }

    #[test]
    fn frozen_enumeration_sizes() {
        // Frozen from an independent naive-tree enumerator with canonical
        // dedupe (written separately from this crate).
        let sizes: Vec<usize> = (0..=3)
            .map(|d| enumerate_exprs(&basic(), d, false).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![2, 6, 34, 904]);
        let with_constants: Vec<usize> = (0..=2)
            .map(|d| enumerate_exprs(&basic(), d, true).unwrap().len())
            .collect();
        assert_eq!(with_constants, vec![4, 20, 336]);
    }

    #[test]
    fn enumerate_rejects_deep_spaces() {
        assert!(matches!(
            enumerate_exprs(&basic(), 4, false),
            Err(Error::LimitExceeded(_))
        ));
    }

    #[test]
    fn filter_examples() {
        let d1 = enumerate_exprs(&basic(), 1, false).unwrap();
        let and_table = table([(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1)]);
        let kept: Vec<String> = filter_consistent(&d1, &and_table)
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(kept, vec!["(x AND y)".to_string()]);
        assert_eq!(filter_consistent(&d1, &[]).len(), d1.len());
        let contradictory = table([(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 1)]);
        assert!(filter_consistent(&d1, &contradictory).is_empty());
    }

    #[test]
    fn validate_examples() {
        let space = ExprSpace::new(Op::ALL, 3, false);
        let or_table = table([(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 1)]);
        assert_eq!(validate_expr(&p("x OR y"), &or_table, &space), Ok(true));
        let one = [PhenotypeObservation {
            x: false,
            y: true,
            pi: true,
        }];
        assert_eq!(validate_expr(&p("x AND y"), &one, &space), Ok(false));
        let deep = p("NOT NOT NOT NOT x");
        assert!(validate_expr(&deep, &one, &space).is_err());
        assert!(validate_expr(&p("x AND 1"), &one, &space).is_err());
        let no_or = ExprSpace::new([Op::Not, Op::And], 3, false);
        assert!(validate_expr(&p("x OR y"), &one, &no_or).is_err());
    }

    #[test]
    fn op_names_parse() {
        assert_eq!("and".parse::<Op>().unwrap(), Op::And);
        assert!(matches!(
            "XOR".parse::<Op>(),
            Err(Error::UnknownOperator(_))
        ));
    }

    #[test]
    fn generation() {
        let a = generate_bool_instance(BoolDifficulty::Basic, 0).unwrap();
        assert_eq!(a, generate_bool_instance(BoolDifficulty::Basic, 0).unwrap());
        assert_eq!(a.observations.len(), 4);
        assert!(!a.admissible.is_empty());

        // Independent count: naive trees, canonical dedupe, then filter.
        let oracle: BTreeSet<String> = naive_trees(&basic(), 2, false)
            .iter()
            .filter(|e| consistent(e, &a.observations))
            .map(|e| canon_expr(e).to_string())
            .collect();
        assert_eq!(a.admissible.len(), oracle.len());
        assert_eq!(oracle.len(), 2);
        assert_eq!(
            a.admissible.iter().cloned().collect::<BTreeSet<_>>(),
            oracle
        );

        for (difficulty, seed) in [(BoolDifficulty::Extended, 4), (BoolDifficulty::Full, 9)] {
            let inst = generate_bool_instance(difficulty, seed).unwrap();
            assert_eq!(inst.observations.len(), difficulty.coverage());
            assert!(!inst.admissible.is_empty());
        }
    }
}
