//! Model file parsing and canonical printing.
//!
//! The format is line-oriented; `#` starts a comment and identifiers are
//! case-sensitive `[A-Za-z_][A-Za-z0-9_]*`:
//!
//! ```text
//! NODE <name> <max_level>            proper component
//! INPUT <name> <max_level>           input component (level externally fixed/sampled)
//! TARGET <name> <level> : <expr>     one rule; first match in file order wins, default 0
//! INIT <name>=<level> ...            fixed coordinates of the initial state
//! INIT <name>=SAMPLE                 coordinate sampled uniformly per run
//! INIT * SAMPLE                      full-state sampling
//! ORACLE <id> : <name>=<level|*> ... one pattern; repeat an id to union patterns
//! ```
//!
//! `expr` admits atoms `name (=|<=|>=) int`, `!`, `&`, `|` and parentheses,
//! with `&` binding tighter than `|`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BoolExpr, Cmp, ComponentDef, LogicalModel, Rule, State};
use crate::SparseDistribution;

/// Initial-condition specification: fixed coordinates plus coordinates
/// sampled uniformly at each run. Unlisted components default to level 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InitialSpec {
    pub fixed: BTreeMap<usize, u8>,
    pub sampled: BTreeSet<usize>,
}

impl InitialSpec {
    pub fn is_sampling(&self) -> bool {
        !self.sampled.is_empty()
    }

    /// The start state with all sampled coordinates at 0 (the point mass when
    /// nothing is sampled).
    pub fn base_state(&self, model: &LogicalModel) -> State {
        let mut v = vec![0u8; model.component_count()];
        for (&i, &level) in &self.fixed {
            v[i] = level;
        }
        v
    }

    /// Draws a start state: fixed coordinates as declared, sampled ones
    /// uniform over their domain, the rest 0.
    pub fn sample_state(&self, model: &LogicalModel, rng: &mut impl Rng) -> State {
        let mut v = self.base_state(model);
        for &i in &self.sampled {
            let radix = u16::from(model.component(i).max_level) + 1;
            v[i] = rng.random_range(0..radix) as u8;
        }
        v
    }

    /// The initial distribution as an explicit sparse map: a point mass, or
    /// the uniform product over the sampled coordinates.
    pub fn distribution(
        &self,
        model: &LogicalModel,
        cap: u128,
    ) -> Result<SparseDistribution> {
        let mut support: u128 = 1;
        for &i in &self.sampled {
            support = support
                .checked_mul(u128::from(model.component(i).max_level) + 1)
                .filter(|&s| s <= cap)
                .ok_or(Error::CapacityExceeded { cap })?;
        }
        let mass = 1.0 / support as f64;
        let mut dist = SparseDistribution::new();
        let sampled: Vec<usize> = self.sampled.iter().copied().collect();
        let mut v = self.base_state(model);
        let mut stack = vec![(0usize, 0u8)];
        // depth-first enumeration of the sampled coordinates
        if sampled.is_empty() {
            dist.insert(model.encode(&v), 1.0);
            return Ok(dist);
        }
        while let Some((depth, level)) = stack.pop() {
            if level > model.component(sampled[depth]).max_level {
                continue;
            }
            v[sampled[depth]] = level;
            stack.push((depth, level + 1));
            if depth + 1 == sampled.len() {
                dist.insert(model.encode(&v), mass);
            } else {
                stack.push((depth + 1, 0));
            }
        }
        Ok(dist)
    }
}

/// A set of states described by level patterns, standing for a known
/// attractor. A state matches iff it matches at least one pattern; a pattern
/// constrains some components to fixed levels and leaves the rest free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSpec {
    pub id: String,
    /// One entry per pattern: `Some(level)` per constrained component.
    pub patterns: Vec<Vec<Option<u8>>>,
}

impl OracleSpec {
    pub fn matches(&self, state: &[u8]) -> bool {
        self.patterns.iter().any(|pat| {
            pat.iter()
                .zip(state)
                .all(|(p, &v)| p.map_or(true, |level| level == v))
        })
    }

    /// Number of states in the pattern union (inclusion-exclusion over the
    /// pattern subcubes), saturating at `u64::MAX`.
    pub fn state_count(&self, model: &LogicalModel) -> u64 {
        let k = self.patterns.len();
        if k == 0 {
            return 0;
        }
        if k > 20 {
            // inclusion-exclusion blows up; sum of subcube sizes as a bound
            return self
                .patterns
                .iter()
                .fold(0u64, |acc, p| acc.saturating_add(subcube_size(model, p)));
        }
        let mut total: i128 = 0;
        for mask in 1u32..(1 << k) {
            let mut merged: Vec<Option<u8>> = vec![None; model.component_count()];
            let mut empty = false;
            'outer: for (pi, pat) in self.patterns.iter().enumerate() {
                if mask & (1 << pi) == 0 {
                    continue;
                }
                for (ci, p) in pat.iter().enumerate() {
                    if let Some(level) = p {
                        match merged[ci] {
                            Some(prev) if prev != *level => {
                                empty = true;
                                break 'outer;
                            }
                            _ => merged[ci] = Some(*level),
                        }
                    }
                }
            }
            if empty {
                continue;
            }
            let size = subcube_size(model, &merged) as i128;
            if mask.count_ones() % 2 == 1 {
                total += size;
            } else {
                total -= size;
            }
        }
        total.clamp(0, u64::MAX as i128) as u64
    }
}

fn subcube_size(model: &LogicalModel, pattern: &[Option<u8>]) -> u64 {
    let mut size: u64 = 1;
    for (i, p) in pattern.iter().enumerate() {
        if p.is_none() {
            size = size.saturating_mul(u64::from(model.component(i).max_level) + 1);
        }
    }
    size
}

/// A parsed model file: the model itself, the initial-condition spec and any
/// declared oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub model: LogicalModel,
    pub initial: InitialSpec,
    pub oracles: Vec<OracleSpec>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u32),
    Cmp(Cmp),
    And,
    Or,
    Not,
    LParen,
    RParen,
    Star,
}

fn tokenize(line: usize, text: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '&' => {
                toks.push(Tok::And);
                i += 1;
            }
            '|' => {
                toks.push(Tok::Or);
                i += 1;
            }
            '!' => {
                toks.push(Tok::Not);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '=' => {
                toks.push(Tok::Cmp(Cmp::Eq));
                i += 1;
            }
            '<' | '>' => {
                if i + 1 >= bytes.len() || bytes[i + 1] as char != '=' {
                    return Err(Error::parse(line, format!("expected '=' after '{c}'")));
                }
                toks.push(Tok::Cmp(if c == '<' { Cmp::Le } else { Cmp::Ge }));
                i += 2;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: u32 = text[start..i]
                    .parse()
                    .map_err(|_| Error::parse(line, "integer literal too large"))?;
                toks.push(Tok::Int(n));
            }
            'A'..='Z' | 'a'..='z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Tok::Ident(text[start..i].to_string()));
            }
            _ => return Err(Error::parse(line, format!("unexpected character '{c}'"))),
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    line: usize,
    toks: &'a [Tok],
    pos: usize,
    names: &'a BTreeMap<String, (usize, u8)>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    // expr := and ('|' and)*
    fn expr(&mut self) -> Result<BoolExpr> {
        let mut lhs = self.and()?;
        while matches!(self.peek(), Some(Tok::Or)) {
            self.next();
            let rhs = self.and()?;
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // and := unary ('&' unary)*
    fn and(&mut self) -> Result<BoolExpr> {
        let mut lhs = self.unary()?;
        while matches!(self.peek(), Some(Tok::And)) {
            self.next();
            let rhs = self.unary()?;
            lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<BoolExpr> {
        match self.next() {
            Some(Tok::Not) => Ok(BoolExpr::Not(Box::new(self.unary()?))),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(Error::parse(self.line, "expected ')'")),
                }
            }
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                let (comp, max_level) = *self
                    .names
                    .get(&name)
                    .ok_or_else(|| Error::parse(self.line, format!("unknown component '{name}'")))?;
                let cmp = match self.next() {
                    Some(Tok::Cmp(c)) => *c,
                    _ => {
                        return Err(Error::parse(
                            self.line,
                            format!("expected comparator after '{name}'"),
                        ))
                    }
                };
                let level = match self.next() {
                    Some(Tok::Int(n)) => *n,
                    _ => return Err(Error::parse(self.line, "expected level literal")),
                };
                if level > u32::from(max_level) {
                    return Err(Error::parse(
                        self.line,
                        format!("level out of range: '{name}' has max level {max_level}"),
                    ));
                }
                Ok(BoolExpr::Atom {
                    comp,
                    cmp,
                    level: level as u8,
                })
            }
            _ => Err(Error::parse(self.line, "expected expression")),
        }
    }
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses a model file into a validated [`ModelDocument`].
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    struct Decl {
        name: String,
        max_level: u8,
        is_input: bool,
    }
    let mut decls: Vec<Decl> = Vec::new();
    let mut names: BTreeMap<String, (usize, u8)> = BTreeMap::new();

    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("").trim();
            (i + 1, l)
        })
        .filter(|(_, l)| !l.is_empty())
        .collect();

    // first pass: component declarations
    for &(line, content) in &lines {
        let mut it = content.split_whitespace();
        let directive = it.next().unwrap();
        if directive != "NODE" && directive != "INPUT" {
            continue;
        }
        let name = it
            .next()
            .ok_or_else(|| Error::parse(line, format!("{directive} requires a name")))?;
        if !valid_ident(name) {
            return Err(Error::parse(line, format!("invalid identifier '{name}'")));
        }
        let max_level: u8 = it
            .next()
            .ok_or_else(|| Error::parse(line, format!("{directive} requires a max level")))?
            .parse()
            .map_err(|_| Error::parse(line, "invalid max level"))?;
        if max_level < 1 {
            return Err(Error::parse(line, "max level must be >= 1"));
        }
        if it.next().is_some() {
            return Err(Error::parse(line, format!("trailing input after {directive}")));
        }
        if names
            .insert(name.to_string(), (decls.len(), max_level))
            .is_some()
        {
            return Err(Error::parse(line, format!("duplicate component '{name}'")));
        }
        decls.push(Decl {
            name: name.to_string(),
            max_level,
            is_input: directive == "INPUT",
        });
    }
    if decls.is_empty() {
        return Err(Error::parse(1, "model declares no components"));
    }

    // second pass: rules, initial conditions, oracles
    let mut rules: Vec<Vec<Rule>> = vec![Vec::new(); decls.len()];
    let mut initial = InitialSpec::default();
    let mut full_sample = false;
    let mut oracle_order: Vec<String> = Vec::new();
    let mut oracle_patterns: BTreeMap<String, Vec<Vec<Option<u8>>>> = BTreeMap::new();

    for &(line, content) in &lines {
        let directive = content.split_whitespace().next().unwrap();
        match directive {
            "NODE" | "INPUT" => {}
            "TARGET" => {
                let rest = content["TARGET".len()..].trim_start();
                let (head, expr_text) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::parse(line, "TARGET requires ': <expr>'"))?;
                let mut it = head.split_whitespace();
                let name = it
                    .next()
                    .ok_or_else(|| Error::parse(line, "TARGET requires a component name"))?;
                let &(comp, max_level) = names
                    .get(name)
                    .ok_or_else(|| Error::parse(line, format!("unknown component '{name}'")))?;
                if decls[comp].is_input {
                    return Err(Error::parse(
                        line,
                        format!("input component '{name}' cannot have rules"),
                    ));
                }
                let target: u32 = it
                    .next()
                    .ok_or_else(|| Error::parse(line, "TARGET requires a level"))?
                    .parse()
                    .map_err(|_| Error::parse(line, "invalid target level"))?;
                if it.next().is_some() {
                    return Err(Error::parse(line, "trailing input before ':'"));
                }
                if target > u32::from(max_level) {
                    return Err(Error::parse(
                        line,
                        format!("level out of range: '{name}' has max level {max_level}"),
                    ));
                }
                let toks = tokenize(line, expr_text)?;
                let mut parser = ExprParser {
                    line,
                    toks: &toks,
                    pos: 0,
                    names: &names,
                };
                let condition = parser.expr()?;
                if parser.pos != toks.len() {
                    return Err(Error::parse(line, "trailing input after expression"));
                }
                rules[comp].push(Rule {
                    target: target as u8,
                    condition,
                });
            }
            "INIT" => {
                let toks = tokenize(line, content["INIT".len()..].trim_start())?;
                let mut pos = 0;
                while pos < toks.len() {
                    match &toks[pos] {
                        Tok::Star => {
                            // full-state sampling: INIT * SAMPLE (or *=SAMPLE)
                            pos += 1;
                            if matches!(toks.get(pos), Some(Tok::Cmp(Cmp::Eq))) {
                                pos += 1;
                            }
                            match toks.get(pos) {
                                Some(Tok::Ident(s)) if s == "SAMPLE" => pos += 1,
                                _ => {
                                    return Err(Error::parse(
                                        line,
                                        "expected SAMPLE after '*'",
                                    ))
                                }
                            }
                            full_sample = true;
                        }
                        Tok::Ident(name) => {
                            let name = name.clone();
                            let &(comp, max_level) = names.get(&name).ok_or_else(|| {
                                Error::parse(line, format!("unknown component '{name}'"))
                            })?;
                            pos += 1;
                            if !matches!(toks.get(pos), Some(Tok::Cmp(Cmp::Eq))) {
                                return Err(Error::parse(
                                    line,
                                    format!("expected '=' after '{name}'"),
                                ));
                            }
                            pos += 1;
                            let already = initial.fixed.contains_key(&comp)
                                || initial.sampled.contains(&comp);
                            if already {
                                return Err(Error::parse(
                                    line,
                                    format!("component '{name}' initialized twice"),
                                ));
                            }
                            match toks.get(pos) {
                                Some(Tok::Int(level)) => {
                                    if *level > u32::from(max_level) {
                                        return Err(Error::parse(
                                            line,
                                            format!(
                                                "level out of range: '{name}' has max level {max_level}"
                                            ),
                                        ));
                                    }
                                    initial.fixed.insert(comp, *level as u8);
                                }
                                Some(Tok::Ident(s)) if s == "SAMPLE" => {
                                    initial.sampled.insert(comp);
                                }
                                _ => {
                                    return Err(Error::parse(
                                        line,
                                        "expected a level or SAMPLE",
                                    ))
                                }
                            }
                            pos += 1;
                        }
                        _ => return Err(Error::parse(line, "malformed INIT entry")),
                    }
                }
            }
            "ORACLE" => {
                let rest = content["ORACLE".len()..].trim_start();
                let (id, pattern_text) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::parse(line, "ORACLE requires ': <pattern>'"))?;
                let id = id.trim();
                if !valid_ident(id) {
                    return Err(Error::parse(line, format!("invalid oracle id '{id}'")));
                }
                let toks = tokenize(line, pattern_text)?;
                let mut pattern: Vec<Option<u8>> = vec![None; decls.len()];
                let mut pos = 0;
                let mut any = false;
                while pos < toks.len() {
                    let name = match &toks[pos] {
                        Tok::Ident(name) => name.clone(),
                        _ => return Err(Error::parse(line, "malformed oracle pattern")),
                    };
                    let &(comp, max_level) = names.get(&name).ok_or_else(|| {
                        Error::parse(line, format!("unknown component '{name}'"))
                    })?;
                    pos += 1;
                    if !matches!(toks.get(pos), Some(Tok::Cmp(Cmp::Eq))) {
                        return Err(Error::parse(line, format!("expected '=' after '{name}'")));
                    }
                    pos += 1;
                    match toks.get(pos) {
                        Some(Tok::Int(level)) => {
                            if *level > u32::from(max_level) {
                                return Err(Error::parse(
                                    line,
                                    format!(
                                        "level out of range: '{name}' has max level {max_level}"
                                    ),
                                ));
                            }
                            pattern[comp] = Some(*level as u8);
                        }
                        Some(Tok::Star) => pattern[comp] = None,
                        _ => return Err(Error::parse(line, "expected a level or '*'")),
                    }
                    pos += 1;
                    any = true;
                }
                if !any {
                    return Err(Error::parse(line, "empty oracle pattern"));
                }
                if !oracle_patterns.contains_key(id) {
                    oracle_order.push(id.to_string());
                }
                oracle_patterns.entry(id.to_string()).or_default().push(pattern);
            }
            other => {
                return Err(Error::parse(line, format!("unknown directive '{other}'")));
            }
        }
    }

    if full_sample {
        if !initial.fixed.is_empty() || !initial.sampled.is_empty() {
            return Err(Error::parse(
                1,
                "INIT * SAMPLE cannot be combined with other INIT entries",
            ));
        }
        initial.sampled = (0..decls.len()).collect();
    }

    let components: Vec<ComponentDef> = decls
        .into_iter()
        .zip(rules)
        .map(|(d, rules)| ComponentDef {
            name: d.name,
            max_level: d.max_level,
            is_input: d.is_input,
            rules,
        })
        .collect();
    let model = LogicalModel::new(components)?;
    let oracles = oracle_order
        .into_iter()
        .map(|id| {
            let patterns = oracle_patterns.remove(&id).unwrap();
            OracleSpec { id, patterns }
        })
        .collect();

    Ok(ModelDocument {
        model,
        initial,
        oracles,
    })
}

fn print_expr(model: &LogicalModel, expr: &BoolExpr, out: &mut String) {
    // precedence: Or < And < Not/Atom
    fn prec(e: &BoolExpr) -> u8 {
        match e {
            BoolExpr::Or(..) => 0,
            BoolExpr::And(..) => 1,
            BoolExpr::Not(..) | BoolExpr::Atom { .. } => 2,
        }
    }
    fn rec(model: &LogicalModel, e: &BoolExpr, parent: u8, out: &mut String) {
        let p = prec(e);
        let parens = p < parent;
        if parens {
            out.push('(');
        }
        match e {
            BoolExpr::Atom { comp, cmp, level } => {
                out.push_str(&model.component(*comp).name);
                out.push_str(&cmp.to_string());
                out.push_str(&level.to_string());
            }
            BoolExpr::Not(inner) => {
                out.push('!');
                rec(model, inner, 2, out);
            }
            BoolExpr::And(a, b) => {
                rec(model, a, 1, out);
                out.push_str(" & ");
                rec(model, b, 1, out);
            }
            BoolExpr::Or(a, b) => {
                rec(model, a, 0, out);
                out.push_str(" | ");
                rec(model, b, 0, out);
            }
        }
        if parens {
            out.push(')');
        }
    }
    rec(model, expr, 0, out);
}

/// Prints a document in canonical form: declarations, then rules grouped per
/// component, then INIT, then oracles. `parse(print(parse(t))) == parse(t)`.
pub fn print_document(doc: &ModelDocument) -> String {
    let model = &doc.model;
    let mut out = String::new();
    for c in model.components() {
        let kw = if c.is_input { "INPUT" } else { "NODE" };
        out.push_str(&format!("{kw} {} {}\n", c.name, c.max_level));
    }
    for c in model.components() {
        for rule in &c.rules {
            out.push_str(&format!("TARGET {} {} : ", c.name, rule.target));
            print_expr(model, &rule.condition, &mut out);
            out.push('\n');
        }
    }
    if doc.initial.sampled.len() == model.component_count() {
        out.push_str("INIT * SAMPLE\n");
    } else if !doc.initial.fixed.is_empty() || !doc.initial.sampled.is_empty() {
        out.push_str("INIT");
        for (&i, &level) in &doc.initial.fixed {
            out.push_str(&format!(" {}={}", model.component(i).name, level));
        }
        for &i in &doc.initial.sampled {
            out.push_str(&format!(" {}=SAMPLE", model.component(i).name));
        }
        out.push('\n');
    }
    for oracle in &doc.oracles {
        for pattern in &oracle.patterns {
            out.push_str(&format!("ORACLE {} :", oracle.id));
            let mut any = false;
            for (i, p) in pattern.iter().enumerate() {
                if let Some(level) = p {
                    out.push_str(&format!(" {}={}", model.component(i).name, level));
                    any = true;
                }
            }
            if !any {
                // fully wildcarded pattern must still mention a component
                out.push_str(&format!(" {}=*", model.component(0).name));
            }
            out.push('\n');
        }
    }
    out
}
