//! Line-oriented design spec language: a textual surface for the builder
//! pipeline, one section per builder call, plus the executor behind the CLI.

use crate::assign::AllotKind;
use crate::design::{format_num, Design, Role, Scalar};
use crate::error::{Error, Result};
use crate::factors::{LevelSpec, NestedSpec, PerParentRule, RuleSpec};
use crate::records::Expectation;
use crate::serve::DesignTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SpecAst {
    pub title: Option<String>,
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Units(Vec<(String, LevelSpec)>),
    Trts(Vec<(String, LevelSpec)>),
    Rcrds(Vec<(String, String)>),
    Expect(Vec<Expectation>),
    Allot(Vec<(String, String)>),
    Assign(AssignStmt),
    Output(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignStmt {
    pub order: Vec<String>,
    pub seed: Option<u64>,
    pub constrain: Vec<(String, Vec<String>)>,
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Tilde,
    Colon,
    Eq,
    Dot,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Tok {
    fn show(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format_num(*n),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBrack => "[".into(),
            Tok::RBrack => "]".into(),
            Tok::Comma => ",".into(),
            Tok::Tilde => "~".into(),
            Tok::Colon => ":".into(),
            Tok::Eq => "=".into(),
            Tok::Dot => ".".into(),
            Tok::Lt => "<".into(),
            Tok::Le => "<=".into(),
            Tok::Gt => ">".into(),
            Tok::Ge => ">=".into(),
        }
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

fn semantic(line: usize, msg: impl Into<String>) -> Error {
    Error::Semantic {
        line,
        msg: msg.into(),
    }
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '#' => break,
            '"' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(syntax(lineno, "unterminated string"));
                }
                toks.push(Tok::Str(chars[start..j].iter().collect()));
                i = j + 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '[' => {
                toks.push(Tok::LBrack);
                i += 1;
            }
            ']' => {
                toks.push(Tok::RBrack);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '~' => {
                toks.push(Tok::Tilde);
                i += 1;
            }
            ':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            '=' => {
                toks.push(Tok::Eq);
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Le);
                    i += 2;
                } else {
                    toks.push(Tok::Lt);
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Ge);
                    i += 2;
                } else {
                    toks.push(Tok::Gt);
                    i += 1;
                }
            }
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                toks.push(Tok::Dot);
                i += 1;
            }
            _ if c.is_ascii_digit()
                || c == '.'
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) =>
            {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n: f64 = text
                    .parse()
                    .map_err(|_| syntax(lineno, format!("bad number `{text}`")))?;
                toks.push(Tok::Num(n));
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    if d.is_alphanumeric() || d == '_' {
                        i += 1;
                    } else if d == '-' && chars.get(i + 1).is_some_and(|e| e.is_alphabetic()) {
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(syntax(lineno, format!("unexpected character `{c}`"))),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Token cursor

struct Cur {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
}

impl Cur {
    fn new(toks: Vec<Tok>, line: usize) -> Cur {
        Cur { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(self.line, "unexpected end of line"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        let got = self.next()?;
        if got == t {
            Ok(())
        } else {
            Err(syntax(
                self.line,
                format!("expected {} but found {}", t.show(), got.show()),
            ))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => Err(syntax(
                self.line,
                format!("expected a name but found {}", t.show()),
            )),
        }
    }

    fn num(&mut self) -> Result<f64> {
        match self.next()? {
            Tok::Num(n) => Ok(n),
            t => Err(syntax(
                self.line,
                format!("expected a number but found {}", t.show()),
            )),
        }
    }

    fn int(&mut self) -> Result<usize> {
        let n = self.num()?;
        if n.fract() != 0.0 || n < 0.0 {
            return Err(syntax(self.line, format!("expected an integer, found {n}")));
        }
        Ok(n as usize)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn done(&mut self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(syntax(
                self.line,
                format!("unexpected trailing {}", t.show()),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Units,
    Trts,
    Rcrds,
    Expect,
    Allot,
}

struct Parser {
    stmts: Vec<Stmt>,
    section: Section,
    /// names of declared unit and treatment factors, for semantic checks
    factors: Vec<String>,
    units: Vec<String>,
    records: Vec<String>,
}

pub fn parse_spec(text: &str) -> Result<SpecAst> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| syntax(1, "expected 'design'"))?;
    let mut c = Cur::new(tokenize(first, first_no)?, first_no);
    match c.peek() {
        Some(Tok::Ident(k)) if k == "design" => {
            c.pos += 1;
        }
        _ => return Err(syntax(first_no, "expected 'design'")),
    }
    let title = match c.peek() {
        Some(Tok::Str(s)) => {
            let s = s.clone();
            c.pos += 1;
            Some(s)
        }
        None => None,
        Some(t) => {
            return Err(syntax(
                first_no,
                format!("expected a quoted title but found {}", t.show()),
            ))
        }
    };
    c.done()?;

    let mut p = Parser {
        stmts: Vec::new(),
        section: Section::None,
        factors: Vec::new(),
        units: Vec::new(),
        records: Vec::new(),
    };
    for (no, raw) in lines {
        let trimmed = raw.trim();
        let section = match trimmed {
            "units:" => Some(Section::Units),
            "trts:" => Some(Section::Trts),
            "rcrds:" => Some(Section::Rcrds),
            "expect:" => Some(Section::Expect),
            "allot:" => Some(Section::Allot),
            _ => None,
        };
        if let Some(s) = section {
            p.open(s);
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("assign:") {
            p.open(Section::None);
            let stmt = p.parse_assign(&mut Cur::new(tokenize(rest, no)?, no))?;
            p.stmts.push(Stmt::Assign(stmt));
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("output:") {
            p.open(Section::None);
            let labels = p.parse_output(&mut Cur::new(tokenize(rest, no)?, no))?;
            p.stmts.push(Stmt::Output(labels));
            continue;
        }
        let mut c = Cur::new(tokenize(raw, no)?, no);
        p.declaration(&mut c)?;
        c.done()?;
    }
    p.open(Section::None);
    Ok(SpecAst {
        title,
        stmts: p.stmts,
    })
}

impl Parser {
    /// Closes the current section (if it gathered anything) and opens `s`.
    fn open(&mut self, s: Section) {
        self.section = s;
        match s {
            Section::Units => self.stmts.push(Stmt::Units(Vec::new())),
            Section::Trts => self.stmts.push(Stmt::Trts(Vec::new())),
            Section::Rcrds => self.stmts.push(Stmt::Rcrds(Vec::new())),
            Section::Expect => self.stmts.push(Stmt::Expect(Vec::new())),
            Section::Allot => self.stmts.push(Stmt::Allot(Vec::new())),
            Section::None => {}
        }
    }

    fn check_declared(&self, name: &str, line: usize) -> Result<()> {
        if self.factors.iter().any(|f| f == name) {
            Ok(())
        } else {
            Err(semantic(line, format!("unknown factor `{name}`")))
        }
    }

    fn declaration(&mut self, c: &mut Cur) -> Result<()> {
        match self.section {
            Section::None => Err(syntax(
                c.line,
                "declaration outside any section (expected a 'units:', 'trts:', 'rcrds:', 'expect:' or 'allot:' header first)",
            )),
            Section::Units | Section::Trts => {
                let name = c.ident()?;
                c.expect(Tok::Eq)?;
                let spec = self.level_spec(c)?;
                self.factors.push(name.clone());
                if self.section == Section::Units {
                    self.units.push(name.clone());
                }
                match self.stmts.last_mut() {
                    Some(Stmt::Units(v)) | Some(Stmt::Trts(v)) => v.push((name, spec)),
                    _ => unreachable!(),
                }
                Ok(())
            }
            Section::Rcrds => {
                let record = c.ident()?;
                let kw = c.ident()?;
                if kw != "of" {
                    return Err(syntax(c.line, format!("expected `of` but found `{kw}`")));
                }
                let unit = c.ident()?;
                if !self.units.iter().any(|u| u == &unit) {
                    return Err(semantic(c.line, format!("unknown unit `{unit}`")));
                }
                self.records.push(record.clone());
                if let Some(Stmt::Rcrds(v)) = self.stmts.last_mut() {
                    v.push((record, unit));
                }
                Ok(())
            }
            Section::Expect => {
                let record = c.ident()?;
                if !self.records.iter().any(|r| r == &record) {
                    return Err(semantic(c.line, format!("unknown record `{record}`")));
                }
                let exp = match c.next()? {
                    Tok::Lt => Expectation::Lt(record, c.num()?),
                    Tok::Le => Expectation::Le(record, c.num()?),
                    Tok::Gt => Expectation::Gt(record, c.num()?),
                    Tok::Ge => Expectation::Ge(record, c.num()?),
                    Tok::Ident(kw) if kw == "in" => {
                        c.expect(Tok::LBrack)?;
                        let mut allowed = Vec::new();
                        loop {
                            match c.next()? {
                                Tok::Str(s) => allowed.push(s),
                                Tok::Ident(s) => allowed.push(s),
                                t => {
                                    return Err(syntax(
                                        c.line,
                                        format!("expected a level but found {}", t.show()),
                                    ))
                                }
                            }
                            if !c.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        c.expect(Tok::RBrack)?;
                        Expectation::Levels(record, allowed)
                    }
                    t => {
                        return Err(syntax(
                            c.line,
                            format!("expected a comparison or `in` but found {}", t.show()),
                        ))
                    }
                };
                if let Some(Stmt::Expect(v)) = self.stmts.last_mut() {
                    v.push(exp);
                }
                Ok(())
            }
            Section::Allot => {
                let mut lhs = vec![c.ident()?];
                while c.eat(&Tok::Colon) {
                    lhs.push(c.ident()?);
                }
                c.expect(Tok::Tilde)?;
                let rhs = c.ident()?;
                for part in &lhs {
                    self.check_declared(part, c.line)?;
                }
                self.check_declared(&rhs, c.line)?;
                if let Some(Stmt::Allot(v)) = self.stmts.last_mut() {
                    v.push((lhs.join(":"), rhs));
                }
                Ok(())
            }
        }
    }

    fn level_spec(&self, c: &mut Cur) -> Result<LevelSpec> {
        match c.next()? {
            Tok::Num(n) => {
                if c.eat(&Tok::Colon) {
                    let hi = c.num()?;
                    if n.fract() != 0.0 || hi.fract() != 0.0 || hi < n {
                        return Err(syntax(c.line, "bad numeric sequence"));
                    }
                    Ok(LevelSpec::Values(
                        (n as i64..=hi as i64).map(|v| Scalar::Num(v as f64)).collect(),
                    ))
                } else if n.fract() != 0.0 || n < 1.0 {
                    Err(syntax(c.line, format!("level count must be a positive integer, found {n}")))
                } else {
                    Ok(LevelSpec::Count(n as usize))
                }
            }
            Tok::LBrack => Ok(LevelSpec::Values(self.scalar_list(c)?)),
            Tok::Ident(kw) => match kw.as_str() {
                "lvls" => {
                    c.expect(Tok::LParen)?;
                    c.expect(Tok::LBrack)?;
                    let vs = self.scalar_list(c)?;
                    c.expect(Tok::RParen)?;
                    Ok(LevelSpec::SingleLevels(vs))
                }
                "nested_in" => {
                    c.expect(Tok::LParen)?;
                    let parent = c.ident()?;
                    self.check_declared(&parent, c.line)?;
                    let inner = if c.eat(&Tok::Comma) {
                        match c.peek() {
                            Some(Tok::Str(_)) | Some(Tok::Dot) => NestedSpec::Rules(self.rules(c)?),
                            _ => NestedSpec::Spec(self.level_spec(c)?),
                        }
                    } else {
                        return Err(syntax(c.line, "nested_in needs a level specification"));
                    };
                    c.expect(Tok::RParen)?;
                    Ok(LevelSpec::Nested {
                        parent,
                        inner: Box::new(inner),
                    })
                }
                "crossed_by" => {
                    c.expect(Tok::LParen)?;
                    let mut parents = vec![c.ident()?];
                    while c.eat(&Tok::Comma) {
                        parents.push(c.ident()?);
                    }
                    c.expect(Tok::RParen)?;
                    for p in &parents {
                        self.check_declared(p, c.line)?;
                    }
                    Ok(LevelSpec::Crossed(parents))
                }
                "conditioned_on" => {
                    c.expect(Tok::LParen)?;
                    let parent = c.ident()?;
                    self.check_declared(&parent, c.line)?;
                    c.expect(Tok::Comma)?;
                    let rules = self.rules(c)?;
                    c.expect(Tok::RParen)?;
                    Ok(LevelSpec::Conditioned { parent, rules })
                }
                other => Err(syntax(
                    c.line,
                    format!("unknown level specification `{other}`"),
                )),
            },
            t => Err(syntax(
                c.line,
                format!("expected a level specification but found {}", t.show()),
            )),
        }
    }

    fn scalar_list(&self, c: &mut Cur) -> Result<Vec<Scalar>> {
        let mut vs = Vec::new();
        if c.eat(&Tok::RBrack) {
            return Ok(vs);
        }
        loop {
            match c.next()? {
                Tok::Num(n) => vs.push(Scalar::Num(n)),
                Tok::Str(s) => vs.push(Scalar::Text(s)),
                Tok::Ident(s) => vs.push(Scalar::Text(s)),
                t => {
                    return Err(syntax(
                        c.line,
                        format!("expected a value but found {}", t.show()),
                    ))
                }
            }
            if !c.eat(&Tok::Comma) {
                break;
            }
        }
        c.expect(Tok::RBrack)?;
        Ok(vs)
    }

    fn rules(&self, c: &mut Cur) -> Result<Vec<PerParentRule>> {
        let mut rules = Vec::new();
        loop {
            let matches = if c.eat(&Tok::Dot) {
                None
            } else {
                let mut labels = Vec::new();
                loop {
                    match c.next()? {
                        Tok::Str(s) => labels.push(s),
                        t => {
                            return Err(syntax(
                                c.line,
                                format!("expected a quoted parent level but found {}", t.show()),
                            ))
                        }
                    }
                    if !c.eat(&Tok::Comma) {
                        break;
                    }
                }
                Some(labels)
            };
            c.expect(Tok::Tilde)?;
            let spec = match c.next()? {
                Tok::Num(n) if n.fract() == 0.0 && n >= 1.0 => RuleSpec::Count(n as usize),
                Tok::LBrack => RuleSpec::Values(self.scalar_list(c)?),
                t => {
                    return Err(syntax(
                        c.line,
                        format!("expected a count or value list but found {}", t.show()),
                    ))
                }
            };
            rules.push(PerParentRule { matches, spec });
            if !c.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(rules)
    }

    fn name_list(&self, c: &mut Cur, check: bool) -> Result<Vec<String>> {
        c.expect(Tok::LBrack)?;
        let mut names = Vec::new();
        loop {
            match c.next()? {
                Tok::Ident(s) | Tok::Str(s) => names.push(s),
                t => {
                    return Err(syntax(
                        c.line,
                        format!("expected a name but found {}", t.show()),
                    ))
                }
            }
            if !c.eat(&Tok::Comma) {
                break;
            }
        }
        c.expect(Tok::RBrack)?;
        if check {
            for n in &names {
                self.check_declared(n, c.line)?;
            }
        }
        Ok(names)
    }

    fn parse_assign(&self, c: &mut Cur) -> Result<AssignStmt> {
        let kw = c.ident()?;
        if kw != "order" {
            return Err(syntax(c.line, format!("expected `order` but found `{kw}`")));
        }
        c.expect(Tok::Eq)?;
        let order = self.name_list(c, false)?;
        let mut stmt = AssignStmt {
            order,
            ..Default::default()
        };
        while c.eat(&Tok::Comma) {
            let kw = c.ident()?;
            match kw.as_str() {
                "seed" => {
                    c.expect(Tok::Eq)?;
                    stmt.seed = Some(c.int()? as u64);
                }
                "constrain" => {
                    c.expect(Tok::Colon)?;
                    loop {
                        let unit = c.ident()?;
                        self.check_declared(&unit, c.line)?;
                        c.expect(Tok::Eq)?;
                        let facs = self.name_list(c, true)?;
                        stmt.constrain.push((unit, facs));
                        if !c.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                other => {
                    return Err(syntax(
                        c.line,
                        format!("expected `seed` or `constrain` but found `{other}`"),
                    ))
                }
            }
        }
        c.done()?;
        Ok(stmt)
    }

    fn parse_output(&self, c: &mut Cur) -> Result<Vec<String>> {
        let kw = c.ident()?;
        if kw != "label_nested" {
            return Err(syntax(
                c.line,
                format!("expected `label_nested` but found `{kw}`"),
            ));
        }
        c.expect(Tok::Eq)?;
        let names = self.name_list(c, true)?;
        c.done()?;
        Ok(names)
    }
}

// ---------------------------------------------------------------------------
// Unparser

fn fmt_scalar(s: &Scalar) -> String {
    match s {
        Scalar::Num(n) => format_num(*n),
        Scalar::Text(t) => format!("\"{t}\""),
    }
}

fn fmt_scalar_list(vs: &[Scalar]) -> String {
    let inner: Vec<String> = vs.iter().map(fmt_scalar).collect();
    format!("[{}]", inner.join(", "))
}

fn fmt_rule_spec(s: &RuleSpec) -> String {
    match s {
        RuleSpec::Count(n) => n.to_string(),
        RuleSpec::Values(vs) => fmt_scalar_list(vs),
    }
}

fn fmt_rules(rules: &[PerParentRule]) -> String {
    rules
        .iter()
        .map(|r| {
            let lhs = match &r.matches {
                None => ".".to_string(),
                Some(labels) => labels
                    .iter()
                    .map(|l| format!("\"{l}\""))
                    .collect::<Vec<_>>()
                    .join(", "),
            };
            format!("{lhs} ~ {}", fmt_rule_spec(&r.spec))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_spec(spec: &LevelSpec) -> String {
    match spec {
        LevelSpec::Count(n) => n.to_string(),
        LevelSpec::Values(vs) => fmt_scalar_list(vs),
        LevelSpec::SingleLevels(vs) => format!("lvls({})", fmt_scalar_list(vs)),
        LevelSpec::Nested { parent, inner } => match inner.as_ref() {
            NestedSpec::Spec(s) => format!("nested_in({parent}, {})", fmt_spec(s)),
            NestedSpec::Rules(rs) => format!("nested_in({parent}, {})", fmt_rules(rs)),
        },
        LevelSpec::Crossed(parents) => format!("crossed_by({})", parents.join(", ")),
        LevelSpec::Conditioned { parent, rules } => {
            format!("conditioned_on({parent}, {})", fmt_rules(rules))
        }
    }
}

fn fmt_name_list(names: &[String]) -> String {
    format!("[{}]", names.join(", "))
}

pub fn unparse(ast: &SpecAst) -> String {
    let mut out = String::new();
    match &ast.title {
        Some(t) => out.push_str(&format!("design \"{t}\"\n")),
        None => out.push_str("design\n"),
    }
    for stmt in &ast.stmts {
        match stmt {
            Stmt::Units(decls) | Stmt::Trts(decls) => {
                out.push_str(if matches!(stmt, Stmt::Units(_)) {
                    "units:\n"
                } else {
                    "trts:\n"
                });
                for (name, spec) in decls {
                    out.push_str(&format!("  {name} = {}\n", fmt_spec(spec)));
                }
            }
            Stmt::Rcrds(pairs) => {
                out.push_str("rcrds:\n");
                for (record, unit) in pairs {
                    out.push_str(&format!("  {record} of {unit}\n"));
                }
            }
            Stmt::Expect(exps) => {
                out.push_str("expect:\n");
                for e in exps {
                    let line = match e {
                        Expectation::Gt(r, v) => format!("{r} > {}", format_num(*v)),
                        Expectation::Ge(r, v) => format!("{r} >= {}", format_num(*v)),
                        Expectation::Lt(r, v) => format!("{r} < {}", format_num(*v)),
                        Expectation::Le(r, v) => format!("{r} <= {}", format_num(*v)),
                        Expectation::Levels(r, allowed) => format!(
                            "{r} in [{}]",
                            allowed
                                .iter()
                                .map(|a| format!("\"{a}\""))
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                        Expectation::IsType(..) => continue,
                    };
                    out.push_str(&format!("  {line}\n"));
                }
            }
            Stmt::Allot(pairs) => {
                out.push_str("allot:\n");
                for (lhs, rhs) in pairs {
                    out.push_str(&format!("  {lhs} ~ {rhs}\n"));
                }
            }
            Stmt::Assign(a) => {
                out.push_str(&format!("assign: order = {}", fmt_name_list(&a.order)));
                if let Some(seed) = a.seed {
                    out.push_str(&format!(", seed = {seed}"));
                }
                if !a.constrain.is_empty() {
                    out.push_str(", constrain: ");
                    out.push_str(
                        &a.constrain
                            .iter()
                            .map(|(u, fs)| format!("{u} = {}", fmt_name_list(fs)))
                            .collect::<Vec<_>>()
                            .join(", "),
                    );
                }
                out.push('\n');
            }
            Stmt::Output(labels) => {
                out.push_str(&format!("output: label_nested = {}\n", fmt_name_list(labels)));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Executor

/// Runs the builder pipeline the spec describes and serves the table.
/// `seed_override` beats per-assign seeds; the `DESGRAPH_SEED` environment
/// variable is the lowest-precedence fallback.
pub fn run_spec(ast: &SpecAst, seed_override: Option<u64>) -> Result<(Design, DesignTable)> {
    let env_seed: Option<u64> = std::env::var("DESGRAPH_SEED")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut d = Design::new(ast.title.as_deref());
    let mut label_nested: Vec<String> = Vec::new();
    for stmt in &ast.stmts {
        match stmt {
            Stmt::Units(decls) => {
                d = d.set_units(decls.iter().map(|(n, s)| (n.clone(), s.clone())))?;
            }
            Stmt::Trts(decls) => {
                d = d.set_trts(decls.iter().map(|(n, s)| (n.clone(), s.clone())))?;
            }
            Stmt::Rcrds(pairs) => {
                d = d.set_rcrds(pairs.iter().map(|(r, u)| (r.clone(), u.clone())))?;
            }
            Stmt::Expect(exps) => {
                d = d.expect_rcrds(exps.clone())?;
            }
            Stmt::Allot(pairs) => {
                let mut units: Vec<(&str, &str)> = Vec::new();
                let mut trts: Vec<(&str, &str)> = Vec::new();
                for (lhs, rhs) in pairs {
                    let first = lhs.split(':').next().unwrap();
                    let role = d
                        .factor_by_name(first)
                        .map(|f| f.role)
                        .ok_or_else(|| Error::UnknownFactor(first.to_string()))?;
                    if role == Role::Unit {
                        units.push((lhs, rhs));
                    } else {
                        trts.push((lhs, rhs));
                    }
                }
                if !units.is_empty() {
                    d = d.allot_units(&units)?;
                }
                if !trts.is_empty() {
                    d = d.allot_trts(&trts)?;
                }
            }
            Stmt::Assign(a) => {
                let seed = seed_override.or(a.seed).or(env_seed);
                let order: Vec<&str> = a.order.iter().map(String::as_str).collect();
                let lists: Vec<Vec<&str>> = a
                    .constrain
                    .iter()
                    .map(|(_, fs)| fs.iter().map(String::as_str).collect())
                    .collect();
                let constrain: Vec<(&str, &[&str])> = a
                    .constrain
                    .iter()
                    .zip(&lists)
                    .map(|((u, _), fs)| (u.as_str(), fs.as_slice()))
                    .collect();
                let pending = |kind: AllotKind, d: &Design| {
                    d.allotments
                        .iter()
                        .enumerate()
                        .any(|(i, al)| al.kind == kind && !d.assigned[i])
                };
                if pending(AllotKind::UnitToUnit, &d) {
                    d = d.assign_units(&order, seed, &constrain)?;
                }
                if pending(AllotKind::TrtsToUnit, &d) {
                    d = d.assign_trts(&order, seed, &constrain)?;
                }
            }
            Stmt::Output(labels) => {
                label_nested = labels.clone();
            }
        }
    }
    let labels: Vec<&str> = label_nested.iter().map(String::as_str).collect();
    let table = d.serve_table(&labels)?;
    Ok((d, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CALF: &str = r#"
design "Effect of hay and anti-scour on calf weight"
units:
  pen = 8
  calf = nested_in(pen, 10)
trts:
  hay = 2
  antiscour = 2
rcrds:
  weight of calf
allot:
  hay ~ pen
  antiscour ~ calf
assign: order = [random, random], seed = 42
"#;

    #[test]
    fn calf_spec_parses_to_expected_ast() {
        let ast = parse_spec(CALF).unwrap();
        assert_eq!(
            ast.title.as_deref(),
            Some("Effect of hay and anti-scour on calf weight")
        );
        assert_eq!(
            ast.stmts,
            vec![
                Stmt::Units(vec![
                    ("pen".into(), LevelSpec::Count(8)),
                    (
                        "calf".into(),
                        LevelSpec::Nested {
                            parent: "pen".into(),
                            inner: Box::new(NestedSpec::Spec(LevelSpec::Count(10))),
                        }
                    ),
                ]),
                Stmt::Trts(vec![
                    ("hay".into(), LevelSpec::Count(2)),
                    ("antiscour".into(), LevelSpec::Count(2)),
                ]),
                Stmt::Rcrds(vec![("weight".into(), "calf".into())]),
                Stmt::Allot(vec![
                    ("hay".into(), "pen".into()),
                    ("antiscour".into(), "calf".into()),
                ]),
                Stmt::Assign(AssignStmt {
                    order: vec!["random".into(), "random".into()],
                    seed: Some(42),
                    constrain: vec![],
                }),
            ]
        );
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        let e = parse_spec("").unwrap_err();
        assert!(matches!(e, Error::Syntax { line: 1, .. }));
        assert!(e.to_string().contains("expected 'design'"));
    }

    #[test]
    fn undeclared_allot_is_semantic_with_name() {
        let spec = "design \"x\"\nunits:\n  unit = 4\nallot:\n  trt ~ unit\n";
        let e = parse_spec(spec).unwrap_err();
        match e {
            Error::Semantic { line, msg } => {
                assert_eq!(line, 5);
                assert!(msg.contains("trt"), "{msg}");
            }
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn forward_reference_in_nesting_rejected() {
        let spec = "design\nunits:\n  calf = nested_in(pen, 10)\n  pen = 8\n";
        let e = parse_spec(spec).unwrap_err();
        assert!(matches!(e, Error::Semantic { line: 3, .. }));
    }

    #[test]
    fn round_trip_is_a_fixpoint() {
        let ast = parse_spec(CALF).unwrap();
        let text = unparse(&ast);
        let ast2 = parse_spec(&text).unwrap();
        assert_eq!(ast, ast2);
        assert_eq!(unparse(&ast2), text);
    }

    #[test]
    fn sequences_values_and_rules_parse() {
        let spec = r#"
design "mix"
units:
  background = ["NT", "NNT", "NG"]
  rater = nested_in(background, "NT" ~ 10, "NNT" ~ 8, "NG" ~ 11)
  order = 1:10
  assess = crossed_by(rater, order)
trts:
  composition = [C1, C2, C3, C4, C5, C6, C7, C8, C9, C10]
rcrds:
  accuracy of assess
expect:
  accuracy >= 0
  accuracy <= 5
allot:
  composition ~ assess
"#;
        let ast = parse_spec(spec).unwrap();
        let Stmt::Units(units) = &ast.stmts[0] else {
            panic!()
        };
        assert_eq!(units.len(), 4);
        assert_eq!(
            units[2].1,
            LevelSpec::Values((1..=10).map(|n| Scalar::Num(n as f64)).collect())
        );
        let ast2 = parse_spec(&unparse(&ast)).unwrap();
        assert_eq!(ast, ast2);
    }

    #[test]
    fn run_calf_spec_gives_80_by_5() {
        let ast = parse_spec(CALF).unwrap();
        let (_, table) = run_spec(&ast, None).unwrap();
        assert_eq!(table.nrows(), 80);
        assert_eq!(table.columns.len(), 5);
    }

    #[test]
    fn seed_override_beats_spec_seed() {
        let ast = parse_spec(CALF).unwrap();
        let (_, a) = run_spec(&ast, Some(7)).unwrap();
        let (_, b) = run_spec(&ast, Some(7)).unwrap();
        let (_, c) = run_spec(&ast, Some(8)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn missing_assign_fails_at_serve() {
        let spec = "design\nunits:\n  unit = 4\ntrts:\n  trt = 2\nallot:\n  trt ~ unit\n";
        let ast = parse_spec(spec).unwrap();
        let e = run_spec(&ast, None).unwrap_err();
        assert!(matches!(e, Error::UnassignedTreatments(_)));
    }

    #[test]
    fn corrupted_token_reports_its_line() {
        let bad = CALF.replace("antiscour ~ calf", "antiscour ~~ calf");
        let e = parse_spec(&bad).unwrap_err();
        assert!(matches!(e, Error::Syntax { line: 13, .. }), "{e:?}");
    }
}
