//! A small condition language over dialogue variables.
//!
//! Conditions are boolean formulas of equality/inequality atoms joined with
//! `&&`, `||` and `!`. Operands are the variables `a_m`, `i_u`, `i_u'`, the
//! context variable names, the template variable `X` (ranging over
//! intentions) or labels such as `Confirm(X)`, `Execute(*)`, `'Box'`.
//!
//! ```text
//! a_m == Confirm(X) && i_u != X
//! !(a_m == Execute(*)) && holding == Box
//! ```
//!
//! A condition that mentions `X` holds when some binding of `X` satisfies
//! it; the first such binding (in intention order) is reported so effects
//! can reuse it.

use crate::domain::Vocabulary;
use crate::error::{Error, Result};

/// A variable a condition may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    MachineAction,
    Intention,
    NextIntention,
    Context(usize),
    Template,
}

impl Var {
    fn kind(self) -> Kind {
        match self {
            Var::MachineAction => Kind::Action,
            Var::Intention | Var::NextIntention | Var::Template => Kind::Intention,
            Var::Context(k) => Kind::Context(k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Action,
    Intention,
    Context(usize),
}

/// Where a condition is evaluated; decides which variables are bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// `a_m`, `i_u`, context, `X`.
    State,
    /// `a_m`, `i_u'`, context, `X`.
    NextState,
}

impl Scope {
    fn allows(self, var: Var) -> bool {
        !matches!(
            (self, var),
            (Scope::State, Var::NextIntention) | (Scope::NextState, Var::Intention)
        )
    }
}

/// A label with optional `X` placeholders and `*` wildcards.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPattern {
    text: String,
    segments: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq)]
enum Segment {
    Lit(String),
    Template,
    Any,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

impl LabelPattern {
    pub fn parse(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let mut segments = Vec::new();
        let mut lit = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let standalone_x = c == 'X'
                && (i == 0 || !is_ident_char(chars[i - 1]))
                && (i + 1 == chars.len() || !is_ident_char(chars[i + 1]));
            if standalone_x || c == '*' {
                if !lit.is_empty() {
                    segments.push(Segment::Lit(std::mem::take(&mut lit)));
                }
                segments.push(if c == '*' { Segment::Any } else { Segment::Template });
            } else {
                lit.push(c);
            }
        }
        if !lit.is_empty() {
            segments.push(Segment::Lit(lit));
        }
        Self {
            text: text.to_string(),
            segments,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn mentions_template(&self) -> bool {
        self.segments.contains(&Segment::Template)
    }

    pub fn has_wildcard(&self) -> bool {
        self.segments.contains(&Segment::Any)
    }

    /// The concrete label under a binding of `X`; `None` with wildcards or
    /// an unbound `X`.
    pub fn substitute(&self, x: Option<&str>) -> Option<String> {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Lit(l) => out.push_str(l),
                Segment::Template => out.push_str(x?),
                Segment::Any => return None,
            }
        }
        Some(out)
    }

    pub fn matches(&self, label: &str, x: Option<&str>) -> bool {
        let mut parts: Vec<Option<String>> = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Lit(l) => parts.push(Some(l.clone())),
                Segment::Template => match x {
                    Some(v) => parts.push(Some(v.to_string())),
                    None => return false,
                },
                Segment::Any => parts.push(None),
            }
        }
        glob_match(&parts, label)
    }
}

/// Matches literal pieces and `*` (one or more characters) against `text`.
fn glob_match(parts: &[Option<String>], text: &str) -> bool {
    match parts.split_first() {
        None => text.is_empty(),
        Some((Some(lit), rest)) => text
            .strip_prefix(lit.as_str())
            .is_some_and(|tail| glob_match(rest, tail)),
        Some((None, rest)) => text
            .char_indices()
            .skip(1)
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .filter(|&i| i > 0)
            .any(|i| glob_match(rest, &text[i..])),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Var(Var),
    Label(LabelPattern),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(bool),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Cmp {
        left: Operand,
        right: Operand,
        equal: bool,
    },
}

/// Bindings of the dialogue variables at evaluation time.
#[derive(Clone, Copy, Debug, Default)]
pub struct Env<'a> {
    pub action: Option<usize>,
    pub intention: Option<usize>,
    pub next_intention: Option<usize>,
    pub context: &'a [usize],
}

/// A parsed and vocabulary-checked condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    source: String,
    expr: Expr,
    uses_template: bool,
}

impl Condition {
    pub fn always() -> Self {
        Self {
            source: "true".into(),
            expr: Expr::Const(true),
            uses_template: false,
        }
    }

    pub fn parse(source: &str, vocab: &Vocabulary, scope: Scope) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            source,
            vocab,
            scope,
        };
        let expr = parser.or()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        let uses_template = expr_uses_template(&expr);
        Ok(Self {
            source: source.to_string(),
            expr,
            uses_template,
        })
    }

    /// Conjunction of two conditions sharing the template binding.
    pub fn and(self, other: Condition) -> Self {
        Self {
            source: format!("({}) && ({})", self.source, other.source),
            uses_template: self.uses_template || other.uses_template,
            expr: Expr::And(vec![self.expr, other.expr]),
        }
    }

    /// `a_m == pattern`, checked against the action vocabulary.
    pub fn action_matches(pattern: &str, vocab: &Vocabulary) -> Result<Self> {
        let label = LabelPattern::parse(pattern);
        check_label(&label, Kind::Action, vocab).map_err(|message| Error::Condition {
            expr: pattern.to_string(),
            message,
        })?;
        Ok(Self {
            source: format!("a_m == {pattern}"),
            uses_template: label.mentions_template(),
            expr: Expr::Cmp {
                left: Operand::Var(Var::MachineAction),
                right: Operand::Label(label),
                equal: true,
            },
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_template(&self) -> bool {
        self.uses_template
    }

    pub fn eval(&self, vocab: &Vocabulary, env: &Env, x: Option<usize>) -> bool {
        eval_expr(&self.expr, vocab, env, x)
    }

    /// First satisfying binding of `X`: `Some(None)` when the condition holds
    /// without a template, `None` when it does not hold.
    pub fn find_binding(&self, vocab: &Vocabulary, env: &Env) -> Option<Option<usize>> {
        if !self.uses_template {
            return self.eval(vocab, env, None).then_some(None);
        }
        (0..vocab.intentions.len())
            .find(|&x| self.eval(vocab, env, Some(x)))
            .map(Some)
    }
}

fn expr_uses_template(expr: &Expr) -> bool {
    match expr {
        Expr::Const(_) => false,
        Expr::Not(e) => expr_uses_template(e),
        Expr::And(es) | Expr::Or(es) => es.iter().any(expr_uses_template),
        Expr::Cmp { left, right, .. } => [left, right].iter().any(|o| match o {
            Operand::Var(v) => *v == Var::Template,
            Operand::Label(l) => l.mentions_template(),
        }),
    }
}

fn eval_expr(expr: &Expr, vocab: &Vocabulary, env: &Env, x: Option<usize>) -> bool {
    match expr {
        Expr::Const(b) => *b,
        Expr::Not(e) => !eval_expr(e, vocab, env, x),
        Expr::And(es) => es.iter().all(|e| eval_expr(e, vocab, env, x)),
        Expr::Or(es) => es.iter().any(|e| eval_expr(e, vocab, env, x)),
        Expr::Cmp { left, right, equal } => {
            let holds = compare(left, right, vocab, env, x);
            holds == *equal
        }
    }
}

fn var_value(var: Var, env: &Env, x: Option<usize>) -> Option<usize> {
    match var {
        Var::MachineAction => env.action,
        Var::Intention => env.intention,
        Var::NextIntention => env.next_intention,
        Var::Context(k) => env.context.get(k).copied(),
        Var::Template => x,
    }
}

fn var_label(var: Var, value: usize, vocab: &Vocabulary) -> &str {
    match var.kind() {
        Kind::Action => &vocab.actions[value].label,
        Kind::Intention => &vocab.intentions[value],
        Kind::Context(k) => &vocab.context_vars[k].values[value],
    }
}

fn compare(left: &Operand, right: &Operand, vocab: &Vocabulary, env: &Env, x: Option<usize>) -> bool {
    let x_label = x.map(|i| vocab.intentions[i].as_str());
    match (left, right) {
        (Operand::Var(a), Operand::Var(b)) => {
            match (var_value(*a, env, x), var_value(*b, env, x)) {
                (Some(va), Some(vb)) => va == vb,
                _ => false,
            }
        }
        (Operand::Var(v), Operand::Label(p)) | (Operand::Label(p), Operand::Var(v)) => {
            match var_value(*v, env, x) {
                Some(value) => p.matches(var_label(*v, value, vocab), x_label),
                None => false,
            }
        }
        (Operand::Label(_), Operand::Label(_)) => false,
    }
}

fn kind_values(kind: Kind, vocab: &Vocabulary) -> Vec<&str> {
    match kind {
        Kind::Action => vocab.actions.iter().map(|a| a.label.as_str()).collect(),
        Kind::Intention => vocab.intentions.iter().map(String::as_str).collect(),
        Kind::Context(k) => vocab.context_vars[k].values.iter().map(String::as_str).collect(),
    }
}

/// A label must match at least one value of the variable it is compared to,
/// for some binding of `X`.
fn check_label(label: &LabelPattern, kind: Kind, vocab: &Vocabulary) -> std::result::Result<(), String> {
    let values = kind_values(kind, vocab);
    let bindings: Vec<Option<&str>> = if label.mentions_template() {
        vocab.intentions.iter().map(|s| Some(s.as_str())).collect()
    } else {
        vec![None]
    };
    let found = bindings
        .iter()
        .any(|x| values.iter().any(|v| label.matches(v, *x)));
    if found {
        Ok(())
    } else {
        Err(format!("label `{}` matches no value", label.text()))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Eq,
    Ne,
    Assign,
    Word(String),
    Quoted(String),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let err = |message: &str| Error::Condition {
        expr: src.to_string(),
        message: message.to_string(),
    };
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '&' if chars.get(i + 1) == Some(&'&') => {
                out.push(Token::And);
                i += 2;
            }
            '|' if chars.get(i + 1) == Some(&'|') => {
                out.push(Token::Or);
                i += 2;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                out.push(Token::Ne);
                i += 2;
            }
            '!' => {
                out.push(Token::Not);
                i += 1;
            }
            '=' if chars.get(i + 1) == Some(&'=') => {
                out.push(Token::Eq);
                i += 2;
            }
            '=' => {
                out.push(Token::Assign);
                i += 1;
            }
            '\'' | '"' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| err("unterminated quote"))?;
                out.push(Token::Quoted(chars[i + 1..i + 1 + end].iter().collect()));
                i += end + 2;
            }
            c if is_ident_char(c) || c == '*' || c == '-' || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (is_ident_char(chars[i]) || matches!(chars[i], '*' | '-' | '.'))
                {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '(' {
                    let mut depth = 0;
                    loop {
                        match chars.get(i) {
                            Some('(') => depth += 1,
                            Some(')') => {
                                depth -= 1;
                                if depth == 0 {
                                    i += 1;
                                    break;
                                }
                            }
                            Some(_) => {}
                            None => return Err(err("unbalanced parentheses in label")),
                        }
                        i += 1;
                    }
                }
                out.push(Token::Word(chars[start..i].iter().collect()));
            }
            _ => return Err(err(&format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    source: &'a str,
    vocab: &'a Vocabulary,
    scope: Scope,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Condition {
            expr: self.source.to_string(),
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn or(&mut self) -> Result<Expr> {
        let mut terms = vec![self.and()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
    }

    fn and(&mut self) -> Result<Expr> {
        let mut terms = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::And(terms) })
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::Word(w)) if (w == "true" || w == "false") && !self.next_is_comparison() => {
                let value = w == "true";
                self.pos += 1;
                Ok(Expr::Const(value))
            }
            Some(_) => self.comparison(),
            None => Err(self.error("unexpected end of condition")),
        }
    }

    fn next_is_comparison(&self) -> bool {
        matches!(self.tokens.get(self.pos + 1), Some(Token::Eq | Token::Ne))
    }

    fn comparison(&mut self) -> Result<Expr> {
        let left = self.operand()?;
        let equal = match self.peek() {
            Some(Token::Eq) => true,
            Some(Token::Ne) => false,
            _ => return Err(self.error("expected `==` or `!=`")),
        };
        self.pos += 1;
        let right = self.operand()?;
        self.check_types(&left, &right)?;
        Ok(Expr::Cmp { left, right, equal })
    }

    fn operand(&mut self) -> Result<Operand> {
        let token = self.peek().cloned();
        self.pos += 1;
        match token {
            Some(Token::Quoted(q)) => Ok(Operand::Label(LabelPattern::parse(&q))),
            Some(Token::Word(w)) => {
                let op = resolve_word(&w, self.vocab);
                if let Operand::Var(v) = op {
                    if !self.scope.allows(v) {
                        return Err(self.error(&format!("`{w}` is not available here")));
                    }
                }
                Ok(op)
            }
            _ => Err(self.error("expected a variable or label")),
        }
    }

    fn check_types(&self, left: &Operand, right: &Operand) -> Result<()> {
        match (left, right) {
            (Operand::Var(a), Operand::Var(b)) => {
                if a.kind() != b.kind() {
                    return Err(self.error("compared variables have different types"));
                }
            }
            (Operand::Var(v), Operand::Label(l)) | (Operand::Label(l), Operand::Var(v)) => {
                check_label(l, v.kind(), self.vocab).map_err(|m| self.error(&m))?;
            }
            (Operand::Label(a), Operand::Label(b)) => {
                return Err(self.error(&format!(
                    "cannot compare two labels `{}` and `{}`",
                    a.text(),
                    b.text()
                )))
            }
        }
        Ok(())
    }
}

/// Reserved names become variables; anything else is a label.
pub(crate) fn resolve_word(word: &str, vocab: &Vocabulary) -> Operand {
    match word {
        "a_m" => Operand::Var(Var::MachineAction),
        "i_u" => Operand::Var(Var::Intention),
        "i_u'" => Operand::Var(Var::NextIntention),
        "X" => Operand::Var(Var::Template),
        _ => match vocab.context_vars.iter().position(|c| c.name == word) {
            Some(k) => Operand::Var(Var::Context(k)),
            None => Operand::Label(LabelPattern::parse(word)),
        },
    }
}

/// Splits `lhs = rhs` (used by effects and prior overrides).
pub(crate) fn split_assignment(text: &str) -> Result<(String, String)> {
    let err = |m: &str| Error::Condition {
        expr: text.to_string(),
        message: m.to_string(),
    };
    let tokens = tokenize(text)?;
    match tokens.as_slice() {
        [Token::Word(lhs), Token::Assign, rhs] => {
            let rhs = match rhs {
                Token::Word(w) => w.clone(),
                Token::Quoted(q) => format!("'{q}'"),
                _ => return Err(err("expected a value after `=`")),
            };
            Ok((lhs.clone(), rhs))
        }
        _ => Err(err("expected `variable = value`")),
    }
}
