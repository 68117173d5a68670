//! Tokenizer and recursive-descent parser for the model-file language.
//!
//! ```text
//! # comment
//! dim = 2
//! param eps = 0.05
//! dx/dt = (x + y - x^3/3) / eps
//! dy/dt = -x
//! ```
//!
//! Statements are separated by newlines or `;`. Expressions use `+ - * /`,
//! right-associative `^`, unary minus, parentheses and the functions
//! `sin cos exp ln sqrt tanh`. Error offsets are byte offsets into the
//! original source.

use super::expr::{BinOp, Expr, Func, VARIABLE_NAMES};
use super::ModelError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str, base: usize) -> Result<Vec<Token>, ModelError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ModelError::Syntax {
                offset: base + start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(value),
                offset: base + start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: base + start,
            });
        } else if "+-*/^()=".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                offset: base + start,
            });
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ModelError::Syntax {
                offset: base + start,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

/// Resolves identifiers while parsing an expression.
pub(crate) struct Symbols<'a> {
    pub dimension: usize,
    pub params: &'a [(String, f64)],
    /// When false, state variables are rejected (constant expressions).
    pub allow_variables: bool,
}

impl Symbols<'_> {
    fn resolve(&self, name: &str, offset: usize) -> Result<Expr, ModelError> {
        if name == "t" {
            return Err(ModelError::NonAutonomous { offset });
        }
        if self.allow_variables {
            if let Some(i) = VARIABLE_NAMES[..self.dimension]
                .iter()
                .position(|v| *v == name)
            {
                return Ok(Expr::Var(i));
            }
        }
        if let Some(i) = self.params.iter().position(|(p, _)| p == name) {
            return Ok(Expr::Param(i));
        }
        Err(ModelError::UndeclaredSymbol {
            name: name.to_string(),
            offset,
        })
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Offset just past the statement, reported when input runs out.
    end: usize,
    symbols: &'a Symbols<'a>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_sym(&self) -> Option<char> {
        match self.peek() {
            Some(Tok::Sym(c)) => Some(*c),
            _ => None,
        }
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn error(&self, message: impl Into<String>) -> ModelError {
        ModelError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    /// Error for a missing operand: points at the operator that needed it
    /// when the statement ended early.
    fn missing_operand(&self) -> ModelError {
        if self.pos >= self.tokens.len() {
            if let Some(prev) = self.pos.checked_sub(1).and_then(|p| self.tokens.get(p)) {
                return ModelError::Syntax {
                    offset: prev.offset,
                    message: "expression ends after operator".into(),
                };
            }
            return self.error("expected an expression");
        }
        self.error("expected an operand")
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ModelError> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn expression(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        if self.peek_sym() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ModelError> {
        let base = self.primary()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            // right-associative, and admits a signed exponent: x^-2
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ModelError> {
        let Some(token) = self.tokens.get(self.pos) else {
            return Err(self.missing_operand());
        };
        let offset = token.offset;
        match &token.tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(*v))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(name) {
                    if self.peek_sym() != Some('(') {
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    self.pos += 1;
                    let arg = self.expression()?;
                    self.expect_sym(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.symbols.resolve(name, offset)
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect_sym(')')?;
                Ok(inner)
            }
            Tok::Sym(c) => Err(ModelError::Syntax {
                offset,
                message: format!("unexpected `{c}`"),
            }),
        }
    }
}

/// Parses a complete expression from `tokens`, rejecting trailing input.
fn parse_tokens(tokens: &[Token], end: usize, symbols: &Symbols) -> Result<Expr, ModelError> {
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
        symbols,
    };
    let expr = parser.expression()?;
    if parser.pos < tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

/// Parses a standalone expression, e.g. a user scalar `x^2 + y^2 - 1`.
pub(crate) fn parse_expression(text: &str, symbols: &Symbols) -> Result<Expr, ModelError> {
    let tokens = tokenize(text, 0)?;
    parse_tokens(&tokens, text.len(), symbols)
}

/// Raw content of a model file before it becomes a [`super::VectorField`].
#[derive(Debug)]
pub(crate) struct ModelSource {
    pub dimension: usize,
    pub params: Vec<(String, f64)>,
    pub components: Vec<Expr>,
}

struct Statement<'a> {
    text: &'a str,
    offset: usize,
}

fn statements(src: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in src.split_inclusive('\n') {
        let code = line.split('#').next().unwrap_or("");
        let mut start = 0;
        for piece in code.split(';') {
            let trimmed = piece.trim_end_matches(['\n', '\r']);
            if !trimmed.trim().is_empty() {
                out.push(Statement {
                    text: trimmed,
                    offset: line_start + start,
                });
            }
            start += piece.len() + 1;
        }
        line_start += line.len();
    }
    out
}

fn ident_at(tokens: &[Token], i: usize) -> Option<&str> {
    match tokens.get(i).map(|t| &t.tok) {
        Some(Tok::Ident(s)) => Some(s),
        _ => None,
    }
}

fn sym_at(tokens: &[Token], i: usize) -> Option<char> {
    match tokens.get(i).map(|t| &t.tok) {
        Some(Tok::Sym(c)) => Some(*c),
        _ => None,
    }
}

fn is_reserved(name: &str) -> bool {
    VARIABLE_NAMES.contains(&name)
        || name == "t"
        || name == "dim"
        || name == "param"
        || Func::from_name(name).is_some()
}

pub(crate) fn parse_model_source(src: &str) -> Result<ModelSource, ModelError> {
    let stmts = statements(src);
    let mut dimension: Option<usize> = None;
    let mut params: Vec<(String, f64)> = Vec::new();
    let mut equations: Vec<(Vec<Token>, usize)> = Vec::new();

    for stmt in &stmts {
        let tokens = tokenize(stmt.text, stmt.offset)?;
        let end = stmt.offset + stmt.text.len();
        let err_at = |i: usize, message: &str| ModelError::Syntax {
            offset: tokens.get(i).map_or(end, |t| t.offset),
            message: message.to_string(),
        };
        match ident_at(&tokens, 0) {
            Some("dim") => {
                if sym_at(&tokens, 1) != Some('=') {
                    return Err(err_at(1, "expected `=` after `dim`"));
                }
                let value = match tokens.get(2).map(|t| &t.tok) {
                    Some(Tok::Num(v)) => *v,
                    _ => return Err(err_at(2, "expected the dimension")),
                };
                if tokens.len() > 3 {
                    return Err(err_at(3, "unexpected trailing input"));
                }
                if dimension.is_some() {
                    return Err(err_at(0, "dimension declared twice"));
                }
                if value != 2.0 && value != 3.0 {
                    return Err(ModelError::Dimension(value));
                }
                dimension = Some(value as usize);
            }
            Some("param") => {
                let Some(name) = ident_at(&tokens, 1) else {
                    return Err(err_at(1, "expected a parameter name"));
                };
                if is_reserved(name) {
                    return Err(err_at(1, "reserved name cannot be a parameter"));
                }
                if params.iter().any(|(p, _)| p == name) {
                    return Err(err_at(1, "parameter declared twice"));
                }
                if sym_at(&tokens, 2) != Some('=') {
                    return Err(err_at(2, "expected `=`"));
                }
                let symbols = Symbols {
                    dimension: 0,
                    params: &params,
                    allow_variables: false,
                };
                let expr = parse_tokens(&tokens[3..], end, &symbols)?;
                let value = expr.eval(&[0.0], &params.iter().map(|p| p.1).collect::<Vec<_>>())?;
                if !value.is_finite() {
                    return Err(err_at(3, "parameter value is not finite"));
                }
                params.push((name.to_string(), value));
            }
            Some(head) if head.starts_with('d') && head.len() == 2 => {
                let var = &head[1..];
                let Some(index) = VARIABLE_NAMES.iter().position(|v| *v == var) else {
                    return Err(err_at(0, "unknown state variable"));
                };
                if sym_at(&tokens, 1) != Some('/') || ident_at(&tokens, 2) != Some("dt") {
                    return Err(err_at(1, "expected `/dt`"));
                }
                if sym_at(&tokens, 3) != Some('=') {
                    return Err(err_at(3, "expected `=`"));
                }
                if index != equations.len() {
                    return Err(err_at(0, "equations must appear in the order dx, dy, dz"));
                }
                equations.push((tokens[4..].to_vec(), end));
            }
            _ => return Err(err_at(0, "expected `dim`, `param` or `d<var>/dt`")),
        }
    }

    let dimension = dimension.ok_or(ModelError::MissingDimension)?;
    let symbols = Symbols {
        dimension,
        params: &params,
        allow_variables: true,
    };
    let components = equations
        .iter()
        .map(|(tokens, end)| parse_tokens(tokens, *end, &symbols))
        .collect::<Result<Vec<_>, _>>()?;
    if components.len() != dimension {
        return Err(ModelError::EquationCount {
            dimension,
            found: components.len(),
        });
    }
    Ok(ModelSource {
        dimension,
        params,
        components,
    })
}
