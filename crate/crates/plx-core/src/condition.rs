//! Presence conditions: boolean formulas over feature names.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or   := and ('|' and)*
//! and  := fact ('&' fact)*
//! fact := '!' fact | '(' or ')' | NAME
//! ```
//!
//! Names may contain letters, digits, `_`, `.`, `-` and `%` (the last for
//! percent-encoded parameter values in generated feature names). The parser
//! flattens nested conjunctions and disjunctions, and [`Condition`]'s
//! `Display` prints with minimal parentheses, so printing and reparsing is
//! the identity on the structure.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A boolean formula over feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Name(String),
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

impl Condition {
    /// Evaluates the formula. `is_selected` answers whether a feature name
    /// is part of the configuration.
    pub fn eval(&self, is_selected: &impl Fn(&str) -> bool) -> bool {
        match self {
            Condition::Name(n) => is_selected(n),
            Condition::Not(c) => !c.eval(is_selected),
            Condition::And(cs) => cs.iter().all(|c| c.eval(is_selected)),
            Condition::Or(cs) => cs.iter().any(|c| c.eval(is_selected)),
        }
    }

    /// All feature names the formula mentions, in first-use order without
    /// duplicates.
    pub fn names(&self) -> Vec<&str> {
        fn collect<'a>(c: &'a Condition, out: &mut Vec<&'a str>) {
            match c {
                Condition::Name(n) => {
                    if !out.contains(&n.as_str()) {
                        out.push(n);
                    }
                }
                Condition::Not(inner) => collect(inner, out),
                Condition::And(cs) | Condition::Or(cs) => {
                    for c in cs {
                        collect(c, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        collect(self, &mut out);
        out
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Precedence levels: Or = 0, And = 1, Not/Name = 2. A child prints
        // parenthesized when its level is below its context's.
        fn write(c: &Condition, level: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let own = match c {
                Condition::Or(_) => 0,
                Condition::And(_) => 1,
                Condition::Not(_) | Condition::Name(_) => 2,
            };
            if own < level {
                write!(f, "(")?;
            }
            match c {
                Condition::Name(n) => write!(f, "{n}")?,
                Condition::Not(inner) => {
                    write!(f, "!")?;
                    write(inner, 2, f)?;
                }
                Condition::And(cs) => {
                    for (i, child) in cs.iter().enumerate() {
                        if i > 0 {
                            write!(f, " & ")?;
                        }
                        write(child, 1, f)?;
                    }
                }
                Condition::Or(cs) => {
                    for (i, child) in cs.iter().enumerate() {
                        if i > 0 {
                            write!(f, " | ")?;
                        }
                        write(child, 0, f)?;
                    }
                }
            }
            if own < level {
                write!(f, ")")?;
            }
            Ok(())
        }
        write(self, 0, f)
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '%')
}

struct Parser<'a> {
    text: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            chars: text.char_indices().collect(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self
            .chars
            .get(self.pos)
            .is_some_and(|&(_, c)| c.is_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn column(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(byte, _)| byte + 1)
            .unwrap_or(self.text.len() + 1)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(1, self.column(), message)
    }

    fn or(&mut self) -> Result<Condition> {
        let mut terms = vec![self.and()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().expect("one term")
        } else {
            Condition::Or(terms)
        })
    }

    fn and(&mut self) -> Result<Condition> {
        let mut terms = vec![self.fact()?];
        while self.peek() == Some('&') {
            self.pos += 1;
            terms.push(self.fact()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().expect("one term")
        } else {
            Condition::And(terms)
        })
    }

    fn fact(&mut self) -> Result<Condition> {
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Condition::Not(Box::new(self.fact()?)))
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if is_name_char(c) => {
                let start = self.pos;
                while self
                    .chars
                    .get(self.pos)
                    .is_some_and(|&(_, c)| is_name_char(c))
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                Ok(Condition::Name(name))
            }
            Some(c) => Err(self.error(format!("unexpected character {c:?}"))),
            None => Err(self.error("unexpected end of condition")),
        }
    }
}

/// Parses a presence condition. Errors carry line 1 and a 1-based column.
pub fn parse_condition(text: &str) -> Result<Condition> {
    let mut parser = Parser::new(text);
    let condition = parser.or()?;
    if parser.peek().is_some() {
        return Err(parser.error("trailing input after condition"));
    }
    Ok(condition)
}
