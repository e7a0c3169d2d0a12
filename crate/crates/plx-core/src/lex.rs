//! Maximal-munch tokenizer, token classification, and the canonical token
//! renderer.
//!
//! One lexical definition serves every consumer: the source parser (strict
//! mode, with positions and hard errors), label tokenization for similarity
//! and abstraction (loose mode, total), and the renderer that turns token
//! sequences back into canonical label text. Keeping these together is what
//! makes `tokenize(render(tokens)) == tokens` checkable in one place.

use crate::error::{Error, Result};

/// A token with its 1-based source position. Produced by strict tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub line: usize,
    pub column: usize,
}

/// Lexical class of a token, decided by its first character only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    /// Starts with a letter, underscore, or `$` (slot markers).
    Identifier,
    /// Starts with a digit or a quote.
    Literal,
    /// Anything else: operators and punctuation.
    Operator,
}

/// Classifies a token by its first character. Empty tokens are operators.
pub fn classify(token: &str) -> TokenClass {
    match token.chars().next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$' => TokenClass::Identifier,
        Some(c) if c.is_ascii_digit() || c == '"' || c == '\'' => TokenClass::Literal,
        _ => TokenClass::Operator,
    }
}

/// Returns true for identifier-class tokens.
pub fn is_identifier(token: &str) -> bool {
    classify(token) == TokenClass::Identifier
}

/// Returns true for literal-class tokens.
pub fn is_literal(token: &str) -> bool {
    classify(token) == TokenClass::Literal
}

/// Two-character operators recognized before single-character fallback.
const TWO_CHAR_OPS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "++", "--", "->", "::",
    "<<", ">>",
];

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    strict: bool,
    source: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str, strict: bool) -> Self {
        Lexer {
            chars: source.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            strict,
            source,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.column, message)
    }

    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek2() == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some('/') if self.peek2() == Some('*') => {
                    let (line, column) = (self.line, self.column);
                    self.bump();
                    self.bump();
                    let mut closed = false;
                    while let Some(c) = self.bump() {
                        if c == '*' && self.peek() == Some('/') {
                            self.bump();
                            closed = true;
                            break;
                        }
                    }
                    if !closed && self.strict {
                        return Err(Error::parse(line, column, "unterminated block comment"));
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn lex_identifier(&mut self) -> String {
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        text
    }

    fn lex_number(&mut self) -> String {
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        text
    }

    fn lex_quoted(&mut self, quote: char) -> Result<String> {
        let (line, column) = (self.line, self.column);
        let mut text = String::new();
        text.push(quote);
        self.bump();
        loop {
            match self.peek() {
                Some('\\') => {
                    text.push('\\');
                    self.bump();
                    if let Some(c) = self.bump() {
                        text.push(c);
                    } else if self.strict {
                        return Err(Error::parse(line, column, "unterminated escape sequence"));
                    } else {
                        return Ok(text);
                    }
                }
                Some(c) if c == quote => {
                    text.push(c);
                    self.bump();
                    return Ok(text);
                }
                Some('\n') | None => {
                    if self.strict {
                        return Err(Error::parse(
                            line,
                            column,
                            format!("unterminated {} literal", if quote == '"' { "string" } else { "character" }),
                        ));
                    }
                    return Ok(text);
                }
                Some(c) => {
                    text.push(c);
                    self.bump();
                }
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>> {
        self.skip_trivia()?;
        let (line, column) = (self.line, self.column);
        let c = match self.peek() {
            Some(c) => c,
            None => return Ok(None),
        };
        if self.strict && c == '$' {
            return Err(self.error("'$' is reserved for template slot markers"));
        }
        if self.strict && (c.is_control() && !c.is_whitespace()) {
            return Err(self.error(format!("unexpected control character {:?}", c)));
        }
        let text = if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            self.lex_identifier()
        } else if c.is_ascii_digit() {
            self.lex_number()
        } else if c == '"' || c == '\'' {
            self.lex_quoted(c)?
        } else {
            let two: String = self.chars[self.pos..self.chars.len().min(self.pos + 2)]
                .iter()
                .collect();
            if two.len() == 2 && TWO_CHAR_OPS.contains(&two.as_str()) {
                self.bump();
                self.bump();
                two
            } else {
                let mut text = String::new();
                text.push(c);
                self.bump();
                text
            }
        };
        Ok(Some(Token { text, line, column }))
    }

    fn eof_position(&self) -> (usize, usize) {
        let _ = self.source;
        (self.line, self.column)
    }
}

/// Strict tokenization with positions. Rejects unterminated literals and
/// comments, control characters, and the reserved `$` character.
pub fn tokenize(source: &str) -> Result<Vec<Token>> {
    let mut lexer = Lexer::new(source, true);
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next_token()? {
        tokens.push(token);
    }
    Ok(tokens)
}

/// Position tracking for strict tokenization that also reports where the
/// input ended, for "unexpected end of input" diagnostics.
pub fn tokenize_with_eof(source: &str) -> Result<(Vec<Token>, (usize, usize))> {
    let mut lexer = Lexer::new(source, true);
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next_token()? {
        tokens.push(token);
    }
    Ok((tokens, lexer.eof_position()))
}

/// Total tokenization used for labels and other embedded text: never fails,
/// truncating unterminated literals at end of line or input.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut lexer = Lexer::new(text, false);
    let mut tokens = Vec::new();
    while let Ok(Some(token)) = lexer.next_token() {
        tokens.push(token.text);
    }
    tokens
}

const TIGHT_BEFORE: &[&str] = &["(", ")", "[", "]", ",", ";", "."];
const TIGHT_AFTER: &[&str] = &["(", "[", "."];

/// Renders a token sequence as canonical text. Spacing is chosen so that for
/// tokenizer-produced sequences `tokenize_text(render_tokens(t)) == t`; for
/// arbitrary sequences callers must verify that identity before relying on it.
pub fn render_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        if i > 0 {
            let prev = tokens[i - 1].as_ref();
            let postfix = matches!(token, "++" | "--")
                && (matches!(classify(prev), TokenClass::Identifier | TokenClass::Literal)
                    || prev == ")"
                    || prev == "]");
            // A '.' placed against a number would re-lex as part of the
            // number ("1" "." -> "1."), so it keeps its space there.
            let float_risk =
                token == "." && prev.chars().next().is_some_and(|c| c.is_ascii_digit());
            let tight = !float_risk
                && (TIGHT_BEFORE.contains(&token)
                    || TIGHT_AFTER.contains(&prev)
                    || postfix
                    || (prev == "!"
                        && matches!(classify(token), TokenClass::Identifier | TokenClass::Literal)));
            if !tight {
                out.push(' ');
            }
        }
        out.push_str(token);
    }
    out
}

/// True when a label is renderer-stable: tokenizing it and rendering the
/// tokens reproduces the label byte for byte. Labels produced by the source
/// parser always satisfy this; hand-written documents may not.
pub fn renderer_stable(label: &str) -> bool {
    render_tokens(&tokenize_text(label)) == label
}
