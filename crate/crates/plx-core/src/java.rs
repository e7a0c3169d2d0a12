//! Parser for a small Java-like subset, producing artifact graphs.
//!
//! Recognized shape: an optional `package a.b.c;` declaration, then any
//! number of `class Name { ... }` declarations whose members are methods. A
//! method is arbitrary header tokens up to the parameter list, then a braced
//! body. Inside bodies, token runs ending in `;` become statements (the `;`
//! is kept as a token) and token runs ending in `{` open nested blocks whose
//! label is the rendered head (so `if (x > 0) { ... }` yields a BLOCK
//! labeled `if(x > 0)`). Separators inside parentheses, as in a `for` head,
//! do not end a statement.
//!
//! All whitespace and comments are discarded during tokenization, so any two
//! formattings of the same code parse to identical graphs.

use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeType};
use crate::lex::{render_tokens, tokenize_with_eof, Token};

/// Parses `source` into a validated artifact graph for `variant_id`.
pub fn parse_source(source: &str, variant_id: &str) -> Result<ArtifactGraph> {
    let (tokens, eof) = tokenize_with_eof(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        eof,
    };
    let root = parser.compilation_unit()?;
    ArtifactGraph::with_preorder_ids(variant_id, root)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn bump(&mut self) -> Option<Token> {
        let token = self.tokens.get(self.pos).cloned();
        if token.is_some() {
            self.pos += 1;
        }
        token
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.eof, |t| (t.line, t.column))
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let (line, column) = self.here();
        Error::parse(line, column, message)
    }

    fn expect(&mut self, text: &str) -> Result<Token> {
        if self.at(text) {
            Ok(self.bump().expect("peeked token exists"))
        } else {
            let found = self
                .peek()
                .map_or("end of input".to_string(), |t| format!("{:?}", t.text));
            Err(self.error(format!("expected {text:?}, found {found}")))
        }
    }

    fn expect_name(&mut self, what: &str) -> Result<Token> {
        match self.peek() {
            Some(t) if crate::lex::is_identifier(&t.text) => {
                Ok(self.bump().expect("peeked token exists"))
            }
            Some(t) => {
                let found = t.text.clone();
                Err(self.error(format!("expected {what}, found {found:?}")))
            }
            None => Err(self.error(format!("expected {what}, found end of input"))),
        }
    }

    fn compilation_unit(&mut self) -> Result<ArtifactNode> {
        let mut children = Vec::new();
        let mut classes = Vec::new();
        if self.at("package") {
            children.push(self.package_decl()?);
        }
        while self.peek().is_some() {
            if self.at("class") {
                classes.push(self.class_decl()?);
            } else {
                let found = self.peek().map(|t| t.text.clone()).unwrap_or_default();
                return Err(self.error(format!(
                    "expected a class declaration, found {found:?}"
                )));
            }
        }
        if let Some(package) = children.first_mut() {
            package.children = classes;
        } else {
            children = classes;
        }
        Ok(ArtifactNode::inner(NodeType::System, "", children))
    }

    fn package_decl(&mut self) -> Result<ArtifactNode> {
        self.expect("package")?;
        let mut name = self.expect_name("a package name")?.text;
        while self.at(".") {
            self.bump();
            name.push('.');
            name.push_str(&self.expect_name("a package name segment")?.text);
        }
        self.expect(";")?;
        Ok(ArtifactNode::inner(NodeType::Package, name, Vec::new()))
    }

    fn class_decl(&mut self) -> Result<ArtifactNode> {
        self.expect("class")?;
        let name = self.expect_name("a class name")?.text;
        self.expect("{")?;
        let mut methods = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error(format!("unclosed body of class {name}: expected '}}'")));
            }
            methods.push(self.method_decl()?);
        }
        self.expect("}")?;
        Ok(ArtifactNode::inner(NodeType::Class, name, methods))
    }

    fn method_decl(&mut self) -> Result<ArtifactNode> {
        let mut header: Vec<String> = Vec::new();
        while !self.at("(") {
            match self.bump() {
                Some(t) if t.text == "{" || t.text == "}" || t.text == ";" => {
                    return Err(Error::parse(
                        t.line,
                        t.column,
                        "expected a method parameter list before the body",
                    ));
                }
                Some(t) => header.push(t.text),
                None => return Err(self.error("expected a method declaration, found end of input")),
            }
        }
        if header.is_empty() {
            return Err(self.error("method declarations need a return type and name"));
        }
        header.push(self.expect("(")?.text);
        let mut depth = 1usize;
        while depth > 0 {
            match self.bump() {
                Some(t) => {
                    if t.text == "(" {
                        depth += 1;
                    } else if t.text == ")" {
                        depth -= 1;
                    }
                    header.push(t.text);
                }
                None => return Err(self.error("unclosed parameter list: expected ')'")),
            }
        }
        while !self.at("{") {
            match self.bump() {
                Some(t) if t.text == "}" || t.text == ";" => {
                    return Err(Error::parse(t.line, t.column, "expected a method body"));
                }
                Some(t) => header.push(t.text),
                None => return Err(self.error("expected a method body, found end of input")),
            }
        }
        let body = self.block("")?;
        Ok(ArtifactNode::inner(
            NodeType::Method,
            render_tokens(&header),
            vec![body],
        ))
    }

    /// Parses `{ items }` into a BLOCK node with the given label. The opening
    /// brace has not been consumed yet.
    fn block(&mut self, label: &str) -> Result<ArtifactNode> {
        self.expect("{")?;
        let mut items = Vec::new();
        loop {
            if self.at("}") {
                self.bump();
                return Ok(ArtifactNode::inner(NodeType::Block, label, items));
            }
            if self.peek().is_none() {
                return Err(self.error("unclosed block: expected '}'"));
            }
            if self.at("{") {
                items.push(self.block("")?);
                continue;
            }
            items.push(self.body_item()?);
        }
    }

    /// Parses one statement (`tokens ;`) or headed block (`tokens {...}`).
    /// Semicolons inside parentheses, as in a `for` head, do not terminate.
    fn body_item(&mut self) -> Result<ArtifactNode> {
        let mut tokens: Vec<String> = Vec::new();
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Some(t) if t.text == ";" && depth == 0 => {
                    tokens.push(self.bump().expect("peeked token exists").text);
                    return Ok(ArtifactNode::statement(tokens));
                }
                Some(t) if t.text == "{" && depth == 0 => {
                    return self.block(&render_tokens(&tokens));
                }
                Some(t) if t.text == "}" && depth == 0 => {
                    return Err(self.error("statement is missing its ';'"));
                }
                Some(t) => {
                    if t.text == "(" {
                        depth += 1;
                    } else if t.text == ")" {
                        if depth == 0 {
                            return Err(self.error("unbalanced ')' in statement"));
                        }
                        depth -= 1;
                    }
                    tokens.push(self.bump().expect("peeked token exists").text);
                }
                None => return Err(self.error("statement is missing its ';'")),
            }
        }
    }
}
