//! Shared tokenizer for the signature, structure, SID and formula grammars.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &[&str] = &[
    "<=", "!=", "->", "<->", "(", ")", "{", "}", "[", "]", ",", ";", ".", "=", "*", "/", "&", "|", "~", ":",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = vec![];
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = col;
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_alphanumeric() {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            let tok = match text.parse::<u64>() {
                Ok(n) => Tok::Num(n),
                Err(_) => Tok::Ident(text),
            };
            out.push(Token { tok, line, col: start });
            col += j - i;
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                j += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[i..j].iter().collect()), line, col: start });
            col += j - i;
            i = j;
            continue;
        }
        let rest: String = chars[i..(i + 3).min(chars.len())].iter().collect();
        let sym = SYMBOLS
            .iter()
            .filter(|s| rest.starts_with(*s))
            .max_by_key(|s| s.len())
            .ok_or(Error::Parse { line, col, msg: format!("unexpected character `{c}`") })?;
        out.push(Token { tok: Tok::Sym(sym), line, col: start });
        i += sym.len();
        col += sym.len();
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

/// A cursor over a token stream with the usual expect/accept helpers.
pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Parser> {
        Ok(Parser { toks: tokenize(src)?, pos: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Parse { line: t.line, col: t.col, msg: msg.into() })
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    pub fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    pub fn accept_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn accept_ident(&mut self, s: &str) -> bool {
        if self.is_ident(s) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.accept_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    pub fn expect_keyword(&mut self, s: &str) -> Result<()> {
        if self.accept_ident(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    pub fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {}", describe(&t))),
        }
    }

    /// An identifier or a number, as text.
    pub fn name(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            Tok::Num(n) => {
                self.next();
                Ok(n.to_string())
            }
            t => self.error(format!("expected name, found {}", describe(&t))),
        }
    }

    pub fn number(&mut self) -> Result<u64> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.next();
                Ok(n)
            }
            t => self.error(format!("expected number, found {}", describe(&t))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("ls(x,y) <= ex z . H(x,z) * ls(z,y);\n  x != y").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("ls".into()));
        assert!(toks.iter().any(|t| t.tok == Tok::Sym("<=")));
        let ne = toks.iter().find(|t| t.tok == Tok::Sym("!=")).unwrap();
        assert_eq!((ne.line, ne.col), (2, 5));
    }

    #[test]
    fn bad_character() {
        assert!(matches!(tokenize("a $ b"), Err(Error::Parse { line: 1, col: 3, .. })));
    }
}
