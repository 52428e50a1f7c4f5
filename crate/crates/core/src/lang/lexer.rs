use crate::error::{Error, Result};
use crate::relalg::Date;

use super::ast::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Identifier or keyword. May carry trailing `*` marks (`a*`, `x*`).
    Ident(String),
    Int(i128),
    Float(f64),
    Str(String),
    Date(Date),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Colon,
    Assign,
    Bang,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    Lexer { chars: src.chars().collect(), pos: 0, line: 1, col: 1 }.run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
}

fn operand_start(c: char, glued: bool) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '(' | '"' | '#' | '{') || (glued && c == '-')
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, span: Span, msg: impl Into<String>) -> Error {
        Error::Syntax { line: span.line, col: span.col, message: msg.into() }
    }

    fn run(mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let span = Span { line: self.line, col: self.col };
            let Some(c) = self.peek(0) else {
                out.push(Token { tok: Tok::Eof, span });
                return Ok(out);
            };
            let tok = if c.is_alphabetic() || c == '_' {
                self.ident()
            } else if c == '~' && self.peek(1).is_some_and(|d| d.is_alphabetic() || d == '_') {
                self.bump();
                match self.ident() {
                    Tok::Ident(n) => Tok::Ident(format!("~{n}")),
                    other => other,
                }
            } else if c.is_ascii_digit() {
                self.number(span)?
            } else if c == '"' {
                self.string(span)?
            } else if c == '#' {
                self.date(span)?
            } else {
                self.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '.' => Tok::Dot,
                    '!' => Tok::Bang,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '=' => Tok::Eq,
                    ':' if self.peek(0) == Some('=') => {
                        self.bump();
                        Tok::Assign
                    }
                    ':' => Tok::Colon,
                    '<' if self.peek(0) == Some('=') => {
                        self.bump();
                        Tok::Le
                    }
                    '<' if self.peek(0) == Some('>') => {
                        self.bump();
                        Tok::Ne
                    }
                    '<' => Tok::Lt,
                    '>' if self.peek(0) == Some('=') => {
                        self.bump();
                        Tok::Ge
                    }
                    '>' => Tok::Gt,
                    other => return Err(self.err(span, format!("unexpected character {other:?}"))),
                }
            };
            out.push(Token { tok, span });
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek(0) {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek(1) == Some('/') => {
                    while let Some(c) = self.peek(0) {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn ident(&mut self) -> Tok {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            if c.is_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        // A `*` glued to a name is part of it unless an operand follows.
        while self.peek(0) == Some('*') {
            let mut k = 1;
            while self.peek(k).is_some_and(|c| c.is_whitespace()) {
                k += 1;
            }
            if self.peek(k).is_some_and(|c| operand_start(c, k == 1)) {
                break;
            }
            s.push('*');
            self.bump();
        }
        Tok::Ident(s)
    }

    fn number(&mut self, span: Span) -> Result<Tok> {
        let mut s = String::new();
        while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
            s.push(c);
            self.bump();
        }
        let mut float = false;
        if self.peek(0) == Some('.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            float = true;
            s.push('.');
            self.bump();
            while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
                s.push(c);
                self.bump();
            }
        }
        if matches!(self.peek(0), Some('e' | 'E')) {
            let sign = matches!(self.peek(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                float = true;
                s.push('e');
                self.bump();
                if sign {
                    s.push(self.bump().unwrap_or('+'));
                }
                while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
                    s.push(c);
                    self.bump();
                }
            }
        }
        if float {
            s.parse().map(Tok::Float).map_err(|_| self.err(span, "malformed float literal"))
        } else {
            match s.parse::<i128>() {
                Ok(v) if v <= i64::MAX as i128 + 1 => Ok(Tok::Int(v)),
                _ => Err(self.err(span, "integer literal out of range")),
            }
        }
    }

    fn string(&mut self, span: Span) -> Result<Tok> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err(span, "unterminated string literal")),
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    _ => return Err(self.err(span, "bad escape in string literal")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn date(&mut self, span: Span) -> Result<Tok> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.err(span, "unterminated date literal")),
                Some('#') => break,
                Some(c) => s.push(c),
            }
        }
        Date::parse_dotted(&s)
            .map(Tok::Date)
            .ok_or_else(|| self.err(span, format!("invalid date literal #{s}#")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn starred_names_and_multiplication() {
        assert_eq!(
            toks("a*.x* =1"),
            vec![
                Tok::Ident("a*".into()),
                Tok::Dot,
                Tok::Ident("x*".into()),
                Tok::Eq,
                Tok::Int(1),
                Tok::Eof
            ]
        );
        assert_eq!(
            toks("x*y"),
            vec![Tok::Ident("x".into()), Tok::Star, Tok::Ident("y".into()), Tok::Eof]
        );
        assert_eq!(toks("x*-1")[1], Tok::Star);
        assert_eq!(toks("x* - 1")[0], Tok::Ident("x*".into()));
        assert_eq!(toks("REALIZE *")[1], Tok::Star);
    }

    #[test]
    fn literals_and_comments() {
        assert_eq!(
            toks("\"a\\\"b\" #31.05.2005# 2.5e3 7 // tail\n;"),
            vec![
                Tok::Str("a\"b".into()),
                Tok::Date(Date::new(31, 5, 2005).unwrap()),
                Tok::Float(2500.0),
                Tok::Int(7),
                Tok::Semi,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn operators() {
        assert_eq!(
            toks("<> <= >= := < >"),
            vec![Tok::Ne, Tok::Le, Tok::Ge, Tok::Assign, Tok::Lt, Tok::Gt, Tok::Eof]
        );
    }

    #[test]
    fn errors_carry_position() {
        match tokenize("x\n  \"open") {
            Err(Error::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(tokenize("#32.01.2000#").is_err());
        assert!(tokenize("99999999999999999999").is_err());
    }
}
