//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`.

use super::{BinOp, Expr, Func};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Name(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and the offset where it starts.
    fn next(&mut self) -> Result<(Token, usize)> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Token::End, start));
        };
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            c if c.is_ascii_alphabetic() => {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                Token::Name(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            _ => {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", c as char),
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Token> {
        let digits = |lx: &mut Self| {
            let s = lx.pos;
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_digit() {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(Error::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `e` belongs to whatever follows, not to the number
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Token::Num).map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Token,
    at: usize,
}

pub(super) fn parse(source: &str) -> Result<Expr> {
    let mut lexer = Lexer {
        src: source.as_bytes(),
        pos: 0,
    };
    let (tok, at) = lexer.next()?;
    let mut p = Parser { lexer, tok, at };
    let e = p.expr()?;
    if p.tok != Token::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

impl Parser<'_> {
    fn bump(&mut self) -> Result<()> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn unexpected(&self) -> Error {
        let message = match &self.tok {
            Token::End => "unexpected end of input".to_string(),
            Token::Num(v) => format!("unexpected number `{v}`"),
            Token::Name(n) => format!("unexpected name `{n}`"),
            Token::Op(c) => format!("unexpected `{c}`"),
            Token::LParen => "unexpected `(`".to_string(),
            Token::RParen => "unexpected `)`".to_string(),
        };
        Error::Syntax {
            offset: self.at,
            message,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.tok == Token::Op('-') {
            self.bump()?;
            return Ok(Expr::unary(Func::Neg, self.factor()?));
        }
        let base = self.base()?;
        if self.tok == Token::Op('^') {
            self.bump()?;
            let exp = self.factor()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        match std::mem::replace(&mut self.tok, Token::End) {
            Token::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Token::Name(name) => {
                let name_at = self.at;
                self.bump()?;
                if self.tok != Token::LParen {
                    return Ok(Expr::Var(name));
                }
                let f = Func::from_name(&name).ok_or(Error::UnknownFunction { name, offset: name_at })?;
                self.bump()?;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::unary(f, arg))
            }
            Token::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            other => {
                self.tok = other;
                Err(self.unexpected())
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.tok != Token::RParen {
            return Err(self.unexpected());
        }
        self.bump()
    }
}
