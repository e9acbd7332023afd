//! A forgiving SQL tokenizer that keeps byte offsets, so text can be
//! rebuilt exactly with only selected tokens replaced.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    Comment,
    /// Single-quoted literal.
    String,
    /// `"x"`, `` `x` `` or `[x]`; the payload is the opening quote.
    Quoted(char),
    Number,
    Word,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub start: usize,
}

impl Token<'_> {
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Whitespace | TokenKind::Comment)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(kw)
    }

    /// Identifier value: the word itself, or the unescaped body of a quoted
    /// identifier.
    pub fn ident_value(&self) -> Option<String> {
        match self.kind {
            TokenKind::Word => Some(self.text.to_string()),
            TokenKind::Quoted(open) => {
                let close = closing(open);
                let body = &self.text[open.len_utf8()..];
                let body = body.strip_suffix(close).unwrap_or(body);
                let doubled: String = [close, close].iter().collect();
                Some(body.replace(&doubled, &close.to_string()))
            }
            _ => None,
        }
    }
}

pub fn closing(open: char) -> char {
    match open {
        '[' => ']',
        other => other,
    }
}

/// Splits `sql` into tokens covering every byte exactly once. Unterminated
/// quotes and comments run to the end of input.
pub fn tokenize(sql: &str) -> Vec<Token<'_>> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < sql.len() {
        let c = sql[i..].chars().next().expect("in bounds");
        let start = i;
        let kind;
        if c.is_whitespace() {
            i += sql[i..].find(|ch: char| !ch.is_whitespace()).unwrap_or(sql.len() - i);
            kind = TokenKind::Whitespace;
        } else if sql[i..].starts_with("--") {
            i += sql[i..].find('\n').unwrap_or(sql.len() - i);
            kind = TokenKind::Comment;
        } else if sql[i..].starts_with("/*") {
            i += sql[i + 2..].find("*/").map(|p| p + 4).unwrap_or(sql.len() - i);
            kind = TokenKind::Comment;
        } else if c == '\'' {
            i = scan_quoted(sql, i, '\'');
            kind = TokenKind::String;
        } else if matches!(c, '"' | '`' | '[') {
            i = scan_quoted(sql, i, closing(c));
            kind = TokenKind::Quoted(c);
        } else if c.is_ascii_digit()
            || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) && !prev_is_name(&tokens))
        {
            i += 1;
            while i < sql.len() {
                let b = bytes[i];
                let exponent_sign = (b == b'+' || b == b'-') && matches!(bytes[i - 1], b'e' | b'E');
                if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exponent_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            kind = TokenKind::Number;
        } else if c.is_alphabetic() || c == '_' {
            i += sql[i..]
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '$'))
                .unwrap_or(sql.len() - i);
            kind = TokenKind::Word;
        } else {
            const TWO: [&str; 7] = ["<=", ">=", "<>", "!=", "==", "||", "::"];
            i += if TWO.iter().any(|op| sql[i..].starts_with(op)) {
                2
            } else {
                c.len_utf8()
            };
            kind = TokenKind::Punct;
        }
        tokens.push(Token {
            kind,
            text: &sql[start..i],
            start,
        });
    }
    tokens
}

fn prev_is_name(tokens: &[Token<'_>]) -> bool {
    tokens
        .last()
        .is_some_and(|t| matches!(t.kind, TokenKind::Word | TokenKind::Quoted(_)) || t.is_punct(")"))
}

fn scan_quoted(sql: &str, start: usize, close: char) -> usize {
    let mut i = start + 1;
    while i < sql.len() {
        let c = sql[i..].chars().next().expect("in bounds");
        i += c.len_utf8();
        if c == close {
            if sql[i..].starts_with(close) && close != ']' {
                i += close.len_utf8();
                continue;
            }
            return i;
        }
    }
    sql.len()
}
