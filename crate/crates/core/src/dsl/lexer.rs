use super::ast::Span;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    /// Integer with a time unit, already converted to milliseconds.
    Duration(u64),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Duration(ms) => format!("duration `{ms}ms`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest match first.
const PUNCTS: &[&str] = &[
    "&&", "||", "==", "!=", "<=", ">=", "..", "{", "}", "(", ")", ";", ":", ",", "=", "!", "<",
    ">", "+", "-",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let span = Span::new(line, col);
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(span, "unterminated block comment", vec![]));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }

        let span = Span::new(line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let digits: String = chars[start..i].iter().collect();
            let value: i64 = digits
                .parse()
                .map_err(|_| ParseError::syntax(span, "integer literal out of range", vec![]))?;
            if i < chars.len() && chars[i].is_ascii_alphabetic() {
                let ustart = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    bump!();
                }
                let unit: String = chars[ustart..i].iter().collect();
                let factor = match unit.as_str() {
                    "s" => 1000,
                    "ms" => 1,
                    _ => {
                        return Err(ParseError::syntax(
                            span,
                            format!("unknown time unit `{unit}`"),
                            vec!["`s`".into(), "`ms`".into()],
                        ))
                    }
                };
                let ms = (value as u64)
                    .checked_mul(factor)
                    .ok_or_else(|| ParseError::syntax(span, "duration out of range", vec![]))?;
                out.push(Token {
                    tok: Tok::Duration(ms),
                    span,
                });
            } else {
                out.push(Token {
                    tok: Tok::Int(value),
                    span,
                });
            }
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => {
                return Err(ParseError::syntax(
                    span,
                    format!("unexpected character {c:?}"),
                    vec![],
                ))
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}
