//! Lexical scanner for C source and free-form text.
//!
//! One scanner backs every token-count and token-stream consumer in the
//! pipeline: BLEU over source code, rationale length limits, training-corpus
//! length filtering, pattern classification, and the length-bucket analysis.
//! It is a lexer, not a parser: it splits identifiers, numbers, string/char
//! literals, and operators, and can either skip comments (C mode) or treat
//! comment delimiters as ordinary punctuation (free-text mode).

/// Token class assigned by the scanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

/// A scanned token with its byte span in the input.
#[derive(Debug, Clone)]
pub struct Tok {
    pub text: String,
    pub kind: TokKind,
    pub start: usize,
    pub end: usize,
}

/// Multi-character operators, longest first so the scanner can greedy-match.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "^=", "|=", "##",
];

/// Scan `src` into tokens. With `recognize_comments` set, `//` and `/* */`
/// comments are skipped; otherwise their delimiters lex as punctuation and
/// their contents as ordinary words.
pub fn scan(src: &str, recognize_comments: bool) -> Vec<Tok> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if recognize_comments && c == b'/' && i + 1 < bytes.len() {
            match bytes[i + 1] {
                b'/' => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                    continue;
                }
                b'*' => {
                    i += 2;
                    while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                        i += 1;
                    }
                    i = (i + 2).min(bytes.len());
                    continue;
                }
                _ => {}
            }
        }
        let start = i;
        if c == b'"' || c == b'\'' {
            let quote = c;
            i += 1;
            while i < bytes.len() {
                if bytes[i] == b'\\' {
                    i += 2;
                    continue;
                }
                if bytes[i] == quote {
                    i += 1;
                    break;
                }
                if bytes[i] == b'\n' {
                    // unterminated literal; stop at the line end
                    break;
                }
                i += 1;
            }
            let i = i.min(bytes.len());
            toks.push(Tok {
                text: src[start..i].to_string(),
                kind: if quote == b'"' { TokKind::Str } else { TokKind::Char },
                start,
                end: i,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || !c.is_ascii() {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || !bytes[i].is_ascii())
            {
                i += 1;
            }
            toks.push(Tok { text: src[start..i].to_string(), kind: TokKind::Ident, start, end: i });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                let exp_sign =
                    (b == b'+' || b == b'-') && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P');
                if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            toks.push(Tok {
                text: src[start..i].to_string(),
                kind: TokKind::Number,
                start,
                end: i,
            });
            continue;
        }
        // punctuation: greedy multi-char operator match, else one char
        let rest = &src[i..];
        let op = OPERATORS.iter().find(|op| rest.starts_with(**op));
        let len = op.map_or(1, |op| op.len());
        i += len;
        toks.push(Tok { text: src[start..i].to_string(), kind: TokKind::Punct, start, end: i });
    }
    toks
}

/// Tokenize C source with comments stripped; returns token texts only.
pub fn tokenize_c(src: &str) -> Vec<String> {
    scan(src, true).into_iter().map(|t| t.text).collect()
}

/// Lexical token count of arbitrary text (comments count as content).
pub fn lexical_token_count(text: &str) -> usize {
    scan(text, false).len()
}
