//! Assembly normalization.
//!
//! Turns raw disassembler or assembler text into an address-invariant token
//! stream so two disassemblies can be compared with BLEU regardless of where
//! the code was loaded or which temp directory it was built in.
//!
//! Rules applied per line:
//! - `#` comments, blank lines, `file format` headers and
//!   `Disassembly of section` banners are dropped;
//! - leading `addr:` prefixes, label definitions and assembler directives
//!   (lines starting with `.`) are dropped;
//! - `<symbol+off>` annotations are dropped;
//! - everything is lowercased and operands are split on top-level commas
//!   and whitespace (memory operands like `0x8(%rax,%rbx,4)` stay intact);
//! - displacements are rewritten to `off(...)`, bare address operands of
//!   branch/call instructions become positional labels `l0, l1, ...` in
//!   first-appearance order (as do symbolic `.L` references), and remaining
//!   bare addresses become `addr`;
//! - `$` immediates and registers pass through untouched.
//!
//! The output is idempotent: rendering the tokens back to text and
//! normalizing again yields the same stream.

use once_cell::sync::Lazy;
use regex::Regex;
use std::collections::HashMap;

static LINE_ADDR: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[0-9a-f]+:\s*").unwrap());
static SYMBOL_HEADER: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[0-9a-f]+\s+<[^>]*>:$").unwrap());
static ANNOTATION: Lazy<Regex> = Lazy::new(|| Regex::new(r"<[^>]*>").unwrap());
static DISPLACEMENT: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^(\*?)[+-]?(?:0x)?[0-9a-f]+(\(.*)$").unwrap());
static LOCAL_LABEL: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\.l[\w.$]*$|^l\d+$").unwrap());

/// Instruction prefixes that precede the mnemonic on x86.
const PREFIXES: &[&str] =
    &["lock", "rep", "repz", "repe", "repnz", "repne", "bnd", "notrack", "data16", "addr32"];

fn is_bare_hex_address(tok: &str) -> bool {
    !tok.is_empty()
        && tok.bytes().all(|b| b.is_ascii_hexdigit() || b == b'x')
        && tok.bytes().any(|b| b.is_ascii_digit())
        && !tok.starts_with('x')
}

fn is_control_flow(mnemonic: &str) -> bool {
    mnemonic.starts_with('j')
        || mnemonic.starts_with("call")
        || mnemonic.starts_with("loop")
        || mnemonic == "xbegin"
}

/// Split operand text on commas and whitespace outside parentheses.
fn split_operands(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' | ' ' | '\t' if depth == 0 => {
                if i > start {
                    out.push(&s[start..i]);
                }
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if start < s.len() {
        out.push(&s[start..]);
    }
    out
}

struct LabelPool {
    map: HashMap<String, String>,
}

impl LabelPool {
    fn new() -> Self {
        Self { map: HashMap::new() }
    }

    fn resolve(&mut self, key: &str) -> String {
        let next = format!("l{}", self.map.len());
        self.map.entry(key.to_string()).or_insert(next).clone()
    }
}

fn canonical_operand(tok: &str, control_flow: bool, labels: &mut LabelPool) -> String {
    if tok.starts_with('$') {
        return tok.to_string();
    }
    if let Some(c) = DISPLACEMENT.captures(tok) {
        return format!("{}off{}", &c[1], &c[2]);
    }
    if LOCAL_LABEL.is_match(tok) {
        return labels.resolve(tok);
    }
    if is_bare_hex_address(tok) {
        if control_flow {
            return labels.resolve(tok);
        }
        return "addr".to_string();
    }
    tok.to_string()
}

/// Normalize raw assembly text into a comparable token stream.
pub fn normalize_assembly(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut labels = LabelPool::new();
    for line in raw.lines() {
        let line = line.split('#').next().unwrap_or("");
        let line = line.trim().to_ascii_lowercase();
        if line.is_empty()
            || line.contains("file format")
            || line.starts_with("disassembly of section")
        {
            continue;
        }
        if SYMBOL_HEADER.is_match(&line) {
            continue;
        }
        // single-word label definitions: "func0:", ".l2:"
        if line.ends_with(':') && !line[..line.len() - 1].contains(char::is_whitespace) {
            continue;
        }
        let line = LINE_ADDR.replace(&line, "");
        let line = ANNOTATION.replace_all(&line, "");
        let line = line.trim();
        if line.is_empty() || line.starts_with('.') {
            continue;
        }

        let mut words = line.split_whitespace();
        let mut mnemonic = "";
        for word in words.by_ref() {
            tokens.push(word.to_string());
            if !PREFIXES.contains(&word) {
                mnemonic = word;
                break;
            }
        }
        if mnemonic.is_empty() {
            continue;
        }
        let control_flow = is_control_flow(mnemonic);
        let operand_text: String = words.collect::<Vec<_>>().join(" ");
        for op in split_operands(&operand_text) {
            tokens.push(canonical_operand(op, control_flow, &mut labels));
        }
    }
    tokens
}
