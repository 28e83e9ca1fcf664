//! Fixed toy vocabulary of 64 tokens.
//!
//! The vocabulary covers digits, a few question words, and the synthetic
//! event-class names, so counting prompts like `<bos> how many ring ?` and
//! single-digit answers are expressible. Remaining ids are filler words.

use crate::error::{Result, TcdError};

pub type TokenId = u32;

/// Number of tokens in the toy vocabulary.
pub const VOCAB_SIZE: usize = 64;

/// Beginning-of-sequence token.
pub const BOS: TokenId = 10;
/// End-of-sequence token; the default stop token for generation.
pub const EOS: TokenId = 11;

const NAMED: &[(&str, TokenId)] = &[
    ("0", 0),
    ("1", 1),
    ("2", 2),
    ("3", 3),
    ("4", 4),
    ("5", 5),
    ("6", 6),
    ("7", 7),
    ("8", 8),
    ("9", 9),
    ("<bos>", 10),
    ("<eos>", 11),
    ("how", 12),
    ("many", 13),
    ("count", 14),
    ("what", 15),
    ("?", 16),
    ("ring", 17),
    ("beep", 18),
    ("knock", 19),
    ("times", 20),
    ("sound", 21),
    ("audio", 22),
    ("the", 23),
    ("in", 24),
];

/// Name of a token id. Ids past the named range print as `w{id}`.
pub fn token_name(id: TokenId) -> String {
    for &(name, tid) in NAMED {
        if tid == id {
            return name.to_string();
        }
    }
    format!("w{id}")
}

/// Id of a token name, accepting both named tokens and the `w{id}` filler form.
pub fn token_id(name: &str) -> Result<TokenId> {
    for &(n, tid) in NAMED {
        if n == name {
            return Ok(tid);
        }
    }
    if let Some(rest) = name.strip_prefix('w') {
        if let Ok(id) = rest.parse::<TokenId>() {
            if (id as usize) < VOCAB_SIZE && id as usize >= NAMED.len() {
                return Ok(id);
            }
        }
    }
    Err(TcdError::invalid(format!("unknown token name: {name:?}")))
}

/// Tokenize a whitespace-separated string of token names.
pub fn tokenize(text: &str) -> Result<Vec<TokenId>> {
    text.split_whitespace().map(token_id).collect()
}

/// Space-joined token names.
pub fn detokenize(tokens: &[TokenId]) -> String {
    tokens
        .iter()
        .map(|&t| token_name(t))
        .collect::<Vec<_>>()
        .join(" ")
}
