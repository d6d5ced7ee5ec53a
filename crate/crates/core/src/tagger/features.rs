//! Observation feature templates. Label-dependent parts (previous label) are
//! handled by the transition matrix in the model.

use crate::corpus::Token;

/// `Xxxx` -> `Xx`, `1996` -> `d`, `U.S.` -> `X.X.`: character classes with
/// repeats collapsed.
pub fn shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for ch in word.chars() {
        let class = if ch.is_uppercase() {
            'X'
        } else if ch.is_lowercase() {
            'x'
        } else if ch.is_ascii_digit() {
            'd'
        } else {
            ch
        };
        if last != Some(class) {
            out.push(class);
            last = Some(class);
        }
    }
    out
}

fn word_at(tokens: &[Token], i: isize) -> &str {
    if i < 0 {
        "<s>"
    } else {
        tokens.get(i as usize).map_or("</s>", |t| t.text.as_str())
    }
}

fn pos_at(tokens: &[Token], i: isize) -> &str {
    if i < 0 {
        "<s>"
    } else {
        tokens.get(i as usize).map_or("</s>", |t| t.pos.as_deref().unwrap_or("_"))
    }
}

/// Feature strings for position `i`.
pub fn token_features(tokens: &[Token], i: usize) -> Vec<String> {
    let at = i as isize;
    let w = tokens[i].text.as_str();
    let mut f = Vec::with_capacity(24);
    f.push("bias".to_string());
    for d in -2..=2isize {
        f.push(format!("w[{d}]={}", word_at(tokens, at + d)));
    }
    f.push(format!("lw={}", w.to_lowercase()));
    for d in -1..=1isize {
        f.push(format!("shape[{d}]={}", shape(word_at(tokens, at + d))));
        f.push(format!("pos[{d}]={}", pos_at(tokens, at + d)));
    }
    f.push(format!("pos[0,1]={}|{}", pos_at(tokens, at), pos_at(tokens, at + 1)));
    let chars: Vec<char> = w.chars().collect();
    for k in 1..=3.min(chars.len()) {
        f.push(format!("pre{k}={}", chars[..k].iter().collect::<String>()));
        f.push(format!("suf{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    if i == 0 {
        f.push("first".to_string());
    }
    f
}
