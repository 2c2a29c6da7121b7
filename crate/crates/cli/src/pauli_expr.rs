//! Parser for operator expressions written as real combinations of Pauli
//! strings, e.g. "-4 Z", "0.5 XI + 0.5 IX", "ZI + IZ".
//!
//! Grammar: expression := term (('+' | '-') term)*
//!          term       := [number ['*']] pauli_word
//!          pauli_word := one letter of I X Y Z per qubit, leftmost first.

use anyhow::{anyhow, bail, Result};
use nmqem::operators::matrix::{c64, CMatrix};
use nmqem::operators::pauli::PauliBasis;

pub fn parse_pauli_expr(expr: &str, n: usize) -> Result<CMatrix> {
    let basis = PauliBasis::new(n).map_err(|e| anyhow!("{e}"))?;
    let dim = 1 << n;
    let mut out = CMatrix::zeros(dim, dim);
    let mut any = false;
    for (coeff, word) in split_terms(expr)? {
        if word.len() != n {
            bail!(
                "Pauli word '{word}' has {} letters, expected {n} (one per qubit)",
                word.len()
            );
        }
        let idx = basis
            .index_of(&word)
            .ok_or_else(|| anyhow!("invalid Pauli word '{word}'"))?;
        out += basis.element(idx) * c64(coeff, 0.0);
        any = true;
    }
    if !any {
        bail!("empty operator expression");
    }
    Ok(out)
}

fn split_terms(expr: &str) -> Result<Vec<(f64, String)>> {
    let mut terms = Vec::new();
    let mut current = String::new();
    let mut sign = 1.0;
    let mut prev = ' ';
    for ch in expr.chars() {
        match ch {
            // a +/- after an exponent marker belongs to the number
            '+' | '-' if prev.eq_ignore_ascii_case(&'e') && !current.trim().is_empty() => {
                current.push(ch);
            }
            '+' | '-' if !current.trim().is_empty() => {
                terms.push(parse_term(current.trim(), sign)?);
                current.clear();
                sign = if ch == '-' { -1.0 } else { 1.0 };
            }
            '-' => sign = -sign,
            '+' => {}
            _ => current.push(ch),
        }
        if !ch.is_whitespace() {
            prev = ch;
        }
    }
    if !current.trim().is_empty() {
        terms.push(parse_term(current.trim(), sign)?);
    }
    if terms.is_empty() {
        bail!("empty operator expression '{expr}'");
    }
    Ok(terms)
}

fn parse_term(term: &str, sign: f64) -> Result<(f64, String)> {
    let cleaned = term.replace('*', " ");
    let parts: Vec<&str> = cleaned.split_whitespace().collect();
    match parts.as_slice() {
        [word] if word.chars().all(is_pauli_letter) => Ok((sign, normalize(word))),
        [num, word] if word.chars().all(is_pauli_letter) => {
            let coeff: f64 = num
                .parse()
                .map_err(|_| anyhow!("invalid coefficient '{num}' in term '{term}'"))?;
            Ok((sign * coeff, normalize(word)))
        }
        _ => bail!("cannot parse operator term '{term}'"),
    }
}

fn is_pauli_letter(c: char) -> bool {
    matches!(c.to_ascii_uppercase(), 'I' | 'X' | 'Y' | 'Z')
}

fn normalize(word: &str) -> String {
    word.to_ascii_uppercase()
}
