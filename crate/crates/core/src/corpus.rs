//! Token-id corpora.
//!
//! A corpus file holds one sequence per line, each line being ASCII decimal
//! token ids separated by single spaces. Empty lines are empty sequences and
//! are skipped on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

pub fn parse_corpus(text: &str) -> Result<Vec<TokenSeq>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let seq = line
            .split(' ')
            .map(|tok| {
                tok.parse::<TokenId>().map_err(|_| {
                    Error::format(
                        "corpus",
                        format!("line {}: {tok:?} is not a token id", lineno + 1),
                    )
                })
            })
            .collect::<Result<TokenSeq>>()?;
        out.push(seq);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<TokenSeq>> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text)
}

pub fn format_seq(seq: &[TokenId]) -> String {
    let mut s = String::with_capacity(seq.len() * 3);
    for (i, t) in seq.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&t.to_string());
    }
    s
}

pub fn write_corpus(path: &Path, corpus: &[TokenSeq]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for seq in corpus {
        writeln!(f, "{}", format_seq(seq))?;
    }
    f.flush()?;
    Ok(())
}

/// Check every id against the vocabulary bound.
pub fn check_vocab(corpus: &[TokenSeq], vocab_size: usize) -> Result<()> {
    for (i, seq) in corpus.iter().enumerate() {
        if let Some(&bad) = seq.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::invalid(format!(
                "sequence {i}: token id {bad} outside vocabulary of {vocab_size}"
            )));
        }
    }
    Ok(())
}
