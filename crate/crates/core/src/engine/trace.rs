//! Per-iteration decode records and their JSON-lines form.
//!
//! A trace file holds one object per iteration followed by one totals
//! object, e.g.
//!
//! ```text
//! {"drafted_tokens":19,"accepted_tokens":7,"draft_count":3,"wall_ns":41200}
//! {"llm_calls":12,"generated":64,"elapsed_ns":503311}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Tokens proposed beyond the already decided one (longest row).
    pub drafted_tokens: usize,
    /// Emitted tokens beyond the already decided one.
    pub accepted_tokens: usize,
    pub draft_count: usize,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeTrace {
    pub iterations: Vec<IterationRecord>,
    /// Model forward passes, the prompt prefill included.
    pub llm_calls: usize,
    pub generated: usize,
    pub elapsed_ns: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Totals {
    llm_calls: usize,
    generated: usize,
    elapsed_ns: u64,
}

impl DecodeTrace {
    pub fn total_accepted(&self) -> usize {
        self.iterations.iter().map(|i| i.accepted_tokens).sum()
    }

    pub fn total_drafted(&self) -> usize {
        self.iterations.iter().map(|i| i.drafted_tokens).sum()
    }

    /// Accounting identities every finished decode satisfies.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::OracleMismatch(msg));
        if self.total_accepted() + self.iterations.len() != self.generated {
            return fail(format!(
                "accepted {} + iterations {} != generated {}",
                self.total_accepted(),
                self.iterations.len(),
                self.generated
            ));
        }
        if self.llm_calls > self.generated {
            return fail(format!(
                "{} model calls for {} tokens",
                self.llm_calls, self.generated
            ));
        }
        if let Some(it) = self
            .iterations
            .iter()
            .find(|it| it.accepted_tokens > it.drafted_tokens)
        {
            return fail(format!("iteration accepted more than it drafted: {it:?}"));
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for it in &self.iterations {
            serde_json::to_writer(&mut *w, it).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        let totals = Totals {
            llm_calls: self.llm_calls,
            generated: self.generated,
            elapsed_ns: self.elapsed_ns,
        };
        serde_json::to_writer(&mut *w, &totals).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Read traces back; several may be concatenated, each closed by its totals line.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<DecodeTrace>> {
        let mut out = Vec::new();
        let mut current = DecodeTrace::default();
        let mut open = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| Error::format("trace", format!("line {}: {e}", i + 1));
            if let Ok(totals) = serde_json::from_str::<Totals>(&line) {
                current.llm_calls = totals.llm_calls;
                current.generated = totals.generated;
                current.elapsed_ns = totals.elapsed_ns;
                out.push(std::mem::take(&mut current));
                open = false;
            } else {
                current
                    .iterations
                    .push(serde_json::from_str(&line).map_err(bad)?);
                open = true;
            }
        }
        if open {
            return Err(Error::format(
                "trace",
                "iterations without a closing totals line",
            ));
        }
        Ok(out)
    }
}
