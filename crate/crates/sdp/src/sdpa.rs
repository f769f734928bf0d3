//! Sparse SDPA (".dat-s") reader and writer.
//!
//! The format states `max ⟨F0, Y⟩ s.t. ⟨F_j, Y⟩ = c_j, Y ⪰ 0` for its dual, so
//! a standard-form problem is written with `F_j = A_j`, `c = b` and `F0 = −C`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Result, SdpError};
use crate::problem::{BlockKind, Constraint, Entry, SdpProblem};

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn merged(entries: &[Entry], sign: f64) -> BTreeMap<(usize, usize, usize), f64> {
    let mut m = BTreeMap::new();
    for e in entries {
        *m.entry((e.block, e.row, e.col)).or_insert(0.0) += sign * e.value;
    }
    m.retain(|_, v| *v != 0.0);
    m
}

pub fn write_sdpa(p: &SdpProblem) -> String {
    let mut out = String::new();
    writeln!(out, "{}", p.constraints.len()).unwrap();
    writeln!(out, "{}", p.blocks.len()).unwrap();
    let sizes: Vec<String> = p.blocks.iter().map(|b| b.signed_size().to_string()).collect();
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    let rhs: Vec<String> = p.constraints.iter().map(|c| fmt_value(c.rhs)).collect();
    writeln!(out, "{}", rhs.join(" ")).unwrap();
    let mut emit = |matno: usize, entries: &[Entry], sign: f64| {
        for ((b, i, j), v) in merged(entries, sign) {
            writeln!(out, "{} {} {} {} {}", matno, b + 1, i + 1, j + 1, fmt_value(v)).unwrap();
        }
    };
    emit(0, &p.objective, -1.0);
    for (k, c) in p.constraints.iter().enumerate() {
        emit(k + 1, &c.entries, 1.0);
    }
    out
}

fn clean(line: &str) -> String {
    line.chars()
        .map(|c| if matches!(c, ',' | '{' | '}' | '(' | ')') { ' ' } else { c })
        .collect()
}

pub fn parse_sdpa(text: &str) -> Result<SdpProblem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .skip_while(|(_, l)| l.starts_with('*') || l.starts_with('"'));
    let perr = |line: usize, msg: &str| SdpError::Parse {
        line,
        msg: msg.to_string(),
    };
    let next_header = |lines: &mut dyn Iterator<Item = (usize, &str)>, what: &str| {
        lines
            .next()
            .ok_or_else(|| perr(0, &format!("missing {what}")))
            .map(|(n, l)| (n, clean(l)))
    };

    let (ln, l) = next_header(&mut lines, "constraint count")?;
    let m: usize = l
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(ln, "bad constraint count"))?;
    let (ln, l) = next_header(&mut lines, "block count")?;
    let nblocks: usize = l
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(ln, "bad block count"))?;

    // block sizes and rhs may wrap across lines
    let mut sizes: Vec<i64> = Vec::new();
    while sizes.len() < nblocks {
        let (ln, l) = next_header(&mut lines, "block sizes")?;
        for t in l.split_whitespace() {
            if sizes.len() < nblocks {
                let v: f64 = t.parse().map_err(|_| perr(ln, "bad block size"))?;
                if v == 0.0 || v.fract() != 0.0 {
                    return Err(perr(ln, "bad block size"));
                }
                sizes.push(v as i64);
            }
        }
    }
    let mut rhs: Vec<f64> = Vec::new();
    while rhs.len() < m {
        let (ln, l) = next_header(&mut lines, "objective vector")?;
        for t in l.split_whitespace() {
            if rhs.len() < m {
                rhs.push(t.parse().map_err(|_| perr(ln, "bad objective entry"))?);
            }
        }
    }

    let blocks: Vec<BlockKind> = sizes.into_iter().map(BlockKind::from_signed).collect();
    let mut p = SdpProblem::new(blocks);
    p.constraints = rhs
        .into_iter()
        .map(|r| Constraint {
            entries: Vec::new(),
            rhs: r,
        })
        .collect();
    for (ln, l) in lines {
        let l = clean(l);
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(perr(ln, "expected 'matno blkno i j value'"));
        }
        let int = |t: &str| -> Result<usize> { t.parse().map_err(|_| perr(ln, "bad index")) };
        let matno = int(toks[0])?;
        let blk = int(toks[1])?;
        let i = int(toks[2])?;
        let j = int(toks[3])?;
        let v: f64 = toks[4].parse().map_err(|_| perr(ln, "bad value"))?;
        if blk == 0 || blk > p.blocks.len() || i == 0 || j == 0 {
            return Err(perr(ln, "index out of range"));
        }
        let n = p.blocks[blk - 1].dim();
        if i > n || j > n {
            return Err(perr(ln, "entry outside block"));
        }
        if matches!(p.blocks[blk - 1], BlockKind::Diagonal(_)) && i != j {
            return Err(perr(ln, "off-diagonal entry in diagonal block"));
        }
        let e = Entry::new(blk - 1, i - 1, j - 1, v);
        if matno == 0 {
            p.objective.push(Entry { value: -v, ..e });
        } else if matno <= m {
            p.constraints[matno - 1].entries.push(e);
        } else {
            return Err(perr(ln, "matrix number out of range"));
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_constraint_file_has_five_lines() {
        let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], 1.0);
        let text = write_sdpa(&p);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next(), Some("1"));
    }

    #[test]
    fn objective_sign_survives_round_trip() {
        let mut p = SdpProblem::new(vec![BlockKind::Psd(2), BlockKind::Diagonal(3)]);
        p.objective = vec![Entry::new(0, 0, 1, 0.25), Entry::new(1, 2, 2, -3.0)];
        p.add_constraint(vec![Entry::new(0, 1, 1, 1.0), Entry::new(1, 0, 0, 2.0)], 0.1);
        let q = parse_sdpa(&write_sdpa(&p)).unwrap();
        assert_eq!(q.objective, p.objective);
        assert_eq!(q.constraints, p.constraints);
        assert_eq!(q.blocks, p.blocks);
    }

    #[test]
    fn rejects_bad_indices() {
        let text = "1\n1\n2\n1.0\n1 1 3 1 1.0\n";
        assert!(matches!(parse_sdpa(text), Err(SdpError::Parse { line: 5, .. })));
    }
}
