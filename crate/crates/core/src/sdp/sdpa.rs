//! SDPA sparse (`.dat-s`) export.
//!
//! SDPA solves `min c'x s.t. sum_i F_i x_i - F_0 >= 0`, which is our form
//! with `F_0 = -B`. Equalities become a diagonal block holding both
//! `F y - g >= 0` and `g - F y >= 0`.

use std::fmt::Write as _;

use super::ConicProgram;

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_sdpa(p: &ConicProgram, title: &str) -> String {
    let rows = p.num_equalities();
    let mut out = String::new();
    writeln!(out, "\"{}\"", title.replace('"', "'")).unwrap();
    writeln!(out, "{}", p.nvar).unwrap();
    let nblocks = p.blocks.len() + usize::from(rows > 0);
    writeln!(out, "{nblocks}").unwrap();
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.side().to_string()).collect();
    if rows > 0 {
        sizes.push(format!("-{}", 2 * rows));
    }
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    writeln!(out, "{}", p.objective.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ")).unwrap();

    // entries: matno blkno i j value, 1-based, i <= j
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (bj, b) in p.blocks.iter().enumerate() {
        let n = b.side();
        for i in 0..n {
            for j in i..n {
                let v = b.constant[(i, j)];
                if v != 0.0 {
                    entries.push((0, bj + 1, i + 1, j + 1, -v));
                }
            }
        }
        let mut per_var: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
        for (var, list) in &b.coeffs {
            for &(i, j, v) in list {
                *per_var.entry((*var, i, j)).or_insert(0.0) += v;
            }
        }
        for ((var, i, j), v) in per_var {
            if v != 0.0 {
                entries.push((var + 1, bj + 1, i + 1, j + 1, v));
            }
        }
    }
    if rows > 0 {
        let blk = p.blocks.len() + 1;
        for r in 0..rows {
            let g = p.eq_rhs[r];
            if g != 0.0 {
                entries.push((0, blk, r + 1, r + 1, g));
                entries.push((0, blk, rows + r + 1, rows + r + 1, -g));
            }
            for k in 0..p.nvar {
                let v = p.eq_matrix[(r, k)];
                if v != 0.0 {
                    entries.push((k + 1, blk, r + 1, r + 1, v));
                    entries.push((k + 1, blk, rows + r + 1, rows + r + 1, -v));
                }
            }
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (m, b, i, j, v) in entries {
        writeln!(out, "{m} {b} {i} {j} {}", num(v)).unwrap();
    }
    out
}
