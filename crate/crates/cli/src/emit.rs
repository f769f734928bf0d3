//! Result files: one versioned JSON document plus CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::drivers::{LevelReport, ResultBundle};

fn num(v: f64) -> String {
    if v == 0.0 || (v.is_finite() && (1e-4..1e15).contains(&v.abs())) {
        format!("{v}")
    } else if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn theta_cell(t: &[f64]) -> String {
    t.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

/// Sweep table, one row per sample; witness columns hold the first
/// extracted minimizer.
pub fn sweep_csv(b: &ResultBundle, n: usize) -> String {
    let mut s = String::from("theta,rho,status");
    for i in 1..=n {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",rank,seconds\n");
    for row in &b.sweep {
        s.push_str(&theta_cell(&row.theta));
        match &row.verdict {
            Some(v) => {
                let _ = write!(s, ",{},{}", num(v.rho), v.status.as_str());
                let w = v.minimizers.first();
                for i in 0..n {
                    let _ = write!(s, ",{}", w.map(|w| num(w[i])).unwrap_or_default());
                }
                let _ = writeln!(s, ",{},{}", v.rank.map(|r| r.to_string()).unwrap_or_default(), num(v.seconds));
            }
            None => {
                s.push_str(",,error");
                for _ in 0..n {
                    s.push(',');
                }
                s.push_str(",,\n");
            }
        }
    }
    s
}

/// V_ν on the report grid, taking each point from the piece covering it.
pub fn vnu_csv(b: &ResultBundle, nu: usize) -> Option<String> {
    let rep = b.synthesis.as_ref()?;
    let levels: Vec<&LevelReport> = rep.levels.iter().filter(|l| l.nu == nu && l.error.is_none()).collect();
    if levels.is_empty() {
        return None;
    }
    let k = rep.grid.first().map(|g| g.theta.len()).unwrap_or(1);
    let mut s = if k == 1 {
        String::from("theta")
    } else {
        (1..=k).map(|i| format!("t{i}")).collect::<Vec<_>>().join(",")
    };
    s.push_str(",v_nu,v_grid\n");
    for g in &rep.grid {
        let v = levels.iter().find(|l| l.covers(&g.theta)).map(|l| l.eval(&g.theta));
        let cells: Vec<String> = g.theta.iter().map(|t| num(*t)).collect();
        let _ = writeln!(
            s,
            "{},{},{}",
            cells.join(","),
            v.map(num).unwrap_or_default(),
            g.oracle.map(num).unwrap_or_default()
        );
    }
    Some(s)
}

/// Writes `result.json` and the CSV tables; returns the paths written.
pub fn emit_results(b: &ResultBundle, dir: &Path, n_states: usize) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = vec![];
    let mut put = |name: String, text: String| -> std::io::Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    let json = serde_json::to_string_pretty(b).map_err(std::io::Error::other)?;
    put("result.json".into(), json + "\n")?;
    if !b.sweep.is_empty() {
        put("sweep.csv".into(), sweep_csv(b, n_states))?;
    }
    if let Some(rep) = &b.synthesis {
        let mut nus: Vec<usize> = rep.levels.iter().map(|l| l.nu).collect();
        nus.sort_unstable();
        nus.dedup();
        for nu in nus {
            if let Some(t) = vnu_csv(b, nu) {
                put(format!("vnu_{nu}.csv"), t)?;
            }
        }
    }
    Ok(written)
}
