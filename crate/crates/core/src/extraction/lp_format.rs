//! Interchange with external MILP solvers.
//!
//! Models are written in CPLEX LP format with variable names such as `F_0`,
//! `FE_2_5` or `Z_0_1_3`. Solutions are read from plain text where each
//! relevant line contains a variable name followed by its value
//! (`FE_2_5 1`). Lines starting with `#` are comments; lines whose tokens do
//! not name a variable are ignored, so Gurobi `.sol` and CBC `solu` files
//! both parse.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use super::ilp::{Cmp, IlpModel, IlpSolution, SolveMethod};
use crate::error::{Error, Result};

fn term(out: &mut String, coef: f64, name: &str, first: bool) {
    if coef < 0.0 {
        let _ = write!(out, " - {:?} {name}", -coef);
    } else if first {
        let _ = write!(out, " {coef:?} {name}");
    } else {
        let _ = write!(out, " + {coef:?} {name}");
    }
}

/// Renders the model (primary plus tie-break objective) as CPLEX LP text.
pub fn write_lp(model: &IlpModel) -> String {
    let names: Vec<String> = model.vars.iter().map(|v| v.kind.to_string()).collect();
    let mut out = String::from("\\ binary chain complex extraction model\nMaximize\n obj:");
    let mut first = true;
    for (v, name) in model.vars.iter().zip(&names) {
        let c = v.objective + v.tie_break;
        if c != 0.0 {
            term(&mut out, c, name, first);
            first = false;
        }
    }
    if first {
        out.push_str(" 0 ");
        out.push_str(names.first().map_or("x", String::as_str));
    }
    out.push_str("\nSubject To\n");
    for (ci, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " c{ci}:");
        for (k, &(v, coef)) in c.terms.iter().enumerate() {
            term(&mut out, coef, &names[v], k == 0);
        }
        let op = match c.cmp {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:?}", c.rhs);
    }
    out.push_str("Binary\n");
    for name in &names {
        let _ = writeln!(out, " {name}");
    }
    out.push_str("End\n");
    out
}

/// Parses a solution file. Variables not mentioned are zero.
pub fn parse_solution(model: &IlpModel, text: &str) -> Result<Vec<bool>> {
    let lookup: HashMap<String, usize> =
        model.vars.iter().enumerate().map(|(i, v)| (v.kind.to_string(), i)).collect();
    let mut x = vec![false; model.num_vars()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        for (t, tok) in tokens.iter().enumerate() {
            if let Some(&v) = lookup.get(*tok) {
                let raw = tokens.get(t + 1).ok_or_else(|| Error::Parse {
                    locus: format!("solution line {}", lineno + 1),
                    message: format!("no value after {tok}"),
                })?;
                let val: f64 = raw.parse().map_err(|_| Error::Parse {
                    locus: format!("solution line {}", lineno + 1),
                    message: format!("bad value {raw:?} for {tok}"),
                })?;
                x[v] = val > 0.5;
                break;
            }
        }
    }
    Ok(x)
}

/// Loads an externally computed solution and checks it against the model.
pub fn solution_from_text(model: &IlpModel, text: &str) -> Result<IlpSolution> {
    let values = parse_solution(model, text)?;
    let bad = model.violations(&values);
    if let Some(&c) = bad.first() {
        return Err(Error::Solver(format!(
            "external solution violates {} constraint(s), first is c{c}",
            bad.len()
        )));
    }
    Ok(IlpSolution {
        objective: model.objective_value(&values),
        values,
        optimal: false,
        gap: f64::NAN,
        nodes: 0,
        method: SolveMethod::External,
    })
}

/// Runs an external solver. `command` is split on whitespace; the
/// placeholders `{lp}` and `{sol}` are replaced with the model and solution
/// paths inside `workdir`.
pub fn solve_external(model: &IlpModel, command: &str, workdir: &Path) -> Result<IlpSolution> {
    let lp = workdir.join("model.lp");
    let sol = workdir.join("model.sol");
    std::fs::write(&lp, write_lp(model))?;
    let mut parts = command.split_whitespace().map(|p| {
        p.replace("{lp}", &lp.to_string_lossy()).replace("{sol}", &sol.to_string_lossy())
    });
    let program = parts.next().ok_or_else(|| Error::Argument("empty solver command".into()))?;
    let status = Command::new(&program).args(parts).status()?;
    if !status.success() {
        return Err(Error::Solver(format!("{program} exited with {status}")));
    }
    solution_from_text(model, &std::fs::read_to_string(&sol)?)
}
