//! Debug dump of a [`LinearProgram`] in CPLEX-style LP text.
//!
//! Grammar (one item per line, sections in this order):
//!
//! ```text
//! \ <comment>
//! Maximize
//!  obj: <term> <term> ... [+ <constant>]
//! Subject To
//!  c<i>: <term> ... <= | = | >= <number>
//! Bounds
//!  <lower> <= <name> <= <upper>      (-inf / +inf for infinite)
//! General
//!  <name> ...
//! Binary
//!  <name> ...
//! End
//! ```
//!
//! A term is `+ <number> <name>` or `- <number> <name>`. Numbers are fixed
//! point with nine decimals and trailing zeros removed, so the same model always
//! produces the same bytes.

use std::fmt::Write;

use super::{LinearProgram, VarKind};

pub(crate) fn fixed(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "+inf".into() } else { "-inf".into() };
    }
    let mut s = format!("{:.9}", v);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn var_name(lp: &LinearProgram, j: usize) -> String {
    let raw = lp.names.get(j).map(String::as_str).unwrap_or("");
    let clean: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit()) {
        format!("x{j}_{clean}")
    } else {
        clean
    }
}

fn terms(out: &mut String, lp: &LinearProgram, terms: impl Iterator<Item = (usize, f64)>) {
    let mut any = false;
    for (j, a) in terms {
        if a == 0.0 {
            continue;
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fixed(a.abs()), var_name(lp, j));
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

/// Renders the model as LP text.
pub fn write_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str("\\ h2market model\n");
    out.push_str("Maximize\n obj:");
    terms(&mut out, lp, lp.objective.iter().copied().enumerate());
    if lp.offset != 0.0 {
        let sign = if lp.offset < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}", fixed(lp.offset.abs()));
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        terms(&mut out, lp, c.terms.iter().copied());
        let _ = writeln!(out, " {} {}", c.relation.symbol(), fixed(c.rhs));
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let _ = writeln!(
            out,
            " {} <= {} <= {}",
            fixed(lp.lower[j]),
            var_name(lp, j),
            fixed(lp.upper[j])
        );
    }
    for (title, kind) in [("General", VarKind::Integer), ("Binary", VarKind::Binary)] {
        let names: Vec<String> = (0..lp.num_vars())
            .filter(|&j| lp.kinds[j] == kind)
            .map(|j| var_name(lp, j))
            .collect();
        if !names.is_empty() {
            let _ = writeln!(out, "{title}\n {}", names.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
