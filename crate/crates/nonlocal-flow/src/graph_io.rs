//! Edge-list text format.
//!
//! ```text
//! # comment
//! vertices: 3
//! omega: 0 1
//! weight: 2 0.5
//! 0 1 1.0
//! 1 2 1.0
//! ```
//!
//! `vertices:` is optional; without it the vertex count is one past the largest
//! index mentioned anywhere. Vertex weights default to 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use anyhow::{anyhow, bail, Context, Result};
use nonlocal_core::{graph_space, DiscreteSpace, KernelMatrix};

fn parse_index(tok: &str, line: usize) -> Result<usize> {
    tok.parse().with_context(|| format!("line {line}: bad vertex index `{tok}`"))
}

fn parse_real(tok: &str, line: usize) -> Result<f64> {
    tok.parse().with_context(|| format!("line {line}: bad number `{tok}`"))
}

/// Parses an edge list; `vertex_weights` entries override `weight:` lines.
pub fn load_graph(
    reader: impl BufRead,
    vertex_weights: Option<&BTreeMap<usize, f64>>,
) -> Result<(DiscreteSpace, KernelMatrix)> {
    let mut declared: Option<usize> = None;
    let mut omega: Option<Vec<usize>> = None;
    let mut weights = BTreeMap::new();
    let mut edges = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let ln = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("vertices:") {
            declared = Some(parse_index(rest.trim(), ln)?);
        } else if let Some(rest) = text.strip_prefix("omega:") {
            if omega.is_some() {
                bail!("line {ln}: second `omega:` header");
            }
            omega = Some(rest.split_whitespace().map(|t| parse_index(t, ln)).collect::<Result<_>>()?);
        } else if let Some(rest) = text.strip_prefix("weight:") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 2 {
                bail!("line {ln}: expected `weight: i m`");
            }
            let m = parse_real(toks[1], ln)?;
            if !(m.is_finite() && m > 0.0) {
                bail!("line {ln}: vertex weight must be positive, got {m}");
            }
            weights.insert(parse_index(toks[0], ln)?, m);
        } else {
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 3 {
                bail!("line {ln}: expected `i j b`, got `{text}`");
            }
            let (i, j) = (parse_index(toks[0], ln)?, parse_index(toks[1], ln)?);
            let b = parse_real(toks[2], ln)?;
            if i == j {
                bail!("line {ln}: self-loop rejected at vertex {i}");
            }
            if !(b.is_finite() && b > 0.0) {
                bail!("line {ln}: edge weight must be positive, got {b}");
            }
            edges.push((i, j, b));
        }
    }
    let omega = omega.ok_or_else(|| anyhow!("missing `omega:` header"))?;
    if omega.is_empty() {
        bail!("omega set is empty");
    }
    if let Some(extra) = vertex_weights {
        weights.extend(extra.iter().map(|(&i, &m)| (i, m)));
    }
    let largest = edges
        .iter()
        .flat_map(|&(i, j, _)| [i, j])
        .chain(omega.iter().copied())
        .chain(weights.keys().copied())
        .max()
        .unwrap_or(0);
    let n = match declared {
        Some(n) if largest >= n => bail!("vertex {largest} referenced but only {n} declared"),
        Some(n) => n,
        None => largest + 1,
    };
    let mu = (0..n).map(|i| weights.get(&i).copied().unwrap_or(1.0)).collect();
    Ok(graph_space(mu, &omega, edges)?)
}

pub fn load_graph_str(text: &str) -> Result<(DiscreteSpace, KernelMatrix)> {
    load_graph(text.as_bytes(), None)
}

pub fn load_graph_file(path: &std::path::Path) -> Result<(DiscreteSpace, KernelMatrix)> {
    let f = std::fs::File::open(path).with_context(|| format!("opening graph {}", path.display()))?;
    load_graph(std::io::BufReader::new(f), None).with_context(|| format!("reading graph {}", path.display()))
}

/// Writes the format back; floats use the shortest round-trip representation.
pub fn write_graph(space: &DiscreteSpace, kernel: &KernelMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "vertices: {}", space.n_points());
    let omega: Vec<String> = space.omega_indices().iter().map(|i| i.to_string()).collect();
    let _ = writeln!(s, "omega: {}", omega.join(" "));
    for (i, &m) in space.mu().iter().enumerate() {
        if m != 1.0 {
            let _ = writeln!(s, "weight: {i} {m:?}");
        }
    }
    for &(i, j, w) in kernel.pairs() {
        let _ = writeln!(s, "{i} {j} {w:?}");
    }
    s
}
