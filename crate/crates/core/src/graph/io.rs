//! Text formats for graphs and fixtures.
//!
//! - Edge list: first line `n m`, then `m` lines `u v` (0-based, `u < v`,
//!   sorted), LF-terminated.
//! - Labels: one integer per line.
//! - Features: CSV with header `f0,f1,...` and one row of floats per node.

use super::Graph;
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::matrix::Matrix;

pub fn write_edge_list(g: &Graph) -> String {
    let mut out = format!("{} {}\n", g.n(), g.edges().len());
    for &(u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        detail: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("bad {what} '{tok}'"),
    })
}

pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        detail: "empty edge list".into(),
    })?;
    let mut toks = header.split_whitespace();
    let n = parse_usize(toks.next(), 1, "node count")?;
    let m = parse_usize(toks.next(), 1, "edge count")?;
    let mut pairs = Vec::with_capacity(m);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let u = parse_usize(toks.next(), i + 1, "endpoint")?;
        let v = parse_usize(toks.next(), i + 1, "endpoint")?;
        if toks.next().is_some() {
            return Err(Error::Parse {
                line: i + 1,
                detail: "trailing tokens".into(),
            });
        }
        pairs.push((u, v));
    }
    if pairs.len() != m {
        return Err(Error::Parse {
            line: 1,
            detail: format!("header declares {m} edges, found {}", pairs.len()),
        });
    }
    Graph::from_edge_list(n, &pairs)
}

pub fn write_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_usize(Some(l.trim()), i + 1, "label"))
        .collect()
}

pub fn write_features(x: &Matrix) -> String {
    let header: Vec<String> = (0..x.cols()).map(|j| format!("f{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|&v| sig6(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_features(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        detail: "empty features file".into(),
    })?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    detail: format!("bad float '{t}'"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("{} fields, header has {cols}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols));
    }
    Matrix::from_rows(&rows)
}
