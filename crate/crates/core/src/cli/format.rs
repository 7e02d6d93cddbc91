//! Text matrix files.
//!
//! ```text
//! # comment
//! matrix A 2 2
//! 0 1
//! -2 0
//! ```
//!
//! Blank lines and everything after `#` are ignored. A plant file must
//! define `A`, `B1`, `B2`, `Q` and `R`; gain files hold a single stanza.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{ModelError, Plant};

pub const PLANT_MATRICES: [&str; 5] = ["A", "B1", "B2", "Q", "R"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("matrix {0} is missing")]
    Missing(String),
    #[error("unexpected end of file: matrix {name} needs {expected} rows, found {found}")]
    Truncated { name: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantFileError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid plant: {0}")]
    Plant(#[from] ModelError),
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, column, message: message.into() }
}

/// Whitespace-separated tokens of one line, with 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let content = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in content.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &content[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &content[s..]));
    }
    out.into_iter()
        .map(|(byte, tok)| (content[..byte].chars().count() + 1, tok))
        .collect()
}

fn parse_count(line: usize, (col, tok): (usize, &str), what: &str) -> Result<usize, FormatError> {
    tok.parse::<usize>()
        .map_err(|_| syntax(line, col, format!("expected {what} count, found `{tok}`")))
}

/// Parses every stanza, keyed by name, in file order of appearance.
pub fn parse_matrices(text: &str) -> Result<BTreeMap<String, Matrix>, FormatError> {
    let mut out = BTreeMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, tokens(l)));
    while let Some((lineno, toks)) = lines.next() {
        if toks.is_empty() {
            continue;
        }
        if toks[0].1 != "matrix" {
            return Err(syntax(lineno, toks[0].0, format!("expected `matrix`, found `{}`", toks[0].1)));
        }
        if toks.len() != 4 {
            let col = toks.get(4).map_or(toks[toks.len() - 1].0, |t| t.0);
            return Err(syntax(lineno, col, "header must be `matrix <name> <rows> <cols>`"));
        }
        let name = toks[1].1.to_string();
        let rows = parse_count(lineno, toks[2], "row")?;
        let cols = parse_count(lineno, toks[3], "column")?;
        if out.contains_key(&name) {
            return Err(syntax(lineno, toks[1].0, format!("matrix {name} defined twice")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        let mut found = 0;
        while found < rows {
            let Some((ln, row)) = lines.next() else {
                return Err(FormatError::Truncated { name, expected: rows, found });
            };
            if row.is_empty() {
                continue;
            }
            if row.len() != cols {
                let col = row.get(cols).map_or(row[row.len() - 1].0, |t| t.0);
                return Err(syntax(ln, col, format!("expected {cols} entries, found {}", row.len())));
            }
            for (col, tok) in row {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| syntax(ln, col, format!("`{tok}` is not a number")))?;
                if !v.is_finite() {
                    return Err(syntax(ln, col, format!("`{tok}` is not finite")));
                }
                data.push(v);
            }
            found += 1;
        }
        let m = Matrix::from_vec(rows, cols, data).expect("entries checked above");
        out.insert(name, m);
    }
    Ok(out)
}

pub fn parse_plant(text: &str) -> Result<Plant, PlantFileError> {
    let mut mats = parse_matrices(text)?;
    let mut take = |name: &str| mats.remove(name).ok_or_else(|| FormatError::Missing(name.to_string()));
    let (a, b1, b2, q, r) = (take("A")?, take("B1")?, take("B2")?, take("Q")?, take("R")?);
    Ok(Plant::new(a, b1, b2, q, r)?)
}

/// One stanza. Entries use the shortest representation that parses back
/// to the same `f64`.
pub fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn format_plant(plant: &Plant) -> String {
    let mut out = String::new();
    for (name, m) in PLANT_MATRICES.iter().zip([&plant.a, &plant.b1, &plant.b2, &plant.q, &plant.r]) {
        write_matrix(&mut out, name, m);
    }
    out
}
