//! Files written by a run: manifest, per-γ records, trade-off table,
//! sparsity patterns, gains and the plant.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::format::{format_plant, write_matrix};
use crate::linalg::Matrix;
use crate::model::{cardinality_report_with_tol, BlockPartition, Granularity, Plant, StructureMask};
use crate::path::{GammaRecord, PathResult};

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// `X` for a free entry, `.` for a zero. Block boundaries are drawn with
/// `|` between block columns and a row of `-` between block rows.
pub fn render_pattern(mask: &StructureMask, part: Option<&BlockPartition>) -> String {
    let (rows, cols) = mask.shape();
    let bounds = |sizes: &[usize]| -> Vec<usize> {
        sizes.iter().scan(0, |acc, s| { *acc += s; Some(*acc) }).collect()
    };
    let (row_ends, col_ends) = match part {
        Some(p) => (bounds(&p.row_sizes), bounds(&p.col_sizes)),
        None => (vec![rows], vec![cols]),
    };
    let is_col_break = |j: usize| j > 0 && col_ends.contains(&j);
    let width = cols + (1..cols).filter(|&j| is_col_break(j)).count();
    let mut out = String::new();
    for i in 0..rows {
        if i > 0 && row_ends.contains(&i) {
            out.push_str(&"-".repeat(width));
            out.push('\n');
        }
        for j in 0..cols {
            if is_col_break(j) {
                out.push('|');
            }
            out.push(if mask.is_free(i, j) { 'X' } else { '.' });
        }
        out.push('\n');
    }
    out
}

/// One line of `records.jsonl`.
#[derive(Serialize)]
struct RecordLine<'a> {
    index: usize,
    #[serde(flatten)]
    record: &'a GammaRecord,
    nnz_ratio: f64,
    dj_percent: f64,
}

fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "inf".into()
    }
}

/// Blocks of `rec`'s identified gain under `part`, whatever penalty produced it.
fn blocks_under(rec: &GammaRecord, part: Option<&BlockPartition>) -> usize {
    match part {
        Some(p) => cardinality_report_with_tol(&rec.f_identified, &Granularity::Blockwise(p.clone()), rec.zero_tol)
            .map_or(rec.nnz_blocks, |r| r.nnz_blocks),
        None => rec.nnz_blocks,
    }
}

pub fn tradeoff_csv(result: &PathResult, part: Option<&BlockPartition>) -> String {
    let mut out = String::from("gamma,nnz,nnz_ratio,nnz_blocks,J_identified,J_polished,dJ_percent,admm_iters,status\n");
    for rec in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_float(rec.gamma),
            rec.nnz,
            csv_float(result.nnz_ratio(rec)),
            blocks_under(rec, part),
            csv_float(rec.j_identified),
            csv_float(rec.j_polished),
            csv_float(result.dj_percent(rec)),
            rec.admm_iters,
            rec.status.as_str(),
        );
    }
    out
}

pub fn records_jsonl(result: &PathResult) -> serde_json::Result<String> {
    let mut out = String::new();
    for (index, record) in result.records.iter().enumerate() {
        let line = RecordLine {
            index,
            record,
            nnz_ratio: result.nnz_ratio(record),
            dj_percent: result.dj_percent(record),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

fn gain_file(gamma: f64, what: &str, f: &Matrix) -> String {
    let mut out = format!("# {what} gain at gamma = {gamma:?}\n");
    write_matrix(&mut out, "F", f);
    out
}

/// Writes every output of a run into `dir`, which is created if needed.
pub fn write_run(
    dir: &Path,
    manifest: &impl Serialize,
    plant: &Plant,
    result: &PathResult,
    part: Option<&BlockPartition>,
    positions: Option<&[[f64; 2]]>,
) -> io::Result<()> {
    let patterns = dir.join("patterns");
    let gains = dir.join("gains");
    fs::create_dir_all(&patterns)?;
    fs::create_dir_all(&gains)?;
    let json = |e: serde_json::Error| io::Error::new(io::ErrorKind::InvalidData, e);

    let mut manifest = serde_json::to_string_pretty(manifest).map_err(json)?;
    manifest.push('\n');
    write_atomic(&dir.join("manifest.json"), manifest.as_bytes())?;
    write_atomic(&dir.join("records.jsonl"), records_jsonl(result).map_err(json)?.as_bytes())?;
    write_atomic(&dir.join("tradeoff.csv"), tradeoff_csv(result, part).as_bytes())?;
    write_atomic(&dir.join("plant.txt"), format_plant(plant).as_bytes())?;
    if let Some(pos) = positions {
        let mut csv = String::from("node,x,y\n");
        for (i, [x, y]) in pos.iter().enumerate() {
            let _ = writeln!(csv, "{i},{x:?},{y:?}");
        }
        write_atomic(&dir.join("positions.csv"), csv.as_bytes())?;
    }
    for (k, rec) in result.records.iter().enumerate() {
        let header = format!("# gamma = {:?}, nnz = {}\n", rec.gamma, rec.nnz);
        let pattern = header + &render_pattern(&rec.mask, part);
        write_atomic(&patterns.join(format!("pattern_{k:03}.txt")), pattern.as_bytes())?;
        let ident = gain_file(rec.gamma, "identified", &rec.f_identified);
        write_atomic(&gains.join(format!("F_identified_{k:03}.txt")), ident.as_bytes())?;
        let pol = gain_file(rec.gamma, "polished", &rec.f_polished);
        write_atomic(&gains.join(format!("F_polished_{k:03}.txt")), pol.as_bytes())?;
    }
    Ok(())
}
