//! Trajectory CSV and persisted reduced bases.

use sha2::{Digest, Sha256};
use swingmor_core::mor::{pair_count, PodBasis, QuadOperator, PAIRING_TAG};
use swingmor_core::{DMatrix, DVector, ManifoldBasis, RomMode, Trajectory};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("header says {expected} columns, line {line} has {found}")]
    Width { line: usize, expected: usize, found: usize },
    #[error("basis metadata: {0}")]
    Metadata(String),
    #[error("x_ref checksum mismatch: header {header}, data {data}")]
    Checksum { header: String, data: String },
}

fn syntax(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, msg: msg.into() }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn vector_checksum(v: &DVector<f64>) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

fn parse_row(text: &str, line: usize) -> Result<Vec<f64>, FormatError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| syntax(line, format!("bad number {:?}", t.trim()))))
        .collect()
}

pub fn trajectory_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("delta_{i}")));
    cols.extend((1..=n).map(|i| format!("omega_{i}")));
    cols.join(",")
}

pub fn write_trajectory(traj: &Trajectory, mode: Option<RomMode>) -> String {
    let mut out = String::new();
    if let Some(m) = mode {
        out.push_str(&format!("# mode={}\n", m.as_str()));
    }
    out.push_str(&trajectory_header(traj.n()));
    out.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt_f64(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub trajectory: Trajectory,
    pub mode: Option<String>,
}

pub fn read_trajectory(text: &str) -> Result<TrajectoryFile, FormatError> {
    let mut mode = None;
    let mut width = None;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(c) = body.strip_prefix('#') {
            if let Some(m) = c.trim().strip_prefix("mode=") {
                mode = Some(m.trim().to_string());
            }
            continue;
        }
        let Some(w) = width else {
            let cols: Vec<&str> = body.split(',').map(str::trim).collect();
            let n = (cols.len().saturating_sub(1)) / 2;
            if cols.len() < 3 || cols.len() % 2 == 0 || body != trajectory_header(n) {
                return Err(syntax(line, "expected header t,delta_1..,omega_1.."));
            }
            width = Some(cols.len());
            continue;
        };
        let row = parse_row(body, line)?;
        if row.len() != w {
            return Err(FormatError::Width { line, expected: w, found: row.len() });
        }
        times.push(row[0]);
        states.push(DVector::from_row_slice(&row[1..]));
    }
    if width.is_none() {
        return Err(syntax(1, "empty trajectory file"));
    }
    Ok(TrajectoryFile { trajectory: Trajectory { times, states, wall_clock: 0.0 }, mode })
}

/// Text container for a fitted basis.
///
/// A `#` header carries `dim`, `r`, `lambda`, the pairing tag and the
/// sha256 of `x_ref`; the body has `x_ref`, `sigma`, `v` and `vbar` rows.
pub fn write_basis(basis: &ManifoldBasis) -> String {
    let mut out = String::from("# swingmor basis\n");
    out.push_str(&format!("# dim={}\n# r={}\n", basis.dim(), basis.r()));
    match &basis.quad {
        Some(q) => out.push_str(&format!("# lambda={}\n# underdetermined={}\n", fmt_f64(q.lambda), q.underdetermined)),
        None => out.push_str("# lambda=none\n"),
    }
    out.push_str(&format!("# pairing={PAIRING_TAG}\n# x_ref_sha256={}\n", vector_checksum(&basis.x_ref)));
    let push = |out: &mut String, tag: &str, vals: &mut dyn Iterator<Item = f64>| {
        out.push_str(tag);
        for v in vals {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    };
    push(&mut out, "x_ref", &mut basis.x_ref.iter().copied());
    push(&mut out, "sigma", &mut basis.pod.singular_values.iter().copied());
    for row in basis.pod.v.row_iter() {
        push(&mut out, "v", &mut row.iter().copied());
    }
    if let Some(q) = &basis.quad {
        for row in q.vbar.row_iter() {
            push(&mut out, "vbar", &mut row.iter().copied());
        }
    }
    out
}

fn meta<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str, FormatError> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| FormatError::Metadata(format!("missing {key}")))
}

fn meta_num<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T, FormatError> {
    let raw = meta(pairs, key)?;
    raw.parse().map_err(|_| FormatError::Metadata(format!("bad {key}: {raw:?}")))
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>, FormatError> {
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(FormatError::Metadata(format!("{what} row has {} entries, need {cols}", bad.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_basis(text: &str) -> Result<ManifoldBasis, FormatError> {
    let mut header = Vec::new();
    let mut x_ref = None;
    let mut sigma = None;
    let mut v_rows = Vec::new();
    let mut vbar_rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(c) = body.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let (tag, rest) = body.split_once(',').unwrap_or((body, ""));
        let vals = if rest.is_empty() { Vec::new() } else { parse_row(rest, line)? };
        match tag {
            "x_ref" => x_ref = Some(vals),
            "sigma" => sigma = Some(vals),
            "v" => v_rows.push(vals),
            "vbar" => vbar_rows.push(vals),
            other => return Err(syntax(line, format!("unknown row tag {other:?}"))),
        }
    }
    let dim: usize = meta_num(&header, "dim")?;
    let r: usize = meta_num(&header, "r")?;
    let tag = meta(&header, "pairing")?;
    if tag != PAIRING_TAG {
        return Err(FormatError::Metadata(format!("pairing {tag:?}, expected {PAIRING_TAG:?}")));
    }
    let x_ref = DVector::from_vec(x_ref.ok_or_else(|| FormatError::Metadata("missing x_ref row".into()))?);
    if x_ref.len() != dim {
        return Err(FormatError::Metadata(format!("x_ref has {} entries, dim is {dim}", x_ref.len())));
    }
    let want = meta(&header, "x_ref_sha256")?;
    let got = vector_checksum(&x_ref);
    if want != got {
        return Err(FormatError::Checksum { header: want.to_string(), data: got });
    }
    if v_rows.len() != dim {
        return Err(FormatError::Metadata(format!("{} v rows, dim is {dim}", v_rows.len())));
    }
    let v = rows_to_matrix(&v_rows, r, "v")?;
    let singular_values = DVector::from_vec(sigma.unwrap_or_default());
    let pod = PodBasis { v, singular_values, r };
    let quad = match meta(&header, "lambda")? {
        "none" => None,
        _ => {
            let lambda: f64 = meta_num(&header, "lambda")?;
            if vbar_rows.len() != dim {
                return Err(FormatError::Metadata(format!("{} vbar rows, dim is {dim}", vbar_rows.len())));
            }
            let vbar = rows_to_matrix(&vbar_rows, pair_count(r), "vbar")?;
            let underdetermined = meta_num(&header, "underdetermined").unwrap_or(false);
            Some(QuadOperator { vbar, lambda, r, underdetermined })
        }
    };
    Ok(ManifoldBasis { pod, quad, x_ref })
}
