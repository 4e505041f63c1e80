//! Reader and writer for MATPOWER `mpc` struct case files.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` are consumed.
//! Every other assignment is skipped, including multi-line matrices such as
//! `mpc.gencost`.

use std::fmt::Write as _;

use swingmor_core::case::{BranchRecord, BusRecord, BusType, GenRecord, PowerCase};
use swingmor_core::CaseError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing mpc.{0}")]
    MissingField(&'static str),
    #[error("line {line}: mpc.{field} row has {got} columns, need at least {need}")]
    ShortRow { field: &'static str, line: usize, need: usize, got: usize },
    #[error("invalid case: {0}")]
    Validation(#[from] CaseError),
}

/// Matrix rows together with the source line each row started on.
#[derive(Debug, Default)]
struct Block {
    rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug)]
struct Scan {
    base_mva: Option<f64>,
    bus: Option<Block>,
    gen: Option<Block>,
    branch: Option<Block>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64, IngestError> {
    let v: f64 = match tok {
        "Inf" | "inf" => f64::INFINITY,
        "-Inf" | "-inf" => f64::NEG_INFINITY,
        _ => tok
            .parse()
            .map_err(|_| IngestError::Syntax { line, msg: format!("not a number: {tok:?}") })?,
    };
    Ok(v)
}

fn scan(text: &str) -> Result<Scan, IngestError> {
    let mut out = Scan { base_mva: None, bus: None, gen: None, branch: None };
    // (field name, rows so far, row under construction, line it started on)
    let mut open: Option<(String, Block, Vec<f64>, usize)> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut rest = strip_comment(raw).trim();

        if open.is_none() {
            if rest.is_empty() {
                continue;
            }
            let Some(after) = rest.strip_prefix("mpc.") else { continue };
            let Some(eq) = after.find('=') else { continue };
            let field = after[..eq].trim().to_string();
            let value = after[eq + 1..].trim();
            if let Some(body) = value.strip_prefix('[') {
                open = Some((field, Block::default(), Vec::new(), lineno));
                rest = body;
            } else {
                if field == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    out.base_mva = Some(parse_number(v, lineno)?);
                }
                continue;
            }
        }

        let (field, block, row, start) = open.as_mut().expect("inside a matrix");
        let skip = !matches!(field.as_str(), "bus" | "gen" | "branch");
        let (body, closes) = match rest.find(']') {
            Some(j) => (&rest[..j], true),
            None => (rest, false),
        };
        if !skip {
            for (n, piece) in body.split(';').enumerate() {
                if n > 0 && !row.is_empty() {
                    block.rows.push((*start, std::mem::take(row)));
                }
                if row.is_empty() {
                    *start = lineno;
                }
                for tok in piece.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                    row.push(parse_number(tok, lineno)?);
                }
            }
            // A newline also ends a row.
            if !row.is_empty() {
                block.rows.push((*start, std::mem::take(row)));
            }
        }
        if closes {
            let (field, block, _, _) = open.take().expect("inside a matrix");
            match field.as_str() {
                "bus" => out.bus = Some(block),
                "gen" => out.gen = Some(block),
                "branch" => out.branch = Some(block),
                _ => {}
            }
        }
    }
    if let Some((field, _, _, start)) = open {
        return Err(IngestError::Syntax { line: start, msg: format!("unterminated matrix mpc.{field}") });
    }
    Ok(out)
}

fn need(field: &'static str, line: usize, row: &[f64], n: usize) -> Result<(), IngestError> {
    if row.len() < n {
        return Err(IngestError::ShortRow { field, line, need: n, got: row.len() });
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<u32, IngestError> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(IngestError::Syntax { line, msg: format!("{v} is not a bus number") });
    }
    Ok(v as u32)
}

/// Parsed case plus the raw matrix row counts found in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCase {
    pub case: PowerCase,
    pub file_buses: usize,
    pub file_gens: usize,
    pub file_branches: usize,
}

/// Parses and validates; out-of-service generators and branches are dropped.
pub fn parse_matpower(text: &str, name: &str) -> Result<ParsedCase, IngestError> {
    let s = scan(text)?;
    let base_mva = s.base_mva.ok_or(IngestError::MissingField("baseMVA"))?;
    let bus_block = s.bus.ok_or(IngestError::MissingField("bus"))?;
    let gen_block = s.gen.ok_or(IngestError::MissingField("gen"))?;
    let branch_block = s.branch.ok_or(IngestError::MissingField("branch"))?;

    let mut buses = Vec::with_capacity(bus_block.rows.len());
    for (line, r) in &bus_block.rows {
        need("bus", *line, r, 10)?;
        let id = as_id(r[0], *line)?;
        let code = r[1] as i64;
        let btype = BusType::from_code(code).ok_or(CaseError::UnsupportedBusType { bus: id, btype: code })?;
        buses.push(BusRecord {
            id,
            btype,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
        });
    }
    let mut gens = Vec::with_capacity(gen_block.rows.len());
    for (line, r) in &gen_block.rows {
        need("gen", *line, r, 9)?;
        gens.push(GenRecord {
            bus: as_id(r[0], *line)?,
            pg: r[1],
            qg: r[2],
            mbase: r[6],
            status: r[7] > 0.0,
            pmax: r[8],
        });
    }
    let mut branches = Vec::with_capacity(branch_block.rows.len());
    for (line, r) in &branch_block.rows {
        need("branch", *line, r, 11)?;
        branches.push(BranchRecord {
            from_bus: as_id(r[0], *line)?,
            to_bus: as_id(r[1], *line)?,
            r: r[2],
            x: r[3],
            b: r[4],
            tap: r[8],
            shift: r[9],
            status: r[10] > 0.0,
        });
    }
    let case = PowerCase { name: name.to_string(), base_mva, buses, gens, branches }.validated()?;
    Ok(ParsedCase {
        case,
        file_buses: bus_block.rows.len(),
        file_gens: gen_block.rows.len(),
        file_branches: branch_block.rows.len(),
    })
}

pub fn parse_matpower_case(text: &str, name: &str) -> Result<PowerCase, IngestError> {
    Ok(parse_matpower(text, name)?.case)
}

/// Shortest representation that parses back to the same bits.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a case file that [`parse_matpower_case`] reads back unchanged.
/// Columns the model does not use are filled with neutral placeholders.
pub fn write_matpower_case(case: &PowerCase) -> String {
    let mut s = String::new();
    let fname: String = case.name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    let _ = writeln!(s, "function mpc = {fname}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", num(case.base_mva));
    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    s.push_str("mpc.bus = [\n");
    for b in &case.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id,
            b.btype.code(),
            num(b.pd),
            num(b.qd),
            num(b.gs),
            num(b.bs),
            num(b.vm),
            num(b.va),
            num(b.base_kv)
        );
    }
    s.push_str("];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n");
    for g in &case.gens {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t0\t0\t1\t{}\t{}\t{}\t0;",
            g.bus,
            num(g.pg),
            num(g.qg),
            num(g.mbase),
            if g.status { 1 } else { 0 },
            num(g.pmax)
        );
    }
    s.push_str("];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            num(br.r),
            num(br.x),
            num(br.b),
            num(br.tap),
            num(br.shift),
            if br.status { 1 } else { 0 }
        );
    }
    s.push_str("];\n");
    s
}
