//! Line-oriented text formats for force constants, derivative tensors and
//! displacement scans, plus the JSON crystal document.
//!
//! Every text file starts with a `units` line and ends with an `end`
//! trailer, so a file cut short is always detected. Blank lines and
//! anything after `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spinrelax_core::coupling::{
    fit_derivative_scan, CouplingDerivativeSet, DerivativeRecord, DerivativeScan, Provenance, TensorTarget,
};
use spinrelax_core::lattice::{Atom, CrystalModel, FcRecord, ForceConstantSet};
use spinrelax_core::{Tensor3, Vec3};

use crate::error::{CliError, CliResult};

pub const FC_UNITS: &str = "eV/A^2";
pub const DERIVATIVE_UNITS: &str = "per-A";
pub const SCAN_UNITS: &str = "A";

struct Line<'a> {
    number: usize,
    offset: usize,
    fields: Vec<&'a str>,
}

/// Non-empty lines with comments stripped, each with its 1-based number
/// and the byte offset of its start.
fn records(src: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (k, raw) in src.split_inclusive('\n').enumerate() {
        let text = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = text.split_whitespace().collect();
        if !fields.is_empty() {
            out.push(Line { number: k + 1, offset, fields });
        }
        offset += raw.len();
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    lines: Vec<Line<'a>>,
    pos: usize,
    len: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, src: &'a str) -> Self {
        Self { path, lines: records(src), pos: 0, len: src.len() }
    }

    fn err(&self, line: &Line, msg: impl Into<String>) -> CliError {
        CliError::Malformed { path: self.path.to_path_buf(), line: line.number, offset: line.offset, msg: msg.into() }
    }

    fn truncated(&self) -> CliError {
        CliError::Malformed {
            path: self.path.to_path_buf(),
            line: self.lines.last().map_or(0, |l| l.number),
            offset: self.len,
            msg: "file ends without the 'end' trailer (truncated?)".into(),
        }
    }

    fn units(&mut self, expected: &str) -> CliResult<()> {
        let units_err = |msg: String| CliError::Units { path: self.path.to_path_buf(), msg };
        let Some(first) = self.lines.first() else {
            return Err(units_err(format!("empty file; expected 'units {expected}'")));
        };
        if first.fields[0] != "units" {
            return Err(units_err(format!("first record must be 'units {expected}'")));
        }
        if first.fields.get(1) != Some(&expected) || first.fields.len() != 2 {
            return Err(units_err(format!("expected 'units {expected}', found '{}'", first.fields.join(" "))));
        }
        self.pos = 1;
        Ok(())
    }

    fn next(&mut self) -> Option<&Line<'a>> {
        let l = self.lines.get(self.pos);
        self.pos += 1;
        l
    }

    fn peek(&self) -> Option<&Line<'a>> {
        self.lines.get(self.pos)
    }

    /// Consumes the trailer and checks nothing follows it.
    fn finish(&mut self, line_index: usize) -> CliResult<()> {
        let end = &self.lines[line_index];
        if end.fields.len() != 1 {
            return Err(self.err(end, "'end' takes no arguments"));
        }
        if let Some(extra) = self.lines.get(line_index + 1) {
            return Err(self.err(extra, "records after 'end'"));
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(r: &Reader, line: &Line, k: usize, what: &str) -> CliResult<T> {
    line.fields[k]
        .parse()
        .map_err(|_| r.err(line, format!("field {} ({what}) '{}' is not a valid number", k + 1, line.fields[k])))
}

fn finite(r: &Reader, line: &Line, k: usize, what: &str) -> CliResult<f64> {
    let v: f64 = num(r, line, k, what)?;
    if !v.is_finite() {
        return Err(r.err(line, format!("field {} ({what}) is not finite", k + 1)));
    }
    Ok(v)
}

fn direction(r: &Reader, line: &Line, k: usize) -> CliResult<usize> {
    let s: usize = num(r, line, k, "Cartesian index")?;
    if s > 2 {
        return Err(r.err(line, format!("Cartesian index {s} outside 0..=2")));
    }
    Ok(s)
}

fn tensor(r: &Reader, line: &Line, start: usize) -> CliResult<Tensor3> {
    let mut m = Tensor3::zeros();
    for k in 0..9 {
        m[(k / 3, k % 3)] = finite(r, line, start + k, "tensor element")?;
    }
    Ok(m)
}

/// Parses "l1 l2 l3 i s j t value" records.
pub fn parse_force_constants(path: &Path, src: &str, masses: Vec<f64>) -> CliResult<ForceConstantSet> {
    let mut r = Reader::new(path, src);
    r.units(FC_UNITS)?;
    let n = masses.len();
    let mut out = Vec::new();
    loop {
        let idx = r.pos;
        let Some(line) = r.next() else { return Err(r.truncated()) };
        if line.fields[0] == "end" {
            r.finish(idx)?;
            break;
        }
        let line = &r.lines[idx];
        if line.fields.len() != 8 {
            return Err(r.err(line, format!("expected 8 fields 'l1 l2 l3 i s j t value', found {}", line.fields.len())));
        }
        let cell = [num(&r, line, 0, "l1")?, num(&r, line, 1, "l2")?, num(&r, line, 2, "l3")?];
        let i: usize = num(&r, line, 3, "atom i")?;
        let j: usize = num(&r, line, 5, "atom j")?;
        if i >= n || j >= n {
            return Err(r.err(line, format!("atom index out of range (crystal has {n} atoms)")));
        }
        out.push(FcRecord {
            cell,
            i,
            s: direction(&r, line, 4)?,
            j,
            t: direction(&r, line, 6)?,
            value: finite(&r, line, 7, "value")?,
        });
    }
    Ok(ForceConstantSet::new(masses, out)?)
}

pub fn write_force_constants(fc: &ForceConstantSet) -> String {
    let mut s = format!("units {FC_UNITS}\n# l1 l2 l3 i s j t value\n");
    for r in fc.records() {
        let _ = writeln!(s, "{} {} {} {} {} {} {} {:e}", r.cell[0], r.cell[1], r.cell[2], r.i, r.s, r.j, r.t, r.value);
    }
    s.push_str("end\n");
    s
}

fn provenance(r: &mut Reader) -> CliResult<Provenance> {
    let Some(line) = r.peek() else { return Err(r.truncated()) };
    if line.fields[0] != "provenance" {
        return Ok(Provenance::Fitted);
    }
    let p = match line.fields.get(1).copied() {
        Some("fitted") => Provenance::Fitted,
        Some("analytic") => Provenance::Analytic,
        Some("synthetic") => Provenance::Synthetic,
        _ => return Err(r.err(line, "provenance must be fitted, analytic or synthetic")),
    };
    r.pos += 1;
    Ok(p)
}

fn target(r: &Reader, line: &Line, k: usize) -> CliResult<TensorTarget> {
    TensorTarget::parse(line.fields[k]).map_err(|e| r.err(line, e.to_string()))
}

/// Parses "tensor_id atom s l1 l2 l3 m11 ... m33" records.
pub fn parse_derivatives(path: &Path, src: &str) -> CliResult<CouplingDerivativeSet> {
    let mut r = Reader::new(path, src);
    r.units(DERIVATIVE_UNITS)?;
    let prov = provenance(&mut r)?;
    let mut out = Vec::new();
    loop {
        let idx = r.pos;
        let Some(line) = r.next() else { return Err(r.truncated()) };
        if line.fields[0] == "end" {
            r.finish(idx)?;
            break;
        }
        let line = &r.lines[idx];
        if line.fields.len() != 15 {
            return Err(r.err(
                line,
                format!("expected 15 fields 'tensor_id atom s l1 l2 l3 m11..m33', found {}", line.fields.len()),
            ));
        }
        out.push(DerivativeRecord {
            target: target(&r, line, 0)?,
            atom: num(&r, line, 1, "atom")?,
            s: direction(&r, line, 2)?,
            cell: [num(&r, line, 3, "l1")?, num(&r, line, 4, "l2")?, num(&r, line, 5, "l3")?],
            tensor: tensor(&r, line, 6)?,
        });
    }
    Ok(CouplingDerivativeSet::new(out, prov))
}

pub fn write_derivatives(d: &CouplingDerivativeSet) -> String {
    let prov = match d.provenance {
        Provenance::Fitted => "fitted",
        Provenance::Analytic => "analytic",
        Provenance::Synthetic => "synthetic",
    };
    let mut s = format!("units {DERIVATIVE_UNITS}\nprovenance {prov}\n# tensor_id atom s l1 l2 l3 m11 m12 m13 m21 m22 m23 m31 m32 m33\n");
    for r in &d.records {
        let _ = write!(s, "{} {} {} {} {} {}", r.target.label(), r.atom, r.s, r.cell[0], r.cell[1], r.cell[2]);
        for k in 0..9 {
            let _ = write!(s, " {:e}", r.tensor[(k / 3, k % 3)]);
        }
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

/// Parses displacement scans:
///
/// ```text
/// units A
/// scan g0 3 2 0 0 0        # tensor_id atom s l1 l2 l3
/// -0.010 m11 ... m33       # displacement and tensor, one line per point
/// ...
/// end
/// ```
pub fn parse_scans(path: &Path, src: &str) -> CliResult<Vec<DerivativeScan>> {
    let mut r = Reader::new(path, src);
    r.units(SCAN_UNITS)?;
    let mut scans: Vec<DerivativeScan> = Vec::new();
    loop {
        let idx = r.pos;
        if r.next().is_none() {
            return Err(r.truncated());
        }
        let line = &r.lines[idx];
        match line.fields[0] {
            "end" => {
                r.finish(idx)?;
                break;
            }
            "scan" => {
                if line.fields.len() != 7 {
                    return Err(r.err(line, "expected 'scan tensor_id atom s l1 l2 l3'"));
                }
                scans.push(DerivativeScan {
                    target: target(&r, line, 1)?,
                    atom: num(&r, line, 2, "atom")?,
                    s: direction(&r, line, 3)?,
                    cell: [num(&r, line, 4, "l1")?, num(&r, line, 5, "l2")?, num(&r, line, 6, "l3")?],
                    points: Vec::new(),
                });
            }
            _ => {
                if line.fields.len() != 10 {
                    return Err(r.err(line, format!("expected 10 fields 'x m11..m33', found {}", line.fields.len())));
                }
                let x = finite(&r, line, 0, "displacement")?;
                let t = tensor(&r, line, 1)?;
                let Some(scan) = scans.last_mut() else {
                    return Err(r.err(line, "displacement row before any 'scan' header"));
                };
                scan.points.push((x, t));
            }
        }
    }
    for (k, s) in scans.iter().enumerate() {
        s.validate().map_err(|e| CliError::Validation(format!("{}: scan {k}: {e}", path.display())))?;
    }
    Ok(scans)
}

pub fn write_scans(scans: &[DerivativeScan]) -> String {
    let mut s = format!("units {SCAN_UNITS}\n");
    for sc in scans {
        let _ = writeln!(s, "scan {} {} {} {} {} {}", sc.target.label(), sc.atom, sc.s, sc.cell[0], sc.cell[1], sc.cell[2]);
        for (x, t) in &sc.points {
            let _ = write!(s, "{x:e}");
            for k in 0..9 {
                let _ = write!(s, " {:e}", t[(k / 3, k % 3)]);
            }
            s.push('\n');
        }
    }
    s.push_str("end\n");
    s
}

/// Fits every scan and collects the linear coefficients as derivative
/// records; rejected components are logged and left at zero.
pub fn fit_scans(scans: &[DerivativeScan], rejection: f64) -> CliResult<CouplingDerivativeSet> {
    let mut records = Vec::with_capacity(scans.len());
    for s in scans {
        let fit = fit_derivative_scan(s, rejection)?;
        if fit.rejected_count() > 0 {
            log::info!(
                "{} atom {} direction {}: {} of 9 components rejected by the {:.0}% rule",
                s.target.label(),
                s.atom,
                s.s,
                fit.rejected_count(),
                rejection * 100.0
            );
        }
        records.push(DerivativeRecord { target: s.target, atom: s.atom, s: s.s, cell: s.cell, tensor: fit.tensor });
    }
    Ok(CouplingDerivativeSet::new(records, Provenance::Fitted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalUnits {
    pub length: String,
    pub mass: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub label: String,
    pub mass: f64,
    pub frac: [f64; 3],
    pub molecule: usize,
}

/// JSON crystal: lattice vectors as rows, fractional atom positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalDoc {
    pub units: CrystalUnits,
    pub cell: [[f64; 3]; 3],
    pub atoms: Vec<AtomDoc>,
}

impl CrystalDoc {
    pub fn from_model(c: &CrystalModel) -> Self {
        Self {
            units: CrystalUnits { length: "angstrom".into(), mass: "amu".into() },
            cell: [0, 1, 2].map(|r| [0, 1, 2].map(|k| c.cell[(r, k)])),
            atoms: c
                .atoms
                .iter()
                .map(|a| AtomDoc { label: a.label.clone(), mass: a.mass, frac: [a.frac.x, a.frac.y, a.frac.z], molecule: a.molecule })
                .collect(),
        }
    }

    pub fn to_model(&self, path: &Path) -> CliResult<CrystalModel> {
        if self.units.length != "angstrom" || self.units.mass != "amu" {
            return Err(CliError::Units {
                path: path.to_path_buf(),
                msg: format!("crystal units must be angstrom/amu, found {}/{}", self.units.length, self.units.mass),
            });
        }
        let cell = Tensor3::from_fn(|r, k| self.cell[r][k]);
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { label: a.label.clone(), mass: a.mass, frac: Vec3::from(a.frac), molecule: a.molecule })
            .collect();
        CrystalModel::new(cell, atoms).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

pub fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Strict JSON decode with the file name in the message.
pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, src: &str) -> CliResult<T> {
    serde_json::from_str(src).map_err(|e| CliError::Json { path: path.to_path_buf(), msg: e.to_string() })
}
