//! Matrix Market input and convergence-history output.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{NodaError, Result};
use crate::outer::{Algorithm, ConvergenceHistory, ProblemMode};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmField {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixMarketHeader {
    pub format: MmFormat,
    pub field: MmField,
    pub symmetry: MmSymmetry,
}

fn parse_err(line: usize, message: impl Into<String>) -> NodaError {
    NodaError::Parse { line, message: message.into() }
}

fn parse_banner(line: &str, lineno: usize) -> Result<MatrixMarketHeader> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(parse_err(lineno, "banner must start with %%MatrixMarket"));
    }
    if tokens.len() != 5 {
        return Err(parse_err(lineno, "banner must read: %%MatrixMarket matrix <format> <field> <symmetry>"));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(lineno, format!("unsupported object '{}', expected 'matrix'", tokens[1])));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MmFormat::Coordinate,
        "array" => MmFormat::Array,
        other => return Err(parse_err(lineno, format!("unsupported format '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => MmField::Real,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => return Err(parse_err(lineno, format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => return Err(parse_err(lineno, format!("unsupported symmetry '{other}'"))),
    };
    if format == MmFormat::Array && field == MmField::Pattern {
        return Err(parse_err(lineno, "pattern field requires coordinate format"));
    }
    Ok(MatrixMarketHeader { format, field, symmetry })
}

fn parse_value<T: Scalar>(tok: Option<&str>, field: MmField, lineno: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(lineno, "missing value"))?;
    let v: f64 = match field {
        MmField::Integer => {
            tok.parse::<i64>().map_err(|_| parse_err(lineno, format!("invalid integer '{tok}'")))? as f64
        }
        _ => tok.parse().map_err(|_| parse_err(lineno, format!("invalid number '{tok}'")))?,
    };
    if !v.is_finite() {
        return Err(parse_err(lineno, "value is not finite"));
    }
    Ok(T::lit(v))
}

fn parse_index(tok: Option<&str>, n: usize, lineno: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(lineno, "missing index"))?;
    let i: usize = tok.parse().map_err(|_| parse_err(lineno, format!("invalid index '{tok}'")))?;
    if i == 0 || i > n {
        return Err(parse_err(lineno, format!("index {i} out of range 1..={n}")));
    }
    Ok(i - 1)
}

/// Reads a square real matrix; indices become 0-based, `pattern` entries get
/// 1, `symmetric` storage is mirrored and duplicates are summed.
pub fn read_matrix_market<T: Scalar, R: BufRead>(reader: R) -> Result<(MatrixMarketHeader, SparseMatrix<T>)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (lineno, banner) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = parse_banner(&banner?, lineno)?;

    let mut data = lines.filter_map(|(no, l)| match l {
        Ok(s) => {
            let t = s.trim();
            (!t.is_empty() && !t.starts_with('%')).then(|| Ok((no, t.to_string())))
        }
        Err(e) => Some(Err(e)),
    });
    let mut last_line = lineno;

    let (size_line, size) = data.next().transpose()?.ok_or_else(|| parse_err(lineno + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("invalid size '{t}'"))))
        .collect::<Result<_>>()?;
    let expected_dims = if header.format == MmFormat::Coordinate { 3 } else { 2 };
    if dims.len() != expected_dims {
        return Err(parse_err(size_line, format!("size line needs {expected_dims} integers")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if rows != cols {
        return Err(parse_err(size_line, format!("matrix is {rows}x{cols}, not square")));
    }
    if rows == 0 {
        return Err(parse_err(size_line, "matrix dimension must be at least 1"));
    }
    let n = rows;
    let symmetric = header.symmetry == MmSymmetry::Symmetric;

    let mut triplets: Vec<(usize, usize, T)> = Vec::new();
    let mut push = |i: usize, j: usize, v: T| {
        triplets.push((i, j, v));
        if symmetric && i != j {
            triplets.push((j, i, v));
        }
    };

    let expected = match header.format {
        MmFormat::Coordinate => dims[2],
        MmFormat::Array if symmetric => n * (n + 1) / 2,
        MmFormat::Array => n * n,
    };
    // array storage is column-major; symmetric arrays list the lower triangle
    let mut array_pos = (0usize, 0usize);
    for count in 0..expected {
        let (no, line) = match data.next().transpose()? {
            Some(x) => x,
            None => {
                return Err(parse_err(
                    last_line + 1,
                    format!("truncated entry list: expected {expected} entries, found {count}"),
                ))
            }
        };
        last_line = no;
        let mut toks = line.split_whitespace();
        match header.format {
            MmFormat::Coordinate => {
                let i = parse_index(toks.next(), n, no)?;
                let j = parse_index(toks.next(), n, no)?;
                let v = match header.field {
                    MmField::Pattern => T::one(),
                    f => parse_value(toks.next(), f, no)?,
                };
                push(i, j, v);
            }
            MmFormat::Array => {
                let v: T = parse_value(toks.next(), header.field, no)?;
                let (i, j) = array_pos;
                if v != T::zero() {
                    push(i, j, v);
                }
                array_pos = if i + 1 < n {
                    (i + 1, j)
                } else if symmetric {
                    (j + 1, j + 1)
                } else {
                    (0, j + 1)
                };
            }
        }
        if toks.next().is_some() {
            return Err(parse_err(no, "trailing tokens after entry"));
        }
    }
    if let Some((no, _)) = data.next().transpose()? {
        return Err(parse_err(no, format!("more than the declared {expected} entries")));
    }
    let m = SparseMatrix::from_triplets(n, &triplets).map_err(|e| parse_err(last_line, e.to_string()))?;
    Ok((header, m.with_symmetric_hint(symmetric)))
}

pub fn parse_matrix_market<T: Scalar, R: BufRead>(reader: R) -> Result<SparseMatrix<T>> {
    read_matrix_market(reader).map(|(_, m)| m)
}

/// Writes `coordinate real general` with shortest round-trip decimals.
pub fn write_matrix_market<T: Scalar, W: Write>(m: &SparseMatrix<T>, mut sink: W) -> Result<()> {
    writeln!(sink, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(sink, "{} {} {}", m.n(), m.n(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(sink, "{} {} {:?}", i + 1, j + 1, v.as_f64())?;
    }
    Ok(())
}

/// One serialized outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub k: usize,
    pub lambda: f64,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub min_x: f64,
    pub inner_iterations: Option<usize>,
    pub inner_matvecs: Option<usize>,
    pub f_norm: Option<f64>,
    pub eta_k: Option<f64>,
}

pub const CSV_HEADER: &str =
    "k,lambda,residual_norm,relative_residual,min_x,inner_iterations,inner_matvecs,f_norm,eta_k";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryMetadata {
    pub algorithm: Algorithm,
    pub mode: ProblemMode,
    pub gamma: f64,
    pub tol: f64,
    pub matrix: String,
    pub n: usize,
    pub i_outer: usize,
    pub i_inner: usize,
    pub i_total: usize,
    pub positivity: bool,
    pub converged: bool,
    /// Seconds; `None` when timing was suppressed for reproducible output.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFile {
    pub metadata: HistoryMetadata,
    pub records: Vec<HistoryRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryFormat {
    Csv,
    Json,
}

impl HistoryFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => HistoryFormat::Json,
            _ => HistoryFormat::Csv,
        }
    }
}

pub fn history_records<T: Scalar>(history: &ConvergenceHistory<T>) -> Vec<HistoryRecord> {
    history
        .states
        .iter()
        .map(|s| HistoryRecord {
            k: s.k,
            lambda: s.lambda.as_f64(),
            residual_norm: s.residual_norm.as_f64(),
            relative_residual: s.relative_residual.as_f64(),
            min_x: s.min_x.as_f64(),
            inner_iterations: s.inner.as_ref().map(|i| i.iterations),
            inner_matvecs: s.inner.as_ref().map(|i| i.matvecs),
            f_norm: s.inner.as_ref().map(|i| i.f_norm.as_f64()),
            eta_k: s.inner.as_ref().map(|i| i.tolerance.as_f64()),
        })
        .collect()
}

impl HistoryFile {
    pub fn from_history<T: Scalar>(history: &ConvergenceHistory<T>, matrix: &str, include_time: bool) -> Self {
        HistoryFile {
            metadata: HistoryMetadata {
                algorithm: history.algorithm,
                mode: history.mode,
                gamma: history.gamma.as_f64(),
                tol: history.outer_tol.as_f64(),
                matrix: matrix.to_string(),
                n: history.n,
                i_outer: history.i_outer,
                i_inner: history.i_inner,
                i_total: history.i_total,
                positivity: history.positivity_preserved,
                converged: history.converged,
                wall_time: include_time.then_some(history.wall_time.as_secs_f64()),
            },
            records: history_records(history),
        }
    }
}

fn opt<V: std::fmt::Debug>(v: Option<V>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// CSV with [`CSV_HEADER`], one row per record, LF line endings.
pub fn write_history_csv<W: Write>(file: &HistoryFile, mut sink: W) -> Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in &file.records {
        writeln!(
            sink,
            "{},{:?},{:?},{:?},{:?},{},{},{},{}",
            r.k,
            r.lambda,
            r.residual_norm,
            r.relative_residual,
            r.min_x,
            opt(r.inner_iterations),
            opt(r.inner_matvecs),
            opt(r.f_norm),
            opt(r.eta_k)
        )?;
    }
    Ok(())
}

pub fn write_history_json<W: Write>(file: &HistoryFile, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, file)?;
    writeln!(sink)?;
    Ok(())
}

pub fn write_history<W: Write>(file: &HistoryFile, format: HistoryFormat, sink: W) -> Result<()> {
    match format {
        HistoryFormat::Csv => write_history_csv(file, sink),
        HistoryFormat::Json => write_history_json(file, sink),
    }
}

pub fn read_history_json<R: std::io::Read>(reader: R) -> Result<HistoryFile> {
    Ok(serde_json::from_reader(reader)?)
}

/// Parses the CSV written by [`write_history_csv`].
pub fn read_history_csv<R: BufRead>(reader: R) -> Result<Vec<HistoryRecord>> {
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(parse_err(1, "missing or unexpected CSV header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let no = idx + 2;
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(parse_err(no, "expected 9 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(no, format!("invalid number '{s}'")));
        let cnt = |s: &str| s.parse::<usize>().map_err(|_| parse_err(no, format!("invalid count '{s}'")));
        let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let opt_cnt = |s: &str| if s.is_empty() { Ok(None) } else { cnt(s).map(Some) };
        out.push(HistoryRecord {
            k: cnt(f[0])?,
            lambda: num(f[1])?,
            residual_norm: num(f[2])?,
            relative_residual: num(f[3])?,
            min_x: num(f[4])?,
            inner_iterations: opt_cnt(f[5])?,
            inner_matvecs: opt_cnt(f[6])?,
            f_norm: opt_num(f[7])?,
            eta_k: opt_num(f[8])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outer::{SolveOptions, StartVector};
    use crate::perron::solve_perron;
    use crate::sparse::PositiveUnitVector;

    fn parse(text: &str) -> Result<SparseMatrix<f64>> {
        parse_matrix_market(text.as_bytes())
    }

    #[test]
    fn general_coordinate() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 2 1.0\n2 1 1.0\n").unwrap();
        assert_eq!(m.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(!m.symmetric_hint());
    }

    #[test]
    fn symmetric_lower_triangle_is_mirrored() {
        let m = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n2 1 1.0\n1 1 3\n").unwrap();
        assert_eq!(m.to_dense(), vec![vec![3.0, 1.0], vec![1.0, 0.0]]);
        assert!(m.symmetric_hint());
    }

    #[test]
    fn pattern_entries_are_one() {
        let m = parse("%%MatrixMarket matrix coordinate pattern general\n3 3 3\n1 2\n2 3\n3 1\n").unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
        assert!(m.is_irreducible());
    }

    #[test]
    fn integer_and_array_formats() {
        let m = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1 -4\n").unwrap();
        assert_eq!(m.get(0, 0), -4.0);
        // column-major
        let m = parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").unwrap();
        assert_eq!(m.to_dense(), vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        let m = parse("%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n4\n").unwrap();
        assert_eq!(m.to_dense(), vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 2 1.0\n1 2 0.5\n2 1 1\n").unwrap();
        assert_eq!(m.get(0, 1), 1.5);
    }

    fn err_line(text: &str) -> usize {
        match parse(text).unwrap_err() {
            NodaError::Parse { line, .. } => line,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(err_line("%%MatrixMarket tensor coordinate real general\n1 1 0\n"), 1);
        assert_eq!(err_line("MatrixMarket matrix coordinate real general\n"), 1);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate complex general\n"), 1);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate real general\n2 3 0\n"), 2);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n"), 3);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n2 2 1\n"), 5);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n"), 3);
        assert_eq!(err_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 1\n"), 4);
    }

    #[test]
    fn csv_for_converged_start_has_one_row() {
        let ones = SparseMatrix::from_dense(&vec![vec![1.0; 3]; 3]).unwrap();
        let h = solve_perron(&ones, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_history_csv(&HistoryFile::from_history(&h, "ones3", false), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("0,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn csv_lambda_column_for_exchange_trace() {
        let b = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let opts = SolveOptions {
            algorithm: crate::outer::Algorithm::Ni,
            x0: StartVector::Given(PositiveUnitVector::normalize(vec![1.0, 2.0]).unwrap()),
            ..SolveOptions::default()
        };
        let h = solve_perron(&b, &opts).unwrap();
        let mut buf = Vec::new();
        let file = HistoryFile::from_history(&h, "exchange", true);
        write_history_csv(&file, &mut buf).unwrap();
        let records = read_history_csv(buf.as_slice()).unwrap();
        assert_eq!(records, file.records);
        assert_eq!(records[0].lambda, 2.0);
        assert!((records[1].lambda - 1.25).abs() < 1e-14);
        assert!(records.last().unwrap().inner_iterations.is_none());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let b: SparseMatrix<f64> = crate::generate::random_nonnegative(15, 0.2, 3).unwrap();
        let h = solve_perron(&b, &SolveOptions::default()).unwrap();
        let file = HistoryFile::from_history(&h, "random", true);
        let mut buf = Vec::new();
        write_history_json(&file, &mut buf).unwrap();
        let back = read_history_json(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        for (a, b) in back.records.iter().zip(&file.records) {
            assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
            assert_eq!(a.residual_norm.to_bits(), b.residual_norm.to_bits());
        }
    }
}
