use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{SpeedDataset, WindowSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = open(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn parse_numeric_rows(path: &Path, rows: &[Vec<String>], first_line: usize) -> Result<(usize, Vec<f64>)> {
    let width = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * width);
    for (i, row) in rows.iter().enumerate() {
        let line = first_line + i;
        if row.len() != width {
            return Err(Error::Data(format!(
                "{}: line {line} has {} fields, expected {width}",
                path.display(),
                row.len()
            )));
        }
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: line {line}, column {}: '{cell}' is not a number",
                    path.display(),
                    j + 1
                ))
            })?;
            data.push(v);
        }
    }
    Ok((width, data))
}

/// Reads a `T×N` speed matrix. The first row is treated as node ids when any
/// of its cells is non-numeric.
pub fn load_speed_csv(path: &Path, spec: WindowSpec) -> Result<SpeedDataset> {
    let mut rows = read_records(path)?;
    let header = match rows.first() {
        Some(first) if first.iter().any(|c| c.parse::<f64>().is_err()) => Some(rows.remove(0)),
        _ => None,
    };
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let first_line = if header.is_some() { 2 } else { 1 };
    let (width, data) = parse_numeric_rows(path, &rows, first_line)?;
    if let Some(h) = &header {
        if h.len() != width {
            return Err(Error::Data(format!(
                "{}: header has {} ids but rows have {width} fields",
                path.display(),
                h.len()
            )));
        }
    }
    let speeds = Tensor::matrix(rows.len(), width, data)?;
    let mut ds = SpeedDataset::new(speeds)?;
    if let Some(h) = header {
        ds = ds.with_node_ids(h)?;
    }
    ds.check_windowable(spec)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(ds)
}

/// Reads an `N×N` nonnegative adjacency matrix without header.
pub fn load_adjacency_csv(path: &Path) -> Result<Tensor> {
    let rows = read_records(path)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty adjacency", path.display())));
    }
    let (width, data) = parse_numeric_rows(path, &rows, 1)?;
    if width != rows.len() {
        return Err(Error::Data(format!(
            "{}: adjacency must be square, got {}×{width}",
            path.display(),
            rows.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data(format!(
            "{}: adjacency entries must be nonnegative",
            path.display()
        )));
    }
    Tensor::matrix(width, width, data)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_matrix<W: Write>(out: &mut W, t: &Tensor) -> std::io::Result<()> {
    for r in 0..t.rows() {
        let line: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes speeds with shortest round-trip decimal text, so reading the file
/// back reproduces every value exactly.
pub fn write_speed_csv(path: &Path, ds: &SpeedDataset) -> Result<()> {
    let mut out = create(path)?;
    let res = (|| {
        if let Some(ids) = ds.node_ids() {
            writeln!(out, "{}", ids.join(","))?;
        }
        write_matrix(&mut out, ds.speeds())?;
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_adjacency_csv(path: &Path, adjacency: &Tensor) -> Result<()> {
    let mut out = create(path)?;
    write_matrix(&mut out, adjacency)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// `node,class` rows with a header line.
pub fn write_classes_csv(path: &Path, classes: &[usize]) -> Result<()> {
    let mut out = create(path)?;
    let res = (|| {
        writeln!(out, "node,class")?;
        for (i, c) in classes.iter().enumerate() {
            writeln!(out, "{i},{c}")?;
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}
