//! File formats: `BTD1` binary tensors, JSON decompositions and CSV matrices.
//!
//! A `BTD1` file starts with the ASCII line `BTD1 <R|C> <I> <J> <K>\n`,
//! followed by little-endian `f64` values in storage order (`k` fastest);
//! complex entries are stored as consecutive real and imaginary parts.
//!
//! A decomposition file is a JSON object with `A` (row-major nested
//! arrays), `terms` (a list of `{ "B": .., "C": .. }`) and `sizes`. Complex
//! entries are written as `[re, im]` pairs.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::Value;

use crate::decomposition::{BlockTermDecomposition, Term};
use crate::error::{Error, Result};
use crate::scalar::{Field, Scalar};
use crate::solver::SolveReport;
use crate::tensor::Tensor3;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// A tensor read from disk, in whichever field the file declares.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Real(Tensor3<f64>),
    Complex(Tensor3<Complex64>),
}

impl AnyTensor {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            AnyTensor::Real(t) => t.dims(),
            AnyTensor::Complex(t) => t.dims(),
        }
    }
}

pub fn write_btd1<T: Scalar, W: Write>(t: &Tensor3<T>, mut w: W) -> Result<()> {
    let [i, j, k] = t.dims();
    let tag = match T::FIELD {
        Field::Real => 'R',
        Field::Complex => 'C',
    };
    writeln!(w, "BTD1 {tag} {i} {j} {k}")?;
    let mut buf = Vec::with_capacity(t.values().len() * 16);
    for v in t.values() {
        let z = v.to_complex();
        buf.extend_from_slice(&z.re.to_le_bytes());
        if T::FIELD == Field::Complex {
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_btd1<R: Read>(r: R) -> Result<AnyTensor> {
    let mut reader = BufReader::new(r);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let header = std::str::from_utf8(&header).map_err(|_| format_err("header is not ASCII"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "BTD1" {
        return Err(format_err(format!("expected `BTD1 <R|C> <I> <J> <K>`, got `{}`", header.trim_end())));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| format_err(format!("bad dimension `{s}`")));
    let dims = [dim(parts[2])?, dim(parts[3])?, dim(parts[4])?];
    let per_entry = match parts[1] {
        "R" => 1,
        "C" => 2,
        other => return Err(format_err(format!("unknown field tag `{other}`"))),
    };
    let count = dims.iter().product::<usize>() * per_entry;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(format_err(format!("expected {} data bytes, found {}", count * 8, bytes.len())));
    }
    let floats: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    let to_format = |e: Error| format_err(e.to_string());
    if per_entry == 1 {
        Ok(AnyTensor::Real(Tensor3::new(dims, floats).map_err(to_format)?))
    } else {
        let values = floats.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Ok(AnyTensor::Complex(Tensor3::new(dims, values).map_err(to_format)?))
    }
}

pub fn save_btd1<T: Scalar>(t: &Tensor3<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_btd1(t, std::io::BufWriter::new(f))
}

pub fn load_btd1(path: impl AsRef<Path>) -> Result<AnyTensor> {
    read_btd1(std::fs::File::open(path)?)
}

fn scalar_json<T: Scalar>(v: T) -> Value {
    let z = v.to_complex();
    match T::FIELD {
        Field::Real => Value::from(z.re),
        Field::Complex => Value::from(vec![z.re, z.im]),
    }
}

fn matrix_json<T: Scalar>(m: &DMatrix<T>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| scalar_json(m[(i, j)])).collect())).collect())
}

fn parse_scalar<T: Scalar>(v: &Value) -> Result<T> {
    match (v, T::FIELD) {
        (Value::Number(n), _) => n.as_f64().map(|x| T::from_complex(Complex64::new(x, 0.0))).ok_or_else(|| format_err("bad number")),
        (Value::Array(p), Field::Complex) if p.len() == 2 => {
            let re = p[0].as_f64().ok_or_else(|| format_err("bad real part"))?;
            let im = p[1].as_f64().ok_or_else(|| format_err("bad imaginary part"))?;
            Ok(T::from_complex(Complex64::new(re, im)))
        }
        _ => Err(format_err(format!("unexpected matrix entry `{v}`"))),
    }
}

fn parse_matrix<T: Scalar>(v: &Value, name: &str) -> Result<DMatrix<T>> {
    let rows = v.as_array().ok_or_else(|| format_err(format!("`{name}` must be an array of rows")))?;
    let ncols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for row in rows {
        let row = row.as_array().filter(|r| r.len() == ncols).ok_or_else(|| format_err(format!("`{name}` rows must have equal length")))?;
        for x in row {
            data.push(parse_scalar::<T>(x)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

/// JSON value for a decomposition.
pub fn decomposition_to_json<T: Scalar>(d: &BlockTermDecomposition<T>) -> Value {
    let terms: Vec<Value> =
        d.terms.iter().map(|t| serde_json::json!({ "B": matrix_json(&t.b), "C": matrix_json(&t.c) })).collect();
    serde_json::json!({
        "field": T::FIELD,
        "A": matrix_json(&d.a),
        "terms": terms,
        "sizes": d.sizes(),
    })
}

pub fn decomposition_from_json<T: Scalar>(v: &Value) -> Result<BlockTermDecomposition<T>> {
    let a = parse_matrix::<T>(v.get("A").ok_or_else(|| format_err("missing `A`"))?, "A")?;
    let terms_json = v.get("terms").and_then(Value::as_array).ok_or_else(|| format_err("missing `terms` array"))?;
    let mut terms = Vec::with_capacity(terms_json.len());
    for t in terms_json {
        let b = parse_matrix::<T>(t.get("B").ok_or_else(|| format_err("term without `B`"))?, "B")?;
        let c = parse_matrix::<T>(t.get("C").ok_or_else(|| format_err("term without `C`"))?, "C")?;
        terms.push(Term { b, c });
    }
    let d = BlockTermDecomposition::new(a, terms).map_err(|e| format_err(e.to_string()))?;
    if let Some(sizes) = v.get("sizes") {
        let sizes: Vec<usize> = serde_json::from_value(sizes.clone())?;
        if sizes != d.sizes() {
            return Err(format_err("`sizes` disagrees with the term widths"));
        }
    }
    Ok(d)
}

pub fn save_decomposition<T: Scalar>(d: &BlockTermDecomposition<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &decomposition_to_json(d))?;
    Ok(())
}

/// Field declared by a decomposition file (`real` when absent).
pub fn decomposition_field(v: &Value) -> Result<Field> {
    match v.get("field") {
        None => Ok(Field::Real),
        Some(f) => Ok(Field::deserialize(f)?),
    }
}

pub fn load_decomposition_json(path: impl AsRef<Path>) -> Result<Value> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// JSON value for a solver report, with the decomposition embedded.
pub fn solve_report_to_json<T: Scalar>(rep: &SolveReport<T>) -> Value {
    serde_json::json!({
        "detected_r": rep.detected_r,
        "detected_d": rep.detected_d,
        "detected_l": rep.detected_l,
        "case": rep.case_used,
        "residual": rep.residual,
        "diagnostics": rep.diagnostics,
        "decomposition": decomposition_to_json(&rep.decomposition),
    })
}

/// Row-major CSV with shortest round-trip decimal entries. Complex entries
/// are written as `re+imi`.
pub fn matrix_to_csv<T: Scalar>(m: &DMatrix<T>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| {
                let z = m[(i, j)].to_complex();
                match T::FIELD {
                    Field::Real => format!("{}", z.re),
                    Field::Complex => format!("{}{:+}i", z.re, z.im),
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::random_btd;

    #[test]
    fn btd1_round_trip_real_and_complex() {
        let d = random_btd::<f64>([2, 3, 4], &[1, 2], 1).unwrap();
        let t = d.compose();
        let mut buf = Vec::new();
        write_btd1(&t, &mut buf).unwrap();
        assert!(buf.starts_with(b"BTD1 R 2 3 4\n"));
        assert_eq!(read_btd1(&buf[..]).unwrap(), AnyTensor::Real(t));

        let d = random_btd::<Complex64>([2, 3, 4], &[1, 2], 1).unwrap();
        let t = d.compose();
        let mut buf = Vec::new();
        write_btd1(&t, &mut buf).unwrap();
        assert_eq!(read_btd1(&buf[..]).unwrap(), AnyTensor::Complex(t));
    }

    #[test]
    fn btd1_rejects_malformed_input() {
        assert!(matches!(read_btd1(&b"BTD2 R 1 1 1\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read_btd1(&b"BTD1 R 1 1 2\n\0\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
        assert!(matches!(read_btd1(&b"BTD1 Q 1 1 1\n\0\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn decomposition_json_round_trip() {
        let d = random_btd::<f64>([3, 4, 5], &[1, 2, 2], 2).unwrap();
        let v = decomposition_to_json(&d);
        assert_eq!(decomposition_field(&v).unwrap(), Field::Real);
        assert_eq!(decomposition_from_json::<f64>(&v).unwrap(), d);
        let d = random_btd::<Complex64>([3, 4, 5], &[1, 2], 2).unwrap();
        let v = decomposition_to_json(&d);
        assert_eq!(decomposition_field(&v).unwrap(), Field::Complex);
        assert_eq!(decomposition_from_json::<Complex64>(&v).unwrap(), d);
    }

    #[test]
    fn csv_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -3.0, 4.5]);
        assert_eq!(matrix_to_csv(&m), "1,0.1\n-3,4.5\n");
    }
}
