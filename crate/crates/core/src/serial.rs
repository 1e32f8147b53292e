//! JSON helpers shared by the file formats: complex numbers as `[re, im]`,
//! matrices as row-major nested arrays.

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::linalg::{zeros, CMat};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn complex_to_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

/// Serde adapter writing a complex number as `[re, im]`.
pub fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&[z.re, z.im], s)
}

pub fn complex_from_json(v: &Value) -> Option<Complex64> {
    match v {
        Value::Array(a) if a.len() == 2 => Some(Complex64::new(a[0].as_f64()?, a[1].as_f64()?)),
        Value::Number(n) => Some(Complex64::new(n.as_f64()?, 0.0)),
        _ => None,
    }
}

pub fn mat_to_rows(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn mat_to_json(m: &CMat) -> Value {
    serde_json::to_value(mat_to_rows(m)).expect("matrix serialises")
}

/// Parse a row-major nested array. All rows must share a length.
pub fn mat_from_rows(rows: &JsonMatrix) -> Option<CMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    let mut m = zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            m[(i, j)] = Complex64::new(z[0], z[1]);
        }
    }
    Some(m)
}

pub fn mat_from_json(v: &Value) -> Option<CMat> {
    let rows: JsonMatrix = serde_json::from_value(v.clone()).ok()?;
    mat_from_rows(&rows)
}

/// Deterministic pretty JSON text. `serde_json` writes the shortest decimal
/// that round-trips each float and keeps struct field order.
pub fn to_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn matrix_round_trip() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.1, 0.0), c(-3.0, 2.0), c(0.0, -1.0)]);
        let back = mat_from_json(&mat_to_json(&m)).unwrap();
        assert_eq!(m, back);
    }
}
