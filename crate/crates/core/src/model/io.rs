//! JSON model files.
//!
//! ```json
//! { "n": 2, "h": [1.0, 0.0], "J": [[1.0, 0.3], [0.3, 1.0]] }
//! { "n": 2, "h": [1.0, 0.0], "J": { "i": [0, 0, 1], "j": [0, 1, 1], "v": [1.0, 0.3, 1.0] } }
//! ```
//!
//! The sparse form lists the upper triangle (diagonal included); symmetry is
//! implied. The writer always emits the sparse form with entries sorted by
//! `(i, j)`, `i <= j`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GaussianModel;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    h: Vec<f64>,
    #[serde(rename = "J")]
    j: MatrixRepr,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Dense(Vec<Vec<f64>>),
    Sparse { i: Vec<usize>, j: Vec<usize>, v: Vec<f64> },
}

pub fn parse_model(text: &str) -> Result<GaussianModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    let n = file.n;
    if file.h.len() != n {
        return Err(Error::Parse(format!("\"h\" has {} entries, expected n = {n}", file.h.len())));
    }
    let j = match file.j {
        MatrixRepr::Dense(rows) => {
            if rows.len() != n {
                return Err(Error::Parse(format!("\"J\" has {} rows, expected {n}", rows.len())));
            }
            let mut j = DMatrix::zeros(n, n);
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Parse(format!(
                        "\"J\" row {a} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                for (b, &v) in row.iter().enumerate() {
                    j[(a, b)] = v;
                }
            }
            j
        }
        MatrixRepr::Sparse { i, j: cols, v } => {
            if i.len() != cols.len() || i.len() != v.len() {
                return Err(Error::Parse("sparse \"J\" needs equal-length i, j, v".into()));
            }
            let mut j = DMatrix::zeros(n, n);
            let mut seen = vec![false; n * n];
            for ((&a, &b), &val) in i.iter().zip(&cols).zip(&v) {
                if a >= n || b >= n {
                    return Err(Error::Parse(format!("sparse entry ({a}, {b}) out of range")));
                }
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                if std::mem::replace(&mut seen[a * n + b], true) {
                    return Err(Error::Parse(format!("duplicate sparse entry ({a}, {b})")));
                }
                j[(a, b)] = val;
                j[(b, a)] = val;
            }
            j
        }
    };
    GaussianModel::new(DVector::from_vec(file.h), j)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<GaussianModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn model_to_json(model: &GaussianModel) -> Result<String> {
    let n = model.n();
    let (mut is, mut js, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for a in 0..n {
        for b in a..n {
            let v = model.j()[(a, b)];
            if v != 0.0 {
                is.push(a);
                js.push(b);
                vs.push(v);
            }
        }
    }
    let file = ModelFile {
        n,
        h: model.h().iter().copied().collect(),
        j: MatrixRepr::Sparse { i: is, j: js, v: vs },
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn write_model(path: impl AsRef<Path>, model: &GaussianModel) -> Result<()> {
    std::fs::write(path, model_to_json(model)? + "\n")?;
    Ok(())
}
