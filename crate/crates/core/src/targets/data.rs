use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates and a binary response.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    /// `n × p`, including the intercept column when one was added.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub standardization: Option<Standardization>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Prepend a column of ones named `intercept`.
    pub add_intercept: bool,
    /// Z-score every feature column (before the intercept is added).
    pub standardize: bool,
}

/// Column means and standard deviations removed by standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
                context: "response length",
            });
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: names.len(),
                context: "feature names",
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: pos % x.nrows().max(1),
                message: "non-finite feature".into(),
            });
        }
        if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data {
                row,
                message: format!("response {} is not 0 or 1", y[row]),
            });
        }
        Ok(DesignMatrix {
            x,
            y,
            names,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Reads a CSV with a header row; the last column is the 0/1 response.
    pub fn from_csv_path(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, opts)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, opts: LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.len() < 2 {
            return Err(Error::Data {
                row: 0,
                message: "need at least one feature and a response".into(),
            });
        }
        let p = headers.len() - 1;
        let mut features = Vec::new();
        let mut y = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data {
                row,
                message: e.to_string(),
            })?;
            if rec.len() != headers.len() {
                return Err(Error::Data {
                    row,
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Data {
                    row,
                    message: format!("column '{}' is not numeric: '{cell}'", headers[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Data {
                        row,
                        message: format!("column '{}' is not finite", headers[j]),
                    });
                }
                if j == p {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Data {
                            row,
                            message: format!("response {v} is not 0 or 1"),
                        });
                    }
                    y.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::Data {
                row: 0,
                message: "no data rows".into(),
            });
        }
        let mut x = DMatrix::from_row_slice(n, p, &features);
        let mut names: Vec<String> = headers[..p].to_vec();

        let standardization = if opts.standardize {
            let mut means = Vec::with_capacity(p);
            let mut sds = Vec::with_capacity(p);
            for j in 0..p {
                let mut col = x.column_mut(j);
                let mean = col.mean();
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                // constant columns are centered but left unscaled
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                col.apply(|v| *v = (*v - mean) / sd);
                means.push(mean);
                sds.push(sd);
            }
            Some(Standardization {
                columns: names.clone(),
                means,
                sds,
            })
        } else {
            None
        };

        if opts.add_intercept {
            x = x.insert_column(0, 1.0);
            names.insert(0, "intercept".to_string());
        }
        let mut dm = DesignMatrix::new(x, y, names)?;
        dm.standardization = standardization;
        Ok(dm)
    }
}
