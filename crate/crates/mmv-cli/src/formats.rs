//! On-disk formats: the matrix-collection JSON file, the JSON-lines draw
//! stream, and the fit-result JSON. UTF-8, row-major nested arrays; one data
//! format, no CSV.

use mmv_core::{MatrixBlock, SpdMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixItem {
    pub rows: usize,
    pub data: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixCollection {
    pub m: usize,
    pub kind: String,
    pub items: Vec<MatrixItem>,
}

/// One sampled tuple per line.
#[derive(Debug, Serialize, Deserialize)]
pub struct DrawLine {
    pub items: Vec<Vec<Vec<f64>>>,
}

pub fn matrix_to_nested(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect())
        .collect()
}

pub fn nested_to_matrix(data: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let rows = data.len();
    let cols = data.first().map(|r| r.len()).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(CliError::data("matrix item is empty"));
    }
    if data.iter().any(|r| r.len() != cols) {
        return Err(CliError::data("ragged rows in matrix item"));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
}

impl MatrixCollection {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let coll: MatrixCollection = serde_json::from_str(text).map_err(|e| {
            CliError::data(format!(
                "malformed collection JSON at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        coll.validate()?;
        Ok(coll)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.m == 0 {
            return Err(CliError::data("collection m must be positive"));
        }
        match self.kind.as_str() {
            "spd" => {
                for (idx, item) in self.items.iter().enumerate() {
                    if item.rows != self.m
                        || item.data.len() != self.m
                        || item.data.iter().any(|r| r.len() != self.m)
                    {
                        return Err(CliError::data(format!(
                            "spd item {idx} must be {0}x{0}",
                            self.m
                        )));
                    }
                    let mat = nested_to_matrix(&item.data)?;
                    let scale = mat.amax().max(1.0);
                    for i in 0..self.m {
                        for j in (i + 1)..self.m {
                            if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * scale {
                                return Err(CliError::data(format!(
                                    "spd item {idx} is not symmetric at ({i},{j})"
                                )));
                            }
                        }
                    }
                }
            }
            "block" => {
                for (idx, item) in self.items.iter().enumerate() {
                    if item.data.len() != item.rows {
                        return Err(CliError::data(format!(
                            "block item {idx} declares {} rows but has {}",
                            item.rows,
                            item.data.len()
                        )));
                    }
                    if item.data.iter().any(|r| r.len() != self.m) {
                        return Err(CliError::data(format!(
                            "block item {idx} must have {} columns",
                            self.m
                        )));
                    }
                    if item.rows < self.m {
                        return Err(CliError::data(format!(
                            "block item {idx} needs rows >= m = {}",
                            self.m
                        )));
                    }
                }
            }
            other => {
                return Err(CliError::data(format!(
                    "unknown collection kind `{other}` (expected spd or block)"
                )))
            }
        }
        Ok(())
    }

    pub fn from_spd(items: &[SpdMatrix]) -> Self {
        let m = items.first().map(|s| s.dim()).unwrap_or(0);
        Self {
            m,
            kind: "spd".into(),
            items: items
                .iter()
                .map(|s| MatrixItem {
                    rows: s.dim(),
                    data: matrix_to_nested(s.as_matrix()),
                })
                .collect(),
        }
    }

    /// Strictly validated SPD items (positive definiteness included).
    pub fn spd_items(&self) -> Result<Vec<SpdMatrix>, CliError> {
        self.require_kind("spd")?;
        self.items
            .iter()
            .enumerate()
            .map(|(idx, item)| {
                SpdMatrix::new(nested_to_matrix(&item.data)?)
                    .map_err(|e| CliError::data(format!("spd item {idx}: {e}")))
            })
            .collect()
    }

    /// SPD items evaluated leniently: indefinite matrices come back as None
    /// so callers can report -inf instead of failing the batch.
    pub fn spd_items_lenient(&self) -> Result<Vec<Option<SpdMatrix>>, CliError> {
        self.require_kind("spd")?;
        self.items
            .iter()
            .map(|item| Ok(SpdMatrix::new(nested_to_matrix(&item.data)?).ok()))
            .collect()
    }

    pub fn block_items(&self) -> Result<Vec<MatrixBlock>, CliError> {
        self.require_kind("block")?;
        self.items
            .iter()
            .enumerate()
            .map(|(idx, item)| {
                MatrixBlock::new(nested_to_matrix(&item.data)?)
                    .map_err(|e| CliError::data(format!("block item {idx}: {e}")))
            })
            .collect()
    }

    fn require_kind(&self, kind: &str) -> Result<(), CliError> {
        if self.kind != kind {
            return Err(CliError::data(format!(
                "collection kind is `{}`, command needs `{kind}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Parses a JSON-lines draw stream.
pub fn parse_draw_lines(text: &str) -> Result<Vec<DrawLine>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::data(format!("malformed draw on line {}: {e}", idx + 1)))
        })
        .collect()
}

pub fn draw_to_line(items: &[DMatrix<f64>]) -> String {
    let line = DrawLine {
        items: items.iter().map(matrix_to_nested).collect(),
    };
    serde_json::to_string(&line).expect("serializable")
}
