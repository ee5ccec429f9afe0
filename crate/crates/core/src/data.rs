//! Recorded trajectories and the Hankel-matrix machinery built on them.
//!
//! A single sufficiently exciting input/output record parameterizes every
//! trajectory a controllable LTI plant can produce: stack the record into
//! block-Hankel form and take column combinations. [`stacked_predictor`]
//! packages that as one matrix with input rows on top, output rows below,
//! and optionally a stage-cost row block at the bottom.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Relative singular-value threshold for the excitation rank test.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("trajectory must contain at least one sample")]
    Empty,
    #[error("input and output sequences have different lengths ({inputs} vs {outputs})")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("sample {index} has inconsistent dimension")]
    RaggedSample { index: usize },
    #[error("cost column has {got} entries for {expected} samples")]
    CostLengthMismatch { expected: usize, got: usize },
    #[error("trajectory has no cost column")]
    MissingCost,
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("window length {window} exceeds the {samples} recorded samples")]
    WindowTooLong { window: usize, samples: usize },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input/output record of one plant experiment, optionally annotated with
/// the realized stage cost of each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTrajectory {
    inputs: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
    cost: Option<Vec<f64>>,
}

impl DataTrajectory {
    pub fn new(inputs: Vec<DVector<f64>>, outputs: Vec<DVector<f64>>) -> Result<Self, DataError> {
        if inputs.is_empty() {
            return Err(DataError::Empty);
        }
        if inputs.len() != outputs.len() {
            return Err(DataError::LengthMismatch {
                inputs: inputs.len(),
                outputs: outputs.len(),
            });
        }
        let m = inputs[0].len();
        let p = outputs[0].len();
        for (k, (u, y)) in inputs.iter().zip(outputs.iter()).enumerate() {
            if u.len() != m || y.len() != p {
                return Err(DataError::RaggedSample { index: k });
            }
        }
        Ok(Self {
            inputs,
            outputs,
            cost: None,
        })
    }

    /// Attaches the per-sample stage cost column.
    pub fn with_cost(mut self, cost: Vec<f64>) -> Result<Self, DataError> {
        if cost.len() != self.len() {
            return Err(DataError::CostLengthMismatch {
                expected: self.len(),
                got: cost.len(),
            });
        }
        self.cost = Some(cost);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn cost(&self) -> Option<&[f64]> {
        self.cost.as_deref()
    }

    pub fn has_cost(&self) -> bool {
        self.cost.is_some()
    }

    /// Writes the `k,u_1..u_m,y_1..y_p[,l]` table. Values use shortest
    /// round-trip decimal notation, so reading the file back reproduces
    /// every float exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        let mut header = String::from("k");
        for ch in 1..=self.input_dim() {
            header.push_str(&format!(",u_{ch}"));
        }
        for ch in 1..=self.output_dim() {
            header.push_str(&format!(",y_{ch}"));
        }
        if self.cost.is_some() {
            header.push_str(",l");
        }
        writeln!(out, "{header}")?;
        for k in 0..self.len() {
            let mut line = k.to_string();
            for v in self.inputs[k].iter() {
                line.push_str(&format!(",{v}"));
            }
            for v in self.outputs[k].iter() {
                line.push_str(&format!(",{v}"));
            }
            if let Some(cost) = &self.cost {
                line.push_str(&format!(",{}", cost[k]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Parses the table produced by [`DataTrajectory::write_csv`]. Channel
    /// counts come from the header; rows must be dense and numbered 0..N.
    pub fn read_csv<R: Read>(source: R) -> Result<Self, DataError> {
        let reader = BufReader::new(source);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(DataError::Csv {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header?;
        let fields: Vec<&str> = header.trim().split(',').collect();
        if fields.first() != Some(&"k") {
            return Err(DataError::Csv {
                line: 1,
                message: "header must start with `k`".into(),
            });
        }
        let m = fields.iter().filter(|f| f.starts_with("u_")).count();
        let p = fields.iter().filter(|f| f.starts_with("y_")).count();
        let has_cost = fields.last() == Some(&"l");
        let expected = 1 + m + p + usize::from(has_cost);
        if m == 0 || p == 0 || fields.len() != expected {
            return Err(DataError::Csv {
                line: 1,
                message: format!("malformed header `{header}`"),
            });
        }

        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut cost = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim().split(',').collect();
            if cells.len() != expected {
                return Err(DataError::Csv {
                    line: line_no,
                    message: format!("expected {expected} fields, got {}", cells.len()),
                });
            }
            let k: usize = cells[0].parse().map_err(|_| DataError::Csv {
                line: line_no,
                message: format!("bad sample index `{}`", cells[0]),
            })?;
            if k != inputs.len() {
                return Err(DataError::Csv {
                    line: line_no,
                    message: format!("sample index {k} out of order"),
                });
            }
            let parse = |cell: &str| -> Result<f64, DataError> {
                cell.parse().map_err(|_| DataError::Csv {
                    line: line_no,
                    message: format!("bad number `{cell}`"),
                })
            };
            let u: Vec<f64> = cells[1..1 + m]
                .iter()
                .map(|c| parse(c))
                .collect::<Result<_, _>>()?;
            let y: Vec<f64> = cells[1 + m..1 + m + p]
                .iter()
                .map(|c| parse(c))
                .collect::<Result<_, _>>()?;
            inputs.push(DVector::from_vec(u));
            outputs.push(DVector::from_vec(y));
            if has_cost {
                cost.push(parse(cells[expected - 1])?);
            }
        }
        let data = Self::new(inputs, outputs)?;
        if has_cost {
            data.with_cost(cost)
        } else {
            Ok(data)
        }
    }

    /// Short content hash of the canonical CSV serialization, used to tie
    /// experiment logs to the dataset they were produced from.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        self.write_csv(&mut bytes).expect("vec write cannot fail");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Block-Hankel arrangement of a vector signal: block row i, column j holds
/// sample i + j. A length-N signal of dimension q yields a
/// (window * q) x (N - window + 1) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    matrix: DMatrix<f64>,
    window: usize,
    signal_dim: usize,
}

impl HankelMatrix {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Builds the block-Hankel matrix with `window` block rows.
pub fn build_hankel(signal: &[DVector<f64>], window: usize) -> Result<HankelMatrix, DataError> {
    if window == 0 {
        return Err(DataError::ZeroWindow);
    }
    if signal.is_empty() {
        return Err(DataError::Empty);
    }
    if window > signal.len() {
        return Err(DataError::WindowTooLong {
            window,
            samples: signal.len(),
        });
    }
    let q = signal[0].len();
    for (k, s) in signal.iter().enumerate() {
        if s.len() != q {
            return Err(DataError::RaggedSample { index: k });
        }
    }
    let cols = signal.len() - window + 1;
    let mut matrix = DMatrix::zeros(window * q, cols);
    for i in 0..window {
        for j in 0..cols {
            matrix
                .view_mut((i * q, j), (q, 1))
                .copy_from(&signal[i + j]);
        }
    }
    Ok(HankelMatrix {
        matrix,
        window,
        signal_dim: q,
    })
}

/// Outcome of the persistency-of-excitation rank test at a given order.
#[derive(Debug, Clone)]
pub struct PeReport {
    pub order: usize,
    /// Full row rank the Hankel matrix must reach: signal_dim * order.
    pub required_rank: usize,
    /// Singular values above `rel_tol * sigma_max`.
    pub effective_rank: usize,
    pub columns: usize,
    pub singular_values: Vec<f64>,
    pub rel_tol: f64,
    pub satisfied: bool,
}

impl PeReport {
    /// Ratio between the smallest accepted singular value and the largest
    /// rejected one; large gaps mean the rank decision is well separated.
    pub fn singular_value_gap(&self) -> f64 {
        if !self.satisfied {
            return 0.0;
        }
        let accepted = self.singular_values[self.required_rank - 1];
        match self.singular_values.get(self.required_rank) {
            Some(&next) if next > 0.0 => accepted / next,
            _ => f64::INFINITY,
        }
    }
}

impl fmt::Display for PeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.columns < self.required_rank {
            return write!(
                f,
                "excitation of order {} unattainable: {} columns cannot reach rank {} \
                 (need a longer record)",
                self.order, self.columns, self.required_rank
            );
        }
        write!(
            f,
            "excitation order {}: rank {}/{} ({}satisfied, rel tol {:.1e}",
            self.order,
            self.effective_rank,
            self.required_rank,
            if self.satisfied { "" } else { "not " },
            self.rel_tol,
        )?;
        if self.satisfied {
            write!(f, ", singular-value gap {:.2e}", self.singular_value_gap())?;
        }
        write!(f, ")")
    }
}

/// Rank test for persistency of excitation: the order-`order` Hankel matrix
/// of the signal must have full row rank. Rank is decided by singular
/// values relative to `rel_tol * sigma_max`.
pub fn check_excitation(
    signal: &[DVector<f64>],
    order: usize,
    rel_tol: f64,
) -> Result<PeReport, DataError> {
    if order == 0 {
        return Err(DataError::ZeroWindow);
    }
    if signal.is_empty() {
        return Err(DataError::Empty);
    }
    let q = signal[0].len();
    let required_rank = q * order;
    if order > signal.len() || signal.len() - order + 1 < required_rank {
        // Too few columns: rank is bounded by the column count, no SVD needed.
        let columns = signal.len().saturating_sub(order - 1);
        return Ok(PeReport {
            order,
            required_rank,
            effective_rank: 0,
            columns,
            singular_values: Vec::new(),
            rel_tol,
            satisfied: false,
        });
    }
    let hankel = build_hankel(signal, order)?;
    let columns = hankel.ncols();
    let mut singular_values: Vec<f64> = hankel
        .into_matrix()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let effective_rank = if smax > 0.0 {
        singular_values
            .iter()
            .filter(|&&s| s > rel_tol * smax)
            .count()
    } else {
        0
    };
    Ok(PeReport {
        order,
        required_rank,
        effective_rank,
        columns,
        singular_values,
        rel_tol,
        satisfied: effective_rank >= required_rank,
    })
}

/// Convenience wrapper over [`check_excitation`] with the default threshold.
pub fn is_persistently_exciting(signal: &[DVector<f64>], order: usize) -> Result<bool, DataError> {
    Ok(check_excitation(signal, order, DEFAULT_RANK_TOL)?.satisfied)
}

/// Stacks the input Hankel block over the output block (and, when requested,
/// the stage-cost block) for a given window length. Every column is one
/// recorded length-`window` trajectory slice; column combinations span the
/// plant's trajectory set when the input record is exciting enough.
pub fn stacked_predictor(
    data: &DataTrajectory,
    window: usize,
    include_cost: bool,
) -> Result<DMatrix<f64>, DataError> {
    if window == 0 {
        return Err(DataError::ZeroWindow);
    }
    if data.len() < window {
        return Err(DataError::WindowTooLong {
            window,
            samples: data.len(),
        });
    }
    let m = data.input_dim();
    let p = data.output_dim();
    let cols = data.len() - window + 1;
    let cost_rows = if include_cost { window } else { 0 };
    let mut stacked = DMatrix::zeros(window * (m + p) + cost_rows, cols);
    let hu = build_hankel(data.inputs(), window)?;
    let hy = build_hankel(data.outputs(), window)?;
    stacked
        .view_mut((0, 0), (window * m, cols))
        .copy_from(hu.matrix());
    stacked
        .view_mut((window * m, 0), (window * p, cols))
        .copy_from(hy.matrix());
    if include_cost {
        let cost = data.cost().ok_or(DataError::MissingCost)?;
        let cost_signal: Vec<DVector<f64>> =
            cost.iter().map(|&l| DVector::from_vec(vec![l])).collect();
        let hl = build_hankel(&cost_signal, window)?;
        stacked
            .view_mut((window * (m + p), 0), (window, cols))
            .copy_from(hl.matrix());
    }
    Ok(stacked)
}
