//! Row streams that can be replayed for multi-pass algorithms.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub trait ReplayableRowSource {
    fn dim(&self) -> usize;
    /// Passes started so far.
    fn passes(&self) -> usize;
    /// Visits every row in order; returns the row count.
    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize>;
}

/// In-memory source with a pass counter and optional pass cap.
pub struct MatrixSource<'a> {
    m: &'a DenseMatrix,
    passes: usize,
    cap: Option<usize>,
}

impl<'a> MatrixSource<'a> {
    pub fn new(m: &'a DenseMatrix) -> Self {
        Self { m, passes: 0, cap: None }
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self
    }
}

impl ReplayableRowSource for MatrixSource<'_> {
    fn dim(&self) -> usize {
        self.m.ncols()
    }

    fn passes(&self) -> usize {
        self.passes
    }

    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize> {
        if let Some(cap) = self.cap {
            if self.passes >= cap {
                return Err(Error::PassBudgetExceeded(cap));
            }
        }
        self.passes += 1;
        for (i, r) in self.m.rows().enumerate() {
            f(i, r)?;
        }
        Ok(self.m.nrows())
    }
}
