use super::OdeError;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

/// Piecewise cubic Hermite trajectory on a strictly increasing mesh.
///
/// Each interval carries the slopes at both of its ends, so a solution may
/// have a derivative jump at a node (a control breakpoint) while its values
/// stay continuous. Evaluating exactly at a node returns the stored value.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    mesh: Vec<f64>,
    values: Vec<f64>,
    start_slopes: Vec<f64>,
    end_slopes: Vec<f64>,
    tol: f64,
}

impl Trajectory {
    /// `values` holds one row of `dim` entries per node; the slope arrays
    /// one row per interval.
    pub fn new(
        dim: usize,
        mesh: Vec<f64>,
        values: Vec<f64>,
        start_slopes: Vec<f64>,
        end_slopes: Vec<f64>,
        tol: f64,
    ) -> Result<Self, OdeError> {
        let n = mesh.len();
        if n < 2 || mesh.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(OdeError::InvalidInput("mesh must be strictly increasing"));
        }
        if values.len() != n * dim
            || start_slopes.len() != (n - 1) * dim
            || end_slopes.len() != (n - 1) * dim
        {
            return Err(OdeError::InvalidInput("trajectory data has the wrong length"));
        }
        Ok(Self {
            dim,
            mesh,
            values,
            start_slopes,
            end_slopes,
            tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn nodes(&self) -> usize {
        self.mesh.len()
    }

    pub fn intervals(&self) -> usize {
        self.mesh.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.mesh[0]
    }

    pub fn t_end(&self) -> f64 {
        self.mesh[self.mesh.len() - 1]
    }

    /// Local error tolerance the trajectory was computed with.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start_slope(&self, interval: usize) -> &[f64] {
        &self.start_slopes[interval * self.dim..(interval + 1) * self.dim]
    }

    pub fn end_slope(&self, interval: usize) -> &[f64] {
        &self.end_slopes[interval * self.dim..(interval + 1) * self.dim]
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` containing `t`.
    pub fn locate(&self, t: f64) -> Result<usize, OdeError> {
        let (lo, hi) = (self.t_start(), self.t_end());
        let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(OdeError::OutOfDomain { t, lo, hi });
        }
        let i = self.mesh.partition_point(|m| *m <= t);
        Ok(i.saturating_sub(1).min(self.intervals() - 1))
    }

    fn weights(&self, i: usize, t: f64) -> (f64, f64) {
        let h = self.mesh[i + 1] - self.mesh[i];
        (h, ((t - self.mesh[i]) / h).clamp(0.0, 1.0))
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), OdeError> {
        let i = self.locate(t)?;
        self.eval_in(i, t, out);
        Ok(())
    }

    /// Evaluates inside interval `i` (no domain check).
    pub fn eval_in(&self, i: usize, t: f64, out: &mut [f64]) {
        if t == self.mesh[i] {
            out.copy_from_slice(self.node(i));
            return;
        }
        if t == self.mesh[i + 1] {
            out.copy_from_slice(self.node(i + 1));
            return;
        }
        let (h, s) = self.weights(i, t);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (self.node(i), self.node(i + 1));
        let (m0, m1) = (self.start_slope(i), self.end_slope(i));
        for d in 0..self.dim {
            out[d] = h00 * y0[d] + h * (h10 * m0[d] + h11 * m1[d]) + h01 * y1[d];
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Derivative of the interpolant. At an interior node the slope of the
    /// interval to the right is returned.
    pub fn derivative_into(&self, t: f64, out: &mut [f64]) -> Result<(), OdeError> {
        let i = self.locate(t)?;
        self.derivative_in(i, t, out);
        Ok(())
    }

    pub fn derivative_in(&self, i: usize, t: f64, out: &mut [f64]) {
        let (h, s) = self.weights(i, t);
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let (y0, y1) = (self.node(i), self.node(i + 1));
        let (m0, m1) = (self.start_slope(i), self.end_slope(i));
        for d in 0..self.dim {
            out[d] = (d00 * y0[d] + d01 * y1[d]) / h + d10 * m0[d] + d11 * m1[d];
        }
    }

    /// The components `range` as a trajectory of their own.
    pub fn project(&self, range: Range<usize>) -> Trajectory {
        let pick = |data: &[f64], rows: usize| -> Vec<f64> {
            (0..rows)
                .flat_map(|r| data[r * self.dim + range.start..r * self.dim + range.end].iter().copied())
                .collect()
        };
        Trajectory {
            dim: range.len(),
            mesh: self.mesh.clone(),
            values: pick(&self.values, self.nodes()),
            start_slopes: pick(&self.start_slopes, self.intervals()),
            end_slopes: pick(&self.end_slopes, self.intervals()),
            tol: self.tol,
        }
    }

    /// Re-expresses a solution computed in `s = pivot - t` as a function of
    /// `t`.
    pub fn reflect(&self, pivot: f64) -> Trajectory {
        let n = self.nodes();
        let dim = self.dim;
        let mut mesh: Vec<f64> = self.mesh.iter().rev().map(|s| pivot - s).collect();
        // pin the ends so that the reflected mesh covers [pivot - s_end, pivot] exactly
        mesh[n - 1] = pivot - self.mesh[0];
        let mut values = Vec::with_capacity(n * dim);
        for i in (0..n).rev() {
            values.extend_from_slice(self.node(i));
        }
        let mut start = Vec::with_capacity((n - 1) * dim);
        let mut end = Vec::with_capacity((n - 1) * dim);
        for i in (0..n - 1).rev() {
            start.extend(self.end_slope(i).iter().map(|v| -v));
            end.extend(self.start_slope(i).iter().map(|v| -v));
        }
        Trajectory {
            dim,
            mesh,
            values,
            start_slopes: start,
            end_slopes: end,
            tol: self.tol,
        }
    }
}
