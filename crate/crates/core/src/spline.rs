//! Natural-cubic-spline temporal interpolation expressed as a closed-form
//! weight matrix.
//!
//! For frame times (knots) `x_0 < ... < x_N` and query times `u_1..u_M`, the
//! per-pixel interpolation is linear in the observed frame values: building
//! the 4N x 4N constraint system `A`, the binary selector `T` that places the
//! observed values on the interpolation rows, and the per-query evaluation
//! matrix `R` gives a single `M x (N+1)` weight matrix `W = R A^-1 T` that
//! maps any per-pixel time series directly to its interpolated values. `W`
//! depends only on the times, never on pixel data, so it both resamples clips
//! and seeds the learnable velocity layer.

use crate::error::{Error, Result};
use crate::tensor::{matmul, solve_linear, Matrix, Tensor};

/// Strictly increasing frame times. At least 3 knots (2 segments).
#[derive(Debug, Clone, PartialEq)]
pub struct Knots {
    times: Vec<f64>,
}

impl Knots {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::domain(format!(
                "need at least 3 knots, got {}",
                times.len()
            )));
        }
        for pair in times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::domain(format!(
                    "knots must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("non-finite knot".to_string()));
        }
        Ok(Knots { times })
    }

    /// Integer frame times `0..n_frames-1`.
    pub fn uniform(n_frames: usize) -> Result<Self> {
        Knots::new((0..n_frames).map(|i| i as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of polynomial segments (one fewer than the knot count).
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Segment owning `u`: half-open `[x_k, x_{k+1})`, with the final knot
    /// owned by the last segment.
    pub fn segment_of(&self, u: f64) -> Result<usize> {
        let (lo, hi) = self.span();
        if !(u >= lo && u <= hi) {
            return Err(Error::domain(format!(
                "query {u} outside knot span [{lo}, {hi}]"
            )));
        }
        if u == hi {
            return Ok(self.segments() - 1);
        }
        // partition_point returns the first knot strictly above u.
        let idx = self.times.partition_point(|&x| x <= u);
        Ok(idx - 1)
    }
}

/// Times at which frames are interpolated; must lie inside the knot span of
/// whatever system they are paired with (no extrapolation).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTimes {
    times: Vec<f64>,
}

impl QueryTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("empty query list".to_string()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("non-finite query time".to_string()));
        }
        Ok(QueryTimes { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// The assembled interpolation system for one (knots, queries) pair.
///
/// Coefficient layout: 4 unknowns per segment, ascending power, in the local
/// variable `t = x - x_n` of segment `n`.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    knots: Knots,
    queries: QueryTimes,
    constraints: Matrix,
    selector: Matrix,
    evaluation: Matrix,
    weights: Matrix,
}

impl SplineSystem {
    pub fn build(knots: Knots, queries: QueryTimes) -> Result<Self> {
        let (constraints, selector) = build_constraint_system(&knots)?;
        let evaluation = build_evaluation_matrix(&knots, &queries)?;
        let coeff_map = solve_linear(&constraints, &selector)?;
        let weights = matmul(&evaluation, &coeff_map)?;
        Ok(SplineSystem {
            knots,
            queries,
            constraints,
            selector,
            evaluation,
            weights,
        })
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }

    pub fn queries(&self) -> &QueryTimes {
        &self.queries
    }

    /// The 4N x 4N constraint matrix.
    pub fn constraints(&self) -> &Matrix {
        &self.constraints
    }

    /// The 4N x (N+1) binary selector placing observed values on rows.
    pub fn selector(&self) -> &Matrix {
        &self.selector
    }

    /// The M x 4N per-query evaluation matrix.
    pub fn evaluation(&self) -> &Matrix {
        &self.evaluation
    }

    /// The M x (N+1) resampling weight matrix.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Solve for the per-segment coefficients of the spline through `values`.
    pub fn coefficients_for(&self, values: &[f64]) -> Result<Vec<f64>> {
        let n_points = self.knots.times().len();
        if values.len() != n_points {
            return Err(Error::shape(format!(
                "expected {n_points} values, got {}",
                values.len()
            )));
        }
        let rhs = self.selector.apply(values)?;
        let rhs = Matrix::new(rhs.len(), 1, rhs)?;
        let solved = solve_linear(&self.constraints, &rhs)?;
        Ok(solved.data().to_vec())
    }
}

/// Build the 4N-row constraint system for a natural cubic spline: per-segment
/// endpoint interpolation (2N rows, matched by the selector), first- and
/// second-derivative continuity at interior knots (2N-2 rows), and zero
/// second derivative at both boundaries (2 rows).
pub fn build_constraint_system(knots: &Knots) -> Result<(Matrix, Matrix)> {
    let n = knots.segments();
    let x = knots.times();
    let rows = 4 * n;
    let mut a = Matrix::zeros(rows, rows);
    let mut t = Matrix::zeros(rows, n + 1);

    // Interpolation at both endpoints of every segment, in the segment-local
    // variable so the left endpoint pins the constant coefficient directly.
    for seg in 0..n {
        let h = x[seg + 1] - x[seg];
        let base = 4 * seg;
        a.set(2 * seg, base, 1.0);
        t.set(2 * seg, seg, 1.0);
        let row = 2 * seg + 1;
        a.set(row, base, 1.0);
        a.set(row, base + 1, h);
        a.set(row, base + 2, h * h);
        a.set(row, base + 3, h * h * h);
        t.set(row, seg + 1, 1.0);
    }

    // C1 and C2 continuity at interior knots (zero right-hand side).
    let c1_base = 2 * n;
    let c2_base = 3 * n - 1;
    for seg in 0..n - 1 {
        let h = x[seg + 1] - x[seg];
        let left = 4 * seg;
        let right = 4 * (seg + 1);

        let row = c1_base + seg;
        a.set(row, left + 1, 1.0);
        a.set(row, left + 2, 2.0 * h);
        a.set(row, left + 3, 3.0 * h * h);
        a.set(row, right + 1, -1.0);

        let row = c2_base + seg;
        a.set(row, left + 2, 2.0);
        a.set(row, left + 3, 6.0 * h);
        a.set(row, right + 2, -2.0);
    }

    // Natural boundary: zero second derivative at both ends.
    a.set(rows - 2, 2, 2.0);
    let h_last = x[n] - x[n - 1];
    a.set(rows - 1, 4 * (n - 1) + 2, 2.0);
    a.set(rows - 1, 4 * (n - 1) + 3, 6.0 * h_last);

    Ok((a, t))
}

/// Row `j` holds the powers `(u_j - x_k)^0..3` in the four columns of the
/// segment `k` owning `u_j`; zero elsewhere.
pub fn build_evaluation_matrix(knots: &Knots, queries: &QueryTimes) -> Result<Matrix> {
    let n = knots.segments();
    let x = knots.times();
    let mut r = Matrix::zeros(queries.len(), 4 * n);
    for (j, &u) in queries.times().iter().enumerate() {
        let seg = knots.segment_of(u)?;
        let dt = u - x[seg];
        let base = 4 * seg;
        r.set(j, base, 1.0);
        r.set(j, base + 1, dt);
        r.set(j, base + 2, dt * dt);
        r.set(j, base + 3, dt * dt * dt);
    }
    Ok(r)
}

/// The full closed-form weight matrix: interpolated values are `W * y` for
/// any per-pixel series `y` sampled at the knots.
pub fn spline_weights(knots: &Knots, queries: &QueryTimes) -> Result<Matrix> {
    Ok(SplineSystem::build(knots.clone(), queries.clone())?
        .weights()
        .clone())
}

/// Query times for a velocity resampling layer: `n_frames` outputs at
/// `u_j = j * factor` over integer knots `0..n_frames-1`, i.e. the output
/// plays the first `factor` fraction of the input span at `1/factor`
/// slowdown. Factor 1 is the identity query set.
pub fn velocity_queries(n_frames: usize, factor: f64) -> Result<QueryTimes> {
    if n_frames < 3 {
        return Err(Error::domain(format!(
            "need at least 3 frames, got {n_frames}"
        )));
    }
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::domain(format!("factor {factor} outside (0, 1]")));
    }
    QueryTimes::new((0..n_frames).map(|j| j as f64 * factor).collect())
}

/// Spline weight matrix for a velocity factor over `n_frames` integer knots.
pub fn velocity_weights(n_frames: usize, factor: f64) -> Result<Matrix> {
    let knots = Knots::uniform(n_frames)?;
    let queries = velocity_queries(n_frames, factor)?;
    spline_weights(&knots, &queries)
}

/// Resample the leading (time) axis of a tensor: every remaining-axis slice
/// is an independent time series multiplied by `w`.
pub fn resample_time_axis(frames: &Tensor, w: &Matrix) -> Result<Tensor> {
    if frames.rank() < 1 {
        return Err(Error::shape("rank-0 tensor has no time axis".to_string()));
    }
    let t_in = frames.dims()[0];
    if w.cols() != t_in {
        return Err(Error::shape(format!(
            "weight matrix has {} columns, clip has {t_in} frames",
            w.cols()
        )));
    }
    let frame_len: usize = frames.dims()[1..].iter().product();
    let mut out_dims = frames.dims().to_vec();
    out_dims[0] = w.rows();
    let mut out = Tensor::zeros(&out_dims);
    for j in 0..w.rows() {
        let row = w.row(j);
        let dst = &mut out.data_mut()[j * frame_len..(j + 1) * frame_len];
        for (i, &wj) in row.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let src = &frames.data()[i * frame_len..(i + 1) * frame_len];
            if wj == 1.0 {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            } else {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wj * s;
                }
            }
        }
    }
    Ok(out)
}
