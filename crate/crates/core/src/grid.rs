//! Uniform grids on the unit interval and unit square, piecewise-linear
//! stiffness and lumped-mass assembly, and the discrete H01 / H^{-1} / L^q
//! norms used throughout.
//!
//! Interior nodes are numbered 0..m with x = (i+1)h in 1d and row-major
//! (x fast, y slow) in 2d; boundary nodes are eliminated (homogeneous
//! Dirichlet data).

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linsolve;
use crate::scalar::Scalar;

/// Uniform tensor grid on (0,1) or (0,1)^2 with n cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if (dim == 1 || dim == 2) && n >= 2 {
            Ok(Self { dim, n })
        } else {
            Err(Error::InvalidGrid { dim, n })
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.n
    }

    /// Mesh spacing h = 1/n.
    pub fn spacing<S: Scalar>(&self) -> S {
        S::one() / S::from_usize(self.n).unwrap()
    }

    /// Number of interior nodes: n-1 in 1d, (n-1)^2 in 2d.
    pub fn interior_count(&self) -> usize {
        let k = self.n - 1;
        if self.dim == 1 {
            k
        } else {
            k * k
        }
    }

    /// Coordinates of interior node `idx`; the second component is `None` in 1d.
    pub fn coords<S: Scalar>(&self, idx: usize) -> (S, Option<S>) {
        debug_assert!(idx < self.interior_count());
        let h = self.spacing::<S>();
        if self.dim == 1 {
            (S::from_usize(idx + 1).unwrap() * h, None)
        } else {
            let k = self.n - 1;
            let i = idx % k;
            let j = idx / k;
            (
                S::from_usize(i + 1).unwrap() * h,
                Some(S::from_usize(j + 1).unwrap() * h),
            )
        }
    }

    /// Exact extreme eigenvalues of the stiffness operator on this grid,
    /// from the closed-form tensor-product spectrum.
    pub(crate) fn stiffness_extreme_eigs<S: Scalar>(&self) -> (S, S) {
        let n = S::from_usize(self.n).unwrap();
        let two = S::lit(2.0);
        let mode = |k: S| two - two * (S::PI() * k / n).cos();
        let k_lo = S::one();
        let k_hi = S::from_usize(self.n - 1).unwrap();
        if self.dim == 1 {
            // entries scale with 1/h
            (mode(k_lo) * n, mode(k_hi) * n)
        } else {
            (two * mode(k_lo), two * mode(k_hi))
        }
    }
}

/// Nodal values on the interior nodes of a grid; the common carrier for
/// states, controls, adjoints, and directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<S: Scalar> {
    grid: Grid,
    values: Vec<S>,
}

impl<S: Scalar> Field<S> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![S::zero(); grid.interior_count()],
        }
    }

    pub fn constant(grid: Grid, c: S) -> Self {
        Self {
            grid,
            values: vec![c; grid.interior_count()],
        }
    }

    /// Build from node coordinates; `f` receives (x, Some(y)) in 2d.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(S, Option<S>) -> S) -> Self {
        let values = (0..grid.interior_count())
            .map(|i| {
                let (x, y) = grid.coords(i);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.interior_count() {
            return Err(Error::InvalidArgument(format!(
                "field needs {} values, got {}",
                grid.interior_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn linf_norm(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, mut f: impl FnMut(S) -> S) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(S, S) -> S) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, c: S) -> Self {
        self.map(|v| c * v)
    }

    /// Dump as delimited text: header `index,x[,y],value`, one row per
    /// interior node in index order.
    pub fn write_delimited<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.grid.dim() == 1 {
            writeln!(w, "index,x,value")?;
        } else {
            writeln!(w, "index,x,y,value")?;
        }
        for (i, v) in self.values.iter().enumerate() {
            let (x, y) = self.grid.coords::<S>(i);
            match y {
                None => writeln!(w, "{},{},{}", i, x, v)?,
                Some(y) => writeln!(w, "{},{},{},{}", i, x, y, v)?,
            }
        }
        Ok(())
    }

    /// Read a field dump written by [`Field::write_delimited`] back onto `grid`.
    pub fn read_delimited<R: BufRead>(grid: Grid, reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field dump".into()))??;
        let expected = if grid.dim() == 1 {
            "index,x,value"
        } else {
            "index,x,y,value"
        };
        if header.trim() != expected {
            return Err(Error::Parse(format!(
                "bad field header `{header}`, expected `{expected}`"
            )));
        }
        let value_col = if grid.dim() == 1 { 2 } else { 3 };
        let mut values = Vec::with_capacity(grid.interior_count());
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != value_col + 1 {
                return Err(Error::Parse(format!("bad field row `{line}`")));
            }
            let idx: usize = cols[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad index in `{line}`")))?;
            if idx != row {
                return Err(Error::Parse(format!(
                    "row {row} carries index {idx}; rows must follow node order"
                )));
            }
            let v: f64 = cols[value_col]
                .parse()
                .map_err(|_| Error::Parse(format!("bad value in `{line}`")))?;
            values.push(S::lit(v));
        }
        Self::from_values(grid, values)
    }
}

/// Sparse symmetric operator over interior nodes in compressed-row layout.
#[derive(Debug, Clone)]
pub struct Operator<S: Scalar> {
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
    symmetric: bool,
    positive_definite: bool,
}

impl<S: Scalar> Operator<S> {
    /// Assemble from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        triplets: impl IntoIterator<Item = (usize, usize, S)>,
        symmetric: bool,
        positive_definite: bool,
    ) -> Self {
        let mut entries: Vec<(usize, usize, S)> = triplets.into_iter().collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, S)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            debug_assert!(r < nrows && c < nrows);
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 = last.2 + v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_offsets = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_offsets[r + 1] += 1;
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            row_offsets,
            cols: merged.iter().map(|e| e.1).collect(),
            vals: merged.iter().map(|e| e.2).collect(),
            symmetric,
            positive_definite,
        }
    }

    /// Stiffness operator of the H01 inner product for piecewise-linear
    /// elements: tridiag(-1, 2, -1)/h in 1d, the unscaled 5-point stencil
    /// (4 center, -1 neighbors) in 2d.
    pub fn stiffness(grid: Grid) -> Self {
        let m = grid.interior_count();
        let mut triplets = Vec::with_capacity(5 * m);
        if grid.dim() == 1 {
            let inv_h = S::from_usize(grid.cells()).unwrap();
            let two = S::lit(2.0);
            for i in 0..m {
                triplets.push((i, i, two * inv_h));
                if i + 1 < m {
                    triplets.push((i, i + 1, -inv_h));
                    triplets.push((i + 1, i, -inv_h));
                }
            }
        } else {
            let k = grid.cells() - 1;
            let four = S::lit(4.0);
            let neg_one = -S::one();
            for j in 0..k {
                for i in 0..k {
                    let idx = j * k + i;
                    triplets.push((idx, idx, four));
                    if i + 1 < k {
                        triplets.push((idx, idx + 1, neg_one));
                        triplets.push((idx + 1, idx, neg_one));
                    }
                    if j + 1 < k {
                        triplets.push((idx, idx + k, neg_one));
                        triplets.push((idx + k, idx, neg_one));
                    }
                }
            }
        }
        Self::from_triplets(m, triplets, true, true)
    }

    /// Diagonal lumped mass operator: entries h in 1d, h^2 in 2d.
    pub fn lumped_mass(grid: Grid) -> Self {
        let m = grid.interior_count();
        let h = grid.spacing::<S>();
        let w = if grid.dim() == 1 { h } else { h * h };
        Self::from_triplets(m, (0..m).map(|i| (i, i, w)), true, true)
    }

    pub fn nrows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    pub fn apply_slice(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.nrows());
        debug_assert_eq!(out.len(), self.nrows());
        for (r, out_r) in out.iter_mut().enumerate() {
            let mut acc = S::zero();
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc = acc + self.vals[k] * x[self.cols[k]];
            }
            *out_r = acc;
        }
    }

    pub fn apply_vec(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.nrows()];
        self.apply_slice(x, &mut out);
        out
    }

    pub fn apply(&self, f: &Field<S>) -> Result<Field<S>> {
        if f.len() != self.nrows() {
            return Err(Error::GridMismatch);
        }
        Field::from_values(f.grid(), self.apply_vec(f.values()))
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.nrows())
            .map(|r| self.entry(r, r))
            .collect()
    }

    /// x^T A y.
    pub fn quadratic_form(&self, x: &[S], y: &[S]) -> S {
        let ay = self.apply_vec(y);
        x.iter().zip(&ay).map(|(&a, &b)| a * b).sum()
    }

    /// Entry (r, c), zero if not stored.
    pub fn entry(&self, r: usize, c: usize) -> S {
        for k in self.row_offsets[r]..self.row_offsets[r + 1] {
            if self.cols[k] == c {
                return self.vals[k];
            }
        }
        S::zero()
    }

    /// Structured entries of row r as (col, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        (self.row_offsets[r]..self.row_offsets[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }
}

/// Discrete H01 inner product v^T A w.
pub fn h01_inner<S: Scalar>(v: &Field<S>, w: &Field<S>) -> Result<S> {
    if v.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let a = Operator::stiffness(v.grid());
    Ok(a.quadratic_form(v.values(), w.values()))
}

/// Discrete H01 norm sqrt(v^T A v).
pub fn h01_norm<S: Scalar>(v: &Field<S>) -> S {
    let a = Operator::stiffness(v.grid());
    a.quadratic_form(v.values(), v.values()).max(S::zero()).sqrt()
}

/// Discrete L2 pairing v^T M w with the lumped mass.
pub fn l2_inner<S: Scalar>(v: &Field<S>, w: &Field<S>) -> Result<S> {
    if v.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let m = Operator::lumped_mass(v.grid());
    Ok(m.quadratic_form(v.values(), w.values()))
}

/// Discrete L2 norm sqrt(v^T M v).
pub fn l2_norm<S: Scalar>(v: &Field<S>) -> S {
    let m = Operator::lumped_mass(v.grid());
    m.quadratic_form(v.values(), v.values()).max(S::zero()).sqrt()
}

/// Discrete dual (H^{-1}) norm sqrt((Mu)^T A^{-1} (Mu)), with the inverse
/// applied by conjugate gradients at tolerance 1e-12.
pub fn hminus1_norm<S: Scalar>(u: &Field<S>) -> Result<S> {
    let a = Operator::stiffness(u.grid());
    let m = Operator::lumped_mass(u.grid());
    let rhs = m.apply_vec(u.values());
    let tol = S::lit(1e-12).max(S::lit(32.0) * S::epsilon());
    let x = linsolve::cg_solve(&a, &rhs, tol)?;
    let sq: S = x.iter().zip(&rhs).map(|(&a, &b)| a * b).sum();
    Ok(sq.max(S::zero()).sqrt())
}

/// Discrete L^q norm (sum M_ii |v_i|^q)^{1/q}; `q` may be infinity, giving
/// the max norm.
pub fn lq_norm<S: Scalar>(v: &Field<S>, q: S) -> Result<S> {
    if q < S::one() || q.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "L^q norm requires q in [1, inf], got {q}"
        )));
    }
    if q == S::infinity() {
        return Ok(v.linf_norm());
    }
    let m = Operator::<S>::lumped_mass(v.grid());
    let d = m.diagonal();
    let sum: S = v
        .values()
        .iter()
        .zip(&d)
        .map(|(&vi, &mi)| mi * crate::kernel::abs_pow(vi, q))
        .sum();
    Ok(crate::kernel::abs_pow(sum.max(S::zero()), S::one() / q))
}

/// Closed interval endpoint description for exponent ranges; `hi` may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl ExponentInterval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn closed_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: true,
            hi_closed: false,
        }
    }

    pub fn open_closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: false,
            hi_closed: true,
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        let above = if self.lo_closed { q >= self.lo } else { q > self.lo };
        let below = if self.hi_closed { q <= self.hi } else { q < self.hi };
        above && below
    }
}

impl fmt::Display for ExponentInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        let hi = if self.hi.is_infinite() {
            "inf".to_string()
        } else {
            format!("{}", self.hi)
        };
        write!(f, "{}{}, {}{}", open, self.lo, hi, close)
    }
}

/// Exponent ranges (Q_d, Q_d*) of the Sobolev embeddings
/// H01 -> L^q and L^q -> H^{-1} in dimension d.
pub fn embedding_exponents(d: usize) -> Result<(ExponentInterval, ExponentInterval)> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let df = d as f64;
    let primal = match d {
        1 => ExponentInterval::closed(1.0, f64::INFINITY),
        2 => ExponentInterval::closed_open(1.0, f64::INFINITY),
        _ => ExponentInterval::closed(1.0, 2.0 * df / (df - 2.0)),
    };
    let dual = match d {
        1 => ExponentInterval::closed(1.0, f64::INFINITY),
        2 => ExponentInterval::open_closed(1.0, f64::INFINITY),
        _ => ExponentInterval::closed(2.0 * df / (df + 2.0), f64::INFINITY),
    };
    Ok((primal, dual))
}
