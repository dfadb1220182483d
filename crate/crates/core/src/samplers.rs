//! Seedable random streams and the distribution samplers used by the
//! simulation and posterior code.
//!
//! Every sampler takes an explicit [`RngState`]. A state is identified by a
//! `(seed, stream)` pair on top of ChaCha20, so Monte Carlo trial `i` can be
//! driven by `(master_seed, i)` without any coordination between workers.
//!
//! Parameterizations:
//!
//! ```text
//! IG(shape a, scale b):   p(x)  ∝ x^{-a-1} exp(-b/x),                 E[x] = b/(a-1)
//! IW(df ν, scale Ψ):      p(S)  ∝ |S|^{-(ν+p+1)/2} exp(-tr(Ψ S⁻¹)/2), E[S] = Ψ/(ν-p-1)
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, Open01, StandardNormal};

use crate::error::{Error, Result};

/// Smallest admissible squared Cholesky pivot, relative to `max(1, max|diag|)`.
/// Matrices below it are rejected instead of regularized.
pub const SPD_PIVOT_FLOOR: f64 = 1e-14;

/// A reproducible random stream.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Symmetric positive definite matrix together with its lower Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Symmetrizes `(A + Aᵀ)/2` and factorizes. Fails if the factorization
    /// breaks down or a pivot falls under [`SPD_PIVOT_FLOOR`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "SpdMatrix (square, non-empty)",
                expected: n.max(1),
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::not_spd("non-finite entry"));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let scale = sym.diagonal().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_spd("cholesky factorization failed"))?
            .l();
        for (i, d) in chol.diagonal().iter().enumerate() {
            if d * d <= SPD_PIVOT_FLOOR * scale {
                return Err(Error::not_spd(format!(
                    "pivot {i} squared = {:e} is below the floor",
                    d * d
                )));
            }
        }
        Ok(Self { matrix: sym, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Lower-triangular `L` with `L Lᵀ = self`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let linv = self
            .chol
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("cholesky factor has a positive diagonal");
        linv.transpose() * linv
    }

    /// Solves `L z = b` against the Cholesky factor.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Lower triangle in row-major order: (0,0), (1,0), (1,1), (2,0), ...
    pub fn lower_triangle(&self) -> Vec<f64> {
        lower_triangle(&self.matrix)
    }
}

pub fn lower_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn sample_std_normal(n: usize, rng: &mut RngState) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// A `rows × cols` matrix of iid standard normals, filled column by column.
pub fn sample_std_normal_matrix(rows: usize, cols: usize, rng: &mut RngState) -> DMatrix<f64> {
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

/// Uniform draw on the open interval (0, 1).
pub fn sample_uniform(rng: &mut RngState) -> f64 {
    rng.sample(Open01)
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut RngState) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            context: "sample_mvn mean",
            expected: cov.dim(),
            actual: mean.len(),
        });
    }
    let z = sample_std_normal(mean.len(), rng);
    Ok(mean + cov.cholesky_factor() * z)
}

pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngState) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma needs shape > 0 and scale > 0, got shape={shape}, scale={scale}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma({shape}, 1): {e}")))?;
    loop {
        let g: f64 = gamma.sample(rng);
        // Gamma can underflow to exactly zero for tiny shapes.
        if g > 0.0 {
            return Ok(scale / g);
        }
    }
}

/// Inverse Wishart draw. A Bartlett factor `A` of `W(df, I)` is mapped through
/// the Cholesky factor `C` of `scale`, giving `S = (C A⁻ᵀ)(C A⁻ᵀ)ᵀ`, which is
/// the inverse of a `W(df, scale⁻¹)` draw.
pub fn sample_inverse_wishart(df: f64, scale: &SpdMatrix, rng: &mut RngState) -> Result<SpdMatrix> {
    let p = scale.dim();
    if !df.is_finite() || df <= p as f64 - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse Wishart needs df > dim - 1 = {}, got {df}",
            p as f64 - 1.0
        )));
    }
    let mut bartlett = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-squared({}): {e}", df - i as f64)))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let a_inv = bartlett
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::not_spd("singular Bartlett factor"))?;
    let f = scale.cholesky_factor() * a_inv.transpose();
    SpdMatrix::new(&f * f.transpose())
}
