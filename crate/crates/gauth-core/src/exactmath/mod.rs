//! Exact rational linear algebra over the ambient space used by the
//! authentication scheme: inner products, Gram-Schmidt orthogonalization,
//! subspace projection, rank computation, and seeded sampling.
//!
//! Every operation is exact; nothing here rounds. Equality of results is
//! literal equality of canonical forms, which is what makes the protocol's
//! verification equations testable as `==`.

mod scalar;

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

pub use scalar::Scalar;

/// Retry budget for rejection sampling of independent vector sets and
/// non-orthogonal nonces. Dependence of random integer vectors is already
/// negligible; the bound just makes the invariants unconditional.
pub const MAX_SAMPLE_RETRIES: usize = 16;

/// Inclusive magnitude bound for sampled integer components: `[-2^31, 2^31]`.
pub const SAMPLE_RANGE: i64 = 1 << 31;

#[derive(Debug, Error)]
pub enum MathError {
    #[error("denominator must be nonzero")]
    ZeroDenominator,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("basis vectors must be linearly independent")]
    DependentBasis,
    #[error("basis size must satisfy 1 <= n < d (got n={n}, d={d})")]
    BadBasisShape { n: usize, d: usize },
    #[error("cannot parse scalar from {0:?}")]
    ParseScalar(String),
    #[error("malformed canonical encoding: {0}")]
    MalformedEncoding(&'static str),
    #[error("failed to sample an independent set after {0} attempts")]
    SamplingExhausted(usize),
}

/// An element of the ambient space: an ordered list of scalars whose length
/// is the ambient dimension `d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    components: Vec<Scalar>,
}

impl Vector {
    pub fn new(components: Vec<Scalar>) -> Self {
        Vector { components }
    }

    pub fn from_integers(values: &[i64]) -> Self {
        Vector { components: values.iter().map(|&v| Scalar::from_integer(v)).collect() }
    }

    pub fn zero(dim: usize) -> Self {
        Vector { components: vec![Scalar::zero(); dim] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Scalar] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Scalar::is_zero)
    }

    pub fn scale(&self, k: &Scalar) -> Vector {
        Vector { components: self.components.iter().map(|c| c * k).collect() }
    }

    pub fn add(&self, other: &Vector) -> Result<Vector, MathError> {
        check_dims(self, other)?;
        Ok(Vector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector, MathError> {
        check_dims(self, other)?;
        Ok(Vector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Canonical byte encoding: 4-byte big-endian component count followed
    /// by the canonical encodings of each component.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.components.len() as u32).to_be_bytes());
        for c in &self.components {
            out.extend_from_slice(&c.to_canonical_bytes());
        }
        out
    }

    pub fn from_canonical_bytes(buf: &[u8]) -> Result<Self, MathError> {
        if buf.len() < 4 {
            return Err(MathError::MalformedEncoding("truncated component count"));
        }
        let count = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
        let mut at = 4;
        let mut components = Vec::with_capacity(count.min(buf.len()));
        for _ in 0..count {
            let (c, used) = Scalar::decode_prefix(&buf[at..])?;
            components.push(c);
            at += used;
        }
        if at != buf.len() {
            return Err(MathError::MalformedEncoding("trailing bytes"));
        }
        Ok(Vector { components })
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn check_dims(u: &Vector, w: &Vector) -> Result<(), MathError> {
    if u.len() != w.len() {
        return Err(MathError::DimensionMismatch { left: u.len(), right: w.len() });
    }
    Ok(())
}

/// The standard inner product `<u, w> = sum_k u_k * w_k`.
pub fn inner_product(u: &Vector, w: &Vector) -> Result<Scalar, MathError> {
    check_dims(u, w)?;
    let mut acc = Scalar::zero();
    for (a, b) in u.components.iter().zip(&w.components) {
        acc += &(a * b);
    }
    Ok(acc)
}

/// An ordered, linearly independent set of `n` vectors with `1 <= n < d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Basis {
    vectors: Vec<Vector>,
}

impl Basis {
    /// Validates the shape and independence invariants via an exact rank
    /// computation.
    pub fn new(vectors: Vec<Vector>) -> Result<Self, MathError> {
        let n = vectors.len();
        let d = vectors.first().map_or(0, Vector::len);
        if n == 0 || n >= d {
            return Err(MathError::BadBasisShape { n, d });
        }
        if rank(&vectors)? != n {
            return Err(MathError::DependentBasis);
        }
        Ok(Basis { vectors })
    }

    /// Number of vectors (the dimension of the spanned subspace).
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Length of each vector (the dimension of the ambient space).
    pub fn ambient_dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn get(&self, index: usize) -> Option<&Vector> {
        self.vectors.get(index)
    }

    /// Scales every vector by `k`, which preserves both invariants for
    /// nonzero `k`.
    pub fn scale(&self, k: &Scalar) -> Result<Basis, MathError> {
        if k.is_zero() {
            return Err(MathError::DependentBasis);
        }
        Ok(Basis { vectors: self.vectors.iter().map(|v| v.scale(k)).collect() })
    }
}

impl<'de> Deserialize<'de> for Basis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let vectors = Vec::<Vector>::deserialize(deserializer)?;
        Basis::new(vectors).map_err(serde::de::Error::custom)
    }
}

/// Orthogonalizes a basis by the classical projection-subtraction recipe:
/// `v_k = x_k - sum_{i<k} (<x_k, v_i> / <v_i, v_i>) v_i`.
///
/// The output is pairwise orthogonal, spans the same subspace, and has the
/// same size. A zero vector mid-process signals a dependent input.
pub fn gram_schmidt(basis: &Basis) -> Result<Basis, MathError> {
    let mut ortho: Vec<Vector> = Vec::with_capacity(basis.dim());
    let mut norms: Vec<Scalar> = Vec::with_capacity(basis.dim());
    for x in basis.vectors() {
        let mut v = x.clone();
        for (u, norm) in ortho.iter().zip(&norms) {
            let coeff = &inner_product(x, u)? / norm;
            v = v.sub(&u.scale(&coeff))?;
        }
        if v.is_zero() {
            return Err(MathError::DependentBasis);
        }
        norms.push(inner_product(&v, &v)?);
        ortho.push(v);
    }
    Ok(Basis { vectors: ortho })
}

/// Orthogonal projection of `v` onto the subspace spanned by `basis`:
/// orthogonalize, then sum `(<v, b_j> / <b_j, b_j>) b_j`. The result is
/// identical for any two bases spanning the same subspace.
///
/// The orthogonalization runs in a fraction-free integer form (each
/// orthogonal vector rescaled to a primitive integer vector), which spans
/// the same flags as the textbook recurrence but avoids rational blowup;
/// projection coefficients are scale-invariant, so the result is exactly
/// the Gram-Schmidt-then-coefficient-sum projection.
pub fn project(v: &Vector, basis: &Basis) -> Result<Vector, MathError> {
    if v.len() != basis.ambient_dim() {
        return Err(MathError::DimensionMismatch { left: v.len(), right: basis.ambient_dim() });
    }
    let ortho = orthogonalize_primitive(basis.vectors())?;
    let mut acc = Vector::zero(v.len());
    for b in &ortho {
        let coeff = &integer_inner(v, b)? / &int_self_inner(b);
        acc = acc.add(&scale_integer_vector(b, &coeff))?;
    }
    Ok(acc)
}

/// Fraction-free Gram-Schmidt: maintains pairwise-orthogonal *integer*
/// vectors spanning the same nested subspaces as the rational recurrence.
/// Each elimination step uses `v <- <u,u> v - <v,u> u` (integer-only), and
/// every vector is reduced to primitive form to keep entries small.
fn orthogonalize_primitive(vectors: &[Vector]) -> Result<Vec<Vec<BigInt>>, MathError> {
    let mut ortho: Vec<Vec<BigInt>> = Vec::with_capacity(vectors.len());
    for x in vectors {
        let mut v = integer_row(x);
        for u in &ortho {
            let vu = int_inner(&v, u);
            let uu = int_inner(u, u);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi = &*vi * &uu - &vu * ui;
            }
            make_primitive(&mut v);
        }
        if v.iter().all(Zero::is_zero) {
            return Err(MathError::DependentBasis);
        }
        ortho.push(v);
    }
    Ok(ortho)
}

fn int_inner(u: &[BigInt], w: &[BigInt]) -> BigInt {
    u.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn int_self_inner(u: &[BigInt]) -> Scalar {
    Scalar::from_integer(int_inner(u, u))
}

fn integer_inner(v: &Vector, u: &[BigInt]) -> Result<Scalar, MathError> {
    if v.len() != u.len() {
        return Err(MathError::DimensionMismatch { left: v.len(), right: u.len() });
    }
    let mut acc = Scalar::zero();
    for (a, b) in v.components().iter().zip(u) {
        acc += &(a * &Scalar::from_integer(b.clone()));
    }
    Ok(acc)
}

fn scale_integer_vector(u: &[BigInt], k: &Scalar) -> Vector {
    Vector::new(u.iter().map(|c| &Scalar::from_integer(c.clone()) * k).collect())
}

/// Divides out the content (gcd of all entries), keeping the sign of the
/// leading nonzero entry.
fn make_primitive(v: &mut [BigInt]) {
    let mut content = BigInt::zero();
    for c in v.iter() {
        content = content.gcd(c);
        if content.is_one() {
            return;
        }
    }
    if content.is_zero() || content.is_one() {
        return;
    }
    for c in v.iter_mut() {
        *c /= &content;
    }
}

/// The inner product of `Proj_W(v)` with `h` for `W = span(basis)`, without
/// materializing the projection: with `B` the basis matrix, `G = B B^T` its
/// Gram matrix, and `r_v = B v`, `r_h = B h`,
///
/// `<Proj_W(v), h> = r_h^T G^{-1} r_v = -det([[G, r_v], [r_h^T, 0]]) / det(G)`,
///
/// evaluated with two fraction-free Bareiss determinants over cleared
/// integers. Exactly equal to `inner_product(project(v, basis), h)` — the
/// two routes cross-check each other in tests.
pub fn projected_inner_product(
    v: &Vector,
    basis: &Basis,
    h: &Vector,
) -> Result<Scalar, MathError> {
    let d = basis.ambient_dim();
    for w in [v, h] {
        if w.len() != d {
            return Err(MathError::DimensionMismatch { left: w.len(), right: d });
        }
    }
    let n = basis.dim();
    let rows: Vec<Vec<BigInt>> = basis.vectors().iter().map(integer_row).collect();
    let (v_int, v_lcm) = clear_denominators(v);
    let (h_int, h_lcm) = clear_denominators(h);

    let mut gram: Vec<Vec<BigInt>> = vec![vec![BigInt::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = int_inner(&rows[i], &rows[j]);
        }
        gram[i][n] = int_inner(&rows[i], &v_int);
        gram[n][i] = int_inner(&rows[i], &h_int);
    }
    let det_g = bareiss_determinant(
        (0..n).map(|i| gram[i][..n].to_vec()).collect::<Vec<_>>(),
    );
    if det_g.is_zero() {
        return Err(MathError::DependentBasis);
    }
    let det_bordered = bareiss_determinant(gram);
    Scalar::new(-det_bordered, det_g * v_lcm * h_lcm)
}

/// Clears component denominators: returns the integer components over their
/// common (positive) denominator.
fn clear_denominators(v: &Vector) -> (Vec<BigInt>, BigInt) {
    let mut lcm = BigInt::one();
    for c in v.components() {
        lcm = lcm.lcm(c.denom());
    }
    (v.components().iter().map(|c| c.numer() * (&lcm / c.denom())).collect(), lcm)
}

/// Determinant of a square integer matrix by fraction-free single-step
/// Bareiss elimination.
fn bareiss_determinant(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let size = m.len();
    let mut prev = BigInt::one();
    let mut sign = 1i8;
    for k in 0..size {
        if m[k][k].is_zero() {
            let Some(swap) = (k + 1..size).find(|&i| !m[i][k].is_zero()) else {
                return BigInt::zero();
            };
            m.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..size {
            for j in k + 1..size {
                let t = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = t / &prev;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    if sign < 0 {
        -prev
    } else {
        prev
    }
}

/// Exact rank by fraction-free (Bareiss) Gaussian elimination. Rows are
/// first cleared to integers, which preserves rank.
pub fn rank(vectors: &[Vector]) -> Result<usize, MathError> {
    if vectors.is_empty() {
        return Ok(0);
    }
    let cols = vectors[0].len();
    for v in vectors {
        if v.len() != cols {
            return Err(MathError::DimensionMismatch { left: cols, right: v.len() });
        }
    }

    let mut m: Vec<Vec<BigInt>> = vectors.iter().map(integer_row).collect();
    let rows = m.len();
    let mut prev = BigInt::one();
    let mut r = 0usize;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pivot_row) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pivot_row);
        let pivot = m[r][c].clone();
        for i in r + 1..rows {
            for j in c + 1..cols {
                // Bareiss update: exact division by the previous pivot.
                let t = &m[i][j] * &pivot - &m[i][c] * &m[r][j];
                m[i][j] = t / &prev;
            }
            m[i][c] = BigInt::zero();
        }
        prev = pivot;
        r += 1;
    }
    Ok(r)
}

/// Clears denominators in one row: multiply by the lcm of the component
/// denominators. Row scaling does not change rank.
fn integer_row(v: &Vector) -> Vec<BigInt> {
    let mut lcm = BigInt::one();
    for c in v.components() {
        lcm = lcm.lcm(c.denom());
    }
    v.components().iter().map(|c| c.numer() * (&lcm / c.denom())).collect()
}

/// Draws a uniform nonzero integer in `[-2^31, 2^31]`.
pub fn sample_nonzero_integer<R: Rng + ?Sized>(rng: &mut R) -> Scalar {
    loop {
        let x = rng.gen_range(-SAMPLE_RANGE..=SAMPLE_RANGE);
        if x != 0 {
            return Scalar::from_integer(x);
        }
    }
}

/// Samples a vector with uniform nonzero integer components, deterministic
/// under a fixed seed.
pub fn sample_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    Vector { components: (0..dim).map(|_| sample_nonzero_integer(rng)).collect() }
}

/// Samples `n` vectors in dimension `d` and rank-checks them, resampling on
/// dependence up to [`MAX_SAMPLE_RETRIES`] times.
pub fn sample_basis<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Result<Basis, MathError> {
    if n == 0 || n >= d {
        return Err(MathError::BadBasisShape { n, d });
    }
    for _ in 0..MAX_SAMPLE_RETRIES {
        let vectors: Vec<Vector> = (0..n).map(|_| sample_vector(rng, d)).collect();
        if rank(&vectors)? == n {
            return Ok(Basis { vectors });
        }
    }
    Err(MathError::SamplingExhausted(MAX_SAMPLE_RETRIES))
}
