//! Sinusoidal random features and their closed-form derivatives.
//!
//! A basis holds frozen frequencies `W_j` and phases `b_j`; the ansatz is
//!
//! ```text
//! u(x) = s * sum_j beta_j sin(W_j . x + b_j),     s = 1/sqrt(N) when normalized
//! ```
//!
//! Every partial derivative of a feature is a monomial in the weights times
//! one of `sin, cos, -sin, -cos` of the same phase:
//!
//! ```text
//! D^a sin(W.x + b) = (prod_k W_k^a_k) * Phi_{|a| mod 4}(W.x + b)
//! ```
//!
//! so any operator matrix is a column-wise rescaling of the cached `sin`
//! and `cos` of the phase matrix. Orders above 4 are accepted, but the
//! monomial prefactor grows like `sigma^|a|` and the resulting matrices
//! become badly conditioned; the biharmonic is the practical ceiling.

use std::path::Path;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matvec;
use crate::rng::{Stream, StreamRng};
use crate::tanh::TanhBasis;

/// Orders of differentiation per coordinate axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::invalid("multi-index needs at least one axis"));
        }
        Ok(Self(orders))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "multi-index needs at least one axis");
        Self(vec![0; dim])
    }

    /// `order`-th partial derivative along `axis`.
    pub fn axis(dim: usize, axis: usize, order: u32) -> Self {
        let mut m = Self::zeros(dim);
        m.0[axis] = order;
        m
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        Self::axis(dim, axis, 1)
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&o| o == 0)
    }

    /// Same multi-index with `by` extra derivatives on `axis`.
    pub fn raised(&self, axis: usize, by: u32) -> Self {
        let mut m = self.clone();
        m.0[axis] += by;
        m
    }

    /// `prod_k w_k^a_k`.
    pub fn monomial(&self, w: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(w)
            .fold(1.0, |acc, (&a, &wk)| acc * wk.powi(a as i32))
    }
}

/// One group of features sharing a bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    /// Row-major `len x dim` frequencies.
    weights: Vec<f64>,
    biases: Vec<f64>,
    bandwidth: f64,
}

impl FeatureBlock {
    pub fn new(weights: Vec<f64>, biases: Vec<f64>, bandwidth: f64, dim: usize) -> Result<Self> {
        if dim == 0 || weights.len() != biases.len() * dim {
            return Err(Error::invalid(format!(
                "block weights have {} entries, expected {} x {dim}",
                weights.len(),
                biases.len()
            )));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::invalid("block contains non-finite weights or biases"));
        }
        Ok(Self {
            weights,
            biases,
            bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Frozen sinusoidal random features, `phi_j(x) = sin(W_j . x + b_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBasis {
    dim: usize,
    blocks: Vec<FeatureBlock>,
    normalized: bool,
    #[serde(default)]
    seed: Option<u64>,
}

/// Coefficients of a feature expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector(pub Vec<f64>);

impl CoefficientVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Phase matrix `Z_ij = W_j . x_i + b_j` with its sine and cosine, shared by
/// every derivative evaluated at the same points.
#[derive(Debug, Clone)]
pub struct PhaseCache {
    pub phases: Mat<f64>,
    pub sin: Mat<f64>,
    pub cos: Mat<f64>,
    /// Filled only by the tanh baseline.
    pub tanh: Option<Mat<f64>>,
}

impl PhaseCache {
    pub fn nrows(&self) -> usize {
        self.phases.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.phases.ncols()
    }
}

/// Anything that can evaluate a feature matrix and its derivatives.
///
/// The solve pipeline, operator assembly and Newton iteration are written
/// against this trait only, so the sinusoidal basis and the tanh baseline
/// share every line of code except derivative evaluation.
pub trait FeatureMap {
    fn dim(&self) -> usize;

    fn num_features(&self) -> usize;

    fn build_cache(&self, points: MatRef<'_, f64>) -> Result<PhaseCache>;

    /// `M x N` matrix of `D^alpha phi_j(x_i)` (normalization included).
    fn derivative(&self, cache: &PhaseCache, alpha: &MultiIndex) -> Result<Mat<f64>>;

    /// `sum_t c_t D^{alpha_t} phi_j(x_i)` for constant coefficients.
    fn combination(&self, cache: &PhaseCache, terms: &[(f64, &MultiIndex)]) -> Result<Mat<f64>> {
        let mut out = Mat::<f64>::zeros(cache.nrows(), cache.ncols());
        for &(c, alpha) in terms {
            let d = self.derivative(cache, alpha)?;
            out += faer::Scale(c) * &d;
        }
        Ok(out)
    }
}

pub(crate) fn check_points(points: MatRef<'_, f64>, dim: usize) -> Result<()> {
    if points.ncols() != dim {
        return Err(Error::invalid(format!(
            "points have {} columns, basis dimension is {dim}",
            points.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: &MultiIndex, dim: usize) -> Result<()> {
    if alpha.dim() != dim {
        return Err(Error::invalid(format!(
            "multi-index has {} axes, basis dimension is {dim}",
            alpha.dim()
        )));
    }
    Ok(())
}

impl FeatureBasis {
    /// Sample frozen weights `W ~ N(0, sigma_b^2 I)` and phases `b ~ U[0, 2pi)`
    /// for each block from the basis stream of `seed`.
    pub fn sample(
        dim: usize,
        features_per_block: &[usize],
        bandwidths: &[f64],
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if features_per_block.is_empty() || features_per_block.len() != bandwidths.len() {
            return Err(Error::invalid(format!(
                "need one bandwidth per block, got {} blocks and {} bandwidths",
                features_per_block.len(),
                bandwidths.len()
            )));
        }
        if let Some(&c) = features_per_block.iter().find(|&&c| c == 0) {
            return Err(Error::invalid(format!("block feature count must be positive, got {c}")));
        }
        let mut rng = StreamRng::new(seed, Stream::Basis);
        let mut blocks = Vec::with_capacity(bandwidths.len());
        for (&count, &sigma) in features_per_block.iter().zip(bandwidths) {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
            }
            let weights = (0..count * dim).map(|_| sigma * rng.normal()).collect();
            let biases = (0..count)
                .map(|_| std::f64::consts::TAU * rng.uniform())
                .collect();
            blocks.push(FeatureBlock::new(weights, biases, sigma, dim)?);
        }
        Ok(Self {
            dim,
            blocks,
            normalized: true,
            seed: Some(seed),
        })
    }

    pub fn from_blocks(dim: usize, blocks: Vec<FeatureBlock>, normalized: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if blocks.is_empty() || blocks.iter().all(|b| b.is_empty()) {
            return Err(Error::invalid("basis needs at least one feature"));
        }
        if blocks.iter().any(|b| b.weights.len() != b.len() * dim) {
            return Err(Error::invalid("all blocks must share the basis dimension"));
        }
        Ok(Self {
            dim,
            blocks,
            normalized,
            seed: None,
        })
    }

    pub fn with_normalization(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    /// Multiply every frequency by `factor` (bandwidths follow), keeping the
    /// phases. Used by the rescale mode of the bandwidth sweep.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid(format!("rescale factor must be positive, got {factor}")));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| FeatureBlock {
                weights: b.weights.iter().map(|w| w * factor).collect(),
                biases: b.biases.clone(),
                bandwidth: b.bandwidth * factor,
            })
            .collect();
        Ok(Self {
            dim: self.dim,
            blocks,
            normalized: self.normalized,
            seed: self.seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(FeatureBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.bandwidth).collect()
    }

    pub fn features_per_block(&self) -> Vec<usize> {
        self.blocks.iter().map(FeatureBlock::len).collect()
    }

    /// Output scale applied to every feature: `1/sqrt(N)` or 1.
    pub fn scale(&self) -> f64 {
        if self.normalized {
            1.0 / (self.len() as f64).sqrt()
        } else {
            1.0
        }
    }

    /// Frequency row of feature `j`.
    pub fn weight(&self, j: usize) -> &[f64] {
        let (b, local) = self.locate(j);
        &self.blocks[b].weights[local * self.dim..(local + 1) * self.dim]
    }

    pub fn bias(&self, j: usize) -> f64 {
        let (b, local) = self.locate(j);
        self.blocks[b].biases[local]
    }

    fn locate(&self, mut j: usize) -> (usize, usize) {
        for (b, block) in self.blocks.iter().enumerate() {
            if j < block.len() {
                return (b, j);
            }
            j -= block.len();
        }
        panic!("feature index out of range");
    }

    /// `N x d` frequency matrix.
    pub fn weight_matrix(&self) -> Mat<f64> {
        let n = self.len();
        let mut w = Mat::<f64>::zeros(n, self.dim);
        let mut j = 0;
        for block in &self.blocks {
            for row in block.weights.chunks_exact(self.dim) {
                for (k, &v) in row.iter().enumerate() {
                    w[(j, k)] = v;
                }
                j += 1;
            }
        }
        w
    }

    pub fn bias_vector(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.biases.iter().copied()).collect()
    }

    /// `Z = X W^T + 1 b^T`.
    pub fn phases(&self, points: MatRef<'_, f64>) -> Result<Mat<f64>> {
        check_points(points, self.dim)?;
        let w = self.weight_matrix();
        let b = self.bias_vector();
        let mut z = Mat::<f64>::zeros(points.nrows(), self.len());
        if points.nrows() > 0 {
            faer::linalg::matmul::matmul(
                z.as_mut(),
                faer::Accum::Replace,
                points,
                w.transpose(),
                1.0,
                faer::Par::Seq,
            );
        }
        for (j, &bj) in b.iter().enumerate() {
            for v in z.col_as_slice_mut(j) {
                *v += bj;
            }
        }
        Ok(z)
    }

    /// Values `u(x_i)` of the expansion with coefficients `beta`.
    pub fn eval_solution(&self, beta: &CoefficientVector, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        eval_solution(self, beta, points)
    }

    /// Empirical kernel `(2/N) sum_j phi_j(x) phi_j(y)`.
    ///
    /// The factor 2 compensates `E_b[sin^2] = 1/2`; with it the estimate
    /// converges to `exp(-sigma^2 |x - y|^2 / 2)` for a single-bandwidth
    /// basis.
    pub fn empirical_kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for j in 0..n {
            let w = self.weight(j);
            let b = self.bias(j);
            let zx: f64 = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
            let zy: f64 = w.iter().zip(y).map(|(a, c)| a * c).sum::<f64>() + b;
            acc += zx.sin() * zy.sin();
        }
        2.0 * acc / n as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let basis: FeatureBasis = serde_json::from_str(s)?;
        let normalized = basis.normalized;
        let seed = basis.seed;
        let mut checked = Self::from_blocks(basis.dim, basis.blocks, normalized)?;
        checked.seed = seed;
        for b in &checked.blocks {
            FeatureBlock::new(b.weights.clone(), b.biases.clone(), b.bandwidth, checked.dim)?;
        }
        Ok(checked)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-column weight monomials `s * prod_k W_jk^a_k`.
pub(crate) fn prefactors(basis: &FeatureBasis, alpha: &MultiIndex) -> Vec<f64> {
    let s = basis.scale();
    (0..basis.len())
        .map(|j| s * alpha.monomial(basis.weight(j)))
        .collect()
}

impl FeatureMap for FeatureBasis {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_features(&self) -> usize {
        self.len()
    }

    fn build_cache(&self, points: MatRef<'_, f64>) -> Result<PhaseCache> {
        let phases = self.phases(points)?;
        let (m, n) = (phases.nrows(), phases.ncols());
        let mut sin = Mat::<f64>::zeros(m, n);
        let mut cos = Mat::<f64>::zeros(m, n);
        for j in 0..n {
            let z = phases.col_as_slice(j);
            let s = sin.col_as_slice_mut(j);
            for (si, &zi) in s.iter_mut().zip(z) {
                *si = zi.sin();
            }
            let c = cos.col_as_slice_mut(j);
            for (ci, &zi) in c.iter_mut().zip(z) {
                *ci = zi.cos();
            }
        }
        Ok(PhaseCache {
            phases,
            sin,
            cos,
            tanh: None,
        })
    }

    fn derivative(&self, cache: &PhaseCache, alpha: &MultiIndex) -> Result<Mat<f64>> {
        check_alpha(alpha, self.dim)?;
        if cache.ncols() != self.len() {
            return Err(Error::invalid("phase cache does not belong to this basis"));
        }
        let pre = prefactors(self, alpha);
        let (src, sign) = match alpha.total_order() % 4 {
            0 => (&cache.sin, 1.0),
            1 => (&cache.cos, 1.0),
            2 => (&cache.sin, -1.0),
            _ => (&cache.cos, -1.0),
        };
        let mut out = Mat::<f64>::zeros(cache.nrows(), cache.ncols());
        for (j, &p) in pre.iter().enumerate() {
            let f = sign * p;
            for (o, &v) in out.col_as_slice_mut(j).iter_mut().zip(src.col_as_slice(j)) {
                *o = f * v;
            }
        }
        Ok(out)
    }

    fn combination(&self, cache: &PhaseCache, terms: &[(f64, &MultiIndex)]) -> Result<Mat<f64>> {
        if cache.ncols() != self.len() {
            return Err(Error::invalid("phase cache does not belong to this basis"));
        }
        // Collapse all terms onto one sine and one cosine prefactor per column.
        let n = self.len();
        let mut ps = vec![0.0; n];
        let mut pc = vec![0.0; n];
        for &(c, alpha) in terms {
            check_alpha(alpha, self.dim)?;
            let pre = prefactors(self, alpha);
            let (target, sign) = match alpha.total_order() % 4 {
                0 => (&mut ps, 1.0),
                1 => (&mut pc, 1.0),
                2 => (&mut ps, -1.0),
                _ => (&mut pc, -1.0),
            };
            for (t, p) in target.iter_mut().zip(&pre) {
                *t += sign * c * p;
            }
        }
        let mut out = Mat::<f64>::zeros(cache.nrows(), n);
        for j in 0..n {
            let (a, b) = (ps[j], pc[j]);
            let s = cache.sin.col_as_slice(j);
            let c = cache.cos.col_as_slice(j);
            let o = out.col_as_slice_mut(j);
            match (a != 0.0, b != 0.0) {
                (true, true) => {
                    for i in 0..o.len() {
                        o[i] = a * s[i] + b * c[i];
                    }
                }
                (true, false) => {
                    for i in 0..o.len() {
                        o[i] = a * s[i];
                    }
                }
                (false, true) => {
                    for i in 0..o.len() {
                        o[i] = b * c[i];
                    }
                }
                (false, false) => {}
            }
        }
        Ok(out)
    }
}

/// `D^alpha` feature matrix at `points`, reusing `cache` when given.
pub fn eval_derivative<B: FeatureMap + ?Sized>(
    basis: &B,
    points: MatRef<'_, f64>,
    alpha: &MultiIndex,
    cache: Option<&PhaseCache>,
) -> Result<Mat<f64>> {
    check_points(points, basis.dim())?;
    check_alpha(alpha, basis.dim())?;
    match cache {
        Some(c) => {
            if c.nrows() != points.nrows() {
                return Err(Error::invalid("phase cache was built for a different point set"));
            }
            basis.derivative(c, alpha)
        }
        None => basis.derivative(&basis.build_cache(points)?, alpha),
    }
}

fn check_beta<B: FeatureMap + ?Sized>(basis: &B, beta: &CoefficientVector) -> Result<()> {
    if beta.len() != basis.num_features() {
        return Err(Error::invalid(format!(
            "coefficient vector has length {}, basis has {} features",
            beta.len(),
            basis.num_features()
        )));
    }
    Ok(())
}

/// `H beta`.
pub fn eval_solution<B: FeatureMap + ?Sized>(
    basis: &B,
    beta: &CoefficientVector,
    points: MatRef<'_, f64>,
) -> Result<Vec<f64>> {
    check_beta(basis, beta)?;
    let h = eval_derivative(basis, points, &MultiIndex::zeros(basis.dim()), None)?;
    Ok(matvec(h.as_ref(), beta.as_slice()))
}

/// `D^alpha u` at `points`.
pub fn eval_solution_derivative<B: FeatureMap + ?Sized>(
    basis: &B,
    beta: &CoefficientVector,
    points: MatRef<'_, f64>,
    alpha: &MultiIndex,
    cache: Option<&PhaseCache>,
) -> Result<Vec<f64>> {
    check_beta(basis, beta)?;
    let d = eval_derivative(basis, points, alpha, cache)?;
    Ok(matvec(d.as_ref(), beta.as_slice()))
}

/// `M x d` gradient of the expansion.
pub fn eval_gradient<B: FeatureMap + ?Sized>(
    basis: &B,
    beta: &CoefficientVector,
    points: MatRef<'_, f64>,
) -> Result<Mat<f64>> {
    check_beta(basis, beta)?;
    check_points(points, basis.dim())?;
    let cache = basis.build_cache(points)?;
    let d = basis.dim();
    let mut g = Mat::<f64>::zeros(points.nrows(), d);
    for k in 0..d {
        let dk = basis.derivative(&cache, &MultiIndex::unit(d, k))?;
        let col = matvec(dk.as_ref(), beta.as_slice());
        for (i, v) in col.into_iter().enumerate() {
            g[(i, k)] = v;
        }
    }
    Ok(g)
}

/// Which activation a basis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Sin,
    Tanh,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisKind::Sin => "sin",
            BasisKind::Tanh => "tanh",
        })
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sin" => Ok(BasisKind::Sin),
            "tanh" => Ok(BasisKind::Tanh),
            other => Err(Error::invalid(format!("unknown basis kind `{other}` (expected sin or tanh)"))),
        }
    }
}

/// Either feature family, dispatching to the right derivative rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Basis {
    Sin(FeatureBasis),
    Tanh(TanhBasis),
}

impl Basis {
    pub fn kind(&self) -> BasisKind {
        match self {
            Basis::Sin(_) => BasisKind::Sin,
            Basis::Tanh(_) => BasisKind::Tanh,
        }
    }

    /// Underlying weights and phases (shared by both activations).
    pub fn features(&self) -> &FeatureBasis {
        match self {
            Basis::Sin(b) => b,
            Basis::Tanh(t) => t.features(),
        }
    }

    pub fn sample(
        kind: BasisKind,
        dim: usize,
        features_per_block: &[usize],
        bandwidths: &[f64],
        seed: u64,
        normalized: bool,
    ) -> Result<Self> {
        let fb = FeatureBasis::sample(dim, features_per_block, bandwidths, seed)?
            .with_normalization(normalized);
        Ok(Self::from_features(kind, fb))
    }

    pub fn from_features(kind: BasisKind, fb: FeatureBasis) -> Self {
        match kind {
            BasisKind::Sin => Basis::Sin(fb),
            BasisKind::Tanh => Basis::Tanh(TanhBasis::new(fb)),
        }
    }
}

impl From<FeatureBasis> for Basis {
    fn from(b: FeatureBasis) -> Self {
        Basis::Sin(b)
    }
}

impl From<TanhBasis> for Basis {
    fn from(b: TanhBasis) -> Self {
        Basis::Tanh(b)
    }
}

impl FeatureMap for Basis {
    fn dim(&self) -> usize {
        self.features().dim()
    }

    fn num_features(&self) -> usize {
        self.features().len()
    }

    fn build_cache(&self, points: MatRef<'_, f64>) -> Result<PhaseCache> {
        match self {
            Basis::Sin(b) => b.build_cache(points),
            Basis::Tanh(b) => b.build_cache(points),
        }
    }

    fn derivative(&self, cache: &PhaseCache, alpha: &MultiIndex) -> Result<Mat<f64>> {
        match self {
            Basis::Sin(b) => b.derivative(cache, alpha),
            Basis::Tanh(b) => b.derivative(cache, alpha),
        }
    }

    fn combination(&self, cache: &PhaseCache, terms: &[(f64, &MultiIndex)]) -> Result<Mat<f64>> {
        match self {
            Basis::Sin(b) => b.combination(cache, terms),
            Basis::Tanh(b) => b.combination(cache, terms),
        }
    }
}

/// A basis with its fitted coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub basis: Basis,
    pub coefficients: CoefficientVector,
}

impl Solution {
    pub fn new(basis: Basis, coefficients: CoefficientVector) -> Result<Self> {
        check_beta(&basis, &coefficients)?;
        Ok(Self { basis, coefficients })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn values(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        eval_solution(&self.basis, &self.coefficients, points)
    }

    pub fn gradient(&self, points: MatRef<'_, f64>) -> Result<Mat<f64>> {
        eval_gradient(&self.basis, &self.coefficients, points)
    }

    pub fn derivative(
        &self,
        points: MatRef<'_, f64>,
        alpha: &MultiIndex,
        cache: Option<&PhaseCache>,
    ) -> Result<Vec<f64>> {
        eval_solution_derivative(&self.basis, &self.coefficients, points, alpha, cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(w: f64, b: f64) -> FeatureBasis {
        let block = FeatureBlock::new(vec![w], vec![b], 1.0, 1).unwrap();
        FeatureBasis::from_blocks(1, vec![block], false).unwrap()
    }

    fn pts(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn protocol_basis_has_1500_features() {
        let b = FeatureBasis::sample(2, &[500, 500, 500], &[3.0, 3.0, 3.0], 0).unwrap();
        assert_eq!(b.len(), 1500);
        assert_eq!(b.blocks().len(), 3);
        assert!(b.is_normalized());
    }

    #[test]
    fn zero_bandwidth_rejected() {
        let err = FeatureBasis::sample(2, &[10], &[0.0], 0).unwrap_err();
        assert_eq!(err.kind(), "invalid-argument");
        assert!(FeatureBasis::sample(0, &[10], &[1.0], 0).is_err());
        assert!(FeatureBasis::sample(2, &[0], &[1.0], 0).is_err());
        assert!(FeatureBasis::sample(2, &[10, 10], &[1.0], 0).is_err());
    }

    #[test]
    fn same_seed_same_bits() {
        let a = FeatureBasis::sample(3, &[40, 7], &[2.0, 5.0], 42).unwrap();
        let b = FeatureBasis::sample(3, &[40, 7], &[2.0, 5.0], 42).unwrap();
        let bits = |x: &FeatureBasis| -> Vec<u64> {
            x.blocks()
                .iter()
                .flat_map(|bl| bl.weights().iter().chain(bl.biases()).map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = FeatureBasis::sample(3, &[40, 7], &[2.0, 5.0], 43).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn biases_in_range() {
        let b = FeatureBasis::sample(2, &[1000], &[1.0], 5).unwrap();
        assert!(b.bias_vector().iter().all(|&v| (0.0..std::f64::consts::TAU).contains(&v)));
    }

    #[test]
    fn zero_phase_cache() {
        let b = one_feature(3.0, 0.0);
        let c = b.build_cache(pts(&[&[0.0]]).as_ref()).unwrap();
        assert_eq!(c.sin[(0, 0)], 0.0);
        assert_eq!(c.cos[(0, 0)], 1.0);
    }

    #[test]
    fn empty_point_set() {
        let b = FeatureBasis::sample(2, &[5], &[1.0], 0).unwrap();
        let c = b.build_cache(Mat::<f64>::zeros(0, 2).as_ref()).unwrap();
        assert_eq!((c.nrows(), c.ncols()), (0, 5));
    }

    #[test]
    fn dimension_mismatch() {
        let b = FeatureBasis::sample(2, &[5], &[1.0], 0).unwrap();
        assert!(b.build_cache(Mat::<f64>::zeros(3, 3).as_ref()).is_err());
        let x = Mat::<f64>::zeros(3, 2);
        assert!(eval_derivative(&b, x.as_ref(), &MultiIndex::zeros(3), None).is_err());
    }

    #[test]
    fn first_derivative_at_zero_phase() {
        let b = one_feature(2.0, 0.0);
        let d = eval_derivative(&b, pts(&[&[0.0]]).as_ref(), &MultiIndex::axis(1, 0, 1), None).unwrap();
        assert_eq!(d[(0, 0)], 2.0);
    }

    #[test]
    fn fourth_derivative_wraps() {
        let b = one_feature(2.0, 0.0);
        let x = pts(&[&[std::f64::consts::FRAC_PI_4]]);
        let d = eval_derivative(&b, x.as_ref(), &MultiIndex::axis(1, 0, 4), None).unwrap();
        assert!((d[(0, 0)] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_cancels() {
        let fb = FeatureBasis::sample(2, &[1], &[2.0], 9).unwrap();
        let beta = CoefficientVector(vec![1.0]); // sqrt(1) = 1
        let x = pts(&[&[0.3, 0.7], &[-1.0, 2.0]]);
        let u = fb.eval_solution(&beta, x.as_ref()).unwrap();
        let w = fb.weight(0);
        for i in 0..2 {
            let z = w[0] * x[(i, 0)] + w[1] * x[(i, 1)] + fb.bias(0);
            assert!((u[i] - z.sin()).abs() < 1e-15);
        }
        let fb4 = FeatureBasis::sample(1, &[4], &[2.0], 9).unwrap();
        let beta = CoefficientVector(vec![2.0, 0.0, 0.0, 0.0]);
        let x = pts(&[&[0.4]]);
        let u = fb4.eval_solution(&beta, x.as_ref()).unwrap();
        assert!((u[0] - (fb4.weight(0)[0] * 0.4 + fb4.bias(0)).sin()).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_zero_field() {
        let fb = FeatureBasis::sample(2, &[20], &[2.0], 1).unwrap();
        let x = pts(&[&[0.1, 0.2], &[0.5, 0.9]]);
        let beta = CoefficientVector::zeros(20);
        assert!(fb.eval_solution(&beta, x.as_ref()).unwrap().iter().all(|&v| v == 0.0));
        let g = eval_gradient(&fb, &beta, x.as_ref()).unwrap();
        assert!((0..2).all(|i| (0..2).all(|k| g[(i, k)] == 0.0)));
        assert!(fb.eval_solution(&CoefficientVector::zeros(3), x.as_ref()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let fb = FeatureBasis::sample(2, &[3, 4], &[1.0, 8.0], 77).unwrap();
        let back = FeatureBasis::from_json(&fb.to_json().unwrap()).unwrap();
        assert_eq!(fb, back);
        assert_eq!(back.seed(), Some(77));
    }

    #[test]
    fn combination_matches_sum_of_derivatives() {
        let fb = FeatureBasis::sample(2, &[30], &[3.0], 2).unwrap();
        let x = Mat::from_fn(15, 2, |i, j| (i as f64 * 0.13 + j as f64 * 0.71).sin());
        let c = fb.build_cache(x.as_ref()).unwrap();
        let a = MultiIndex::new(vec![2, 1]).unwrap();
        let b = MultiIndex::new(vec![0, 1]).unwrap();
        let z = MultiIndex::zeros(2);
        let fast = fb.combination(&c, &[(1.5, &a), (-2.0, &b), (0.25, &z)]).unwrap();
        let da = fb.derivative(&c, &a).unwrap();
        let db = fb.derivative(&c, &b).unwrap();
        let dz = fb.derivative(&c, &z).unwrap();
        for i in 0..15 {
            for j in 0..30 {
                let want = 1.5 * da[(i, j)] - 2.0 * db[(i, j)] + 0.25 * dz[(i, j)];
                assert!((fast[(i, j)] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
