//! Proximity operators of the three terms of the separation problem.
//!
//! * [`prox_weighted_l1_analysis`]: `prox_{gamma ||. Psi||_{W,1}}`, exact
//!   for a tight frame `Psi Psi^* = nu Id`.
//! * [`project_l2_ball`]: projection onto `{y : ||y - x|| <= eps}`.
//! * [`project_rank_constraint_set`]: per-source projection of the STFT
//!   magnitude onto matrices of rank at most `r`, keeping the phase.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{config_err, shape_err};
use crate::frame::{magnitude, StftConfig, TfTensor};
use crate::signal::MultichannelSignal;
use crate::{Error, Result};

/// Maximum relative tightness residual accepted by the frame-based proxes.
pub const TIGHT_TOLERANCE: f64 = 1e-8;

/// Below this modulus a coefficient has no defined phase and is treated as
/// a non-negative real.
pub const PHASE_FLOOR: f64 = 1e-300;

/// Non-negative `N x B` weights of the weighted ℓ1 norm, laid out like
/// [`TfTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    num_sources: usize,
    coeffs_per_source: usize,
    weights: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(num_sources: usize, coeffs_per_source: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != num_sources * coeffs_per_source {
            return Err(shape_err!(
                "weight matrix {num_sources} x {coeffs_per_source} needs {} entries, got {}",
                num_sources * coeffs_per_source,
                weights.len()
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(config_err!("weights must be finite and non-negative"));
        }
        Ok(Self {
            num_sources,
            coeffs_per_source,
            weights,
        })
    }

    pub fn uniform(num_sources: usize, coeffs_per_source: usize, value: f64) -> Result<Self> {
        Self::new(
            num_sources,
            coeffs_per_source,
            alloc::vec![value; num_sources * coeffs_per_source],
        )
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn coeffs_per_source(&self) -> usize {
        self.coeffs_per_source
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn source(&self, n: usize) -> &[f64] {
        let b = self.coeffs_per_source;
        &self.weights[n * b..(n + 1) * b]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_sources,
            self.coeffs_per_source,
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }

    fn check(&self, num_sources: usize, cfg: &StftConfig) -> Result<()> {
        if self.num_sources != num_sources || self.coeffs_per_source != cfg.num_coeffs() {
            return Err(shape_err!(
                "weights are {} x {}, coefficients are {} x {}",
                self.num_sources,
                self.coeffs_per_source,
                num_sources,
                cfg.num_coeffs()
            ));
        }
        Ok(())
    }
}

/// `||c||_{W,1} = sum_ij w_ij |c_ij|`.
pub fn weighted_l1_norm(coeffs: &TfTensor, w: &WeightMatrix) -> f64 {
    coeffs
        .as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(c, w)| w * magnitude(*c))
        .sum()
}

/// Upper bound on the rank of every source spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RankBudget(usize);

impl RankBudget {
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(config_err!("rank budget must be at least 1"));
        }
        Ok(Self(r))
    }

    /// Checks `r <= min(Q, F)` for the given frame.
    pub fn for_frame(r: usize, cfg: &StftConfig) -> Result<Self> {
        let budget = Self::new(r)?;
        budget.check_frame(cfg)?;
        Ok(budget)
    }

    pub fn check_frame(&self, cfg: &StftConfig) -> Result<()> {
        let max = cfg.num_frames().min(cfg.num_bins());
        if self.0 > max {
            return Err(config_err!(
                "rank {} exceeds min(Q, F) = {max} for this frame",
                self.0
            ));
        }
        Ok(())
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// `prox_{lambda |.|}(z) = z / |z| * max(|z| - lambda, 0)`.
#[inline]
pub fn soft_threshold(z: Complex64, lambda: f64) -> Complex64 {
    let mag = magnitude(z);
    if mag <= lambda {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((mag - lambda) / mag)
    }
}

/// `prox_{gamma ||. Psi||_{W,1}}(s) = s + nu^-1 (soft_{nu gamma W} - Id)(s Psi) Psi^*`.
pub fn prox_weighted_l1_analysis(
    s: &MultichannelSignal,
    w: &WeightMatrix,
    gamma: f64,
    cfg: &StftConfig,
) -> Result<MultichannelSignal> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(config_err!("gamma must be positive, got {gamma}"));
    }
    cfg.check_tight(TIGHT_TOLERANCE)?;
    w.check(s.num_channels(), cfg)?;
    if s.num_samples() != cfg.signal_len() {
        return Err(shape_err!(
            "signal has {} samples, frame expects {}",
            s.num_samples(),
            cfg.signal_len()
        ));
    }
    let nu = cfg.frame_constant();
    let mut coeffs = alloc::vec![Complex64::new(0.0, 0.0); cfg.num_coeffs()];
    let mut buf = cfg.scratch();
    let mut correction = alloc::vec![0.0; s.num_samples()];
    let mut out = s.clone();
    for n in 0..s.num_channels() {
        cfg.analyze_channel(s.channel(n), &mut coeffs, &mut buf);
        for (c, wij) in coeffs.iter_mut().zip(w.source(n)) {
            *c = soft_threshold(*c, nu * gamma * wij) - *c;
        }
        correction.fill(0.0);
        cfg.synthesize_channel(&coeffs, &mut correction, None, &mut buf);
        for (o, d) in out.channel_mut(n).iter_mut().zip(&correction) {
            *o += d / nu;
        }
    }
    Ok(out)
}

/// `x + min(1, eps / ||z - x||) (z - x)`.
pub fn project_l2_ball(
    z: &MultichannelSignal,
    center: &MultichannelSignal,
    eps: f64,
) -> Result<MultichannelSignal> {
    z.check_same_shape(center, "project_l2_ball")?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(config_err!("ball radius must be positive, got {eps}"));
    }
    let dist = z.distance(center);
    if dist <= eps {
        return Ok(z.clone());
    }
    let ratio = eps / dist;
    let samples = z
        .as_slice()
        .iter()
        .zip(center.as_slice())
        .map(|(zi, xi)| xi + ratio * (zi - xi))
        .collect();
    Ok(z.with_samples(samples))
}

/// Frobenius-nearest matrix of rank at most `r` (Eckart-Young): the SVD with
/// all singular values past the `r` largest set to zero.
pub fn truncated_svd(m: &DMatrix<f64>, r: RankBudget) -> DMatrix<f64> {
    truncate(m, r.get()).0
}

/// Thin SVD `m = U diag(sigma) V^T` by one-sided Jacobi rotations, with
/// singular values in descending order. Accurate on rank-deficient inputs,
/// where nalgebra's bidiagonal SVD can return inconsistent factors.
struct ThinSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

fn jacobi_svd(m: &DMatrix<f64>) -> ThinSvd {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose());
        return ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (a.column(p), a.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..mat.nrows() {
                        let (x, y) = (mat[(k, p)], mat[(k, q)]);
                        mat[(k, p)] = c * x - s * y;
                        mat[(k, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let u = DMatrix::from_fn(a.nrows(), n, |i, k| {
        let col = order[k];
        if norms[col] > 0.0 {
            a[(i, col)] / norms[col]
        } else {
            0.0
        }
    });
    let v = DMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    ThinSvd { u, sigma, v }
}

/// Truncated reconstruction plus the kept singular values (descending).
fn truncate(m: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    if r >= rows.min(cols) {
        return (m.clone(), singular_values(m));
    }
    if is_elongated(rows, cols) {
        return truncate_via_gram(m, r);
    }
    let svd = jacobi_svd(m);
    let kept: Vec<f64> = svd.sigma[..r].to_vec();
    let u_r = svd.u.columns(0, r);
    let scaled = DMatrix::from_fn(r, cols, |k, c| kept[k] * svd.v[(c, k)]);
    (u_r * scaled, kept)
}

/// Spectrograms are far wider than tall; for those the left singular
/// vectors come from the small Gram matrix.
fn is_elongated(rows: usize, cols: usize) -> bool {
    4 * rows.min(cols) <= rows.max(cols)
}

/// Eigen-decomposition of `M M^T` for wide `M`: squared singular values in
/// descending order with matching left singular vectors as columns.
fn gram_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let rows = m.nrows();
    let mut gram = DMatrix::<f64>::zeros(rows, rows);
    for col in m.column_iter() {
        let col = col.as_slice();
        for j in 0..rows {
            let cj = col[j];
            if cj == 0.0 {
                continue;
            }
            let g = &mut gram.as_mut_slice()[j * rows..j * rows + j + 1];
            for (gi, ci) in g.iter_mut().zip(col) {
                *gi += ci * cj;
            }
        }
    }
    gram.fill_lower_triangle_with_upper_triangle();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, k| eig.eigenvectors[(i, order[k])]);
    (values, vectors)
}

/// Singular values of an elongated matrix from its Gram matrix. Absolute
/// accuracy is about `sqrt(f64::EPSILON) * sigma_max`, enough for rank
/// diagnostics.
pub(crate) fn singular_values_gram(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    if !is_elongated(rows, cols) {
        return singular_values(m);
    }
    let values = if rows <= cols {
        gram_eigen(m).0
    } else {
        gram_eigen(&m.transpose()).0
    };
    values.into_iter().map(libm::sqrt).collect()
}

/// For wide `M` with left singular vectors `U`, the rank-`r` truncation is
/// `U_r U_r^T M`. Tall matrices are handled by transposition.
fn truncate_via_gram(m: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    if rows > cols {
        let (t, kept) = truncate_via_gram(&m.transpose(), r);
        return (t.transpose(), kept);
    }
    let (values, vectors) = gram_eigen(m);
    let kept: Vec<f64> = values.iter().take(r).map(|v| libm::sqrt(*v)).collect();
    // column by column: out_c = U_r (U_r^T m_c)
    let u_r = vectors.columns(0, r).into_owned();
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    let mut coords = alloc::vec![0.0; r];
    for (src, mut dst) in m.column_iter().zip(out.column_iter_mut()) {
        let src = src.as_slice();
        for (k, u) in u_r.column_iter().enumerate() {
            coords[k] = u.as_slice().iter().zip(src).map(|(a, b)| a * b).sum();
        }
        let dst = dst.as_mut_slice();
        for (u, &c) in u_r.column_iter().zip(&coords) {
            for (d, a) in dst.iter_mut().zip(u.as_slice()) {
                *d += c * a;
            }
        }
    }
    (out, kept)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    if is_elongated(rows, cols) {
        // the triangular factor keeps the singular values of the long side
        let small = if rows < cols {
            nalgebra::QR::new(m.transpose()).r()
        } else {
            nalgebra::QR::new(m.clone()).r()
        };
        jacobi_svd(&small).sigma
    } else {
        jacobi_svd(m).sigma
    }
}

/// Outcome of a low-rank magnitude projection on one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeProjection {
    /// Singular values of the truncated magnitude matrix before clipping;
    /// entries past the budget are zero by construction.
    pub singular_values: Vec<f64>,
    /// Entries of the truncated magnitude that were negative and clipped to 0.
    pub clipped: usize,
}

/// Magnitudes of a block whose columns are the bins of a real signal's
/// spectrum, restricted to bins `0..=cols/2`. Bins that stand for a
/// mirrored pair are weighted by `sqrt 2`, so Gram matrices, singular values
/// and rank-`r` truncations equal those of the full magnitude matrix.
fn folded_magnitudes(block: &[Complex64], rows: usize, cols: usize) -> (DMatrix<f64>, Vec<f64>) {
    let half = cols / 2 + 1;
    let weights: Vec<f64> = (0..half)
        .map(|f| if f == 0 || 2 * f == cols { 1.0 } else { core::f64::consts::SQRT_2 })
        .collect();
    let folded = DMatrix::from_fn(rows, half, |q, f| weights[f] * magnitude(block[f * rows + q]));
    (folded, weights)
}

pub(crate) fn folded_singular_values(block: &[Complex64], rows: usize, cols: usize) -> Vec<f64> {
    singular_values_gram(&folded_magnitudes(block, rows, cols).0)
}

/// Projection of a block holding the STFT of a real signal (`rows` frames,
/// `cols` bins, column-major).
fn project_lowrank_real_block(
    block: &mut [Complex64],
    rows: usize,
    cols: usize,
    r: RankBudget,
) -> MagnitudeProjection {
    let (folded, weights) = folded_magnitudes(block, rows, cols);
    let (low, kept) = truncate(&folded, r.get());
    let mut clipped = 0;
    for f in 0..cols {
        let src = f.min(cols - f);
        let col = &mut block[f * rows..(f + 1) * rows];
        for (q, c) in col.iter_mut().enumerate() {
            let mut m = low[(q, src)] / weights[src];
            if m < 0.0 {
                clipped += 1;
                m = 0.0;
            }
            let mag = magnitude(*c);
            *c = if mag <= PHASE_FLOOR {
                Complex64::new(m, 0.0)
            } else {
                *c * (m / mag)
            };
        }
    }
    let mut singular_values = kept;
    singular_values.resize(rows.min(cols), 0.0);
    MagnitudeProjection {
        singular_values,
        clipped,
    }
}

/// In-place projection of a column-major `rows x cols` block.
pub(crate) fn project_lowrank_block(
    block: &mut [Complex64],
    rows: usize,
    cols: usize,
    r: RankBudget,
) -> MagnitudeProjection {
    let mags = DMatrix::from_iterator(rows, cols, block.iter().map(|c| magnitude(*c)));
    let (low, kept) = truncate(&mags, r.get());
    let mut clipped = 0;
    for ((c, &m), &mag) in block.iter_mut().zip(low.as_slice()).zip(mags.as_slice()) {
        let m = if m < 0.0 {
            clipped += 1;
            0.0
        } else {
            m
        };
        *c = if mag <= PHASE_FLOOR {
            Complex64::new(m, 0.0)
        } else {
            *c * (m / mag)
        };
    }
    let mut singular_values = kept;
    singular_values.resize(rows.min(cols), 0.0);
    MagnitudeProjection {
        singular_values,
        clipped,
    }
}

/// `P_r(|z|) o exp(i angle z)` with negative entries of `P_r(|z|)` clipped
/// to zero.
pub fn project_lowrank_magnitude(z: &DMatrix<Complex64>, r: RankBudget) -> DMatrix<Complex64> {
    project_lowrank_magnitude_with_info(z, r).0
}

pub fn project_lowrank_magnitude_with_info(
    z: &DMatrix<Complex64>,
    r: RankBudget,
) -> (DMatrix<Complex64>, MagnitudeProjection) {
    let (rows, cols) = z.shape();
    let mut out = z.clone();
    let info = project_lowrank_block(out.as_mut_slice(), rows, cols, r);
    (out, info)
}

/// Per-source magnitude projection in the TF domain followed by synthesis
/// scaled by `1 / nu`.
pub fn project_rank_constraint_set(
    s: &MultichannelSignal,
    r: RankBudget,
    cfg: &StftConfig,
) -> Result<MultichannelSignal> {
    Ok(project_rank_constraint_set_with_info(s, r, cfg)?.0)
}

pub fn project_rank_constraint_set_with_info(
    s: &MultichannelSignal,
    r: RankBudget,
    cfg: &StftConfig,
) -> Result<(MultichannelSignal, Vec<MagnitudeProjection>)> {
    if s.num_samples() != cfg.signal_len() {
        return Err(shape_err!(
            "signal has {} samples, frame expects {}",
            s.num_samples(),
            cfg.signal_len()
        ));
    }
    let nu = cfg.frame_constant();
    let (rows, cols) = (cfg.num_frames(), cfg.num_bins());
    let mut coeffs = alloc::vec![Complex64::new(0.0, 0.0); cfg.num_coeffs()];
    let mut buf = cfg.scratch();
    let mut out = MultichannelSignal::zeros(s.num_channels(), s.num_samples(), s.sample_rate());
    let mut infos = Vec::with_capacity(s.num_channels());
    for n in 0..s.num_channels() {
        cfg.analyze_channel(s.channel(n), &mut coeffs, &mut buf);
        infos.push(project_lowrank_real_block(&mut coeffs, rows, cols, r));
        let dst = out.channel_mut(n);
        cfg.synthesize_channel(&coeffs, dst, None, &mut buf);
        dst.iter_mut().for_each(|v| *v /= nu);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("rank projection".into()));
    }
    Ok((out, infos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{stft, WindowKind};
    use core::f64::consts::PI;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(c(3.0, 0.0), 1.0), c(2.0, 0.0));
        assert_eq!(soft_threshold(c(0.5, 0.0), 1.0), c(0.0, 0.0));
        assert_eq!(soft_threshold(c(0.0, 0.0), 0.0), c(0.0, 0.0));
        let theta = 2.1;
        let z = Complex64::from_polar(4.0, theta);
        let p = soft_threshold(z, 1.0);
        assert!((p - Complex64::from_polar(3.0, theta)).norm() < 1e-14);
    }

    #[test]
    fn soft_threshold_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let b = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let lambda = rng.random_range(0.0..2.0);
            let lhs = (soft_threshold(a, lambda) - soft_threshold(b, lambda)).norm();
            assert!(lhs <= (a - b).norm() + 1e-14);
        }
    }

    #[test]
    fn l2_ball_examples() {
        let x = MultichannelSignal::zeros(1, 2, 1.0);
        let z = MultichannelSignal::new(1, 2, 1.0, alloc::vec![3.0, 4.0]).unwrap();
        let p = project_l2_ball(&z, &x, 1.0).unwrap();
        assert!((p.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((p.as_slice()[1] - 0.8).abs() < 1e-15);
        // inside: fixed point
        let p = project_l2_ball(&z, &x, 10.0).unwrap();
        assert_eq!(p, z);
        let wrong = MultichannelSignal::zeros(2, 2, 1.0);
        assert!(matches!(project_l2_ball(&z, &wrong, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn l2_ball_half_radius_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = MultichannelSignal::new(2, 5, 1.0, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut z = x.clone();
        let dir: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dir = MultichannelSignal::new(2, 5, 1.0, dir).unwrap();
        let eps = 0.7;
        z.axpy(0.5 * eps / dir.norm(), &dir);
        assert_eq!(project_l2_ball(&z, &x, eps).unwrap(), z);
    }

    #[test]
    fn truncated_svd_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![3.0, 2.0, 1.0]));
        let p = truncated_svd(&m, RankBudget::new(2).unwrap());
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![3.0, 2.0, 0.0]));
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn truncated_svd_keeps_low_rank_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * &b;
        let p = truncated_svd(&m, RankBudget::new(2).unwrap());
        assert!((&p - &m).norm() < 1e-10 * m.norm());
        let p = truncated_svd(&m, RankBudget::new(5).unwrap());
        assert!((&p - &m).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn magnitude_projection_on_diagonal() {
        let theta = [[0.3, -1.2], [2.0, 0.9]];
        let mags = [[3.0, 0.0], [0.0, 1.0]];
        let z = DMatrix::from_fn(2, 2, |i, j| Complex64::from_polar(mags[i][j], theta[i][j]));
        let p = project_lowrank_magnitude(&z, RankBudget::new(1).unwrap());
        assert!((p[(0, 0)] - Complex64::from_polar(3.0, 0.3)).norm() < 1e-12);
        assert!(p[(0, 1)].norm() < 1e-12);
        assert!(p[(1, 0)].norm() < 1e-12);
        assert!(p[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn magnitude_projection_keeps_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = DMatrix::from_fn(5, 1, |_, _| rng.random_range(0.1..1.0));
        let v = DMatrix::from_fn(1, 4, |_, _| rng.random_range(0.1..1.0));
        let z = (&u * &v).map(|m| Complex64::new(m, 0.0));
        let p = project_lowrank_magnitude(&z, RankBudget::new(1).unwrap());
        assert!((&p - &z).norm() < 1e-12);
    }

    #[test]
    fn zero_magnitude_gets_unit_phase() {
        // magnitudes [[0, 1], [1, 1]] (column-major) have rank 2, so the
        // rank-1 projection puts positive mass on the zero entry
        let mut block = alloc::vec![c(0.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.6, 0.8)];
        project_lowrank_block(&mut block, 2, 2, RankBudget::new(1).unwrap());
        assert!(block[0].re > 0.1);
        assert_eq!(block[0].im, 0.0);
        // other entries keep their phase
        assert!(block[1].re.abs() < 1e-15 && block[1].im > 0.0);
        assert!(block[2].re < 0.0 && block[2].im.abs() < 1e-15);
        assert!((block[3].im / block[3].re - 0.8 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn clipping_never_increases_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut saw_clip = false;
        for _ in 0..200 {
            let z = DMatrix::from_fn(6, 6, |_, _| {
                Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(-PI..PI))
            });
            let r = RankBudget::new(2).unwrap();
            let (p, info) = project_lowrank_magnitude_with_info(&z, r);
            saw_clip |= info.clipped > 0;
            // unclipped variant for comparison
            let low = truncated_svd(&z.map(|v| v.norm()), r);
            let unclipped = DMatrix::from_fn(6, 6, |i, j| {
                let v = z[(i, j)];
                v * (low[(i, j)] / v.norm())
            });
            assert!((&p - &z).norm() <= (&unclipped - &z).norm() + 1e-12);
            assert!(info.singular_values[2..].iter().all(|s| *s == 0.0));
        }
        assert!(saw_clip, "no instance exercised the clipping branch");
    }

    #[test]
    fn weighted_prox_with_zero_weights_is_identity() {
        let cfg = StftConfig::new(40, 8, 2, WindowKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = MultichannelSignal::new(2, 40, 1.0, (0..80).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let w = WeightMatrix::uniform(2, cfg.num_coeffs(), 0.0).unwrap();
        let p = prox_weighted_l1_analysis(&s, &w, 1.0, &cfg).unwrap();
        assert!(p.distance(&s) < 1e-12);
    }

    #[test]
    fn weighted_prox_with_identity_frame_is_soft_threshold() {
        // L = 1, R = 1, rectangular: Psi = Id and nu = 1
        let cfg = StftConfig::new(30, 1, 1, WindowKind::Rectangular).unwrap();
        assert!((cfg.frame_constant() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = MultichannelSignal::new(1, 30, 1.0, (0..30).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let w = WeightMatrix::new(1, 30, (0..30).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let gamma = 0.8;
        let p = prox_weighted_l1_analysis(&s, &w, gamma, &cfg).unwrap();
        for i in 0..30 {
            let expected = soft_threshold(c(s.as_slice()[i], 0.0), gamma * w.as_slice()[i]).re;
            assert!((p.as_slice()[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_prox_rejects_loose_frames_and_bad_shapes() {
        let mut w = WindowKind::Cosine.samples(8).unwrap();
        w[2] = 0.1;
        let loose = StftConfig::new(40, 8, 2, WindowKind::Custom(w)).unwrap();
        let s = MultichannelSignal::zeros(1, 40, 1.0);
        let weights = WeightMatrix::uniform(1, loose.num_coeffs(), 1.0).unwrap();
        assert!(matches!(
            prox_weighted_l1_analysis(&s, &weights, 1.0, &loose),
            Err(Error::NotTight { .. })
        ));
        let cfg = StftConfig::new(40, 8, 2, WindowKind::Cosine).unwrap();
        let weights = WeightMatrix::uniform(2, cfg.num_coeffs(), 1.0).unwrap();
        assert!(matches!(
            prox_weighted_l1_analysis(&s, &weights, 1.0, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rank_projection_of_silence_is_silence() {
        let cfg = StftConfig::new(64, 16, 2, WindowKind::Cosine).unwrap();
        let s = MultichannelSignal::zeros(2, 64, 1.0);
        let p = project_rank_constraint_set(&s, RankBudget::new(1).unwrap(), &cfg).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn rank_projection_zeroes_tail_singular_values_before_synthesis() {
        let cfg = StftConfig::new(256, 16, 2, WindowKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = MultichannelSignal::new(2, 256, 1.0, (0..512).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let r = RankBudget::for_frame(3, &cfg).unwrap();
        let (_, infos) = project_rank_constraint_set_with_info(&s, r, &cfg).unwrap();
        for info in infos {
            assert!(info.singular_values[3..].iter().all(|v| *v == 0.0));
            assert!(info.singular_values[..3].iter().all(|v| *v > 0.0));
        }
        // the frame-domain input had full rank
        let tf = stft(&s, &cfg).unwrap();
        let sv = crate::frame::spectrogram(&tf, 0).unwrap().to_matrix().singular_values();
        assert!(sv[3] > 1e-3 * sv[0]);
    }

    #[test]
    fn folded_projection_matches_the_full_one_for_real_signals() {
        for (t, l, red) in [(256, 16, 2), (300, 15, 3)] {
            let cfg = StftConfig::new(t, l, red, WindowKind::Cosine).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
            let s = MultichannelSignal::new(1, t, 1.0, (0..t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let tf = stft(&s, &cfg).unwrap();
            let (rows, cols) = (cfg.num_frames(), cfg.num_bins());
            let mut full = tf.source(0).to_vec();
            let mut folded = full.clone();
            let r = RankBudget::for_frame(3, &cfg).unwrap();
            let a = project_lowrank_block(&mut full, rows, cols, r);
            let b = project_lowrank_real_block(&mut folded, rows, cols, r);
            for (x, y) in full.iter().zip(&folded) {
                assert!((x - y).norm() < 1e-10, "T = {t}");
            }
            for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
                assert!((x - y).abs() < 1e-10 * a.singular_values[0]);
            }
            let sv = folded_singular_values(tf.source(0), rows, cols);
            let expected = crate::frame::spectrogram(&tf, 0).unwrap().to_matrix().singular_values();
            let mut expected: Vec<f64> = expected.iter().copied().collect();
            expected.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in sv.iter().zip(&expected) {
                assert!((x - y).abs() < 1e-6 * expected[0]);
            }
        }
    }

    #[test]
    fn rank_budget_bounds() {
        let cfg = StftConfig::new(64, 16, 2, WindowKind::Cosine).unwrap();
        assert!(RankBudget::new(0).is_err());
        assert!(RankBudget::for_frame(cfg.num_frames(), &cfg).is_ok());
        assert!(RankBudget::for_frame(cfg.num_frames() + 1, &cfg).is_err());
    }
}
