//! Dense complex matrices: Hermitian eigensystems with clustered spectra,
//! spectral functions, norms, tensor products and partial traces.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues of a state at or below this are treated as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-12;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn require_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// (m + m†)/2
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn ket(d: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[i] = c(1.0, 0.0);
    v
}

/// |v⟩⟨v|
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Re tr(a b), without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a * b - b * a))
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.nrows() == u.ncols() && max_abs(&(u.adjoint() * u - identity(u.nrows()))) <= tol
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    let mut m = CMatrix::zeros(d, d);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = c(v, 0.0);
    }
    m
}

/// Spectral data of a Hermitian matrix. Eigenvalues ascend; eigenvectors are
/// the matching columns, each with its first non-negligible component real
/// and positive.
#[derive(Clone, Debug)]
pub struct HermitianEigensystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    /// Index groups of numerically equal eigenvalues, in ascending order.
    pub clusters: Vec<Vec<usize>>,
}

impl HermitianEigensystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of distinct eigenvalues.
    pub fn nu(&self) -> usize {
        self.clusters.len()
    }

    /// Representative (mean) eigenvalue of a cluster.
    pub fn cluster_value(&self, k: usize) -> f64 {
        let idx = &self.clusters[k];
        idx.iter().map(|&i| self.eigenvalues[i]).sum::<f64>() / idx.len() as f64
    }

    /// Index of the cluster containing eigenvalue `i`.
    pub fn cluster_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (k, idx) in self.clusters.iter().enumerate() {
            for &i in idx {
                out[i] = k;
            }
        }
        out
    }

    pub fn eigenvector(&self, i: usize) -> CVector {
        self.eigenvectors.column(i).into_owned()
    }

    pub fn projector(&self, k: usize) -> CMatrix {
        let d = self.dim();
        let mut p = CMatrix::zeros(d, d);
        for &i in &self.clusters[k] {
            let v = self.eigenvectors.column(i);
            p += &v * v.adjoint();
        }
        p
    }

    pub fn projectors(&self) -> Vec<CMatrix> {
        (0..self.nu()).map(|k| self.projector(k)).collect()
    }

    /// Σ_i f(λ_i) |v_i⟩⟨v_i|
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> CMatrix {
        let d = self.dim();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for j in 0..d {
            let w = f(self.eigenvalues[j]);
            scaled.column_mut(j).scale_mut(w);
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|x| x)
    }

    /// Projector onto the span of eigenvectors with eigenvalue above `thresh`.
    pub fn support_projector(&self, thresh: f64) -> CMatrix {
        self.map(|x| if x > thresh { 1.0 } else { 0.0 })
    }

    /// Columns spanning the eigenspace with eigenvalues at or below `thresh`.
    pub fn kernel_vectors(&self, thresh: f64) -> CMatrix {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&i| self.eigenvalues[i] <= thresh)
            .collect();
        self.eigenvectors.select_columns(&idx)
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalue clustering.
///
/// Eigenvalues whose gap is at most `cluster_tol * max(1, max|λ|)` are merged
/// into one cluster (chained through consecutive gaps).
pub fn eig_hermitian(m: &CMatrix, cluster_tol: f64) -> Result<HermitianEigensystem> {
    require_square(m, "eig_hermitian")?;
    if !is_finite(m) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if !(cluster_tol > 0.0) {
        return Err(Error::InvalidInput("cluster_tol must be positive".into()));
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    Ok(eig_unchecked(m, cluster_tol))
}

pub(crate) fn eig_unchecked(m: &CMatrix, cluster_tol: f64) -> HermitianEigensystem {
    let d = m.nrows();
    if d == 0 {
        return HermitianEigensystem {
            eigenvalues: vec![],
            eigenvectors: CMatrix::zeros(0, 0),
            clusters: vec![],
        };
    }
    let real = m.iter().all(|z| z.im == 0.0);
    let (values, vectors): (Vec<f64>, CMatrix) = if real {
        let mr = DMatrix::<f64>::from_fn(d, d, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let e = mr.symmetric_eigen();
        (
            e.eigenvalues.iter().copied().collect(),
            e.eigenvectors.map(|x| c(x, 0.0)),
        )
    } else {
        let e = symmetrize(m).symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = vectors.select_columns(&order);
    for j in 0..d {
        fix_phase(eigenvectors.column_mut(j));
    }
    let clusters = cluster_indices(&eigenvalues, cluster_tol);
    HermitianEigensystem {
        eigenvalues,
        eigenvectors,
        clusters,
    }
}

pub(crate) fn fix_phase<S>(mut col: nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>)
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    let scale = col.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if scale == 0.0 {
        return;
    }
    if let Some(z) = col.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let phase = z.conj() / z.norm();
        for x in col.iter_mut() {
            *x *= phase;
        }
    }
}

pub(crate) fn cluster_indices(ascending: &[f64], cluster_tol: f64) -> Vec<Vec<usize>> {
    let scale = ascending.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &x) in ascending.iter().enumerate() {
        match clusters.last_mut() {
            Some(last) if x - ascending[*last.last().unwrap()] <= cluster_tol * scale => last.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

/// A validated density operator. The eigensystem is computed once and cached.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    matrix: CMatrix,
    eig: OnceLock<HermitianEigensystem>,
}

impl PartialEq for DensityOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl DensityOperator {
    /// Validate and wrap a matrix: Hermitian within 1e-10, trace within 1e-10
    /// of one, eigenvalues in [-1e-10, 0) clamped to zero.
    pub fn new(m: CMatrix) -> Result<Self> {
        require_square(&m, "density operator")?;
        if m.nrows() == 0 {
            return Err(Error::NotDensity("empty matrix".into()));
        }
        if !is_finite(&m) {
            return Err(Error::NotDensity("non-finite entries".into()));
        }
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::NonHermitian(defect));
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotDensity(format!("trace {tr} differs from 1")));
        }
        let m = symmetrize(&m);
        let mut eig = eig_unchecked(&m, DEFAULT_CLUSTER_TOL);
        let lmin = eig.eigenvalues[0];
        if lmin < -PSD_TOL {
            return Err(Error::NotDensity(format!("negative eigenvalue {lmin:.3e}")));
        }
        let matrix = if lmin < 0.0 {
            for x in eig.eigenvalues.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            eig.clusters = cluster_indices(&eig.eigenvalues, DEFAULT_CLUSTER_TOL);
            symmetrize(&eig.reconstruct())
        } else {
            m
        };
        let cell = OnceLock::new();
        let _ = cell.set(eig);
        Ok(Self { matrix, eig: cell })
    }

    /// Wrap a matrix known to be a state (built from states by convex
    /// combination, tensor product or a channel). Only symmetrised.
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        Self {
            matrix: symmetrize(&m),
            eig: OnceLock::new(),
        }
    }

    pub fn from_pure(v: &CVector) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotDensity("zero or non-finite ket".into()));
        }
        let u = v.unscale(norm);
        Ok(Self::new_unchecked(outer(&u)))
    }

    pub fn from_diagonal(p: &[f64]) -> Result<Self> {
        Self::new(diag(p))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        Self::new_unchecked(outer(&ket(d, i)))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::new_unchecked(identity(d).unscale(d as f64))
    }

    /// Convex combination Σ w_k ρ_k.
    pub fn mixture(weights: &[f64], states: &[&DensityOperator]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::DimensionMismatch(
                "mixture needs one weight per state".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("mixture weights must form a PMF".into()));
        }
        let d = states[0].dim();
        let mut m = CMatrix::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return Err(Error::DimensionMismatch("mixture of unequal dimensions".into()));
            }
            if *w != 0.0 {
                m += s.matrix().scale(*w);
            }
        }
        Ok(Self::new_unchecked(m))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn eigensystem(&self) -> &HermitianEigensystem {
        self.eig.get_or_init(|| {
            let mut e = eig_unchecked(&self.matrix, DEFAULT_CLUSTER_TOL);
            if e.eigenvalues.iter().any(|&x| x < 0.0) {
                for x in e.eigenvalues.iter_mut() {
                    *x = x.max(0.0);
                }
                e.clusters = cluster_indices(&e.eigenvalues, DEFAULT_CLUSTER_TOL);
            }
            e
        })
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.eigensystem().eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.spectrum()[0]
    }

    /// Number of distinct eigenvalues.
    pub fn nu(&self) -> usize {
        self.eigensystem().nu()
    }

    pub fn is_full_rank(&self) -> bool {
        self.lambda_min() > ZERO_EIGENVALUE
    }

    pub fn support_projector(&self) -> CMatrix {
        self.eigensystem().support_projector(ZERO_EIGENVALUE)
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        Self::new_unchecked(self.matrix.kronecker(&other.matrix))
    }

    /// Von Neumann entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.spectrum()
            .iter()
            .filter(|&&x| x > ZERO_EIGENVALUE)
            .map(|&x| -x * x.ln())
            .sum()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.matrix[(i, j)].norm() <= tol))
    }
}

/// ρ^s with 0^s = 0 for s > 0 and ρ^0 the support projector.
pub fn mat_power(rho: &DensityOperator, s: f64) -> CMatrix {
    if s == 1.0 {
        return rho.matrix().clone();
    }
    rho.eigensystem().map(|x| {
        if x <= ZERO_EIGENVALUE {
            0.0
        } else if s == 0.0 {
            1.0
        } else {
            x.powf(s)
        }
    })
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    require_square(m, "trace_norm")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    if hermitian_defect(m) <= 1e-12 * scale {
        Ok(eig_unchecked(m, DEFAULT_CLUSTER_TOL)
            .eigenvalues
            .iter()
            .map(|x| x.abs())
            .sum())
    } else {
        Ok(m.clone().singular_values().iter().sum())
    }
}

pub fn trace_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("trace distance of unequal dimensions".into()));
    }
    Ok(trace_norm(&(a.matrix() - b.matrix()))? / 2.0)
}

pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn tensor_all<'a, I: IntoIterator<Item = &'a CMatrix>>(factors: I) -> CMatrix {
    let mut it = factors.into_iter();
    let first = match it.next() {
        Some(f) => f.clone(),
        None => return CMatrix::identity(1, 1),
    };
    it.fold(first, |acc, f| acc.kronecker(f))
}

pub fn tensor_vectors<'a, I: IntoIterator<Item = &'a CVector>>(factors: I) -> CVector {
    let mut out = CVector::from_element(1, c(1.0, 0.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Trace out every subsystem not listed in `keep`. Subsystems are ordered as
/// in `dims`; the result keeps the listed ones in their original order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    require_square(m, "partial_trace")?;
    let total: usize = dims.iter().product();
    if total != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dimensions multiply to {total}, matrix is {}",
            m.nrows()
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch("kept subsystem index out of range".into()));
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        kept[k] = true;
    }
    let dk: usize = dims.iter().zip(&kept).filter(|(_, &k)| k).map(|(d, _)| d).product();
    let dt = total / dk;
    // full index for (kept index, traced index)
    let mut full = vec![0usize; total];
    let mut digits = vec![0usize; dims.len()];
    for flat in 0..total {
        let mut r = flat;
        for s in (0..dims.len()).rev() {
            digits[s] = r % dims[s];
            r /= dims[s];
        }
        let (mut a, mut t) = (0usize, 0usize);
        for s in 0..dims.len() {
            if kept[s] {
                a = a * dims[s] + digits[s];
            } else {
                t = t * dims[s] + digits[s];
            }
        }
        full[t * dk + a] = flat;
    }
    let mut out = CMatrix::zeros(dk, dk);
    for t in 0..dt {
        let idx = &full[t * dk..(t + 1) * dk];
        for a in 0..dk {
            for b in 0..dk {
                out[(a, b)] += m[(idx[a], idx[b])];
            }
        }
    }
    Ok(out)
}

/// Random states and unitaries for tests, probes and benchmarks.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    }

    pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
    }

    /// Haar-random unit vector.
    pub fn ket<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
        let v = CVector::from_fn(d, |_, _| gaussian(rng));
        let n = v.norm();
        v.unscale(n)
    }

    pub fn pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityOperator {
        DensityOperator::new_unchecked(outer(&ket(d, rng)))
    }

    /// Induced-measure state G G† / tr(G G†) with G of size d × rank.
    /// `rank == d` gives the Hilbert–Schmidt ensemble (full rank almost surely).
    pub fn density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityOperator {
        let g = ginibre(d, rank, rng);
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        DensityOperator::new_unchecked(m.unscale(tr))
    }

    /// Diagonal state with a uniformly random spectrum.
    pub fn diagonal_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityOperator {
        let w: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = w.iter().sum();
        DensityOperator::new_unchecked(diag(&w.iter().map(|x| x / s).collect::<Vec<_>>()))
    }

    pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
        symmetrize(&ginibre(d, d, rng))
    }

    /// Haar-random unitary via QR with the phase correction on R's diagonal.
    pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
        let qr = ginibre(d, d, rng).qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            let z = r[(j, j)];
            let ph = if z.norm() > 0.0 { z / z.norm() } else { c(1.0, 0.0) };
            for i in 0..d {
                q[(i, j)] *= ph;
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    #[test]
    fn identity_has_one_cluster() {
        let e = eig_hermitian(&identity(2), DEFAULT_CLUSTER_TOL).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        assert_eq!(e.nu(), 1);
    }

    #[test]
    fn diagonal_spectrum() {
        let e = eig_hermitian(&diag(&[0.75, 0.25]), DEFAULT_CLUSTER_TOL).unwrap();
        assert!((e.eigenvalues[0] - 0.25).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 0.75).abs() < 1e-15);
        assert_eq!(e.nu(), 2);
    }

    #[test]
    fn pauli_x_spectrum_and_phase_convention() {
        let x = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = eig_hermitian(&x, DEFAULT_CLUSTER_TOL).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        let minus = e.eigenvector(0);
        let plus = e.eigenvector(1);
        assert!((minus[0] - c(s, 0.0)).norm() < 1e-12 && (minus[1] - c(-s, 0.0)).norm() < 1e-12);
        assert!((plus[0] - c(s, 0.0)).norm() < 1e-12 && (plus[1] - c(s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn complex_eigenvector_phase_is_real_positive() {
        let y = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let e = eig_hermitian(&y, DEFAULT_CLUSTER_TOL).unwrap();
        for j in 0..2 {
            let v = e.eigenvector(j);
            assert!(v[0].im.abs() < 1e-15 && v[0].re > 0.0);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(eig_hermitian(&m, 1e-8), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn power_examples() {
        let half = DensityOperator::maximally_mixed(2);
        let r = mat_power(&half, 0.5);
        assert!(close(&r, &identity(2).scale(1.0 / 2f64.sqrt()), 1e-14));
        let p0 = DensityOperator::basis(2, 0);
        assert!(close(&mat_power(&p0, 0.5), p0.matrix(), 1e-14));
        let d = DensityOperator::from_diagonal(&[0.9, 0.1]).unwrap();
        assert!(close(&mat_power(&d, 0.0), &identity(2), 1e-14));
        assert_eq!(&mat_power(&d, 1.0), d.matrix());
    }

    #[test]
    fn norm_tensor_partial_trace_examples() {
        assert!((trace_norm(&diag(&[0.5, -0.5])).unwrap() - 1.0).abs() < 1e-15);
        let p0 = DensityOperator::basis(2, 0);
        let p1 = DensityOperator::basis(2, 1);
        let t = tensor(p0.matrix(), p1.matrix());
        assert!(close(&t, DensityOperator::basis(4, 1).matrix(), 0.0));
        let back = partial_trace(&t, &[2, 2], &[0]).unwrap();
        assert!(close(&back, p0.matrix(), 0.0));
        assert!(matches!(
            partial_trace(&t, &[2, 3], &[0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            trace_norm(&CMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn partial_trace_keeps_order() {
        let mut rng = task_rng(1, 0);
        let a = random::density(2, 2, &mut rng);
        let b = random::density(3, 3, &mut rng);
        let g = random::density(2, 2, &mut rng);
        let abc = tensor_all([a.matrix(), b.matrix(), g.matrix()]);
        let ac = partial_trace(&abc, &[2, 3, 2], &[0, 2]).unwrap();
        assert!(close(&ac, &tensor(a.matrix(), g.matrix()), 1e-13));
        let bb = partial_trace(&abc, &[2, 3, 2], &[1]).unwrap();
        assert!(close(&bb, b.matrix(), 1e-13));
    }

    #[test]
    fn clamps_tiny_negative_eigenvalues() {
        let m = diag(&[1.0 + 5e-11, -5e-11]);
        let rho = DensityOperator::new(m).unwrap();
        assert_eq!(rho.lambda_min(), 0.0);
        assert!(rho.matrix()[(1, 1)].re >= 0.0);
        assert!(DensityOperator::new(diag(&[1.0 + 1e-6, -1e-6])).is_err());
        assert!(DensityOperator::new(diag(&[0.5, 0.6])).is_err());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = task_rng(2, 0);
        let u = random::unitary(4, &mut rng);
        assert!(is_unitary(&u, 1e-12));
    }
}
