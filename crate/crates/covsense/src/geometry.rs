//! Real embedding of operators, the warden's channel as a real matrix, and
//! the tangent-space test deciding whether ‖ρ − |0⟩⟨0|‖₁ / ‖E(ρ) − E(|0⟩⟨0|)‖₁
//! stays bounded near the innocent state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::qmat::{self, c, CMatrix, CVector, DensityOperator, C64};
use crate::rng::task_rng;
use crate::{Error, Result};

pub const KRAUS_COMPLETENESS_TOL: f64 = 1e-9;
/// Singular values at or below this multiple of σ_max count as zero.
pub const NULL_SPACE_TOL: f64 = 1e-10;
/// Output distance below which two inputs count as colliding.
pub const COLLISION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    kraus: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("channel needs at least one Kraus operator".into()))?;
        let (dw, d) = first.shape();
        if kraus.iter().any(|k| k.shape() != (dw, d)) {
            return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
        }
        let mut total = CMatrix::zeros(d, d);
        for k in &kraus {
            total += k.adjoint() * k;
        }
        let defect = qmat::max_abs(&(total - qmat::identity(d)));
        if defect > KRAUS_COMPLETENESS_TOL {
            return Err(Error::InvalidInput(format!("Σ K†K deviates from I by {defect:.3e}")));
        }
        Ok(Self { kraus })
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn dim_in(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_out(), self.dim_out());
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    pub fn apply_state(&self, rho: &DensityOperator) -> DensityOperator {
        DensityOperator::new_unchecked(qmat::symmetrize(&self.apply(rho.matrix())))
    }

    /// Apply the channel to one tensor factor of an operator on
    /// (C^d_in)^{⊗sites}, with the other factors already of any dimension.
    pub fn apply_to_factor(&self, x: &CMatrix, dims: &[usize], site: usize) -> Result<CMatrix> {
        let total: usize = dims.iter().product();
        if x.nrows() != total || x.ncols() != total || dims.get(site) != Some(&self.dim_in()) {
            return Err(Error::DimensionMismatch("operator does not match the factor layout".into()));
        }
        let left: usize = dims[..site].iter().product();
        let right: usize = dims[site + 1..].iter().product();
        let (din, dout) = (self.dim_in(), self.dim_out());
        let out_total = left * dout * right;
        let mut out = CMatrix::zeros(out_total, out_total);
        for k in &self.kraus {
            // (I ⊗ K ⊗ I) x (I ⊗ K† ⊗ I), contracted index by index
            let mut tmp = CMatrix::zeros(out_total, total);
            for l in 0..left {
                for o in 0..dout {
                    for r in 0..right {
                        let row = (l * dout + o) * right + r;
                        for i in 0..din {
                            let kv = k[(o, i)];
                            if kv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let src = (l * din + i) * right + r;
                            for col in 0..total {
                                tmp[(row, col)] += kv * x[(src, col)];
                            }
                        }
                    }
                }
            }
            let kc = k.map(|z| z.conj());
            for l in 0..left {
                for o in 0..dout {
                    for r in 0..right {
                        let col = (l * dout + o) * right + r;
                        for i in 0..din {
                            let kv = kc[(o, i)];
                            if kv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let src = (l * din + i) * right + r;
                            for row in 0..out_total {
                                out[(row, col)] += tmp[(row, src)] * kv;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// E^{⊗sites} on an operator over (C^d_in)^{⊗sites}.
    pub fn apply_tensor_power(&self, x: &CMatrix, sites: usize) -> Result<CMatrix> {
        let mut dims = vec![self.dim_in(); sites];
        let mut cur = x.clone();
        for s in 0..sites {
            cur = self.apply_to_factor(&cur, &dims, s)?;
            dims[s] = self.dim_out();
        }
        Ok(cur)
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &KrausChannel) -> Result<KrausChannel> {
        if after.dim_in() != self.dim_out() {
            return Err(Error::DimensionMismatch("channels do not compose".into()));
        }
        let kraus = after
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        KrausChannel::new(kraus)
    }

    /// The same channel acting on inputs expressed in the basis `w`:
    /// X ↦ E(W X W†).
    pub fn precompose_unitary(&self, w: &CMatrix) -> KrausChannel {
        KrausChannel {
            kraus: self.kraus.iter().map(|k| k * w).collect(),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            kraus: vec![qmat::identity(d)],
        }
    }

    pub fn unitary(u: &CMatrix) -> Result<Self> {
        Self::new(vec![u.clone()])
    }

    /// Complete dephasing in the computational basis, E(ρ) = diag(ρ).
    pub fn dephasing(d: usize) -> Self {
        Self {
            kraus: (0..d)
                .map(|i| {
                    let mut k = CMatrix::zeros(d, d);
                    k[(i, i)] = c(1.0, 0.0);
                    k
                })
                .collect(),
        }
    }

    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!("γ = {gamma} outside [0, 1]")));
        }
        let k0 = qmat::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - gamma).sqrt()]);
        let k1 = qmat::from_real(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0]);
        Self::new(vec![k0, k1])
    }

    /// Qubit depolarizing channel ρ ↦ (1−p)ρ + p·I/2.
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=4.0 / 3.0).contains(&p) {
            return Err(Error::InvalidInput(format!("p = {p} outside [0, 4/3]")));
        }
        let a = (1.0 - 3.0 * p / 4.0).sqrt();
        let b = (p / 4.0).sqrt();
        let x = qmat::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut y = CMatrix::zeros(2, 2);
        y[(0, 1)] = c(0.0, -1.0);
        y[(1, 0)] = c(0.0, 1.0);
        let z = qmat::diag(&[1.0, -1.0]);
        Self::new(vec![qmat::identity(2).scale(a), x.scale(b), y.scale(b), z.scale(b)])
    }

    /// X ↦ tr(X)·σ.
    pub fn replacement(d: usize, sigma: &DensityOperator) -> Self {
        let es = sigma.eigensystem();
        let mut kraus = Vec::new();
        for (a, &lam) in es.eigenvalues.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let v = es.eigenvector(a).scale(lam.sqrt());
            for i in 0..d {
                let mut k = CMatrix::zeros(sigma.dim(), d);
                k.set_column(i, &v);
                kraus.push(k);
            }
        }
        Self { kraus }
    }
}

/// A unitary whose first column is `v` (normalised).
pub fn basis_with_first(v: &CVector) -> Result<CMatrix> {
    let d = v.len();
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("zero vector".into()));
    }
    let mut cols: Vec<CVector> = vec![v.unscale(norm)];
    for i in 0..d {
        if cols.len() == d {
            break;
        }
        let mut e = qmat::ket(d, i);
        for q in &cols {
            let proj = q.dotc(&e);
            e -= q * proj;
        }
        let n = e.norm();
        if n > 1e-6 {
            cols.push(e.unscale(n));
        }
    }
    Ok(CMatrix::from_columns(&cols))
}

/// f: L(A) → R^{2d²}, X ↦ (Re⟨a_i|X|a_j⟩, Im⟨a_i|X|a_j⟩) in row-major (i, j)
/// order with Re before Im, where {|a_i⟩} is a basis with |a_1⟩ the innocent
/// state.
#[derive(Clone, Debug)]
pub struct RealEmbedding {
    pub d: usize,
    /// Columns |a_i⟩.
    pub basis: CMatrix,
    /// Images of the tangent directions of the pure-state manifold at |a_1⟩.
    pub tangent_basis: Vec<DVector<f64>>,
}

impl RealEmbedding {
    pub fn new(innocent: &CVector) -> Result<Self> {
        let basis = basis_with_first(innocent)?;
        let d = innocent.len();
        let mut tangent_basis = Vec::with_capacity(2 * d - 2);
        for j in 1..d {
            // |a_1⟩⟨a_j| + |a_j⟩⟨a_1|
            let mut re = DVector::zeros(2 * d * d);
            re[2 * j] = 1.0;
            re[2 * (j * d)] = 1.0;
            // i|a_j⟩⟨a_1| − i|a_1⟩⟨a_j|
            let mut im = DVector::zeros(2 * d * d);
            im[2 * j + 1] = -1.0;
            im[2 * (j * d) + 1] = 1.0;
            tangent_basis.push(re);
            tangent_basis.push(im);
        }
        Ok(Self {
            d,
            basis,
            tangent_basis,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(&qmat::ket(d, 0)).expect("unit vector")
    }

    pub fn embed(&self, x: &CMatrix) -> DVector<f64> {
        let y = self.basis.adjoint() * x * &self.basis;
        embed_standard(&y)
    }

    pub fn unembed(&self, v: &DVector<f64>) -> CMatrix {
        let y = unembed_standard(v, self.d);
        &self.basis * y * self.basis.adjoint()
    }

    /// Real matrix of E with inputs in this embedding and outputs in the
    /// standard basis of W.
    pub fn channel_matrix(&self, e: &KrausChannel) -> DMatrix<f64> {
        channel_real_matrix(&e.precompose_unitary(&self.basis))
    }

    /// The operator |φ_t⟩⟨φ_t| − |a_1⟩⟨a_1| with |φ_t⟩ = cos t|a_1⟩ + sin t|v⟩,
    /// for a unit v ⊥ |a_1⟩ given in the standard basis. Written so that it
    /// keeps full relative precision for tiny t.
    pub fn pure_displacement(&self, v: &CVector, t: f64) -> CMatrix {
        let a1 = self.basis.column(0).into_owned();
        let s = (0.5 * t).sin();
        let w: CVector = a1.scale(-2.0 * s * s) + v.scale(t.sin());
        &a1 * w.adjoint() + &w * a1.adjoint() + &w * w.adjoint()
    }
}

fn embed_standard(y: &CMatrix) -> DVector<f64> {
    let (r, cdim) = y.shape();
    let mut v = DVector::zeros(2 * r * cdim);
    for i in 0..r {
        for j in 0..cdim {
            v[2 * (i * cdim + j)] = y[(i, j)].re;
            v[2 * (i * cdim + j) + 1] = y[(i, j)].im;
        }
    }
    v
}

fn unembed_standard(v: &DVector<f64>, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| c(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]))
}

/// M with M·f(X) = f(E(X)) in the standard bases of A and W.
pub fn channel_real_matrix(e: &KrausChannel) -> DMatrix<f64> {
    let d = e.dim_in();
    let dw = e.dim_out();
    let mut m = DMatrix::zeros(2 * dw * dw, 2 * d * d);
    for k in 0..2 * d * d {
        let mut unit = DVector::zeros(2 * d * d);
        unit[k] = 1.0;
        let x = unembed_standard(&unit, d);
        m.set_column(k, &embed_standard(&e.apply(&x)));
    }
    m
}

/// Orthonormal basis (as columns) of the null space of `m`; singular values
/// at or below `tol·σ_max` are treated as zero.
pub fn kernel_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, cdim) = m.shape();
    if cdim == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad to at least square so the SVD returns a full right basis
    let padded = if r < cdim {
        let mut p = DMatrix::zeros(cdim, cdim);
        p.view_mut((0, 0), (r, cdim)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= tol * smax)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(cdim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let s = m.clone().singular_values();
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreconditionCheck {
    pub verified: bool,
    /// Smallest ‖E(ρ) − E(|0⟩⟨0|)‖₁ found with ‖ρ − |0⟩⟨0|‖₁ ≥ 0.05.
    pub min_output_distance: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma5Verdict {
    pub verdict: Verdict,
    pub kernel_dim: usize,
    pub intersection_dim: usize,
    /// Embedded tangent vector inside f(ker E), if any.
    pub witness: Option<Vec<f64>>,
    /// Unit direction v ⊥ |0⟩ in the standard basis, as [re, im] pairs.
    pub witness_direction: Option<Vec<[f64; 2]>>,
    pub precondition: PreconditionCheck,
    /// Set when the precondition search found a collision; the verdict is
    /// still reported.
    pub warning: Option<String>,
}

/// Decide boundedness of the trace-norm ratio near the innocent state via
/// the rank test dim f(ker E) + (2d−2) − rank[ker | tangent] > 0.
pub fn lemma5_check(e: &KrausChannel, innocent: &CVector, seed: u64) -> Result<Lemma5Verdict> {
    if innocent.len() != e.dim_in() {
        return Err(Error::DimensionMismatch("innocent vector vs channel input".into()));
    }
    let emb = RealEmbedding::new(innocent)?;
    let m = emb.channel_matrix(e);
    let ker = kernel_basis(&m, NULL_SPACE_TOL);
    let kd = ker.ncols();
    let t = emb.tangent_basis.len();
    let tangent = DMatrix::from_columns(
        &emb.tangent_basis
            .iter()
            .map(|a| a.normalize())
            .collect::<Vec<_>>(),
    );
    let (intersection_dim, witness) = if kd == 0 || t == 0 {
        (0, None)
    } else {
        let mut joint = DMatrix::zeros(ker.nrows(), kd + t);
        joint.view_mut((0, 0), (ker.nrows(), kd)).copy_from(&ker);
        joint.view_mut((0, kd), (ker.nrows(), t)).copy_from(&(-&tangent));
        let rank = numerical_rank(&joint, NULL_SPACE_TOL);
        let dim = kd + t - rank;
        let witness = if dim > 0 {
            let null = kernel_basis(&joint, NULL_SPACE_TOL);
            let coeff = null.column(0).rows(kd, t).into_owned();
            let w = &tangent * coeff;
            Some(w.normalize())
        } else {
            None
        };
        (dim, witness)
    };
    let witness_direction = witness.as_ref().map(|w| tangent_direction(&emb, w));
    let precondition = precondition_search(e, innocent, seed);
    let warning = (!precondition.verified).then(|| {
        Error::PreconditionUnverifiable(format!(
            "found ρ far from the innocent state with ‖E(ρ) − E(|0⟩⟨0|)‖₁ = {:.3e}",
            precondition.min_output_distance
        ))
        .to_string()
    });
    Ok(Lemma5Verdict {
        verdict: if intersection_dim > 0 {
            Verdict::Unbounded
        } else {
            Verdict::Bounded
        },
        kernel_dim: kd,
        intersection_dim,
        witness: witness.map(|w| w.iter().copied().collect()),
        witness_direction: witness_direction.map(|v| v.iter().map(|z| [z.re, z.im]).collect()),
        precondition,
        warning,
    })
}

/// The direction v (standard basis, unit, ⊥ innocent) whose tangent image is
/// the embedded vector `w`.
fn tangent_direction(emb: &RealEmbedding, w: &DVector<f64>) -> CVector {
    let d = emb.d;
    // tangent image of |a_1⟩ + t Σ_j z_j|a_j⟩ has Re(X_1j) = Re z_j and Im(X_j1) = Im z_j
    let mut z = CVector::zeros(d);
    for j in 1..d {
        z[j] = c(w[2 * j], w[2 * (j * d) + 1]);
    }
    let v = &emb.basis * z;
    let n = v.norm();
    if n > 0.0 {
        v.unscale(n)
    } else {
        v
    }
}

const PRECONDITION_SAMPLES: usize = 10_000;
const PRECONDITION_MIN_INPUT: f64 = 0.05;
const PRECONDITION_POLISH: usize = 10;

/// Randomised search for ρ with ‖ρ − |0⟩⟨0|‖₁ ≥ 0.05 but E(ρ) ≈ E(|0⟩⟨0|).
pub fn precondition_search(e: &KrausChannel, innocent: &CVector, seed: u64) -> PreconditionCheck {
    let d = e.dim_in();
    let zero = qmat::outer(&innocent.unscale(innocent.norm()));
    let e0 = e.apply(&zero);
    let score = |g: &CMatrix| -> Option<f64> {
        let rho = g * g.adjoint();
        let tr = qmat::trace(&rho).re;
        if !(tr > 0.0) {
            return None;
        }
        let rho = rho.unscale(tr);
        let input = qmat::trace_norm(&(&rho - &zero)).ok()?;
        if input < PRECONDITION_MIN_INPUT {
            return None;
        }
        qmat::trace_norm(&(e.apply(&rho) - &e0)).ok()
    };
    let mut rng = task_rng(seed, 0x5eed);
    let mut pool: Vec<(f64, CMatrix)> = Vec::new();
    for i in 0..PRECONDITION_SAMPLES {
        let rank = 1 + i % d;
        let g = qmat::random::ginibre(d, rank, &mut rng);
        if let Some(s) = score(&g) {
            pool.push((s, g));
        }
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(PRECONDITION_POLISH);
    let mut best = pool.first().map_or(f64::INFINITY, |p| p.0);
    for (mut s, mut g) in pool {
        let mut step = 0.3;
        for _ in 0..400 {
            let noise = CMatrix::from_fn(g.nrows(), g.ncols(), |_, _| {
                c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
            });
            let trial = &g + noise.scale(step * g.norm() / (g.len() as f64).sqrt());
            match score(&trial) {
                Some(v) if v < s => {
                    s = v;
                    g = trial;
                }
                _ => step *= 0.97,
            }
            if step < 1e-6 {
                break;
            }
        }
        best = best.min(s);
    }
    PreconditionCheck {
        verified: best > COLLISION_TOL,
        min_output_distance: best,
        samples: PRECONDITION_SAMPLES,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    /// Grows at least tenfold per decade along the witness.
    Growing,
    /// Stays within a factor 2 across all decades.
    Plateau,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub k: u32,
    /// ‖ρ − |0⟩⟨0|‖₁ of the probed states.
    pub distance: f64,
    /// Largest ratio over random tangent directions at this distance.
    pub random_max: f64,
    pub witness_ratio: Option<f64>,
    /// Largest ratio seen at this or any coarser distance.
    pub running_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioProbe {
    pub rows: Vec<ProbeRow>,
    pub trend: Trend,
    /// Empirical sup of the ratio over all probes.
    pub sup: f64,
}

pub const PROBE_DECADES: u32 = 6;
/// Tenfold growth per decade, allowing for rounding.
const GROWTH_PER_DECADE: f64 = 10.0 * (1.0 - 1e-9);
const PLATEAU_FACTOR: f64 = 2.0;

fn ratio(e: &KrausChannel, delta: &CMatrix) -> (f64, f64) {
    let input = qmat::trace_norm(delta).unwrap_or(0.0);
    let output = qmat::trace_norm(&e.apply(delta)).unwrap_or(0.0);
    let r = if output > 0.0 { input / output } else { f64::INFINITY };
    (input, r)
}

/// Empirical ratio ‖ρ − |0⟩⟨0|‖₁ / ‖E(ρ) − E(|0⟩⟨0|)‖₁ on pure states at
/// distance 10^−k (k = 1…6) along random tangent directions and along the
/// witness direction of [`lemma5_check`], if given.
pub fn ratio_probe(
    e: &KrausChannel,
    innocent: &CVector,
    samples: usize,
    seed: u64,
    witness: Option<&CVector>,
    exec: Execution,
) -> Result<RatioProbe> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be at least 1".into()));
    }
    if innocent.len() != e.dim_in() || e.dim_in() < 2 {
        return Err(Error::DimensionMismatch("innocent vector vs channel input".into()));
    }
    let emb = RealEmbedding::new(innocent)?;
    let a1 = emb.basis.column(0).into_owned();
    let d = emb.d;
    let orth = |v: CVector| -> CVector {
        let p = a1.dotc(&v);
        let w = v - &a1 * p;
        let n = w.norm();
        w.unscale(n)
    };
    let witness = witness.map(|w| orth(w.clone()));
    let mut rows = Vec::new();
    let mut running: f64 = 0.0;
    for k in 1..=PROBE_DECADES {
        let dist = 10f64.powi(-(k as i32));
        let t = (0.5 * dist).asin();
        let per_sample = exec.map_range(samples, |i| {
            let mut rng = task_rng(seed, ((k as u64) << 32) | i as u64);
            let v = orth(qmat::random::ket(d, &mut rng));
            ratio(e, &emb.pure_displacement(&v, t)).1
        });
        let random_max = per_sample.into_iter().fold(0.0, f64::max);
        let witness_ratio = witness.as_ref().map(|w| ratio(e, &emb.pure_displacement(w, t)).1);
        running = running.max(random_max).max(witness_ratio.unwrap_or(0.0));
        rows.push(ProbeRow {
            k,
            distance: dist,
            random_max,
            witness_ratio,
            running_max: running,
        });
    }
    let trend = classify(&rows);
    Ok(RatioProbe {
        sup: running,
        rows,
        trend,
    })
}

fn classify(rows: &[ProbeRow]) -> Trend {
    let series: Vec<f64> = if rows.iter().all(|r| r.witness_ratio.is_some()) {
        rows.iter().map(|r| r.witness_ratio.unwrap()).collect()
    } else {
        rows.iter().map(|r| r.random_max).collect()
    };
    if series.windows(2).all(|w| w[1] >= GROWTH_PER_DECADE * w[0]) {
        return Trend::Growing;
    }
    let all: Vec<f64> = rows
        .iter()
        .flat_map(|r| std::iter::once(r.random_max).chain(r.witness_ratio))
        .collect();
    let hi = all.iter().copied().fold(0.0, f64::max);
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    if hi.is_finite() && lo > 0.0 && hi <= PLATEAU_FACTOR * lo {
        Trend::Plateau
    } else {
        Trend::Inconclusive
    }
}

/// Draw a random channel with `n_kraus` Kraus operators from C^d to C^dw.
pub fn random_channel<R: Rng + ?Sized>(d: usize, dw: usize, n_kraus: usize, rng: &mut R) -> KrausChannel {
    // an isometry C^d → C^dw ⊗ C^n_kraus sliced into blocks
    let g = qmat::random::ginibre(dw * n_kraus, d, rng);
    let q = g.qr().q();
    let kraus = (0..n_kraus)
        .map(|k| q.rows(k * dw, dw).into_owned())
        .collect();
    KrausChannel { kraus }
}
