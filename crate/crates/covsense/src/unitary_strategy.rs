//! Zero-error sensing of unitary families with an entangled block probe,
//! its covertness certificate, and the converse-side probe quantities.

use serde::{Deserialize, Serialize};

use crate::discriminate::{pgm, DiscriminationResult};
use crate::divergence;
use crate::exec::Execution;
use crate::geometry::{lemma5_check, ratio_probe, KrausChannel, Trend, Verdict};
use crate::qmat::{self, c, CMatrix, CVector, DensityOperator, C64, ZERO_EIGENVALUE};
use crate::{Error, Result};

pub const UNITARY_TOL: f64 = 1e-10;
pub const OVERLAP_TOL: f64 = 1e-10;
pub const DEFAULT_M_MAX: usize = 64;
/// Angular slack of the half-plane test.
pub const ANGLE_TOL: f64 = 1e-9;
pub const SUPPORT_TOL: f64 = 1e-9;
pub const MAX_EXACT_DIM: usize = 4096;
/// Largest number of phase multisets examined for one m.
const MAX_MULTISETS: u128 = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryScenario {
    params: Vec<String>,
    unitaries: Vec<CMatrix>,
    willie: KrausChannel,
    innocent: CVector,
}

impl UnitaryScenario {
    pub fn new(params: Vec<String>, unitaries: Vec<CMatrix>, willie: KrausChannel, innocent: CVector) -> Result<Self> {
        if params.len() != unitaries.len() || params.is_empty() {
            return Err(Error::DimensionMismatch("one unitary per parameter".into()));
        }
        let d = innocent.len();
        for (p, u) in params.iter().zip(&unitaries) {
            if u.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!("unitary for {p} is not {d}x{d}")));
            }
            if !qmat::is_unitary(u, UNITARY_TOL) {
                return Err(Error::InvalidInput(format!("matrix for {p} is not unitary")));
            }
        }
        if willie.dim_in() != d {
            return Err(Error::DimensionMismatch("warden channel input dimension".into()));
        }
        if (innocent.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput("innocent vector must be a unit vector".into()));
        }
        Ok(Self {
            params,
            unitaries,
            willie,
            innocent,
        })
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn dim(&self) -> usize {
        self.innocent.len()
    }

    pub fn unitary(&self, theta: usize) -> &CMatrix {
        &self.unitaries[theta]
    }

    pub fn willie(&self) -> &KrausChannel {
        &self.willie
    }

    pub fn innocent(&self) -> &CVector {
        &self.innocent
    }

    /// E(|0⟩⟨0|).
    pub fn innocent_output(&self) -> DensityOperator {
        self.willie.apply_state(&DensityOperator::new_unchecked(qmat::outer(&self.innocent)))
    }
}

/// Σ_k a_k ⊗_i |f_{k,i}⟩ kept in factorised form.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeState {
    pub local_dim: usize,
    pub sites: usize,
    pub terms: Vec<(f64, Vec<CVector>)>,
}

impl ProbeState {
    pub fn product(factors: Vec<CVector>) -> Self {
        Self {
            local_dim: factors[0].len(),
            sites: factors.len(),
            terms: vec![(1.0, factors)],
        }
    }

    /// ⟨self|A^{⊗sites}|other⟩.
    pub fn inner_with(&self, a: &CMatrix, other: &ProbeState) -> C64 {
        let mut acc = c(0.0, 0.0);
        for (x, fx) in &self.terms {
            for (y, fy) in &other.terms {
                let mut prod = c(x * y, 0.0);
                for (u, v) in fx.iter().zip(fy) {
                    prod *= u.dotc(&(a * v));
                }
                acc += prod;
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.inner_with(&qmat::identity(self.local_dim), self).re.max(0.0).sqrt()
    }

    /// |⟨ν|V^{⊗m}|ν⟩|
    pub fn overlap(&self, v: &CMatrix) -> f64 {
        self.inner_with(v, self).norm()
    }

    pub fn dense(&self) -> CVector {
        let mut out = CVector::zeros(self.local_dim.pow(self.sites as u32));
        for (a, f) in &self.terms {
            out += qmat::tensor_vectors(f.iter()).scale(*a);
        }
        out
    }

    /// E^{⊗sites}(|ν⟩⟨ν|), built from the factorised terms.
    pub fn channel_output(&self, e: &KrausChannel) -> CMatrix {
        let dw = e.dim_out();
        let mut out = CMatrix::zeros(dw.pow(self.sites as u32), dw.pow(self.sites as u32));
        for (a, fa) in &self.terms {
            for (b, fb) in &self.terms {
                let parts: Vec<CMatrix> = fa.iter().zip(fb).map(|(x, y)| e.apply(&(x * y.adjoint()))).collect();
                out += qmat::tensor_all(parts.iter()).scale(a * b);
            }
        }
        out
    }

    /// Per-term factor outputs E(|f_{k,i}⟩⟨f_{l,i}|), indexed [k][l][i].
    fn factor_outputs(&self, e: &KrausChannel) -> Vec<Vec<Vec<CMatrix>>> {
        self.terms
            .iter()
            .map(|(_, fa)| {
                self.terms
                    .iter()
                    .map(|(_, fb)| fa.iter().zip(fb).map(|(x, y)| e.apply(&(x * y.adjoint()))).collect())
                    .collect()
            })
            .collect()
    }
}

/// Eigenphases in [0, 2π) and unit eigenvectors of a unitary.
pub fn unitary_eigen(v: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (q, t) = v.clone().schur().unpack();
    let d = v.nrows();
    let mut vecs = q;
    for j in 0..d {
        qmat::fix_phase(vecs.column_mut(j));
    }
    let phases = (0..d).map(|i| t[(i, i)].arg().rem_euclid(std::f64::consts::TAU)).collect();
    (phases, vecs)
}

/// True iff the unit-circle points at `phases` are not inside an open
/// half-plane through the origin, i.e. 0 is in their convex hull.
pub fn zero_in_hull(phases: &[f64]) -> bool {
    if phases.is_empty() {
        return false;
    }
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(std::f64::consts::TAU)).collect();
    p.sort_by(f64::total_cmp);
    let mut max_gap = p[0] + std::f64::consts::TAU - p[p.len() - 1];
    for w in p.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap <= std::f64::consts::PI + ANGLE_TOL
}

/// Non-decreasing index sequences of length m over 0..d.
fn multisets(d: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, m, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orthogonalizer {
    pub m: usize,
    /// Phases (mod 2π) of the tensor eigenvectors used by the probe.
    pub phases: Vec<f64>,
    pub weights: Vec<f64>,
    /// Eigenvector index sequences of the probe terms.
    pub eigen_indices: Vec<Vec<usize>>,
    pub probe: ProbeState,
    /// |⟨ν|V^{⊗m}|ν⟩|
    pub overlap: f64,
}

/// Convex weights on at most three of `phases` whose unit vectors sum to 0.
fn hull_weights(phases: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
    use std::f64::consts::{PI, TAU};
    let k = phases.len();
    for i in 0..k {
        for j in i + 1..k {
            let gap = (phases[j] - phases[i]).rem_euclid(TAU);
            if (gap - PI).abs() <= ANGLE_TOL {
                return Some((vec![i, j], vec![0.5, 0.5]));
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    let a = order[0];
    let rel = |i: usize| (phases[i] - phases[a]).rem_euclid(TAU);
    let bpos = order.iter().rposition(|&i| i != a && rel(i) < PI)?;
    let b = order[bpos];
    let cidx = *order.get(bpos + 1)?;
    let (beta, gamma) = (rel(b), rel(cidx));
    if !(gamma > PI) {
        return None;
    }
    // (cos β − 1) w_b + (cos γ − 1) w_c = −1,  sin β w_b + sin γ w_c = 0
    let (a11, a12, a21, a22) = (beta.cos() - 1.0, gamma.cos() - 1.0, beta.sin(), gamma.sin());
    let det = a11 * a22 - a12 * a21;
    if det.abs() < 1e-300 {
        return None;
    }
    let wb = -a22 / det;
    let wc = a21 / det;
    let wa = 1.0 - wb - wc;
    if wa < -1e-12 || wb < -1e-12 || wc < -1e-12 {
        return None;
    }
    Some((vec![a, b, cidx], vec![wa.max(0.0), wb.max(0.0), wc.max(0.0)]))
}

fn is_scalar_multiple_of_identity(phases: &[f64]) -> bool {
    let z: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    z.iter().all(|a| z.iter().all(|b| (a - b).norm() <= 1e-10))
}

/// Smallest m ≤ m_max for which some state |ν⟩ on m copies has
/// ⟨ν|V^{⊗m}|ν⟩ = 0, with such a probe.
pub fn find_orthogonalizer(v: &CMatrix, m_max: usize) -> Result<Orthogonalizer> {
    if m_max == 0 {
        return Err(Error::InvalidInput("m_max must be at least 1".into()));
    }
    if !qmat::is_unitary(v, UNITARY_TOL) {
        return Err(Error::InvalidInput("matrix is not unitary".into()));
    }
    let (phases, vecs) = unitary_eigen(v);
    if is_scalar_multiple_of_identity(&phases) {
        return Err(Error::IdentityUnitary);
    }
    let d = v.nrows();
    for m in 1..=m_max {
        if crate::types::composition_count(m, d) > MAX_MULTISETS {
            return Err(Error::ScaleExceeded(format!("phase multisets at m = {m}")));
        }
        let sets = multisets(d, m);
        let mut sums: Vec<f64> = Vec::new();
        let mut reps: Vec<Vec<usize>> = Vec::new();
        for s in sets {
            let ph = s.iter().map(|&i| phases[i]).sum::<f64>().rem_euclid(std::f64::consts::TAU);
            let dup = sums.iter().any(|&x| {
                let g = (x - ph).rem_euclid(std::f64::consts::TAU);
                g.min(std::f64::consts::TAU - g) <= 1e-12
            });
            if !dup {
                sums.push(ph);
                reps.push(s);
            }
        }
        if !zero_in_hull(&sums) {
            continue;
        }
        let Some((picked, weights)) = hull_weights(&sums) else {
            continue;
        };
        let terms: Vec<(f64, Vec<CVector>)> = picked
            .iter()
            .zip(&weights)
            .map(|(&i, &w)| (w.sqrt(), reps[i].iter().map(|&k| vecs.column(k).into_owned()).collect()))
            .collect();
        let probe = ProbeState {
            local_dim: d,
            sites: m,
            terms,
        };
        let overlap = probe.overlap(v);
        if overlap > OVERLAP_TOL || (probe.norm() - 1.0).abs() > 1e-10 {
            continue;
        }
        return Ok(Orthogonalizer {
            m,
            phases: picked.iter().map(|&i| sums[i]).collect(),
            weights,
            eigen_indices: picked.iter().map(|&i| reps[i].clone()).collect(),
            probe,
            overlap,
        });
    }
    Err(Error::MNotFound(m_max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOrthogonalizer {
    pub theta: usize,
    pub theta_prime: usize,
    pub orth: Orthogonalizer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockStrategy {
    /// One orthogonalizer per unordered pair θ < θ′, in lexicographic order.
    pub pairs: Vec<PairOrthogonalizer>,
    /// Σ of the pair block lengths.
    pub m: usize,
    pub n: usize,
    /// ⌊n/m⌋
    pub ell: usize,
    pub local_dim: usize,
}

impl BlockStrategy {
    /// ν = ⊗_pairs ν_{θ,θ′} as one factorised probe on m sites.
    pub fn probe(&self) -> ProbeState {
        let mut terms: Vec<(f64, Vec<CVector>)> = vec![(1.0, vec![])];
        for p in &self.pairs {
            terms = terms
                .iter()
                .flat_map(|(a, fa)| {
                    p.orth.probe.terms.iter().map(move |(b, fb)| {
                        let mut f = fa.clone();
                        f.extend(fb.iter().cloned());
                        (a * b, f)
                    })
                })
                .collect();
        }
        ProbeState {
            local_dim: self.local_dim,
            sites: self.m,
            terms,
        }
    }

    /// Per-position input marginals of the strategy state φ_{A^n}.
    pub fn marginals(&self, scen: &UnitaryScenario) -> Result<Vec<DensityOperator>> {
        let zero = qmat::outer(scen.innocent());
        let mut site_states: Vec<CMatrix> = Vec::with_capacity(self.m);
        let mut offset = 0;
        for p in &self.pairs {
            let dense = p.orth.probe.dense();
            let rho = qmat::outer(&dense);
            let dims = vec![self.local_dim; p.orth.m];
            for q in 0..p.orth.m {
                site_states.push(qmat::partial_trace(&rho, &dims, &[q])?);
            }
            offset += p.orth.m;
        }
        debug_assert_eq!(offset, self.m);
        let l = self.ell as f64;
        Ok((0..self.n)
            .map(|j| {
                if j < self.ell * self.m {
                    let q = j % self.m;
                    DensityOperator::new_unchecked(site_states[q].scale(1.0 / l) + zero.scale(1.0 - 1.0 / l))
                } else {
                    DensityOperator::new_unchecked(zero.clone())
                }
            })
            .collect())
    }
}

fn check_support(scen: &UnitaryScenario) -> Result<()> {
    let d = scen.dim();
    let sigma = scen.innocent_output();
    let outside = qmat::identity(sigma.dim()) - sigma.support_projector();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut states: Vec<CVector> = (0..d).map(|i| qmat::ket(d, i)).collect();
    for i in 0..d {
        for j in i + 1..d {
            let mut a = CVector::zeros(d);
            a[i] = c(s, 0.0);
            a[j] = c(s, 0.0);
            let mut b = CVector::zeros(d);
            b[i] = c(s, 0.0);
            b[j] = c(0.0, s);
            states.push(a);
            states.push(b);
        }
    }
    for v in &states {
        let leak = qmat::trace_product_re(&outside, &scen.willie().apply(&qmat::outer(v)));
        if leak > SUPPORT_TOL {
            return Err(Error::AssumptionViolated(format!(
                "warden output of a probe state has weight {leak:.3e} outside supp E(|0⟩⟨0|)"
            )));
        }
    }
    Ok(())
}

/// Orthogonalizers for every unordered pair, concatenated into one block of
/// length m, repeated ⌊n/m⌋ times.
pub fn build_block_strategy(scen: &UnitaryScenario, n: usize, m_max: usize) -> Result<BlockStrategy> {
    if scen.n_params() < 2 {
        return Err(Error::AssumptionViolated("need at least two parameters".into()));
    }
    check_support(scen)?;
    let mut pairs = Vec::new();
    for a in 0..scen.n_params() {
        for b in a + 1..scen.n_params() {
            let v = scen.unitary(a).adjoint() * scen.unitary(b);
            let orth = find_orthogonalizer(&v, m_max).map_err(|e| match e {
                Error::IdentityUnitary => Error::AssumptionViolated(format!(
                    "parameters {} and {} give the same unitary up to phase",
                    scen.params()[a],
                    scen.params()[b]
                )),
                other => other,
            })?;
            pairs.push(PairOrthogonalizer {
                theta: a,
                theta_prime: b,
                orth,
            });
        }
    }
    let m: usize = pairs.iter().map(|p| p.orth.m).sum();
    if m > n {
        return Err(Error::BlockTooLong { m, n });
    }
    Ok(BlockStrategy {
        pairs,
        m,
        n,
        ell: n / m,
        local_dim: scen.dim(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub theta: usize,
    pub theta_prime: usize,
    /// |⟨ν|(U_θ†U_θ′)^{⊗m}|ν⟩|
    pub overlap: f64,
}

/// Overlap of the block probe under every pair of parameters.
pub fn strategy_zero_error_check(strategy: &BlockStrategy, scen: &UnitaryScenario) -> Vec<PairOverlap> {
    let mut out = Vec::new();
    for a in 0..scen.n_params() {
        for b in a + 1..scen.n_params() {
            let v = scen.unitary(a).adjoint() * scen.unitary(b);
            let overlap = strategy
                .pairs
                .iter()
                .map(|p| p.orth.probe.overlap(&v))
                .product();
            out.push(PairOverlap {
                theta: a,
                theta_prime: b,
                overlap,
            });
        }
    }
    out
}

/// Bob's global pure states ψ_{θ,j} = U_θ^{⊗n}|0…0 ν 0…0⟩, with ν in
/// sub-block j; indexed [j][θ].
pub fn global_states(strategy: &BlockStrategy, scen: &UnitaryScenario) -> Result<Vec<Vec<CVector>>> {
    let dim = (scen.dim() as u128).pow(strategy.n as u32);
    if dim > MAX_EXACT_DIM as u128 {
        return Err(Error::ScaleExceeded(format!("{}^{} amplitudes", scen.dim(), strategy.n)));
    }
    let nu = strategy.probe().dense();
    let zero = scen.innocent().clone();
    let m = strategy.m;
    let n = strategy.n;
    (0..strategy.ell)
        .map(|j| {
            let before: Vec<&CVector> = std::iter::repeat_n(&zero, j * m).collect();
            let after: Vec<&CVector> = std::iter::repeat_n(&zero, n - (j + 1) * m).collect();
            let input = qmat::tensor_vectors(before.into_iter().chain(std::iter::once(&nu)).chain(after));
            Ok((0..scen.n_params())
                .map(|t| {
                    let u = scen.unitary(t);
                    let un = qmat::tensor_all(std::iter::repeat_n(u, n));
                    un * &input
                })
                .collect())
        })
        .collect()
}

/// PGM on the received states of each sub-block; per-θ errors averaged over
/// the ℓ sub-blocks.
pub fn zero_error_pgm(strategy: &BlockStrategy, scen: &UnitaryScenario) -> Result<DiscriminationResult> {
    let states = global_states(strategy, scen)?;
    let mut per_theta = vec![0.0; scen.n_params()];
    for block in &states {
        let rhos: Vec<DensityOperator> = block
            .iter()
            .map(|v| DensityOperator::new_unchecked(qmat::outer(v)))
            .collect();
        let refs: Vec<&DensityOperator> = rhos.iter().collect();
        let r = pgm(&refs)?.1;
        for (acc, e) in per_theta.iter_mut().zip(r.per_theta_error) {
            *acc += e / states.len() as f64;
        }
    }
    let error = per_theta.iter().copied().fold(0.0, f64::max);
    Ok(DiscriminationResult {
        error,
        per_theta_error: per_theta,
        method: crate::discriminate::Method::Pgm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertnessCertificate {
    /// χ²(E^{⊗m}(ν) ‖ E(|0⟩⟨0|)^{⊗m}), dimensionless.
    pub chi2: f64,
    /// chi2 / ℓ, nats.
    pub chi2_bound: f64,
    /// m / ((n − m) λ_min^m), nats.
    pub coarse_bound: f64,
    pub lambda_min: f64,
    /// D(E^{⊗n}(φ) ‖ E(|0⟩⟨0|)^{⊗n}), nats, when computable.
    pub exact: Option<f64>,
    pub exact_skipped: Option<String>,
}

/// Inverse of σ on its support.
fn pseudo_inverse(sigma: &DensityOperator) -> CMatrix {
    sigma
        .eigensystem()
        .map(|x| if x > ZERO_EIGENVALUE { 1.0 / x } else { 0.0 })
}

/// χ²(E^{⊗m}(ν) ‖ σ^{⊗m}) from the factorised probe: 1 + χ² is a sum of
/// products of single-site traces.
fn probe_chi2(probe: &ProbeState, e: &KrausChannel, sigma: &DensityOperator) -> f64 {
    let x = probe.factor_outputs(e);
    let inv = pseudo_inverse(sigma);
    let amps: Vec<f64> = probe.terms.iter().map(|t| t.0).collect();
    let t = amps.len();
    let mut total = 0.0;
    for k in 0..t {
        for l in 0..t {
            for k2 in 0..t {
                for l2 in 0..t {
                    let mut prod = c(amps[k] * amps[l] * amps[k2] * amps[l2], 0.0);
                    for i in 0..probe.sites {
                        prod *= qmat::trace(&(&x[k][l][i] * &x[k2][l2][i] * &inv));
                    }
                    total += prod.re;
                }
            }
        }
    }
    (total - 1.0).max(0.0)
}

fn check_probe_support(out: &CMatrix, sigma: &DensityOperator, sites: usize) -> Result<()> {
    let proj = sigma.support_projector();
    let dims = vec![sigma.dim(); sites];
    for q in 0..sites {
        let marg = qmat::partial_trace(out, &dims, &[q])?;
        let leak = qmat::trace_product_re(&(qmat::identity(sigma.dim()) - &proj), &marg);
        if leak > SUPPORT_TOL {
            return Err(Error::SupportViolation(format!(
                "probe output leaves supp E(|0⟩⟨0|) by {leak:.3e}"
            )));
        }
    }
    Ok(())
}

/// Covertness certificate of the block strategy, with the exact value when
/// dim W^n ≤ `max_dim`.
pub fn covertness_certificate(strategy: &BlockStrategy, scen: &UnitaryScenario) -> Result<CovertnessCertificate> {
    covertness_certificate_with(strategy, scen, MAX_EXACT_DIM)
}

pub fn covertness_certificate_with(
    strategy: &BlockStrategy,
    scen: &UnitaryScenario,
    max_dim: usize,
) -> Result<CovertnessCertificate> {
    check_support(scen)?;
    let sigma = scen.innocent_output();
    let mut one_plus = 1.0;
    for p in &strategy.pairs {
        one_plus *= 1.0 + probe_chi2(&p.orth.probe, scen.willie(), &sigma);
    }
    let chi2 = (one_plus - 1.0).max(0.0);
    let lambda_min = sigma.lambda_min();
    let m = strategy.m as f64;
    let coarse_bound = if strategy.n > strategy.m && lambda_min > 0.0 {
        m / ((strategy.n as f64 - m) * lambda_min.powi(strategy.m as i32))
    } else {
        f64::INFINITY
    };
    let (exact, exact_skipped) = match exact_covertness_unitary(strategy, scen, max_dim) {
        Ok(v) => (Some(v), None),
        Err(Error::ScaleExceeded(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(CovertnessCertificate {
        chi2,
        chi2_bound: chi2 / strategy.ell as f64,
        coarse_bound,
        lambda_min,
        exact,
        exact_skipped,
    })
}

/// D(E^{⊗n}(φ_{A^n}) ‖ E(|0⟩⟨0|)^{⊗n}) for
/// φ = (1/ℓ) Σ_i |0⟩⟨0|^{⊗(i−1)m} ⊗ |ν⟩⟨ν| ⊗ |0⟩⟨0|^{⊗(n−im)}.
pub fn exact_covertness_unitary(strategy: &BlockStrategy, scen: &UnitaryScenario, max_dim: usize) -> Result<f64> {
    let e = scen.willie();
    let dw = e.dim_out();
    let dim = (dw as u128).checked_pow(strategy.n as u32).unwrap_or(u128::MAX);
    if dim > max_dim as u128 {
        return Err(Error::ScaleExceeded(format!(
            "warden dimension {dw}^{} exceeds {max_dim}",
            strategy.n
        )));
    }
    let sigma = scen.innocent_output();
    let probe = strategy.probe();
    let tau = probe.channel_output(e);
    if check_probe_support(&tau, &sigma, strategy.m).is_err() {
        return Ok(f64::INFINITY);
    }
    let (m, n, ell) = (strategy.m, strategy.n, strategy.ell);
    let s = sigma.matrix();
    let mut rho = CMatrix::zeros(dim as usize, dim as usize);
    for i in 0..ell {
        let before = qmat::tensor_all(std::iter::repeat_n(s, i * m));
        let after = qmat::tensor_all(std::iter::repeat_n(s, n - (i + 1) * m));
        rho += before.kronecker(&tau).kronecker(&after).scale(1.0 / ell as f64);
    }
    // tr(ρ log σ^{⊗n}) from one-site marginals:
    // Σ_q tr(τ_q log σ) + (n − m) tr(σ log σ)
    let log_sigma = sigma
        .eigensystem()
        .map(|x| if x > ZERO_EIGENVALUE { x.ln() } else { 0.0 });
    let dims = vec![dw; m];
    let mut cross = (n - m) as f64 * qmat::trace_product_re(&log_sigma, s);
    for q in 0..m {
        let marg = qmat::partial_trace(&tau, &dims, &[q])?;
        cross += qmat::trace_product_re(&log_sigma, &marg);
    }
    let state = DensityOperator::new_unchecked(qmat::symmetrize(&rho));
    Ok(divergence::rel_entropy_to_product(&state, cross))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseProbe {
    /// Σ_i D(E(φ_i) ‖ E(|0⟩⟨0|)), nats; a lower bound on the covertness.
    pub step3_sum: f64,
    /// Σ_i ‖|0⟩⟨0| − φ_i‖₁
    pub trace_distance_sum: f64,
    /// √(Σ_i ‖|0⟩⟨0| − φ_i‖₁)
    pub step2_value: f64,
    /// √(2 Σ_i ‖|0⟩⟨0| − φ_i‖₁), an upper bound on ‖φ − |0⟩⟨0|^{⊗n}‖₁.
    pub step2_bound: f64,
    /// Estimated sup of ‖ρ − |0⟩⟨0|‖₁ / ‖E(ρ) − E(|0⟩⟨0|)‖₁; +∞ if unbounded.
    pub ratio_constant: f64,
    /// (1 − 2ε)⁴ / (8 B² n): smallest δ compatible with the claimed ε.
    pub delta_floor: f64,
    /// ½ − √(½ Σ_i ‖|0⟩⟨0| − φ_i‖₁): smallest ε compatible with the marginals.
    pub epsilon_floor: f64,
    pub violation: bool,
    pub diagnostic: String,
}

const PROBE_SAMPLES: usize = 64;

/// Converse-side quantities for a strategy with the given input marginals
/// and a claimed (ε, δ) pair.
pub fn converse_probes(
    marginals: &[DensityOperator],
    scen: &UnitaryScenario,
    epsilon_claim: f64,
    delta_claim: Option<f64>,
    seed: u64,
) -> Result<ConverseProbe> {
    let n = marginals.len();
    if n == 0 {
        return Err(Error::InvalidInput("no marginals".into()));
    }
    let d = scen.dim();
    if marginals.iter().any(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch("marginal dimension".into()));
    }
    let zero = DensityOperator::new_unchecked(qmat::outer(scen.innocent()));
    let sigma = scen.innocent_output();
    let mut step3_sum = 0.0;
    let mut trace_distance_sum = 0.0;
    for m in marginals {
        step3_sum += divergence::rel_entropy(&scen.willie().apply_state(m), &sigma)?;
        trace_distance_sum += qmat::trace_norm(&(zero.matrix() - m.matrix()))?;
    }
    let verdict = lemma5_check(scen.willie(), scen.innocent(), seed)?;
    let witness = verdict
        .witness_direction
        .as_ref()
        .map(|w| CVector::from_iterator(d, w.iter().map(|p| c(p[0], p[1]))));
    let probe = ratio_probe(
        scen.willie(),
        scen.innocent(),
        PROBE_SAMPLES,
        seed,
        witness.as_ref(),
        Execution::default(),
    )?;
    let ratio_constant = if verdict.verdict == Verdict::Unbounded || probe.trend == Trend::Growing {
        f64::INFINITY
    } else {
        probe.sup
    };
    let base = (1.0 - 2.0 * epsilon_claim).max(0.0);
    let delta_floor = if ratio_constant.is_finite() {
        base.powi(4) / (8.0 * ratio_constant * ratio_constant * n as f64)
    } else {
        0.0
    };
    let epsilon_floor = 0.5 - (0.5 * trace_distance_sum).sqrt();
    let mut reasons = Vec::new();
    if epsilon_claim < epsilon_floor - 1e-12 {
        reasons.push(format!(
            "claimed ε = {epsilon_claim:.3e} is below the floor {epsilon_floor:.3e} set by the marginals"
        ));
    }
    if let Some(delta) = delta_claim {
        if delta < delta_floor {
            reasons.push(format!("claimed δ = {delta:.3e} is below the floor {delta_floor:.3e}"));
        }
        if delta < step3_sum - 1e-12 {
            reasons.push(format!(
                "claimed δ = {delta:.3e} is below the single-letter covertness sum {step3_sum:.3e}"
            ));
        }
    }
    Ok(ConverseProbe {
        step3_sum,
        trace_distance_sum,
        step2_value: trace_distance_sum.sqrt(),
        step2_bound: (2.0 * trace_distance_sum).sqrt(),
        ratio_constant,
        delta_floor,
        epsilon_floor,
        violation: !reasons.is_empty(),
        diagnostic: if reasons.is_empty() {
            "consistent".into()
        } else {
            reasons.join("; ")
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;

    fn phase_diag(phi: f64) -> CMatrix {
        let mut v = qmat::identity(2);
        v[(1, 1)] = C64::from_polar(1.0, phi);
        v
    }

    fn scenario(us: Vec<CMatrix>, e: KrausChannel) -> UnitaryScenario {
        let names = (0..us.len()).map(|i| format!("t{i}")).collect();
        UnitaryScenario::new(names, us, e, qmat::ket(2, 0)).unwrap()
    }

    #[test]
    fn orthogonalizer_examples() {
        let o = find_orthogonalizer(&qmat::diag(&[1.0, -1.0]), DEFAULT_M_MAX).unwrap();
        assert_eq!(o.m, 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((o.probe.dense() - CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)])).norm() < 1e-12);
        assert!(o.overlap < 1e-15);

        let o = find_orthogonalizer(&phase_diag(std::f64::consts::FRAC_PI_2), DEFAULT_M_MAX).unwrap();
        assert_eq!(o.m, 2);
        let want = CVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        assert!((o.probe.dense() - &want).norm() < 1e-12);
        // direct evaluation of ⟨ν|V^{⊗2}|ν⟩
        let v2 = qmat::tensor(&phase_diag(std::f64::consts::FRAC_PI_2), &phase_diag(std::f64::consts::FRAC_PI_2));
        assert!(want.dotc(&(v2 * &want)).norm() < 1e-15);

        let o = find_orthogonalizer(&phase_diag(std::f64::consts::FRAC_PI_4), DEFAULT_M_MAX).unwrap();
        assert_eq!(o.m, 4);

        assert_eq!(find_orthogonalizer(&qmat::identity(2), 8), Err(Error::IdentityUnitary));
        let global = qmat::identity(2).map(|z| z * C64::from_polar(1.0, 0.7));
        assert_eq!(find_orthogonalizer(&global, 8), Err(Error::IdentityUnitary));
        assert_eq!(find_orthogonalizer(&phase_diag(0.1), 5), Err(Error::MNotFound(5)));
    }

    #[test]
    fn three_point_probe() {
        // phases 0, 2π/3, 4π/3: no antipodal pair, needs three terms
        let w = std::f64::consts::TAU / 3.0;
        let mut v = CMatrix::zeros(3, 3);
        for k in 0..3 {
            v[(k, k)] = C64::from_polar(1.0, k as f64 * w);
        }
        let o = find_orthogonalizer(&v, 4).unwrap();
        assert_eq!(o.m, 1);
        assert_eq!(o.weights.len(), 3);
        for &x in &o.weights {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(o.overlap < 1e-12);
    }

    #[test]
    fn minimality_against_exhaustive_half_plane_test() {
        let mut rng = task_rng(9, 0);
        for _ in 0..20 {
            let u = qmat::random::unitary(2, &mut rng);
            let o = find_orthogonalizer(&u, DEFAULT_M_MAX).unwrap();
            let (ph, _) = unitary_eigen(&u);
            for mp in 1..o.m {
                let sums: Vec<f64> = multisets(2, mp)
                    .iter()
                    .map(|s| s.iter().map(|&i| ph[i]).sum())
                    .collect();
                assert!(!zero_in_hull(&sums));
            }
            assert!(o.overlap <= OVERLAP_TOL);
        }
    }

    #[test]
    fn perturbed_probe_overlap() {
        let p = ProbeState {
            local_dim: 2,
            sites: 1,
            terms: vec![
                (0.6f64.sqrt(), vec![qmat::ket(2, 0)]),
                (0.4f64.sqrt(), vec![qmat::ket(2, 1)]),
            ],
        };
        assert!((p.overlap(&qmat::diag(&[1.0, -1.0])) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn block_lengths() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), qmat::diag(&[1.0, -1.0])], e.clone());
        let b = build_block_strategy(&s, 7, DEFAULT_M_MAX).unwrap();
        assert_eq!((b.m, b.ell), (1, 7));

        // three parameters pairwise related by diag(1, −1)-type differences
        let x = qmat::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let z = qmat::diag(&[1.0, -1.0]);
        let mut y = CMatrix::zeros(2, 2);
        y[(0, 1)] = c(0.0, -1.0);
        y[(1, 0)] = c(0.0, 1.0);
        let s3 = scenario(vec![x, y, z], e.clone());
        let b = build_block_strategy(&s3, 5, DEFAULT_M_MAX).unwrap();
        assert_eq!(b.m, 3);
        assert!(strategy_zero_error_check(&b, &s3).iter().all(|o| o.overlap <= OVERLAP_TOL));

        let s4 = scenario(vec![qmat::identity(2), phase_diag(std::f64::consts::FRAC_PI_4)], e.clone());
        assert_eq!(build_block_strategy(&s4, 8, DEFAULT_M_MAX).unwrap().m, 4);
        assert_eq!(
            build_block_strategy(&s4, 3, DEFAULT_M_MAX),
            Err(Error::BlockTooLong { m: 4, n: 3 })
        );
        let same = scenario(vec![qmat::identity(2), qmat::identity(2)], e);
        assert!(matches!(build_block_strategy(&same, 4, 8), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn support_assumption_is_checked() {
        // amplitude damping with γ = 0 is the identity: E(|0⟩⟨0|) is pure
        let e = KrausChannel::identity(2);
        let s = scenario(vec![qmat::identity(2), qmat::diag(&[1.0, -1.0])], e);
        assert!(matches!(build_block_strategy(&s, 4, 8), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn swapped_pair_order_keeps_overlaps() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), phase_diag(1.0), phase_diag(2.5)], e);
        let b = build_block_strategy(&s, 20, DEFAULT_M_MAX).unwrap();
        let mut r = b.clone();
        r.pairs.reverse();
        let o1 = strategy_zero_error_check(&b, &s);
        let o2 = strategy_zero_error_check(&r, &s);
        for (x, y) in o1.iter().zip(&o2) {
            assert!((x.overlap - y.overlap).abs() < 1e-15);
            assert!(x.overlap <= OVERLAP_TOL);
        }
    }

    #[test]
    fn degenerate_probe_has_zero_chi2() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let sigma = e.apply_state(&DensityOperator::basis(2, 0));
        let p = ProbeState::product(vec![qmat::ket(2, 0); 3]);
        assert!(probe_chi2(&p, &e, &sigma) < 1e-14);
    }

    #[test]
    fn factorised_chi2_matches_dense() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let sigma = e.apply_state(&DensityOperator::basis(2, 0));
        let o = find_orthogonalizer(&phase_diag(std::f64::consts::FRAC_PI_4), 8).unwrap();
        let dense = DensityOperator::new_unchecked(o.probe.channel_output(&e));
        let s4 = DensityOperator::new_unchecked(qmat::tensor_all(std::iter::repeat_n(sigma.matrix(), 4)));
        let want = divergence::chi2(&dense, &s4).unwrap();
        assert!((probe_chi2(&o.probe, &e, &sigma) - want).abs() < 1e-10);
    }

    #[test]
    fn exact_below_certificate_and_coarse_chain() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), phase_diag(std::f64::consts::FRAC_PI_2)], e);
        for n in [4, 6] {
            let b = build_block_strategy(&s, n, DEFAULT_M_MAX).unwrap();
            let cert = covertness_certificate(&b, &s).unwrap();
            let exact = cert.exact.unwrap();
            assert!(exact <= cert.chi2_bound + 1e-12, "{exact} > {}", cert.chi2_bound);
            let coarse_chain = b.m as f64 / cert.lambda_min.powi(b.m as i32) * (n as f64 / (n - b.m) as f64);
            assert!(exact * n as f64 <= coarse_chain);
        }
    }

    #[test]
    fn exact_matches_dense_construction() {
        let e = KrausChannel::amplitude_damping(0.3).unwrap();
        let e = e.then(&KrausChannel::depolarizing(0.4).unwrap()).unwrap();
        let s = scenario(vec![qmat::identity(2), phase_diag(std::f64::consts::FRAC_PI_2)], e.clone());
        let b = build_block_strategy(&s, 5, DEFAULT_M_MAX).unwrap();
        let fast = exact_covertness_unitary(&b, &s, 4096).unwrap();
        // dense oracle: build φ on A^5 and push every factor through E
        let nu = b.probe().dense();
        let zero = qmat::ket(2, 0);
        let mut phi = CMatrix::zeros(32, 32);
        for i in 0..b.ell {
            let v = qmat::tensor_vectors(
                std::iter::repeat_n(&zero, i * b.m)
                    .chain(std::iter::once(&nu))
                    .chain(std::iter::repeat_n(&zero, 5 - (i + 1) * b.m)),
            );
            phi += qmat::outer(&v).scale(1.0 / b.ell as f64);
        }
        let out = DensityOperator::new_unchecked(qmat::symmetrize(&e.apply_tensor_power(&phi, 5).unwrap()));
        let sigma = s.innocent_output();
        let sn = DensityOperator::new_unchecked(qmat::tensor_all(std::iter::repeat_n(sigma.matrix(), 5)));
        let want = divergence::rel_entropy(&out, &sn).unwrap();
        assert!((fast - want).abs() < 1e-10, "{fast} vs {want}");
    }

    #[test]
    fn zero_error_on_global_states() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), phase_diag(std::f64::consts::FRAC_PI_2)], e);
        let b = build_block_strategy(&s, 6, DEFAULT_M_MAX).unwrap();
        assert!(zero_error_pgm(&b, &s).unwrap().error <= 1e-9);
    }

    #[test]
    fn converse_examples() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), qmat::diag(&[1.0, -1.0])], e.clone());
        let zero = DensityOperator::basis(2, 0);
        let c0 = converse_probes(&vec![zero.clone(); 4], &s, 0.1, None, 0).unwrap();
        assert_eq!(c0.step3_sum, 0.0);
        assert_eq!(c0.step2_value, 0.0);
        let one = DensityOperator::basis(2, 1);
        let c1 = converse_probes(&[zero.clone(), one.clone()], &s, 0.1, None, 0).unwrap();
        let want = divergence::rel_entropy(&e.apply_state(&one), &e.apply_state(&zero)).unwrap();
        assert!((c1.step3_sum - want).abs() < 1e-12);
        assert!(c1.ratio_constant.is_finite());
        // claiming ε = 0 with δ far below the floor is contradictory
        let c2 = converse_probes(&[zero.clone(), one], &s, 0.0, Some(1e-9), 0).unwrap();
        assert!(c2.violation);
    }

    #[test]
    fn step3_sum_below_exact_product_and_entangled() {
        let e = KrausChannel::depolarizing(0.5).unwrap();
        let s = scenario(vec![qmat::identity(2), qmat::diag(&[1.0, -1.0])], e.clone());
        let sigma = s.innocent_output();
        let s2 = DensityOperator::new_unchecked(qmat::tensor(sigma.matrix(), sigma.matrix()));
        let mut rng = task_rng(10, 0);
        for _ in 0..10 {
            let phi = qmat::random::density(4, 2, &mut rng);
            let margs: Vec<DensityOperator> = (0..2)
                .map(|q| DensityOperator::new_unchecked(qmat::partial_trace(phi.matrix(), &[2, 2], &[q]).unwrap()))
                .collect();
            let probe = converse_probes(&margs, &s, 0.1, None, 0).unwrap();
            let out = DensityOperator::new_unchecked(qmat::symmetrize(&e.apply_tensor_power(phi.matrix(), 2).unwrap()));
            let exact = divergence::rel_entropy(&out, &s2).unwrap();
            assert!(probe.step3_sum <= exact + 1e-12);
            // product inputs give equality
            let prod = DensityOperator::new_unchecked(qmat::tensor(margs[0].matrix(), margs[1].matrix()));
            let out = DensityOperator::new_unchecked(qmat::symmetrize(&e.apply_tensor_power(prod.matrix(), 2).unwrap()));
            let exact = divergence::rel_entropy(&out, &s2).unwrap();
            assert!((probe.step3_sum - exact).abs() < 1e-10);
        }
    }
}
