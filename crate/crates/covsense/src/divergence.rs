//! Scalar divergences between states and the Chernoff-type exponents built on
//! them. Natural logarithms throughout; +∞ is returned explicitly (never via
//! overflow) when supports make a quantity infinite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::optim::maximize_unit_interval;
use crate::qmat::{CMatrix, DensityOperator, ZERO_EIGENVALUE};
use crate::scenario::CqScenario;
use crate::{Error, Result};

/// Squared overlap with ker σ above which supp ρ ⊄ supp σ.
pub const SUPPORT_OVERLAP_TOL: f64 = 1e-10;
/// Total support overlap at or below which two states count as orthogonal.
pub const ORTHOGONAL_OVERLAP_TOL: f64 = 1e-24;
/// Search tolerance in s for the Chernoff maximisation.
pub const CHERNOFF_S_TOL: f64 = 1e-10;

fn same_dim(rho: &DensityOperator, sigma: &DensityOperator) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "states of dimension {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// W[a][b] = |⟨e_a|f_b⟩|² for the eigenbases of ρ and σ.
fn overlap_weights(rho: &DensityOperator, sigma: &DensityOperator) -> DMatrix<f64> {
    let e = &rho.eigensystem().eigenvectors;
    let f = &sigma.eigensystem().eigenvectors;
    (e.adjoint() * f).map(|z| z.norm_sqr())
}

/// H_b(x) in nats, with H_b(0) = H_b(1) = 0.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
}

/// D(ρ‖σ) = tr ρ(log ρ − log σ).
pub fn rel_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    let lam = rho.spectrum();
    let mu = sigma.spectrum();
    let w = overlap_weights(rho, sigma);
    let d = lam.len();
    let mut value = 0.0;
    for a in 0..d {
        if lam[a] <= ZERO_EIGENVALUE {
            continue;
        }
        let in_kernel: f64 = (0..d).filter(|&b| mu[b] <= ZERO_EIGENVALUE).map(|b| w[(a, b)]).sum();
        if in_kernel > SUPPORT_OVERLAP_TOL {
            return Ok(f64::INFINITY);
        }
        let cross: f64 = (0..d)
            .filter(|&b| mu[b] > ZERO_EIGENVALUE)
            .map(|b| w[(a, b)] * mu[b].ln())
            .sum();
        value += lam[a] * (lam[a].ln() - cross);
    }
    Ok(value.max(0.0))
}

/// D(ρ‖σ_1 ⊗ … ⊗ σ_n) using only the entropy of ρ and its one-site
/// marginals; `marginal_cross[i]` must be tr(ρ_i log σ_i). Requires every
/// factor to be full rank.
pub(crate) fn rel_entropy_to_product(rho: &DensityOperator, marginal_cross: f64) -> f64 {
    (-rho.entropy() - marginal_cross).max(0.0)
}

/// χ²(ρ‖σ) = tr(ρ² σ⁻¹) − 1 with σ⁻¹ the inverse on its support.
pub fn chi2(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    let es = sigma.eigensystem();
    let mu = &es.eigenvalues;
    let f = &es.eigenvectors;
    let r = f.adjoint() * rho.matrix() * f;
    let d = mu.len();
    let mut leak = 0.0;
    let mut value = 0.0;
    for b in 0..d {
        let col: f64 = (0..d).map(|a| r[(a, b)].norm_sqr()).sum();
        if mu[b] <= ZERO_EIGENVALUE {
            leak += r[(b, b)].re.abs();
        } else {
            value += col / mu[b];
        }
    }
    if leak > SUPPORT_OVERLAP_TOL {
        return Err(Error::SupportViolation(format!(
            "χ²: ρ has weight {leak:.3e} outside supp σ"
        )));
    }
    Ok((value - 1.0).max(0.0))
}

/// Spectral coefficients of η for a full-rank σ: the eigenbasis F of σ and
/// the matrix c[a][b] equal to 1/λ within a cluster and the divided
/// difference of log across clusters.
#[derive(Clone, Debug)]
pub struct EtaForm {
    pub basis: CMatrix,
    pub coeff: DMatrix<f64>,
}

impl EtaForm {
    pub fn new(sigma: &DensityOperator) -> Result<Self> {
        let es = sigma.eigensystem();
        if es.eigenvalues[0] <= ZERO_EIGENVALUE {
            return Err(Error::SupportViolation(
                "η needs a full-rank reference state".into(),
            ));
        }
        let cl = es.cluster_of();
        let vals: Vec<f64> = (0..es.nu()).map(|k| es.cluster_value(k)).collect();
        let d = es.dim();
        let coeff = DMatrix::from_fn(d, d, |a, b| {
            let (ka, kb) = (cl[a], cl[b]);
            if ka == kb {
                1.0 / vals[ka]
            } else {
                (vals[ka].ln() - vals[kb].ln()) / (vals[ka] - vals[kb])
            }
        });
        Ok(Self {
            basis: es.eigenvectors.clone(),
            coeff,
        })
    }

    /// Δ rotated into the eigenbasis of σ.
    pub fn rotate(&self, delta: &CMatrix) -> CMatrix {
        self.basis.adjoint() * delta * &self.basis
    }

    /// Σ_ab c_ab Re(x_ab conj(y_ab)) for rotated differences x, y.
    pub fn bilinear(&self, x: &CMatrix, y: &CMatrix) -> f64 {
        let d = self.coeff.nrows();
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                acc += self.coeff[(a, b)] * (x[(a, b)] * y[(a, b)].conj()).re;
            }
        }
        acc
    }
}

/// η(ρ‖σ): second-order coefficient of D(αρ + (1−α)σ ‖ σ) ≈ α²η/2.
pub fn eta(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    let form = EtaForm::new(sigma)?;
    let x = form.rotate(&(rho.matrix() - sigma.matrix()));
    Ok(form.bilinear(&x, &x).max(0.0))
}

/// F(ρ, σ) = ‖√ρ √σ‖₁².
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    let a = crate::qmat::mat_power(rho, 0.5);
    let b = crate::qmat::mat_power(sigma, 0.5);
    let s: f64 = (a * b).singular_values().iter().sum();
    Ok(s * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffResult {
    /// Nats; `f64::INFINITY` for orthogonal supports.
    pub value: f64,
    pub s_star: f64,
    pub curve_samples: Option<Vec<(f64, f64)>>,
}

/// Precomputed spectral data for s ↦ tr(ρ^s σ^(1−s)).
#[derive(Clone, Debug)]
pub struct ChernoffKernel {
    /// (log λ_a, log μ_b, |⟨e_a|f_b⟩|²) over pairs inside both supports.
    terms: Vec<(f64, f64, f64)>,
    orthogonal: bool,
    identical: bool,
}

impl ChernoffKernel {
    pub fn new(rho: &DensityOperator, sigma: &DensityOperator) -> Result<Self> {
        same_dim(rho, sigma)?;
        let identical = rho.matrix() == sigma.matrix();
        let lam = rho.spectrum();
        let mu = sigma.spectrum();
        let w = overlap_weights(rho, sigma);
        let d = lam.len();
        let mut terms = Vec::new();
        let mut total = 0.0;
        for a in 0..d {
            if lam[a] <= ZERO_EIGENVALUE {
                continue;
            }
            for b in 0..d {
                if mu[b] <= ZERO_EIGENVALUE || w[(a, b)] == 0.0 {
                    continue;
                }
                total += w[(a, b)];
                terms.push((lam[a].ln(), mu[b].ln(), w[(a, b)]));
            }
        }
        Ok(Self {
            terms,
            orthogonal: total <= ORTHOGONAL_OVERLAP_TOL,
            identical,
        })
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn is_identical(&self) -> bool {
        self.identical
    }

    /// tr(ρ^s σ^(1−s)), with ρ^0 the support projector.
    pub fn trace_power(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(la, lb, w)| w * (s * la + (1.0 - s) * lb).exp())
            .sum()
    }

    /// −log tr(ρ^s σ^(1−s)); +∞ for orthogonal supports.
    pub fn objective(&self, s: f64) -> f64 {
        if self.orthogonal {
            return f64::INFINITY;
        }
        if self.identical {
            return 0.0;
        }
        -self.trace_power(s).ln()
    }
}

/// sup_s Σ_k w_k · objective_k(s) for one common s.
pub fn weighted_chernoff(parts: &[(f64, &ChernoffKernel)]) -> ChernoffResult {
    let active: Vec<(f64, &ChernoffKernel)> = parts
        .iter()
        .copied()
        .filter(|(w, k)| *w > 0.0 && !k.is_identical())
        .collect();
    if active.iter().any(|(_, k)| k.is_orthogonal()) {
        return ChernoffResult {
            value: f64::INFINITY,
            s_star: 0.5,
            curve_samples: None,
        };
    }
    if active.is_empty() {
        return ChernoffResult {
            value: 0.0,
            s_star: 0.5,
            curve_samples: None,
        };
    }
    let f = |s: f64| active.iter().map(|(w, k)| w * k.objective(s)).sum::<f64>();
    let (s_star, value) = maximize_unit_interval(f, CHERNOFF_S_TOL);
    ChernoffResult {
        value: value.max(0.0),
        s_star,
        curve_samples: None,
    }
}

/// Chernoff information sup_s −log tr(ρ^s σ^(1−s)).
pub fn chernoff(rho: &DensityOperator, sigma: &DensityOperator) -> Result<ChernoffResult> {
    let k = ChernoffKernel::new(rho, sigma)?;
    Ok(weighted_chernoff(&[(1.0, &k)]))
}

/// As [`chernoff`], also sampling the objective at `samples` evenly spaced s.
pub fn chernoff_with_curve(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    samples: usize,
) -> Result<ChernoffResult> {
    let k = ChernoffKernel::new(rho, sigma)?;
    let mut r = weighted_chernoff(&[(1.0, &k)]);
    let denom = samples.saturating_sub(1).max(1) as f64;
    r.curve_samples = Some(
        (0..samples)
            .map(|i| {
                let s = i as f64 / denom;
                (s, k.objective(s))
            })
            .collect(),
    );
    Ok(r)
}

/// Conditional Chernoff information D_cc(θ, θ′ | P) of the Bob states.
/// `p` is a PMF over the whole alphabet (index 0 is the innocent symbol).
pub fn conditional_chernoff(
    theta: usize,
    theta_prime: usize,
    p: &[f64],
    scen: &CqScenario,
) -> Result<ChernoffResult> {
    for &t in &[theta, theta_prime] {
        if t >= scen.n_params() {
            return Err(Error::UnknownParameter(t));
        }
    }
    if p.len() != scen.n_symbols() {
        return Err(Error::UnknownSymbol(format!(
            "distribution has {} entries, alphabet has {}",
            p.len(),
            scen.n_symbols()
        )));
    }
    check_pmf(p)?;
    let kernels: Vec<(f64, ChernoffKernel)> = p
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(u, &w)| Ok((w, ChernoffKernel::new(scen.bob(theta, u), scen.bob(theta_prime, u))?)))
        .collect::<Result<_>>()?;
    let parts: Vec<(f64, &ChernoffKernel)> = kernels.iter().map(|(w, k)| (*w, k)).collect();
    Ok(weighted_chernoff(&parts))
}

pub(crate) fn check_pmf(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= -1e-12) || !x.is_finite()) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("not a probability vector: {p:?}")));
    }
    Ok(())
}

/// ε·log(dim_B/λ_min²)·n + H_b(ε): the relative-entropy continuity bound for
/// n-letter states against a product reference.
pub fn continuity_bound(epsilon: f64, n: usize, dim_b: usize, lambda_min: f64) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    epsilon * (dim_b as f64 / (lambda_min * lambda_min)).ln() * n as f64 + binary_entropy(epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub alpha: f64,
    /// D(αρ₁ + (1−α)ρ₀ ‖ ρ₀)
    pub divergence: f64,
    /// α²η(ρ₁‖ρ₀)/2
    pub second_order: f64,
    pub residual: f64,
}

/// Compare D(αρ₁ + (1−α)ρ₀ ‖ ρ₀) with its second-order term for each α.
pub fn expansion_check(
    rho1: &DensityOperator,
    rho0: &DensityOperator,
    alphas: &[f64],
) -> Result<Vec<ExpansionRow>> {
    same_dim(rho1, rho0)?;
    let e = eta(rho1, rho0)?;
    alphas
        .iter()
        .map(|&alpha| {
            if !(0.0..=0.5).contains(&alpha) {
                return Err(Error::InvalidInput(format!("α = {alpha} outside [0, 1/2]")));
            }
            let second_order = 0.5 * alpha * alpha * e;
            let divergence = if alpha == 0.0 {
                0.0
            } else {
                let mix = DensityOperator::mixture(&[alpha, 1.0 - alpha], &[rho1, rho0])?;
                rel_entropy(&mix, rho0)?
            };
            Ok(ExpansionRow {
                alpha,
                divergence,
                second_order,
                residual: (divergence - second_order).abs(),
            })
        })
        .collect()
}

/// A joint PMF on eigen-index pairs (y, y′), stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsEmbedding {
    pub dim: usize,
    pub probs: Vec<f64>,
}

impl NsEmbedding {
    pub fn get(&self, y: usize, yp: usize) -> f64 {
        self.probs[y * self.dim + yp]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// ‖q − q′‖₁
    pub fn l1_distance(&self, other: &NsEmbedding) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Nussbaum–Szkoła pair: q(y, y′) = p(y)|⟨e_y|f_y′⟩|² and
/// q′(y, y′) = μ(y′)|⟨e_y|f_y′⟩|² on the same index grid.
pub fn ns_embed(rho: &DensityOperator, sigma: &DensityOperator) -> Result<(NsEmbedding, NsEmbedding)> {
    same_dim(rho, sigma)?;
    let d = rho.dim();
    let lam = rho.spectrum();
    let mu = sigma.spectrum();
    let w = overlap_weights(rho, sigma);
    let mut q = Vec::with_capacity(d * d);
    let mut qp = Vec::with_capacity(d * d);
    for y in 0..d {
        for yp in 0..d {
            q.push(lam[y] * w[(y, yp)]);
            qp.push(mu[yp] * w[(y, yp)]);
        }
    }
    Ok((NsEmbedding { dim: d, probs: q }, NsEmbedding { dim: d, probs: qp }))
}
