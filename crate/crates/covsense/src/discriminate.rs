//! Parameter estimation from Bob's outputs: Helstrom and pretty-good
//! measurements, exact strategy errors, the union-type error bound, and the
//! Monte-Carlo exponent regression for classical scenarios.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covert_exponent::{build_input_law, design_pmf, ConstrainedInputLaw};
use crate::divergence::{self, weighted_chernoff, ChernoffKernel};
use crate::exec::Execution;
use crate::qmat::{self, eig_unchecked, CMatrix, DensityOperator, C64, DEFAULT_CLUSTER_TOL, ZERO_EIGENVALUE};
use crate::rng::task_rng;
use crate::scenario::{zero_equivalent_pairs, CqScenario, DEFAULT_TOL};
use crate::types::{ln_factorials, ln_multinomial};
use crate::{Error, Result};

pub const POVM_PSD_TOL: f64 = 1e-9;
pub const POVM_COMPLETENESS_TOL: f64 = 1e-8;
/// Relative eigenvalue cutoff for the pseudo-inverse square root in the PGM.
pub const PGM_CUTOFF: f64 = 1e-12;
pub const MAX_SEQUENCES: u128 = 100_000;
pub const MAX_PRODUCT_DIM: usize = 4096;
pub const COMMUTATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    pub elements: Vec<CMatrix>,
}

impl Povm {
    /// Validate PSD elements summing to the identity.
    pub fn new(elements: Vec<CMatrix>) -> Result<Self> {
        let p = Self { elements };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let d = self
            .elements
            .first()
            .ok_or_else(|| Error::InvalidInput("empty POVM".into()))?
            .nrows();
        let mut total = CMatrix::zeros(d, d);
        for e in &self.elements {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::DimensionMismatch("POVM elements differ in shape".into()));
            }
            let es = qmat::eig_hermitian(e, DEFAULT_CLUSTER_TOL)?;
            if es.eigenvalues.first().is_some_and(|&x| x < -POVM_PSD_TOL) {
                return Err(Error::NotDensity(format!(
                    "POVM element has eigenvalue {:.3e}",
                    es.eigenvalues[0]
                )));
            }
            total += e;
        }
        let defect = qmat::max_abs(&(total - qmat::identity(d)));
        if defect > POVM_COMPLETENESS_TOL {
            return Err(Error::NotDensity(format!("POVM elements sum to I only within {defect:.3e}")));
        }
        Ok(())
    }

    /// tr(Γ_θ ρ) for every outcome θ.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| qmat::trace_product_re(e, rho.matrix()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Helstrom,
    Pgm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    /// max_θ per_theta_error
    pub error: f64,
    pub per_theta_error: Vec<f64>,
    pub method: Method,
}

impl DiscriminationResult {
    fn from_errors(per_theta_error: Vec<f64>, method: Method) -> Self {
        let per_theta_error: Vec<f64> = per_theta_error.into_iter().map(|e| e.clamp(0.0, 1.0)).collect();
        Self {
            error: per_theta_error.iter().copied().fold(0.0, f64::max),
            per_theta_error,
            method,
        }
    }

    /// Error under the uniform prior.
    pub fn average(&self) -> f64 {
        self.per_theta_error.iter().sum::<f64>() / self.per_theta_error.len() as f64
    }
}

/// Projector onto the positive part of ρ0 − ρ1; the null space of the
/// difference is split evenly between the two outcomes.
pub fn helstrom(rho0: &DensityOperator, rho1: &DensityOperator) -> Result<(Povm, DiscriminationResult)> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rho0.dim(), rho1.dim())));
    }
    let diff = rho0.matrix() - rho1.matrix();
    let es = eig_unchecked(&diff, DEFAULT_CLUSTER_TOL);
    let g0 = es.map(|x| {
        if x > ZERO_EIGENVALUE {
            1.0
        } else if x < -ZERO_EIGENVALUE {
            0.0
        } else {
            0.5
        }
    });
    let g1 = qmat::identity(rho0.dim()) - &g0;
    let e0 = qmat::trace_product_re(&g1, rho0.matrix());
    let e1 = qmat::trace_product_re(&g0, rho1.matrix());
    Ok((
        Povm { elements: vec![g0, g1] },
        DiscriminationResult::from_errors(vec![e0, e1], Method::Helstrom),
    ))
}

/// Pretty-good measurement Γ_θ = S^(−1/2) ρ_θ S^(−1/2), S = Σ_θ ρ_θ.
pub fn pgm(states: &[&DensityOperator]) -> Result<(Povm, DiscriminationResult)> {
    if states.len() < 2 {
        return Err(Error::InvalidInput("need at least two states".into()));
    }
    let d = states[0].dim();
    if states.iter().any(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch("states differ in dimension".into()));
    }
    let k = states.len();
    let mut s = CMatrix::zeros(d, d);
    for st in states {
        s += st.matrix();
    }
    let es = eig_unchecked(&s, DEFAULT_CLUSTER_TOL);
    let cutoff = PGM_CUTOFF * es.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let inv_sqrt = es.map(|x| if x > cutoff { 1.0 / x.sqrt() } else { 0.0 });
    let outside = es.map(|x| if x > cutoff { 0.0 } else { 1.0 / k as f64 });
    let elements: Vec<CMatrix> = states
        .iter()
        .map(|st| qmat::symmetrize(&(&inv_sqrt * st.matrix() * &inv_sqrt + &outside)))
        .collect();
    let errors: Vec<f64> = states
        .iter()
        .zip(&elements)
        .map(|(st, e)| 1.0 - qmat::trace_product_re(e, st.matrix()))
        .collect();
    Ok((Povm { elements }, DiscriminationResult::from_errors(errors, Method::Pgm)))
}

/// 10(|Θ|−1)²·max_θ ν(ρ_θ)·Σ_{θ≠θ′} exp(−C(ρ_θ, ρ_θ′)).
pub fn lemma6_bound(states: &[&DensityOperator]) -> Result<f64> {
    if states.len() < 2 {
        return Err(Error::InvalidInput("need at least two states".into()));
    }
    let k = states.len();
    let nu = states.iter().map(|s| s.nu()).max().unwrap_or(1) as f64;
    let mut sum = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            let c = divergence::chernoff(states[a], states[b])?.value;
            sum += 2.0 * (-c).exp();
        }
    }
    Ok(10.0 * ((k - 1) * (k - 1)) as f64 * nu * sum)
}

/// The same bound for product states ⊗_i ρ_θ^{u_i} of one type class,
/// with the Chernoff exponent n·D_cc(θ, θ′ | Q) and ν of the product.
fn lemma6_bound_for_type(scen: &CqScenario, counts: &[usize]) -> Result<f64> {
    let k = scen.n_params();
    let nu = (0..k)
        .map(|t| product_nu(scen, t, counts))
        .max()
        .unwrap_or(1) as f64;
    let mut sum = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            let kernels = (0..scen.n_symbols())
                .map(|u| ChernoffKernel::new(scen.bob(a, u), scen.bob(b, u)))
                .collect::<Result<Vec<_>>>()?;
            let parts: Vec<(f64, &ChernoffKernel)> =
                counts.iter().map(|&c| c as f64).zip(kernels.iter()).collect();
            sum += 2.0 * (-weighted_chernoff(&parts).value).exp();
        }
    }
    Ok(10.0 * ((k - 1) * (k - 1)) as f64 * nu * sum)
}

/// Distinct eigenvalues of ⊗_u (ρ_θ^u)^{⊗k_u}, merged at relative 1e-8.
fn product_nu(scen: &CqScenario, theta: usize, counts: &[usize]) -> usize {
    let mut logs: Vec<f64> = vec![0.0];
    let mut has_zero = false;
    for (u, &c) in counts.iter().enumerate() {
        let spec = scen.bob(theta, u).spectrum();
        if c > 0 && spec.iter().any(|&x| x <= ZERO_EIGENVALUE) {
            has_zero = true;
        }
        let positive: Vec<f64> = spec.iter().filter(|&&x| x > ZERO_EIGENVALUE).map(|x| x.ln()).collect();
        for _ in 0..c {
            let mut next: Vec<f64> = logs
                .iter()
                .flat_map(|a| positive.iter().map(move |b| a + b))
                .collect();
            next.sort_by(f64::total_cmp);
            next.dedup_by(|a, b| (*a - *b).abs() <= DEFAULT_CLUSTER_TOL * (1.0 + b.abs()));
            logs = next;
        }
    }
    logs.len() + usize::from(has_zero)
}

/// Number of input sequences in the law's type ball.
pub fn sequence_count(law: &ConstrainedInputLaw) -> u128 {
    let lnf = ln_factorials(law.n);
    law.types_q
        .iter()
        .map(|t| ln_multinomial(&t.counts, &lnf).exp().round() as u128)
        .sum()
}

fn check_enumerable(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<()> {
    if law.p.len() != scen.n_symbols() {
        return Err(Error::DimensionMismatch("law and scenario alphabets differ".into()));
    }
    let seqs = sequence_count(law);
    if seqs > MAX_SEQUENCES {
        return Err(Error::ScaleExceeded(format!("{seqs} input sequences (limit {MAX_SEQUENCES})")));
    }
    let dim = (scen.dim_bob() as u128).checked_pow(law.n as u32).unwrap_or(u128::MAX);
    if dim > MAX_PRODUCT_DIM as u128 {
        return Err(Error::ScaleExceeded(format!(
            "receiver dimension {}^{} exceeds {MAX_PRODUCT_DIM}",
            scen.dim_bob(),
            law.n
        )));
    }
    Ok(())
}

fn representative(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(u, &k)| std::iter::repeat_n(u, k))
        .collect()
}

/// Per-θ errors of the measurement used for one input sequence: Helstrom for
/// two parameters, the PGM otherwise. Diagonal tables skip the matrices.
fn sequence_errors(scen: &CqScenario, seq: &[usize], diagonal: bool) -> Result<Vec<f64>> {
    let k = scen.n_params();
    if diagonal {
        let probs: Vec<Vec<f64>> = (0..k)
            .map(|t| {
                let mut v = vec![1.0];
                for &u in seq {
                    let m = scen.bob(t, u).matrix();
                    let d = m.nrows();
                    v = v.iter().flat_map(|a| (0..d).map(move |x| a * m[(x, x)].re)).collect();
                }
                v
            })
            .collect();
        return Ok(diagonal_errors(&probs, k == 2));
    }
    if scen.dim_bob() == 2 {
        let mut counts = vec![0usize; scen.n_symbols()];
        for &u in seq {
            counts[u] += 1;
        }
        return Ok(qubit_block_errors(scen, &counts));
    }
    dense_sequence_errors(scen, seq)
}

fn dense_sequence_errors(scen: &CqScenario, seq: &[usize]) -> Result<Vec<f64>> {
    let k = scen.n_params();
    let states: Vec<DensityOperator> = (0..k)
        .map(|t| {
            DensityOperator::new_unchecked(qmat::tensor_all(seq.iter().map(|&u| scen.bob(t, u).matrix())))
        })
        .collect();
    let refs: Vec<&DensityOperator> = states.iter().collect();
    if k == 2 {
        Ok(helstrom(refs[0], refs[1])?.1.per_theta_error)
    } else {
        Ok(pgm(&refs)?.1.per_theta_error)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A^{⊗d} restricted to the symmetric subspace, in the Dicke basis.
fn symmetric_power(a: &CMatrix, d: usize) -> CMatrix {
    // column l is the image of x^{d−l} y^l, i.e. (a00 x + a10 y)^{d−l} (a01 x + a11 y)^l
    let power = |p: usize, x: C64, y: C64| -> Vec<C64> {
        (0..=p)
            .map(|j| x.powu((p - j) as u32) * y.powu(j as u32) * binomial(p, j))
            .collect()
    };
    let mut out = CMatrix::zeros(d + 1, d + 1);
    for l in 0..=d {
        let f = power(d - l, a[(0, 0)], a[(1, 0)]);
        let g = power(l, a[(0, 1)], a[(1, 1)]);
        for (i, fi) in f.iter().enumerate() {
            for (j, gj) in g.iter().enumerate() {
                out[(i + j, l)] += fi * gj;
            }
        }
    }
    for i in 0..=d {
        for l in 0..=d {
            out[(i, l)] *= (binomial(d, l) / binomial(d, i)).sqrt();
        }
    }
    out
}

/// Per-θ errors for qubit product states via Schur–Weyl duality: ρ^{⊗k}
/// splits into blocks det(ρ)^r·Sym^{k−2r}(ρ) with multiplicity
/// C(k, r) − C(k, r−1), and both measurements split along the blocks.
fn qubit_block_errors(scen: &CqScenario, counts: &[usize]) -> Vec<f64> {
    let k = scen.n_params();
    let used: Vec<(usize, usize)> = counts.iter().copied().enumerate().filter(|&(_, c)| c > 0).collect();
    // per used symbol: list of (multiplicity, per-θ block)
    let irreps: Vec<Vec<(f64, Vec<CMatrix>)>> = used
        .iter()
        .map(|&(u, c)| {
            (0..=c / 2)
                .map(|r| {
                    let mult = binomial(c, r) - if r > 0 { binomial(c, r - 1) } else { 0.0 };
                    let blocks = (0..k)
                        .map(|t| {
                            let m = scen.bob(t, u).matrix();
                            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
                            symmetric_power(m, c - 2 * r) * C64::new(det.powi(r as i32), 0.0)
                        })
                        .collect();
                    (mult, blocks)
                })
                .collect()
        })
        .collect();
    let mut blocks: Vec<(f64, Vec<CMatrix>)> = vec![(1.0, vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0)); k])];
    for opts in &irreps {
        blocks = blocks
            .iter()
            .flat_map(|(m0, b0)| {
                opts.iter().map(move |(m1, b1)| {
                    (m0 * m1, b0.iter().zip(b1).map(|(x, y)| qmat::tensor(x, y)).collect())
                })
            })
            .collect();
    }
    let mut err = vec![0.0; k];
    if k == 2 {
        for (mult, b) in &blocks {
            let es = eig_unchecked(&(&b[0] - &b[1]), DEFAULT_CLUSTER_TOL);
            let g0 = es.map(|x| {
                if x > ZERO_EIGENVALUE {
                    1.0
                } else if x < -ZERO_EIGENVALUE {
                    0.0
                } else {
                    0.5
                }
            });
            let g1 = qmat::identity(g0.nrows()) - &g0;
            err[0] += mult * qmat::trace_product_re(&g1, &b[0]);
            err[1] += mult * qmat::trace_product_re(&g0, &b[1]);
        }
        return err;
    }
    let sums: Vec<_> = blocks
        .iter()
        .map(|(_, b)| {
            let mut s = b[0].clone();
            for x in &b[1..] {
                s += x;
            }
            eig_unchecked(&s, DEFAULT_CLUSTER_TOL)
        })
        .collect();
    let top = sums
        .iter()
        .filter_map(|es| es.eigenvalues.last().copied())
        .fold(0.0, f64::max);
    let cutoff = PGM_CUTOFF * top;
    for ((mult, b), es) in blocks.iter().zip(&sums) {
        let inv_sqrt = es.map(|x| if x > cutoff { 1.0 / x.sqrt() } else { 0.0 });
        let outside = es.map(|x| if x > cutoff { 0.0 } else { 1.0 / k as f64 });
        for t in 0..k {
            let g = &inv_sqrt * &b[t] * &inv_sqrt + &outside;
            err[t] += mult * (qmat::trace(&b[t]).re - qmat::trace_product_re(&g, &b[t]));
        }
    }
    err
}

/// Per-θ errors for commuting states given as outcome distributions.
/// Binary: likelihood ratio with ties split. Otherwise the PGM.
fn diagonal_errors(probs: &[Vec<f64>], binary: bool) -> Vec<f64> {
    let k = probs.len();
    let len = probs[0].len();
    let mut err = vec![0.0; k];
    for x in 0..len {
        if binary {
            let (a, b) = (probs[0][x], probs[1][x]);
            let diff = a - b;
            if diff > ZERO_EIGENVALUE {
                err[1] += b;
            } else if diff < -ZERO_EIGENVALUE {
                err[0] += a;
            } else {
                err[0] += 0.5 * a;
                err[1] += 0.5 * b;
            }
        } else {
            let s: f64 = (0..k).map(|t| probs[t][x]).sum();
            if s <= 0.0 {
                continue;
            }
            for t in 0..k {
                err[t] += probs[t][x] * (1.0 - probs[t][x] / s);
            }
        }
    }
    err
}

fn all_bob_diagonal(scen: &CqScenario) -> bool {
    (0..scen.n_params()).all(|t| (0..scen.n_symbols()).all(|u| scen.bob(t, u).is_diagonal(0.0)))
}

/// Per-θ error of the measurement used for one input sequence (Helstrom for
/// two parameters, PGM otherwise).
pub fn sequence_error(scen: &CqScenario, seq: &[usize]) -> Result<DiscriminationResult> {
    if scen.n_params() < 2 {
        return Err(Error::InvalidInput("need at least two parameters".into()));
    }
    if let Some(&u) = seq.iter().find(|&&u| u >= scen.n_symbols()) {
        return Err(Error::UnknownSymbol(format!("index {u}")));
    }
    let dense_dim = (scen.dim_bob() as u128).checked_pow(seq.len() as u32).unwrap_or(u128::MAX);
    let block_dim: u128 = if scen.dim_bob() == 2 {
        let mut counts = vec![0u128; scen.n_symbols()];
        for &u in seq {
            counts[u] += 1;
        }
        counts.iter().map(|c| c + 1).product()
    } else {
        u128::MAX
    };
    if dense_dim.min(block_dim) > MAX_PRODUCT_DIM as u128 {
        return Err(Error::ScaleExceeded(format!(
            "receiver dimension {}^{} exceeds {MAX_PRODUCT_DIM}",
            scen.dim_bob(),
            seq.len()
        )));
    }
    let diagonal = dense_dim <= MAX_PRODUCT_DIM as u128 && all_bob_diagonal(scen);
    let method = if scen.n_params() == 2 { Method::Helstrom } else { Method::Pgm };
    Ok(DiscriminationResult::from_errors(sequence_errors(scen, seq, diagonal)?, method))
}

/// Exact max-θ error of the type-ball strategy: the per-sequence optimal
/// binary (Helstrom) or pretty-good measurement averaged over P_U.
pub fn strategy_error_exact(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<DiscriminationResult> {
    strategy_error_exact_with(scen, law, Execution::default())
}

pub fn strategy_error_exact_with(
    scen: &CqScenario,
    law: &ConstrainedInputLaw,
    exec: Execution,
) -> Result<DiscriminationResult> {
    check_enumerable(scen, law)?;
    if scen.n_params() < 2 {
        return Err(Error::InvalidInput("need at least two parameters".into()));
    }
    let diagonal = all_bob_diagonal(scen);
    // every sequence of a type is a permutation of the representative, and
    // the error is invariant under permuting the tensor factors
    let per_type = exec.map_range(law.types_q.len(), |i| {
        sequence_errors(scen, &representative(&law.types_q[i].counts), diagonal)
    });
    let mut per_theta = vec![0.0; scen.n_params()];
    for (i, errs) in per_type.into_iter().enumerate() {
        let w = law.type_probability(i);
        for (acc, e) in per_theta.iter_mut().zip(errs?) {
            *acc += w * e;
        }
    }
    let method = if scen.n_params() == 2 { Method::Helstrom } else { Method::Pgm };
    Ok(DiscriminationResult::from_errors(per_theta, method))
}

/// E_{u ~ P_U}[bound of [`lemma6_bound`] for the product states of u].
pub fn lemma6_sequence_bound(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<f64> {
    if law.p.len() != scen.n_symbols() {
        return Err(Error::DimensionMismatch("law and scenario alphabets differ".into()));
    }
    let mut acc = 0.0;
    for i in 0..law.types_q.len() {
        acc += law.type_probability(i) * lemma6_bound_for_type(scen, &law.types_q[i].counts)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRecord {
    pub n: usize,
    pub alpha: f64,
    pub trials: usize,
    /// Monte-Carlo estimate of the max-θ error.
    pub empirical_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Slope of −log(error) against n·α, nats per unit.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub records: Vec<RegressionRecord>,
    pub fit: RegressionFit,
    /// One fit per α value, in schedule order.
    pub per_alpha: Vec<(f64, RegressionFit)>,
    /// min over zero-equivalent pairs of D_cc(θ, θ′ | P̄).
    pub reference_dcc: f64,
}

impl RegressionReport {
    /// Whitespace-separated columns with a header line.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("n alpha trials empirical_error ci_low ci_high\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {} {} {:.6e} {:.6e} {:.6e}",
                r.n, r.alpha, r.trials, r.empirical_error, r.ci_low, r.ci_high
            );
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct RegressionOptions {
    /// Type-ball radius multiplier.
    pub zeta: f64,
    pub execution: Execution,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            zeta: 0.5,
            execution: Execution::default(),
        }
    }
}

/// Outcome distributions of every Bob state in a common eigenbasis.
fn classical_tables(scen: &CqScenario, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    let all: Vec<&DensityOperator> = (0..scen.n_params())
        .flat_map(|t| (0..scen.n_symbols()).map(move |u| scen.bob(t, u)))
        .collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let c = qmat::commutator_norm(all[i].matrix(), all[j].matrix());
            if c > COMMUTATION_TOL {
                return Err(Error::NotClassical(format!("commutator norm {c:.3e}")));
            }
        }
    }
    // a generic combination of commuting Hermitian matrices has their joint
    // eigenbasis as its own
    let d = scen.dim_bob();
    let mut rng = task_rng(seed, u64::MAX);
    let mut h = CMatrix::zeros(d, d);
    for s in &all {
        h += s.matrix().scale(rng.random::<f64>() + 0.5);
    }
    let basis = eig_unchecked(&qmat::symmetrize(&h), DEFAULT_CLUSTER_TOL).eigenvectors;
    Ok((0..scen.n_params())
        .map(|t| {
            (0..scen.n_symbols())
                .map(|u| {
                    let r = basis.adjoint() * scen.bob(t, u).matrix() * &basis;
                    (0..d).map(|x| r[(x, x)].re.max(0.0)).collect()
                })
                .collect()
        })
        .collect())
}

const MAX_OUTPUT_PATTERNS: u128 = 20_000_000;

/// Exact per-θ maximum-likelihood errors given the input type, by
/// enumerating output count vectors of the informative symbols. Ties are
/// split evenly.
fn ml_errors_for_type(tables: &[Vec<Vec<f64>>], counts: &[usize], lnf: &[f64]) -> Result<Vec<f64>> {
    let k = tables.len();
    let informative: Vec<usize> = (0..counts.len())
        .filter(|&u| counts[u] > 0 && (1..k).any(|t| tables[t][u] != tables[0][u]))
        .collect();
    let d = tables[0][0].len();
    let patterns: u128 = informative
        .iter()
        .map(|&u| crate::types::composition_count(counts[u], d))
        .fold(1u128, |a, b| a.saturating_mul(b));
    if patterns > MAX_OUTPUT_PATTERNS {
        return Err(Error::ScaleExceeded(format!("{patterns} output patterns")));
    }
    let lnt: Vec<Vec<Vec<f64>>> = tables
        .iter()
        .map(|row| row.iter().map(|p| p.iter().map(|x| x.ln()).collect()).collect())
        .collect();
    // per informative symbol: list of (ln multinomial, per-θ ln likelihood)
    let factors: Vec<Vec<(f64, Vec<f64>)>> = informative
        .iter()
        .map(|&u| {
            crate::types::compositions(counts[u], d)
                .into_iter()
                .filter_map(|c| {
                    let ll: Vec<f64> = (0..k)
                        .map(|t| {
                            c.iter()
                                .enumerate()
                                .map(|(x, &m)| if m == 0 { 0.0 } else { m as f64 * lnt[t][u][x] })
                                .sum()
                        })
                        .collect();
                    if ll.iter().all(|&v| v == f64::NEG_INFINITY) {
                        None
                    } else {
                        Some((ln_multinomial(&c, lnf), ll))
                    }
                })
                .collect()
        })
        .collect();
    let mut err = vec![0.0; k];
    let mut idx = vec![0usize; factors.len()];
    if factors.iter().any(|f| f.is_empty()) {
        return Ok(err);
    }
    loop {
        let mut lm = 0.0;
        let mut ll = vec![0.0; k];
        for (f, &i) in factors.iter().zip(&idx) {
            lm += f[i].0;
            for t in 0..k {
                ll[t] += f[i].1[t];
            }
        }
        let best = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-10 * (1.0 + best.abs());
        let winners: Vec<bool> = ll.iter().map(|&v| v >= best - tie).collect();
        let share = 1.0 / winners.iter().filter(|&&w| w).count() as f64;
        for t in 0..k {
            if ll[t] == f64::NEG_INFINITY {
                continue;
            }
            let p = (lm + ll[t]).exp();
            err[t] += p * if winners[t] { 1.0 - share } else { 1.0 };
        }
        let mut j = 0;
        while j < idx.len() {
            idx[j] += 1;
            if idx[j] < factors[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == idx.len() {
            break;
        }
    }
    Ok(err)
}

fn least_squares(points: &[(f64, f64)]) -> RegressionFit {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = if points.len() > 2 && sxx > 0.0 {
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    RegressionFit {
        slope,
        stderr,
        intercept,
    }
}

/// Monte-Carlo estimate of the max-θ error of the type-ball strategy over a
/// grid of (α, n), and the slope of −log(error) against n·α.
///
/// Each trial draws an input sequence from P_U and scores the exact
/// conditional error of the maximum-likelihood decision given that input.
pub fn exponent_regression(
    scen: &CqScenario,
    pbar: &[f64],
    alphas: &[f64],
    n_list: &[usize],
    trials: usize,
    seed: u64,
    opts: &RegressionOptions,
) -> Result<RegressionReport> {
    if pbar.len() + 1 != scen.n_symbols() {
        return Err(Error::UnknownSymbol(format!(
            "P̄ has {} entries, need {}",
            pbar.len(),
            scen.n_symbols() - 1
        )));
    }
    if trials == 0 || alphas.is_empty() || n_list.is_empty() {
        return Err(Error::InvalidInput("empty regression grid".into()));
    }
    let tables = classical_tables(scen, seed)?;
    let mut records = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (ni, &n) in n_list.iter().enumerate() {
            let law = build_input_law(&design_pmf(pbar, alpha), alpha, opts.zeta, n)?;
            let lnf = ln_factorials(n);
            let per_type = opts
                .execution
                .map_range(law.types_q.len(), |i| ml_errors_for_type(&tables, &law.types_q[i].counts, &lnf))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let cumulative: Vec<f64> = (0..law.types_q.len())
                .scan(0.0, |acc, i| {
                    *acc += law.type_probability(i);
                    Some(*acc)
                })
                .collect();
            let total = *cumulative.last().unwrap();
            let task = ((ai as u64) << 32) | ni as u64;
            let chunks = 64usize;
            let per_chunk = opts.execution.map_range(chunks, |c| {
                let mut rng = task_rng(seed, task.wrapping_mul(1000).wrapping_add(c as u64));
                let lo = c * trials / chunks;
                let hi = (c + 1) * trials / chunks;
                let mut sum = vec![0.0; tables.len()];
                let mut sq = vec![0.0; tables.len()];
                for _ in lo..hi {
                    let r = rng.random::<f64>() * total;
                    let i = cumulative.partition_point(|&x| x <= r).min(cumulative.len() - 1);
                    for t in 0..tables.len() {
                        sum[t] += per_type[i][t];
                        sq[t] += per_type[i][t] * per_type[i][t];
                    }
                }
                (sum, sq)
            });
            let mut sum = vec![0.0; tables.len()];
            let mut sq = vec![0.0; tables.len()];
            for (s, q) in per_chunk {
                for t in 0..tables.len() {
                    sum[t] += s[t];
                    sq[t] += q[t];
                }
            }
            let tf = trials as f64;
            let (worst, mean) = sum
                .iter()
                .enumerate()
                .map(|(t, s)| (t, s / tf))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let var = (sq[worst] / tf - mean * mean).max(0.0);
            let half = 1.96 * (var / tf).sqrt();
            records.push(RegressionRecord {
                n,
                alpha,
                trials,
                empirical_error: mean,
                ci_low: (mean - half).max(0.0),
                ci_high: mean + half,
            });
        }
    }
    let point = |r: &RegressionRecord| (r.n as f64 * r.alpha, -r.empirical_error.ln());
    let usable: Vec<&RegressionRecord> = records.iter().filter(|r| r.empirical_error > 0.0).collect();
    let fit = least_squares(&usable.iter().map(|r| point(r)).collect::<Vec<_>>());
    let per_alpha = alphas
        .iter()
        .map(|&a| {
            let pts: Vec<(f64, f64)> = usable.iter().filter(|r| r.alpha == a).map(|r| point(r)).collect();
            (a, least_squares(&pts))
        })
        .collect();
    let full: Vec<f64> = std::iter::once(0.0).chain(pbar.iter().copied()).collect();
    let pairs = zero_equivalent_pairs(scen, DEFAULT_TOL);
    let mut reference_dcc = f64::INFINITY;
    for (a, b) in pairs {
        reference_dcc = reference_dcc.min(divergence::conditional_chernoff(a, b, &full, scen)?.value);
    }
    Ok(RegressionReport {
        records,
        fit,
        per_alpha,
        reference_dcc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::random;
    use crate::rng::task_rng;

    fn dg(p: &[f64]) -> DensityOperator {
        DensityOperator::from_diagonal(p).unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn bsc() -> CqScenario {
        let bob = vec![
            vec![dg(&[0.5, 0.5]), dg(&[0.9, 0.1]), dg(&[0.75, 0.25])],
            vec![dg(&[0.5, 0.5]), dg(&[0.1, 0.9]), dg(&[0.25, 0.75])],
        ];
        let willie = vec![vec![dg(&[0.9, 0.1]), dg(&[0.5, 0.5]), dg(&[0.3, 0.7])]; 2];
        CqScenario::new(names("t", 2), names("u", 3), bob, willie).unwrap()
    }

    fn random_qubit_scenario(k: usize, seed: u64) -> CqScenario {
        let mut rng = task_rng(seed, 0);
        let bob: Vec<Vec<DensityOperator>> = (0..k)
            .map(|_| (0..3).map(|_| qmat::random::density(2, 2, &mut rng)).collect())
            .collect();
        let willie = vec![vec![DensityOperator::maximally_mixed(2); 3]; k];
        CqScenario::new(names("t", k), names("u", 3), bob, willie).unwrap()
    }

    #[test]
    fn symmetric_power_examples() {
        let a = qmat::random::density(2, 2, &mut task_rng(5, 0));
        assert!((symmetric_power(a.matrix(), 1) - a.matrix()).norm() < 1e-15);
        // Sym^2 is A⊗A on span{|00>, (|01>+|10>)/√2, |11>}
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis = CMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.0, s, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0].map(|x| C64::new(x, 0.0)),
        );
        let aa = qmat::tensor(a.matrix(), a.matrix());
        let want = basis.adjoint() * aa * &basis;
        assert!((symmetric_power(a.matrix(), 2) - want).norm() < 1e-14);
    }

    #[test]
    fn qubit_blocks_match_dense_products() {
        for (k, seed) in [(2, 1), (3, 2)] {
            let scen = random_qubit_scenario(k, seed);
            for counts in [vec![1, 0, 0], vec![2, 1, 0], vec![0, 3, 2], vec![2, 2, 2], vec![0, 0, 5]] {
                let fast = qubit_block_errors(&scen, &counts);
                let dense = dense_sequence_errors(&scen, &representative(&counts)).unwrap();
                for (a, b) in fast.iter().zip(&dense) {
                    assert!((a - b).abs() < 1e-12, "{counts:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn helstrom_examples() {
        let (p, r) = helstrom(&DensityOperator::basis(2, 0), &DensityOperator::basis(2, 1)).unwrap();
        p.check().unwrap();
        assert!(r.error < 1e-15);
        let m = DensityOperator::maximally_mixed(3);
        let (_, r) = helstrom(&m, &m).unwrap();
        assert!((r.average() - 0.5).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityOperator::from_pure(&crate::CVector::from_vec(vec![qmat::c(s, 0.0), qmat::c(s, 0.0)])).unwrap();
        let (_, r) = helstrom(&DensityOperator::basis(2, 0), &plus).unwrap();
        assert!((r.average() - (1.0 - s) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn helstrom_average_matches_trace_distance() {
        let mut rng = task_rng(1, 0);
        for _ in 0..50 {
            let a = random::density(3, 3, &mut rng);
            let b = random::density(3, 2, &mut rng);
            let (p, r) = helstrom(&a, &b).unwrap();
            p.check().unwrap();
            let tn = qmat::trace_norm(&(a.matrix() - b.matrix())).unwrap();
            assert!((r.average() - (1.0 - 0.5 * tn) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pgm_examples() {
        let (p, r) = pgm(&[&DensityOperator::basis(3, 0), &DensityOperator::basis(3, 2)]).unwrap();
        p.check().unwrap();
        assert!(r.error < 1e-14);
        let m = DensityOperator::maximally_mixed(2);
        let (_, r) = pgm(&[&m, &m]).unwrap();
        assert!((r.per_theta_error[0] - 0.5).abs() < 1e-14);
        assert!((r.per_theta_error[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pgm_within_twice_helstrom() {
        let mut rng = task_rng(2, 0);
        for _ in 0..200 {
            let a = random::density(2, 2, &mut rng);
            let b = random::density(2, 1, &mut rng);
            let h = helstrom(&a, &b).unwrap().1.average();
            let (p, r) = pgm(&[&a, &b]).unwrap();
            p.check().unwrap();
            assert!(r.average() <= 2.0 * h + 1e-12);
        }
    }

    #[test]
    fn union_bound_examples() {
        assert_eq!(
            lemma6_bound(&[&DensityOperator::basis(2, 0), &DensityOperator::basis(2, 1)]).unwrap(),
            0.0
        );
        let s = dg(&[0.7, 0.3]);
        assert!((lemma6_bound(&[&s, &s]).unwrap() - 20.0 * 2.0).abs() < 1e-12);
        let mut rng = task_rng(3, 0);
        let a = random::density(2, 2, &mut rng);
        let b = random::density(2, 2, &mut rng);
        // oracle: scan s on a fine grid
        let t = (0..=20000)
            .map(|i| {
                let s = i as f64 / 20000.0;
                qmat::trace_product_re(&qmat::mat_power(&a, s), &qmat::mat_power(&b, 1.0 - s))
            })
            .fold(f64::INFINITY, f64::min);
        let nu = a.nu().max(b.nu()) as f64;
        let want = 10.0 * nu * 2.0 * t;
        assert!((lemma6_bound(&[&a, &b]).unwrap() - want).abs() < 1e-7 * want);
    }

    #[test]
    fn orthogonal_forced_symbol_gives_zero_error() {
        let bob = vec![
            vec![dg(&[0.5, 0.5]), dg(&[1.0, 0.0])],
            vec![dg(&[0.5, 0.5]), dg(&[0.0, 1.0])],
        ];
        let willie = vec![vec![dg(&[0.6, 0.4]), dg(&[0.4, 0.6])]; 2];
        let s = CqScenario::new(names("t", 2), names("u", 2), bob, willie).unwrap();
        let law = build_input_law(&[0.5, 0.5], 0.5, 0.2, 4).unwrap();
        assert!(strategy_error_exact(&s, &law).unwrap().error < 1e-15);
    }

    #[test]
    fn exact_error_matches_classical_enumeration() {
        let s = bsc();
        let law = build_input_law(&[0.6, 0.2, 0.2], 0.4, 0.5, 5).unwrap();
        let r = strategy_error_exact(&s, &law).unwrap();
        // oracle: all 3^5 inputs and 2^5 outputs, ML with ties split
        let p = |t: usize, u: usize, y: usize| s.bob(t, u).matrix()[(y, y)].re;
        let mut err = [0.0; 2];
        for xs in 0..243usize {
            let seq: Vec<usize> = (0..5).map(|i| (xs / 3usize.pow(i)) % 3).collect();
            let pu = law.sequence_probability(&seq);
            if pu == 0.0 {
                continue;
            }
            for ys in 0..32usize {
                let l: Vec<f64> = (0..2)
                    .map(|t| (0..5).map(|i| p(t, seq[i], (ys >> i) & 1)).product())
                    .collect();
                if l[0] > l[1] + 1e-15 {
                    err[1] += pu * l[1];
                } else if l[1] > l[0] + 1e-15 {
                    err[0] += pu * l[0];
                } else {
                    err[0] += 0.5 * pu * l[0];
                    err[1] += 0.5 * pu * l[1];
                }
            }
        }
        assert!((r.per_theta_error[0] - err[0]).abs() < 1e-12);
        assert!((r.per_theta_error[1] - err[1]).abs() < 1e-12);
        // the quantum path agrees with the diagonal shortcut
        let direct = sequence_errors(&s, &[0, 1, 2, 2, 1], false).unwrap();
        let fast = sequence_errors(&s, &[0, 1, 2, 2, 1], true).unwrap();
        assert!((direct[0] - fast[0]).abs() < 1e-12 && (direct[1] - fast[1]).abs() < 1e-12);
        // the count-vector enumeration agrees too
        let lnf = ln_factorials(5);
        let tables = classical_tables(&s, 0).unwrap();
        for t in &law.types_q {
            let a = ml_errors_for_type(&tables, &t.counts, &lnf).unwrap();
            let b = sequence_errors(&s, &representative(&t.counts), true).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_law_with_shared_innocent_state() {
        let bob: Vec<Vec<DensityOperator>> = (0..3)
            .map(|_| vec![dg(&[0.3, 0.7]), dg(&[0.5, 0.5])])
            .collect();
        let willie = vec![vec![dg(&[0.6, 0.4]), dg(&[0.4, 0.6])]; 3];
        let s = CqScenario::new(names("t", 3), names("u", 2), bob, willie).unwrap();
        let law = ConstrainedInputLaw {
            p: vec![1.0, 0.0],
            alpha: 0.0,
            zeta: 1.0,
            n: 3,
            types_q: vec![crate::covert_exponent::TypeClass {
                counts: vec![3, 0],
                ln_mass: 0.0,
            }],
            ln_mass_a: 0.0,
            mass_a: 1.0,
        };
        let r = strategy_error_exact(&s, &law).unwrap();
        assert!((r.error - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn regression_on_identical_channels_is_flat() {
        let bob = vec![vec![dg(&[0.5, 0.5]), dg(&[0.8, 0.2])]; 2];
        let willie = vec![vec![dg(&[0.6, 0.4]), dg(&[0.4, 0.6])]; 2];
        let s = CqScenario::new(names("t", 2), names("u", 2), bob, willie).unwrap();
        let r = exponent_regression(&s, &[1.0], &[0.1], &[20, 40, 80], 100, 0, &RegressionOptions::default()).unwrap();
        assert!(r.fit.slope.abs() < 1e-12);
        assert!(r.records.iter().all(|x| (x.empirical_error - 0.5).abs() < 1e-12));
    }

    #[test]
    fn regression_rejects_quantum_tables() {
        let mut rng = task_rng(4, 0);
        let bob = vec![
            vec![dg(&[0.5, 0.5]), random::density(2, 2, &mut rng)],
            vec![dg(&[0.5, 0.5]), random::density(2, 2, &mut rng)],
        ];
        let willie = vec![vec![dg(&[0.6, 0.4]), dg(&[0.4, 0.6])]; 2];
        let s = CqScenario::new(names("t", 2), names("u", 2), bob, willie).unwrap();
        let r = exponent_regression(&s, &[1.0], &[0.1], &[20], 10, 0, &RegressionOptions::default());
        assert!(matches!(r, Err(Error::NotClassical(_))));
    }

    #[test]
    fn sequence_bound_dominates_exact_error_when_informative() {
        let s = bsc();
        let law = build_input_law(&[0.5, 0.25, 0.25], 0.5, 0.5, 8).unwrap();
        let b = lemma6_sequence_bound(&s, &law).unwrap();
        let e = strategy_error_exact(&s, &law).unwrap().error;
        assert!(e <= b, "{e} > {b}");
    }
}
