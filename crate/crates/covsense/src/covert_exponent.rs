//! Achievable covert error exponent, the type-ball input law, and the bound
//! kernels on both sides of the square-root law.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::divergence::{self, binary_entropy, check_pmf, weighted_chernoff, ChernoffKernel, EtaForm};
use crate::exec::Execution;
use crate::optim::{nelder_mead, simplex_grid, softmax_pinned, softmax_pinned_inverse, NelderMeadOptions};
use crate::qmat::{self, CMatrix, DensityOperator, ZERO_EIGENVALUE};
use crate::rng::task_rng;
use crate::scenario::{check_assumptions, zero_equivalent_pairs, CqScenario, DEFAULT_TOL};
use crate::types::{ln_factorials, ln_type_mass, log_sum_exp};
use crate::{Error, Result};

/// Largest number of admissible types enumerated exactly.
pub const MAX_TYPES: usize = 1_000_000;
/// Largest n-letter warden dimension built explicitly.
pub const MAX_EXACT_DIM: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeClass {
    /// Symbol counts, summing to n.
    pub counts: Vec<usize>,
    /// ln P^⊗n(T_Q).
    pub ln_mass: f64,
}

/// The i.i.d. law P^⊗n conditioned on the type ball
/// A = {u : |Q_u(a) − P(a)| ≤ αζ for every a ≠ 0}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedInputLaw {
    pub p: Vec<f64>,
    pub alpha: f64,
    pub zeta: f64,
    pub n: usize,
    /// Admissible types of positive probability.
    pub types_q: Vec<TypeClass>,
    pub ln_mass_a: f64,
    pub mass_a: f64,
}

impl ConstrainedInputLaw {
    /// P_U(T_Q) for the i-th admissible type.
    pub fn type_probability(&self, i: usize) -> f64 {
        (self.types_q[i].ln_mass - self.ln_mass_a).exp()
    }

    pub fn type_pmf(&self, i: usize) -> Vec<f64> {
        self.types_q[i]
            .counts
            .iter()
            .map(|&k| k as f64 / self.n as f64)
            .collect()
    }

    /// The single-letter marginal shared by every position: Σ_Q P_U(T_Q) Q.
    pub fn average_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p.len()];
        for i in 0..self.types_q.len() {
            let w = self.type_probability(i);
            for (a, q) in m.iter_mut().zip(self.type_pmf(i)) {
                *a += w * q;
            }
        }
        m
    }

    /// P_U of one sequence.
    pub fn sequence_probability(&self, seq: &[usize]) -> f64 {
        if seq.len() != self.n {
            return 0.0;
        }
        let mut counts = vec![0usize; self.p.len()];
        for &u in seq {
            if u >= counts.len() {
                return 0.0;
            }
            counts[u] += 1;
        }
        if !self.types_q.iter().any(|t| t.counts == counts) {
            return 0.0;
        }
        let ln: f64 = counts
            .iter()
            .zip(&self.p)
            .map(|(&k, &pu)| if k == 0 { 0.0 } else { k as f64 * pu.ln() })
            .sum();
        (ln - self.ln_mass_a).exp()
    }
}

/// PMF on U with P(0) = 1 − α and α·P̄ on the other symbols.
pub fn design_pmf(pbar: &[f64], alpha: f64) -> Vec<f64> {
    std::iter::once(1.0 - alpha)
        .chain(pbar.iter().map(|&x| alpha * x))
        .collect()
}

/// Enumerate the type ball of (P, α, ζ, n).
pub fn build_input_law(p: &[f64], alpha: f64, zeta: f64, n: usize) -> Result<ConstrainedInputLaw> {
    check_pmf(p)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("α = {alpha} outside (0, 1)")));
    }
    if (p[0] - (1.0 - alpha)).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "P(0) = {} but 1 − α = {}",
            p[0],
            1.0 - alpha
        )));
    }
    if !(zeta > 0.0) || n == 0 {
        return Err(Error::InvalidInput("need ζ > 0 and n ≥ 1".into()));
    }
    let radius = alpha * zeta;
    let nf = n as f64;
    // half-open count ranges per non-innocent symbol
    let ranges: Vec<(usize, usize)> = p[1..]
        .iter()
        .map(|&pu| {
            let lo = ((pu - radius) * nf - 1e-9).ceil().max(0.0);
            let hi = ((pu + radius) * nf + 1e-9).floor().min(nf);
            if hi < lo {
                (0, 0)
            } else {
                (lo as usize, hi as usize + 1)
            }
        })
        .collect();
    let count: u128 = ranges.iter().map(|&(lo, hi)| (hi - lo) as u128).product();
    if count > MAX_TYPES as u128 {
        return Err(Error::ScaleExceeded(format!(
            "type ball has up to {count} types (limit {MAX_TYPES})"
        )));
    }
    let lnf = ln_factorials(n);
    let mut types_q = Vec::new();
    let k = p.len() - 1;
    let mut cur = vec![0usize; k];
    let mut visit = |cur: &[usize]| {
        let s: usize = cur.iter().sum();
        if s > n {
            return;
        }
        for (i, &c) in cur.iter().enumerate() {
            if (c as f64 / nf - p[i + 1]).abs() > radius + 1e-12 {
                return;
            }
        }
        let counts: Vec<usize> = std::iter::once(n - s).chain(cur.iter().copied()).collect();
        let ln_mass = ln_type_mass(&counts, p, &lnf);
        if ln_mass > f64::NEG_INFINITY {
            types_q.push(TypeClass { counts, ln_mass });
        }
    };
    if k == 0 {
        visit(&cur);
    } else if ranges.iter().all(|&(lo, hi)| hi > lo) {
        for (i, r) in ranges.iter().enumerate() {
            cur[i] = r.0;
        }
        loop {
            visit(&cur);
            let mut i = 0;
            loop {
                if i == k {
                    break;
                }
                cur[i] += 1;
                if cur[i] < ranges[i].1 {
                    break;
                }
                cur[i] = ranges[i].0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
    }
    if types_q.is_empty() {
        return Err(Error::EmptyTypeBall);
    }
    let ln_mass_a = log_sum_exp(types_q.iter().map(|t| t.ln_mass)).min(0.0);
    Ok(ConstrainedInputLaw {
        p: p.to_vec(),
        alpha,
        zeta,
        n,
        types_q,
        ln_mass_a,
        mass_a: ln_mass_a.exp(),
    })
}

/// Index of a type drawn with probability P_U(T_Q).
pub fn sample_type<R: Rng + ?Sized>(law: &ConstrainedInputLaw, rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for i in 0..law.types_q.len() {
        acc += law.type_probability(i);
        if r < acc {
            return i;
        }
    }
    law.types_q.len() - 1
}

/// Draw one input sequence from P_U: a type, then a uniform arrangement of it.
pub fn sample_input(law: &ConstrainedInputLaw, seed: u64) -> Vec<usize> {
    let mut rng = task_rng(seed, 0);
    sample_input_with(law, &mut rng)
}

pub fn sample_input_with<R: Rng + ?Sized>(law: &ConstrainedInputLaw, rng: &mut R) -> Vec<usize> {
    let t = &law.types_q[sample_type(law, rng)];
    let mut seq: Vec<usize> = t
        .counts
        .iter()
        .enumerate()
        .flat_map(|(u, &k)| std::iter::repeat_n(u, k))
        .collect();
    seq.shuffle(rng);
    seq
}

/// Per-(pair, symbol) Chernoff data for fast D_cc evaluation.
#[derive(Clone, Debug)]
pub struct DccTable {
    pub pairs: Vec<(usize, usize)>,
    kernels: Vec<Vec<ChernoffKernel>>,
}

impl DccTable {
    pub fn new(scen: &CqScenario, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let kernels = pairs
            .iter()
            .map(|&(a, b)| {
                (0..scen.n_symbols())
                    .map(|u| ChernoffKernel::new(scen.bob(a, u), scen.bob(b, u)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pairs, kernels })
    }

    /// D_cc for pair index `i` under a PMF over the whole alphabet.
    pub fn dcc(&self, i: usize, p: &[f64]) -> divergence::ChernoffResult {
        let parts: Vec<(f64, &ChernoffKernel)> = p.iter().copied().zip(self.kernels[i].iter()).collect();
        weighted_chernoff(&parts)
    }

    pub fn min_dcc(&self, p: &[f64]) -> f64 {
        (0..self.pairs.len())
            .map(|i| self.dcc(i, p).value)
            .fold(f64::INFINITY, f64::min)
    }
}

/// η(Σ_u P̄(u) ρ_W^u ‖ ρ_W^0) as a quadratic form in P̄ (over U∖{0}).
#[derive(Clone, Debug)]
pub struct EtaQuadratic {
    grams: Vec<DMatrix<f64>>,
}

impl EtaQuadratic {
    pub fn new(scen: &CqScenario) -> Result<Self> {
        let k = scen.n_symbols() - 1;
        let grams = (0..scen.n_params())
            .map(|theta| {
                let innocent = scen.willie(theta, 0);
                let form = EtaForm::new(innocent)?;
                let rotated: Vec<CMatrix> = (1..=k)
                    .map(|u| form.rotate(&(scen.willie(theta, u).matrix() - innocent.matrix())))
                    .collect();
                Ok(DMatrix::from_fn(k, k, |i, j| form.bilinear(&rotated[i], &rotated[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grams })
    }

    pub fn eta(&self, theta: usize, pbar: &[f64]) -> f64 {
        let g = &self.grams[theta];
        let mut acc = 0.0;
        for i in 0..pbar.len() {
            for j in 0..pbar.len() {
                acc += pbar[i] * g[(i, j)] * pbar[j];
            }
        }
        acc.max(0.0)
    }

    /// (max_θ η, arg max).
    pub fn worst(&self, pbar: &[f64]) -> (f64, usize) {
        (0..self.grams.len())
            .map(|t| (self.eta(t, pbar), t))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

#[derive(Clone, Debug)]
pub struct ExponentOptions {
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Grid resolution of the final polish for |U∖{0}| ≤ 3.
    pub grid_steps: Option<usize>,
    pub execution: Execution,
    /// Per-position input marginals of a strategy, for the converse rate.
    pub marginals: Option<Vec<Vec<f64>>>,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            restarts: 20,
            seed: 0,
            grid_steps: None,
            execution: Execution::default(),
            marginals: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDcc {
    pub theta: usize,
    pub theta_prime: usize,
    pub value: f64,
    pub s_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    /// √2·min D_cc / √(max η), per √(nδ); nats^(1/2).
    pub achievable_rate: f64,
    /// Optimising distribution over U∖{0}.
    pub p_star: Vec<f64>,
    pub per_pair_dcc: Vec<PairDcc>,
    pub worst_eta: f64,
    pub worst_eta_theta: usize,
    pub converse_rate: Option<f64>,
}

/// The ratio objective √2·min_pairs D_cc(P̄) / √(max_θ η(P̄)).
pub struct RateObjective {
    dcc: DccTable,
    eta: EtaQuadratic,
}

impl RateObjective {
    pub fn new(scen: &CqScenario, pairs: Vec<(usize, usize)>) -> Result<Self> {
        Ok(Self {
            dcc: DccTable::new(scen, pairs)?,
            eta: EtaQuadratic::new(scen)?,
        })
    }

    pub fn rate(&self, pbar: &[f64]) -> f64 {
        let full: Vec<f64> = std::iter::once(0.0).chain(pbar.iter().copied()).collect();
        let d = self.dcc.min_dcc(&full);
        let (e, _) = self.eta.worst(pbar);
        if d == 0.0 {
            return 0.0;
        }
        if e <= 0.0 || d == f64::INFINITY {
            return f64::INFINITY;
        }
        std::f64::consts::SQRT_2 * d / e.sqrt()
    }
}

fn check_gate(scen: &CqScenario, tol: f64) -> Result<Vec<(usize, usize)>> {
    let analysis = check_assumptions(scen, tol)?;
    if !analysis.flag_indistinguishable.holds {
        return Err(Error::NoZeroEquivalentPair);
    }
    if !analysis.flag_non_simulable.holds {
        return Err(Error::AssumptionViolated(analysis.flag_non_simulable.diagnostic));
    }
    if !analysis.flag_support.holds {
        return Err(Error::AssumptionViolated(analysis.flag_support.diagnostic));
    }
    if scen.n_symbols() < 2 {
        return Err(Error::AssumptionViolated("alphabet has no non-innocent symbol".into()));
    }
    Ok(analysis.zero_equiv_pairs)
}

/// Maximise the achievable exponent over distributions on U∖{0}.
pub fn optimize_exponent(scen: &CqScenario, opts: &ExponentOptions) -> Result<ExponentReport> {
    let pairs = check_gate(scen, opts.tol)?;
    let obj = RateObjective::new(scen, pairs)?;
    let k = scen.n_symbols() - 1;

    let mut best: (Vec<f64>, f64) = (vec![1.0 / k as f64; k], obj.rate(&vec![1.0 / k as f64; k]));
    if k == 1 {
        best = (vec![1.0], obj.rate(&[1.0]));
    } else {
        let nm = NelderMeadOptions {
            max_iter: 3000,
            initial_step: 1.0,
            ftol: 1e-14,
        };
        let neg = |x: &[f64]| -obj.rate(&softmax_pinned(x));
        let runs = opts.execution.map_range(opts.restarts.max(1), |r| {
            let x0: Vec<f64> = if r == 0 {
                vec![0.0; k - 1]
            } else {
                let mut rng = task_rng(opts.seed, r as u64);
                (0..k - 1)
                    .map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect()
            };
            let (x, v) = nelder_mead(neg, &x0, &nm);
            (softmax_pinned(&x), -v)
        });
        for run in runs {
            if run.1 > best.1 {
                best = run;
            }
        }
        if k <= 3 {
            let steps = opts.grid_steps.unwrap_or(if k == 2 { 2000 } else { 200 });
            let grid = simplex_grid(k, steps);
            let vals = opts.execution.map_slice(&grid, |p| obj.rate(p));
            let (gi, gv) = vals
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            if gv > best.1 {
                best = (grid[gi].clone(), gv);
            }
            // local polish from the best grid point, kept only if it improves
            let (x, v) = nelder_mead(
                neg,
                &softmax_pinned_inverse(&grid[gi]),
                &NelderMeadOptions {
                    initial_step: 0.05,
                    ..nm
                },
            );
            if -v > best.1 {
                best = (softmax_pinned(&x), -v);
            }
        }
    }

    let (p_star, _) = best;
    let full: Vec<f64> = std::iter::once(0.0).chain(p_star.iter().copied()).collect();
    let per_pair_dcc: Vec<PairDcc> = obj
        .dcc
        .pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let r = obj.dcc.dcc(i, &full);
            PairDcc {
                theta: a,
                theta_prime: b,
                value: r.value,
                s_star: r.s_star,
            }
        })
        .collect();
    let (worst_eta, worst_eta_theta) = obj.eta.worst(&p_star);
    let min_d = per_pair_dcc.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let achievable_rate = if min_d == 0.0 {
        0.0
    } else if min_d == f64::INFINITY || worst_eta <= 0.0 {
        f64::INFINITY
    } else {
        std::f64::consts::SQRT_2 * min_d / worst_eta.sqrt()
    };
    let converse_rate = match &opts.marginals {
        Some(m) => {
            let c = converse_quantities(m, scen)?;
            Some(obj.rate(&c.p_tilde))
        }
        None => None,
    };
    Ok(ExponentReport {
        achievable_rate,
        p_star,
        per_pair_dcc,
        worst_eta,
        worst_eta_theta,
        converse_rate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairKernel {
    pub theta: usize,
    pub theta_prime: usize,
    pub zero_equivalent: bool,
    /// log Σ_Q P_U(T_Q) exp(−n D_cc(θ, θ′ | Q)), nats.
    pub kernel: f64,
    /// Additive term with unstated constants, as a formula.
    pub slack: String,
}

/// Error-exponent kernel of the type-ball strategy for every pair θ < θ′.
pub fn achievability_kernel(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<Vec<PairKernel>> {
    if law.p.len() != scen.n_symbols() {
        return Err(Error::DimensionMismatch("law and scenario alphabets differ".into()));
    }
    let zero = zero_equivalent_pairs(scen, DEFAULT_TOL);
    let mut pairs = Vec::new();
    for a in 0..scen.n_params() {
        for b in a + 1..scen.n_params() {
            pairs.push((a, b));
        }
    }
    let table = DccTable::new(scen, pairs.clone())?;
    let n = law.n as f64;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let kernel = log_sum_exp((0..law.types_q.len()).map(|t| {
                let d = table.dcc(i, &law.type_pmf(t)).value;
                law.types_q[t].ln_mass - law.ln_mass_a - n * d
            }));
            PairKernel {
                theta: a,
                theta_prime: b,
                zero_equivalent: zero.contains(&(a, b)),
                kernel,
                slack: "+ O(log n), constant depending on dim B, |U|, |Θ|".into(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertnessTerms {
    pub theta: usize,
    /// n·D(Σ_u P(u) ρ_W^u ‖ ρ_W^0)
    pub divergence_term: f64,
    /// ε·log(dim W / λ_min)·n
    pub deviation_term: f64,
    /// H_b(min(ε, 1/2))
    pub entropy_term: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertnessBound {
    pub value: f64,
    /// ε = 2|U| exp(−αnζ²/3)
    pub epsilon: f64,
    pub per_theta: Vec<CovertnessTerms>,
}

fn check_warden_support(scen: &CqScenario, theta: usize, weights: &[f64]) -> Result<()> {
    let outside = qmat::identity(scen.dim_willie()) - scen.willie(theta, 0).support_projector();
    for (u, &w) in weights.iter().enumerate() {
        if w > 0.0 && qmat::trace_product_re(&outside, scen.willie(theta, u).matrix()) > DEFAULT_TOL {
            return Err(Error::SupportViolation(format!(
                "warden state for parameter {}, symbol {} leaves the innocent support",
                scen.params()[theta],
                scen.alphabet()[u]
            )));
        }
    }
    Ok(())
}

/// Upper bound on the covertness of the type-ball law.
pub fn covertness_bound(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<CovertnessBound> {
    if law.p.len() != scen.n_symbols() {
        return Err(Error::DimensionMismatch("law and scenario alphabets differ".into()));
    }
    let n = law.n as f64;
    let epsilon = 2.0 * scen.n_symbols() as f64 * (-law.alpha * n * law.zeta * law.zeta / 3.0).exp();
    let per_theta = (0..scen.n_params())
        .map(|theta| {
            check_warden_support(scen, theta, &law.p)?;
            let mix = scen.willie_mixture(theta, &law.p)?;
            let innocent = scen.willie(theta, 0);
            let divergence_term = n * divergence::rel_entropy(&mix, innocent)?;
            let lmin = innocent.lambda_min();
            let deviation_term = if epsilon == 0.0 {
                0.0
            } else if lmin <= ZERO_EIGENVALUE {
                f64::INFINITY
            } else {
                epsilon * (scen.dim_willie() as f64 / lmin).ln() * n
            };
            let entropy_term = binary_entropy(epsilon.clamp(0.0, 0.5));
            Ok(CovertnessTerms {
                theta,
                divergence_term,
                deviation_term,
                entropy_term,
                total: divergence_term + deviation_term + entropy_term,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = per_theta.iter().map(|t| t.total).fold(f64::NEG_INFINITY, f64::max);
    Ok(CovertnessBound {
        value,
        epsilon,
        per_theta,
    })
}

/// The warden's n-letter state Σ_{u ∈ A} P_U(u) ⊗_i ρ_{W|θ}^{u_i}.
///
/// Built from the generating function ⊗^n(Σ_a z_a P(a) ρ^a) evaluated on a
/// grid of roots of unity, which needs memory for two n-letter matrices only.
pub fn warden_state(scen: &CqScenario, law: &ConstrainedInputLaw, theta: usize) -> Result<DensityOperator> {
    let dw = scen.dim_willie();
    let dim = (dw as u128).checked_pow(law.n as u32).unwrap_or(u128::MAX);
    if dim > MAX_EXACT_DIM as u128 {
        return Err(Error::ScaleExceeded(format!(
            "warden dimension {dw}^{} exceeds {MAX_EXACT_DIM}",
            law.n
        )));
    }
    let dim = dim as usize;
    let r = scen.n_symbols() - 1;
    let nn = law.n + 1;
    let points = nn.checked_pow(r as u32).unwrap_or(usize::MAX);
    if points.saturating_mul(dim * dim) > 50_000_000_000 {
        return Err(Error::ScaleExceeded("too many generating-function evaluations".into()));
    }
    let weighted: Vec<CMatrix> = (0..scen.n_symbols())
        .map(|u| scen.willie(theta, u).matrix().scale(law.p[u]))
        .collect();
    let omega = |e: usize| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * e as f64 / nn as f64);
    let norm = 1.0 / (points as f64 * law.mass_a);
    let mut acc = CMatrix::zeros(dim, dim);
    let mut j = vec![0usize; r];
    for _ in 0..points {
        // c_j = Σ_{k ∈ ball} ω^{−j·k}
        let mut cj = Complex64::new(0.0, 0.0);
        for t in &law.types_q {
            let e: usize = (0..r).map(|i| j[i] * t.counts[i + 1]).sum::<usize>() % nn;
            cj += omega(e).conj();
        }
        if cj.norm() > 0.0 {
            let mut single = weighted[0].clone();
            for i in 0..r {
                single += weighted[i + 1].map(|z| z * omega(j[i]));
            }
            let mut power = single.clone();
            for _ in 1..law.n {
                power = power.kronecker(&single);
            }
            acc += power.map(|z| z * cj * norm);
        }
        for slot in j.iter_mut() {
            *slot += 1;
            if *slot < nn {
                break;
            }
            *slot = 0;
        }
    }
    Ok(DensityOperator::new_unchecked(acc))
}

/// max_θ D(ρ_{W^n|θ} ‖ (ρ_{W|θ}^0)^⊗n) for the law, built explicitly.
pub fn exact_covertness(scen: &CqScenario, law: &ConstrainedInputLaw) -> Result<f64> {
    if law.p.len() != scen.n_symbols() {
        return Err(Error::DimensionMismatch("law and scenario alphabets differ".into()));
    }
    let marginal = law.average_marginal();
    let mut worst: f64 = 0.0;
    for theta in 0..scen.n_params() {
        let state = warden_state(scen, law, theta)?;
        let v = divergence_to_power(&state, scen, theta, &marginal, law.n)?;
        worst = worst.max(v);
    }
    Ok(worst)
}

/// D(ρ ‖ σ^⊗n) for an exchangeable ρ whose one-site marginal is
/// Σ_u m(u) ρ_W^u, using tr(ρ log σ^⊗n) = n·tr(ρ_1 log σ).
fn divergence_to_power(
    state: &DensityOperator,
    scen: &CqScenario,
    theta: usize,
    marginal: &[f64],
    n: usize,
) -> Result<f64> {
    let sigma = scen.willie(theta, 0);
    let one_site = scen.willie_mixture(theta, marginal)?;
    let es = sigma.eigensystem();
    let f = &es.eigenvectors;
    let rot = f.adjoint() * one_site.matrix() * f;
    let mut cross = 0.0;
    for b in 0..sigma.dim() {
        let w = rot[(b, b)].re;
        if es.eigenvalues[b] <= ZERO_EIGENVALUE {
            if w > divergence::SUPPORT_OVERLAP_TOL {
                return Ok(f64::INFINITY);
            }
        } else {
            cross += w * es.eigenvalues[b].ln();
        }
    }
    Ok((-state.entropy() - n as f64 * cross).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseQuantities {
    pub n: usize,
    pub alpha_n: f64,
    /// Average marginal over U.
    pub p_bar: Vec<f64>,
    /// Renormalised non-innocent part, over U∖{0}.
    pub p_tilde: Vec<f64>,
    /// n·α_n·min_pairs D_cc(P̃), nats.
    pub kernel1: f64,
    /// (α_n²/2)·max_θ η(Σ_u P̃(u) ρ_W^u ‖ ρ_W^0), nats per channel use.
    pub kernel2: f64,
    pub kernel2_theta: usize,
}

/// Converse-side quantities from the per-position input marginals of a
/// strategy.
pub fn converse_quantities(marginals: &[Vec<f64>], scen: &CqScenario) -> Result<ConverseQuantities> {
    let n = marginals.len();
    if n == 0 {
        return Err(Error::InvalidInput("no marginals".into()));
    }
    let k = scen.n_symbols();
    let mut p_bar = vec![0.0; k];
    for m in marginals {
        if m.len() != k {
            return Err(Error::UnknownSymbol(format!(
                "marginal has {} entries, alphabet has {k}",
                m.len()
            )));
        }
        check_pmf(m)?;
        for (a, x) in p_bar.iter_mut().zip(m) {
            *a += x / n as f64;
        }
    }
    let alpha_n = 1.0 - p_bar[0];
    if alpha_n <= 1e-15 {
        return Err(Error::DegenerateAlpha);
    }
    let p_tilde: Vec<f64> = p_bar[1..].iter().map(|x| x / alpha_n).collect();
    let full: Vec<f64> = std::iter::once(0.0).chain(p_tilde.iter().copied()).collect();
    let pairs = zero_equivalent_pairs(scen, DEFAULT_TOL);
    let table = DccTable::new(scen, pairs)?;
    let kernel1 = n as f64 * alpha_n * table.min_dcc(&full);
    let eta = EtaQuadratic::new(scen)?;
    let (e, theta) = eta.worst(&p_tilde);
    Ok(ConverseQuantities {
        n,
        alpha_n,
        p_bar,
        p_tilde,
        kernel1,
        kernel2: 0.5 * alpha_n * alpha_n * e,
        kernel2_theta: theta,
    })
}

/// α_n = √(2δ(1−λ) / (n·max_θ η)), the achievability design weight.
pub fn design_alpha(delta: f64, lambda: f64, n: usize, max_eta: f64) -> f64 {
    (2.0 * delta * (1.0 - lambda) / (n as f64 * max_eta)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dg(p: &[f64]) -> DensityOperator {
        DensityOperator::from_diagonal(p).unwrap()
    }

    fn bsc_scenario() -> CqScenario {
        let bob = vec![
            vec![dg(&[0.5, 0.5]), dg(&[0.9, 0.1]), dg(&[0.75, 0.25])],
            vec![dg(&[0.5, 0.5]), dg(&[0.1, 0.9]), dg(&[0.25, 0.75])],
        ];
        let willie = vec![vec![dg(&[0.9, 0.1]), dg(&[0.5, 0.5]), dg(&[0.3, 0.7])]; 2];
        CqScenario::new(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into(), "2".into()],
            bob,
            willie,
        )
        .unwrap()
    }

    #[test]
    fn law_without_conditioning() {
        let law = build_input_law(&[0.7, 0.3], 0.3, 10.0, 5).unwrap();
        assert_eq!(law.types_q.len(), 6);
        assert!((law.mass_a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn law_single_type() {
        let law = build_input_law(&[0.5, 0.5], 0.5, 0.2, 2).unwrap();
        assert_eq!(law.types_q.len(), 1);
        assert_eq!(law.types_q[0].counts, vec![1, 1]);
        assert!((law.sequence_probability(&[0, 1]) - 0.5).abs() < 1e-12);
        assert!((law.sequence_probability(&[1, 0]) - 0.5).abs() < 1e-12);
        assert_eq!(law.sequence_probability(&[1, 1]), 0.0);
    }

    #[test]
    fn law_mass_matches_exhaustive_sum() {
        // oracle: sum over all 2^8 sequences
        let p = [0.75, 0.25];
        let law = build_input_law(&p, 0.25, 0.4, 8).unwrap();
        let mut mass = 0.0;
        for bits in 0u32..256 {
            let ones = bits.count_ones() as f64;
            if (ones / 8.0 - 0.25).abs() <= 0.1 + 1e-12 {
                mass += 0.25f64.powf(ones) * 0.75f64.powf(8.0 - ones);
            }
        }
        assert!((law.mass_a - mass).abs() < 1e-13, "{} vs {mass}", law.mass_a);
    }

    #[test]
    fn empty_ball_is_an_error() {
        // n = 3 with P(1) = 0.5 and radius 0.1: no count k gives |k/3 − 0.5| ≤ 0.1
        assert_eq!(build_input_law(&[0.5, 0.5], 0.5, 0.2, 3), Err(Error::EmptyTypeBall));
    }

    #[test]
    fn sampling_is_reproducible_and_in_ball() {
        let law = build_input_law(&[0.8, 0.1, 0.1], 0.2, 0.5, 20).unwrap();
        let a = sample_input(&law, 42);
        assert_eq!(a, sample_input(&law, 42));
        let mut counts = vec![0; 3];
        for &u in &a {
            counts[u] += 1;
        }
        assert!(law.types_q.iter().any(|t| t.counts == counts));
    }

    #[test]
    fn single_type_kernel_is_minus_n_dcc() {
        let s = bsc_scenario();
        let law = build_input_law(&[0.5, 0.5, 0.0], 0.5, 0.2, 2).unwrap();
        let k = achievability_kernel(&s, &law).unwrap();
        let d = divergence::conditional_chernoff(0, 1, &[0.5, 0.5, 0.0], &s).unwrap().value;
        assert!((k[0].kernel + 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn two_type_kernel_matches_hand_sum() {
        let s = bsc_scenario();
        // n = 8, P(1) = 1/4, radius 1/16: admissible counts of symbol 1 are 2 only...
        // widen to 1/8 so that counts 1, 2, 3 qualify, then check against the sum
        let law = build_input_law(&[0.75, 0.25, 0.0], 0.25, 0.5, 8).unwrap();
        let k = achievability_kernel(&s, &law).unwrap();
        let mut terms = Vec::new();
        for t in 0..law.types_q.len() {
            let q = law.type_pmf(t);
            let d = divergence::conditional_chernoff(0, 1, &q, &s).unwrap().value;
            terms.push(law.type_probability(t) * (-8.0 * d).exp());
        }
        let direct: f64 = terms.iter().sum::<f64>().ln();
        assert!((k[0].kernel - direct).abs() < 1e-12);
    }

    #[test]
    fn converse_examples() {
        let s = bsc_scenario();
        assert_eq!(
            converse_quantities(&vec![vec![1.0, 0.0, 0.0]; 4], &s),
            Err(Error::DegenerateAlpha)
        );
        let m: Vec<Vec<f64>> = (0..4)
            .map(|i| if i % 2 == 0 { vec![0.8, 0.2, 0.0] } else { vec![1.0, 0.0, 0.0] })
            .collect();
        let c = converse_quantities(&m, &s).unwrap();
        assert!((c.p_bar[1] - 0.1).abs() < 1e-15);
        assert!((c.alpha_n - 0.1).abs() < 1e-15);
        assert!((c.p_tilde[0] - 1.0).abs() < 1e-14 && c.p_tilde[1] == 0.0);
    }

    #[test]
    fn warden_state_matches_direct_sum() {
        let s = bsc_scenario();
        let law = build_input_law(&[0.7, 0.2, 0.1], 0.3, 0.5, 3).unwrap();
        let st = warden_state(&s, &law, 0).unwrap();
        let mut direct = CMatrix::zeros(8, 8);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let seq = [a, b, c];
                    let p = law.sequence_probability(&seq);
                    if p > 0.0 {
                        let m = qmat::tensor_all(seq.iter().map(|&u| s.willie(0, u).matrix()));
                        direct += m.scale(p);
                    }
                }
            }
        }
        assert!(qmat::max_abs(&(st.matrix() - &direct)) < 1e-13);
        let exact = exact_covertness(&s, &law).unwrap();
        let sigma = DensityOperator::new_unchecked(qmat::tensor_all(
            (0..3).map(|_| s.willie(0, 0).matrix()),
        ));
        let d = divergence::rel_entropy(&DensityOperator::new_unchecked(direct), &sigma).unwrap();
        assert!((exact - d).abs() < 1e-12);
    }
}
