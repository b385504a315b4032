//! Classical-quantum sensing scenarios and their admissibility checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::project_simplex;
use crate::qmat::{self, CMatrix, DensityOperator};
use crate::rng::task_rng;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Parameters Θ, an input alphabet whose symbol 0 is innocent, and the output
/// states of the sensing receiver (Bob) and the warden (Willie) for every
/// (θ, u).
#[derive(Clone, Debug, PartialEq)]
pub struct CqScenario {
    params: Vec<String>,
    alphabet: Vec<String>,
    bob: Vec<Vec<DensityOperator>>,
    willie: Vec<Vec<DensityOperator>>,
}

impl CqScenario {
    /// `bob[θ][u]` and `willie[θ][u]`; `alphabet[0]` is the innocent symbol.
    pub fn new(
        params: Vec<String>,
        alphabet: Vec<String>,
        bob: Vec<Vec<DensityOperator>>,
        willie: Vec<Vec<DensityOperator>>,
    ) -> Result<Self> {
        if params.is_empty() || alphabet.is_empty() {
            return Err(Error::InvalidInput("empty parameter set or alphabet".into()));
        }
        for (name, table) in [("bob", &bob), ("willie", &willie)] {
            if table.len() != params.len() || table.iter().any(|row| row.len() != alphabet.len()) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} table must be |Θ| x |U| = {} x {}",
                    params.len(),
                    alphabet.len()
                )));
            }
            let d = table[0][0].dim();
            if table.iter().flatten().any(|s| s.dim() != d) {
                return Err(Error::DimensionMismatch(format!("{name} states differ in dimension")));
            }
        }
        Ok(Self {
            params,
            alphabet,
            bob,
            willie,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn dim_bob(&self) -> usize {
        self.bob[0][0].dim()
    }

    pub fn dim_willie(&self) -> usize {
        self.willie[0][0].dim()
    }

    pub fn bob(&self, theta: usize, u: usize) -> &DensityOperator {
        &self.bob[theta][u]
    }

    pub fn willie(&self, theta: usize, u: usize) -> &DensityOperator {
        &self.willie[theta][u]
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name:?}")))
    }

    pub fn symbol_index(&self, name: &str) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    /// Σ_u p(u) ρ_{W|θ}^u for a PMF over the whole alphabet.
    pub fn willie_mixture(&self, theta: usize, p: &[f64]) -> Result<DensityOperator> {
        let states: Vec<&DensityOperator> = self.willie[theta].iter().collect();
        DensityOperator::mixture(p, &states)
    }

    /// Reorder parameters and non-innocent symbols. `param_perm[i]` is the old
    /// index placed at position i; `symbol_perm` acts on symbols 1.. only.
    pub fn relabel(&self, param_perm: &[usize], symbol_perm: &[usize]) -> Result<Self> {
        let k = self.n_symbols() - 1;
        let mut sp: Vec<usize> = symbol_perm.to_vec();
        sp.sort_unstable();
        let mut pp: Vec<usize> = param_perm.to_vec();
        pp.sort_unstable();
        if sp != (1..=k).collect::<Vec<_>>() || pp != (0..self.n_params()).collect::<Vec<_>>() {
            return Err(Error::InvalidInput("relabel needs permutations".into()));
        }
        let order: Vec<usize> = std::iter::once(0).chain(symbol_perm.iter().copied()).collect();
        let pick = |t: &Vec<Vec<DensityOperator>>| -> Vec<Vec<DensityOperator>> {
            param_perm
                .iter()
                .map(|&th| order.iter().map(|&u| t[th][u].clone()).collect())
                .collect()
        };
        Self::new(
            param_perm.iter().map(|&i| self.params[i].clone()).collect(),
            order.iter().map(|&u| self.alphabet[u].clone()).collect(),
            pick(&self.bob),
            pick(&self.willie),
        )
    }

    /// True when all Bob states commute pairwise within `tol`.
    pub fn bob_commutes(&self, tol: f64) -> bool {
        let all: Vec<&DensityOperator> = self.bob.iter().flatten().collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if qmat::commutator_norm(all[i].matrix(), all[j].matrix()) > tol {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFlag {
    pub holds: bool,
    pub diagnostic: String,
}

/// Best simplex fit of the innocent warden state by the other warden states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulabilityFit {
    pub theta: usize,
    /// Minimum Frobenius distance ‖Σ_u P(u)ρ_W^u − ρ_W^0‖₂; +∞ if U = {0}.
    pub residual: f64,
    /// Minimiser over U∖{0}.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAnalysis {
    pub theta_tilde: Vec<usize>,
    pub zero_equiv_pairs: Vec<(usize, usize)>,
    /// Some pair of parameters cannot be told apart from innocent inputs.
    pub flag_indistinguishable: AssumptionFlag,
    /// For some θ the innocent warden state is not a mixture of the others.
    pub flag_non_simulable: AssumptionFlag,
    /// Every warden state lies in the support of the innocent one.
    pub flag_support: AssumptionFlag,
    pub simulability: Vec<SimulabilityFit>,
    pub lambda_min_table: Vec<f64>,
    pub tol: f64,
}

impl ScenarioAnalysis {
    pub fn all_hold(&self) -> bool {
        self.flag_indistinguishable.holds && self.flag_non_simulable.holds && self.flag_support.holds
    }
}

/// Unordered pairs θ < θ′ whose innocent Bob states agree in trace norm
/// within `tol`.
pub fn zero_equivalent_pairs(scen: &CqScenario, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..scen.n_params() {
        for b in a + 1..scen.n_params() {
            let diff = scen.bob(a, 0).matrix() - scen.bob(b, 0).matrix();
            let dist = qmat::trace_norm(&diff).unwrap_or(f64::INFINITY);
            if dist <= tol {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn check_assumptions(scen: &CqScenario, tol: f64) -> Result<ScenarioAnalysis> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let pairs = zero_equivalent_pairs(scen, tol);
    let mut theta_tilde: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    theta_tilde.sort_unstable();
    theta_tilde.dedup();
    let flag1 = AssumptionFlag {
        holds: !pairs.is_empty(),
        diagnostic: if pairs.is_empty() {
            "every pair of innocent receiver states differs".into()
        } else {
            format!("{} pair(s) share the innocent receiver state", pairs.len())
        },
    };

    let simulability: Vec<SimulabilityFit> = (0..scen.n_params())
        .map(|theta| simulability_fit(scen, theta, theta as u64))
        .collect();
    let worst = simulability
        .iter()
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("non-empty parameter set");
    let flag2 = AssumptionFlag {
        holds: worst.residual > tol,
        diagnostic: format!(
            "largest simplex-fit residual {:.3e} at parameter {}",
            worst.residual, scen.params[worst.theta]
        ),
    };

    let mut leak_max: f64 = 0.0;
    let mut leak_at = (0, 0);
    for theta in 0..scen.n_params() {
        let proj = scen.willie(theta, 0).support_projector();
        let outside = qmat::identity(scen.dim_willie()) - proj;
        for u in 0..scen.n_symbols() {
            let leak = qmat::trace_product_re(&outside, scen.willie(theta, u).matrix());
            if leak > leak_max {
                leak_max = leak;
                leak_at = (theta, u);
            }
        }
    }
    let flag3 = AssumptionFlag {
        holds: leak_max <= tol,
        diagnostic: format!(
            "largest weight outside the innocent support {:.3e} (parameter {}, symbol {})",
            leak_max, scen.params[leak_at.0], scen.alphabet[leak_at.1]
        ),
    };

    Ok(ScenarioAnalysis {
        theta_tilde,
        zero_equiv_pairs: pairs,
        flag_indistinguishable: flag1,
        flag_non_simulable: flag2,
        flag_support: flag3,
        simulability,
        lambda_min_table: (0..scen.n_params()).map(|t| scen.willie(t, 0).lambda_min()).collect(),
        tol,
    })
}

const PG_RESTARTS: usize = 10;
const PG_ITERATIONS: usize = 10_000;
const EXACT_SUPPORT_LIMIT: usize = 12;

fn simulability_fit(scen: &CqScenario, theta: usize, seed: u64) -> SimulabilityFit {
    let targets: Vec<&CMatrix> = (1..scen.n_symbols()).map(|u| scen.willie(theta, u).matrix()).collect();
    let goal = scen.willie(theta, 0).matrix();
    let (weights, residual) = simplex_least_squares(&targets, goal, seed);
    SimulabilityFit {
        theta,
        residual,
        weights,
    }
}

/// min over the simplex of ‖Σ_k w_k A_k − B‖_F. Projected gradient with random
/// restarts, then an exact pass over active sets for small k.
pub fn simplex_least_squares(a: &[&CMatrix], b: &CMatrix, seed: u64) -> (Vec<f64>, f64) {
    let k = a.len();
    if k == 0 {
        return (vec![], f64::INFINITY);
    }
    let gram = DMatrix::from_fn(k, k, |i, j| qmat::trace_product_re(&a[i].adjoint(), a[j]));
    let h = DVector::from_fn(k, |i, _| qmat::trace_product_re(&a[i].adjoint(), b));
    let residual = |w: &[f64]| -> f64 {
        let mut m = -b.clone();
        for (wi, ai) in w.iter().zip(a) {
            m += ai.scale(*wi);
        }
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    };

    let lip = 2.0 * gram.clone().symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lip;
    let mut best_w = vec![1.0 / k as f64; k];
    let mut best_r = residual(&best_w);
    for restart in 0..PG_RESTARTS {
        let mut rng = task_rng(seed, restart as u64);
        let mut w: Vec<f64> = if restart == 0 {
            vec![1.0 / k as f64; k]
        } else {
            let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        };
        for _ in 0..PG_ITERATIONS {
            let wv = DVector::from_column_slice(&w);
            let grad = (&gram * &wv - &h) * 2.0;
            let moved: Vec<f64> = (0..k).map(|i| w[i] - step * grad[i]).collect();
            let next = project_simplex(&moved);
            let change: f64 = next.iter().zip(&w).map(|(x, y)| (x - y).abs()).sum();
            w = next;
            if change < 1e-16 {
                break;
            }
        }
        let r = residual(&w);
        if r < best_r {
            best_r = r;
            best_w = w;
        }
    }

    if k <= EXACT_SUPPORT_LIMIT {
        for mask in 1u32..(1u32 << k) {
            let idx: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
            if let Some(w) = equality_constrained_ls(&gram, &h, &idx, k) {
                let r = residual(&w);
                if r < best_r {
                    best_r = r;
                    best_w = w;
                }
            }
        }
    } else {
        let idx: Vec<usize> = (0..k).filter(|&i| best_w[i] > 1e-9).collect();
        if let Some(w) = equality_constrained_ls(&gram, &h, &idx, k) {
            let r = residual(&w);
            if r < best_r {
                best_r = r;
                best_w = w;
            }
        }
    }
    (best_w, best_r)
}

/// Minimise wᵀGw − 2hᵀw over w supported on `idx` with Σw = 1; None if the
/// stationary point leaves the simplex.
fn equality_constrained_ls(g: &DMatrix<f64>, h: &DVector<f64>, idx: &[usize], k: usize) -> Option<Vec<f64>> {
    let s = idx.len();
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = DVector::<f64>::zeros(s + 1);
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            kkt[(i, j)] = 2.0 * g[(a, b)];
        }
        kkt[(i, s)] = 1.0;
        kkt[(s, i)] = 1.0;
        rhs[i] = 2.0 * h[a];
    }
    rhs[s] = 1.0;
    let sol = kkt.svd(true, true).solve(&rhs, 1e-13).ok()?;
    let mut w = vec![0.0; k];
    for (i, &a) in idx.iter().enumerate() {
        if !(sol[i] >= -1e-12) {
            return None;
        }
        w[a] = sol[i].max(0.0);
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(w.iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dg(p: &[f64]) -> DensityOperator {
        DensityOperator::from_diagonal(p).unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn scen(bob: Vec<Vec<DensityOperator>>, willie: Vec<Vec<DensityOperator>>) -> CqScenario {
        let np = bob.len();
        let ns = bob[0].len();
        CqScenario::new(names("t", np), names("u", ns), bob, willie).unwrap()
    }

    #[test]
    fn distinct_innocent_states_fail_flag1() {
        let b = vec![
            vec![dg(&[0.9, 0.1]), dg(&[0.5, 0.5])],
            vec![dg(&[0.1, 0.9]), dg(&[0.5, 0.5])],
        ];
        let w = vec![vec![dg(&[0.8, 0.2]), dg(&[0.5, 0.5])]; 2];
        let a = check_assumptions(&scen(b, w), DEFAULT_TOL).unwrap();
        assert!(!a.flag_indistinguishable.holds);
        assert!(a.theta_tilde.is_empty());
        assert!(a.flag_non_simulable.holds && a.flag_support.holds);
    }

    #[test]
    fn repeated_innocent_warden_state_is_simulable() {
        let b = vec![vec![dg(&[0.5, 0.5]), dg(&[0.9, 0.1])], vec![dg(&[0.5, 0.5]), dg(&[0.1, 0.9])]];
        let w = vec![vec![dg(&[0.8, 0.2]), dg(&[0.8, 0.2])]; 2];
        let a = check_assumptions(&scen(b, w), DEFAULT_TOL).unwrap();
        assert!(a.flag_indistinguishable.holds);
        assert!(!a.flag_non_simulable.holds);
    }

    #[test]
    fn disjoint_warden_support_fails_flag3() {
        let b = vec![vec![dg(&[0.5, 0.5]), dg(&[0.9, 0.1])], vec![dg(&[0.5, 0.5]), dg(&[0.1, 0.9])]];
        let w = vec![vec![dg(&[1.0, 0.0]), dg(&[0.0, 1.0])]; 2];
        let a = check_assumptions(&scen(b, w), DEFAULT_TOL).unwrap();
        assert!(!a.flag_support.holds);
    }

    #[test]
    fn convex_combination_gives_zero_residual() {
        let r1 = dg(&[0.9, 0.05, 0.05]);
        let r2 = dg(&[0.1, 0.3, 0.6]);
        let r3 = dg(&[0.2, 0.7, 0.1]);
        let mix = DensityOperator::mixture(&[0.25, 0.5, 0.25], &[&r1, &r2, &r3]).unwrap();
        let (w, r) = simplex_least_squares(&[r1.matrix(), r2.matrix(), r3.matrix()], mix.matrix(), 3);
        assert!(r < 1e-12, "{r}");
        assert!((w[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_equivalence_examples() {
        let mk = |b0: Vec<DensityOperator>| {
            let n = b0.len();
            let bob = b0.into_iter().map(|s| vec![s.clone(), s]).collect();
            scen(bob, vec![vec![dg(&[0.8, 0.2]), dg(&[0.5, 0.5])]; n])
        };
        let s = mk(vec![dg(&[0.5, 0.5]), dg(&[0.5, 0.5])]);
        assert_eq!(zero_equivalent_pairs(&s, DEFAULT_TOL), vec![(0, 1)]);
        let s = mk(vec![dg(&[1.0, 0.0]), dg(&[0.0, 1.0])]);
        assert!(zero_equivalent_pairs(&s, DEFAULT_TOL).is_empty());
        let s = mk(vec![dg(&[0.5, 0.5]), dg(&[0.5, 0.5]), dg(&[1.0, 0.0])]);
        assert_eq!(zero_equivalent_pairs(&s, DEFAULT_TOL), vec![(0, 1)]);
    }
}
