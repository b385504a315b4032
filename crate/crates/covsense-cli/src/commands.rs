use std::collections::BTreeMap;
use std::path::Path;

use covsense::covert_exponent::{
    achievability_kernel, build_input_law, covertness_bound, design_alpha, design_pmf, exact_covertness,
    optimize_exponent, ConstrainedInputLaw, ExponentOptions,
};
use covsense::discriminate::{lemma6_sequence_bound, sequence_count, sequence_error, strategy_error_exact};
use covsense::divergence::expansion_check;
use covsense::geometry::{lemma5_check, ratio_probe};
use covsense::io::{load_scenario, AnalysisOptions, Scenario, ScenarioDocument};
use covsense::rng::task_rng;
use covsense::scenario::check_assumptions;
use covsense::unitary_strategy::{
    build_block_strategy, converse_probes, covertness_certificate, find_orthogonalizer, strategy_zero_error_check,
    zero_error_pgm, UnitaryScenario,
};
use covsense::{CVector, CqScenario, Error, Execution};

use crate::report::{count, num, text, Cell, Report, Table, Units, Value};
use crate::{Command, Failure, Globals};

const DEFAULT_TOL: f64 = 1e-9;
const DEFAULT_SEED: u64 = 0;
const DEFAULT_N: usize = 8;
const DEFAULT_ALPHA: f64 = 0.1;
const DEFAULT_ZETA: f64 = 0.5;
const DEFAULT_TRIALS: usize = 1000;
const DEFAULT_M_MAX: usize = 64;
const DEFAULT_SAMPLES: usize = 64;
const DEFAULT_ALPHAS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];
/// Two-sided 95% normal quantile for the Monte-Carlo interval.
const Z95: f64 = 1.959_963_984_540_054;

type Outcome = Result<(Report, u8), Failure>;

pub fn run(cmd: &Command, g: &Globals) -> Outcome {
    match cmd {
        Command::Check { file } => check(&load(file)?, g),
        Command::Exponent { file, delta, n, lambda } => exponent(&load(file)?, g, *delta, *n, *lambda),
        Command::Simulate {
            file,
            n,
            alpha,
            zeta,
            trials,
            pbar,
        } => {
            let doc = load(file)?;
            let scen = cq(&doc, "simulate")?;
            let o = &doc.options;
            let params = SimParams {
                n: n.or(o.n).unwrap_or(DEFAULT_N),
                alpha: alpha.or(o.alpha).unwrap_or(DEFAULT_ALPHA),
                zeta: zeta.or(o.zeta).unwrap_or(DEFAULT_ZETA),
                trials: trials.or(o.trials).unwrap_or(DEFAULT_TRIALS),
                pbar: pbar
                    .clone()
                    .or_else(|| o.pbar.clone())
                    .unwrap_or_else(|| uniform(scen.n_symbols() - 1)),
            };
            simulate(scen, &params, seed(g, o), g.units)
        }
        Command::Unitary { file, n, m_max, epsilon } => {
            let doc = load(file)?;
            let scen = unitary_scenario(&doc, "unitary")?;
            let o = &doc.options;
            unitary(
                scen,
                n.or(o.n).unwrap_or(DEFAULT_N),
                m_max.or(o.m_max).unwrap_or(DEFAULT_M_MAX),
                *epsilon,
                o.delta,
                seed(g, o),
                g.units,
            )
        }
        Command::Geometry { file, samples } => {
            let doc = load(file)?;
            let scen = unitary_scenario(&doc, "geometry")?;
            let o = &doc.options;
            geometry(scen, samples.or(o.samples).unwrap_or(DEFAULT_SAMPLES), seed(g, o))
        }
        Command::Expand { file, alphas } => {
            let doc = load(file)?;
            let scen = cq(&doc, "expand")?;
            let alphas = alphas
                .clone()
                .or_else(|| doc.options.alphas.clone())
                .unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
            expand(scen, &alphas, g.units)
        }
    }
}

fn load(path: &Path) -> Result<ScenarioDocument, Failure> {
    Ok(load_scenario(path)?)
}

fn cq<'a>(doc: &'a ScenarioDocument, cmd: &str) -> Result<&'a CqScenario, Failure> {
    match &doc.scenario {
        Scenario::Cq(s) => Ok(s),
        Scenario::Unitary(_) => Err(Failure::Usage(format!("{cmd} needs a cq scenario"))),
    }
}

fn unitary_scenario<'a>(doc: &'a ScenarioDocument, cmd: &str) -> Result<&'a UnitaryScenario, Failure> {
    match &doc.scenario {
        Scenario::Unitary(s) => Ok(s),
        Scenario::Cq(_) => Err(Failure::Usage(format!("{cmd} needs a unitary scenario"))),
    }
}

fn tol(g: &Globals, o: &AnalysisOptions) -> f64 {
    g.tol.or(o.tol).unwrap_or(DEFAULT_TOL)
}

fn seed(g: &Globals, o: &AnalysisOptions) -> u64 {
    g.seed.or(o.seed).unwrap_or(DEFAULT_SEED)
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn pair_name(params: &[String], a: usize, b: usize) -> String {
    format!("{}~{}", params[a], params[b])
}

fn column(name: &str, unit: &str) -> (String, String) {
    (name.into(), unit.into())
}

fn check(doc: &ScenarioDocument, g: &Globals) -> Outcome {
    let tol = tol(g, &doc.options);
    match &doc.scenario {
        Scenario::Cq(s) => check_cq(s, tol),
        Scenario::Unitary(s) => check_unitary(s, &doc.options, tol),
    }
}

fn check_cq(scen: &CqScenario, tol: f64) -> Outcome {
    let a = check_assumptions(scen, tol)?;
    let params = scen.params();
    let mut r = Report::new("check");
    r.section(
        "scenario",
        vec![
            ("kind", text("cq")),
            ("parameters", count(scen.n_params())),
            ("symbols", count(scen.n_symbols())),
            ("innocent_symbol", text(scen.alphabet()[0].clone())),
            ("dim_bob", count(scen.dim_bob())),
            ("dim_willie", count(scen.dim_willie())),
            ("tol", num(tol, "dimensionless")),
        ],
    );
    let pairs: Vec<String> = a.zero_equiv_pairs.iter().map(|&(x, y)| pair_name(params, x, y)).collect();
    let tilde: Vec<&str> = a.theta_tilde.iter().map(|&t| params[t].as_str()).collect();
    r.section(
        "assumptions",
        vec![
            ("indistinguishable_pair", Value::Bool(a.flag_indistinguishable.holds)),
            ("indistinguishable_pair_detail", text(a.flag_indistinguishable.diagnostic.clone())),
            ("non_simulable", Value::Bool(a.flag_non_simulable.holds)),
            ("non_simulable_detail", text(a.flag_non_simulable.diagnostic.clone())),
            ("innocent_support", Value::Bool(a.flag_support.holds)),
            ("innocent_support_detail", text(a.flag_support.diagnostic.clone())),
            ("zero_equivalent_pairs", text(join(&pairs))),
            ("theta_tilde", text(join(&tilde))),
            ("all_hold", Value::Bool(a.all_hold())),
        ],
    );
    let mut cols = vec![
        column("theta", ""),
        column("residual", "dimensionless"),
        column("lambda_min", "dimensionless"),
    ];
    for u in &scen.alphabet()[1..] {
        cols.push(column(&format!("weight_{u}"), "probability"));
    }
    let rows = a
        .simulability
        .iter()
        .map(|f| {
            let mut row = vec![
                Cell::Text(params[f.theta].clone()),
                Cell::Num(f.residual),
                Cell::Num(a.lambda_min_table[f.theta]),
            ];
            row.extend(f.weights.iter().map(|&w| Cell::Num(w)));
            row
        })
        .collect();
    r.table(Table {
        name: "simulability".into(),
        columns: cols,
        rows,
    });
    let code = if a.all_hold() { 0 } else { 2 };
    Ok((r, code))
}

fn check_unitary(scen: &UnitaryScenario, o: &AnalysisOptions, tol: f64) -> Outcome {
    let m_max = o.m_max.unwrap_or(DEFAULT_M_MAX);
    let params = scen.params();
    let mut r = Report::new("check");
    r.section(
        "scenario",
        vec![
            ("kind", text("unitary")),
            ("parameters", count(scen.n_params())),
            ("dim", count(scen.dim())),
            ("willie_dim_out", count(scen.willie().dim_out())),
            ("willie_kraus_operators", count(scen.willie().kraus().len())),
            ("innocent_output_lambda_min", num(scen.innocent_output().lambda_min(), "dimensionless")),
            ("tol", num(tol, "dimensionless")),
            ("m_max", count(m_max)),
        ],
    );
    let mut rows = Vec::new();
    let mut all_found = true;
    for a in 0..scen.n_params() {
        for b in a + 1..scen.n_params() {
            let v = scen.unitary(a).adjoint() * scen.unitary(b);
            let (m, overlap, status) = match find_orthogonalizer(&v, m_max) {
                Ok(o) => (o.m as f64, o.overlap, "ok".to_string()),
                Err(e @ (Error::IdentityUnitary | Error::MNotFound(_))) => {
                    all_found = false;
                    (f64::NAN, f64::NAN, e.to_string())
                }
                Err(e) => return Err(e.into()),
            };
            rows.push(vec![
                Cell::Text(pair_name(params, a, b)),
                Cell::Num(m),
                Cell::Num(overlap),
                Cell::Text(status),
            ]);
        }
    }
    r.section("assumptions", vec![("all_pairs_orthogonalizable", Value::Bool(all_found))]);
    r.table(Table {
        name: "orthogonalizers".into(),
        columns: vec![
            column("pair", ""),
            column("m", "count"),
            column("overlap", "dimensionless"),
            column("status", ""),
        ],
        rows,
    });
    Ok((r, if all_found { 0 } else { 2 }))
}

fn exponent(doc: &ScenarioDocument, g: &Globals, delta: Option<f64>, n: Option<usize>, lambda: f64) -> Outcome {
    let scen = cq(doc, "exponent")?;
    let o = &doc.options;
    let u = g.units;
    let tol = tol(g, o);
    let analysis = check_assumptions(scen, tol)?;
    if !analysis.all_hold() {
        let failed: Vec<&str> = [
            (&analysis.flag_indistinguishable, "indistinguishable_pair"),
            (&analysis.flag_non_simulable, "non_simulable"),
            (&analysis.flag_support, "innocent_support"),
        ]
        .iter()
        .filter(|(f, _)| !f.holds)
        .map(|(f, name)| {
            eprintln!("{name}: {}", f.diagnostic);
            *name
        })
        .collect();
        if !analysis.flag_indistinguishable.holds {
            return Err(Error::NoZeroEquivalentPair.into());
        }
        return Err(Error::AssumptionViolated(failed.join(", ")).into());
    }
    let opts = ExponentOptions {
        tol,
        seed: seed(g, o),
        ..Default::default()
    };
    let rep = optimize_exponent(scen, &opts)?;
    let params = scen.params();
    let mut r = Report::new("exponent");
    r.section(
        "exponent",
        vec![
            ("achievable_rate", num(u.conv_rate(rep.achievable_rate), u.rate_unit())),
            ("worst_eta", u.ent(rep.worst_eta)),
            ("worst_eta_theta", text(params[rep.worst_eta_theta].clone())),
        ],
    );
    r.table(Table {
        name: "p_star".into(),
        columns: vec![column("symbol", ""), column("weight", "probability")],
        rows: scen.alphabet()[1..]
            .iter()
            .zip(&rep.p_star)
            .map(|(s, &w)| vec![Cell::Text(s.clone()), Cell::Num(w)])
            .collect(),
    });
    r.table(Table {
        name: "pair_dcc".into(),
        columns: vec![column("pair", ""), column("dcc", u.info()), column("s_star", "dimensionless")],
        rows: rep
            .per_pair_dcc
            .iter()
            .map(|p| {
                vec![
                    Cell::Text(pair_name(params, p.theta, p.theta_prime)),
                    Cell::Num(u.conv(p.value)),
                    Cell::Num(p.s_star),
                ]
            })
            .collect(),
    });
    if let (Some(delta), Some(n)) = (delta.or(o.delta), n.or(o.n)) {
        if !(delta > 0.0) || n == 0 || !(0.0..1.0).contains(&lambda) {
            return Err(Failure::Usage("design needs δ > 0, n ≥ 1 and λ in [0, 1)".into()));
        }
        let alpha = design_alpha(delta, lambda, n, rep.worst_eta);
        let min_dcc = rep.per_pair_dcc.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
        r.section(
            "design",
            vec![
                ("delta", u.ent(delta)),
                ("n", count(n)),
                ("lambda", num(lambda, "dimensionless")),
                ("alpha_n", num(alpha, "probability")),
                ("predicted_exponent", u.ent(alpha * n as f64 * min_dcc)),
            ],
        );
    }
    Ok((r, 0))
}

struct SimParams {
    n: usize,
    alpha: f64,
    zeta: f64,
    trials: usize,
    pbar: Vec<f64>,
}

/// Run an exact computation, turning a scale limit into a "skipped" note.
fn exact_or_skip<T>(res: covsense::Result<T>) -> Result<Result<T, String>, Failure> {
    match res {
        Ok(v) => Ok(Ok(v)),
        Err(Error::ScaleExceeded(m)) => Ok(Err(m)),
        Err(e) => Err(e.into()),
    }
}

fn simulate(scen: &CqScenario, p: &SimParams, seed: u64, u: Units) -> Outcome {
    if p.pbar.len() + 1 != scen.n_symbols() {
        return Err(Failure::Usage(format!(
            "pbar has {} entries, expected {}",
            p.pbar.len(),
            scen.n_symbols() - 1
        )));
    }
    let law = build_input_law(&design_pmf(&p.pbar, p.alpha), p.alpha, p.zeta, p.n)?;
    let params = scen.params();
    let mut r = Report::new("simulate");
    r.section(
        "law",
        vec![
            ("n", count(p.n)),
            ("alpha", num(p.alpha, "probability")),
            ("zeta", num(p.zeta, "dimensionless")),
            ("pbar", text(join(&p.pbar))),
            ("admissible_types", count(law.types_q.len())),
            ("type_ball_mass", num(law.mass_a, "probability")),
            ("sequences", num(sequence_count(&law) as f64, "count")),
            ("seed", num(seed as f64, "count")),
        ],
    );

    let mut exact: Vec<(&str, Value)> = Vec::new();
    match exact_or_skip(exact_covertness(scen, &law))? {
        Ok(v) => exact.push(("covertness", u.ent(v))),
        Err(m) => exact.push(("covertness_skipped", text(m))),
    }
    let bound = covertness_bound(scen, &law)?;
    exact.push(("covertness_bound", u.ent(bound.value)));
    exact.push(("deviation_epsilon", num(bound.epsilon, "dimensionless")));
    let strategy = exact_or_skip(strategy_error_exact(scen, &law))?;
    match &strategy {
        Ok(res) => {
            exact.push(("error", num(res.error, "probability")));
            exact.push(("method", text(format!("{:?}", res.method).to_lowercase())));
        }
        Err(m) => exact.push(("error_skipped", text(m.clone()))),
    }
    match exact_or_skip(lemma6_sequence_bound(scen, &law))? {
        Ok(v) => exact.push(("union_error_bound", num(v, "dimensionless"))),
        Err(m) => exact.push(("union_error_bound_skipped", text(m))),
    }
    r.section("exact", exact);
    if let Ok(res) = &strategy {
        r.table(Table {
            name: "exact_error".into(),
            columns: vec![column("theta", ""), column("error", "probability")],
            rows: res
                .per_theta_error
                .iter()
                .enumerate()
                .map(|(t, &e)| vec![Cell::Text(params[t].clone()), Cell::Num(e)])
                .collect(),
        });
    }
    r.table(Table {
        name: "covertness_terms".into(),
        columns: vec![
            column("theta", ""),
            column("divergence_term", u.info()),
            column("deviation_term", u.info()),
            column("entropy_term", u.info()),
            column("total", u.info()),
        ],
        rows: bound
            .per_theta
            .iter()
            .map(|t| {
                vec![
                    Cell::Text(params[t.theta].clone()),
                    Cell::Num(u.conv(t.divergence_term)),
                    Cell::Num(u.conv(t.deviation_term)),
                    Cell::Num(u.conv(t.entropy_term)),
                    Cell::Num(u.conv(t.total)),
                ]
            })
            .collect(),
    });
    r.table(Table {
        name: "kernels".into(),
        columns: vec![
            column("pair", ""),
            column("zero_equivalent", ""),
            column("kernel", u.info()),
            column("slack", ""),
        ],
        rows: achievability_kernel(scen, &law)?
            .iter()
            .map(|k| {
                vec![
                    Cell::Text(pair_name(params, k.theta, k.theta_prime)),
                    Cell::Text(k.zero_equivalent.to_string()),
                    Cell::Num(u.conv(k.kernel)),
                    Cell::Text(k.slack.clone()),
                ]
            })
            .collect(),
    });
    if p.trials > 0 {
        monte_carlo(scen, &law, p.trials, seed, &mut r)?;
    }
    Ok((r, 0))
}

/// Per-θ error averaged over sampled input sequences. The error of a
/// sequence depends only on its type, so each distinct type is evaluated once.
fn monte_carlo(
    scen: &CqScenario,
    law: &ConstrainedInputLaw,
    trials: usize,
    seed: u64,
    r: &mut Report,
) -> Result<(), Failure> {
    let mut by_type: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for t in 0..trials {
        let mut rng = task_rng(seed, t as u64);
        let mut seq = covsense::covert_exponent::sample_input_with(law, &mut rng);
        seq.sort_unstable();
        *by_type.entry(seq).or_insert(0) += 1;
    }
    let keys: Vec<&Vec<usize>> = by_type.keys().collect();
    let errors = Execution::default().map_slice(&keys, |seq| sequence_error(scen, seq));
    let k = scen.n_params();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for (errs, (_, &hits)) in errors.into_iter().zip(&by_type) {
        let errs = errs?;
        for t in 0..k {
            let e = errs.per_theta_error[t];
            sum[t] += hits as f64 * e;
            sum_sq[t] += hits as f64 * e * e;
        }
    }
    let nf = trials as f64;
    let params = scen.params();
    let rows: Vec<Vec<Cell>> = (0..k)
        .map(|t| {
            let mean = sum[t] / nf;
            let var = if trials > 1 {
                ((sum_sq[t] - nf * mean * mean) / (nf - 1.0)).max(0.0)
            } else {
                0.0
            };
            let half = Z95 * (var / nf).sqrt();
            vec![
                Cell::Text(params[t].clone()),
                Cell::Num(mean),
                Cell::Num((mean - half).max(0.0)),
                Cell::Num((mean + half).min(1.0)),
            ]
        })
        .collect();
    let worst = (0..k).map(|t| sum[t] / nf).fold(0.0, f64::max);
    r.section(
        "monte_carlo",
        vec![
            ("trials", count(trials)),
            ("distinct_types", count(by_type.len())),
            ("error", num(worst, "probability")),
        ],
    );
    r.table(Table {
        name: "monte_carlo_error".into(),
        columns: vec![
            column("theta", ""),
            column("error", "probability"),
            column("ci95_low", "probability"),
            column("ci95_high", "probability"),
        ],
        rows,
    });
    Ok(())
}

fn unitary(
    scen: &UnitaryScenario,
    n: usize,
    m_max: usize,
    epsilon: Option<f64>,
    delta: Option<f64>,
    seed: u64,
    u: Units,
) -> Outcome {
    let st = build_block_strategy(scen, n, m_max)?;
    let params = scen.params();
    let mut r = Report::new("unitary");
    r.section(
        "strategy",
        vec![
            ("n", count(st.n)),
            ("m", count(st.m)),
            ("ell", count(st.ell)),
            ("local_dim", count(st.local_dim)),
        ],
    );
    let overlaps = strategy_zero_error_check(&st, scen);
    r.table(Table {
        name: "pairs".into(),
        columns: vec![
            column("pair", ""),
            column("m", "count"),
            column("probe_overlap", "dimensionless"),
            column("global_overlap", "dimensionless"),
        ],
        rows: st
            .pairs
            .iter()
            .zip(&overlaps)
            .map(|(p, o)| {
                vec![
                    Cell::Text(pair_name(params, p.theta, p.theta_prime)),
                    Cell::Num(p.orth.m as f64),
                    Cell::Num(p.orth.overlap),
                    Cell::Num(o.overlap),
                ]
            })
            .collect(),
    });
    let mut err = Vec::new();
    match exact_or_skip(zero_error_pgm(&st, scen))? {
        Ok(res) => err.push(("pgm_error", num(res.error, "probability"))),
        Err(m) => err.push(("pgm_error_skipped", text(m))),
    }
    r.section("discrimination", err);
    let cert = covertness_certificate(&st, scen)?;
    let mut cfields = vec![
        ("chi2", num(cert.chi2, "dimensionless")),
        ("chi2_bound", u.ent(cert.chi2_bound)),
        ("coarse_bound", u.ent(cert.coarse_bound)),
        ("lambda_min", num(cert.lambda_min, "dimensionless")),
    ];
    match (cert.exact, cert.exact_skipped) {
        (Some(x), _) => cfields.push(("exact", u.ent(x))),
        (None, Some(m)) => cfields.push(("exact_skipped", text(m))),
        (None, None) => {}
    }
    r.section("covertness", cfields);
    if let Some(eps) = epsilon {
        if !(0.0..=0.5).contains(&eps) {
            return Err(Failure::Usage("--epsilon must lie in [0, 1/2]".into()));
        }
        let marginals = st.marginals(scen)?;
        let c = converse_probes(&marginals, scen, eps, delta, seed)?;
        let mut fields = vec![
            ("epsilon_claim", num(eps, "probability")),
            ("single_letter_sum", u.ent(c.step3_sum)),
            ("trace_distance_sum", num(c.trace_distance_sum, "dimensionless")),
            ("trace_distance_root", num(c.step2_value, "dimensionless")),
            ("trace_distance_bound", num(c.step2_bound, "dimensionless")),
            ("ratio_constant", num(c.ratio_constant, "dimensionless")),
            ("delta_floor", u.ent(c.delta_floor)),
            ("epsilon_floor", num(c.epsilon_floor, "dimensionless")),
            ("violation", Value::Bool(c.violation)),
            ("diagnostic", text(c.diagnostic)),
        ];
        if let Some(d) = delta {
            fields.insert(1, ("delta_claim", u.ent(d)));
        }
        r.section("converse", fields);
    }
    Ok((r, 0))
}

fn geometry(scen: &UnitaryScenario, samples: usize, seed: u64) -> Outcome {
    let v = lemma5_check(scen.willie(), scen.innocent(), seed)?;
    let d = scen.dim();
    let witness = v
        .witness_direction
        .as_ref()
        .map(|w| CVector::from_iterator(d, w.iter().map(|p| covsense::qmat::c(p[0], p[1]))));
    let probe = ratio_probe(
        scen.willie(),
        scen.innocent(),
        samples,
        seed,
        witness.as_ref(),
        Execution::default(),
    )?;
    let mut r = Report::new("geometry");
    let direction = v
        .witness_direction
        .as_ref()
        .map(|w| w.iter().map(|p| format!("{}{:+}i", p[0], p[1])).collect::<Vec<_>>().join(" "))
        .unwrap_or_else(|| "none".into());
    let mut fields = vec![
        ("verdict", text(format!("{:?}", v.verdict).to_lowercase())),
        ("kernel_dim", count(v.kernel_dim)),
        ("intersection_dim", count(v.intersection_dim)),
        ("witness_direction", text(direction)),
        ("precondition_verified", Value::Bool(v.precondition.verified)),
        ("min_output_distance", num(v.precondition.min_output_distance, "trace norm")),
        ("precondition_samples", count(v.precondition.samples)),
    ];
    if let Some(w) = &v.warning {
        fields.push(("warning", text(w.clone())));
    }
    r.section("boundedness", fields);
    r.section(
        "probe",
        vec![
            ("samples", count(samples)),
            ("trend", text(format!("{:?}", probe.trend).to_lowercase())),
            ("sup_ratio", num(probe.sup, "dimensionless")),
        ],
    );
    r.table(Table {
        name: "ratio_probe".into(),
        columns: vec![
            column("k", "count"),
            column("distance", "trace norm"),
            column("random_max", "dimensionless"),
            column("witness_ratio", "dimensionless"),
            column("running_max", "dimensionless"),
        ],
        rows: probe
            .rows
            .iter()
            .map(|row| {
                vec![
                    Cell::Num(row.k as f64),
                    Cell::Num(row.distance),
                    Cell::Num(row.random_max),
                    Cell::Num(row.witness_ratio.unwrap_or(f64::NAN)),
                    Cell::Num(row.running_max),
                ]
            })
            .collect(),
    });
    Ok((r, 0))
}

fn expand(scen: &CqScenario, alphas: &[f64], u: Units) -> Outcome {
    let params = scen.params();
    let mut rows = Vec::new();
    for t in 0..scen.n_params() {
        for s in 1..scen.n_symbols() {
            for row in expansion_check(scen.willie(t, s), scen.willie(t, 0), alphas)? {
                rows.push(vec![
                    Cell::Text(params[t].clone()),
                    Cell::Text(scen.alphabet()[s].clone()),
                    Cell::Num(row.alpha),
                    Cell::Num(u.conv(row.divergence)),
                    Cell::Num(u.conv(row.second_order)),
                    Cell::Num(u.conv(row.residual)),
                    Cell::Num(if row.alpha > 0.0 { row.residual / row.alpha.powi(2) } else { 0.0 }),
                ]);
            }
        }
    }
    let mut r = Report::new("expand");
    r.section("parameters", vec![("alphas", text(join(alphas)))]);
    r.table(Table {
        name: "expansion".into(),
        columns: vec![
            column("theta", ""),
            column("symbol", ""),
            column("alpha", "probability"),
            column("divergence", u.info()),
            column("second_order", u.info()),
            column("residual", u.info()),
            column("residual_over_alpha2", u.info()),
        ],
        rows,
    });
    Ok((r, 0))
}
