//! Method-of-types arithmetic in log space.

/// ln k! for k = 0..=n.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// ln of the multinomial coefficient n!/(Π k_u!).
pub fn ln_multinomial(counts: &[usize], lnf: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    lnf[n] - counts.iter().map(|&k| lnf[k]).sum::<f64>()
}

/// ln P^⊗n(T_Q) for the type class with the given counts; −∞ if the class
/// needs a symbol of zero probability.
pub fn ln_type_mass(counts: &[usize], p: &[f64], lnf: &[f64]) -> f64 {
    let mut acc = ln_multinomial(counts, lnf);
    for (&k, &pu) in counts.iter().zip(p) {
        if k > 0 {
            if pu <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += k as f64 * pu.ln();
        }
    }
    acc
}

pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// All count vectors of length `k` summing to `n`, in lexicographic order.
pub fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in 0..=left {
            cur.push(x);
            rec(left - x, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        if n == 0 {
            out.push(vec![]);
        }
        return out;
    }
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// Number of count vectors of length `k` summing to `n`, saturating.
pub fn composition_count(n: usize, k: usize) -> u128 {
    if k == 0 {
        return u128::from(n == 0);
    }
    // C(n + k - 1, k - 1)
    let mut acc: u128 = 1;
    for i in 0..(k as u128 - 1) {
        acc = acc.saturating_mul(n as u128 + 1 + i) / (i + 1);
    }
    acc
}
