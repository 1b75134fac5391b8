//! Exact Poisson-Binomial distribution by convolution.

use super::ProjectionError;

fn check(p: f64) -> Result<(), ProjectionError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ProjectionError::ProbabilityOutOfRange(p))
    }
}

/// Full probability mass function of a sum of independent Bernoulli variables.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Result<Vec<f64>, ProjectionError> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        check(p)?;
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(pmf)
}

/// `P(V >= n)` for `V` the sum of independent Bernoulli variables.
///
/// The convolution keeps counts `0..n` plus one absorbing state for "at least
/// `n`", so the tail is accumulated directly and never formed as `1 - cdf`.
pub fn poisson_binomial_tail(probs: &[f64], n: usize) -> Result<f64, ProjectionError> {
    for &p in probs {
        check(p)?;
    }
    if n == 0 {
        return Ok(1.0);
    }
    if n > probs.len() {
        return Ok(0.0);
    }
    let mut dp = vec![0.0; n + 1];
    dp[0] = 1.0;
    for &p in probs {
        dp[n] += dp[n - 1] * p;
        for k in (1..n).rev() {
            dp[k] = dp[k] * (1.0 - p) + dp[k - 1] * p;
        }
        dp[0] *= 1.0 - p;
    }
    Ok(dp[n])
}

/// Binomial(m, q) mass for `k = 0..=min(m, n)` and upper tails
/// `P(B >= t)` for `t = 0..=n`.
fn binomial_blocks(m: u64, q: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let kmax = (m as usize).min(n);
    let mut pmf = vec![0.0; kmax + 1];
    let mut tail = vec![0.0; n + 1];
    if q <= 0.0 {
        pmf[0] = 1.0;
        tail[0] = 1.0;
        return (pmf, tail);
    }
    if q >= 1.0 {
        if (m as usize) <= n {
            pmf[m as usize] = 1.0;
        }
        for t in tail.iter_mut().take((m as usize).min(n) + 1) {
            *t = 1.0;
        }
        return (pmf, tail);
    }
    let log_q = q.ln();
    let log_1q = (-q).ln_1p();
    let log_step = |k: u64| ((m - k) as f64).ln() - ((k + 1) as f64).ln() + log_q - log_1q;

    let mut lp = m as f64 * log_1q;
    for (k, slot) in pmf.iter_mut().enumerate() {
        *slot = lp.exp();
        if (k as u64) < m {
            lp += log_step(k as u64);
        }
    }

    // P(B >= n) for the top state, summed upward past the mode when small.
    let mean = m as f64 * q;
    let top = if (n as u64) > m {
        0.0
    } else if (n as f64) <= mean {
        let below: f64 = pmf.iter().take(n).sum();
        (1.0 - below).max(0.0)
    } else {
        let mut lp = m as f64 * log_1q;
        for k in 0..n as u64 {
            lp += log_step(k);
        }
        let mut sum = 0.0;
        let mut k = n as u64;
        loop {
            let term = lp.exp();
            sum += term;
            if k == m || term <= sum * 1e-18 {
                break;
            }
            lp += log_step(k);
            k += 1;
        }
        sum
    };
    tail[n] = top;
    for t in (0..n).rev() {
        let mass = pmf.get(t).copied().unwrap_or(0.0);
        tail[t] = tail[t + 1] + mass;
    }
    (pmf, tail)
}

/// `P(V >= n)` where `V` sums `count` Bernoulli trials of probability `prob`
/// for every `(count, prob)` group. Each group is one binomial block, so the
/// cost depends on the number of distinct probabilities, not trials.
pub fn grouped_tail(groups: &[(u64, f64)], n: usize) -> Result<f64, ProjectionError> {
    for &(_, p) in groups {
        check(p)?;
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut dp = vec![0.0; n + 1];
    dp[0] = 1.0;
    let mut next = vec![0.0; n + 1];
    for &(m, q) in groups {
        if m == 0 || q == 0.0 {
            continue;
        }
        let (pmf, tail) = binomial_blocks(m, q, n);
        next.iter_mut().for_each(|x| *x = 0.0);
        next[n] = dp[n];
        for s in 0..n {
            if dp[s] == 0.0 {
                continue;
            }
            for (k, &b) in pmf.iter().enumerate().take(n - s) {
                next[s + k] += dp[s] * b;
            }
            next[n] += dp[s] * tail[n - s];
        }
        std::mem::swap(&mut dp, &mut next);
    }
    Ok(dp[n].min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enumerate_tail(probs: &[f64], n: usize) -> f64 {
        let len = probs.len();
        (0u32..1 << len)
            .filter(|mask| mask.count_ones() as usize >= n)
            .map(|mask| (0..len).map(|i| if mask >> i & 1 == 1 { probs[i] } else { 1.0 - probs[i] }).product::<f64>())
            .sum()
    }

    #[test]
    fn binomial_case() {
        assert!((poisson_binomial_tail(&[0.5, 0.5], 1).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn three_trials_by_hand() {
        // Enumeration: P(2) = 0.092, P(3) = 0.006.
        let t = poisson_binomial_tail(&[0.1, 0.2, 0.3], 2).unwrap();
        assert!((t - 0.098).abs() < 1e-15);
    }

    #[test]
    fn zero_count_is_certain() {
        assert_eq!(poisson_binomial_tail(&[0.3, 0.9], 0).unwrap(), 1.0);
        assert_eq!(poisson_binomial_tail(&[], 0).unwrap(), 1.0);
        assert_eq!(poisson_binomial_tail(&[0.3], 2).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(matches!(
            poisson_binomial_tail(&[0.5, 1.5], 1),
            Err(ProjectionError::ProbabilityOutOfRange(p)) if p == 1.5
        ));
        assert!(poisson_binomial_pmf(&[-0.1]).is_err());
        assert!(grouped_tail(&[(2, f64::NAN)], 1).is_err());
    }

    #[test]
    fn tiny_tails_keep_relative_precision() {
        // P(Bin(60, 0.25) >= 55) is about 1e-27; 1 - cdf would round to 0.
        let probs = vec![0.25; 60];
        let t = poisson_binomial_tail(&probs, 55).unwrap();
        let grouped = grouped_tail(&[(60, 0.25)], 55).unwrap();
        assert!(t > 0.0 && t < 1e-20);
        assert!((t - grouped).abs() <= 1e-10 * t);
    }

    #[test]
    fn large_groups_match_direct_convolution() {
        let mut probs = vec![0.01; 3000];
        probs.extend(vec![0.4; 25]);
        probs.extend(vec![0.97; 7]);
        let groups = [(3000, 0.01), (25, 0.4), (7, 0.97)];
        for n in [0, 1, 10, 30, 45, 60, 90] {
            let a = poisson_binomial_tail(&probs, n).unwrap();
            let b = grouped_tail(&groups, n).unwrap();
            assert!((a - b).abs() <= 1e-12 + 1e-9 * a, "n={n}: {a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn matches_enumeration(probs in prop::collection::vec(0.0f64..=1.0, 0..12), n in 0usize..14) {
            let n = n.min(probs.len());
            let t = poisson_binomial_tail(&probs, n).unwrap();
            prop_assert!((t - enumerate_tail(&probs, n)).abs() <= 1e-10);
            let pmf = poisson_binomial_pmf(&probs).unwrap();
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let from_pmf: f64 = pmf[n..].iter().sum();
            prop_assert!((t - from_pmf).abs() <= 1e-12);
        }

        #[test]
        fn tail_is_non_increasing(probs in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            let tails: Vec<f64> = (0..=probs.len()).map(|n| poisson_binomial_tail(&probs, n).unwrap()).collect();
            prop_assert!(tails.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }

        #[test]
        fn grouping_is_exact(
            groups in prop::collection::vec((1u64..40, 0.0f64..=1.0), 1..6),
            n in 0usize..50,
        ) {
            let probs: Vec<f64> = groups.iter().flat_map(|&(m, q)| std::iter::repeat_n(q, m as usize)).collect();
            let a = poisson_binomial_tail(&probs, n).unwrap();
            let b = grouped_tail(&groups, n).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 + 1e-9 * a, "{} vs {}", a, b);
        }
    }
}
