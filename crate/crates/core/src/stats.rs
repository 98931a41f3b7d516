//! Goodness-of-fit tests and batch-means error bars.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for chi-square tests.
    pub dof: Option<usize>,
}

impl TestOutcome {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Kolmogorov distribution tail `P(K > lambda)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_tail((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestOutcome> {
    if samples.is_empty() {
        return Err(Error::Input("KS test needs samples".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestOutcome {
        statistic: d,
        p_value: ks_p(d, n),
        dof: None,
    })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("KS test needs samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestOutcome {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
        dof: None,
    })
}

fn chi_square_p(stat: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map_or(f64::NAN, |c| c.sf(stat))
}

/// Pearson goodness of fit. `probs` must sum to one over the listed bins.
/// Adjacent bins are merged from the right until every expected count is
/// at least 5.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if observed.len() != probs.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: observed.len(),
        });
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::Input("chi-square test needs samples".into()));
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in observed.iter().zip(probs) {
        o += c as f64;
        e += p * n as f64;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::Input("too few samples for a chi-square test".into()));
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    Ok(TestOutcome {
        statistic: stat,
        p_value: chi_square_p(stat, dof),
        dof: Some(dof),
    })
}

/// Pearson test of independence on a contingency table. Empty rows and
/// columns are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestOutcome> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::Input("ragged contingency table".into()));
    }
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let col_sum: Vec<u64> = (0..cols).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let keep: Vec<usize> = (0..cols).filter(|&j| col_sum[j] > 0).collect();
    if rows.len() < 2 || keep.len() < 2 {
        return Err(Error::Input("contingency table needs two non-empty rows and columns".into()));
    }
    let n: f64 = col_sum.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    for r in &rows {
        let rs: f64 = r.iter().sum::<u64>() as f64;
        for &j in &keep {
            let e = rs * col_sum[j] as f64 / n;
            let d = r[j] as f64 - e;
            stat += d * d / e;
        }
    }
    let dof = (rows.len() - 1) * (keep.len() - 1);
    Ok(TestOutcome {
        statistic: stat,
        p_value: chi_square_p(stat, dof),
        dof: Some(dof),
    })
}

/// Bins for a law on `{1, 2, ...}`: counts of `1..=k` and a tail bin, with
/// `k` the last value whose expected count under `pmf` is at least 5.
pub fn integer_bins(samples: &[u64], pmf: impl Fn(u64) -> f64) -> (Vec<u64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut probs = Vec::new();
    let mut mass = 0.0;
    let mut k = 1;
    loop {
        let p = pmf(k);
        if p * n < 5.0 || k > 100_000 {
            break;
        }
        probs.push(p);
        mass += p;
        k += 1;
    }
    probs.push((1.0 - mass).max(0.0));
    let last = probs.len() - 1;
    let mut counts = vec![0u64; probs.len()];
    for &s in samples {
        let i = (s.max(1) - 1) as usize;
        counts[i.min(last)] += 1;
    }
    (counts, probs)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Default number of batches.
pub const BATCHES: usize = 20;
/// Fewer batches than this and no error bar is reported.
pub const MIN_BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchMeansCI {
    pub estimate: f64,
    /// NaN when fewer than [`MIN_BATCHES`] batches were available.
    pub std_error: f64,
    pub batches: usize,
    pub batch_size: usize,
}

impl BatchMeansCI {
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.std_error
    }
}

/// Batch means for a ratio `sum(num) / sum(den)` over consecutive units
/// (cycles or time segments). The point estimate is passed in so it is the
/// run's own estimator; the error uses the delta method on batch totals.
/// Leftover units go to the last batch.
pub fn batch_means(estimate: f64, num: &[f64], den: &[f64], batches: usize) -> BatchMeansCI {
    let n = num.len().min(den.len());
    let b = batches.min(n);
    if b < MIN_BATCHES {
        return BatchMeansCI {
            estimate,
            std_error: f64::NAN,
            batches: b,
            batch_size: n.checked_div(b).unwrap_or(0),
        };
    }
    let size = n / b;
    let mut f = vec![0.0; b];
    let mut t = vec![0.0; b];
    for i in 0..n {
        let k = (i / size).min(b - 1);
        f[k] += num[i];
        t[k] += den[i];
    }
    let t_bar = t.iter().sum::<f64>() / b as f64;
    let ss: f64 = f
        .iter()
        .zip(&t)
        .map(|(f, t)| {
            let e = f - estimate * t;
            e * e
        })
        .sum();
    BatchMeansCI {
        estimate,
        std_error: (ss / (b * (b - 1)) as f64).sqrt() / t_bar,
        batches: b,
        batch_size: size,
    }
}

/// Whether `|a - b|` is within `k` joint standard errors.
pub fn within(a: f64, se_a: f64, b: f64, se_b: f64, k: f64) -> bool {
    (a - b).abs() <= k * (se_a * se_a + se_b * se_b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn ks_accepts_uniform_and_rejects_shift() {
        let mut r = RngStream::new(1, 1);
        let u: Vec<f64> = (0..5000).map(|_| r.uniform()).collect();
        assert!(ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).unwrap().passes(0.01));
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.9).collect();
        assert!(!ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).unwrap().passes(0.01));
        let v: Vec<f64> = (0..3000).map(|_| r.uniform()).collect();
        assert!(ks_two_sample(&u, &v).unwrap().passes(0.01));
        assert!(!ks_two_sample(&shifted, &v).unwrap().passes(0.01));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // standard table: P(K > 1.36) ~ 0.05, P(K > 1.63) ~ 0.01
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn chi_square_examples() {
        let t = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = chi_square_gof(&[90, 10], &[0.5, 0.5]).unwrap();
        assert!(t.p_value < 1e-10);
        let t = chi_square_independence(&[vec![10, 20], vec![20, 40]]).unwrap();
        assert!(t.statistic.abs() < 1e-12);
        let t = chi_square_independence(&[vec![30, 0], vec![0, 30]]).unwrap();
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn geometric_bins_cover_everything() {
        let p = 0.3f64;
        let pmf = |k: u64| p * (1.0 - p).powi(k as i32 - 1);
        let samples = vec![1, 2, 3, 50, 1, 1];
        let (c, q) = integer_bins(&samples, pmf);
        assert_eq!(c.iter().sum::<u64>(), 6);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_estimate_is_untouched() {
        let num: Vec<f64> = (0..95).map(|i| (i % 7) as f64).collect();
        let den = vec![1.0; 95];
        let est = num.iter().sum::<f64>() / 95.0;
        let ci = batch_means(est, &num, &den, BATCHES);
        assert_eq!(ci.estimate.to_bits(), est.to_bits());
        assert_eq!((ci.batches, ci.batch_size), (20, 4));
        assert!(ci.std_error > 0.0);
        assert!(batch_means(est, &num[..5], &den[..5], BATCHES).std_error.is_nan());
    }
}
