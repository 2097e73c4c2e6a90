//! Small numerical helpers shared by the estimators.

use rand::Rng;

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// `x ln x` with the limit 0 at the origin.
pub fn xlogx(x: f64) -> f64 {
    if x <= 1e-300 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `x ln(x / y)` with the limit 0 at `x = 0`.
pub fn xlogxy(x: f64, y: f64) -> f64 {
    if x <= 1e-300 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Binary entropy in nats.
pub fn entropy2(a: f64) -> f64 {
    -xlogx(a) - xlogx(1.0 - a)
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn ln_choose(n: u64, r: u64) -> f64 {
    if r > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(r) - ln_factorial(n - r)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Exact binomial coefficient as a float (fine for the small n used here).
pub fn choose(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut c = 1.0;
    for i in 0..r {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Binomial(n, p) probability mass table.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|r| choose(n, r) * p.powi(r as i32) * (1.0 - p).powi((n - r) as i32))
        .collect()
}

/// Inverse-CDF sampler over a finite set of weights.
#[derive(Clone, Debug)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    /// Weights must be nonnegative with positive sum; they are normalized.
    pub fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Categorical { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
        self
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Mean of positive quantities given by their logarithms, kept in log space.
///
/// Tracks `ln Σ x` and `ln Σ x²` so the delta-method error of `ln mean`
/// comes out without ever leaving log space.
#[derive(Clone, Copy, Debug)]
pub struct LogMean {
    pub n: u64,
    ln_s1: f64,
    ln_s2: f64,
}

impl Default for LogMean {
    fn default() -> Self {
        LogMean {
            n: 0,
            ln_s1: f64::NEG_INFINITY,
            ln_s2: f64::NEG_INFINITY,
        }
    }
}

impl LogMean {
    pub fn push_ln(&mut self, ln_x: f64) {
        self.n += 1;
        self.ln_s1 = log_add_exp(self.ln_s1, ln_x);
        self.ln_s2 = log_add_exp(self.ln_s2, 2.0 * ln_x);
    }

    pub fn merge(self, o: LogMean) -> LogMean {
        LogMean {
            n: self.n + o.n,
            ln_s1: log_add_exp(self.ln_s1, o.ln_s1),
            ln_s2: log_add_exp(self.ln_s2, o.ln_s2),
        }
    }

    /// Logarithm of the sample mean.
    pub fn ln_mean(&self) -> f64 {
        self.ln_s1 - (self.n as f64).ln()
    }

    /// Delta-method standard error of `ln_mean`.
    pub fn ln_mean_stderr(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 {
            return f64::INFINITY;
        }
        // relative variance: E[x²]/E[x]² − 1
        let rel = (self.ln_s2 - 2.0 * self.ln_s1 + n.ln()).exp() - 1.0;
        (rel.max(0.0) * n / (n - 1.0) / n).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.ln_s1 == f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct() {
        let xs = [0.1f64, -2.0, 3.5];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
        assert!((log_add_exp(0.1, -2.0) - (0.1f64.exp() + (-2.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_factorials() {
        let mut f = 1.0f64;
        for n in 1..30u64 {
            f *= n as f64;
            assert!((ln_factorial(n) - f.ln()).abs() < 1e-12 * f.ln().max(1.0));
        }
        assert!((choose(10, 3) - 120.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_is_inverse_of_logit() {
        for &p in &[1e-12, 0.3, 0.5, 0.99] {
            assert!((logistic(logit(p)) - p).abs() < 1e-15);
        }
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
    }

    #[test]
    fn log_mean_agrees_with_plain_mean() {
        let xs = [0.5f64, 1.5, 2.0, 4.0];
        let mut acc = LogMean::default();
        let mut m = Moments::default();
        for &x in &xs {
            acc.push_ln(x.ln());
            m.push(x);
        }
        assert!((acc.ln_mean() - m.mean().ln()).abs() < 1e-14);
        let se = m.stderr() / m.mean();
        assert!((acc.ln_mean_stderr() - se).abs() < 1e-12);
    }

    #[test]
    fn moments_merge() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut all = Moments::default();
        for i in 0..10 {
            let x = (i as f64).sin();
            if i < 4 {
                a.push(x)
            } else {
                b.push(x)
            }
            all.push(x);
        }
        let m = a.merge(b);
        assert!((m.mean() - all.mean()).abs() < 1e-15);
        assert!((m.variance() - all.variance()).abs() < 1e-14);
    }
}
