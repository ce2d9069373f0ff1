//! Small statistics helpers shared by estimators and tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Online mean/variance accumulator (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 when fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n > 0 {
            (self.variance() / self.n as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Bernoulli counter with the binomial standard error.
#[derive(Clone, Copy, Debug, Default)]
pub struct BernoulliCounter {
    pub successes: u64,
    pub trials: u64,
}

impl BernoulliCounter {
    pub fn push(&mut self, success: bool) {
        self.trials += 1;
        if success {
            self.successes += 1;
        }
    }

    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.successes as f64 / self.trials as f64
    }

    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.estimate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Result of a Pearson chi-square goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test of observed counts against expected probabilities.
///
/// Cells whose expected count falls below `min_expected` are pooled into a
/// single tail cell so the asymptotic distribution is trustworthy.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    for (&obs, &p) in observed.iter().zip(expected_probs) {
        let exp = p * n;
        if exp < min_expected {
            pooled_obs += obs as f64;
            pooled_exp += exp;
        } else {
            stat += (obs as f64 - exp).powi(2) / exp;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: chi_square_pvalue(stat, dof as f64),
    }
}

/// Two-sample chi-square test that two sets of counts come from one law.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (na, nb) = (na as f64, nb as f64);
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pool = [0.0f64; 4]; // pooled obs_a, exp_a, obs_b, exp_b
    for (&ca, &cb) in a.iter().zip(b) {
        let tot = (ca + cb) as f64;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        if ea < min_expected || eb < min_expected {
            pool[0] += ca as f64;
            pool[1] += ea;
            pool[2] += cb as f64;
            pool[3] += eb;
        } else {
            stat += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
            cells += 1;
        }
    }
    if pool[1] > 0.0 && pool[3] > 0.0 {
        stat += (pool[0] - pool[1]).powi(2) / pool[1] + (pool[2] - pool[3]).powi(2) / pool[3];
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: chi_square_pvalue(stat, dof as f64),
    }
}

pub fn chi_square_pvalue(stat: f64, dof: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof).expect("valid dof");
    1.0 - dist.cdf(stat)
}

/// Total-variation distance between two empirical distributions given as
/// count maps over a common index set.
pub fn total_variation(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let mut tv = 0.0;
    for (&ca, &cb) in a.iter().zip(b) {
        tv += (ca as f64 / na as f64 - cb as f64 / nb as f64).abs();
    }
    tv / 2.0
}
