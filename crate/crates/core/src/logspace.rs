//! Log-domain accumulation.

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSum {
    sum: f64,
    comp: f64,
}

impl ExactSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln(sum(exp(x)))` over the finite entries; `-inf` when there are none.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = ExactSum::default();
    for &v in values {
        if v > f64::NEG_INFINITY {
            acc.add((v - max).exp());
        }
    }
    max + acc.value().ln()
}

/// Streaming `log_sum_exp` that rescales when a larger term arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogAccumulator {
    max: f64,
    acc: ExactSum,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        LogAccumulator {
            max: f64::NEG_INFINITY,
            acc: ExactSum::default(),
        }
    }
}

impl LogAccumulator {
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            let scale = (self.max - v).exp();
            let old = self.acc.value() * scale;
            self.acc = ExactSum::default();
            self.acc.add(old);
            self.max = v;
        }
        self.acc.add((v - self.max).exp());
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.value().ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_all_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn large_magnitudes_do_not_overflow() {
        let v = log_sum_exp(&[5000.0, 5000.0]);
        assert!((v - (5000.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[-5000.0, -5000.0 + 1e-3]);
        assert!(v.is_finite());
    }

    #[test]
    fn streaming_matches_batch() {
        let xs = [-3.0, 2.0, 0.5, -700.0, 40.0, 39.5, f64::NEG_INFINITY];
        let mut acc = LogAccumulator::default();
        xs.iter().for_each(|&x| acc.add(x));
        assert!((acc.value() - log_sum_exp(&xs)).abs() < 1e-13);
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = ExactSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        assert!((s.value() - (1.0 + 1e-14)).abs() < 1e-16);
    }
}
