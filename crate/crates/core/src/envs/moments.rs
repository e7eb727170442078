/// Welford accumulator of per-dimension count, mean and squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = x - *mean;
            *mean += d / n;
            *m2 += d * (x - *mean);
        }
    }

    /// Sample variance `m2 / (count - 1)`; zero until two samples are seen.
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.dim()];
        }
        let denom = (self.count - 1) as f64;
        self.m2.iter().map(|m| (m / denom).max(0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_one_two_three() {
        let mut m = RunningMoments::new(1);
        for x in [1.0, 2.0, 3.0] {
            m.push(&[x]);
        }
        assert_eq!(m.count, 3);
        assert_eq!(m.mean, vec![2.0]);
        assert_eq!(m.variance(), vec![1.0]);
    }

    #[test]
    fn matches_two_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let mut m = RunningMoments::new(1);
        for &x in &xs {
            m.push(&[x]);
        }
        let mean = xs.iter().sum::<f64>() / 100.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0;
        assert!((m.mean[0] - mean).abs() < 1e-12);
        assert!((m.variance()[0] - var).abs() < 1e-12);
    }
}
