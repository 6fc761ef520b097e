use crate::error::{Error, Result};

/// Linear variance schedule with its cumulative signal-retention products.
///
/// Steps are 1-based: `beta(1)` is the first entry.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if !(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_min < beta_max < 1, got {beta_min} and {beta_max}"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    return beta_min;
                }
                let f = i as f64 / (steps - 1) as f64;
                beta_min * (1.0 - f) + beta_max * f
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { beta_min, beta_max, beta, alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn idx(&self, t: usize) -> usize {
        assert!(t >= 1 && t <= self.steps(), "step {t} outside 1..={}", self.steps());
        t - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[self.idx(t)]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[self.idx(t)]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Config(format!("diffusion step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_sample(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(Error::Shape(format!("signal has {} samples, noise {}", x0.len(), eps.len())));
    }
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| s * x + n * e).collect())
}

/// One deterministic reverse step:
/// `x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)`.
pub fn reverse_step(x_t: &mut [f64], eps_hat: &[f64], t: usize, schedule: &NoiseSchedule) {
    let a = schedule.alpha(t);
    let coef = (1.0 - a) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / a.sqrt();
    for (x, e) in x_t.iter_mut().zip(eps_hat) {
        *x = inv * (*x - coef * e);
    }
}
