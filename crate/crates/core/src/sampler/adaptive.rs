//! Running inclusion frequencies for the adaptive selection proposals.

pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.99;

fn clamp(a: f64) -> f64 {
    a.clamp(ALPHA_MIN, ALPHA_MAX)
}

/// Proposal inclusion rate from a history of selection bits: the clamped
/// sample mean. An empty history gives the lower bound.
pub fn adapt_alpha(history: &[bool]) -> f64 {
    if history.is_empty() {
        return ALPHA_MIN;
    }
    let ones = history.iter().filter(|&&g| g).count();
    clamp(ones as f64 / history.len() as f64)
}

/// Incremental version of [`adapt_alpha`] for every selection unit.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveAlpha {
    mean: Vec<f64>,
    count: usize,
}

impl AdaptiveAlpha {
    pub fn new(units: usize) -> Self {
        AdaptiveAlpha {
            mean: vec![0.0; units],
            count: 0,
        }
    }

    /// Fold in one sweep's selection bits with weight `1/t`.
    pub fn observe(&mut self, bits: impl IntoIterator<Item = bool>) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, g) in self.mean.iter_mut().zip(bits) {
            *m += w * (f64::from(u8::from(g)) - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn alpha(&self, unit: usize) -> f64 {
        if self.count == 0 {
            return ALPHA_MIN;
        }
        clamp(self.mean[unit])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_and_means() {
        assert_eq!(adapt_alpha(&[false; 50]), ALPHA_MIN);
        assert_eq!(adapt_alpha(&[true; 50]), ALPHA_MAX);
        assert_eq!(adapt_alpha(&[true, false, true, false]), 0.5);
    }

    #[test]
    fn incremental_matches_batch() {
        let bits = [true, false, false, true, true, false, true];
        let mut a = AdaptiveAlpha::new(1);
        for (i, &b) in bits.iter().enumerate() {
            a.observe([b]);
            assert!((a.alpha(0) - adapt_alpha(&bits[..=i])).abs() < 1e-15);
        }
    }
}
