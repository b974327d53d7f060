use serde::{Deserialize, Serialize};

/// Linear exploration annealing from `initial` to `final_value` over
/// `annealing_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub final_value: f64,
    pub annealing_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.annealing_steps == 0 {
            return self.final_value;
        }
        let progress = (step as f64 / self.annealing_steps as f64).min(1.0);
        self.initial - (self.initial - self.final_value) * progress
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = EpsilonSchedule {
            initial: 1.0,
            final_value: 0.1,
            annealing_steps: 1_000_000,
        };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(500_000) - 0.55).abs() < 1e-15);
        assert!((s.value(1_000_000) - 0.1).abs() < 1e-15);
        assert!((s.value(2_000_000) - 0.1).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for step in (0..1_200_000).step_by(50_000) {
            let e = s.value(step);
            assert!(e <= prev && (0.1 - 1e-15..=1.0).contains(&e));
            prev = e;
        }
    }
}
