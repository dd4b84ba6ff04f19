use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Multiply by `factor` every `every` epochs.
    Step { factor: f64, every: usize },
    /// Linear decay reaching zero at `epochs`.
    LinearToZero { epochs: usize },
}

pub fn lr_at(schedule: Schedule, base_lr: f64, epoch: usize) -> f64 {
    match schedule {
        Schedule::Constant => base_lr,
        Schedule::Step { factor, every } => {
            let k = epoch.checked_div(every).unwrap_or(0);
            base_lr * factor.powi(k as i32)
        }
        Schedule::LinearToZero { epochs } => {
            if epochs == 0 {
                return base_lr;
            }
            base_lr * (1.0 - epoch as f64 / epochs as f64).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let step = Schedule::Step { factor: 0.5, every: 50 };
        assert!((lr_at(step, 1e-2, 120) - 2.5e-3).abs() < 1e-15);
        assert_eq!(lr_at(step, 1e-2, 49), 1e-2);
        let lin = Schedule::LinearToZero { epochs: 300 };
        assert!((lr_at(lin, 1e-2, 150) - 5e-3).abs() < 1e-15);
        assert_eq!(lr_at(lin, 1e-2, 300), 0.0);
        for s in [step, lin, Schedule::Constant] {
            assert_eq!(lr_at(s, 3e-3, 0), 3e-3);
        }
    }
}
