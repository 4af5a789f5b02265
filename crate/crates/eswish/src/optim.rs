//! SGD with classical momentum, learning-rate schedules, and early stopping.
//!
//! "Improvement" everywhere means strictly greater validation accuracy, with
//! no minimum delta; ties count as non-improvement. The plateau schedule and
//! early stopping share this predicate but keep independent counters.

use crate::error::{Error, Result};
use crate::network::{Gradients, Network};

/// The shared improvement predicate: strictly greater than best-so-far.
#[inline]
pub fn improved(metric: f64, best: f64) -> bool {
    metric > best
}

/// Classical-momentum SGD: `v ← momentum·v − lr·g; p ← p + v`.
/// Operates on one flat tensor; velocity must be zero-initialized.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    for i in 0..params.len() {
        velocity[i] = momentum * velocity[i] - lr * grads[i];
        params[i] += velocity[i];
    }
}

/// Optimizer state: learning rate, momentum, and one velocity buffer per
/// parameter tensor (allocated on first step).
#[derive(Debug, Clone)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if lr <= 0.0 || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(SgdState {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    /// Applies one update to every trainable tensor in the network. Errors
    /// if any gradient tensor contains non-finite values, naming the tensor.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut params = net.param_tensors_mut();
        if params.len() != grad_tensors.len() {
            return Err(Error::Usage(format!(
                "gradient set has {} tensors, network has {}",
                grad_tensors.len(),
                params.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        }
        for (i, ((name, g), (_, p))) in grad_tensors.iter().zip(params.iter_mut()).enumerate() {
            if p.len() != g.len() {
                return Err(Error::Usage(format!("tensor {name} shape changed mid-training")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(name.clone()));
            }
            sgd_step(p, g, &mut self.velocity[i], self.lr, self.momentum);
        }
        Ok(())
    }
}

/// Reduce-on-plateau: multiply the learning rate by `factor` after
/// `patience` consecutive epochs without improvement. Evaluated at epoch
/// end, after validation.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    best_metric: f64,
    epochs_since_improve: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&factor) || factor == 0.0 {
            return Err(Error::Config(format!(
                "plateau factor must be in (0, 1), got {factor}"
            )));
        }
        if patience == 0 {
            return Err(Error::Config("plateau patience must be positive".into()));
        }
        Ok(PlateauSchedule {
            factor,
            patience,
            best_metric: f64::NEG_INFINITY,
            epochs_since_improve: 0,
        })
    }

    /// Feeds one epoch's validation metric; returns the (possibly reduced)
    /// learning rate.
    pub fn update(&mut self, val_metric: f64, lr: f64) -> f64 {
        if improved(val_metric, self.best_metric) {
            self.best_metric = val_metric;
            self.epochs_since_improve = 0;
            lr
        } else {
            self.epochs_since_improve += 1;
            if self.epochs_since_improve >= self.patience {
                self.epochs_since_improve = 0;
                lr * self.factor
            } else {
                lr
            }
        }
    }
}

/// Fixed-milestone step decay: `lr = base_lr · factor^(#milestones ≤ epoch)`.
pub fn step_schedule(epoch: usize, milestones: &[usize], factor: f64, base_lr: f64) -> Result<f64> {
    if milestones.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "milestones must be strictly increasing, got {milestones:?}"
        )));
    }
    let hits = milestones.iter().filter(|&&m| m <= epoch).count();
    Ok(base_lr * factor.powi(hits as i32))
}

/// Stops training after `patience` consecutive epochs with no improvement
/// over the best validation metric.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub patience: usize,
    best_metric: f64,
    epochs_since_improve: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("early-stop patience must be positive".into()));
        }
        Ok(EarlyStop {
            patience,
            best_metric: f64::NEG_INFINITY,
            epochs_since_improve: 0,
        })
    }

    /// Feeds one epoch's validation metric; true means stop now.
    pub fn check(&mut self, val_metric: f64) -> bool {
        if improved(val_metric, self.best_metric) {
            self.best_metric = val_metric;
            self.epochs_since_improve = 0;
            false
        } else {
            self.epochs_since_improve += 1;
            self.epochs_since_improve >= self.patience
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_no_momentum_is_vanilla() {
        let mut p = vec![1.0, 2.0];
        let mut v = vec![0.0, 0.0];
        sgd_step(&mut p, &[0.5, -0.5], &mut v, 0.1, 0.0);
        assert_eq!(p, vec![0.95, 2.05]);
    }

    #[test]
    fn sgd_zero_grads_decay_velocity() {
        let mut p = vec![1.0];
        let mut v = vec![-0.2];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9);
        assert!((v[0] - (-0.18)).abs() < 1e-15);
        assert!((p[0] - 0.82).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_momentum_steps_hand_iterated() {
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9);
        assert!((p[0] - 0.9).abs() < 1e-15);
        assert!((v[0] - (-0.1)).abs() < 1e-15);
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9);
        assert!((v[0] - (-0.19)).abs() < 1e-15);
        assert!((p[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn plateau_untouched_while_improving() {
        let mut sched = PlateauSchedule::new(0.35, 2).unwrap();
        let mut lr = 0.01;
        for m in [0.90, 0.91, 0.92] {
            lr = sched.update(m, lr);
        }
        assert_eq!(lr, 0.01);
    }

    #[test]
    fn plateau_ties_are_non_improvements() {
        let mut sched = PlateauSchedule::new(0.35, 2).unwrap();
        let mut lr = 0.01;
        lr = sched.update(0.92, lr); // first epoch sets best
        lr = sched.update(0.92, lr); // tie 1
        assert_eq!(lr, 0.01);
        lr = sched.update(0.92, lr); // tie 2 -> drop
        assert!((lr - 0.01 * 0.35).abs() < 1e-15);
    }

    #[test]
    fn plateau_double_drop_compounds() {
        let mut sched = PlateauSchedule::new(0.35, 2).unwrap();
        let mut lr = 0.01;
        lr = sched.update(0.5, lr);
        for _ in 0..4 {
            lr = sched.update(0.5, lr);
        }
        assert!((lr - 0.001225).abs() < 1e-12, "lr {lr}");
    }

    #[test]
    fn plateau_lr_sequence_non_increasing() {
        let mut sched = PlateauSchedule::new(0.5, 1).unwrap();
        let mut lr = 1.0;
        let mut prev = lr;
        let mut rng = crate::numerics::Rng::new(2);
        for _ in 0..50 {
            lr = sched.update(rng.next_f64(), lr);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn step_schedule_paper_values() {
        let ms = [45, 85, 105];
        assert_eq!(step_schedule(0, &ms, 0.2, 0.125).unwrap(), 0.125);
        let at90 = step_schedule(90, &ms, 0.2, 0.125).unwrap();
        assert!((at90 - 0.005).abs() < 1e-15);
        let at105 = step_schedule(105, &ms, 0.2, 0.125).unwrap();
        assert!((at105 - 0.001).abs() < 1e-15);
        let at200 = step_schedule(200, &ms, 0.2, 0.125).unwrap();
        assert!((at200 - 0.001).abs() < 1e-15);
    }

    #[test]
    fn step_schedule_rejects_unsorted() {
        assert!(step_schedule(0, &[10, 5], 0.2, 0.1).is_err());
        assert!(step_schedule(0, &[5, 5], 0.2, 0.1).is_err());
    }

    #[test]
    fn early_stop_never_fires_on_increasing_metrics() {
        let mut es = EarlyStop::new(5).unwrap();
        for i in 0..100 {
            assert!(!es.check(i as f64));
        }
    }

    #[test]
    fn early_stop_constant_metric_fires_after_patience() {
        let mut es = EarlyStop::new(5).unwrap();
        assert!(!es.check(0.9));
        for _ in 0..4 {
            assert!(!es.check(0.9));
        }
        assert!(es.check(0.9));
    }

    #[test]
    fn early_stop_reset_on_improvement() {
        let mut es = EarlyStop::new(5).unwrap();
        es.check(0.5);
        for _ in 0..4 {
            assert!(!es.check(0.5));
        }
        assert!(!es.check(0.6)); // improvement at epoch 4 of 5 resets
        for _ in 0..4 {
            assert!(!es.check(0.6));
        }
        assert!(es.check(0.6));
    }

    #[test]
    fn plateau_and_early_stop_share_improvement_semantics() {
        // Same metric stream: both treat ties as non-improvement and reset
        // on strict improvement at the same epochs.
        let stream = [0.5, 0.5, 0.6, 0.6, 0.6, 0.7];
        let mut sched = PlateauSchedule::new(0.5, 2).unwrap();
        let mut es = EarlyStop::new(2).unwrap();
        let mut lr = 1.0;
        let mut stops = Vec::new();
        let mut drops = Vec::new();
        for (i, &m) in stream.iter().enumerate() {
            let new_lr = sched.update(m, lr);
            if new_lr < lr {
                drops.push(i);
            }
            lr = new_lr;
            if es.check(m) {
                stops.push(i);
            }
        }
        assert_eq!(drops, stops);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SgdState::new(0.0, 0.9).is_err());
        assert!(SgdState::new(0.1, 1.0).is_err());
        assert!(PlateauSchedule::new(1.5, 2).is_err());
        assert!(PlateauSchedule::new(0.35, 0).is_err());
        assert!(EarlyStop::new(0).is_err());
    }
}
