use super::{TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleDecision {
    Keep,
    Decay { lr: f64 },
    Stop,
}

/// Validation-driven step decay: if the best accuracy has not improved by at
/// least `threshold` for `patience` epochs, divide the learning rate by
/// `decay`; stop once the decayed rate falls below the floor.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    lr: f64,
    best: Option<f64>,
    stale: usize,
    patience: usize,
    threshold: f64,
    decay: f64,
    floor: f64,
}

impl LrSchedule {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            lr: config.lr0,
            best: None,
            stale: 0,
            patience: config.patience_epochs,
            threshold: config.improvement_threshold,
            decay: config.lr_decay,
            floor: config.lr_floor,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one completed epoch's validation accuracy.
    pub fn observe(&mut self, accuracy: f64) -> ScheduleDecision {
        match self.best {
            Some(best) if accuracy < best + self.threshold => self.stale += 1,
            _ => {
                self.best = Some(accuracy);
                self.stale = 0;
            }
        }
        if self.stale < self.patience {
            return ScheduleDecision::Keep;
        }
        self.stale = 0;
        self.lr /= self.decay;
        // Relative slack so that 1e-2 / 10^4 counts as reaching a 1e-6 floor.
        if self.lr < self.floor * (1.0 - 1e-9) {
            ScheduleDecision::Stop
        } else {
            ScheduleDecision::Decay { lr: self.lr }
        }
    }
}

/// Decision after the last epoch recorded in `report`, replaying its
/// accuracy trace from the start.
pub fn schedule_step(report: &TrainReport, config: &TrainConfig) -> ScheduleDecision {
    let mut sched = LrSchedule::new(config);
    let mut last = ScheduleDecision::Keep;
    for &acc in &report.val_accuracy {
        last = sched.observe(acc);
    }
    last
}
