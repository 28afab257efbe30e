//! Per-step run logging shared by the CS optimizer and the SGD trainer.

/// Metrics computed by the caller once per iteration (CS) or epoch (SGD).
///
/// The optimizers do not know about datasets or networks; whoever drives a
/// run supplies these through the per-iteration callback. Harnesses that do
/// not track metrics return [`EvalMetrics::default`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalMetrics {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// One log row per CS iteration or SGD epoch.
///
/// `nfc` counts fitness evaluations for CS and forward+backward passes for
/// SGD; it is non-decreasing across the rows of a run. `elapsed_s` is wall
/// time since the run started and is the only field exempt from the
/// determinism guarantees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRecord {
    pub step: u64,
    pub nfc: u64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub elapsed_s: f64,
}

impl RunRecord {
    pub fn new(step: u64, nfc: u64, eval: EvalMetrics, elapsed_s: f64) -> Self {
        Self {
            step,
            nfc,
            train_loss: eval.train_loss,
            train_acc: eval.train_acc,
            test_acc: eval.test_acc,
            elapsed_s,
        }
    }
}
