use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: String,
    pub samples: usize,
    /// Mean minibatch loss over the round.
    pub train_loss: f64,
    /// sha256 of the returned weights' snapshot encoding.
    pub weights_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub loss: f64,
    pub iou: f64,
    pub mse: f64,
    pub ssim: f64,
}

/// Compute time only; communication is treated as instantaneous.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundTiming {
    pub local_training_s: f64,
    pub aggregation_s: f64,
    pub evaluation_s: f64,
}

/// Log line of one round. Everything except `timing` is a deterministic
/// function of the configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epochs_completed: usize,
    pub participants: Vec<String>,
    pub clients: Vec<ClientUpdate>,
    pub aggregate_digest: String,
    pub holdout: Option<HoldoutMetrics>,
    pub timing: RoundTiming,
}

impl RoundRecord {
    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        RoundRecord { timing: RoundTiming::default(), ..self.clone() }
    }
}
