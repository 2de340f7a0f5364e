use serde::{Deserialize, Serialize};

/// Population mean and standard deviation, reported as `mean (std)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, var) = mean_var(values);
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }

    /// Formats with `digits` decimals, e.g. `99.1 (0.8)`.
    pub fn display(&self, digits: usize) -> String {
        format!("{:.*} ({:.*})", digits, self.mean, digits, self.std)
    }
}

/// Mean and population variance (divide by N).
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}
