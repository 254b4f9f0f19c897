use crate::error::{Error, Result};

/// Observation model for the latent state: `e[r][s] = P(observed s | true r)`.
///
/// Only healthy/dementia can be confused; death is observed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisclassificationMatrix {
    pub e12: f64,
    pub e21: f64,
}

impl MisclassificationMatrix {
    pub fn new(e12: f64, e21: f64) -> Result<Self> {
        for (name, v) in [("e12", e12), ("e21", e21)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("misclassification {name} = {v} outside [0,1]")));
            }
        }
        Ok(Self { e12, e21 })
    }

    pub fn identity() -> Self {
        Self { e12: 0.0, e21: 0.0 }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [1.0 - self.e12, self.e12, 0.0],
            [self.e21, 1.0 - self.e21, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }
}
