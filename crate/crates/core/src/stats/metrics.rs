use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("metric over an empty series".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// MAPE in percent, with the number of zero-actual points left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    pub excluded: usize,
}

/// Mean absolute percentage error. Days with a zero actual are excluded and
/// counted in [`Mape::excluded`]; if every actual is zero this is an error.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape> {
    check_pair(actual, predicted)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if *a == 0.0 {
            continue;
        }
        sum += ((a - p) / a).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput("MAPE undefined: every actual value is zero".into()));
    }
    Ok(Mape { percent: 100.0 * sum / used as f64, excluded: actual.len() - used })
}
