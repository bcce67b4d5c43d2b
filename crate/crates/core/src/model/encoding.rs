use std::f64::consts::TAU;

pub const HOUR_DIMS: usize = 2;
pub const WEEKDAY_DIMS: usize = 7;
/// Speed channel, hour-of-day sin/cos, weekday one-hot.
pub const SPEED_DIMS: usize = 1 + HOUR_DIMS + WEEKDAY_DIMS;

/// Encodes a day of speed samples as `steps × SPEED_DIMS` rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEncoding {
    pub mean: f64,
    pub std: f64,
}

impl SpeedEncoding {
    /// Appends one row per sample to `out`. `weekday` is 0 (Monday) to 6.
    pub fn encode_into(&self, speeds: &[f64], weekday: usize, out: &mut Vec<f64>) {
        let steps = speeds.len();
        for (t, &v) in speeds.iter().enumerate() {
            let hour = 24.0 * t as f64 / steps as f64;
            out.push((v - self.mean) / self.std);
            out.push((TAU * hour / 24.0).sin());
            out.push((TAU * hour / 24.0).cos());
            out.extend((0..WEEKDAY_DIMS).map(|d| {
                if d == weekday % WEEKDAY_DIMS {
                    1.0
                } else {
                    0.0
                }
            }));
        }
    }

    pub fn encode(&self, speeds: &[f64], weekday: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(speeds.len() * SPEED_DIMS);
        self.encode_into(speeds, weekday, &mut out);
        out
    }
}
