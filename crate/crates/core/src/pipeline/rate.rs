//! Loss-calibrated key-rate model.

/// Per-connection device parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceProfile {
    pub repetition_rate_hz: f64,
    pub detector_efficiency: f64,
    pub reference_rate_kbps: f64,
    pub reference_loss_db: f64,
    pub device_factor: f64,
    pub qber_base: f64,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self {
            repetition_rate_hz: 4.0e7,
            detector_efficiency: 0.15,
            reference_rate_kbps: 10.0,
            reference_loss_db: 10.0,
            device_factor: 1.0,
            qber_base: 0.01,
        }
    }
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("repetition_rate_hz", self.repetition_rate_hz),
            ("reference_rate_kbps", self.reference_rate_kbps),
            ("device_factor", self.device_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(format!(
                "detector_efficiency must be in (0, 1], got {}",
                self.detector_efficiency
            ));
        }
        if !(0.0..0.5).contains(&self.qber_base) {
            return Err(format!(
                "qber_base must be in [0, 0.5), got {}",
                self.qber_base
            ));
        }
        if !self.reference_loss_db.is_finite() || self.reference_loss_db < 0.0 {
            return Err("reference_loss_db must be non-negative".into());
        }
        Ok(())
    }
}

/// Secret key rate in kbps at `total_loss_db`: the reference rate scaled
/// by relative transmittance and the device factor.
pub fn estimate_key_rate(total_loss_db: f64, profile: &DeviceProfile) -> f64 {
    profile.reference_rate_kbps
        * 10f64.powf((profile.reference_loss_db - total_loss_db) / 10.0)
        * profile.device_factor
}

/// Device factor that makes the model reproduce `observed_kbps` at
/// `total_loss_db`.
pub fn fit_device_factor(observed_kbps: f64, total_loss_db: f64, profile: &DeviceProfile) -> f64 {
    let unit = DeviceProfile {
        device_factor: 1.0,
        ..*profile
    };
    observed_kbps / estimate_key_rate(total_loss_db, &unit)
}
