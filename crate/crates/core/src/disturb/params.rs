use serde::{Deserialize, Serialize};

use crate::model::{CellEncoding, DataDirection};
use crate::Scalar;

/// Temperature at which every mechanism runs at its nominal strength.
pub const REFERENCE_TEMPERATURE_C: f64 = 50.0;

/// Which prediction set the parameters encode.
///
/// `Device` follows the device-level mechanisms and acts on physical charge.
/// `Empirical` reproduces chip measurements, which are uniform in stored
/// data regardless of cell encoding, so its hammer and press mechanisms act
/// on logical values. Retention leakage is physical in both modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Device,
    Empirical,
}

/// Accumulator direction in the mode's frame: `Falling` is charged to
/// discharged (device) or 1 to 0 (empirical).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisturbDirection {
    Falling,
    Rising,
}

impl DisturbDirection {
    pub const BOTH: [DisturbDirection; 2] = [DisturbDirection::Falling, DisturbDirection::Rising];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            DisturbDirection::Falling => 0,
            DisturbDirection::Rising => 1,
        }
    }
}

impl Mode {
    /// Accumulator that a flip in data direction `data` on a row with
    /// `encoding` is driven by.
    pub fn frame_direction(self, data: DataDirection, encoding: CellEncoding) -> DisturbDirection {
        let falls = match self {
            Mode::Empirical => data == DataDirection::OneToZero,
            Mode::Device => encoding.is_charged(data == DataDirection::OneToZero),
        };
        if falls {
            DisturbDirection::Falling
        } else {
            DisturbDirection::Rising
        }
    }

    /// Whether a cell holding `bit` is on the high side of the frame.
    #[inline]
    pub fn is_high(self, bit: bool, encoding: CellEncoding) -> bool {
        match self {
            Mode::Empirical => bit,
            Mode::Device => encoding.is_charged(bit),
        }
    }

    /// Accumulator driven by retention leakage (charged cells lose charge).
    pub fn retention_direction(self, encoding: CellEncoding) -> DisturbDirection {
        match self {
            Mode::Device => DisturbDirection::Falling,
            Mode::Empirical => match encoding {
                CellEncoding::TrueCell => DisturbDirection::Falling,
                CellEncoding::AntiCell => DisturbDirection::Rising,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism<S> {
    pub strength: S,
    /// Multiplicative factor per °C above the reference temperature.
    pub temp_coeff: S,
}

impl<S: Scalar> Mechanism<S> {
    pub fn new(strength: f64, temp_coeff: f64) -> Self {
        Mechanism { strength: S::lit(strength), temp_coeff: S::lit(temp_coeff) }
    }

    pub fn at(&self, temperature: S) -> S {
        self.strength * self.temp_coeff.powf(temperature - S::lit(REFERENCE_TEMPERATURE_C))
    }
}

/// Log-normal threshold population for one direction. A cell is vulnerable
/// with probability `vulnerable_fraction`; otherwise its threshold is
/// infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDist<S> {
    pub mu: S,
    pub sigma: S,
    pub vulnerable_fraction: S,
}

impl<S: Scalar> ThresholdDist<S> {
    pub fn new(mu: f64, sigma: f64, vulnerable_fraction: f64) -> Self {
        ThresholdDist { mu: S::lit(mu), sigma: S::lit(sigma), vulnerable_fraction: S::lit(vulnerable_fraction) }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet<S> {
    pub falling: ThresholdDist<S>,
    pub rising: ThresholdDist<S>,
}

impl<S> ThresholdSet<S> {
    pub fn get(&self, dir: DisturbDirection) -> &ThresholdDist<S> {
        match dir {
            DisturbDirection::Falling => &self.falling,
            DisturbDirection::Rising => &self.rising,
        }
    }

    pub fn get_mut(&mut self, dir: DisturbDirection) -> &mut ThresholdDist<S> {
        match dir {
            DisturbDirection::Falling => &mut self.falling,
            DisturbDirection::Rising => &mut self.rising,
        }
    }
}

/// Strengths of the read-disturbance and retention mechanisms.
///
/// Hammer strengths are dose per activation, press and retention strengths
/// are dose per nanosecond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams<S> {
    pub mode: Mode,
    /// Trap-assisted electron migration from an activated NWL (falling).
    pub nwl_hammer: Mechanism<S>,
    /// Passing-gate effect of an activated PWL (rising).
    pub pwl_hammer: Mechanism<S>,
    /// Multiplier on `nwl_hammer` when NWL and PWL activations alternate.
    pub doubleside_boost: S,
    /// Multiplier on `pwl_hammer` when activations alternate. Device mode
    /// ignores it: rising dose is eliminated under alternation.
    pub pwl_alternation_boost: S,
    /// Long NWL open time draws charge toward the bitline contact (rising).
    pub nwl_press: Mechanism<S>,
    /// Long PWL open time (falling).
    pub pwl_press: Mechanism<S>,
    /// Charge leakage over elapsed time, physically charged cells only.
    pub retention: Mechanism<S>,
    pub thresholds: ThresholdSet<S>,
}

impl<S: Scalar> MechanismParams<S> {
    /// Default strengths for a mode. Both templates give one dose unit per
    /// double-sided hammer pair toward falling at tRAS open time, so
    /// thresholds read directly as activation counts.
    pub fn template(mode: Mode, thresholds: ThresholdSet<S>) -> Self {
        let retention = Mechanism::new(1.2e-4, 1.05);
        match mode {
            Mode::Empirical => MechanismParams {
                mode,
                nwl_hammer: Mechanism::new(0.4, 1.0),
                pwl_hammer: Mechanism::new(0.05, 1.0),
                doubleside_boost: S::lit(2.25),
                pwl_alternation_boost: S::lit(20.0),
                nwl_press: Mechanism::new(1.0e-6, 1.02),
                pwl_press: Mechanism::new(3.125e-3, 1.02),
                retention,
                thresholds,
            },
            Mode::Device => MechanismParams {
                mode,
                nwl_hammer: Mechanism::new(0.4, 1.0),
                pwl_hammer: Mechanism::new(0.5, 1.0),
                doubleside_boost: S::lit(2.5),
                pwl_alternation_boost: S::one(),
                nwl_press: Mechanism::new(3.125e-3, 1.02),
                pwl_press: Mechanism::new(3.125e-3, 1.02),
                retention,
                thresholds,
            },
        }
    }

    /// All strengths zero.
    pub fn inert(mode: Mode, thresholds: ThresholdSet<S>) -> Self {
        let zero = Mechanism::new(0.0, 1.0);
        MechanismParams {
            mode,
            nwl_hammer: zero,
            pwl_hammer: zero,
            doubleside_boost: S::one(),
            pwl_alternation_boost: S::one(),
            nwl_press: zero,
            pwl_press: zero,
            retention: zero,
            thresholds,
        }
    }

    pub fn mechanisms(&self) -> [(&'static str, &Mechanism<S>); 5] {
        [
            ("nwl_hammer", &self.nwl_hammer),
            ("pwl_hammer", &self.pwl_hammer),
            ("nwl_press", &self.nwl_press),
            ("pwl_press", &self.pwl_press),
            ("retention", &self.retention),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, m) in self.mechanisms() {
            if !(m.strength >= S::zero()) || !m.strength.is_finite() {
                return Err(format!("{name} strength must be finite and non-negative"));
            }
            if !(m.temp_coeff >= S::one()) || !m.temp_coeff.is_finite() {
                return Err(format!("{name} temp_coeff must be at least 1"));
            }
        }
        if !(self.doubleside_boost >= S::one()) {
            return Err("doubleside_boost must be at least 1".into());
        }
        if !(self.pwl_alternation_boost >= S::one()) {
            return Err("pwl_alternation_boost must be at least 1".into());
        }
        for dir in DisturbDirection::BOTH {
            let d = self.thresholds.get(dir);
            let p = d.vulnerable_fraction;
            if !(p >= S::zero() && p <= S::one()) {
                return Err(format!("{dir:?} vulnerable_fraction must lie in [0, 1]"));
            }
            if !(d.sigma >= S::zero()) || !d.mu.is_finite() || !d.sigma.is_finite() {
                return Err(format!("{dir:?} threshold distribution must be finite with sigma >= 0"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> ThresholdSet<f64> {
        ThresholdSet { falling: ThresholdDist::new(10.0, 0.5, 0.2), rising: ThresholdDist::new(9.0, 0.8, 0.1) }
    }

    #[test]
    fn templates_validate() {
        for mode in [Mode::Device, Mode::Empirical] {
            MechanismParams::template(mode, set()).validate().unwrap();
            MechanismParams::<f32>::template(mode, ThresholdSet {
                falling: ThresholdDist::new(10.0, 0.5, 0.2),
                rising: ThresholdDist::none(),
            })
            .validate()
            .unwrap();
        }
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut p = MechanismParams::template(Mode::Empirical, set());
        p.doubleside_boost = 0.5;
        assert!(p.validate().is_err());
        let mut p = MechanismParams::template(Mode::Empirical, set());
        p.pwl_press.temp_coeff = 0.9;
        assert!(p.validate().is_err());
        let mut p = MechanismParams::template(Mode::Empirical, set());
        p.thresholds.rising.vulnerable_fraction = 1.5;
        assert!(p.validate().is_err());
        let mut p = MechanismParams::template(Mode::Empirical, set());
        p.nwl_hammer.strength = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn temperature_factor_is_monotone() {
        let m = Mechanism::<f64>::new(2.0, 1.02);
        assert_eq!(m.at(50.0), 2.0);
        assert!(m.at(80.0) > m.at(50.0));
        assert!(m.at(40.0) < m.at(50.0));
    }

    #[test]
    fn frames() {
        use CellEncoding::*;
        use DataDirection::*;
        use DisturbDirection::*;
        assert_eq!(Mode::Empirical.frame_direction(OneToZero, AntiCell), Falling);
        assert_eq!(Mode::Device.frame_direction(OneToZero, AntiCell), Rising);
        assert_eq!(Mode::Device.frame_direction(ZeroToOne, AntiCell), Falling);
        assert_eq!(Mode::Empirical.retention_direction(AntiCell), Rising);
        assert_eq!(Mode::Device.retention_direction(AntiCell), Falling);
    }
}
