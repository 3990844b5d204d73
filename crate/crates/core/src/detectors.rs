//! Entanglement readouts from the deflection pattern: the rotation angle of
//! the outer one-photon ring (mapped to concurrence) and missing rings of the
//! maximally entangled family.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::distribution::{populations, DensityModel, Estimator, PopulationSpectrum};
use crate::error::{OsgError, Result};
use crate::state::{AtomState, CouplingParams, TwoModeState};

pub const DEFAULT_ABS_THRESHOLD: f64 = 0.02;
pub const DEFAULT_REL_THRESHOLD: f64 = 0.1;
pub const ROTATION_SAMPLES: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleReading {
    /// Refined argmax folded into [0, π/2).
    pub theta_m: f64,
    /// Refined argmax in [0, 2π) before folding.
    pub raw: f64,
}

/// Angle of maximal density on the circle ℘ = `ring`.
pub fn rotation_angle(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
    ring: f64,
) -> Result<AngleReading> {
    if !(ring.is_finite() && ring > 0.0) {
        return Err(OsgError::invalid("ring radius must be positive"));
    }
    let model = DensityModel::new(state, atom, params)?;
    let row = model.row(ring);
    let h = TAU / ROTATION_SAMPLES as f64;
    let values: Vec<f64> = (0..ROTATION_SAMPLES).map(|j| row.at(j as f64 * h)).collect();
    let (best, peak) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    if peak < 1e-12 {
        return Err(OsgError::NoSignal { ring, peak });
    }
    let left = values[(best + ROTATION_SAMPLES - 1) % ROTATION_SAMPLES];
    let right = values[(best + 1) % ROTATION_SAMPLES];
    let curvature = left - 2.0 * peak + right;
    let shift = if curvature < 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let raw = (best as f64 + shift) * h;
    let raw = raw.rem_euclid(TAU);
    Ok(AngleReading {
        theta_m: fold_quarter(raw),
        raw,
    })
}

/// Folds an angle into [0, π/2).
pub fn fold_quarter(phi: f64) -> f64 {
    let f = phi.rem_euclid(FRAC_PI_2);
    if f >= FRAC_PI_2 {
        0.0
    } else {
        f
    }
}

/// Distance between two angles on the circle of circumference π/2.
pub fn quarter_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(FRAC_PI_2);
    d.min(FRAC_PI_2 - d)
}

/// C = |sin 2θₘ|.
pub fn concurrence_from_angle(theta_m: f64) -> f64 {
    (2.0 * theta_m).sin().abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingFlag {
    pub n: usize,
    pub p: f64,
    pub flagged: bool,
}

/// Flags ring n when Pₙ < abs_threshold and Pₙ < rel_threshold × max P.
/// Ring 0 (undeflected) is not a candidate.
pub fn missing_rings(
    spectrum: &PopulationSpectrum,
    abs_threshold: f64,
    rel_threshold: f64,
) -> Result<Vec<RingFlag>> {
    let rings: Vec<_> = spectrum.entries.iter().filter(|e| e.n >= 1).collect();
    if rings.is_empty() {
        return Err(OsgError::invalid("spectrum has no deflected rings"));
    }
    if !(abs_threshold >= 0.0 && rel_threshold >= 0.0) {
        return Err(OsgError::invalid("thresholds must be non-negative"));
    }
    let max = rings.iter().map(|e| e.p).fold(0.0, f64::max);
    Ok(rings
        .into_iter()
        .map(|e| RingFlag {
            n: e.n,
            p: e.p,
            flagged: e.p < abs_threshold && e.p < rel_threshold * max,
        })
        .collect())
}

/// Ring expected to be empty when the state is (|j, j+4q-2> + |j+4q-2, j>)/sqrt(2)
/// up to a global phase.
pub fn predicted_missing(state: &TwoModeState) -> Option<usize> {
    let support: Vec<((usize, usize), Complex64)> =
        state.iter().filter(|(_, c)| c.norm() > 1e-12).collect();
    let [((a, b), ca), ((c, d), cc)] = support.as_slice() else {
        return None;
    };
    if (*a, *b) != (*d, *c) {
        return None;
    }
    let (lo, hi) = ((*a).min(*b), (*a).max(*b));
    let gap = hi - lo;
    if gap < 2 || gap % 4 != 2 {
        return None;
    }
    let scale = ca.norm().max(cc.norm());
    if (ca - cc).norm() > 1e-9 * scale {
        return None;
    }
    Some((lo + hi) / 2 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub abs_threshold: f64,
    pub rel_threshold: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            abs_threshold: DEFAULT_ABS_THRESHOLD,
            rel_threshold: DEFAULT_REL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub theta_m: Option<f64>,
    pub theta_raw: Option<f64>,
    pub concurrence: Option<f64>,
    pub spectrum: PopulationSpectrum,
    pub missing_rings: Vec<RingFlag>,
    pub predicted_missing: Option<usize>,
    pub warnings: Vec<String>,
}

impl DetectionReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.missing_rings
            .iter()
            .filter(|f| f.flagged)
            .map(|f| f.n)
            .collect()
    }
}

pub fn detect(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
    opts: &DetectOptions,
) -> Result<DetectionReport> {
    let spectrum = populations(state, atom, params, Estimator::Exact)?;
    let flags = missing_rings(&spectrum, opts.abs_threshold, opts.rel_threshold)?;
    let mut warnings = spectrum.warnings.clone();
    let (mut theta_m, mut theta_raw, mut concurrence) = (None, None, None);
    if state.max_total() == 1 {
        let reading = rotation_angle(state, atom, params, params.ring(2))?;
        theta_m = Some(reading.theta_m);
        theta_raw = Some(reading.raw);
        concurrence = Some(concurrence_from_angle(reading.theta_m));
    } else {
        warnings.push(format!(
            "rotation readout not applicable: state has max photon number {}",
            state.max_total()
        ));
    }
    Ok(DetectionReport {
        theta_m,
        theta_raw,
        concurrence,
        spectrum,
        missing_rings: flags,
        predicted_missing: predicted_missing(state),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::RingPopulation;
    use crate::state::{family_state, noon_state, one_photon_state};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

    fn fig3() -> CouplingParams {
        CouplingParams::new(20.0, 0.1).unwrap()
    }

    fn spectrum(ps: &[f64]) -> PopulationSpectrum {
        PopulationSpectrum {
            estimator: Estimator::Exact,
            entries: ps
                .iter()
                .enumerate()
                .map(|(i, &p)| RingPopulation { n: i + 1, p })
                .collect(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn rotation_angle_tracks_alpha() {
        let p = fig3();
        for alpha in [0.0, FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8] {
            let s = one_photon_state(alpha).unwrap();
            let r = rotation_angle(&s, &AtomState::excited(), &p, p.ring(2)).unwrap();
            assert!(quarter_distance(r.theta_m, alpha) < 0.01, "{alpha}: {r:?}");
        }
    }

    #[test]
    fn rotation_angle_needs_signal() {
        let p = fig3();
        let err = rotation_angle(&TwoModeState::vacuum(), &AtomState::ground(), &p, 1e6);
        assert!(matches!(err, Err(OsgError::NoSignal { .. })));
        assert!(rotation_angle(&TwoModeState::vacuum(), &AtomState::excited(), &p, 0.0).is_err());
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence_from_angle(FRAC_PI_4) - 1.0).abs() < 1e-15);
        assert_eq!(concurrence_from_angle(0.0), 0.0);
        assert!((concurrence_from_angle(FRAC_PI_8) - SQRT_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_rule() {
        let f = missing_rings(&spectrum(&[0.5, 0.0, 0.5]), 0.02, 0.1).unwrap();
        assert_eq!(f.iter().filter(|x| x.flagged).map(|x| x.n).collect::<Vec<_>>(), [2]);
        let f = missing_rings(&spectrum(&[0.375, 0.25, 0.375]), 0.02, 0.1).unwrap();
        assert!(f.iter().all(|x| !x.flagged));
        // below the absolute threshold but not the relative one
        let f = missing_rings(&spectrum(&[0.015, 0.01]), 0.02, 0.1).unwrap();
        assert!(f.iter().all(|x| !x.flagged));
        assert!(missing_rings(&spectrum(&[]), 0.02, 0.1).is_err());
    }

    #[test]
    fn family_prediction() {
        assert_eq!(predicted_missing(&noon_state(2).unwrap()), Some(2));
        assert_eq!(predicted_missing(&noon_state(6).unwrap()), Some(4));
        assert_eq!(predicted_missing(&noon_state(4).unwrap()), None);
        assert_eq!(predicted_missing(&family_state(1, 1).unwrap().state), Some(3));
        assert_eq!(predicted_missing(&family_state(2, 1).unwrap().state), Some(4));
        assert_eq!(predicted_missing(&one_photon_state(FRAC_PI_4).unwrap()), None);
        let minus = TwoModeState::from_amplitudes([
            ((2, 0), Complex64::new(1.0, 0.0)),
            ((0, 2), Complex64::new(-1.0, 0.0)),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        assert_eq!(predicted_missing(&minus), None);
        let phased = TwoModeState::from_amplitudes([
            ((2, 0), Complex64::new(0.0, 1.0)),
            ((0, 2), Complex64::new(0.0, 1.0)),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        assert_eq!(predicted_missing(&phased), Some(2));
    }

    #[test]
    fn detect_examples() {
        let p = fig3();
        let opts = DetectOptions::default();
        let r = detect(&one_photon_state(3.0 * FRAC_PI_8).unwrap(), &AtomState::excited(), &p, &opts).unwrap();
        assert!(quarter_distance(r.theta_m.unwrap(), 3.0 * FRAC_PI_8) < 0.01);
        assert!((r.concurrence.unwrap() - SQRT_2 / 2.0).abs() < 0.02);
        assert!(r.flagged().is_empty());

        let r = detect(&noon_state(6).unwrap(), &AtomState::excited(), &p, &opts).unwrap();
        assert_eq!(r.flagged(), [4]);
        assert_eq!(r.predicted_missing, Some(4));
        assert!(r.theta_m.is_none() && !r.warnings.is_empty());

        let r = detect(&TwoModeState::vacuum(), &AtomState::excited(), &p, &opts).unwrap();
        assert_eq!(r.spectrum.entries.len(), 1);
        assert!(r.flagged().is_empty() && r.theta_m.is_none());

        let r = detect(&TwoModeState::fock(1, 1).unwrap(), &AtomState::excited(), &p, &opts).unwrap();
        assert!(r.flagged().is_empty() && r.theta_m.is_none());
    }
}
