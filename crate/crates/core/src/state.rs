//! Two-mode field states, the atomic internal state and the coupling
//! parameters, together with the named state families used for entanglement
//! detection.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OsgError, Result};
use crate::numeric::NeumaierSum;

/// Largest total photon number a [`TwoModeState`] may carry by default.
pub const DEFAULT_SUPPORT_CAP: usize = 32;
/// Amplitudes with modulus below this are dropped on construction.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-15;

/// Pure state of the two cavity modes, stored sparsely as C_{m,n} keyed by
/// the photon numbers (m in mode a, n in mode b).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    amplitudes: BTreeMap<(usize, usize), Complex64>,
    max_total: usize,
}

impl TwoModeState {
    /// Builds a state from raw amplitudes without normalizing. Entries below
    /// the prune threshold are dropped; repeated keys are summed.
    pub fn from_amplitudes<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), Complex64)>,
    {
        Self::with_limits(entries, DEFAULT_SUPPORT_CAP, DEFAULT_PRUNE_THRESHOLD)
    }

    pub fn with_limits<I>(entries: I, support_cap: usize, prune: f64) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), Complex64)>,
    {
        let mut amplitudes: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for (key, c) in entries {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(OsgError::InvalidState(format!(
                    "non-finite amplitude at ({}, {})",
                    key.0, key.1
                )));
            }
            *amplitudes.entry(key).or_default() += c;
        }
        amplitudes.retain(|_, c| c.norm() >= prune);
        let max_total = amplitudes.keys().map(|(m, n)| m + n).max().unwrap_or(0);
        if max_total >= support_cap {
            return Err(OsgError::InvalidState(format!(
                "total photon number {max_total} exceeds the support cap {support_cap}"
            )));
        }
        Ok(Self {
            amplitudes,
            max_total,
        })
    }

    /// A single Fock component |m, n> with unit amplitude.
    pub fn fock(m: usize, n: usize) -> Result<Self> {
        Self::from_amplitudes([((m, n), Complex64::new(1.0, 0.0))])
    }

    pub fn vacuum() -> Self {
        Self::fock(0, 0).expect("vacuum is always representable")
    }

    pub fn amplitude(&self, m: usize, n: usize) -> Complex64 {
        self.amplitudes.get(&(m, n)).copied().unwrap_or_default()
    }

    /// Iterates nonzero amplitudes in (m, n) order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), Complex64)> + '_ {
        self.amplitudes.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Largest m + n carried by a nonzero amplitude.
    pub fn max_total(&self) -> usize {
        self.max_total
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for c in self.amplitudes.values() {
            acc.add(c.norm_sqr());
        }
        acc.value()
    }

    /// Amplitudes with total photon number `total`, indexed by the photon
    /// count of mode a (length total + 1).
    pub fn block(&self, total: usize) -> Vec<Complex64> {
        (0..=total)
            .map(|m| self.amplitude(m, total - m))
            .collect()
    }

    /// Rescales to unit norm. States already normalized to within a few ulps
    /// are returned unchanged so the operation is idempotent bit-for-bit.
    pub fn normalize(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if self.amplitudes.is_empty() || n2 == 0.0 {
            return Err(OsgError::InvalidState("all amplitudes are zero".into()));
        }
        if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(self.clone());
        }
        let scale = 1.0 / n2.sqrt();
        Ok(Self {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|(k, c)| (*k, c * scale))
                .collect(),
            max_total: self.max_total,
        })
    }

    /// Exchanges the roles of the two modes: C'_{m,n} = C_{n,m}.
    pub fn mode_swap(&self) -> Self {
        Self {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|(&(m, n), c)| ((n, m), *c))
                .collect(),
            max_total: self.max_total,
        }
    }

    /// Short deterministic description used in output metadata.
    pub fn fingerprint(&self) -> String {
        self.amplitudes
            .iter()
            .map(|(&(m, n), c)| format!("({m},{n}):{:.12e}{:+.12e}i", c.re, c.im))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// sin(alpha)|0,1> + cos(alpha)|1,0>.
pub fn one_photon_state(alpha: f64) -> Result<TwoModeState> {
    angle_pair(alpha, (1, 0), (0, 1))
}

/// cos(alpha)|2,0> + sin(alpha)|0,2>.
pub fn two_photon_state(alpha: f64) -> Result<TwoModeState> {
    angle_pair(alpha, (2, 0), (0, 2))
}

fn angle_pair(alpha: f64, cos_key: (usize, usize), sin_key: (usize, usize)) -> Result<TwoModeState> {
    if !alpha.is_finite() {
        return Err(OsgError::invalid("angle must be finite"));
    }
    let (s, c) = alpha.sin_cos();
    TwoModeState::from_amplitudes([
        (cos_key, Complex64::new(c, 0.0)),
        (sin_key, Complex64::new(s, 0.0)),
    ])
}

/// (|N,0> + |0,N>)/sqrt(2).
pub fn noon_state(n_nu: usize) -> Result<TwoModeState> {
    if n_nu == 0 {
        return Err(OsgError::invalid("NOON state needs at least one photon"));
    }
    equal_pair((n_nu, 0), (0, n_nu))
}

fn equal_pair(a: (usize, usize), b: (usize, usize)) -> Result<TwoModeState> {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    TwoModeState::from_amplitudes([(a, h), (b, h)])
}

/// A member of the maximally entangled family with a predicted empty ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyState {
    pub state: TwoModeState,
    /// Total cavity photon number N_nu = 2(j + 2q - 1).
    pub photons: usize,
    /// Ring index n* = N_nu/2 + 1 expected to carry no population.
    pub missing_ring: usize,
}

/// (|j, j+4q-2> + |j+4q-2, j>)/sqrt(2).
pub fn family_state(j: usize, q: usize) -> Result<FamilyState> {
    if q == 0 {
        return Err(OsgError::invalid("family index q must be at least 1"));
    }
    let other = j + 4 * q - 2;
    let state = equal_pair((j, other), (other, j))?;
    let photons = 2 * (j + 2 * q - 1);
    Ok(FamilyState {
        state,
        photons,
        missing_ring: photons / 2 + 1,
    })
}

/// Internal state c_g|g> + c_e|e> of the two-level atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub c_g: Complex64,
    pub c_e: Complex64,
}

impl AtomState {
    pub fn new(c_g: Complex64, c_e: Complex64) -> Result<Self> {
        let n2 = c_g.norm_sqr() + c_e.norm_sqr();
        if !n2.is_finite() || (n2 - 1.0).abs() > 1e-12 {
            return Err(OsgError::InvalidState(format!(
                "atomic amplitudes have norm^2 {n2}, expected 1"
            )));
        }
        Ok(Self { c_g, c_e })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(c_g: Complex64, c_e: Complex64) -> Result<Self> {
        let n = (c_g.norm_sqr() + c_e.norm_sqr()).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(OsgError::InvalidState("atomic amplitudes are zero".into()));
        }
        Ok(Self {
            c_g: c_g / n,
            c_e: c_e / n,
        })
    }

    pub fn excited() -> Self {
        Self {
            c_g: Complex64::new(0.0, 0.0),
            c_e: Complex64::new(1.0, 0.0),
        }
    }

    pub fn ground() -> Self {
        Self {
            c_g: Complex64::new(1.0, 0.0),
            c_e: Complex64::new(0.0, 0.0),
        }
    }
}

impl Default for AtomState {
    fn default() -> Self {
        Self::excited()
    }
}

/// Dimensionless coupling Λ = gτ and slit width kΔr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub lambda: f64,
    pub k_delta_r: f64,
}

impl CouplingParams {
    pub fn new(lambda: f64, k_delta_r: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(OsgError::invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(k_delta_r.is_finite() && k_delta_r > 0.0) {
            return Err(OsgError::invalid(format!(
                "k_delta_r must be positive, got {k_delta_r}"
            )));
        }
        Ok(Self { lambda, k_delta_r })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.lambda, self.k_delta_r).map(|_| ())
    }

    /// Ring radius sqrt(n) Λ.
    pub fn ring(&self, n: usize) -> f64 {
        (n as f64).sqrt() * self.lambda
    }
}
