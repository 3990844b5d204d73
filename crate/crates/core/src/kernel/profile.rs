use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{OsgError, Result};
use crate::numeric::{gauss_legendre, NeumaierSum};
use crate::state::CouplingParams;

/// Transverse amplitude profile of the collimated atom, expressed in the
/// dimensionless radius ρ = k r as g(ρ, θ) = f(ρ/k, θ)/k so that
/// ∫∫ ρ |g|² dρ dθ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlitProfile {
    /// f(r) = exp(-r / 2Δr) / (sqrt(2π) Δr).
    Exponential { k_delta_r: f64 },
    Tabulated(TabulatedProfile),
}

impl SlitProfile {
    pub fn exponential(k_delta_r: f64) -> Result<Self> {
        if !(k_delta_r.is_finite() && k_delta_r > 0.0) {
            return Err(OsgError::invalid("k_delta_r must be positive"));
        }
        Ok(SlitProfile::Exponential { k_delta_r })
    }

    pub fn for_params(params: &CouplingParams) -> Self {
        SlitProfile::Exponential {
            k_delta_r: params.k_delta_r,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, SlitProfile::Exponential { .. })
    }

    pub fn is_radial(&self) -> bool {
        match self {
            SlitProfile::Exponential { .. } => true,
            SlitProfile::Tabulated(t) => t.angular_count == 1,
        }
    }

    pub fn value(&self, rho: f64, theta: f64) -> f64 {
        match self {
            SlitProfile::Exponential { k_delta_r } => {
                (-rho / (2.0 * k_delta_r)).exp() / ((2.0 * PI).sqrt() * k_delta_r)
            }
            SlitProfile::Tabulated(t) => t.value(rho, theta),
        }
    }

    /// Radius beyond which the profile is treated as zero.
    pub fn support(&self, decay_lengths: f64) -> f64 {
        match self {
            SlitProfile::Exponential { k_delta_r } => decay_lengths * 2.0 * k_delta_r,
            SlitProfile::Tabulated(t) => *t.radii.last().expect("non-empty table"),
        }
    }

    /// Length over which the profile changes appreciably.
    pub fn length_scale(&self) -> f64 {
        match self {
            SlitProfile::Exponential { k_delta_r } => 2.0 * k_delta_r,
            SlitProfile::Tabulated(t) => t.radii.last().copied().unwrap_or(1.0) / 64.0,
        }
    }

    /// Radial nodes where a tabulated profile has kinks; panel edges are
    /// aligned to them.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            SlitProfile::Exponential { .. } => &[],
            SlitProfile::Tabulated(t) => &t.radii,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        match self {
            SlitProfile::Exponential { .. } => 1.0,
            SlitProfile::Tabulated(t) => t.raw_norm_sqr(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SlitProfile::Exponential { k_delta_r } => format!("exponential(k_delta_r={k_delta_r})"),
            SlitProfile::Tabulated(t) => format!(
                "tabulated(radial={}, angular={}, support={})",
                t.radii.len(),
                t.angular_count,
                t.radii.last().copied().unwrap_or(0.0)
            ),
        }
    }
}

/// Samples of g on a (ρ, θ) grid, bilinearly interpolated, periodic in θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedProfile {
    radii: Vec<f64>,
    angular_count: usize,
    /// Row-major over radii then angles.
    values: Vec<f64>,
    /// Factor applied to the supplied samples to reach unit norm.
    norm_correction: f64,
}

impl TabulatedProfile {
    /// Builds a normalized table. `values` is row-major (radius, angle) with
    /// `angular_count` uniformly spaced angles starting at θ = 0.
    pub fn new(radii: Vec<f64>, angular_count: usize, values: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || angular_count == 0 {
            return Err(OsgError::invalid("tabulated profile needs >= 2 radii and >= 1 angle"));
        }
        if values.len() != radii.len() * angular_count {
            return Err(OsgError::invalid("tabulated profile has inconsistent dimensions"));
        }
        if radii[0] != 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OsgError::invalid(
                "tabulated radii must start at 0 and increase strictly",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(OsgError::invalid("tabulated profile has non-finite samples"));
        }
        let mut t = Self {
            radii,
            angular_count,
            values,
            norm_correction: 1.0,
        };
        let n2 = t.raw_norm_sqr();
        if n2 <= 0.0 {
            return Err(OsgError::invalid("tabulated profile is identically zero"));
        }
        let scale = 1.0 / n2.sqrt();
        t.values.iter_mut().for_each(|v| *v *= scale);
        t.norm_correction = scale;
        Ok(t)
    }

    /// Samples a radial function on `count` uniform radii over [0, support].
    pub fn from_radial_fn(support: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = support / (count - 1) as f64;
        let radii: Vec<f64> = (0..count).map(|i| i as f64 * h).collect();
        let values = radii.iter().map(|&r| f(r)).collect();
        Self::new(radii, 1, values)
    }

    pub fn norm_correction(&self) -> f64 {
        self.norm_correction
    }

    fn sample(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.angular_count + j % self.angular_count]
    }

    fn value(&self, rho: f64, theta: f64) -> f64 {
        let last = *self.radii.last().expect("non-empty");
        if rho < 0.0 || rho > last {
            return 0.0;
        }
        let i = match self.radii.partition_point(|&r| r <= rho) {
            0 => 0,
            p => (p - 1).min(self.radii.len() - 2),
        };
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let x = (rho - r0) / (r1 - r0);
        if self.angular_count == 1 {
            return self.sample(i, 0) * (1.0 - x) + self.sample(i + 1, 0) * x;
        }
        let u = theta.rem_euclid(TAU) / TAU * self.angular_count as f64;
        let j = (u.floor() as usize).min(self.angular_count - 1);
        let y = u - j as f64;
        let a = self.sample(i, j) * (1.0 - y) + self.sample(i, j + 1) * y;
        let b = self.sample(i + 1, j) * (1.0 - y) + self.sample(i + 1, j + 1) * y;
        a * (1.0 - x) + b * x
    }

    /// ∫∫ ρ g² dρ dθ of the interpolant, exact for bilinear cells.
    fn raw_norm_sqr(&self) -> f64 {
        let (gx, gw) = gauss_legendre(3);
        let mut acc = NeumaierSum::new();
        let a = self.angular_count;
        let dth = TAU / a as f64;
        for i in 0..self.radii.len() - 1 {
            let (r0, r1) = (self.radii[i], self.radii[i + 1]);
            let hr = 0.5 * (r1 - r0);
            for j in 0..a {
                for (xr, wr) in gx.iter().zip(&gw) {
                    let x = 0.5 * (xr + 1.0);
                    let rho = r0 + x * (r1 - r0);
                    if a == 1 {
                        let g = self.sample(i, 0) * (1.0 - x) + self.sample(i + 1, 0) * x;
                        acc.add(wr * hr * rho * g * g * TAU);
                        continue;
                    }
                    for (yt, wt) in gx.iter().zip(&gw) {
                        let y = 0.5 * (yt + 1.0);
                        let top = self.sample(i, j) * (1.0 - y) + self.sample(i, j + 1) * y;
                        let bot = self.sample(i + 1, j) * (1.0 - y) + self.sample(i + 1, j + 1) * y;
                        let g = top * (1.0 - x) + bot * x;
                        acc.add(wr * hr * wt * 0.5 * dth * rho * g * g);
                    }
                }
            }
        }
        acc.value()
    }
}
