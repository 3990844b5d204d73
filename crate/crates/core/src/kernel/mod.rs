//! Fourier amplitudes F_{m,n}^{±ε(N)}(℘, φ) of the dressed channels.
//!
//! Two independent evaluators live here: a closed form valid for the
//! exponential slit profile ([`analytic`]) and a direct two-dimensional
//! quadrature valid for any profile ([`quadrature`]).

pub mod analytic;
pub mod profile;
pub mod quadrature;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::bogoliubov::CoeffKey;
use crate::error::{OsgError, Result};

/// Atomic channel ε of a kernel: ground (δ = 0) or excited (δ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Ground,
    Excited,
}

impl Channel {
    pub fn delta(self) -> usize {
        match self {
            Channel::Ground => 0,
            Channel::Excited => 1,
        }
    }
}

/// Dressed branch ±, which fixes the sign of the momentum kick phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelIndices {
    /// Total excitation N (atom plus photons).
    pub total: usize,
    /// Source Fock index m.
    pub m: usize,
    /// Dressed ladder index n; the ring sits at ℘ = sqrt(n) Λ.
    pub n: usize,
    pub channel: Channel,
    pub branch: Branch,
}

impl KernelIndices {
    pub fn new(total: usize, m: usize, n: usize, channel: Channel, branch: Branch) -> Result<Self> {
        let lo = channel.delta();
        if m < lo || n < lo || m > total || n > total {
            return Err(OsgError::invalid(format!(
                "kernel indices (N={total}, m={m}, n={n}, {channel:?}) out of range"
            )));
        }
        Ok(Self {
            total,
            m,
            n,
            channel,
            branch,
        })
    }

    pub fn delta(&self) -> usize {
        self.channel.delta()
    }

    /// The rotation block entry D_{m-δ, n-δ}^{(N-δ)} weighting this kernel.
    pub fn coeff_key(&self) -> CoeffKey {
        let d = self.delta();
        CoeffKey {
            total: self.total - d,
            row: self.m - d,
            col: self.n - d,
        }
    }

    /// Every valid index tuple with total excitation up to `max_total`.
    pub fn enumerate(max_total: usize) -> Vec<KernelIndices> {
        let mut out = Vec::new();
        for total in 0..=max_total {
            for channel in [Channel::Ground, Channel::Excited] {
                let lo = channel.delta();
                if total < lo {
                    continue;
                }
                for m in lo..=total {
                    for n in lo..=total {
                        for branch in Branch::BOTH {
                            out.push(KernelIndices {
                                total,
                                m,
                                n,
                                channel,
                                branch,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Dimensionless transverse momentum in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumPoint {
    pub p_mag: f64,
    pub p_ang: f64,
}

impl MomentumPoint {
    pub fn new(p_mag: f64, p_ang: f64) -> Result<Self> {
        if !(p_mag.is_finite() && p_mag >= 0.0) || !p_ang.is_finite() {
            return Err(OsgError::invalid(format!(
                "momentum point ({p_mag}, {p_ang}) is not valid"
            )));
        }
        Ok(Self {
            p_mag,
            p_ang: wrap_angle(p_ang),
        })
    }
}

/// Wraps an angle into [0, 2π).
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_ranges() {
        assert!(KernelIndices::new(1, 1, 1, Channel::Excited, Branch::Plus).is_ok());
        assert!(KernelIndices::new(1, 0, 1, Channel::Excited, Branch::Plus).is_err());
        assert!(KernelIndices::new(1, 0, 0, Channel::Ground, Branch::Plus).is_ok());
        assert!(KernelIndices::new(1, 2, 0, Channel::Ground, Branch::Plus).is_err());
    }

    #[test]
    fn enumeration_counts() {
        // ground: sum (N+1)^2 for N<=4 = 55, excited: sum N^2 for N<=4 = 30
        assert_eq!(KernelIndices::enumerate(4).len(), 2 * (55 + 30));
    }

    #[test]
    fn angles_wrap() {
        let p = MomentumPoint::new(1.0, -0.5).unwrap();
        assert!((p.p_ang - (TAU - 0.5)).abs() < 1e-15);
        assert!(MomentumPoint::new(-1.0, 0.0).is_err());
        assert!(wrap_angle(TAU) < TAU);
    }
}
