//! Direct two-dimensional quadrature of the channel Fourier amplitudes
//!
//! F = ∫₀^∞ ∫₀^{2π} (dθ dρ / 2π) ρ g(ρ, θ) D(θ) exp(-iρ[℘ cos(θ - φ) ∓ sqrt(n) Λ])
//!
//! for any slit profile. The angular integral is innermost and uses the
//! uniform trapezoid rule, which converges geometrically for periodic
//! integrands once the node count exceeds the Bessel cutoff ρ℘ + O((ρ℘)^{1/3}).
//! The radial integral uses adaptive Gauss-Kronrod (10/21) panels seeded at
//! one oscillation period of the fastest phase ℘ + sqrt(n) Λ.
//!
//! This path never touches the closed-form machinery and serves as the
//! reference for it.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{d_coeff, CoeffKey};
use crate::distribution::{assemble_w1, required_kernels};
use crate::error::{OsgError, Result};
use crate::kernel::profile::SlitProfile;
use crate::kernel::{KernelIndices, MomentumPoint};
use crate::numeric::{ComplexSum, GK21_WG, GK21_WGK, GK21_XGK};
use crate::state::{AtomState, CouplingParams, TwoModeState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Minimum angular node count; raised per radius to clear the Bessel
    /// cutoff of the plane-wave factor.
    pub angular_points: usize,
    pub radial_rel_tol: f64,
    pub radial_abs_tol: f64,
    /// Cutoff radius in units of the profile decay length 2kΔr.
    pub cutoff_decay_lengths: f64,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            angular_points: 512,
            radial_rel_tol: 1e-9,
            radial_abs_tol: 1e-15,
            cutoff_decay_lengths: 40.0,
            max_panels: 1 << 16,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.angular_points < 64 || self.angular_points % 2 != 0 {
            return Err(OsgError::invalid("angular_points must be even and >= 64"));
        }
        if !(self.radial_rel_tol >= 100.0 * f64::EPSILON) {
            return Err(OsgError::invalid("radial tolerance below 100 machine epsilon"));
        }
        if !(self.radial_abs_tol >= 0.0) || !(self.cutoff_decay_lengths > 0.0) {
            return Err(OsgError::invalid("invalid radial quadrature settings"));
        }
        if self.max_panels == 0 {
            return Err(OsgError::invalid("max_panels must be positive"));
        }
        Ok(())
    }

    /// Twice the angular floor and half the radial tolerance.
    pub fn refined(&self) -> Self {
        Self {
            angular_points: 2 * self.angular_points,
            radial_rel_tol: 0.5 * self.radial_rel_tol,
            radial_abs_tol: 0.5 * self.radial_abs_tol,
            ..*self
        }
    }
}

/// Quadrature value together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: Complex64,
    pub error: f64,
}

/// Node count for the angular trapezoid at plane-wave argument x = ρ℘.
fn angular_count(x: f64, floor: usize, max_order: usize) -> usize {
    let need = x + 12.0 * x.cbrt() + 2.0 * max_order as f64 + 16.0;
    let n = (need.ceil() as usize).max(floor);
    n.div_ceil(32) * 32
}

struct AngularNodes {
    trig: Vec<(f64, f64)>,
}

/// Shared (sin, cos) tables per angular node count.
#[derive(Default)]
struct AngularTables {
    nodes: RwLock<HashMap<usize, Arc<AngularNodes>>>,
}

impl AngularTables {
    fn global() -> &'static AngularTables {
        static T: OnceLock<AngularTables> = OnceLock::new();
        T.get_or_init(AngularTables::default)
    }

    fn nodes(&self, count: usize) -> Arc<AngularNodes> {
        if let Some(n) = self.nodes.read().expect("poisoned").get(&count) {
            return Arc::clone(n);
        }
        let trig = (0..count)
            .map(|i| (TAU * i as f64 / count as f64).sin_cos())
            .collect();
        let built = Arc::new(AngularNodes { trig });
        Arc::clone(self.nodes.write().expect("poisoned").entry(count).or_insert(built))
    }
}

/// Fourier coefficients of D(θ) by a DFT on enough nodes to be exact for
/// its trigonometric degree. Entry k + order holds the coefficient of e^{ikθ}.
fn block_harmonics(key: CoeffKey, order: usize) -> Vec<Complex64> {
    let p = 4 * (order + 1);
    let samples: Vec<f64> = (0..p)
        .map(|j| d_coeff(key.total, key.row, key.col, TAU * j as f64 / p as f64).expect("valid key"))
        .collect();
    (-(order as i64)..=order as i64)
        .map(|k| {
            let mut acc = ComplexSum::new();
            for (j, v) in samples.iter().enumerate() {
                let th = TAU * j as f64 / p as f64;
                acc.add(Complex64::from_polar(*v, -(k as f64) * th));
            }
            acc.value() / p as f64
        })
        .collect()
}

/// Per-call evaluator of the radial integrand vector.
///
/// The trapezoid sum Σ_i D(θ_i) E(θ_i) is reorganised as Σ_k d_k μ_k with
/// μ_k = Σ_i e^{ikθ_i} E(θ_i), which is an identity of finite sums because
/// D is a trigonometric polynomial.
struct Integrand<'a> {
    harmonics: Vec<Vec<Complex64>>,
    /// For each request: index into `harmonics` and the signed phase rate ±sqrt(n)Λ.
    requests: Vec<(usize, f64)>,
    point: MomentumPoint,
    profile: &'a SlitProfile,
    quad: &'a QuadratureSpec,
    max_order: usize,
    moments: Vec<Complex64>,
}

impl Integrand<'_> {
    fn eval(&mut self, rho: f64, out: &mut [Complex64]) {
        let x = rho * self.point.p_mag;
        let count = angular_count(x, self.quad.angular_points, self.max_order);
        let nodes = AngularTables::global().nodes(count);
        let (sphi, cphi) = self.point.p_ang.sin_cos();
        let radial = self.profile.is_radial();
        let order = self.max_order as i64;
        let mut re = vec![0.0; self.moments.len()];
        let mut im = vec![0.0; self.moments.len()];
        for (i, &(s, c)) in nodes.trig.iter().enumerate() {
            // exp(-i x cos(θ - φ))
            let arg = -x * (c * cphi + s * sphi);
            let (mut ei, mut er) = arg.sin_cos();
            if !radial {
                let g = self.profile.value(rho, TAU * i as f64 / count as f64);
                er *= g;
                ei *= g;
            }
            for k in -order..=order {
                let idx = (k * i as i64).rem_euclid(count as i64) as usize;
                let (ks, kc) = nodes.trig[idx];
                let slot = (k + order) as usize;
                re[slot] += kc * er - ks * ei;
                im[slot] += kc * ei + ks * er;
            }
        }
        let scale = if radial {
            rho * self.profile.value(rho, 0.0) / count as f64
        } else {
            rho / count as f64
        };
        for (m, (r, i)) in self.moments.iter_mut().zip(re.iter().zip(&im)) {
            *m = Complex64::new(*r, *i) * scale;
        }
        for (o, &(f, rate)) in out.iter_mut().zip(&self.requests) {
            let h = &self.harmonics[f];
            let off = self.max_order - (h.len() - 1) / 2;
            let mut ang = Complex64::new(0.0, 0.0);
            for (j, d) in h.iter().enumerate() {
                ang += d * self.moments[off + j];
            }
            *o = ang * Complex64::from_polar(1.0, rate * rho);
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<Complex64>,
    err: Vec<f64>,
}

fn gk21(f: &mut Integrand<'_>, a: f64, b: f64, dim: usize, buf: &mut [Complex64]) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![Complex64::new(0.0, 0.0); dim];
    let mut gauss = vec![Complex64::new(0.0, 0.0); dim];
    f.eval(centre, buf);
    for j in 0..dim {
        kron[j] += buf[j] * GK21_WGK[10];
    }
    for (i, &x) in GK21_XGK[..10].iter().enumerate() {
        for sgn in [-1.0, 1.0] {
            f.eval(centre + sgn * half * x, buf);
            for j in 0..dim {
                kron[j] += buf[j] * GK21_WGK[i];
                if i % 2 == 1 {
                    gauss[j] += buf[j] * GK21_WG[i / 2];
                }
            }
        }
    }
    let mut err = Vec::with_capacity(dim);
    for j in 0..dim {
        kron[j] *= half;
        gauss[j] *= half;
        let floor = 50.0 * f64::EPSILON * kron[j].norm();
        err.push((kron[j] - gauss[j]).norm().max(floor));
    }
    Panel {
        a,
        b,
        value: kron,
        err,
    }
}

fn initial_edges(upper: f64, step: f64, breakpoints: &[f64]) -> Vec<f64> {
    let count = (upper / step).ceil().max(1.0) as usize;
    let mut edges: Vec<f64> = (0..=count).map(|i| upper * i as f64 / count as f64).collect();
    edges.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < upper));
    edges.sort_by(|a, b| a.partial_cmp(b).expect("finite edges"));
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * upper);
    edges
}

/// Evaluates several kernels at one momentum point with shared nodes.
pub fn fourier_numeric_batch(
    indices: &[KernelIndices],
    point: &MomentumPoint,
    params: &CouplingParams,
    profile: &SlitProfile,
    quad: &QuadratureSpec,
) -> Result<Vec<QuadEstimate>> {
    params.validate()?;
    quad.validate()?;
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let mut keys: Vec<CoeffKey> = Vec::new();
    let mut requests = Vec::with_capacity(indices.len());
    let mut max_rate = 0.0f64;
    for idx in indices {
        let key = idx.coeff_key();
        let f = match keys.iter().position(|k| *k == key) {
            Some(p) => p,
            None => {
                keys.push(key);
                keys.len() - 1
            }
        };
        let rate = idx.branch.sign() * (idx.n as f64).sqrt() * params.lambda;
        max_rate = max_rate.max(rate.abs());
        requests.push((f, rate));
    }
    let max_order = keys.iter().map(|k| k.total).max().unwrap_or(0);
    let harmonics = keys.iter().map(|k| block_harmonics(*k, k.total)).collect();
    let dim = requests.len();
    let mut integrand = Integrand {
        harmonics,
        requests,
        point: *point,
        profile,
        quad,
        max_order,
        moments: vec![Complex64::new(0.0, 0.0); 2 * max_order + 1],
    };

    let upper = profile.support(quad.cutoff_decay_lengths);
    let omega = point.p_mag + max_rate;
    let mut step = profile.length_scale();
    if omega > 0.0 {
        step = step.min(TAU / omega);
    }
    let edges = initial_edges(upper, step, profile.breakpoints());
    let mut buf = vec![Complex64::new(0.0, 0.0); dim];
    let mut panels: Vec<Panel> = edges
        .windows(2)
        .map(|w| gk21(&mut integrand, w[0], w[1], dim, &mut buf))
        .collect();

    loop {
        let (totals, errors) = summarize(&panels, dim);
        let targets: Vec<f64> = totals
            .iter()
            .map(|t| (quad.radial_rel_tol * t.norm()).max(quad.radial_abs_tol))
            .collect();
        let converged = errors.iter().zip(&targets).all(|(e, t)| e <= t);
        if converged {
            return Ok(totals
                .into_iter()
                .zip(errors)
                .map(|(value, error)| QuadEstimate { value, error })
                .collect());
        }
        if panels.len() >= quad.max_panels {
            let (j, _) = errors
                .iter()
                .zip(&targets)
                .enumerate()
                .map(|(j, (e, t))| (j, e / t))
                .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            return Err(OsgError::Accuracy {
                estimate: totals[j].norm(),
                error_bound: errors[j],
            });
        }
        let share = 1.0 / panels.len() as f64;
        let scores: Vec<f64> = panels
            .iter()
            .map(|p| {
                p.err
                    .iter()
                    .zip(&targets)
                    .map(|(e, t)| e / t)
                    .fold(0.0, f64::max)
            })
            .collect();
        let worst = scores.iter().cloned().fold(0.0, f64::max);
        let mut next = Vec::with_capacity(panels.len() * 2);
        for (p, score) in panels.into_iter().zip(scores) {
            if score > share || score == worst {
                let mid = 0.5 * (p.a + p.b);
                next.push(gk21(&mut integrand, p.a, mid, dim, &mut buf));
                next.push(gk21(&mut integrand, mid, p.b, dim, &mut buf));
            } else {
                next.push(p);
            }
        }
        panels = next;
    }
}

fn summarize(panels: &[Panel], dim: usize) -> (Vec<Complex64>, Vec<f64>) {
    let mut totals = vec![ComplexSum::new(); dim];
    let mut errors = vec![0.0; dim];
    for p in panels {
        for j in 0..dim {
            totals[j].add(p.value[j]);
            errors[j] += p.err[j];
        }
    }
    (totals.iter().map(|t| t.value()).collect(), errors)
}

/// Single-kernel quadrature.
pub fn fourier_numeric(
    idx: &KernelIndices,
    point: &MomentumPoint,
    params: &CouplingParams,
    profile: &SlitProfile,
    quad: &QuadratureSpec,
) -> Result<QuadEstimate> {
    Ok(fourier_numeric_batch(std::slice::from_ref(idx), point, params, profile, quad)?[0])
}

/// Momentum density assembled from quadrature kernels.
pub fn w_numeric(
    state: &TwoModeState,
    atom: &AtomState,
    point: &MomentumPoint,
    params: &CouplingParams,
    profile: &SlitProfile,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let needed = required_kernels(state, atom);
    let values = fourier_numeric_batch(&needed, point, params, profile, quad)?;
    let lookup: HashMap<KernelIndices, Complex64> = needed
        .iter()
        .copied()
        .zip(values.into_iter().map(|v| v.value))
        .collect();
    assemble_w1(state, atom, &mut |idx| {
        lookup
            .get(idx)
            .copied()
            .ok_or_else(|| OsgError::invalid(format!("kernel {idx:?} was not precomputed")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::analytic::fourier_analytic;
    use crate::kernel::{Branch, Channel};

    fn params() -> CouplingParams {
        CouplingParams::new(20.0, 0.1).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        let bad = QuadratureSpec {
            angular_points: 32,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec {
            radial_rel_tol: 1e-17,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn angular_count_clears_bessel_cutoff() {
        assert_eq!(angular_count(0.0, 512, 4), 512);
        let n = angular_count(2000.0, 512, 4);
        assert!(n >= 2000 + 12 * 12 && n % 32 == 0);
    }

    #[test]
    fn cos_weight_vanishes_at_origin() {
        // D^{(1)}_{1,1}(θ) = cos θ averages to zero, so F(℘ = 0) = 0.
        let p = params();
        let prof = SlitProfile::for_params(&p);
        let q = QuadratureSpec::default();
        for idx in [
            KernelIndices::new(1, 1, 1, Channel::Ground, Branch::Plus).unwrap(),
            KernelIndices::new(2, 2, 2, Channel::Excited, Branch::Minus).unwrap(),
        ] {
            let pt = MomentumPoint::new(0.0, 0.3).unwrap();
            let v = fourier_numeric(&idx, &pt, &p, &prof, &q).unwrap();
            assert!(v.value.norm() < 1e-14, "{idx:?}: {}", v.value);
        }
    }

    #[test]
    fn phi_equivariance_single_harmonic() {
        // excited N = 2, m = n = 2 weights cos θ: harmonics ±1, so
        // F(℘, φ) = i (e^{iφ} + e^{-iφ}) Ŝ₁/2 and F(φ)/F(φ') = cos φ / cos φ'.
        let p = params();
        let prof = SlitProfile::for_params(&p);
        let q = QuadratureSpec::default();
        let idx = KernelIndices::new(2, 2, 2, Channel::Excited, Branch::Plus).unwrap();
        let a = fourier_numeric(&idx, &MomentumPoint::new(25.0, 0.2).unwrap(), &p, &prof, &q)
            .unwrap()
            .value;
        let b = fourier_numeric(&idx, &MomentumPoint::new(25.0, 1.1).unwrap(), &p, &prof, &q)
            .unwrap()
            .value;
        let expected = 0.2f64.cos() / 1.1f64.cos();
        assert!((a / b - expected).norm() < 1e-8);
    }

    #[test]
    fn matches_closed_form_spot_checks() {
        let p = params();
        let prof = SlitProfile::for_params(&p);
        let q = QuadratureSpec::default();
        let pts = [(0.7, 0.4), (19.5, 2.0), (28.0, 5.0), (44.0, 3.3)];
        for idx in KernelIndices::enumerate(2) {
            for &(pm, ph) in &pts {
                let pt = MomentumPoint::new(pm, ph).unwrap();
                let num = fourier_numeric(&idx, &pt, &p, &prof, &q).unwrap();
                let ana = fourier_analytic(&idx, &pt, &p).unwrap();
                let tol = 1e-6 * num.value.norm().max(1e-12);
                assert!(
                    (num.value - ana).norm() <= tol,
                    "{idx:?} at ({pm}, {ph}): numeric {} analytic {}",
                    num.value,
                    ana
                );
            }
        }
    }

    #[test]
    fn panel_budget_reports_accuracy_error() {
        // Near ℘ = 0 the kernel is O(℘) while the integrand is O(1), so a tight
        // relative target with no absolute floor drowns in rounding.
        let p = params();
        let prof = SlitProfile::for_params(&p);
        let q = QuadratureSpec {
            radial_rel_tol: 1e-13,
            radial_abs_tol: 0.0,
            max_panels: 256,
            ..Default::default()
        };
        let idx = KernelIndices::new(1, 1, 1, Channel::Ground, Branch::Plus).unwrap();
        let pt = MomentumPoint::new(1e-7, 0.0).unwrap();
        match fourier_numeric(&idx, &pt, &p, &prof, &q) {
            Err(OsgError::Accuracy { error_bound, .. }) => assert!(error_bound > 0.0),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }
}
