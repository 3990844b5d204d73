//! Atomic momentum density W(℘, φ, Λ), grids, and ring populations.
//!
//! W = |c_g|² Σ_N |Σ_m C_{m,N-m} F^{g(N)}_{m,0}|²
//!   + ½ Σ_{N≥1} Σ_{n=1}^{N} Σ_± |c_g Σ_m C_{m,N-m} F^{±g(N)}_{m,n} ± c_e Σ_m C_{m-1,N-m} F^{±e(N)}_{m,n}|²

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::d_matrix;
use crate::error::{OsgError, Result};
use crate::kernel::analytic::{fourier_analytic, radial_factors, HarmonicTable};
use crate::kernel::profile::SlitProfile;
use crate::kernel::quadrature::{w_numeric, QuadratureSpec};
use crate::kernel::{Branch, Channel, KernelIndices, MomentumPoint};
use crate::numeric::{gauss_legendre, NeumaierSum};
use crate::state::{AtomState, CouplingParams, TwoModeState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn require_normalized(state: &TwoModeState) -> Result<()> {
    let n2 = state.norm_sqr();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(OsgError::InvalidState(format!(
            "state must be normalized (norm² = {n2})"
        )));
    }
    Ok(())
}

/// Generic assembly of W from any kernel source. Kernels multiplying a
/// zero amplitude are never requested.
pub fn assemble_w1(
    state: &TwoModeState,
    atom: &AtomState,
    kernel: &mut dyn FnMut(&KernelIndices) -> Result<Complex64>,
) -> Result<f64> {
    let top = state.max_total();
    let mut w = NeumaierSum::new();
    if atom.c_g != ZERO {
        for total in 0..=top {
            let mut amp = ZERO;
            for (m, c) in state.block(total).into_iter().enumerate() {
                if c != ZERO {
                    let idx = KernelIndices::new(total, m, 0, Channel::Ground, Branch::Plus)?;
                    amp += c * kernel(&idx)?;
                }
            }
            w.add(atom.c_g.norm_sqr() * amp.norm_sqr());
        }
    }
    for total in 1..=top + 1 {
        let ground = if total <= top { state.block(total) } else { Vec::new() };
        let excited = state.block(total - 1);
        for n in 1..=total {
            for branch in Branch::BOTH {
                let mut a = ZERO;
                if atom.c_g != ZERO {
                    for (m, c) in ground.iter().enumerate() {
                        if *c != ZERO {
                            let idx = KernelIndices::new(total, m, n, Channel::Ground, branch)?;
                            a += c * kernel(&idx)?;
                        }
                    }
                }
                let mut b = ZERO;
                if atom.c_e != ZERO {
                    for (j, c) in excited.iter().enumerate() {
                        if *c != ZERO {
                            let idx = KernelIndices::new(total, j + 1, n, Channel::Excited, branch)?;
                            b += c * kernel(&idx)?;
                        }
                    }
                }
                let amp = atom.c_g * a + atom.c_e * b * branch.sign();
                w.add(0.5 * amp.norm_sqr());
            }
        }
    }
    Ok(w.value())
}

/// Kernel index tuples that [`assemble_w1`] will request.
pub fn required_kernels(state: &TwoModeState, atom: &AtomState) -> Vec<KernelIndices> {
    let mut out = Vec::new();
    assemble_w1(state, atom, &mut |idx| {
        out.push(*idx);
        Ok(ZERO)
    })
    .expect("index enumeration cannot fail");
    out
}

/// Excited-atom density written directly as ½ Σ_N Σ_n Σ_± |Σ_m C_{m-1,N-m} F^{±(N)}_{m,n}|²,
/// each kernel from the term-by-term triple sum.
pub fn w_excited(state: &TwoModeState, point: &MomentumPoint, params: &CouplingParams) -> Result<f64> {
    let mut w = NeumaierSum::new();
    for total in 1..=state.max_total() + 1 {
        for n in 1..=total {
            for branch in Branch::BOTH {
                let mut amp = ZERO;
                for m in 1..=total {
                    let c = state.amplitude(m - 1, total - m);
                    if c != ZERO {
                        let idx = KernelIndices::new(total, m, n, Channel::Excited, branch)?;
                        amp += c * fourier_analytic(&idx, point, params)?;
                    }
                }
                w.add(0.5 * amp.norm_sqr());
            }
        }
    }
    Ok(w.value())
}

#[derive(Debug, Clone)]
struct Term {
    ring: usize,
    weight: f64,
    order: usize,
    /// Combined harmonic coefficients, entry k + order.
    coeffs: Vec<Complex64>,
}

/// Precomputed analytic density for one (state, atom, params). Every
/// amplitude is Σ_k G_k e^{ikφ} Ŝ_{|k|}(℘) with G collected once from the
/// harmonic tables, so a point costs a few complex products per term.
#[derive(Debug, Clone)]
pub struct DensityModel {
    params: CouplingParams,
    rings: Vec<(usize, Branch, usize)>,
    terms: Vec<Term>,
    max_order: usize,
}

/// A density model specialised to one momentum magnitude.
pub struct DensityRow<'a> {
    model: &'a DensityModel,
    /// Per term: G_k Ŝ_{|k|}(℘).
    scaled: Vec<Vec<Complex64>>,
}

impl DensityModel {
    pub fn new(state: &TwoModeState, atom: &AtomState, params: &CouplingParams) -> Result<Self> {
        params.validate()?;
        require_normalized(state)?;
        let top = state.max_total();
        let mut rings: Vec<(usize, Branch, usize)> = Vec::new();
        let mut terms = Vec::new();
        let mut ring_of = |n: usize, branch: Branch, order: usize| -> usize {
            match rings.iter().position(|r| r.0 == n && r.1 == branch) {
                Some(p) => {
                    rings[p].2 = rings[p].2.max(order);
                    p
                }
                None => {
                    rings.push((n, branch, order));
                    rings.len() - 1
                }
            }
        };
        let accumulate = |dst: &mut [Complex64], order: usize, weight: Complex64, idx: &KernelIndices| {
            let table = HarmonicTable::for_kernel(idx);
            for (k, h) in table.iter() {
                dst[(k + order as i64) as usize] += weight * h;
            }
        };
        if atom.c_g != ZERO {
            for total in 0..=top {
                let mut g = vec![ZERO; 2 * total + 1];
                for (m, c) in state.block(total).into_iter().enumerate() {
                    if c != ZERO {
                        let idx = KernelIndices::new(total, m, 0, Channel::Ground, Branch::Plus)?;
                        accumulate(&mut g, total, c, &idx);
                    }
                }
                if g.iter().any(|z| *z != ZERO) {
                    terms.push(Term {
                        ring: ring_of(0, Branch::Plus, total),
                        weight: atom.c_g.norm_sqr(),
                        order: total,
                        coeffs: g,
                    });
                }
            }
        }
        for total in 1..=top + 1 {
            let ground = if total <= top { state.block(total) } else { Vec::new() };
            let excited = state.block(total - 1);
            for n in 1..=total {
                for branch in Branch::BOTH {
                    let mut g = vec![ZERO; 2 * total + 1];
                    if atom.c_g != ZERO {
                        for (m, c) in ground.iter().enumerate() {
                            if *c != ZERO {
                                let idx = KernelIndices::new(total, m, n, Channel::Ground, branch)?;
                                accumulate(&mut g, total, atom.c_g * c, &idx);
                            }
                        }
                    }
                    if atom.c_e != ZERO {
                        let ce = atom.c_e * branch.sign();
                        for (j, c) in excited.iter().enumerate() {
                            if *c != ZERO {
                                let idx =
                                    KernelIndices::new(total, j + 1, n, Channel::Excited, branch)?;
                                accumulate(&mut g, total, ce * c, &idx);
                            }
                        }
                    }
                    if g.iter().any(|z| *z != ZERO) {
                        terms.push(Term {
                            ring: ring_of(n, branch, total),
                            weight: 0.5,
                            order: total,
                            coeffs: g,
                        });
                    }
                }
            }
        }
        let max_order = terms.iter().map(|t| t.order).max().unwrap_or(0);
        Ok(Self {
            params: *params,
            rings,
            terms,
            max_order,
        })
    }

    pub fn params(&self) -> &CouplingParams {
        &self.params
    }

    pub fn row(&self, p_mag: f64) -> DensityRow<'_> {
        let radial: Vec<Vec<Complex64>> = self
            .rings
            .iter()
            .map(|&(n, branch, order)| radial_factors(n, branch, p_mag, &self.params, order))
            .collect();
        let scaled = self
            .terms
            .iter()
            .map(|t| {
                let r = &radial[t.ring];
                t.coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let k = i as i64 - t.order as i64;
                        c * r[k.unsigned_abs() as usize]
                    })
                    .collect()
            })
            .collect();
        DensityRow {
            model: self,
            scaled,
        }
    }

    pub fn density(&self, point: &MomentumPoint) -> f64 {
        self.row(point.p_mag).at(point.p_ang)
    }
}

impl DensityRow<'_> {
    pub fn at(&self, phi: f64) -> f64 {
        let top = self.model.max_order;
        let unit = Complex64::from_polar(1.0, phi);
        let mut pos = Vec::with_capacity(top + 1);
        let mut z = Complex64::new(1.0, 0.0);
        for _ in 0..=top {
            pos.push(z);
            z *= unit;
        }
        let mut w = NeumaierSum::new();
        for (t, s) in self.model.terms.iter().zip(&self.scaled) {
            let mut amp = ZERO;
            for (i, v) in s.iter().enumerate() {
                let k = i as i64 - t.order as i64;
                let e = pos[k.unsigned_abs() as usize];
                amp += v * if k < 0 { e.conj() } else { e };
            }
            w.add(t.weight * amp.norm_sqr());
        }
        w.value()
    }

    pub fn along(&self, phis: &[f64]) -> Vec<f64> {
        phis.iter().map(|&p| self.at(p)).collect()
    }
}

/// Density at one point through the analytic kernels.
pub fn w_point(
    state: &TwoModeState,
    atom: &AtomState,
    point: &MomentumPoint,
    params: &CouplingParams,
) -> Result<f64> {
    Ok(DensityModel::new(state, atom, params)?.density(point))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radial_count: usize,
    pub angular_count: usize,
    /// Defaults to sqrt(max_total + 1) Λ + 10/kΔr.
    pub p_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            radial_count: 400,
            angular_count: 720,
            p_max: None,
        }
    }
}

impl GridSpec {
    pub fn resolve_p_max(&self, state: &TwoModeState, params: &CouplingParams) -> f64 {
        self.p_max.unwrap_or_else(|| default_p_max(state, params))
    }
}

pub fn default_p_max(state: &TwoModeState, params: &CouplingParams) -> f64 {
    ((state.max_total() + 1) as f64).sqrt() * params.lambda + 10.0 / params.k_delta_r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub params: CouplingParams,
    pub profile: String,
    pub state_fingerprint: String,
    pub kernel: KernelMode,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    pub radial_values: Vec<f64>,
    pub angular_values: Vec<f64>,
    /// densities[i][j] at (radial_values[i], angular_values[j]).
    pub densities: Vec<Vec<f64>>,
    pub meta: GridMeta,
}

fn grid_axes(spec: &GridSpec, p_max: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.radial_count < 2 || spec.angular_count < 4 {
        return Err(OsgError::invalid("grid needs >= 2 radial and >= 4 angular points"));
    }
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(OsgError::invalid("grid p_max must be positive"));
    }
    let nr = spec.radial_count;
    let na = spec.angular_count;
    let radial = (0..nr).map(|i| p_max * i as f64 / (nr - 1) as f64).collect();
    let angular = (0..na).map(|j| TAU * j as f64 / na as f64).collect();
    Ok((radial, angular))
}

fn resolution_warning(state: &TwoModeState, params: &CouplingParams, step: f64) -> Option<String> {
    let n = (state.max_total() + 1) as f64;
    let spacing = ((n + 1.0).sqrt() - n.sqrt()) * params.lambda;
    (step > spacing / 4.0).then(|| {
        format!(
            "radial step {step:.4} exceeds a quarter of the ring spacing {spacing:.4} at n = {n}"
        )
    })
}

/// Density on a polar grid through the analytic kernels.
pub fn w_grid(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
    spec: &GridSpec,
) -> Result<MomentumGrid> {
    let model = DensityModel::new(state, atom, params)?;
    let p_max = spec.resolve_p_max(state, params);
    let (radial, angular) = grid_axes(spec, p_max)?;
    let densities: Vec<Vec<f64>> = radial
        .par_iter()
        .map(|&p| model.row(p).along(&angular))
        .collect();
    let mut warnings = Vec::new();
    warnings.extend(resolution_warning(state, params, radial[1] - radial[0]));
    Ok(MomentumGrid {
        radial_values: radial,
        angular_values: angular,
        densities,
        meta: GridMeta {
            params: *params,
            profile: SlitProfile::for_params(params).describe(),
            state_fingerprint: state.fingerprint(),
            kernel: KernelMode::Analytic,
            warnings,
        },
    })
}

/// Density on a polar grid through the quadrature kernels, for any profile.
pub fn w_grid_numeric(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
    spec: &GridSpec,
    profile: &SlitProfile,
    quad: &QuadratureSpec,
) -> Result<MomentumGrid> {
    require_normalized(state)?;
    let p_max = spec.resolve_p_max(state, params);
    let (radial, angular) = grid_axes(spec, p_max)?;
    let densities: Vec<Vec<f64>> = radial
        .par_iter()
        .map(|&p| {
            angular
                .iter()
                .map(|&phi| {
                    let pt = MomentumPoint { p_mag: p, p_ang: phi };
                    w_numeric(state, atom, &pt, params, profile, quad)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    warnings.extend(resolution_warning(state, params, radial[1] - radial[0]));
    Ok(MomentumGrid {
        radial_values: radial,
        angular_values: angular,
        densities,
        meta: GridMeta {
            params: *params,
            profile: profile.describe(),
            state_fingerprint: state.fingerprint(),
            kernel: KernelMode::Numeric,
            warnings,
        },
    })
}

/// ∫∫ W ℘ d℘ dφ by the trapezoid rule on the grid axes (periodic in φ).
pub fn total_probability(grid: &MomentumGrid) -> f64 {
    let dphi = TAU / grid.angular_values.len() as f64;
    let ring: Vec<f64> = grid
        .radial_values
        .iter()
        .zip(&grid.densities)
        .map(|(p, row)| p * row.iter().sum::<f64>() * dphi)
        .collect();
    let mut acc = NeumaierSum::new();
    for (i, w) in grid.radial_values.windows(2).enumerate() {
        acc.add(0.5 * (w[1] - w[0]) * (ring[i] + ring[i + 1]));
    }
    acc.value()
}

impl MomentumGrid {
    /// Writes `p_mag,p_ang,density` rows, radial index outermost.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "p_mag,p_ang,density")?;
        for (p, row) in self.radial_values.iter().zip(&self.densities) {
            for (phi, w) in self.angular_values.iter().zip(row) {
                writeln!(out, "{p:.12e},{phi:.12e},{w:.12e}")?;
            }
        }
        Ok(())
    }

    /// Bilinear resampling onto a square Cartesian raster of side 2 p_max.
    /// Rows run over p_y, columns over p_x; points beyond p_max are zero.
    pub fn cartesian_raster(&self, size: usize) -> Vec<Vec<f64>> {
        let p_max = *self.radial_values.last().expect("non-empty grid");
        let dr = self.radial_values[1] - self.radial_values[0];
        let na = self.angular_values.len();
        let dphi = TAU / na as f64;
        let coord = |i: usize| -p_max + 2.0 * p_max * i as f64 / (size.max(2) - 1) as f64;
        (0..size)
            .map(|iy| {
                (0..size)
                    .map(|ix| {
                        let (x, y) = (coord(ix), coord(iy));
                        let r = x.hypot(y);
                        if r > p_max {
                            return 0.0;
                        }
                        let u = (r / dr).min((self.radial_values.len() - 1) as f64 - 1e-12);
                        let i = u.floor() as usize;
                        let fu = u - i as f64;
                        let v = y.atan2(x).rem_euclid(TAU) / dphi;
                        let j = (v.floor() as usize) % na;
                        let fv = v - v.floor();
                        let j1 = (j + 1) % na;
                        let d = &self.densities;
                        let a = d[i][j] * (1.0 - fv) + d[i][j1] * fv;
                        let b = d[i + 1][j] * (1.0 - fv) + d[i + 1][j1] * fv;
                        a * (1.0 - fu) + b * fu
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Ring radius times the angular integral of W on the ring.
    #[serde(rename = "eq8")]
    RingPeak,
    Window,
    Exact,
}

impl std::str::FromStr for Estimator {
    type Err = OsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq8" => Ok(Estimator::RingPeak),
            "window" => Ok(Estimator::Window),
            "exact" => Ok(Estimator::Exact),
            other => Err(OsgError::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingPopulation {
    pub n: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpectrum {
    pub estimator: Estimator,
    pub entries: Vec<RingPopulation>,
    pub warnings: Vec<String>,
}

impl PopulationSpectrum {
    pub fn get(&self, n: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.n == n).map(|e| e.p)
    }

    pub fn total(&self) -> f64 {
        crate::numeric::compensated_sum(self.entries.iter().map(|e| e.p))
    }
}

/// Trapezoid nodes for the θ-average in the exact estimator.
pub const EXACT_THETA_NODES: usize = 1024;

/// Angular samples used by the ring-peak and window estimators.
pub const ESTIMATOR_PHI_NODES: usize = 720;

pub fn populations(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
    estimator: Estimator,
) -> Result<PopulationSpectrum> {
    params.validate()?;
    require_normalized(state)?;
    match estimator {
        Estimator::Exact => exact_populations(state, atom),
        Estimator::RingPeak => ring_peak_populations(state, atom, params),
        Estimator::Window => window_populations(state, atom, params),
    }
}

/// Rings that can carry population: n = 0 only with a ground component.
fn ring_range(state: &TwoModeState, atom: &AtomState) -> std::ops::RangeInclusive<usize> {
    let lo = if atom.c_g != ZERO { 0 } else { 1 };
    lo..=state.max_total() + 1
}

fn exact_populations(state: &TwoModeState, atom: &AtomState) -> Result<PopulationSpectrum> {
    let top = state.max_total();
    let rings = ring_range(state, atom);
    let mut acc = vec![NeumaierSum::new(); top + 2];
    let wg = atom.c_g.norm_sqr();
    let we = atom.c_e.norm_sqr();
    for i in 0..EXACT_THETA_NODES {
        let theta = TAU * i as f64 / EXACT_THETA_NODES as f64;
        // blocks[N] = D^{(N)}(θ)
        let blocks: Vec<_> = (0..=top).map(|n| d_matrix(n, theta)).collect();
        let amp = |total: usize, col: usize| -> Complex64 {
            let d = &blocks[total];
            state
                .block(total)
                .iter()
                .enumerate()
                .map(|(m, c)| c * d.get(m, col))
                .sum()
        };
        if wg > 0.0 {
            for total in 0..=top {
                for n in 0..=total {
                    acc[n].add(wg * amp(total, n).norm_sqr());
                }
            }
        }
        if we > 0.0 {
            // B_{N,n} = Σ_m C_{m-1,N-m} D^{(N-1)}_{m-1,n-1}
            for photons in 0..=top {
                for col in 0..=photons {
                    acc[col + 1].add(we * amp(photons, col).norm_sqr());
                }
            }
        }
    }
    let entries = rings
        .map(|n| RingPopulation {
            n,
            p: acc[n].value() / EXACT_THETA_NODES as f64,
        })
        .collect();
    Ok(PopulationSpectrum {
        estimator: Estimator::Exact,
        entries,
        warnings: Vec::new(),
    })
}

fn overlap_warnings(state: &TwoModeState, atom: &AtomState, params: &CouplingParams) -> Vec<String> {
    let width = 4.0 / params.k_delta_r;
    let rings: Vec<usize> = ring_range(state, atom).collect();
    rings
        .windows(2)
        .filter_map(|w| {
            let gap = params.ring(w[1]) - params.ring(w[0]);
            (gap < width).then(|| {
                format!(
                    "rings {} and {} overlap: spacing {gap:.4} below 4/kΔr = {width:.4}",
                    w[0], w[1]
                )
            })
        })
        .collect()
}

/// P_n ≈ sqrt(n) Λ ∫ W(sqrt(n) Λ, φ) dφ, taken literally.
fn ring_peak_populations(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
) -> Result<PopulationSpectrum> {
    let model = DensityModel::new(state, atom, params)?;
    let dphi = TAU / ESTIMATOR_PHI_NODES as f64;
    let phis: Vec<f64> = (0..ESTIMATOR_PHI_NODES).map(|j| j as f64 * dphi).collect();
    let entries = ring_range(state, atom)
        .map(|n| {
            let radius = params.ring(n);
            let integral: f64 = model.row(radius).along(&phis).iter().sum::<f64>() * dphi;
            RingPopulation {
                n,
                p: radius * integral,
            }
        })
        .collect();
    Ok(PopulationSpectrum {
        estimator: Estimator::RingPeak,
        entries,
        warnings: overlap_warnings(state, atom, params),
    })
}

/// Radial band of ring n: edges at midpoints between neighbouring rings; the
/// outermost band runs to the end of the profile tail.
pub fn window_band(n: usize, n_max: usize, params: &CouplingParams) -> (f64, f64) {
    let lo = if n == 0 {
        0.0
    } else {
        0.5 * (params.ring(n - 1) + params.ring(n))
    };
    let hi = if n >= n_max {
        params.ring(n_max) + 60.0 / params.k_delta_r
    } else {
        0.5 * (params.ring(n) + params.ring(n + 1))
    };
    (lo, hi)
}

/// ∫∫ W ℘ d℘ dφ over [lo, hi] with Gauss-Legendre panels no wider than a
/// quarter of the line width 1/kΔr, extra edges at `breaks`.
fn band_mass(model: &DensityModel, lo: f64, hi: f64, breaks: &[f64], phis: &[f64]) -> f64 {
    let (gx, gw) = gauss_legendre(8);
    let width = 0.25 / model.params.k_delta_r;
    let mut edges = vec![lo, hi];
    edges.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    edges.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let dphi = TAU / phis.len() as f64;
    let mut nodes = Vec::new();
    for w in edges.windows(2) {
        let count = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / count as f64;
        for p in 0..count {
            let a = w[0] + p as f64 * h;
            for (x, wt) in gx.iter().zip(&gw) {
                nodes.push((a + 0.5 * h * (x + 1.0), 0.5 * h * wt));
            }
        }
    }
    let parts: Vec<f64> = nodes
        .par_iter()
        .map(|&(r, wt)| wt * r * model.row(r).along(phis).iter().sum::<f64>() * dphi)
        .collect();
    let mut acc = NeumaierSum::new();
    parts.into_iter().for_each(|v| acc.add(v));
    acc.value()
}

fn window_populations(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
) -> Result<PopulationSpectrum> {
    let model = DensityModel::new(state, atom, params)?;
    let n_max = state.max_total() + 1;
    let phis: Vec<f64> = (0..ESTIMATOR_PHI_NODES)
        .map(|j| TAU * j as f64 / ESTIMATOR_PHI_NODES as f64)
        .collect();
    let entries = ring_range(state, atom)
        .map(|n| {
            let (lo, hi) = window_band(n, n_max, params);
            RingPopulation {
                n,
                p: band_mass(&model, lo, hi, &[params.ring(n)], &phis),
            }
        })
        .collect();
    Ok(PopulationSpectrum {
        estimator: Estimator::Window,
        entries,
        warnings: overlap_warnings(state, atom, params),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub ring_peak: f64,
    pub window: f64,
    pub exact: f64,
    pub max_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub ring_peak_vs_exact: f64,
    pub window_vs_exact: f64,
}

/// All three estimators side by side with their pairwise discrepancies.
pub fn spectrum_consistency(
    state: &TwoModeState,
    atom: &AtomState,
    params: &CouplingParams,
) -> Result<ConsistencyReport> {
    if params.lambda < 50.0 {
        return Err(OsgError::invalid("spectrum consistency requires Λ >= 50"));
    }
    let ring_peak = populations(state, atom, params, Estimator::RingPeak)?;
    let window = populations(state, atom, params, Estimator::Window)?;
    let exact = populations(state, atom, params, Estimator::Exact)?;
    let mut rows = Vec::new();
    let (mut e8, mut ew) = (0.0f64, 0.0f64);
    for e in &exact.entries {
        let a = ring_peak.get(e.n).unwrap_or(0.0);
        let b = window.get(e.n).unwrap_or(0.0);
        let c = e.p;
        e8 = e8.max((a - c).abs());
        ew = ew.max((b - c).abs());
        rows.push(ConsistencyRow {
            n: e.n,
            ring_peak: a,
            window: b,
            exact: c,
            max_discrepancy: (a - c).abs().max((b - c).abs()).max((a - b).abs()),
        });
    }
    Ok(ConsistencyReport {
        rows,
        ring_peak_vs_exact: e8,
        window_vs_exact: ew,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{family_state, noon_state, one_photon_state, two_photon_state};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

    fn standard() -> CouplingParams {
        CouplingParams::new(20.0, 0.1).unwrap()
    }

    fn exact(state: &TwoModeState) -> PopulationSpectrum {
        populations(state, &AtomState::excited(), &standard(), Estimator::Exact).unwrap()
    }

    #[test]
    fn generic_assembly_matches_model() {
        let p = standard();
        let atom = AtomState::normalized(Complex64::new(0.6, 0.1), Complex64::new(0.3, -0.7)).unwrap();
        let state = two_photon_state(0.4).unwrap();
        let model = DensityModel::new(&state, &atom, &p).unwrap();
        for &(pm, ph) in &[(3.0, 0.2), (20.0, 1.0), (28.3, 4.0), (35.0, 2.2)] {
            let pt = MomentumPoint::new(pm, ph).unwrap();
            let generic = assemble_w1(&state, &atom, &mut |idx| fourier_analytic(idx, &pt, &p)).unwrap();
            let fast = model.density(&pt);
            assert!((generic - fast).abs() <= 1e-12 * generic.max(1e-12), "{generic} {fast}");
        }
    }

    #[test]
    fn excited_reduction_matches_direct_sum() {
        let p = standard();
        let state = noon_state(2).unwrap();
        for &(pm, ph) in &[(1.0, 0.0), (20.0, 0.7), (28.0, 3.0), (34.6, 5.5)] {
            let pt = MomentumPoint::new(pm, ph).unwrap();
            let a = w_point(&state, &AtomState::excited(), &pt, &p).unwrap();
            let b = w_excited(&state, &pt, &p).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn required_kernels_skip_zero_amplitudes() {
        let state = TwoModeState::fock(1, 0).unwrap();
        let ks = required_kernels(&state, &AtomState::excited());
        // only the N = 2 block holds amplitude: n = 1, 2 on both branches
        assert_eq!(ks.len(), 4);
        assert!(ks.iter().all(|k| k.channel == Channel::Excited));
    }

    #[test]
    fn far_tail_is_small() {
        // The exponential profile gives power-law line tails ~ |℘ - sqrt(n)Λ|^{-3},
        // so at ℘ = 3Λ the density is a few 1e-3 of the ring peak.
        let p = standard();
        let state = TwoModeState::fock(1, 0).unwrap();
        let model = DensityModel::new(&state, &AtomState::excited(), &p).unwrap();
        let max_at = |r: f64| {
            let row = model.row(r);
            (0..720).map(|j| row.at(TAU * j as f64 / 720.0)).fold(0.0, f64::max)
        };
        let peak = max_at(20.2);
        let far = max_at(60.0);
        assert!(far <= 5e-3 * peak, "far {far} peak {peak}");
        let farther = max_at(120.0);
        let slope = (far / farther).ln() / ((120.0 - 28.3f64) / (60.0 - 28.3)).ln();
        assert!(slope > 2.5 && slope < 4.5, "tail exponent {slope}");
    }

    #[test]
    fn ground_vacuum_is_undeflected() {
        let p = standard();
        let model = DensityModel::new(&TwoModeState::vacuum(), &AtomState::ground(), &p).unwrap();
        let centre = model.density(&MomentumPoint::new(0.0, 0.0).unwrap());
        let ring = model.density(&MomentumPoint::new(20.0, 0.0).unwrap());
        assert!(centre > 0.0);
        assert!(ring < 1e-3 * centre);
        let spec = populations(&TwoModeState::vacuum(), &AtomState::ground(), &p, Estimator::Exact).unwrap();
        assert!((spec.get(0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_photon_peaks_off_axis() {
        let p = standard();
        let state = one_photon_state(FRAC_PI_4).unwrap();
        let row = DensityModel::new(&state, &AtomState::excited(), &p).unwrap();
        let row = row.row(2f64.sqrt() * 20.0);
        let (best, _) = (0..720)
            .map(|j| TAU * j as f64 / 720.0)
            .map(|phi| (phi, row.at(phi)))
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let folded = best.rem_euclid(FRAC_PI_2);
        assert!((folded - FRAC_PI_4).abs() < 0.01, "argmax {best}");
    }

    #[test]
    fn exact_populations_known_values() {
        for alpha in [0.0, 0.3, FRAC_PI_4, 1.2] {
            let s = exact(&one_photon_state(alpha).unwrap());
            assert!((s.get(1).unwrap() - 0.5).abs() < 1e-12);
            assert!((s.get(2).unwrap() - 0.5).abs() < 1e-12);
        }
        let s = exact(&TwoModeState::fock(2, 0).unwrap());
        for (n, v) in [(1, 0.375), (2, 0.25), (3, 0.375)] {
            assert!((s.get(n).unwrap() - v).abs() < 1e-12);
        }
        let s = exact(&noon_state(2).unwrap());
        for (n, v) in [(1, 0.5), (2, 0.0), (3, 0.5)] {
            assert!((s.get(n).unwrap() - v).abs() < 1e-12);
        }
        let s = exact(&TwoModeState::fock(1, 1).unwrap());
        for (n, v) in [(1, 0.25), (2, 0.5), (3, 0.25)] {
            assert!((s.get(n).unwrap() - v).abs() < 1e-12);
        }
        let s = exact(&TwoModeState::vacuum());
        assert_eq!(s.entries.len(), 1);
        assert!((s.get(1).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_photon_dip_closed_form() {
        // P₂(α) = (1 - sin 2α)/4
        for i in 0..=16 {
            let a = FRAC_PI_4 * i as f64 / 16.0;
            let s = exact(&two_photon_state(a).unwrap());
            assert!((s.get(2).unwrap() - (1.0 - (2.0 * a).sin()) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn family_missing_ring_is_empty() {
        let f = family_state(1, 1).unwrap();
        let s = exact(&f.state);
        assert!(s.get(f.missing_ring).unwrap().abs() < 1e-12);
    }

    #[test]
    fn grid_normalization_one_photon() {
        let p = standard();
        let g = w_grid(
            &TwoModeState::fock(1, 0).unwrap(),
            &AtomState::excited(),
            &p,
            &GridSpec::default(),
        )
        .unwrap();
        let total = total_probability(&g);
        assert!((total - 1.0).abs() < 2e-2, "total {total}");
        assert!(g.densities.iter().flatten().all(|w| *w >= -1e-14));
    }

    #[test]
    fn window_estimator_tracks_exact() {
        let p = CouplingParams::new(100.0, 0.1).unwrap();
        let state = one_photon_state(FRAC_PI_8).unwrap();
        let w = populations(&state, &AtomState::excited(), &p, Estimator::Window).unwrap();
        assert!((w.get(1).unwrap() - 0.5).abs() < 0.03);
        assert!((w.get(2).unwrap() - 0.5).abs() < 0.03);
    }

    #[test]
    fn csv_layout() {
        let p = standard();
        let spec = GridSpec {
            radial_count: 3,
            angular_count: 4,
            p_max: Some(30.0),
        };
        let g = w_grid(&TwoModeState::vacuum(), &AtomState::excited(), &p, &spec).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "p_mag,p_ang,density");
        assert_eq!(lines.len(), 1 + 12);
        assert!(lines[5].starts_with("1.500000000000e1,0.000000000000e0,"));
        let raster = g.cartesian_raster(5);
        assert_eq!(raster.len(), 5);
        assert_eq!(raster[0][0], 0.0);
    }
}
