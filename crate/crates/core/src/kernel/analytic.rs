//! Closed-form Fourier amplitudes for the exponential slit profile.
//!
//! F_{m,n}^{±ε(N)} = Σ_ℓ Σ_s Σ_t (i e^{iφ})^{v+δ} R_{m,n,ℓ,s,t} S_{n,s,t}^{±}(℘)
//! with u = m + n - 2ℓ and v = 2(s + t) - N.
//!
//! Branch rule: the root (℘² + γ²)^{1/2} appearing in S is the one that
//! equals γ at ℘ = 0 and varies continuously with ℘, i.e. minus the principal
//! square root. The principal root gives the wrong sign in the numerator and
//! fails the quadrature cross-check at every point.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::bogoliubov::{dbar, dbar_integer, dbar_scale, CoeffKey};
use crate::error::{OsgError, Result};
use crate::kernel::{Branch, Channel, KernelIndices, MomentumPoint};
use crate::numeric::{binomial_f64, binomial_u128, ComplexSum};
use crate::state::CouplingParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// γ± = -(2kΔr)^{-1} ± i sqrt(n) Λ.
pub fn gamma(n: usize, params: &CouplingParams, branch: Branch) -> Result<Complex64> {
    if !(params.k_delta_r > 0.0) || !params.k_delta_r.is_finite() {
        return Err(OsgError::invalid("k_delta_r must be positive"));
    }
    Ok(Complex64::new(
        -1.0 / (2.0 * params.k_delta_r),
        branch.sign() * (n as f64).sqrt() * params.lambda,
    ))
}

/// Sign selector: 1 for odd negative arguments, 0 otherwise.
pub fn upsilon(v_tilde: i64) -> u8 {
    if v_tilde < 0 && v_tilde % 2 != 0 {
        1
    } else {
        0
    }
}

struct SumRanges {
    ell: std::ops::RangeInclusive<usize>,
    delta: usize,
}

fn ranges(idx: &KernelIndices) -> SumRanges {
    let d = idx.delta();
    let lo = (idx.m + idx.n).saturating_sub(idx.total + d);
    let hi = (idx.m - d).min(idx.n - d);
    SumRanges { ell: lo..=hi, delta: d }
}

/// Upper bounds (inclusive) of s and t for a given ℓ.
fn st_bounds(idx: &KernelIndices, ell: usize, delta: usize) -> (usize, usize, usize) {
    let u = idx.m + idx.n - 2 * ell;
    (u, idx.total + delta - u, u - 2 * delta)
}

fn i_pow(p: i64) -> Complex64 {
    match p.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => I,
        2 => Complex64::new(-1.0, 0.0),
        _ => -I,
    }
}

/// R_{m,n,ℓ,s,t}^{ε(N)} = (-1)^{u-t-2δ} / (2^{N-δ} i^{u-2δ}) C(N-u+δ, s) C(u-2δ, t) D̄_{m-δ,n-δ,ℓ}^{(N-δ)}.
pub fn r_factor(idx: &KernelIndices, ell: usize, s: usize, t: usize) -> Result<Complex64> {
    let r = ranges(idx);
    if !r.ell.contains(&ell) {
        return Err(OsgError::invalid(format!(
            "ℓ = {ell} outside {:?} for {idx:?}",
            r.ell
        )));
    }
    let (u, s_max, t_max) = st_bounds(idx, ell, r.delta);
    if s > s_max || t > t_max {
        return Err(OsgError::invalid(format!(
            "(s, t) = ({s}, {t}) outside [0, {s_max}] × [0, {t_max}]"
        )));
    }
    let d = r.delta;
    let sign = if (u - t - 2 * d) % 2 == 1 { -1.0 } else { 1.0 };
    let denom = 2f64.powi((idx.total - d) as i32);
    let bin = binomial_f64(s_max as u64, s as u64) * binomial_f64(t_max as u64, t as u64);
    let db = dbar(idx.total - d, idx.m - d, idx.n - d, ell)?;
    Ok(i_pow(-((u - 2 * d) as i64)) * (sign * bin * db / denom))
}

/// The root of ℘² + γ² that equals γ at ℘ = 0.
fn continuous_root(p_mag: f64, g: Complex64) -> Complex64 {
    -(g * g + p_mag * p_mag).sqrt()
}

/// S without the (-1)^Υ sign, as a function of the harmonic order |k|.
pub(crate) fn s_core(k_abs: u32, p_mag: f64, g: Complex64, k_delta_r: f64) -> Complex64 {
    let root = continuous_root(p_mag, g);
    let pref = 1.0 / ((2.0 * PI).sqrt() * k_delta_r);
    let num = root * k_abs as f64 + g;
    let den = root * root * root;
    let ratio = if k_abs == 0 {
        // 0^0 = 1 at ℘ = 0
        Complex64::new(1.0, 0.0)
    } else {
        (p_mag / (g + root)).powu(k_abs)
    };
    num / den * ratio * pref
}

/// S_{n,s,t}^{±ε(N)}(℘).
pub fn s_factor(
    idx: &KernelIndices,
    s: usize,
    t: usize,
    p_mag: f64,
    params: &CouplingParams,
) -> Result<Complex64> {
    let g = gamma(idx.n, params, idx.branch)?;
    let k = 2 * (s + t) as i64 - idx.total as i64 + idx.delta() as i64;
    let sign = if upsilon(k) == 1 { -1.0 } else { 1.0 };
    Ok(s_core(k.unsigned_abs() as u32, p_mag, g, params.k_delta_r) * sign)
}

/// Direct evaluation of the triple sum, term by term, with compensated
/// accumulation.
pub fn fourier_analytic(
    idx: &KernelIndices,
    point: &MomentumPoint,
    params: &CouplingParams,
) -> Result<Complex64> {
    params.validate()?;
    let r = ranges(idx);
    let d = r.delta;
    let phase = I * Complex64::from_polar(1.0, point.p_ang);
    let mut acc = ComplexSum::new();
    for ell in r.ell.clone() {
        let (_, s_max, t_max) = st_bounds(idx, ell, d);
        for s in 0..=s_max {
            for t in 0..=t_max {
                let k = 2 * (s + t) as i64 - idx.total as i64 + d as i64;
                let pre = if k >= 0 {
                    phase.powu(k as u32)
                } else {
                    phase.inv().powu((-k) as u32)
                };
                let term = pre * r_factor(idx, ell, s, t)? * s_factor(idx, s, t, point.p_mag, params)?;
                acc.add(term);
            }
        }
    }
    Ok(acc.value())
}

/// Harmonic content of one rotation block entry: the R coefficients summed
/// over all (ℓ, s, t) that share the same order k = v + δ.
///
/// Entry `k + order` holds h_k for k in [-order, order]; only orders with the
/// parity of `order` are nonzero. Accumulation is done in exact Gaussian
/// integers and scaled once at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTable {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl HarmonicTable {
    pub fn for_block_entry(key: CoeffKey) -> Self {
        let order = key.total;
        let mut re = vec![0i128; 2 * order + 1];
        let mut im = vec![0i128; 2 * order + 1];
        for ell in key.q_range() {
            let u = key.row + key.col - 2 * ell;
            let d_int = dbar_integer(key, ell).expect("ℓ in range");
            let s_max = order - u;
            for s in 0..=s_max {
                let bs = binomial_u128(s_max as u64, s as u64) as i128;
                for t in 0..=u {
                    let bt = binomial_u128(u as u64, t as u64) as i128;
                    let mut val = d_int * bs * bt;
                    if (u - t) % 2 == 1 {
                        val = -val;
                    }
                    let slot = 2 * (s + t);
                    // multiply by (-i)^u
                    match u % 4 {
                        0 => re[slot] += val,
                        1 => im[slot] -= val,
                        2 => re[slot] -= val,
                        _ => im[slot] += val,
                    }
                }
            }
        }
        let scale = dbar_scale(key) / 2f64.powi(order as i32);
        let coeffs = re
            .iter()
            .zip(&im)
            .map(|(&a, &b)| Complex64::new(a as f64 * scale, b as f64 * scale))
            .collect();
        Self { order, coeffs }
    }

    pub fn for_kernel(idx: &KernelIndices) -> Self {
        Self::for_block_entry(idx.coeff_key())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// h_k for k in [-order, order]; zero outside.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let pos = k + self.order as i64;
        if pos < 0 || pos as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[pos as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let o = self.order as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (i as i64 - o, *c))
    }
}

/// Radial factors S for every harmonic order up to `max_order`, for one
/// dressed index and branch, at one momentum magnitude. Entry j holds the
/// factor for |k| = j with the (-1)^Υ sign folded into the phase i^{|k|}.
pub fn radial_factors(
    n: usize,
    branch: Branch,
    p_mag: f64,
    params: &CouplingParams,
    max_order: usize,
) -> Vec<Complex64> {
    let g = Complex64::new(
        -1.0 / (2.0 * params.k_delta_r),
        branch.sign() * (n as f64).sqrt() * params.lambda,
    );
    (0..=max_order)
        .map(|j| i_pow(j as i64) * s_core(j as u32, p_mag, g, params.k_delta_r))
        .collect()
}

/// F evaluated through the collapsed harmonic table:
/// F = Σ_k h_k i^{|k|} e^{ikφ} Ŝ_{|k|}(℘).
pub fn fourier_from_table(
    table: &HarmonicTable,
    idx: &KernelIndices,
    point: &MomentumPoint,
    params: &CouplingParams,
) -> Complex64 {
    let radial = radial_factors(idx.n, idx.branch, point.p_mag, params, table.order());
    let mut acc = ComplexSum::new();
    for (k, h) in table.iter() {
        if h == Complex64::new(0.0, 0.0) {
            continue;
        }
        let ph = Complex64::from_polar(1.0, (k as f64) * point.p_ang);
        acc.add(h * ph * radial[k.unsigned_abs() as usize]);
    }
    acc.value()
}

/// Ground-channel undeflected kernels use n = 0; both branches coincide.
pub fn is_undeflected(idx: &KernelIndices) -> bool {
    idx.channel == Channel::Ground && idx.n == 0
}

/// Periodicity helper used in tests and validation.
pub fn shifted(point: &MomentumPoint, turns: f64) -> MomentumPoint {
    MomentumPoint {
        p_mag: point.p_mag,
        p_ang: point.p_ang + TAU * turns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::d_coeff;
    use std::f64::consts::SQRT_2;

    fn standard() -> CouplingParams {
        CouplingParams::new(20.0, 0.1).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let p = standard();
        assert_eq!(gamma(1, &p, Branch::Plus).unwrap(), Complex64::new(-5.0, 20.0));
        let g = gamma(2, &p, Branch::Minus).unwrap();
        assert!((g - Complex64::new(-5.0, -20.0 * SQRT_2)).norm() < 1e-13);
        assert_eq!(gamma(0, &p, Branch::Plus).unwrap(), Complex64::new(-5.0, 0.0));
        let bad = CouplingParams {
            lambda: 20.0,
            k_delta_r: 0.0,
        };
        assert!(gamma(1, &bad, Branch::Plus).is_err());
    }

    #[test]
    fn upsilon_table() {
        assert_eq!(upsilon(3), 0);
        assert_eq!(upsilon(0), 0);
        assert_eq!(upsilon(-2), 0);
        assert_eq!(upsilon(-3), 1);
        assert_eq!(upsilon(-1), 1);
    }

    #[test]
    fn r_factor_examples() {
        let idx = KernelIndices::new(1, 1, 1, Channel::Excited, Branch::Plus).unwrap();
        assert_eq!(r_factor(&idx, 0, 0, 0).unwrap(), Complex64::new(1.0, 0.0));
        assert!(r_factor(&idx, 1, 0, 0).is_err());
        assert!(r_factor(&idx, 0, 1, 0).is_err());

        // N=2, m=n=1, excited: u=2, N-u+δ=1, u-2δ=0, D̄^{(1)}_{0,0,0} = 1,
        // R = (-1)^{0}/(2 i^0) C(1,0) = 1/2
        let idx = KernelIndices::new(2, 1, 1, Channel::Excited, Branch::Plus).unwrap();
        assert!((r_factor(&idx, 0, 0, 0).unwrap() - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((r_factor(&idx, 0, 1, 0).unwrap() - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn r_factor_modulus() {
        for idx in KernelIndices::enumerate(4) {
            let r = ranges(&idx);
            for ell in r.ell.clone() {
                let (_, s_max, t_max) = st_bounds(&idx, ell, r.delta);
                for s in 0..=s_max {
                    for t in 0..=t_max {
                        let v = r_factor(&idx, ell, s, t).unwrap();
                        let expected = binomial_f64(s_max as u64, s as u64)
                            * binomial_f64(t_max as u64, t as u64)
                            * dbar(idx.total - r.delta, idx.m - r.delta, idx.n - r.delta, ell)
                                .unwrap()
                                .abs()
                            / 2f64.powi((idx.total - r.delta) as i32);
                        assert!((v.norm() - expected).abs() < 1e-14 * expected.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn s_factor_at_origin() {
        let p = standard();
        let idx = KernelIndices::new(1, 1, 1, Channel::Excited, Branch::Plus).unwrap();
        let g = gamma(1, &p, Branch::Plus).unwrap();
        let s = s_factor(&idx, 0, 0, 0.0, &p).unwrap();
        // with the continuous root, γ/(γ²)^{3/2} = 1/γ²
        let expected = 1.0 / (g * g) / ((2.0 * PI).sqrt() * 0.1);
        assert!((s - expected).norm() < 1e-15 * expected.norm());
    }

    #[test]
    fn s_factor_decays() {
        let p = standard();
        let idx = KernelIndices::new(2, 2, 1, Channel::Excited, Branch::Minus).unwrap();
        let mut last = f64::INFINITY;
        for &pm in &[1e3, 1e4, 1e5, 1e6] {
            let v = s_factor(&idx, 1, 0, pm, &p).unwrap().norm();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn harmonic_table_matches_dft_of_coefficients() {
        // independent route: sample D(θ) and take its discrete Fourier series
        let samples = 64;
        for total in 0..=6 {
            for m in 0..=total {
                for n in 0..=total {
                    let key = CoeffKey::new(total, m, n).unwrap();
                    let table = HarmonicTable::for_block_entry(key);
                    for k in -(total as i64)..=(total as i64) {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j in 0..samples {
                            let th = TAU * j as f64 / samples as f64;
                            acc += d_coeff(total, m, n, th).unwrap()
                                * Complex64::from_polar(1.0, -(k as f64) * th);
                        }
                        acc /= samples as f64;
                        assert!(
                            (acc - table.coeff(k)).norm() < 1e-13,
                            "N={total} m={m} n={n} k={k}: {acc} vs {}",
                            table.coeff(k)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn table_route_matches_triple_sum() {
        let p = standard();
        for idx in KernelIndices::enumerate(4) {
            let table = HarmonicTable::for_kernel(&idx);
            for &(pm, ph) in &[(0.0, 0.3), (7.5, 1.0), (20.0, 2.2), (31.0, 5.9), (60.0, 4.0)] {
                let pt = MomentumPoint::new(pm, ph).unwrap();
                let a = fourier_analytic(&idx, &pt, &p).unwrap();
                let b = fourier_from_table(&table, &idx, &pt, &p);
                assert!(
                    (a - b).norm() <= 1e-12 * a.norm().max(1e-12),
                    "{idx:?} at {pt:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn periodic_in_angle() {
        let p = standard();
        for idx in KernelIndices::enumerate(3) {
            let pt = MomentumPoint {
                p_mag: 19.0,
                p_ang: 0.7,
            };
            let a = fourier_analytic(&idx, &pt, &p).unwrap();
            let b = fourier_analytic(&idx, &shifted(&pt, 1.0), &p).unwrap();
            assert!((a - b).norm() <= 1e-13 * a.norm().max(1e-12));
        }
    }

    #[test]
    fn ring_peak_concentration() {
        let p = standard();
        let idx = KernelIndices::new(1, 1, 1, Channel::Excited, Branch::Plus).unwrap();
        let at = |pm: f64| {
            fourier_analytic(&idx, &MomentumPoint::new(pm, 0.4).unwrap(), &p)
                .unwrap()
                .norm()
        };
        let centre = at(p.lambda);
        // Λ - 5/kΔr is negative here, so only the outer side is in the domain
        assert!(p.lambda - 5.0 / p.k_delta_r < 0.0);
        assert!(centre >= 10.0 * at(p.lambda + 5.0 / p.k_delta_r));
    }
}
