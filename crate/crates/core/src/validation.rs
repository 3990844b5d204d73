//! Oracle-equivalence battery: every fast path checked against an
//! independent route on seeded random inputs.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bogoliubov::d_matrix;
use crate::distribution::{
    populations, w_excited, DensityModel, Estimator,
};
use crate::error::Result;
use crate::kernel::analytic::{fourier_analytic, fourier_from_table, HarmonicTable};
use crate::kernel::profile::SlitProfile;
use crate::kernel::quadrature::{fourier_numeric_batch, w_numeric, QuadratureSpec};
use crate::kernel::{KernelIndices, MomentumPoint};
use crate::state::{family_state, noon_state, one_photon_state, two_photon_state, AtomState, CouplingParams, TwoModeState};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: worst <= tolerance,
            worst,
            tolerance,
        }
    }
}

/// Random momentum inside the region where rings up to `n_max` live.
pub fn random_point(rng: &mut impl Rng, params: &CouplingParams, n_max: usize) -> MomentumPoint {
    let reach = (n_max as f64).sqrt() * params.lambda + 10.0 / params.k_delta_r;
    MomentumPoint {
        p_mag: rng.gen_range(0.0..reach),
        p_ang: rng.gen_range(0.0..TAU),
    }
}

/// Largest relative deviation of closed-form kernels from quadrature at the
/// given points, measured as |a - q| / max(|q|, 1e-12).
pub fn kernel_oracle_error(
    indices: &[KernelIndices],
    points: &[MomentumPoint],
    params: &CouplingParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let profile = SlitProfile::for_params(params);
    let mut worst = 0.0f64;
    for pt in points {
        let numeric = fourier_numeric_batch(indices, pt, params, &profile, quad)?;
        for (idx, q) in indices.iter().zip(numeric) {
            let a = fourier_analytic(idx, pt, params)?;
            worst = worst.max((a - q.value).norm() / q.value.norm().max(1e-12));
        }
    }
    Ok(worst)
}

fn random_state(rng: &mut impl Rng, max_total: usize) -> TwoModeState {
    let mut entries = Vec::new();
    for total in 0..=max_total {
        for m in 0..=total {
            if rng.gen_bool(0.6) {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                entries.push(((m, total - m), c));
            }
        }
    }
    if entries.is_empty() {
        entries.push(((1, 0), Complex64::new(1.0, 0.0)));
    }
    TwoModeState::from_amplitudes(entries)
        .and_then(|s| s.normalize())
        .expect("random state is valid")
}

fn random_atom(rng: &mut impl Rng) -> AtomState {
    AtomState::normalized(
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)),
    )
    .expect("nonzero atom")
}

/// Runs the battery. Sizes are kept small enough for an interactive run.
pub fn run_battery(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for total in 0..=12 {
        for i in 0..16 {
            let theta = TAU * i as f64 / 16.0 + 0.01;
            worst = worst.max(d_matrix(total, theta).orthogonality_error());
        }
    }
    out.push(CheckResult::new("rotation blocks orthogonal (N <= 12)", worst, 1e-10));

    let params = CouplingParams::new(20.0, 0.1)?;
    let mut worst = 0.0f64;
    for idx in KernelIndices::enumerate(4) {
        let table = HarmonicTable::for_kernel(&idx);
        for _ in 0..3 {
            let pt = random_point(&mut rng, &params, 5);
            let a = fourier_analytic(&idx, &pt, &params)?;
            let b = fourier_from_table(&table, &idx, &pt, &params);
            worst = worst.max((a - b).norm() / a.norm().max(1e-12));
        }
    }
    out.push(CheckResult::new("harmonic table vs triple sum (N <= 4)", worst, 1e-10));

    let quad = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for (lambda, kdr) in [(5.0, 0.1), (20.0, 0.3)] {
        let p = CouplingParams::new(lambda, kdr)?;
        let pts: Vec<_> = (0..3).map(|_| random_point(&mut rng, &p, 5)).collect();
        worst = worst.max(kernel_oracle_error(&KernelIndices::enumerate(3), &pts, &p, &quad)?);
    }
    out.push(CheckResult::new("closed form vs quadrature (N <= 3)", worst, 1e-6));

    let profile = SlitProfile::for_params(&params);
    let mut worst = 0.0f64;
    for _ in 0..2 {
        let state = random_state(&mut rng, 2);
        let atom = random_atom(&mut rng);
        let model = DensityModel::new(&state, &atom, &params)?;
        let pts: Vec<_> = (0..3).map(|_| random_point(&mut rng, &params, 3)).collect();
        let peak = (0..400)
            .map(|i| {
                let r = 80.0 * i as f64 / 400.0;
                let row = model.row(r);
                (0..36).map(|j| row.at(TAU * j as f64 / 36.0)).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        for pt in pts {
            let a = model.density(&pt);
            let q = w_numeric(&state, &atom, &pt, &params, &profile, &quad)?;
            worst = worst.max((a - q).abs() / peak);
        }
    }
    out.push(CheckResult::new("density: analytic vs quadrature", worst, 1e-6));

    let mut worst = 0.0f64;
    for _ in 0..4 {
        let state = random_state(&mut rng, 3);
        let model = DensityModel::new(&state, &AtomState::excited(), &params)?;
        let pt = random_point(&mut rng, &params, 4);
        let a = model.density(&pt);
        let b = w_excited(&state, &pt, &params)?;
        worst = worst.max((a - b).abs() / a.abs().max(1e-300));
    }
    out.push(CheckResult::new("excited reduction vs direct sum", worst, 1e-12));

    let mut worst = 0.0f64;
    let known: [(TwoModeState, Vec<(usize, f64)>); 3] = [
        (one_photon_state(0.7)?, vec![(1, 0.5), (2, 0.5)]),
        (TwoModeState::fock(2, 0)?, vec![(1, 0.375), (2, 0.25), (3, 0.375)]),
        (noon_state(2)?, vec![(1, 0.5), (2, 0.0), (3, 0.5)]),
    ];
    for (state, expect) in &known {
        let s = populations(state, &AtomState::excited(), &params, Estimator::Exact)?;
        for (n, v) in expect {
            worst = worst.max((s.get(*n).unwrap_or(f64::NAN) - v).abs());
        }
    }
    for alpha in [0.0, 0.3, 0.7] {
        let s = populations(&two_photon_state(alpha)?, &AtomState::excited(), &params, Estimator::Exact)?;
        let p2 = (1.0 - (2.0 * alpha).sin()) / 4.0;
        worst = worst.max((s.get(2).unwrap_or(f64::NAN) - p2).abs());
    }
    out.push(CheckResult::new("exact populations, known values", worst, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..6 {
        let state = random_state(&mut rng, 4);
        let atom = random_atom(&mut rng);
        let s = populations(&state, &atom, &params, Estimator::Exact)?;
        worst = worst.max((s.total() - 1.0).abs());
    }
    for (j, q) in [(0, 1), (1, 1), (2, 1), (0, 2)] {
        let f = family_state(j, q)?;
        let s = populations(&f.state, &AtomState::excited(), &params, Estimator::Exact)?;
        worst = worst.max(s.get(f.missing_ring).unwrap_or(f64::NAN).abs());
    }
    out.push(CheckResult::new("exact closure and family cancellation", worst, 1e-10));

    Ok(out)
}
