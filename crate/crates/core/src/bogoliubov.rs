//! Rotation coefficients of the fixed-photon-number Fock blocks under the
//! mode recombination c = cos θ a + sin θ b, d = -sin θ a + cos θ b.
//!
//! |m, N-m>_ab = Σ_n D_{m,n}^{(N)}(θ) |n, N-n>_cd, with
//! D_{m,n}^{(N)}(θ) = Σ_q D̄_{m,n,q}^{(N)} cos^{N-m-n+2q} θ sin^{m+n-2q} θ.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{OsgError, Result};
use crate::numeric::{binomial_f64, binomial_u128, NeumaierSum};

/// Index triple of one coefficient: block total N, row m, column n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoeffKey {
    pub total: usize,
    pub row: usize,
    pub col: usize,
}

impl CoeffKey {
    pub fn new(total: usize, row: usize, col: usize) -> Result<Self> {
        if row > total || col > total {
            return Err(OsgError::invalid(format!(
                "coefficient indices ({row}, {col}) outside block N = {total}"
            )));
        }
        Ok(Self { total, row, col })
    }

    /// Admissible range of the summation index q.
    pub fn q_range(&self) -> std::ops::RangeInclusive<usize> {
        let lo = (self.row + self.col).saturating_sub(self.total);
        let hi = self.row.min(self.col);
        lo..=hi
    }
}

/// Signed integer part (-1)^{m-q} C(m,q) C(N-m, n-q) of D̄. The full
/// amplitude is this times [`dbar_scale`].
pub fn dbar_integer(key: CoeffKey, q: usize) -> Result<i128> {
    if !key.q_range().contains(&q) {
        return Err(OsgError::invalid(format!(
            "q = {q} outside admissible range {:?} for {key:?}",
            key.q_range()
        )));
    }
    let (n_tot, m, n) = (key.total as u64, key.row as u64, key.col as u64);
    let q = q as u64;
    let mag = binomial_u128(m, q) * binomial_u128(n_tot - m, n - q);
    let mag = i128::try_from(mag).map_err(|_| OsgError::invalid("D̄ integer overflow"))?;
    Ok(if (m - q) % 2 == 1 { -mag } else { mag })
}

/// Common factor sqrt(C(N,m) / C(N,n)) shared by every q term of a block entry.
pub fn dbar_scale(key: CoeffKey) -> f64 {
    let (n_tot, m, n) = (key.total as u64, key.row as u64, key.col as u64);
    (binomial_f64(n_tot, m) / binomial_f64(n_tot, n)).sqrt()
}

/// D̄_{m,n,q}^{(N)} = (-1)^{m-q} sqrt(m! n! (N-m)! (N-n)!) / [q!(m-q)!(n-q)!(N-m-n+q)!].
pub fn dbar(total: usize, m: usize, n: usize, q: usize) -> Result<f64> {
    let key = CoeffKey::new(total, m, n)?;
    let int = dbar_integer(key, q)?;
    Ok(int as f64 * dbar_scale(key))
}

/// Single rotation coefficient D_{m,n}^{(N)}(θ).
pub fn d_coeff(total: usize, m: usize, n: usize, theta: f64) -> Result<f64> {
    let key = CoeffKey::new(total, m, n)?;
    let (s, c) = theta.sin_cos();
    Ok(d_coeff_with(key, c, s))
}

fn d_coeff_with(key: CoeffKey, c: f64, s: f64) -> f64 {
    let scale = dbar_scale(key);
    let mut acc = NeumaierSum::new();
    for q in key.q_range() {
        let int = dbar_integer(key, q).expect("q in range");
        let cos_pow = key.total + 2 * q - key.row - key.col;
        let sin_pow = key.row + key.col - 2 * q;
        acc.add(int as f64 * c.powi(cos_pow as i32) * s.powi(sin_pow as i32));
    }
    acc.value() * scale
}

/// Dense (N+1)×(N+1) block, rows indexed by m, columns by n.
#[derive(Debug, Clone, PartialEq)]
pub struct DMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.dim + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn matmul(&self, other: &DMatrix) -> DMatrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = NeumaierSum::new();
                for k in 0..d {
                    acc.add(self.get(i, k) * other.get(k, j));
                }
                data[i * d + j] = acc.value();
            }
        }
        DMatrix { dim: d, data }
    }

    /// Largest deviation of M Mᵀ from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let mut acc = NeumaierSum::new();
                for k in 0..d {
                    acc.add(self.get(i, k) * self.get(j, k));
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc.value() - target).abs());
            }
        }
        worst
    }
}

pub fn d_matrix(total: usize, theta: f64) -> DMatrix {
    let dim = total + 1;
    let (s, c) = theta.sin_cos();
    let mut data = Vec::with_capacity(dim * dim);
    for m in 0..dim {
        for n in 0..dim {
            let key = CoeffKey {
                total,
                row: m,
                col: n,
            };
            data.push(d_coeff_with(key, c, s));
        }
    }
    DMatrix { dim, data }
}

/// Memoized blocks keyed by (N, exact bit pattern of θ).
#[derive(Debug, Default)]
pub struct DMatrixCache {
    entries: RwLock<HashMap<(usize, u64), Arc<DMatrix>>>,
}

impl DMatrixCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static DMatrixCache {
        static CACHE: OnceLock<DMatrixCache> = OnceLock::new();
        CACHE.get_or_init(DMatrixCache::new)
    }

    pub fn get(&self, total: usize, theta: f64) -> Arc<DMatrix> {
        let key = (total, theta.to_bits());
        if let Some(m) = self.entries.read().expect("cache poisoned").get(&key) {
            return Arc::clone(m);
        }
        let built = Arc::new(d_matrix(total, theta));
        let mut w = self.entries.write().expect("cache poisoned");
        Arc::clone(w.entry(key).or_insert(built))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
