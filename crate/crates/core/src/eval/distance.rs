//! Fréchet and kernel distances between two feature sets.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::linalg::symmetric_eigen;
use super::EvalError;
use crate::num::Real;

/// Relative size below which negative eigenvalues are treated as rounding.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-6;

/// Largest combined row count for which full Gram matrices are cached.
const GRAM_CACHE_LIMIT: usize = 4096;

fn check_dims<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>) -> Result<(), EvalError> {
    if a.dim() != b.dim() {
        return Err(EvalError::DimensionMismatch(format!(
            "feature dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Sample mean and covariance (`N - 1` denominator, row-major `D x D`).
pub fn mean_and_covariance<T: Real>(f: &FeatureSet<T>) -> (Vec<T>, Vec<T>) {
    let (n, d) = (f.len(), f.dim());
    let nt = T::from_usize(n).unwrap();
    let mut mean = vec![T::zero(); d];
    for row in f.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nt;
    }
    let mut cov = vec![T::zero(); d * d];
    let mut centred = vec![T::zero(); d];
    for row in f.rows() {
        for ((c, &v), &m) in centred.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centred[i];
            for j in i..d {
                cov[i * d + j] += ci * centred[j];
            }
        }
    }
    let denom = nt - T::one();
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

fn clamp_eigenvalues<T: Real>(values: &mut [T], what: &str) -> Result<(), EvalError> {
    let max = values.iter().copied().fold(T::one(), T::max);
    let floor = -T::lit(NEGATIVE_EIGEN_TOLERANCE) * max;
    for v in values.iter_mut() {
        if *v < floor {
            return Err(EvalError::Numeric(format!("{what} has eigenvalue {v:?}")));
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(())
}

/// `tr((S_a S_b)^{1/2})` through the symmetric matrix
/// `S_a^{1/2} S_b S_a^{1/2}`, which has the same eigenvalues.
fn trace_sqrt_product<T: Real>(sa: &[T], sb: &[T], d: usize) -> Result<T, EvalError> {
    let mut ea = symmetric_eigen(sa, d)?;
    clamp_eigenvalues(&mut ea.values, "first covariance")?;
    let v = |i: usize, k: usize| ea.vector_component(i, k);
    // W = V^T S_b V
    let mut tmp = vec![T::zero(); d * d];
    for i in 0..d {
        for k in 0..d {
            let mut s = T::zero();
            for j in 0..d {
                s += sb[i * d + j] * v(j, k);
            }
            tmp[i * d + k] = s;
        }
    }
    let mut m = vec![T::zero(); d * d];
    for k in 0..d {
        for l in k..d {
            let mut s = T::zero();
            for i in 0..d {
                s += v(i, k) * tmp[i * d + l];
            }
            // sqrt(l_k l_l) rather than sqrt(l_k) sqrt(l_l) keeps exact cases exact.
            let val = s * (ea.values[k] * ea.values[l]).sqrt();
            m[k * d + l] = val;
            m[l * d + k] = val;
        }
    }
    let mut em = symmetric_eigen(&m, d)?;
    clamp_eigenvalues(&mut em.values, "covariance product")?;
    Ok(em.values.iter().fold(T::zero(), |acc, &x| acc + x.sqrt()))
}

pub fn fid<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>) -> Result<T, EvalError> {
    check_dims(a, b)?;
    let d = a.dim();
    let (ma, sa) = mean_and_covariance(a);
    let (mb, sb) = mean_and_covariance(b);
    let diff = ma.iter().zip(&mb).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    let trace = (0..d).fold(T::zero(), |acc, i| acc + sa[i * d + i] + sb[i * d + i]);
    let cross = trace_sqrt_product(&sa, &sb, d)?;
    Ok(diff + trace - T::lit(2.0) * cross)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KidConfig {
    /// `None` uses `min(N_a, N_b, 1000)`.
    #[serde(default)]
    pub subset_size: Option<usize>,
    pub n_subsets: usize,
    pub seed: u64,
}

impl Default for KidConfig {
    fn default() -> Self {
        Self {
            subset_size: None,
            n_subsets: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KidResult {
    pub mean: f64,
    /// Population standard deviation over subsets.
    pub std: f64,
    pub subset_size: usize,
    pub n_subsets: usize,
    pub estimates: Vec<f64>,
}

fn poly_kernel<T: Real>(x: &[T], y: &[T], inv_d: T) -> T {
    let dot = x.iter().zip(y).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
    let base = dot * inv_d + T::one();
    base * base * base
}

struct Gram<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Gram<T> {
    fn build(a: &FeatureSet<T>, b: &FeatureSet<T>, inv_d: T) -> Self {
        let n = b.len();
        let data = (0..a.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = a.row(i);
                (0..n).map(move |j| poly_kernel(x, b.row(j), inv_d))
            })
            .collect();
        Self { n, data }
    }

    fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

/// Unbiased MMD^2 with the cubic polynomial kernel. `k` evaluates the kernel
/// between (set, index) pairs where set 0 is `a` and 1 is `b`.
fn mmd2_unbiased<T: Real>(ia: &[usize], ib: &[usize], k: &impl Fn(u8, usize, u8, usize) -> T) -> T {
    let m = T::from_usize(ia.len()).unwrap();
    let mut kxx = T::zero();
    let mut kyy = T::zero();
    let mut kxy = T::zero();
    for (p, &i) in ia.iter().enumerate() {
        for &j in &ia[p + 1..] {
            kxx += k(0, i, 0, j);
        }
        for &j in ib {
            kxy += k(0, i, 1, j);
        }
    }
    for (p, &i) in ib.iter().enumerate() {
        for &j in &ib[p + 1..] {
            kyy += k(1, i, 1, j);
        }
    }
    let two = T::lit(2.0);
    (two * kxx + two * kyy) / (m * (m - T::one())) - two * kxy / (m * m)
}

pub fn kid<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>, config: &KidConfig) -> Result<KidResult, EvalError> {
    check_dims(a, b)?;
    let max = a.len().min(b.len());
    let m = config.subset_size.unwrap_or(max.min(1000));
    if m > max {
        return Err(EvalError::SubsetTooLarge { subset: m, available: max });
    }
    if m < 2 {
        return Err(EvalError::Degenerate(format!("subset size {m}, need at least 2")));
    }
    if config.n_subsets == 0 {
        return Err(EvalError::Degenerate("zero subsets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subsets: Vec<(Vec<usize>, Vec<usize>)> = (0..config.n_subsets)
        .map(|_| {
            let ia = sample(&mut rng, a.len(), m).into_vec();
            let ib = sample(&mut rng, b.len(), m).into_vec();
            (ia, ib)
        })
        .collect();

    let inv_d = T::one() / T::from_usize(a.dim()).unwrap();
    let estimates: Vec<T> = if a.len() + b.len() <= GRAM_CACHE_LIMIT {
        let (gaa, gbb, gab) = (Gram::build(a, a, inv_d), Gram::build(b, b, inv_d), Gram::build(a, b, inv_d));
        let k = |sa: u8, i: usize, sb: u8, j: usize| match (sa, sb) {
            (0, 0) => gaa.get(i, j),
            (1, 1) => gbb.get(i, j),
            _ => gab.get(i, j),
        };
        subsets.par_iter().map(|(ia, ib)| mmd2_unbiased(ia, ib, &k)).collect()
    } else {
        let set = |s: u8| if s == 0 { a } else { b };
        let k = |sa: u8, i: usize, sb: u8, j: usize| poly_kernel(set(sa).row(i), set(sb).row(j), inv_d);
        subsets.par_iter().map(|(ia, ib)| mmd2_unbiased(ia, ib, &k)).collect()
    };

    let estimates: Vec<f64> = estimates.iter().map(|e| e.to_f64_lossy()).collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(KidResult {
        mean,
        std: var.sqrt(),
        subset_size: m,
        n_subsets: config.n_subsets,
        estimates,
    })
}
