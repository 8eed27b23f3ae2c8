//! Valuation samplers for every supported prior, permutation-group
//! enumeration, and test-set symmetrization.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One auction instance: an `n x m` nonnegative value matrix plus optional
/// per-bidder / per-item context rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile {
    pub values: Matrix,
    /// `n x d_x` context rows, one per bidder.
    pub bidder_contexts: Option<Matrix>,
    /// `m x d_y` context rows, one per item.
    pub item_contexts: Option<Matrix>,
}

impl ValuationProfile {
    pub fn new(values: Matrix) -> Self {
        ValuationProfile {
            values,
            bidder_contexts: None,
            item_contexts: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn m(&self) -> usize {
        self.values.cols()
    }

    /// Same matrices with bidder `i`'s value row replaced by `row`.
    pub fn with_bid_row(&self, i: usize, row: &[f64]) -> Result<ValuationProfile> {
        Ok(ValuationProfile {
            values: self.values.with_row(i, row)?,
            bidder_contexts: self.bidder_contexts.clone(),
            item_contexts: self.item_contexts.clone(),
        })
    }
}

/// A batch of profiles sharing (n, m), tagged with its origin.
#[derive(Debug, Clone)]
pub struct ValuationBatch {
    pub profiles: Vec<ValuationProfile>,
    pub n: usize,
    pub m: usize,
    pub distribution: String,
    pub seed: u64,
}

impl ValuationBatch {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// The valuation priors used across the experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistributionSpec {
    /// i.i.d. U[0,1] entries.
    Uniform,
    /// Truncated normal on [0,1]; `sd` is the standard deviation.
    TruncatedNormal { mean: f64, sd: f64 },
    /// Per bidder, x_i uniform on {1..5}; v_ij ~ N(x_i/6, 0.1) truncated to [0,1].
    CompoundA,
    /// Contexts x_i, y_j uniform on [-1,1]^dim; v_ij ~ U[0, sigmoid(x_i . y_j)].
    CompoundC { dim: usize },
}

impl DistributionSpec {
    pub fn tag(&self) -> String {
        match self {
            DistributionSpec::Uniform => "uniform".into(),
            DistributionSpec::TruncatedNormal { mean, sd } => format!("truncated-normal({mean},{sd})"),
            DistributionSpec::CompoundA => "compound-a".into(),
            DistributionSpec::CompoundC { dim } => format!("compound-c(dim={dim})"),
        }
    }

    pub fn sample(&self, n: usize, m: usize, count: usize, seed: u64) -> Result<ValuationBatch> {
        match *self {
            DistributionSpec::Uniform => sample_uniform(n, m, count, seed),
            DistributionSpec::TruncatedNormal { mean, sd } => {
                sample_truncated_normal(n, m, count, mean, sd, 0.0, 1.0, seed)
            }
            DistributionSpec::CompoundA => sample_compound_a(n, m, count, seed),
            DistributionSpec::CompoundC { dim } => sample_compound_c(n, m, dim, count, seed),
        }
    }
}

fn check_batch_params(n: usize, m: usize, count: usize) -> Result<()> {
    if n == 0 || m == 0 || count == 0 {
        return Err(Error::InvalidParameter(format!(
            "n, m, count must be >= 1, got ({n}, {m}, {count})"
        )));
    }
    Ok(())
}

/// i.i.d. U[0,1] values; deterministic given `seed`.
pub fn sample_uniform(n: usize, m: usize, count: usize, seed: u64) -> Result<ValuationBatch> {
    check_batch_params(n, m, count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = (0..count)
        .map(|_| {
            let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect();
            ValuationProfile::new(Matrix::from_flat(n, m, data).unwrap())
        })
        .collect();
    Ok(ValuationBatch {
        profiles,
        n,
        m,
        distribution: DistributionSpec::Uniform.tag(),
        seed,
    })
}

/// One truncated-normal draw by rejection; acceptance is high for every
/// parameterization used here.
fn draw_truncated_normal<R: Rng>(rng: &mut R, normal: &Normal<f64>, lo: f64, hi: f64) -> f64 {
    loop {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
}

/// Truncated normal values on [lo, hi]; `sd` is a standard deviation.
#[allow(clippy::too_many_arguments)]
pub fn sample_truncated_normal(
    n: usize,
    m: usize,
    count: usize,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<ValuationBatch> {
    check_batch_params(n, m, count)?;
    if sd <= 0.0 {
        return Err(Error::InvalidParameter(format!("sd must be positive, got {sd}")));
    }
    if lo >= hi {
        return Err(Error::InvalidParameter(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = (0..count)
        .map(|_| {
            let data: Vec<f64> = (0..n * m)
                .map(|_| draw_truncated_normal(&mut rng, &normal, lo, hi))
                .collect();
            ValuationProfile::new(Matrix::from_flat(n, m, data).unwrap())
        })
        .collect();
    Ok(ValuationBatch {
        profiles,
        n,
        m,
        distribution: DistributionSpec::TruncatedNormal { mean, sd }.tag(),
        seed,
    })
}

/// Per bidder, an integer context x_i uniform on {1..5}; each value is drawn
/// from N(x_i/6, 0.1) truncated to [0,1]. Contexts land in `bidder_contexts`.
pub fn sample_compound_a(n: usize, m: usize, count: usize, seed: u64) -> Result<ValuationBatch> {
    check_batch_params(n, m, count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = (0..count)
        .map(|_| {
            let contexts: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5) as f64).collect();
            let mut data = Vec::with_capacity(n * m);
            for &x in &contexts {
                let normal = Normal::new(x / 6.0, 0.1).unwrap();
                for _ in 0..m {
                    data.push(draw_truncated_normal(&mut rng, &normal, 0.0, 1.0));
                }
            }
            ValuationProfile {
                values: Matrix::from_flat(n, m, data).unwrap(),
                bidder_contexts: Some(Matrix::from_flat(n, 1, contexts).unwrap()),
                item_contexts: None,
            }
        })
        .collect();
    Ok(ValuationBatch {
        profiles,
        n,
        m,
        distribution: DistributionSpec::CompoundA.tag(),
        seed,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Contexts x_i, y_j uniform on [-1,1]^dim; v_ij ~ U[0, sigmoid(x_i . y_j)].
pub fn sample_compound_c(n: usize, m: usize, dim: usize, count: usize, seed: u64) -> Result<ValuationBatch> {
    check_batch_params(n, m, count)?;
    if dim == 0 {
        return Err(Error::InvalidParameter("context dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xm = Matrix::from_flat(n, dim, x).unwrap();
            let ym = Matrix::from_flat(m, dim, y).unwrap();
            let mut data = Vec::with_capacity(n * m);
            for i in 0..n {
                for j in 0..m {
                    let cap = sigmoid(crate::matrix::dot(xm.row(i), ym.row(j)));
                    data.push(rng.random_range(0.0..1.0) * cap);
                }
            }
            ValuationProfile {
                values: Matrix::from_flat(n, m, data).unwrap(),
                bidder_contexts: Some(xm),
                item_contexts: Some(ym),
            }
        })
        .collect();
    Ok(ValuationBatch {
        profiles,
        n,
        m,
        distribution: DistributionSpec::CompoundC { dim }.tag(),
        seed,
    })
}

/// A permutation of {0..k-1}; `perm.map(i)` is the image of index `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(k: usize) -> Self {
        Permutation((0..k).collect())
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let k = images.len();
        let mut seen = vec![false; k];
        for &v in &images {
            if v >= k || seen[v] {
                return Err(Error::InvalidParameter(format!("not a permutation: {images:?}")));
            }
            seen[v] = true;
        }
        Ok(Permutation(images))
    }

    #[inline]
    pub fn map(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Permutation(inv)
    }

    /// Composition such that permuting data by `other` and then by `self`
    /// equals permuting once by `self.compose(other)`: the result maps
    /// `i -> other.map(self.map(i))` under the row-gather convention
    /// `out[i] = data[perm.map(i)]`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        debug_assert_eq!(self.0.len(), other.0.len());
        Permutation(self.0.iter().map(|&i| other.0[i]).collect())
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }
}

/// A bidder permutation paired with an item permutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermPair {
    pub bidder: Permutation,
    pub item: Permutation,
}

impl PermPair {
    pub fn identity(n: usize, m: usize) -> Self {
        PermPair {
            bidder: Permutation::identity(n),
            item: Permutation::identity(m),
        }
    }
}

/// All k! permutations of {0..k-1} in lexicographic order of their image
/// vectors. Guarded to k <= 8.
pub fn enumerate_permutations(k: usize) -> Result<Vec<Permutation>> {
    if k == 0 || k > 8 {
        return Err(Error::PermutationSize(k));
    }
    let mut out = Vec::new();
    let mut images: Vec<usize> = (0..k).collect();
    loop {
        out.push(Permutation(images.clone()));
        // next_permutation in lexicographic order
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| images[i] < images[i + 1]) else {
            break;
        };
        let j = (i + 1..k).rev().find(|&j| images[j] > images[i]).unwrap();
        images.swap(i, j);
        images[i + 1..].reverse();
    }
    Ok(out)
}

/// Permutations of {0..k-1} that move only the indices in `subset`,
/// lexicographic, identity elsewhere.
pub fn enumerate_subset_permutations(k: usize, subset: &[usize]) -> Result<Vec<Permutation>> {
    let mut seen = vec![false; k];
    for &i in subset {
        if i >= k || seen[i] {
            return Err(Error::InvalidParameter(format!(
                "invalid index subset {subset:?} for size {k}"
            )));
        }
        seen[i] = true;
    }
    if subset.len() > 8 {
        return Err(Error::PermutationSize(subset.len()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.is_empty() {
        return Ok(vec![Permutation::identity(k)]);
    }
    let inner = enumerate_permutations(sorted.len())?;
    Ok(inner
        .into_iter()
        .map(|p| {
            let mut images: Vec<usize> = (0..k).collect();
            for (slot, &idx) in sorted.iter().enumerate() {
                images[idx] = sorted[p.map(slot)];
            }
            Permutation(images)
        })
        .collect())
}

/// Applies a permutation pair: `out[a][d] = values[bidder.map(a)][item.map(d)]`,
/// with context rows gathered consistently.
pub fn permute_profile(profile: &ValuationProfile, pair: &PermPair) -> ValuationProfile {
    let (n, m) = (profile.n(), profile.m());
    debug_assert_eq!(pair.bidder.len(), n);
    debug_assert_eq!(pair.item.len(), m);
    let mut values = Matrix::zeros(n, m);
    for a in 0..n {
        let src = pair.bidder.map(a);
        for d in 0..m {
            values.set(a, d, profile.values.get(src, pair.item.map(d)));
        }
    }
    let gather_rows = |mat: &Matrix, perm: &Permutation| -> Matrix {
        let mut out = Matrix::zeros(mat.rows(), mat.cols());
        for r in 0..mat.rows() {
            out.row_mut(r).copy_from_slice(mat.row(perm.map(r)));
        }
        out
    };
    ValuationProfile {
        values,
        bidder_contexts: profile.bidder_contexts.as_ref().map(|c| gather_rows(c, &pair.bidder)),
        item_contexts: profile.item_contexts.as_ref().map(|c| gather_rows(c, &pair.item)),
    }
}

pub const DEFAULT_SYMMETRIZE_BUDGET: usize = 4_000_000;

/// Applies every (bidder, item) permutation pair to every profile, expanding
/// the batch by a factor of n!·m!. Group elements iterate in canonical
/// (lexicographic bidder-major) order per source profile.
pub fn symmetrize(batch: &ValuationBatch) -> Result<ValuationBatch> {
    symmetrize_with_budget(batch, DEFAULT_SYMMETRIZE_BUDGET)
}

pub fn symmetrize_with_budget(batch: &ValuationBatch, budget: usize) -> Result<ValuationBatch> {
    let bidder_perms = enumerate_permutations(batch.n)?;
    let item_perms = enumerate_permutations(batch.m)?;
    let factor = bidder_perms.len() * item_perms.len();
    let needed = factor.saturating_mul(batch.len());
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut profiles = Vec::with_capacity(needed);
    for profile in &batch.profiles {
        for bp in &bidder_perms {
            for ip in &item_perms {
                let pair = PermPair {
                    bidder: bp.clone(),
                    item: ip.clone(),
                };
                profiles.push(permute_profile(profile, &pair));
            }
        }
    }
    Ok(ValuationBatch {
        profiles,
        n: batch.n,
        m: batch.m,
        distribution: format!("symmetrized({})", batch.distribution),
        seed: batch.seed,
    })
}

/// CSV batch layout: a header row `n,m,count`, then one row per profile with
/// the row-major values followed by flattened bidder then item contexts.
pub fn write_batch_csv<W: Write>(batch: &ValuationBatch, out: &mut W) -> Result<()> {
    writeln!(out, "{},{},{}", batch.n, batch.m, batch.len())?;
    for p in &batch.profiles {
        let mut fields: Vec<String> = p.values.data().iter().map(|v| format!("{v}")).collect();
        if let Some(c) = &p.bidder_contexts {
            fields.extend(c.data().iter().map(|v| format!("{v}")));
        }
        if let Some(c) = &p.item_contexts {
            fields.extend(c.data().iter().map(|v| format!("{v}")));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_batch_csv<R: BufRead>(input: &mut R) -> Result<ValuationBatch> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty batch file".into()))?
        .map_err(Error::Io)?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Parse(format!("bad header field {p:?}"))))
        .collect::<Result<_>>()?;
    let [n, m, count] = dims[..] else {
        return Err(Error::Parse(format!("expected header n,m,count, got {header:?}")));
    };
    let mut profiles = Vec::with_capacity(count);
    for line in lines {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Parse(format!("bad value {p:?}"))))
            .collect::<Result<_>>()?;
        if fields.len() < n * m {
            return Err(Error::Parse(format!(
                "profile row has {} fields, expected at least {}",
                fields.len(),
                n * m
            )));
        }
        let values = Matrix::from_flat(n, m, fields[..n * m].to_vec())?;
        // Contexts, when present, are stored as single trailing blocks; only
        // 1-dimensional contexts survive the round trip.
        let rest = &fields[n * m..];
        let (bidder_contexts, item_contexts) = match rest.len() {
            0 => (None, None),
            len if len == n => (Some(Matrix::from_flat(n, 1, rest.to_vec())?), None),
            len if len == n + m => (
                Some(Matrix::from_flat(n, 1, rest[..n].to_vec())?),
                Some(Matrix::from_flat(m, 1, rest[n..].to_vec())?),
            ),
            len => return Err(Error::Parse(format!("unexpected context block of {len} fields"))),
        };
        profiles.push(ValuationProfile {
            values,
            bidder_contexts,
            item_contexts,
        });
    }
    if profiles.len() != count {
        return Err(Error::Parse(format!(
            "header declared {count} profiles, found {}",
            profiles.len()
        )));
    }
    Ok(ValuationBatch {
        profiles,
        n,
        m,
        distribution: "csv".into(),
        seed: 0,
    })
}

/// SplitMix64 step, used to derive independent per-task seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
