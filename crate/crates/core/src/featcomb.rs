//! Feature-combination layer and global interaction term.
//!
//! Every size-`m` subset of the `n` input features becomes one output column.
//! Two combiners are provided:
//!
//! - [`Approach::Multiplicative`]: the product of the subset's members.
//! - [`Approach::PairwiseSum`]: the sum of products over all pairs inside the
//!   subset, so `{a, b, c}` maps to `ab + ac + bc`.
//!
//! Subsets are enumerated in lexicographic order, and column `k` of every
//! transformed row corresponds to `subsets[k]`. Because all `m`-subsets are
//! present and both combiners are symmetric in their arguments, permuting the
//! input features permutes the output columns and nothing else.
//!
//! The global interaction is a single scalar `f(Σ_{i<j} x_i x_j)` taken over the
//! whole feature vector.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::ndcore::Matrix2D;

pub const DEFAULT_MAX_COMBINED: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    #[serde(alias = "mult")]
    Multiplicative,
    #[serde(alias = "pairwise")]
    PairwiseSum,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Multiplicative => "multiplicative",
            Approach::PairwiseSum => "pairwise_sum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombinationSpec {
    pub m: usize,
    pub approach: Approach,
    pub max_combined: u64,
    pub augment_original: bool,
    pub append_global_interaction: bool,
}

impl Default for CombinationSpec {
    fn default() -> Self {
        Self {
            m: 2,
            approach: Approach::Multiplicative,
            max_combined: DEFAULT_MAX_COMBINED,
            augment_original: false,
            append_global_interaction: false,
        }
    }
}

impl CombinationSpec {
    pub fn new(m: usize, approach: Approach) -> Self {
        Self {
            m,
            approach,
            ..Self::default()
        }
    }

    /// Checks the spec against an input width of `n` features.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::arg("subset size m must be at least 1"));
        }
        if self.m > n {
            return Err(Error::arg(format!(
                "m exceeds feature count (m = {}, features = {n})",
                self.m
            )));
        }
        if self.approach == Approach::PairwiseSum && self.m < 2 {
            return Err(Error::arg("pairwise_sum requires m >= 2"));
        }
        if self.append_global_interaction && n < 2 {
            return Err(Error::arg(
                "global interaction requires at least 2 features",
            ));
        }
        let count = binomial(n, self.m);
        if count > u128::from(self.max_combined) {
            return Err(Error::Capacity {
                what: format!("C({n}, {})", self.m),
                required: count,
                limit: u128::from(self.max_combined),
            });
        }
        Ok(())
    }

    /// Output width for an input of `n` features.
    pub fn output_width(&self, n: usize) -> usize {
        let mut width = binomial(n, self.m) as usize;
        if self.augment_original {
            width += n;
        }
        if self.append_global_interaction {
            width += 1;
        }
        width
    }
}

/// Strictly increasing feature positions forming one combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetIndex(Vec<usize>);

impl SubsetIndex {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("subset must not be empty"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg(format!(
                "subset {indices:?} is not strictly increasing"
            )));
        }
        if indices.iter().any(|&i| i >= n) {
            return Err(Error::arg(format!(
                "subset {indices:?} has an index >= {n}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Column header such as `comb_0_2` or `comb_1_3_4`.
    pub fn header(&self) -> String {
        let mut s = String::from("comb");
        for i in &self.0 {
            s.push('_');
            s.push_str(&i.to_string());
        }
        s
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All size-`m` subsets of `0..n` in lexicographic order.
///
/// Fails before allocating when `C(n, m)` exceeds `max_combined`.
pub fn enumerate_subsets(n: usize, m: usize, max_combined: u64) -> Result<Vec<SubsetIndex>> {
    if m == 0 {
        return Err(Error::arg("subset size m must be at least 1"));
    }
    if m > n {
        return Err(Error::arg(format!(
            "m exceeds feature count (m = {m}, features = {n})"
        )));
    }
    let count = binomial(n, m);
    if count > u128::from(max_combined) {
        return Err(Error::Capacity {
            what: format!("C({n}, {m})"),
            required: count,
            limit: u128::from(max_combined),
        });
    }

    let mut out = Vec::with_capacity(count as usize);
    let mut current: Vec<usize> = (0..m).collect();
    loop {
        out.push(SubsetIndex(current.clone()));
        // rightmost position that can still move up
        let Some(pos) = (0..m).rev().find(|&i| current[i] < n - m + i) else {
            break;
        };
        current[pos] += 1;
        for i in pos + 1..m {
            current[i] = current[i - 1] + 1;
        }
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

fn check_indices(x: &[f64], subsets: &[SubsetIndex]) -> Result<()> {
    if let Some(bad) = subsets.iter().find(|s| s.0.iter().any(|&i| i >= x.len())) {
        return Err(Error::shape(format!(
            "subset {:?} indexes past a vector of length {}",
            bad.0,
            x.len()
        )));
    }
    Ok(())
}

fn subset_product(x: &[f64], subset: &[usize]) -> f64 {
    subset.iter().map(|&i| x[i]).product()
}

fn subset_pair_sum(x: &[f64], subset: &[usize]) -> f64 {
    let mut total = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            total += x[i] * x[j];
        }
    }
    total
}

/// Product of each subset's members.
pub fn combine_multiplicative(x: &[f64], subsets: &[SubsetIndex]) -> Result<Vec<f64>> {
    check_indices(x, subsets)?;
    Ok(subsets.iter().map(|s| subset_product(x, &s.0)).collect())
}

/// Sum of pairwise products inside each subset.
pub fn combine_pairwise_sum(x: &[f64], subsets: &[SubsetIndex]) -> Result<Vec<f64>> {
    check_indices(x, subsets)?;
    if let Some(s) = subsets.iter().find(|s| s.len() < 2) {
        return Err(Error::arg(format!(
            "pairwise_sum requires subsets of size >= 2, got {:?}",
            s.0
        )));
    }
    Ok(subsets.iter().map(|s| subset_pair_sum(x, &s.0)).collect())
}

pub fn combine(x: &[f64], subsets: &[SubsetIndex], approach: Approach) -> Result<Vec<f64>> {
    match approach {
        Approach::Multiplicative => combine_multiplicative(x, subsets),
        Approach::PairwiseSum => combine_pairwise_sum(x, subsets),
    }
}

/// Vector-Jacobian product of a combiner: `upstreamᵀ · ∂Z/∂x`.
///
/// Multiplicative partials are formed by multiplying the other members of the
/// subset, so they stay exact when some `x_i` is zero.
pub fn combine_backward(
    x: &[f64],
    subsets: &[SubsetIndex],
    approach: Approach,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    check_indices(x, subsets)?;
    if upstream.len() != subsets.len() {
        return Err(Error::shape(format!(
            "upstream of length {} for {} subsets",
            upstream.len(),
            subsets.len()
        )));
    }
    let mut grad = vec![0.0; x.len()];
    for (subset, &g) in subsets.iter().zip(upstream) {
        let idx = &subset.0;
        for (a, &i) in idx.iter().enumerate() {
            let partial = match approach {
                Approach::Multiplicative => idx
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &j)| x[j])
                    .product::<f64>(),
                Approach::PairwiseSum => idx
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &j)| x[j])
                    .sum::<f64>(),
            };
            grad[i] += g * partial;
        }
    }
    Ok(grad)
}

/// `f(Σ_{i<j} x_i x_j)` over all pairs of the full vector.
pub fn global_interaction(x: &[f64], activation: Activation) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::arg(format!(
            "global interaction needs at least 2 features, got {}",
            x.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            total += x[i] * x[j];
        }
    }
    Ok(activation.apply(total))
}

/// Gradient of [`global_interaction`] with respect to `x`.
pub fn global_interaction_backward(x: &[f64], activation: Activation) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::arg(format!(
            "global interaction needs at least 2 features, got {}",
            x.len()
        )));
    }
    let mut pre = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            pre += x[i] * x[j];
        }
    }
    let outer = activation.derivative(pre);
    let total: f64 = x.iter().sum();
    Ok(x.iter().map(|&xi| outer * (total - xi)).collect())
}

/// Output of [`transform_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedFeatures {
    pub values: Matrix2D,
    pub spec: CombinationSpec,
    pub subsets: Vec<SubsetIndex>,
}

impl CombinedFeatures {
    /// Column headers: one per subset, then the original feature names when
    /// augmenting, then `global_interaction`.
    pub fn column_names(&self, feature_names: &[String]) -> Vec<String> {
        let mut names: Vec<String> = self.subsets.iter().map(SubsetIndex::header).collect();
        if self.spec.augment_original {
            names.extend(feature_names.iter().cloned());
        }
        if self.spec.append_global_interaction {
            names.push("global_interaction".to_string());
        }
        names
    }
}

/// Applies the combination row-wise with freshly enumerated subsets.
pub fn transform_dataset(x: &Matrix2D, spec: &CombinationSpec) -> Result<CombinedFeatures> {
    spec.validate(x.cols())?;
    let subsets = enumerate_subsets(x.cols(), spec.m, spec.max_combined)?;
    transform_with_subsets(x, spec, subsets)
}

/// Applies the combination row-wise with a given subset list, e.g. one restored
/// from a checkpoint.
pub fn transform_with_subsets(
    x: &Matrix2D,
    spec: &CombinationSpec,
    subsets: Vec<SubsetIndex>,
) -> Result<CombinedFeatures> {
    let n = x.cols();
    spec.validate(n)?;
    let mut width = subsets.len();
    if spec.augment_original {
        width += n;
    }
    if spec.append_global_interaction {
        width += 1;
    }
    let mut data = Vec::with_capacity(x.rows() * width);
    for row in x.iter_rows() {
        data.extend(combine(row, &subsets, spec.approach)?);
        if spec.augment_original {
            data.extend_from_slice(row);
        }
        if spec.append_global_interaction {
            data.push(global_interaction(row, Activation::Identity)?);
        }
    }
    Ok(CombinedFeatures {
        values: Matrix2D::from_raw(x.rows(), width, data),
        spec: *spec,
        subsets,
    })
}
