//! Multi-logit likelihood kernels: conditional probabilities, per-node block
//! log-likelihood, the penalized objective, block gradients, and the diagonal
//! Hessian surrogate bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{CategoricalDataset, DummyRow};
use crate::math;

/// Coefficients of the symmetric multi-logit model.
///
/// For every ordered pair (j, i), i ≠ j, the group β_{j·i} carries the
/// influence of node i on node j as r_j stacked sub-blocks of length
/// d_i = r_i − 1; sub-block ℓ coordinate k multiplies the indicator of
/// node i at level k+2. An empty vector denotes an identically zero group.
/// Intercepts β_{j·0} have length r_j with component 0 pinned at zero,
/// and every stored group keeps Σ_ℓ β_{jℓi} = 0 componentwise (maintained
/// by the update form, never by projection).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    p: usize,
    levels: Vec<u16>,
    intercepts: Vec<Vec<f64>>,
    groups: Vec<Vec<f64>>, // index j*p + i; empty ⇔ zero
}

/// Group-lasso penalty: λ Σ_j Σ_i w_ji ‖β_{j·i}‖₂ with a symmetric
/// nonnegative weight matrix (diagonal ignored).
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    p: usize,
    weights: Vec<f64>, // p×p row-major, w[j*p+i] = w_ji = w_ij
}

impl PenaltyConfig {
    pub fn unit(p: usize, lambda: f64) -> Self {
        PenaltyConfig {
            lambda,
            p,
            weights: vec![1.0; p * p],
        }
    }

    /// Builds from a full p×p matrix; asserts symmetry and nonnegativity.
    pub fn with_weights(p: usize, lambda: f64, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), p * p);
        for j in 0..p {
            for i in 0..j {
                assert!(weights[j * p + i] >= 0.0);
                assert!(weights[j * p + i] == weights[i * p + j]);
            }
        }
        PenaltyConfig { lambda, p, weights }
    }

    #[inline(always)]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j * self.p + i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl ParamVector {
    pub fn zeros(levels: &[u16]) -> Self {
        let p = levels.len();
        ParamVector {
            p,
            levels: levels.to_vec(),
            intercepts: levels.iter().map(|&r| vec![0.0; r as usize]).collect(),
            groups: vec![Vec::new(); p * p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self, j: usize) -> usize {
        self.levels[j] as usize
    }

    pub fn d(&self, i: usize) -> usize {
        self.levels[i] as usize - 1
    }

    pub fn group_len(&self, j: usize, i: usize) -> usize {
        self.d(i) * self.r(j)
    }

    /// β_{j·i}; empty slice means the group is zero.
    #[inline(always)]
    pub fn group(&self, j: usize, i: usize) -> &[f64] {
        &self.groups[j * self.p + i]
    }

    pub fn group_is_zero(&self, j: usize, i: usize) -> bool {
        self.groups[j * self.p + i].iter().all(|&v| v == 0.0)
    }

    pub fn group_norm(&self, j: usize, i: usize) -> f64 {
        math::sqrt(self.group(j, i).iter().map(|v| v * v).sum())
    }

    /// Replaces β_{j·i}; an all-zero vector is stored as empty.
    pub fn set_group(&mut self, j: usize, i: usize, value: Vec<f64>) {
        debug_assert!(j != i);
        debug_assert!(value.is_empty() || value.len() == self.group_len(j, i));
        let slot = &mut self.groups[j * self.p + i];
        if value.iter().all(|&v| v == 0.0) {
            slot.clear();
        } else {
            *slot = value;
        }
    }

    pub fn clear_group(&mut self, j: usize, i: usize) {
        self.groups[j * self.p + i].clear();
    }

    pub fn intercepts(&self, j: usize) -> &[f64] {
        &self.intercepts[j]
    }

    /// Replaces β_{j·0}; component 0 must already be zero.
    pub fn set_intercepts(&mut self, j: usize, value: Vec<f64>) {
        debug_assert_eq!(value.len(), self.r(j));
        debug_assert!(value[0] == 0.0);
        self.intercepts[j] = value;
    }

    /// Parents implied by the nonzero groups of node j.
    pub fn support_parents(&self, j: usize) -> Vec<usize> {
        (0..self.p)
            .filter(|&i| i != j && !self.group_is_zero(j, i))
            .collect()
    }

    /// Worst componentwise violation of Σ_ℓ β_{jℓi} = 0 over sub-blocks.
    pub fn sum_to_zero_violation(&self, j: usize, i: usize) -> f64 {
        let g = self.group(j, i);
        if g.is_empty() {
            return 0.0;
        }
        let d = self.d(i);
        let r = self.r(j);
        let mut worst = 0.0f64;
        for k in 0..d {
            let s: f64 = (0..r).map(|l| g[l * d + k]).sum();
            worst = worst.max(math::abs(s));
        }
        worst
    }

    /// x_h^T β_{jℓ·} for all ℓ, reading levels straight from the dataset
    /// (equivalent to the dot product with the encoded row).
    pub fn linear_predictors(&self, ds: &CategoricalDataset, h: usize, j: usize, out: &mut [f64]) {
        let r = self.r(j);
        out[..r].copy_from_slice(&self.intercepts[j]);
        for i in 0..self.p {
            if i == j {
                continue;
            }
            let g = &self.groups[j * self.p + i];
            if g.is_empty() {
                continue;
            }
            let lv = ds.level(h, i);
            if lv >= 2 {
                let d = self.d(i);
                let k = lv as usize - 2;
                for (l, o) in out[..r].iter_mut().enumerate() {
                    *o += g[l * d + k];
                }
            }
        }
    }

    /// Conditional distribution p_jℓ(x) over node j's levels, max-subtracted
    /// softmax of the linear predictors.
    pub fn probabilities(&self, ds: &CategoricalDataset, h: usize, j: usize) -> Vec<f64> {
        let mut lp = vec![0.0; self.r(j)];
        self.linear_predictors(ds, h, j, &mut lp);
        softmax_in_place(&mut lp);
        lp
    }

    /// Same distribution computed from an encoded row; used to pin the
    /// dataset-level fast path to the dummy-coding definition.
    pub fn probabilities_encoded(&self, ds: &CategoricalDataset, x: &DummyRow, j: usize) -> Vec<f64> {
        let r = self.r(j);
        let mut lp = self.intercepts[j].clone();
        for i in 0..self.p {
            if i == j {
                continue;
            }
            let g = &self.groups[j * self.p + i];
            if g.is_empty() {
                continue;
            }
            let off = ds.segment_offset(i);
            let d = self.d(i);
            for k in 0..d {
                if x.bits[off + k] == 1 {
                    for (l, o) in lp[..r].iter_mut().enumerate() {
                        *o += g[l * d + k];
                    }
                }
            }
        }
        softmax_in_place(&mut lp);
        lp
    }
}

/// Overflow-safe softmax; input holds linear predictors, output probabilities.
/// Two levels take the logistic fast path (one exp instead of two).
pub fn softmax_in_place(lp: &mut [f64]) {
    if lp.len() == 2 {
        let z = math::exp(-math::abs(lp[0] - lp[1]));
        let hi = z / (1.0 + z);
        if lp[0] >= lp[1] {
            lp[0] = 1.0 - hi;
            lp[1] = hi;
        } else {
            lp[0] = hi;
            lp[1] = 1.0 - hi;
        }
        return;
    }
    let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in lp.iter_mut() {
        *v = math::exp(*v - m);
        sum += *v;
    }
    for v in lp.iter_mut() {
        *v /= sum;
    }
}

/// log Σ_ℓ exp(lp_ℓ) with max subtraction; the two-level case runs on
/// ln_1p(exp(−|Δ|)) alone.
pub fn log_sum_exp(lp: &[f64]) -> f64 {
    if lp.len() == 2 {
        let m = lp[0].max(lp[1]);
        return m + math::ln_1p(math::exp(-math::abs(lp[0] - lp[1])));
    }
    let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = lp.iter().map(|&v| math::exp(v - m)).sum();
    m + math::ln(s)
}

/// ℓ_j(β) = Σ_{h∈O_j} [x_h^T β_{jy·} − log Σ_m exp(x_h^T β_{jm·})].
pub fn block_loglik(beta: &ParamVector, ds: &CategoricalDataset, j: usize) -> f64 {
    let r = beta.r(j);
    let mut lp = vec![0.0; r];
    let mut total = 0.0;
    for h in 0..ds.n() {
        if !ds.is_observational(h, j) {
            continue;
        }
        beta.linear_predictors(ds, h, j, &mut lp);
        let y = ds.level(h, j) as usize - 1;
        total += lp[y] - log_sum_exp(&lp);
    }
    total
}

/// ℓ(β) = Σ_j ℓ_j(β), the interventional factorization of the log-likelihood.
pub fn total_loglik(beta: &ParamVector, ds: &CategoricalDataset) -> f64 {
    (0..ds.p()).map(|j| block_loglik(beta, ds, j)).sum()
}

/// Penalty term λ Σ_j Σ_i w_ji ‖β_{j·i}‖₂.
pub fn penalty_value(beta: &ParamVector, pen: &PenaltyConfig) -> f64 {
    let mut total = 0.0;
    for j in 0..beta.p() {
        for i in 0..beta.p() {
            if i != j && !beta.group(j, i).is_empty() {
                total += pen.weight(j, i) * beta.group_norm(j, i);
            }
        }
    }
    pen.lambda * total
}

/// f_λ(β) = −ℓ(β) + λ Σ_j Σ_i w_ji ‖β_{j·i}‖₂.
pub fn penalized_objective(beta: &ParamVector, ds: &CategoricalDataset, pen: &PenaltyConfig) -> f64 {
    -total_loglik(beta, ds) + penalty_value(beta, pen)
}

/// ∇ℓ_j over group (j, i): stacked sub-blocks Σ_{h∈O_j} (y_{hjℓ} − p_jℓ(x_h))·x_{h,i}.
pub fn block_gradient(beta: &ParamVector, ds: &CategoricalDataset, j: usize, i: usize) -> Vec<f64> {
    let r = beta.r(j);
    let d = beta.d(i);
    let mut g = vec![0.0; d * r];
    let mut lp = vec![0.0; r];
    for h in 0..ds.n() {
        if !ds.is_observational(h, j) {
            continue;
        }
        let lv = ds.level(h, i);
        if lv < 2 {
            continue; // x_{h,i} = 0
        }
        let k = lv as usize - 2;
        beta.linear_predictors(ds, h, j, &mut lp);
        softmax_in_place(&mut lp);
        let y = ds.level(h, j) as usize - 1;
        for l in 0..r {
            let yl = if l == y { 1.0 } else { 0.0 };
            g[l * d + k] += yl - lp[l];
        }
    }
    g
}

/// ∇ℓ_j over the intercept group: Σ_{h∈O_j} (y_{hjℓ} − p_jℓ(x_h)).
pub fn intercept_gradient(beta: &ParamVector, ds: &CategoricalDataset, j: usize) -> Vec<f64> {
    let r = beta.r(j);
    let mut g = vec![0.0; r];
    let mut lp = vec![0.0; r];
    for h in 0..ds.n() {
        if !ds.is_observational(h, j) {
            continue;
        }
        beta.linear_predictors(ds, h, j, &mut lp);
        softmax_in_place(&mut lp);
        let y = ds.level(h, j) as usize - 1;
        for l in 0..r {
            let yl = if l == y { 1.0 } else { 0.0 };
            g[l] += yl - lp[l];
        }
    }
    g
}

/// h_ji = −max{max diag(−H), b} < 0 with diagonal entries
/// Σ_{h∈O_j} p_jℓ(x_h)(1 − p_jℓ(x_h))·x_{h,i,k}² per (ℓ, k) coordinate.
pub fn hessian_bound(
    beta: &ParamVector,
    ds: &CategoricalDataset,
    j: usize,
    i: usize,
    b: f64,
) -> f64 {
    debug_assert!(b > 0.0);
    let r = beta.r(j);
    let d = beta.d(i);
    let mut diag = vec![0.0; d * r];
    let mut lp = vec![0.0; r];
    for h in 0..ds.n() {
        if !ds.is_observational(h, j) {
            continue;
        }
        let lv = ds.level(h, i);
        if lv < 2 {
            continue; // x² = 0
        }
        let k = lv as usize - 2;
        beta.linear_predictors(ds, h, j, &mut lp);
        softmax_in_place(&mut lp);
        for l in 0..r {
            diag[l * d + k] += lp[l] * (1.0 - lp[l]);
        }
    }
    let m = diag.iter().cloned().fold(0.0f64, f64::max);
    -m.max(b)
}

/// Intercept counterpart of `hessian_bound` (constant regressor 1).
pub fn intercept_hessian_bound(beta: &ParamVector, ds: &CategoricalDataset, j: usize, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    let r = beta.r(j);
    let mut diag = vec![0.0; r];
    let mut lp = vec![0.0; r];
    for h in 0..ds.n() {
        if !ds.is_observational(h, j) {
            continue;
        }
        beta.linear_predictors(ds, h, j, &mut lp);
        softmax_in_place(&mut lp);
        for l in 0..r {
            diag[l] += lp[l] * (1.0 - lp[l]);
        }
    }
    let m = diag.iter().cloned().fold(0.0f64, f64::max);
    -m.max(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_ds(child_levels: &[u16], parent_levels: &[u16]) -> CategoricalDataset {
        // Node 0 = parent, node 1 = child.
        let mut values = Vec::new();
        for (c, p) in child_levels.iter().zip(parent_levels) {
            values.push(*p);
            values.push(*c);
        }
        CategoricalDataset::new(values, 2, Some(vec![2, 2]), &[]).unwrap()
    }

    /// β matching the generator law p_jℓ ∝ exp(2·#{parents at level ℓ}) for
    /// one binary parent: intercepts (0, −2), group (−2, 2).
    fn generator_beta() -> ParamVector {
        let mut beta = ParamVector::zeros(&[2, 2]);
        beta.set_intercepts(1, vec![0.0, -2.0]);
        beta.set_group(1, 0, vec![-2.0, 2.0]);
        beta
    }

    #[test]
    fn zero_beta_is_uniform() {
        let ds = binary_ds(&[1, 2], &[1, 2]);
        let beta = ParamVector::zeros(&[2, 2]);
        assert_eq!(beta.probabilities(&ds, 0, 1), vec![0.5, 0.5]);
        let ds3 = CategoricalDataset::new(vec![1, 2, 3], 3, Some(vec![3, 3, 3]), &[]).unwrap();
        let beta3 = ParamVector::zeros(&[3, 3, 3]);
        for v in beta3.probabilities(&ds3, 0, 0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn generator_parameterization_hits_0_8808() {
        let target = (2.0f64).exp() / ((2.0f64).exp() + 1.0); // 0.88080
        let beta = generator_beta();
        let ds = binary_ds(&[1, 1], &[2, 1]);
        // Parent at level 2 → child level 2 with prob e²/(e²+1).
        let pr = beta.probabilities(&ds, 0, 1);
        assert!((pr[1] - target).abs() < 1e-12);
        // Parent at level 1 → child level 1 with the same prob.
        let pr = beta.probabilities(&ds, 1, 1);
        assert!((pr[0] - target).abs() < 1e-12);
    }

    #[test]
    fn probabilities_match_encoded_rows() {
        let ds = CategoricalDataset::from_csv_str("#levels: 3,2,4\n1,2,4\n3,1,1\n2,2,3", None)
            .unwrap();
        let mut beta = ParamVector::zeros(ds.levels());
        beta.set_intercepts(0, vec![0.0, 0.3, -0.7]);
        beta.set_group(0, 2, vec![0.5, -0.25, 0.1, -0.5, 0.5, -0.2, 0.0, -0.25, 0.1]);
        beta.set_group(0, 1, vec![1.0, -0.5, -0.5]);
        let rows = ds.encode();
        for h in 0..ds.n() {
            let a = beta.probabilities(&ds, h, 0);
            let b = beta.probabilities_encoded(&ds, &rows[h], 0);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_shift_invariant() {
        let ds = binary_ds(&[1, 2, 2], &[2, 2, 1]);
        let mut beta = generator_beta();
        let base = beta.probabilities(&ds, 0, 1);
        assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Common constant on all intercept components leaves probabilities be.
        let shifted: Vec<f64> = beta.intercepts(1).iter().map(|v| v + 3.7).collect();
        beta.intercepts[1] = shifted;
        let moved = beta.probabilities(&ds, 0, 1);
        for (a, b) in base.iter().zip(&moved) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_loglik_is_uniform_count() {
        let ds = binary_ds(&[1, 2, 1, 2, 1, 2, 1, 2, 1, 2], &[1; 10]);
        let beta = ParamVector::zeros(&[2, 2]);
        let ll = block_loglik(&beta, &ds, 1);
        assert!((ll - 10.0 * (0.5f64).ln()).abs() < 1e-12);

        let vals: Vec<u16> = (0..9).map(|k| (k % 3) as u16 + 1).collect();
        let ds3 = CategoricalDataset::new(vals, 1, Some(vec![3]), &[]).unwrap();
        let beta3 = ParamVector::zeros(&[3]);
        assert!((block_loglik(&beta3, &ds3, 0) - 9.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_row_loglik_matches_hand_evaluation() {
        let ds = binary_ds(&[2], &[2]);
        let beta = generator_beta();
        // lp = (−2, 0); observed level 2 → 0 − log(e⁻² + 1).
        let expect = -(1.0 + (-2.0f64).exp()).ln();
        assert!((block_loglik(&beta, &ds, 1) - expect).abs() < 1e-12);
    }

    #[test]
    fn intervened_rows_drop_out_of_the_block() {
        let values = vec![2, 2, 2, 2, 1, 2];
        let obs = CategoricalDataset::new(values.clone(), 2, Some(vec![2, 2]), &[]).unwrap();
        let cut = CategoricalDataset::new(values, 2, Some(vec![2, 2]), &[(0, 1)]).unwrap();
        let beta = generator_beta();
        let keep_row0 = {
            let one = binary_ds(&[2], &[2]);
            block_loglik(&beta, &one, 1)
        };
        let full = block_loglik(&beta, &obs, 1);
        let cut_ll = block_loglik(&beta, &cut, 1);
        assert!((full - cut_ll - keep_row0).abs() < 1e-12);
    }

    #[test]
    fn penalized_objective_arithmetic() {
        let ds = binary_ds(&[1, 2], &[2, 1]);
        let mut beta = ParamVector::zeros(&[2, 2]);
        // ‖β_{1·0}‖ = 2 with sum-to-zero layout.
        let s = 2.0 / (2.0f64).sqrt();
        beta.set_group(1, 0, vec![-s, s]);
        let mut w = vec![0.0; 4];
        w[1 * 2 + 0] = 1.5;
        w[0 * 2 + 1] = 1.5;
        let pen = PenaltyConfig::with_weights(2, 3.0, w);
        let f = penalized_objective(&beta, &ds, &pen);
        assert!((f - (-total_loglik(&beta, &ds) + 9.0)).abs() < 1e-12);
        let pen0 = PenaltyConfig::unit(2, 0.0);
        assert!((penalized_objective(&beta, &ds, &pen0) + total_loglik(&beta, &ds)).abs() < 1e-15);
        let zero = ParamVector::zeros(&[2, 2]);
        let penz = PenaltyConfig::unit(2, 5.0);
        assert!(
            (penalized_objective(&zero, &ds, &penz) + total_loglik(&zero, &ds)).abs() < 1e-15
        );
    }

    #[test]
    fn gradient_vanishes_at_perfect_fit() {
        // Deterministic child=parent data and a huge effect: p → y.
        let ds = binary_ds(&[1, 2, 1, 2], &[1, 2, 1, 2]);
        let mut beta = ParamVector::zeros(&[2, 2]);
        beta.set_group(1, 0, vec![-20.0, 20.0]);
        beta.set_intercepts(1, vec![0.0, -20.0]);
        let g = block_gradient(&beta, &ds, 1, 0);
        for v in g {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_sub_blocks_sum_to_zero_over_levels() {
        let ds = CategoricalDataset::from_csv_str("#levels: 3,3\n1,2\n3,1\n2,3\n2,2", None)
            .unwrap();
        let mut beta = ParamVector::zeros(&[3, 3]);
        beta.set_group(0, 1, vec![0.4, -0.2, 0.1, 0.3, -0.5, -0.1]);
        beta.set_intercepts(0, vec![0.0, 0.25, -0.5]);
        let g = block_gradient(&beta, &ds, 0, 1);
        let d = 2;
        for k in 0..d {
            let s: f64 = (0..3).map(|l| g[l * d + k]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = CategoricalDataset::from_csv_str("#levels: 2,3\n1,2\n2,3\n2,1\n1,3\n2,2", None)
            .unwrap();
        let mut beta = ParamVector::zeros(&[2, 3]);
        beta.set_group(0, 1, vec![0.3, -0.1, -0.3, 0.1]);
        beta.set_intercepts(0, vec![0.0, -0.4]);
        let g = block_gradient(&beta, &ds, 0, 1);
        let eps = 1e-6;
        for c in 0..g.len() {
            let mut up = beta.clone();
            let mut gv = up.group(0, 1).to_vec();
            gv[c] += eps;
            up.set_group(0, 1, gv);
            let mut dn = beta.clone();
            let mut gv = dn.group(0, 1).to_vec();
            gv[c] -= eps;
            dn.set_group(0, 1, gv);
            let fd = (block_loglik(&up, &ds, 0) - block_loglik(&dn, &ds, 0)) / (2.0 * eps);
            assert!(
                (fd - g[c]).abs() <= 1e-5 * (1.0 + g[c].abs()),
                "coord {}: fd {} vs grad {}",
                c,
                fd,
                g[c]
            );
        }
    }

    #[test]
    fn hessian_bound_examples() {
        // Empty O_j → −b.
        let ds = CategoricalDataset::new(vec![1, 2], 2, Some(vec![2, 2]), &[(0, 1)]).unwrap();
        let beta = ParamVector::zeros(&[2, 2]);
        assert_eq!(hessian_bound(&beta, &ds, 1, 0, 1e-3), -1e-3);
        // 4 observational rows, parent bit always 1, zero β → diag 4·(0.25) = 1.
        let ds4 = binary_ds(&[1, 2, 1, 2], &[2, 2, 2, 2]);
        assert_eq!(hessian_bound(&beta, &ds4, 1, 0, 1e-3), -1.0);
        assert!(hessian_bound(&beta, &ds4, 1, 0, 2.0) <= -2.0);
    }
}
