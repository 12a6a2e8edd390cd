use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use super::tree::{propose_move, BartTree, MoveKind, SplitSpace, TreePrior};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::stats::{standard_normal, truncated_latent};

/// Data-dependent part of the log marginal likelihood of one leaf for the
/// model `r_i = b_i mu + e_i`, `mu ~ N(0, s_mu^2)`, `e_i ~ N(0, sigma^2)`,
/// given `sbb = sum b_i^2` and `sbr = sum b_i r_i`.
#[inline]
pub fn leaf_log_evidence(sbb: f64, sbr: f64, sigma: f64, leaf_scale: f64) -> f64 {
    let s2 = sigma * sigma;
    let t2 = leaf_scale * leaf_scale;
    let denom = s2 + t2 * sbb;
    0.5 * (s2 / denom).ln() + t2 * sbr * sbr / (2.0 * s2 * denom)
}

/// Full log marginal likelihood of residuals grouped by leaf with the leaf
/// means integrated out. Empty leaves contribute zero.
pub fn leaf_marginal_loglik(leaves: &[Vec<f64>], sigma: f64, leaf_scale: f64) -> f64 {
    let s2 = sigma * sigma;
    leaves
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let n = r.len() as f64;
            let sum: f64 = r.iter().sum();
            let ss: f64 = r.iter().map(|v| v * v).sum();
            leaf_log_evidence(n, sum, sigma, leaf_scale)
                - ss / (2.0 * s2)
                - 0.5 * n * (2.0 * std::f64::consts::PI * s2).ln()
        })
        .sum()
}

/// Conjugate posterior draw of a leaf value.
fn draw_leaf<R: Rng + ?Sized>(sbb: f64, sbr: f64, sigma: f64, leaf_scale: f64, rng: &mut R) -> f64 {
    let s2 = sigma * sigma;
    let t2 = leaf_scale * leaf_scale;
    let denom = s2 + t2 * sbb;
    let mean = t2 * sbr / denom;
    let sd = (s2 * t2 / denom).sqrt();
    mean + sd * standard_normal(rng)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MoveCounts {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

struct TestSet {
    columns: Vec<Vec<f64>>,
    leaf_of: Vec<Vec<u32>>,
    fit: Vec<f64>,
}

/// A sum of trees with per-unit leaf assignments and incrementally
/// maintained fits. With a basis `b`, tree `j` contributes `b_i mu_j(x_i)`.
pub struct Ensemble {
    columns: Vec<Vec<f64>>,
    space: SplitSpace,
    prior: TreePrior,
    leaf_scale: f64,
    basis: Option<Vec<f64>>,
    trees: Vec<BartTree>,
    leaf_of: Vec<Vec<u32>>,
    fit: Vec<f64>,
    /// Sum of leaf values without the basis (only kept with a basis).
    raw_fit: Option<Vec<f64>>,
    test: Option<TestSet>,
    counts: MoveCounts,
    resid: Vec<f64>,
    moved: Vec<(u32, u32)>,
}

impl Ensemble {
    pub fn new(
        columns: Vec<Vec<f64>>,
        num_trees: usize,
        prior: TreePrior,
        leaf_scale: f64,
        basis: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if num_trees == 0 || n == 0 {
            return Err(Error::InvalidArgument("ensemble needs trees and units".into()));
        }
        if columns.iter().any(|c| c.len() != n) || basis.as_ref().is_some_and(|b| b.len() != n) {
            return Err(Error::InvalidArgument("feature length mismatch".into()));
        }
        if !(leaf_scale > 0.0 && leaf_scale.is_finite()) {
            return Err(Error::InvalidArgument("leaf scale must be positive".into()));
        }
        let space = SplitSpace::from_columns(&columns);
        let raw_fit = basis.as_ref().map(|_| vec![0.0; n]);
        Ok(Self {
            space,
            prior,
            leaf_scale,
            trees: vec![BartTree::stump(); num_trees],
            leaf_of: vec![vec![0; n]; num_trees],
            fit: vec![0.0; n],
            raw_fit,
            basis,
            test: None,
            counts: MoveCounts::default(),
            resid: vec![0.0; n],
            moved: Vec::new(),
            columns,
        })
    }

    /// Track predictions at extra points; must be attached before sampling.
    pub fn with_test_points(mut self, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "test points have {} features, model has {}",
                columns.len(),
                self.columns.len()
            )));
        }
        let nt = columns.first().map_or(0, Vec::len);
        self.test = Some(TestSet {
            leaf_of: vec![vec![0; nt]; self.trees.len()],
            fit: vec![0.0; nt],
            columns,
        });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.fit.len()
    }

    pub fn trees(&self) -> &[BartTree] {
        &self.trees
    }

    pub fn fit(&self) -> &[f64] {
        &self.fit
    }

    /// Sum of leaf values at each training unit ignoring the basis.
    pub fn raw_fit(&self) -> &[f64] {
        self.raw_fit.as_deref().unwrap_or(&self.fit)
    }

    pub fn test_fit(&self) -> Option<&[f64]> {
        self.test.as_ref().map(|t| t.fit.as_slice())
    }

    pub fn move_counts(&self) -> MoveCounts {
        self.counts
    }

    pub fn space(&self) -> &SplitSpace {
        &self.space
    }

    fn b(&self, i: usize) -> f64 {
        self.basis.as_ref().map_or(1.0, |b| b[i])
    }

    /// Largest gap between stored fits and fits recomputed from the trees.
    pub fn consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let p = self.columns.len();
        let mut x = vec![0.0; p];
        for i in 0..self.n() {
            for (j, c) in self.columns.iter().enumerate() {
                x[j] = c[i];
            }
            let raw: f64 = self.trees.iter().map(|t| t.predict(&x)).sum();
            worst = worst.max((raw * self.b(i) - self.fit[i]).abs());
            if let Some(rf) = &self.raw_fit {
                worst = worst.max((raw - rf[i]).abs());
            }
            for (t, tree) in self.trees.iter().enumerate() {
                if tree.route(&x) != self.leaf_of[t][i] as usize {
                    return f64::INFINITY;
                }
            }
        }
        if let Some(test) = &self.test {
            for i in 0..test.fit.len() {
                for (j, c) in test.columns.iter().enumerate() {
                    x[j] = c[i];
                }
                let raw: f64 = self.trees.iter().map(|t| t.predict(&x)).sum();
                worst = worst.max((raw - test.fit[i]).abs());
            }
        }
        worst
    }

    /// One backfitting pass over all trees against `target` with noise
    /// scale `sigma`.
    pub fn sweep(&mut self, target: &[f64], sigma: f64, rng: &mut StreamRng) {
        for j in 0..self.trees.len() {
            self.update_tree(j, target, sigma, rng);
        }
    }

    fn update_tree(&mut self, j: usize, target: &[f64], sigma: f64, rng: &mut StreamRng) {
        let n = self.n();
        {
            let tree = &self.trees[j];
            let leaf_of = &self.leaf_of[j];
            for i in 0..n {
                let g = tree.node(leaf_of[i] as usize).value;
                self.resid[i] = target[i] - self.fit[i] + self.basis.as_ref().map_or(g, |b| b[i] * g);
            }
            if let Some(rf) = &mut self.raw_fit {
                for i in 0..n {
                    rf[i] -= tree.node(leaf_of[i] as usize).value;
                }
            }
            if let Some(test) = &mut self.test {
                let tl = &test.leaf_of[j];
                for (f, &l) in test.fit.iter_mut().zip(tl) {
                    *f -= tree.node(l as usize).value;
                }
            }
        }

        self.metropolis_step(j, sigma, rng);

        let tree = &mut self.trees[j];
        let cap = tree.capacity();
        let mut sbb = vec![0.0; cap];
        let mut sbr = vec![0.0; cap];
        let leaf_of = &self.leaf_of[j];
        match &self.basis {
            Some(b) => {
                for i in 0..n {
                    let l = leaf_of[i] as usize;
                    sbb[l] += b[i] * b[i];
                    sbr[l] += b[i] * self.resid[i];
                }
            }
            None => {
                for i in 0..n {
                    let l = leaf_of[i] as usize;
                    sbb[l] += 1.0;
                    sbr[l] += self.resid[i];
                }
            }
        }
        for l in tree.leaves() {
            let v = draw_leaf(sbb[l], sbr[l], sigma, self.leaf_scale, rng);
            tree.set_value(l, v);
        }
        for i in 0..n {
            let g = tree.node(leaf_of[i] as usize).value;
            self.fit[i] = target[i] - self.resid[i] + self.basis.as_ref().map_or(g, |b| b[i] * g);
        }
        if let Some(rf) = &mut self.raw_fit {
            for i in 0..n {
                rf[i] += tree.node(leaf_of[i] as usize).value;
            }
        }
        if let Some(test) = &mut self.test {
            let tl = &test.leaf_of[j];
            for (f, &l) in test.fit.iter_mut().zip(tl) {
                *f += tree.node(l as usize).value;
            }
        }
    }

    fn metropolis_step(&mut self, j: usize, sigma: f64, rng: &mut StreamRng) {
        let Some(prop) = propose_move(&self.trees[j], &self.prior, &self.space, rng) else {
            return;
        };
        let kind = prop.kind.index();
        self.counts.proposed[kind] += 1;
        let old = &self.trees[j];
        let new = &prop.tree;
        let mask = old.subtree_mask(prop.root);
        let mut old_stats = vec![(0.0f64, 0.0f64, 0usize); old.capacity()];
        let mut new_stats = vec![(0.0f64, 0.0f64, 0usize); new.capacity()];
        self.moved.clear();
        let leaf_of = &self.leaf_of[j];
        for i in 0..self.n() {
            let l = leaf_of[i] as usize;
            if !mask[l] {
                continue;
            }
            let cols = &self.columns;
            let nl = new.route_from(prop.root, |v| cols[v][i]);
            let b = self.basis.as_ref().map_or(1.0, |b| b[i]);
            let r = self.resid[i];
            let so = &mut old_stats[l];
            so.0 += b * b;
            so.1 += b * r;
            let sn = &mut new_stats[nl];
            sn.0 += b * b;
            sn.1 += b * r;
            if b != 0.0 {
                sn.2 += 1;
            }
            if nl != l {
                self.moved.push((i as u32, nl as u32));
            }
        }
        let new_leaves = new.subtree_leaves(prop.root);
        if new_leaves.iter().any(|&l| new_stats[l].2 == 0) {
            return;
        }
        let ll = |stats: &[(f64, f64, usize)], leaves: &[usize]| -> f64 {
            leaves
                .iter()
                .map(|&l| leaf_log_evidence(stats[l].0, stats[l].1, sigma, self.leaf_scale))
                .sum()
        };
        let delta_ll = ll(&new_stats, &new_leaves) - ll(&old_stats, &old.subtree_leaves(prop.root));
        let delta_prior = new.log_prior(&self.prior, &self.space) - old.log_prior(&self.prior, &self.space);
        let log_alpha = delta_ll + delta_prior + prop.log_proposal_ratio;
        if log_alpha < 0.0 && rng.random::<f64>().ln() >= log_alpha {
            return;
        }
        self.counts.accepted[kind] += 1;
        let leaf_of = &mut self.leaf_of[j];
        for &(i, nl) in &self.moved {
            leaf_of[i as usize] = nl;
        }
        if let Some(test) = &mut self.test {
            let tl = &mut test.leaf_of[j];
            let cols = &test.columns;
            for (i, l) in tl.iter_mut().enumerate() {
                if mask[*l as usize] {
                    *l = new.route_from(prop.root, |v| cols[v][i]) as u32;
                }
            }
        }
        self.trees[j] = prop.tree;
    }
}

/// How the noise scale is handled by [`BartSampler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSetting {
    Fixed(f64),
    /// `sigma^2 ~ nu * lambda / chi2_nu`, started at `initial`.
    InverseChiSquared { nu: f64, lambda: f64, initial: f64 },
}

/// Single-ensemble backfitting sampler on an already transformed target.
/// For binary targets (`probit_offset` set) the target holds 0/1 outcomes and
/// latent normals with mean `offset + fit` are drawn each iteration.
pub struct BartSampler {
    ensemble: Ensemble,
    outcome: Vec<f64>,
    work: Vec<f64>,
    sigma: f64,
    sigma_setting: SigmaSetting,
    probit_offset: Option<f64>,
    rng: StreamRng,
    iterations: usize,
}

impl BartSampler {
    pub fn new(
        ensemble: Ensemble,
        target: Vec<f64>,
        sigma_setting: SigmaSetting,
        probit_offset: Option<f64>,
        rng: StreamRng,
    ) -> Result<Self> {
        if target.len() != ensemble.n() {
            return Err(Error::InvalidArgument("target length mismatch".into()));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite target".into()));
        }
        let sigma = match (probit_offset, sigma_setting) {
            (Some(_), _) => 1.0,
            (None, SigmaSetting::Fixed(s)) => s,
            (None, SigmaSetting::InverseChiSquared { initial, .. }) => initial,
        };
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        Ok(Self {
            work: target.clone(),
            outcome: target,
            ensemble,
            sigma,
            sigma_setting,
            probit_offset,
            rng,
            iterations: 0,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn step(&mut self) {
        if let Some(offset) = self.probit_offset {
            for i in 0..self.outcome.len() {
                let mean = offset + self.ensemble.fit[i];
                let w = truncated_latent(&mut self.rng, mean, self.outcome[i] == 1.0);
                self.work[i] = w - offset;
            }
        }
        self.ensemble.sweep(&self.work, self.sigma, &mut self.rng);
        if self.probit_offset.is_none() {
            if let SigmaSetting::InverseChiSquared { nu, lambda, .. } = self.sigma_setting {
                let sse: f64 = self
                    .work
                    .iter()
                    .zip(&self.ensemble.fit)
                    .map(|(y, f)| (y - f) * (y - f))
                    .sum();
                self.sigma = draw_sigma(nu, lambda, sse, self.work.len(), &mut self.rng);
            }
        }
        self.iterations += 1;
    }
}

/// Draw `sigma` from its scaled inverse chi-squared full conditional.
pub fn draw_sigma<R: Rng + ?Sized>(nu: f64, lambda: f64, sse: f64, n: usize, rng: &mut R) -> f64 {
    let chi = ChiSquared::new(nu + n as f64).expect("positive degrees of freedom");
    let x: f64 = chi.sample(rng);
    ((nu * lambda + sse) / x).sqrt()
}

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Grow => "grow",
            MoveKind::Prune => "prune",
            MoveKind::Change => "change",
            MoveKind::Swap => "swap",
        }
    }
}
