//! Seeded synthetic corpora standing in for the real image datasets:
//! primary items for copy detection, identities with per-identity images
//! for recognition, evaluation partitions, and the batch samplers.
//!
//! Every item vector is the concatenation of an identity block and a
//! content block. Images of one identity share a centroid in the identity
//! block (plus `sigma_id` noise) and draw fresh content; primary items draw
//! both blocks fresh. The dedicated identity block makes the "same person"
//! ground truth exact.
//!
//! Augmentation replaces the pixel-space transform catalog with vector
//! perturbations: zero-mask a fraction of coordinates, then add Gaussian
//! noise everywhere. Moderate and heavy strengths differ only in the two
//! scales, heavy strictly stronger.

use crate::error::{Error, Result};
use crate::xbm::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Moderate,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Item vector length; the first `id_dim` coordinates carry identity.
    pub input_dim: usize,
    pub id_dim: usize,
    pub n_primary: usize,
    pub n_identities: usize,
    pub n_targets: usize,
    pub images_per_identity: usize,
    /// Within-identity spread of the identity block.
    pub sigma_id: f64,
    /// Scale of the content block.
    pub sigma_content: f64,
    /// Moderate augmentation: noise scale and mask fraction.
    pub nu_moderate: f64,
    pub rho_moderate: f64,
    /// Heavy augmentation: noise scale and mask fraction.
    pub nu_heavy: f64,
    pub rho_heavy: f64,
    /// Target image split.
    pub n_target_train: usize,
    pub n_target_val: usize,
    /// Non-target individual group sizes; must use every non-target identity.
    pub n_nontarget_train: usize,
    pub n_nontarget_val: usize,
    pub n_nontarget_test: usize,
    /// Primary evaluation pools.
    pub n_refs_val: usize,
    pub n_queries_val: usize,
    pub n_refs_test: usize,
    pub n_queries_test: usize,
    /// Fraction of queries that are augmented copies of a reference.
    pub query_match_fraction: f64,
    /// Fresh items available to the collision attacker and the FP study.
    pub n_attacker_pool: usize,
    pub n_benign_pool: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    /// Desk-scale world: 12000 primary items and 61 identities
    /// (1 target + 60 non-target) with 160 images each. The identity block
    /// is narrow (10 of 48 coordinates) and identities spread tightly
    /// around their centroid, so images of one person look nearly unrelated
    /// to a generic matcher while still carrying a learnable signature.
    fn default() -> Self {
        WorldConfig {
            input_dim: 48,
            id_dim: 10,
            n_primary: 12_000,
            n_identities: 61,
            n_targets: 1,
            images_per_identity: 160,
            sigma_id: 0.05,
            sigma_content: 1.5,
            nu_moderate: 0.08,
            rho_moderate: 0.02,
            nu_heavy: 1.05,
            rho_heavy: 0.25,
            n_target_train: 100,
            n_target_val: 20,
            n_nontarget_train: 20,
            n_nontarget_val: 20,
            n_nontarget_test: 20,
            n_refs_val: 800,
            n_queries_val: 1000,
            n_refs_test: 800,
            n_queries_test: 1000,
            query_match_fraction: 0.2,
            n_attacker_pool: 500,
            n_benign_pool: 1000,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn augment_params(&self, strength: Strength) -> (f64, f64) {
        match strength {
            Strength::Moderate => (self.nu_moderate, self.rho_moderate),
            Strength::Heavy => (self.nu_heavy, self.rho_heavy),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.input_dim,
            self.id_dim,
            self.n_primary,
            self.n_identities,
            self.n_targets,
            self.images_per_identity,
            self.n_target_train,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::InvalidConfig("world counts must be positive".into()));
        }
        if self.id_dim >= self.input_dim {
            return Err(Error::InvalidConfig(
                "id_dim must leave room for a content block".into(),
            ));
        }
        if self.n_targets >= self.n_identities {
            return Err(Error::InvalidConfig(
                "need at least one non-target identity".into(),
            ));
        }
        if self.n_target_train + self.n_target_val >= self.images_per_identity {
            return Err(Error::InvalidConfig(format!(
                "N_T_train + N_T_val = {} must be < images_per_identity = {}",
                self.n_target_train + self.n_target_val,
                self.images_per_identity
            )));
        }
        if self.n_target_train >= self.images_per_identity {
            return Err(Error::InvalidConfig(
                "reference split needs images_per_identity > N_T_train".into(),
            ));
        }
        let nontargets = self.n_identities - self.n_targets;
        if self.n_nontarget_train + self.n_nontarget_val + self.n_nontarget_test != nontargets {
            return Err(Error::InvalidConfig(format!(
                "non-target groups {}+{}+{} must use all {} non-target identities",
                self.n_nontarget_train, self.n_nontarget_val, self.n_nontarget_test, nontargets
            )));
        }
        if !(0.0..=1.0).contains(&self.query_match_fraction) {
            return Err(Error::InvalidConfig(
                "query_match_fraction must be in [0, 1]".into(),
            ));
        }
        if self.nu_moderate >= self.nu_heavy || self.rho_moderate >= self.rho_heavy {
            return Err(Error::InvalidConfig(
                "heavy augmentation must be strictly stronger than moderate".into(),
            ));
        }
        Ok(())
    }
}

/// One synthetic image: globally unique id, item vector, training label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: u64,
    pub vector: Vec<f64>,
    pub label: Label,
}

/// An evaluation query with its ground truth: `Some(ref_id)` when the query
/// is an edited copy of that reference, `None` for distractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub item: Item,
    pub true_match: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetIdentity {
    pub target_index: u32,
    pub train: Vec<Item>,
    pub val: Vec<Item>,
    pub test: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonTargetIdentity {
    pub identity_index: u32,
    pub group: Group,
    pub images: Vec<Item>,
    /// The first `n_reference` images form the per-individual reference
    /// database; the rest are that individual's queries.
    pub n_reference: usize,
}

impl NonTargetIdentity {
    pub fn references(&self) -> &[Item] {
        &self.images[..self.n_reference]
    }

    pub fn queries(&self) -> &[Item] {
        &self.images[self.n_reference..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub primary_train: Vec<Item>,
    pub val_refs: Vec<Item>,
    pub val_queries: Vec<QueryItem>,
    pub test_refs: Vec<Item>,
    pub test_queries: Vec<QueryItem>,
    pub attacker_pool: Vec<Item>,
    pub benign_pool: Vec<Item>,
    pub targets: Vec<TargetIdentity>,
    pub nontargets: Vec<NonTargetIdentity>,
}

impl World {
    pub fn nontargets_in(&self, group: Group) -> impl Iterator<Item = &NonTargetIdentity> {
        self.nontargets.iter().filter(move |n| n.group == group)
    }

    /// All images available to the secondary training task: target training
    /// images plus every image of the train-group non-target individuals.
    pub fn secondary_train_nontarget_images(&self) -> Vec<&Item> {
        self.nontargets_in(Group::Train)
            .flat_map(|n| n.images.iter())
            .collect()
    }
}

/// Zero-mask a fraction `rho` of coordinates, then add Gaussian noise of
/// scale `nu` everywhere.
pub fn augment(item: &[f64], nu: f64, rho: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    item.iter()
        .map(|&x| {
            let kept = if rho > 0.0 && rng.gen::<f64>() < rho {
                0.0
            } else {
                x
            };
            if nu > 0.0 {
                let noise: f64 = StandardNormal.sample(rng);
                kept + nu * noise
            } else {
                kept
            }
        })
        .collect()
}

struct ItemFactory {
    next_id: u64,
    next_primary_label: u32,
    next_nontarget_label: u32,
}

impl ItemFactory {
    fn primary_vector(&mut self, cfg: &WorldConfig, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut v = Vec::with_capacity(cfg.input_dim);
        for _ in 0..cfg.id_dim {
            v.push(StandardNormal.sample(rng));
        }
        for _ in cfg.id_dim..cfg.input_dim {
            let n: f64 = StandardNormal.sample(rng);
            v.push(cfg.sigma_content * n);
        }
        v
    }

    fn primary_item(&mut self, cfg: &WorldConfig, rng: &mut ChaCha12Rng) -> Item {
        let vector = self.primary_vector(cfg, rng);
        self.primary_with_vector(vector)
    }

    fn primary_with_vector(&mut self, vector: Vec<f64>) -> Item {
        let id = self.next_id;
        self.next_id += 1;
        let label = Label::PrimaryItem(self.next_primary_label);
        self.next_primary_label += 1;
        Item { id, vector, label }
    }

    fn identity_item(
        &mut self,
        cfg: &WorldConfig,
        centroid: &[f64],
        label: Option<Label>,
        rng: &mut ChaCha12Rng,
    ) -> Item {
        let mut vector = Vec::with_capacity(cfg.input_dim);
        for c in centroid {
            let n: f64 = StandardNormal.sample(rng);
            vector.push(c + cfg.sigma_id * n);
        }
        for _ in cfg.id_dim..cfg.input_dim {
            let n: f64 = StandardNormal.sample(rng);
            vector.push(cfg.sigma_content * n);
        }
        let id = self.next_id;
        self.next_id += 1;
        let label = label.unwrap_or_else(|| {
            let l = Label::NonTargetImage(self.next_nontarget_label);
            self.next_nontarget_label += 1;
            l
        });
        Item { id, vector, label }
    }
}

/// Generate the full world deterministically from the config.
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut factory = ItemFactory {
        next_id: 0,
        next_primary_label: 0,
        next_nontarget_label: 0,
    };

    let primary_train: Vec<Item> = (0..config.n_primary)
        .map(|_| factory.primary_item(config, &mut rng))
        .collect();

    let eval_pool = |n_refs: usize, n_queries: usize,
                         factory: &mut ItemFactory,
                         rng: &mut ChaCha12Rng|
     -> (Vec<Item>, Vec<QueryItem>) {
        let refs: Vec<Item> = (0..n_refs).map(|_| factory.primary_item(config, rng)).collect();
        let n_match = ((n_queries as f64) * config.query_match_fraction).round() as usize;
        let n_match = n_match.min(n_refs).min(n_queries);
        // distinct references for the matched queries
        let mut ref_order: Vec<usize> = (0..n_refs).collect();
        for i in 0..n_match {
            let j = rng.gen_range(i..n_refs);
            ref_order.swap(i, j);
        }
        let mut queries = Vec::with_capacity(n_queries);
        for q in 0..n_queries {
            if q < n_match {
                let source = &refs[ref_order[q]];
                let strength = if q % 2 == 0 { Strength::Moderate } else { Strength::Heavy };
                let (nu, rho) = config.augment_params(strength);
                let vector = augment(&source.vector, nu, rho, rng);
                let item = factory.primary_with_vector(vector);
                queries.push(QueryItem {
                    item,
                    true_match: Some(source.id),
                });
            } else {
                queries.push(QueryItem {
                    item: factory.primary_item(config, rng),
                    true_match: None,
                });
            }
        }
        (refs, queries)
    };

    let (val_refs, val_queries) =
        eval_pool(config.n_refs_val, config.n_queries_val, &mut factory, &mut rng);
    let (test_refs, test_queries) =
        eval_pool(config.n_refs_test, config.n_queries_test, &mut factory, &mut rng);

    let attacker_pool: Vec<Item> = (0..config.n_attacker_pool)
        .map(|_| factory.primary_item(config, &mut rng))
        .collect();
    let benign_pool: Vec<Item> = (0..config.n_benign_pool)
        .map(|_| factory.primary_item(config, &mut rng))
        .collect();

    let mut targets = Vec::with_capacity(config.n_targets);
    let mut nontargets = Vec::new();
    for identity in 0..config.n_identities as u32 {
        // isotropic direction at fixed radius sqrt(id_dim): every identity
        // carries an equally strong signature, so recognition difficulty
        // does not swing with the centroid draw
        let mut centroid: Vec<f64> = (0..config.id_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let radius = (config.id_dim as f64).sqrt();
            centroid.iter_mut().for_each(|v| *v *= radius / norm);
        }
        if (identity as usize) < config.n_targets {
            let label = Label::Target(identity);
            let images: Vec<Item> = (0..config.images_per_identity)
                .map(|_| factory.identity_item(config, &centroid, Some(label), &mut rng))
                .collect();
            let mut images = images.into_iter();
            let train: Vec<Item> = images.by_ref().take(config.n_target_train).collect();
            let val: Vec<Item> = images.by_ref().take(config.n_target_val).collect();
            let test: Vec<Item> = images.collect();
            targets.push(TargetIdentity {
                target_index: identity,
                train,
                val,
                test,
            });
        } else {
            let images: Vec<Item> = (0..config.images_per_identity)
                .map(|_| factory.identity_item(config, &centroid, None, &mut rng))
                .collect();
            let nontarget_rank = identity as usize - config.n_targets;
            let group = if nontarget_rank < config.n_nontarget_train {
                Group::Train
            } else if nontarget_rank < config.n_nontarget_train + config.n_nontarget_val {
                Group::Val
            } else {
                Group::Test
            };
            nontargets.push(NonTargetIdentity {
                identity_index: identity,
                group,
                images,
                n_reference: config.n_target_train,
            });
        }
    }

    Ok(World {
        config: config.clone(),
        primary_train,
        val_refs,
        val_queries,
        test_refs,
        test_queries,
        attacker_pool,
        benign_pool,
        targets,
        nontargets,
    })
}

/// Without-replacement pass over the primary training pool; each epoch
/// shuffles once and hands out consecutive batches until exhausted.
#[derive(Debug)]
pub struct PrimaryBatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl PrimaryBatchSampler {
    pub fn new(n_items: usize, batch: usize, rng: &mut ChaCha12Rng) -> Self {
        assert!(batch > 0, "batch size must be positive");
        let mut order: Vec<usize> = (0..n_items).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        PrimaryBatchSampler {
            order,
            pos: 0,
            batch,
        }
    }

    /// Next batch of item indices, or `None` at the end of the epoch. The
    /// final batch may be short.
    pub fn next_batch(&mut self) -> Option<&[usize]> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let slice = &self.order[self.pos..end];
        self.pos = end;
        Some(slice)
    }
}

/// One slot drawn for the secondary batch: either an image of target `k`
/// (index into that target's training images) or a non-target image
/// (index into the flattened train-group image list).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondaryDraw {
    Target { target: usize, image: usize },
    NonTarget { image: usize },
}

/// Slot sampler for the secondary task: each slot picks target `k` with
/// probability `p_t` (any of `n_targets` targets) and the non-target pool
/// otherwise. Pools are without replacement and re-initialize when empty.
#[derive(Debug)]
pub struct SecondarySampler {
    target_sizes: Vec<usize>,
    nontarget_size: usize,
    target_pools: Vec<Vec<usize>>,
    nontarget_pool: Vec<usize>,
    p_t: f64,
}

impl SecondarySampler {
    pub fn new(target_sizes: Vec<usize>, nontarget_size: usize, p_t: f64) -> Result<Self> {
        let k = target_sizes.len() as f64;
        if !(0.0..=1.0).contains(&p_t) || k * p_t > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "p_T = {p_t} with {k} targets must satisfy 0 <= K*p_T <= 1"
            )));
        }
        if target_sizes.iter().any(|&s| s == 0) || nontarget_size == 0 {
            return Err(Error::InvalidConfig(
                "secondary pools must be nonempty".into(),
            ));
        }
        let mut sampler = SecondarySampler {
            target_pools: Vec::new(),
            nontarget_pool: Vec::new(),
            target_sizes,
            nontarget_size,
            p_t,
        };
        sampler.reset();
        Ok(sampler)
    }

    /// Refill every pool; called at the start of each epoch.
    pub fn reset(&mut self) {
        self.target_pools = self
            .target_sizes
            .iter()
            .map(|&s| (0..s).collect())
            .collect();
        self.nontarget_pool = (0..self.nontarget_size).collect();
    }

    pub fn draw(&mut self, rng: &mut ChaCha12Rng) -> SecondaryDraw {
        let k = self.target_pools.len();
        let u: f64 = rng.gen();
        if k > 0 && self.p_t > 0.0 && u < k as f64 * self.p_t {
            let target = ((u / self.p_t) as usize).min(k - 1);
            if self.target_pools[target].is_empty() {
                self.target_pools[target] = (0..self.target_sizes[target]).collect();
            }
            let pool = &mut self.target_pools[target];
            let j = rng.gen_range(0..pool.len());
            let image = pool.swap_remove(j);
            SecondaryDraw::Target { target, image }
        } else {
            if self.nontarget_pool.is_empty() {
                self.nontarget_pool = (0..self.nontarget_size).collect();
            }
            let j = rng.gen_range(0..self.nontarget_pool.len());
            let image = self.nontarget_pool.swap_remove(j);
            SecondaryDraw::NonTarget { image }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_config() -> WorldConfig {
        WorldConfig {
            input_dim: 12,
            id_dim: 4,
            n_primary: 30,
            n_identities: 7,
            n_targets: 1,
            images_per_identity: 20,
            n_target_train: 10,
            n_target_val: 4,
            n_nontarget_train: 2,
            n_nontarget_val: 2,
            n_nontarget_test: 2,
            n_refs_val: 20,
            n_queries_val: 10,
            n_refs_test: 20,
            n_queries_test: 10,
            n_attacker_pool: 5,
            n_benign_pool: 8,
            seed: 42,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_worlds() {
        let cfg = small_config();
        let a = generate_world(&cfg).unwrap();
        let b = generate_world(&cfg).unwrap();
        assert_eq!(a, b);
        let mut cfg2 = cfg;
        cfg2.seed = 43;
        assert_ne!(generate_world(&cfg2).unwrap(), a);
    }

    #[test]
    fn zero_sigma_id_shares_identity_block() {
        let mut cfg = small_config();
        cfg.sigma_id = 0.0;
        let world = generate_world(&cfg).unwrap();
        let target = &world.targets[0];
        let first = &target.train[0].vector[..cfg.id_dim];
        for img in target.train.iter().chain(&target.val).chain(&target.test) {
            assert_eq!(&img.vector[..cfg.id_dim], first);
        }
    }

    #[test]
    fn ids_are_globally_unique_and_partitions_disjoint() {
        let world = generate_world(&small_config()).unwrap();
        let mut seen = HashSet::new();
        let mut check = |items: &[Item]| {
            for item in items {
                assert!(seen.insert(item.id), "duplicate id {}", item.id);
            }
        };
        check(&world.primary_train);
        check(&world.val_refs);
        check(&world.test_refs);
        check(&world.attacker_pool);
        check(&world.benign_pool);
        let val_q: Vec<Item> = world.val_queries.iter().map(|q| q.item.clone()).collect();
        let test_q: Vec<Item> = world.test_queries.iter().map(|q| q.item.clone()).collect();
        check(&val_q);
        check(&test_q);
        for t in &world.targets {
            check(&t.train);
            check(&t.val);
            check(&t.test);
        }
        for n in &world.nontargets {
            check(&n.images);
        }
    }

    #[test]
    fn labels_follow_the_namespacing_rule() {
        let world = generate_world(&small_config()).unwrap();
        // one shared label across all of a target's images
        for t in &world.targets {
            for img in t.train.iter().chain(&t.val).chain(&t.test) {
                assert_eq!(img.label, Label::Target(t.target_index));
            }
        }
        // every non-target image label is unique
        let mut seen = HashSet::new();
        for n in &world.nontargets {
            for img in &n.images {
                assert!(matches!(img.label, Label::NonTargetImage(_)));
                assert!(seen.insert(img.label), "duplicate label {:?}", img.label);
            }
        }
        // primary labels unique too
        let mut seen = HashSet::new();
        for item in &world.primary_train {
            assert!(seen.insert(item.label));
        }
    }

    #[test]
    fn group_sizes_match_config() {
        let world = generate_world(&small_config()).unwrap();
        assert_eq!(world.nontargets_in(Group::Train).count(), 2);
        assert_eq!(world.nontargets_in(Group::Val).count(), 2);
        assert_eq!(world.nontargets_in(Group::Test).count(), 2);
        let t = &world.targets[0];
        assert_eq!(t.train.len(), 10);
        assert_eq!(t.val.len(), 4);
        assert_eq!(t.test.len(), 6);
        let matched = world.val_queries.iter().filter(|q| q.true_match.is_some()).count();
        assert_eq!(matched, 2); // 20% of 10
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let mut cfg = small_config();
        cfg.n_nontarget_test = 5;
        assert!(generate_world(&cfg).is_err());
        let mut cfg = small_config();
        cfg.n_target_train = 18;
        assert!(generate_world(&cfg).is_err());
        let mut cfg = small_config();
        cfg.nu_heavy = cfg.nu_moderate;
        assert!(generate_world(&cfg).is_err());
    }

    #[test]
    fn augment_identity_when_disabled() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(augment(&x, 0.0, 0.0, &mut rng), x);
    }

    #[test]
    fn augment_full_mask_is_noise_only() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = vec![5.0, -5.0, 5.0, -5.0];
        let y = augment(&x, 0.1, 1.0, &mut rng);
        // masked to zero before noise, so magnitudes are noise-sized
        for v in y {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn augment_second_moment_matches_formula() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let d = 32usize;
        let x: Vec<f64> = (0..d).map(|i| ((i as f64) * 0.37).sin()).collect();
        let (nu, rho) = (0.2, 0.15);
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let expected = d as f64 * nu * nu + rho * norm_sq;
        let n_draws = 10_000;
        let mut mean = 0.0;
        for _ in 0..n_draws {
            let y = augment(&x, nu, rho, &mut rng);
            let diff: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            mean += diff / n_draws as f64;
        }
        assert!(
            (mean - expected).abs() < 0.05 * expected,
            "sample {mean} vs analytic {expected}"
        );
    }

    #[test]
    fn primary_sampler_draws_disjoint_batches() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut sampler = PrimaryBatchSampler::new(4, 2, &mut rng);
        let a: Vec<usize> = sampler.next_batch().unwrap().to_vec();
        let b: Vec<usize> = sampler.next_batch().unwrap().to_vec();
        assert!(sampler.next_batch().is_none());
        let all: HashSet<usize> = a.iter().chain(&b).copied().collect();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn primary_sampler_final_batch_may_be_short() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut sampler = PrimaryBatchSampler::new(5, 2, &mut rng);
        let mut sizes = Vec::new();
        while let Some(batch) = sampler.next_batch() {
            sizes.push(batch.len());
        }
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn secondary_sampler_extremes() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut all_target = SecondarySampler::new(vec![5], 10, 1.0).unwrap();
        for _ in 0..20 {
            assert!(matches!(
                all_target.draw(&mut rng),
                SecondaryDraw::Target { .. }
            ));
        }
        let mut none_target = SecondarySampler::new(vec![5], 10, 0.0).unwrap();
        for _ in 0..20 {
            assert!(matches!(
                none_target.draw(&mut rng),
                SecondaryDraw::NonTarget { .. }
            ));
        }
    }

    #[test]
    fn secondary_sampler_expectation() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut sampler = SecondarySampler::new(vec![40], 200, 0.025).unwrap();
        let (batches, b) = (10_000, 12);
        let mut target_slots = 0usize;
        for _ in 0..batches {
            for _ in 0..b {
                if matches!(sampler.draw(&mut rng), SecondaryDraw::Target { .. }) {
                    target_slots += 1;
                }
            }
        }
        let mean_per_batch = target_slots as f64 / batches as f64;
        assert!(
            (mean_per_batch - 0.3).abs() < 0.05 * 0.3 + 0.02,
            "mean target slots per batch {mean_per_batch}"
        );
    }

    #[test]
    fn secondary_sampler_without_replacement_until_refill() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut sampler = SecondarySampler::new(vec![6], 10, 1.0).unwrap();
        let mut seen = HashSet::new();
        for _ in 0..6 {
            match sampler.draw(&mut rng) {
                SecondaryDraw::Target { image, .. } => assert!(seen.insert(image)),
                _ => unreachable!(),
            }
        }
        // pool exhausted; the next draw refills
        assert!(matches!(
            sampler.draw(&mut rng),
            SecondaryDraw::Target { .. }
        ));
    }

    #[test]
    fn multi_target_probability_split() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut sampler = SecondarySampler::new(vec![10, 10, 10], 50, 0.1).unwrap();
        let mut counts = [0usize; 4];
        let n = 30_000;
        for _ in 0..n {
            match sampler.draw(&mut rng) {
                SecondaryDraw::Target { target, .. } => counts[target] += 1,
                SecondaryDraw::NonTarget { .. } => counts[3] += 1,
            }
        }
        for k in 0..3 {
            let p = counts[k] as f64 / n as f64;
            assert!((p - 0.1).abs() < 0.01, "target {k} rate {p}");
        }
        assert!((counts[3] as f64 / n as f64 - 0.7).abs() < 0.02);
        assert!(SecondarySampler::new(vec![10; 11], 50, 0.1).is_err());
    }
}
