//! Client-side-scanning simulation: the hash database, threshold matching,
//! k-means template reduction, collision forging against a template hash,
//! false-positive studies, and activation diagnostics.
//!
//! Databases hold either continuous hashes (compared with Euclidean
//! distance) or binary LSH hashes (compared with Hamming distance, taken as
//! a real-valued distance so thresholds calibrate the same way).

use crate::error::{Error, Result};
use crate::hash::{euclidean, hamming, lsh_binarize, BinaryHash, Embedding, LshProjector};
use crate::model::{backward, embed_eval, forward_batch, penultimate_eval, Mode, ModelParams};
use crate::synth::Item;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HashValue {
    Continuous(Vec<f64>),
    Binary(BinaryHash),
}

impl HashValue {
    /// Hex for binary hashes, decimal text for continuous ones.
    pub fn export_text(&self) -> String {
        match self {
            HashValue::Binary(b) => b.to_hex(),
            HashValue::Continuous(v) => v
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceTag {
    Reference,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbEntry {
    pub hash: HashValue,
    pub tag: SourceTag,
    /// Item id for reference entries; templates get synthetic ids.
    pub source_id: u64,
}

/// Distance between two hashes of the same kind.
pub fn hash_distance(a: &HashValue, b: &HashValue) -> Result<f64> {
    match (a, b) {
        (HashValue::Continuous(x), HashValue::Continuous(y)) => euclidean(x, y),
        (HashValue::Binary(x), HashValue::Binary(y)) => Ok(hamming(x, y)? as f64),
        _ => Err(Error::InvalidConfig(
            "cannot mix continuous and binary hashes".into(),
        )),
    }
}

/// Immutable-after-build list of hashes with source tags; all entries hold
/// the same hash kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashDatabase {
    entries: Vec<DbEntry>,
    binary: bool,
}

impl HashDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn entries(&self) -> &[DbEntry] {
        &self.entries
    }

    /// Database with extra template entries appended.
    pub fn with_templates(&self, hasher: &Hasher, templates: &TemplateSet) -> Result<HashDatabase> {
        let mut db = self.clone();
        for (i, centroid) in templates.centroids.iter().enumerate() {
            let hash = hasher.hash_embedding(centroid)?;
            if matches!(hash, HashValue::Binary(_)) != db.binary {
                return Err(Error::InvalidConfig(
                    "template hash kind differs from database kind".into(),
                ));
            }
            db.entries.push(DbEntry {
                hash,
                tag: SourceTag::Template,
                source_id: u64::MAX - i as u64,
            });
        }
        Ok(db)
    }
}

/// Model plus optional LSH stage; owns nothing, borrowed per use.
#[derive(Clone, Copy)]
pub struct Hasher<'a> {
    pub model: &'a ModelParams,
    pub projector: Option<&'a LshProjector>,
}

impl<'a> Hasher<'a> {
    pub fn continuous(model: &'a ModelParams) -> Self {
        Hasher {
            model,
            projector: None,
        }
    }

    pub fn with_lsh(model: &'a ModelParams, projector: &'a LshProjector) -> Self {
        Hasher {
            model,
            projector: Some(projector),
        }
    }

    /// Hash an input item: eval-mode embedding, then LSH when configured.
    pub fn hash_item(&self, x: &[f64]) -> Result<HashValue> {
        let e = embed_eval(self.model, x)?;
        self.hash_embedding(&e)
    }

    /// Hash a value already in embedding space (e.g. a template centroid).
    pub fn hash_embedding(&self, e: &[f64]) -> Result<HashValue> {
        match self.projector {
            Some(p) => Ok(HashValue::Binary(lsh_binarize(p, e)?)),
            None => Ok(HashValue::Continuous(e.to_vec())),
        }
    }
}

/// Hash every item into a reference database.
pub fn build_database(hasher: &Hasher, items: &[&Item]) -> Result<HashDatabase> {
    let entries: Vec<DbEntry> = items
        .iter()
        .map(|item| {
            Ok(DbEntry {
                hash: hasher.hash_item(&item.vector)?,
                tag: SourceTag::Reference,
                source_id: item.id,
            })
        })
        .collect::<Result<_>>()?;
    Ok(HashDatabase {
        entries,
        binary: hasher.projector.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub flagged: bool,
    /// (entry index, distance) sorted by ascending distance.
    pub matches: Vec<(usize, f64)>,
}

/// Match a query against the database: flagged iff some entry is strictly
/// closer than the threshold. An empty database never flags.
pub fn scan(hasher: &Hasher, query: &[f64], db: &HashDatabase, threshold: f64) -> Result<ScanResult> {
    let q = hasher.hash_item(query)?;
    let mut matches: Vec<(usize, f64)> = db
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| Ok((i, hash_distance(&q, &e.hash)?)))
        .collect::<Result<_>>()?;
    matches.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
    let flagged = matches.first().is_some_and(|(_, d)| *d < threshold);
    matches.retain(|(_, d)| *d < threshold);
    Ok(ScanResult { flagged, matches })
}

/// k-means centroids of the target's training hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster embeddings with k-means (k-means++ seeding, Euclidean objective,
/// at most 100 Lloyd iterations, deterministic per seed). k = 1 yields the
/// plain arithmetic mean. Centroids are not renormalized unless asked:
/// the single-template case is an average of unit vectors and renormalizing
/// would change every distance.
pub fn reduce_templates(
    points: &[Embedding],
    k: usize,
    seed: u64,
    renormalize: bool,
) -> Result<TemplateSet> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let dim = points[0].len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].to_vec());
    let mut nearest_sq: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest_sq.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            // all points coincide with a centroid; any choice is equivalent
            rng.gen_range(0..n)
        };
        centroids.push(points[next].to_vec());
        for (d, p) in nearest_sq.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, centroids.last().unwrap()));
        }
    }

    // Lloyd iterations
    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    squared_distance(p, &centroids[a])
                        .partial_cmp(&squared_distance(p, &centroids[b]))
                        .unwrap()
                })
                .unwrap();
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                // an empty cluster keeps its previous centroid
                *c = sum.iter().map(|s| s / *count as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }

    if renormalize {
        for c in &mut centroids {
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                c.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    Ok(TemplateSet {
        k,
        centroids,
        inertia,
    })
}

#[derive(Debug, Clone)]
pub struct ForgeResult {
    pub forged: Vec<f64>,
    pub hash_distance: f64,
    pub perturbation_ratio: f64,
    /// Loss recorded at every iteration; the reported iterate attains the
    /// minimum of this sequence.
    pub losses: Vec<f64>,
}

/// Gradient-descent collision against a template hash:
/// minimize |H(x + d) - h_t|^2 + lambda_vis * |d|^2 / |x|^2 over d.
///
/// Plain fixed-step descent from d = 0; returns the best iterate seen.
pub fn forge_collision(
    model: &ModelParams,
    cover: &[f64],
    template: &[f64],
    iterations: usize,
    lambda_vis: f64,
    step_size: f64,
) -> Result<ForgeResult> {
    let mut eval_model = model.clone();
    eval_model.set_mode(Mode::Eval);
    let cover_norm_sq: f64 = cover.iter().map(|v| v * v).sum();
    if cover_norm_sq == 0.0 {
        return Err(Error::ZeroNorm("cover item is the zero vector"));
    }

    let mut delta = vec![0.0; cover.len()];
    let mut best_delta = delta.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_hash_dist = f64::INFINITY;
    let mut losses = Vec::with_capacity(iterations + 1);

    for iteration in 0..=iterations {
        let x: Vec<f64> = cover.iter().zip(&delta).map(|(c, d)| c + d).collect();
        let (embeddings, cache) = forward_batch(&mut eval_model, std::slice::from_ref(&x))?;
        let e = &embeddings[0];
        let residual: Vec<f64> = e.iter().zip(template).map(|(a, b)| a - b).collect();
        let hash_dist_sq: f64 = residual.iter().map(|r| r * r).sum();
        let reg: f64 = delta.iter().map(|d| d * d).sum::<f64>() / cover_norm_sq;
        let loss = hash_dist_sq + lambda_vis * reg;
        if !loss.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "collision loss diverged at iteration {iteration}; reduce the step size"
            )));
        }
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_delta = delta.clone();
            best_hash_dist = hash_dist_sq.sqrt();
        }
        if iteration == iterations {
            break;
        }
        let grad_out = vec![residual.iter().map(|r| 2.0 * r).collect::<Vec<f64>>()];
        let (_, input_grads) = backward(&eval_model, &cache, &grad_out)?;
        for ((d, g), _) in delta.iter_mut().zip(&input_grads[0]).zip(cover) {
            let total = g + 2.0 * lambda_vis * *d / cover_norm_sq;
            *d -= step_size * total;
        }
    }

    let forged: Vec<f64> = cover.iter().zip(&best_delta).map(|(c, d)| c + d).collect();
    let ratio = best_delta.iter().map(|d| d * d).sum::<f64>().sqrt() / cover_norm_sq.sqrt();
    Ok(ForgeResult {
        forged,
        hash_distance: best_hash_dist,
        perturbation_ratio: ratio,
        losses,
    })
}

/// The attacker's pool pre-step: the item whose hash is closest to the
/// template hash.
pub fn select_cover<'a>(
    model: &ModelParams,
    pool: &'a [Item],
    template: &[f64],
) -> Result<&'a Item> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("cover pool is empty"));
    }
    let mut best = (f64::INFINITY, 0usize);
    for (i, item) in pool.iter().enumerate() {
        let e = embed_eval(model, &item.vector)?;
        let d = euclidean(&e, template)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(&pool[best.1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpStudy {
    pub fp_per_million: f64,
    pub flagged_ids: Vec<u64>,
}

/// Rate of benign queries flagged against the database, per million.
/// The corpus must be disjoint from the database sources.
pub fn fp_study(
    hasher: &Hasher,
    corpus: &[&Item],
    db: &HashDatabase,
    threshold: f64,
) -> Result<FpStudy> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("false-positive corpus is empty"));
    }
    let mut flagged_ids = Vec::new();
    for item in corpus {
        if scan(hasher, &item.vector, db, threshold)?.flagged {
            flagged_ids.push(item.id);
        }
    }
    let fp_per_million = flagged_ids.len() as f64 / corpus.len() as f64 * 1e6;
    Ok(FpStudy {
        fp_per_million,
        flagged_ids,
    })
}

/// Mean activation of the layer feeding the output affine, per unit.
/// Exported heatmaps clip these at 5; the returned values are unclipped.
pub fn activation_stats(model: &ModelParams, items: &[&Item]) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("activation stats need items"));
    }
    let mut mean: Option<Vec<f64>> = None;
    for item in items {
        let acts = penultimate_eval(model, &item.vector)?;
        match &mut mean {
            None => mean = Some(acts),
            Some(m) => {
                for (a, b) in m.iter_mut().zip(&acts) {
                    *a += b;
                }
            }
        }
    }
    let mut mean = mean.unwrap();
    let n = items.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::xbm::Label;

    fn test_model(dim: usize, embed: usize) -> ModelParams {
        init_params(&ModelConfig::new(dim, vec![8], embed), 77).unwrap()
    }

    fn item(id: u64, v: &[f64]) -> Item {
        Item {
            id,
            vector: v.to_vec(),
            label: Label::PrimaryItem(id as u32),
        }
    }

    #[test]
    fn empty_database_never_flags() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let db = build_database(&hasher, &[]).unwrap();
        assert!(db.is_empty());
        let r = scan(&hasher, &[0.1, 0.2, 0.3, 0.4], &db, 10.0).unwrap();
        assert!(!r.flagged && r.matches.is_empty());
    }

    #[test]
    fn rebuild_is_identical() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let items = [item(1, &[1.0, 0.0, 0.5, -0.5]), item(2, &[0.0, 2.0, -1.0, 0.3])];
        let refs: Vec<&Item> = items.iter().collect();
        let a = build_database(&hasher, &refs).unwrap();
        let b = build_database(&hasher, &refs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn union_database_has_combined_size() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let r: Vec<Item> = (0..5).map(|i| item(i, &[i as f64, 0.0, 1.0, -1.0])).collect();
        let r2: Vec<Item> = (5..8).map(|i| item(i, &[0.0, i as f64, -1.0, 1.0])).collect();
        let all: Vec<&Item> = r.iter().chain(r2.iter()).collect();
        let db = build_database(&hasher, &all).unwrap();
        assert_eq!(db.len(), 8);
    }

    #[test]
    fn scan_flags_exact_copy_at_any_positive_threshold() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let it = item(1, &[1.0, -0.4, 0.2, 0.9]);
        let db = build_database(&hasher, &[&it]).unwrap();
        let r = scan(&hasher, &it.vector, &db, 1e-9).unwrap();
        assert!(r.flagged);
        // strict inequality: threshold zero flags nothing
        let r = scan(&hasher, &it.vector, &db, 0.0).unwrap();
        assert!(!r.flagged);
    }

    #[test]
    fn scan_respects_threshold() {
        // craft a database entry at a known embedding distance
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let a = item(1, &[1.0, 0.0, 0.0, 0.0]);
        let b = item(2, &[0.0, 1.0, 0.0, 0.0]);
        let db = build_database(&hasher, &[&a]).unwrap();
        let ea = embed_eval(&model, &a.vector).unwrap();
        let eb = embed_eval(&model, &b.vector).unwrap();
        let d = euclidean(&ea, &eb).unwrap();
        let r = scan(&hasher, &b.vector, &db, d * 0.8).unwrap();
        assert!(!r.flagged);
        let r = scan(&hasher, &b.vector, &db, d * 1.2).unwrap();
        assert!(r.flagged);
    }

    #[test]
    fn scan_decision_invariant_under_database_permutation() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let items: Vec<Item> = (0..6)
            .map(|i| item(i, &[i as f64 * 0.3, 1.0 - i as f64 * 0.1, 0.5, -0.2]))
            .collect();
        let fwd: Vec<&Item> = items.iter().collect();
        let rev: Vec<&Item> = items.iter().rev().collect();
        let db_f = build_database(&hasher, &fwd).unwrap();
        let db_r = build_database(&hasher, &rev).unwrap();
        let q = [0.7, 0.7, 0.4, -0.1];
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(
                scan(&hasher, &q, &db_f, t).unwrap().flagged,
                scan(&hasher, &q, &db_r, t).unwrap().flagged
            );
        }
    }

    #[test]
    fn kmeans_k1_is_the_mean() {
        let points = vec![Embedding(vec![1.0, 0.0]), Embedding(vec![0.0, 1.0])];
        let t = reduce_templates(&points, 1, 0, false).unwrap();
        assert_eq!(t.centroids, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn kmeans_k_equals_n_returns_the_points() {
        let points = vec![
            Embedding(vec![1.0, 0.0]),
            Embedding(vec![0.0, 1.0]),
            Embedding(vec![-1.0, 0.0]),
        ];
        let t = reduce_templates(&points, 3, 5, false).unwrap();
        assert!((t.inertia - 0.0).abs() < 1e-12);
        let mut got = t.centroids.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn kmeans_inertia_nonincreasing_in_k() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let points: Vec<Embedding> = (0..60)
            .map(|_| {
                Embedding((0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            })
            .collect();
        let mut last = f64::INFINITY;
        for k in [1, 2, 4, 8, 16, 32, 60] {
            let t = reduce_templates(&points, k, 13, false).unwrap();
            assert!(
                t.inertia <= last + 1e-9,
                "inertia rose from {last} to {} at k={k}",
                t.inertia
            );
            last = t.inertia;
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let points = vec![Embedding(vec![1.0]), Embedding(vec![2.0])];
        assert!(reduce_templates(&points, 0, 0, false).is_err());
        assert!(reduce_templates(&points, 3, 0, false).is_err());
    }

    #[test]
    fn kmeans_is_deterministic_per_seed() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let points: Vec<Embedding> = (0..30)
            .map(|_| Embedding((0..3).map(|_| rng.gen::<f64>()).collect()))
            .collect();
        let a = reduce_templates(&points, 4, 21, false).unwrap();
        let b = reduce_templates(&points, 4, 21, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forge_with_matching_template_keeps_cover() {
        let model = test_model(6, 4);
        let cover = vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.2];
        let template = embed_eval(&model, &cover).unwrap().to_vec();
        let r = forge_collision(&model, &cover, &template, 50, 1.0, 0.05).unwrap();
        assert_eq!(r.perturbation_ratio, 0.0);
        assert!(r.hash_distance < 1e-12);
        assert_eq!(r.forged, cover);
    }

    #[test]
    fn forge_with_dominant_visual_penalty_stays_put() {
        // step must stay below |x|^2 / lambda for the penalty term to be
        // stable; with that, a large lambda pins delta near zero
        let model = test_model(6, 4);
        let cover = vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.2];
        let template = vec![1.0, 0.0, 0.0, 0.0];
        let strong = forge_collision(&model, &cover, &template, 200, 1e4, 1e-5).unwrap();
        let weak = forge_collision(&model, &cover, &template, 200, 1.0, 1e-5).unwrap();
        assert!(strong.perturbation_ratio < 1e-3);
        assert!(strong.perturbation_ratio < weak.perturbation_ratio);
    }

    #[test]
    fn forge_reports_the_best_recorded_loss() {
        let model = test_model(6, 4);
        let cover = vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.2];
        let template = vec![0.0, 1.0, 0.0, 0.0];
        let r = forge_collision(&model, &cover, &template, 300, 1.0, 0.05).unwrap();
        let min = r.losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let forged_e = embed_eval(&model, &r.forged).unwrap();
        let resid: f64 = forged_e
            .iter()
            .zip(&template)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let cover_sq: f64 = cover.iter().map(|v| v * v).sum();
        let delta_sq: f64 = r
            .forged
            .iter()
            .zip(&cover)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let loss_at_best = resid + delta_sq / cover_sq;
        assert!((loss_at_best - min).abs() < 1e-9);
    }

    #[test]
    fn fp_study_extremes() {
        let model = test_model(4, 3);
        let hasher = Hasher::continuous(&model);
        let items: Vec<Item> = (0..4)
            .map(|i| item(i, &[i as f64, 1.0, -0.5, 0.25]))
            .collect();
        let refs: Vec<&Item> = items.iter().collect();
        let db = build_database(&hasher, &refs).unwrap();
        // corpus identical to references: everything flags
        let r = fp_study(&hasher, &refs, &db, 0.1).unwrap();
        assert_eq!(r.fp_per_million, 1e6);
        // threshold zero: nothing flags
        let r = fp_study(&hasher, &refs, &db, 0.0).unwrap();
        assert_eq!(r.fp_per_million, 0.0);
        assert!(fp_study(&hasher, &[], &db, 0.1).is_err());
    }

    #[test]
    fn activation_stats_single_and_duplicated() {
        let model = test_model(4, 3);
        let a = item(1, &[0.4, -0.2, 0.8, 0.0]);
        let single = activation_stats(&model, &[&a]).unwrap();
        let direct = penultimate_eval(&model, &a.vector).unwrap();
        assert_eq!(single, direct);
        let doubled = activation_stats(&model, &[&a, &a]).unwrap();
        for (x, y) in doubled.iter().zip(&single) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(activation_stats(&model, &[]).is_err());
    }

    #[test]
    fn template_only_scan_equals_direct_mean_comparison() {
        let model = test_model(6, 4);
        let hasher = Hasher::continuous(&model);
        let train: Vec<Item> = (0..10)
            .map(|i| item(i, &[0.5 + 0.01 * i as f64, -0.3, 0.8, 0.1, -0.6, 0.2]))
            .collect();
        let train_embeddings: Vec<Embedding> = train
            .iter()
            .map(|it| embed_eval(&model, &it.vector).unwrap())
            .collect();
        let templates = reduce_templates(&train_embeddings, 1, 0, false).unwrap();
        let empty = build_database(&hasher, &[]).unwrap();
        let db = empty.with_templates(&hasher, &templates).unwrap();
        let mean = &templates.centroids[0];
        let queries: Vec<Item> = (0..20)
            .map(|i| item(100 + i, &[0.6 - 0.05 * i as f64, -0.3, 0.8, 0.1, -0.6, 0.2]))
            .collect();
        for t in [0.05, 0.2, 0.8] {
            for q in &queries {
                let via_scan = scan(&hasher, &q.vector, &db, t).unwrap().flagged;
                let e = embed_eval(&model, &q.vector).unwrap();
                let direct = euclidean(&e, mean).unwrap() < t;
                assert_eq!(via_scan, direct);
            }
        }
    }

    #[test]
    fn lsh_database_uses_hamming() {
        let model = test_model(6, 4);
        let projector = LshProjector::new(4, 16, 3);
        let hasher = Hasher::with_lsh(&model, &projector);
        let a = item(1, &[1.0, 0.0, 0.0, 0.5, -0.5, 0.2]);
        let db = build_database(&hasher, &[&a]).unwrap();
        assert!(db.is_binary());
        let r = scan(&hasher, &a.vector, &db, 1.0).unwrap();
        assert!(r.flagged); // identical item: zero Hamming distance < 1
        let cont = Hasher::continuous(&model);
        let q = cont.hash_item(&a.vector).unwrap();
        assert!(hash_distance(&q, &db.entries()[0].hash).is_err());
    }
}
