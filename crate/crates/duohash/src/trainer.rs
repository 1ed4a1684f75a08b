//! Training orchestration: per-batch primary and secondary losses over a
//! shared cross-batch memory, weighted loss mixing, the epoch loop with
//! gradient accumulation, the validation protocol, and best-model selection.
//!
//! The primary loss embeds a moderate and a heavy view of each sampled item
//! in train mode; the secondary loss embeds image pairs in eval mode (the
//! running statistics stay frozen) while all weights still receive
//! gradients. Target images pair with a random training image of the same
//! target under moderate augmentation; non-target images behave exactly
//! like primary items. Both losses enqueue their embeddings into the same
//! memory before computing.

use crate::error::{Error, Result};
use crate::hash::euclidean;
use crate::metrics::{calibrate_threshold, fr_metrics, micro_average_precision, FrReport, PairScore};
use crate::model::{
    backward, embed_eval, forward_batch, init_params, lr_at_epoch, sgd_step, Checkpoint,
    Mode, ModelConfig, ModelGrads, ModelParams, OptState, CHECKPOINT_FORMAT_VERSION,
};
use crate::synth::{
    augment, Group, Item, PrimaryBatchSampler, SecondaryDraw, SecondarySampler, Strength, World,
};
use crate::xbm::{contrastive_loss_xbm, BatchItem, CrossBatchMemory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    SinglePurpose,
    DualPurpose,
    /// Dual-purpose training against K target individuals at once.
    MultiTarget(usize),
}

impl TrainMode {
    pub fn n_targets(&self) -> usize {
        match self {
            TrainMode::SinglePurpose => 0,
            TrainMode::DualPurpose => 1,
            TrainMode::MultiTarget(k) => *k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub b_primary: usize,
    pub b_secondary: usize,
    pub p_t: f64,
    /// Weight on the secondary loss in the mixed objective.
    pub w: f64,
    /// Cross-batch memory size M.
    pub memory_size: usize,
    pub m_p: f64,
    pub m_n: f64,
    pub eta: f64,
    pub gamma: f64,
    pub eta_min: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    /// Number of batches whose gradients are averaged per optimizer step.
    pub grad_accumulation: usize,
    pub mode: TrainMode,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Validation ICD precision the matching threshold is calibrated to.
    pub threshold_target: f64,
}

impl Default for TrainingConfig {
    /// Dual-purpose defaults at publication scale (batch sizes, margins,
    /// optimizer constants, and the 22500-slot memory).
    fn default() -> Self {
        TrainingConfig {
            epochs: 10,
            b_primary: 96,
            b_secondary: 12,
            p_t: 0.025,
            w: 0.03,
            memory_size: 22_500,
            m_p: 0.0,
            m_n: 1.0,
            eta: 0.1,
            gamma: 0.9,
            eta_min: 0.05,
            weight_decay: 1e-6,
            momentum: 0.9,
            grad_accumulation: 2,
            mode: TrainMode::DualPurpose,
            hidden: vec![128, 64],
            embed_dim: 64,
            threshold_target: 0.90,
        }
    }
}

impl TrainingConfig {
    pub fn single_purpose() -> Self {
        TrainingConfig {
            mode: TrainMode::SinglePurpose,
            memory_size: 20_000,
            w: 0.0,
            ..TrainingConfig::default()
        }
    }

    /// Dual-purpose run sized for the default synthetic world: the
    /// secondary batch and target share are raised so the target cluster
    /// actually collapses within 10 desk-scale epochs, and the memory spans
    /// the same number of iterations the publication-scale memory does.
    pub fn desk_dual() -> Self {
        TrainingConfig {
            b_secondary: 64,
            p_t: 0.45,
            w: 0.6,
            memory_size: 2048,
            ..TrainingConfig::default()
        }
    }

    /// Single-purpose counterpart of [`TrainingConfig::desk_dual`]; the
    /// memory shrinks with the per-iteration embedding count so staleness
    /// stays comparable.
    pub fn desk_single() -> Self {
        TrainingConfig {
            mode: TrainMode::SinglePurpose,
            w: 0.0,
            memory_size: 2048 * 192 / 320,
            ..TrainingConfig::desk_dual()
        }
    }

    fn validate(&self, world: &World) -> Result<()> {
        if self.epochs == 0 || self.b_primary == 0 {
            return Err(Error::InvalidConfig("epochs and b_primary must be positive".into()));
        }
        if self.m_n <= self.m_p || self.m_p < 0.0 {
            return Err(Error::InvalidConfig("margins must satisfy m_n > m_p >= 0".into()));
        }
        let k = self.mode.n_targets();
        if k > 0 {
            if world.targets.len() != k {
                return Err(Error::InvalidConfig(format!(
                    "training mode expects {k} targets but the world has {}",
                    world.targets.len()
                )));
            }
            if self.b_secondary == 0 {
                return Err(Error::InvalidConfig("b_secondary must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Mixed-objective gradient, Eq.-style: (1 - w) * primary + w * secondary.
pub fn mix_gradients(w: f64, primary: &ModelGrads, secondary: &ModelGrads) -> ModelGrads {
    let mut mixed = primary.clone();
    mixed.scale(1.0 - w);
    mixed.add_scaled(secondary, w);
    mixed
}

/// Primary-task loss: embed a moderate and a heavy view of every batch item
/// in train mode, push both views with the item's label, and take the
/// contrastive loss over the shared memory.
pub fn loss_primary(
    model: &mut ModelParams,
    batch: &[&Item],
    mem: &mut CrossBatchMemory,
    cfg: &TrainingConfig,
    world: &World,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("primary batch is empty"));
    }
    let (nu_m, rho_m) = world.config.augment_params(Strength::Moderate);
    let (nu_h, rho_h) = world.config.augment_params(Strength::Heavy);
    let mut views = Vec::with_capacity(batch.len() * 2);
    let mut labels = Vec::with_capacity(batch.len() * 2);
    for item in batch {
        views.push(augment(&item.vector, nu_m, rho_m, rng));
        views.push(augment(&item.vector, nu_h, rho_h, rng));
        labels.push(item.label);
        labels.push(item.label);
    }
    model.set_mode(Mode::Train);
    let (embeddings, cache) = forward_batch(model, &views)?;
    let seqs = mem.push_batch(&embeddings, &labels)?;
    let batch_items: Vec<BatchItem> = embeddings
        .into_iter()
        .zip(&labels)
        .zip(seqs)
        .map(|((embedding, &label), seq)| BatchItem {
            embedding,
            label,
            seq: Some(seq),
        })
        .collect();
    let loss = contrastive_loss_xbm(&batch_items, mem, cfg.m_p, cfg.m_n)?;
    let (grads, _) = backward(model, &cache, &loss.grads)?;
    Ok((loss.loss, grads))
}

/// Secondary-task loss over sampled slots. The model runs in eval mode so
/// the running statistics stay frozen; weights still receive gradients.
pub fn loss_secondary(
    model: &mut ModelParams,
    draws: &[SecondaryDraw],
    nontarget_images: &[&Item],
    mem: &mut CrossBatchMemory,
    cfg: &TrainingConfig,
    world: &World,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, ModelGrads)> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("secondary batch is empty"));
    }
    let (nu_m, rho_m) = world.config.augment_params(Strength::Moderate);
    let (nu_h, rho_h) = world.config.augment_params(Strength::Heavy);
    let mut views = Vec::with_capacity(draws.len() * 2);
    let mut labels = Vec::with_capacity(draws.len() * 2);
    for draw in draws {
        match *draw {
            SecondaryDraw::Target { target, image } => {
                let pool = &world.targets[target].train;
                let w_i = &pool[image];
                // the partner may be the same image; the loss then skips
                // the coincident pair under the strict positive margin
                let w_j = &pool[rng.gen_range(0..pool.len())];
                views.push(augment(&w_i.vector, nu_m, rho_m, rng));
                views.push(augment(&w_j.vector, nu_m, rho_m, rng));
                labels.push(w_i.label);
                labels.push(w_i.label);
            }
            SecondaryDraw::NonTarget { image } => {
                let w = nontarget_images[image];
                views.push(augment(&w.vector, nu_m, rho_m, rng));
                views.push(augment(&w.vector, nu_h, rho_h, rng));
                labels.push(w.label);
                labels.push(w.label);
            }
        }
    }
    model.set_mode(Mode::Eval);
    let (embeddings, cache) = forward_batch(model, &views)?;
    let seqs = mem.push_batch(&embeddings, &labels)?;
    let batch_items: Vec<BatchItem> = embeddings
        .into_iter()
        .zip(&labels)
        .zip(seqs)
        .map(|((embedding, &label), seq)| BatchItem {
            embedding,
            label,
            seq: Some(seq),
        })
        .collect();
    let loss = contrastive_loss_xbm(&batch_items, mem, cfg.m_p, cfg.m_n)?;
    let (grads, _) = backward(model, &cache, &loss.grads)?;
    Ok((loss.loss, grads))
}

/// Either side of the per-individual recognition evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndividualRef {
    Target(u32),
    NonTarget(u32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mu_ap: f64,
    pub threshold: f64,
    /// F1 per individual, targets first.
    pub per_individual: Vec<(IndividualRef, FrReport)>,
}

impl ValidationReport {
    pub fn target_f1_mean(&self) -> Option<f64> {
        let targets: Vec<f64> = self
            .per_individual
            .iter()
            .filter(|(i, _)| matches!(i, IndividualRef::Target(_)))
            .map(|(_, r)| r.f1)
            .collect();
        if targets.is_empty() {
            None
        } else {
            Some(targets.iter().sum::<f64>() / targets.len() as f64)
        }
    }
}

/// All query-reference distances for the copy-detection task on one split.
pub fn icd_pairs(model: &ModelParams, world: &World, group: Group) -> Result<Vec<PairScore>> {
    let (refs, queries) = match group {
        Group::Val => (&world.val_refs, &world.val_queries),
        Group::Test => (&world.test_refs, &world.test_queries),
        Group::Train => {
            return Err(Error::InvalidConfig(
                "copy-detection evaluation runs on val or test pools".into(),
            ))
        }
    };
    let ref_embeddings: Vec<(u64, crate::hash::Embedding)> = refs
        .iter()
        .map(|r| Ok((r.id, embed_eval(model, &r.vector)?)))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::with_capacity(queries.len() * refs.len());
    for q in queries {
        let qe = embed_eval(model, &q.item.vector)?;
        for (rid, re) in &ref_embeddings {
            pairs.push(PairScore::new(
                q.item.id,
                *rid,
                euclidean(&qe, re)?,
                q.true_match == Some(*rid),
            ));
        }
    }
    Ok(pairs)
}

/// Per-individual recognition reports on one split: every query is matched
/// against each individual's reference database at the given threshold.
pub fn evaluate_fr(
    model: &ModelParams,
    world: &World,
    group: Group,
    threshold: f64,
) -> Result<Vec<(IndividualRef, FrReport)>> {
    // query set: target images of the split plus every group individual's
    // query split
    let mut queries: Vec<(IndividualRef, crate::hash::Embedding)> = Vec::new();
    for t in &world.targets {
        let imgs = match group {
            Group::Val => &t.val,
            Group::Test => &t.test,
            Group::Train => &t.train,
        };
        for img in imgs {
            queries.push((
                IndividualRef::Target(t.target_index),
                embed_eval(model, &img.vector)?,
            ));
        }
    }
    for nt in world.nontargets_in(group) {
        for img in nt.queries() {
            queries.push((
                IndividualRef::NonTarget(nt.identity_index),
                embed_eval(model, &img.vector)?,
            ));
        }
    }

    // reference databases: each target's training images, then the group
    // individuals' reference splits
    let mut databases: Vec<(IndividualRef, Vec<crate::hash::Embedding>)> = Vec::new();
    for t in &world.targets {
        let db = t
            .train
            .iter()
            .map(|img| embed_eval(model, &img.vector))
            .collect::<Result<_>>()?;
        databases.push((IndividualRef::Target(t.target_index), db));
    }
    for nt in world.nontargets_in(group) {
        let db = nt
            .references()
            .iter()
            .map(|img| embed_eval(model, &img.vector))
            .collect::<Result<_>>()?;
        databases.push((IndividualRef::NonTarget(nt.identity_index), db));
    }

    let mut reports = Vec::with_capacity(databases.len());
    for (owner, db) in &databases {
        let flags: Vec<(bool, bool)> = queries
            .iter()
            .map(|(q_owner, qe)| {
                let min_dist = db
                    .iter()
                    .map(|re| euclidean(qe, re).expect("equal lengths"))
                    .fold(f64::INFINITY, f64::min);
                (q_owner == owner, min_dist < threshold)
            })
            .collect();
        reports.push((*owner, fr_metrics(&flags)?));
    }
    Ok(reports)
}

/// Validation protocol: mu-AP over the validation pools, threshold
/// calibrated to the target precision, and per-individual recognition
/// reports at that threshold.
pub fn validate(
    model: &ModelParams,
    world: &World,
    threshold_target: f64,
) -> Result<ValidationReport> {
    let pairs = icd_pairs(model, world, Group::Val)?;
    let mu_ap = micro_average_precision(&pairs)?;
    let threshold = calibrate_threshold(&pairs, threshold_target)?;
    let per_individual = evaluate_fr(model, world, Group::Val, threshold)?;
    Ok(ValidationReport {
        mu_ap,
        threshold,
        per_individual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochCheckpoint {
    pub epoch: usize,
    pub checkpoint: Checkpoint,
    pub mu_ap_val: f64,
    pub threshold: f64,
    /// Mean F1 over targets on the validation split; absent in
    /// single-purpose runs.
    pub f1_val_target: Option<f64>,
    /// Selection score: mu-AP plus 0.1 * target F1 when dual.
    pub score: f64,
    pub mean_primary_loss: f64,
    pub mean_secondary_loss: f64,
}

/// Run the full training loop; returns one checkpoint per epoch.
pub fn train(cfg: &TrainingConfig, world: &World, seed: u64) -> Result<Vec<EpochCheckpoint>> {
    cfg.validate(world)?;
    let model_cfg = ModelConfig::new(world.config.input_dim, cfg.hidden.clone(), cfg.embed_dim);
    let mut model = init_params(&model_cfg, seed)?;
    let mut opt = OptState::new(
        &model,
        cfg.eta,
        cfg.gamma,
        cfg.eta_min,
        cfg.weight_decay,
        cfg.momentum,
    );
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let mut mem = CrossBatchMemory::new(cfg.memory_size);
    // w = 0 degenerates the mixed loss to the primary one, so the secondary
    // machinery is skipped entirely and the run matches single-purpose
    let dual_active = cfg.mode.n_targets() > 0 && cfg.w > 0.0;
    let nontarget_images: Vec<&Item> = if dual_active {
        world.secondary_train_nontarget_images()
    } else {
        Vec::new()
    };
    let mut secondary_sampler = if dual_active {
        Some(SecondarySampler::new(
            world.targets.iter().map(|t| t.train.len()).collect(),
            nontarget_images.len(),
            cfg.p_t,
        )?)
    } else {
        None
    };

    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = lr_at_epoch(cfg.eta, cfg.gamma, cfg.eta_min, epoch);
        let mut primary_sampler =
            PrimaryBatchSampler::new(world.primary_train.len(), cfg.b_primary, &mut rng);
        if let Some(s) = secondary_sampler.as_mut() {
            s.reset();
        }
        let mut accum = ModelGrads::zeros_like(&model);
        let mut accum_count = 0usize;
        let mut iteration = 0usize;
        let mut primary_loss_sum = 0.0;
        let mut secondary_loss_sum = 0.0;

        while let Some(indices) = primary_sampler.next_batch() {
            iteration += 1;
            let batch: Vec<&Item> = indices.iter().map(|&i| &world.primary_train[i]).collect();
            let (l_p, g_p) = loss_primary(&mut model, &batch, &mut mem, cfg, world, &mut rng)?;
            let (l_s, g_s) = if dual_active {
                let sampler = secondary_sampler.as_mut().unwrap();
                let draws: Vec<SecondaryDraw> =
                    (0..cfg.b_secondary).map(|_| sampler.draw(&mut rng)).collect();
                loss_secondary(
                    &mut model,
                    &draws,
                    &nontarget_images,
                    &mut mem,
                    cfg,
                    world,
                    &mut rng,
                )?
            } else {
                (0.0, ModelGrads::zeros_like(&model))
            };
            let mixed_loss = if dual_active {
                (1.0 - cfg.w) * l_p + cfg.w * l_s
            } else {
                l_p
            };
            if !mixed_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, iteration });
            }
            primary_loss_sum += l_p;
            secondary_loss_sum += l_s;
            if dual_active {
                accum.add_scaled(&g_p, 1.0 - cfg.w);
                accum.add_scaled(&g_s, cfg.w);
            } else {
                accum.add_scaled(&g_p, 1.0);
            }
            accum_count += 1;
            if accum_count == cfg.grad_accumulation {
                accum.scale(1.0 / accum_count as f64);
                sgd_step(&mut model, &accum, &mut opt, lr);
                accum = ModelGrads::zeros_like(&model);
                accum_count = 0;
            }
        }
        // flush a partial accumulation span at the epoch boundary
        if accum_count > 0 {
            accum.scale(1.0 / accum_count as f64);
            sgd_step(&mut model, &accum, &mut opt, lr);
        }

        let report = validate(&model, world, cfg.threshold_target)?;
        let f1_val_target = if cfg.mode.n_targets() > 0 {
            report.target_f1_mean()
        } else {
            None
        };
        let score = report.mu_ap + 0.1 * f1_val_target.unwrap_or(0.0);
        checkpoints.push(EpochCheckpoint {
            epoch,
            checkpoint: Checkpoint {
                format_version: CHECKPOINT_FORMAT_VERSION,
                epoch,
                model: model.clone(),
                opt: opt.clone(),
                rng: rng.clone(),
            },
            mu_ap_val: report.mu_ap,
            threshold: report.threshold,
            f1_val_target,
            score,
            mean_primary_loss: primary_loss_sum / iteration as f64,
            mean_secondary_loss: secondary_loss_sum / iteration as f64,
        });
    }
    Ok(checkpoints)
}

/// The checkpoint with the best selection score; ties go to the earliest
/// epoch.
pub fn select_best(checkpoints: &[EpochCheckpoint]) -> Result<&EpochCheckpoint> {
    checkpoints
        .iter()
        .reduce(|best, c| if c.score > best.score { c } else { best })
        .ok_or(Error::EmptyInput("no checkpoints to select from"))
}
