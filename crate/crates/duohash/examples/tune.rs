// Scratch harness for tuning the desk study. Not part of the deliverable.

use duohash::css::{build_database, fp_study, forge_collision, reduce_templates, scan, select_cover, Hasher};
use duohash::hash::{euclidean, LshProjector};
use duohash::metrics::{calibrate_threshold, micro_average_precision, precision_recall_at};
use duohash::model::embed_eval;
use duohash::synth::{generate_world, Group, WorldConfig};
use duohash::trainer::{evaluate_fr, icd_pairs, select_best, train, IndividualRef, TrainingConfig};
use std::time::Instant;

fn arg<T: std::str::FromStr>(n: usize, default: T) -> T {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() {
    let w: f64 = arg(1, 0.3);
    let p_t: f64 = arg(2, 0.25);
    let mem: usize = arg(3, 2048);
    let seed: u64 = arg(4, 1);
    let nu_h: f64 = arg(5, 0.7);
    let rho_h: f64 = arg(6, 0.25);
    let b_sec: usize = arg(7, 32);
    let n_ident: usize = arg(8, 61);
    let hidden_spec: String = arg(9, "64".to_string());
    let id_dim: usize = arg(10, 16);
    let sigma_id: f64 = arg(11, 0.1);
    let n_primary: usize = arg(12, 2000);
    let sigma_content: f64 = arg(13, 1.0);
    let nu_m: f64 = arg(14, 0.05);
    let pool_sub: usize = arg(15, 20);
    let embed_dim: usize = arg(16, 24);
    let eta_min: f64 = arg(17, 0.05);
    let gamma: f64 = arg(18, 0.9);
    let hidden: Vec<usize> = hidden_spec.split('-').map(|s| s.parse().unwrap()).collect();

    let mut world_cfg = WorldConfig {
        n_primary,
        sigma_content,
        nu_moderate: nu_m,
        n_attacker_pool: 500,
        nu_heavy: nu_h,
        rho_heavy: rho_h,
        id_dim,
        sigma_id,
        ..WorldConfig::default()
    };
    if n_ident != 101 {
        world_cfg.n_identities = n_ident;
        world_cfg.n_nontarget_train = n_ident - 1 - 40;
        world_cfg.n_nontarget_val = 20;
        world_cfg.n_nontarget_test = 20;
    }
    let world = generate_world(&world_cfg).unwrap();

    let dual_cfg = TrainingConfig {
        w,
        p_t,
        b_secondary: b_sec,
        memory_size: mem,
        hidden: hidden.clone(),
        embed_dim,
        eta_min,
        gamma,
        ..TrainingConfig::default()
    };
    let t0 = Instant::now();
    let dual_ckpts = train(&dual_cfg, &world, seed).unwrap();
    let dual_time = t0.elapsed();
    for c in &dual_ckpts {
        println!(
            "ep {}: muap {:.4} f1_t {:.4} T {:.4} lp {:.4} ls {:.4}",
            c.epoch, c.mu_ap_val, c.f1_val_target.unwrap_or(0.0), c.threshold,
            c.mean_primary_loss, c.mean_secondary_loss
        );
    }
    println!("dual time {dual_time:?}");
    let best_dual = select_best(&dual_ckpts).unwrap();
    println!("dual best epoch {}", best_dual.epoch);

    let single_cfg = TrainingConfig {
        memory_size: mem * 192 / 320,
        hidden: hidden.clone(),
        embed_dim,
        eta_min,
        gamma,
        ..TrainingConfig::single_purpose()
    };
    let single_ckpts = train(&single_cfg, &world, seed).unwrap();
    let best_single = select_best(&single_ckpts).unwrap();

    let dual_model = &best_dual.checkpoint.model;
    let single_model = &best_single.checkpoint.model;
    let t = best_dual.threshold;

    // distance geometry diagnostics
    let emb = |v: &[f64]| embed_eval(dual_model, v).unwrap();
    let mut same_id = Vec::new();
    for nt in world.nontargets_in(Group::Test).take(6) {
        let q = nt.queries();
        for i in 0..q.len().min(8) {
            for j in (i + 1)..q.len().min(8) {
                same_id.push(euclidean(&emb(&q[i].vector), &emb(&q[j].vector)).unwrap());
            }
        }
    }
    let mut unrelated = Vec::new();
    for i in 0..20 {
        for j in 20..40 {
            unrelated.push(
                euclidean(
                    &emb(&world.benign_pool[i].vector),
                    &emb(&world.benign_pool[j].vector),
                )
                .unwrap(),
            );
        }
    }
    let mut target_pairs = Vec::new();
    let tt = &world.targets[0];
    for i in 0..tt.train.len().min(15) {
        for j in (i + 1)..tt.train.len().min(15) {
            target_pairs.push(euclidean(&emb(&tt.train[i].vector), &emb(&tt.train[j].vector)).unwrap());
        }
    }
    let stats = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (v[v.len() / 20], v[v.len() / 2], v[v.len() - 1 - v.len() / 20])
    };
    let (a5, a50, a95) = stats(&mut same_id);
    let (b5, b50, b95) = stats(&mut unrelated);
    let (c5, c50, c95) = stats(&mut target_pairs);
    println!("dist same-id nontarget: 5% {a5:.3} med {a50:.3} 95% {a95:.3}");
    println!("dist unrelated:         5% {b5:.3} med {b50:.3} 95% {b95:.3}");
    println!("dist target train:      5% {c5:.3} med {c50:.3} 95% {c95:.3}  (T {t:.3})");

    let dual_test_pairs = icd_pairs(dual_model, &world, Group::Test).unwrap();
    let single_test_pairs = icd_pairs(single_model, &world, Group::Test).unwrap();
    let muap_dual = micro_average_precision(&dual_test_pairs).unwrap();
    let muap_single = micro_average_precision(&single_test_pairs).unwrap();
    let (prec_d, rec_d) = precision_recall_at(&dual_test_pairs, t);
    println!(
        "TEST ICD: dual muap {muap_dual:.4} (p {prec_d:.3} r {rec_d:.3}), single muap {muap_single:.4}, delta {:.4}",
        (muap_dual - muap_single).abs()
    );

    let fr = evaluate_fr(dual_model, &world, Group::Test, t).unwrap();
    let mut nontarget_f1: Vec<f64> = fr
        .iter()
        .filter(|(i, _)| matches!(i, IndividualRef::NonTarget(_)))
        .map(|(_, r)| r.f1)
        .collect();
    nontarget_f1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_nt = nontarget_f1[nontarget_f1.len() / 2];
    let target_report = fr
        .iter()
        .find(|(i, _)| matches!(i, IndividualRef::Target(_)))
        .map(|(_, r)| *r)
        .unwrap();
    println!(
        "TEST FR dual: recall {:.3} prec {:.3} f1 {:.3} fpM {:.1}; NT median f1 {:.4} p90 {:.4} max {:.4}",
        target_report.recall,
        target_report.precision,
        target_report.f1,
        target_report.fp_per_million,
        median_nt,
        nontarget_f1[nontarget_f1.len() * 9 / 10],
        nontarget_f1.last().unwrap()
    );
    let fr_single = evaluate_fr(single_model, &world, Group::Test, best_single.threshold).unwrap();
    let tr_s = fr_single
        .iter()
        .find(|(i, _)| matches!(i, IndividualRef::Target(_)))
        .map(|(_, r)| *r)
        .unwrap();
    println!("TEST FR single: recall {:.3} f1 {:.3}", tr_s.recall, tr_s.f1);

    // template sweep
    let train_embeddings: Vec<_> = tt.train.iter().map(|img| emb(&img.vector)).collect();
    let hasher = Hasher::continuous(dual_model);
    let test_refs: Vec<&duohash::synth::Item> = world.test_refs.iter().collect();
    let base_db = build_database(&hasher, &test_refs).unwrap();
    let mut f1_by_k = Vec::new();
    for k in [100usize, 50, 25, 10, 5, 1] {
        let templates = reduce_templates(&train_embeddings, k, 7, false).unwrap();
        let db = base_db.with_templates(&hasher, &templates).unwrap();
        let mut flags = Vec::new();
        for t_img in &tt.test {
            flags.push((true, scan(&hasher, &t_img.vector, &db, t).unwrap().flagged));
        }
        for nt in world.nontargets_in(Group::Test) {
            for q in nt.queries() {
                flags.push((false, scan(&hasher, &q.vector, &db, t).unwrap().flagged));
            }
        }
        let rep = duohash::metrics::fr_metrics(&flags).unwrap();
        f1_by_k.push((k, (rep.f1 * 1000.0).round() / 1000.0, rep.recall));
    }
    println!("templates (k, f1, recall): {f1_by_k:?}");

    // LSH
    let projector = LshProjector::new(dual_cfg.embed_dim, 256, 7);
    let h = Hasher::with_lsh(dual_model, &projector);
    let pairs_of = |refs: &[duohash::synth::Item], queries: &[duohash::synth::QueryItem]| {
        let rh: Vec<_> = refs
            .iter()
            .map(|r| (r.id, h.hash_item(&r.vector).unwrap()))
            .collect();
        queries
            .iter()
            .flat_map(|q| {
                let qh = h.hash_item(&q.item.vector).unwrap();
                rh.iter()
                    .map(|(rid, rhash)| {
                        duohash::PairScore::new(
                            q.item.id,
                            *rid,
                            duohash::css::hash_distance(&qh, rhash).unwrap(),
                            q.true_match == Some(*rid),
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let lsh_val = pairs_of(&world.val_refs, &world.val_queries);
    let t_lsh = calibrate_threshold(&lsh_val, 0.90).unwrap();
    let lsh_test = pairs_of(&world.test_refs, &world.test_queries);
    let muap_lsh = micro_average_precision(&lsh_test).unwrap();
    let train_db: Vec<_> = tt.train.iter().map(|img| h.hash_item(&img.vector).unwrap()).collect();
    let mut rec = 0usize;
    for q in &tt.test {
        let qh = h.hash_item(&q.vector).unwrap();
        let min = train_db
            .iter()
            .map(|rh| duohash::css::hash_distance(&qh, rh).unwrap())
            .fold(f64::INFINITY, f64::min);
        if min < t_lsh {
            rec += 1;
        }
    }
    println!(
        "LSH: muap {muap_lsh:.4} (ratio {:.3}), recall {:.3} vs {:.3} (T_lsh {t_lsh})",
        muap_lsh / muap_dual,
        rec as f64 / tt.test.len() as f64,
        target_report.recall
    );

    // threshold ablation
    let val_pairs = icd_pairs(dual_model, &world, Group::Val).unwrap();
    for target_p in [0.95, 0.99] {
        match calibrate_threshold(&val_pairs, target_p) {
            Ok(t_x) => {
                let fr_x = evaluate_fr(dual_model, &world, Group::Test, t_x).unwrap();
                let trp = fr_x
                    .iter()
                    .find(|(i, _)| matches!(i, IndividualRef::Target(_)))
                    .map(|(_, r)| *r)
                    .unwrap();
                let mut nt: Vec<f64> = fr_x
                    .iter()
                    .filter(|(i, _)| matches!(i, IndividualRef::NonTarget(_)))
                    .map(|(_, r)| r.f1)
                    .collect();
                nt.sort_by(|a, b| a.partial_cmp(b).unwrap());
                println!(
                    "T@{:.0}: T {:.4} recall {:.3} nt-med-f1 {:.4}",
                    target_p * 100.0,
                    t_x,
                    trp.recall,
                    nt[nt.len() / 2]
                );
            }
            Err(e) => println!("T@{:.0}: {e}", target_p * 100.0),
        }
    }

    // forging across 10 seeds
    let templates1 = reduce_templates(&train_embeddings, 1, 7, false).unwrap();
    let template = &templates1.centroids[0];
    let tnorm: f64 = template.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut ok = 0;
    for fseed in 0..10u64 {
        let pool_start = (fseed as usize * 37) % (world.attacker_pool.len() - pool_sub);
        let pool = &world.attacker_pool[pool_start..pool_start + pool_sub];
        let cover = select_cover(dual_model, pool, template).unwrap();
        let r = forge_collision(dual_model, &cover.vector, template, 5000, 1.0, 0.05).unwrap();
        if fseed < 3 {
            println!(
                "forge {fseed}: dist {:.4} ratio {:.4}",
                r.hash_distance, r.perturbation_ratio
            );
        }
        if r.hash_distance < t && r.perturbation_ratio <= 0.1 {
            ok += 1;
        }
    }
    println!("forge success {ok}/10 (template norm {tnorm:.3}, T {t:.3})");

    // spread decomposition: id-ball sensitivity vs content bleed
    {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha12Rng;
        let mut prng = ChaCha12Rng::seed_from_u64(999);
        let centroid: Vec<f64> = {
            // recover the target centroid as the mean of train id blocks
            let d = world.config.id_dim;
            let mut c = vec![0.0; d];
            for img in &tt.train {
                for (a, b) in c.iter_mut().zip(&img.vector[..d]) {
                    *a += b / tt.train.len() as f64;
                }
            }
            c
        };
        let mk = |id: &[f64], content: &[f64]| {
            let mut v = id.to_vec();
            v.extend_from_slice(content);
            v
        };
        let fresh_content = |r: &mut ChaCha12Rng| -> Vec<f64> {
            (0..world.config.input_dim - world.config.id_dim)
                .map(|_| {
                    let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, r);
                    world.config.sigma_content * n
                })
                .collect()
        };
        let noisy_id = |r: &mut ChaCha12Rng| -> Vec<f64> {
            centroid
                .iter()
                .map(|c| {
                    let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, r);
                    c + world.config.sigma_id * n
                })
                .collect()
        };
        let content0 = fresh_content(&mut prng);
        let mut id_spread = Vec::new();
        let mut content_spread = Vec::new();
        for _ in 0..40 {
            let a = emb(&mk(&noisy_id(&mut prng), &content0));
            let b = emb(&mk(&noisy_id(&mut prng), &content0));
            id_spread.push(euclidean(&a, &b).unwrap());
            let c1 = emb(&mk(&centroid, &fresh_content(&mut prng)));
            let c2 = emb(&mk(&centroid, &fresh_content(&mut prng)));
            content_spread.push(euclidean(&c1, &c2).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "spread probe: id-ball only {:.3}, content only {:.3}",
            mean(&id_spread),
            mean(&content_spread)
        );
    }

    // forge parameter sweep on seed 0 cover
    {
        let pool = &world.attacker_pool[..pool_sub];
        let cover = select_cover(dual_model, pool, template).unwrap();
        for (lv, st) in [(1.0, 0.05), (10.0, 0.02), (50.0, 0.01), (200.0, 0.005), (50.0, 0.02)] {
            let r = forge_collision(dual_model, &cover.vector, template, 5000, lv, st).unwrap();
            println!(
                "forge sweep lambda {lv} step {st}: dist {:.4} ratio {:.4}",
                r.hash_distance, r.perturbation_ratio
            );
        }
    }

    let benign: Vec<&duohash::synth::Item> = world.benign_pool.iter().collect();
    let fp_r = fp_study(&hasher, &benign, &base_db, t).unwrap();
    let db_d = base_db.with_templates(&hasher, &templates1).unwrap();
    let fp_rd = fp_study(&hasher, &benign, &db_d, t).unwrap();
    println!("fp/M: R {:.1} R_d {:.1}", fp_r.fp_per_million, fp_rd.fp_per_million);
}
