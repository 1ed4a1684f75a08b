//! Dataset cleaning over pluggable embedding oracles: mislabeled-item
//! detection against a per-individual base embedding, and greedy duplicate
//! removal in lexicographic id order.
//!
//! The face oracle maps an item id to zero or more face embeddings (an
//! empty list means no face was found); the copy oracle maps an item id to
//! exactly one embedding. Both detectors sort ids internally, so results
//! are independent of input ordering.

use crate::error::{Error, Result};
use crate::hash::{cosine_distance, euclidean};
use std::collections::BTreeMap;

/// Combined face detection + recognition stand-in: item id to face
/// embeddings.
pub type FaceOracle = BTreeMap<String, Vec<Vec<f64>>>;

/// Copy-detection embedding stand-in: item id to one embedding.
pub type CopyOracle = BTreeMap<String, Vec<f64>>;

/// Detect mislabeled and faceless items among one individual's images.
///
/// The base embedding is the mean of L2-normalized first faces over items
/// with exactly one detected face (the mean itself is not renormalized).
/// Items with no face are excluded immediately. Every other item keeps its
/// best face: if even the minimum cosine distance to the base exceeds
/// `t_mis`, the item is excluded. Returns the sorted exclusion list.
pub fn detect_mislabeled(
    items: &[String],
    oracle: &FaceOracle,
    t_mis: f64,
) -> Result<Vec<String>> {
    if !(0.0..2.0).contains(&t_mis) || t_mis == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "T_mis = {t_mis} must lie in (0, 2)"
        )));
    }
    let mut sorted: Vec<&String> = items.iter().collect();
    sorted.sort();
    sorted.dedup();

    let mut excluded: Vec<String> = Vec::new();
    let mut base: Option<Vec<f64>> = None;
    let mut n_single = 0usize;
    for id in &sorted {
        let faces = oracle
            .get(*id)
            .ok_or_else(|| Error::MissingEmbedding((*id).clone()))?;
        match faces.len() {
            0 => excluded.push((*id).clone()),
            1 => {
                let f = &faces[0];
                let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNorm("face embedding has zero norm"));
                }
                match &mut base {
                    None => base = Some(f.iter().map(|v| v / norm).collect()),
                    Some(b) => {
                        for (acc, v) in b.iter_mut().zip(f) {
                            *acc += v / norm;
                        }
                    }
                }
                n_single += 1;
            }
            _ => {}
        }
    }
    let mut base = base.ok_or(Error::NoSingleFaceItem)?;
    base.iter_mut().for_each(|v| *v /= n_single as f64);

    for id in &sorted {
        if excluded.iter().any(|e| e == *id) {
            continue;
        }
        let faces = &oracle[*id];
        let min_dist = faces
            .iter()
            .map(|f| cosine_distance(f, &base))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_dist > t_mis {
            excluded.push((*id).clone());
        }
    }
    excluded.sort();
    Ok(excluded)
}

/// Greedy duplicate detection in lexicographic id order: each surviving
/// item excludes every later item within `t_dup` of it. The order
/// dependence (a shielded item can survive) is intentional; returns the
/// sorted exclusion list.
pub fn detect_duplicates(items: &[String], oracle: &CopyOracle, t_dup: f64) -> Result<Vec<String>> {
    if t_dup <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "T_dup = {t_dup} must be positive"
        )));
    }
    let mut sorted: Vec<&String> = items.iter().collect();
    sorted.sort();
    sorted.dedup();

    let embeddings: Vec<&Vec<f64>> = sorted
        .iter()
        .map(|id| {
            oracle
                .get(*id)
                .ok_or_else(|| Error::MissingEmbedding((*id).clone()))
        })
        .collect::<Result<_>>()?;

    let n = sorted.len();
    let mut excluded = vec![false; n];
    for i in 0..n {
        if excluded[i] {
            continue;
        }
        for j in i + 1..n {
            if !excluded[j] && euclidean(embeddings[i], embeddings[j])? < t_dup {
                excluded[j] = true;
            }
        }
    }
    Ok(sorted
        .into_iter()
        .zip(&excluded)
        .filter(|(_, &e)| e)
        .map(|(id, _)| id.clone())
        .collect())
}
