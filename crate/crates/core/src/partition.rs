//! Federated partition construction: one labeled host plus feature-holding
//! guests, with a declarative manifest so any experiment can be replayed
//! from (dataset, manifest) alone.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureId, InstanceId, MISSING};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    RandomHybrid,
    Dirichlet,
    OverlapHetero,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PartyShard {
    pub instance_ids: Vec<InstanceId>,
    pub feature_ids: Vec<FeatureId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GuestShard {
    pub id: u32,
    pub instance_ids: Vec<InstanceId>,
    pub feature_ids: Vec<FeatureId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PartitionManifest {
    pub scheme: PartitionScheme,
    pub seed: u64,
    pub host: PartyShard,
    pub guests: Vec<GuestShard>,
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl PartitionManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Vertically split off a host with a uniformly sampled number of features,
/// then divide the remaining features equally among guests and the instance
/// set horizontally, equally and at random. The host keeps the labels and
/// every instance; each guest sees its feature subset on its instance subset.
///
/// The host feature count is drawn from `[1, d - n_guests]` so every party
/// ends up with at least one feature.
pub fn partition_random_hybrid(
    dataset: &Dataset,
    n_guests: usize,
    seed: u64,
) -> Result<(Dataset, Vec<Dataset>, PartitionManifest)> {
    if n_guests == 0 {
        return Err(CoreError::Validation("n_guests must be at least 1".into()));
    }
    if !dataset.has_labels() {
        return Err(CoreError::Validation("dataset must have labels".into()));
    }
    let d = dataset.n_features();
    if d < n_guests + 1 {
        return Err(CoreError::Validation(format!(
            "need at least {} features for {} guests, found {}",
            n_guests + 1,
            n_guests,
            d
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let host_count = rng.random_range(1..=d - n_guests);

    let mut features: Vec<FeatureId> = dataset.feature_ids().to_vec();
    features.shuffle(&mut rng);
    let mut host_features: Vec<FeatureId> = features[..host_count].to_vec();
    host_features.sort_unstable();
    let rest = &features[host_count..];

    let guest_features = chunk_evenly(rest, n_guests);

    let mut instances: Vec<InstanceId> = dataset.instance_ids().to_vec();
    instances.shuffle(&mut rng);
    let guest_instances = chunk_evenly(&instances, n_guests);

    let mut host_instance_ids: Vec<InstanceId> = dataset.instance_ids().to_vec();
    host_instance_ids.sort_unstable();
    let host = dataset.subset(&host_instance_ids, &host_features)?;

    let mut guests = Vec::with_capacity(n_guests);
    let mut shards = Vec::with_capacity(n_guests);
    for (g, (fids, iids)) in guest_features.iter().zip(&guest_instances).enumerate() {
        let mut fids = fids.clone();
        fids.sort_unstable();
        let mut iids = iids.clone();
        iids.sort_unstable();
        let part = dataset.subset(&iids, &fids)?.without_labels();
        shards.push(GuestShard {
            id: g as u32,
            instance_ids: iids,
            feature_ids: fids,
        });
        guests.push(part);
    }

    let mut params = serde_json::Map::new();
    params.insert("n_guests".into(), serde_json::json!(n_guests));
    let manifest = PartitionManifest {
        scheme: PartitionScheme::RandomHybrid,
        seed,
        host: PartyShard {
            instance_ids: host_instance_ids,
            feature_ids: host_features,
        },
        guests: shards,
        params,
    };
    Ok((host, guests, manifest))
}

fn chunk_evenly<T: Clone>(items: &[T], n: usize) -> Vec<Vec<T>> {
    let base = items.len() / n;
    let extra = items.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut at = 0;
    for i in 0..n {
        let take = base + usize::from(i < extra);
        out.push(items[at..at + take].to_vec());
        at += take;
    }
    out
}

/// The per-class guest proportions the Dirichlet scheme uses. Derived from
/// (seed, class) alone so a test set can be distributed with exactly the
/// same skew as the training set.
pub fn dirichlet_proportions(
    seed: u64,
    beta: f64,
    n_guests: usize,
    class_bits: u64,
) -> Result<Vec<f64>> {
    if n_guests == 1 {
        return Ok(vec![1.0]);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(
        seed ^ class_bits.rotate_left(17) ^ 0x6469_7269_636c_6574, // "dirichlet" tag
    );
    // Dirichlet(beta, ..., beta) as normalized Gamma(beta, 1) draws.
    let gamma = Gamma::new(beta, 1.0)
        .map_err(|e| CoreError::Validation(format!("dirichlet: {e}")))?;
    let mut draws: Vec<f64> = (0..n_guests).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // All draws underflowed (tiny beta); fall back to a single
        // uniformly chosen winner, the Dirichlet limit at beta -> 0.
        let winner = rng.random_range(0..n_guests);
        draws = vec![0.0; n_guests];
        draws[winner] = 1.0;
    } else {
        for d in &mut draws {
            *d /= total;
        }
    }
    Ok(draws)
}

fn dirichlet_assign(
    ids: &[InstanceId],
    labels: &[f64],
    n_guests: usize,
    beta: f64,
    seed: u64,
) -> Result<Vec<Vec<InstanceId>>> {
    let mut classes: Vec<u64> = labels.iter().map(|y| y.to_bits()).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut assignment: Vec<Vec<InstanceId>> = vec![Vec::new(); n_guests];
    for class in &classes {
        let proportions = dirichlet_proportions(seed, beta, n_guests, *class)?;
        let mut cdf = Vec::with_capacity(n_guests);
        let mut acc = 0.0;
        for p in &proportions {
            acc += p;
            cdf.push(acc);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ class.rotate_left(31) ^ 0x6173_7369_676e); // "assign" tag
        for (id, label) in ids.iter().zip(labels) {
            if label.to_bits() != *class {
                continue;
            }
            let u: f64 = rng.random();
            let guest = cdf.partition_point(|c| *c < u).min(n_guests - 1);
            assignment[guest].push(*id);
        }
    }
    Ok(assignment)
}

/// Redistribute a pooled guest dataset across `n_guests` with label-skewed
/// shares: per class, proportions are drawn from a Dirichlet with
/// concentration `beta` and each instance of the class picks its guest from
/// that categorical. Smaller `beta` means more skew.
pub fn partition_dirichlet(
    guest_pool: &Dataset,
    labels: &[f64],
    n_guests: usize,
    beta: f64,
    seed: u64,
) -> Result<(Vec<Dataset>, PartitionManifest)> {
    if n_guests == 0 {
        return Err(CoreError::Validation("n_guests must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(CoreError::Validation("beta must be positive".into()));
    }
    if labels.len() != guest_pool.n_instances() {
        return Err(CoreError::Validation("labels must align with guest pool".into()));
    }

    let mut ordered: Vec<InstanceId> = guest_pool.instance_ids().to_vec();
    ordered.sort_unstable();
    let ordered_labels: Vec<f64> = ordered
        .iter()
        .map(|id| labels[guest_pool.row_of(*id).unwrap()])
        .collect();
    let mut assignment = dirichlet_assign(&ordered, &ordered_labels, n_guests, beta, seed)?;

    let fids = guest_pool.feature_ids().to_vec();
    let mut guests = Vec::with_capacity(n_guests);
    let mut shards = Vec::with_capacity(n_guests);
    for (g, ids) in assignment.iter_mut().enumerate() {
        ids.sort_unstable();
        guests.push(guest_pool.subset(ids, &fids)?.without_labels());
        shards.push(GuestShard {
            id: g as u32,
            instance_ids: ids.clone(),
            feature_ids: fids.clone(),
        });
    }

    let mut params = serde_json::Map::new();
    params.insert("n_guests".into(), serde_json::json!(n_guests));
    params.insert("beta".into(), serde_json::json!(beta));
    let manifest = PartitionManifest {
        scheme: PartitionScheme::Dirichlet,
        seed,
        host: PartyShard { instance_ids: vec![], feature_ids: vec![] },
        guests: shards,
        params,
    };
    Ok((guests, manifest))
}

/// Test overrides for [`partition_overlap_hetero`]; `None` keeps the random
/// draw.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapOptions {
    pub force_drop: Option<usize>,
    pub force_duplicate: Option<usize>,
}

///// Make guests heterogeneous: per guest, drop a random number of its
/// features (keeping at least one) and duplicate a random number of
/// instances from other guests. Duplicated instances copy values for
/// features both guests share and are missing elsewhere.
pub fn partition_overlap_hetero(
    guests: &[Dataset],
    seed: u64,
    options: OverlapOptions,
) -> Result<(Vec<Dataset>, PartitionManifest)> {
    if guests.len() < 2 {
        return Err(CoreError::Validation("need at least 2 guests".into()));
    }
    let total_instances: usize = guests.iter().map(Dataset::n_instances).sum();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut out = Vec::with_capacity(guests.len());
    let mut shards = Vec::with_capacity(guests.len());
    for (g, guest) in guests.iter().enumerate() {
        let d_g = guest.n_features();
        let drop = match options.force_drop {
            Some(v) => v.min(d_g.saturating_sub(1)),
            None => rng.random_range(0..d_g.max(1)),
        };
        let mut fids = guest.feature_ids().to_vec();
        fids.shuffle(&mut rng);
        let mut kept: Vec<FeatureId> = fids[..d_g - drop].to_vec();
        kept.sort_unstable();

        let dup_target = match options.force_duplicate {
            Some(v) => v,
            None => rng.random_range(0..=total_instances / 20),
        };
        // Candidate pool: instances of other guests not already held here,
        // deterministic order, sampled without replacement.
        let mut pool: Vec<(usize, InstanceId)> = Vec::new();
        for (h, other) in guests.iter().enumerate() {
            if h == g {
                continue;
            }
            for id in other.instance_ids() {
                if !guest.contains_instance(*id) {
                    pool.push((h, *id));
                }
            }
        }
        pool.sort_unstable();
        pool.dedup_by_key(|(_, id)| *id);
        pool.shuffle(&mut rng);
        let dups = &pool[..dup_target.min(pool.len())];

        let mut ids: Vec<InstanceId> = guest.instance_ids().to_vec();
        let mut columns: Vec<Vec<f64>> = kept
            .iter()
            .map(|fid| {
                let col = guest.column_of(*fid).unwrap();
                col.to_vec()
            })
            .collect();
        for (src, id) in dups {
            ids.push(*id);
            let donor = &guests[*src];
            for (c, fid) in kept.iter().enumerate() {
                let v = if donor.feature_ids().contains(fid) {
                    donor.value(*id, *fid)
                } else {
                    MISSING
                };
                columns[c].push(v);
            }
        }
        let order: Vec<usize> = {
            let mut idx: Vec<usize> = (0..ids.len()).collect();
            idx.sort_by_key(|i| ids[*i]);
            idx
        };
        let sorted_ids: Vec<InstanceId> = order.iter().map(|i| ids[*i]).collect();
        let sorted_cols: Vec<Vec<f64>> = columns
            .iter()
            .map(|col| order.iter().map(|i| col[*i]).collect())
            .collect();
        let ds = Dataset::new(sorted_ids.clone(), kept.clone(), sorted_cols, None)?;
        shards.push(GuestShard { id: g as u32, instance_ids: sorted_ids, feature_ids: kept });
        out.push(ds);
    }

    let mut params = serde_json::Map::new();
    params.insert("n_guests".into(), serde_json::json!(guests.len()));
    if let Some(v) = options.force_drop {
        params.insert("force_drop".into(), serde_json::json!(v));
    }
    if let Some(v) = options.force_duplicate {
        params.insert("force_duplicate".into(), serde_json::json!(v));
    }
    let manifest = PartitionManifest {
        scheme: PartitionScheme::OverlapHetero,
        seed,
        host: PartyShard { instance_ids: vec![], feature_ids: vec![] },
        guests: shards,
        params,
    };
    Ok((out, manifest))
}

/// Which guests hold a test set's instances, by scheme.
///
/// Under the random and overlap schemes, training rows were split at
/// random, so membership carries no information and every guest can supply
/// its own feature columns for any new instance; all guests hold the full
/// test set and the host averages their replies. Under the label-skewed
/// Dirichlet scheme, membership is the heterogeneity structure itself, so
/// test instances follow the same per-class proportions (re-derived from
/// the manifest seed), which needs the test labels.
pub fn assign_test_instances(
    manifest: &PartitionManifest,
    test_ids: &[InstanceId],
    test_labels: Option<&[f64]>,
) -> Result<Vec<Vec<InstanceId>>> {
    let n_guests = manifest.guests.len();
    if n_guests == 0 {
        return Ok(Vec::new());
    }
    match manifest.scheme {
        PartitionScheme::RandomHybrid | PartitionScheme::OverlapHetero => {
            let mut ids: Vec<InstanceId> = test_ids.to_vec();
            ids.sort_unstable();
            Ok(vec![ids; n_guests])
        }
        PartitionScheme::Dirichlet => {
            let labels = test_labels.ok_or_else(|| {
                CoreError::Validation(
                    "distributing a test set under the dirichlet scheme needs labels".into(),
                )
            })?;
            if labels.len() != test_ids.len() {
                return Err(CoreError::Validation("test labels must align with ids".into()));
            }
            let beta = manifest
                .params
                .get("beta")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| CoreError::Validation("manifest lacks beta".into()))?;
            let mut out = dirichlet_assign(test_ids, labels, n_guests, beta, manifest.seed)?;
            for shard in &mut out {
                shard.sort_unstable();
            }
            Ok(out)
        }
    }
}

/// Sorted intersection of host and guest instance ids.
pub fn link_instances(host: &Dataset, guest: &Dataset) -> Vec<InstanceId> {
    let mut shared: Vec<InstanceId> = guest
        .instance_ids()
        .iter()
        .copied()
        .filter(|id| host.contains_instance(*id))
        .collect();
    shared.sort_unstable();
    shared.dedup();
    shared
}

/// Reassemble host and guest shards into one dataset over the host's
/// instance set (ascending id order). Cells no party covers are missing;
/// where several parties cover a cell the first non-missing value wins.
pub fn merge_parties(host: &Dataset, guests: &[Dataset]) -> Result<Dataset> {
    let mut ids: Vec<InstanceId> = host.instance_ids().to_vec();
    ids.sort_unstable();

    let mut fids: Vec<FeatureId> = host.feature_ids().to_vec();
    for g in guests {
        for fid in g.feature_ids() {
            if !fids.contains(fid) {
                fids.push(*fid);
            }
        }
    }
    fids.sort_unstable();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(fids.len());
    for fid in &fids {
        let mut col = Vec::with_capacity(ids.len());
        for id in &ids {
            let mut v = if host.feature_ids().contains(fid) {
                host.value(*id, *fid)
            } else {
                MISSING
            };
            if v.is_nan() {
                for g in guests {
                    if g.feature_ids().contains(fid) && g.contains_instance(*id) {
                        let gv = g.value(*id, *fid);
                        if !gv.is_nan() {
                            v = gv;
                            break;
                        }
                    }
                }
            }
            col.push(v);
        }
        columns.push(col);
    }
    let labels = host.labels().map(|y| {
        ids.iter()
            .map(|id| y[host.row_of(*id).unwrap()])
            .collect::<Vec<f64>>()
    });
    Dataset::new(ids, fids, columns, labels)
}
