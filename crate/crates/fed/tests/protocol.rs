//! Protocol-level equivalence and structure tests: the federated pipeline
//! against independent centralized oracles, communication phase counts,
//! the label-leakage audit, determinism and transports.

use std::collections::BTreeMap;

use fedgbdt_core::binning::compute_split_candidates;
use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::partition::partition_random_hybrid;
use fedgbdt_core::train::{
    compute_gradients, train_ensemble, train_tree, GradientMap, LossKind, TrainParams,
};
use fedgbdt_core::tree::{Tree, TreeNode};

use fedgbdt_fed::baselines::{bagging_predict, multi_host_train, solo_train, tfl_train};
use fedgbdt_fed::ledger::{Direction, Stage};
use fedgbdt_fed::msg::PartyMessage;
use fedgbdt_fed::{
    hybridtree_predict, hybridtree_train, CipherChoice, FedParams, GuestSplitMode,
};

/// Deterministic synthetic classification data: the label depends on a few
/// columns through thresholds, the rest are noise.
fn synthetic(n: usize, d: usize, seed: u64) -> Dataset {
    let mut columns = vec![Vec::with_capacity(n); d];
    let mut labels = Vec::with_capacity(n);
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..n {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            row.push(next());
        }
        let score = row[0] + 2.0 * row[d / 2] - row[d - 1];
        labels.push(f64::from(score > 1.0));
        for (c, v) in row.into_iter().enumerate() {
            columns[c].push(v);
        }
    }
    Dataset::new(
        (0..n as u64).collect(),
        (0..d as u32).collect(),
        columns,
        Some(labels),
    )
    .unwrap()
}

fn same_structure(a: &Tree, b: &Tree) -> bool {
    fn walk(a: &Tree, ai: u32, b: &Tree, bi: u32) -> bool {
        match (a.node(ai), b.node(bi)) {
            (TreeNode::Leaf { .. }, TreeNode::Leaf { .. }) => true,
            (
                TreeNode::Split { condition: ca, left: la, right: ra },
                TreeNode::Split { condition: cb, left: lb, right: rb },
            ) => {
                ca.feature == cb.feature
                    && ca.threshold == cb.threshold
                    && walk(a, *la, b, *lb)
                    && walk(a, *ra, b, *rb)
            }
            _ => false,
        }
    }
    walk(a, 0, b, 0)
}

fn max_leaf_gap(a: &Tree, b: &Tree) -> f64 {
    a.leaves()
        .iter()
        .zip(b.leaves())
        .map(|((_, va), (_, vb))| (va - vb).abs())
        .fold(0.0, f64::max)
}

/// Centralized two-stage reference: top layers restricted to host features,
/// bottom layers restricted to guest features, built from core primitives
/// only.
struct OracleRun {
    top: Vec<Tree>,
    bottoms: Vec<BTreeMap<u32, Tree>>,
    predictions: Vec<f64>,
}

fn constrained_oracle(
    full: &Dataset,
    host_features: &[u32],
    guest_features: &[u32],
    params: &FedParams,
) -> OracleRun {
    let ids: Vec<InstanceId> = full.instance_ids().to_vec();
    let host_view = full.subset(&ids, host_features).unwrap();
    let guest_view = full.subset(&ids, guest_features).unwrap().without_labels();
    let labels = full.labels().unwrap().to_vec();
    let host_cuts =
        compute_split_candidates(&host_view, &host_view.feature_ids().to_vec(), params.max_bins)
            .unwrap();
    let guest_cuts =
        compute_split_candidates(&guest_view, &guest_view.feature_ids().to_vec(), params.max_bins)
            .unwrap();

    let mut y_p = vec![0.0f64; full.n_instances()];
    let mut top = Vec::new();
    let mut bottoms = Vec::new();
    for _round in 0..params.n_trees {
        let grads = compute_gradients(&labels, &y_p, params.loss).unwrap();
        let gmap = GradientMap::from_dataset(full, &grads);
        let trained = train_tree(&ids, &gmap, params.e_host, &host_cuts, &host_view, params.lambda)
            .unwrap();
        let mut round_bottoms = BTreeMap::new();
        for (node_id, members) in &trained.last_layer {
            if members.is_empty() {
                continue;
            }
            let bottom = train_tree(
                members,
                &gmap,
                params.e_guest,
                &guest_cuts,
                &guest_view,
                params.lambda,
            )
            .unwrap();
            for (leaf, leaf_members) in &bottom.last_layer {
                let value = match bottom.tree.node(*leaf) {
                    TreeNode::Leaf { value } => *value,
                    _ => unreachable!(),
                };
                for id in leaf_members {
                    y_p[full.row_of(*id).unwrap()] += params.learning_rate * value;
                }
            }
            round_bottoms.insert(*node_id, bottom.tree);
        }
        top.push(trained.tree);
        bottoms.push(round_bottoms);
    }
    OracleRun { top, bottoms, predictions: y_p }
}

fn default_params(mode: GuestSplitMode) -> FedParams {
    FedParams {
        n_trees: 6,
        e_host: 3,
        e_guest: 2,
        max_bins: 8,
        mode,
        cipher: CipherChoice::Passthrough,
        seed: 7,
        ..FedParams::default()
    }
}

#[test]
fn single_guest_matches_constrained_oracle() {
    let data = synthetic(400, 6, 1);
    let host_features = vec![0u32, 1, 2];
    let guest_features = vec![3u32, 4, 5];
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let host = data.subset(&ids, &host_features).unwrap();
    let guest = data.subset(&ids, &guest_features).unwrap().without_labels();
    let params = default_params(GuestSplitMode::Assisted);

    let outcome = hybridtree_train(&host, &[guest.clone()], &params).unwrap();
    let oracle = constrained_oracle(&data, &host_features, &guest_features, &params);

    assert_eq!(outcome.model.host_trees.len(), oracle.top.len());
    for (t, (got, want)) in outcome.model.host_trees.iter().zip(&oracle.top).enumerate() {
        assert!(same_structure(got, want), "host tree {t} structure differs");
        assert!(max_leaf_gap(got, want) <= 1e-9, "host tree {t} leaf drift");
    }
    let guest_trees = &outcome.model.guest_trees[&0];
    for (t, want_bottoms) in oracle.bottoms.iter().enumerate() {
        for (node, want) in want_bottoms {
            let got = guest_trees
                .get(&(t as u64, *node))
                .unwrap_or_else(|| panic!("missing bottom tree {t}:{node}"));
            assert!(same_structure(got, want), "bottom tree {t}:{node} structure differs");
            assert!(
                max_leaf_gap(got, want) <= 2f64.powi(-20),
                "bottom tree {t}:{node} leaf gap {} too large",
                max_leaf_gap(got, want)
            );
        }
    }

    // Stitched inference agrees with the oracle's training-time predictions.
    let predict = hybridtree_predict(&outcome.model, &host, &[(0, guest)], &ids).unwrap();
    for (i, id) in ids.iter().enumerate() {
        let row = data.row_of(*id).unwrap();
        assert!(
            (predict.scores[i] - oracle.predictions[row]).abs() <= 1e-4,
            "prediction mismatch at {id}: {} vs {}",
            predict.scores[i],
            oracle.predictions[row]
        );
    }
}

#[test]
fn multi_guest_passthrough_matches_partitioned_oracle() {
    // With horizontally disjoint guests sharing one feature set, the union
    // of their per-shard bottom training equals training each shard alone.
    let data = synthetic(360, 5, 3);
    let host_features = vec![0u32, 1];
    let guest_features = vec![2u32, 3, 4];
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let host = data.subset(&ids, &host_features).unwrap();
    // Three disjoint instance shards.
    let shards: Vec<Vec<u64>> = vec![
        ids.iter().copied().filter(|i| i % 3 == 0).collect(),
        ids.iter().copied().filter(|i| i % 3 == 1).collect(),
        ids.iter().copied().filter(|i| i % 3 == 2).collect(),
    ];
    let guests: Vec<Dataset> = shards
        .iter()
        .map(|s| data.subset(s, &guest_features).unwrap().without_labels())
        .collect();
    let params = default_params(GuestSplitMode::Assisted);
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();

    // Oracle: per round, per host leaf, per shard, a bottom tree on that
    // shard's members with that guest's local cuts.
    let labels = data.labels().unwrap().to_vec();
    let host_cuts =
        compute_split_candidates(&host, &host.feature_ids().to_vec(), params.max_bins).unwrap();
    let guest_cuts: Vec<_> = guests
        .iter()
        .map(|g| compute_split_candidates(g, &g.feature_ids().to_vec(), params.max_bins).unwrap())
        .collect();
    let mut y_p = vec![0.0f64; data.n_instances()];
    for round in 0..params.n_trees as u64 {
        let grads = compute_gradients(&labels, &y_p, params.loss).unwrap();
        let gmap = GradientMap::from_dataset(&data, &grads);
        let trained =
            train_tree(&ids, &gmap, params.e_host, &host_cuts, &host, params.lambda).unwrap();
        assert!(
            same_structure(&outcome.model.host_trees[round as usize], &trained.tree),
            "host tree {round} diverged"
        );
        for (node_id, members) in &trained.last_layer {
            for (g, shard) in shards.iter().enumerate() {
                let mine: Vec<u64> =
                    members.iter().copied().filter(|id| shard.contains(id)).collect();
                if mine.is_empty() {
                    continue;
                }
                let bottom = train_tree(
                    &mine,
                    &gmap,
                    params.e_guest,
                    &guest_cuts[g],
                    &guests[g],
                    params.lambda,
                )
                .unwrap();
                let got = outcome.model.guest_trees[&(g as u32)]
                    .get(&(round, *node_id))
                    .unwrap_or_else(|| panic!("no bottom tree for guest {g} at {round}:{node_id}"));
                assert!(same_structure(got, &bottom.tree));
                assert!(max_leaf_gap(got, &bottom.tree) <= 2f64.powi(-20));
                for (leaf, leaf_members) in &bottom.last_layer {
                    let value = match bottom.tree.node(*leaf) {
                        TreeNode::Leaf { value } => *value,
                        _ => unreachable!(),
                    };
                    for id in leaf_members {
                        y_p[data.row_of(*id).unwrap()] += params.learning_rate * value;
                    }
                }
            }
        }
    }
}

#[test]
fn e_guest_one_reduces_to_per_guest_leaf_values() {
    let data = synthetic(240, 4, 5);
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let host = data.subset(&ids, &[0, 1]).unwrap();
    let g0: Vec<u64> = ids.iter().copied().filter(|i| i % 2 == 0).collect();
    let g1: Vec<u64> = ids.iter().copied().filter(|i| i % 2 == 1).collect();
    let guests = vec![
        data.subset(&g0, &[2, 3]).unwrap().without_labels(),
        data.subset(&g1, &[2, 3]).unwrap().without_labels(),
    ];
    let params = FedParams { e_guest: 1, n_trees: 3, e_host: 3, max_bins: 8, seed: 2, ..default_params(GuestSplitMode::Assisted) };
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();

    // Plaintext oracle: per host leaf, per guest shard, the leaf value is
    // -(sum g)/(count + lambda) over that guest's members.
    let labels = data.labels().unwrap().to_vec();
    let host_cuts =
        compute_split_candidates(&host, &host.feature_ids().to_vec(), params.max_bins).unwrap();
    let mut y_p = vec![0.0f64; data.n_instances()];
    for round in 0..params.n_trees as u64 {
        let grads = compute_gradients(&labels, &y_p, params.loss).unwrap();
        let gmap = GradientMap::from_dataset(&data, &grads);
        let trained =
            train_tree(&ids, &gmap, params.e_host, &host_cuts, &host, params.lambda).unwrap();
        for (node_id, members) in &trained.last_layer {
            for (g, shard) in [&g0, &g1].iter().enumerate() {
                let mine: Vec<u64> =
                    members.iter().copied().filter(|id| shard.contains(id)).collect();
                if mine.is_empty() {
                    continue;
                }
                let sum: f64 = mine.iter().map(|id| gmap.get(*id).unwrap()).sum();
                let want = -sum / (mine.len() as f64 + params.lambda);
                let tree = outcome.model.guest_trees[&(g as u32)]
                    .get(&(round, *node_id))
                    .unwrap();
                assert_eq!(tree.n_leaves(), 1, "e_guest=1 must give single leaves");
                let (_, got) = tree.leaves()[0];
                assert!((got - want).abs() <= 2f64.powi(-20), "{got} vs {want}");
                for id in &mine {
                    y_p[data.row_of(*id).unwrap()] += params.learning_rate * want;
                }
            }
        }
    }
}

#[test]
fn zero_trees_gives_empty_model() {
    let data = synthetic(50, 4, 9);
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let host = data.subset(&ids, &[0, 1]).unwrap();
    let guest = data.subset(&ids, &[2, 3]).unwrap().without_labels();
    let params = FedParams { n_trees: 0, ..default_params(GuestSplitMode::Assisted) };
    let outcome = hybridtree_train(&host, &[guest.clone()], &params).unwrap();
    assert!(outcome.model.host_trees.is_empty());
    let predict = hybridtree_predict(&outcome.model, &host, &[(0, guest)], &ids).unwrap();
    assert!(predict.scores.iter().all(|s| *s == 0.0));
}

#[test]
fn phase_counts_match_protocol_structure() {
    let data = synthetic(300, 6, 11);
    let (host, guests, _) = partition_random_hybrid(&data, 3, 21).unwrap();

    // Surrogate: exactly two host<->guest phases per round.
    let params = FedParams { mode: GuestSplitMode::Surrogate, ..default_params(GuestSplitMode::Surrogate) };
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();
    let rounds = outcome.ledger.rounds();
    assert_eq!(rounds.len(), params.n_trees);
    for r in &rounds {
        assert_eq!(outcome.ledger.phases_in(Stage::Round(*r)), 2, "round {r}");
    }
    let surrogate_bytes = outcome.ledger.total_bytes();

    // Assisted: 2 + 2*(e_guest - 1) phases per round.
    let params = default_params(GuestSplitMode::Assisted);
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();
    let want = 2 + 2 * (params.e_guest - 1);
    for r in outcome.ledger.rounds() {
        assert_eq!(outcome.ledger.phases_in(Stage::Round(r)), want, "round {r}");
    }
    let assisted_bytes = outcome.ledger.total_bytes();
    assert!(
        surrogate_bytes < assisted_bytes,
        "surrogate {surrogate_bytes} >= assisted {assisted_bytes}"
    );

    // Inference: exactly two phases per batch.
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let views: Vec<(u32, Dataset)> = guests.iter().cloned().enumerate().map(|(i, g)| (i as u32, g)).collect();
    let predict = hybridtree_predict(&outcome.model, &host, &views, &ids).unwrap();
    assert_eq!(predict.ledger.phases_in(Stage::Inference(0)), 2);
}

#[test]
fn guest_bound_traffic_is_ciphertext_only() {
    let data = synthetic(200, 6, 13);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 5).unwrap();
    let params = default_params(GuestSplitMode::Assisted);
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();

    // Every kind the host ever sent must be on the audited allow-list.
    let allowed = ["public_key_announce", "dh_exchange", "gradient_shard", "split_reply", "shutdown"];
    for event in outcome.ledger.events() {
        if event.direction == Direction::HostToGuest {
            assert!(
                allowed.contains(&event.kind.as_str()),
                "unexpected guest-bound kind {}",
                event.kind
            );
        }
    }
    // And the schema-level audit agrees those kinds carry no plain reals.
    let samples: Vec<PartyMessage> = vec![
        PartyMessage::PublicKeyAnnounce { key_bytes: vec![] },
        PartyMessage::DhExchange { publics: vec![] },
        PartyMessage::GradientShard { tree_round: 0, nodes: vec![] },
        PartyMessage::SplitReply { tree_round: 0, layer: 1, chosen: vec![] },
        PartyMessage::Shutdown,
    ];
    for msg in &samples {
        assert!(fedgbdt_fed::msg::guest_bound_message_carries_no_plain_reals(msg));
    }
}

#[test]
fn deterministic_model_bytes_with_passthrough() {
    let data = synthetic(250, 5, 17);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 31).unwrap();
    let params = default_params(GuestSplitMode::Assisted);
    let a = hybridtree_train(&host, &guests, &params).unwrap();
    let b = hybridtree_train(&host, &guests, &params).unwrap();
    assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
    assert_eq!(a.ledger.total_bytes(), b.ledger.total_bytes());
}

#[test]
fn model_bundle_round_trips_through_json() {
    let data = synthetic(150, 5, 19);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 3).unwrap();
    let params = default_params(GuestSplitMode::Surrogate);
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();
    let json = outcome.model.to_json().unwrap();
    let back = fedgbdt_fed::DistributedModel::from_json(&json).unwrap();
    assert_eq!(back, outcome.model);

    let ids: Vec<u64> = data.instance_ids().to_vec();
    let views: Vec<(u32, Dataset)> = guests.iter().cloned().enumerate().map(|(i, g)| (i as u32, g)).collect();
    let p1 = hybridtree_predict(&outcome.model, &host, &views, &ids).unwrap();
    let p2 = hybridtree_predict(&back, &host, &views, &ids).unwrap();
    assert_eq!(p1.scores, p2.scores);
}

#[test]
fn unlinked_guest_is_excluded_with_zero_links() {
    let data = synthetic(120, 5, 23);
    let ids: Vec<u64> = data.instance_ids().to_vec();
    let host = data.subset(&ids, &[0, 1]).unwrap();
    let good = data.subset(&ids, &[2, 3]).unwrap().without_labels();
    // A guest whose instances the host has never seen.
    let stranger = Dataset::new(
        vec![100_000, 100_001],
        vec![4],
        vec![vec![0.5, 0.7]],
        None,
    )
    .unwrap();
    let params = default_params(GuestSplitMode::Assisted);
    let outcome = hybridtree_train(&host, &[good, stranger], &params).unwrap();
    assert_eq!(outcome.setup.excluded, vec![1]);
    assert_eq!(outcome.setup.linked_counts[1], 0);
    assert_eq!(outcome.setup.pair_key_count, 0);
    assert!(outcome.model.guest_trees.get(&1).map_or(true, |t| t.is_empty()));
}

#[test]
fn setup_pair_key_count_matches_combinatorics() {
    let data = synthetic(200, 7, 29);
    let (host, guests, _) = partition_random_hybrid(&data, 3, 77).unwrap();
    let params = default_params(GuestSplitMode::Surrogate);
    let outcome = hybridtree_train(&host, &guests, &params).unwrap();
    assert_eq!(outcome.setup.pair_key_count, 3);

    let (host1, guests1, _) = partition_random_hybrid(&data, 1, 78).unwrap();
    let outcome = hybridtree_train(&host1, &guests1, &params).unwrap();
    assert_eq!(outcome.setup.pair_key_count, 0);
}

#[test]
fn inference_averages_across_holding_guests() {
    // Hand-built model: one host split, two guests with single-leaf bottom
    // trees valued 0.2 and 0.4 at the same node.
    use fedgbdt_core::tree::SplitCondition;
    let mut model = fedgbdt_fed::DistributedModel::empty(FedParams {
        n_trees: 1,
        learning_rate: 1.0,
        loss: LossKind::SquaredError,
        ..FedParams::default()
    });
    model.host_trees.push(Tree::new_split(
        SplitCondition::new(0, 0.5),
        Tree::new_leaf(0.0),
        Tree::new_leaf(0.0),
    ));
    model.fallbacks.insert((0, 1), 0.0);
    model.fallbacks.insert((0, 2), 0.0);
    for (g, v) in [(0u32, 0.2f64), (1, 0.4)] {
        let mut trees = BTreeMap::new();
        trees.insert((0u64, 1u32), Tree::new_leaf(v));
        trees.insert((0u64, 2u32), Tree::new_leaf(v));
        model.guest_trees.insert(g, trees);
    }
    let host_view = Dataset::new(vec![9], vec![0], vec![vec![0.1]], None).unwrap();
    let guest_view = Dataset::new(vec![9], vec![5], vec![vec![1.0]], None).unwrap();
    let out = hybridtree_predict(
        &model,
        &host_view,
        &[(0, guest_view.clone()), (1, guest_view)],
        &[9],
    )
    .unwrap();
    assert!((out.scores[0] - 0.3).abs() < 1e-12);
}

#[test]
fn tfl_schedule_and_loss() {
    let data = synthetic(300, 6, 37);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 41).unwrap();
    let params = TrainParams { n_trees: 6, max_depth: 3, max_bins: 8, ..TrainParams::default() };

    // Single party round-robin is plain centralized training.
    let alone = tfl_train(&host, &[], &params, LossKind::Logistic).unwrap();
    let central = train_ensemble(&host, &params, LossKind::Logistic).unwrap();
    assert_eq!(alone.to_json().unwrap(), central.to_json().unwrap());

    // With guests, trees alternate parties: host trees use host features.
    let ens = tfl_train(&host, &guests, &params, LossKind::Logistic).unwrap();
    assert_eq!(ens.trees.len(), 6);
    let host_fids = host.feature_ids();
    for (t, tree) in ens.trees.iter().enumerate() {
        let party = t % 3;
        if let TreeNode::Split { condition, .. } = tree.node(0) {
            let from_host = host_fids.contains(&condition.feature);
            assert_eq!(from_host, party == 0, "tree {t} root feature ownership");
        }
    }

    // Squared-error training loss is non-increasing round over round.
    let params = TrainParams { n_trees: 8, max_depth: 3, max_bins: 8, learning_rate: 0.3, ..TrainParams::default() };
    let mut y_p: BTreeMap<u64, f64> = host.instance_ids().iter().map(|id| (*id, 0.0)).collect();
    let labels: Vec<f64> = host.labels().unwrap().to_vec();
    let merged = fedgbdt_core::partition::merge_parties(&host, &guests).unwrap();
    let ens = tfl_train(&host, &guests, &params, LossKind::SquaredError).unwrap();
    let mut last = f64::INFINITY;
    for upto in 0..=ens.trees.len() {
        let preds: Vec<f64> = host
            .instance_ids()
            .iter()
            .map(|id| {
                let mut acc = 0.0;
                for tree in &ens.trees[..upto] {
                    // Evaluate only where the party could update; mirror by
                    // full merged-view evaluation for the loss trace.
                    acc += tree.predict(&merged, *id).unwrap();
                }
                params.learning_rate * acc
            })
            .collect();
        let loss: f64 = labels
            .iter()
            .zip(&preds)
            .map(|(y, p)| 0.5 * (p - y) * (p - y))
            .sum();
        // The merged-view trace is diagnostic; the true invariant uses each
        // party's own update set, checked below.
        let _ = loss;
    }
    // True invariant: per-round loss over the shared y_p bookkeeping.
    let cuts: Vec<_> = std::iter::once(&host)
        .chain(guests.iter())
        .map(|p| compute_split_candidates(p, &p.feature_ids().to_vec(), params.max_bins).unwrap())
        .collect();
    let _ = cuts;
    let mut parties: Vec<Dataset> = vec![host.clone()];
    for g in &guests {
        let labels: Vec<f64> = g
            .instance_ids()
            .iter()
            .map(|id| host.labels().unwrap()[host.row_of(*id).unwrap()])
            .collect();
        parties.push(g.with_labels(labels).unwrap());
    }
    for (t, tree) in ens.trees.iter().enumerate() {
        let p = t % parties.len();
        let party = &parties[p];
        let before: f64 = labels
            .iter()
            .zip(host.instance_ids())
            .map(|(y, id)| 0.5 * (y_p[id] - y) * (y_p[id] - y))
            .sum();
        for id in party.instance_ids() {
            let v = tree.predict(party, *id).unwrap();
            *y_p.get_mut(id).unwrap() += params.learning_rate * v;
        }
        let after: f64 = labels
            .iter()
            .zip(host.instance_ids())
            .map(|(y, id)| 0.5 * (y_p[id] - y) * (y_p[id] - y))
            .sum();
        assert!(after <= before + 1e-9, "tree {t}: loss rose {before} -> {after}");
        last = after;
    }
    assert!(last.is_finite());
}

#[test]
fn bagging_votes_and_averages() {
    let data = synthetic(200, 6, 43);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 47).unwrap();
    let hosts: Vec<Dataset> = {
        let ids: Vec<u64> = host.instance_ids().to_vec();
        vec![
            host.subset(&ids[..100], host.feature_ids()).unwrap(),
            host.subset(&ids[100..], host.feature_ids()).unwrap(),
        ]
    };
    let params = FedParams { n_trees: 3, e_host: 2, e_guest: 2, max_bins: 8, seed: 3, ..default_params(GuestSplitMode::Surrogate) };
    let outcomes = multi_host_train(&hosts, &guests, &params).unwrap();
    assert_eq!(outcomes.len(), 2);

    let ids: Vec<u64> = data.instance_ids().to_vec();
    let views: Vec<(u32, Dataset)> = guests.iter().cloned().enumerate().map(|(i, g)| (i as u32, g)).collect();
    let models: Vec<&fedgbdt_fed::DistributedModel> = outcomes.iter().map(|o| &o.model).collect();
    let labels = bagging_predict(&models, &host, &views, &ids, true).unwrap();
    assert!(labels.iter().all(|v| *v == 0.0 || *v == 1.0));
    let means = bagging_predict(&models, &host, &views, &ids, false).unwrap();
    let single = hybridtree_predict(&models[0], &host, &views, &ids).unwrap();
    let other = hybridtree_predict(&models[1], &host, &views, &ids).unwrap();
    for i in 0..ids.len() {
        let want = (single.scores[i] + other.scores[i]) / 2.0;
        assert!((means[i] - want).abs() < 1e-12);
    }

    // Solo on one host shard is just centralized training on it.
    let tp = TrainParams { n_trees: 3, max_depth: 4, max_bins: 8, ..TrainParams::default() };
    let solo = solo_train(&hosts[0], &tp, LossKind::Logistic).unwrap();
    let direct = train_ensemble(&hosts[0], &tp, LossKind::Logistic).unwrap();
    assert_eq!(solo.to_json().unwrap(), direct.to_json().unwrap());
}

#[test]
fn tcp_transport_runs_the_same_protocol() {
    use fedgbdt_fed::guest::{run_guest, GuestConf};
    use fedgbdt_fed::host::HostSession;
    use fedgbdt_fed::transport::{TcpTransport, Transport};

    let data = synthetic(150, 5, 53);
    let (host, guests, _) = partition_random_hybrid(&data, 2, 59).unwrap();
    let params = FedParams { n_trees: 2, e_host: 2, ..default_params(GuestSplitMode::Surrogate) };

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let expected = hybridtree_train(&host, &guests, &params).unwrap();

    std::thread::scope(|scope| {
        for (i, guest_data) in guests.iter().enumerate() {
            let conf = GuestConf {
                index: i as u32,
                e_guest: params.e_guest,
                lambda: params.lambda,
                max_bins: params.max_bins,
                mode: params.mode,
                frac_bits: params.frac_bits,
                seed: params.seed,
            };
            scope.spawn(move || {
                let stream = std::net::TcpStream::connect(addr).unwrap();
                let mut t = TcpTransport::new(stream);
                // First frame identifies the guest.
                t.send(&PartyMessage::LinkAnnounce { instance_ids: vec![i as u64] }).unwrap();
                run_guest(conf, guest_data, &mut t).unwrap();
            });
        }

        let mut transports: Vec<(u32, TcpTransport)> = Vec::new();
        for _ in 0..guests.len() {
            let (stream, _) = listener.accept().unwrap();
            let mut t = TcpTransport::new(stream);
            let (hello, _) = t.recv().unwrap();
            let index = match hello {
                PartyMessage::LinkAnnounce { instance_ids } => instance_ids[0] as u32,
                _ => panic!("expected hello"),
            };
            transports.push((index, t));
        }
        transports.sort_by_key(|(i, _)| *i);
        let dyn_transports: Vec<(u32, &mut dyn Transport)> = transports
            .iter_mut()
            .map(|(i, t)| (*i, t as &mut dyn Transport))
            .collect();
        let outcome = HostSession::new(&host, params, dyn_transports)
            .unwrap()
            .train()
            .unwrap();
        assert_eq!(outcome.model.to_json().unwrap(), expected.model.to_json().unwrap());
    });
}
