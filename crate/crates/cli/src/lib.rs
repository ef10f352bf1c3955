//! Command implementations behind the `fedgbdt` binary: dataset
//! partitioning, training every method, prediction, split-rule analysis
//! and benchmark sweeps. Exit codes: 0 success, 1 runtime failure, 2
//! configuration error.

pub mod config;
pub mod error;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use fedgbdt_core::binning::compute_split_candidates;
use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::io::{parse_csv, parse_libsvm, write_csv};
use fedgbdt_core::meta::{
    extract_rules, meta_rule_prevalence, recompute_leaves, test_meta_rule, transform_tree,
    verify_transformation, MetaRuleOutcome, SplitRule,
};
use fedgbdt_core::metrics::{accuracy, auprc};
use fedgbdt_core::partition::{
    link_instances, merge_parties, partition_dirichlet, partition_overlap_hetero,
    partition_random_hybrid, OverlapOptions, PartitionManifest, PartitionScheme,
};
use fedgbdt_core::train::{compute_gradients, sigmoid, Ensemble, GradientMap, LossKind};
use fedgbdt_fed::baselines::{allin_train, bagging_predict, multi_host_train, solo_train, tfl_train};
use fedgbdt_fed::{hybridtree_predict, hybridtree_train, DistributedModel};

pub use config::{parse_cipher, ConfigFile, Method, Metric, Resolved};
pub use error::{CliError, Result};

/// Load a dataset, dispatching on extension: `.libsvm`/`.svm`/`.txt` use
/// the sparse reader, everything else is CSV.
pub fn load_dataset(
    path: &Path,
    label_column: Option<&str>,
    id_column: Option<&str>,
) -> Result<Dataset> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let ds = if matches!(ext, "libsvm" | "svm" | "txt") {
        parse_libsvm(path)?
    } else {
        parse_csv(path, label_column, id_column)?
    };
    Ok(ds)
}

fn is_empty_input(err: &CliError) -> bool {
    matches!(err, CliError::Runtime(msg) if msg.contains("no rows"))
}

pub struct PartitionArgs {
    pub input: PathBuf,
    pub scheme: PartitionScheme,
    pub guests: usize,
    pub beta: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub label_column: String,
    pub id_column: Option<String>,
}

/// Write host/guest datasets plus a replayable manifest.
pub fn cmd_partition(args: &PartitionArgs) -> Result<PathBuf> {
    if args.guests == 0 {
        return Err(CliError::Config("--guests must be at least 1".into()));
    }
    let data = load_dataset(&args.input, Some(&args.label_column), args.id_column.as_deref())?;
    std::fs::create_dir_all(&args.output_dir)?;

    let (host, guests, manifest) = match args.scheme {
        PartitionScheme::RandomHybrid => partition_random_hybrid(&data, args.guests, args.seed)?,
        PartitionScheme::Dirichlet => {
            // Vertical split first (single pooled guest), then label-skewed
            // horizontal redistribution of the pool.
            let (host, pool, vertical) = partition_random_hybrid(&data, 1, args.seed)?;
            let pool = &pool[0];
            let labels: Vec<f64> = pool
                .instance_ids()
                .iter()
                .map(|id| host.label_of(*id).expect("pool instances are host instances"))
                .collect();
            let (guests, mut manifest) =
                partition_dirichlet(pool, &labels, args.guests, args.beta, args.seed)?;
            manifest.host = vertical.host.clone();
            (host, guests, manifest)
        }
        PartitionScheme::OverlapHetero => {
            let (host, base, vertical) =
                partition_random_hybrid(&data, args.guests.max(2), args.seed)?;
            let (guests, mut manifest) =
                partition_overlap_hetero(&base, args.seed, OverlapOptions::default())?;
            manifest.host = vertical.host.clone();
            (host, guests, manifest)
        }
    };

    write_csv(&host, &args.output_dir.join("host.csv"))?;
    for (i, guest) in guests.iter().enumerate() {
        write_csv(guest, &args.output_dir.join(format!("guest{i}.csv")))?;
    }
    let manifest_path = args.output_dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json()?)?;
    Ok(manifest_path)
}

/// The parties of a previously written partition.
pub struct Parties {
    pub host: Dataset,
    pub guests: Vec<Dataset>,
    pub manifest: PartitionManifest,
}

pub fn load_parties(manifest_path: &Path) -> Result<Parties> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Runtime(format!("cannot read manifest: {e}")))?;
    let manifest = PartitionManifest::from_json(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let host = parse_csv(&dir.join("host.csv"), Some("label"), Some("id"))?;
    let mut guests = Vec::with_capacity(manifest.guests.len());
    for shard in &manifest.guests {
        // A fully skewed draw can leave a guest with no instances at all;
        // its CSV is header-only, which the parser treats as empty input.
        let guest = if shard.instance_ids.is_empty() {
            let cols = vec![Vec::new(); shard.feature_ids.len()];
            Dataset::new(Vec::new(), shard.feature_ids.clone(), cols, None)?
        } else {
            parse_csv(&dir.join(format!("guest{}.csv", shard.id)), None, Some("id"))?
        };
        guests.push(guest);
    }
    Ok(Parties { host, guests, manifest })
}

#[derive(Debug, Serialize)]
pub struct MetricsRecord {
    pub method: String,
    pub seed: u64,
    pub metric: String,
    pub value: Option<f64>,
    pub train_seconds: f64,
    pub host_seconds: Option<f64>,
    pub guest_seconds: Option<f64>,
    pub comm_bytes: Option<usize>,
    pub comm_messages: Option<usize>,
    pub model_path: Option<String>,
}

pub fn append_metrics(path: &Path, record: &MetricsRecord) -> Result<()> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{}", serde_json::to_string(record)?)?;
    Ok(())
}

pub struct TrainArgs {
    pub config: Resolved,
    pub train: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
}

pub struct TrainSummary {
    pub method: Method,
    pub metric_value: Option<f64>,
    pub record: MetricsRecord,
}

fn evaluate(
    metric: Metric,
    labels: &[f64],
    probabilities: &[f64],
) -> Result<f64> {
    let v = match metric {
        Metric::Accuracy => accuracy(labels, probabilities)?,
        Metric::Auprc => auprc(labels, probabilities)?,
    };
    Ok(v)
}

fn ensemble_probabilities(ens: &Ensemble, data: &Dataset) -> Result<Vec<f64>> {
    data.instance_ids()
        .iter()
        .map(|id| ens.predict_proba(data, *id).map_err(CliError::from))
        .collect()
}

/// Test-time feature views per party: the host sees its feature columns
/// for every test instance; test instances are distributed among guests
/// the same way the training partition distributed them, so each guest
/// holds its feature columns for its own test shard.
pub fn test_views(
    test: &Dataset,
    manifest: &PartitionManifest,
) -> Result<(Dataset, Vec<(u32, Dataset)>)> {
    let ids: Vec<InstanceId> = test.instance_ids().to_vec();
    let host_view = test.subset(&ids, &manifest.host.feature_ids)?;
    let assigned = fedgbdt_core::partition::assign_test_instances(manifest, &ids, test.labels())?;
    let mut guest_views = Vec::with_capacity(manifest.guests.len());
    for (shard, shard_ids) in manifest.guests.iter().zip(assigned) {
        let fids: Vec<u32> = shard
            .feature_ids
            .iter()
            .copied()
            .filter(|f| test.feature_ids().contains(f))
            .collect();
        guest_views.push((shard.id, test.subset(&shard_ids, &fids)?.without_labels()));
    }
    Ok((host_view, guest_views))
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let cfg = &args.config;
    cfg.validate_for(cfg.method)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let started = Instant::now();
    let mut host_seconds = None;
    let mut guest_seconds = None;
    let mut comm_bytes = None;
    let mut comm_messages = None;

    enum Trained {
        Central(Ensemble),
        Distributed(Box<DistributedModel>),
        Bagged(Vec<DistributedModel>),
    }

    let parties = match &args.manifest {
        Some(path) => Some(load_parties(path)?),
        None => None,
    };

    let trained = match cfg.method {
        Method::Allin => {
            let data = match (&args.train, &parties) {
                (Some(path), _) => {
                    load_dataset(path, Some(&cfg.label_column), cfg.id_column.as_deref())?
                }
                (None, Some(p)) => merge_parties(&p.host, &p.guests)?,
                (None, None) => {
                    return Err(CliError::Config("allin needs --train or --manifest".into()))
                }
            };
            Trained::Central(allin_train(&data, &cfg.train_params(), cfg.loss)?)
        }
        Method::Solo => {
            let p = parties
                .as_ref()
                .ok_or_else(|| CliError::Config("solo needs --manifest".into()))?;
            Trained::Central(solo_train(&p.host, &cfg.train_params(), cfg.loss)?)
        }
        Method::Tfl => {
            let p = parties
                .as_ref()
                .ok_or_else(|| CliError::Config("tfl needs --manifest".into()))?;
            Trained::Central(tfl_train(&p.host, &p.guests, &cfg.train_params(), cfg.loss)?)
        }
        Method::Hybridtree => {
            let p = parties
                .as_ref()
                .ok_or_else(|| CliError::Config("hybridtree needs --manifest".into()))?;
            let outcome = hybridtree_train(&p.host, &p.guests, &cfg.fed_params())?;
            host_seconds = Some(outcome.host_seconds);
            guest_seconds = Some(outcome.guest_seconds);
            comm_bytes = Some(outcome.ledger.total_bytes());
            comm_messages = Some(outcome.ledger.total_messages());
            Trained::Distributed(Box::new(outcome.model))
        }
        Method::Multihost => {
            let p = parties
                .as_ref()
                .ok_or_else(|| CliError::Config("multihost needs --manifest".into()))?;
            if cfg.hosts == 0 {
                return Err(CliError::Config("--hosts must be at least 1".into()));
            }
            // Partition the host's instances into equal random shards.
            let mut ids: Vec<InstanceId> = p.host.instance_ids().to_vec();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);
            ids.shuffle(&mut rng);
            let per = ids.len().div_ceil(cfg.hosts);
            let hosts: Vec<Dataset> = ids
                .chunks(per)
                .map(|chunk| {
                    let mut c = chunk.to_vec();
                    c.sort_unstable();
                    p.host.subset(&c, p.host.feature_ids())
                })
                .collect::<std::result::Result<_, _>>()?;
            let outcomes = multi_host_train(&hosts, &p.guests, &cfg.fed_params())?;
            comm_bytes = Some(outcomes.iter().map(|o| o.ledger.total_bytes()).sum());
            comm_messages = Some(outcomes.iter().map(|o| o.ledger.total_messages()).sum());
            host_seconds = Some(outcomes.iter().map(|o| o.host_seconds).sum());
            guest_seconds = Some(outcomes.iter().map(|o| o.guest_seconds).sum());
            Trained::Bagged(outcomes.into_iter().map(|o| o.model).collect())
        }
    };
    let train_seconds = started.elapsed().as_secs_f64();

    // Optional evaluation on a test set.
    let metric_value = match &args.test {
        None => None,
        Some(test_path) => {
            let test = load_dataset(test_path, Some(&cfg.label_column), cfg.id_column.as_deref())?;
            let labels = test
                .labels()
                .ok_or_else(|| CliError::Runtime("test set has no labels".into()))?
                .to_vec();
            let probs = match &trained {
                Trained::Central(ens) => ensemble_probabilities(ens, &test)?,
                Trained::Distributed(model) => {
                    let p = parties.as_ref().unwrap();
                    let (host_view, guest_views) = test_views(&test, &p.manifest)?;
                    let out = hybridtree_predict(
                        model,
                        &host_view,
                        &guest_views,
                        &test.instance_ids().to_vec(),
                    )?;
                    out.probabilities(cfg.loss)
                }
                Trained::Bagged(models) => {
                    let p = parties.as_ref().unwrap();
                    let (host_view, guest_views) = test_views(&test, &p.manifest)?;
                    let refs: Vec<&DistributedModel> = models.iter().collect();
                    bagging_predict(
                        &refs,
                        &host_view,
                        &guest_views,
                        &test.instance_ids().to_vec(),
                        cfg.metric == Metric::Accuracy,
                    )?
                }
            };
            Some(evaluate(cfg.metric, &labels, &probs)?)
        }
    };

    let model_path = match &args.model_out {
        None => None,
        Some(path) => {
            let text = match &trained {
                Trained::Central(ens) => ens.to_json()?,
                Trained::Distributed(model) => model.to_json()?,
                Trained::Bagged(models) => {
                    let bundles: Vec<serde_json::Value> = models
                        .iter()
                        .map(|m| m.to_json().map(|s| serde_json::from_str(&s).unwrap()))
                        .collect::<std::result::Result<_, _>>()?;
                    serde_json::to_string(&json!({ "models": bundles }))?
                }
            };
            std::fs::write(path, text)?;
            Some(path.display().to_string())
        }
    };

    let record = MetricsRecord {
        method: cfg.method.to_string(),
        seed: cfg.seed,
        metric: cfg.metric.to_string(),
        value: metric_value,
        train_seconds,
        host_seconds,
        guest_seconds,
        comm_bytes,
        comm_messages,
        model_path,
    };
    if let Some(path) = &args.metrics_out {
        append_metrics(path, &record)?;
    }
    Ok(TrainSummary { method: cfg.method, metric_value, record })
}

/// Any of the model artifacts the train command can write.
pub enum LoadedModel {
    Central(Ensemble),
    Distributed(Box<DistributedModel>),
    Bagged(Vec<DistributedModel>),
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read model: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("models").is_some() {
        let mut models = Vec::new();
        for bundle in value["models"].as_array().unwrap_or(&Vec::new()) {
            models.push(DistributedModel::from_json(&serde_json::to_string(bundle)?)?);
        }
        return Ok(LoadedModel::Bagged(models));
    }
    if value.get("host_trees").is_some() {
        return Ok(LoadedModel::Distributed(Box::new(DistributedModel::from_json(&text)?)));
    }
    Ok(LoadedModel::Central(Ensemble::from_json(&text)?))
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub test: PathBuf,
    pub manifest: Option<PathBuf>,
    pub output: PathBuf,
    pub metric: Option<Metric>,
    pub label_column: String,
    pub id_column: Option<String>,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<Option<f64>> {
    let test = match load_dataset(&args.test, Some(&args.label_column), args.id_column.as_deref()) {
        Ok(d) => d,
        Err(e) if is_empty_input(&e) => {
            std::fs::write(&args.output, "id,score,probability\n")?;
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let model = load_model(&args.model)?;
    let ids: Vec<InstanceId> = test.instance_ids().to_vec();

    let (scores, probs): (Vec<f64>, Vec<f64>) = match &model {
        LoadedModel::Central(ens) => {
            let scores: Vec<f64> = ids
                .iter()
                .map(|id| ens.predict(&test, *id).map_err(CliError::from))
                .collect::<Result<_>>()?;
            let probs = match ens.loss {
                LossKind::Logistic => scores.iter().map(|s| sigmoid(*s)).collect(),
                LossKind::SquaredError => scores.clone(),
            };
            (scores, probs)
        }
        LoadedModel::Distributed(m) => {
            let manifest_path = args
                .manifest
                .as_ref()
                .ok_or_else(|| CliError::Config("distributed model needs --manifest".into()))?;
            let manifest = PartitionManifest::from_json(&std::fs::read_to_string(manifest_path)?)?;
            let (host_view, guest_views) = test_views(&test, &manifest)?;
            let out = hybridtree_predict(m, &host_view, &guest_views, &ids)?;
            let probs = out.probabilities(m.params.loss);
            (out.scores, probs)
        }
        LoadedModel::Bagged(models) => {
            let manifest_path = args
                .manifest
                .as_ref()
                .ok_or_else(|| CliError::Config("bagged model needs --manifest".into()))?;
            let manifest = PartitionManifest::from_json(&std::fs::read_to_string(manifest_path)?)?;
            let (host_view, guest_views) = test_views(&test, &manifest)?;
            let refs: Vec<&DistributedModel> = models.iter().collect();
            let labels = bagging_predict(&refs, &host_view, &guest_views, &ids, true)?;
            (labels.clone(), labels)
        }
    };

    let mut out = String::from("id,score,probability\n");
    for (i, id) in ids.iter().enumerate() {
        out.push_str(&format!("{id},{},{}\n", scores[i], probs[i]));
    }
    std::fs::write(&args.output, out)?;

    match (args.metric, test.labels()) {
        (Some(metric), Some(labels)) => Ok(Some(evaluate(metric, labels, &probs)?)),
        _ => Ok(None),
    }
}

pub struct AnalyzeArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub epsilon: f64,
    pub min_support: usize,
    pub top: usize,
    pub transform: bool,
    pub label_column: String,
    pub id_column: Option<String>,
}

/// Rule analysis over a centralized model: per-leaf rules ranked by
/// cross-tree prevalence, meta-rule tests against the candidate cut
/// universe, and optionally the guest-split reordering with its
/// verification gaps.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<serde_json::Value> {
    let model = match load_model(&args.model)? {
        LoadedModel::Central(ens) => ens,
        _ => {
            return Err(CliError::Config(
                "analyze expects a centralized ensemble model".into(),
            ))
        }
    };
    let data = load_dataset(&args.data, Some(&args.label_column), args.id_column.as_deref())?;
    let cuts = compute_split_candidates(&data, &data.feature_ids().to_vec(), 32)?;
    let candidate_conditions: Vec<fedgbdt_core::tree::SplitCondition> = cuts
        .candidates()
        .map(|(f, t)| fedgbdt_core::tree::SplitCondition::new(f, t))
        .collect();

    // Unique rules across all trees.
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut rules: Vec<SplitRule> = Vec::new();
    for tree in &model.trees {
        for rule in extract_rules(tree) {
            if rule.is_degenerate() {
                continue;
            }
            let mut key: Vec<String> = rule
                .conditions
                .iter()
                .map(|(c, d)| format!("{}:{}:{}", c.feature, c.threshold, d))
                .collect();
            key.sort();
            if seen.insert(key.join("|")) {
                rules.push(rule);
            }
        }
    }

    let mut reports: Vec<(f64, serde_json::Value, SplitRule)> = Vec::new();
    for rule in rules {
        let prevalence = meta_rule_prevalence(&model, &rule, 1e-9).prevalence;
        reports.push((prevalence, serde_json::Value::Null, rule));
    }
    reports.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    reports.truncate(args.top);

    let mut rule_entries = Vec::new();
    for (prevalence, _, rule) in &reports {
        let test = test_meta_rule(&data, rule, &candidate_conditions, args.epsilon, args.min_support)?;
        let max_deviation = test
            .deviations
            .iter()
            .map(|d| d.deviation)
            .fold(0.0f64, f64::max);
        rule_entries.push(json!({
            "conditions": rule.conditions.iter().map(|(c, d)| json!({
                "feature": c.feature,
                "threshold": c.threshold,
                "satisfied": d,
            })).collect::<Vec<_>>(),
            "leaf_value": rule.leaf_value,
            "prevalence": prevalence,
            "support": test.rule_support,
            "outcome": match test.outcome {
                MetaRuleOutcome::Holds => "holds",
                MetaRuleOutcome::Violated => "violated",
                MetaRuleOutcome::Indeterminate => "indeterminate",
            },
            "max_deviation": max_deviation,
            "deviations": test.deviations.len(),
        }));
    }

    let mut doc = json!({
        "trees_analyzed": model.trees.len(),
        "rules": rule_entries,
    });

    if args.transform {
        let guest_features: BTreeSet<u32> = match &args.manifest {
            Some(path) => {
                let manifest = PartitionManifest::from_json(&std::fs::read_to_string(path)?)?;
                manifest.guests.iter().flat_map(|g| g.feature_ids.clone()).collect()
            }
            None => {
                return Err(CliError::Config("--transform needs --manifest for guest features".into()))
            }
        };
        let labels = data
            .labels()
            .ok_or_else(|| CliError::Runtime("analysis data has no labels".into()))?;
        let zeros = vec![0.0; data.n_instances()];
        let grads = compute_gradients(labels, &zeros, model.loss)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let gmap = GradientMap::from_dataset(&data, &grads);
        let ids: Vec<InstanceId> = data.instance_ids().to_vec();

        // Best-prevalence rule with a guest-feature condition.
        let candidate = reports.iter().find(|(_, _, rule)| {
            rule.conditions.iter().any(|(c, _)| guest_features.contains(&c.feature))
        });
        let mut transforms = Vec::new();
        if let Some((_, _, rule)) = candidate {
            for (i, tree) in model.trees.iter().enumerate() {
                let guest_cond = rule
                    .conditions
                    .iter()
                    .find(|(c, _)| guest_features.contains(&c.feature))
                    .map(|(c, _)| *c)
                    .unwrap();
                let tests_it = tree
                    .leaves()
                    .iter()
                    .any(|(leaf, _)| tree.path_to(*leaf).iter().any(|(c, _)| *c == guest_cond));
                if !tests_it {
                    continue;
                }
                let mut original = tree.clone();
                recompute_leaves(&mut original, &data, &ids, &gmap, 0.0)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                let transformed =
                    transform_tree(&original, rule, &guest_features, &data, &ids, &gmap, 0.0)
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                let report = verify_transformation(&original, &transformed, &data, &ids, &gmap)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                transforms.push(json!({
                    "tree": i,
                    "mean_pred_a": report.mean_pred_a,
                    "mean_pred_b": report.mean_pred_b,
                    "mean_gap": report.mean_gap,
                    "max_leaf_gap": report.max_leaf_gap,
                }));
            }
        }
        doc["transforms"] = json!(transforms);
    }

    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(doc)
}

pub struct BenchmarkArgs {
    pub manifest: PathBuf,
    pub test: PathBuf,
    pub output_dir: PathBuf,
    pub config: Resolved,
    pub methods: Vec<Method>,
    pub train: Option<PathBuf>,
    pub guest_sweep: Vec<usize>,
}

/// Run a method matrix over one partition (and optionally a guest-count
/// sweep) and emit a comparison table as text and JSON.
pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<serde_json::Value> {
    std::fs::create_dir_all(&args.output_dir)?;
    let mut rows = Vec::new();

    let mut run_cell = |manifest: &Path, method: Method, guests: usize| -> Result<()> {
        let mut cfg = args.config.clone();
        cfg.method = method;
        let targs = TrainArgs {
            config: cfg,
            train: args.train.clone(),
            manifest: Some(manifest.to_path_buf()),
            test: Some(args.test.clone()),
            model_out: None,
            metrics_out: Some(args.output_dir.join("metrics.jsonl")),
        };
        let summary = cmd_train(&targs)?;
        rows.push(json!({
            "method": method.to_string(),
            "guests": guests,
            "metric": summary.record.metric,
            "value": summary.metric_value,
            "train_seconds": summary.record.train_seconds,
            "comm_bytes": summary.record.comm_bytes,
            "comm_messages": summary.record.comm_messages,
        }));
        Ok(())
    };

    let base_guests = PartitionManifest::from_json(&std::fs::read_to_string(&args.manifest)?)?
        .guests
        .len();
    for method in &args.methods {
        run_cell(&args.manifest, *method, base_guests)?;
    }

    if !args.guest_sweep.is_empty() {
        let train_path = args
            .train
            .as_ref()
            .ok_or_else(|| CliError::Config("--guests sweep needs --train".into()))?;
        for n in &args.guest_sweep {
            let dir = args.output_dir.join(format!("sweep-g{n}"));
            let part = PartitionArgs {
                input: train_path.clone(),
                scheme: PartitionScheme::RandomHybrid,
                guests: *n,
                beta: 0.5,
                seed: args.config.seed,
                output_dir: dir,
                label_column: args.config.label_column.clone(),
                id_column: args.config.id_column.clone(),
            };
            let manifest = cmd_partition(&part)?;
            for method in &args.methods {
                if *method == Method::Allin {
                    continue;
                }
                run_cell(&manifest, *method, *n)?;
            }
        }
    }

    let doc = json!({ "rows": rows });
    std::fs::write(
        args.output_dir.join("benchmark.json"),
        serde_json::to_string_pretty(&doc)?,
    )?;

    let mut table = String::from("method      guests  value       comm_bytes\n");
    for row in doc["rows"].as_array().unwrap() {
        table.push_str(&format!(
            "{:<11} {:<7} {:<11} {}\n",
            row["method"].as_str().unwrap_or("?"),
            row["guests"],
            row["value"]
                .as_f64()
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into()),
            row["comm_bytes"]
                .as_u64()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into()),
        ));
    }
    std::fs::write(args.output_dir.join("benchmark.txt"), &table)?;
    Ok(doc)
}

/// Convenience used by tests and the binary: manifest-driven parties plus
/// merged data share the label/linkage conventions.
pub fn merged_from_manifest(parties: &Parties) -> Result<Dataset> {
    Ok(merge_parties(&parties.host, &parties.guests)?)
}

/// Shared instance ids between the manifest's host and one guest.
pub fn linked(parties: &Parties, guest: usize) -> Vec<InstanceId> {
    link_instances(&parties.host, &parties.guests[guest])
}
