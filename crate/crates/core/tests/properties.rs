use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signgad::detector::{build_stacked_features, DetectorConfig, DetectorInput, DetectorKind, LinearModel, TrainedDetector};
use signgad::encoding::context_encoding;
use signgad::evidence::{
    degree_z_scores, fit_reconstruction, normalize_scores, raw_evidence, reconstruction_residual,
    EvidenceConfig, EvidenceKind,
};
use signgad::graph::{
    build_graph, degrees, row_normalize, Adjacency, AttributedGraph, GraphInput, Label, SplitSets,
    TopologyChoice,
};
use signgad::harness::{
    generate_synthetic, load_dataset, run_pipeline, stratified_split, write_dataset,
    FeatureFormat, RunConfig, SyntheticSpec,
};
use signgad::matrix::DenseMatrix;
use signgad::planner::{
    designs_unique, plan_llm, plan_rule_based, rule_based_grid, validate_spec, GraphStats,
    PlannerClient, TaskDescriptor, WorkflowSpec,
};
use signgad::search::{
    auc, calibrate_threshold, predict, select_workflow, Quality, WorkflowEvaluation,
};

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                out.push((u, v));
            }
        }
    }
    out
}

/// Two-class labels with at least `min_per_class` of each.
fn labels(rng: &mut ChaCha8Rng, n: usize, min_per_class: usize) -> Vec<bool> {
    let mut y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
    for i in 0..min_per_class {
        y[i] = true;
        y[n - 1 - i] = false;
    }
    y
}

fn graph(seed: u64, n: usize, d: usize, r: usize) -> AttributedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edge_lists = (0..=r).map(|_| edges(&mut rng, n, 0.15)).collect();
    let x = matrix(&mut rng, n, d);
    let y = labels(&mut rng, n, 3);
    build_graph(GraphInput {
        n_nodes: n,
        edge_lists,
        features: x,
        labels: y.iter().map(|&a| Some(Label::from_bool(a))).collect(),
        splits: SplitSets {
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        },
    })
    .unwrap()
}

struct Fitted {
    z: DenseMatrix,
    phis: Vec<DenseMatrix>,
    train: Vec<usize>,
    y: Vec<bool>,
}

fn detector_data(seed: u64, n: usize, d: usize) -> Fitted {
    let g = graph(seed, n, d, 2);
    let z = context_encoding(g.base_adj(), g.features()).unwrap();
    let phis = g
        .extra_adjs()
        .iter()
        .map(|a| context_encoding(a, g.features()).unwrap())
        .collect();
    let train: Vec<usize> = (0..n).collect();
    let y = g.labels_for(&train);
    Fitted { z, phis, train, y }
}

fn small_config() -> DetectorConfig {
    let mut c = DetectorConfig::default();
    c.tree.rounds = 10;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn union_is_order_independent(seed in any::<u64>(), n in 1usize..30, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Adjacency> = (0..=r)
            .map(|_| Adjacency::from_undirected_edges(n, &edges(&mut rng, n, 0.2)).unwrap())
            .collect();
        let mut refs: Vec<&Adjacency> = layers.iter().collect();
        let forward = Adjacency::union(&refs).unwrap();
        refs.shuffle(&mut rng);
        prop_assert_eq!(Adjacency::union(&refs).unwrap(), forward);
    }

    #[test]
    fn normalized_rows_sum_to_indicator(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = Adjacency::from_undirected_edges(n, &edges(&mut rng, n, 0.1)).unwrap();
        let norm = row_normalize(&adj.to_weighted());
        let ones = DenseMatrix::from_vec(n, 1, vec![1.0; n]).unwrap();
        let h = norm.matrix().matmul_dense(&ones).unwrap();
        for i in 0..n {
            let expected = if adj.neighbors(i).is_empty() { 0.0 } else { 1.0 };
            prop_assert!((h.get(i, 0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn degrees_ignore_edge_order(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut list = edges(&mut rng, n, 0.2);
        let before = degrees(&Adjacency::from_undirected_edges(n, &list).unwrap());
        list.shuffle(&mut rng);
        let flipped: Vec<(usize, usize)> = list.iter().map(|&(u, v)| (v, u)).collect();
        prop_assert_eq!(degrees(&Adjacency::from_undirected_edges(n, &flipped).unwrap()), before);
    }

    #[test]
    fn normalization_range_and_order(raw in prop::collection::vec(-1e6f64..1e6, 1..100)) {
        let norm = normalize_scores(&raw, 1e-12);
        for i in 0..raw.len() {
            prop_assert!((0.0..1.0).contains(&norm[i]));
            for j in 0..raw.len() {
                if raw[i] < raw[j] {
                    prop_assert!(norm[i] <= norm[j]);
                }
                if raw[i] == raw[j] {
                    prop_assert_eq!(norm[i], norm[j]);
                }
            }
        }
    }

    #[test]
    fn degree_scores_shift_invariant(
        deg in prop::collection::vec(0u32..50, 2..40),
        shift in 0u32..100,
    ) {
        let deg: Vec<f64> = deg.into_iter().map(f64::from).collect();
        let shifted: Vec<f64> = deg.iter().map(|d| d + f64::from(shift)).collect();
        let train: Vec<usize> = (0..deg.len()).step_by(2).collect();
        let a = degree_z_scores(&deg, &train, 1e-12).unwrap();
        let b = degree_z_scores(&shifted, &train, 1e-12).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn higher_rank_never_increases_training_residual(seed in any::<u64>(), n in 2usize..30, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = matrix(&mut rng, n, d);
        let model = fit_reconstruction(&x, (0..n).collect(), 16).unwrap();
        let full = reconstruction_residual(&model, &x).unwrap();
        let sub = model.subspace();
        for i in 0..n {
            let row = x.row(i);
            for rank in 0..model.rank() {
                let rec = sub.reconstruct_with_rank(row, rank);
                let lower = rec.iter().zip(row).map(|(r, v)| (v - r).powi(2)).sum::<f64>().sqrt();
                prop_assert!(full[i] <= lower + 1e-9);
            }
        }
    }

    #[test]
    fn phi_difference_blocks_nonnegative(seed in any::<u64>(), n in 1usize..30, d in 1usize..6) {
        let g = graph(seed, n.max(6), d, 0);
        let phi = context_encoding(g.base_adj(), g.features()).unwrap();
        for i in 0..phi.rows() {
            prop_assert!(phi.row(i)[3 * d + 1..].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn auc_invariant_under_increasing_transform(
        scores in prop::collection::vec(-5.0f64..5.0, 2..60),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = labels(&mut rng, scores.len(), 1);
        let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
        prop_assert_eq!(auc(&scores, &y).unwrap(), auc(&transformed, &y).unwrap());
    }

    #[test]
    fn calibrated_labeling_invariant_under_increasing_transform(
        scores in prop::collection::vec(0.0f64..1.0, 2..60),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = labels(&mut rng, scores.len(), 1);
        let transformed: Vec<f64> = scores.iter().map(|s| s * s).collect();
        let (tau, f1) = calibrate_threshold(&scores, &y).unwrap();
        let (tau_t, f1_t) = calibrate_threshold(&transformed, &y).unwrap();
        prop_assert_eq!(f1, f1_t);
        prop_assert_eq!(predict(&scores, tau), predict(&transformed, tau_t));
    }

    #[test]
    fn selection_ignores_candidate_order(
        qualities in prop::collection::vec((0u8..4, 0u8..4, 0u8..3), 1..12),
        seed in any::<u64>(),
    ) {
        let evals: Vec<WorkflowEvaluation> = qualities
            .iter()
            .enumerate()
            .map(|(rank, &(a, f, p))| {
                let mut spec = WorkflowSpec::new(TopologyChoice::Base, Vec::new(), DetectorKind::Linear);
                spec.planner_rank = rank;
                WorkflowEvaluation {
                    spec,
                    detector: None,
                    tau_star: 0.5,
                    auc_val: f64::from(a) / 4.0,
                    f1_val: f64::from(f) / 4.0,
                    penalty: f64::from(p),
                    q: Quality::new(f64::from(a) / 4.0, f64::from(f) / 4.0, 0.5, f64::from(p)),
                    auc_single_class: false,
                }
            })
            .collect();
        let chosen = select_workflow(&evals).unwrap().spec.planner_rank;
        let mut shuffled = evals.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(select_workflow(&shuffled).unwrap().spec.planner_rank, chosen);
    }

    #[test]
    fn rule_plans_are_valid_and_unique(r in 0usize..4, n_workflows in 1usize..40) {
        let descriptor = descriptor(r);
        let plan = plan_rule_based(&descriptor, n_workflows).unwrap();
        prop_assert_eq!(plan.len(), n_workflows.min(rule_based_grid(r).len()));
        prop_assert!(designs_unique(&plan));
        for spec in &plan {
            prop_assert!(validate_spec(spec, r).is_empty());
        }
    }

    #[test]
    fn llm_plans_are_valid_whatever_the_reply(r in 0usize..3, reply in ".{0,400}", n_workflows in 1usize..25) {
        let plan = plan_llm(&descriptor(r), n_workflows, &Canned(reply)).unwrap();
        prop_assert!(designs_unique(&plan.specs));
        for spec in &plan.specs {
            prop_assert!(validate_spec(spec, r).is_empty());
        }
    }

    #[test]
    fn llm_plans_are_valid_for_structured_replies(
        r in 0usize..3,
        entries in prop::collection::vec(
            (0usize..3, prop::collection::vec(0usize..8, 0..5), 0usize..5, prop::option::of(-0.5f64..1.5)),
            0..30,
        ),
    ) {
        let topo = ["base", "fused", "mesh"];
        let kinds = [
            "degree_anomaly",
            "neighbor_feature_deviation",
            "feature_smoothness",
            "reconstruction_residual",
            "relation_disagreement",
            "relation_degree_profile",
            "bogus",
            "neighbor_feature_deviation",
        ];
        let dets = ["linear", "tree", "stacked", "relation_aware", "svm"];
        let workflows: Vec<serde_json::Value> = entries
            .iter()
            .map(|(t, ev, det, thr)| {
                serde_json::json!({
                    "topology": topo[*t],
                    "evidence": ev.iter().map(|&k| kinds[k]).collect::<Vec<_>>(),
                    "detector": dets[*det],
                    "threshold": thr,
                })
            })
            .collect();
        let reply = serde_json::json!({"schema_version": 1, "workflows": workflows}).to_string();
        let plan = plan_llm(&descriptor(r), 20, &Canned(reply)).unwrap();
        prop_assert!(plan.n_from_llm <= entries.len());
        prop_assert!(designs_unique(&plan.specs));
        for spec in &plan.specs {
            prop_assert!(validate_spec(spec, r).is_empty());
        }
    }
}

struct Canned(String);

impl PlannerClient for Canned {
    fn complete(&self, _: &str, _: &str) -> signgad::Result<String> {
        Ok(self.0.clone())
    }
}

fn descriptor(r: usize) -> TaskDescriptor {
    TaskDescriptor {
        task_text: String::new(),
        supervision_budget: 10,
        stats: GraphStats {
            n_nodes: 100,
            n_extra_relations: r,
            n_edges_per_relation: vec![200; r + 1],
            feature_dim: 4,
            n_train: 10,
            n_val: 40,
            n_test: 50,
            train_anomaly_rate: 0.1,
            mean_degree: 4.0,
            degree_std: 1.0,
            density: 0.04,
            train_homophily: 0.8,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn detector_scores_in_unit_interval(seed in any::<u64>(), n in 12usize..40, d in 1usize..4) {
        let data = detector_data(seed, n, d);
        let input = DetectorInput::new(&data.z, &data.phis);
        for kind in DetectorKind::ALL {
            let det = TrainedDetector::fit(kind, input, &data.train, &data.y, seed, &small_config()).unwrap();
            prop_assert!(det.score(input).unwrap().iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn detector_scores_stable_across_row_order(seed in any::<u64>(), n in 12usize..40, d in 1usize..4) {
        let data = detector_data(seed, n, d);
        let input = DetectorInput::new(&data.z, &data.phis);
        let mut order = data.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let y_perm: Vec<bool> = order.iter().map(|&i| data.y[i]).collect();
        for kind in DetectorKind::ALL {
            let a = TrainedDetector::fit(kind, input, &data.train, &data.y, 3, &small_config()).unwrap();
            let b = TrainedDetector::fit(kind, input, &data.train, &data.y, 3, &small_config()).unwrap();
            let c = TrainedDetector::fit(kind, input, &order, &y_perm, 3, &small_config()).unwrap();
            let sa = a.score(input).unwrap();
            prop_assert_eq!(&sa, &b.score(input).unwrap());
            prop_assert_eq!(&sa, &c.score(input).unwrap());
        }
    }

    #[test]
    fn linear_predictions_ignore_positive_column_scaling(
        seed in any::<u64>(),
        n in 12usize..40,
        col in 0usize..6,
        c in 0.01f64..100.0,
    ) {
        let data = detector_data(seed, n, 1);
        let config = DetectorConfig::default();
        let base = LinearModel::fit(&data.z, &data.y, &config.linear, config.epsilon).unwrap();
        let mut scaled = data.z.clone();
        for i in 0..scaled.rows() {
            let v = scaled.get(i, col);
            scaled.set(i, col, v * c);
        }
        let other = LinearModel::fit(&scaled, &data.y, &config.linear, config.epsilon).unwrap();
        let (p, q) = (base.score(&data.z).unwrap(), other.score(&scaled).unwrap());
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn stacked_training_scores_never_see_own_label(seed in any::<u64>(), n in 12usize..50, d in 1usize..4) {
        let data = detector_data(seed, n, d);
        let train: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
        let y: Vec<bool> = train.iter().map(|&i| data.y[i]).collect();
        let (_, record) = build_stacked_features(&data.z, &train, &y, seed, &small_config()).unwrap();
        prop_assert_eq!(record.fold_of_row.len(), train.len());
        for (row, &fold) in record.fold_of_row.iter().enumerate() {
            prop_assert!(!record.fold_train_rows[fold].contains(&row));
        }
    }

    #[test]
    fn relation_evidence_rejected_without_relations(seed in any::<u64>()) {
        let g = graph(seed, 12, 2, 0);
        for kind in [EvidenceKind::RelationDegreeProfile, EvidenceKind::RelationDisagreement] {
            prop_assert!(raw_evidence(&g, TopologyChoice::Base, kind, &[0, 1], &EvidenceConfig::default()).is_err());
        }
    }

    #[test]
    fn loader_round_trip(seed in any::<u64>(), binary in any::<bool>(), r in 0usize..3) {
        let spec = SyntheticSpec {
            n_nodes: 60,
            feature_dim: 3,
            anomaly_rate: 0.1,
            n_extra_relations: r,
            seed,
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let splits = stratified_split(&data.labels(), 0.1, 0.5, seed);
        let g = data.into_graph(splits).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let format = if binary { FeatureFormat::Binary } else { FeatureFormat::Csv };
        write_dataset(dir.path(), &g, Some("reviews"), format).unwrap();
        let loaded = load_dataset(dir.path(), 0.5, 0.5, 0).unwrap();
        prop_assert_eq!(loaded.graph, g);
        prop_assert_eq!(loaded.task_text.as_deref(), Some("reviews"));
    }
}

#[test]
fn without_refit_deploys_the_selected_detector() {
    for seed in 0..3 {
        let cfg = RunConfig {
            seed,
            synth_n_nodes: 600,
            n_workflows: 6,
            disable_refit: true,
            ..RunConfig::default()
        };
        let outcome = run_pipeline(&cfg).unwrap();
        assert!(outcome.report.refit.is_none());
        assert_eq!(outcome.report.deployed, "original");
        assert_eq!(&outcome.deployed, outcome.report.selected.detector());
    }
}

#[test]
fn no_planted_signal_gives_chance_auc() {
    let aucs: Vec<f64> = (0..10)
        .map(|seed| {
            let cfg = RunConfig {
                seed,
                synth_feature_shift: 0.0,
                synth_rewiring_rate: 0.0,
                n_workflows: 8,
                ..RunConfig::default()
            };
            run_pipeline(&cfg).unwrap().report.test.auc
        })
        .collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean AUC {mean} over {aucs:?}");
}
