//! End-to-end run: data, plan, evaluate, select, refit, predict, report.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, DetectorKind, LinearModel, TrainedDetector};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::planner::{
    build_task_descriptor, plan_llm, plan_rule_based, GraphStats, HttpChatClient, PlanSource,
    PlannerClient, WorkflowSpec, EVIDENCE_PRIORITY,
};
use crate::search::{
    auc, evaluate_workflow, f1_macro, guarded_refit, predict_test, select_workflow,
    RefitDecision, WorkflowEvaluation,
};
use crate::seed::{derive, stage};
use crate::workflow::Workbench;

use super::config::{PlannerBackend, RunConfig};
use super::dataset::{load_dataset, stratified_split};
use super::synthetic::generate_synthetic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub planner_rank: usize,
    pub workflow: String,
    pub spec: WorkflowSpec,
    /// `None` when the workflow was infeasible.
    pub evaluation: Option<WorkflowEvaluation>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub n_test: usize,
    pub auc: f64,
    pub f1_macro: f64,
    pub n_predicted_anomalies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub data_source: String,
    pub stats: GraphStats,
    pub evaluations: Vec<EvaluationRecord>,
    pub selected: WorkflowEvaluation,
    pub refit: Option<RefitDecision>,
    pub deployed: String,
    pub test: TestMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Vec<StageTiming>>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Report plus the artifacts a caller may want to keep.
pub struct RunOutcome {
    pub report: Report,
    /// Where the candidate list came from; a fallback is also listed in
    /// the report warnings.
    pub plan_source: PlanSource,
    pub graph: AttributedGraph,
    pub deployed: TrainedDetector,
    pub test_scores: Vec<f64>,
}

/// Loads or generates the graph named by `config`, with its split.
pub fn prepare_graph(config: &RunConfig) -> Result<(AttributedGraph, String, Option<String>)> {
    let split_seed = derive(config.seed, stage::SPLIT);
    match &config.dataset {
        Some(dir) => {
            let ds = load_dataset(dir, config.train_ratio, config.val_share, split_seed)?;
            Ok((ds.graph, format!("dataset {}", dir.display()), ds.task_text))
        }
        None => {
            let data = generate_synthetic(&config.synthetic_spec())?;
            let splits = stratified_split(&data.labels(), config.train_ratio, config.val_share, split_seed);
            Ok((data.into_graph(splits)?, "synthetic".to_string(), None))
        }
    }
}

fn task_text(config: &RunConfig, from_dataset: Option<String>) -> Result<String> {
    if let Some(p) = &config.task_text_path {
        return std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    }
    if !config.task_text.is_empty() {
        return Ok(config.task_text.clone());
    }
    Ok(from_dataset.unwrap_or_default())
}

/// Applies ablation switches to a plan, dropping designs made redundant.
fn adjust_plan(specs: Vec<WorkflowSpec>, config: &RunConfig, n_extra: usize) -> Vec<WorkflowSpec> {
    let valid: Vec<_> = EVIDENCE_PRIORITY
        .into_iter()
        .filter(|k| k.is_valid_for(n_extra))
        .collect();
    let mut out: Vec<WorkflowSpec> = Vec::with_capacity(specs.len());
    for mut spec in specs {
        if let Some(k) = config.fixed_k {
            spec.evidence = valid[..k.min(valid.len())].to_vec();
        }
        if config.disable_evidence {
            spec.evidence.clear();
        }
        if config.disable_bank {
            spec.detector = DetectorKind::Linear;
        }
        if !out.iter().any(|s| s.same_design(&spec)) {
            out.push(spec);
        }
    }
    for (rank, s) in out.iter_mut().enumerate() {
        s.planner_rank = rank;
    }
    out
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    let client = match config.planner {
        PlannerBackend::Rule => None,
        PlannerBackend::Llm => Some(HttpChatClient::from_env(
            &config.llm_endpoint,
            &config.llm_model,
            std::time::Duration::from_secs(config.llm_timeout_secs),
        )),
    };
    run_pipeline_with_client(config, client.as_ref().map(|c| c as &dyn PlannerClient))
}

/// Runs the pipeline; `client` is used when the config selects the remote
/// planner.
pub fn run_pipeline_with_client(
    config: &RunConfig,
    client: Option<&dyn PlannerClient>,
) -> Result<RunOutcome> {
    config.validate()?;
    let mut timings = Vec::new();
    let mut warnings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
    };

    let (graph, data_source, dataset_text) = prepare_graph(config)?;
    lap("load", &mut timings);

    let descriptor = build_task_descriptor(&task_text(config, dataset_text)?, &graph);
    let n_extra = graph.n_extra_relations();
    let (plan, plan_source) = match (config.planner, client) {
        (PlannerBackend::Llm, Some(client)) => {
            let out = plan_llm(&descriptor, config.n_workflows, client)?;
            warnings.extend(out.warnings);
            (out.specs, out.source)
        }
        (PlannerBackend::Llm, None) => {
            warnings.push("no planner client configured; using rule-based plan".into());
            (plan_rule_based(&descriptor, config.n_workflows)?, PlanSource::RuleFallback)
        }
        (PlannerBackend::Rule, _) => (plan_rule_based(&descriptor, config.n_workflows)?, PlanSource::Rule),
    };
    let plan = adjust_plan(plan, config, n_extra);
    lap("plan", &mut timings);

    let bench = Workbench::new(&graph, config.evidence_config(), config.detector_config());
    let detector_seed = derive(config.seed, stage::DETECTOR);
    let evaluate = || -> Vec<Result<WorkflowEvaluation>> {
        plan.par_iter()
            .map(|spec| evaluate_workflow(spec, &bench, config.alpha, detector_seed))
            .collect()
    };
    let results = if config.threads == 0 {
        evaluate()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(evaluate)
    };
    let mut records = Vec::with_capacity(plan.len());
    let mut feasible = Vec::new();
    for (spec, result) in plan.iter().zip(results) {
        match result {
            Ok(ev) => {
                if ev.auc_single_class {
                    warnings.push(format!("{}: validation split holds a single class", spec.label()));
                }
                feasible.push(ev.clone());
                records.push(EvaluationRecord {
                    planner_rank: spec.planner_rank,
                    workflow: spec.label(),
                    spec: ev.spec.clone(),
                    evaluation: Some(ev),
                    error: None,
                });
            }
            Err(e) => {
                warnings.push(format!("{} infeasible: {e}", spec.label()));
                records.push(EvaluationRecord {
                    planner_rank: spec.planner_rank,
                    workflow: spec.label(),
                    spec: spec.clone(),
                    evaluation: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    lap("evaluate", &mut timings);

    let selected = if config.disable_search {
        feasible
            .iter()
            .min_by_key(|e| e.spec.planner_rank)
            .ok_or(Error::NoFeasibleWorkflow)?
    } else {
        select_workflow(&feasible)?
    };
    lap("select", &mut timings);

    let (deployed, refit) = if config.disable_refit {
        (selected.detector().clone(), None)
    } else {
        let (det, decision) = guarded_refit(
            selected,
            &bench,
            config.refit_fraction,
            derive(config.seed, stage::REFIT_SPLIT),
            derive(config.seed, stage::REFIT_DETECTOR),
        )?;
        if let Some(w) = &decision.warning {
            warnings.push(w.clone());
        }
        (det, Some(decision))
    };
    let deployed_label = match &refit {
        Some(d) if d.accepted => "refit",
        _ => "original",
    };
    lap("refit", &mut timings);

    let (test_scores, y_hat) = predict_test(&deployed, &selected.spec, selected.tau_star, &bench)?;
    let y_test = bench.labels(&bench.test_ids);
    let test = if y_test.is_empty() {
        warnings.push("test split is empty".into());
        TestMetrics {
            n_test: 0,
            auc: 0.5,
            f1_macro: 0.0,
            n_predicted_anomalies: 0,
        }
    } else {
        let a = auc(&test_scores, &y_test)?;
        if a.single_class {
            warnings.push("test split holds a single class".into());
        }
        TestMetrics {
            n_test: y_test.len(),
            auc: a.value,
            f1_macro: f1_macro(&y_hat, &y_test)?,
            n_predicted_anomalies: y_hat.iter().filter(|&&p| p).count(),
        }
    };
    lap("predict", &mut timings);

    let stats = descriptor.stats;
    let report = Report {
        config: config.clone(),
        data_source,
        stats,
        evaluations: records,
        selected: selected.clone(),
        refit,
        deployed: deployed_label.to_string(),
        test,
        timings: config.report_timings.then_some(timings),
        warnings,
    };
    Ok(RunOutcome {
        report,
        plan_source,
        graph,
        deployed,
        test_scores,
    })
}

/// Test AUC of a class-balanced logistic model on the raw node features,
/// trained on the training split.
pub fn raw_feature_baseline(graph: &AttributedGraph, config: &DetectorConfig) -> Result<f64> {
    let sets = graph.split_sets();
    let x = graph.features();
    let model = LinearModel::fit(
        &x.select_rows(&sets.train),
        &graph.labels_for(&sets.train),
        &config.linear,
        config.epsilon,
    )?;
    let scores = model.score(&x.select_rows(&sets.test))?;
    Ok(auc(&scores, &graph.labels_for(&sets.test))?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    K,
    NWorkflows,
    Alpha,
    Modules,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "K" => Ok(Sweep::K),
            "n_workflows" => Ok(Sweep::NWorkflows),
            "alpha" => Ok(Sweep::Alpha),
            "modules" => Ok(Sweep::Modules),
            other => Err(Error::Config(format!(
                "unknown sweep {other:?}; expected k, n_workflows, alpha or modules"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub report: Report,
}

/// Config variants for each point of `sweep`, all sharing `config.seed`.
pub fn sweep_configs(config: &RunConfig, sweep: Sweep) -> Vec<(String, RunConfig)> {
    let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
        let mut c = config.clone();
        f(&mut c);
        (label, c)
    };
    match sweep {
        Sweep::K => (0..=6)
            .map(|k| with(format!("k={k}"), &|c| c.fixed_k = Some(k)))
            .collect(),
        Sweep::NWorkflows => [5, 10, 20, 30]
            .into_iter()
            .map(|n| with(format!("n_workflows={n}"), &|c| c.n_workflows = n))
            .collect(),
        Sweep::Alpha => [0.0, 0.25, 0.5, 0.75, 1.0]
            .into_iter()
            .map(|a| with(format!("alpha={a}"), &|c| c.alpha = a))
            .collect(),
        Sweep::Modules => vec![
            with("full".into(), &|_| {}),
            with("w/o llm".into(), &|c| c.planner = PlannerBackend::Rule),
            with("w/o evidence".into(), &|c| c.disable_evidence = true),
            with("w/o bank".into(), &|c| c.disable_bank = true),
            with("w/o search".into(), &|c| c.disable_search = true),
            with("w/o refit".into(), &|c| c.disable_refit = true),
        ],
    }
}

pub fn ablate(config: &RunConfig, sweep: Sweep) -> Result<Vec<SweepPoint>> {
    sweep_configs(config, sweep)
        .into_iter()
        .map(|(label, c)| {
            Ok(SweepPoint {
                label,
                report: run_pipeline(&c)?.report,
            })
        })
        .collect()
}
