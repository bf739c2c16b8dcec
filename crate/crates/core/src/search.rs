//! Validation metrics, threshold calibration, workflow selection and the
//! guarded final refit.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::TrainedDetector;
use crate::error::{Error, Result};
use crate::planner::{validate_spec, WorkflowSpec};
use crate::workflow::Workbench;

/// Default weight of AUC against F1-macro in the blended criterion.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Fraction of each validation class moved into the refit subset.
pub const DEFAULT_REFIT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Auc {
    pub value: f64,
    /// Only one class was present, so the value is the uninformative 0.5.
    pub single_class: bool,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::EmptyInput);
    }
    if a != b {
        return Err(Error::Shape(format!("{a} scores but {b} labels")));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Auc> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Auc {
            value: 0.5,
            single_class: true,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the number of correctly ordered pairs, ties counting one
    let mut twice_correct: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut pos, mut neg) = (0u128, 0u128);
        while end < order.len() && scores[order[end]].total_cmp(&scores[order[start]]).is_eq() {
            if labels[order[end]] {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        twice_correct += pos * (2 * neg_below + neg);
        neg_below += neg;
        start = end;
    }
    Ok(Auc {
        value: twice_correct as f64 / (2 * n_pos * n_neg) as f64,
        single_class: false,
    })
}

/// Confusion counts `(tp, fp, fn, tn)` with anomaly as the positive class.
fn confusion(predictions: &[bool], labels: &[bool]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let class_f1 = |t: u64, f_pos: u64, f_neg: u64| {
        let denom = 2 * t + f_pos + f_neg;
        if denom == 0 {
            0.0
        } else {
            (2 * t) as f64 / denom as f64
        }
    };
    (class_f1(tp, fp, fn_) + class_f1(tn, fn_, fp)) / 2.0
}

/// Unweighted mean of the anomaly and normal class F1 scores.
pub fn f1_macro(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let (tp, fp, fn_, tn) = confusion(predictions, labels);
    Ok(f1_from_counts(tp, fp, fn_, tn))
}

/// `s >= tau`.
pub fn predict(scores: &[f64], tau: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= tau).collect()
}

/// Candidate thresholds: 0, a point strictly between each pair of consecutive
/// distinct scores, and 1, in ascending order.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = vec![0.0];
    for w in distinct.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut mid = lo + (hi - lo) / 2.0;
        if mid <= lo {
            mid = hi;
        }
        out.push(mid);
    }
    out.push(1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Threshold maximizing validation F1-macro, smallest on ties, and that F1.
pub fn calibrate_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_lengths(scores.len(), labels.len())?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let total_pos = labels.iter().filter(|&&l| l).count() as u64;
    let total_neg = labels.len() as u64 - total_pos;

    // rows below the threshold are predicted normal
    let (mut below, mut pos_below) = (0usize, 0u64);
    let mut best: Option<(f64, f64)> = None;
    for tau in threshold_candidates(scores) {
        while below < order.len() && scores[order[below]] < tau {
            if labels[order[below]] {
                pos_below += 1;
            }
            below += 1;
        }
        let neg_below = below as u64 - pos_below;
        let f1 = f1_from_counts(
            total_pos - pos_below,
            total_neg - neg_below,
            pos_below,
            neg_below,
        );
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((tau, f1));
        }
    }
    Ok(best.expect("candidate set is never empty"))
}

/// `|K| + 10 tier(detector) + 5 [fused]`.
pub fn complexity_penalty(spec: &WorkflowSpec) -> f64 {
    let fused = matches!(spec.topology, crate::graph::TopologyChoice::Fused);
    (spec.evidence.len() + 10 * spec.detector.tier() + if fused { 5 } else { 0 }) as f64
}

/// Validation criterion `(min(A, F), αA + (1 - α)F, -penalty)`, compared
/// lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality(pub [f64; 3]);

impl Quality {
    pub fn new(auc: f64, f1: f64, alpha: f64, penalty: f64) -> Self {
        Quality([auc.min(f1), alpha * auc + (1.0 - alpha) * f1, -penalty])
    }

    pub fn lex_cmp(&self, other: &Quality) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowEvaluation {
    /// The evaluated spec with its calibrated threshold filled in.
    pub spec: WorkflowSpec,
    #[serde(skip)]
    pub detector: Option<TrainedDetector>,
    pub tau_star: f64,
    pub auc_val: f64,
    pub f1_val: f64,
    pub penalty: f64,
    pub q: Quality,
    /// The validation split held a single class.
    pub auc_single_class: bool,
}

impl WorkflowEvaluation {
    pub fn detector(&self) -> &TrainedDetector {
        self.detector
            .as_ref()
            .expect("evaluations produced by evaluate_workflow carry their detector")
    }
}

/// Trains the spec's detector on the training split, scores validation nodes,
/// calibrates `τ*` and computes the criterion.
pub fn evaluate_workflow(
    spec: &WorkflowSpec,
    bench: &Workbench<'_>,
    alpha: f64,
    seed: u64,
) -> Result<WorkflowEvaluation> {
    let violations = validate_spec(spec, bench.graph().n_extra_relations());
    if !violations.is_empty() {
        return Err(Error::InvalidWorkflow(violations.join("; ")));
    }
    let encoding = bench.encoding(spec.topology, &spec.evidence)?;
    let input = bench.detector_input(&encoding)?;
    let y_train = bench.labels(&bench.train_ids);
    let detector = TrainedDetector::fit(
        spec.detector,
        input,
        &bench.train_ids,
        &y_train,
        seed,
        &bench.detector_config,
    )?;
    let scores = detector.score(input)?;
    let s_val: Vec<f64> = bench.val_ids.iter().map(|&i| scores[i]).collect();
    let y_val = bench.labels(&bench.val_ids);
    let a = auc(&s_val, &y_val)?;
    let (tau_star, f1_val) = calibrate_threshold(&s_val, &y_val)?;
    let penalty = complexity_penalty(spec);
    let mut spec = spec.clone();
    spec.threshold = Some(tau_star);
    Ok(WorkflowEvaluation {
        spec,
        detector: Some(detector),
        tau_star,
        auc_val: a.value,
        f1_val,
        penalty,
        q: Quality::new(a.value, f1_val, alpha, penalty),
        auc_single_class: a.single_class,
    })
}

/// Lexicographic maximum of `q`; exact ties go to the smallest planner rank.
pub fn select_workflow(evaluations: &[WorkflowEvaluation]) -> Result<&WorkflowEvaluation> {
    evaluations
        .iter()
        .max_by(|a, b| {
            a.q.lex_cmp(&b.q)
                .then(b.spec.planner_rank.cmp(&a.spec.planner_rank))
        })
        .ok_or(Error::NoFeasibleWorkflow)
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// `a >= b` lexicographically after rounding both to four decimals.
pub fn rounded_lex_ge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (a, b) = ([round4(a[0]), round4(a[1])], [round4(b[0]), round4(b[1])]);
    match a[0].total_cmp(&b[0]) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a[1] >= b[1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitDecision {
    pub accepted: bool,
    /// `(AUC, F1 at τ*)` of the original detector on the calibration subset.
    pub m_orig: [f64; 2],
    pub m_refit: [f64; 2],
    pub refit_ids: Vec<usize>,
    pub cal_ids: Vec<usize>,
    pub warning: Option<String>,
}

/// Stratified split of `ids` into `(refit, cal)`: each class contributes
/// `floor(n_c * refit_fraction)` nodes to the refit subset. Both outputs are
/// sorted.
pub fn stratified_halves(
    ids: &[usize],
    labels: &[bool],
    refit_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut refit, mut cal) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut members: Vec<usize> = ids
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&i, _)| i)
            .collect();
        members.sort_unstable();
        members.shuffle(&mut rng);
        let k = (members.len() as f64 * refit_fraction).floor() as usize;
        refit.extend_from_slice(&members[..k]);
        cal.extend_from_slice(&members[k..]);
    }
    refit.sort_unstable();
    cal.sort_unstable();
    (refit, cal)
}

/// Retrains the selected workflow on train plus the refit subset with the
/// encoding and `τ*` frozen, and deploys it only if its rounded calibration
/// metrics are not lexicographically worse.
pub fn guarded_refit(
    selected: &WorkflowEvaluation,
    bench: &Workbench<'_>,
    refit_fraction: f64,
    split_seed: u64,
    detector_seed: u64,
) -> Result<(TrainedDetector, RefitDecision)> {
    let original = selected.detector();
    let y_val = bench.labels(&bench.val_ids);
    let (refit_ids, cal_ids) =
        stratified_halves(&bench.val_ids, &y_val, refit_fraction, split_seed);
    let encoding = bench.encoding(selected.spec.topology, &selected.spec.evidence)?;
    let input = bench.detector_input(&encoding)?;
    let tau = selected.tau_star;
    let y_cal = bench.labels(&cal_ids);

    let metrics = |det: &TrainedDetector| -> Result<[f64; 2]> {
        if cal_ids.is_empty() {
            return Ok([0.5, 0.0]);
        }
        let scores = det.score(input)?;
        let s_cal: Vec<f64> = cal_ids.iter().map(|&i| scores[i]).collect();
        Ok([
            auc(&s_cal, &y_cal)?.value,
            f1_macro(&predict(&s_cal, tau), &y_cal)?,
        ])
    };
    let m_orig = metrics(original)?;

    let mut train_plus: Vec<usize> = bench.train_ids.iter().chain(&refit_ids).copied().collect();
    train_plus.sort_unstable();
    let y_plus = bench.labels(&train_plus);
    let refit = TrainedDetector::fit(
        selected.spec.detector,
        input,
        &train_plus,
        &y_plus,
        detector_seed,
        &bench.detector_config,
    )?;
    let m_refit = metrics(&refit)?;

    let single_class = y_cal.iter().all(|&l| l) || y_cal.iter().all(|&l| !l);
    let (accepted, warning) = if single_class {
        (
            false,
            Some("calibration subset holds a single class; refit rejected".to_string()),
        )
    } else {
        (rounded_lex_ge(m_refit, m_orig), None)
    };
    let deployed = if accepted { refit } else { original.clone() };
    Ok((
        deployed,
        RefitDecision {
            accepted,
            m_orig,
            m_refit,
            refit_ids,
            cal_ids,
            warning,
        },
    ))
}

/// Labels `s >= τ` for the test nodes, in the order of `bench.test_ids`.
pub fn predict_test(
    detector: &TrainedDetector,
    spec: &WorkflowSpec,
    tau: f64,
    bench: &Workbench<'_>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let encoding = bench.encoding(spec.topology, &spec.evidence)?;
    let scores = detector.score(bench.detector_input(&encoding)?)?;
    let s_test: Vec<f64> = bench.test_ids.iter().map(|&i| scores[i]).collect();
    let y_hat = predict(&s_test, tau);
    Ok((s_test, y_hat))
}
