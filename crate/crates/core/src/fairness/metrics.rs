use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_records, DemographicSchema, EvalRecord, FairnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub attribute: String,
    pub group: String,
    /// `None` when the group has no records.
    pub accuracy: Option<f64>,
    /// Number of records in the group.
    pub count: usize,
    pub correct: usize,
}

/// One-vs-rest confusion counts for a (group, class) slice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.positives())
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.negatives())
    }

    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.negatives())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Two groups of the same attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPair {
    pub attribute: String,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateGaps {
    pub tpr_diff: f64,
    pub fpr_diff: f64,
    pub tnr_diff: f64,
}

/// Every score at once, sharing one pass over the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub accuracy: f64,
    pub unfairness: f64,
    pub eodd: Option<f64>,
    pub eopp1: Option<f64>,
    pub eopp2: Option<f64>,
    pub groups: Vec<GroupAccuracy>,
}

pub fn overall_accuracy(records: &[EvalRecord]) -> Result<f64, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::EmptyInput);
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Accuracy of every schema group, in schema order.
pub fn group_accuracies(
    records: &[EvalRecord],
    schema: &DemographicSchema,
) -> Result<Vec<GroupAccuracy>, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::EmptyInput);
    }
    check_records(records, schema)?;
    let mut out = Vec::new();
    for attr in &schema.attributes {
        for group in &attr.groups {
            let (count, correct) = records
                .iter()
                .filter(|r| r.in_group(&attr.name, group))
                .fold((0, 0), |(n, c), r| (n + 1, c + usize::from(r.is_correct())));
            out.push(GroupAccuracy {
                attribute: attr.name.clone(),
                group: group.clone(),
                accuracy: (count > 0).then(|| correct as f64 / count as f64),
                count,
                correct,
            });
        }
    }
    Ok(out)
}

/// Mean absolute deviation of nonempty-group accuracy from overall accuracy.
pub fn unfairness(records: &[EvalRecord], schema: &DemographicSchema) -> Result<f64, FairnessError> {
    let overall = overall_accuracy(records)?;
    let groups = group_accuracies(records, schema)?;
    unfairness_from(overall, &groups)
}

fn unfairness_from(overall: f64, groups: &[GroupAccuracy]) -> Result<f64, FairnessError> {
    let deviations: Vec<f64> = groups
        .iter()
        .filter_map(|g| g.accuracy)
        .map(|acc| (acc - overall).abs())
        .collect();
    if deviations.is_empty() {
        return Err(FairnessError::EmptyInput);
    }
    Ok(deviations.iter().sum::<f64>() / deviations.len() as f64)
}

/// All unordered within-attribute pairs, in schema order.
pub fn group_pairs(schema: &DemographicSchema) -> Vec<GroupPair> {
    let mut pairs = Vec::new();
    for attr in &schema.attributes {
        for (i, first) in attr.groups.iter().enumerate() {
            for second in &attr.groups[i + 1..] {
                pairs.push(GroupPair {
                    attribute: attr.name.clone(),
                    first: first.clone(),
                    second: second.clone(),
                });
            }
        }
    }
    pairs
}

pub fn confusion(records: &[EvalRecord], attribute: &str, group: &str, class: usize) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in records.iter().filter(|r| r.in_group(attribute, group)) {
        counts.add(r.true_label == class, r.pred_label == class);
    }
    counts
}

/// Absolute TPR/FPR/TNR gaps between the two groups of `pair` for the
/// one-vs-rest problem of `class`.
pub fn pairwise_rates(
    records: &[EvalRecord],
    schema: &DemographicSchema,
    class: usize,
    pair: &GroupPair,
) -> Result<RateGaps, FairnessError> {
    let known = schema.attribute(&pair.attribute).is_some_and(|a| {
        pair.first != pair.second && a.groups.contains(&pair.first) && a.groups.contains(&pair.second)
    });
    if !known {
        return Err(FairnessError::UnknownPair(format!(
            "{}: {} / {}",
            pair.attribute, pair.first, pair.second
        )));
    }
    check_records(records, schema)?;
    let a = confusion(records, &pair.attribute, &pair.first, class);
    let b = confusion(records, &pair.attribute, &pair.second, class);
    for (counts, group) in [(&a, &pair.first), (&b, &pair.second)] {
        if counts.positives() == 0 {
            return Err(FairnessError::UndefinedRate {
                rate: "TPR",
                group: group.clone(),
                class,
            });
        }
        if counts.negatives() == 0 {
            return Err(FairnessError::UndefinedRate {
                rate: "FPR",
                group: group.clone(),
                class,
            });
        }
    }
    Ok(gaps(&a, &b).expect("rates defined"))
}

fn gaps(a: &ConfusionCounts, b: &ConfusionCounts) -> Option<RateGaps> {
    Some(RateGaps {
        tpr_diff: (a.tpr()? - b.tpr()?).abs(),
        fpr_diff: (a.fpr()? - b.fpr()?).abs(),
        tnr_diff: (a.tnr()? - b.tnr()?).abs(),
    })
}

/// Per-pair lists of defined per-class gaps.
fn pair_gaps(
    records: &[EvalRecord],
    schema: &DemographicSchema,
) -> Result<Vec<Vec<RateGaps>>, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::EmptyInput);
    }
    check_records(records, schema)?;
    let classes: Vec<usize> = records
        .iter()
        .map(|r| r.true_label)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    // counts[attribute][group][class index]
    let mut counts: Vec<Vec<Vec<ConfusionCounts>>> = schema
        .attributes
        .iter()
        .map(|a| vec![vec![ConfusionCounts::default(); classes.len()]; a.groups.len()])
        .collect();
    for r in records {
        for (ai, attr) in schema.attributes.iter().enumerate() {
            let group = &r.memberships[&attr.name];
            let gi = attr
                .groups
                .iter()
                .position(|g| g == group)
                .expect("membership checked");
            for (ci, &class) in classes.iter().enumerate() {
                counts[ai][gi][ci].add(r.true_label == class, r.pred_label == class);
            }
        }
    }

    let mut out = Vec::new();
    for (ai, attr) in schema.attributes.iter().enumerate() {
        for i in 0..attr.groups.len() {
            for j in i + 1..attr.groups.len() {
                let terms = (0..classes.len())
                    .filter_map(|ci| {
                        let (a, b) = (&counts[ai][i][ci], &counts[ai][j][ci]);
                        let defined = a.positives() > 0
                            && a.negatives() > 0
                            && b.positives() > 0
                            && b.negatives() > 0;
                        if defined {
                            gaps(a, b)
                        } else {
                            None
                        }
                    })
                    .collect();
                out.push(terms);
            }
        }
    }
    Ok(out)
}

/// Class-macro mean within each pair, then mean over pairs with at least one
/// defined class term.
fn pair_mean(per_pair: &[Vec<RateGaps>], term: impl Fn(&RateGaps) -> f64) -> Option<f64> {
    let pair_scores: Vec<f64> = per_pair
        .iter()
        .filter(|terms| !terms.is_empty())
        .map(|terms| terms.iter().map(&term).sum::<f64>() / terms.len() as f64)
        .collect();
    if pair_scores.is_empty() {
        None
    } else {
        Some(pair_scores.iter().sum::<f64>() / pair_scores.len() as f64)
    }
}

fn eodd_term(g: &RateGaps) -> f64 {
    g.tpr_diff.max(g.fpr_diff)
}

/// Equalized odds: pair mean of `max(|dTPR|, |dFPR|)`.
pub fn eodd(records: &[EvalRecord], schema: &DemographicSchema) -> Result<Option<f64>, FairnessError> {
    Ok(pair_mean(&pair_gaps(records, schema)?, eodd_term))
}

/// Equal opportunity on the positive class: pair mean of `|dTPR|`.
pub fn eopp1(records: &[EvalRecord], schema: &DemographicSchema) -> Result<Option<f64>, FairnessError> {
    Ok(pair_mean(&pair_gaps(records, schema)?, |g| g.tpr_diff))
}

/// Equal opportunity on the negative class: pair mean of `|dTNR|`.
pub fn eopp2(records: &[EvalRecord], schema: &DemographicSchema) -> Result<Option<f64>, FairnessError> {
    Ok(pair_mean(&pair_gaps(records, schema)?, |g| g.tnr_diff))
}

pub fn evaluate_fairness(
    records: &[EvalRecord],
    schema: &DemographicSchema,
) -> Result<FairnessSummary, FairnessError> {
    let accuracy = overall_accuracy(records)?;
    let groups = group_accuracies(records, schema)?;
    let unfairness = unfairness_from(accuracy, &groups)?;
    let per_pair = pair_gaps(records, schema)?;
    Ok(FairnessSummary {
        accuracy,
        unfairness,
        eodd: pair_mean(&per_pair, eodd_term),
        eopp1: pair_mean(&per_pair, |g| g.tpr_diff),
        eopp2: pair_mean(&per_pair, |g| g.tnr_diff),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::Attribute;

    fn rec(id: usize, t: usize, p: usize, groups: &[(&str, &str)]) -> EvalRecord {
        EvalRecord {
            sample_id: format!("s{id}"),
            true_label: t,
            pred_label: p,
            memberships: groups
                .iter()
                .map(|(a, g)| (a.to_string(), g.to_string()))
                .collect(),
        }
    }

    fn binary_schema() -> DemographicSchema {
        DemographicSchema::new(vec![Attribute {
            name: "gender".into(),
            groups: vec!["male".into(), "female".into()],
        }])
        .unwrap()
    }

    /// g1: TP 8/10, FP 1/5; g2: TP 6/10, FP 2/5 for positive class 1.
    fn pairwise_example() -> Vec<EvalRecord> {
        let mut out = Vec::new();
        let mut id = 0;
        let mut push = |group: &str, t: usize, p: usize, n: usize| {
            for _ in 0..n {
                out.push(rec(id, t, p, &[("gender", group)]));
                id += 1;
            }
        };
        push("male", 1, 1, 8);
        push("male", 1, 0, 2);
        push("male", 0, 1, 1);
        push("male", 0, 0, 4);
        push("female", 1, 1, 6);
        push("female", 1, 0, 4);
        push("female", 0, 1, 2);
        push("female", 0, 0, 3);
        out
    }

    fn male_female() -> GroupPair {
        GroupPair {
            attribute: "gender".into(),
            first: "male".into(),
            second: "female".into(),
        }
    }

    #[test]
    fn accuracy_counts() {
        let records: Vec<_> = (0..10)
            .map(|i| rec(i, 1, if i < 7 { 1 } else { 0 }, &[("gender", "male")]))
            .collect();
        assert_eq!(overall_accuracy(&records).unwrap(), 0.7);
        let all: Vec<_> = (0..5).map(|i| rec(i, 2, 2, &[("gender", "male")])).collect();
        assert_eq!(overall_accuracy(&all).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[]), Err(FairnessError::EmptyInput));
    }

    #[test]
    fn two_group_unfairness_hand_case() {
        // 10 male at 0.6, 10 female at 0.8; overall 0.7.
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(rec(i, 0, usize::from(i >= 6), &[("gender", "male")]));
            records.push(rec(100 + i, 0, usize::from(i >= 8), &[("gender", "female")]));
        }
        let u = unfairness(&records, &binary_schema()).unwrap();
        assert!((u - 0.1).abs() < 1e-12, "{u}");
    }

    #[test]
    fn empty_groups_are_reported_but_not_averaged() {
        let records: Vec<_> = (0..4)
            .map(|i| {
                rec(
                    i,
                    0,
                    usize::from(i == 0),
                    &[("gender", "male"), ("age", "young")],
                )
            })
            .collect();
        let schema = DemographicSchema::gender_age();
        let groups = group_accuracies(&records, &schema).unwrap();
        assert_eq!(groups.len(), 5);
        assert_eq!(groups[1].count, 0);
        assert_eq!(groups[1].accuracy, None);
        assert_eq!(groups[0].count, 4);
        assert_eq!(groups[0].correct, 3);
        // male and young both equal overall accuracy.
        assert_eq!(unfairness(&records, &schema).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_rates_hand_case() {
        let records = pairwise_example();
        let gaps = pairwise_rates(&records, &binary_schema(), 1, &male_female()).unwrap();
        assert!((gaps.tpr_diff - 0.2).abs() < 1e-12);
        assert!((gaps.fpr_diff - 0.2).abs() < 1e-12);
        assert!((gaps.tnr_diff - gaps.fpr_diff).abs() < 1e-12);
    }

    #[test]
    fn opportunity_scores_hand_case() {
        let records = pairwise_example();
        let schema = binary_schema();
        for score in [eodd, eopp1, eopp2] {
            let v = score(&records, &schema).unwrap().unwrap();
            assert!((v - 0.2).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn undefined_rate_is_an_error_not_zero() {
        let records = vec![
            rec(0, 1, 1, &[("gender", "male")]),
            rec(1, 0, 0, &[("gender", "male")]),
            rec(2, 0, 0, &[("gender", "female")]),
        ];
        let schema = binary_schema();
        let err = pairwise_rates(&records, &schema, 1, &male_female()).unwrap_err();
        assert!(matches!(err, FairnessError::UndefinedRate { rate: "TPR", .. }));
        // Every (pair, class) term is undefined: the score is absent, not 0.
        assert_eq!(eodd(&records, &schema).unwrap(), None);
        assert_eq!(eopp1(&records, &schema).unwrap(), None);
    }

    #[test]
    fn unknown_pair_rejected() {
        let pair = GroupPair {
            attribute: "gender".into(),
            first: "male".into(),
            second: "old".into(),
        };
        assert!(matches!(
            pairwise_rates(&pairwise_example(), &binary_schema(), 1, &pair),
            Err(FairnessError::UnknownPair(_))
        ));
    }

    #[test]
    fn pair_enumeration() {
        let pairs = group_pairs(&DemographicSchema::gender_age());
        let names: Vec<_> = pairs
            .iter()
            .map(|p| format!("{}/{}", p.first, p.second))
            .collect();
        assert_eq!(
            names,
            ["male/female", "young/middle", "young/old", "middle/old"]
        );
    }

    #[test]
    fn summary_matches_individual_ops() {
        let records = pairwise_example();
        let schema = binary_schema();
        let s = evaluate_fairness(&records, &schema).unwrap();
        assert_eq!(s.accuracy, overall_accuracy(&records).unwrap());
        assert_eq!(s.unfairness, unfairness(&records, &schema).unwrap());
        assert_eq!(s.eodd, eodd(&records, &schema).unwrap());
        assert_eq!(s.eopp1, eopp1(&records, &schema).unwrap());
        assert_eq!(s.eopp2, eopp2(&records, &schema).unwrap());
    }
}
