use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EvalError, EvaluatorSpec};
use crate::arch::{serialize_architecture, Architecture};
use crate::cost::analyze;
use crate::fairness::{evaluate_fairness, DemographicSchema, EvalRecord, MetricsRecord};

/// Parameter count at which the synthetic accuracy peaks.
pub const LANDSCAPE_CENTER_PARAMS: f64 = 3.0e5;

const SAMPLES_PER_GROUP: usize = 200;
const MAX_OFFSET: f64 = 0.15;

/// Base accuracy of the synthetic landscape as a function of model size.
pub fn landscape_accuracy(param_count: u64) -> f64 {
    let d = (param_count.max(1) as f64).ln() - LANDSCAPE_CENTER_PARAMS.ln();
    0.5 + 0.35 * (-d * d / 8.0).exp()
}

fn arch_hash(arch: &Architecture, seed: u64) -> Result<[u8; 8], EvalError> {
    let text = serialize_architecture(arch).map_err(|e| EvalError::Config(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut h = [0u8; 8];
    h.copy_from_slice(&digest[..8]);
    Ok(h)
}

fn keyed_rng(h: &[u8; 8], parts: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(h);
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// The synthetic test set behind a simulated evaluation.
///
/// Records are laid out over every combination of groups ("cells"), with
/// enough samples per cell that each group holds at least 200. A cell's
/// accuracy is `clamp(base + sum of its groups' offsets, 0, 1)`.
pub fn simulated_records(
    arch: &Architecture,
    seed: u64,
    schema: &DemographicSchema,
    param_count: u64,
) -> Result<Vec<EvalRecord>, EvalError> {
    let h = arch_hash(arch, seed)?;
    let base = landscape_accuracy(param_count);
    let classes = arch.num_classes.max(1);

    let offsets: Vec<Vec<f64>> = schema
        .attributes
        .iter()
        .map(|a| {
            a.groups
                .iter()
                .map(|g| keyed_rng(&h, &["offset", &a.name, g]).random_range(-MAX_OFFSET..=MAX_OFFSET))
                .collect()
        })
        .collect();

    let sizes: Vec<usize> = schema.attributes.iter().map(|a| a.groups.len()).collect();
    let cells: usize = sizes.iter().product();
    let min_cells_per_group = sizes.iter().map(|s| cells / s).min().unwrap_or(1).max(1);
    let per_cell = SAMPLES_PER_GROUP.div_ceil(min_cells_per_group);

    let mut records = Vec::with_capacity(cells * per_cell);
    for cell in 0..cells {
        let mut rem = cell;
        let mut memberships = BTreeMap::new();
        let mut acc = base;
        for (a, attr) in schema.attributes.iter().enumerate() {
            let g = rem % sizes[a];
            rem /= sizes[a];
            memberships.insert(attr.name.clone(), attr.groups[g].clone());
            acc += offsets[a][g];
        }
        let acc = acc.clamp(0.0, 1.0);

        let mut rng = keyed_rng(&h, &["cell", &cell.to_string()]);
        let correct = (acc * per_cell as f64).round() as usize;
        let mut hits: Vec<bool> = (0..per_cell).map(|i| i < correct).collect();
        hits.shuffle(&mut rng);
        for (i, hit) in hits.into_iter().enumerate() {
            let true_label = rng.random_range(0..classes);
            let pred_label = if hit || classes < 2 {
                true_label
            } else {
                (true_label + 1 + rng.random_range(0..classes - 1)) % classes
            };
            records.push(EvalRecord {
                sample_id: format!("sim-{cell}-{i}"),
                true_label,
                pred_label,
                memberships: memberships.clone(),
            });
        }
    }
    Ok(records)
}

fn loss_from_accuracy(acc: f64) -> f64 {
    -acc.clamp(1e-6, 1.0).ln()
}

/// Deterministic stand-in for training: a pure function of the canonical
/// architecture text and the seed.
pub fn simulated_evaluate(
    arch: &Architecture,
    spec: &EvaluatorSpec,
    schema: &DemographicSchema,
) -> Result<MetricsRecord, EvalError> {
    let cost = analyze(arch, spec.batch, &spec.device)?;
    let records = simulated_records(arch, spec.seed, schema, cost.param_count)?;
    let summary = evaluate_fairness(&records, schema)?;

    let h = arch_hash(arch, spec.seed)?;
    let gap = keyed_rng(&h, &["generalization"]).random_range(0.0..=0.08);
    let valid_acc = summary.accuracy;
    let train_acc = (valid_acc + gap).min(1.0);

    Ok(MetricsRecord {
        train_loss: Some(loss_from_accuracy(train_acc)),
        valid_loss: Some(loss_from_accuracy(valid_acc)),
        train_acc: Some(train_acc),
        valid_acc: Some(valid_acc),
        test_acc: Some(summary.accuracy),
        unfairness: summary.unfairness,
        eodd: summary.eodd,
        eopp1: summary.eopp1,
        eopp2: summary.eopp2,
        group_detail: summary.groups,
        cost,
        measured: None,
    })
}
