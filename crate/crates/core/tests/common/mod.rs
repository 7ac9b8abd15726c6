//! Independent oracles and generators shared by the integration tests.
//! Oracles work from raw tuples or the JSON document form, never from the
//! library's own helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fairnas_core::arch::{ActivationKind, GlobalPoolKind, NormKind, PoolKind};
use fairnas_core::fairness::Attribute;
use fairnas_core::{Architecture, DemographicSchema, EvalRecord, LayerSpec, TensorShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- fairness

/// A dataset as plain tuples: `(true, pred, group index per attribute)`.
#[derive(Debug, Clone)]
pub struct RawData {
    pub groups_per_attr: Vec<usize>,
    pub rows: Vec<(usize, usize, Vec<usize>)>,
}

impl RawData {
    pub fn schema(&self) -> DemographicSchema {
        DemographicSchema::new(
            self.groups_per_attr
                .iter()
                .enumerate()
                .map(|(a, &n)| Attribute {
                    name: format!("attr{a}"),
                    groups: (0..n).map(|g| format!("g{g}")).collect(),
                })
                .collect(),
        )
        .expect("generated schema is valid")
    }

    pub fn records(&self) -> Vec<EvalRecord> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, (t, p, gs))| EvalRecord {
                sample_id: format!("s{i}"),
                true_label: *t,
                pred_label: *p,
                memberships: gs
                    .iter()
                    .enumerate()
                    .map(|(a, g)| (format!("attr{a}"), format!("g{g}")))
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect()
    }
}

/// Up to `max_records` rows, up to 4 classes, one or two attributes of two
/// or three groups, with per-group skill so groups actually differ.
pub fn random_dataset(r: &mut ChaCha8Rng, max_records: usize) -> RawData {
    let n = r.random_range(1..=max_records);
    let classes = r.random_range(1..=4usize);
    let attrs = r.random_range(1..=2usize);
    let groups_per_attr: Vec<usize> = (0..attrs).map(|_| r.random_range(2..=3)).collect();
    let skill: Vec<Vec<f64>> = groups_per_attr
        .iter()
        .map(|&g| (0..g).map(|_| r.random_range(0.0..1.0)).collect())
        .collect();
    let rows = (0..n)
        .map(|_| {
            let gs: Vec<usize> = groups_per_attr.iter().map(|&g| r.random_range(0..g)).collect();
            let t = r.random_range(0..classes);
            let p_correct = gs.iter().enumerate().map(|(a, &g)| skill[a][g]).sum::<f64>()
                / gs.len() as f64;
            let p = if r.random_bool(p_correct) {
                t
            } else {
                r.random_range(0..classes)
            };
            (t, p, gs)
        })
        .collect();
    RawData {
        groups_per_attr,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScores {
    pub accuracy: f64,
    pub unfairness: f64,
    pub eodd: Option<f64>,
    pub eopp1: Option<f64>,
    pub eopp2: Option<f64>,
}

/// Nested-loop transcription of the four scores.
///
/// Unfairness: mean over nonempty groups of |Acc_j - Acc|.
/// EODD / EOPP1 / EOPP2: for every within-attribute pair and every class
/// treated one-vs-rest, `max(|dTPR|, |dFPR|)`, `|dTPR|`, `|dTNR|`; a class
/// term exists only when both groups have a positive and a negative. Terms
/// are averaged per pair, pairs with terms are averaged.
pub fn brute_force_scores(data: &RawData) -> OracleScores {
    let n = data.rows.len() as f64;
    let mut correct = 0.0;
    for (t, p, _) in &data.rows {
        if t == p {
            correct += 1.0;
        }
    }
    let accuracy = correct / n;

    let mut dev_sum = 0.0;
    let mut dev_n = 0.0;
    for (a, &ng) in data.groups_per_attr.iter().enumerate() {
        for g in 0..ng {
            let mut members = 0.0;
            let mut hits = 0.0;
            for (t, p, gs) in &data.rows {
                if gs[a] == g {
                    members += 1.0;
                    if t == p {
                        hits += 1.0;
                    }
                }
            }
            if members > 0.0 {
                dev_sum += (hits / members - accuracy).abs();
                dev_n += 1.0;
            }
        }
    }
    let unfairness = dev_sum / dev_n;

    let mut max_label = 0;
    for (t, p, _) in &data.rows {
        max_label = max_label.max(*t).max(*p);
    }

    let mut pair_scores: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (a, &ng) in data.groups_per_attr.iter().enumerate() {
        for g1 in 0..ng {
            for g2 in (g1 + 1)..ng {
                let mut terms: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
                for c in 0..=max_label {
                    // [tp, fn, fp, tn] per group
                    let mut cm = [[0.0f64; 4]; 2];
                    for (t, p, gs) in &data.rows {
                        let slot = if gs[a] == g1 {
                            0
                        } else if gs[a] == g2 {
                            1
                        } else {
                            continue;
                        };
                        let idx = match (*t == c, *p == c) {
                            (true, true) => 0,
                            (true, false) => 1,
                            (false, true) => 2,
                            (false, false) => 3,
                        };
                        cm[slot][idx] += 1.0;
                    }
                    let pos = |s: usize| cm[s][0] + cm[s][1];
                    let neg = |s: usize| cm[s][2] + cm[s][3];
                    if pos(0) == 0.0 || neg(0) == 0.0 || pos(1) == 0.0 || neg(1) == 0.0 {
                        continue;
                    }
                    let tpr = |s: usize| cm[s][0] / pos(s);
                    let fpr = |s: usize| cm[s][2] / neg(s);
                    let tnr = |s: usize| cm[s][3] / neg(s);
                    let dtpr = (tpr(0) - tpr(1)).abs();
                    let dfpr = (fpr(0) - fpr(1)).abs();
                    let dtnr = (tnr(0) - tnr(1)).abs();
                    terms[0].push(if dtpr > dfpr { dtpr } else { dfpr });
                    terms[1].push(dtpr);
                    terms[2].push(dtnr);
                }
                for k in 0..3 {
                    if !terms[k].is_empty() {
                        let mean = terms[k].iter().sum::<f64>() / terms[k].len() as f64;
                        pair_scores[k].push(mean);
                    }
                }
            }
        }
    }
    let mean = |v: &Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    OracleScores {
        accuracy,
        unfairness,
        eodd: mean(&pair_scores[0]),
        eopp1: mean(&pair_scores[1]),
        eopp2: mean(&pair_scores[2]),
    }
}

pub fn close_opt(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

// ---------------------------------------------------------- architectures

/// Number of window placements along one axis, counted one by one.
pub fn count_windows(extent: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let padded = extent + 2 * padding;
    let mut start = 0;
    let mut count = 0;
    while start + kernel <= padded {
        count += 1;
        start += stride;
    }
    count
}

fn field(layer: &Value, key: &str) -> usize {
    layer[key].as_u64().unwrap_or_else(|| panic!("{key} in {layer}")) as usize
}

fn doc(arch: &Architecture) -> Value {
    serde_json::to_value(arch).unwrap()
}

/// Walks the JSON layer list, returning every output shape or the index of
/// the first layer that cannot run (the last index when the network does not
/// end in a flat `num_classes` vector).
pub fn simulate_shapes(arch: &Architecture) -> Result<Vec<(usize, usize, usize)>, usize> {
    let d = doc(arch);
    let input = &d["input"];
    let mut s = (field(input, "channels"), field(input, "height"), field(input, "width"));
    let mut flat = false;
    let layers = d["layers"].as_array().unwrap();
    let mut out = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        s = match l["op"].as_str().unwrap() {
            "conv2d" | "pool" => {
                if flat {
                    return Err(i);
                }
                let conv = l["op"] == "conv2d";
                let (k, st, p) = if conv {
                    (field(l, "kernel"), field(l, "stride"), field(l, "padding"))
                } else {
                    (field(l, "size"), field(l, "stride"), 0)
                };
                let h = count_windows(s.1, k, st, p);
                let w = count_windows(s.2, k, st, p);
                if h == 0 || w == 0 {
                    return Err(i);
                }
                (if conv { field(l, "out_channels") } else { s.0 }, h, w)
            }
            "global_pool" => {
                if flat {
                    return Err(i);
                }
                (s.0, 1, 1)
            }
            "flatten" => {
                flat = true;
                (s.0 * s.1 * s.2, 1, 1)
            }
            "dense" => {
                if !flat {
                    return Err(i);
                }
                (field(l, "out_features"), 1, 1)
            }
            "norm" if l["kind"] == "group" => {
                if !s.0.is_multiple_of(field(l, "groups")) {
                    return Err(i);
                }
                s
            }
            "norm" | "act" | "dropout" => s,
            other => panic!("unknown op {other}"),
        };
        out.push(s);
    }
    if !flat || s.0 != arch.num_classes {
        return Err(layers.len() - 1);
    }
    Ok(out)
}

type Shape3 = (usize, usize, usize);
type CostRow = fn(&Value, Shape3, Shape3) -> (u64, u64);

fn numel(s: Shape3) -> u64 {
    (s.0 * s.1 * s.2) as u64
}

/// Per-op `(params, flops per item)` table.
pub fn cost_table() -> BTreeMap<&'static str, CostRow> {
    let mut t: BTreeMap<&'static str, CostRow> = BTreeMap::new();
    t.insert("conv2d", |l, i, o| {
        let k = field(l, "kernel") as u64;
        let (cin, cout) = (i.0 as u64, o.0 as u64);
        let bias = if l["bias"].as_bool().unwrap() { cout } else { 0 };
        (k * k * cin * cout + bias, 2 * k * k * cin * cout * (o.1 * o.2) as u64)
    });
    t.insert("dense", |l, i, o| {
        let (fin, fout) = (numel(i), o.0 as u64);
        let bias = if l["bias"].as_bool().unwrap() { fout } else { 0 };
        (fin * fout + bias, 2 * fin * fout)
    });
    t.insert("norm", |l, i, _| {
        let params = if l["kind"] == "none" { 0 } else { 2 * i.0 as u64 };
        (params, 4 * numel(i))
    });
    t.insert("act", |_, i, _| (0, numel(i)));
    t.insert("pool", |_, i, _| (0, numel(i)));
    t.insert("global_pool", |_, i, _| (0, numel(i)));
    t.insert("dropout", |_, _, _| (0, 0));
    t.insert("flatten", |_, _, _| (0, 0));
    t
}

/// `(param_count, flops)` for batch 1, from the table and simulated shapes.
pub fn table_cost(arch: &Architecture) -> (u64, u64) {
    let shapes = simulate_shapes(arch).expect("valid architecture");
    let table = cost_table();
    let d = doc(arch);
    let input = (arch.input.channels, arch.input.height, arch.input.width);
    let mut params = 0;
    let mut flops = 0;
    for (i, l) in d["layers"].as_array().unwrap().iter().enumerate() {
        let inp = if i == 0 { input } else { shapes[i - 1] };
        let (p, f) = table[l["op"].as_str().unwrap()](l, inp, shapes[i]);
        params += p;
        flops += f;
    }
    (params, flops)
}

#[derive(Debug, Clone, Copy)]
pub struct ArchLimits {
    pub max_dim: usize,
    pub max_channels: usize,
    pub max_body_layers: usize,
}

impl ArchLimits {
    pub const SMALL: ArchLimits = ArchLimits {
        max_dim: 8,
        max_channels: 8,
        max_body_layers: 3,
    };
    pub const MEDIUM: ArchLimits = ArchLimits {
        max_dim: 32,
        max_channels: 64,
        max_body_layers: 8,
    };
}

fn random_norm(r: &mut ChaCha8Rng, channels: usize) -> LayerSpec {
    match r.random_range(0..4) {
        0 => LayerSpec::Norm {
            kind: NormKind::Batch,
            groups: None,
        },
        1 => LayerSpec::Norm {
            kind: NormKind::Layer,
            groups: None,
        },
        2 => {
            let divisors: Vec<usize> = (1..=channels).filter(|d| channels.is_multiple_of(*d)).collect();
            LayerSpec::Norm {
                kind: NormKind::Group,
                groups: Some(divisors[r.random_range(0..divisors.len())]),
            }
        }
        _ => LayerSpec::Norm {
            kind: NormKind::None,
            groups: None,
        },
    }
}

fn random_act(r: &mut ChaCha8Rng) -> LayerSpec {
    let kinds = [
        ActivationKind::Relu,
        ActivationKind::Gelu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
    ];
    LayerSpec::Activation {
        kind: kinds[r.random_range(0..kinds.len())],
    }
}

/// A shape-valid architecture: a convolutional body, a pooled or flattened
/// neck, optional hidden dense layers and a classifier.
pub fn random_valid_arch(r: &mut ChaCha8Rng, lim: ArchLimits, name: &str) -> Architecture {
    let input = TensorShape::new(
        r.random_range(1..=lim.max_channels.min(4)),
        r.random_range(1..=lim.max_dim),
        r.random_range(1..=lim.max_dim),
    );
    let num_classes = r.random_range(1..=8);
    let mut layers = Vec::new();
    let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
    for _ in 0..r.random_range(0..=lim.max_body_layers) {
        match r.random_range(0..6) {
            0 | 1 => {
                let k = [1, 3, 5][r.random_range(0..3)];
                let p = r.random_range(0..=k / 2);
                let s = r.random_range(1..=2);
                if h + 2 * p < k || w + 2 * p < k {
                    continue;
                }
                let oc = r.random_range(1..=lim.max_channels);
                layers.push(LayerSpec::Conv2d {
                    out_channels: oc,
                    kernel: k,
                    stride: s,
                    padding: p,
                    bias: r.random_bool(0.5),
                });
                c = oc;
                h = (h + 2 * p - k) / s + 1;
                w = (w + 2 * p - k) / s + 1;
            }
            2 => layers.push(random_norm(r, c)),
            3 => layers.push(random_act(r)),
            4 => {
                let size = r.random_range(1..=2);
                if h < size || w < size {
                    continue;
                }
                let kind = if r.random_bool(0.5) { PoolKind::Max } else { PoolKind::Avg };
                layers.push(LayerSpec::Pool { kind, size, stride: size });
                h = (h - size) / size + 1;
                w = (w - size) / size + 1;
            }
            _ => layers.push(LayerSpec::Dropout {
                p: r.random_range(0..5) as f64 / 10.0,
            }),
        }
    }
    if r.random_bool(0.5) {
        layers.push(LayerSpec::GlobalPool {
            kind: GlobalPoolKind::Avg,
        });
    }
    layers.push(LayerSpec::Flatten);
    if r.random_bool(0.4) {
        layers.push(LayerSpec::Dense {
            out_features: r.random_range(1..=lim.max_channels),
            bias: r.random_bool(0.5),
        });
        layers.push(random_act(r));
    }
    layers.push(LayerSpec::Dense {
        out_features: num_classes,
        bias: r.random_bool(0.5),
    });
    let _ = (c, h, w);
    Architecture {
        name: name.into(),
        input,
        num_classes,
        layers,
    }
}

/// Any domain-valid layer with small fields; stacks of these are often
/// shape-invalid.
pub fn random_any_layer(r: &mut ChaCha8Rng) -> LayerSpec {
    match r.random_range(0..9) {
        0 | 1 => LayerSpec::Conv2d {
            out_channels: r.random_range(1..=6),
            kernel: r.random_range(1..=5),
            stride: r.random_range(1..=3),
            padding: r.random_range(0..=2),
            bias: r.random_bool(0.5),
        },
        2 => LayerSpec::Pool {
            kind: PoolKind::Max,
            size: r.random_range(1..=4),
            stride: r.random_range(1..=3),
        },
        3 => LayerSpec::GlobalPool {
            kind: GlobalPoolKind::Avg,
        },
        4 => LayerSpec::Flatten,
        5 => LayerSpec::Dense {
            out_features: r.random_range(1..=4),
            bias: r.random_bool(0.5),
        },
        6 => LayerSpec::Norm {
            kind: NormKind::Group,
            groups: Some(r.random_range(1..=4)),
        },
        7 => random_act(r),
        _ => LayerSpec::Dropout { p: 0.1 },
    }
}

pub fn random_stack(r: &mut ChaCha8Rng) -> Architecture {
    let n = r.random_range(1..=7);
    Architecture {
        name: "stack".into(),
        input: TensorShape::new(
            r.random_range(1..=4),
            r.random_range(1..=8),
            r.random_range(1..=8),
        ),
        num_classes: r.random_range(1..=4),
        layers: (0..n).map(|_| random_any_layer(r)).collect(),
    }
}

// ------------------------------------------------------------ fixtures

pub fn test_device() -> fairnas_core::DeviceProfile {
    fairnas_core::DeviceProfile {
        name: "test-device".into(),
        flops_per_second: 1e12,
        per_layer_overhead_s: 1e-5,
        bytes_per_scalar: 4,
        memory_limit_bytes: None,
        note: None,
    }
}

/// A fenced architecture reply with a conv body of the given widths.
pub fn conv_reply(name: &str, widths: &[usize]) -> String {
    let mut layers: Vec<Value> = widths
        .iter()
        .map(|w| {
            serde_json::json!({"op":"conv2d","out_channels":w,"kernel":3,"stride":1,"padding":1,"bias":true})
        })
        .collect();
    layers.push(serde_json::json!({"op":"act","kind":"relu"}));
    layers.push(serde_json::json!({"op":"global_pool","kind":"avg"}));
    layers.push(serde_json::json!({"op":"flatten"}));
    layers.push(serde_json::json!({"op":"dense","out_features":8,"bias":true}));
    let doc = serde_json::json!({
        "name": name,
        "input": {"channels": 3, "height": 32, "width": 32},
        "num_classes": 8,
        "layers": layers,
    });
    format!("Proposed design:\n```json\n{doc}\n```\n")
}
