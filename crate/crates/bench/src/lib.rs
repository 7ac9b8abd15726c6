//! Inputs shared by the benchmarks.

use fairnas_core::{
    parse_architecture, Architecture, DemographicSchema, DeviceProfile, EvalRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` predictions over the gender/age schema with four classes.
pub fn records(n: usize, seed: u64) -> (Vec<EvalRecord>, DemographicSchema) {
    let schema = DemographicSchema::gender_age();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let t = r.random_range(0..4);
            let p = if r.random_bool(0.7) { t } else { r.random_range(0..4) };
            let memberships = schema
                .attributes
                .iter()
                .map(|a| (a.name.clone(), a.groups[r.random_range(0..a.groups.len())].clone()))
                .collect();
            EvalRecord {
                sample_id: format!("s{i}"),
                true_label: t,
                pred_label: p,
                memberships,
            }
        })
        .collect();
    (records, schema)
}

/// A VGG-style stack of `blocks` conv/norm/act/pool blocks on a 224x224 input.
pub fn vgg_like(blocks: usize) -> Architecture {
    let mut layers = Vec::new();
    let mut width = 32;
    for _ in 0..blocks {
        layers.push(format!(
            r#"{{"op":"conv2d","out_channels":{width},"kernel":3,"stride":1,"padding":1,"bias":false}},{{"op":"norm","kind":"batch"}},{{"op":"act","kind":"relu"}},{{"op":"pool","kind":"max","size":2,"stride":2}}"#
        ));
        width = (width * 2).min(256);
    }
    layers.push(r#"{"op":"global_pool","kind":"avg"},{"op":"flatten"},{"op":"dense","out_features":8,"bias":true}"#.into());
    parse_architecture(&format!(
        r#"{{"name":"vgg{blocks}","input":{{"channels":3,"height":224,"width":224}},"num_classes":8,"layers":[{}]}}"#,
        layers.join(",")
    ))
    .expect("benchmark architecture is valid")
}

pub fn device() -> DeviceProfile {
    DeviceProfile::from_json(
        r#"{"name":"bench","flops_per_second":1e12,"per_layer_overhead_s":1e-5,"bytes_per_scalar":4}"#,
    )
    .expect("benchmark device is valid")
}
