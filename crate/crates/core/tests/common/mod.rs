//! Scene builders shared by the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use biogeo::classifier::TrainingSet;
use biogeo::raster::{ClassModel, LabelMap, MultibandImage, Patch, SceneSpec};

pub const BAND_NAMES: [&str; 7] = ["RED", "GREEN", "NIR", "MIR", "RS1", "RS2", "DEM"];

pub fn band_names() -> Vec<String> {
    BAND_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Five vertical stripes, one per class; per-band means are the `base`
/// levels rotated by class so every pair of classes is `base`-spaced apart
/// in every band.
pub fn five_class_spec(width: u32, height: u32, stddev: f64, seed: u64) -> SceneSpec {
    let base = [10.0, 70.0, 130.0, 190.0, 250.0];
    let class_names = ["water", "vegetation", "urban", "rocky", "barren"];
    let classes = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| ClassModel {
            name: name.to_string(),
            means: (0..7).map(|b| base[(c + b) % 5]).collect(),
            stddevs: vec![stddev; 7],
        })
        .collect();
    let mut patches = Vec::new();
    let mut x = 0;
    for (c, name) in class_names.iter().enumerate() {
        let w = width / 5 + if (c as u32) < width % 5 { 1 } else { 0 };
        patches.push(Patch {
            class: name.to_string(),
            x,
            y: 0,
            width: w,
            height,
        });
        x += w;
    }
    SceneSpec {
        width,
        height,
        seed,
        bands: band_names(),
        classes,
        patches,
    }
}

/// First `per_class` pixels of every class, scanned row-major.
pub fn training_from_truth(
    image: &MultibandImage,
    truth: &LabelMap,
    per_class: usize,
) -> TrainingSet {
    let mut entries: Vec<(String, Vec<Vec<u8>>)> = truth
        .classes()
        .iter()
        .map(|c| (c.clone(), Vec::new()))
        .collect();
    for (idx, label) in truth.labels().iter().enumerate() {
        if let Some(class) = label {
            let slot = &mut entries[*class as usize].1;
            if slot.len() < per_class {
                slot.push(image.pixel_vector_at(idx as u32));
            }
        }
    }
    TrainingSet::new(entries).unwrap()
}

/// Writes a training CSV in the classifier's expected layout.
pub fn training_csv(image: &MultibandImage, truth: &LabelMap, per_class: usize) -> String {
    let mut csv = format!("{},DECISION\n", image.band_names().join(","));
    let mut taken = vec![0usize; truth.classes().len()];
    for (idx, label) in truth.labels().iter().enumerate() {
        if let Some(class) = label {
            if taken[*class as usize] < per_class {
                taken[*class as usize] += 1;
                let dns: Vec<String> = image
                    .pixel_vector_at(idx as u32)
                    .into_iter()
                    .map(|v| v.to_string())
                    .collect();
                csv.push_str(&dns.join(","));
                csv.push(',');
                csv.push_str(&truth.classes()[*class as usize]);
                csv.push('\n');
            }
        }
    }
    csv
}
