//! Plain-text run reports: config echo, per-iteration statistics, final
//! habitat state. Output is byte-stable for identical runs.

use std::fmt::Write as _;

use crate::classifier::{ClassificationResult, ClassifierConfig};
use crate::raster::MultibandImage;

fn fmt_hsi(hsi: &[f64]) -> String {
    hsi.iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a classification run as structured text.
pub fn render_report(
    image: &MultibandImage,
    config: &ClassifierConfig,
    result: &ClassificationResult,
) -> String {
    let mut out = String::new();
    let w = &mut out;

    let _ = writeln!(w, "[image]");
    let _ = writeln!(w, "width  = {}", image.width());
    let _ = writeln!(w, "height = {}", image.height());
    let _ = writeln!(w, "bands  = {}", image.band_names().join(" "));
    let _ = writeln!(w);

    let _ = writeln!(w, "[config]");
    let _ = writeln!(w, "threshold          = {:.4}", config.threshold);
    let _ = writeln!(w, "disc_bands         = {}", config.disc_bands.join(" "));
    let _ = writeln!(w, "initial_intervals  = {}", config.initial_intervals);
    let hsi_bands = match &config.hsi_bands {
        None => "all".to_string(),
        Some(names) => names.join(" "),
    };
    let _ = writeln!(w, "hsi_bands          = {hsi_bands}");
    let _ = writeln!(w, "max_iterations     = {}", config.max_iterations);
    let _ = writeln!(w, "policy             = {}", config.policy);
    let _ = writeln!(w, "aggregate          = {}", config.aggregate);
    let _ = writeln!(w, "stddev_convention  = {}", config.stddev);
    let _ = writeln!(w, "seed               = {}", config.seed);
    let _ = writeln!(w);

    // max_rate: both maximum migration rates equal the species count of the pass
    let _ = writeln!(w, "[iterations]");
    let _ = writeln!(w, "iter processed absorbed rejected unclassified max_rate");
    for row in &result.per_iteration {
        let _ = writeln!(
            w,
            "{} {} {} {} {} {}",
            row.iteration,
            row.species_processed,
            row.species_absorbed,
            row.species_rejected,
            row.unclassified_pixels,
            row.species_processed,
        );
    }
    let _ = writeln!(w);

    for habitat in &result.habitats {
        let _ = writeln!(w, "[habitat {}]", habitat.label);
        let _ = writeln!(w, "training_pixels = {}", habitat.training_pixels);
        let _ = writeln!(w, "absorbed_pixels = {}", habitat.absorbed_pixels);
        let _ = writeln!(w, "hsi = {}", fmt_hsi(&habitat.hsi));
        let _ = writeln!(w);
    }

    let total = result.label_map.labels().len();
    let unclassified = result.unclassified.len();
    let _ = writeln!(w, "[summary]");
    let _ = writeln!(w, "classified   = {}", total - unclassified);
    let _ = writeln!(
        w,
        "unclassified = {} ({:.2}%)",
        unclassified,
        100.0 * unclassified as f64 / total as f64
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{classify, ClassifierConfig};

    #[test]
    fn report_is_stable_and_echoes_config() {
        let spec = crate::classifier::tests::five_class_spec(20, 10, 0.0, 7);
        let (image, truth) = crate::raster::synth_scene(&spec).unwrap();
        let training = crate::classifier::tests::training_from_truth(&image, &truth, 3);
        let config = ClassifierConfig::default();
        let result = classify(&image, &training, &config).unwrap();
        let a = render_report(&image, &config, &result);
        let b = render_report(&image, &config, &result);
        assert_eq!(a, b);
        assert!(a.contains("threshold          = 1.0000"));
        assert!(a.contains("disc_bands         = NIR MIR"));
        assert!(a.contains("unclassified = 0 (0.00%)"));
    }
}
