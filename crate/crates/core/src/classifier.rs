//! The habitat-migration classifier.
//!
//! One habitat per land-cover class starts out holding expert training
//! vectors; its suitability index (HSI) is the per-band standard deviation
//! of its members. All image pixels are granulated into species (see
//! [`crate::roughset`]) and queued in a universal habitat. Each iteration
//! walks the species largest-first, trial-migrates each into every feature
//! habitat, and absorbs it where the HSI change stays inside the threshold
//! — by default into the passing habitat with the smallest mean absolute
//! change. A species rejected everywhere is re-discretized at doubled
//! granularity and its fragments rejoin the queue for the next iteration.
//! The run stops when the queue empties, when only unsplittable species
//! remain, or after `max_iterations` passes; leftover pixels are reported
//! as unclassified.
//!
//! Habitat statistics are exact integer sums, so HSI values and therefore
//! whole runs are bit-reproducible.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::raster::{check_class_name, LabelMap, MultibandImage};
use crate::roughset::{self, DiscretizationScheme, RoughsetError, Species, SpeciesIdGen};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no training classes")]
    NoClasses,
    #[error("training set has no pixels for class {0:?}")]
    EmptyTraining(String),
    #[error("invalid class name: {0}")]
    BadClassName(String),
    #[error("duplicate training class {0:?}")]
    DuplicateClass(String),
    #[error("training vector has {got} bands, expected {expected}")]
    BandCountMismatch { expected: usize, got: usize },
    #[error("unknown band {0:?}")]
    UnknownBand(String),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("initial interval count must be at least 1")]
    BadIntervals,
    #[error("max_iterations must be at least 1")]
    BadIterations,
    #[error("band mask selects no bands")]
    EmptyMask,
    #[error("empty vector list")]
    EmptyVectors,
    #[error("training csv: {0}")]
    TrainingCsv(String),
    #[error(transparent)]
    Roughset(#[from] RoughsetError),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

/// Divisor convention for the standard deviation behind the HSI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StddevConvention {
    /// Divisor n-1; a single vector has stddev 0 by definition.
    Sample,
    /// Divisor n.
    Population,
}

/// How a species picks a habitat among those whose HSI change passes the
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentPolicy {
    /// First passing habitat in declared class order.
    FirstFit,
    /// Passing habitat with the smallest aggregate |delta|.
    BestFit,
}

/// Scalar summary of a per-band |delta| vector, used to rank passing
/// habitats under [`AssignmentPolicy::BestFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaAggregate {
    MaxAbs,
    MeanAbs,
}

macro_rules! enum_strings {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        concat!("expected one of ", $($text, " "),+ ,", got {:?}"),
                        other
                    )),
                }
            }
        }
    };
}

enum_strings!(StddevConvention { Sample => "sample", Population => "population" });
enum_strings!(AssignmentPolicy { FirstFit => "first-fit", BestFit => "best-fit" });
enum_strings!(DeltaAggregate { MaxAbs => "max-abs", MeanAbs => "mean-abs" });

/// Classifier configuration. Band selections are by name and resolved
/// against the image when a run starts.
#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    /// Per-band bound on the absolute HSI change a habitat may absorb.
    pub threshold: f64,
    /// Bands used for discretization.
    pub disc_bands: Vec<String>,
    /// Initial equal-width interval count per discretization band.
    pub initial_intervals: usize,
    /// Bands entering the HSI comparison; `None` means all bands.
    pub hsi_bands: Option<Vec<String>>,
    /// Full passes over the universal habitat before giving up.
    pub max_iterations: usize,
    pub policy: AssignmentPolicy,
    pub aggregate: DeltaAggregate,
    pub stddev: StddevConvention,
    /// Echoed into reports; the pipeline itself is deterministic.
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            threshold: 1.0,
            disc_bands: vec!["NIR".to_string(), "MIR".to_string()],
            initial_intervals: 8,
            hsi_bands: None,
            max_iterations: 5,
            policy: AssignmentPolicy::BestFit,
            aggregate: DeltaAggregate::MeanAbs,
            stddev: StddevConvention::Sample,
            seed: 0,
        }
    }
}

/// Config with band names resolved to indices for one image.
#[derive(Debug, Clone)]
struct ResolvedConfig {
    threshold: f64,
    disc_bands: Vec<usize>,
    initial_intervals: usize,
    mask: Vec<bool>,
    masked_count: usize,
    max_iterations: usize,
    policy: AssignmentPolicy,
    aggregate: DeltaAggregate,
    stddev: StddevConvention,
}

impl ClassifierConfig {
    fn resolve(&self, image: &MultibandImage) -> Result<ResolvedConfig, ClassifyError> {
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return Err(ClassifyError::BadThreshold(self.threshold));
        }
        if self.initial_intervals == 0 {
            return Err(ClassifyError::BadIntervals);
        }
        if self.max_iterations == 0 {
            return Err(ClassifyError::BadIterations);
        }
        let lookup = |name: &String| {
            image
                .band_index(name)
                .ok_or_else(|| ClassifyError::UnknownBand(name.clone()))
        };
        let mut disc_bands = Vec::with_capacity(self.disc_bands.len());
        for name in &self.disc_bands {
            disc_bands.push(lookup(name)?);
        }
        if disc_bands.is_empty() {
            return Err(ClassifyError::EmptyMask);
        }
        let mut mask = vec![self.hsi_bands.is_none(); image.band_count()];
        if let Some(names) = &self.hsi_bands {
            for name in names {
                mask[lookup(name)?] = true;
            }
        }
        let masked_count = mask.iter().filter(|m| **m).count();
        if masked_count == 0 {
            return Err(ClassifyError::EmptyMask);
        }
        Ok(ResolvedConfig {
            threshold: self.threshold,
            disc_bands,
            initial_intervals: self.initial_intervals,
            mask,
            masked_count,
            max_iterations: self.max_iterations,
            policy: self.policy,
            aggregate: self.aggregate,
            stddev: self.stddev,
        })
    }
}

// ---------------------------------------------------------------------------
// Exact per-band statistics
// ---------------------------------------------------------------------------

/// Count, per-band sum and per-band sum of squares over a set of pixel
/// vectors. Sums are exact, so derived stddevs are bit-reproducible and
/// merges commute with recomputation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandStats {
    n: u64,
    sum: Vec<u64>,
    sumsq: Vec<u64>,
}

impl BandStats {
    pub fn new(bands: usize) -> Self {
        BandStats {
            n: 0,
            sum: vec![0; bands],
            sumsq: vec![0; bands],
        }
    }

    pub fn from_vectors(vectors: &[Vec<u8>]) -> Self {
        let bands = vectors.first().map_or(0, Vec::len);
        let mut stats = BandStats::new(bands);
        for v in vectors {
            stats.add_vector(v);
        }
        stats
    }

    pub fn from_pixels(image: &MultibandImage, pixels: &[u32]) -> Self {
        let mut stats = BandStats::new(image.band_count());
        for &px in pixels {
            for (b, (sum, sumsq)) in stats.sum.iter_mut().zip(stats.sumsq.iter_mut()).enumerate() {
                let v = u64::from(image.dn(b, px));
                *sum += v;
                *sumsq += v * v;
            }
            stats.n += 1;
        }
        stats
    }

    pub fn add_vector(&mut self, v: &[u8]) {
        assert_eq!(v.len(), self.sum.len());
        for (b, &value) in v.iter().enumerate() {
            let value = u64::from(value);
            self.sum[b] += value;
            self.sumsq[b] += value * value;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &BandStats) {
        assert_eq!(self.sum.len(), other.sum.len());
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
    }

    pub fn merged(&self, other: &BandStats) -> BandStats {
        let mut out = self.clone();
        out.merge(other);
        out
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn band_count(&self) -> usize {
        self.sum.len()
    }

    /// Standard deviation of one band. Exact integer numerator/denominator,
    /// one final division and square root.
    pub fn stddev(&self, band: usize, convention: StddevConvention) -> f64 {
        let n = self.n;
        let divisor = match convention {
            StddevConvention::Sample => {
                if n <= 1 {
                    return 0.0;
                }
                n * (n - 1)
            }
            StddevConvention::Population => {
                if n == 0 {
                    return 0.0;
                }
                n * n
            }
        };
        let num = u128::from(n) * u128::from(self.sumsq[band])
            - u128::from(self.sum[band]) * u128::from(self.sum[band]);
        (num as f64 / divisor as f64).sqrt()
    }

    fn stddev_masked(&self, mask: &[bool], convention: StddevConvention) -> Vec<f64> {
        (0..self.band_count())
            .map(|b| {
                if mask[b] {
                    self.stddev(b, convention)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Per-band standard deviation of a set of vectors — the habitat
/// suitability index. Bands excluded by `mask` report 0.
pub fn hsi_of(
    vectors: &[Vec<u8>],
    mask: &[bool],
    convention: StddevConvention,
) -> Result<Vec<f64>, ClassifyError> {
    if vectors.is_empty() {
        return Err(ClassifyError::EmptyVectors);
    }
    let bands = vectors[0].len();
    if mask.len() != bands {
        return Err(ClassifyError::BandCountMismatch {
            expected: bands,
            got: mask.len(),
        });
    }
    for v in vectors {
        if v.len() != bands {
            return Err(ClassifyError::BandCountMismatch {
                expected: bands,
                got: v.len(),
            });
        }
    }
    Ok(BandStats::from_vectors(vectors).stddev_masked(mask, convention))
}

/// True iff every component of `delta` lies in [-threshold, +threshold].
/// Deltas for bands outside the HSI mask are produced as 0 and pass
/// trivially.
pub fn within_threshold(delta: &[f64], threshold: f64) -> bool {
    delta.iter().all(|d| -threshold <= *d && *d <= threshold)
}

// ---------------------------------------------------------------------------
// Habitats
// ---------------------------------------------------------------------------

/// A feature habitat: one land-cover class, its training vectors and the
/// pixels absorbed so far. The HSI is derived from running exact stats over
/// training vectors plus absorbed pixels.
#[derive(Debug, Clone)]
pub struct Habitat {
    label: String,
    class_index: u16,
    training: Vec<Vec<u8>>,
    absorbed: Vec<u32>,
    stats: BandStats,
}

impl Habitat {
    pub fn new(
        label: String,
        class_index: u16,
        training: Vec<Vec<u8>>,
        band_count: usize,
    ) -> Result<Self, ClassifyError> {
        if training.is_empty() {
            return Err(ClassifyError::EmptyTraining(label));
        }
        for v in &training {
            if v.len() != band_count {
                return Err(ClassifyError::BandCountMismatch {
                    expected: band_count,
                    got: v.len(),
                });
            }
        }
        let stats = BandStats::from_vectors(&training);
        Ok(Habitat {
            label,
            class_index,
            training,
            absorbed: Vec::new(),
            stats,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn class_index(&self) -> u16 {
        self.class_index
    }

    pub fn training_count(&self) -> usize {
        self.training.len()
    }

    pub fn absorbed_pixels(&self) -> &[u32] {
        &self.absorbed
    }

    pub fn member_count(&self) -> u64 {
        self.stats.count()
    }

    /// Current HSI over the masked bands.
    pub fn hsi(&self, mask: &[bool], convention: StddevConvention) -> Vec<f64> {
        self.stats.stddev_masked(mask, convention)
    }

    /// HSI change if `species_stats` were absorbed; the habitat itself is
    /// untouched.
    pub fn delta_if_absorbed(
        &self,
        species_stats: &BandStats,
        mask: &[bool],
        convention: StddevConvention,
    ) -> Vec<f64> {
        let trial = self.stats.merged(species_stats);
        (0..self.stats.band_count())
            .map(|b| {
                if mask[b] {
                    trial.stddev(b, convention) - self.stats.stddev(b, convention)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn absorb(&mut self, pixels: &[u32], species_stats: &BandStats) {
        self.absorbed.extend_from_slice(pixels);
        self.stats.merge(species_stats);
    }

    /// Recomputes the stats from scratch and compares with the running
    /// sums; exactness makes this an equality check.
    #[cfg(debug_assertions)]
    fn assert_stats_consistent(&self, image: &MultibandImage) {
        let mut fresh = BandStats::from_vectors(&self.training);
        fresh.merge(&BandStats::from_pixels(image, &self.absorbed));
        assert_eq!(fresh, self.stats, "habitat {} stats drifted", self.label);
    }
}

/// Signed per-band HSI change caused by trial-migrating `species` into
/// `habitat`. Read-only on both sides.
pub fn delta_hsi(
    habitat: &Habitat,
    species: &Species,
    image: &MultibandImage,
    mask: &[bool],
    convention: StddevConvention,
) -> Vec<f64> {
    habitat.delta_if_absorbed(
        &BandStats::from_pixels(image, &species.pixels),
        mask,
        convention,
    )
}

/// Outcome of a successful assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub class_index: u16,
    pub delta: Vec<f64>,
    pub score: f64,
}

fn aggregate_delta(delta: &[f64], mask: &[bool], masked_count: usize, how: DeltaAggregate) -> f64 {
    let abs = delta
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(d, _)| d.abs());
    match how {
        DeltaAggregate::MaxAbs => abs.fold(0.0, f64::max),
        DeltaAggregate::MeanAbs => abs.sum::<f64>() / masked_count as f64,
    }
}

fn assign_with_stats(
    species_stats: &BandStats,
    habitats: &[Habitat],
    cfg: &ResolvedConfig,
) -> Option<Assignment> {
    let mut best: Option<Assignment> = None;
    for habitat in habitats {
        let delta = habitat.delta_if_absorbed(species_stats, &cfg.mask, cfg.stddev);
        if !within_threshold(&delta, cfg.threshold) {
            continue;
        }
        let score = aggregate_delta(&delta, &cfg.mask, cfg.masked_count, cfg.aggregate);
        let candidate = Assignment {
            class_index: habitat.class_index,
            delta,
            score,
        };
        match cfg.policy {
            AssignmentPolicy::FirstFit => return Some(candidate),
            AssignmentPolicy::BestFit => {
                // strict < keeps the earlier class on ties
                if best.as_ref().is_none_or(|b| candidate.score < b.score) {
                    best = Some(candidate);
                }
            }
        }
    }
    best
}

/// Picks the habitat for one species, or `None` when every habitat rejects
/// it. Under `BestFit` the passing habitat with the smallest aggregate
/// |delta| wins; ties go to the earliest class in declared order.
pub fn assign_species(
    species: &Species,
    image: &MultibandImage,
    habitats: &[Habitat],
    config: &ClassifierConfig,
) -> Result<Option<Assignment>, ClassifyError> {
    let cfg = config.resolve(image)?;
    Ok(assign_with_stats(
        &BandStats::from_pixels(image, &species.pixels),
        habitats,
        &cfg,
    ))
}

// ---------------------------------------------------------------------------
// Migration rates
// ---------------------------------------------------------------------------

/// Linear immigration/emigration curves over species count k = 0..=n with
/// both maximum rates equal to the species count: lambda_k = n - k,
/// mu_k = k, so lambda_k + mu_k = n at every k.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationRates {
    pub species_count: usize,
    /// E = I = species_count.
    pub max_rate: f64,
    pub immigration: Vec<f64>,
    pub emigration: Vec<f64>,
}

pub fn migration_rates(n: usize) -> MigrationRates {
    if n == 0 {
        return MigrationRates {
            species_count: 0,
            max_rate: 0.0,
            immigration: Vec::new(),
            emigration: Vec::new(),
        };
    }
    let max = n as f64;
    let immigration = (0..=n).map(|k| max * (1.0 - k as f64 / max)).collect();
    let emigration = (0..=n).map(|k| max * (k as f64 / max)).collect();
    MigrationRates {
        species_count: n,
        max_rate: max,
        immigration,
        emigration,
    }
}

// ---------------------------------------------------------------------------
// Training sets
// ---------------------------------------------------------------------------

/// Ordered per-class training vectors. Class order is declaration order and
/// fixes tie-breaks and the label indices of the output map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    classes: Vec<String>,
    vectors: Vec<Vec<Vec<u8>>>,
}

impl TrainingSet {
    pub fn new(entries: Vec<(String, Vec<Vec<u8>>)>) -> Result<Self, ClassifyError> {
        if entries.is_empty() {
            return Err(ClassifyError::NoClasses);
        }
        let mut classes = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (name, vecs) in entries {
            check_class_name(&name).map_err(ClassifyError::BadClassName)?;
            if classes.contains(&name) {
                return Err(ClassifyError::DuplicateClass(name));
            }
            if vecs.is_empty() {
                return Err(ClassifyError::EmptyTraining(name));
            }
            classes.push(name);
            vectors.push(vecs);
        }
        let bands = vectors[0][0].len();
        for v in vectors.iter().flatten() {
            if v.len() != bands {
                return Err(ClassifyError::BandCountMismatch {
                    expected: bands,
                    got: v.len(),
                });
            }
        }
        Ok(TrainingSet { classes, vectors })
    }

    /// Parses the training CSV: header `BAND,...,DECISION` where the band
    /// columns must match `band_names` in order; one pixel per row. Classes
    /// appear in first-appearance order.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        band_names: &[String],
    ) -> Result<Self, ClassifyError> {
        let err = |msg: String| ClassifyError::TrainingCsv(msg);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
        let expected: Vec<&str> = band_names
            .iter()
            .map(String::as_str)
            .chain(["DECISION"])
            .collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(err(format!(
                "header mismatch: expected {}, got {}",
                expected.join(","),
                got.join(",")
            )));
        }
        let mut entries: Vec<(String, Vec<Vec<u8>>)> = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| err(e.to_string()))?;
            let rowno = i + 2;
            if record.len() != expected.len() {
                return Err(err(format!(
                    "row {rowno}: {} fields, expected {}",
                    record.len(),
                    expected.len()
                )));
            }
            let mut vector = Vec::with_capacity(band_names.len());
            for (field, band) in record.iter().zip(band_names) {
                let value: u8 = field.parse().map_err(|_| {
                    err(format!(
                        "row {rowno}: band {band} value {field:?} is not a DN in 0..=255"
                    ))
                })?;
                vector.push(value);
            }
            let label = record.get(band_names.len()).unwrap_or("").to_string();
            if label.is_empty() {
                return Err(err(format!("row {rowno}: empty DECISION label")));
            }
            match entries.iter_mut().find(|(name, _)| *name == label) {
                Some((_, vecs)) => vecs.push(vector),
                None => entries.push((label, vec![vector])),
            }
        }
        if entries.is_empty() {
            return Err(err("no training rows".to_string()));
        }
        TrainingSet::new(entries)
    }

    pub fn from_csv_file(path: &Path, band_names: &[String]) -> Result<Self, ClassifyError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ClassifyError::TrainingCsv(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file, band_names)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn vectors_for(&self, class: usize) -> &[Vec<u8>] {
        &self.vectors[class]
    }

    pub fn band_count(&self) -> usize {
        self.vectors[0][0].len()
    }
}

// ---------------------------------------------------------------------------
// The classification loop
// ---------------------------------------------------------------------------

/// Counters for one full pass over the universal habitat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationStats {
    pub iteration: usize,
    pub species_processed: usize,
    pub species_absorbed: usize,
    pub species_rejected: usize,
    pub unclassified_pixels: usize,
}

/// Final state of one habitat, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct HabitatSummary {
    pub label: String,
    pub training_pixels: usize,
    pub absorbed_pixels: usize,
    pub hsi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub label_map: LabelMap,
    /// Row-major indices of pixels left unclassified, ascending.
    pub unclassified: Vec<u32>,
    pub per_iteration: Vec<IterationStats>,
    pub habitats: Vec<HabitatSummary>,
}

struct PoolEntry {
    species: Species,
    scheme: Arc<DiscretizationScheme>,
    stats: BandStats,
}

/// Runs the full migration loop over `image`. Deterministic for fixed
/// inputs and config.
pub fn classify(
    image: &MultibandImage,
    training: &TrainingSet,
    config: &ClassifierConfig,
) -> Result<ClassificationResult, ClassifyError> {
    let cfg = config.resolve(image)?;
    if training.band_count() != image.band_count() {
        return Err(ClassifyError::BandCountMismatch {
            expected: image.band_count(),
            got: training.band_count(),
        });
    }

    let mut habitats: Vec<Habitat> = training
        .classes()
        .iter()
        .enumerate()
        .map(|(i, label)| {
            Habitat::new(
                label.clone(),
                i as u16,
                training.vectors_for(i).to_vec(),
                image.band_count(),
            )
        })
        .collect::<Result<_, _>>()?;

    let total_pixels = image.pixel_count();
    let pool: Vec<u32> = (0..total_pixels as u32).collect();
    let mut ids = SpeciesIdGen::new();
    let scheme = Arc::new(DiscretizationScheme::for_pool(
        image,
        &cfg.disc_bands,
        cfg.initial_intervals,
        &pool,
        0,
    )?);
    let mut universal: Vec<PoolEntry> = roughset::form_species(image, &scheme, &pool, &mut ids)?
        .into_iter()
        .map(|species| PoolEntry {
            stats: BandStats::from_pixels(image, &species.pixels),
            scheme: Arc::clone(&scheme),
            species,
        })
        .collect();

    let mut absorbed_total = 0usize;
    let mut remaining = total_pixels;
    let mut per_iteration = Vec::new();

    for iteration in 1..=cfg.max_iterations {
        universal.sort_by(|a, b| {
            b.species
                .len()
                .cmp(&a.species.len())
                .then(a.species.id.cmp(&b.species.id))
        });
        let processed = universal.len();
        let mut absorbed_count = 0usize;
        let mut rejected_count = 0usize;
        let mut next: Vec<PoolEntry> = Vec::new();

        for entry in universal.drain(..) {
            match assign_with_stats(&entry.stats, &habitats, &cfg) {
                Some(assignment) => {
                    let habitat = &mut habitats[assignment.class_index as usize];
                    habitat.absorb(&entry.species.pixels, &entry.stats);
                    absorbed_total += entry.species.len();
                    remaining -= entry.species.len();
                    absorbed_count += 1;
                    #[cfg(debug_assertions)]
                    {
                        habitat.assert_stats_consistent(image);
                        let queued: usize = next.iter().map(|e| e.species.len()).sum();
                        debug_assert_eq!(absorbed_total + remaining, total_pixels);
                        debug_assert!(queued <= remaining);
                    }
                }
                None => {
                    rejected_count += 1;
                    if entry.species.saturated {
                        next.push(entry);
                    } else {
                        let refinement =
                            roughset::refine(&entry.species, image, &entry.scheme, &mut ids)?;
                        for child in refinement.species {
                            let stats = BandStats::from_pixels(image, &child.pixels);
                            next.push(PoolEntry {
                                species: child,
                                scheme: Arc::clone(&refinement.scheme),
                                stats,
                            });
                        }
                    }
                }
            }
        }

        per_iteration.push(IterationStats {
            iteration,
            species_processed: processed,
            species_absorbed: absorbed_count,
            species_rejected: rejected_count,
            unclassified_pixels: remaining,
        });
        universal = next;
        if universal.is_empty() || universal.iter().all(|e| e.species.saturated) {
            break;
        }
    }

    let mut labels: Vec<Option<u16>> = vec![None; total_pixels];
    for habitat in &habitats {
        for &px in habitat.absorbed_pixels() {
            debug_assert!(labels[px as usize].is_none(), "pixel absorbed twice");
            labels[px as usize] = Some(habitat.class_index());
        }
    }
    let mut unclassified: Vec<u32> = universal
        .iter()
        .flat_map(|e| e.species.pixels.iter().copied())
        .collect();
    unclassified.sort_unstable();
    debug_assert_eq!(absorbed_total + unclassified.len(), total_pixels);

    let label_map = LabelMap::new(
        image.width(),
        image.height(),
        training.classes().to_vec(),
        labels,
    )?;
    let habitats = habitats
        .iter()
        .map(|h| HabitatSummary {
            label: h.label().to_string(),
            training_pixels: h.training_count(),
            absorbed_pixels: h.absorbed_pixels().len(),
            hsi: h.hsi(&cfg.mask, cfg.stddev),
        })
        .collect();
    Ok(ClassificationResult {
        label_map,
        unclassified,
        per_iteration,
        habitats,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::raster::{synth_scene, ClassModel, MultibandImage, Patch, SceneSpec};

    fn names7() -> Vec<String> {
        ["RED", "GREEN", "NIR", "MIR", "RS1", "RS2", "DEM"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn vecs(rows: &[&[u8]]) -> Vec<Vec<u8>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn hsi_of_constant_set_is_zero() {
        let hsi = hsi_of(
            &vecs(&[&[10, 10], &[10, 10]]),
            &[true, true],
            StddevConvention::Sample,
        )
        .unwrap();
        assert_eq!(hsi, vec![0.0, 0.0]);
    }

    #[test]
    fn hsi_of_matches_direct_formula() {
        // sqrt(sum (x - mean)^2 / (n - 1)) computed by hand for each band
        let hsi = hsi_of(
            &vecs(&[&[0, 0], &[2, 4]]),
            &[true, true],
            StddevConvention::Sample,
        )
        .unwrap();
        assert!((hsi[0] - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((hsi[1] - 2.82843).abs() < 1e-5);

        let pop = hsi_of(
            &vecs(&[&[0, 0], &[2, 4]]),
            &[true, true],
            StddevConvention::Population,
        )
        .unwrap();
        assert!((pop[0] - 1.0).abs() < 1e-12);
        assert!((pop[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hsi_of_single_vector_is_zero_under_sample_convention() {
        let hsi = hsi_of(&vecs(&[&[9, 200]]), &[true, true], StddevConvention::Sample).unwrap();
        assert_eq!(hsi, vec![0.0, 0.0]);
    }

    #[test]
    fn hsi_of_masked_band_reports_zero() {
        let hsi = hsi_of(
            &vecs(&[&[0, 0], &[2, 4]]),
            &[false, true],
            StddevConvention::Sample,
        )
        .unwrap();
        assert_eq!(hsi[0], 0.0);
        assert!(hsi[1] > 0.0);
    }

    #[test]
    fn hsi_of_rejects_empty_input() {
        assert!(matches!(
            hsi_of(&[], &[true], StddevConvention::Sample),
            Err(ClassifyError::EmptyVectors)
        ));
    }

    fn one_band_image(values: &[u8]) -> MultibandImage {
        MultibandImage::new(
            values.len() as u32,
            1,
            vec!["B0".to_string()],
            vec![values.to_vec()],
        )
        .unwrap()
    }

    fn species_of(pixels: &[u32]) -> Species {
        Species {
            id: 0,
            pixels: pixels.to_vec(),
            signature: vec![0],
            depth: 0,
            saturated: false,
        }
    }

    #[test]
    fn delta_is_zero_for_identical_pixels() {
        let image = one_band_image(&[5, 5, 5]);
        let habitat = Habitat::new("c".into(), 0, vecs(&[&[5]]), 1).unwrap();
        let delta = delta_hsi(
            &habitat,
            &species_of(&[0, 1, 2]),
            &image,
            &[true],
            StddevConvention::Sample,
        );
        assert_eq!(delta, vec![0.0]);
    }

    #[test]
    fn delta_matches_hand_computation() {
        let image = one_band_image(&[1, 100]);
        let habitat = Habitat::new("c".into(), 0, vecs(&[&[0], &[2]]), 1).unwrap();
        // {0,2} has sample stddev sqrt(2); adding 1 gives stddev 1
        let delta = delta_hsi(
            &habitat,
            &species_of(&[0]),
            &image,
            &[true],
            StddevConvention::Sample,
        );
        assert!((delta[0] - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((delta[0] + 0.41421).abs() < 1e-5);
        // adding 100 to {0,2}: variance 6536/2 = 3268, delta far beyond any
        // sensible threshold
        let delta = delta_hsi(
            &habitat,
            &species_of(&[1]),
            &image,
            &[true],
            StddevConvention::Sample,
        );
        let expected = 3268f64.sqrt() - 2f64.sqrt();
        assert!((delta[0] - expected).abs() < 1e-9);
        assert!((delta[0] - 55.7522).abs() < 1e-3);
        assert!(delta[0] > 50.0);
        // trial migration leaves the habitat untouched
        assert_eq!(habitat.member_count(), 2);
    }

    #[test]
    fn threshold_bounds_are_inclusive_and_signed() {
        assert!(within_threshold(&[0.2, -0.9], 1.0));
        assert!(!within_threshold(&[0.2, 1.1], 1.0));
        assert!(within_threshold(&[0.0; 7], 0.001));
        assert!(within_threshold(&[1.0, -1.0], 1.0));
    }

    #[test]
    fn best_fit_takes_smallest_aggregate() {
        // habitat 0: {0,4} stddev sqrt(8); habitat 1: {0,2} stddev sqrt(2).
        // species {1}: h0 -> sqrt(13/3)-sqrt(8) ~ -0.746, h1 -> 1-sqrt(2) ~ -0.414
        let image = one_band_image(&[1]);
        let habitats = vec![
            Habitat::new("a".into(), 0, vecs(&[&[0], &[4]]), 1).unwrap(),
            Habitat::new("b".into(), 1, vecs(&[&[0], &[2]]), 1).unwrap(),
        ];
        let config = ClassifierConfig {
            disc_bands: vec!["B0".to_string()],
            ..ClassifierConfig::default()
        };
        let assignment = assign_species(&species_of(&[0]), &image, &habitats, &config)
            .unwrap()
            .unwrap();
        assert_eq!(assignment.class_index, 1);

        let first_fit = ClassifierConfig {
            policy: AssignmentPolicy::FirstFit,
            ..config
        };
        let assignment = assign_species(&species_of(&[0]), &image, &habitats, &first_fit)
            .unwrap()
            .unwrap();
        assert_eq!(assignment.class_index, 0);
    }

    #[test]
    fn rejection_when_every_habitat_exceeds_threshold() {
        let image = one_band_image(&[128]);
        let habitats = vec![
            Habitat::new("a".into(), 0, vecs(&[&[0], &[2]]), 1).unwrap(),
            Habitat::new("b".into(), 1, vecs(&[&[250], &[252]]), 1).unwrap(),
        ];
        let config = ClassifierConfig {
            disc_bands: vec!["B0".to_string()],
            ..ClassifierConfig::default()
        };
        assert_eq!(
            assign_species(&species_of(&[0]), &image, &habitats, &config).unwrap(),
            None
        );
    }

    #[test]
    fn migration_rates_follow_the_linear_curve() {
        let rates = migration_rates(10);
        assert_eq!(rates.max_rate, 10.0);
        assert_eq!(rates.immigration[0], 10.0);
        assert_eq!(rates.emigration[0], 0.0);
        assert_eq!(rates.immigration[10], 0.0);
        assert_eq!(rates.emigration[10], 10.0);
        for k in 0..=10 {
            assert_eq!(rates.immigration[k] + rates.emigration[k], 10.0);
        }
        for w in rates.immigration.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for w in rates.emigration.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(migration_rates(0).immigration.is_empty());
    }

    pub(crate) fn five_class_spec(width: u32, height: u32, stddev: f64, seed: u64) -> SceneSpec {
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
            bands: names7(),
            classes,
            patches,
        }
    }

    pub(crate) fn training_from_truth(
        image: &MultibandImage,
        truth: &crate::raster::LabelMap,
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

    #[test]
    fn zero_variance_scene_classifies_fully_in_one_iteration() {
        let (image, truth) = synth_scene(&five_class_spec(20, 10, 0.0, 7)).unwrap();
        let training = training_from_truth(&image, &truth, 3);
        let result = classify(&image, &training, &ClassifierConfig::default()).unwrap();
        assert_eq!(result.per_iteration.len(), 1);
        assert!(result.unclassified.is_empty());
        assert_eq!(result.label_map, truth);
    }

    #[test]
    fn untrained_class_stays_unclassified() {
        let (image, truth) = synth_scene(&five_class_spec(20, 10, 0.0, 7)).unwrap();
        let mut entries: Vec<(String, Vec<Vec<u8>>)> = Vec::new();
        for (i, class) in truth.classes().iter().enumerate() {
            if class == "urban" {
                continue; // drop one class from training
            }
            let full = training_from_truth(&image, &truth, 3);
            entries.push((class.clone(), full.vectors_for(i).to_vec()));
        }
        let training = TrainingSet::new(entries).unwrap();
        let result = classify(&image, &training, &ClassifierConfig::default()).unwrap();
        let urban_pixels: Vec<u32> = truth
            .labels()
            .iter()
            .enumerate()
            .filter_map(|(idx, l)| {
                (truth.classes()[usize::from((*l)?)] == "urban").then_some(idx as u32)
            })
            .collect();
        assert_eq!(result.unclassified, urban_pixels);
        for (idx, label) in result.label_map.labels().iter().enumerate() {
            match truth.labels()[idx] {
                Some(t) if truth.classes()[t as usize] != "urban" => {
                    let got = label.map(|i| result.label_map.classes()[i as usize].clone());
                    assert_eq!(got.as_deref(), Some(truth.classes()[t as usize].as_str()));
                }
                _ => assert!(label.is_none()),
            }
        }
    }

    #[test]
    fn classify_is_deterministic() {
        let (image, truth) = synth_scene(&five_class_spec(24, 12, 6.0, 11)).unwrap();
        let training = training_from_truth(&image, &truth, 5);
        let config = ClassifierConfig::default();
        let a = classify(&image, &training, &config).unwrap();
        let b = classify(&image, &training, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classify_rejects_band_count_mismatch() {
        let (image, _) = synth_scene(&five_class_spec(10, 5, 0.0, 7)).unwrap();
        let training = TrainingSet::new(vec![("water".to_string(), vecs(&[&[1, 2, 3]]))]).unwrap();
        assert!(matches!(
            classify(&image, &training, &ClassifierConfig::default()),
            Err(ClassifyError::BandCountMismatch { .. })
        ));
    }

    #[test]
    fn classify_rejects_unknown_bands_and_bad_threshold() {
        let (image, truth) = synth_scene(&five_class_spec(10, 5, 0.0, 7)).unwrap();
        let training = training_from_truth(&image, &truth, 2);
        let config = ClassifierConfig {
            disc_bands: vec!["SWIR".to_string()],
            ..ClassifierConfig::default()
        };
        assert!(matches!(
            classify(&image, &training, &config),
            Err(ClassifyError::UnknownBand(_))
        ));
        let config = ClassifierConfig {
            threshold: 0.0,
            ..ClassifierConfig::default()
        };
        assert!(matches!(
            classify(&image, &training, &config),
            Err(ClassifyError::BadThreshold(_))
        ));
    }

    #[test]
    fn training_set_rejects_empty_class() {
        assert!(matches!(
            TrainingSet::new(vec![("water".to_string(), vec![])]),
            Err(ClassifyError::EmptyTraining(_))
        ));
    }

    #[test]
    fn training_csv_parses_reference_layout() {
        let csv = "\
RED,GREEN,NIR,MIR,RS1,RS2,DEM,DECISION
127,96,184,131,17,32,29,Barren
132,104,182,142,13,28,29,Barren
62,49,135,91,44,40,94,Rocky
";
        let training = TrainingSet::from_csv_reader(csv.as_bytes(), &names7()).unwrap();
        assert_eq!(
            training.classes(),
            ["Barren".to_string(), "Rocky".to_string()]
        );
        assert_eq!(
            training.vectors_for(0)[0],
            vec![127, 96, 184, 131, 17, 32, 29]
        );
        assert_eq!(
            training.vectors_for(1)[0],
            vec![62, 49, 135, 91, 44, 40, 94]
        );
    }

    #[test]
    fn training_csv_rejects_header_mismatch_and_bad_dn() {
        let bad_header = "RED,NIR,DECISION\n1,2,x\n";
        assert!(matches!(
            TrainingSet::from_csv_reader(bad_header.as_bytes(), &names7()),
            Err(ClassifyError::TrainingCsv(_))
        ));
        let bad_dn = "\
RED,GREEN,NIR,MIR,RS1,RS2,DEM,DECISION
127,96,184,131,17,32,300,Barren
";
        let err = TrainingSet::from_csv_reader(bad_dn.as_bytes(), &names7()).unwrap_err();
        assert!(err.to_string().contains("DEM"), "{err}");
    }

    #[test]
    fn enum_round_trips() {
        for s in ["sample", "population"] {
            assert_eq!(s.parse::<StddevConvention>().unwrap().to_string(), s);
        }
        for s in ["first-fit", "best-fit"] {
            assert_eq!(s.parse::<AssignmentPolicy>().unwrap().to_string(), s);
        }
        for s in ["max-abs", "mean-abs"] {
            assert_eq!(s.parse::<DeltaAggregate>().unwrap().to_string(), s);
        }
        assert!("median".parse::<DeltaAggregate>().is_err());
    }
}
