//! Supervised land-cover classification of multiband 8-bit rasters.
//!
//! Each land-cover class is modelled as a *habitat* whose suitability index
//! (HSI) is the per-band standard deviation of its member pixel vectors.
//! Pixels are granulated into *species* by interval discretization of
//! selected bands; species migrate one by one from a universal habitat into
//! the feature habitat whose HSI they disturb least, and species rejected by
//! every habitat are re-discretized at finer granularity and retried on the
//! next iteration. Pixels that never settle are reported as unclassified.
//!
//! * [`raster`] — multiband images, label maps, synthetic scenes, Netpbm I/O
//! * [`roughset`] — interval discretization and species granulation
//! * [`classifier`] — habitats, HSI matching, the migration loop
//! * [`accuracy`] — error matrices, kappa, producer/user accuracy
//! * [`bbo`] — the canonical continuous optimizer the classifier adapts
//! * [`report`] — plain-text run reports

pub mod accuracy;
pub mod bbo;
pub mod classifier;
pub mod netpbm;
pub mod raster;
pub mod report;
pub mod roughset;
