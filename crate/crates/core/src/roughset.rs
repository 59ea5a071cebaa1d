//! Interval discretization of band values and the species granules built
//! from it.
//!
//! A [`DiscretizationScheme`] cuts the value range of each selected band
//! into intervals; pixels sharing the same tuple of interval indices (their
//! *signature*) form one [`Species`]. Species that a classifier rejects are
//! [`refine`]d: the interval count per band doubles and the cuts are re-laid
//! over the species' own value range, splitting it into sub-species. A
//! species whose pixels are identical on every discretization band cannot
//! split and is returned unchanged with the saturated flag set.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::raster::MultibandImage;

/// 256 intervals already isolate every 8-bit value; doubling past this point
/// cannot split anything further.
const MAX_INTERVALS: usize = 512;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoughsetError {
    #[error("interval count must be at least 1")]
    ZeroIntervals,
    #[error("cut range is empty: lo {lo} >= hi {hi}")]
    EmptyRange { lo: u8, hi: u8 },
    #[error("empty pixel pool")]
    EmptyPool,
    #[error("discretization band index {0} out of range")]
    BandOutOfRange(usize),
    #[error("no discretization bands")]
    NoBands,
    #[error("cut list for band {0} is not strictly ascending")]
    UnorderedCuts(usize),
}

/// Equal-width cut points: `intervals - 1` cuts splitting [lo, hi].
pub fn equal_width_cuts(lo: u8, hi: u8, intervals: usize) -> Result<Vec<f64>, RoughsetError> {
    if intervals == 0 {
        return Err(RoughsetError::ZeroIntervals);
    }
    if lo >= hi {
        return Err(RoughsetError::EmptyRange { lo, hi });
    }
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    Ok((1..intervals)
        .map(|i| lo + (hi - lo) * i as f64 / intervals as f64)
        .collect())
}

/// Index of the interval containing `value`: values equal to a cut belong to
/// the interval on the right. Total on all 8-bit values.
pub fn interval_of(value: u8, cuts: &[f64]) -> u32 {
    cuts.partition_point(|c| *c <= f64::from(value)) as u32
}

/// Per-band interval cuts over a set of bands, plus the refinement depth the
/// scheme was created at.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationScheme {
    bands: Vec<usize>,
    cuts: Vec<Vec<f64>>,
    depth: u32,
}

impl DiscretizationScheme {
    pub fn new(bands: Vec<usize>, cuts: Vec<Vec<f64>>, depth: u32) -> Result<Self, RoughsetError> {
        if bands.is_empty() {
            return Err(RoughsetError::NoBands);
        }
        assert_eq!(bands.len(), cuts.len(), "one cut list per band");
        for (i, list) in cuts.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RoughsetError::UnorderedCuts(bands[i]));
            }
        }
        Ok(DiscretizationScheme { bands, cuts, depth })
    }

    /// Builds a depth-`depth` scheme with `intervals` equal-width intervals
    /// per band, cut over the observed min/max of `pool` in each band. A
    /// band that is constant over the pool gets a single interval.
    pub fn for_pool(
        image: &MultibandImage,
        bands: &[usize],
        intervals: usize,
        pool: &[u32],
        depth: u32,
    ) -> Result<Self, RoughsetError> {
        if intervals == 0 {
            return Err(RoughsetError::ZeroIntervals);
        }
        if pool.is_empty() {
            return Err(RoughsetError::EmptyPool);
        }
        if bands.is_empty() {
            return Err(RoughsetError::NoBands);
        }
        let intervals = intervals.min(MAX_INTERVALS);
        let mut cuts = Vec::with_capacity(bands.len());
        for &band in bands {
            if band >= image.band_count() {
                return Err(RoughsetError::BandOutOfRange(band));
            }
            let (mut lo, mut hi) = (u8::MAX, u8::MIN);
            for &px in pool {
                let v = image.dn(band, px);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo == hi {
                cuts.push(Vec::new());
            } else {
                cuts.push(equal_width_cuts(lo, hi, intervals)?);
            }
        }
        DiscretizationScheme::new(bands.to_vec(), cuts, depth)
    }

    pub fn bands(&self) -> &[usize] {
        &self.bands
    }

    pub fn cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn intervals_per_band(&self) -> Vec<usize> {
        self.cuts.iter().map(|c| c.len() + 1).collect()
    }

    /// The interval signature of one pixel under this scheme.
    pub fn signature_of(&self, image: &MultibandImage, pixel: u32) -> Vec<u32> {
        self.bands
            .iter()
            .zip(&self.cuts)
            .map(|(&band, cuts)| interval_of(image.dn(band, pixel), cuts))
            .collect()
    }
}

/// A granule of pixels sharing one discretization signature; the unit that
/// migrates between habitats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub id: u64,
    pub pixels: Vec<u32>,
    pub signature: Vec<u32>,
    pub depth: u32,
    pub saturated: bool,
}

impl Species {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Allocates species ids in deterministic creation order.
#[derive(Debug, Default)]
pub struct SpeciesIdGen(u64);

impl SpeciesIdGen {
    pub fn new() -> Self {
        SpeciesIdGen(0)
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

/// Partitions `pool` into species: two pixels share a species iff their
/// signatures under `scheme` are equal. Output is ordered by descending
/// pixel count, ties by ascending signature.
pub fn form_species(
    image: &MultibandImage,
    scheme: &DiscretizationScheme,
    pool: &[u32],
    ids: &mut SpeciesIdGen,
) -> Result<Vec<Species>, RoughsetError> {
    if pool.is_empty() {
        return Err(RoughsetError::EmptyPool);
    }
    for &band in scheme.bands() {
        if band >= image.band_count() {
            return Err(RoughsetError::BandOutOfRange(band));
        }
    }
    let mut groups: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for &px in pool {
        let sig = scheme.signature_of(image, px);
        groups.entry(sig).or_default().push(px);
    }
    let mut entries: Vec<(Vec<u32>, Vec<u32>)> = groups.into_iter().collect();
    // stable sort keeps the ascending-signature order for equal counts
    entries.sort_by_key(|(_, pixels)| std::cmp::Reverse(pixels.len()));
    Ok(entries
        .into_iter()
        .map(|(signature, pixels)| Species {
            id: ids.next_id(),
            pixels,
            signature,
            depth: scheme.depth(),
            saturated: false,
        })
        .collect())
}

/// Result of refining one species.
#[derive(Debug)]
pub struct Refinement {
    /// The sub-species (or the original, saturated, if it cannot split).
    pub species: Vec<Species>,
    /// The scheme the sub-species were formed under (the input scheme when
    /// saturated).
    pub scheme: Arc<DiscretizationScheme>,
    pub saturated: bool,
}

/// Splits a species by doubling the interval count per discretization band
/// and recutting over the species' own per-band value range. Returns the
/// species unchanged, flagged saturated, when all member pixels are
/// identical on every discretization band.
pub fn refine(
    species: &Species,
    image: &MultibandImage,
    scheme: &DiscretizationScheme,
    ids: &mut SpeciesIdGen,
) -> Result<Refinement, RoughsetError> {
    if species.pixels.is_empty() {
        return Err(RoughsetError::EmptyPool);
    }
    let mut ranges = Vec::with_capacity(scheme.bands().len());
    for &band in scheme.bands() {
        if band >= image.band_count() {
            return Err(RoughsetError::BandOutOfRange(band));
        }
        let (mut lo, mut hi) = (u8::MAX, u8::MIN);
        for &px in &species.pixels {
            let v = image.dn(band, px);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        ranges.push((lo, hi));
    }
    if ranges.iter().all(|(lo, hi)| lo == hi) {
        let mut saturated = species.clone();
        saturated.saturated = true;
        return Ok(Refinement {
            species: vec![saturated],
            scheme: Arc::new(scheme.clone()),
            saturated: true,
        });
    }
    let mut cuts = Vec::with_capacity(scheme.bands().len());
    for (((lo, hi), old_cuts), &band) in ranges.iter().zip(scheme.cuts()).zip(scheme.bands()) {
        let _ = band;
        if lo == hi {
            cuts.push(Vec::new());
        } else {
            let doubled = ((old_cuts.len() + 1) * 2).min(MAX_INTERVALS);
            cuts.push(equal_width_cuts(*lo, *hi, doubled)?);
        }
    }
    let child_scheme = Arc::new(DiscretizationScheme::new(
        scheme.bands().to_vec(),
        cuts,
        scheme.depth() + 1,
    )?);
    let children = form_species(image, &child_scheme, &species.pixels, ids)?;
    Ok(Refinement {
        species: children,
        scheme: child_scheme,
        saturated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MultibandImage;
    use std::collections::BTreeSet;

    fn image_from_bands(width: u32, height: u32, bands: Vec<Vec<u8>>) -> MultibandImage {
        let names = (0..bands.len()).map(|i| format!("B{i}")).collect();
        MultibandImage::new(width, height, names, bands).unwrap()
    }

    #[test]
    fn cuts_quarter_range() {
        assert_eq!(
            equal_width_cuts(0, 255, 4).unwrap(),
            vec![63.75, 127.5, 191.25]
        );
        assert_eq!(equal_width_cuts(0, 255, 1).unwrap(), Vec::<f64>::new());
        assert_eq!(equal_width_cuts(100, 200, 2).unwrap(), vec![150.0]);
        assert_eq!(
            equal_width_cuts(0, 255, 0),
            Err(RoughsetError::ZeroIntervals)
        );
        assert_eq!(
            equal_width_cuts(10, 10, 2),
            Err(RoughsetError::EmptyRange { lo: 10, hi: 10 })
        );
    }

    #[test]
    fn interval_lookup_with_boundary_on_the_right() {
        let cuts = [63.75, 127.5, 191.25];
        assert_eq!(interval_of(10, &cuts), 0);
        assert_eq!(interval_of(128, &cuts), 2);
        assert_eq!(interval_of(255, &cuts), 3);
        // a value exactly on a cut joins the interval to its right
        assert_eq!(interval_of(150, &[150.0]), 1);
    }

    #[test]
    fn interval_lookup_is_monotone() {
        let cuts = equal_width_cuts(3, 250, 7).unwrap();
        let mut last = 0;
        for v in 0..=255u8 {
            let idx = interval_of(v, &cuts);
            assert!(idx >= last);
            last = idx;
        }
    }

    #[test]
    fn constant_image_forms_one_species() {
        let image = image_from_bands(4, 2, vec![vec![9; 8], vec![9; 8]]);
        let scheme =
            DiscretizationScheme::for_pool(&image, &[0, 1], 8, &(0..8).collect::<Vec<_>>(), 0)
                .unwrap();
        let species = form_species(
            &image,
            &scheme,
            &(0..8).collect::<Vec<_>>(),
            &mut SpeciesIdGen::new(),
        )
        .unwrap();
        assert_eq!(species.len(), 1);
        assert_eq!(species[0].pixels, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn split_pixels_form_singletons() {
        let image = image_from_bands(2, 1, vec![vec![10, 200]]);
        let scheme = DiscretizationScheme::new(vec![0], vec![vec![127.5]], 0).unwrap();
        let species = form_species(&image, &scheme, &[0, 1], &mut SpeciesIdGen::new()).unwrap();
        assert_eq!(species.len(), 2);
        assert!(species.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn checker_image_partition_matches_brute_force() {
        // two bands, values chosen to hit several of the 4x4 interval cells
        let width = 8u32;
        let height = 8u32;
        let n = (width * height) as usize;
        let band0: Vec<u8> = (0..n).map(|i| ((i * 37) % 256) as u8).collect();
        let band1: Vec<u8> = (0..n).map(|i| ((i * 91 + 13) % 256) as u8).collect();
        let image = image_from_bands(width, height, vec![band0, band1]);
        let pool: Vec<u32> = (0..n as u32).collect();
        let scheme = DiscretizationScheme::for_pool(&image, &[0, 1], 4, &pool, 0).unwrap();
        let species = form_species(&image, &scheme, &pool, &mut SpeciesIdGen::new()).unwrap();

        assert!(species.len() <= 16);
        // partition: pairwise disjoint, union = pool
        let mut seen = BTreeSet::new();
        for s in &species {
            for &px in &s.pixels {
                assert!(seen.insert(px), "pixel {px} in two species");
            }
        }
        assert_eq!(seen.len(), n);
        // signature soundness against an independent recomputation
        for s in &species {
            for &px in &s.pixels {
                let sig: Vec<u32> = [0usize, 1]
                    .iter()
                    .zip(scheme.cuts())
                    .map(|(&b, cuts)| interval_of(image.dn(b, px), cuts))
                    .collect();
                assert_eq!(sig, s.signature);
            }
        }
        // descending size order
        for w in species.windows(2) {
            assert!(w[0].len() >= w[1].len());
        }
    }

    #[test]
    fn refine_saturates_singletons_and_constants() {
        let image = image_from_bands(2, 1, vec![vec![7, 7], vec![7, 7]]);
        let scheme = DiscretizationScheme::for_pool(&image, &[0, 1], 8, &[0, 1], 0).unwrap();
        let mut ids = SpeciesIdGen::new();
        let species = form_species(&image, &scheme, &[0, 1], &mut ids).unwrap();
        assert_eq!(species.len(), 1);
        let refined = refine(&species[0], &image, &scheme, &mut ids).unwrap();
        assert!(refined.saturated);
        assert_eq!(refined.species.len(), 1);
        assert!(refined.species[0].saturated);
        assert_eq!(refined.species[0].pixels, species[0].pixels);
        assert_eq!(refined.species[0].depth, species[0].depth);
    }

    #[test]
    fn refine_splits_bimodal_species() {
        let image = image_from_bands(4, 1, vec![vec![10, 10, 200, 200], vec![5, 5, 5, 5]]);
        let mut ids = SpeciesIdGen::new();
        // one global interval keeps everything together at depth 0
        let scheme =
            DiscretizationScheme::new(vec![0, 1], vec![Vec::new(), Vec::new()], 0).unwrap();
        let species = form_species(&image, &scheme, &[0, 1, 2, 3], &mut ids).unwrap();
        assert_eq!(species.len(), 1);
        let refined = refine(&species[0], &image, &scheme, &mut ids).unwrap();
        assert!(!refined.saturated);
        assert!(refined.species.len() >= 2);
        let mut union: Vec<u32> = refined
            .species
            .iter()
            .flat_map(|s| s.pixels.iter().copied())
            .collect();
        union.sort_unstable();
        assert_eq!(union, vec![0, 1, 2, 3]);
        for child in &refined.species {
            assert_eq!(child.depth, 1);
        }
        assert_eq!(refined.scheme.depth(), 1);
    }

    #[test]
    fn form_species_rejects_empty_pool() {
        let image = image_from_bands(1, 1, vec![vec![0]]);
        let scheme = DiscretizationScheme::new(vec![0], vec![Vec::new()], 0).unwrap();
        assert_eq!(
            form_species(&image, &scheme, &[], &mut SpeciesIdGen::new()).unwrap_err(),
            RoughsetError::EmptyPool
        );
    }
}
