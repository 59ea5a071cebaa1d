//! Multiband 8-bit rasters, label maps, synthetic scene generation and the
//! file formats that carry them.
//!
//! Images are loaded through a *band manifest*: a UTF-8 text file with one
//! `NAME = path.pgm` line per band (paths relative to the manifest, `#`
//! comments allowed). Label maps use a small text format: a `width height`
//! line, a line of class names in index order, then one row of
//! space-separated class indices per image row (`-1` marks an unclassified
//! pixel).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::netpbm;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("band {band}: dimensions {got_width}x{got_height} do not match {width}x{height}")]
    DimensionMismatch {
        band: String,
        width: u32,
        height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("duplicate band name {0:?}")]
    DuplicateBand(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("pixel ({x},{y}) out of bounds for {width}x{height} image")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid label map: {0}")]
    InvalidLabels(String),
    #[error("no palette entry for class {0:?}")]
    MissingPaletteEntry(String),
    #[error("invalid scene spec: {0}")]
    InvalidScene(String),
}

fn read_file(path: &Path) -> Result<Vec<u8>, RasterError> {
    fs::read(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, RasterError> {
    fs::read_to_string(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RasterError> {
    fs::write(path, bytes).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Validates a class name for use in label maps, training sets and matrices.
pub(crate) fn check_class_name(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("empty class name".to_string());
    }
    if name.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(format!(
            "class name {name:?} contains whitespace or a comma"
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// MultibandImage
// ---------------------------------------------------------------------------

/// A width x height raster with N co-registered 8-bit bands stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultibandImage {
    width: u32,
    height: u32,
    band_names: Vec<String>,
    bands: Vec<Vec<u8>>,
}

impl MultibandImage {
    pub fn new(
        width: u32,
        height: u32,
        band_names: Vec<String>,
        bands: Vec<Vec<u8>>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if band_names.is_empty() {
            return Err(RasterError::InvalidImage("no bands".to_string()));
        }
        if band_names.len() != bands.len() {
            return Err(RasterError::InvalidImage(format!(
                "{} band names for {} bands",
                band_names.len(),
                bands.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &band_names {
            if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '=') {
                return Err(RasterError::InvalidImage(format!("bad band name {name:?}")));
            }
            if !seen.insert(name.clone()) {
                return Err(RasterError::DuplicateBand(name.clone()));
            }
        }
        let expected = width as usize * height as usize;
        for (name, band) in band_names.iter().zip(&bands) {
            if band.len() != expected {
                return Err(RasterError::InvalidImage(format!(
                    "band {name} has {} values, expected {expected}",
                    band.len()
                )));
            }
        }
        Ok(MultibandImage {
            width,
            height,
            band_names,
            bands,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|n| n == name)
    }

    pub fn band(&self, index: usize) -> &[u8] {
        &self.bands[index]
    }

    /// Digital number of pixel `index` (row-major) in band `band`.
    #[inline]
    pub fn dn(&self, band: usize, index: u32) -> u8 {
        self.bands[band][index as usize]
    }

    /// The per-band DN values at (x, y), in band order.
    pub fn pixel_vector(&self, x: u32, y: u32) -> Result<Vec<u8>, RasterError> {
        if x >= self.width || y >= self.height {
            return Err(RasterError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        let idx = (y * self.width + x) as usize;
        Ok(self.bands.iter().map(|b| b[idx]).collect())
    }

    /// Same as [`pixel_vector`](Self::pixel_vector) but addressed by row-major index.
    pub fn pixel_vector_at(&self, index: u32) -> Vec<u8> {
        self.bands.iter().map(|b| b[index as usize]).collect()
    }
}

/// Loads a multiband image from a band manifest file.
pub fn load_manifest(path: &Path) -> Result<MultibandImage, RasterError> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut band_names = Vec::new();
    let mut bands = Vec::new();
    let mut dims: Option<(u32, u32)> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, rel) = line.split_once('=').ok_or_else(|| RasterError::Malformed {
            path: path.to_path_buf(),
            msg: format!("line {}: expected NAME = path.pgm", lineno + 1),
        })?;
        let name = name.trim().to_string();
        let rel = rel.trim();
        if name.is_empty() || rel.is_empty() {
            return Err(RasterError::Malformed {
                path: path.to_path_buf(),
                msg: format!("line {}: empty band name or path", lineno + 1),
            });
        }
        if band_names.contains(&name) {
            return Err(RasterError::DuplicateBand(name));
        }
        let band_path = dir.join(rel);
        let gray = read_pgm_file(&band_path)?;
        match dims {
            None => dims = Some((gray.width, gray.height)),
            Some((w, h)) => {
                if (gray.width, gray.height) != (w, h) {
                    return Err(RasterError::DimensionMismatch {
                        band: name,
                        width: w,
                        height: h,
                        got_width: gray.width,
                        got_height: gray.height,
                    });
                }
            }
        }
        band_names.push(name);
        bands.push(gray.data);
    }
    let (width, height) = dims.ok_or_else(|| RasterError::Malformed {
        path: path.to_path_buf(),
        msg: "manifest lists no bands".to_string(),
    })?;
    MultibandImage::new(width, height, band_names, bands)
}

/// Writes one P5 PGM per band next to `manifest_path` and the manifest itself.
/// Band files are named `<stem>.<BAND>.pgm`.
pub fn save_with_manifest(image: &MultibandImage, manifest_path: &Path) -> Result<(), RasterError> {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut manifest = String::new();
    for (name, band) in image.band_names.iter().zip(&image.bands) {
        let file = format!("{stem}.{name}.pgm");
        write_file(
            &dir.join(&file),
            &netpbm::encode_pgm(image.width, image.height, band),
        )?;
        let _ = writeln!(manifest, "{name} = {file}");
    }
    write_file(manifest_path, manifest.as_bytes())
}

pub fn read_pgm_file(path: &Path) -> Result<netpbm::Gray, RasterError> {
    let bytes = read_file(path)?;
    netpbm::parse_pgm(&bytes).map_err(|msg| RasterError::Malformed {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn write_pgm_file(
    path: &Path,
    width: u32,
    height: u32,
    data: &[u8],
) -> Result<(), RasterError> {
    write_file(path, &netpbm::encode_pgm(width, height, data))
}

// ---------------------------------------------------------------------------
// LabelMap
// ---------------------------------------------------------------------------

/// A per-pixel class assignment; `None` marks an unclassified pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    classes: Vec<String>,
    labels: Vec<Option<u16>>,
}

impl LabelMap {
    pub fn new(
        width: u32,
        height: u32,
        classes: Vec<String>,
        labels: Vec<Option<u16>>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidLabels(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if labels.len() != width as usize * height as usize {
            return Err(RasterError::InvalidLabels(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &classes {
            check_class_name(name).map_err(RasterError::InvalidLabels)?;
            if !seen.insert(name.clone()) {
                return Err(RasterError::InvalidLabels(format!(
                    "duplicate class {name:?}"
                )));
            }
        }
        if let Some(bad) = labels
            .iter()
            .flatten()
            .find(|i| **i as usize >= classes.len())
        {
            return Err(RasterError::InvalidLabels(format!(
                "label index {bad} out of range for {} classes",
                classes.len()
            )));
        }
        Ok(LabelMap {
            width,
            height,
            classes,
            labels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn labels(&self) -> &[Option<u16>] {
        &self.labels
    }

    /// Class name at (x, y), or `None` if unclassified.
    pub fn label_at(&self, x: u32, y: u32) -> Result<Option<&str>, RasterError> {
        if x >= self.width || y >= self.height {
            return Err(RasterError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.labels[(y * self.width + x) as usize].map(|i| self.classes[i as usize].as_str()))
    }

    pub fn unclassified_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.width, self.height);
        out.push_str(&self.classes.join(" "));
        out.push('\n');
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| match self.labels[(y * self.width + x) as usize] {
                    Some(i) => i.to_string(),
                    None => "-1".to_string(),
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        let mut it = header.split_whitespace();
        let width: u32 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("bad header line {header:?}"))?;
        let height: u32 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("bad header line {header:?}"))?;
        if it.next().is_some() {
            return Err(format!("trailing tokens in header line {header:?}"));
        }
        let class_line = lines.next().ok_or("missing class line")?;
        let classes: Vec<String> = class_line.split_whitespace().map(String::from).collect();
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let line = lines.next().ok_or_else(|| format!("missing row {y}"))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != width as usize {
                return Err(format!(
                    "row {y} has {} entries, expected {width}",
                    row.len()
                ));
            }
            for tok in row {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| format!("bad label token {tok:?}"))?;
                if v == -1 {
                    labels.push(None);
                } else if v >= 0 && (v as usize) < classes.len() {
                    labels.push(Some(v as u16));
                } else {
                    return Err(format!("unknown label index {v}"));
                }
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err("trailing content after last row".to_string());
        }
        LabelMap::new(width, height, classes, labels).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let text = read_text(path)?;
        Self::from_text(&text).map_err(|msg| RasterError::Malformed {
            path: path.to_path_buf(),
            msg,
        })
    }
}

// ---------------------------------------------------------------------------
// Palette / rendering
// ---------------------------------------------------------------------------

/// Class name to RGB mapping used when rendering label maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: BTreeMap<String, [u8; 3]>,
    unclassified: [u8; 3],
}

impl Palette {
    /// The default land-cover palette: vegetation green, urban red, rocky
    /// yellow, barren black, water blue; unclassified pixels render white.
    pub fn default_landcover() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("vegetation".to_string(), [0, 255, 0]);
        entries.insert("urban".to_string(), [255, 0, 0]);
        entries.insert("rocky".to_string(), [255, 255, 0]);
        entries.insert("barren".to_string(), [0, 0, 0]);
        entries.insert("water".to_string(), [0, 0, 255]);
        Palette {
            entries,
            unclassified: [255, 255, 255],
        }
    }

    /// Parses a palette file: one `name = R,G,B` per line, `#` comments
    /// allowed. The reserved name `unclassified` overrides the color used
    /// for unclassified pixels. Entries extend/override the default palette.
    pub fn from_file(path: &Path) -> Result<Self, RasterError> {
        let text = read_text(path)?;
        let mut palette = Palette::default_landcover();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| RasterError::Malformed {
                path: path.to_path_buf(),
                msg: format!("line {}: {msg}", lineno + 1),
            };
            let (name, rgb) = line
                .split_once('=')
                .ok_or_else(|| err("expected name = R,G,B".to_string()))?;
            let name = name.trim().to_string();
            let parts: Vec<&str> = rgb.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err(format!(
                    "expected three color components, got {}",
                    parts.len()
                )));
            }
            let mut color = [0u8; 3];
            for (slot, part) in color.iter_mut().zip(&parts) {
                *slot = part
                    .parse::<u8>()
                    .map_err(|_| err(format!("bad color component {part:?}")))?;
            }
            if name == "unclassified" {
                palette.unclassified = color;
            } else {
                palette.entries.insert(name, color);
            }
        }
        Ok(palette)
    }

    pub fn color_of(&self, class: &str) -> Option<[u8; 3]> {
        self.entries.get(class).copied()
    }

    pub fn unclassified_color(&self) -> [u8; 3] {
        self.unclassified
    }
}

/// Renders a label map to P6 PPM bytes.
pub fn render_ppm_bytes(labels: &LabelMap, palette: &Palette) -> Result<Vec<u8>, RasterError> {
    let mut colors = Vec::with_capacity(labels.classes().len());
    for class in labels.classes() {
        let color = palette
            .color_of(class)
            .ok_or_else(|| RasterError::MissingPaletteEntry(class.clone()))?;
        colors.push(color);
    }
    let mut rgb = Vec::with_capacity(3 * labels.labels().len());
    for label in labels.labels() {
        let color = match label {
            Some(i) => colors[*i as usize],
            None => palette.unclassified,
        };
        rgb.extend_from_slice(&color);
    }
    Ok(netpbm::encode_ppm(labels.width(), labels.height(), &rgb))
}

/// Renders a label map to a P6 PPM file.
pub fn render_ppm(labels: &LabelMap, palette: &Palette, path: &Path) -> Result<(), RasterError> {
    let bytes = render_ppm_bytes(labels, palette)?;
    write_file(path, &bytes)
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

/// Per-class spectral model: one mean and stddev per band.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ClassModel {
    pub name: String,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// A rectangular region assigned to one class.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Patch {
    pub class: String,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Specification of a synthetic scene: class spectral models plus a patch
/// layout that must tile the image exactly.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub bands: Vec<String>,
    pub classes: Vec<ClassModel>,
    pub patches: Vec<Patch>,
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, RasterError> {
        let spec: SceneSpec =
            toml::from_str(text).map_err(|e| RasterError::InvalidScene(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, RasterError> {
        let text = read_text(path)?;
        Self::from_toml_str(&text)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let err = |msg: String| Err(RasterError::InvalidScene(msg));
        if self.width == 0 || self.height == 0 {
            return err(format!("zero dimension {}x{}", self.width, self.height));
        }
        if self.bands.is_empty() {
            return err("no bands".to_string());
        }
        if self.classes.is_empty() {
            return err("no classes".to_string());
        }
        let mut names = std::collections::BTreeSet::new();
        for class in &self.classes {
            if let Err(msg) = check_class_name(&class.name) {
                return err(msg);
            }
            if !names.insert(class.name.clone()) {
                return err(format!("duplicate class {:?}", class.name));
            }
            if class.means.len() != self.bands.len() || class.stddevs.len() != self.bands.len() {
                return err(format!(
                    "class {:?} must define one mean and stddev per band ({} bands)",
                    class.name,
                    self.bands.len()
                ));
            }
            if class
                .means
                .iter()
                .any(|m| !m.is_finite() || *m < 0.0 || *m > 255.0)
            {
                return err(format!("class {:?}: means must lie in [0,255]", class.name));
            }
            if class.stddevs.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return err(format!("class {:?}: stddevs must be >= 0", class.name));
            }
        }
        // patches must tile the image exactly: no overlap, no gap
        let mut owner = vec![false; self.width as usize * self.height as usize];
        for patch in &self.patches {
            if !names.contains(&patch.class) {
                return err(format!("patch references unknown class {:?}", patch.class));
            }
            if patch.width == 0 || patch.height == 0 {
                return err(format!("patch for {:?} has zero area", patch.class));
            }
            let x1 = patch.x.checked_add(patch.width);
            let y1 = patch.y.checked_add(patch.height);
            match (x1, y1) {
                (Some(x1), Some(y1)) if x1 <= self.width && y1 <= self.height => {
                    for y in patch.y..y1 {
                        for x in patch.x..x1 {
                            let idx = (y * self.width + x) as usize;
                            if owner[idx] {
                                return err(format!("overlapping patches at ({x},{y})"));
                            }
                            owner[idx] = true;
                        }
                    }
                }
                _ => {
                    return err(format!(
                        "patch for {:?} lies outside the image",
                        patch.class
                    ))
                }
            }
        }
        if let Some(idx) = owner.iter().position(|covered| !covered) {
            let (x, y) = (idx as u32 % self.width, idx as u32 / self.width);
            return err(format!("patches leave pixel ({x},{y}) uncovered"));
        }
        Ok(())
    }

    fn truth_labels(&self) -> Vec<Option<u16>> {
        let mut labels = vec![None; self.width as usize * self.height as usize];
        for patch in &self.patches {
            let class = self
                .classes
                .iter()
                .position(|c| c.name == patch.class)
                .unwrap() as u16;
            for y in patch.y..patch.y + patch.height {
                for x in patch.x..patch.x + patch.width {
                    labels[(y * self.width + x) as usize] = Some(class);
                }
            }
        }
        labels
    }
}

/// Generates a scene: every DN is drawn from the pixel class's per-band
/// normal model, rounded half away from zero and clipped to [0,255].
/// Generation is a pure function of the spec (including its seed); pixels
/// are visited row-major, bands in order within each pixel.
pub fn synth_scene(spec: &SceneSpec) -> Result<(MultibandImage, LabelMap), RasterError> {
    spec.validate()?;
    let truth = spec.truth_labels();
    let band_count = spec.bands.len();
    let pixels = spec.width as usize * spec.height as usize;
    let mut bands = vec![vec![0u8; pixels]; band_count];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normals: Vec<Vec<Option<Normal<f64>>>> = spec
        .classes
        .iter()
        .map(|class| {
            class
                .means
                .iter()
                .zip(&class.stddevs)
                .map(|(&mean, &sd)| {
                    if sd == 0.0 {
                        None
                    } else {
                        Some(Normal::new(mean, sd).expect("validated scene spec"))
                    }
                })
                .collect()
        })
        .collect();
    for idx in 0..pixels {
        let class = truth[idx].expect("patches tile the image") as usize;
        for (b, band) in bands.iter_mut().enumerate() {
            let value = match &normals[class][b] {
                Some(normal) => normal.sample(&mut rng),
                None => spec.classes[class].means[b],
            };
            band[idx] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    let image = MultibandImage::new(spec.width, spec.height, spec.bands.clone(), bands)?;
    let labels = LabelMap::new(spec.width, spec.height, spec.class_names(), truth)?;
    Ok((image, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BAND_NAMES: [&str; 7] = ["RED", "GREEN", "NIR", "MIR", "RS1", "RS2", "DEM"];

    fn names() -> Vec<String> {
        BAND_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn constant_image(width: u32, height: u32, value: u8) -> MultibandImage {
        let n = width as usize * height as usize;
        MultibandImage::new(width, height, names(), vec![vec![value; n]; 7]).unwrap()
    }

    #[test]
    fn manifest_round_trip_seven_bands() {
        let dir = tempfile::tempdir().unwrap();
        let image = constant_image(472, 546, 7);
        let manifest = dir.path().join("scene.txt");
        save_with_manifest(&image, &manifest).unwrap();
        let loaded = load_manifest(&manifest).unwrap();
        assert_eq!(loaded.band_names(), &names()[..]);
        assert_eq!(loaded, image);
    }

    #[test]
    fn manifest_single_degenerate_band() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm_file(&dir.path().join("b.pgm"), 1, 1, &[0]).unwrap();
        fs::write(dir.path().join("m.txt"), "# one band\nGRAY = b.pgm\n").unwrap();
        let image = load_manifest(&dir.path().join("m.txt")).unwrap();
        assert_eq!(image.pixel_vector(0, 0).unwrap(), vec![0]);
    }

    #[test]
    fn manifest_rejects_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm_file(&dir.path().join("a.pgm"), 2, 1, &[0, 0]).unwrap();
        write_pgm_file(&dir.path().join("b.pgm"), 1, 2, &[0, 0]).unwrap();
        fs::write(dir.path().join("m.txt"), "A = a.pgm\nB = b.pgm\n").unwrap();
        let err = load_manifest(&dir.path().join("m.txt")).unwrap_err();
        assert!(
            matches!(err, RasterError::DimensionMismatch { .. }),
            "{err}"
        );
    }

    #[test]
    fn manifest_rejects_duplicate_band() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm_file(&dir.path().join("a.pgm"), 1, 1, &[0]).unwrap();
        fs::write(dir.path().join("m.txt"), "A = a.pgm\nA = a.pgm\n").unwrap();
        let err = load_manifest(&dir.path().join("m.txt")).unwrap_err();
        assert!(matches!(err, RasterError::DuplicateBand(_)), "{err}");
    }

    #[test]
    fn pixel_vector_constant_image() {
        let image = constant_image(1, 1, 42);
        assert_eq!(image.pixel_vector(0, 0).unwrap(), vec![42; 7]);
        assert!(matches!(
            image.pixel_vector(1, 0),
            Err(RasterError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn pixel_vector_reads_bands_in_order() {
        // first training pixels of two reference habitats
        let barren: [u8; 7] = [127, 96, 184, 131, 17, 32, 29];
        let rocky: [u8; 7] = [62, 49, 135, 91, 44, 40, 94];
        let bands: Vec<Vec<u8>> = (0..7).map(|b| vec![barren[b], rocky[b]]).collect();
        let image = MultibandImage::new(2, 1, names(), bands).unwrap();
        assert_eq!(image.pixel_vector(0, 0).unwrap(), barren.to_vec());
        assert_eq!(image.pixel_vector(1, 0).unwrap(), rocky.to_vec());
    }

    fn two_class_spec(stddev: f64, seed: u64) -> SceneSpec {
        SceneSpec {
            width: 8,
            height: 4,
            seed,
            bands: names(),
            classes: vec![
                ClassModel {
                    name: "water".to_string(),
                    means: vec![30.0; 7],
                    stddevs: vec![stddev; 7],
                },
                ClassModel {
                    name: "urban".to_string(),
                    means: vec![200.0; 7],
                    stddevs: vec![stddev; 7],
                },
            ],
            patches: vec![
                Patch {
                    class: "water".to_string(),
                    x: 0,
                    y: 0,
                    width: 4,
                    height: 4,
                },
                Patch {
                    class: "urban".to_string(),
                    x: 4,
                    y: 0,
                    width: 4,
                    height: 4,
                },
            ],
        }
    }

    #[test]
    fn synth_zero_stddev_hits_means_exactly() {
        let (image, truth) = synth_scene(&two_class_spec(0.0, 1)).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let expected = if x < 4 { 30 } else { 200 };
                assert_eq!(image.pixel_vector(x, y).unwrap(), vec![expected; 7]);
                let class = if x < 4 { "water" } else { "urban" };
                assert_eq!(truth.label_at(x, y).unwrap(), Some(class));
            }
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_scene(&two_class_spec(12.0, 99)).unwrap();
        let b = synth_scene(&two_class_spec(12.0, 99)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = synth_scene(&two_class_spec(12.0, 100)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn synth_rejects_overlap_and_gap() {
        let mut spec = two_class_spec(0.0, 1);
        spec.patches[1].x = 3;
        assert!(matches!(spec.validate(), Err(RasterError::InvalidScene(_))));
        let mut spec = two_class_spec(0.0, 1);
        spec.patches[1].width = 3;
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("uncovered"), "{err}");
    }

    #[test]
    fn render_uses_default_palette() {
        let palette = Palette::default_landcover();
        let map = LabelMap::new(1, 1, vec!["water".to_string()], vec![Some(0)]).unwrap();
        let bytes = render_ppm_bytes(&map, &palette).unwrap();
        assert!(bytes.ends_with(&[0, 0, 255]));

        let map = LabelMap::new(1, 1, vec![], vec![None]).unwrap();
        let bytes = render_ppm_bytes(&map, &palette).unwrap();
        assert!(bytes.ends_with(&[255, 255, 255]));

        let map = LabelMap::new(
            2,
            1,
            vec!["rocky".to_string(), "barren".to_string()],
            vec![Some(0), Some(1)],
        )
        .unwrap();
        let bytes = render_ppm_bytes(&map, &palette).unwrap();
        assert!(bytes.ends_with(&[255, 255, 0, 0, 0, 0]));
    }

    #[test]
    fn render_rejects_unknown_class() {
        let palette = Palette::default_landcover();
        let map = LabelMap::new(1, 1, vec!["lava".to_string()], vec![Some(0)]).unwrap();
        assert!(matches!(
            render_ppm_bytes(&map, &palette),
            Err(RasterError::MissingPaletteEntry(_))
        ));
    }

    #[test]
    fn label_map_round_trip() {
        let map = LabelMap::new(
            3,
            3,
            vec!["a".to_string(), "b".to_string()],
            vec![
                Some(0),
                Some(1),
                None,
                Some(1),
                Some(1),
                Some(0),
                None,
                None,
                Some(0),
            ],
        )
        .unwrap();
        assert_eq!(LabelMap::from_text(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn label_map_all_unclassified_round_trips() {
        let map = LabelMap::new(2, 2, vec![], vec![None; 4]).unwrap();
        assert_eq!(LabelMap::from_text(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn label_map_rejects_ragged_rows() {
        let err = LabelMap::from_text("2 2\na b\n0 1\n0\n").unwrap_err();
        assert!(err.contains("expected 2"), "{err}");
    }

    #[test]
    fn label_map_rejects_unknown_index() {
        let err = LabelMap::from_text("1 1\na\n3\n").unwrap_err();
        assert!(err.contains("unknown label"), "{err}");
    }
}
