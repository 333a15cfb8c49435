//! Synthetic annotation datasets: generation with a controlled grade mix,
//! CSV ingestion/serialization, and stratified train/validation/test splits.
//!
//! The annotation schema stores only quadrant bits; whole-image presence is
//! always derived, so OR-inconsistency cannot enter through a file.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grading::{Grade, GroundTruthImage, ADJACENT_QUADRANT_PAIRS};
use crate::rng;

pub const ANNOTATION_HEADER: &str =
    "image_id,ex_q1,ex_q2,ex_q3,ex_q4,od_q1,od_q2,od_q3,od_q4,fov_q1,fov_q2,fov_q3,fov_q4,grade";

/// Settings for synthetic dataset generation.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub n_images: usize,
    /// Target proportions of grades 0, 1, 2; must sum to 1.
    pub grade_mix: [f64; 3],
    /// Probability that exudates occupy each additional quadrant beyond the
    /// grade-forced one.
    pub ex_quadrant_rate: f64,
    /// Probability that the optic disc straddles two adjacent quadrants.
    pub od_two_quadrant_rate: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_images: 200, grade_mix: [0.44, 0.06, 0.50], ex_quadrant_rate: 0.4, od_two_quadrant_rate: 0.3, seed: 0 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::InvalidInput("n_images must be positive".into()));
        }
        if self.grade_mix.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput("grade mix proportions must be non-negative".into()));
        }
        let sum: f64 = self.grade_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("grade mix must sum to 1, got {sum}")));
        }
        for (name, v) in [("ex_quadrant_rate", self.ex_quadrant_rate), ("od_two_quadrant_rate", self.od_two_quadrant_rate)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` across `fractions`.
fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for k in 0..(total - assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

/// Quadrant weights for the optic-disc anchor. The disc sits on the nasal
/// side at roughly constant height, and fundus datasets skew toward one
/// orientation, so one quadrant hosts it in most images.
const OD_ANCHOR_WEIGHTS: [f64; 4] = [0.10, 0.15, 0.60, 0.15];

fn weighted_quadrant(weights: &[f64; 4], rng: &mut impl Rng) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (q, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return q;
        }
    }
    3
}

fn sample_image(id: String, grade: Grade, cfg: &DatasetConfig, rng: &mut impl Rng) -> GroundTruthImage {
    let fovea_quadrant = rng.gen_range(0..4usize);
    let mut fov = [false; 4];
    fov[fovea_quadrant] = true;

    let mut od = [false; 4];
    let anchor = weighted_quadrant(&OD_ANCHOR_WEIGHTS, rng);
    od[anchor] = true;
    if rng.gen_bool(cfg.od_two_quadrant_rate) {
        // straddle one of the anchor's two adjacent borders
        let neighbor = if rng.gen_bool(0.5) { (anchor + 1) % 4 } else { (anchor + 3) % 4 };
        od[neighbor] = true;
        debug_assert!(ADJACENT_QUADRANT_PAIRS.iter().any(|&(a, b)| od[a] && od[b]));
    }

    let mut ex = [false; 4];
    match grade {
        Grade::G0 => {}
        Grade::G2 => {
            ex[fovea_quadrant] = true;
            for (q, slot) in ex.iter_mut().enumerate() {
                if q != fovea_quadrant && rng.gen_bool(cfg.ex_quadrant_rate) {
                    *slot = true;
                }
            }
        }
        Grade::G1 => {
            let others: Vec<usize> = (0..4).filter(|&q| q != fovea_quadrant).collect();
            let forced = others[rng.gen_range(0..others.len())];
            ex[forced] = true;
            for &q in &others {
                if q != forced && rng.gen_bool(cfg.ex_quadrant_rate) {
                    ex[q] = true;
                }
            }
        }
    }

    let img = GroundTruthImage::from_quadrants(id, ex, od, fov).expect("sampled structure is valid by construction");
    debug_assert_eq!(img.grade(), grade);
    img
}

/// Generate a dataset matching the configured grade mix; realized counts are
/// within one image of each target proportion.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<GroundTruthImage>> {
    cfg.validate()?;
    let counts = apportion(cfg.n_images, &cfg.grade_mix);
    let mut grades: Vec<Grade> = Vec::with_capacity(cfg.n_images);
    for (grade, &count) in Grade::ALL.iter().zip(&counts) {
        grades.extend(std::iter::repeat_n(*grade, count));
    }
    let mut rng = rng::rng_from(rng::derive(cfg.seed, "dataset"));
    grades.shuffle(&mut rng);
    let width = cfg.n_images.to_string().len().max(3);
    Ok(grades
        .into_iter()
        .enumerate()
        .map(|(i, grade)| sample_image(format!("img_{i:0width$}"), grade, cfg, &mut rng))
        .collect())
}

fn flags_csv(flags: [bool; 4]) -> String {
    flags.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(",")
}

/// Write the canonical annotation CSV (UTF-8, LF line endings).
pub fn save_annotations<W: Write>(images: &[GroundTruthImage], w: &mut W) -> Result<()> {
    writeln!(w, "{ANNOTATION_HEADER}")?;
    for img in images {
        writeln!(
            w,
            "{},{},{},{},{}",
            img.id(),
            flags_csv(img.quadrant_flags(crate::domain::Concept::HardExudate)),
            flags_csv(img.quadrant_flags(crate::domain::Concept::OpticDisc)),
            flags_csv(img.quadrant_flags(crate::domain::Concept::Fovea)),
            img.grade()
        )?;
    }
    Ok(())
}

pub fn save_annotations_file(images: &[GroundTruthImage], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    save_annotations(images, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn parse_flag(field: &str, row: usize, column: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::SchemaViolation { row, message: format!("column {column} must be 0 or 1, got '{other}'") }),
    }
}

/// Parse and validate the annotation CSV; every row must describe a
/// structurally valid image whose stored grade matches the derived one.
pub fn load_annotations<R: std::io::Read>(reader: R) -> Result<Vec<GroundTruthImage>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::SchemaViolation { row: 0, message: "missing header".into() })?;
    if header.trim_end() != ANNOTATION_HEADER {
        return Err(Error::SchemaViolation { row: 0, message: format!("unexpected header '{header}'") });
    }
    let columns: Vec<&str> = ANNOTATION_HEADER.split(',').collect();
    let mut images = Vec::new();
    let mut seen_ids: Vec<String> = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::SchemaViolation {
                row,
                message: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(Error::SchemaViolation { row, message: "empty image_id".into() });
        }
        if seen_ids.contains(&id) {
            return Err(Error::SchemaViolation { row, message: format!("duplicate image_id '{id}'") });
        }
        let mut flags = [[false; 4]; 3];
        for (block, group) in flags.iter_mut().enumerate() {
            for (q, flag) in group.iter_mut().enumerate() {
                let col = 1 + block * 4 + q;
                *flag = parse_flag(fields[col], row, columns[col])?;
            }
        }
        let grade_value: u8 = fields[13]
            .parse()
            .map_err(|_| Error::SchemaViolation { row, message: format!("grade must be 0, 1 or 2, got '{}'", fields[13]) })?;
        let stored_grade = Grade::from_u8(grade_value)
            .map_err(|e| Error::SchemaViolation { row, message: e.to_string() })?;
        let img = GroundTruthImage::from_quadrants(id.clone(), flags[0], flags[1], flags[2])
            .map_err(|e| Error::SchemaViolation { row, message: e.to_string() })?;
        if img.grade() != stored_grade {
            return Err(Error::SchemaViolation {
                row,
                message: format!("stored grade {stored_grade} contradicts derived grade {}", img.grade()),
            });
        }
        seen_ids.push(id);
        images.push(img);
    }
    Ok(images)
}

pub fn load_annotations_file(path: &Path) -> Result<Vec<GroundTruthImage>> {
    let file = std::fs::File::open(path)?;
    load_annotations(file)
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.6, validation: 0.1, test: 0.3 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("validation", self.validation), ("test", self.test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("split fraction {name} must be in [0, 1], got {v}")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Grade-stratified split, deterministic under the seed. Rounding that
/// leaves a grade out of a requested split produces a warning, not an error.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<GroundTruthImage>,
    pub validation: Vec<GroundTruthImage>,
    pub test: Vec<GroundTruthImage>,
    pub warnings: Vec<String>,
}

pub fn split_dataset(images: &[GroundTruthImage], spec: &SplitSpec, seed: u64) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut rng = rng::rng_from(rng::derive(seed, "split"));
    let mut split =
        DatasetSplit { train: Vec::new(), validation: Vec::new(), test: Vec::new(), warnings: Vec::new() };
    let names = ["train", "validation", "test"];
    for grade in Grade::ALL {
        let mut bucket: Vec<&GroundTruthImage> = images.iter().filter(|i| i.grade() == grade).collect();
        if bucket.is_empty() {
            continue;
        }
        bucket.shuffle(&mut rng);
        let counts = apportion(bucket.len(), &spec.fractions());
        for (part, (&count, name)) in counts.iter().zip(names).enumerate() {
            if count == 0 && spec.fractions()[part] > 0.0 {
                split.warnings.push(format!("grade {grade} contributes no images to the {name} split"));
            }
        }
        let mut iter = bucket.into_iter();
        for (part, &count) in counts.iter().enumerate() {
            let target = match part {
                0 => &mut split.train,
                1 => &mut split.validation,
                _ => &mut split.test,
            };
            target.extend(iter.by_ref().take(count).cloned());
        }
    }
    // per-grade assembly leaves the splits grade-sorted, which would bias
    // anything prefix-sensitive (question-count capping, replay warm-up)
    split.train.shuffle(&mut rng);
    split.validation.shuffle(&mut rng);
    split.test.shuffle(&mut rng);
    Ok(split)
}
