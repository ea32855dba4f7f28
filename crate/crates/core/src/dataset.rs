//! On-disk multilevel datasets.
//!
//! A dataset directory holds `manifest.json` and one raw array per
//! `(role, level, split)` named `{role}_L{level}_{split}.f64`. Arrays are
//! little-endian `f64` of shape `[samples, n, n]`, full grid in row-major
//! order; dof-valued roles carry zeros on the boundary.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::DofVector;
use crate::fields::CaseConfig;
use crate::grid::{GridHierarchy, GridLevel};
use crate::multilevel::{
    estimate_normalization, generate_sample, reconstruct, MultilevelSample, NormalizationVector, SkipKind,
    SkipRecord, SolverSettings,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTION_MANIFEST_FILE: &str = "predictions.json";
pub const ELEMENT_TYPE: &str = "f64le";
/// Largest tolerated fraction of solver failures among admissible samples.
pub const MAX_SKIP_FRACTION: f64 = 0.01;
/// Largest tolerated fraction of draws rejected for a degenerate coefficient.
pub const MAX_REJECTION_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Kappa,
    Forcing,
    Obstacle,
    Solution,
    /// Correction divided by its level's normalization constant.
    Correction,
    /// Predicted normalized correction, written by a surrogate model.
    Prediction,
    /// Predicted finest-level solution `Σ b_ℓ P…P Ψ_ℓ`.
    Assembled,
}

impl Role {
    pub const DATASET: [Role; 5] = [Role::Kappa, Role::Forcing, Role::Obstacle, Role::Solution, Role::Correction];

    pub fn name(self) -> &'static str {
        match self {
            Role::Kappa => "kappa",
            Role::Forcing => "forcing",
            Role::Obstacle => "obstacle",
            Role::Solution => "solution",
            Role::Correction => "correction",
            Role::Prediction => "prediction",
            Role::Assembled => "assembled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    /// First sample index of the split; leaves room for replacements.
    pub fn default_offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Validation => 1 << 32,
            Split::Test => 2 << 32,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOffsets {
    pub train: u64,
    pub validation: u64,
    pub test: u64,
}

impl Default for SplitOffsets {
    fn default() -> Self {
        SplitOffsets {
            train: Split::Train.default_offset(),
            validation: Split::Validation.default_offset(),
            test: Split::Test.default_offset(),
        }
    }
}

impl SplitOffsets {
    pub fn get(&self, split: Split) -> u64 {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// One cataloged array file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub file: String,
    pub role: Role,
    pub level: usize,
    pub split: Split,
    /// `[samples, n, n]`.
    pub shape: [usize; 3],
    pub element_type: String,
}

impl ArrayEntry {
    pub fn new(role: Role, level: GridLevel, split: Split, samples: usize) -> Self {
        let n = level.nodes_per_side();
        ArrayEntry {
            file: array_file_name(role, level.level(), split),
            role,
            level: level.level(),
            split,
            shape: [samples, n, n],
            element_type: ELEMENT_TYPE.to_string(),
        }
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn byte_len(&self) -> u64 {
        (self.shape.iter().product::<usize>() * 8) as u64
    }
}

pub fn array_file_name(role: Role, level: usize, split: Split) -> String {
    format!("{}_L{}_{}.f64", role.name(), level, split.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub case: CaseConfig,
    pub levels: usize,
    /// Nodes per side of every level.
    pub grid_sizes: Vec<usize>,
    pub counts: SplitCounts,
    pub normalization: Vec<f64>,
    pub master_seed: u64,
    pub seed_offsets: SplitOffsets,
    pub arrays: Vec<ArrayEntry>,
    /// Sample indices that were drawn but skipped.
    pub skipped_indices: Vec<u64>,
}

impl DatasetManifest {
    pub fn entry(&self, role: Role, level: usize, split: Split) -> Option<&ArrayEntry> {
        self.arrays
            .iter()
            .find(|e| e.role == role && e.level == level && e.split == split)
    }

    pub fn normalization(&self) -> NormalizationVector {
        NormalizationVector(self.normalization.clone())
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Resolved case configuration.
    pub case: CaseConfig,
    pub levels: usize,
    pub counts: SplitCounts,
    pub offsets: SplitOffsets,
    pub solver: SolverSettings,
}

/// Samples of all splits plus the normalization estimated on them.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub spec: DatasetSpec,
    pub train: Vec<MultilevelSample>,
    pub validation: Vec<MultilevelSample>,
    pub test: Vec<MultilevelSample>,
    pub normalization: NormalizationVector,
    pub skipped: Vec<SkipRecord>,
}

impl GeneratedDataset {
    pub fn split(&self, split: Split) -> &[MultilevelSample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

fn generate_split(
    spec: &DatasetSpec,
    hierarchy: &GridHierarchy,
    split: Split,
    skipped: &mut Vec<SkipRecord>,
    attempted: &mut usize,
) -> Result<Vec<MultilevelSample>> {
    let want = spec.counts.get(split);
    let mut next = spec.offsets.get(split);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let batch: Vec<u64> = (next..next + (want - out.len()) as u64).collect();
        next += batch.len() as u64;
        let results: Vec<_> = batch
            .par_iter()
            .map(|&idx| generate_sample(&spec.case, hierarchy, &spec.solver, idx))
            .collect::<Result<Vec<_>>>()?;
        *attempted += results.len();
        for r in results {
            match r {
                Ok(s) => out.push(s),
                Err(skip) => skipped.push(skip),
            }
        }
        let rejected = skipped.iter().filter(|s| s.kind == SkipKind::DegenerateCoefficient).count();
        let failed = skipped.len() - rejected;
        let admissible = *attempted - rejected;
        if failed as f64 > MAX_SKIP_FRACTION * admissible as f64 {
            return Err(Error::SkipBudget {
                skipped: failed,
                attempted: admissible,
            });
        }
        if *attempted >= 20 && rejected as f64 > MAX_REJECTION_FRACTION * *attempted as f64 {
            return Err(Error::InvalidArgument(format!(
                "{rejected} of {} draws have a non-positive coefficient",
                *attempted
            )));
        }
    }
    Ok(out)
}

/// Generates every split in the current rayon pool. The result depends only
/// on `spec`, not on the number of threads.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<GeneratedDataset> {
    spec.case.validate()?;
    spec.solver.vcmr.validate()?;
    let hierarchy = GridHierarchy::build(spec.levels)?;
    let mut skipped = Vec::new();
    let mut attempted = 0;
    let train = generate_split(spec, &hierarchy, Split::Train, &mut skipped, &mut attempted)?;
    let validation = generate_split(spec, &hierarchy, Split::Validation, &mut skipped, &mut attempted)?;
    let test = generate_split(spec, &hierarchy, Split::Test, &mut skipped, &mut attempted)?;
    let basis: Vec<&[DofVector]> = if train.is_empty() {
        validation.iter().chain(&test).map(|s| s.corrections.as_slice()).collect()
    } else {
        train.iter().map(|s| s.corrections.as_slice()).collect()
    };
    let normalization = estimate_normalization(&basis, 2.0)?;
    Ok(GeneratedDataset {
        spec: spec.clone(),
        train,
        validation,
        test,
        normalization,
        skipped,
    })
}

fn write_array(path: &Path, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        for v in row {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline, as every manifest is written.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn level_values(sample: &MultilevelSample, role: Role, k: usize, b: &NormalizationVector) -> Result<Vec<f64>> {
    let lv = &sample.levels[k];
    Ok(match role {
        Role::Kappa => lv.kappa.values.clone(),
        Role::Forcing => lv.forcing.values.clone(),
        Role::Obstacle => lv.obstacle.values.clone(),
        Role::Solution => lv.level.full_from_dofs(&lv.u)?,
        Role::Correction => {
            let scaled: Vec<f64> = sample.corrections[k].iter().map(|v| v / b.0[k]).collect();
            lv.level.full_from_dofs(&scaled)?
        }
        Role::Prediction | Role::Assembled => {
            return Err(Error::InvalidArgument(format!("{} is not a dataset role", role.name())))
        }
    })
}

/// Writes `manifest.json` and every array, then verifies the catalog.
pub fn export_dataset(data: &GeneratedDataset, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = &data.spec;
    let hierarchy = GridHierarchy::build(spec.levels)?;
    let mut arrays = Vec::new();
    for split in Split::ALL {
        let samples = data.split(split);
        for &level in hierarchy.levels() {
            let k = level.level() - 1;
            for role in Role::DATASET {
                let entry = ArrayEntry::new(role, level, split, samples.len());
                let rows = samples
                    .iter()
                    .map(|s| level_values(s, role, k, &data.normalization))
                    .collect::<Result<Vec<_>>>()?;
                write_array(&dir.join(&entry.file), rows.into_iter())?;
                arrays.push(entry);
            }
        }
    }
    let counts = SplitCounts {
        train: data.train.len(),
        validation: data.validation.len(),
        test: data.test.len(),
    };
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        case: spec.case.clone(),
        levels: spec.levels,
        grid_sizes: hierarchy.levels().iter().map(|l| l.nodes_per_side()).collect(),
        counts,
        normalization: data.normalization.0.clone(),
        master_seed: spec.case.master_seed,
        seed_offsets: spec.offsets,
        arrays,
        skipped_indices: data.skipped.iter().map(|s| s.sample_index).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    verify_catalog(dir, &manifest.arrays)?;
    Ok(manifest)
}

fn verify_catalog(dir: &Path, arrays: &[ArrayEntry]) -> Result<()> {
    for e in arrays {
        let path = dir.join(&e.file);
        let meta = fs::metadata(&path).map_err(|err| match err.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
            _ => Error::io(&path, err),
        })?;
        if meta.len() != e.byte_len() {
            return Err(Error::ShapeMismatch {
                file: path,
                expected: e.byte_len(),
                found: meta.len(),
            });
        }
        if e.element_type != ELEMENT_TYPE {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported element type {}",
                e.file, e.element_type
            )));
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn read_rows(dir: &Path, entry: &ArrayEntry, rows: Range<usize>) -> Result<Vec<Vec<f64>>> {
    if rows.start > rows.end || rows.end > entry.shape[0] {
        return Err(Error::InvalidArgument(format!(
            "rows {rows:?} outside {} samples of {}",
            entry.shape[0], entry.file
        )));
    }
    let path = dir.join(&entry.file);
    let width = entry.sample_len();
    let mut file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    file.seek(SeekFrom::Start((rows.start * width * 8) as u64))
        .map_err(|e| Error::io(&path, e))?;
    let mut bytes = vec![0u8; rows.len() * width * 8];
    file.read_exact(&mut bytes).map_err(|e| Error::io(&path, e))?;
    Ok(bytes
        .chunks_exact(width * 8)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect()
        })
        .collect())
}

/// An imported dataset; arrays are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

/// Opens and validates a dataset directory.
pub fn import_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema(manifest.schema_version));
    }
    verify_catalog(dir, &manifest.arrays)?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    fn entry(&self, role: Role, level: usize, split: Split) -> Result<&ArrayEntry> {
        self.manifest.entry(role, level, split).ok_or_else(|| {
            Error::MissingFile(self.dir.join(array_file_name(role, level, split)))
        })
    }

    /// Full-grid arrays of samples `rows` in a split.
    pub fn read(&self, role: Role, level: usize, split: Split, rows: Range<usize>) -> Result<Vec<Vec<f64>>> {
        read_rows(&self.dir, self.entry(role, level, split)?, rows)
    }

    pub fn read_all(&self, role: Role, level: usize, split: Split) -> Result<Vec<Vec<f64>>> {
        let n = self.manifest.counts.get(split);
        self.read(role, level, split, 0..n)
    }

    /// Sample indices that make up a split, in file order.
    pub fn sample_indices(&self, split: Split) -> Vec<u64> {
        split_indices(&self.manifest, split)
    }
}

/// Indices of a split: its offset range with skipped indices removed.
pub fn split_indices(manifest: &DatasetManifest, split: Split) -> Vec<u64> {
    let want = manifest.counts.get(split);
    (manifest.seed_offsets.get(split)..)
        .filter(|i| !manifest.skipped_indices.contains(i))
        .take(want)
        .collect()
}

/// Catalog written next to surrogate predictions of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub schema_version: u32,
    pub split: Split,
    pub levels: usize,
    pub grid_sizes: Vec<usize>,
    pub count: usize,
    pub normalization: Vec<f64>,
    pub arrays: Vec<ArrayEntry>,
}

/// Predictions of one split: normalized per-level corrections, and
/// optionally the assembled finest solution.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub dir: PathBuf,
    pub manifest: PredictionManifest,
}

impl Predictions {
    pub fn per_level(&self, level: usize) -> Result<Option<Vec<Vec<f64>>>> {
        self.read_role(Role::Prediction, level)
    }

    /// The assembled finest solution, from its file when present and from
    /// the per-level parts otherwise.
    pub fn assembled(&self) -> Result<Vec<Vec<f64>>> {
        if let Some(a) = self.read_role(Role::Assembled, self.manifest.levels)? {
            return Ok(a);
        }
        let mut parts = Vec::with_capacity(self.manifest.levels);
        for l in 1..=self.manifest.levels {
            parts.push(self.per_level(l)?.ok_or_else(|| {
                Error::MissingFile(self.dir.join(array_file_name(Role::Prediction, l, self.manifest.split)))
            })?);
        }
        let b = NormalizationVector(self.manifest.normalization.clone());
        (0..self.manifest.count)
            .map(|s| {
                let per_level: Vec<&[f64]> = parts.iter().map(|p| p[s].as_slice()).collect();
                assemble_from_corrections(&per_level, &b)
            })
            .collect()
    }

    fn read_role(&self, role: Role, level: usize) -> Result<Option<Vec<Vec<f64>>>> {
        match self
            .manifest
            .arrays
            .iter()
            .find(|e| e.role == role && e.level == level)
        {
            Some(e) => Ok(Some(read_rows(&self.dir, e, 0..e.shape[0])?)),
            None => Ok(None),
        }
    }
}

/// `Σ_ℓ b_ℓ P…P Ψ_ℓ` for full-grid normalized corrections; full-grid result.
pub fn assemble_from_corrections(per_level: &[&[f64]], b: &NormalizationVector) -> Result<Vec<f64>> {
    check_len(b.len(), per_level.len())?;
    let mut dofs = Vec::with_capacity(per_level.len());
    for (k, full) in per_level.iter().enumerate() {
        let level = GridLevel::new(k + 1)?;
        dofs.push(level.interior_values(full)?.iter().map(|v| v * b.0[k]).collect::<Vec<_>>());
    }
    let u = reconstruct(&dofs)?;
    GridLevel::new(per_level.len())?.full_from_dofs(&u)
}

/// Writes `predictions.json` plus `prediction_L{ℓ}_{split}.f64` for every
/// level, and `assembled_L{L}_{split}.f64` when `assembled` is given.
pub fn write_predictions(
    dir: &Path,
    dataset: &DatasetManifest,
    split: Split,
    per_level: &[Vec<Vec<f64>>],
    assembled: Option<&[Vec<f64>]>,
) -> Result<PredictionManifest> {
    check_len(dataset.levels, per_level.len())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let count = dataset.counts.get(split);
    let mut arrays = Vec::new();
    let mut write = |role: Role, level: GridLevel, rows: &[Vec<f64>]| -> Result<()> {
        check_len(count, rows.len())?;
        for r in rows {
            check_len(level.node_count(), r.len())?;
        }
        let entry = ArrayEntry::new(role, level, split, count);
        write_array(&dir.join(&entry.file), rows.iter().cloned())?;
        arrays.push(entry);
        Ok(())
    };
    for (k, rows) in per_level.iter().enumerate() {
        write(Role::Prediction, GridLevel::new(k + 1)?, rows)?;
    }
    if let Some(rows) = assembled {
        write(Role::Assembled, GridLevel::new(dataset.levels)?, rows)?;
    }
    let manifest = PredictionManifest {
        schema_version: SCHEMA_VERSION,
        split,
        levels: dataset.levels,
        grid_sizes: dataset.grid_sizes.clone(),
        count,
        normalization: dataset.normalization.clone(),
        arrays,
    };
    write_json(&dir.join(PREDICTION_MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn import_predictions(dir: &Path) -> Result<Predictions> {
    let manifest: PredictionManifest = read_json(&dir.join(PREDICTION_MANIFEST_FILE))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema(manifest.schema_version));
    }
    verify_catalog(dir, &manifest.arrays)?;
    Ok(Predictions {
        dir: dir.to_path_buf(),
        manifest,
    })
}
