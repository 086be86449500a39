//! The coordinate-feature memory bank and its on-disk format.
//!
//! Every prototype scan is registered into the canonical frame, thinned to
//! center points, and contributes `(coordinate, feature)` elements to one
//! shared bank. The bank is self-contained: inference rebuilds a
//! registration target from the stored coordinates, so the original
//! prototype scans are not needed at scoring time.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{
    extract_center_features, FeatureError, FeatureMatrix, FeatureSource,
};
use crate::geometry::{
    estimate_normals, GeometryError, PointCloud, RigidTransform, SpatialIndex,
};
use crate::registration::{register_clouds, RegistrationConfig, RegistrationError};
use crate::sampling::{greedy_downsample, SamplingError, SamplingParams};
use crate::seed;

const MAGIC: &[u8; 4] = b"PCBK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BankError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a memory bank file (bad magic)")]
    BadMagic,
    #[error("unsupported bank format version {got}, this build reads version {supported}")]
    FormatVersionMismatch { got: u32, supported: u32 },
    #[error("bank file failed its checksum (truncated or corrupted)")]
    ChecksumMismatch,
    #[error("bank data is inconsistent: {0}")]
    Malformed(String),
    #[error("a memory bank needs at least one element")]
    Empty,
    #[error("prototype list is empty or the canonical index is out of range")]
    InvalidPrototypes,
    #[error("registration of prototype {prototype} failed: {source}")]
    Registration {
        prototype: usize,
        source: RegistrationError,
    },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Immutable bank of `(coordinate, feature)` elements with a spatial index
/// over the coordinates. `provenance[i]` is the prototype each element came
/// from.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    coords: Vec<Point3<f64>>,
    features: FeatureMatrix,
    provenance: Vec<u32>,
    fingerprint: [u8; 32],
    index: SpatialIndex,
}

impl MemoryBank {
    pub fn from_parts(
        coords: Vec<Point3<f64>>,
        features: FeatureMatrix,
        provenance: Vec<u32>,
        fingerprint: [u8; 32],
    ) -> Result<Self, BankError> {
        if coords.is_empty() {
            return Err(BankError::Empty);
        }
        if features.nrows() != coords.len() || provenance.len() != coords.len() {
            return Err(BankError::Malformed(format!(
                "{} coordinates, {} feature rows, {} provenance entries",
                coords.len(),
                features.nrows(),
                provenance.len()
            )));
        }
        if coords
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(BankError::Malformed("non-finite coordinate".into()));
        }
        let index = SpatialIndex::build(&coords);
        Ok(Self {
            coords,
            features,
            provenance,
            fingerprint,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn coords(&self) -> &[Point3<f64>] {
        &self.coords
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn provenance(&self) -> &[u32] {
        &self.provenance
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    /// The coordinate index. Lookups through it are counted, which is how
    /// callers can audit how many bank queries a scoring pass made.
    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    /// Bank coordinates as a plain cloud, the registration target for test
    /// scans.
    pub fn coordinate_cloud(&self) -> PointCloud {
        PointCloud::new(self.coords.clone()).expect("bank is never empty")
    }
}

/// Which feature a bank stores per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankFeatureKind {
    Fpfh,
    External,
}

impl BankFeatureKind {
    fn tag(&self) -> &'static str {
        match self {
            BankFeatureKind::Fpfh => "fpfh",
            BankFeatureKind::External => "external",
        }
    }
}

/// Parameters controlling bank construction.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankBuildParams {
    pub sampling: SamplingParams,
    pub registration: RegistrationConfig,
    /// Index of the prototype whose frame becomes the canonical frame.
    pub canonical_prototype: usize,
}

impl Default for BankBuildParams {
    fn default() -> Self {
        Self {
            sampling: SamplingParams::default(),
            registration: RegistrationConfig::default(),
            canonical_prototype: 0,
        }
    }
}

/// Digest of everything that determines bank content apart from the scans
/// themselves. Stored in the bank file so inference can warn when its
/// configuration differs from the one the bank was built with.
pub fn bank_fingerprint(
    params: &BankBuildParams,
    feature_kind: BankFeatureKind,
    feature_dim: usize,
) -> [u8; 32] {
    let config_text = toml::to_string(params).expect("bank params serialize to TOML");
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    hasher.update(feature_kind.tag().as_bytes());
    hasher.update((feature_dim as u64).to_le_bytes());
    hasher.finalize().into()
}

/// Per-prototype diagnostics from a bank build.
#[derive(Debug, Clone)]
pub struct PrototypeReport {
    pub prototype: usize,
    pub transform: RigidTransform,
    /// RANSAC inlier fraction; 1.0 for the canonical prototype, which is
    /// not registered.
    pub inlier_fraction: f64,
    pub center_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct BankBuild {
    pub bank: MemoryBank,
    pub reports: Vec<PrototypeReport>,
}

/// Builds one memory bank from prototype scans.
///
/// The canonical prototype keeps its frame (identity transform); every
/// other prototype is registered onto it. Each registered cloud is thinned
/// by greedy downsampling and its centers contribute elements whose
/// coordinates are taken verbatim from the registered cloud. Per-prototype
/// sampling and RANSAC seeds are derived from the configured base seeds and
/// the prototype index, so builds are reproducible element for element.
///
/// With `external_features`, one matrix per prototype (a row per point)
/// replaces the built-in FPFH descriptor.
pub fn build_memory_bank(
    prototypes: &[PointCloud],
    external_features: Option<&[FeatureMatrix]>,
    params: &BankBuildParams,
) -> Result<BankBuild, BankError> {
    if prototypes.is_empty() || params.canonical_prototype >= prototypes.len() {
        return Err(BankError::InvalidPrototypes);
    }
    if let Some(mats) = external_features {
        if mats.len() != prototypes.len() {
            return Err(BankError::Malformed(format!(
                "{} feature matrices for {} prototypes",
                mats.len(),
                prototypes.len()
            )));
        }
        for (i, (cloud, mat)) in prototypes.iter().zip(mats).enumerate() {
            if mat.nrows() != cloud.len() {
                return Err(BankError::Malformed(format!(
                    "prototype {i}: {} feature rows for {} points",
                    mat.nrows(),
                    cloud.len()
                )));
            }
            if mat.dim() != mats[0].dim() {
                return Err(BankError::Malformed(format!(
                    "prototype {i}: feature dimension {} differs from {}",
                    mat.dim(),
                    mats[0].dim()
                )));
            }
        }
    }

    // Orient all prototypes up front so registration and FPFH extraction
    // share the same normals.
    let mut oriented = Vec::with_capacity(prototypes.len());
    let mut orientation_warnings = vec![Vec::new(); prototypes.len()];
    for (i, cloud) in prototypes.iter().enumerate() {
        if cloud.has_normals() {
            oriented.push(cloud.clone());
        } else {
            let est = estimate_normals(cloud, params.registration.normals_k)
                .map_err(BankError::Geometry)?;
            if est.degenerate_count > 0 {
                orientation_warnings[i].push(format!(
                    "prototype {i}: {} of {} normal neighborhoods were collinear",
                    est.degenerate_count,
                    cloud.len()
                ));
            }
            oriented.push(est.cloud);
        }
    }
    let canonical = &oriented[params.canonical_prototype];
    let fpfh_radius = params
        .registration
        .fpfh_radius
        .resolve(canonical.diameter());

    let mut coords = Vec::new();
    let mut provenance = Vec::new();
    let mut feature_rows: Vec<Vec<f64>> = Vec::new();
    let mut reports = Vec::new();

    for (i, cloud) in oriented.iter().enumerate() {
        let mut warnings = std::mem::take(&mut orientation_warnings[i]);
        let (transform, inlier_fraction) = if i == params.canonical_prototype {
            (RigidTransform::identity(), 1.0)
        } else {
            let mut reg_config = params.registration.clone();
            reg_config.ransac.seed = seed::derive(params.registration.ransac.seed, i as u64);
            let outcome = register_clouds(cloud, canonical, &reg_config)
                .map_err(|source| BankError::Registration {
                    prototype: i,
                    source,
                })?;
            warnings.extend(outcome.warnings);
            (outcome.transform, outcome.global.inlier_fraction)
        };
        let registered = cloud.transformed(&transform);
        let mut sampling = params.sampling.clone();
        sampling.seed = seed::derive(params.sampling.seed, i as u64);
        let centers = greedy_downsample(&registered, &sampling)?;
        let source = match external_features {
            Some(mats) => FeatureSource::Matrix(&mats[i]),
            None => FeatureSource::Fpfh {
                radius: fpfh_radius,
            },
        };
        let center_features = extract_center_features(&registered, &centers, &source)?;
        for (row, &c) in centers.iter().enumerate() {
            coords.push(*registered.point(c));
            provenance.push(i as u32);
            feature_rows.push(center_features.row(row).to_vec());
        }
        reports.push(PrototypeReport {
            prototype: i,
            transform,
            inlier_fraction,
            center_count: centers.len(),
            warnings,
        });
    }

    let features = FeatureMatrix::from_rows(&feature_rows)?;
    let kind = if external_features.is_some() {
        BankFeatureKind::External
    } else {
        BankFeatureKind::Fpfh
    };
    let fingerprint = bank_fingerprint(params, kind, features.dim());
    let bank = MemoryBank::from_parts(coords, features, provenance, fingerprint)?;
    Ok(BankBuild { bank, reports })
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Serializes a bank. The layout is little-endian: magic, version, feature
/// dimension, element count, fingerprint, coordinates, feature rows,
/// provenance, then a SHA-256 checksum of everything before it.
pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<(), BankError> {
    let file = File::create(path)?;
    let mut w = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(bank.feature_dim() as u32).to_le_bytes())?;
    w.write_all(&(bank.len() as u64).to_le_bytes())?;
    w.write_all(bank.fingerprint())?;
    for p in bank.coords() {
        for axis in 0..3 {
            w.write_all(&p[axis].to_le_bytes())?;
        }
    }
    for v in bank.features().as_flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &p in bank.provenance() {
        w.write_all(&p.to_le_bytes())?;
    }
    let digest: [u8; 32] = w.hasher.clone().finalize().into();
    w.inner.write_all(&digest)?;
    w.inner.flush()?;
    Ok(())
}

/// Reads a bank written by [`save_bank`], verifying magic, version and
/// checksum before trusting any payload.
pub fn load_bank(path: &Path) -> Result<MemoryBank, BankError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(BankError::ChecksumMismatch);
    }
    if &bytes[..4] != MAGIC {
        return Err(BankError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(BankError::ChecksumMismatch);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(BankError::FormatVersionMismatch {
            got: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = 4 + 4 + 4 + 8 + 32;
    if bytes.len() < header_len {
        return Err(BankError::ChecksumMismatch);
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let fingerprint: [u8; 32] = bytes[20..52].try_into().unwrap();
    let payload = (count as u128) * (24 + 8 * dim as u128 + 4);
    let expected_len = header_len as u128 + payload + 32;
    if bytes.len() as u128 != expected_len {
        return Err(BankError::ChecksumMismatch);
    }
    let body_end = bytes.len() - 32;
    let digest: [u8; 32] = Sha256::digest(&bytes[..body_end]).into();
    if digest != bytes[body_end..] {
        return Err(BankError::ChecksumMismatch);
    }

    let mut offset = header_len;
    let read_f64 = |bytes: &[u8], offset: &mut usize| {
        let v = f64::from_le_bytes(bytes[*offset..*offset + 8].try_into().unwrap());
        *offset += 8;
        v
    };
    let mut coords = Vec::with_capacity(count);
    for _ in 0..count {
        let x = read_f64(&bytes, &mut offset);
        let y = read_f64(&bytes, &mut offset);
        let z = read_f64(&bytes, &mut offset);
        coords.push(Point3::new(x, y, z));
    }
    let mut flat = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        flat.push(read_f64(&bytes, &mut offset));
    }
    let features = FeatureMatrix::from_flat(flat, dim)
        .map_err(|e| BankError::Malformed(e.to_string()))?;
    let mut provenance = Vec::with_capacity(count);
    for _ in 0..count {
        provenance.push(u32::from_le_bytes(
            bytes[offset..offset + 4].try_into().unwrap(),
        ));
        offset += 4;
    }
    MemoryBank::from_parts(coords, features, provenance, fingerprint)
}
