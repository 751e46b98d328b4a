//! On-disk dataset construction and loading.
//!
//! Each sample is stored under a per-object directory as a file stem with
//! channel suffixes: `<stem>_depth.pfm` (normalized depth),
//! `<stem>_shade.pgm` (shaded intensity) and `<stem>_mask.pgm` (object
//! coverage). A manifest lists every stem with class, pose and kind, plus a
//! header carrying the dataset config digest and the fields needed to load
//! samples back.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imageio;
use crate::rng;
use crate::scene::filters::{median_inpaint, normalize_depth, normalize_intensity};
use crate::scene::icosphere::hemisphere_poses;
use crate::scene::noise::{add_fractal_background, add_gaussian_noise};
use crate::scene::primitive::{make_primitive, Mesh, PrimitiveKind};
use crate::scene::render::{render_depth, render_incidence, render_shaded, Intrinsics};
use crate::scene::{Image, Mask, Pose, SymmetryClass};
use crate::tensor::Tensor;

/// Which channels a sample image carries, in CHW order depth-then-shaded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    Depth,
    Shaded,
    Both,
}

impl ChannelMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "depth" => Some(ChannelMode::Depth),
            "shaded" => Some(ChannelMode::Shaded),
            "both" => Some(ChannelMode::Both),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelMode::Depth => "depth",
            ChannelMode::Shaded => "shaded",
            ChannelMode::Both => "both",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ChannelMode::Depth | ChannelMode::Shaded => 1,
            ChannelMode::Both => 2,
        }
    }

    pub fn has_depth(&self) -> bool {
        matches!(self, ChannelMode::Depth | ChannelMode::Both)
    }

    pub fn has_shaded(&self) -> bool {
        matches!(self, ChannelMode::Shaded | ChannelMode::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Template,
    Training,
    Test,
}

impl SampleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "template" => Some(SampleKind::Template),
            "training" => Some(SampleKind::Training),
            "test" => Some(SampleKind::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SampleKind::Template => "template",
            SampleKind::Training => "training",
            SampleKind::Test => "test",
        }
    }
}

/// One object class: a procedural mesh plus its symmetry tag.
#[derive(Clone, Debug)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: PrimitiveKind,
    pub symmetry: SymmetryClass,
    pub extent_m: f64,
}

#[derive(Clone, Debug)]
pub struct DatasetParams {
    pub objects: Vec<ObjectSpec>,
    /// Icosphere subdivision for the template poses.
    pub template_level: u32,
    /// Finer subdivision for the training poses.
    pub training_level: u32,
    /// Noisy duplicates per training pose.
    pub n_copies: usize,
    pub n_test_per_object: usize,
    pub distance_m: f64,
    /// Metric width framed onto the patch at the object center distance.
    pub window_m: f64,
    pub patch: usize,
    pub channels: ChannelMode,
    pub depth_sigma_m: f64,
    pub intensity_sigma: f64,
    pub fractal_amplitude: f64,
    pub fractal_octaves: u32,
    /// Fraction of object pixels dropped at random in test depth maps.
    pub speckle_fraction: f64,
    /// Object pixels with view incidence beyond this angle lose their depth
    /// in test maps (simulated sensor behavior at grazing angles).
    pub grazing_limit_deg: f64,
}

/// Normalized depth assigned to the background plane: 20 cm behind the
/// object center, i.e. exactly +1 after normalization.
const BACKGROUND_OFFSET_M: f64 = 0.2;

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Config("dataset needs at least one object".into()));
        }
        let mut names: Vec<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.objects.len() {
            return Err(Error::Config("object names must be unique".into()));
        }
        for o in &self.objects {
            if o.name.is_empty()
                || !o
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::Config(format!(
                    "object name {:?} must be non-empty [A-Za-z0-9_-]",
                    o.name
                )));
            }
        }
        if self.template_level > 5 || self.training_level > 5 {
            return Err(Error::Config("subdivision level beyond practical bound 5".into()));
        }
        if self.n_copies == 0 {
            return Err(Error::Config("nCopies must be >= 1".into()));
        }
        if !(self.distance_m > 0.0 && self.window_m > 0.0) {
            return Err(Error::Config("distance and window must be positive".into()));
        }
        if self.patch < 8 {
            return Err(Error::Config("patch must be at least 8 pixels".into()));
        }
        if !(0.0..1.0).contains(&self.speckle_fraction) {
            return Err(Error::Config("speckle fraction must lie in [0, 1)".into()));
        }
        if !(0.0 < self.grazing_limit_deg && self.grazing_limit_deg <= 90.0) {
            return Err(Error::Config("grazing limit must lie in (0, 90]".into()));
        }
        Ok(())
    }

    /// Digest over a canonical field serialization; identifies the dataset
    /// configuration in manifests and downstream files.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |s: String| {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
        };
        for o in &self.objects {
            feed(format!(
                "object {} {} {} {}",
                o.name,
                o.kind.as_str(),
                o.symmetry.as_str(),
                o.extent_m
            ));
        }
        feed(format!("levels {} {}", self.template_level, self.training_level));
        feed(format!("copies {}", self.n_copies));
        feed(format!("test {}", self.n_test_per_object));
        feed(format!("camera {} {} {}", self.distance_m, self.window_m, self.patch));
        feed(format!("channels {}", self.channels.as_str()));
        feed(format!(
            "noise {} {} {} {} {} {}",
            self.depth_sigma_m,
            self.intensity_sigma,
            self.fractal_amplitude,
            self.fractal_octaves,
            self.speckle_fraction,
            self.grazing_limit_deg
        ));
        crate::net::checkpoint::hex(&hasher.finalize())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// File stem relative to the dataset root, without channel suffix.
    pub path: String,
    pub class_id: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub kind: SampleKind,
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub config_digest: String,
    pub seed: u64,
    pub distance_m: f64,
    pub window_m: f64,
    pub patch: usize,
    pub channels: ChannelMode,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn pose_of(&self, entry: &ManifestEntry) -> Pose {
        Pose {
            azimuth_deg: entry.azimuth_deg,
            elevation_deg: entry.elevation_deg,
            distance_m: self.distance_m,
        }
    }
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "# posedesc-manifest v1").map_err(io_err)?;
    writeln!(w, "# config={}", manifest.config_digest).map_err(io_err)?;
    writeln!(w, "# seed={}", manifest.seed).map_err(io_err)?;
    writeln!(w, "# distance_m={}", manifest.distance_m).map_err(io_err)?;
    writeln!(w, "# window_m={}", manifest.window_m).map_err(io_err)?;
    writeln!(w, "# patch={}", manifest.patch).map_err(io_err)?;
    writeln!(w, "# channels={}", manifest.channels.as_str()).map_err(io_err)?;
    writeln!(w, "# columns=path\tclassId\tazimuthDeg\televationDeg\tkind").map_err(io_err)?;
    for e in &manifest.entries {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            e.path,
            e.class_id,
            e.azimuth_deg,
            e.elevation_deg,
            e.kind.as_str()
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut header: Vec<(String, String)> = Vec::new();
    let mut entries = Vec::new();
    let mut first_line_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if !first_line_seen {
            if line.trim() != "# posedesc-manifest v1" {
                return Err(parse_err(lineno, "not a posedesc manifest".into()));
            }
            first_line_seen = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                lineno,
                format!("expected 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(lineno, format!("bad {} {:?}", what, s)))
        };
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            class_id: fields[1]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad classId {:?}", fields[1])))?,
            azimuth_deg: num(fields[2], "azimuth")?,
            elevation_deg: num(fields[3], "elevation")?,
            kind: SampleKind::parse(fields[4])
                .ok_or_else(|| parse_err(lineno, format!("bad kind {:?}", fields[4])))?,
        });
    }
    let lookup = |key: &str| -> Result<String> {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::format(path, format!("manifest header missing {}", key)))
    };
    let channels_str = lookup("channels")?;
    Ok(Manifest {
        config_digest: lookup("config")?,
        seed: lookup("seed")?
            .parse()
            .map_err(|_| Error::format(path, "bad seed in manifest header"))?,
        distance_m: lookup("distance_m")?
            .parse()
            .map_err(|_| Error::format(path, "bad distance in manifest header"))?,
        window_m: lookup("window_m")?
            .parse()
            .map_err(|_| Error::format(path, "bad window in manifest header"))?,
        patch: lookup("patch")?
            .parse()
            .map_err(|_| Error::format(path, "bad patch in manifest header"))?,
        channels: ChannelMode::parse(&channels_str)
            .ok_or_else(|| Error::format(path, "bad channels in manifest header"))?,
        entries,
    })
}

/// Hex SHA-256 of the manifest file (stability check for determinism).
pub fn manifest_digest(path: &Path) -> Result<String> {
    crate::net::checkpoint::file_digest(path)
}

/// Renders every template, training and test sample to `out_dir` and writes
/// the manifest. Fully deterministic in (params, seed).
pub fn build_dataset(params: &DatasetParams, seed: u64, out_dir: &Path) -> Result<Manifest> {
    params.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let digest = params.digest();
    let intr = Intrinsics::framing(params.patch, params.distance_m, params.window_m);
    let mut entries = Vec::new();
    let mut test_rng = rng::stream(seed, "test-poses");

    for (class_id, object) in params.objects.iter().enumerate() {
        let mesh = make_primitive(object.kind, object.extent_m, rng::mix(seed, &[class_id as u64]))?;
        let obj_dir = out_dir.join(format!("{:02}_{}", class_id, object.name));
        fs::create_dir_all(&obj_dir).map_err(|e| Error::io(&obj_dir, e))?;

        let templates = hemisphere_poses(params.template_level, params.distance_m);
        for (pose_idx, pose) in templates.iter().enumerate() {
            let stem = format!("{:02}_{}/template_{:05}", class_id, object.name, pose_idx);
            render_sample(
                params,
                &mesh,
                pose,
                &intr,
                SampleKind::Template,
                0,
                out_dir,
                &stem,
            )?;
            entries.push(ManifestEntry {
                path: stem,
                class_id,
                azimuth_deg: pose.azimuth_deg,
                elevation_deg: pose.elevation_deg,
                kind: SampleKind::Template,
            });
        }

        let training = hemisphere_poses(params.training_level, params.distance_m);
        for (pose_idx, pose) in training.iter().enumerate() {
            for copy in 0..params.n_copies {
                let stem = format!(
                    "{:02}_{}/training_{:05}_{:02}",
                    class_id, object.name, pose_idx, copy
                );
                let noise_seed = rng::mix(
                    seed,
                    &[class_id as u64, 1, pose_idx as u64, copy as u64],
                );
                render_sample(
                    params,
                    &mesh,
                    pose,
                    &intr,
                    SampleKind::Training,
                    noise_seed,
                    out_dir,
                    &stem,
                )?;
                entries.push(ManifestEntry {
                    path: stem,
                    class_id,
                    azimuth_deg: pose.azimuth_deg,
                    elevation_deg: pose.elevation_deg,
                    kind: SampleKind::Training,
                });
            }
        }

        for test_idx in 0..params.n_test_per_object {
            let azimuth_deg = test_rng.random_range(0.0..360.0);
            let z: f64 = test_rng.random_range(0.0..1.0);
            let elevation_deg = z.asin() / std::f64::consts::PI * 180.0;
            let pose = Pose {
                azimuth_deg,
                elevation_deg,
                distance_m: params.distance_m,
            };
            let stem = format!("{:02}_{}/test_{:05}", class_id, object.name, test_idx);
            let noise_seed = rng::mix(seed, &[class_id as u64, 2, test_idx as u64]);
            render_sample(
                params,
                &mesh,
                &pose,
                &intr,
                SampleKind::Test,
                noise_seed,
                out_dir,
                &stem,
            )?;
            entries.push(ManifestEntry {
                path: stem,
                class_id,
                azimuth_deg,
                elevation_deg,
                kind: SampleKind::Test,
            });
        }
    }

    let manifest = Manifest {
        config_digest: digest,
        seed,
        distance_m: params.distance_m,
        window_m: params.window_m,
        patch: params.patch,
        channels: params.channels,
        entries,
    };
    write_manifest(&out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

/// Renders one sample's channels to disk.
///
/// Depth pipeline: render, fill background with a far plane 20 cm behind the
/// object center, then per kind — templates stay clean; training adds
/// Gaussian depth noise before normalization and fractal background noise
/// after; test maps additionally lose grazing-incidence and random speckle
/// pixels, which are median-inpainted before the noise stages.
/// Shaded pipeline: headlight Lambertian render; training/test add Gaussian
/// pixel noise and fractal background noise.
#[allow(clippy::too_many_arguments)]
fn render_sample(
    params: &DatasetParams,
    mesh: &Mesh,
    pose: &Pose,
    intr: &Intrinsics,
    kind: SampleKind,
    noise_seed: u64,
    root: &Path,
    stem: &str,
) -> Result<()> {
    let res = params.patch;
    let (depth_raw, mask) = render_depth(mesh, pose, res, intr)?;

    imageio::write_pgm(
        &root.join(format!("{}_mask.pgm", stem)),
        &Image {
            width: res,
            height: res,
            pixels: mask.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        },
    )?;

    if params.channels.has_depth() {
        let background = (params.distance_m + BACKGROUND_OFFSET_M) as f32;
        let mut depth_m = depth_raw.clone();
        for (v, &ok) in depth_m.pixels.iter_mut().zip(&mask.valid) {
            if !ok {
                *v = background;
            }
        }
        let normalized = match kind {
            SampleKind::Template => normalize_depth(&depth_m, params.distance_m as f32)?,
            SampleKind::Training => {
                let noisy =
                    add_gaussian_noise(&depth_m, params.depth_sigma_m, rng::mix(noise_seed, &[10]))?;
                let normalized = normalize_depth(&noisy, params.distance_m as f32)?;
                let with_bg = add_fractal_background(
                    &normalized,
                    &mask,
                    params.fractal_amplitude,
                    params.fractal_octaves,
                    rng::mix(noise_seed, &[11]),
                )?;
                clamp_unit(with_bg)
            }
            SampleKind::Test => {
                let (incidence, _) = render_incidence(mesh, pose, res, intr)?;
                let grazing_cos = params.grazing_limit_deg.to_radians().cos();
                let mut holes = Mask {
                    width: res,
                    height: res,
                    valid: vec![true; res * res],
                };
                let mut speckle_rng = rng::from_mixed(rng::mix(noise_seed, &[12]));
                for i in 0..res * res {
                    if mask.valid[i] {
                        if incidence[i] < grazing_cos {
                            holes.valid[i] = false;
                        }
                        if speckle_rng.random_range(0.0..1.0) < params.speckle_fraction {
                            holes.valid[i] = false;
                        }
                    }
                }
                let inpainted = median_inpaint(&depth_m, &holes)?;
                let noisy = add_gaussian_noise(
                    &inpainted,
                    params.depth_sigma_m,
                    rng::mix(noise_seed, &[10]),
                )?;
                let normalized = normalize_depth(&noisy, params.distance_m as f32)?;
                let with_bg = add_fractal_background(
                    &normalized,
                    &mask,
                    params.fractal_amplitude,
                    params.fractal_octaves,
                    rng::mix(noise_seed, &[11]),
                )?;
                clamp_unit(with_bg)
            }
        };
        imageio::write_pfm(&root.join(format!("{}_depth.pfm", stem)), &normalized)?;
    }

    if params.channels.has_shaded() {
        let light = pose.view_vector();
        let (shaded_raw, _) = render_shaded(mesh, pose, res, intr, &light)?;
        let shaded = match kind {
            SampleKind::Template => shaded_raw,
            SampleKind::Training | SampleKind::Test => {
                let noisy = add_gaussian_noise(
                    &shaded_raw,
                    params.intensity_sigma,
                    rng::mix(noise_seed, &[20]),
                )?;
                add_fractal_background(
                    &noisy,
                    &mask,
                    params.fractal_amplitude,
                    params.fractal_octaves,
                    rng::mix(noise_seed, &[21]),
                )?
            }
        };
        imageio::write_pgm(&root.join(format!("{}_shade.pgm", stem)), &shaded)?;
    }
    Ok(())
}

fn clamp_unit(mut image: Image) -> Image {
    for v in &mut image.pixels {
        *v = v.clamp(-1.0, 1.0);
    }
    image
}

/// A sample loaded back from disk, ready for the network.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub image: Tensor<f32>,
    pub class_id: usize,
    pub pose: Pose,
    pub kind: SampleKind,
    /// Index of the entry in the manifest it was loaded from.
    pub manifest_row: usize,
}

/// Loads one sample's channels as a CHW tensor (depth first, then shaded
/// intensity normalized to zero mean / unit variance).
pub fn load_sample_image(root: &Path, manifest: &Manifest, entry: &ManifestEntry) -> Result<Tensor<f32>> {
    let res = manifest.patch;
    let mut data = Vec::with_capacity(manifest.channels.channels() * res * res);
    if manifest.channels.has_depth() {
        let depth = imageio::read_pfm(&root.join(format!("{}_depth.pfm", entry.path)))?;
        if depth.width != res || depth.height != res {
            return Err(Error::format(
                root.join(format!("{}_depth.pfm", entry.path)),
                format!("expected {0}x{0} patch, got {1}x{2}", res, depth.width, depth.height),
            ));
        }
        data.extend_from_slice(&depth.pixels);
    }
    if manifest.channels.has_shaded() {
        let shade = imageio::read_pgm(&root.join(format!("{}_shade.pgm", entry.path)))?;
        if shade.width != res || shade.height != res {
            return Err(Error::format(
                root.join(format!("{}_shade.pgm", entry.path)),
                format!("expected {0}x{0} patch, got {1}x{2}", res, shade.width, shade.height),
            ));
        }
        data.extend_from_slice(&normalize_intensity(&shade).pixels);
    }
    Tensor::from_vec(&[manifest.channels.channels(), res, res], data)
}

/// Loads every manifest entry of the wanted kinds, preserving manifest order.
pub fn load_samples(
    root: &Path,
    manifest: &Manifest,
    want: impl Fn(&ManifestEntry) -> bool,
) -> Result<Vec<LoadedSample>> {
    let mut out = Vec::new();
    for (row, entry) in manifest.entries.iter().enumerate() {
        if !want(entry) {
            continue;
        }
        out.push(LoadedSample {
            image: load_sample_image(root, manifest, entry)?,
            class_id: entry.class_id,
            pose: manifest.pose_of(entry),
            kind: entry.kind,
            manifest_row: row,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_params() -> DatasetParams {
        DatasetParams {
            objects: vec![
                ObjectSpec {
                    name: "box".into(),
                    kind: PrimitiveKind::Box,
                    symmetry: SymmetryClass::Symmetric180,
                    extent_m: 0.12,
                },
                ObjectSpec {
                    name: "cone".into(),
                    kind: PrimitiveKind::Cone,
                    symmetry: SymmetryClass::RotationInvariant,
                    extent_m: 0.12,
                },
            ],
            template_level: 0,
            training_level: 1,
            n_copies: 2,
            n_test_per_object: 3,
            distance_m: 0.6,
            window_m: 0.4,
            patch: 16,
            channels: ChannelMode::Both,
            depth_sigma_m: 0.003,
            intensity_sigma: 0.02,
            fractal_amplitude: 0.5,
            fractal_octaves: 4,
            speckle_fraction: 0.05,
            grazing_limit_deg: 80.0,
        }
    }

    #[test]
    fn manifest_counts_match_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let params = tiny_params();
        let manifest = build_dataset(&params, 7, dir.path()).unwrap();
        // 2 objects x (6 templates + 2*26 training + 3 test)
        assert_eq!(manifest.entries.len(), 2 * (6 + 52 + 3));
        let training_of_first_pose = manifest
            .entries
            .iter()
            .filter(|e| e.kind == SampleKind::Training && e.class_id == 0)
            .count();
        assert_eq!(training_of_first_pose, 52);
        // Every training pose appears nCopies times.
        let mut per_pose: std::collections::HashMap<(u64, u64), usize> = Default::default();
        for e in &manifest.entries {
            if e.kind == SampleKind::Training && e.class_id == 0 {
                *per_pose
                    .entry((e.azimuth_deg.to_bits(), e.elevation_deg.to_bits()))
                    .or_insert(0) += 1;
            }
        }
        assert_eq!(per_pose.len(), 26);
        assert!(per_pose.values().all(|&c| c == 2));
    }

    #[test]
    fn build_is_deterministic_and_templates_are_clean() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let params = tiny_params();
        build_dataset(&params, 42, dir_a.path()).unwrap();
        build_dataset(&params, 42, dir_b.path()).unwrap();
        let da = manifest_digest(&dir_a.path().join(MANIFEST_NAME)).unwrap();
        let db = manifest_digest(&dir_b.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(da, db);

        let sample_rel = "00_box/training_00003_01_depth.pfm";
        let bytes_a = std::fs::read(dir_a.path().join(sample_rel)).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join(sample_rel)).unwrap();
        assert_eq!(bytes_a, bytes_b);

        // Template depth equals a direct clean render, bitwise.
        let manifest = read_manifest(&dir_a.path().join(MANIFEST_NAME)).unwrap();
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.kind == SampleKind::Template && e.class_id == 0)
            .unwrap();
        let mesh = make_primitive(
            params.objects[0].kind,
            params.objects[0].extent_m,
            rng::mix(42, &[0]),
        )
        .unwrap();
        let intr = Intrinsics::framing(params.patch, params.distance_m, params.window_m);
        let pose = manifest.pose_of(entry);
        let (depth, mask) = render_depth(&mesh, &pose, params.patch, &intr).unwrap();
        let mut depth_m = depth;
        for (v, &ok) in depth_m.pixels.iter_mut().zip(&mask.valid) {
            if !ok {
                *v = (params.distance_m + BACKGROUND_OFFSET_M) as f32;
            }
        }
        let expected = normalize_depth(&depth_m, params.distance_m as f32).unwrap();
        let stored = imageio::read_pfm(&dir_a.path().join(format!("{}_depth.pfm", entry.path)))
            .unwrap();
        let bits = |im: &Image| -> Vec<u32> { im.pixels.iter().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&expected), bits(&stored));
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let params = tiny_params();
        let built = build_dataset(&params, 3, dir.path()).unwrap();
        let read = read_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(read.config_digest, built.config_digest);
        assert_eq!(read.seed, 3);
        assert_eq!(read.patch, built.patch);
        assert_eq!(read.channels, built.channels);
        assert_eq!(read.entries, built.entries);
    }

    #[test]
    fn loaded_samples_have_expected_shape_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let params = tiny_params();
        let manifest = build_dataset(&params, 11, dir.path()).unwrap();
        let samples =
            load_samples(dir.path(), &manifest, |e| e.kind == SampleKind::Test).unwrap();
        assert_eq!(samples.len(), 6);
        for s in &samples {
            assert_eq!(s.image.shape(), &[2, 16, 16]);
            let depth = &s.image.data()[0..256];
            assert!(depth.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
