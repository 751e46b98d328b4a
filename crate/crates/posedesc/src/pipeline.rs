//! End-to-end commands shared by the CLI and the acceptance tests: dataset
//! generation, training, embedding, evaluation, the baseline and report
//! emission. Every command is a pure function of (config, seed, inputs).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hog::{stacked_hog, HogConfig};
use crate::net::checkpoint::{file_digest, load_checkpoint, save_checkpoint};
use crate::net::{NetworkSpec, Parameters};
use crate::retrieval::{
    accuracy_curve, angle_distance_histogram, class_separation_ratios, clip_ratio, embed_all,
    read_db, write_db, DbRow, DescriptorDb, QuerySample, Similarity,
};
use crate::scene::dataset::{
    build_dataset, load_samples, read_manifest, LoadedSample, Manifest, SampleKind, MANIFEST_NAME,
};
use crate::scene::SymmetryClass;
use crate::tensor::Tensor;
use crate::trainer::batch::PoolMeta;
use crate::trainer::{train, EpochStats, TrainInputs};

/// Report k values and angle thresholds (degrees).
pub const REPORT_KS: [usize; 2] = [1, 22];
pub const REPORT_THRESHOLDS: [f64; 4] = [5.0, 20.0, 40.0, 180.0];

/// Fixed file layout under one output directory.
#[derive(Clone, Debug)]
pub struct OutLayout {
    pub root: PathBuf,
}

impl OutLayout {
    pub fn new(root: &Path) -> Self {
        OutLayout {
            root: root.to_path_buf(),
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join(MANIFEST_NAME)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint.pdsc")
    }

    pub fn training_log(&self) -> PathBuf {
        self.root.join("training_log.tsv")
    }

    pub fn templates_db(&self, digest: &str) -> PathBuf {
        self.root.join(format!("templates_{}.pddb", short(digest)))
    }

    pub fn accuracy(&self, digest: &str) -> PathBuf {
        self.root.join(format!("accuracy_{}.tsv", short(digest)))
    }

    pub fn ratios(&self, digest: &str) -> PathBuf {
        self.root.join(format!("ratios_{}.tsv", short(digest)))
    }

    pub fn histogram(&self, class_name: &str, digest: &str) -> PathBuf {
        self.root
            .join(format!("hist_{}_{}.tsv", class_name, short(digest)))
    }

    pub fn hog_templates_db(&self) -> PathBuf {
        self.root.join("templates_hog.pddb")
    }

    pub fn hog_accuracy(&self) -> PathBuf {
        self.root.join("accuracy_hog.tsv")
    }

    pub fn hog_ratios(&self) -> PathBuf {
        self.root.join("ratios_hog.tsv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn loo_metrics(&self, name: &str) -> PathBuf {
        self.root.join(format!("loo_{}.tsv", name))
    }

    pub fn loo_checkpoint(&self, name: &str) -> PathBuf {
        self.root.join(format!("loo_{}_checkpoint.pdsc", name))
    }

    pub fn provenance(&self, command: &str) -> PathBuf {
        self.root.join(format!("provenance_{}.tsv", command))
    }
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

fn write_provenance(
    layout: &OutLayout,
    command: &str,
    cfg: &Config,
    seed: Option<u64>,
) -> Result<()> {
    let path = layout.provenance(command);
    let mut text = String::from("# posedesc-provenance v1\n");
    text.push_str(&format!("command={}\n", command));
    text.push_str(&format!("configDigest={}\n", cfg.digest()));
    if let Some(s) = seed {
        text.push_str(&format!("seed={}\n", s));
    }
    text.push_str(&format!(
        "package=posedesc {}\n",
        env!("CARGO_PKG_VERSION")
    ));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn symmetries_of(cfg: &Config) -> Vec<SymmetryClass> {
    cfg.dataset.objects.iter().map(|o| o.symmetry).collect()
}

/// Builds the dataset under `out/dataset`.
pub fn gen_data(cfg: &Config, seed: u64, out: &Path) -> Result<Manifest> {
    let layout = OutLayout::new(out);
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    let manifest = build_dataset(&cfg.dataset, seed, &layout.dataset_dir())?;
    write_provenance(&layout, "gen-data", cfg, Some(seed))?;
    Ok(manifest)
}

fn read_matching_manifest(cfg: &Config, layout: &OutLayout) -> Result<Manifest> {
    let manifest = read_manifest(&layout.manifest())?;
    let expected = cfg.dataset.digest();
    if manifest.config_digest != expected {
        return Err(Error::Config(format!(
            "dataset at {} was built with a different dataset config; regenerate it",
            layout.dataset_dir().display()
        )));
    }
    Ok(manifest)
}

struct Pool {
    meta: PoolMeta,
    template_images: Vec<Tensor<f32>>,
    training_images: Vec<Tensor<f32>>,
    templates: Vec<LoadedSample>,
}

/// Loads templates and training samples, optionally excluding one class from
/// the training pool (its templates are still returned for evaluation).
fn load_pool(
    cfg: &Config,
    manifest: &Manifest,
    dataset_dir: &Path,
    exclude_class: Option<usize>,
) -> Result<Pool> {
    let templates = load_samples(dataset_dir, manifest, |e| e.kind == SampleKind::Template)?;
    let training = load_samples(dataset_dir, manifest, |e| {
        e.kind == SampleKind::Training && Some(e.class_id) != exclude_class
    })?;
    let n_classes = cfg.dataset.objects.len();
    // Remap class ids when one class is held out so they stay contiguous.
    let kept: Vec<usize> = (0..n_classes)
        .filter(|&c| Some(c) != exclude_class)
        .collect();
    let remap = |c: usize| kept.iter().position(|&k| k == c).unwrap();
    let symmetries: Vec<SymmetryClass> = kept
        .iter()
        .map(|&c| cfg.dataset.objects[c].symmetry)
        .collect();
    let tpl_kept: Vec<&LoadedSample> = templates
        .iter()
        .filter(|s| Some(s.class_id) != exclude_class)
        .collect();
    let meta = PoolMeta::new(
        kept.len(),
        symmetries,
        tpl_kept
            .iter()
            .map(|s| (remap(s.class_id), s.pose))
            .collect(),
        training.iter().map(|s| (remap(s.class_id), s.pose)).collect(),
    )?;
    Ok(Pool {
        meta,
        template_images: tpl_kept.iter().map(|s| s.image.clone()).collect(),
        training_images: training.iter().map(|s| s.image.clone()).collect(),
        templates,
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint_digest: String,
    pub epochs_logged: usize,
    pub aborted: Option<String>,
}

fn write_training_log(path: &Path, cfg: &Config, log: &[EpochStats]) -> Result<()> {
    let mut text = String::from("# posedesc-training-log v1\n");
    text.push_str("# columns=epoch\tlr\ttripletLoss\tpairLoss\tregTerm\twallTimeSec\n");
    text.push_str("# tripletLoss and pairLoss are per-item means within each epoch\n");
    text.push_str(&format!(
        "# phases: initial={} bootstrap={}x{} final={}\n",
        cfg.schedule.initial_epochs,
        cfg.schedule.bootstrap_rounds,
        cfg.schedule.epochs_per_bootstrap,
        cfg.schedule.final_epochs
    ));
    for e in log {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.epoch, e.lr, e.triplet_loss, e.pair_loss, e.reg_term, e.wall_time_sec
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains on the generated dataset and writes checkpoint plus log.
pub fn train_cmd(cfg: &Config, seed: u64, out: &Path) -> Result<TrainSummary> {
    let layout = OutLayout::new(out);
    let manifest = read_matching_manifest(cfg, &layout)?;
    let pool = load_pool(cfg, &manifest, &layout.dataset_dir(), None)?;
    let spec = cfg.network_spec()?;
    let mut schedule = cfg.schedule.clone();
    schedule.seed = seed;
    let outcome = train(
        &TrainInputs {
            meta: &pool.meta,
            template_images: &pool.template_images,
            training_images: &pool.training_images,
        },
        &spec,
        &cfg.loss_config::<f32>(),
        &schedule,
    )?;
    save_checkpoint(&layout.checkpoint(), &spec, &outcome.params)?;
    write_training_log(&layout.training_log(), cfg, &outcome.log)?;
    write_provenance(&layout, "train", cfg, Some(seed))?;
    Ok(TrainSummary {
        checkpoint_digest: file_digest(&layout.checkpoint())?,
        epochs_logged: outcome.log.len(),
        aborted: outcome.aborted,
    })
}

/// Embeds all templates with the trained network into a descriptor database.
pub fn embed_cmd(cfg: &Config, out: &Path) -> Result<PathBuf> {
    let layout = OutLayout::new(out);
    let (spec, params) = load_checkpoint(&layout.checkpoint())?;
    let digest = file_digest(&layout.checkpoint())?;
    let manifest = read_matching_manifest(cfg, &layout)?;
    let templates = load_samples(&layout.dataset_dir(), &manifest, |e| {
        e.kind == SampleKind::Template
    })?;
    let db = embed_all(&spec, &params, &templates, &digest, manifest.distance_m)?;
    let path = layout.templates_db(&digest);
    write_db(&path, &db)?;
    write_provenance(&layout, "embed", cfg, None)?;
    Ok(path)
}

fn embed_queries(
    spec: &NetworkSpec,
    params: &Parameters<f32>,
    samples: &[LoadedSample],
) -> Result<Vec<QuerySample>> {
    samples
        .iter()
        .map(|s| {
            let (descriptor, _) = crate::net::network_forward(spec, params, &s.image)?;
            Ok(QuerySample {
                descriptor,
                class_id: s.class_id,
                pose: s.pose,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    /// (k, accuracy per REPORT_THRESHOLDS entry).
    pub accuracy: Vec<(usize, Vec<f64>)>,
    pub n_queries: usize,
}

impl EvalSummary {
    /// Accuracy at (k, threshold), if that curve was computed.
    pub fn at(&self, k: usize, threshold: f64) -> Option<f64> {
        let col = REPORT_THRESHOLDS.iter().position(|&t| t == threshold)?;
        self.accuracy
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, curve)| curve[col])
    }

    /// Recognition rate: accuracy at the 180 degree threshold, k=1.
    pub fn recognition(&self) -> Option<f64> {
        self.at(1, 180.0)
    }
}

fn report_ks(db_rows: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = REPORT_KS.iter().map(|&k| k.min(db_rows)).collect();
    ks.dedup();
    ks
}

fn write_accuracy_file(
    path: &Path,
    digest: &str,
    rows: &[(usize, Vec<f64>)],
) -> Result<()> {
    let mut text = String::from("# posedesc-accuracy v1\n");
    text.push_str(&format!("# checkpoint={}\n", digest));
    text.push_str("# columns=k\tthresholdDeg\taccuracy\n");
    for (k, curve) in rows {
        for (t, a) in REPORT_THRESHOLDS.iter().zip(curve) {
            text.push_str(&format!("{}\t{}\t{}\n", k, t, a));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_ratios_file(path: &Path, digest: &str, ratios: &[f64]) -> Result<()> {
    let mut text = String::from("# posedesc-ratios v1\n");
    text.push_str(&format!("# checkpoint={}\n", digest));
    text.push_str("# columns=ratio\tclipped\n");
    for &r in ratios {
        text.push_str(&format!("{}\t{}\n", r, clip_ratio(r)));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn render_edges(edges: &[f64]) -> String {
    edges
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn eval_against_db(
    cfg: &Config,
    layout: &OutLayout,
    db: &DescriptorDb,
    queries: &[QuerySample],
    digest: &str,
    accuracy_path: &Path,
    ratios_path: &Path,
    with_histograms: bool,
) -> Result<EvalSummary> {
    let symmetries = symmetries_of(cfg);
    let mut accuracy = Vec::new();
    for k in report_ks(db.rows.len()) {
        let curve = accuracy_curve(db, queries, &symmetries, k, &REPORT_THRESHOLDS)?;
        accuracy.push((k, curve));
    }
    write_accuracy_file(accuracy_path, digest, &accuracy)?;
    let ratios = class_separation_ratios(db, queries)?;
    write_ratios_file(ratios_path, digest, &ratios)?;
    if with_histograms {
        for (class_id, object) in cfg.dataset.objects.iter().enumerate() {
            let class_queries: Vec<QuerySample> = queries
                .iter()
                .filter(|q| q.class_id == class_id)
                .cloned()
                .collect();
            if class_queries.is_empty() {
                continue;
            }
            let h = angle_distance_histogram(
                db,
                &class_queries,
                class_id,
                object.symmetry,
                9,
                16,
            )?;
            let path = layout.histogram(&object.name, digest);
            let mut text = String::from("# posedesc-angle-distance-histogram v1\n");
            text.push_str(&format!("# checkpoint={}\n", digest));
            text.push_str(&format!("# class={}\n", object.name));
            text.push_str(&format!("# angleEdges={}\n", render_edges(&h.angle_edges)));
            text.push_str(&format!("# distEdges={}\n", render_edges(&h.dist_edges)));
            text.push_str("# rows=angle bins, columns=distance bins\n");
            for row in h.counts.chunks(h.dist_edges.len() - 1) {
                let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                text.push_str(&line.join("\t"));
                text.push('\n');
            }
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(EvalSummary {
        accuracy,
        n_queries: queries.len(),
    })
}

/// Evaluates the trained network on the test split against the template
/// database written by `embed`.
pub fn eval_cmd(cfg: &Config, out: &Path) -> Result<EvalSummary> {
    let layout = OutLayout::new(out);
    let (spec, params) = load_checkpoint(&layout.checkpoint())?;
    let digest = file_digest(&layout.checkpoint())?;
    let db = read_db(&layout.templates_db(&digest))?;
    if db.network_digest != digest {
        return Err(Error::Config(
            "template database was embedded with a different checkpoint".into(),
        ));
    }
    let manifest = read_matching_manifest(cfg, &layout)?;
    let tests = load_samples(&layout.dataset_dir(), &manifest, |e| {
        e.kind == SampleKind::Test
    })?;
    let queries = embed_queries(&spec, &params, &tests)?;
    let summary = eval_against_db(
        cfg,
        &layout,
        &db,
        &queries,
        &digest,
        &layout.accuracy(&digest),
        &layout.ratios(&digest),
        true,
    )?;
    write_provenance(&layout, "eval", cfg, None)?;
    Ok(summary)
}

/// Evaluates the stacked-gradient-histogram baseline on the identical split.
pub fn baseline_cmd(cfg: &Config, out: &Path) -> Result<EvalSummary> {
    let layout = OutLayout::new(out);
    let manifest = read_matching_manifest(cfg, &layout)?;
    let hog_cfg = HogConfig {
        window: cfg.dataset.patch,
        ..HogConfig::default()
    };
    let digest = format!("hog-w{}c{}b{}", hog_cfg.window, hog_cfg.cell, hog_cfg.bins);
    let templates = load_samples(&layout.dataset_dir(), &manifest, |e| {
        e.kind == SampleKind::Template
    })?;
    let mut rows = Vec::with_capacity(templates.len());
    for s in &templates {
        rows.push(DbRow {
            class_id: s.class_id,
            azimuth_deg: s.pose.azimuth_deg,
            elevation_deg: s.pose.elevation_deg,
            kind: s.kind,
            manifest_row: s.manifest_row as u32,
            descriptor: stacked_hog(&s.image, &hog_cfg)?,
        });
    }
    let dim = rows.first().map(|r| r.descriptor.len()).unwrap_or(0);
    let db = DescriptorDb {
        similarity: Similarity::Dot,
        network_digest: digest.clone(),
        distance_m: manifest.distance_m,
        dim,
        rows,
    };
    write_db(&layout.hog_templates_db(), &db)?;
    let tests = load_samples(&layout.dataset_dir(), &manifest, |e| {
        e.kind == SampleKind::Test
    })?;
    let queries: Vec<QuerySample> = tests
        .iter()
        .map(|s| {
            Ok(QuerySample {
                descriptor: stacked_hog(&s.image, &hog_cfg)?,
                class_id: s.class_id,
                pose: s.pose,
            })
        })
        .collect::<Result<_>>()?;
    let summary = eval_against_db(
        cfg,
        &layout,
        &db,
        &queries,
        &digest,
        &layout.hog_accuracy(),
        &layout.hog_ratios(),
        false,
    )?;
    write_provenance(&layout, "baseline", cfg, None)?;
    Ok(summary)
}

/// Parses an accuracy metrics file back into (k, threshold) -> accuracy.
fn read_accuracy_file(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "expected k\tthreshold\taccuracy".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("bad number {:?}", s),
            })
        };
        rows.push((parse(fields[0])? as usize, parse(fields[1])?, parse(fields[2])?));
    }
    Ok(rows)
}

/// Renders the summary table: ours and the baseline at k=1 and k=22 across
/// the four thresholds. Missing metric files are listed as absent.
pub fn report_cmd(out: &Path) -> Result<String> {
    let layout = OutLayout::new(out);
    let modality = read_manifest(&layout.manifest())
        .map(|m| m.channels.as_str().to_string())
        .unwrap_or_else(|_| "unknown".to_string());
    let learned = file_digest(&layout.checkpoint())
        .ok()
        .map(|d| layout.accuracy(&d));
    let mut text = format!("modality: {}\n", modality);
    text.push_str(&format!(
        "{:<12}{:>8}{:>8}{:>8}{:>8}\n",
        "", "5deg", "20deg", "40deg", "180deg"
    ));
    let sources: [(&str, Option<PathBuf>); 2] = [
        ("ours", learned),
        ("hog", Some(layout.hog_accuracy())),
    ];
    for (label, path) in sources {
        let rows = path
            .as_ref()
            .filter(|p| p.exists())
            .map(|p| read_accuracy_file(p))
            .transpose()?;
        for &k in &REPORT_KS {
            let row_label = format!("{} k={}", label, k);
            match &rows {
                Some(rows) => {
                    let mut cells = Vec::new();
                    for &t in &REPORT_THRESHOLDS {
                        let found = rows
                            .iter()
                            .find(|&&(rk, rt, _)| rk == k && rt == t)
                            .map(|&(_, _, a)| a);
                        cells.push(match found {
                            Some(a) => format!("{:.3}", a),
                            None => "absent".to_string(),
                        });
                    }
                    text.push_str(&format!(
                        "{:<12}{:>8}{:>8}{:>8}{:>8}\n",
                        row_label, cells[0], cells[1], cells[2], cells[3]
                    ));
                }
                None => {
                    text.push_str(&format!(
                        "{:<12}{:>8}{:>8}{:>8}{:>8}\n",
                        row_label, "absent", "absent", "absent", "absent"
                    ));
                }
            }
        }
    }
    let path = layout.report();
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}

#[derive(Clone, Debug)]
pub struct LooOutcome {
    pub held_out: String,
    /// Names of the classes the network was trained on.
    pub trained_classes: Vec<String>,
    pub held_out_recognition: f64,
    pub in_training_recognition: f64,
    pub metrics_path: PathBuf,
}

/// Trains with one class held out, then evaluates that class's test views
/// against a database holding every class's templates.
pub fn leave_one_out(cfg: &Config, seed: u64, out: &Path, held_out: &str) -> Result<LooOutcome> {
    let layout = OutLayout::new(out);
    let held_idx = cfg
        .dataset
        .objects
        .iter()
        .position(|o| o.name == held_out)
        .ok_or_else(|| Error::InvalidArgument(format!("no object named {:?}", held_out)))?;
    let manifest = read_matching_manifest(cfg, &layout)?;
    let pool = load_pool(cfg, &manifest, &layout.dataset_dir(), Some(held_idx))?;
    let spec = cfg.network_spec()?;
    let mut schedule = cfg.schedule.clone();
    schedule.seed = seed;
    let outcome = train(
        &TrainInputs {
            meta: &pool.meta,
            template_images: &pool.template_images,
            training_images: &pool.training_images,
        },
        &spec,
        &cfg.loss_config::<f32>(),
        &schedule,
    )?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::TrainingAborted {
            epoch: outcome.log.len(),
            message: reason,
        });
    }
    save_checkpoint(&layout.loo_checkpoint(held_out), &spec, &outcome.params)?;
    let digest = file_digest(&layout.loo_checkpoint(held_out))?;

    // Database over ALL templates, held-out class included.
    let db = embed_all(&spec, &outcome.params, &pool.templates, &digest, manifest.distance_m)?;
    let tests = load_samples(&layout.dataset_dir(), &manifest, |e| {
        e.kind == SampleKind::Test
    })?;
    let queries = embed_queries(&spec, &outcome.params, &tests)?;
    let symmetries = symmetries_of(cfg);
    let held_queries: Vec<QuerySample> = queries
        .iter()
        .filter(|q| q.class_id == held_idx)
        .cloned()
        .collect();
    let in_queries: Vec<QuerySample> = queries
        .iter()
        .filter(|q| q.class_id != held_idx)
        .cloned()
        .collect();
    let held_curve = accuracy_curve(&db, &held_queries, &symmetries, 1, &REPORT_THRESHOLDS)?;
    let in_curve = accuracy_curve(&db, &in_queries, &symmetries, 1, &REPORT_THRESHOLDS)?;
    let held_ratios = class_separation_ratios(&db, &held_queries)?;

    let path = layout.loo_metrics(held_out);
    let mut text = String::from("# posedesc-loo v1\n");
    text.push_str(&format!("# checkpoint={}\n", digest));
    text.push_str(&format!("# heldOut={}\n", held_out));
    text.push_str("# columns=scope\tthresholdDeg\taccuracy\n");
    for (t, a) in REPORT_THRESHOLDS.iter().zip(&held_curve) {
        text.push_str(&format!("heldOut\t{}\t{}\n", t, a));
    }
    for (t, a) in REPORT_THRESHOLDS.iter().zip(&in_curve) {
        text.push_str(&format!("inTraining\t{}\t{}\n", t, a));
    }
    text.push_str("# columns=ratio\tclipped\n");
    for r in &held_ratios {
        text.push_str(&format!("heldOutRatio\t{}\t{}\n", r, clip_ratio(*r)));
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let trained_classes = cfg
        .dataset
        .objects
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != held_idx)
        .map(|(_, o)| o.name.clone())
        .collect();
    Ok(LooOutcome {
        held_out: held_out.to_string(),
        trained_classes,
        held_out_recognition: held_curve[3],
        in_training_recognition: in_curve[3],
        metrics_path: path,
    })
}
