//! Single-stage subcommands on explicit input and output paths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rooffit::eval::{evaluate, EvalReport};
use rooffit::io::{read_point_cloud, write_point_cloud};
use rooffit::model::label_of;
use rooffit::ransac::FitResult;
use rooffit::segment::{export_cluster, load_labels};
use rooffit::synth::generate_training_set;
use rooffit::synth::village::{generate_village, VillageConfig};
use rooffit::{PointCloud, RasterGrid};

use crate::config::RunConfig;
use crate::pipeline;
use crate::run::{building_name, cluster_name, id_from_path, read_cluster, read_fits, write_json, DTM, PREPROCESSED};

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn preprocess(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    create(out)?;
    let cloud = read_point_cloud(input)?;
    let (clean, dtm) = pipeline::preprocess(&cloud, &cfg.settings.preprocess)?;
    write_point_cloud(&clean, out.join(PREPROCESSED))?;
    dtm.write(out.join(DTM))?;
    println!("{} points, dtm {}x{}", clean.len(), dtm.width, dtm.height);
    Ok(())
}

pub fn cluster(cfg: &RunConfig, input: &Path, mask: &Path, dtm: &Path, out: &Path) -> Result<()> {
    create(out)?;
    let cloud = read_point_cloud(input)?;
    let clusters = pipeline::cluster(&cloud, &RasterGrid::read(mask)?, &RasterGrid::read(dtm)?, &cfg.settings.cluster)?;
    for c in &clusters {
        let p = out.join(cluster_name(c.id) + ".txt");
        write_point_cloud(&c.cloud, &p)?;
        println!("{} {} points", p.display(), c.cloud.len());
    }
    Ok(())
}

/// Geometric labels and normals for a cluster file, or for every cluster
/// file of a directory into the directory `out`.
pub fn segment(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    if input.is_dir() {
        create(out)?;
        return cluster_files(input)?
            .par_iter()
            .map(|f| segment_one(cfg, f, &out.join(f.file_name().unwrap_or_default())))
            .collect();
    }
    segment_one(cfg, input, out)
}

fn segment_one(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let c = read_cluster(input)?;
    let labeled = pipeline::segment(&c, cfg.settings.normals_k, &cfg.settings.fallback)?;
    write_point_cloud(&labeled.cloud, out)?;
    Ok(())
}

fn cluster_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort_by_key(|p| (id_from_path(p), p.clone()));
    Ok(files)
}

/// Copies cluster clouds, without labels, for an external labeler.
pub fn segment_export(input: &Path, out: &Path) -> Result<()> {
    create(out)?;
    for f in cluster_files(input)? {
        let c = read_cluster(&f)?;
        let p = out.join(cluster_name(c.id) + ".txt");
        export_cluster(&c, &p)?;
        println!("{}", p.display());
    }
    Ok(())
}

pub fn segment_import(cfg: &RunConfig, input: &Path, labels: &Path, out: &Path) -> Result<()> {
    let c = read_cluster(input)?;
    let seg = load_labels(&c, labels)?;
    let labeled = pipeline::attach_labels(&c, &seg, cfg.settings.normals_k)?;
    write_point_cloud(&labeled.cloud, out)?;
    Ok(())
}

/// One line per fit: label, primitive, inlier count, score, mse, level.
pub fn format_fits(fits: &[FitResult]) -> String {
    let mut s = String::new();
    for (k, f) in fits.iter().enumerate() {
        let _ = writeln!(
            s,
            "fit {k} label={} inliers={} score={:.3} mse={:.6} level={} primitive={:?}",
            label_of(&f.primitive),
            f.inliers.len(),
            f.score,
            f.mse,
            f.level,
            f.primitive.shape
        );
    }
    s
}

pub fn fit(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let c = read_cluster(input)?;
    if c.cloud.labels().is_none() {
        bail!("{} has no label column; run segment or segment-import first", input.display());
    }
    let fits = pipeline::fit(&c, &cfg.seeded_settings().ransac)?;
    write_json(&fits, out)?;
    print!("{}", format_fits(&fits));
    Ok(())
}

pub fn assemble(cfg: &RunConfig, input: &Path, fits: &Path, dtm: &Path, out: &Path) -> Result<()> {
    create(out)?;
    let c = read_cluster(input)?;
    let model = pipeline::assemble(&c, &read_fits(fits)?, &RasterGrid::read(dtm)?, &cfg.settings.model)?;
    let name = building_name(c.id);
    write_json(&model, &out.join(name.clone() + ".json"))?;
    model.mesh.write(out.join(name.clone() + ".obj"))?;
    println!(
        "{name}: {} roofs, {} facades, {} triangles",
        model.roofs.len(),
        model.facades.len(),
        model.mesh.faces.len()
    );
    Ok(())
}

pub fn eval(
    pred_mask: &Path,
    pred_dsm: &Path,
    truth_mask: &Path,
    truth_dsm: &Path,
    z_tolerance: f64,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let report = evaluate(
        &RasterGrid::read(pred_mask)?,
        &RasterGrid::read(pred_dsm)?,
        &RasterGrid::read(truth_mask)?,
        &RasterGrid::read(truth_dsm)?,
        z_tolerance,
    )?;
    if let Some(p) = out {
        std::fs::write(p, report.format()).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", report.format());
    Ok(report)
}

fn clouds_in(dir: &Path) -> Result<Vec<PointCloud>> {
    cluster_files(dir)?.iter().map(|p| Ok(read_point_cloud(p)?)).collect()
}

/// Training set from source roofs in `flat` and `sloped` directories, or
/// from the roofs of a generated village when none are given.
pub fn synth(count: usize, seed: u64, flat: Option<&Path>, sloped: Option<&Path>, out: &Path) -> Result<()> {
    let (flats, slopes) = match (flat, sloped) {
        (Some(f), Some(s)) => (clouds_in(f)?, clouds_in(s)?),
        (None, None) => generate_village(&VillageConfig {
            seed,
            ..Default::default()
        })?
        .source_roofs(),
        _ => bail!("give both --flat and --sloped, or neither"),
    };
    let manifest = generate_training_set(&flats, &slopes, count, out, seed)?;
    let per = manifest.per_class();
    println!(
        "{} samples (flat {}, sloped {}, cylindrical {}, spherical {}) in {}",
        manifest.entries.len(),
        per[0],
        per[1],
        per[2],
        per[3],
        out.display()
    );
    Ok(())
}

pub const SCENE_CONFIG: &str = "rooffit.cfg";

/// Writes a synthetic village with its truth rasters and a config to run
/// the pipeline on it.
pub fn synth_scene(seed: u64, out: &Path) -> Result<()> {
    create(out)?;
    let v = generate_village(&VillageConfig {
        seed,
        ..Default::default()
    })?;
    let kinds: Vec<_> = v.buildings.iter().map(|b| format!("{:?}", b.kind)).collect();
    write_point_cloud(&v.cloud, out.join("cloud.txt"))?;
    v.mask.write(out.join("mask.asc"))?;
    v.truth_mask.write(out.join("truth_mask.asc"))?;
    v.truth_dsm.write(out.join("truth_dsm.asc"))?;
    let cfg = format!(
        "cloud = cloud.txt\nmask = mask.asc\ntruth_mask = truth_mask.asc\ntruth_dsm = truth_dsm.asc\nout = run\nseed = {seed}\n"
    );
    std::fs::write(out.join(SCENE_CONFIG), cfg)?;
    println!(
        "{} points, {} roof points, buildings: {}",
        v.cloud.len(),
        v.roof_labels.iter().flatten().count(),
        kinds.join(" ")
    );
    Ok(())
}
