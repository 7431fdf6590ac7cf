//! The full pipeline over on-disk artifacts, one stage at a time.
//!
//! Every stage reads its inputs from the output directory and writes its
//! artifacts back there, so any stage can be resumed or inspected.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use rooffit::cluster::BuildingCluster;
use rooffit::eval::{evaluate, render_on, EvalReport};
use rooffit::io::{read_point_cloud, write_point_cloud};
use rooffit::model::{import_mesh, BuildingModel, Mesh};
use rooffit::ransac::FitResult;
use rooffit::segment::load_labels;
use rooffit::RasterGrid;

use crate::config::RunConfig;
use crate::manifest::{files_match, hash_files, resolve, sha256_hex, Manifest, StageRecord, Status};
use crate::pipeline;

pub const STAGES: [&str; 8] = ["load", "preprocess", "cluster", "segment", "fit", "assemble", "export", "eval"];

pub const PREPROCESSED: &str = "preprocessed.txt";
pub const DTM: &str = "dtm.asc";
pub const SCENE: &str = "scene.obj";
pub const REPORT: &str = "report.txt";
pub const SKIPPED: &str = "models/skipped.txt";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    pub stop_after: Option<String>,
}

pub fn cluster_name(id: usize) -> String {
    format!("cluster_{id:03}")
}

pub fn building_name(id: usize) -> String {
    format!("building_{id:03}")
}

/// Trailing number of a file stem such as `cluster_007`, else 0.
pub fn id_from_path(path: &Path) -> usize {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    digits.chars().rev().collect::<String>().parse().unwrap_or(0)
}

pub fn read_cluster(path: &Path) -> Result<BuildingCluster> {
    let cloud = read_point_cloud(path)?;
    Ok(BuildingCluster::from_cloud(id_from_path(path), cloud)?)
}

pub fn read_fits(path: &Path) -> Result<Vec<FitResult>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A building model from its JSON file and mesh.
pub fn read_model(json: &Path, obj: &Path) -> Result<BuildingModel> {
    let text = std::fs::read_to_string(json).with_context(|| format!("reading {}", json.display()))?;
    let mut model: BuildingModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
    model.mesh = import_mesh(obj)?;
    Ok(model)
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn params_hash(parts: &[&dyn std::fmt::Debug]) -> String {
    let text: Vec<String> = parts.iter().map(|p| format!("{p:?}")).collect();
    sha256_hex(text.join("\n").as_bytes())
}

struct Runner<'a> {
    out: &'a Path,
    previous: Option<Manifest>,
    manifest: Manifest,
}

impl Runner<'_> {
    /// Runs `body` unless a previous run recorded this stage with the same
    /// parameters and inputs and its outputs are still intact.
    fn stage(
        &mut self,
        name: &str,
        params: String,
        inputs: Vec<PathBuf>,
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<Vec<PathBuf>> {
        let start = Instant::now();
        let input_hashes = match hash_files(&inputs, self.out) {
            Ok(h) => h,
            Err(e) => return Err(self.fail(name, params, start, e)),
        };
        let reusable = self.previous.as_ref().and_then(|m| m.stage(name)).filter(|r| {
            r.status != Status::Failed && r.params == params && r.inputs == input_hashes && files_match(&r.outputs, self.out)
        });
        if let Some(r) = reusable {
            let outputs = r.outputs.clone();
            eprintln!("{name}: unchanged, skipped");
            self.manifest.stages.push(StageRecord {
                name: name.into(),
                status: Status::Skipped,
                params,
                inputs: input_hashes,
                outputs: outputs.clone(),
                seconds: 0.0,
                error: None,
            });
            self.manifest.write(self.out)?;
            let mut paths: Vec<PathBuf> = outputs.keys().map(|k| resolve(k, self.out)).collect();
            paths.sort_by_key(|p| (id_from_path(p), p.clone()));
            return Ok(paths);
        }
        let produced = match body() {
            Ok(p) => p,
            Err(e) => return Err(self.fail(name, params, start, e)),
        };
        let outputs = hash_files(&produced, self.out)?;
        let seconds = start.elapsed().as_secs_f64();
        eprintln!("{name}: done in {seconds:.2} s");
        self.manifest.stages.push(StageRecord {
            name: name.into(),
            status: Status::Ok,
            params,
            inputs: input_hashes,
            outputs,
            seconds,
            error: None,
        });
        self.manifest.write(self.out)?;
        Ok(produced)
    }

    fn fail(&mut self, name: &str, params: String, start: Instant, e: anyhow::Error) -> anyhow::Error {
        self.manifest.stages.push(StageRecord {
            name: name.into(),
            status: Status::Failed,
            params,
            inputs: Default::default(),
            outputs: Default::default(),
            seconds: start.elapsed().as_secs_f64(),
            error: Some(format!("{e:#}")),
        });
        self.manifest.failed_stage = Some(name.into());
        if let Err(w) = self.manifest.write(self.out) {
            eprintln!("could not write manifest: {w:#}");
        }
        e.context(format!("stage {name} failed"))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| anyhow!("config has no {key}"))
}

fn by_kind(paths: &[PathBuf], ext: &str) -> Vec<PathBuf> {
    paths
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .cloned()
        .collect()
}

/// Runs the pipeline described by `cfg` on a thread pool of `cfg.jobs`
/// workers. Returns the manifest and, when truth rasters are configured,
/// the evaluation report.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<(Manifest, Option<EvalReport>)> {
    if let Some(s) = &opts.stop_after {
        if !STAGES.contains(&s.as_str()) {
            bail!("unknown stage {s:?}, expected one of {}", STAGES.join(", "));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    pool.install(|| run_stages(cfg, opts))
}

fn run_stages(cfg: &RunConfig, opts: &RunOptions) -> Result<(Manifest, Option<EvalReport>)> {
    let out = required(&cfg.out, "out")?.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut r = Runner {
        out: &out,
        previous: if opts.resume { Manifest::read(&out) } else { None },
        manifest: Manifest::new(cfg.seed),
    };
    let s = cfg.seeded_settings();
    let stop = |name: &str| opts.stop_after.as_deref() == Some(name);
    let done = |r: Runner| Ok((r.manifest, None));

    // load
    let mut external = Vec::new();
    let checked = (|| -> Result<(PathBuf, PathBuf)> {
        let cloud = required(&cfg.cloud, "cloud")?.clone();
        let mask = required(&cfg.mask, "mask")?.clone();
        external.push(cloud.clone());
        external.push(mask.clone());
        if cfg.truth_mask.is_some() != cfg.truth_dsm.is_some() {
            bail!("truth_mask and truth_dsm must be given together");
        }
        external.extend(cfg.truth_mask.iter().chain(&cfg.truth_dsm).cloned());
        for p in &external {
            if !p.is_file() {
                bail!("input {} does not exist", p.display());
            }
        }
        Ok((cloud, mask))
    })();
    let (cloud_path, mask_path) = match checked {
        Ok(p) => p,
        Err(e) => return Err(r.fail("load", String::new(), Instant::now(), e)),
    };
    r.stage("load", params_hash(&[]), external.clone(), || {
        read_point_cloud(&cloud_path)?;
        RasterGrid::read(&mask_path)?;
        if let (Some(m), Some(d)) = (&cfg.truth_mask, &cfg.truth_dsm) {
            RasterGrid::read(m)?.check_geometry(&RasterGrid::read(d)?)?;
        }
        Ok(Vec::new())
    })?;
    if stop("load") {
        return done(r);
    }

    let pre_out = [out.join(PREPROCESSED), out.join(DTM)];
    r.stage("preprocess", params_hash(&[&s.preprocess]), vec![cloud_path.clone()], || {
        let cloud = read_point_cloud(&cloud_path)?;
        let (clean, dtm) = pipeline::preprocess(&cloud, &s.preprocess)?;
        write_point_cloud(&clean, &pre_out[0])?;
        dtm.write(&pre_out[1])?;
        Ok(pre_out.to_vec())
    })?;
    let [pre_path, dtm_path] = pre_out;
    if stop("preprocess") {
        return done(r);
    }

    let cluster_inputs = vec![pre_path.clone(), dtm_path.clone(), mask_path.clone()];
    let cluster_files = r.stage("cluster", params_hash(&[&s.cluster]), cluster_inputs, || {
        let cloud = read_point_cloud(&pre_path)?;
        let dtm = RasterGrid::read(&dtm_path)?;
        let mask = RasterGrid::read(&mask_path)?;
        let clusters = pipeline::cluster(&cloud, &mask, &dtm, &s.cluster)?;
        if clusters.is_empty() {
            bail!("no building clusters inside the mask");
        }
        let dir = out.join("clusters");
        fresh_dir(&dir)?;
        clusters
            .iter()
            .map(|c| {
                let p = dir.join(cluster_name(c.id) + ".txt");
                write_point_cloud(&c.cloud, &p)?;
                Ok(p)
            })
            .collect()
    })?;
    if stop("cluster") {
        return done(r);
    }

    let label_files: Option<Vec<PathBuf>> = cfg.labels.as_ref().map(|dir| {
        cluster_files
            .iter()
            .map(|c| dir.join(cluster_name(id_from_path(c)) + ".labels"))
            .collect()
    });
    let mut seg_inputs = cluster_files.clone();
    seg_inputs.extend(label_files.iter().flatten().cloned());
    let seg_params = params_hash(&[&s.normals_k, &s.fallback, &cfg.labels.is_some()]);
    let seg_files = r.stage("segment", seg_params, seg_inputs, || {
        let dir = out.join("segments");
        fresh_dir(&dir)?;
        cluster_files
            .par_iter()
            .enumerate()
            .map(|(k, path)| {
                let c = read_cluster(path)?;
                let labeled = match &label_files {
                    Some(files) => pipeline::attach_labels(&c, &load_labels(&c, &files[k])?, s.normals_k)?,
                    None => pipeline::segment(&c, s.normals_k, &s.fallback)?,
                };
                let p = dir.join(cluster_name(c.id) + ".txt");
                write_point_cloud(&labeled.cloud, &p)?;
                Ok(p)
            })
            .collect()
    })?;
    if stop("segment") {
        return done(r);
    }

    let fit_files = r.stage("fit", params_hash(&[&s.ransac]), seg_files.clone(), || {
        let dir = out.join("fits");
        fresh_dir(&dir)?;
        seg_files
            .par_iter()
            .map(|path| {
                let c = read_cluster(path)?;
                let fits = pipeline::fit(&c, &s.ransac).with_context(|| format!("fitting {}", path.display()))?;
                let p = dir.join(cluster_name(c.id) + ".json");
                write_json(&fits, &p)?;
                Ok(p)
            })
            .collect()
    })?;
    if stop("fit") {
        return done(r);
    }

    let mut asm_inputs = seg_files.clone();
    asm_inputs.extend(fit_files.iter().cloned());
    asm_inputs.push(dtm_path.clone());
    let model_files = r.stage("assemble", params_hash(&[&s.model]), asm_inputs, || {
        let dtm = RasterGrid::read(&dtm_path)?;
        fresh_dir(&out.join("models"))?;
        fresh_dir(&out.join("meshes"))?;
        let results: Vec<Result<std::result::Result<Vec<PathBuf>, String>>> = seg_files
            .par_iter()
            .zip(&fit_files)
            .map(|(seg, fit)| {
                let c = read_cluster(seg)?;
                let fits = read_fits(fit)?;
                match pipeline::assemble(&c, &fits, &dtm, &s.model) {
                    Ok(model) => {
                        let json = out.join("models").join(building_name(c.id) + ".json");
                        let obj = out.join("meshes").join(building_name(c.id) + ".obj");
                        write_json(&model, &json)?;
                        model.mesh.write(&obj)?;
                        Ok(Ok(vec![json, obj]))
                    }
                    Err(e) => Ok(Err(format!("{}: {e}", cluster_name(c.id)))),
                }
            })
            .collect();
        let mut produced = Vec::new();
        let mut skipped = String::new();
        for res in results {
            match res? {
                Ok(files) => produced.extend(files),
                Err(line) => {
                    eprintln!("skipped {line}");
                    skipped.push_str(&line);
                    skipped.push('\n');
                }
            }
        }
        if produced.is_empty() {
            bail!("no building could be reconstructed:\n{skipped}");
        }
        let skip_path = out.join(SKIPPED);
        std::fs::write(&skip_path, skipped)?;
        produced.push(skip_path);
        Ok(produced)
    })?;
    if stop("assemble") {
        return done(r);
    }

    let mut exp_inputs = model_files.clone();
    exp_inputs.extend([dtm_path.clone(), mask_path.clone()]);
    let render_mask = out.join("render").join("mask.asc");
    let render_dsm = out.join("render").join("dsm.asc");
    r.stage("export", params_hash(&[]), exp_inputs, || {
        let dtm = RasterGrid::read(&dtm_path)?;
        let template = RasterGrid::read(&mask_path)?;
        let jsons = by_kind(&model_files, "json");
        let objs = by_kind(&model_files, "obj");
        let mut scene = Mesh::new();
        let mut models = Vec::with_capacity(jsons.len());
        for (j, o) in jsons.iter().zip(&objs) {
            let m = read_model(j, o)?;
            scene.append(&m.mesh);
            models.push(m);
        }
        let (mask, dsm) = render_on(&models, &dtm, &template)?;
        fresh_dir(&out.join("render"))?;
        mask.write(&render_mask)?;
        dsm.write(&render_dsm)?;
        let scene_path = out.join(SCENE);
        scene.write(&scene_path)?;
        Ok(vec![scene_path, render_mask.clone(), render_dsm.clone()])
    })?;
    if stop("export") {
        return done(r);
    }

    let (Some(tm), Some(td)) = (&cfg.truth_mask, &cfg.truth_dsm) else {
        return done(r);
    };
    let eval_inputs = vec![render_mask.clone(), render_dsm.clone(), tm.clone(), td.clone()];
    let report_path = out.join(REPORT);
    r.stage("eval", params_hash(&[&cfg.z_tolerance]), eval_inputs, || {
        let report = evaluate(
            &RasterGrid::read(&render_mask)?,
            &RasterGrid::read(&render_dsm)?,
            &RasterGrid::read(tm)?,
            &RasterGrid::read(td)?,
            cfg.z_tolerance,
        )?;
        std::fs::write(&report_path, report.format())?;
        Ok(vec![report_path.clone()])
    })?;
    let text = std::fs::read_to_string(&report_path)?;
    let report = EvalReport::parse(&text, &report_path)?;
    Ok((r.manifest, Some(report)))
}
