//! Pipeline stages. Each reads its inputs from the [`Layout`] and writes its
//! outputs there; none depends on in-memory state from another.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shroomgen_core::annotate::{
    build_annotation_set, crop_fixed, crop_pixels, dataset_stats, tile_sahi, AnnotationSet, DatasetStats, Window,
};
use shroomgen_core::eval::{evaluate, fid, kid, load_features, load_predictions, EvalReport, KidResult};
use shroomgen_core::procgen::{variant_bank, BankConfig, MushroomMesh};
use shroomgen_core::render::io::{
    control_to_png16, depth_to_png16, encode_png16, encode_rgb_png, ids_to_png16, load_ids_png, load_png16,
};
use shroomgen_core::render::{depth_to_control_image, rasterize_with_bank, RenderOptions};
use shroomgen_core::rng;
use shroomgen_core::scene::{build_scene, scene_file_name, scene_seed, SceneDescriptor};
use shroomgen_genclient::{
    build_ablation_batch, pair_outputs, submit_blocking, DepthRef, JobManifest, MockConfig, MockServer,
    SubmitOptions, SubmitSummary,
};

use crate::config::{DepthSource, ProjectConfig};
use crate::error::CliError;
use crate::layout::{read, stem, write_if_changed, Layout, RenderKind, SceneIndex};

const KEY_JOB_SEED: u64 = 0x4A4F;
/// Bumped whenever render outputs change for identical inputs.
const RENDER_FORMAT: &str = "render-v1";

/// Settings shared by every stage of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ProjectConfig,
    pub layout: Layout,
    pub force: bool,
    pub dry_run: bool,
    /// Overrides the manifest endpoint.
    pub endpoint: Option<String>,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn elapsed(t: Instant) -> String {
    format!("{:.2}s", t.elapsed().as_secs_f64())
}

// Scenes

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenesSummary {
    pub count: usize,
    pub written: usize,
    pub mean_placements: f64,
}

pub fn gen_scenes(ctx: &Context, count: u64) -> Result<ScenesSummary, CliError> {
    let t = Instant::now();
    let cfg = ctx.config.scene_config();
    let master = ctx.config.master_seed;
    let dir = ctx.layout.scenes_dir();
    let results: Vec<(usize, bool)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = scene_seed(master, i);
            let d = build_scene(seed, &cfg)?;
            let bytes = d.to_json()?.into_bytes();
            let wrote = write_if_changed(&dir.join(d.file_name()), &bytes)?;
            Ok((d.placements.len(), wrote))
        })
        .collect::<Result<_, CliError>>()?;
    if count > 0 {
        let index = SceneIndex {
            master_seed: master,
            seeds: (0..count).map(|i| scene_seed(master, i)).collect(),
        };
        write_if_changed(&ctx.layout.scene_index(), &json_bytes(&index)?)?;
    }
    let total: usize = results.iter().map(|r| r.0).sum();
    let s = ScenesSummary {
        count: results.len(),
        written: results.iter().filter(|r| r.1).count(),
        mean_placements: if results.is_empty() { 0.0 } else { total as f64 / results.len() as f64 },
    };
    info!(
        "gen-scenes: {} scenes ({} written), {:.1} placements/scene, {}",
        s.count,
        s.written,
        s.mean_placements,
        elapsed(t)
    );
    Ok(s)
}

fn load_scene(layout: &Layout, seed: u64) -> Result<(SceneDescriptor, Vec<u8>), CliError> {
    let p = layout.scenes_dir().join(scene_file_name(seed));
    let bytes = read(&p)?;
    let s = std::str::from_utf8(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
    Ok((SceneDescriptor::from_json(s)?, bytes))
}

// Rendering

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderSummary {
    pub rendered: usize,
    pub skipped: usize,
    /// Mean distinct instance ids visible per render, over rendered scenes.
    pub mean_visible: f64,
}

/// Input and output hashes of one render, stored next to the images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RenderSidecar {
    input: String,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn render_kinds(preview: bool) -> Vec<RenderKind> {
    let mut k = vec![RenderKind::Depth, RenderKind::Ids, RenderKind::Control];
    if preview {
        k.push(RenderKind::Preview);
    }
    k
}

/// True when the sidecar matches `input` and every listed output exists
/// with the recorded hash.
fn render_is_current(layout: &Layout, image: &str, input: &str, kinds: &[RenderKind]) -> bool {
    let Ok(bytes) = std::fs::read(layout.render_sidecar(image)) else {
        return false;
    };
    let Ok(side) = serde_json::from_slice::<RenderSidecar>(&bytes) else {
        return false;
    };
    side.input == input
        && side.outputs.len() == kinds.len()
        && kinds.iter().all(|&k| {
            let p = layout.render_file(image, k);
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            side.outputs.get(&name).is_some_and(|h| std::fs::read(&p).is_ok_and(|b| &sha256_hex(&[&b]) == h))
        })
}

type Bank = (BankConfig, Vec<MushroomMesh<f64>>);

fn bank_for<'a>(banks: &'a [Bank], cfg: &BankConfig) -> &'a [MushroomMesh<f64>] {
    &banks.iter().find(|(c, _)| c == cfg).expect("bank prepared").1
}

pub fn render(ctx: &Context) -> Result<RenderSummary, CliError> {
    let t = Instant::now();
    let layout = &ctx.layout;
    let index = layout.load_scene_index()?;
    if index.seeds.is_empty() {
        return Err(CliError::Validation("scene index is empty".into()));
    }
    let preview = ctx.config.render.preview;
    let kinds = render_kinds(preview);
    let settings = format!("{RENDER_FORMAT} preview={preview}");

    // Hash every descriptor first so that missing inputs fail before any work.
    let scenes: Vec<(u64, String)> = index
        .seeds
        .par_iter()
        .map(|&seed| {
            let (_, bytes) = load_scene(layout, seed)?;
            Ok((seed, sha256_hex(&[settings.as_bytes(), &bytes])))
        })
        .collect::<Result<_, CliError>>()?;
    let todo: Vec<&(u64, String)> = scenes
        .iter()
        .filter(|(seed, input)| ctx.force || !render_is_current(layout, &render_name(*seed), input, &kinds))
        .collect();

    let mut banks: Vec<Bank> = Vec::new();
    for (seed, _) in &todo {
        let (d, _) = load_scene(layout, *seed)?;
        if !banks.iter().any(|(c, _)| *c == d.bank) {
            banks.push((d.bank, variant_bank::<f64>(&d.bank).map_err(|e| CliError::Validation(e.to_string()))?));
        }
    }

    let visible: Vec<usize> = todo
        .par_iter()
        .map(|(seed, input)| {
            let (d, _) = load_scene(layout, *seed)?;
            let out = rasterize_with_bank(&d, bank_for(&banks, &d.bank), RenderOptions { preview, parallel: true })?;
            let image = render_name(*seed);
            let mut files: Vec<(RenderKind, Vec<u8>)> = vec![
                (RenderKind::Depth, encode_png16(&depth_to_png16(&out.depth))?),
                (RenderKind::Ids, encode_png16(&ids_to_png16(&out.ids)?)?),
                (RenderKind::Control, encode_png16(&control_to_png16(&depth_to_control_image(&out.depth)))?),
            ];
            if let Some(p) = &out.preview {
                files.push((RenderKind::Preview, encode_rgb_png(p)?));
            }
            let mut outputs = BTreeMap::new();
            for (k, bytes) in &files {
                let p = layout.render_file(&image, *k);
                write_if_changed(&p, bytes)?;
                outputs.insert(p.file_name().unwrap().to_string_lossy().into_owned(), sha256_hex(&[bytes]));
            }
            let side = RenderSidecar {
                input: input.clone(),
                outputs,
            };
            write_if_changed(&layout.render_sidecar(&image), &json_bytes(&side)?)?;
            Ok(out.ids.visible_ids().len())
        })
        .collect::<Result<_, CliError>>()?;

    let s = RenderSummary {
        rendered: visible.len(),
        skipped: scenes.len() - visible.len(),
        mean_visible: if visible.is_empty() {
            0.0
        } else {
            visible.iter().sum::<usize>() as f64 / visible.len() as f64
        },
    };
    info!(
        "render: {} rendered, {} up to date, {:.1} visible instances/render, {}",
        s.rendered,
        s.skipped,
        s.mean_visible,
        elapsed(t)
    );
    Ok(s)
}

fn render_name(seed: u64) -> String {
    shroomgen_core::annotate::render_image_name(seed)
}

// Annotation

/// Builds the COCO set over all renders, in scene-index order.
pub fn annotate(ctx: &Context) -> Result<DatasetStats, CliError> {
    let t = Instant::now();
    let layout = &ctx.layout;
    let index = layout.load_scene_index()?;
    let parts: Vec<AnnotationSet> = index
        .seeds
        .par_iter()
        .map(|&seed| {
            let (d, _) = load_scene(layout, seed)?;
            let p = layout.render_file(&render_name(seed), RenderKind::Ids);
            if !p.is_file() {
                return Err(CliError::Validation(format!("{} missing; run render first", p.display())));
            }
            let ids = load_ids_png(&p)?;
            Ok(build_annotation_set(&[&ids], &[&d])?)
        })
        .collect::<Result<_, CliError>>()?;

    let mut set = AnnotationSet::new();
    for (i, part) in parts.into_iter().enumerate() {
        let image_id = i as u64 + 1;
        for mut img in part.images {
            img.id = image_id;
            set.images.push(img);
        }
        for mut a in part.annotations {
            a.id = set.annotations.len() as u64 + 1;
            a.image_id = image_id;
            set.annotations.push(a);
        }
    }
    write_if_changed(&layout.annotations(), &set.to_json_bytes()?)?;
    let stats = dataset_stats(&set);
    write_if_changed(&layout.reports_dir().join("stats.json"), &json_bytes(&stats)?)?;
    info!(
        "annotate: {} images, {} instances, {:.1} instances/image, {}",
        stats.image_count,
        stats.instance_count,
        stats.mean_instances_per_image,
        elapsed(t)
    );
    Ok(stats)
}

fn load_set(path: &Path) -> Result<AnnotationSet, CliError> {
    if !path.is_file() {
        return Err(CliError::Validation(format!("{} missing; run the previous stage first", path.display())));
    }
    let set = AnnotationSet::from_json_bytes(&read(path)?)?;
    set.validate()?;
    Ok(set)
}

// Crops and tiles

/// Cuts the depth and control images of every windowed image in `set` out of
/// the renders, into `dir/depth` and `dir/control`.
fn cut_windows(layout: &Layout, set: &AnnotationSet, dir: &Path) -> Result<(), CliError> {
    let mut by_parent: BTreeMap<&str, Vec<(Window, &str)>> = BTreeMap::new();
    for img in &set.images {
        let prov = img.provenance.as_ref();
        let (Some(parent), Some([x, y])) = (prov.and_then(|p| p.parent.as_deref()), prov.and_then(|p| p.origin)) else {
            return Err(CliError::Validation(format!("{} has no window provenance", img.file_name)));
        };
        by_parent.entry(parent).or_default().push((
            Window {
                x,
                y,
                width: img.width,
                height: img.height,
            },
            &img.file_name,
        ));
    }
    by_parent.par_iter().try_for_each(|(parent, windows)| {
        for (kind, sub) in [(RenderKind::Depth, "depth"), (RenderKind::Control, "control")] {
            let src = load_png16(&layout.render_file(parent, kind))?;
            for (w, name) in windows {
                let bytes = encode_png16(&crop_pixels(&src, *w))?;
                write_if_changed(&dir.join(sub).join(name), &bytes)?;
            }
        }
        Ok::<_, CliError>(())
    })
}

fn window_stage(ctx: &Context, name: &str, dir: &Path, set: AnnotationSet) -> Result<DatasetStats, CliError> {
    let t = Instant::now();
    write_if_changed(&dir.join("instances.json"), &set.to_json_bytes()?)?;
    cut_windows(&ctx.layout, &set, dir)?;
    let stats = dataset_stats(&set);
    write_if_changed(&dir.join("stats.json"), &json_bytes(&stats)?)?;
    info!(
        "{name}: {} images, {} instances, {}",
        stats.image_count,
        stats.instance_count,
        elapsed(t)
    );
    Ok(stats)
}

pub fn crop(ctx: &Context) -> Result<DatasetStats, CliError> {
    let c = &ctx.config.crop;
    let set = crop_fixed(&load_set(&ctx.layout.annotations())?, c.width, c.height, c.count, c.filter)?;
    window_stage(ctx, "crop", &ctx.layout.crops_dir(), set)
}

pub fn tile(ctx: &Context) -> Result<DatasetStats, CliError> {
    let set = tile_sahi(&load_set(&ctx.layout.annotations())?, &ctx.config.tile)?;
    window_stage(ctx, "tile", &ctx.layout.tiles_dir(), set)
}

pub fn stats(path: &Path) -> Result<DatasetStats, CliError> {
    Ok(dataset_stats(&load_set(path)?))
}

// Generation service

/// The annotation set jobs are built from, and the directory holding its
/// control images relative to the output root.
fn depth_source(ctx: &Context) -> Result<(AnnotationSet, Box<dyn Fn(&str) -> String>), CliError> {
    let l = &ctx.layout;
    Ok(match ctx.config.generation.source {
        DepthSource::Renders => (
            load_set(&l.annotations())?,
            Box::new(|name: &str| format!("renders/{}_control.png", stem(name))),
        ),
        DepthSource::Crops => (
            load_set(&l.crops_dir().join("instances.json"))?,
            Box::new(|name: &str| format!("crops/control/{name}")),
        ),
        DepthSource::Tiles => (
            load_set(&l.tiles_dir().join("instances.json"))?,
            Box::new(|name: &str| format!("tiles/control/{name}")),
        ),
    })
}

pub fn job_seed(master_seed: u64, k: u64) -> u64 {
    rng::derive(master_seed, &[KEY_JOB_SEED, k])
}

/// Builds the ablation manifest. An existing manifest with the same jobs is
/// kept, so statuses survive; one with different jobs needs `--force`.
pub fn build_manifest(ctx: &Context, depth_count: Option<usize>) -> Result<JobManifest, CliError> {
    let g = &ctx.config.generation;
    let (set, control_path) = depth_source(ctx)?;
    let n = depth_count.or(g.depth_count).unwrap_or(set.images.len());
    if n > set.images.len() {
        return Err(CliError::Validation(format!("{n} depth maps requested, {} available", set.images.len())));
    }
    let depths: Vec<DepthRef> = set.images[..n]
        .iter()
        .map(|img| {
            let prov = img.provenance.clone().unwrap_or(shroomgen_core::annotate::ImageProvenance {
                scene_seed: None,
                parent: None,
                origin: None,
            });
            DepthRef {
                path: control_path(&img.file_name),
                source_image: img.file_name.clone(),
                scene_seed: prov.scene_seed,
                origin: prov.origin,
                width: img.width,
                height: img.height,
            }
        })
        .collect();
    let seeds: Vec<u64> = (0..n as u64).map(|k| job_seed(ctx.config.master_seed, k)).collect();
    let jobs = build_ablation_batch(&depths, &seeds, &g.configs, &g.defaults)?;
    let endpoint = ctx.endpoint.clone().unwrap_or_else(|| g.endpoint.clone());
    let path = ctx.layout.manifest();
    if path.is_file() && !ctx.force {
        let mut old = JobManifest::load(&path)?;
        if old.entries.iter().map(|e| &e.job).eq(jobs.iter()) {
            old.endpoint = endpoint;
            old.save(&path)?;
            info!("jobs: manifest with {} jobs already present", old.entries.len());
            return Ok(old);
        }
        return Err(CliError::Validation(format!(
            "{} holds a different batch; pass --force to replace it",
            path.display()
        )));
    }
    let m = JobManifest::new(format!("batch-{}", ctx.config.master_seed), endpoint, jobs)?;
    m.save(&path)?;
    info!("jobs: {} jobs ({} depth maps x {} configs)", m.entries.len(), n, g.configs.len());
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitReport {
    pub summary: SubmitSummary,
    /// Pairs written when every job is done.
    pub paired: Option<usize>,
}

pub fn submit(ctx: &Context, depth_count: Option<usize>) -> Result<SubmitReport, CliError> {
    let layout = &ctx.layout;
    let mut manifest = if layout.manifest().is_file() && !ctx.force {
        JobManifest::load(&layout.manifest())?
    } else {
        build_manifest(ctx, depth_count)?
    };
    if ctx.dry_run {
        info!("submit: dry run, {} jobs in {}", manifest.entries.len(), layout.manifest().display());
        return Ok(SubmitReport {
            summary: SubmitSummary::default(),
            paired: None,
        });
    }
    if let Some(e) = &ctx.endpoint {
        manifest.endpoint = e.clone();
    }
    let g = &ctx.config.generation;
    let mut opts = SubmitOptions::new(layout.generated_images());
    opts.concurrency = g.concurrency;
    opts.max_attempts = g.max_attempts;
    opts.initial_backoff = Duration::from_millis(g.initial_backoff_ms);
    opts.request_timeout = Duration::from_secs(g.request_timeout_s);
    opts.base_dir = layout.root.clone();
    opts.manifest_path = Some(layout.manifest());
    std::fs::create_dir_all(&opts.artifacts_dir)?;

    let t = Instant::now();
    let summary = submit_blocking(&mut manifest, &opts)?;
    info!(
        "submit: {} posted, {} done, {} failed, {} already done, {}",
        summary.posted,
        summary.done,
        summary.failed,
        summary.skipped,
        elapsed(t)
    );
    if summary.failed > 0 {
        return Err(CliError::Remote(format!(
            "{} of {} jobs failed; run submit again to retry them",
            summary.failed,
            manifest.entries.len()
        )));
    }

    // Pair against the images this batch was built from.
    let (mut set, _) = depth_source(ctx)?;
    let used: HashSet<&str> = manifest
        .entries
        .iter()
        .filter_map(|e| e.job.provenance.source_image.as_deref())
        .collect();
    set.images.retain(|i| used.contains(i.file_name.as_str()));
    let kept: HashSet<u64> = set.images.iter().map(|i| i.id).collect();
    set.annotations.retain(|a| kept.contains(&a.image_id));
    let index = pair_outputs(&opts.artifacts_dir, &manifest, &set)?;
    index.save(&layout.generated_dir().join("index.json"))?;
    // Text-only outputs are not aligned with the masks.
    let mut aligned = index.clone();
    aligned.entries.retain(|e| e.ablation.components().controlnet);
    let coco = aligned.to_annotation_set(&set)?;
    write_if_changed(&layout.generated_dir().join("instances.json"), &coco.to_json_bytes()?)?;
    info!("submit: paired {} generated images", index.len());
    Ok(SubmitReport {
        summary,
        paired: Some(index.len()),
    })
}

pub fn serve_mock(addr: &str, config: MockConfig) -> Result<(), CliError> {
    let addr = addr
        .parse()
        .map_err(|e| CliError::Validation(format!("address {addr}: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let server = MockServer::start(addr, config).await?;
        println!("{}", server.endpoint());
        server.wait().await?;
        Ok(())
    })
}

// Metrics

pub fn eval(ctx: &Context, gt: &Path, pred: &Path) -> Result<EvalReport, CliError> {
    let gt = load_set(gt)?;
    let preds = load_predictions(pred)?;
    let report = evaluate(&gt, &preds, &ctx.config.metrics.eval)?;
    let dir = ctx.layout.reports_dir();
    write_if_changed(&dir.join("eval.json"), &json_bytes(&report)?)?;
    write_if_changed(&dir.join("eval.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub fid: f64,
    pub kid: KidResult,
    pub n_a: usize,
    pub n_b: usize,
    pub dim: usize,
}

pub fn distance(ctx: &Context, a: &Path, b: &Path) -> Result<DistanceReport, CliError> {
    let fa = load_features::<f64>(a)?;
    let fb = load_features::<f64>(b)?;
    let report = DistanceReport {
        fid: fid(&fa, &fb)?,
        kid: kid(&fa, &fb, &ctx.config.metrics.kid)?,
        n_a: fa.len(),
        n_b: fb.len(),
        dim: fa.dim(),
    };
    write_if_changed(&ctx.layout.reports_dir().join("distance.json"), &json_bytes(&report)?)?;
    Ok(report)
}
