use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use shrubmap::augment::{expand_dataset, PatchDataset, Split};
use shrubmap::classifier::{self, BuiltinModel, ClassifierHandle, ExternalClassifier};
use shrubmap::detect::{
    self, assemble_heatmap, detections_to_geojson, extract_detections, scan, threshold_heatmap,
    window_grid, Detection, ScaleScan,
};
use shrubmap::eval::report::{ReportFormat, ReportRow, ReportTable};
use shrubmap::eval::{self, EvalDetection, MatchConfig};
use shrubmap::obia::{self, gridsearch, ClassifiedScene, SegmentClassifier};
use shrubmap::raster::{self, ClassLabel, GroundTruthSet, Scene};
use shrubmap::synth;

use crate::config::{ObiaClassifierChoice, PipelineConfig};
use crate::{Cli, CliError, Command, Mode, ObiaCommand};

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub cfg: PipelineConfig,
    pub format: ReportFormat,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir().join(name)
    }

    fn report_path(&self, stem: &str) -> PathBuf {
        self.out(&format!("{stem}.{}", self.format.extension()))
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

pub fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.global.output_dir {
        cfg.paths.output_dir = Some(std::path::absolute(dir).unwrap_or_else(|_| dir.clone()));
    }
    if let Command::Detect {
        stride_fraction,
        window_sizes,
        fusion,
        ..
    } = &cli.command
    {
        if let Some(f) = stride_fraction {
            cfg.detect.stride_fraction = *f;
        }
        if let Some(w) = window_sizes {
            cfg.detect.window_sizes = w.clone();
        }
        if let Some(f) = fusion {
            cfg.detect.scale_fusion = (*f).into();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    let ctx = Context {
        cfg,
        format: cli.global.format.into(),
    };
    match &cli.command {
        Command::Synth => cmd_synth(&ctx),
        Command::Train { no_augment } => cmd_train(&ctx, *no_augment),
        Command::Detect { mode, .. } => cmd_detect(&ctx, *mode),
        Command::Obia { sub } => cmd_obia(&ctx, *sub),
        Command::Eval {
            detections,
            ground_truth,
            label,
        } => cmd_eval(&ctx, detections.as_deref(), ground_truth.as_deref(), label),
        Command::Report { inputs, output } => cmd_report(&ctx, inputs, output.as_deref()),
    }
}

pub fn cmd_synth(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let s = synth::generate(&cfg.synth).map_err(|e| CliError::from(e).at("synth"))?;
    let scene_path = cfg.scene_path();
    ensure_parent(&scene_path)?;
    let sidecar = raster::save_scene(&s.scene, &scene_path)?;
    let gt_path = cfg.ground_truth_path();
    ensure_parent(&gt_path)?;
    s.ground_truth.save(&gt_path)?;
    s.training_sites.save(&cfg.training_sites_path())?;
    let ds_dir = cfg.dataset_dir();
    fs::create_dir_all(&ds_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", ds_dir.display())))?;
    s.patches.save(&ds_dir)?;
    let blobs =
        serde_json::to_string_pretty(&s.blobs).map_err(|e| CliError::internal(e.to_string()))?;
    write(&ctx.out("blobs.json"), blobs + "\n")?;
    println!(
        "synth: {} blobs, {} polygons, {} patches -> {} (+ {})",
        s.blobs.len(),
        s.ground_truth.polygons.len(),
        s.patches.len(),
        scene_path.display(),
        sidecar.display()
    );
    Ok(())
}

pub fn cmd_train(ctx: &Context, no_augment: bool) -> Result<()> {
    let cfg = &ctx.cfg;
    let ds = PatchDataset::load(&cfg.dataset_dir()).map_err(|e| CliError::from(e).at("train"))?;
    for label in [ClassLabel::Target, ClassLabel::Background] {
        if ds.count(label, Some(Split::Train)) == 0 {
            return Err(CliError::data(format!(
                "train: dataset has no {} samples in the train split",
                label.as_str()
            )));
        }
    }
    let ds = if no_augment {
        ds
    } else {
        // only the training split is augmented; validation stays raw
        let mut expanded = expand_dataset(&ds.split(Split::Train), &cfg.augment)
            .map_err(|e| CliError::from(e).at("augment"))?;
        expanded.samples.extend(ds.split(Split::Validation).samples);
        expanded
    };
    if cfg.train.max_iterations == 0 {
        warn("train.max_iterations is 0; the written model is untrained");
    }
    let trained = classifier::train(&ds, &cfg.train).map_err(|e| CliError::from(e).at("train"))?;
    let model_path = cfg.model_path();
    ensure_parent(&model_path)?;
    trained.model.save(&model_path)?;
    let mut curve = String::from("iteration,train_loss,train_accuracy,validation_accuracy\n");
    for p in &trained.outcome.curve {
        let val = p
            .validation_accuracy
            .map_or(String::new(), |v| format!("{v:.6}"));
        curve.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            p.iteration, p.train_loss, p.train_accuracy, val
        ));
    }
    write(&ctx.out("training_curve.csv"), curve)?;
    let last = trained.outcome.curve.last();
    println!(
        "train: {} samples, {} iterations, final training accuracy {}",
        ds.count(ClassLabel::Target, Some(Split::Train))
            + ds.count(ClassLabel::Background, Some(Split::Train)),
        last.map_or(0, |p| p.iteration),
        last.map_or("n/a".to_string(), |p| format!("{:.4}", p.train_accuracy)),
    );
    Ok(())
}

fn load_classifier(cfg: &PipelineConfig) -> Result<ClassifierHandle> {
    if let Some(cmd) = &cfg.paths.external_classifier {
        let ext = ExternalClassifier::spawn(
            cmd,
            Some(cfg.base_dir.clone()).filter(|d| !d.as_os_str().is_empty()),
            cfg.preprocess.patch_size,
        )?;
        return Ok(ClassifierHandle::External(ext));
    }
    let path = cfg.model_path();
    if !path.exists() {
        return Err(CliError::data(format!(
            "model file {} not found; run `shrubmap train` first",
            path.display()
        )));
    }
    Ok(ClassifierHandle::Builtin(BuiltinModel::load(&path)?))
}

fn load_scene(cfg: &PipelineConfig) -> Result<Scene> {
    Ok(raster::load_scene_with_sidecar(&cfg.scene_path())?)
}

/// Ground truth if the file exists.
fn optional_ground_truth(cfg: &PipelineConfig) -> Result<Option<GroundTruthSet>> {
    let p = cfg.ground_truth_path();
    if p.exists() {
        Ok(Some(GroundTruthSet::load(&p)?))
    } else {
        Ok(None)
    }
}

fn evaluate(
    dets: &[Detection],
    scene: &Scene,
    gt: &GroundTruthSet,
    m: &MatchConfig,
) -> eval::EvaluationResult {
    let ed = eval::eval_detections(dets, &scene.geotransform);
    eval::match_detections(&ed, gt, m)
}

fn write_detections(path: &Path, dets: &[Detection], scene: &Scene) -> Result<()> {
    let doc = detections_to_geojson(dets, &scene.geotransform);
    write(
        path,
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::internal(e.to_string()))? + "\n",
    )
}

fn write_report(ctx: &Context, stem: &str, rows: Vec<ReportRow>) -> Result<PathBuf> {
    let path = ctx.report_path(stem);
    write(&path, ReportTable::new(rows).render(ctx.format))?;
    Ok(path)
}

pub fn cmd_detect(ctx: &Context, mode: Mode) -> Result<()> {
    let cfg = &ctx.cfg;
    let scene = load_scene(cfg).map_err(|e| e.at("detect"))?;
    let clf = load_classifier(cfg).map_err(|e| e.at("detect"))?;
    let gt = optional_ground_truth(cfg)?;
    let label = scene.id.clone();
    let mut rows = Vec::new();
    match mode {
        Mode::Candidates => {
            let t0 = Instant::now();
            let run = detect::detect_with_candidates(
                &scene,
                &cfg.preprocess,
                &clf,
                cfg.detect.probability_threshold,
            )
            .map_err(|e| CliError::from(e).at("detect"))?;
            let secs = t0.elapsed().as_secs_f64();
            write_detections(&cfg.detections_path(), &run.detections, &scene)?;
            if let Some(gt) = &gt {
                let r = evaluate(&run.detections, &scene, gt, &cfg.matching);
                rows.push(ReportRow::new(
                    &label,
                    "candidates",
                    run.candidates as u64,
                    r.tp,
                    r.fp,
                    r.fn_,
                    secs,
                ));
            }
            println!(
                "detect: {} candidates, {} classifier calls, {} detections",
                run.candidates,
                run.classifier_calls,
                run.detections.len()
            );
        }
        Mode::Sliding => {
            let d = &cfg.detect;
            let (w, h) = (scene.width(), scene.height());
            let mut scans = Vec::with_capacity(d.window_sizes.len());
            let mut calls = 0usize;
            for &size in &d.window_sizes {
                let t0 = Instant::now();
                let grid = window_grid(w, h, size, d.stride_fraction)
                    .map_err(|e| CliError::from(e).at("detect"))?;
                let scores = scan(&scene, &grid, &clf, d.batch_size)
                    .map_err(|e| CliError::from(e).at("detect"))?;
                calls += scores.len();
                let one = ScaleScan { grid, scores };
                let hm = assemble_heatmap(w, h, std::slice::from_ref(&one), d.scale_fusion)?;
                let dets = extract_detections(
                    &threshold_heatmap(&hm, d.probability_threshold),
                    &hm,
                    &scene.geotransform,
                );
                let secs = t0.elapsed().as_secs_f64();
                hm.save_png(&ctx.out(&format!("heatmap_{size}.png")))?;
                write_detections(
                    &ctx.out(&format!("detections_{size}.geojson")),
                    &dets,
                    &scene,
                )?;
                if let Some(gt) = &gt {
                    let r = evaluate(&dets, &scene, gt, &cfg.matching);
                    rows.push(ReportRow::new(
                        &label,
                        size.to_string(),
                        one.grid.len() as u64,
                        r.tp,
                        r.fp,
                        r.fn_,
                        secs,
                    ));
                }
                scans.push(one);
            }
            let fused = assemble_heatmap(w, h, &scans, d.scale_fusion)?;
            let dets = extract_detections(
                &threshold_heatmap(&fused, d.probability_threshold),
                &fused,
                &scene.geotransform,
            );
            write_detections(&cfg.detections_path(), &dets, &scene)?;
            if scans.len() > 1 {
                fused.save_png(&ctx.out("heatmap_fused.png"))?;
            }
            println!(
                "detect: {} window sizes, {} classifier calls, {} detections",
                scans.len(),
                calls,
                dets.len()
            );
        }
    }
    match gt {
        Some(_) => {
            let p = write_report(ctx, "detect_report", rows)?;
            println!("report: {}", p.display());
        }
        None => warn(format!(
            "no ground truth at {}; report skipped",
            cfg.ground_truth_path().display()
        )),
    }
    Ok(())
}

fn obia_classifier(ctx: &Context, scene: &Scene) -> Result<SegmentClassifier> {
    let cfg = &ctx.cfg;
    match cfg.obia.classifier {
        ObiaClassifierChoice::Rules => Ok(SegmentClassifier::Rules {
            rules: cfg
                .obia
                .rules
                .clone()
                .unwrap_or_else(obia::RuleSet::reference),
        }),
        ObiaClassifierChoice::Fit => {
            let polys = GroundTruthSet::load(&cfg.training_polygons_path())?;
            let sg = obia::segment(&scene.image, &cfg.obia.params)?;
            let feats = obia::segment_features(&scene.image, &sg);
            let classes = gridsearch::class_raster(scene, &polys);
            let train = gridsearch::training_segments(&sg, &feats, &classes);
            if train.is_empty() {
                return Err(obia::ObiaError::NoTrainingSegments.into());
            }
            Ok(gridsearch::fit_classifier(&train, cfg.obia.backend)?.0)
        }
    }
}

pub fn cmd_obia(ctx: &Context, sub: ObiaCommand) -> Result<()> {
    let cfg = &ctx.cfg;
    let scene = load_scene(cfg).map_err(|e| e.at("obia"))?;
    match sub {
        ObiaCommand::Segment => {
            let sg = obia::segment(&scene.image, &cfg.obia.params)?;
            let feats = obia::segment_features(&scene.image, &sg);
            let labels = ctx.out("segments.png");
            ensure_parent(&labels)?;
            obia::save_label_png(&sg, &labels)?;
            write(
                &ctx.out("segment_features.csv"),
                obia::features_csv(&feats, None),
            )?;
            println!(
                "obia segment: {} segments after {} merges",
                sg.len(),
                sg.merges
            );
        }
        ObiaCommand::Gridsearch => {
            let polys = GroundTruthSet::load(&cfg.training_polygons_path())?;
            let out = obia::grid_search(&scene, &polys, &cfg.obia.grid, cfg.obia.backend)
                .map_err(|e| CliError::from(e).at("obia"))?;
            write(&ctx.out("gridsearch_log.csv"), out.log_csv())?;
            let best = out.best();
            let doc = json!({
                "scale": best.params.scale,
                "shape_weight": best.params.shape_weight,
                "compactness_weight": best.params.compactness_weight,
                "f1": best.f1,
                "combinations": out.scores.len(),
                "classifier": out.best_classifier,
            });
            write(
                &ctx.out("best_params.json"),
                serde_json::to_string_pretty(&doc)
                    .map_err(|e| CliError::internal(e.to_string()))?
                    + "\n",
            )?;
            println!(
                "obia gridsearch: {} combinations, best scale {} shape {} compactness {} (F1 {:.4})",
                out.scores.len(),
                best.params.scale,
                best.params.shape_weight,
                best.params.compactness_weight,
                best.f1
            );
        }
        ObiaCommand::Classify => {
            let clf = obia_classifier(ctx, &scene)?;
            let t0 = Instant::now();
            let cs: ClassifiedScene = obia::classify_scene(&scene, &cfg.obia.params, &clf)?;
            let dets = cs.detections(&scene);
            let secs = t0.elapsed().as_secs_f64();
            let labels = ctx.out("segments.png");
            ensure_parent(&labels)?;
            obia::save_label_png(&cs.graph, &labels)?;
            write(&ctx.out("segment_classes.csv"), cs.features_csv())?;
            write_detections(&ctx.out("obia_detections.geojson"), &dets, &scene)?;
            if let Some(gt) = optional_ground_truth(cfg)? {
                let r = evaluate(&dets, &scene, &gt, &cfg.matching);
                write_report(
                    ctx,
                    "obia_report",
                    vec![ReportRow::new(
                        &scene.id,
                        "obia",
                        cs.graph.len() as u64,
                        r.tp,
                        r.fp,
                        r.fn_,
                        secs,
                    )],
                )?;
            }
            let n_target = cs
                .classes
                .iter()
                .filter(|&&c| c == ClassLabel::Target)
                .count();
            println!(
                "obia classify: {} segments, {} target, {} detections",
                cs.graph.len(),
                n_target,
                dets.len()
            );
        }
    }
    Ok(())
}

pub fn cmd_eval(
    ctx: &Context,
    detections: Option<&Path>,
    ground_truth: Option<&Path>,
    label: &str,
) -> Result<()> {
    let cfg = &ctx.cfg;
    let det_path = detections.map_or_else(|| cfg.detections_path(), Path::to_path_buf);
    let gt_path = ground_truth.map_or_else(|| cfg.ground_truth_path(), Path::to_path_buf);
    let t0 = Instant::now();
    let dets: Vec<EvalDetection> =
        eval::load_detections(&det_path).map_err(|e| CliError::from(e).at("eval"))?;
    let gt = GroundTruthSet::load(&gt_path).map_err(|e| CliError::from(e).at("eval"))?;
    if eval::frames_disjoint(&dets, &gt) {
        warn(
            "detections and ground truth do not overlap; check that they share a coordinate frame",
        );
    }
    let r = eval::match_detections(&dets, &gt, &cfg.matching);
    let secs = t0.elapsed().as_secs_f64();
    let row = ReportRow::new(
        label,
        "detections",
        dets.len() as u64,
        r.tp,
        r.fp,
        r.fn_,
        secs,
    );
    println!(
        "eval: TP {} FP {} FN {} precision {} recall {} F1 {}",
        r.tp, r.fp, r.fn_, row.precision, row.recall, row.f1
    );
    write_report(ctx, "eval_report", vec![row])?;
    Ok(())
}

pub fn cmd_report(ctx: &Context, inputs: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(
            ReportTable::load(p)
                .map_err(|e| CliError::from(e).at("report"))?
                .rows,
        );
    }
    let text = ReportTable::new(rows).render(ctx.format);
    match output {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
