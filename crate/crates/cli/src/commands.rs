//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use adcprog_core::eval::experiment::feature_row;
use adcprog_core::eval::{compare_runs, run_experiment, standard_grid, Alternative, CVReport, CohortTable, ExperimentConfig};
use adcprog_core::explain::{bundle_occlusion_saliency, importance, saliency_grid};
use adcprog_core::hash::{fnv1a64, hex64};
use adcprog_core::inference::{load_network, random_weights, EmbeddingCache, FrozenNetwork, ProjectionHead, RandomWeightOptions};
use adcprog_core::model::train_bundle;
use adcprog_core::pipeline::{build_cohort_table, process_volume, read_volume_file, segment_channels, VolumeSource};
use adcprog_core::preprocess::{normalize_intensity, resample_trilinear};
use adcprog_core::synth::{generate, CohortSpec};
use adcprog_core::tabular::clinical::numeric_field_names;
use adcprog_core::tabular::{parse_clinical_csv, ClinicalRecord, FeatureBlock, Imputer};
use adcprog_core::volume::{write_container, TensorRecord};
use anyhow::{bail, Context, Result};
use clap::Args;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{parse_shape, render, ConfigError, RunConfig};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 74)]
    pub n: usize,
    /// Cohort seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.554)]
    pub prevalence: f64,
    #[arg(long, default_value = "24x64x64")]
    pub volume_shape: String,
    /// Zero every planted signal strength.
    #[arg(long)]
    pub null_signal: bool,
    /// Seed of the random network weights written alongside the cohort.
    #[arg(long, default_value_t = 0)]
    pub weights_seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// `standard` runs the full configuration grid, `single` only the `blocks` key.
    #[arg(long, default_value = "standard")]
    pub grid: String,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub report_a: PathBuf,
    pub report_b: PathBuf,
    #[arg(long, default_value = "greater")]
    pub alternative: String,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    pub patient: String,
    #[arg(long, default_value = "J1")]
    pub timepoint: String,
    #[arg(long, default_value = "4,32,32")]
    pub window: String,
    /// Defaults to the window size.
    #[arg(long)]
    pub stride: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub fill: f32,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of report JSON files (default: `<out_dir>/reports`).
    #[arg(long)]
    pub reports: Option<PathBuf>,
}

/// `<id>` and path of every `.nii`/`.nii.gz` in `dir`, sorted by id.
fn list_volumes(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if let Some(id) = name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii")) {
            out.push((id.to_string(), path));
        }
    }
    out.sort();
    Ok(out)
}

struct Network {
    net: FrozenNetwork,
    head: ProjectionHead,
}

fn load_model_inputs(cfg: &RunConfig, manifest: &mut Manifest) -> Result<Network> {
    let spec = cfg.network()?;
    let dim = cfg.projection_dim()?;
    if dim > spec.embedding_dim() {
        return Err(ConfigError::invalid("projection_dim", format!("{dim} exceeds the network embedding size {}", spec.embedding_dim())).into());
    }
    let seed = cfg.projection_seed()?;
    let path = cfg.existing_path("weights")?;
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let net = load_network(&bytes, &spec).with_context(|| format!("loading {}", path.display()))?;
    manifest.input_hash(&path.display().to_string(), hex64(net.weight_hash()));
    manifest.seed("projection_seed", seed);
    let head = ProjectionHead::new(net.embedding_dim(), dim, seed)?;
    Ok(Network { net, head })
}

fn load_records(cfg: &RunConfig, manifest: &mut Manifest) -> Result<Vec<ClinicalRecord>> {
    let path = cfg.existing_path("clinical_csv")?;
    let bytes = fs::read(&path)?;
    manifest.input(&path)?;
    parse_clinical_csv(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn cohort_table(cfg: &RunConfig, manifest: &mut Manifest) -> Result<(CohortTable, Network)> {
    let volumes = cfg.existing_path("volumes_dir")?;
    let pipeline = cfg.pipeline()?;
    let network = load_model_inputs(cfg, manifest)?;
    let records = load_records(cfg, manifest)?;
    for (_, p) in list_volumes(&volumes)? {
        manifest.input(&p)?;
    }
    let cache = EmbeddingCache::new(cfg.cache_dir())?;
    let (table, _) = build_cohort_table(&records, &VolumeSource::Directory(&volumes), &network.net, &network.head, Some(&cache), &pipeline)?;
    Ok((table, network))
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let shape = parse_shape(&a.volume_shape).ok_or_else(|| ConfigError::invalid("volume_shape", format!("expected DxHxW, got {:?}", a.volume_shape)))?;
    let base = CohortSpec { n: a.n, seed: a.seed, prevalence: a.prevalence, shape, ..CohortSpec::default() };
    let spec = if a.null_signal { base.null_signal() } else { base };
    spec.validate().map_err(|e| ConfigError::invalid("synth", e.to_string()))?;
    let network = cfg.network()?;
    let out = cfg.out_dir();
    let cohort = generate(&spec)?;
    cohort.write_to(&out)?;
    let weights = write_container(&random_weights(&network, a.weights_seed, RandomWeightOptions::default()))?;
    fs::write(out.join("weights.adct"), &weights)?;

    let mut values = cfg.snapshot().clone();
    values.insert("volumes_dir".into(), "volumes".into());
    values.insert("clinical_csv".into(), "clinical.csv".into());
    values.insert("weights".into(), "weights.adct".into());
    values.insert("out_dir".into(), "results".into());
    values.insert("canonical_shape".into(), shape.map(|d| d.to_string()).join("x"));
    values.remove("cache_dir");
    fs::write(out.join("run.cfg"), render(&values))?;
    println!(
        "wrote {} patients ({} favorable) to {}; weights hash {}",
        spec.n,
        spec.n_favorable(),
        out.display(),
        hex64(fnv1a64(&weights))
    );
    Ok(())
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let volumes = cfg.existing_path("volumes_dir")?;
    let shape = cfg.canonical_shape()?;
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let files = list_volumes(&volumes)?;
    let results: Vec<(String, Vec<u8>, String)> = files
        .par_iter()
        .map(|(id, path)| -> Result<_> {
            let vol = read_volume_file(path)?;
            let canonical = normalize_intensity(&resample_trilinear(&vol, shape, id)?);
            let records = vec![
                canonical.volume.to_record("volume"),
                TensorRecord::f64("spacing", vec![3], canonical.volume.spacing().to_vec()),
                TensorRecord::f64("source_shape", vec![3], canonical.source_shape.iter().map(|&d| d as f64).collect()),
                TensorRecord::f64("source_spacing", vec![3], canonical.source_spacing.to_vec()),
            ];
            let sp = canonical.volume.spacing();
            let line = format!(
                "{id},{},{},{},{},{},{}\n",
                canonical.source_shape.map(|d| d.to_string()).join("x"),
                canonical.source_spacing.map(|s| s.to_string()).join("x"),
                sp[0],
                sp[1],
                sp[2],
                shape.map(|d| d.to_string()).join("x")
            );
            Ok((id.clone(), write_container(&records)?, line))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("id,source_shape,source_spacing,spacing_z,spacing_y,spacing_x,shape\n");
    for ((id, bytes, line), (_, path)) in results.iter().zip(&files) {
        manifest.input(path)?;
        manifest.write(&out, &format!("preprocessed/{id}.adct"), bytes)?;
        csv.push_str(line);
    }
    manifest.write(&out, "preprocess.csv", csv.as_bytes())?;
    manifest.finish(&out, "preprocess", cfg.snapshot())?;
    println!("preprocessed {} volumes into {}", results.len(), out.join("preprocessed").display());
    Ok(())
}

pub fn segment(cfg: &RunConfig) -> Result<()> {
    let volumes = cfg.existing_path("volumes_dir")?;
    let pipeline = cfg.pipeline()?;
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let files = list_volumes(&volumes)?;
    let results: Vec<_> = files
        .par_iter()
        .map(|(id, path)| -> Result<_> {
            let vol = read_volume_file(path)?;
            let canonical = resample_trilinear(&vol, pipeline.canonical_shape, id)?;
            let seg = adcprog_core::lesion::segment(&canonical.volume, &pipeline.segment);
            let channels = segment_channels(&canonical.volume, &pipeline.segment);
            Ok((id.clone(), write_container(&[seg.mask.to_record("mask")])?, channels))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("id,threshold,n_voxels,voxel_volume_mm3,volume_mm3,log_volume,strict_threshold,strict_n_voxels,strict_volume_mm3,strict_log_volume\n");
    for ((id, mask, ch), (_, path)) in results.iter().zip(&files) {
        manifest.input(path)?;
        manifest.write(&out, &format!("masks/{id}.adct"), mask)?;
        let (p, s) = (&ch.primary, &ch.strict);
        csv.push_str(&format!(
            "{id},{},{},{},{},{},{},{},{},{}\n",
            p.threshold_used, p.n_voxels, p.voxel_volume_mm3, p.volume_mm3, p.log_volume, s.threshold_used, s.n_voxels, s.volume_mm3, s.log_volume
        ));
    }
    manifest.write(&out, "lesions.csv", csv.as_bytes())?;
    manifest.finish(&out, "segment", cfg.snapshot())?;
    println!("segmented {} volumes", results.len());
    Ok(())
}

pub fn embed(cfg: &RunConfig) -> Result<()> {
    let volumes = cfg.existing_path("volumes_dir")?;
    let pipeline = cfg.pipeline()?;
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let network = load_model_inputs(cfg, &mut manifest)?;
    let cache = EmbeddingCache::new(cfg.cache_dir())?;
    let files = list_volumes(&volumes)?;
    let results: Vec<_> = files
        .par_iter()
        .map(|(id, path)| -> Result<_> {
            let vol = read_volume_file(path)?;
            Ok(process_volume(id, &vol, &network.net, &network.head, Some(&cache), &pipeline)?)
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("id");
    for n in network.head.feature_names() {
        csv.push(',');
        csv.push_str(&n);
    }
    csv.push('\n');
    for (f, (_, path)) in results.iter().zip(&files) {
        manifest.input(path)?;
        csv.push_str(&f.id);
        for v in &f.projected {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    manifest.write(&out, "embeddings.csv", csv.as_bytes())?;
    manifest.finish(&out, "embed", cfg.snapshot())?;
    let hits = results.iter().filter(|f| f.cache_hit).count();
    println!("embedded {} volumes: {} forward passes, {} cache hits", results.len(), results.len() - hits, hits);
    Ok(())
}

fn labelled(table: &CohortTable) -> Vec<usize> {
    (0..table.entries.len()).filter(|&i| table.entries[i].record.mrs_90.is_some()).collect()
}

struct Trained {
    bundle: adcprog_core::model::ModelBundle,
    imputer: Imputer,
    train_auc: f64,
}

fn train_all(cfg: &RunConfig, table: &CohortTable) -> Result<Trained> {
    let blocks = cfg.blocks()?;
    let params = cfg.train_params()?;
    let idx = labelled(table);
    let imputer = Imputer::fit(idx.iter().map(|&i| &table.entries[i].record))?;
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for &i in &idx {
        let (n, v) = feature_row(&table.entries[i], &imputer, &blocks)?;
        names = n;
        rows.push(v);
    }
    let labels: Vec<bool> = idx.iter().map(|&i| table.entries[i].record.label().expect("labelled").is_positive()).collect();
    let x = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
    let (bundle, _) = train_bundle(&x, &labels, names, &blocks.to_string(), &table.weight_hash, &params)?;
    let train_auc = adcprog_core::eval::auc(&bundle.score_matrix(&x)?, &labels)?;
    Ok(Trained { bundle, imputer, train_auc })
}

fn imputer_csv(imputer: &Imputer) -> String {
    let mut s = String::from("field,median\n");
    for (name, m) in numeric_field_names().iter().zip(&imputer.medians) {
        s.push_str(&format!("{name},{m}\n"));
    }
    s
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let (table, _) = cohort_table(cfg, &mut manifest)?;
    let t = train_all(cfg, &table)?;
    fs::create_dir_all(&out)?;
    let model = out.join("model.adct");
    t.bundle.save(&model)?;
    manifest.record_output("model.adct", &fs::read(&model)?);
    manifest.record_output("model.adct.meta", t.bundle.metadata().as_bytes());
    manifest.write(&out, "model.imputer.csv", imputer_csv(&t.imputer).as_bytes())?;
    manifest.seed("svm_seed", cfg.train_params()?.svm.seed);
    manifest.finish(&out, "train", cfg.snapshot())?;
    println!(
        "trained {} on {} patients: {} features -> {} components, training AUC {:.3}",
        t.bundle.config_id,
        labelled(&table).len(),
        t.bundle.feature_names.len(),
        t.bundle.pca.n_components(),
        t.train_auc
    );
    Ok(())
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "+-_.".contains(c) { c } else { '_' }).collect()
}

pub fn evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> Result<()> {
    let grid: Vec<(String, adcprog_core::tabular::BlockSet)> = match a.grid.as_str() {
        "standard" => standard_grid().into_iter().map(|(id, b)| (id.to_string(), b)).collect(),
        "single" => {
            let b = cfg.blocks()?;
            vec![(b.to_string(), b)]
        }
        other => return Err(ConfigError::invalid("grid", format!("expected standard or single, got {other:?}")).into()),
    };
    let folds = cfg.folds()?;
    let split_seed = cfg.split_seed()?;
    let train = cfg.train_params()?;
    let permute = cfg.permute_seed()?;
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let (table, _) = cohort_table(cfg, &mut manifest)?;

    let reports: Vec<CVReport> = grid
        .par_iter()
        .map(|(id, blocks)| {
            let config = ExperimentConfig { id: id.clone(), blocks: blocks.clone(), folds, split_seed, train, permute_labels: permute };
            run_experiment(&table, &config).with_context(|| format!("configuration {id}"))
        })
        .collect::<Result<_>>()?;

    for r in &reports {
        let stem = file_safe(&r.config_id);
        manifest.write(&out, &format!("reports/{stem}.json"), r.to_json().as_bytes())?;
        manifest.write(&out, &format!("reports/{stem}.csv"), r.to_csv().as_bytes())?;
        let v = &r.aggregates.val;
        println!(
            "{:24} val AUC {:.3} ± {:.3}  ACC {:.3} ± {:.3}  F1 {:.3} ± {:.3}",
            r.config_id, v.auc.mean, v.auc.sd, v.accuracy.mean, v.accuracy.sd, v.f1.mean, v.f1.sd
        );
    }
    let find = |id: &str| reports.iter().find(|r| r.config_id == id);
    let mut comparisons = Vec::new();
    for (x, y) in [("J1_MRI", "J0_MRI"), ("J1+Clinical+LesionJ1", "J0+Clinical+LesionJ0")] {
        if let (Some(rx), Some(ry)) = (find(x), find(y)) {
            let c = compare_runs(rx, ry, Alternative::Greater)?;
            println!("{x} > {y}: W = {:?}, p = {:?} ({:?})", c.w, c.p, c.status);
            comparisons.push(c);
        }
    }
    if !comparisons.is_empty() {
        let text = serde_json::to_string_pretty(&comparisons)? + "\n";
        manifest.write(&out, "comparisons.json", text.as_bytes())?;
    }
    manifest.seed("split_seed", split_seed);
    manifest.seed("svm_seed", train.svm.seed);
    if let Some(p) = permute {
        manifest.seed("permute_seed", p);
    }
    manifest.finish(&out, "evaluate", cfg.snapshot())?;
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let alternative: Alternative = a.alternative.parse().map_err(|e: String| ConfigError::invalid("alternative", e))?;
    let read = |p: &Path| -> Result<CVReport> {
        let text = fs::read_to_string(p).map_err(|e| ConfigError::invalid("report", format!("{}: {e}", p.display())))?;
        Ok(CVReport::from_json(&text)?)
    };
    let c = compare_runs(&read(&a.report_a)?, &read(&a.report_b)?, alternative)?;
    println!("{}", serde_json::to_string_pretty(&c)?);
    Ok(())
}

fn parse_triple(key: &str, s: &str) -> Result<[usize; 3], ConfigError> {
    parse_shape(s).ok_or_else(|| ConfigError::invalid(key, format!("expected three positive integers, got {s:?}")))
}

pub fn explain(cfg: &RunConfig, a: &ExplainArgs) -> Result<()> {
    let window = parse_triple("window", &a.window)?;
    let stride = parse_triple("stride", a.stride.as_deref().unwrap_or(&a.window))?;
    let block = match a.timepoint.as_str() {
        "J0" => FeatureBlock::MriJ0,
        "J1" => FeatureBlock::MriJ1,
        other => return Err(ConfigError::invalid("timepoint", format!("expected J0 or J1, got {other:?}")).into()),
    };
    let pipeline = cfg.pipeline()?;
    saliency_grid(pipeline.canonical_shape, window, stride).map_err(|e| ConfigError::invalid("window", e.to_string()))?;
    let blocks = cfg.blocks()?;
    let out = cfg.out_dir();
    let mut manifest = Manifest::default();
    let (table, network) = cohort_table(cfg, &mut manifest)?;
    let Some(entry) = table.entries.iter().find(|e| e.record.patient_id == a.patient) else {
        return Err(ConfigError::invalid("patient", format!("{} is not in the clinical table", a.patient)).into());
    };
    let t = train_all(cfg, &table)?;
    let imp = importance(&t.bundle);
    manifest.write(&out, "importance.csv", imp.to_csv().as_bytes())?;
    println!("top features:");
    for (name, w) in imp.entries.iter().take(10) {
        println!("  {name:40} {w:+.4}");
    }

    if !blocks.contains(block) {
        log::warn!("blocks {blocks} do not include {}; skipping saliency", block.as_str());
    } else {
        let volumes = cfg.existing_path("volumes_dir")?;
        let Some(path) = adcprog_core::pipeline::locate_volume(&volumes, &a.patient, &a.timepoint) else {
            bail!("no {} volume for {}", a.timepoint, a.patient);
        };
        let vol = read_volume_file(&path)?;
        let canonical = normalize_intensity(&resample_trilinear(&vol, pipeline.canonical_shape, &a.patient)?);
        let (_, features) = feature_row(entry, &t.imputer, &blocks)?;
        let s = bundle_occlusion_saliency(&network.net, &network.head, &t.bundle, &features, block, &canonical.volume, window, stride, a.fill)?;
        manifest.write(&out, "saliency.adct", &write_container(&[s.to_record("saliency")])?)?;
        manifest.write(&out, "saliency_slices.csv", s.slice_maxima_csv().as_bytes())?;
        println!("saliency grid {:?}, base score {:.4}, strongest cell {:?}", s.grid, s.base_score, s.argmax_abs());
    }
    manifest.finish(&out, "explain", cfg.snapshot())?;
    Ok(())
}

fn grid_rank(id: &str) -> usize {
    standard_grid().iter().position(|(g, _)| *g == id).unwrap_or(usize::MAX)
}

pub fn report(cfg: &RunConfig, a: &ReportArgs) -> Result<()> {
    let out = cfg.out_dir();
    let dir = a.reports.clone().unwrap_or_else(|| out.join("reports"));
    if !dir.is_dir() {
        return Err(ConfigError::invalid("reports", format!("{} is not a directory", dir.display())).into());
    }
    let mut reports = Vec::new();
    for entry in fs::read_dir(&dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") {
            reports.push(CVReport::from_json(&fs::read_to_string(&p)?).with_context(|| format!("reading {}", p.display()))?);
        }
    }
    if reports.is_empty() {
        bail!("no report JSON files in {}", dir.display());
    }
    reports.sort_by(|x, y| grid_rank(&x.config_id).cmp(&grid_rank(&y.config_id)).then(x.config_id.cmp(&y.config_id)));

    let cell = |m: &adcprog_core::eval::report::MeanSd| format!("{:.3} ± {:.3}", m.mean, m.sd);
    let header = ["configuration", "train AUC", "val AUC", "val accuracy", "val F1"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let (t, v) = (&r.aggregates.train, &r.aggregates.val);
            [r.config_id.clone(), cell(&t.auc), cell(&v.auc), cell(&v.accuracy), cell(&v.f1)]
        })
        .collect();
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| -> String {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}", w = *w)).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut table = line(&header.map(String::from));
    table.push('\n');
    table.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    table.push('\n');
    for r in &rows {
        table.push_str(&line(r));
        table.push('\n');
    }
    print!("{table}");

    let mut summary = String::from("config_id,split,metric,mean,sd\n");
    let mut folds = String::from("config_id,fold,val_auc\n");
    for r in &reports {
        for (split, m) in [("train", &r.aggregates.train), ("val", &r.aggregates.val)] {
            for (metric, v) in [("auc", &m.auc), ("accuracy", &m.accuracy), ("f1", &m.f1)] {
                summary.push_str(&format!("{},{split},{metric},{},{}\n", r.config_id, v.mean, v.sd));
            }
        }
        for f in &r.folds {
            folds.push_str(&format!("{},{},{}\n", r.config_id, f.fold, f.val.auc));
        }
    }
    let mut manifest = Manifest::default();
    manifest.write(&out, "report.txt", table.as_bytes())?;
    manifest.write(&out, "summary.csv", summary.as_bytes())?;
    manifest.write(&out, "fold_auc.csv", folds.as_bytes())?;
    manifest.finish(&out, "report", cfg.snapshot())?;
    Ok(())
}
