use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use slidescope_core::analysis::{extract_features, tumor_burden, whole_tumor_approx, Connectivity};
use slidescope_core::inference::{threshold_map, ProbabilityMap};
use slidescope_core::io::{
    atomic_write, atomic_write_json, read_json, read_mask_png, read_tissue_mask, write_csv, write_tissue_mask,
};
use slidescope_core::metrics::{
    detections_from_map, dice, froc, jaccard, kappa_quadratic, Detection, LesionMap, FROC_RATES,
};
use slidescope_core::preproc::tissue_mask;
use slidescope_core::pyramid::SlidePyramid;
use slidescope_core::sampler::{
    build_grid, sample_training_set, stratified_folds, SamplingConfig, TrainingSlide,
};
use slidescope_core::scorer::ScorerSpec;
use slidescope_core::staging::{
    ensemble_classify, pn_stage, rf_predict, rf_train, smote_tomek, Dataset, Forest, ForestParams, PnOptions,
    SlideLabel, SmoteParams, SmoteTomekParams,
};
use slidescope_core::uncertainty::UncertaintyKind;
use slidescope_core::Mask;
use slidescope_service::config::JobConfig;
use slidescope_service::pipeline::{features_csv, run_job};
use slidescope_service::server::{serve, AppState};

#[derive(Parser)]
#[command(name = "slidescope", version, about = "Whole-slide segmentation, uncertainty and staging")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Job config JSON supplying defaults for segment and uncertainty.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pyramid operations.
    #[command(subcommand)]
    Pyramid(PyramidCmd),
    /// Tissue mask of a slide.
    Mask {
        slide: PathBuf,
        /// Pyramid level, or `auto`.
        #[arg(long, default_value = "auto")]
        level: String,
        #[arg(long)]
        black_fix: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inference grid as CSV of patch centres.
    Grid {
        slide: PathBuf,
        /// Tissue mask PNG; computed when absent.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        patch: u32,
        #[arg(long, default_value_t = 512)]
        stride: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Balanced training coordinates with stratified folds.
    Sample {
        slides: Vec<PathBuf>,
        /// Directory with `<slide_id>.png` level-0 annotations; absent means no tumour.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
        #[arg(long, default_value_t = 256)]
        patch: u32,
        #[arg(long, default_value_t = 128)]
        stride: u32,
        #[arg(long, default_value_t = 3)]
        folds: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment a slide and write every job artifact.
    Segment(SegmentArgs),
    /// Segment plus the requested uncertainty maps.
    Uncertainty {
        #[command(flatten)]
        seg: SegmentArgs,
        /// Comma-separated: aleatoric, epistemic, combined.
        #[arg(long, value_delimiter = ',', default_value = "aleatoric,epistemic,combined")]
        kinds: Vec<String>,
    },
    /// Slide features and region list from a stored heatmap.
    Features {
        /// Heatmap path without extension.
        heatmap: PathBuf,
        #[arg(long)]
        tissue: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        mpp: f64,
        #[arg(long, default_value = "8")]
        connectivity: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random forest training and prediction.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// Patient pN stages from slide labels.
    Stage {
        /// CSV with `patient` and `label` columns, five rows per patient.
        #[arg(long)]
        per_patient: PathBuf,
        #[arg(long)]
        count_itc: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Viable tumour burden from a stored heatmap.
    Burden {
        heatmap: PathBuf,
        #[arg(long)]
        tissue: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        mpp: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detections CSV from one or more stored heatmaps.
    Detect {
        heatmaps: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// FROC curve and score.
    Froc {
        #[arg(long)]
        detections: PathBuf,
        /// Directory with `<slide_id>.png` lesion masks; slides without lesions
        /// need an all-zero mask.
        #[arg(long)]
        lesions: PathBuf,
        /// Level-0 pixels per lesion-mask pixel.
        #[arg(long, default_value_t = 1)]
        lesion_downsample: u32,
        /// Level-0 distance within which a detection still hits a lesion.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quadratic-weighted kappa between two raters.
    Kappa {
        /// CSV with integer columns `a` and `b`.
        ratings: PathBuf,
        #[arg(long)]
        classes: usize,
    },
    /// Dice and Jaccard between two mask PNGs.
    Dice { a: PathBuf, b: PathBuf },
    /// HTTP service for the viewer.
    Serve {
        #[arg(long)]
        root: PathBuf,
        /// Job artifact directory.
        #[arg(long, default_value = "jobs")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Jobs executing at once.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Subcommand)]
enum PyramidCmd {
    Build {
        image: PathBuf,
        #[arg(long, default_value_t = 512)]
        tile_size: u32,
        #[arg(long, default_value_t = 0.25)]
        mpp: f64,
        /// Defaults to the image file stem.
        #[arg(long)]
        slide_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SegmentArgs {
    slide: PathBuf,
    /// JSON array of scorer specs.
    #[arg(long)]
    scorers: Option<PathBuf>,
    #[arg(long)]
    patch: Option<u32>,
    #[arg(long)]
    stride: Option<u32>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    downsample: Option<u32>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Balance {
    None,
    SmoteTomek,
}

#[derive(Subcommand)]
enum ClassifyCmd {
    Train {
        /// Dataset CSV: `slide_id`, feature columns, `label`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long)]
        features_per_split: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long, value_enum, default_value = "none")]
        balance: Balance,
        /// Tomek removal drops only the more populous member of each link.
        #[arg(long)]
        majority_only: bool,
        /// Train on a random fraction of the rows (partial split).
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long = "forest", required = true)]
        forests: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let base_config = || -> anyhow::Result<JobConfig> {
        let mut cfg: JobConfig = match &cli.config {
            Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
            None => JobConfig::default(),
        };
        if cli.threads > 0 && cfg.inference.workers == 0 {
            cfg.inference.workers = cli.threads;
        }
        Ok(cfg)
    };

    match cli.cmd {
        Cmd::Pyramid(PyramidCmd::Build { image, tile_size, mpp, slide_id, out }) => {
            let img = image::open(&image)
                .with_context(|| format!("opening {}", image.display()))?
                .to_rgb8();
            let id = slide_id.unwrap_or_else(|| {
                image.file_stem().map_or("slide".into(), |s| s.to_string_lossy().into_owned())
            });
            let p = SlidePyramid::build(&id, &img, tile_size, (mpp, mpp))?.write(&out)?;
            println!("{} levels written to {}", p.level_count(), out.display());
        }
        Cmd::Mask { slide, level, black_fix, out } => {
            let pyr = SlidePyramid::open(&slide)?;
            let mut opts = base_config()?.mask;
            opts.black_fix |= black_fix;
            if level != "auto" {
                opts.level = Some(level.parse().context("--level must be a number or `auto`")?);
            }
            let r = tissue_mask(&pyr, &opts)?;
            if r.degenerate {
                log::warn!("blank slide, mask is empty");
            }
            write_tissue_mask(&out, &r.mask)?;
            println!("otsu threshold {}, {} tissue pixels", r.threshold, r.mask.mask.count());
        }
        Cmd::Grid { slide, mask, patch, stride, out } => {
            let pyr = SlidePyramid::open(&slide)?;
            let tissue = match mask {
                Some(m) => read_tissue_mask(m)?,
                None => tissue_mask(&pyr, &base_config()?.mask)?.mask,
            };
            let grid = build_grid(&tissue, pyr.dimensions(), patch, stride)?;
            #[derive(Serialize)]
            struct Row<'a> {
                slide_id: &'a str,
                x: i64,
                y: i64,
            }
            let rows: Vec<Row> = grid
                .centres
                .iter()
                .map(|&(x, y)| Row { slide_id: pyr.slide_id(), x, y })
                .collect();
            write_csv(&out, &rows)?;
            println!("{} patches", rows.len());
        }
        Cmd::Sample { slides, annotations, per_class, patch, stride, folds, out } => {
            let mask_opts = base_config()?.mask;
            let mut training = Vec::new();
            for dir in &slides {
                let pyr = SlidePyramid::open(dir)?;
                let tissue = tissue_mask(&pyr, &mask_opts)?.mask;
                let annotation = match &annotations {
                    Some(a) if a.join(format!("{}.png", pyr.slide_id())).exists() => {
                        read_mask_png(a.join(format!("{}.png", pyr.slide_id())))?
                    }
                    _ => Mask::filled(0, 0, false),
                };
                training.push(TrainingSlide {
                    slide_id: pyr.slide_id().to_string(),
                    dims: pyr.dimensions(),
                    tissue,
                    annotation,
                    fold: 0,
                });
            }
            let strata: Vec<(String, bool)> =
                training.iter().map(|s| (s.slide_id.clone(), s.annotation.any())).collect();
            let assignment = stratified_folds(&strata, folds, cli.seed)?;
            for w in &assignment.warnings {
                log::warn!("{w}");
            }
            for s in &mut training {
                s.fold = assignment.fold_of(&s.slide_id).unwrap_or(0);
            }
            let cfg = SamplingConfig { patch_size: patch, stride, per_class, seed: cli.seed };
            let coords = sample_training_set(&training, &cfg)?;
            write_csv(&out, &coords)?;
            println!("{} coordinates", coords.len());
        }
        Cmd::Segment(args) => {
            let cfg = segment_config(base_config()?, &args)?;
            run_cli_job(&args, &cfg)?;
        }
        Cmd::Uncertainty { seg, kinds } => {
            let mut cfg = segment_config(base_config()?, &seg)?;
            cfg.uncertainty = kinds
                .iter()
                .map(|k| UncertaintyKind::parse(k.trim()).with_context(|| format!("unknown uncertainty kind {k:?}")))
                .collect::<anyhow::Result<_>>()?;
            run_cli_job(&seg, &cfg)?;
        }
        Cmd::Features { heatmap, tissue, mpp, connectivity, out } => {
            let map = ProbabilityMap::load(&heatmap)?;
            let tissue = read_tissue_mask(&tissue)?;
            let mut opts = base_config()?.features;
            opts.connectivity = Connectivity::from_number(connectivity).context("connectivity must be 4 or 8")?;
            let feats = extract_features(&map, &tissue, mpp, &opts)?;
            std::fs::create_dir_all(&out)?;
            atomic_write(out.join("features.csv"), &features_csv(&map.slide_id, &feats.features.values)?)?;
            atomic_write_json(out.join("regions.json"), &feats)?;
            println!("{} regions at 0.9, {} at 0.5", feats.regions_p90.len(), feats.regions_p50.len());
        }
        Cmd::Classify(ClassifyCmd::Train {
            data,
            trees,
            features_per_split,
            max_depth,
            balance,
            majority_only,
            fraction,
            out,
        }) => {
            let mut ds = Dataset::read_csv(&data, true)?;
            if !(fraction > 0.0 && fraction <= 1.0) {
                bail!("--fraction must be in (0, 1]");
            }
            if fraction < 1.0 {
                let n = ((ds.len() as f64 * fraction).round() as usize).max(1);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
                let mut picks = index::sample(&mut rng, ds.len(), n).into_vec();
                picks.sort_unstable();
                ds = Dataset::with_ids(
                    picks.iter().map(|&i| ds.ids[i].clone()).collect(),
                    picks.iter().map(|&i| ds.x[i].clone()).collect(),
                    picks.iter().map(|&i| ds.y[i]).collect(),
                )?;
            }
            if balance == Balance::SmoteTomek {
                let params = SmoteTomekParams {
                    smote: SmoteParams { seed: cli.seed, ..SmoteParams::default() },
                    majority_only,
                };
                ds = smote_tomek(&ds, &params)?;
            }
            let params = ForestParams {
                n_trees: trees,
                features_per_split,
                max_depth,
                seed: cli.seed,
                ..ForestParams::default()
            };
            let forest = rf_train(&ds, &params)?;
            atomic_write_json(&out, &forest)?;
            println!("trained {} trees on {} rows {:?}", forest.trees.len(), ds.len(), ds.class_counts());
        }
        Cmd::Classify(ClassifyCmd::Predict { forests, data, out }) => {
            let forests: Vec<Forest> = forests.iter().map(read_json).collect::<Result<_, _>>()?;
            let ds = Dataset::read_csv(&data, false)?;
            #[derive(Serialize)]
            struct Row {
                slide_id: String,
                label: SlideLabel,
                votes: String,
            }
            let mut rows = Vec::new();
            for i in 0..ds.len() {
                let votes: Vec<SlideLabel> = forests
                    .iter()
                    .map(|f| rf_predict(f, &ds.x[i]).map(|p| p.0))
                    .collect::<Result<_, _>>()?;
                rows.push(Row {
                    slide_id: ds.ids[i].clone(),
                    label: ensemble_classify(&votes)?,
                    votes: votes.iter().map(|v| v.name()).collect::<Vec<_>>().join(";"),
                });
            }
            write_csv(&out, &rows)?;
        }
        Cmd::Stage { per_patient, count_itc, out } => {
            #[derive(Deserialize)]
            struct In {
                patient: String,
                label: SlideLabel,
            }
            #[derive(Serialize)]
            struct Out {
                patient: String,
                stage: String,
            }
            let rows: Vec<In> = slidescope_core::io::read_csv(&per_patient)?;
            let mut patients: Vec<(String, Vec<SlideLabel>)> = Vec::new();
            for r in rows {
                match patients.iter_mut().find(|(p, _)| *p == r.patient) {
                    Some((_, v)) => v.push(r.label),
                    None => patients.push((r.patient, vec![r.label])),
                }
            }
            let mut result = Vec::new();
            for (patient, labels) in patients {
                let stage = pn_stage(&labels, PnOptions { count_itc })
                    .with_context(|| format!("patient {patient}"))?;
                result.push(Out { patient, stage: stage.name().into() });
            }
            match out {
                Some(p) => write_csv(p, &result)?,
                None => print!("{}", String::from_utf8(slidescope_core::io::csv_bytes(&result)?)?),
            }
        }
        Cmd::Burden { heatmap, tissue, mpp, threshold, out } => {
            let map = ProbabilityMap::load(&heatmap)?;
            let tissue = read_tissue_mask(&tissue)?;
            let viable = threshold_map(&map, threshold);
            let tissue_map = tissue.resample(map.width(), map.height(), map.downsample);
            let whole = whole_tumor_approx(&viable, &tissue_map, &base_config()?.burden)?;
            let b = tumor_burden(&viable, &whole, map.downsample as f64 * mpp)?;
            atomic_write_json(&out, &b)?;
            println!("burden {:.6}", b.burden);
        }
        Cmd::Detect { heatmaps, threshold, out } => {
            let mut dets: Vec<Detection> = Vec::new();
            for h in &heatmaps {
                let map = ProbabilityMap::load(h)?;
                dets.extend(detections_from_map(&map, threshold, Connectivity::Eight));
            }
            write_csv(&out, &dets)?;
            println!("{} detections", dets.len());
        }
        Cmd::Froc { detections, lesions, lesion_downsample, tolerance, out } => {
            let dets: Vec<Detection> = slidescope_core::io::read_csv(&detections)?;
            let maps = read_lesion_dir(&lesions, lesion_downsample)?;
            let curve = froc(&dets, &maps, &FROC_RATES, tolerance)?;
            match out {
                Some(p) => atomic_write_json(p, &curve)?,
                None => println!("{}", serde_json::to_string_pretty(&curve)?),
            }
            println!("froc score {:.6}", curve.score);
        }
        Cmd::Kappa { ratings, classes } => {
            #[derive(Deserialize)]
            struct Pair {
                a: usize,
                b: usize,
            }
            let rows: Vec<Pair> = slidescope_core::io::read_csv(&ratings)?;
            let a: Vec<usize> = rows.iter().map(|r| r.a).collect();
            let b: Vec<usize> = rows.iter().map(|r| r.b).collect();
            let k = kappa_quadratic(&a, &b, classes)?;
            println!("{}", serde_json::to_string(&k)?);
        }
        Cmd::Dice { a, b } => {
            let (a, b) = (read_mask_png(&a)?, read_mask_png(&b)?);
            println!(
                "{}",
                serde_json::json!({ "dice": dice(&a, &b)?, "jaccard": jaccard(&a, &b)? })
            );
        }
        Cmd::Serve { root, data, addr, workers } => {
            std::fs::create_dir_all(&data)?;
            let state = AppState::new(root, data, workers);
            tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
        }
    }
    Ok(())
}

fn segment_config(mut cfg: JobConfig, args: &SegmentArgs) -> anyhow::Result<JobConfig> {
    if let Some(p) = &args.scorers {
        cfg.scorers = read_json::<Vec<ScorerSpec>>(p).with_context(|| format!("reading {}", p.display()))?;
    }
    let inf = &mut cfg.inference;
    inf.patch_size = args.patch.unwrap_or(inf.patch_size);
    inf.stride = args.stride.unwrap_or(inf.stride);
    inf.threshold = args.threshold.unwrap_or(inf.threshold);
    inf.batch_size = args.batch.unwrap_or(inf.batch_size);
    if args.downsample.is_some() {
        inf.downsample = args.downsample;
    }
    let errors = cfg.field_errors();
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("{}: {}", e.field, e.message);
        }
        bail!("invalid job config");
    }
    Ok(cfg)
}

fn run_cli_job(args: &SegmentArgs, cfg: &JobConfig) -> anyhow::Result<()> {
    let pyr = SlidePyramid::open(&args.slide)?;
    let last = std::sync::Mutex::new(-1i64);
    let progress = |f: f64| {
        let pct = (f * 100.0).floor() as i64;
        let mut l = last.lock().unwrap();
        if pct / 10 > *l / 10 {
            log::info!("{pct}%");
        }
        *l = (*l).max(pct);
    };
    let out = run_job(&pyr, cfg, &args.out, &progress)?;
    println!("wrote {} to {}", out.kinds.join(", "), args.out.display());
    Ok(())
}

fn read_lesion_dir(dir: &Path, downsample: u32) -> anyhow::Result<Vec<LesionMap>> {
    let mut maps = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.extension().and_then(|s| s.to_str()) != Some("png") {
            continue;
        }
        let id = path.file_stem().unwrap().to_string_lossy().into_owned();
        maps.push(LesionMap::from_mask(&id, downsample, &read_mask_png(&path)?));
    }
    Ok(maps)
}
