use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use otreg::datagen::{make_partial_pair, make_self_occluded_pair, Shape};
use otreg::descriptors::{load_descriptors, AttachedDescriptors, DescriptorProvider, LocalGeometryProvider, OracleDescriptors, OracleProvider};
use otreg::io::{self, StoredPair};
use otreg::metrics::{evaluate, to_csv, to_table, MetricReport};
use otreg::pipeline::{register_icp, register_ot, OtConfig, PairWeighting, RegistrationError, RegistrationResult};
use otreg::random::{mix_seed, seeded_rng};
use otreg::sinkhorn::build_ground_truth;
use otreg::{PointCloud, RigidTransform};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FileConfig, Preset, RunConfig};
use crate::{BenchmarkArgs, CliError, DatagenArgs, GtArgs, Method, Provider, RegisterArgs, SolverArgs};

type Result<T> = std::result::Result<T, CliError>;

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    path.map(FileConfig::load).transpose().map_err(usage).map(Option::unwrap_or_default)
}

/// Preset and config file, then the solver flags on top.
fn solver_config(args: &SolverArgs) -> Result<RunConfig> {
    let file = load_file_config(args.config.as_deref())?;
    let mut cfg = RunConfig::resolve(None, &file).map_err(usage)?;
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(lambda) = args.lambda {
        cfg.sinkhorn.lambda = lambda;
    }
    if let Some(k) = args.iterations {
        cfg.sinkhorn.iterations = k;
    }
    if let Some(k) = args.icp_iterations {
        cfg.icp.max_iterations = k;
    }
    if let Some(d) = args.max_pair_distance {
        cfg.icp.max_pair_distance = Some(d);
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn ot_config(cfg: &RunConfig, args: &SolverArgs) -> OtConfig {
    OtConfig {
        alpha: cfg.alpha,
        sinkhorn: cfg.sinkhorn,
        weighting: if args.plan_mass_weights {
            PairWeighting::PlanMass
        } else {
            PairWeighting::Uniform
        },
        refine: args.refine.then_some(cfg.icp),
    }
}

fn oracle(transform: RigidTransform, noise: f64, seed: u64) -> OracleProvider {
    OracleProvider {
        settings: OracleDescriptors {
            noise_sigma: noise,
            ..Default::default()
        },
        transform,
        seed,
    }
}

#[derive(Serialize)]
struct PairEntry {
    index: usize,
    dir: String,
    seed: u64,
    shape: String,
}

#[derive(Serialize)]
struct Manifest {
    preset: Preset,
    master_seed: u64,
    pairs: usize,
    input: String,
    full_points: usize,
    config: RunConfig,
    pair_seeds: Vec<PairEntry>,
}

pub fn datagen(args: DatagenArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    let mut cfg = RunConfig::resolve(args.preset, &file).map_err(usage)?;
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(sigma) = args.noise_sigma {
        cfg.scenario.noise_sigma = sigma;
    }
    cfg.validate().map_err(usage)?;
    let pairs = args.pairs.or(file.pairs).unwrap_or(10);
    let shape = match args.shape.as_deref() {
        None | Some("mixed") => None,
        Some(name) => Some(Shape::from_name(name).ok_or_else(|| {
            usage(format!("unknown shape {name:?}; expected mixed, sphere, box, torus or composite"))
        })?),
    };
    let input = args.input.as_ref().map(io::load_cloud).transpose().map_err(usage)?;

    let shape_for = |k: usize| shape.unwrap_or(Shape::ALL[k % Shape::ALL.len()]);
    let master = cfg.scenario.seed;
    let manifest = Manifest {
        preset: cfg.preset,
        master_seed: master,
        pairs,
        input: match &args.input {
            Some(p) => p.display().to_string(),
            None => shape.map_or("mixed".to_string(), |s| s.name().to_string()),
        },
        full_points: args.full_points,
        config: cfg.clone(),
        pair_seeds: (0..pairs)
            .map(|k| PairEntry {
                index: k,
                dir: io::pair_dir_name(k),
                seed: mix_seed(master, k as u64),
                shape: if input.is_some() { "input".into() } else { shape_for(k).name().into() },
            })
            .collect(),
    };

    // The manifest goes to disk before any pair is generated.
    fs::create_dir_all(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    io::save_json(&manifest, args.out.join("manifest.json")).map_err(runtime)?;

    for entry in &manifest.pair_seeds {
        let mut rng = seeded_rng(entry.seed);
        let full = match &input {
            Some(cloud) => cloud.clone(),
            None => shape_for(entry.index).sample(args.full_points, &mut rng),
        };
        let pair = match cfg.preset {
            Preset::SelfOccluded => make_self_occluded_pair(&full, &cfg.scenario, &cfg.camera, &mut rng),
            Preset::PartialUnseen | Preset::PartialNoise => make_partial_pair(&full, &cfg.scenario, &mut rng),
        }
        .map_err(|e| runtime(format!("pair {}: {e}", entry.index)))?;
        io::write_pair(args.out.join(&entry.dir), &pair.source, &pair.target, &pair.transform).map_err(runtime)?;
    }
    emit(&(serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n"));
    Ok(())
}

fn attach(cloud: PointCloud, desc: Option<&PathBuf>, flag: &str) -> Result<PointCloud> {
    let path = desc.ok_or_else(|| usage(format!("--provider file requires {flag}")))?;
    let d = load_descriptors(path).map_err(usage)?;
    cloud.with_descriptors(d).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn summary(method: Method, r: &RegistrationResult) -> String {
    format!(
        "method={} correspondences={} source_outliers={} target_unused={} residual={:.6e} sinkhorn_iterations={} icp_iterations={} converged={}",
        method.name(),
        r.correspondences.len(),
        r.num_source_outliers,
        r.num_target_unused,
        r.diagnostics.mean_squared_residual,
        r.diagnostics.sinkhorn_iterations,
        r.diagnostics.icp_iterations,
        r.diagnostics.converged
    )
}

pub fn register(args: RegisterArgs) -> Result<()> {
    let cfg = solver_config(&args.solver)?;
    let mut source = io::load_cloud(&args.source).map_err(usage)?;
    let mut target = io::load_cloud(&args.target).map_err(usage)?;

    let result = match args.method {
        Method::Ot => {
            let provider: Box<dyn DescriptorProvider> = match args.provider {
                Provider::Handcrafted => Box::new(LocalGeometryProvider::default()),
                Provider::File => {
                    source = attach(source, args.source_desc.as_ref(), "--source-desc")?;
                    target = attach(target, args.target_desc.as_ref(), "--target-desc")?;
                    Box::new(AttachedDescriptors)
                }
                Provider::Oracle => {
                    let path = args
                        .gt_transform
                        .as_ref()
                        .ok_or_else(|| usage("--provider oracle requires --gt-transform"))?;
                    let t = io::load_transform(path).map_err(usage)?;
                    Box::new(oracle(t, args.solver.oracle_noise, args.seed))
                }
            };
            register_ot(&source, &target, provider.as_ref(), &ot_config(&cfg, &args.solver))
        }
        Method::Icp => {
            let init = match &args.init {
                Some(p) => io::load_transform(p).map_err(usage)?,
                None => RigidTransform::identity(),
            };
            register_icp(&source, &target, &init, &cfg.icp)
        }
    }
    .map_err(|e| runtime(format!("registration failed: {e}")))?;

    emit(&(summary(args.method, &result) + "\n"));
    match &args.out {
        Some(path) => io::save_transform(&result.transform, path).map_err(runtime)?,
        None => emit(&(serde_json::to_string_pretty(&io::TransformRecord::from(&result.transform)).map_err(runtime)? + "\n")),
    }
    Ok(())
}

fn pair_index(dir: &Path, fallback: usize) -> u64 {
    dir.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("pair_"))
        .and_then(|n| n.parse().ok())
        .unwrap_or(fallback as u64)
}

fn run_method(
    method: Method,
    pair: &StoredPair,
    index: u64,
    args: &BenchmarkArgs,
    cfg: &RunConfig,
) -> std::result::Result<RegistrationResult, RegistrationError> {
    match method {
        Method::Ot => {
            let ot = ot_config(cfg, &args.solver);
            match args.provider {
                Provider::Oracle => {
                    let provider = oracle(pair.transform, args.solver.oracle_noise, mix_seed(args.seed, index));
                    register_ot(&pair.source, &pair.target, &provider, &ot)
                }
                Provider::Handcrafted | Provider::File => {
                    register_ot(&pair.source, &pair.target, &LocalGeometryProvider::default(), &ot)
                }
            }
        }
        Method::Icp => register_icp(&pair.source, &pair.target, &RigidTransform::identity(), &cfg.icp),
    }
}

pub fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let cfg = solver_config(&args.solver)?;
    if args.provider == Provider::File {
        return Err(usage("benchmark supports the oracle and handcrafted providers"));
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let dirs = io::list_pair_dirs(&args.dir).map_err(usage)?;
    if dirs.is_empty() {
        return Err(usage(format!("no pairs found in {}", args.dir.display())));
    }

    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (k, dir) in dirs.iter().enumerate() {
        match io::read_pair(dir) {
            Ok(p) => pairs.push((pair_index(dir, k), p)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", dir.display());
                skipped += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(runtime(format!("no readable pairs in {} ({skipped} skipped)", args.dir.display())));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(runtime)?;
    let mut methods = args.methods.clone();
    methods.dedup();
    let gts: Vec<RigidTransform> = pairs.iter().map(|(_, p)| p.transform).collect();
    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    for &method in &methods {
        let predictions: Vec<Option<RigidTransform>> = pool.install(|| {
            pairs
                .par_iter()
                .map(|(index, pair)| run_method(method, pair, *index, &args, &cfg).ok().map(|r| r.transform))
                .collect()
        });
        rows.push((method.name().to_string(), evaluate(&predictions, &gts).map_err(runtime)?));
    }

    emit(&format!(
        "{}# pairs evaluated: {}, corrupt pairs skipped: {skipped}\n",
        to_table(&rows),
        pairs.len()
    ));
    if let Some(path) = &args.csv {
        fs::write(path, to_csv(&rows)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn gt(args: GtArgs) -> Result<()> {
    let source = io::load_cloud(&args.source).map_err(usage)?;
    let target = io::load_cloud(&args.target).map_err(usage)?;
    let transform = io::load_transform(&args.transform).map_err(usage)?;
    let gt = build_ground_truth(&source, &target, &transform, args.threshold).map_err(usage)?;
    let matches = gt.matches();
    emit(&format!(
        "matches={} source_points={} target_points={} source_outliers={} target_outliers={}\n",
        matches.len(),
        source.len(),
        target.len(),
        gt.source_outliers().len(),
        gt.target_outliers().len()
    ));
    if let Some(path) = &args.out {
        let text: String = matches.iter().map(|(i, j)| format!("{i} {j}\n")).collect();
        fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
