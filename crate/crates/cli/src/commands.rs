use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use svbop_core::conformal::icp_calibrate;
use svbop_core::dataset::{format_svmlight, read_svmlight};
use svbop_core::eval::{
    emit_report, run_experiment, tune_threshold, EvalOptions, HeldOut, ReportFormat,
};
use svbop_core::hnsw::{HnswIndex, HnswParams};
use svbop_core::linear::{prune_weights, train_flat, TrainConfig};
use svbop_core::synth::{dirichlet_dists, GaussianBlobs, SoftmaxTeacher};
use svbop_core::tree::{
    build_2means_tree, build_huffman_tree, class_profiles, format_hierarchy, load_hierarchy,
    random_binary_tree,
};
use svbop_core::{
    brute_force_bayes, expected_utility, train_tree, Bundle, ClassDist, Dataset, Error,
    FullProvider, LabelTree, Method, Model, Predictor, Result, Svbop, TreeModel, UtilitySpec,
};

use crate::args::*;

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    }
}

/// Names the file in I/O errors.
fn at(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| at(path)(e.into()))
}

fn load_bundle(path: &Path) -> Result<Bundle> {
    Bundle::load(path).map_err(at(path))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| at(path)(e.into()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_training(path: &Path, data: &DataArgs) -> Result<Dataset> {
    read_svmlight(path, data.index_base)
        .map_err(at(path))?
        .into_dataset(None)
}

/// Reads `path` in the label space and feature space of `bundle`.
fn load_for_bundle(path: &Path, data: &DataArgs, bundle: &Bundle) -> Result<Dataset> {
    read_svmlight(path, data.index_base)
        .map_err(at(path))?
        .into_dataset(Some(&bundle.labels))?
        .with_dim(bundle.model.dim())
}

struct Partition {
    fit: Dataset,
    validation: Dataset,
    calibration: Dataset,
}

/// Seeded split of a training file. `train`, `predict` and `eval` derive the
/// same partition from the same file, fractions and seed.
fn partition(data: &Dataset, held: &HoldOutArgs, seed: u64) -> Result<Partition> {
    let (rest, calibration) = data.split(held.calib_split, seed)?;
    let (fit, validation) = rest.split(held.val_split, seed.wrapping_add(1))?;
    if fit.is_empty() {
        return Err(Error::ConfigConflict(
            "hold-out fractions leave no training examples".into(),
        ));
    }
    Ok(Partition {
        fit,
        validation,
        calibration,
    })
}

fn train_config(opts: &TrainOpts) -> TrainConfig {
    TrainConfig {
        c: opts.c,
        eps_l: opts.eps_l,
        max_iter: opts.max_iter,
        bias: !opts.no_bias,
    }
}

fn build_tree(kind: TreeKind, data: &Dataset, opts: &TreeArgs, seed: u64) -> Result<LabelTree> {
    match kind {
        TreeKind::TwoMeans => {
            build_2means_tree(&class_profiles(data), opts.max_leaf, opts.eps_c, seed)
        }
        TreeKind::Huffman => {
            let freqs: Vec<f64> = data.class_counts().iter().map(|&n| n as f64).collect();
            build_huffman_tree(&freqs)
        }
        TreeKind::Random => random_binary_tree(data.num_classes(), seed),
    }
}

fn prune_model(model: Model, eta: f64) -> Result<Model> {
    Ok(match model {
        Model::Flat(m) => {
            let (pruned, stats) = prune_weights(&m, eta);
            log::info!(
                "pruning kept {} of {} weights",
                stats.nonzero_after,
                stats.nonzero_before
            );
            Model::Flat(pruned)
        }
        Model::Tree(t) => {
            let nodes = t
                .node_models()
                .iter()
                .map(|m| m.as_ref().map(|m| prune_weights(m, eta).0))
                .collect();
            Model::Tree(TreeModel::new(t.tree().clone(), nodes, t.dim())?)
        }
    })
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    bundle: &'a Path,
    kind: &'static str,
    classes: usize,
    dim: usize,
    train_examples: usize,
    index: bool,
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let data = load_training(&args.data, &args.data_opts)?;
    let part = partition(&data, &args.held_out, seed)?;
    let config = train_config(&args.train);
    let tree = match (&args.tree, args.tree_kind) {
        (Some(path), _) => Some(load_hierarchy(&read_text(path)?, Some(data.num_classes()))?),
        (None, Some(kind)) => Some(build_tree(kind, &part.fit, &args.tree_opts, seed)?),
        (None, None) => None,
    };
    if tree.is_some() && args.index {
        return Err(Error::ConfigConflict("an index needs a flat model".into()));
    }
    let start = Instant::now();
    let mut model = match tree {
        Some(tree) => Model::Tree(train_tree(tree, &part.fit, &config)?),
        None => Model::Flat(train_flat(&part.fit, &config)?),
    };
    if let Some(eta) = args.train.prune {
        model = prune_model(model, eta)?;
    }
    log::info!("trained in {:.3}s", start.elapsed().as_secs_f64());
    let mut bundle = Bundle::new(data.labels().clone(), model)?;
    if args.index {
        let Model::Flat(m) = &bundle.model else {
            unreachable!()
        };
        let index = HnswIndex::from_model(m, index_params(&args.index_opts, seed))?;
        bundle = bundle.with_index(index)?;
    }
    bundle.train = Some(config);
    bundle.prune_eta = args.train.prune;
    bundle.save(&args.out).map_err(at(&args.out))?;
    let summary = TrainSummary {
        bundle: &args.out,
        kind: match bundle.model {
            Model::Flat(_) => "flat",
            Model::Tree(_) => "tree",
        },
        classes: data.num_classes(),
        dim: data.dim(),
        train_examples: part.fit.len(),
        index: bundle.index.is_some(),
    };
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    Ok(())
}

fn index_params(opts: &IndexOpts, seed: u64) -> HnswParams {
    HnswParams {
        m: opts.m,
        ef_construction: opts.ef_construction,
        seed,
        augmented: opts.augmented,
    }
}

pub fn tree_build(args: &TreeBuildArgs, seed: u64) -> Result<()> {
    let data = load_training(&args.data, &args.data_opts)?;
    let tree = build_tree(args.kind, &data, &args.tree_opts, seed)?;
    write_output(args.out.as_deref(), &format_hierarchy(&tree))
}

pub fn index_build(args: &IndexBuildArgs, seed: u64) -> Result<()> {
    let bundle = load_bundle(&args.model)?;
    let Model::Flat(m) = &bundle.model else {
        return Err(Error::ConfigConflict("an index needs a flat model".into()));
    };
    let index = HnswIndex::from_model(m, index_params(&args.index_opts, seed))?;
    bundle
        .with_index(index)?
        .save(&args.model)
        .map_err(at(&args.model))
}

fn needs_held_out(method: Method) -> bool {
    matches!(method, Method::Threshold(None) | Method::Icp { .. })
}

fn held_out_for(
    bundle: &Bundle,
    train: Option<&Path>,
    data: &DataArgs,
    held: &HoldOutArgs,
    seed: u64,
) -> Result<Option<Partition>> {
    train
        .map(|path| partition(&load_for_bundle(path, data, bundle)?, held, seed))
        .transpose()
}

pub fn predict(args: &PredictArgs, seed: u64, format: Format) -> Result<()> {
    let bundle = load_bundle(&args.model)?;
    let data = load_for_bundle(&args.data, &args.data_opts, &bundle)?;
    let utility: UtilitySpec = args.method.utility.parse()?;
    let mut method: Method = args.method.method.parse()?;
    let held = held_out_for(
        &bundle,
        args.method.train.as_deref(),
        &args.data_opts,
        &args.method.held_out,
        seed,
    )?;
    if needs_held_out(method) && held.is_none() {
        return Err(Error::ConfigConflict(format!(
            "{} needs --train for held-out data",
            method.name()
        )));
    }
    if let (Method::Threshold(None), Some(h)) = (method, &held) {
        method = Method::Threshold(Some(
            tune_threshold(&bundle.model, &h.validation, &utility)?.0,
        ));
    }
    let mut predictor = Predictor::new(&bundle, method, &utility)?;
    if let (Method::Icp { .. }, Some(h)) = (method, &held) {
        predictor = predictor.with_calibration(icp_calibrate(&bundle.model, &h.calibration)?);
    }
    let sets = data
        .examples()
        .par_iter()
        .map(|(x, _)| {
            let p = predictor.predict(x)?;
            Ok(p.classes
                .iter()
                .map(|&c| bundle.labels.label_of(c))
                .collect::<Vec<i64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let text = match format {
        Format::Json => {
            serde_json::to_string(
                &serde_json::json!({ "method": method.to_string(), "predictions": sets }),
            )
            .expect("serializable")
                + "\n"
        }
        Format::Csv => {
            let mut out = String::from("example,labels\n");
            for (i, labels) in sets.iter().enumerate() {
                let joined: Vec<String> = labels.iter().map(i64::to_string).collect();
                writeln!(out, "{i},{}", joined.join(" ")).unwrap();
            }
            out
        }
    };
    write_output(args.out.as_deref(), &text)
}

fn parse_icp(spec: &str) -> Result<Method> {
    let value = spec.trim().strip_prefix("epsilon=").unwrap_or(spec.trim());
    let epsilon: f64 = value.parse().map_err(|_| {
        Error::ConfigConflict(format!("bad --icp value `{spec}`, expected epsilon=E"))
    })?;
    Ok(Method::Icp { epsilon })
}

pub fn eval(args: &EvalArgs, seed: u64, format: Format) -> Result<()> {
    let timing = !args.no_timing;
    let (bundle, trained, t_train_s) = match (&args.model, &args.train) {
        (Some(path), _) => (load_bundle(path)?, None, 0.0),
        (None, Some(train)) => {
            let data = load_training(train, &args.data_opts)?;
            let part = partition(&data, &args.held_out, seed)?;
            let config = train_config(&args.train_opts);
            let start = Instant::now();
            let mut model = Model::Flat(train_flat(&part.fit, &config)?);
            if let Some(eta) = args.train_opts.prune {
                model = prune_model(model, eta)?;
            }
            let secs = if timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            let mut bundle = Bundle::new(data.labels().clone(), model)?;
            bundle.train = Some(config);
            bundle.prune_eta = args.train_opts.prune;
            (bundle, Some(part), secs)
        }
        (None, None) => {
            return Err(Error::ConfigConflict(
                "eval needs --model or --train".into(),
            ))
        }
    };
    let held = match trained {
        Some(part) => Some(part),
        None => held_out_for(
            &bundle,
            args.train.as_deref(),
            &args.data_opts,
            &args.held_out,
            seed,
        )?,
    };
    let test = load_for_bundle(&args.test, &args.data_opts, &bundle)?;
    let mut methods = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<Method>>>()?;
    if let Some(icp) = &args.icp {
        methods.push(parse_icp(icp)?);
    }
    let utilities = args
        .utilities
        .iter()
        .map(|u| u.parse())
        .collect::<Result<Vec<UtilitySpec>>>()?;
    let held_out = HeldOut {
        validation: held.as_ref().map(|p| &p.validation),
        calibration: held.as_ref().map(|p| &p.calibration),
    };
    let options = EvalOptions {
        timing,
        records: args.records,
        t_train_s,
    };
    let mut reports = Vec::new();
    for utility in &utilities {
        for &method in &methods {
            reports.push(run_experiment(
                &bundle, method, utility, &test, held_out, &options,
            )?);
        }
    }
    write_output(
        args.out.as_deref(),
        &emit_report(&reports, report_format(format)),
    )
}

fn read_dists(path: &Path) -> Result<Vec<ClassDist>> {
    let text = read_text(path)?;
    let mut dists = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let masses = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        dists.push(ClassDist::from_probs(&masses)?);
    }
    Ok(dists)
}

#[derive(Serialize)]
struct OracleReport {
    utility: String,
    draws: usize,
    mismatches: usize,
    max_abs_diff: f64,
}

pub fn oracle_check(args: &OracleArgs, seed: u64, format: Format) -> Result<()> {
    let dists = match &args.input {
        Some(path) => read_dists(path)?,
        None => dirichlet_dists(args.classes, args.draws, args.alpha, seed)?,
    };
    let mut reports = Vec::new();
    for text in &args.utilities {
        let spec: UtilitySpec = text.parse()?;
        let outcomes = dists
            .par_iter()
            .map(|dist| {
                let k = dist.len();
                let spec = spec.with_classes(k)?;
                let svbop = match Svbop::new(&spec, k, false) {
                    Err(Error::UnsupportedUtility(_)) => Svbop::new(&spec, k, true)?,
                    other => other?,
                };
                let got = svbop.predict(&mut FullProvider::from_dist(dist))?;
                let best = brute_force_bayes(dist, &spec)?;
                Ok((expected_utility(dist, &got.classes, &spec)?
                    - expected_utility(dist, &best.classes, &spec)?)
                .abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        reports.push(OracleReport {
            utility: text.clone(),
            draws: outcomes.len(),
            mismatches: outcomes.iter().filter(|&&d| d > args.tolerance).count(),
            max_abs_diff: outcomes.iter().copied().fold(0.0, f64::max),
        });
    }
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&reports).expect("serializable") + "\n",
        Format::Csv => {
            let mut out = String::from("utility,draws,mismatches,max_abs_diff\n");
            for r in &reports {
                writeln!(
                    out,
                    "{},{},{},{:e}",
                    r.utility, r.draws, r.mismatches, r.max_abs_diff
                )
                .unwrap();
            }
            out
        }
    };
    print!("{text}");
    let failed: usize = reports.iter().map(|r| r.mismatches).sum();
    if failed > 0 {
        return Err(Error::Invariant(format!(
            "{failed} predictions differ from exhaustive search"
        )));
    }
    Ok(())
}

pub fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let sample_seed = args.sample_seed.unwrap_or(seed.wrapping_add(1));
    let text = match args.kind {
        SynthKind::Blobs => format_svmlight(
            &GaussianBlobs::new(args.classes, args.dim, args.separation, seed)?
                .sample(args.n, sample_seed),
            args.data_opts.index_base,
        ),
        SynthKind::Teacher => format_svmlight(
            &SoftmaxTeacher::new(args.classes, args.dim, args.separation, seed)?
                .sample(args.n, sample_seed),
            args.data_opts.index_base,
        ),
        SynthKind::Dirichlet => {
            let mut out = String::new();
            for dist in dirichlet_dists(args.classes, args.n, args.alpha, seed)? {
                let masses: Vec<String> =
                    (0..dist.len()).map(|c| dist.mass(c).to_string()).collect();
                writeln!(out, "{}", masses.join(" ")).unwrap();
            }
            out
        }
    };
    write_output(args.out.as_deref(), &text)
}
