//! Experiment harness: one predictor per method over a shared bundle,
//! metrics over a test set, threshold tuning and report emission.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Model};
use crate::conformal::{
    icp_calibrate, icp_predict_from_probs, CalibrationTable, ProbabilisticClassifier,
};
use crate::dataset::Dataset;
use crate::dist::ClassDist;
use crate::error::{Error, Result};
use crate::full::FullProvider;
use crate::hsg::HsgProvider;
use crate::inference::{
    brute_force_bayes, threshold_predict, top_s_predict, Svbop, BRUTE_FORCE_MAX_CLASSES,
};
use crate::sparse::SparseVector;
use crate::utility::UtilitySpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str =
    "method,utility,mean_utility,recall,mean_set_size,top1,t_train_s,t_test_ms";
pub const TIMING_PASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    SvbopFull,
    SvbopHsg {
        k0: usize,
        ef_search: Option<usize>,
    },
    SvbopHf,
    TopS(usize),
    /// `None` until tuned on validation data.
    Threshold(Option<f64>),
    Icp {
        epsilon: f64,
    },
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SvbopFull => "svbop_full",
            Method::SvbopHsg { .. } => "svbop_hsg",
            Method::SvbopHf => "svbop_hf",
            Method::TopS(_) => "top_s",
            Method::Threshold(_) => "threshold",
            Method::Icp { .. } => "icp",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::SvbopHsg { k0, ef_search } => {
                write!(f, "svbop_hsg:k0={k0}")?;
                if let Some(ef) = ef_search {
                    write!(f, ",ef={ef}")?;
                }
                Ok(())
            }
            Method::TopS(s) => write!(f, "top_s:s={s}"),
            Method::Threshold(Some(t)) => write!(f, "threshold:theta={t}"),
            Method::Icp { epsilon } => write!(f, "icp:epsilon={epsilon}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `name[:key=value,...]`, e.g. `top_s:s=3` or `svbop_hsg:k0=10,ef=100`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut params = Vec::new();
        for kv in args.split(',').filter(|a| !a.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::ConfigConflict(format!("expected key=value in `{kv}`")))?;
            params.push((k.trim(), v.trim()));
        }
        let mut take = |key: &str| {
            params
                .iter()
                .position(|p| p.0 == key)
                .map(|i| params.remove(i).1)
        };
        let num = |key: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::ConfigConflict(format!("bad value `{v}` for {key}")))
        };
        let int = |key: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::ConfigConflict(format!("bad value `{v}` for {key}")))
        };
        let method = match name.trim() {
            "svbop_full" | "full" => Method::SvbopFull,
            "svbop_hsg" | "hsg" => Method::SvbopHsg {
                k0: take("k0").map(|v| int("k0", v)).transpose()?.unwrap_or(10),
                ef_search: take("ef").map(|v| int("ef", v)).transpose()?,
            },
            "svbop_hf" | "hf" => Method::SvbopHf,
            "top_s" => Method::TopS(take("s").map(|v| int("s", v)).transpose()?.unwrap_or(1)),
            "threshold" => Method::Threshold(take("theta").map(|v| num("theta", v)).transpose()?),
            "icp" => Method::Icp {
                epsilon: take("epsilon")
                    .map(|v| num("epsilon", v))
                    .transpose()?
                    .unwrap_or(0.1),
            },
            "oracle" => Method::Oracle,
            other => return Err(Error::ConfigConflict(format!("unknown method `{other}`"))),
        };
        if let Some((k, _)) = params.first() {
            return Err(Error::ConfigConflict(format!(
                "method {name} has no parameter `{k}`"
            )));
        }
        Ok(method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    /// Inner products for the HSG provider, node evaluations for the tree
    /// provider, class scores otherwise.
    pub work: usize,
}

/// A method bound to a bundle and a utility.
pub struct Predictor<'a> {
    bundle: &'a Bundle,
    method: Method,
    utility: UtilitySpec,
    svbop: Option<Svbop>,
    calibration: Option<CalibrationTable>,
}

impl<'a> Predictor<'a> {
    pub fn new(bundle: &'a Bundle, method: Method, utility: &UtilitySpec) -> Result<Self> {
        let k = bundle.labels.len();
        let utility = utility.with_classes(k)?;
        let mut svbop = None;
        match method {
            Method::SvbopFull | Method::SvbopHsg { .. } | Method::SvbopHf => {
                svbop = Some(match Svbop::new(&utility, k, false) {
                    Err(Error::UnsupportedUtility(msg)) if !msg.starts_with("reject") => {
                        log::warn!("{msg}; scanning all classes");
                        Svbop::new(&utility, k, true)?
                    }
                    other => other?,
                });
            }
            Method::TopS(s) if s == 0 || s > k => {
                return Err(Error::ConfigConflict(format!(
                    "top_s needs 1 <= s <= {k}, got {s}"
                )));
            }
            Method::Threshold(Some(t)) if !(t > 0.0 && t <= 1.0) => {
                return Err(Error::ConfigConflict(format!(
                    "threshold must lie in (0, 1], got {t}"
                )));
            }
            Method::Icp { epsilon } if !(epsilon > 0.0 && epsilon < 1.0) => {
                return Err(Error::ConfigConflict(format!(
                    "epsilon must lie in (0, 1), got {epsilon}"
                )));
            }
            Method::Oracle if k > BRUTE_FORCE_MAX_CLASSES => {
                return Err(Error::UniverseTooLarge {
                    k,
                    max: BRUTE_FORCE_MAX_CLASSES,
                });
            }
            _ => {}
        }
        match (method, &bundle.model) {
            (Method::SvbopHsg { k0, .. }, Model::Flat(_)) => {
                if bundle.index.is_none() {
                    return Err(Error::ConfigConflict(
                        "svbop_hsg needs a bundle with an index".into(),
                    ));
                }
                if k0 == 0 {
                    return Err(Error::ConfigConflict("k0 must be positive".into()));
                }
            }
            (Method::SvbopHsg { .. }, Model::Tree(_)) => {
                return Err(Error::ConfigConflict("svbop_hsg needs a flat model".into()));
            }
            (Method::SvbopHf, Model::Flat(_)) => {
                return Err(Error::ConfigConflict("svbop_hf needs a tree model".into()));
            }
            _ => {}
        }
        Ok(Predictor {
            bundle,
            method,
            utility,
            svbop,
            calibration: None,
        })
    }

    pub fn with_calibration(mut self, table: CalibrationTable) -> Self {
        self.calibration = Some(table);
        self
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    fn dist(&self, x: &SparseVector) -> Result<ClassDist> {
        ClassDist::from_probs(&self.bundle.model.predict_proba(x)?)
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Prediction> {
        let k = self.bundle.labels.len();
        let (classes, work) = match (self.method, &self.bundle.model) {
            (Method::SvbopFull, Model::Flat(m)) => {
                let mut p = FullProvider::new(m, x, true)?;
                (self.run_svbop(&mut p)?, k)
            }
            (Method::SvbopFull, Model::Tree(_)) => {
                let mut p = FullProvider::from_dist(&self.dist(x)?);
                (self.run_svbop(&mut p)?, k)
            }
            (Method::SvbopHsg { k0, ef_search }, _) => {
                let index = self.bundle.index.as_ref().expect("checked in new");
                let mut p = HsgProvider::new(index, x, k0, ef_search)?;
                let classes = self.run_svbop(&mut p)?;
                (classes, p.dot_products())
            }
            (Method::SvbopHf, Model::Tree(t)) => {
                let mut p = t.provider(x)?;
                let classes = self.run_svbop(&mut p)?;
                (classes, p.node_evaluations())
            }
            (Method::SvbopHf, Model::Flat(_)) => unreachable!("checked in new"),
            (Method::TopS(s), _) => (top_s_predict(&self.dist(x)?, s)?.classes, k),
            (Method::Threshold(theta), _) => {
                let theta = theta
                    .ok_or_else(|| Error::ConfigConflict("threshold has not been tuned".into()))?;
                (threshold_predict(&self.dist(x)?, theta)?.classes, k)
            }
            (Method::Icp { epsilon }, _) => {
                let table = self
                    .calibration
                    .as_ref()
                    .ok_or_else(|| Error::ConfigConflict("icp needs a calibration set".into()))?;
                let probs = self.bundle.model.predict_proba(x)?;
                (icp_predict_from_probs(table, &probs, epsilon), k)
            }
            (Method::Oracle, _) => (brute_force_bayes(&self.dist(x)?, &self.utility)?.classes, k),
        };
        Ok(Prediction { classes, work })
    }

    fn run_svbop<P: crate::inference::ClassProvider>(
        &self,
        provider: &mut P,
    ) -> Result<Vec<usize>> {
        Ok(self
            .svbop
            .as_ref()
            .expect("set for svbop methods")
            .predict(provider)?
            .classes)
    }

    /// `u(y, Ŷ)`, zero for an empty set.
    pub fn realized_utility(&self, y: usize, classes: &[usize]) -> Result<f64> {
        if classes.is_empty() {
            Ok(0.0)
        } else {
            self.utility.eval_u(y, classes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub class: usize,
    pub predicted: Vec<usize>,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub utility: String,
    pub n: usize,
    pub mean_utility: f64,
    pub recall: f64,
    pub mean_set_size: f64,
    pub top1: f64,
    pub t_train_s: f64,
    /// Milliseconds per example, median over timing passes.
    pub t_test_ms: f64,
    pub empty_sets: usize,
    pub mean_work: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<ExampleRecord>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalOptions {
    /// Time the prediction loop; otherwise timings are reported as zero so
    /// that reports are reproducible byte for byte.
    pub timing: bool,
    pub records: bool,
    pub t_train_s: f64,
}

/// Index of the largest probability, smallest id on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (c, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = c;
        }
    }
    best
}

pub fn evaluate(
    predictor: &Predictor<'_>,
    data: &Dataset,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let run = || -> Result<Vec<Prediction>> {
        data.examples()
            .par_iter()
            .map(|(x, _)| predictor.predict(x))
            .collect()
    };
    let predictions = if options.timing {
        let mut times = Vec::with_capacity(TIMING_PASSES);
        let mut first = None;
        for _ in 0..TIMING_PASSES {
            let start = Instant::now();
            let out = run()?;
            times.push(start.elapsed().as_secs_f64());
            first.get_or_insert(out);
        }
        times.sort_by(f64::total_cmp);
        (first.unwrap(), times[TIMING_PASSES / 2])
    } else {
        (run()?, 0.0)
    };
    let (predictions, elapsed) = predictions;

    let top1_hits: Vec<bool> = data
        .examples()
        .par_iter()
        .map(|(x, y)| Ok(argmax(&predictor.bundle.model.predict_proba(x)?) == *y))
        .collect::<Result<_>>()?;

    let n = data.len() as f64;
    let (mut utility, mut hits, mut size, mut work, mut empty) =
        (0.0, 0usize, 0usize, 0usize, 0usize);
    let mut records = options.records.then(Vec::new);
    for ((_, y), pred) in data.examples().iter().zip(&predictions) {
        let u = predictor.realized_utility(*y, &pred.classes)?;
        utility += u;
        hits += usize::from(pred.classes.contains(y));
        size += pred.classes.len();
        work += pred.work;
        empty += usize::from(pred.classes.is_empty());
        if let Some(r) = records.as_mut() {
            r.push(ExampleRecord {
                class: *y,
                predicted: pred.classes.clone(),
                utility: u,
            });
        }
    }
    Ok(MetricsReport {
        method: predictor.method.to_string(),
        utility: predictor.utility.to_string(),
        n: data.len(),
        mean_utility: utility / n,
        recall: hits as f64 / n,
        mean_set_size: size as f64 / n,
        top1: top1_hits.iter().filter(|h| **h).count() as f64 / n,
        t_train_s: options.t_train_s,
        t_test_ms: 1e3 * elapsed / n,
        empty_sets: empty,
        mean_work: work as f64 / n,
        records,
    })
}

/// Candidate thresholds `0.1, 0.2, ..., 1.0`.
pub fn threshold_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Picks the grid threshold with the highest mean realized utility on
/// `validation` (the smallest one on ties). Returns `(theta, utility)`.
pub fn tune_threshold(
    model: &Model,
    validation: &Dataset,
    utility: &UtilitySpec,
) -> Result<(f64, f64)> {
    if validation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let utility = utility.with_classes(model.num_classes())?;
    let grid = threshold_grid();
    let totals: Vec<Vec<f64>> = validation
        .examples()
        .par_iter()
        .map(|(x, y)| {
            let dist = ClassDist::from_probs(&model.predict_proba(x)?)?;
            grid.iter()
                .map(|&t| utility.eval_u(*y, &threshold_predict(&dist, t)?.classes))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut best = (grid[0], f64::NEG_INFINITY);
    for (i, &t) in grid.iter().enumerate() {
        let mean = totals.iter().map(|row| row[i]).sum::<f64>() / validation.len() as f64;
        if mean > best.1 {
            best = (t, mean);
        }
    }
    Ok(best)
}

/// Held-out data some methods need before predicting.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeldOut<'a> {
    pub validation: Option<&'a Dataset>,
    pub calibration: Option<&'a Dataset>,
}

/// Tunes or calibrates as the method requires, then evaluates on `test`.
pub fn run_experiment(
    bundle: &Bundle,
    method: Method,
    utility: &UtilitySpec,
    test: &Dataset,
    held_out: HeldOut<'_>,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let method = match method {
        Method::Threshold(None) => {
            let val = held_out.validation.ok_or_else(|| {
                Error::ConfigConflict("threshold tuning needs validation data".into())
            })?;
            let (theta, _) = tune_threshold(&bundle.model, val, utility)?;
            log::info!("tuned threshold {theta}");
            Method::Threshold(Some(theta))
        }
        m => m,
    };
    let mut predictor = Predictor::new(bundle, method, utility)?;
    if let Method::Icp { .. } = method {
        let calib = held_out
            .calibration
            .ok_or_else(|| Error::ConfigConflict("icp needs calibration data".into()))?;
        predictor = predictor.with_calibration(icp_calibrate(&bundle.model, calib)?);
    }
    evaluate(&predictor, test, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::ConfigConflict(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportFile {
    schema_version: u32,
    reports: Vec<MetricsReport>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// JSON keeps every field and parses back with [`parse_reports`]; CSV has
/// the fixed eight columns with four decimals.
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let file = ReportFile {
                schema_version: REPORT_SCHEMA_VERSION,
                reports: reports.to_vec(),
            };
            serde_json::to_string_pretty(&file).expect("plain data") + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&format!(
                    "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                    csv_field(&r.method),
                    csv_field(&r.utility),
                    r.mean_utility,
                    r.recall,
                    r.mean_set_size,
                    r.top1,
                    r.t_train_s,
                    r.t_test_ms
                ));
            }
            out
        }
    }
}

pub fn parse_reports(json: &str) -> Result<Vec<MetricsReport>> {
    let file: ReportFile =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("report: {e}")))?;
    if file.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported report schema {}",
            file.schema_version
        )));
    }
    Ok(file.reports)
}
