//! Set-based utility functions.
//!
//! A utility `u(c, Ŷ)` rewards a prediction `Ŷ` only when it contains the
//! true class `c`, and then by an amount `g(|Ŷ|)` that depends on the set
//! size alone. Every member of the family is therefore described by the
//! sequence `g(1), g(2), ..., g(K)`, which is what [`UtilitySpec`] encodes.
//!
//! The sequence properties checked here gate the inference algorithms:
//! early stopping requires `g` to be strictly decreasing and `(1/x)`-convex,
//! and a utility that does not dominate precision (`g(s) >= 1/s`) can only
//! ever produce singleton predictions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance used by the sequence-property checkers.
pub const PROPERTY_RTOL: f64 = 1e-12;

/// Smooth stand-in for `beta -> 0` in the generalized reject option utility.
pub const REJECT_SURROGATE_BETA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Utility {
    /// `g(s) = 1/s`
    Precision,
    /// `g(s) = 1`
    Recall,
    /// `g(s) = (1 + beta^2) / (s + beta^2)`
    FBeta { beta: f64 },
    /// `g(s) = delta/s - gamma/s^2`
    Credal { delta: f64, gamma: f64 },
    /// `g(s) = 1 - exp(-delta/s)`
    Exponential { delta: f64 },
    /// `g(s) = ln(1 + 1/s)`
    Logarithmic,
    /// `g(1) = 1`, `g(K) = 1 - alpha`, undefined in between.
    Reject { alpha: f64 },
    /// `g(s) = 1 - alpha * ((s - 1)/(K - 1))^beta`
    GenReject { alpha: f64, beta: f64 },
    /// Explicit table `g(1), g(2), ...`.
    Custom(Vec<f64>),
}

impl Utility {
    fn name(&self) -> &'static str {
        match self {
            Utility::Precision => "precision",
            Utility::Recall => "recall",
            Utility::FBeta { .. } => "fbeta",
            Utility::Credal { .. } => "credal",
            Utility::Exponential { .. } => "exponential",
            Utility::Logarithmic => "logarithmic",
            Utility::Reject { .. } => "reject",
            Utility::GenReject { .. } => "genreject",
            Utility::Custom(_) => "custom",
        }
    }

    fn needs_classes(&self) -> bool {
        matches!(self, Utility::Reject { .. } | Utility::GenReject { .. })
    }
}

/// A validated member of the utility family, optionally bound to a number of
/// classes `K` and optionally rescaled so that `g(1) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    utility: Utility,
    k: Option<usize>,
    scale: f64,
}

impl UtilitySpec {
    pub fn new(utility: Utility, k: Option<usize>) -> Result<Self> {
        let spec = UtilitySpec {
            utility,
            k,
            scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn precision() -> Self {
        UtilitySpec {
            utility: Utility::Precision,
            k: None,
            scale: 1.0,
        }
    }

    pub fn recall() -> Self {
        UtilitySpec {
            utility: Utility::Recall,
            k: None,
            scale: 1.0,
        }
    }

    pub fn fbeta(beta: f64) -> Result<Self> {
        Self::new(Utility::FBeta { beta }, None)
    }

    pub fn f1() -> Self {
        Self::fbeta(1.0).expect("beta = 1 is valid")
    }

    pub fn credal(delta: f64, gamma: f64) -> Result<Self> {
        Self::new(Utility::Credal { delta, gamma }, None)
    }

    pub fn exponential(delta: f64) -> Result<Self> {
        Self::new(Utility::Exponential { delta }, None)
    }

    pub fn logarithmic() -> Self {
        UtilitySpec {
            utility: Utility::Logarithmic,
            k: None,
            scale: 1.0,
        }
    }

    pub fn reject(alpha: f64, k: usize) -> Result<Self> {
        Self::new(Utility::Reject { alpha }, Some(k))
    }

    pub fn gen_reject(alpha: f64, beta: f64, k: usize) -> Result<Self> {
        Self::new(Utility::GenReject { alpha, beta }, Some(k))
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        let k = values.len();
        Self::new(Utility::Custom(values), Some(k))
    }

    pub fn utility(&self) -> &Utility {
        &self.utility
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.k
    }

    /// Binds the spec to `k` classes. Fails if it is already bound to a
    /// different number, or if the parameters are invalid for `k`.
    pub fn with_classes(&self, k: usize) -> Result<Self> {
        match self.k {
            Some(existing) if existing == k => Ok(self.clone()),
            Some(existing) if matches!(self.utility, Utility::Custom(_)) && existing >= k => {
                Ok(UtilitySpec {
                    k: Some(k),
                    ..self.clone()
                })
            }
            Some(existing) => Err(Error::InvalidParams(format!(
                "utility bound to K={existing}, requested K={k}"
            ))),
            None => {
                let spec = UtilitySpec {
                    k: Some(k),
                    ..self.clone()
                };
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    /// Rescaled copy with `g(1) = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let g1 = self.eval_g(1)?;
        if g1 <= 0.0 {
            return Err(Error::NonPositiveG { s: 1 });
        }
        Ok(UtilitySpec {
            scale: self.scale / g1,
            ..self.clone()
        })
    }

    pub fn is_normalized(&self) -> Result<bool> {
        Ok((self.eval_g(1)? - 1.0).abs() <= PROPERTY_RTOL)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::InvalidParams(format!(
                "{}: {msg}",
                self.utility.name()
            )))
        };
        if let Some(0) = self.k {
            return bad("K must be positive");
        }
        match &self.utility {
            Utility::Precision | Utility::Recall | Utility::Logarithmic => {}
            Utility::FBeta { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad("beta must be positive");
                }
            }
            Utility::Exponential { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return bad("delta must be positive");
                }
            }
            Utility::Credal { delta, gamma } => {
                if !(delta.is_finite() && gamma.is_finite()) {
                    return bad("parameters must be finite");
                }
                // Integer maximiser of delta/s - gamma/s^2 lies next to 2*gamma/delta.
                let mut probe = vec![1usize];
                if *gamma > 0.0 && *delta > 0.0 {
                    let peak = 2.0 * gamma / delta;
                    if peak.is_finite() && peak < 1e9 {
                        probe.push(peak.floor().max(1.0) as usize);
                        probe.push(peak.ceil().max(1.0) as usize);
                    }
                }
                if let Some(k) = self.k {
                    probe.retain(|&s| s <= k);
                    probe.extend(1..=k);
                }
                // g(s) >= 0 for every s >= 1 iff delta >= 0 and delta >= gamma.
                if *delta < 0.0 || *delta < *gamma {
                    return bad("g(s) becomes negative");
                }
                for s in probe {
                    let v = self.raw_g(s)?;
                    if !(-PROPERTY_RTOL..=1.0 + PROPERTY_RTOL).contains(&v) {
                        return bad(&format!("g({s}) = {v} outside [0, 1]"));
                    }
                }
            }
            Utility::Reject { alpha } => {
                if !(0.0..=1.0).contains(alpha) {
                    return bad("alpha must lie in [0, 1]");
                }
                if let Some(k) = self.k {
                    if k < 2 {
                        return bad("requires K >= 2");
                    }
                }
            }
            Utility::GenReject { alpha, beta } => {
                if !(0.0..=1.0).contains(alpha) {
                    return bad("alpha must lie in [0, 1]");
                }
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad("beta must be positive");
                }
                if let Some(k) = self.k {
                    if k < 2 {
                        return bad("requires K >= 2");
                    }
                }
            }
            Utility::Custom(values) => {
                if values.is_empty() {
                    return bad("empty table");
                }
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return bad(&format!("value {v} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn raw_g(&self, s: usize) -> Result<f64> {
        let sf = s as f64;
        let v = match &self.utility {
            Utility::Precision => 1.0 / sf,
            Utility::Recall => 1.0,
            Utility::FBeta { beta } => {
                let b2 = beta * beta;
                (1.0 + b2) / (sf + b2)
            }
            Utility::Credal { delta, gamma } => delta / sf - gamma / (sf * sf),
            Utility::Exponential { delta } => 1.0 - (-delta / sf).exp(),
            Utility::Logarithmic => (1.0 + 1.0 / sf).ln(),
            Utility::Reject { alpha } => {
                let k = self.required_k()?;
                if s == 1 {
                    1.0
                } else if s == k {
                    1.0 - alpha
                } else {
                    return Err(Error::UndefinedAtSize { s });
                }
            }
            Utility::GenReject { alpha, beta } => {
                let k = self.required_k()?;
                let frac = (sf - 1.0) / (k as f64 - 1.0);
                1.0 - alpha * frac.powf(*beta)
            }
            Utility::Custom(values) => values[s - 1],
        };
        Ok(v)
    }

    fn required_k(&self) -> Result<usize> {
        self.k.ok_or_else(|| {
            Error::InvalidParams(format!(
                "{} requires the number of classes",
                self.utility.name()
            ))
        })
    }

    /// `g(s)`.
    pub fn eval_g(&self, s: usize) -> Result<f64> {
        let upper = match (&self.utility, self.k) {
            (_, Some(k)) => k,
            (Utility::Custom(values), None) => values.len(),
            _ => usize::MAX,
        };
        if s == 0 || s > upper {
            return Err(Error::SizeOutOfRange { s, k: upper });
        }
        if self.utility.needs_classes() {
            self.required_k()?;
        }
        // clamp rounding residue such as 2.2 - 1.2 = 1.0000000000000002
        Ok((self.scale * self.raw_g(s)?).clamp(0.0, 1.0))
    }

    /// `u(c, Ŷ)`: zero unless the true class is predicted.
    pub fn eval_u(&self, true_class: usize, pred: &[usize]) -> Result<f64> {
        if pred.is_empty() {
            return Err(Error::EmptyPrediction);
        }
        if pred.contains(&true_class) {
            self.eval_g(pred.len())
        } else {
            Ok(0.0)
        }
    }

    /// `[g(1), ..., g(k)]`, bit-identical to repeated [`eval_g`](Self::eval_g).
    pub fn table(&self, k: usize) -> Result<Vec<f64>> {
        (1..=k).map(|s| self.eval_g(s)).collect()
    }

    pub fn is_strictly_decreasing(&self, k: usize) -> Result<bool> {
        let g = self.table(k)?;
        Ok(g.windows(2).all(|w| w[0] - w[1] > tol(w[0], w[1])))
    }

    /// Convexity of the reciprocal sequence `1/g(s)`.
    pub fn is_one_over_x_convex(&self, k: usize) -> Result<bool> {
        let g = self.table(k)?;
        if let Some(s) = g.iter().position(|&v| v <= 0.0) {
            return Err(Error::NonPositiveG { s: s + 1 });
        }
        Ok(g.windows(3).all(|w| {
            let lhs = 2.0 / w[1];
            let rhs = 1.0 / w[0] + 1.0 / w[2];
            lhs <= rhs + tol(lhs, rhs)
        }))
    }

    pub fn is_concave(&self, k: usize) -> Result<bool> {
        let g = self.table(k)?;
        Ok(g.windows(3).all(|w| {
            let lhs = 2.0 * w[1];
            let rhs = w[0] + w[2];
            lhs + tol(lhs, rhs) >= rhs
        }))
    }

    /// Whether `g(s) >= 1/s` for every `s` in `2..=k`. Requires `g(1) = 1`.
    pub fn dominates_precision(&self, k: usize) -> Result<bool> {
        let g1 = self.eval_g(1)?;
        if (g1 - 1.0).abs() > PROPERTY_RTOL {
            return Err(Error::NotNormalized { g1 });
        }
        Ok(self.precision_violation(k)?.is_none())
    }

    /// First `s` with `g(s) < 1/s`, if any.
    pub fn precision_violation(&self, k: usize) -> Result<Option<usize>> {
        for s in 2..=k {
            let g = self.eval_g(s)?;
            let p = 1.0 / s as f64;
            if g + tol(g, p) < p {
                return Ok(Some(s));
            }
        }
        Ok(None)
    }
}

fn tol(a: f64, b: f64) -> f64 {
    PROPERTY_RTOL * a.abs().max(b.abs())
}

/// Parameter region `(alpha_max, beta_min)` of the generalized reject option
/// utility inside which it dominates precision for `k` classes.
pub fn gen_reject_admissible_region(k: usize) -> Result<(f64, f64)> {
    if k < 3 {
        return Err(Error::InvalidParams(format!(
            "admissible region needs K >= 3, got {k}"
        )));
    }
    let kf = k as f64;
    let alpha_max = (kf - 1.0) / kf;
    let beta_min = (kf / 2.0).ln() / (1.0 / (kf - 1.0)).ln() + 1.0;
    Ok((alpha_max, beta_min))
}

impl fmt::Display for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.utility {
            Utility::FBeta { beta } => write!(f, "fbeta:beta={beta}")?,
            Utility::Credal { delta, gamma } => write!(f, "credal:delta={delta},gamma={gamma}")?,
            Utility::Exponential { delta } => write!(f, "exponential:delta={delta}")?,
            Utility::Reject { alpha } => write!(f, "reject:alpha={alpha}")?,
            Utility::GenReject { alpha, beta } => write!(f, "genreject:alpha={alpha},beta={beta}")?,
            Utility::Custom(values) => {
                let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "custom:g={}", parts.join("/"))?
            }
            other => write!(f, "{}", other.name())?,
        }
        if self.scale != 1.0 {
            write!(f, "[normalized]")?;
        }
        Ok(())
    }
}

/// Parses `kind[:param=value,...]`, e.g. `fbeta:beta=1`,
/// `credal:delta=2.2,gamma=1.2`, `genreject:alpha=0.9,beta=2`.
///
/// Extra keys: `k=<classes>` binds the number of classes, `normalize=true`
/// rescales to `g(1) = 1`. `f1` is shorthand for `fbeta:beta=1`.
impl FromStr for UtilitySpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = match text.split_once(':') {
            Some((kind, rest)) => (kind.trim(), rest),
            None => (text, ""),
        };
        let mut params: Vec<(String, String)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParams(format!("expected key=value, got `{part}`")))?;
            params.push((key.trim().to_ascii_lowercase(), value.trim().to_string()));
        }
        let mut take = |key: &str| -> Option<String> {
            let pos = params.iter().position(|(k, _)| k == key)?;
            Some(params.remove(pos).1)
        };
        let num = |value: Option<String>, key: &str| -> Result<Option<f64>> {
            value
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidParams(format!("{key}: not a number: `{v}`")))
                })
                .transpose()
        };
        let need = |value: Option<f64>, key: &str| {
            value.ok_or_else(|| Error::InvalidParams(format!("{kind}: missing `{key}`")))
        };

        let k = num(take("k"), "k")?.map(|v| v as usize);
        let normalize = matches!(take("normalize").as_deref(), Some("true" | "1" | "yes"));
        let utility = match kind.to_ascii_lowercase().as_str() {
            "precision" => Utility::Precision,
            "recall" => Utility::Recall,
            "f1" => Utility::FBeta { beta: 1.0 },
            "fbeta" => Utility::FBeta {
                beta: need(num(take("beta"), "beta")?, "beta")?,
            },
            "credal" => Utility::Credal {
                delta: need(num(take("delta"), "delta")?, "delta")?,
                gamma: need(num(take("gamma"), "gamma")?, "gamma")?,
            },
            "exponential" | "exp" => Utility::Exponential {
                delta: need(num(take("delta"), "delta")?, "delta")?,
            },
            "logarithmic" | "log" => Utility::Logarithmic,
            "reject" => Utility::Reject {
                alpha: need(num(take("alpha"), "alpha")?, "alpha")?,
            },
            "genreject" | "gen_reject" => Utility::GenReject {
                alpha: need(num(take("alpha"), "alpha")?, "alpha")?,
                beta: need(num(take("beta"), "beta")?, "beta")?,
            },
            "custom" => {
                let table =
                    take("g").ok_or_else(|| Error::InvalidParams("custom: missing `g`".into()))?;
                let values = table
                    .split('/')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidParams(format!("custom: bad value `{v}`")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Utility::Custom(values)
            }
            other => return Err(Error::InvalidParams(format!("unknown utility `{other}`"))),
        };
        if let Some((key, _)) = params.first() {
            return Err(Error::InvalidParams(format!(
                "{kind}: unknown parameter `{key}`"
            )));
        }
        let k = match (&utility, k) {
            (Utility::Custom(values), None) => Some(values.len()),
            (_, k) => k,
        };
        let spec = UtilitySpec::new(utility, k)?;
        if normalize {
            spec.normalized()
        } else {
            Ok(spec)
        }
    }
}
