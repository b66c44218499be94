//! Class-conditional Gaussian density models with exact conditioning.
//!
//! A [`GaussianClassModel`] stores one Gaussian per class (diagonal or full
//! covariance) plus class priors. Conditionals `P(x_S | x_T, y = c)` are
//! evaluated in closed form through the Schur complement, so chained
//! attribute scores telescope exactly to the joint log-likelihood ratio.
//!
//! The free functions in this module validate their inputs and work against
//! any [`DensityBackend`]; backends only see pre-validated index sets.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WoeError};
use crate::evidence::Evidence;
use crate::hypothesis::HypothesisSet;
use crate::math::{log_sum_exp, normal_log_pdf, softmax, LN_2PI};

/// Current model file format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Tolerance on `Σ priors = 1`.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

/// A likelihood model over `num_features` real features and
/// `num_classes` labels.
///
/// Implementations may assume that `target` and `prefix` are in-bounds,
/// duplicate-free, disjoint, and that `x_target`/`x_prefix` have matching
/// lengths with finite entries. Callers go through
/// [`class_conditional_log_density`] which enforces this.
pub trait DensityBackend: Sync {
    fn num_classes(&self) -> usize;

    fn num_features(&self) -> usize;

    /// `ln P(y = class)`.
    fn log_prior(&self, class: usize) -> f64;

    /// `ln p(x_target | x_prefix, y = class)`. An empty prefix gives the
    /// marginal density of the target coordinates.
    fn conditional_log_density(
        &self,
        class: usize,
        target: &[usize],
        x_target: &[f64],
        prefix: &[usize],
        x_prefix: &[f64],
    ) -> Result<f64>;

    /// Mean and variance of the 1-D marginal of `feature` under `class`,
    /// when the backend knows them in closed form.
    fn marginal_moments(&self, _class: usize, _feature: usize) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Diagonal,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Per-feature variances.
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

/// Parameters of one class, as supplied to [`GaussianClassModel::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassParams {
    pub prior: f64,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

#[derive(Debug, Clone)]
struct ClassDensity {
    params: ClassParams,
    log_prior: f64,
    // Cholesky factor of the full covariance and its log-determinant, used
    // for the common "all features, no prefix" evaluation.
    joint: Option<(DMatrix<f64>, f64)>,
}

/// Per-class Gaussians plus class priors.
#[derive(Debug, Clone)]
pub struct GaussianClassModel {
    mode: CovarianceMode,
    feature_names: Vec<String>,
    classes: Vec<ClassDensity>,
}

impl GaussianClassModel {
    /// Builds a model from explicit parameters, checking every invariant.
    pub fn from_parts(
        mode: CovarianceMode,
        feature_names: Vec<String>,
        classes: Vec<ClassParams>,
    ) -> Result<Self> {
        let n = feature_names.len();
        if n == 0 {
            return Err(WoeError::InvalidModel("model has no features".into()));
        }
        if classes.is_empty() {
            return Err(WoeError::InvalidModel("model has no classes".into()));
        }
        let prior_sum: f64 = classes.iter().map(|c| c.prior).sum();
        if (prior_sum - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(WoeError::InvalidModel(format!(
                "class priors sum to {prior_sum}, expected 1"
            )));
        }
        let mut dens = Vec::with_capacity(classes.len());
        for (label, params) in classes.into_iter().enumerate() {
            dens.push(ClassDensity::new(label, mode, n, params)?);
        }
        Ok(Self {
            mode,
            feature_names,
            classes: dens,
        })
    }

    /// Fits one Gaussian per class by maximum likelihood. The number of
    /// classes is `max(label) + 1` (at least 2).
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[usize],
        mode: CovarianceMode,
        variance_floor: f64,
    ) -> Result<Self> {
        let k = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
        Self::fit_with_classes(rows, labels, k, mode, variance_floor)
    }

    /// As [`fit`](Self::fit) with an explicit label universe `0..num_classes`.
    ///
    /// Means and covariances use the `1/N_c` estimator. Diagonal variances are
    /// floored at `variance_floor`; full covariances get `variance_floor · I`
    /// added. Priors are class frequencies.
    pub fn fit_with_classes(
        rows: &[Vec<f64>],
        labels: &[usize],
        num_classes: usize,
        mode: CovarianceMode,
        variance_floor: f64,
    ) -> Result<Self> {
        if !(variance_floor > 0.0 && variance_floor.is_finite()) {
            return Err(WoeError::InvalidParameter(format!(
                "variance floor must be positive and finite, got {variance_floor}"
            )));
        }
        let n = check_matrix(rows)?;
        if labels.len() != rows.len() {
            return Err(WoeError::InvalidData(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(WoeError::UnknownLabel { label, num_classes });
        }

        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); num_classes];
        for (row, &label) in rows.iter().zip(labels) {
            members[label].push(row);
        }
        if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 2) {
            return Err(WoeError::InsufficientData {
                class,
                count: m.len(),
            });
        }

        let total = rows.len() as f64;
        let classes = members
            .iter()
            .map(|m| {
                let count = m.len() as f64;
                let mut mean = vec![0.0; n];
                for row in m {
                    for (acc, v) in mean.iter_mut().zip(row.iter()) {
                        *acc += v;
                    }
                }
                mean.iter_mut().for_each(|v| *v /= count);

                let covariance = match mode {
                    CovarianceMode::Diagonal => {
                        let mut var = vec![0.0; n];
                        for row in m {
                            for j in 0..n {
                                let d = row[j] - mean[j];
                                var[j] += d * d;
                            }
                        }
                        Covariance::Diagonal(
                            var.into_iter()
                                .map(|v| (v / count).max(variance_floor))
                                .collect(),
                        )
                    }
                    CovarianceMode::Full => {
                        let mut cov = DMatrix::<f64>::zeros(n, n);
                        for row in m {
                            for i in 0..n {
                                let di = row[i] - mean[i];
                                for j in i..n {
                                    cov[(i, j)] += di * (row[j] - mean[j]);
                                }
                            }
                        }
                        for i in 0..n {
                            for j in i..n {
                                let v = cov[(i, j)] / count;
                                cov[(i, j)] = v;
                                cov[(j, i)] = v;
                            }
                            cov[(i, i)] += variance_floor;
                        }
                        Covariance::Full(cov)
                    }
                };
                ClassParams {
                    prior: count / total,
                    mean,
                    covariance,
                }
            })
            .collect();
        Self::from_parts(mode, default_feature_names(n), classes)
    }

    /// Replaces the feature names (length must equal the feature count).
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.feature_names.len() {
            return Err(WoeError::InvalidModel(format!(
                "{} feature names for {} features",
                names.len(),
                self.feature_names.len()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_params(&self, class: usize) -> &ClassParams {
        &self.classes[class].params
    }

    pub fn prior(&self, class: usize) -> f64 {
        self.classes[class].params.prior
    }

    pub fn priors(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.params.prior).collect()
    }

    /// Serialises to the versioned JSON model format.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            mode: self.mode,
            feature_names: self.feature_names.clone(),
            classes: self
                .classes
                .iter()
                .enumerate()
                .map(|(label, c)| {
                    let (cov, var) = match &c.params.covariance {
                        Covariance::Diagonal(v) => (None, Some(v.clone())),
                        Covariance::Full(m) => (
                            Some(m.row_iter().map(|r| r.iter().copied().collect()).collect()),
                            None,
                        ),
                    };
                    ClassFile {
                        label,
                        prior: c.params.prior,
                        mean: c.params.mean.clone(),
                        cov,
                        var,
                    }
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("model serialises");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| WoeError::InvalidModel(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(WoeError::InvalidModel(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        let n = file.feature_names.len();
        let mut classes = Vec::with_capacity(file.classes.len());
        for (position, c) in file.classes.into_iter().enumerate() {
            if c.label != position {
                return Err(WoeError::InvalidModel(format!(
                    "class entries must be listed by label 0..K-1; found label {} at position {position}",
                    c.label
                )));
            }
            let covariance = match (file.mode, c.cov, c.var) {
                (CovarianceMode::Diagonal, None, Some(var)) => Covariance::Diagonal(var),
                (CovarianceMode::Full, Some(rows), None) => {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(WoeError::InvalidModel(format!(
                            "class {position}: covariance must be {n}x{n}"
                        )));
                    }
                    Covariance::Full(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                }
                (CovarianceMode::Diagonal, ..) => {
                    return Err(WoeError::InvalidModel(format!(
                        "class {position}: diagonal mode requires 'var' and no 'cov'"
                    )))
                }
                (CovarianceMode::Full, ..) => {
                    return Err(WoeError::InvalidModel(format!(
                        "class {position}: full mode requires 'cov' and no 'var'"
                    )))
                }
            };
            classes.push(ClassParams {
                prior: c.prior,
                mean: c.mean,
                covariance,
            });
        }
        Self::from_parts(file.mode, file.feature_names, classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text)?)
    }
}

/// Failure reading a model file.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] WoeError),
}

impl ClassDensity {
    fn new(label: usize, mode: CovarianceMode, n: usize, params: ClassParams) -> Result<Self> {
        let bad = |msg: String| WoeError::InvalidModel(format!("class {label}: {msg}"));
        if !(params.prior > 0.0 && params.prior.is_finite()) {
            return Err(bad(format!("prior must be positive, got {}", params.prior)));
        }
        if params.mean.len() != n || params.mean.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("mean must hold {n} finite values")));
        }
        let joint = match (&params.covariance, mode) {
            (Covariance::Diagonal(var), CovarianceMode::Diagonal) => {
                if var.len() != n || var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(bad(format!("variances must be {n} positive finite values")));
                }
                None
            }
            (Covariance::Full(cov), CovarianceMode::Full) => {
                if cov.nrows() != n || cov.ncols() != n {
                    return Err(bad(format!("covariance must be {n}x{n}")));
                }
                if cov.iter().any(|v| !v.is_finite()) {
                    return Err(bad("covariance has non-finite entries".into()));
                }
                for i in 0..n {
                    for j in 0..i {
                        let (a, b) = (cov[(i, j)], cov[(j, i)]);
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                            return Err(bad(format!("covariance is not symmetric at ({i},{j})")));
                        }
                    }
                }
                let chol = Cholesky::new(cov.clone())
                    .ok_or_else(|| bad("covariance is not positive definite".into()))?;
                let l = chol.unpack();
                let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                Some((l, log_det))
            }
            _ => return Err(bad("covariance kind does not match model mode".into())),
        };
        Ok(Self {
            log_prior: params.prior.ln(),
            params,
            joint,
        })
    }

    fn log_density(
        &self,
        class: usize,
        target: &[usize],
        x_target: &[f64],
        prefix: &[usize],
        x_prefix: &[f64],
    ) -> Result<f64> {
        let mean = &self.params.mean;
        match &self.params.covariance {
            // Independent features: the prefix carries no information.
            Covariance::Diagonal(var) => Ok(target
                .iter()
                .zip(x_target)
                .map(|(&j, &x)| normal_log_pdf(x, mean[j], var[j]))
                .sum()),
            Covariance::Full(cov) => {
                let is_joint = prefix.is_empty()
                    && target.len() == mean.len()
                    && target.iter().enumerate().all(|(i, &j)| i == j);
                if let (true, Some((l, log_det))) = (is_joint, &self.joint) {
                    let d = DVector::from_iterator(
                        target.len(),
                        x_target.iter().zip(mean).map(|(x, m)| x - m),
                    );
                    return Ok(gaussian_log_pdf_factored(l, *log_det, d));
                }

                let sub = |rows: &[usize], cols: &[usize]| {
                    DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])])
                };
                let mut d = DVector::from_iterator(
                    target.len(),
                    target.iter().zip(x_target).map(|(&j, x)| x - mean[j]),
                );
                let mut cond_cov = sub(target, target);
                if !prefix.is_empty() {
                    let prefix_chol = Cholesky::new(sub(prefix, prefix)).ok_or_else(|| {
                        WoeError::NumericalConditioning(format!(
                            "class {class}: prefix covariance is singular"
                        ))
                    })?;
                    let dp = DVector::from_iterator(
                        prefix.len(),
                        prefix.iter().zip(x_prefix).map(|(&j, x)| x - mean[j]),
                    );
                    let cross = sub(target, prefix);
                    // μ_{S|T} = μ_S + Σ_ST Σ_TT⁻¹ (x_T − μ_T)
                    d -= &cross * prefix_chol.solve(&dp);
                    // Σ_{S|T} = Σ_SS − Σ_ST Σ_TT⁻¹ Σ_TS
                    cond_cov -= &cross * prefix_chol.solve(&cross.transpose());
                    cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
                }
                let chol = Cholesky::new(cond_cov).ok_or_else(|| {
                    WoeError::NumericalConditioning(format!(
                        "class {class}: conditional covariance is not positive definite"
                    ))
                })?;
                let l = chol.unpack();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(gaussian_log_pdf_factored(&l, log_det, d))
            }
        }
    }
}

fn gaussian_log_pdf_factored(l: &DMatrix<f64>, log_det: f64, d: DVector<f64>) -> f64 {
    let k = d.len() as f64;
    let z = l
        .solve_lower_triangular(&d)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * (k * LN_2PI + log_det + z.norm_squared())
}

impl DensityBackend for GaussianClassModel {
    fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    fn log_prior(&self, class: usize) -> f64 {
        self.classes[class].log_prior
    }

    fn conditional_log_density(
        &self,
        class: usize,
        target: &[usize],
        x_target: &[f64],
        prefix: &[usize],
        x_prefix: &[f64],
    ) -> Result<f64> {
        self.classes[class].log_density(class, target, x_target, prefix, x_prefix)
    }

    fn marginal_moments(&self, class: usize, feature: usize) -> Option<(f64, f64)> {
        let p = &self.classes[class].params;
        let var = match &p.covariance {
            Covariance::Diagonal(v) => v[feature],
            Covariance::Full(m) => m[(feature, feature)],
        };
        Some((p.mean[feature], var))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    mode: CovarianceMode,
    feature_names: Vec<String>,
    classes: Vec<ClassFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassFile {
    label: usize,
    prior: f64,
    mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var: Option<Vec<f64>>,
}

/// `x0, x1, …` names for unnamed features.
pub fn default_feature_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Default variance floor: `1e-6 ×` the mean marginal variance of `rows`.
pub fn default_variance_floor(rows: &[Vec<f64>]) -> f64 {
    let n = rows.first().map_or(0, Vec::len);
    if rows.len() < 2 || n == 0 {
        return 1e-12;
    }
    let count = rows.len() as f64;
    let mean_var = (0..n)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / count;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / count
        })
        .sum::<f64>()
        / n as f64;
    let floor = 1e-6 * mean_var;
    if floor > 0.0 && floor.is_finite() {
        floor
    } else {
        1e-12
    }
}

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| WoeError::InvalidData("no rows".into()))?;
    if n == 0 {
        return Err(WoeError::InvalidData("rows have no features".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(WoeError::InvalidData(format!(
                "row {i} has {} values, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(WoeError::InvalidData(format!(
                "row {i}, feature {j} is not finite ({})",
                row[j]
            )));
        }
    }
    Ok(n)
}

fn check_indices(n: usize, indices: &[usize], values: &[f64], what: &str) -> Result<()> {
    if indices.len() != values.len() {
        return Err(WoeError::InvalidEvidence(format!(
            "{what}: {} indices but {} values",
            indices.len(),
            values.len()
        )));
    }
    let mut seen = vec![false; n];
    for (&j, &x) in indices.iter().zip(values) {
        if j >= n {
            return Err(WoeError::InvalidPartition(format!(
                "{what} index {j} out of range for {n} features"
            )));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(WoeError::InvalidPartition(format!(
                "{what} lists feature {j} twice"
            )));
        }
        if !x.is_finite() {
            return Err(WoeError::InvalidEvidence(format!(
                "{what} value for feature {j} is not finite"
            )));
        }
    }
    Ok(())
}

fn check_query<M: DensityBackend + ?Sized>(
    model: &M,
    target: &[usize],
    x_target: &[f64],
    prefix: &[usize],
    x_prefix: &[f64],
) -> Result<()> {
    let n = model.num_features();
    check_indices(n, target, x_target, "target")?;
    check_indices(n, prefix, x_prefix, "prefix")?;
    if let Some(j) = target.iter().find(|j| prefix.contains(j)) {
        return Err(WoeError::InvalidPartition(format!(
            "feature {j} is in both target and prefix"
        )));
    }
    Ok(())
}

/// `ln p(x_target | x_prefix, y = class)` with full input validation.
pub fn class_conditional_log_density<M: DensityBackend + ?Sized>(
    model: &M,
    class: usize,
    target: &[usize],
    x_target: &[f64],
    prefix: &[usize],
    x_prefix: &[f64],
) -> Result<f64> {
    let k = model.num_classes();
    if class >= k {
        return Err(WoeError::UnknownLabel {
            label: class,
            num_classes: k,
        });
    }
    check_query(model, target, x_target, prefix, x_prefix)?;
    model.conditional_log_density(class, target, x_target, prefix, x_prefix)
}

/// `ln P(x_target | x_prefix, Y ∈ set)`.
///
/// The set-level density is the prior-weighted class mixture; given a prefix,
/// the weights become the within-set class posterior
/// `w_c ∝ P(c) p(x_prefix | c)`. Evaluated as
/// `lse_c(a_c + b_c) − lse_c(a_c)` with `a_c = ln P(c) + ln p(x_prefix | c)`
/// and `b_c = ln p(x_target | x_prefix, c)`.
pub fn set_conditional_log_likelihood<M: DensityBackend + ?Sized>(
    model: &M,
    set: &HypothesisSet,
    target: &[usize],
    x_target: &[f64],
    prefix: &[usize],
    x_prefix: &[f64],
) -> Result<f64> {
    set.check_universe(model.num_classes())?;
    check_query(model, target, x_target, prefix, x_prefix)?;
    if let [c] = set.labels() {
        return model.conditional_log_density(*c, target, x_target, prefix, x_prefix);
    }
    let mut weights = Vec::with_capacity(set.len());
    let mut terms = Vec::with_capacity(set.len());
    for c in set.iter() {
        let prefix_ll = if prefix.is_empty() {
            0.0
        } else {
            model.conditional_log_density(c, prefix, x_prefix, &[], &[])?
        };
        let a = model.log_prior(c) + prefix_ll;
        let b = model.conditional_log_density(c, target, x_target, prefix, x_prefix)?;
        weights.push(a);
        terms.push(a + b);
    }
    Ok(log_sum_exp(&terms) - log_sum_exp(&weights))
}

/// Per-class `ln p(x_target | c)` for every class of the model.
pub(crate) fn class_log_likelihoods<M: DensityBackend + ?Sized>(
    model: &M,
    target: &[usize],
    x_target: &[f64],
) -> Result<Vec<f64>> {
    check_query(model, target, x_target, &[], &[])?;
    (0..model.num_classes())
        .map(|c| model.conditional_log_density(c, target, x_target, &[], &[]))
        .collect()
}

/// `ln P(x | Y ∈ set)` from cached per-class log-likelihoods. Performs the
/// same floating-point operations as [`set_conditional_log_likelihood`] with
/// an empty prefix, so both routes agree bit for bit.
pub(crate) fn set_log_likelihood_from_classes<M: DensityBackend + ?Sized>(
    model: &M,
    set: &HypothesisSet,
    class_ll: &[f64],
) -> f64 {
    if let [c] = set.labels() {
        return class_ll[*c];
    }
    let weights: Vec<f64> = set.iter().map(|c| model.log_prior(c) + 0.0).collect();
    let terms: Vec<f64> = set
        .iter()
        .zip(&weights)
        .map(|(c, a)| a + class_ll[c])
        .collect();
    log_sum_exp(&terms) - log_sum_exp(&weights)
}

/// `ln P(y = c | x_observed)` for every class, from priors and per-class
/// joint likelihoods over the observed coordinates.
pub(crate) fn log_posterior_observed<M: DensityBackend + ?Sized>(
    model: &M,
    evidence: &Evidence,
) -> Result<Vec<f64>> {
    check_dimension(model, evidence)?;
    let target = evidence.observed_indices();
    let x = evidence.gather(&target)?;
    let joint: Vec<f64> = class_log_likelihoods(model, &target, &x)?
        .into_iter()
        .enumerate()
        .map(|(c, ll)| model.log_prior(c) + ll)
        .collect();
    let lse = log_sum_exp(&joint);
    Ok(joint.into_iter().map(|j| j - lse).collect())
}

/// Predictive posterior `P(Y | X = x)` for fully observed evidence.
pub fn posterior<M: DensityBackend + ?Sized>(model: &M, evidence: &Evidence) -> Result<Vec<f64>> {
    check_dimension(model, evidence)?;
    if let Some(i) = (0..evidence.len()).find(|&i| !evidence.is_observed(i)) {
        return Err(WoeError::MissingEvidence { index: i });
    }
    Ok(softmax(&log_posterior_observed(model, evidence)?))
}

pub(crate) fn check_dimension<M: DensityBackend + ?Sized>(
    model: &M,
    evidence: &Evidence,
) -> Result<()> {
    if evidence.len() != model.num_features() {
        return Err(WoeError::InvalidEvidence(format!(
            "evidence has {} features, model expects {}",
            evidence.len(),
            model.num_features()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bivariate(rho: f64) -> GaussianClassModel {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        GaussianClassModel::from_parts(
            CovarianceMode::Full,
            default_feature_names(2),
            vec![ClassParams {
                prior: 1.0,
                mean: vec![0.0, 0.0],
                covariance: Covariance::Full(cov),
            }],
        )
        .unwrap()
    }

    fn diag3() -> GaussianClassModel {
        GaussianClassModel::from_parts(
            CovarianceMode::Diagonal,
            default_feature_names(3),
            vec![
                ClassParams {
                    prior: 0.4,
                    mean: vec![0.0, 1.0, -1.0],
                    covariance: Covariance::Diagonal(vec![1.0, 2.0, 0.5]),
                },
                ClassParams {
                    prior: 0.6,
                    mean: vec![1.0, 0.0, 2.0],
                    covariance: Covariance::Diagonal(vec![0.3, 1.0, 4.0]),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn fit_sample_mean() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![5.0, 5.0],
            vec![7.0, 3.0],
        ];
        let m = GaussianClassModel::fit(&rows, &[0, 0, 1, 1], CovarianceMode::Full, 1e-6).unwrap();
        assert_eq!(m.class_params(0).mean, vec![1.0, 0.0]);
        assert_eq!(m.priors(), vec![0.5, 0.5]);
        // ML variance of {0, 2} is 1, plus the ridge.
        match &m.class_params(0).covariance {
            Covariance::Full(c) => assert!((c[(0, 0)] - (1.0 + 1e-6)).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn fit_floors_diagonal_variance() {
        let rows = vec![vec![1.0], vec![1.0], vec![0.0], vec![2.0]];
        let m =
            GaussianClassModel::fit(&rows, &[0, 0, 1, 1], CovarianceMode::Diagonal, 0.01).unwrap();
        assert_eq!(
            m.class_params(0).covariance,
            Covariance::Diagonal(vec![0.01])
        );
        assert_eq!(
            m.class_params(1).covariance,
            Covariance::Diagonal(vec![1.0])
        );
    }

    #[test]
    fn fit_errors() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(
            GaussianClassModel::fit(&rows, &[0, 0, 0], CovarianceMode::Diagonal, 1e-6).unwrap_err(),
            WoeError::InsufficientData { class: 1, count: 0 }
        );
        assert!(matches!(
            GaussianClassModel::fit(
                &[vec![0.0], vec![f64::NAN], vec![1.0], vec![2.0]],
                &[0, 0, 1, 1],
                CovarianceMode::Diagonal,
                1e-6
            ),
            Err(WoeError::InvalidData(_))
        ));
        assert!(matches!(
            GaussianClassModel::fit(&rows, &[0, 0, 1], CovarianceMode::Diagonal, 0.0),
            Err(WoeError::InvalidParameter(_))
        ));
    }

    #[test]
    fn bivariate_conditioning_closed_form() {
        // x1 | x2 = 1 ~ N(0.5, 0.75)
        let m = bivariate(0.5);
        let got = class_conditional_log_density(&m, 0, &[0], &[0.5], &[1], &[1.0]).unwrap();
        let expected = -(2.0 * std::f64::consts::PI * 0.75).sqrt().ln();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn joint_matches_generic_path_and_chain() {
        let m = bivariate(0.3);
        let x = [0.7, -1.2];
        let joint = class_conditional_log_density(&m, 0, &[0, 1], &x, &[], &[]).unwrap();
        let reversed =
            class_conditional_log_density(&m, 0, &[1, 0], &[x[1], x[0]], &[], &[]).unwrap();
        let split = class_conditional_log_density(&m, 0, &[1], &[x[1]], &[], &[]).unwrap()
            + class_conditional_log_density(&m, 0, &[0], &[x[0]], &[1], &[x[1]]).unwrap();
        assert!((joint - reversed).abs() < 1e-12);
        assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn diagonal_ignores_prefix() {
        let m = diag3();
        let a = class_conditional_log_density(&m, 1, &[0, 2], &[0.3, 1.0], &[], &[]).unwrap();
        let b = class_conditional_log_density(&m, 1, &[0, 2], &[0.3, 1.0], &[1], &[9.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn query_validation() {
        let m = diag3();
        assert!(matches!(
            class_conditional_log_density(&m, 0, &[0], &[0.0], &[0], &[0.0]),
            Err(WoeError::InvalidPartition(_))
        ));
        assert!(matches!(
            class_conditional_log_density(&m, 5, &[0], &[0.0], &[], &[]),
            Err(WoeError::UnknownLabel { .. })
        ));
        assert!(matches!(
            class_conditional_log_density(&m, 0, &[7], &[0.0], &[], &[]),
            Err(WoeError::InvalidPartition(_))
        ));
    }

    #[test]
    fn set_likelihood_singleton_and_universe() {
        let m = diag3();
        let single = HypothesisSet::singleton(1);
        let a = set_conditional_log_likelihood(&m, &single, &[1], &[0.2], &[0], &[1.0]).unwrap();
        let b = class_conditional_log_density(&m, 1, &[1], &[0.2], &[0], &[1.0]).unwrap();
        assert_eq!(a, b);

        let all = HypothesisSet::universe(2).unwrap();
        let mix = set_conditional_log_likelihood(&m, &all, &[1], &[0.2], &[], &[]).unwrap();
        let direct = (0..2)
            .map(|c| {
                m.prior(c)
                    * class_conditional_log_density(&m, c, &[1], &[0.2], &[], &[])
                        .unwrap()
                        .exp()
            })
            .sum::<f64>()
            .ln();
        assert!((mix - direct).abs() < 1e-14);
    }

    #[test]
    fn posterior_extreme_evidence() {
        let m = GaussianClassModel::from_parts(
            CovarianceMode::Diagonal,
            default_feature_names(1),
            vec![
                ClassParams {
                    prior: 0.5,
                    mean: vec![0.0],
                    covariance: Covariance::Diagonal(vec![1.0]),
                },
                ClassParams {
                    prior: 0.5,
                    mean: vec![1.0],
                    covariance: Covariance::Diagonal(vec![1.0]),
                },
            ],
        )
        .unwrap();
        let p = posterior(&m, &Evidence::full(vec![1.0]).unwrap()).unwrap();
        let logistic = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((p[1] - logistic).abs() < 1e-15);
        assert!((p[1] - 0.6225).abs() < 1e-4);
        let p = posterior(&m, &Evidence::full(vec![100.0]).unwrap()).unwrap();
        assert!(p[1] > 1.0 - 1e-10 && p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_invariants_on_construction() {
        let mk = |p0: f64, p1: f64| {
            GaussianClassModel::from_parts(
                CovarianceMode::Diagonal,
                default_feature_names(1),
                vec![
                    ClassParams {
                        prior: p0,
                        mean: vec![0.0],
                        covariance: Covariance::Diagonal(vec![1.0]),
                    },
                    ClassParams {
                        prior: p1,
                        mean: vec![0.0],
                        covariance: Covariance::Diagonal(vec![1.0]),
                    },
                ],
            )
        };
        assert!(mk(0.5, 0.4).is_err());
        assert!(mk(1.0, 0.0).is_err());
        let not_pd = GaussianClassModel::from_parts(
            CovarianceMode::Full,
            default_feature_names(2),
            vec![ClassParams {
                prior: 1.0,
                mean: vec![0.0, 0.0],
                covariance: Covariance::Full(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
            }],
        );
        assert!(
            matches!(not_pd, Err(WoeError::InvalidModel(m)) if m.contains("positive definite"))
        );
    }

    #[test]
    fn json_round_trip_is_stable() {
        let rows = vec![
            vec![0.1, 0.2],
            vec![0.35, -0.7],
            vec![1.0 / 3.0, 2.5],
            vec![5.0, 5.1],
            vec![7.2, 3.3],
            vec![6.1, 4.4],
        ];
        for mode in [CovarianceMode::Diagonal, CovarianceMode::Full] {
            let m = GaussianClassModel::fit(&rows, &[0, 0, 0, 1, 1, 1], mode, 1e-6).unwrap();
            let text = m.to_json();
            let again = GaussianClassModel::from_json(&text).unwrap().to_json();
            assert_eq!(text, again);
        }
    }

    #[test]
    fn json_rejects_bad_priors() {
        let text = r#"{"version":1,"mode":"diagonal","feature_names":["a"],"classes":[
            {"label":0,"prior":0.5,"mean":[0.0],"var":[1.0]},
            {"label":1,"prior":0.4,"mean":[1.0],"var":[1.0]}]}"#;
        assert!(matches!(
            GaussianClassModel::from_json(text),
            Err(WoeError::InvalidModel(_))
        ));
    }
}
