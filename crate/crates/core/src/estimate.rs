//! Readmission rates by facility and patient type from discharge records:
//! a logistic regression with facility × type interactions, fitted by
//! Newton's method, with nonparametric bootstrap percentile intervals.
//!
//! Design columns, in order: `(Intercept)`, `snf[X]` for every facility but
//! the first, `type[Y]` for every type but the first, `snf[X]:type[Y]` for
//! each pair of non-reference levels, then the numeric covariates. The
//! categorical block alone is saturated, so every (facility, type) cell gets
//! its own rate.

use std::collections::BTreeMap;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};

pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const MAX_BOOTSTRAP_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeRecord {
    pub readmitted: bool,
    pub snf: String,
    pub patient_type: String,
    /// Values in the order of [`Dataset::covariates`].
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub covariates: Vec<String>,
    pub records: Vec<DischargeRecord>,
}

impl Dataset {
    /// Parses `readmitted,snf,patient_type,<covariates...>`. Empty or
    /// non-numeric cells reject the whole input, citing the line.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = reader.headers()?.clone();
        let fixed = ["readmitted", "snf", "patient_type"];
        if header.len() < 3 || header.iter().take(3).ne(fixed) {
            return Err(Error::Record {
                line: 1,
                message: format!("header must start with {}", fixed.join(",")),
            });
        }
        let covariates: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Record { line, message };
            if let Some(col) = row.iter().position(str::is_empty) {
                return Err(bad(format!("missing value in column {}", &header[col])));
            }
            let readmitted = match &row[0] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("readmitted must be 0 or 1, got {other:?}"))),
            };
            let values = row
                .iter()
                .skip(3)
                .zip(&covariates)
                .map(|(v, name)| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad(format!("{name}: {v:?} is not a finite number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            records.push(DischargeRecord {
                readmitted,
                snf: row[1].to_owned(),
                patient_type: row[2].to_owned(),
                covariates: values,
            });
        }
        Ok(Dataset { covariates, records })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["readmitted".to_owned(), "snf".into(), "patient_type".into()];
        header.extend(self.covariates.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                u8::from(r.readmitted).to_string(),
                r.snf.clone(),
                r.patient_type.clone(),
            ];
            row.extend(r.covariates.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::param("covariates", format!("no column named {name}")))
    }

    /// Means of continuous covariates, modes of 0/1 covariates.
    pub fn default_profile(&self, covariates: &[String]) -> Result<BTreeMap<String, f64>> {
        let n = self.records.len().max(1) as f64;
        covariates
            .iter()
            .map(|name| {
                let c = self.covariate_index(name)?;
                let vals = self.records.iter().map(|r| r.covariates[c]);
                let binary = vals.clone().all(|v| v == 0.0 || v == 1.0);
                let mean = vals.sum::<f64>() / n;
                let v = if binary { f64::from(u8::from(mean > 0.5)) } else { mean };
                Ok((name.clone(), v))
            })
            .collect()
    }
}

/// Which columns enter the regression and the level order of the two
/// categorical factors (the first level of each is the reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub facilities: Vec<String>,
    pub types: Vec<String>,
    pub covariates: Vec<String>,
    /// Without the categorical block the model is intercept plus covariates.
    #[serde(default = "yes")]
    pub categorical: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    /// Levels in sorted order and every covariate in the data.
    pub fn from_data(data: &Dataset) -> Self {
        let mut facilities: Vec<String> = data.records.iter().map(|r| r.snf.clone()).collect();
        let mut types: Vec<String> = data.records.iter().map(|r| r.patient_type.clone()).collect();
        facilities.sort();
        facilities.dedup();
        types.sort();
        types.dedup();
        ModelSpec {
            facilities,
            types,
            covariates: data.covariates.clone(),
            categorical: true,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["(Intercept)".to_owned()];
        if self.categorical {
            cols.extend(self.facilities.iter().skip(1).map(|f| format!("snf[{f}]")));
            cols.extend(self.types.iter().skip(1).map(|t| format!("type[{t}]")));
            for f in self.facilities.iter().skip(1) {
                for t in self.types.iter().skip(1) {
                    cols.push(format!("snf[{f}]:type[{t}]"));
                }
            }
        }
        cols.extend(self.covariates.iter().cloned());
        cols
    }

    /// Design row for one cell and covariate vector.
    fn row(&self, f: usize, t: usize, covariates: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
        out.push(1.0);
        if self.categorical {
            let (nf, nt) = (self.facilities.len(), self.types.len());
            out.extend((1..nf).map(|j| f64::from(u8::from(f == j))));
            out.extend((1..nt).map(|i| f64::from(u8::from(t == i))));
            for j in 1..nf {
                for i in 1..nt {
                    out.push(f64::from(u8::from(f == j && t == i)));
                }
            }
        }
        out.extend(covariates);
    }

    /// The column that carries cell `(f, t)` in the saturated block.
    fn cell_column(&self, f: usize, t: usize) -> String {
        match (f, t) {
            (0, 0) => "(Intercept)".into(),
            (f, 0) => format!("snf[{}]", self.facilities[f]),
            (0, t) => format!("type[{}]", self.types[t]),
            (f, t) => format!("snf[{}]:type[{}]", self.facilities[f], self.types[t]),
        }
    }
}

/// Encoded regression problem.
#[derive(Debug, Clone)]
pub struct Design {
    pub columns: Vec<String>,
    /// Row-major, `n × p`.
    x: Vec<f64>,
    y: Vec<f64>,
    cells: Vec<(usize, usize)>,
}

fn level(levels: &[String], value: &str, what: &str, line: usize) -> Result<usize> {
    levels.iter().position(|l| l == value).ok_or_else(|| Error::Record {
        line: line as u64 + 2,
        message: format!("{what} {value:?} is not in the declared vocabulary"),
    })
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)` without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

impl Design {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        let idx: Vec<usize> = spec
            .covariates
            .iter()
            .map(|c| data.covariate_index(c))
            .collect::<Result<_>>()?;
        let columns = spec.column_names();
        let mut x = Vec::with_capacity(data.records.len() * columns.len());
        let mut y = Vec::with_capacity(data.records.len());
        let mut cells = Vec::with_capacity(data.records.len());
        for (n, r) in data.records.iter().enumerate() {
            let (f, t) = if spec.categorical {
                (
                    level(&spec.facilities, &r.snf, "facility", n)?,
                    level(&spec.types, &r.patient_type, "patient type", n)?,
                )
            } else {
                (0, 0)
            };
            spec.row(f, t, idx.iter().map(|&c| r.covariates[c]), &mut x);
            y.push(f64::from(u8::from(r.readmitted)));
            cells.push((f, t));
        }
        Ok(Design { columns, x, y, cells })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    fn row(&self, n: usize) -> &[f64] {
        let p = self.p();
        &self.x[n * p..(n + 1) * p]
    }

    fn eta(&self, n: usize, beta: &[f64]) -> f64 {
        self.row(n).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Bernoulli log-likelihood `Σ yη − ln(1 + e^η)`.
    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        (0..self.len())
            .map(|n| {
                let eta = self.eta(n, beta);
                self.y[n] * eta - softplus(eta)
            })
            .sum()
    }

    /// `Xᵀ(y − p)`.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p()];
        for n in 0..self.len() {
            let resid = self.y[n] - sigmoid(self.eta(n, beta));
            for (gc, xc) in g.iter_mut().zip(self.row(n)) {
                *gc += resid * xc;
            }
        }
        g
    }

    /// Observed information `XᵀWX`, `W = diag(p(1 − p))`.
    pub fn information(&self, beta: &[f64]) -> Matrix<f64> {
        let p = self.p();
        let mut h = Matrix::zeros(p);
        for n in 0..self.len() {
            let mu = sigmoid(self.eta(n, beta));
            let w = mu * (1.0 - mu);
            let row = self.row(n);
            for a in 0..p {
                let wa = w * row[a];
                if wa == 0.0 {
                    continue;
                }
                for b in a..p {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }

    fn cross_product(&self) -> Matrix<f64> {
        let p = self.p();
        let mut h = Matrix::zeros(p);
        for n in 0..self.len() {
            let row = self.row(n);
            for a in 0..p {
                for b in 0..p {
                    h[(a, b)] += row[a] * row[b];
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub spec: ModelSpec,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted Newton step, starting at β = 0.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood fit. Rejects rank-deficient designs and cells whose
/// outcomes are all equal before iterating.
pub fn fit_logistic(data: &Dataset, spec: &ModelSpec) -> Result<LogisticFit> {
    let design = Design::new(data, spec)?;
    if design.is_empty() {
        return Err(Error::param("records", "no discharge records"));
    }
    fit_design(&design, spec)
}

fn fit_design(design: &Design, spec: &ModelSpec) -> Result<LogisticFit> {
    let p = design.p();
    if let Err(dep) = cholesky(&design.cross_product(), 1e-10) {
        return Err(Error::RankDeficient {
            columns: dep.into_iter().map(|c| design.columns[c].clone()).collect(),
        });
    }
    check_separation(design, spec)?;

    let mut beta = vec![0.0; p];
    let mut ll = design.log_likelihood(&beta);
    let mut trace = vec![ll];
    let mut grad = design.gradient(&beta);
    let mut iterations = 0;
    while sup_norm(&grad) > GRADIENT_TOL {
        if iterations == MAX_NEWTON_ITERATIONS {
            return Err(Error::NotConverged {
                iterations,
                residual: sup_norm(&grad),
            });
        }
        iterations += 1;
        let info = design.information(&beta);
        let step = info.solve(&grad).ok_or_else(|| Error::Separation {
            columns: diverging(&design.columns, &beta),
        })?;
        // near the optimum the likelihood change drops below summation roundoff
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut scale = 1.0;
        let (next, next_ll) = loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_ll = design.log_likelihood(&cand);
            if cand_ll >= ll - slack || scale < 1e-10 {
                break (cand, cand_ll);
            }
            scale *= 0.5;
        };
        if next_ll < ll - slack {
            // no ascent direction left: numerically at the optimum
            break;
        }
        beta = next;
        ll = next_ll;
        trace.push(ll);
        grad = design.gradient(&beta);
    }
    if beta.iter().any(|b| b.abs() > 30.0) {
        return Err(Error::Separation {
            columns: diverging(&design.columns, &beta),
        });
    }
    let cov = design
        .information(&beta)
        .lu()
        .ok_or_else(|| Error::Singular("information matrix at the estimate".into()))?
        .inverse();
    Ok(LogisticFit {
        spec: spec.clone(),
        columns: design.columns.clone(),
        std_errors: (0..p).map(|c| cov[(c, c)].max(0.0).sqrt()).collect(),
        coefficients: beta,
        log_likelihood: ll,
        trace,
        iterations,
        gradient_norm: sup_norm(&grad),
    })
}

fn diverging(columns: &[String], beta: &[f64]) -> Vec<String> {
    columns
        .iter()
        .zip(beta)
        .filter(|(_, b)| b.abs() > 15.0)
        .map(|(c, _)| c.clone())
        .collect()
}

/// A (facility, type) cell with all outcomes equal drives its own
/// coefficient to ±∞.
fn check_separation(design: &Design, spec: &ModelSpec) -> Result<()> {
    let mut counts: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for (cell, &y) in design.cells.iter().zip(&design.y) {
        let e = counts.entry(*cell).or_default();
        e.0 += 1;
        e.1 += y as usize;
    }
    let columns: Vec<String> = counts
        .iter()
        .filter(|(_, &(n, pos))| pos == 0 || pos == n)
        .map(|(&(f, t), _)| spec.cell_column(f, t))
        .collect();
    if columns.is_empty() {
        Ok(())
    } else {
        Err(Error::Separation { columns })
    }
}

/// Rates (percent) by patient type and facility at a covariate profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub unit: String,
    pub types: Vec<String>,
    pub facilities: Vec<String>,
    /// `point[type][facility]`.
    pub point: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub reference_profile: BTreeMap<String, f64>,
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        let shape_ok = |m: &Vec<Vec<f64>>| {
            m.len() == self.types.len() && m.iter().all(|r| r.len() == self.facilities.len())
        };
        if !shape_ok(&self.point) {
            return Err(Error::param("point", "shape must be types × facilities"));
        }
        for (i, row) in self.point.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let lo = self.lower.as_ref().map_or(v, |m| m[i][j]);
                let hi = self.upper.as_ref().map_or(v, |m| m[i][j]);
                if !(0.0..=100.0).contains(&lo) || !(lo <= v && v <= hi && hi <= 100.0) {
                    return Err(Error::param(
                        format!("rates[{}][{}]", self.types[i], self.facilities[j]),
                        format!("need 0 ≤ {lo} ≤ {v} ≤ {hi} ≤ 100"),
                    ));
                }
            }
        }
        for (name, m) in [("lower", &self.lower), ("upper", &self.upper)] {
            if m.as_ref().is_some_and(|m| !shape_ok(m)) {
                return Err(Error::param(name, "shape must be types × facilities"));
            }
        }
        Ok(())
    }

    /// `costs` and `labels` entries for an instance file.
    pub fn costs_block(&self) -> serde_json::Value {
        serde_json::json!({
            "num_types": self.types.len(),
            "num_facilities": self.facilities.len(),
            "costs": self.point,
            "labels": { "types": self.types, "facilities": self.facilities },
        })
    }
}

/// Inverse-logit of the linear predictor for every cell, in percent.
pub fn predict_rates(fit: &LogisticFit, profile: &BTreeMap<String, f64>) -> Result<RateTable> {
    let spec = &fit.spec;
    let covs: Vec<f64> = spec
        .covariates
        .iter()
        .map(|c| profile.get(c).copied().ok_or_else(|| Error::MissingCovariate(c.clone())))
        .collect::<Result<_>>()?;
    let (nf, nt) = if spec.categorical {
        (spec.facilities.len(), spec.types.len())
    } else {
        (spec.facilities.len().max(1), spec.types.len().max(1))
    };
    let mut row = Vec::with_capacity(fit.columns.len());
    let point = (0..nt)
        .map(|t| {
            (0..nf)
                .map(|f| {
                    row.clear();
                    let (cf, ct) = if spec.categorical { (f, t) } else { (0, 0) };
                    spec.row(cf, ct, covs.iter().copied(), &mut row);
                    let eta: f64 = row.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum();
                    100.0 * sigmoid(eta)
                })
                .collect()
        })
        .collect();
    Ok(RateTable {
        unit: "percent".into(),
        types: spec.types.clone(),
        facilities: spec.facilities.clone(),
        point,
        lower: None,
        upper: None,
        reference_profile: profile.clone(),
    })
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0,1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point rates from the full data plus 95% percentile intervals from `b`
/// resamples of the records with replacement.
pub fn bootstrap_ci(
    data: &Dataset,
    spec: &ModelSpec,
    profile: &BTreeMap<String, f64>,
    b: usize,
    seed: u64,
) -> Result<RateTable> {
    bootstrap_with(data, spec, profile, b, seed, |rng, n| {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    })
}

fn bootstrap_with(
    data: &Dataset,
    spec: &ModelSpec,
    profile: &BTreeMap<String, f64>,
    b: usize,
    seed: u64,
    resample: impl Fn(&mut ChaCha8Rng, usize) -> Vec<usize> + Sync,
) -> Result<RateTable> {
    if b < 100 {
        return Err(Error::param("B", format!("{b} resamples; at least 100 required")));
    }
    let fit = fit_logistic(data, spec)?;
    let mut table = predict_rates(&fit, profile)?;
    let n = data.records.len();
    let draws: Vec<Option<Vec<Vec<f64>>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let sample = Dataset {
                covariates: data.covariates.clone(),
                records: resample(&mut rng, n).into_iter().map(|i| data.records[i].clone()).collect(),
            };
            let refit = fit_logistic(&sample, spec).ok()?;
            predict_rates(&refit, profile).ok().map(|t| t.point)
        })
        .collect();
    let ok: Vec<Vec<Vec<f64>>> = draws.into_iter().flatten().collect();
    let failed = b - ok.len();
    if failed as f64 > MAX_BOOTSTRAP_FAILURE_RATE * b as f64 {
        return Err(Error::BootstrapFailures { failed, total: b });
    }
    let (nt, nf) = (table.point.len(), table.point[0].len());
    let mut lower = vec![vec![0.0; nf]; nt];
    let mut upper = vec![vec![0.0; nf]; nt];
    let mut column = Vec::with_capacity(ok.len());
    for t in 0..nt {
        for f in 0..nf {
            column.clear();
            column.extend(ok.iter().map(|d| d[t][f]));
            column.sort_by(f64::total_cmp);
            let point = table.point[t][f];
            lower[t][f] = percentile(&column, 0.025).min(point);
            upper[t][f] = percentile(&column, 0.975).max(point);
        }
    }
    table.lower = Some(lower);
    table.upper = Some(upper);
    Ok(table)
}

/// A known data-generating process for checking the estimator: one
/// continuous and one binary covariate on top of per-cell base rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    pub spec: ModelSpec,
    /// True coefficients in [`ModelSpec::column_names`] order.
    pub coefficients: Vec<f64>,
}

impl SyntheticModel {
    /// Cell rates given in percent (`rates[type][facility]`) at covariates
    /// `hcc = 0, chf = 0`; `hcc` loads 0.3, `chf` 0.5.
    pub fn from_rates(types: &[&str], facilities: &[&str], rates: &[Vec<f64>]) -> Self {
        let spec = ModelSpec {
            facilities: facilities.iter().map(|s| s.to_string()).collect(),
            types: types.iter().map(|s| s.to_string()).collect(),
            covariates: vec!["hcc".into(), "chf".into()],
            categorical: true,
        };
        let logit = |pct: f64| {
            let p = pct / 100.0;
            (p / (1.0 - p)).ln()
        };
        let (nf, nt) = (facilities.len(), types.len());
        let base = logit(rates[0][0]);
        let mut beta = vec![base];
        beta.extend((1..nf).map(|f| logit(rates[0][f]) - base));
        beta.extend((1..nt).map(|t| logit(rates[t][0]) - base));
        for f in 1..nf {
            for t in 1..nt {
                beta.push(logit(rates[t][f]) - logit(rates[t][0]) - logit(rates[0][f]) + base);
            }
        }
        beta.extend([0.3, 0.5]);
        SyntheticModel {
            spec,
            coefficients: beta,
        }
    }

    /// Profile at which [`from_rates`](Self::from_rates) pins the cell rates.
    pub fn base_profile() -> BTreeMap<String, f64> {
        BTreeMap::from([("hcc".into(), 0.0), ("chf".into(), 0.0)])
    }

    /// Uniform cells, `hcc ~ N(0,1)`, `chf ~ Bernoulli(0.3)`.
    pub fn generate(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nf, nt) = (self.spec.facilities.len(), self.spec.types.len());
        let mut row = Vec::with_capacity(self.coefficients.len());
        let records = (0..n)
            .map(|_| {
                let f = rng.gen_range(0..nf);
                let t = rng.gen_range(0..nt);
                let hcc: f64 = rng.sample(StandardNormal);
                let chf = f64::from(u8::from(rng.gen_bool(0.3)));
                row.clear();
                self.spec.row(f, t, [hcc, chf].into_iter(), &mut row);
                let eta: f64 = row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
                DischargeRecord {
                    readmitted: rng.gen_bool(sigmoid(eta)),
                    snf: self.spec.facilities[f].clone(),
                    patient_type: self.spec.types[t].clone(),
                    covariates: vec![hcc, chf],
                }
            })
            .collect();
        Dataset {
            covariates: self.spec.covariates.clone(),
            records,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_rates_model() -> SyntheticModel {
        let rates = crate::fixtures::default_rates();
        let types: Vec<&str> = rates.types.iter().map(String::as_str).collect();
        let facs: Vec<&str> = rates.facilities.iter().map(String::as_str).collect();
        SyntheticModel::from_rates(&types, &facs, &rates.point)
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let data = default_rates_model().generate(50, 1);
        let text = data.to_csv().unwrap();
        let back = Dataset::from_csv(text.as_bytes()).unwrap();
        assert_eq!(back.covariates, data.covariates);
        assert_eq!(back.records.len(), 50);
        let missing = "readmitted,snf,patient_type,hcc\n1,A,UM,0.5\n0,B,,0.1\n";
        let err = Dataset::from_csv(missing.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("patient_type"), "{err}");
        let bad = "readmitted,snf,patient_type\n2,A,UM\n";
        assert!(Dataset::from_csv(bad.as_bytes()).unwrap_err().to_string().contains("line 2"));
        assert!(Dataset::from_csv("snf,readmitted\n".as_bytes()).is_err());
    }

    #[test]
    fn intercept_only_recovers_logit_of_mean() {
        let records = (0..1000)
            .map(|n| DischargeRecord {
                readmitted: n % 10 < 3,
                snf: "A".into(),
                patient_type: "UM".into(),
                covariates: vec![],
            })
            .collect();
        let data = Dataset {
            covariates: vec![],
            records,
        };
        let spec = ModelSpec {
            categorical: false,
            ..ModelSpec::from_data(&data)
        };
        let fit = fit_logistic(&data, &spec).unwrap();
        assert!((fit.coefficients[0] - (0.3f64 / 0.7).ln()).abs() < 1e-9);
        let t = predict_rates(&fit, &BTreeMap::new()).unwrap();
        assert!((t.point[0][0] - 30.0).abs() < 1e-7);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = default_rates_model();
        let data = model.generate(300, 5);
        let design = Design::new(&data, &model.spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let beta: Vec<f64> = (0..design.p()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = design.gradient(&beta);
            let h = 1e-5;
            for c in 0..beta.len() {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[c] += h;
                dn[c] -= h;
                let fd = (design.log_likelihood(&up) - design.log_likelihood(&dn)) / (2.0 * h);
                assert!((fd - g[c]).abs() <= 1e-6, "column {c}: {fd} vs {}", g[c]);
            }
        }
    }

    #[test]
    fn likelihood_is_monotone_along_newton_path() {
        let model = default_rates_model();
        let fit = fit_logistic(&model.generate(4000, 2), &model.spec).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(fit.gradient_norm <= GRADIENT_TOL);
    }

    #[test]
    fn zero_coefficients_predict_one_half() {
        let model = default_rates_model();
        let fit = LogisticFit {
            spec: model.spec.clone(),
            columns: model.spec.column_names(),
            coefficients: vec![0.0; model.coefficients.len()],
            std_errors: vec![0.0; model.coefficients.len()],
            log_likelihood: 0.0,
            trace: vec![],
            iterations: 0,
            gradient_norm: 0.0,
        };
        let t = predict_rates(&fit, &SyntheticModel::base_profile()).unwrap();
        assert!(t.point.iter().flatten().all(|&v| v == 50.0));
        let mut up = fit.clone();
        let c = up.columns.iter().position(|c| c == "snf[B]").unwrap();
        up.coefficients[c] = 0.4;
        let u = predict_rates(&up, &SyntheticModel::base_profile()).unwrap();
        assert!(u.point[0][1] > t.point[0][1]);
        let err = predict_rates(&fit, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate(ref c) if c == "hcc"));
    }

    #[test]
    fn separation_and_rank_deficiency_name_columns() {
        let model = default_rates_model();
        let mut data = model.generate(3000, 3);
        for r in data.records.iter_mut() {
            if r.snf == "C" && r.patient_type == "JS" {
                r.readmitted = false;
            }
        }
        match fit_logistic(&data, &model.spec).unwrap_err() {
            Error::Separation { columns } => assert_eq!(columns, ["snf[C]:type[JS]"]),
            e => panic!("{e}"),
        }
        let mut dup = model.generate(500, 4);
        dup.covariates.push("hcc_copy".into());
        for r in dup.records.iter_mut() {
            let v = r.covariates[0];
            r.covariates.push(2.0 * v);
        }
        let mut spec = model.spec.clone();
        spec.covariates.push("hcc_copy".into());
        match fit_logistic(&dup, &spec).unwrap_err() {
            Error::RankDeficient { columns } => assert_eq!(columns, ["hcc_copy"]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bootstrap_is_reproducible_and_ordered() {
        let model = SyntheticModel::from_rates(&["a", "b"], &["X", "Y"], &[vec![20.0, 35.0], vec![30.0, 25.0]]);
        let data = model.generate(600, 11);
        let prof = data.default_profile(&model.spec.covariates).unwrap();
        assert_eq!(prof["chf"], 0.0);
        let a = bootstrap_ci(&data, &model.spec, &prof, 100, 5).unwrap();
        let b = bootstrap_ci(&data, &model.spec, &prof, 100, 5).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(bootstrap_ci(&data, &model.spec, &prof, 99, 5).is_err());
    }

    #[test]
    fn identical_resamples_give_zero_width_intervals() {
        let model = SyntheticModel::from_rates(&["a"], &["X", "Y"], &[vec![20.0, 35.0]]);
        let data = model.generate(400, 2);
        let prof = SyntheticModel::base_profile();
        let t = bootstrap_with(&data, &model.spec, &prof, 100, 1, |_, n| (0..n).collect()).unwrap();
        for (p, (lo, hi)) in t.point.iter().flatten().zip(
            t.lower.as_ref().unwrap().iter().flatten().zip(t.upper.as_ref().unwrap().iter().flatten()),
        ) {
            assert!((p - lo).abs() < 1e-9 && (p - hi).abs() < 1e-9);
        }
    }

    #[test]
    fn default_rates_validate_and_feed_instances() {
        let rates = crate::fixtures::default_rates();
        rates.validate().unwrap();
        let block = rates.costs_block();
        assert_eq!(block["costs"][3][4], 13.4);
        assert_eq!(block["labels"]["facilities"][0], "A");
    }
}
