//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved in the doubled-variable form used by LIBSVM: for `n`
//! training rows there are `2n` variables `α ∈ [0, C]`, the first `n` with
//! label `+1` and linear term `ε - y_i`, the second `n` with label `-1` and
//! linear term `ε + y_i`. Each iteration picks the maximal violating pair
//! with second-order working-set selection and solves the two-variable
//! subproblem analytically.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::preprocess::{ScalerParams, WindowedDataset};
use crate::{Error, Result, SCHEMA_VERSION};

const TAU: f64 = 1e-12;

/// Kernel rows kept in memory during training.
const KERNEL_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub lookback: usize,
    /// Box constraint.
    pub c: f64,
    /// Half-width of the insensitive tube, normalized units.
    pub epsilon: f64,
    /// RBF width; `None` means `1 / lookback`.
    pub gamma: Option<f64>,
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    /// Iteration budget, in multiples of the training-set size.
    pub max_passes: usize,
    /// Train on at most this many of the most recent rows.
    pub max_train_rows: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            lookback: 30,
            c: 10.0,
            epsilon: 0.01,
            gamma: None,
            tolerance: 1e-3,
            max_passes: 50,
            max_train_rows: 20_000,
        }
    }
}

impl SvrConfig {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(1.0 / self.lookback.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("svr.{msg}")));
        if self.lookback == 0 {
            return bad("lookback must be at least 1");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.gamma() > 0.0 && self.gamma().is_finite()) {
            return bad("gamma must be positive");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        if self.max_passes == 0 || self.max_train_rows == 0 {
            return bad("max_passes and max_train_rows must be at least 1");
        }
        Ok(())
    }
}

/// `exp(-gamma * |x - y|²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(rbf(x, y, gamma))
}

fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub lookback: usize,
    /// Row-major `m × lookback`.
    pub support_vectors: Vec<f64>,
    /// `α_i - α*_i` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub scaler: ScalerParams,
    pub converged: bool,
    pub iterations: usize,
}

impl SvrModel {
    pub fn support_count(&self) -> usize {
        self.dual_coefficients.len()
    }

    pub fn support_vector(&self, i: usize) -> &[f64] {
        &self.support_vectors[i * self.lookback..(i + 1) * self.lookback]
    }

    fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .chunks_exact(self.lookback)
            .zip(&self.dual_coefficients)
            .map(|(sv, a)| a * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Largest KKT violation over a training set, measured against this
    /// model's bias. Rows absent from the model have a zero coefficient.
    ///
    /// `coefficients[i]` must be the dual coefficient of training row `i`.
    pub fn kkt_violation(&self, train: &WindowedDataset, coefficients: &[f64], c: f64, epsilon: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (row, &y)) in train.rows().zip(train.targets()).enumerate() {
            let r = y - self.decision(row);
            let beta = coefficients[i];
            let (alpha, alpha_star) = (beta.max(0.0), (-beta).max(0.0));
            let bound = c * (1.0 - 1e-12);
            if alpha < bound {
                worst = worst.max(r - epsilon);
            }
            if alpha > 0.0 {
                worst = worst.max(epsilon - r);
            }
            if alpha_star < bound {
                worst = worst.max(-epsilon - r);
            }
            if alpha_star > 0.0 {
                worst = worst.max(r + epsilon);
            }
        }
        worst
    }

    pub fn write_to<W: Write>(&self, config: &SvrConfig, writer: W) -> Result<()> {
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            model: "svr".into(),
            weights_encoding: "decimal f64, shortest round-trip form; support_vectors is one row per vector".into(),
            config: config.clone(),
            scaler: self.scaler,
            lookback: self.lookback,
            gamma: self.gamma,
            bias: self.bias,
            support_vectors: self
                .support_vectors
                .chunks(self.lookback)
                .map(<[f64]>::to_vec)
                .collect(),
            dual_coefficients: self.dual_coefficients.clone(),
            converged: self.converged,
            iterations: self.iterations,
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<(Self, SvrConfig)> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        if file.schema_version != SCHEMA_VERSION || file.model != "svr" {
            return Err(Error::ModelFile(format!(
                "expected svr schema {SCHEMA_VERSION}, found {} schema {}",
                file.model, file.schema_version
            )));
        }
        if file.support_vectors.len() != file.dual_coefficients.len()
            || file.support_vectors.iter().any(|v| v.len() != file.lookback)
        {
            return Err(Error::ModelFile("support vector shape mismatch".into()));
        }
        let model = SvrModel {
            lookback: file.lookback,
            support_vectors: file.support_vectors.concat(),
            dual_coefficients: file.dual_coefficients,
            bias: file.bias,
            gamma: file.gamma,
            scaler: file.scaler,
            converged: file.converged,
            iterations: file.iterations,
        };
        Ok((model, file.config))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    model: String,
    weights_encoding: String,
    config: SvrConfig,
    scaler: ScalerParams,
    lookback: usize,
    gamma: f64,
    bias: f64,
    support_vectors: Vec<Vec<f64>>,
    dual_coefficients: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// f(x) = Σ coef_i K(sv_i, x) + bias.
pub fn predict_svr(model: &SvrModel, window: &[f64]) -> Result<f64> {
    if window.len() != model.lookback {
        return Err(Error::LengthMismatch {
            expected: model.lookback,
            actual: window.len(),
        });
    }
    Ok(model.decision(window))
}

pub fn predict_all(model: &SvrModel, windows: &WindowedDataset) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    if windows.lookback() != model.lookback {
        return Err(Error::LengthMismatch {
            expected: model.lookback,
            actual: windows.lookback(),
        });
    }
    use rayon::prelude::*;
    Ok(windows
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| model.decision(row))
        .collect())
}

/// Kernel rows over the training set, computed on demand with FIFO eviction.
struct KernelCache<'a> {
    data: &'a WindowedDataset,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(data: &'a WindowedDataset, gamma: f64) -> Self {
        let n = data.len();
        let capacity = (KERNEL_CACHE_BYTES / (8 * n.max(1))).clamp(2, n.max(2));
        Self {
            data,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = self.data.row(i);
            let row: Vec<f64> = self
                .data
                .rows()
                .map(|xj| rbf(xi, xj, self.gamma))
                .collect();
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().unwrap()
    }

    /// Both rows at once, cloning one so the borrow checker is satisfied.
    fn pair(&mut self, i: usize, j: usize) -> (Vec<f64>, &[f64]) {
        let ri = self.row(i).to_vec();
        (ri, self.row(j))
    }
}

/// Result of the dual solver over the (possibly capped) training rows.
#[derive(Debug, Clone)]
pub struct SvrFit {
    pub model: SvrModel,
    /// Dual coefficient of every training row used, zeros included.
    pub coefficients: Vec<f64>,
    /// The rows the solver saw, after applying `max_train_rows`.
    pub train_rows: WindowedDataset,
}

/// Trains and returns the pruned model.
pub fn train_svr(config: &SvrConfig, train: &WindowedDataset) -> Result<SvrModel> {
    Ok(fit_svr(config, train)?.model)
}

/// Trains and keeps the full coefficient vector for diagnostics.
pub fn fit_svr(config: &SvrConfig, train: &WindowedDataset) -> Result<SvrFit> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    if train.lookback() != config.lookback {
        return Err(Error::LengthMismatch {
            expected: config.lookback,
            actual: train.lookback(),
        });
    }
    let data = if train.len() > config.max_train_rows {
        train.slice(train.len() - config.max_train_rows, train.len())
    } else {
        train.clone()
    };

    let n = data.len();
    let c = config.c;
    let gamma = config.gamma();
    let targets = data.targets();

    // Variables 0..n carry label +1, n..2n carry label -1.
    let label = |t: usize| if t < n { 1.0 } else { -1.0 };
    let mut alpha = vec![0.0; 2 * n];
    let mut grad: Vec<f64> = (0..2 * n)
        .map(|t| {
            if t < n {
                config.epsilon - targets[t]
            } else {
                config.epsilon + targets[t - n]
            }
        })
        .collect();

    let mut cache = KernelCache::new(&data, gamma);
    let max_iterations = config.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;

    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    while iterations < max_iterations {
        // First index: maximal -y_t G_t over the "up" set.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..2 * n {
            let up = if label(t) > 0.0 { !at_upper(alpha[t]) } else { !at_lower(alpha[t]) };
            if up {
                let v = -label(t) * grad[t];
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };

        let yi = label(i);
        let ki = cache.row(i % n).to_vec();
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..2 * n {
            let yt = label(t);
            let low = if yt > 0.0 { !at_lower(alpha[t]) } else { !at_upper(alpha[t]) };
            if !low {
                continue;
            }
            let v = yt * grad[t];
            if v >= g_max2 {
                g_max2 = v;
            }
            let grad_diff = g_max + v;
            if grad_diff > 0.0 {
                // Q_ii + Q_tt - 2 y_i y_t Q_it with unit kernel diagonal
                let quad = 2.0 - 2.0 * ki[t % n];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        if g_max + g_max2 < config.tolerance {
            converged = true;
            break;
        }
        let Some(j) = j_sel else {
            converged = true;
            break;
        };
        iterations += 1;

        let yj = label(j);
        let (ki, kj) = cache.pair(i % n, j % n);
        let q_ij = yi * yj * ki[j % n];
        let (old_i, old_j) = (alpha[i], alpha[j]);

        if yi != yj {
            let quad = 2.0 + 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = 2.0 - 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let d_i = alpha[i] - old_i;
        let d_j = alpha[j] - old_j;
        for t in 0..2 * n {
            let yt = label(t);
            let k = t % n;
            grad[t] += yt * (yi * ki[k] * d_i + yj * kj[k] * d_j);
        }
    }

    // Bias: average over free variables, else the midpoint of the bounds.
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..2 * n {
        let yg = label(t) * grad[t];
        if at_upper(alpha[t]) {
            if label(t) < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if label(t) > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };
    let bias = -rho;

    let coefficients: Vec<f64> = (0..n).map(|t| alpha[t] - alpha[t + n]).collect();
    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for (t, &coef) in coefficients.iter().enumerate() {
        if coef != 0.0 {
            support_vectors.extend_from_slice(data.row(t));
            dual_coefficients.push(coef);
        }
    }
    let model = SvrModel {
        lookback: config.lookback,
        support_vectors,
        dual_coefficients,
        bias,
        gamma,
        scaler: ScalerParams {
            min_value: 0.0,
            max_value: 1.0,
        },
        converged,
        iterations,
    };
    Ok(SvrFit {
        model,
        coefficients,
        train_rows: data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UnivariateSeries;
    use crate::preprocess::make_windows;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn windows(values: Vec<f64>, lookback: usize) -> WindowedDataset {
        let start = NaiveDate::from_ymd_opt(2007, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        make_windows(&UnivariateSeries::new(start, 60, values).unwrap(), lookback).unwrap()
    }

    fn model(lookback: usize, svs: Vec<f64>, coefs: Vec<f64>, bias: f64, gamma: f64) -> SvrModel {
        SvrModel {
            lookback,
            support_vectors: svs,
            dual_coefficients: coefs,
            bias,
            gamma,
            scaler: ScalerParams {
                min_value: 0.0,
                max_value: 1.0,
            },
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[0.3, 0.7], &[0.3, 0.7], 2.0).unwrap(), 1.0);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(1.0 - rbf_kernel(&[0.0, 5.0], &[1.0, -3.0], 1e-12).unwrap() < 1e-9);
        assert!(rbf_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
        let (x, y) = ([0.1, 0.9, 0.4], [0.8, 0.2, 0.3]);
        assert_eq!(rbf_kernel(&x, &y, 0.5).unwrap(), rbf_kernel(&y, &x, 0.5).unwrap());
    }

    #[test]
    fn bias_only_model() {
        let m = model(2, vec![], vec![], 0.42, 0.5);
        assert_eq!(predict_svr(&m, &[0.0, 1.0]).unwrap(), 0.42);
    }

    #[test]
    fn single_vector_at_its_own_location() {
        let m = model(2, vec![0.2, 0.6], vec![0.75], 0.0, 3.0);
        assert_eq!(predict_svr(&m, &[0.2, 0.6]).unwrap(), 0.75);
        assert!(predict_svr(&m, &[0.2]).is_err());
    }

    #[test]
    fn prediction_matches_direct_sum() {
        let svs = vec![0.1, 0.2, 0.3, 0.9, 0.8, 0.7, 0.5, 0.5, 0.1];
        let coefs = vec![1.5, -0.7, 0.25];
        let m = model(3, svs.clone(), coefs.clone(), -0.1, 0.8);
        let x = [0.4, 0.3, 0.6];
        let mut want = -0.1;
        for k in 0..3 {
            let mut d2 = 0.0;
            for d in 0..3 {
                d2 += (svs[k * 3 + d] - x[d]).powi(2);
            }
            want += coefs[k] * (-0.8 * d2).exp();
        }
        assert!((predict_svr(&m, &x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_need_no_support_vectors() {
        let ds = windows(vec![0.37; 60], 5);
        let config = SvrConfig {
            lookback: 5,
            epsilon: 0.1,
            ..SvrConfig::default()
        };
        let m = train_svr(&config, &ds).unwrap();
        assert_eq!(m.support_count(), 0);
        assert!((m.bias - 0.37).abs() < 1e-12);
        assert!(m.converged);
        for row in ds.rows() {
            assert!((predict_svr(&m, row).unwrap() - 0.37).abs() <= 0.1);
        }
    }

    #[test]
    fn fits_a_periodic_signal() {
        // test windows lie inside the range covered by training windows
        let values: Vec<f64> = (0..200).map(|i| 0.5 + 0.4 * (i as f64 / 5.0).sin()).collect();
        let ds = windows(values, 4);
        let (train, test) = (ds.slice(0, 160), ds.slice(160, ds.len()));
        let config = SvrConfig {
            lookback: 4,
            epsilon: 0.01,
            c: 100.0,
            tolerance: 1e-4,
            ..SvrConfig::default()
        };
        let fit = fit_svr(&config, &train).unwrap();
        assert!(fit.model.converged);
        let preds = predict_all(&fit.model, &test).unwrap();
        let err = crate::evaluation::mae(test.targets(), &preds).unwrap();
        assert!(err < config.epsilon, "test mae {err}");
    }

    #[test]
    fn dual_feasibility_and_kkt_after_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..300)
            .map(|t| 0.5 + 0.3 * (t as f64 / 7.0).sin() + rng.gen_range(-0.05..0.05))
            .collect();
        let ds = windows(values, 6);
        let config = SvrConfig {
            lookback: 6,
            c: 1.0,
            epsilon: 0.02,
            ..SvrConfig::default()
        };
        let fit = fit_svr(&config, &ds).unwrap();
        assert!(fit.model.converged);
        assert!(fit.model.support_count() > 0);
        assert!(fit.model.dual_coefficients.iter().all(|a| a.abs() <= config.c + 1e-9));
        let violation = fit.model.kkt_violation(&fit.train_rows, &fit.coefficients, config.c, config.epsilon);
        assert!(violation <= config.tolerance, "violation {violation}");

        let bound: f64 = fit.model.dual_coefficients.iter().map(|a| a.abs()).sum::<f64>() + fit.model.bias.abs();
        for row in ds.rows() {
            assert!(predict_svr(&fit.model, row).unwrap().abs() <= bound);
        }
    }

    #[test]
    fn training_rows_are_capped_to_most_recent() {
        let values: Vec<f64> = (0..100).map(|i| (i % 9) as f64 / 9.0).collect();
        let ds = windows(values, 3);
        let config = SvrConfig {
            lookback: 3,
            max_train_rows: 40,
            ..SvrConfig::default()
        };
        let fit = fit_svr(&config, &ds).unwrap();
        assert_eq!(fit.train_rows.len(), 40);
        assert_eq!(fit.train_rows.targets(), &ds.targets()[ds.len() - 40..]);
    }

    #[test]
    fn iteration_budget_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..120).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ds = windows(values, 4);
        let config = SvrConfig {
            lookback: 4,
            max_passes: 1,
            tolerance: 1e-9,
            c: 1000.0,
            ..SvrConfig::default()
        };
        let m = train_svr(&config, &ds).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, ds.len());
    }

    #[test]
    fn rejects_bad_input() {
        let ds = windows(vec![0.1; 20], 4);
        assert!(matches!(
            train_svr(&SvrConfig { lookback: 4, ..SvrConfig::default() }, &ds.slice(0, 0)),
            Err(Error::EmptyInput)
        ));
        assert!(train_svr(&SvrConfig::default(), &ds).is_err());
        let bad = SvrConfig {
            lookback: 4,
            epsilon: 1.5,
            ..SvrConfig::default()
        };
        assert!(matches!(train_svr(&bad, &ds), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn model_file_roundtrip() {
        let mut m = model(2, vec![0.1, 0.2, 0.3, 0.4], vec![0.5, -1.0 / 3.0], 0.05, 0.5);
        m.scaler = ScalerParams {
            min_value: 0.08,
            max_value: 5.9,
        };
        let config = SvrConfig {
            lookback: 2,
            ..SvrConfig::default()
        };
        let mut buf = Vec::new();
        m.write_to(&config, &mut buf).unwrap();
        let (back, back_config) = SvrModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_config, config);
    }
}
