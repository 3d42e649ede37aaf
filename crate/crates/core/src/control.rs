//! Plants, per-period closed loops and the windowed χ² residue detector.
//!
//! A control task that samples its plant every `h` seconds runs a
//! predictor-form Kalman estimator and an LQR gain designed for `h`:
//!
//! ```text
//! x[k+1]  = A_h x[k] + B_h u[k]
//! x̂[k+1] = (A_h - L_h C) x̂[k] + B_h u[k] + L_h y[k]
//! u[k]    = -K_h x̂[k]
//! ```
//!
//! With `X = [x; x̂]` this is `X[k+1] = Abb_h X[k]`.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Riccati iterations allowed before a period is rejected.
pub const RICCATI_ITERATION_CAP: usize = 200_000;
/// Residual that ends the Riccati iteration.
pub const RICCATI_TOLERANCE: f64 = 1e-10;

/// Continuous LTI plant with noise and LQR weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Process noise covariance added once per sampling period.
    pub process_noise: Matrix,
    /// Measurement noise covariance.
    pub measurement_noise: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

impl PlantModel {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, m) = (self.states(), self.inputs(), self.outputs());
        let shape_ok = self.a.is_square()
            && self.b.nrows() == n
            && self.c.ncols() == n
            && self.process_noise.shape() == (n, n)
            && self.measurement_noise.shape() == (m, m)
            && self.q.shape() == (n, n)
            && self.r.shape() == (p, p);
        if !shape_ok || n == 0 {
            return Err(Error::config("plant matrix dimensions are inconsistent"));
        }
        if linalg::min_sym_eigenvalue(&self.r) <= 0.0 {
            return Err(Error::config("R must be positive definite"));
        }
        if linalg::min_sym_eigenvalue(&self.q) < -1e-12 {
            return Err(Error::config("Q must be positive semidefinite"));
        }
        if linalg::min_sym_eigenvalue(&self.measurement_noise) <= 0.0 {
            return Err(Error::config("measurement noise covariance must be positive definite"));
        }
        Ok(())
    }
}

/// Zero-order-hold discretization: `A_h = e^{A_c h}`,
/// `B_h = ∫_0^h e^{A_c t} B_c dt`, both read off one exponential of the
/// block matrix `[[A_c, B_c], [0, 0]] h`.
pub fn discretize(plant: &PlantModel, h: f64) -> Result<(Matrix, Matrix)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("sampling period must be positive, got {h}")));
    }
    let (n, p) = (plant.states(), plant.inputs());
    let mut block = DMatrix::zeros(n + p, n + p);
    block.view_mut((0, 0), (n, n)).copy_from(&(&plant.a * h));
    block.view_mut((0, n), (n, p)).copy_from(&(&plant.b * h));
    let e = linalg::expm(&block)?;
    let a_h = e.view((0, 0), (n, n)).into_owned();
    let b_h = e.view((0, n), (n, p)).into_owned();
    if !(linalg::is_finite(&a_h) && linalg::is_finite(&b_h)) {
        return Err(Error::Numeric("non-finite discretization".into()));
    }
    Ok((a_h, b_h))
}

/// Stabilizing solution of `P = AᵀPA - AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q`.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let s = r + b.transpose() * p * b;
    let Some(s_inv) = s.try_inverse() else {
        return f64::INFINITY;
    };
    let atpb = a.transpose() * p * b;
    let res = a.transpose() * p * a - p - &atpb * s_inv * atpb.transpose() + q;
    res.amax()
}

/// Solves the discrete algebraic Riccati equation by the structure-preserving
/// doubling iteration, then polishes with plain Riccati steps until the
/// residual is below [`RICCATI_TOLERANCE`] (relative to `‖P‖`, floor 1).
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    let n = a.nrows();
    if b.iter().all(|v| *v == 0.0) {
        return Err(Error::NotStabilizable("input matrix is identically zero".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::config("R is singular"))?;
    let eye = Matrix::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * &r_inv * b.transpose();
    let mut hk = q.clone();
    let mut iterations = 0;
    for _ in 0..60 {
        iterations += 1;
        let w = &eye + &gk * &hk;
        let w_inv = w
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular matrix in doubling iteration".into()))?;
        let a_next = &ak * &w_inv * &ak;
        let g_next = &gk + &ak * &w_inv * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w_inv * &ak;
        let delta = (&h_next - &hk).amax();
        ak = a_next;
        gk = linalg::symmetrize(&g_next);
        hk = linalg::symmetrize(&h_next);
        if !linalg::is_finite(&hk) {
            break;
        }
        if delta <= 1e-15 * hk.amax().max(1.0) {
            break;
        }
    }
    let mut p = if linalg::is_finite(&hk) { hk } else { q.clone() };
    let scale = |p: &Matrix| p.amax().max(1.0);
    let mut residual = dare_residual(a, b, q, r, &p);
    while residual > RICCATI_TOLERANCE * scale(&p) && iterations < RICCATI_ITERATION_CAP {
        let s = r + b.transpose() * &p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular R + BᵀPB".into()))?;
        let atpb = a.transpose() * &p * b;
        p = linalg::symmetrize(&(a.transpose() * &p * a - &atpb * s_inv * atpb.transpose() + q));
        iterations += 1;
        if !linalg::is_finite(&p) {
            return Err(Error::RiccatiDivergence { iterations, residual: f64::INFINITY });
        }
        residual = dare_residual(a, b, q, r, &p);
    }
    if residual > RICCATI_TOLERANCE * scale(&p) {
        return Err(Error::RiccatiDivergence { iterations, residual });
    }
    Ok(DareSolution { p, iterations, residual })
}

/// LQR gain `K_h = (R + BᵀPB)⁻¹ BᵀPA` for `u = -K x`.
pub fn lqr_gain(plant: &PlantModel, a_h: &Matrix, b_h: &Matrix) -> Result<(Matrix, DareSolution)> {
    let sol = solve_dare(a_h, b_h, &plant.q, &plant.r)?;
    let s = &plant.r + b_h.transpose() * &sol.p * b_h;
    let k = s
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular R + BᵀPB".into()))?
        * b_h.transpose()
        * &sol.p
        * a_h;
    let closed = a_h - b_h * &k;
    if linalg::spectral_radius(&closed) >= 1.0 {
        return Err(Error::NotStabilizable("LQR closed loop is not Schur stable".into()));
    }
    Ok((k, sol))
}

/// Steady-state predictor Kalman gain.
#[derive(Debug, Clone)]
pub struct KalmanDesign {
    pub gain: Matrix,
    /// Steady-state one-step prediction error covariance.
    pub prediction_covariance: Matrix,
    /// Innovation covariance `C P Cᵀ + V`.
    pub innovation_covariance: Matrix,
    pub dare: DareSolution,
}

/// Dual Riccati equation: `L_h = A P Cᵀ (C P Cᵀ + V)⁻¹`.
pub fn kalman_gain(plant: &PlantModel, a_h: &Matrix, c: &Matrix) -> Result<KalmanDesign> {
    let sol = solve_dare(&a_h.transpose(), &c.transpose(), &plant.process_noise, &plant.measurement_noise)
        .map_err(|e| match e {
            Error::NotStabilizable(msg) => Error::NotStabilizable(format!("estimator: {msg}")),
            other => other,
        })?;
    let p = &sol.p;
    let innovation = linalg::symmetrize(&(c * p * c.transpose() + &plant.measurement_noise));
    let gain = a_h
        * p
        * c.transpose()
        * innovation
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular innovation covariance".into()))?;
    if linalg::spectral_radius(&(a_h - &gain * c)) >= 1.0 {
        return Err(Error::NotStabilizable("estimator error dynamics are not Schur stable".into()));
    }
    Ok(KalmanDesign {
        gain,
        prediction_covariance: p.clone(),
        innovation_covariance: innovation,
        dare: sol,
    })
}

/// `[[A, -B K], [L C, A - L C - B K]]`.
pub fn augment(a: &Matrix, b: &Matrix, k: &Matrix, l: &Matrix, c: &Matrix) -> Matrix {
    let n = a.nrows();
    let bk = b * k;
    let lc = l * c;
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, n)).copy_from(&(-&bk));
    out.view_mut((n, 0), (n, n)).copy_from(&lc);
    out.view_mut((n, n), (n, n)).copy_from(&(a - &lc - &bk));
    out
}

/// Everything a control task needs to run at one sampling period.
#[derive(Debug, Clone)]
pub struct DiscretizedLoop {
    /// Period in slots.
    pub period_slots: u64,
    /// Period in seconds.
    pub h: f64,
    pub a: Matrix,
    pub b: Matrix,
    pub k: Matrix,
    pub l: Matrix,
    pub augmented: Matrix,
    pub innovation_covariance: Matrix,
    pub lqr_residual: f64,
    pub kalman_residual: f64,
}

impl DiscretizedLoop {
    pub fn design(plant: &PlantModel, period_slots: u64, delta: f64) -> Result<Self> {
        let h = period_slots as f64 * delta;
        let (a, b) = discretize(plant, h)?;
        let (k, lqr) = lqr_gain(plant, &a, &b)?;
        let kal = kalman_gain(plant, &a, &plant.c)?;
        let augmented = augment(&a, &b, &k, &kal.gain, &plant.c);
        if linalg::spectral_radius(&augmented) >= 1.0 {
            return Err(Error::NotStabilizable(format!("closed loop unstable at period {period_slots}")));
        }
        Ok(DiscretizedLoop {
            period_slots,
            h,
            a,
            b,
            k,
            l: kal.gain,
            augmented,
            innovation_covariance: kal.innovation_covariance,
            lqr_residual: lqr.residual,
            kalman_residual: kal.dare.residual,
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.augmented)
    }
}

/// Detector parameters as written in a plant file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: usize,
    /// Explicit threshold; calibrated from `far_target` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_far")]
    pub far_target: f64,
    /// Overrides the innovation covariance from the Kalman design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residue_covariance: Option<Vec<Vec<f64>>>,
}

fn default_far() -> f64 {
    0.02
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 1,
            threshold: None,
            far_target: default_far(),
            residue_covariance: None,
        }
    }
}

/// Windowed χ² detector: `z = rᵀ Σ⁻¹ r`, `g` = mean of the last `window`
/// values, alarm when the window is full and `g > threshold`.
#[derive(Debug, Clone)]
pub struct DetectorState {
    sigma_inv: Matrix,
    window: usize,
    threshold: f64,
    buffer: VecDeque<f64>,
}

/// One detector update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    pub z: f64,
    pub g: f64,
    pub alarm: bool,
}

impl DetectorState {
    pub fn new(residue_covariance: &Matrix, window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("detector window must be positive"));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::config("detector threshold must be positive"));
        }
        let sigma_inv = residue_covariance
            .clone()
            .try_inverse()
            .filter(|_| linalg::min_sym_eigenvalue(residue_covariance) > 0.0)
            .ok_or_else(|| Error::config("residue covariance is singular"))?;
        Ok(DetectorState {
            sigma_inv,
            window,
            threshold,
            buffer: VecDeque::with_capacity(window),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Swaps the residue covariance (used when the sampling period changes)
    /// while keeping the buffered history.
    pub fn set_residue_covariance(&mut self, residue_covariance: &Matrix) -> Result<()> {
        self.sigma_inv = residue_covariance
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::config("residue covariance is singular"))?;
        Ok(())
    }

    pub fn step(&mut self, residue: &DVector<f64>) -> DetectorOutput {
        let z = (residue.transpose() * &self.sigma_inv * residue)[(0, 0)];
        self.push(z)
    }

    fn push(&mut self, z: f64) -> DetectorOutput {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(z);
        let g = self.buffer.iter().sum::<f64>() / self.buffer.len() as f64;
        // No alarm until the window is full.
        DetectorOutput {
            z,
            g,
            alarm: self.buffer.len() == self.window && g > self.threshold,
        }
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }
}

/// Threshold giving the requested false-alarm rate for whitened residues of
/// dimension `outputs` and the given window, by Monte-Carlo quantile.
pub fn calibrate_threshold<R: Rng>(outputs: usize, window: usize, far: f64, samples: usize, rng: &mut R) -> Result<f64> {
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::config("false-alarm target must lie in (0, 1)"));
    }
    if samples < 100 || window == 0 {
        return Err(Error::config("calibration needs at least 100 samples and a positive window"));
    }
    let mut det = DetectorState::new(&Matrix::identity(outputs, outputs), window, 1.0)?;
    let mut gs = Vec::with_capacity(samples);
    // Discard the warm-up so every g averages a full window.
    for i in 0..samples + window {
        let r = DVector::from_fn(outputs, |_, _| rng.sample::<f64, _>(StandardNormal));
        let out = det.step(&r);
        if i >= window {
            gs.push(out.g);
        }
    }
    gs.sort_by(f64::total_cmp);
    let idx = (((1.0 - far) * gs.len() as f64).ceil() as usize).min(gs.len() - 1);
    Ok(gs[idx])
}

/// Plant entry in a plant configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Initial plant state for simulations.
    pub x0: Vec<f64>,
    /// Target continuous decay rate γ (negative, 1/s) for the common
    /// Lyapunov function.
    pub gues_rate: f64,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Value written into the actuation buffer by a replacing attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_value: Option<Vec<f64>>,
    /// Half-width of the settling band on the plant state norm.
    #[serde(default = "default_band")]
    pub settling_band: f64,
}

fn default_band() -> f64 {
    0.05
}

impl PlantConfig {
    pub fn model(&self) -> Result<PlantModel> {
        let model = PlantModel {
            a: linalg::from_rows(&self.a)?,
            b: linalg::from_rows(&self.b)?,
            c: linalg::from_rows(&self.c)?,
            process_noise: linalg::from_rows(&self.process_noise)?,
            measurement_noise: linalg::from_rows(&self.measurement_noise)?,
            q: linalg::from_rows(&self.q)?,
            r: linalg::from_rows(&self.r)?,
        };
        model.validate()?;
        if self.x0.len() != model.states() {
            return Err(Error::config("x0 length does not match the state dimension"));
        }
        if self.gues_rate >= 0.0 || self.gues_rate.is_nan() {
            return Err(Error::config("gues_rate must be negative"));
        }
        if let Some(v) = &self.attack_value {
            if v.len() != model.inputs() {
                return Err(Error::config("attack_value length does not match the input dimension"));
            }
        }
        Ok(model)
    }
}

/// A set of named plants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantFile {
    #[serde(default = "default_plant_schema")]
    pub schema_version: u32,
    pub plants: BTreeMap<String, PlantConfig>,
}

fn default_plant_schema() -> u32 {
    1
}

impl PlantFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PlantFile = serde_json::from_str(text).map_err(|e| Error::config(format!("plant file: {e}")))?;
        if file.schema_version != 1 {
            return Err(Error::config(format!("unsupported plant schema version {}", file.schema_version)));
        }
        for (name, p) in &file.plants {
            p.model().map_err(|e| Error::config(format!("plant {name}: {e}")))?;
        }
        Ok(file)
    }

    pub fn get(&self, name: &str) -> Result<&PlantConfig> {
        self.plants
            .get(name)
            .ok_or_else(|| Error::config(format!("no plant named {name:?}")))
    }
}
