//! Complex sum-product GAMP over a block-diagonal linear model.
//!
//! The mixing matrix is `A = I_L ⊗ S`: every edge node observes its own
//! copy of the shared codebook. Products with `A` are evaluated block by
//! block against `S`, so the Kronecker product is never formed. The output
//! channel is AWGN with a per-block effective variance; the input side is
//! any [`Denoiser`], which may couple coefficients across blocks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input-side estimator: maps pseudo-data `r` with pseudo-variances `tau_r`
/// to posterior means and variances of the coefficients.
pub trait Denoiser {
    /// Prior variance of every coefficient, used to initialise `tau_x`.
    fn prior_variance(&self) -> Vec<f64>;

    fn denoise(&self, r: &[Complex64], tau_r: &[f64], x_hat: &mut [Complex64], tau_x: &mut [f64]);
}

/// Independent CN(0, gamma_j) prior per coefficient.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    pub variances: Vec<f64>,
}

impl Denoiser for GaussianDenoiser {
    fn prior_variance(&self) -> Vec<f64> {
        self.variances.clone()
    }

    fn denoise(&self, r: &[Complex64], tau_r: &[f64], x_hat: &mut [Complex64], tau_x: &mut [f64]) {
        for j in 0..r.len() {
            let g = self.variances[j];
            let shrink = g / (g + tau_r[j]);
            x_hat[j] = r[j] * shrink;
            tau_x[j] = shrink * tau_r[j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GampOptions {
    pub max_iters: usize,
    /// Stop once `||x_new - x_old|| / ||x_new||` drops below this.
    pub tol: f64,
    /// Weight of the fresh update in `x_hat`, `tau_x` and `s_hat`.
    pub damping: f64,
    pub variance_floor: f64,
}

impl Default for GampOptions {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6, damping: 0.7, variance_floor: 1e-12 }
    }
}

impl GampOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("gamp max_iters must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("gamp damping {} outside (0, 1]", self.damping)));
        }
        if !(self.variance_floor > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::Config("gamp tol and variance_floor must be positive".into()));
        }
        Ok(())
    }
}

/// A GAMP instance: `y^c = S x^c + w^c`, `w^c ~ CN(0, noise_var[c])`.
pub struct GampProblem<'a> {
    pub s: &'a DMatrix<Complex64>,
    pub y: &'a [DVector<Complex64>],
    pub noise_var: &'a [f64],
    pub denoiser: &'a dyn Denoiser,
}

/// Iteration state. Vectors are stacked over blocks.
#[derive(Debug, Clone)]
pub struct GampState {
    pub x_hat: Vec<Complex64>,
    pub tau_x: Vec<f64>,
    pub s_hat: Vec<Complex64>,
    pub tau_s: Vec<f64>,
    pub r: Vec<Complex64>,
    pub tau_r: Vec<f64>,
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub mean_tau_x: f64,
}

#[derive(Debug, Clone)]
pub struct GampResult {
    pub x_hat: Vec<Complex64>,
    pub tau_x: Vec<f64>,
    /// Pseudo-data handed to the denoiser in the last iteration.
    pub r: Vec<Complex64>,
    pub tau_r: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// AWGN output posterior: mean and variance of `z` given `z ~ CN(p, tau_p)`
/// and `y = z + CN(0, noise_var)`.
pub fn awgn_output_posterior(p: Complex64, tau_p: f64, y: Complex64, noise_var: f64) -> (Complex64, f64) {
    let denom = tau_p + noise_var;
    ((y * tau_p + p * noise_var) / denom, tau_p * noise_var / denom)
}

pub fn run_gamp(problem: &GampProblem<'_>, opts: &GampOptions) -> Result<GampResult> {
    let s = problem.s;
    let (n, d) = s.shape();
    let blocks = problem.y.len();
    if problem.noise_var.len() != blocks {
        return Err(Error::Dimension(format!(
            "{} observation blocks but {} noise variances",
            blocks,
            problem.noise_var.len()
        )));
    }
    if let Some(bad) = problem.y.iter().find(|y| y.len() != n) {
        return Err(Error::Dimension(format!("observation length {} != {n}", bad.len())));
    }
    if problem.noise_var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Dimension("effective noise variance must be positive".into()));
    }
    let total = blocks * d;
    let floor = opts.variance_floor;

    let mut tau_x = problem.denoiser.prior_variance();
    if tau_x.len() != total {
        return Err(Error::Dimension(format!(
            "denoiser covers {} coefficients, model has {total}",
            tau_x.len()
        )));
    }
    for t in tau_x.iter_mut() {
        *t = t.max(floor);
    }

    // column-major planes of `s`
    let re: Vec<f64> = s.iter().map(|a| a.re).collect();
    let im: Vec<f64> = s.iter().map(|a| a.im).collect();
    let abs2: Vec<f64> = s.iter().map(|a| a.norm_sqr()).collect();
    let zero = Complex64::new(0.0, 0.0);

    let mut st = GampState {
        x_hat: vec![zero; total],
        tau_x,
        s_hat: vec![zero; blocks * n],
        tau_s: vec![0.0; blocks * n],
        r: vec![zero; total],
        tau_r: vec![0.0; total],
        iteration: 0,
        residual: f64::INFINITY,
    };
    let mut x_new = vec![zero; total];
    let mut tau_x_new = vec![0.0; total];
    let mut trace = Vec::with_capacity(opts.max_iters);
    let mut converged = false;

    let mut p_re = vec![0.0; n];
    let mut p_im = vec![0.0; n];
    let mut tau_p = vec![0.0; n];

    for it in 0..opts.max_iters {
        // Fresh messages are taken whole on the first pass.
        let damp = if it == 0 { 1.0 } else { opts.damping };

        for c in 0..blocks {
            let xb = &st.x_hat[c * d..(c + 1) * d];
            let txb = &st.tau_x[c * d..(c + 1) * d];
            p_re.fill(0.0);
            p_im.fill(0.0);
            tau_p.fill(0.0);
            let cols = re.chunks_exact(n).zip(im.chunks_exact(n)).zip(abs2.chunks_exact(n));
            for (((c_re, c_im), col2), (&xj, &txj)) in cols.zip(xb.iter().zip(txb)) {
                for i in 0..n {
                    p_re[i] += c_re[i] * xj.re - c_im[i] * xj.im;
                    p_im[i] += c_re[i] * xj.im + c_im[i] * xj.re;
                    tau_p[i] += col2[i] * txj;
                }
            }
            let yb = &problem.y[c];
            let nv = problem.noise_var[c];
            for i in 0..n {
                let idx = c * n + i;
                let tp = tau_p[i].max(floor);
                let pi = Complex64::new(p_re[i], p_im[i]) - st.s_hat[idx] * tp;
                let (z_mean, z_var) = awgn_output_posterior(pi, tp, yb[i], nv);
                let s_fresh = (z_mean - pi) / tp;
                let ts_fresh = ((1.0 - z_var / tp) / tp).max(floor);
                st.s_hat[idx] = s_fresh * damp + st.s_hat[idx] * (1.0 - damp);
                st.tau_s[idx] = ts_fresh;
            }
            let sb = &st.s_hat[c * n..(c + 1) * n];
            let tsb = &st.tau_s[c * n..(c + 1) * n];
            let cols = re.chunks_exact(n).zip(im.chunks_exact(n)).zip(abs2.chunks_exact(n));
            for (j, ((c_re, c_im), col2)) in cols.enumerate() {
                let mut back = zero;
                let mut prec = 0.0;
                for i in 0..n {
                    back += Complex64::new(c_re[i], -c_im[i]) * sb[i];
                    prec += col2[i] * tsb[i];
                }
                let tr = (1.0 / prec.max(floor)).max(floor);
                st.tau_r[c * d + j] = tr;
                st.r[c * d + j] = xb[j] + back * tr;
            }
        }

        problem.denoiser.denoise(&st.r, &st.tau_r, &mut x_new, &mut tau_x_new);

        let mut diff = 0.0;
        let mut norm = 0.0;
        for j in 0..total {
            let x = x_new[j] * damp + st.x_hat[j] * (1.0 - damp);
            let tx = (tau_x_new[j] * damp + st.tau_x[j] * (1.0 - damp)).max(floor);
            diff += (x - st.x_hat[j]).norm_sqr();
            norm += x.norm_sqr();
            st.x_hat[j] = x;
            st.tau_x[j] = tx;
        }
        st.iteration = it + 1;
        st.residual = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };

        let finite = st.residual.is_finite()
            && st.x_hat.iter().all(|x| x.re.is_finite() && x.im.is_finite())
            && st.tau_x.iter().all(|t| t.is_finite());
        if !finite {
            return Err(Error::NonFinite { iteration: st.iteration });
        }
        trace.push(TraceRow {
            iteration: st.iteration,
            residual: st.residual,
            mean_tau_x: st.tau_x.iter().sum::<f64>() / total as f64,
        });
        if st.residual < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(GampResult {
        x_hat: st.x_hat,
        tau_x: st.tau_x,
        r: st.r,
        tau_r: st.tau_r,
        iterations: st.iteration,
        converged,
        trace,
    })
}
