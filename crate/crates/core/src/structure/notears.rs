//! Least-squares structure learning under the smooth acyclicity constraint,
//! solved with an augmented Lagrangian around a proximal-gradient inner loop.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expm::acyclicity;
use super::StructureParams;
use crate::par::{chunked, Execution};
use crate::sampler::{Dataset, Role};

/// Second-moment summary of a data matrix; the least-squares loss depends on
/// the data only through it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    pub cov: DMatrix<f64>,
    pub n_rows: usize,
}

impl SampleCovariance {
    /// Centered covariance of a dataset. Boolean columns stay on their 0/1
    /// scale; categorical columns with more than two levels are standardized.
    pub fn from_dataset(ds: &Dataset, exec: Execution) -> Self {
        let d = ds.n_cols();
        let standardize: Vec<bool> = ds.schema.columns.iter().map(|c| c.cardinality > 2).collect();
        let mut s = Self::compute(ds.n_rows(), d, exec, &standardize, |i, out| {
            for (o, v) in out.iter_mut().zip(ds.row(i)) {
                *o = *v as f64;
            }
        });
        s.names = ds.schema.columns.iter().map(|c| c.name.clone()).collect();
        s.roles = ds.schema.columns.iter().map(|c| c.role).collect();
        s
    }

    /// Centered covariance of a row-major `n × d` matrix.
    pub fn from_rows(names: Vec<String>, roles: Vec<Role>, rows: &[f64], exec: Execution) -> Self {
        let d = names.len();
        assert_eq!(rows.len() % d.max(1), 0, "row-major data must be a multiple of the column count");
        let mut s = Self::compute(rows.len() / d.max(1), d, exec, &vec![false; d], |i, out| {
            out.copy_from_slice(&rows[i * d..(i + 1) * d]);
        });
        s.names = names;
        s.roles = roles;
        s
    }

    fn compute<F>(n: usize, d: usize, exec: Execution, standardize: &[bool], fill: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let sums = chunked(exec, n, |range| {
            let mut acc = vec![0.0; d];
            let mut row = vec![0.0; d];
            for i in range {
                fill(i, &mut row);
                for (a, x) in acc.iter_mut().zip(&row) {
                    *a += x;
                }
            }
            acc
        });
        let mut mean = vec![0.0; d];
        for part in &sums {
            for (m, p) in mean.iter_mut().zip(part) {
                *m += p;
            }
        }
        let nf = n.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= nf);
        let cross = chunked(exec, n, |range| {
            let mut acc = vec![0.0; d * d];
            let mut row = vec![0.0; d];
            for i in range {
                fill(i, &mut row);
                for (x, m) in row.iter_mut().zip(&mean) {
                    *x -= m;
                }
                for a in 0..d {
                    let xa = row[a];
                    if xa == 0.0 {
                        continue;
                    }
                    for b in a..d {
                        acc[a * d + b] += xa * row[b];
                    }
                }
            }
            acc
        });
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for part in &cross {
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += part[a * d + b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / nf;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        for a in (0..d).filter(|&a| standardize[a]) {
            let sd = cov[(a, a)].sqrt();
            if sd > 0.0 {
                for b in 0..d {
                    cov[(a, b)] /= sd;
                }
                for b in 0..d {
                    cov[(b, a)] /= sd;
                }
            }
        }
        SampleCovariance { names: Vec::new(), roles: Vec::new(), cov, n_rows: n }
    }

    /// Columns with (numerically) zero variance.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.cov.nrows()).filter(|&i| self.cov[(i, i)] <= 1e-12).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotearsFit {
    /// Optimizer weights before thresholding.
    pub weights: Vec<Vec<f64>>,
    pub h: f64,
    pub outer_iterations: usize,
    pub rho: f64,
    pub converged: bool,
    /// Augmented-Lagrangian objective after each accepted inner iteration,
    /// one trace per inner solve.
    #[serde(skip)]
    pub objective_traces: Vec<Vec<f64>>,
}

struct Problem<'a> {
    cov: &'a DMatrix<f64>,
    mask: &'a DMatrix<bool>,
    lambda: f64,
    alpha: f64,
    rho: f64,
}

impl Problem<'_> {
    // smooth part: ½ tr((I−W)ᵀ S (I−W)) + α h + ρ/2 h²
    fn smooth(&self, w: &DMatrix<f64>) -> (f64, DMatrix<f64>, f64) {
        let d = w.nrows();
        let resid = DMatrix::<f64>::identity(d, d) - w;
        let s_resid = self.cov * &resid;
        let loss = 0.5 * resid.component_mul(&s_resid).sum();
        let (h, grad_h) = acyclicity(w);
        let value = loss + self.alpha * h + 0.5 * self.rho * h * h;
        let mut grad = -s_resid + grad_h * (self.alpha + self.rho * h);
        self.project(&mut grad);
        (value, grad, h)
    }

    fn project(&self, m: &mut DMatrix<f64>) {
        for (x, ok) in m.iter_mut().zip(self.mask.iter()) {
            if !ok {
                *x = 0.0;
            }
        }
    }

    fn prox(&self, v: &DMatrix<f64>, step: f64) -> DMatrix<f64> {
        let t = step * self.lambda;
        let mut out = v.map(|x| x.signum() * (x.abs() - t).max(0.0));
        self.project(&mut out);
        out
    }

    fn l1(&self, w: &DMatrix<f64>) -> f64 {
        self.lambda * w.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Proximal gradient with spectral step sizes and backtracking on the
    /// quadratic upper bound, which makes the objective monotone.
    fn solve(&self, w0: &DMatrix<f64>, max_iter: usize, tol: f64) -> (DMatrix<f64>, Vec<f64>) {
        let mut w = w0.clone();
        let (mut g, mut grad, _) = self.smooth(&w);
        let mut trace = vec![g + self.l1(&w)];
        let mut step = 1.0;
        for _ in 0..max_iter {
            let mut accepted = None;
            for _ in 0..200 {
                let cand = self.prox(&(&w - &grad * step), step);
                let diff = &cand - &w;
                let (g_new, grad_new, _) = self.smooth(&cand);
                let bound = g + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
                if g_new <= bound + 1e-12 * g.abs().max(1.0) {
                    accepted = Some((cand, diff, g_new, grad_new));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, diff, g_new, grad_new)) = accepted else { break };
            let objective = g_new + self.l1(&cand);
            if objective > *trace.last().unwrap() {
                // rounding at the noise floor; keep the previous iterate
                break;
            }
            let y = &grad_new - &grad;
            let sy = diff.dot(&y);
            w = cand;
            g = g_new;
            grad = grad_new;
            trace.push(objective);
            let change = diff.abs().max();
            if change <= tol {
                break;
            }
            step = if sy > 0.0 { (diff.norm_squared() / sy).clamp(1e-16, 1e6) } else { (step * 2.0).min(1e6) };
        }
        (w, trace)
    }
}

/// Runs the augmented-Lagrangian outer loop: ρ grows tenfold while an inner
/// solve fails to shrink h by 4×, then α ← α + ρh.
pub fn notears_linear(cov: &DMatrix<f64>, allowed: &DMatrix<bool>, params: &StructureParams) -> NotearsFit {
    let d = cov.nrows();
    let mut w = DMatrix::<f64>::zeros(d, d);
    let mut alpha = 0.0;
    let mut rho = 1.0;
    let mut h = f64::INFINITY;
    let mut traces = Vec::new();
    let mut outer = 0;
    while outer < params.max_outer_iterations {
        outer += 1;
        let (w_new, h_new) = loop {
            let problem = Problem { cov, mask: allowed, lambda: params.l1_penalty, alpha, rho };
            let (cand, trace) = problem.solve(&w, params.max_inner_iterations, params.inner_tolerance);
            traces.push(trace);
            let (h_cand, _) = acyclicity(&cand);
            if h_cand > 0.25 * h && rho < params.rho_max {
                rho *= 10.0;
            } else {
                break (cand, h_cand);
            }
        };
        w = w_new;
        h = h_new;
        alpha += rho * h;
        if h <= params.h_tolerance || rho >= params.rho_max {
            break;
        }
    }
    NotearsFit {
        weights: (0..d).map(|i| (0..d).map(|j| w[(i, j)]).collect()).collect(),
        h,
        outer_iterations: outer,
        rho,
        converged: h <= params.h_tolerance,
        objective_traces: traces,
    }
}
