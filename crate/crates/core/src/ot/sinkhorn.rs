//! Stabilized Sinkhorn iterations for entropically regularized transport.
//!
//! Dual potentials `f`, `g` live in the log domain:
//!
//! ```text
//! f_i = eps * log a_i - eps * LSE_j((g_j - C_ij) / eps)
//! g_j = eps * log b_j - eps * LSE_i((f_i - C_ij) / eps)
//! pi_ij = exp((f_i + g_j - C_ij) / eps)
//! ```
//!
//! Between log-domain sweeps the cheap multiplicative updates run on the
//! kernel `exp((f + g - C) / eps)`, and the scaling vectors are absorbed into
//! the potentials before they can overflow or underflow. The target epsilon
//! is reached through a geometric schedule that warm-starts each stage.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Check the marginal error every this many sweeps.
const CHECK_EVERY: usize = 10;

pub(crate) struct SinkhornSolution {
    pub plan: Array2<f64>,
    pub iterations: usize,
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn ln_weights(w: ArrayView1<'_, f64>) -> Array1<f64> {
    w.mapv(|x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
}

/// Scaling vectors are folded back into the potentials once any of them
/// leaves `[exp(-ABSORB), exp(ABSORB)]`.
const ABSORB: f64 = 30.0;

/// One exact log-domain sweep over both potentials.
fn log_sweep(
    f: &mut Array1<f64>,
    g: &mut Array1<f64>,
    log_a: &Array1<f64>,
    log_b: &Array1<f64>,
    cost: ArrayView2<'_, f64>,
    eps: f64,
) {
    for i in 0..f.len() {
        f[i] = if log_a[i] == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let row = cost.row(i);
            eps * log_a[i] - eps * log_sum_exp(row.iter().zip(g.iter()).map(|(c, gj)| (gj - c) / eps))
        };
    }
    for j in 0..g.len() {
        g[j] = if log_b[j] == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let col = cost.column(j);
            eps * log_b[j] - eps * log_sum_exp(col.iter().zip(f.iter()).map(|(c, fi)| (fi - c) / eps))
        };
    }
}

fn gibbs_kernel(f: &Array1<f64>, g: &Array1<f64>, cost: ArrayView2<'_, f64>, eps: f64) -> Array2<f64> {
    Array2::from_shape_fn(cost.dim(), |(i, j)| {
        if f[i] == f64::NEG_INFINITY || g[j] == f64::NEG_INFINITY {
            0.0
        } else {
            ((f[i] + g[j] - cost[[i, j]]) / eps).exp()
        }
    })
}

/// `target / mass` with inactive entries (zero target) pinned to zero.
fn scale(target: f64, mass: f64) -> f64 {
    if target == 0.0 {
        0.0
    } else {
        target / mass
    }
}

fn absorb(potential: &mut Array1<f64>, scaling: &Array1<f64>, eps: f64) {
    for (p, s) in potential.iter_mut().zip(scaling.iter()) {
        if *p != f64::NEG_INFINITY {
            *p += eps * s.ln();
        }
    }
}

struct Stage<'a> {
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
    log_a: Array1<f64>,
    log_b: Array1<f64>,
    cost: ArrayView2<'a, f64>,
    max_iterations: usize,
    iterations: usize,
    last_err: f64,
}

impl Stage<'_> {
    fn non_finite(&self, f: &Array1<f64>, g: &Array1<f64>) -> bool {
        f.iter()
            .zip(self.a.iter())
            .chain(g.iter().zip(self.b.iter()))
            .any(|(p, w)| *w > 0.0 && !p.is_finite())
    }

    /// Run scaling iterations at fixed `eps` until the row marginals are
    /// within `tol` (columns are exact after every sweep). Returns false when
    /// the iteration budget runs out.
    fn run(&mut self, f: &mut Array1<f64>, g: &mut Array1<f64>, eps: f64, tol: f64) -> Result<bool> {
        let (n, m) = self.cost.dim();
        loop {
            log_sweep(f, g, &self.log_a, &self.log_b, self.cost, eps);
            self.iterations += 1;
            if self.non_finite(f, g) {
                return Err(Error::numerical(
                    "ot",
                    format!(
                        "Sinkhorn potentials became non-finite at iteration {} (epsilon {eps:e}); \
                         use a larger epsilon",
                        self.iterations
                    ),
                ));
            }
            let kernel = gibbs_kernel(f, g, self.cost, eps);
            let mut u = Array1::<f64>::ones(n);
            let mut v = Array1::<f64>::ones(m);
            let mut sweeps = 0usize;
            loop {
                if sweeps.is_multiple_of(CHECK_EVERY) {
                    let kv = kernel.dot(&v);
                    self.last_err = kv
                        .iter()
                        .zip(u.iter())
                        .zip(self.a.iter())
                        .map(|((k, ui), ai)| (ui * k - ai).abs())
                        .fold(0.0, f64::max);
                    if self.last_err < tol {
                        absorb(f, &u, eps);
                        absorb(g, &v, eps);
                        return Ok(true);
                    }
                }
                if self.iterations >= self.max_iterations {
                    return Ok(false);
                }
                let kv = kernel.dot(&v);
                for i in 0..n {
                    u[i] = scale(self.a[i], kv[i]);
                }
                let ktu = kernel.t().dot(&u);
                for j in 0..m {
                    v[j] = scale(self.b[j], ktu[j]);
                }
                self.iterations += 1;
                sweeps += 1;

                let out_of_range = u
                    .iter()
                    .zip(self.a.iter())
                    .chain(v.iter().zip(self.b.iter()))
                    .any(|(s, w)| *w > 0.0 && !(s.is_finite() && s.ln().abs() < ABSORB));
                if out_of_range {
                    let finite = u.iter().chain(v.iter()).all(|s| s.is_finite() && *s >= 0.0);
                    if finite {
                        absorb(f, &u, eps);
                        absorb(g, &v, eps);
                    }
                    break;
                }
            }
        }
    }
}

/// Solve with epsilon scaling: warm-start the potentials through a geometric
/// schedule of regularization strengths ending at `eps`.
pub(crate) fn sinkhorn_log(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    eps: f64,
    max_iterations: usize,
    tol: f64,
) -> Result<SinkhornSolution> {
    let (n, m) = cost.dim();
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut stage = Stage {
        a,
        b,
        log_a: ln_weights(a),
        log_b: ln_weights(b),
        cost,
        max_iterations,
        iterations: 0,
        last_err: f64::INFINITY,
    };

    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let mut schedule = Vec::new();
    let mut e = max_cost;
    while e > eps {
        schedule.push(e);
        e *= 0.25;
    }
    schedule.push(eps);

    let last = schedule.len() - 1;
    for (k, &stage_eps) in schedule.iter().enumerate() {
        let stage_tol = if k == last { tol } else { tol.max(1e-4) };
        if !stage.run(&mut f, &mut g, stage_eps, stage_tol)? {
            return Err(Error::numerical(
                "ot",
                format!(
                    "Sinkhorn did not reach tolerance {tol:e} in {} iterations \
                     (marginal error {:e}, epsilon {stage_eps:e})",
                    stage.iterations, stage.last_err
                ),
            ));
        }
    }

    let plan = gibbs_kernel(&f, &g, cost, eps);
    Ok(SinkhornSolution {
        plan,
        iterations: stage.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lse_handles_neg_infinity() {
        let v = [f64::NEG_INFINITY, 0.0];
        assert!((log_sum_exp(v.iter().copied()) - 0.0).abs() < 1e-15);
        let v = [f64::NEG_INFINITY; 2];
        assert_eq!(log_sum_exp(v.iter().copied()), f64::NEG_INFINITY);
    }

    #[test]
    fn tiny_epsilon_does_not_underflow() {
        // exp(-1 / 1e-4) underflows; the log-domain form must still converge.
        let sol = sinkhorn_log(
            array![0.5, 0.5].view(),
            array![0.5, 0.5].view(),
            array![[0.0, 1.0], [1.0, 0.0]].view(),
            1e-4,
            1000,
            1e-10,
        )
        .unwrap();
        assert!((sol.plan[[0, 0]] - 0.5).abs() < 1e-9);
        assert!(sol.plan[[0, 1]] < 1e-12);
    }
}
