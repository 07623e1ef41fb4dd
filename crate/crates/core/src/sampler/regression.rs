//! Joint draw of the initial coefficients and the signed state scales.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::Observations;
use crate::error::Result;
use crate::linalg::sample_dense_canonical;
use crate::model::ModelParameters;

/// Gaussian regression of `y` on the `2K` columns `[x, x * btilde]` with
/// independent `N(0, tau2)` priors. Returns `(beta0, sqrt_v)`.
///
/// The system is solved in prior-standardised coordinates `u = theta / sd`,
/// whose precision is `I + D W' S W D`; this stays well conditioned when
/// some prior variances are many orders of magnitude apart.
pub fn draw_beta0_and_scales<R: Rng + ?Sized>(
    p: &ModelParameters,
    obs: Option<&Observations>,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = p.k;
    let m = 2 * k;
    let sd: Vec<f64> = p
        .shrink_beta
        .tau2
        .iter()
        .chain(&p.shrink_v.tau2)
        .map(|t| t.sqrt())
        .collect();
    let mut prec = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    if let Some(obs) = obs {
        let mut row = vec![0.0; m];
        for t in 0..p.t_len() {
            let x = &obs.x[t];
            let bt = p.state_tilde(t);
            let w = (-p.log_vol[t]).exp();
            for j in 0..k {
                row[j] = x[j] * sd[j];
                row[k + j] = x[j] * bt[j] * sd[k + j];
            }
            for i in 0..m {
                b[i] += w * row[i] * obs.y[t];
                for l in 0..=i {
                    prec[(i, l)] += w * row[i] * row[l];
                }
            }
        }
        for i in 0..m {
            for l in 0..i {
                prec[(l, i)] = prec[(i, l)];
            }
        }
    }
    let u = sample_dense_canonical(&prec, &b, rng)?;
    let beta0 = (0..k).map(|j| u[j] * sd[j]).collect();
    let sqrt_v = (0..k).map(|j| u[k + j] * sd[k + j]).collect();
    Ok((beta0, sqrt_v))
}
