//! Joint draw of the normalised state paths.

use rand::Rng;

use super::Observations;
use crate::error::Result;
use crate::linalg::BandedSpd;
use crate::model::ModelParameters;

/// Precision matrix and linear term of `btilde | rest`, stacked time-major.
///
/// The random-walk prior with `btilde[0] = 0` contributes `2I` on every
/// diagonal block but the last (`I`) and `-I` on the first off-diagonal
/// blocks; the likelihood adds `z z' / sigma2` with `z = x * sqrt_v`.
pub(crate) fn state_precision(p: &ModelParameters, obs: Option<&Observations>) -> (BandedSpd, Vec<f64>) {
    let k = p.k;
    let t_len = p.t_len();
    let n = t_len * k;
    let mut prec = BandedSpd::zeros(n, k);
    for t in 0..t_len {
        for j in 0..k {
            let i = t * k + j;
            prec.add(i, i, if t + 1 < t_len { 2.0 } else { 1.0 });
            if t > 0 {
                prec.add(i, i - k, -1.0);
            }
        }
    }
    let mut b = vec![0.0; n];
    if let Some(obs) = obs {
        let mut z = vec![0.0; k];
        for t in 0..t_len {
            let x = &obs.x[t];
            let w = (-p.log_vol[t]).exp();
            let mut resid = obs.y[t];
            for j in 0..k {
                resid -= x[j] * p.beta0[j];
                z[j] = x[j] * p.sqrt_v[j];
            }
            for j in 0..k {
                b[t * k + j] = z[j] * resid * w;
                for l in 0..=j {
                    prec.add(t * k + j, t * k + l, z[j] * z[l] * w);
                }
            }
        }
    }
    (prec, b)
}

/// Exact draw of all `T x K` normalised states from their Gaussian full
/// conditional. `obs = None` drops the likelihood.
pub fn draw_states<R: Rng + ?Sized>(
    p: &ModelParameters,
    obs: Option<&Observations>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (prec, b) = state_precision(p, obs);
    let chol = prec.cholesky_jittered()?;
    Ok(chol.sample_canonical(&b, rng))
}
