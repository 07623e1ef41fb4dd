//! Interweaving move in the centred parameterisation.
//!
//! Given the centred paths `beta[t,j] = beta0[j] + sqrt_v[j] btilde[t,j]`,
//! redraw `v[j] = sqrt_v[j]^2` and then `beta0[j]`, and map the unchanged
//! centred paths back to normalised states.

use rand::Rng;

use crate::dist::{std_normal, Gig, VAR_FLOOR};
use crate::error::Result;
use crate::model::ModelParameters;

/// Centred increments are formed analytically (`sqrt_v * diff(btilde)` and
/// `beta[1] - beta0 = sqrt_v * btilde[1]`) rather than by subtracting
/// reconstructed paths, and the new `beta0` is drawn as an offset from the
/// old one, so no information is lost to cancellation when the scale is
/// tiny relative to `beta0`.
///
/// Coordinates whose centred increments are all exactly zero are left
/// untouched: the conditional of `v` is then improper.
pub fn asis_interweave<R: Rng + ?Sized>(p: &mut ModelParameters, rng: &mut R) -> Result<()> {
    let k = p.k;
    let t_len = p.t_len();
    for j in 0..k {
        let s_old = p.sqrt_v[j];
        let mut ss = 0.0;
        let mut prev = 0.0;
        for t in 0..t_len {
            let cur = p.states_tilde[t * k + j];
            ss += (cur - prev) * (cur - prev);
            prev = cur;
        }
        let chi = s_old * s_old * ss;
        if !(chi > 0.0 && chi.is_finite()) {
            continue;
        }
        let tau2_v = p.shrink_v.tau2[j];
        let v_new = Gig::new(0.5 - t_len as f64 / 2.0, chi, 1.0 / tau2_v)?
            .sample(rng)
            .max(VAR_FLOOR);

        let tau2_b = p.shrink_beta.tau2[j];
        let prec = 1.0 / tau2_b + 1.0 / v_new;
        let first_inc = s_old * p.states_tilde[j];
        let shift = (first_inc / v_new - p.beta0[j] / tau2_b) / prec;
        let delta = shift + std_normal(rng) / prec.sqrt();

        let s_new = if s_old < 0.0 { -v_new.sqrt() } else { v_new.sqrt() };
        for t in 0..t_len {
            let b = &mut p.states_tilde[t * k + j];
            *b = (s_old * *b - delta) / s_new;
        }
        p.beta0[j] += delta;
        p.sqrt_v[j] = s_new;
    }
    Ok(())
}
