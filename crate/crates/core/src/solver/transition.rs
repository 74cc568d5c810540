use crate::error::{Error, Result};
use crate::matcore::Mat;
use crate::network::MixingMatrix;

/// Ordered product `W_s W_{s+1} ... W_k`, where `ws[r]` is round `r`'s
/// mixing matrix.
pub fn transition_matrix(ws: &[MixingMatrix], s: usize, k: usize) -> Result<Mat> {
    if s > k || k >= ws.len() {
        return Err(Error::OutOfRange(format!(
            "transition from {s} to {k} with {} mixing matrices",
            ws.len()
        )));
    }
    let mut phi = ws[s].w.clone();
    for mix in &ws[s + 1..=k] {
        phi = phi.matmul(&mix.w)?;
    }
    Ok(phi)
}

/// Upper bound on `|Phi(k,s)_ij - 1/m|` after `gap = k - s` rounds:
/// `2 (1 + eta^-B0) / (1 - eta^B0) * (1 - eta^B0)^(gap/B0)` with `B0 = (m-1) B`.
pub fn phi_bound(eta: f64, b: usize, m: usize, gap: usize) -> f64 {
    debug_assert!(eta > 0.0 && eta < 1.0 && b >= 1 && m >= 2);
    let b0 = ((m - 1) * b) as f64;
    let eb = eta.powf(b0);
    2.0 * (1.0 + 1.0 / eb) / (1.0 - eb) * (1.0 - eb).powf(gap as f64 / b0)
}
