//! Second-order statistics of the MMSE channel estimates.

use ndarray::Array2;

use crate::netgen::NetworkRealization;

/// Variance of the MMSE estimate of a unicast channel with gain `beta`.
pub fn gamma(beta: f64, tau_pul: f64) -> f64 {
    tau_pul * beta * beta / (tau_pul * beta + 1.0)
}

/// Variance of the MMSE estimate of member `k` of a group sharing one pilot.
/// The denominator sums the gains of every member of the group.
pub fn xi(lambda_group: &[f64], k: usize, tau_pul: f64) -> f64 {
    let total: f64 = lambda_group.iter().sum();
    tau_pul * lambda_group[k] * lambda_group[k] / (tau_pul * total + 1.0)
}

/// Mean square (per antenna) of the composite group estimate, the sum of the
/// members' estimates.
pub fn zeta(lambda_group: &[f64], tau_pul: f64) -> f64 {
    let total: f64 = lambda_group.iter().sum();
    tau_pul * total * total / (tau_pul * total + 1.0)
}

/// Estimation statistics of one realization, computed once and reused by
/// every SINR and gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    /// `gamma[[n, u]]`
    pub gamma: Array2<f64>,
    /// `xi[m][[n, k]]`
    pub xi: Vec<Array2<f64>>,
    /// `zeta[[n, m]]`
    pub zeta: Array2<f64>,
    pub tau_pul: f64,
}

impl EstimationStats {
    pub fn compute(real: &NetworkRealization, tau_pul: f64) -> Self {
        let n = real.n_aps();
        let gamma = real.beta.mapv(|b| gamma(b, tau_pul));
        let mut zeta_m = Array2::zeros((n, real.groups()));
        let mut xi_m = Vec::with_capacity(real.groups());
        for (m, lam) in real.lambda.iter().enumerate() {
            let mut x = Array2::zeros(lam.dim());
            for ap in 0..n {
                let row: Vec<f64> = lam.row(ap).to_vec();
                for k in 0..row.len() {
                    x[[ap, k]] = xi(&row, k, tau_pul);
                }
                zeta_m[[ap, m]] = zeta(&row, tau_pul);
            }
            xi_m.push(x);
        }
        Self {
            gamma,
            xi: xi_m,
            zeta: zeta_m,
            tau_pul,
        }
    }
}
