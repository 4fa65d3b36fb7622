//! Penalized objective over soft powers θ and soft associations z.
//!
//! ```text
//! g(θ, z) = -(w1 Σ SE_u + w2 Σ SE_mk)
//!         + X [ μ1 C_qos(θ) + μ2 C_bin(z) + μ3 C_cpl(θ, z) ]
//! ```
//!
//! `C_qos` squares the QoS shortfalls, `C_bin = Σ z² - z⁴` vanishes only on
//! binary z, and `C_cpl` squares both the coverage shortfall `1 - Σ_n z²` of
//! every stream and the coupling violations `θ² - z²`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::sinr::{Receiver, Scenario};
use crate::{Error, Result};

/// Stacked solver variables. Both matrices are N x (U + M) with unicast
/// columns first, so row n is the per-AP block `[θ_n1..θ_nU, θ̄_n1..θ̄_nM]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverVars {
    pub theta: Array2<f64>,
    pub z: Array2<f64>,
}

impl SolverVars {
    pub fn zeros(n_aps: usize, entities: usize) -> Self {
        Self {
            theta: Array2::zeros((n_aps, entities)),
            z: Array2::zeros((n_aps, entities)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.theta.dim()
    }

    /// `[θ; z]` flattened row-major, 2N(U+M) entries.
    pub fn to_flat(&self) -> Vec<f64> {
        self.theta.iter().chain(self.z.iter()).copied().collect()
    }

    pub fn from_flat(n_aps: usize, entities: usize, flat: &[f64]) -> Result<Self> {
        let half = n_aps * entities;
        if flat.len() != 2 * half {
            return Err(Error::Domain(format!(
                "expected {} entries, got {}",
                2 * half,
                flat.len()
            )));
        }
        let shape = (n_aps, entities);
        Ok(Self {
            theta: Array2::from_shape_vec(shape, flat[..half].to_vec()).expect("shape"),
            z: Array2::from_shape_vec(shape, flat[half..].to_vec()).expect("shape"),
        })
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &SolverVars) -> SolverVars {
        SolverVars {
            theta: &self.theta + &(a * &other.theta),
            z: &self.z + &(a * &other.z),
        }
    }

    pub fn sub(&self, other: &SolverVars) -> SolverVars {
        self.add_scaled(-1.0, other)
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().chain(self.z.iter()).map(|v| v * v).sum()
    }

    pub fn dist_sq(&self, other: &SolverVars) -> f64 {
        self.theta
            .iter()
            .zip(other.theta.iter())
            .chain(self.z.iter().zip(other.z.iter()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain(self.z.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub w1: f64,
    pub w2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// Multiplier X in front of the penalty bracket (initial value).
    pub multiplier: f64,
    /// Growth factor of the multiplier between outer rounds.
    pub varsigma: f64,
    pub se_qos_uni: f64,
    pub se_qos_multi: f64,
    /// Per-AP cap on served streams; `None` means U + M.
    pub k_max: Option<usize>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            w1: 0.8,
            w2: 0.2,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            multiplier: 1.0,
            varsigma: 3.0,
            se_qos_uni: 0.5,
            se_qos_multi: 0.5,
            k_max: None,
        }
    }
}

impl PenaltyConfig {
    pub fn k_max(&self, entities: usize) -> usize {
        self.k_max.unwrap_or(entities)
    }

    pub fn validate(&self, entities: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && ((self.w1 + self.w2) - 1.0).abs() <= 1e-9) {
            return fail(format!(
                "weights must be non-negative and sum to 1 ({}, {})",
                self.w1, self.w2
            ));
        }
        if !(self.mu1 > 0.0 && self.mu2 > 0.0 && self.mu3 > 0.0) {
            return fail("penalty weights must be positive".into());
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return fail("multiplier must be positive".into());
        }
        if !(self.varsigma > 1.0) {
            return fail("varsigma must exceed 1".into());
        }
        if !(self.se_qos_uni >= 0.0 && self.se_qos_multi >= 0.0) {
            return fail("QoS floors must be non-negative".into());
        }
        let k = self.k_max(entities);
        if k == 0 || k > entities {
            return fail(format!("k_max must lie in [1, {entities}], got {k}"));
        }
        Ok(())
    }

    fn qos_floor(&self, rx: &Receiver) -> f64 {
        match rx {
            Receiver::Unicast(_) => self.se_qos_uni,
            Receiver::Multicast { .. } => self.se_qos_multi,
        }
    }

    fn weight(&self, rx: &Receiver) -> f64 {
        match rx {
            Receiver::Unicast(_) => self.w1,
            Receiver::Multicast { .. } => self.w2,
        }
    }
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Per-receiver SE from θ.
pub fn se_theta(sc: &Scenario, theta: &Array2<f64>) -> Vec<f64> {
    let pl = sc.prelog();
    sc.sinr_theta_all(theta.view())
        .into_iter()
        .map(|s| pl * (1.0 + s).log2())
        .collect()
}

pub fn qos_penalty(sc: &Scenario, vars: &SolverVars, cfg: &PenaltyConfig) -> f64 {
    se_theta(sc, &vars.theta)
        .iter()
        .zip(sc.receivers())
        .map(|(se, rx)| hinge(cfg.qos_floor(rx) - se).powi(2))
        .sum()
}

pub fn binary_penalty(vars: &SolverVars) -> f64 {
    vars.z.iter().map(|z| z * z - z.powi(4)).sum()
}

pub fn coupling_penalty(vars: &SolverVars) -> f64 {
    let coverage: f64 = vars
        .z
        .columns()
        .into_iter()
        .map(|col| hinge(1.0 - col.iter().map(|z| z * z).sum::<f64>()).powi(2))
        .sum();
    let link: f64 = vars
        .theta
        .iter()
        .zip(vars.z.iter())
        .map(|(t, z)| hinge(t * t - z * z).powi(2))
        .sum();
    coverage + link
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Penalized objective g.
    pub g: f64,
    /// Unpenalized weighted SSE (the f of the stopping test).
    pub weighted_se: f64,
    pub qos: f64,
    pub binary: f64,
    pub coupling: f64,
}

impl Evaluation {
    /// μ1 C_qos + μ2 C_bin + μ3 C_cpl (without the multiplier).
    pub fn bracket(&self, cfg: &PenaltyConfig) -> f64 {
        cfg.mu1 * self.qos + cfg.mu2 * self.binary + cfg.mu3 * self.coupling
    }
}

pub fn evaluate(sc: &Scenario, vars: &SolverVars, cfg: &PenaltyConfig) -> Evaluation {
    let se = se_theta(sc, &vars.theta);
    let mut weighted = 0.0;
    let mut qos = 0.0;
    for (s, rx) in se.iter().zip(sc.receivers()) {
        weighted += cfg.weight(rx) * s;
        qos += hinge(cfg.qos_floor(rx) - s).powi(2);
    }
    let binary = binary_penalty(vars);
    let coupling = coupling_penalty(vars);
    let bracket = cfg.mu1 * qos + cfg.mu2 * binary + cfg.mu3 * coupling;
    Evaluation {
        g: -weighted + cfg.multiplier * bracket,
        weighted_se: weighted,
        qos,
        binary,
        coupling,
    }
}

pub fn objective_g(sc: &Scenario, vars: &SolverVars, cfg: &PenaltyConfig) -> f64 {
    evaluate(sc, vars, cfg).g
}

/// Analytic gradient of g, in the layout of [`SolverVars`].
///
/// The SE part accounts for every receiver whose SINR depends on a
/// coordinate: through the coherent sum for the served stream and through
/// the interference term for everyone else.
pub fn grad_g(sc: &Scenario, vars: &SolverVars, cfg: &PenaltyConfig) -> SolverVars {
    let (n, e_count) = vars.dim();
    let theta = &vars.theta;
    let terms = sc.theta_terms(theta.view());
    let p = sc.link.p_dl;
    let l = sc.link.antennas as f64;
    let c = sc.prelog() / std::f64::consts::LN_2;
    let x = cfg.multiplier;

    let desired = sc.desired();
    let rx_gain = sc.rx_gain();

    // kappa_r: weight of dSE_r in dg, including the active QoS hinge.
    let mut coherent = Array2::<f64>::zeros((n, e_count));
    let mut interf = vec![0.0; n];
    for (r, rx) in sc.receivers().iter().enumerate() {
        let (u_r, v_r) = (terms.num[r], terms.den[r]);
        let se = c * (1.0 + u_r / v_r).ln();
        let kappa = cfg.weight(rx) + x * cfg.mu1 * 2.0 * hinge(cfg.qos_floor(rx) - se);
        if kappa == 0.0 {
            continue;
        }
        let e = sc.entity_of(r);
        let a = kappa * c * 2.0 * p * l * l * terms.amplitude[r] / (u_r + v_r);
        let b = kappa * c * 2.0 * p * l * (1.0 / (u_r + v_r) - 1.0 / v_r);
        for ap in 0..n {
            coherent[[ap, e]] += a * desired[[ap, r]];
            interf[ap] += b * rx_gain[[ap, r]];
        }
    }

    let mut g_theta = Array2::<f64>::zeros((n, e_count));
    for ap in 0..n {
        for e in 0..e_count {
            let t = theta[[ap, e]];
            let zz = vars.z[[ap, e]];
            let d_se = coherent[[ap, e]] + interf[ap] * t;
            g_theta[[ap, e]] = -d_se + x * cfg.mu3 * 4.0 * hinge(t * t - zz * zz) * t;
        }
    }

    let coverage: Vec<f64> = vars
        .z
        .columns()
        .into_iter()
        .map(|col| hinge(1.0 - col.iter().map(|z| z * z).sum::<f64>()))
        .collect();
    let mut g_z = Array2::<f64>::zeros((n, e_count));
    Zip::indexed(&mut g_z)
        .and(&vars.z)
        .and(theta)
        .for_each(|(_, e), gz, &z, &t| {
            *gz = x
                * (cfg.mu2 * (2.0 * z - 4.0 * z.powi(3))
                    - 4.0 * cfg.mu3 * hinge(t * t - z * z) * z
                    - 4.0 * cfg.mu3 * coverage[e] * z);
        });

    SolverVars {
        theta: g_theta,
        z: g_z,
    }
}
