//! Closed-form downlink SINR and SE under maximum-ratio precoding and the
//! use-and-then-forget bound.
//!
//! Streams ("entities") are indexed by column: `0..U` are unicast users and
//! `U..U+M` are multicast groups. Receivers are indexed `0..U` for unicast
//! users followed by the members of every group, group by group.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chanstats::EstimationStats;
use crate::netgen::{NetworkConfig, NetworkRealization};
use crate::{Error, Result};

/// Tolerance on the per-AP power constraint.
pub const POWER_TOL: f64 = 1e-9;

/// Coherent gain of a multicast member per unit of its group's amplitude.
///
/// With MR precoding on the composite group estimate, the mean gain of member
/// k at AP n is `L sqrt(eta_bar) sqrt(xi_k zeta)`. `Printed` uses `xi_k` in
/// its place, which coincides for single-member groups and is smaller
/// otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulticastGain {
    #[default]
    Exact,
    Printed,
}

/// (T - tau)/T * log2(1 + sinr)
pub fn se_from_sinr(sinr: f64, coherence: usize, pilot_len: usize) -> Result<f64> {
    if pilot_len >= coherence {
        return Err(Error::Config(format!(
            "pilot length {pilot_len} leaves no data symbols in T = {coherence}"
        )));
    }
    if !(sinr >= 0.0) {
        return Err(Error::Domain(format!(
            "SINR must be non-negative, got {sinr}"
        )));
    }
    Ok(prelog(coherence, pilot_len) * (1.0 + sinr).log2())
}

pub fn prelog(coherence: usize, pilot_len: usize) -> f64 {
    (coherence - pilot_len) as f64 / coherence as f64
}

/// Link-level parameters shared by every SINR evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub p_dl: f64,
    pub antennas: usize,
    pub coherence: usize,
    pub pilot_len: usize,
}

impl LinkParams {
    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Self {
            p_dl: cfg.p_dl_mw,
            antennas: cfg.antennas,
            coherence: cfg.coherence,
            pilot_len: cfg.pilot_len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Unicast(usize),
    Multicast { group: usize, member: usize },
}

/// A realization together with its estimation statistics and the
/// precomputed per-receiver weights used by the θ-form SINR.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub real: NetworkRealization,
    pub stats: EstimationStats,
    pub link: LinkParams,
    pub gain_rule: MulticastGain,
    receivers: Vec<Receiver>,
    entity_of: Vec<usize>,
    /// N x R: coherent gain per unit amplitude of the served stream.
    desired: Array2<f64>,
    /// N x R: large-scale gain from each AP to each receiver.
    rx_gain: Array2<f64>,
}

impl Scenario {
    pub fn new(
        real: NetworkRealization,
        stats: EstimationStats,
        link: LinkParams,
        gain_rule: MulticastGain,
    ) -> Result<Self> {
        if link.pilot_len >= link.coherence {
            return Err(Error::Config(format!(
                "pilot length {} must be shorter than T = {}",
                link.pilot_len, link.coherence
            )));
        }
        if link.antennas == 0 || !(link.p_dl > 0.0) {
            return Err(Error::Config("antennas and p_dl must be positive".into()));
        }
        let n = real.n_aps();
        let u_count = real.unicast_users();
        let mut receivers: Vec<Receiver> = (0..u_count).map(Receiver::Unicast).collect();
        let mut entity_of: Vec<usize> = (0..u_count).collect();
        for m in 0..real.groups() {
            for k in 0..real.group_size(m) {
                receivers.push(Receiver::Multicast {
                    group: m,
                    member: k,
                });
                entity_of.push(u_count + m);
            }
        }
        let r_count = receivers.len();
        let mut desired = Array2::zeros((n, r_count));
        let mut rx_gain = Array2::zeros((n, r_count));
        for (r, rx) in receivers.iter().enumerate() {
            for ap in 0..n {
                let (d, g) = match *rx {
                    Receiver::Unicast(u) => (stats.gamma[[ap, u]].sqrt(), real.beta[[ap, u]]),
                    Receiver::Multicast { group, member } => {
                        let x = stats.xi[group][[ap, member]];
                        let z = stats.zeta[[ap, group]];
                        let d = match gain_rule {
                            MulticastGain::Exact => x.sqrt(),
                            MulticastGain::Printed if z > 0.0 => x / z.sqrt(),
                            MulticastGain::Printed => 0.0,
                        };
                        (d, real.lambda[group][[ap, member]])
                    }
                };
                desired[[ap, r]] = d;
                rx_gain[[ap, r]] = g;
            }
        }
        Ok(Self {
            real,
            stats,
            link,
            gain_rule,
            receivers,
            entity_of,
            desired,
            rx_gain,
        })
    }

    /// Generates the realization for `cfg` and derives everything else.
    pub fn from_config(cfg: &NetworkConfig, gain_rule: MulticastGain) -> Result<Self> {
        let real = NetworkRealization::generate(cfg)?;
        Self::from_realization(real, cfg, gain_rule)
    }

    pub fn from_realization(
        real: NetworkRealization,
        cfg: &NetworkConfig,
        gain_rule: MulticastGain,
    ) -> Result<Self> {
        let stats = EstimationStats::compute(&real, cfg.tau_pul());
        Self::new(real, stats, LinkParams::from_config(cfg), gain_rule)
    }

    pub fn n_aps(&self) -> usize {
        self.real.n_aps()
    }

    pub fn unicast_users(&self) -> usize {
        self.real.unicast_users()
    }

    pub fn groups(&self) -> usize {
        self.real.groups()
    }

    pub fn entities(&self) -> usize {
        self.unicast_users() + self.groups()
    }

    pub fn receivers(&self) -> &[Receiver] {
        &self.receivers
    }

    /// Stream column served to receiver `r`.
    pub fn entity_of(&self, r: usize) -> usize {
        self.entity_of[r]
    }

    pub(crate) fn desired(&self) -> &Array2<f64> {
        &self.desired
    }

    pub(crate) fn rx_gain(&self) -> &Array2<f64> {
        &self.rx_gain
    }

    pub fn prelog(&self) -> f64 {
        prelog(self.link.coherence, self.link.pilot_len)
    }

    /// Estimation statistic that converts a power coefficient into θ²:
    /// γ for unicast columns, ζ for group columns.
    pub fn stat(&self, ap: usize, e: usize) -> f64 {
        let u = self.unicast_users();
        if e < u {
            self.stats.gamma[[ap, e]]
        } else {
            self.stats.zeta[[ap, e - u]]
        }
    }

    fn la(&self) -> f64 {
        self.link.antennas as f64
    }

    /// Receiver-level numerator/denominator of the θ-form SINR:
    /// `S_r = sum_n θ[n, e(r)] d[n, r]`, `U_r = p L² S_r²`,
    /// `V_r = p L sum_n g[n, r] sum_e θ[n, e]² + 1`.
    pub fn theta_terms(&self, theta: ArrayView2<f64>) -> ThetaTerms {
        let p = self.link.p_dl;
        let l = self.la();
        let ap_power: Vec<f64> = theta
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|t| t * t).sum())
            .collect();
        let r_count = self.receivers.len();
        let mut s = vec![0.0; r_count];
        let mut num = vec![0.0; r_count];
        let mut den = vec![0.0; r_count];
        for r in 0..r_count {
            let e = self.entity_of[r];
            let mut acc_s = 0.0;
            let mut acc_v = 0.0;
            for (ap, &pw) in ap_power.iter().enumerate() {
                acc_s += theta[[ap, e]] * self.desired[[ap, r]];
                acc_v += self.rx_gain[[ap, r]] * pw;
            }
            s[r] = acc_s;
            num[r] = p * l * l * acc_s * acc_s;
            den[r] = p * l * acc_v + 1.0;
        }
        ThetaTerms {
            amplitude: s,
            num,
            den,
        }
    }

    pub fn sinr_theta_all(&self, theta: ArrayView2<f64>) -> Vec<f64> {
        let t = self.theta_terms(theta);
        t.num.iter().zip(&t.den).map(|(u, v)| u / v).collect()
    }

    pub fn sinr_unicast_theta(&self, theta: ArrayView2<f64>, u: usize) -> f64 {
        self.sinr_theta_all(theta)[u]
    }

    pub fn sinr_multicast_theta(&self, theta: ArrayView2<f64>, m: usize, k: usize) -> f64 {
        self.sinr_theta_all(theta)[self.receiver_index(m, k)]
    }

    pub fn receiver_index(&self, m: usize, k: usize) -> usize {
        self.unicast_users() + (0..m).map(|g| self.real.group_size(g)).sum::<usize>() + k
    }

    /// Unicast SINR from binary association and power coefficients.
    pub fn sinr_unicast(&self, alloc: &Allocation, u: usize) -> f64 {
        let p = self.link.p_dl;
        let l = self.la();
        let uc = self.unicast_users();
        let g = &self.stats.gamma;
        let z = &self.stats.zeta;
        let beta = &self.real.beta;
        let mut coherent = 0.0;
        let mut interference = 0.0;
        for ap in 0..self.n_aps() {
            if alloc.assoc[[ap, u]] {
                coherent += alloc.eta[[ap, u]].sqrt() * g[[ap, u]];
            }
            for up in 0..uc {
                if alloc.assoc[[ap, up]] {
                    interference += alloc.eta[[ap, up]] * beta[[ap, u]] * g[[ap, up]];
                }
            }
            for m in 0..self.groups() {
                if alloc.assoc[[ap, uc + m]] {
                    interference += alloc.eta[[ap, uc + m]] * beta[[ap, u]] * z[[ap, m]];
                }
            }
        }
        let num = p * (l * coherent).powi(2);
        num / (p * l * interference + 1.0)
    }

    /// SINR of member `k` of group `m` from association and power coefficients.
    pub fn sinr_multicast(&self, alloc: &Allocation, m: usize, k: usize) -> f64 {
        let p = self.link.p_dl;
        let l = self.la();
        let uc = self.unicast_users();
        let g = &self.stats.gamma;
        let z = &self.stats.zeta;
        let lam = &self.real.lambda[m];
        let mut coherent = 0.0;
        let mut interference = 0.0;
        for ap in 0..self.n_aps() {
            if alloc.assoc[[ap, uc + m]] {
                let x = self.stats.xi[m][[ap, k]];
                let w = match self.gain_rule {
                    MulticastGain::Exact => (x * z[[ap, m]]).sqrt(),
                    MulticastGain::Printed => x,
                };
                coherent += alloc.eta[[ap, uc + m]].sqrt() * w;
            }
            for mp in 0..self.groups() {
                if alloc.assoc[[ap, uc + mp]] {
                    interference += alloc.eta[[ap, uc + mp]] * lam[[ap, k]] * z[[ap, mp]];
                }
            }
            for u in 0..uc {
                if alloc.assoc[[ap, u]] {
                    interference += alloc.eta[[ap, u]] * lam[[ap, k]] * g[[ap, u]];
                }
            }
        }
        let num = p * (l * coherent).powi(2);
        num / (p * l * interference + 1.0)
    }

    pub fn sinr_all(&self, alloc: &Allocation) -> Vec<f64> {
        self.receivers
            .iter()
            .map(|rx| match *rx {
                Receiver::Unicast(u) => self.sinr_unicast(alloc, u),
                Receiver::Multicast { group, member } => self.sinr_multicast(alloc, group, member),
            })
            .collect()
    }

    fn report_from_sinr(&self, sinr: &[f64], w1: f64, w2: f64) -> SeReport {
        let pl = self.prelog();
        let uc = self.unicast_users();
        let se: Vec<f64> = sinr
            .iter()
            .map(|s| pl * (1.0 + s.max(0.0)).log2())
            .collect();
        let se_uni = se[..uc].to_vec();
        let mut se_multi = Vec::with_capacity(self.groups());
        let mut off = uc;
        for m in 0..self.groups() {
            let k = self.real.group_size(m);
            se_multi.push(se[off..off + k].to_vec());
            off += k;
        }
        let uni_sum: f64 = se_uni.iter().sum();
        let multi_sum: f64 = se_multi.iter().flatten().sum();
        SeReport {
            sinr: sinr.to_vec(),
            se_uni,
            se_multi,
            sse_weighted: w1 * uni_sum + w2 * multi_sum,
            sum_se: uni_sum + multi_sum,
            prelog: pl,
        }
    }

    pub fn se_report(&self, alloc: &Allocation, w1: f64, w2: f64) -> SeReport {
        self.report_from_sinr(&self.sinr_all(alloc), w1, w2)
    }

    pub fn se_report_theta(&self, theta: ArrayView2<f64>, w1: f64, w2: f64) -> SeReport {
        self.report_from_sinr(&self.sinr_theta_all(theta), w1, w2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTerms {
    pub amplitude: Vec<f64>,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

/// Binary AP association and power-control coefficients, one column per
/// stream (unicast users, then groups).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub assoc: Array2<bool>,
    pub eta: Array2<f64>,
}

impl Allocation {
    pub fn zeros(n_aps: usize, entities: usize) -> Self {
        Self {
            assoc: Array2::from_elem((n_aps, entities), false),
            eta: Array2::zeros((n_aps, entities)),
        }
    }

    /// Normalized transmit power `L sum_e a eta stat` of every AP.
    pub fn ap_load(&self, sc: &Scenario) -> Vec<f64> {
        let l = sc.link.antennas as f64;
        (0..self.eta.nrows())
            .map(|ap| {
                l * (0..self.eta.ncols())
                    .filter(|&e| self.assoc[[ap, e]])
                    .map(|e| self.eta[[ap, e]] * sc.stat(ap, e))
                    .sum::<f64>()
            })
            .collect()
    }

    /// θ = sqrt(eta * stat), zero where unassociated.
    pub fn theta(&self, sc: &Scenario) -> Array2<f64> {
        let mut t = Array2::zeros(self.eta.dim());
        for ((ap, e), v) in t.indexed_iter_mut() {
            if self.assoc[[ap, e]] {
                *v = (self.eta[[ap, e]] * sc.stat(ap, e)).sqrt();
            }
        }
        t
    }

    /// Checks binary masking, non-negativity and the per-AP power budget.
    pub fn check(&self, sc: &Scenario) -> Result<()> {
        for ((ap, e), &eta) in self.eta.indexed_iter() {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Domain(format!("eta[{ap},{e}] = {eta}")));
            }
            if !self.assoc[[ap, e]] && eta != 0.0 {
                return Err(Error::Domain(format!(
                    "eta[{ap},{e}] > 0 without association"
                )));
            }
        }
        for (ap, load) in self.ap_load(sc).into_iter().enumerate() {
            if load > 1.0 + POWER_TOL {
                return Err(Error::Domain(format!("AP {ap} load {load} exceeds budget")));
            }
        }
        Ok(())
    }

    /// Entities with no serving AP.
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.assoc.ncols())
            .filter(|&e| !self.assoc.column(e).iter().any(|&a| a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeReport {
    pub sinr: Vec<f64>,
    pub se_uni: Vec<f64>,
    pub se_multi: Vec<Vec<f64>>,
    pub sse_weighted: f64,
    pub sum_se: f64,
    pub prelog: f64,
}

impl SeReport {
    pub fn all_se(&self) -> impl Iterator<Item = f64> + '_ {
        self.se_uni
            .iter()
            .chain(self.se_multi.iter().flatten())
            .copied()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kind", "group", "member", "sinr", "se"])?;
        for (u, se) in self.se_uni.iter().enumerate() {
            w.write_record([
                "unicast".to_string(),
                String::new(),
                u.to_string(),
                self.sinr[u].to_string(),
                se.to_string(),
            ])?;
        }
        let mut r = self.se_uni.len();
        for (m, group) in self.se_multi.iter().enumerate() {
            for (k, se) in group.iter().enumerate() {
                w.write_record([
                    "multicast".to_string(),
                    m.to_string(),
                    k.to_string(),
                    self.sinr[r].to_string(),
                    se.to_string(),
                ])?;
                r += 1;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let all: Vec<f64> = self.all_se().collect();
        let min = all.iter().copied().fold(f64::INFINITY, f64::min);
        serde_json::json!({
            "sse_weighted": self.sse_weighted,
            "sum_se": self.sum_se,
            "prelog": self.prelog,
            "min_se": min,
            "users": all.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn params(p: f64, l: usize) -> LinkParams {
        LinkParams {
            p_dl: p,
            antennas: l,
            coherence: 200,
            pilot_len: 2,
        }
    }

    fn scenario(
        beta: Array2<f64>,
        lambda: Vec<Array2<f64>>,
        p: f64,
        l: usize,
        tp: f64,
    ) -> Scenario {
        let real = NetworkRealization::from_gains(beta, lambda).unwrap();
        let stats = EstimationStats::compute(&real, tp);
        Scenario::new(real, stats, params(p, l), MulticastGain::Exact).unwrap()
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_from_sinr(0.0, 200, 19).unwrap(), 0.0);
        assert_relative_eq!(se_from_sinr(1.0, 100, 50).unwrap(), 0.5);
        assert_relative_eq!(se_from_sinr(3.0, 200, 19).unwrap(), 1.81, epsilon = 1e-12);
        assert!(se_from_sinr(1.0, 10, 10).is_err());
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let sc = scenario(
            array![[1.0], [0.5]],
            vec![array![[0.3, 0.2], [0.1, 0.4]]],
            10.0,
            2,
            3.0,
        );
        let alloc = Allocation {
            assoc: Array2::from_elem((2, 2), true),
            eta: Array2::zeros((2, 2)),
        };
        assert!(sc.sinr_all(&alloc).iter().all(|&s| s == 0.0));
        assert!(sc
            .sinr_theta_all(Array2::zeros((2, 2)).view())
            .iter()
            .all(|&s| s == 0.0));
    }

    #[test]
    fn single_link_unicast_reduction() {
        // beta = 1 with tau * p_ul = 1 gives gamma = 0.5.
        let real = NetworkRealization::from_gains(array![[1.0]], vec![]).unwrap();
        let stats = EstimationStats::compute(&real, 1.0);
        assert_relative_eq!(stats.gamma[[0, 0]], 0.5);
        let sc = Scenario::new(real, stats, params(10.0, 2), MulticastGain::Exact).unwrap();
        let alloc = Allocation {
            assoc: array![[true]],
            eta: array![[0.1]],
        };
        let (p, l, eta, beta, gamma) = (10.0, 2.0, 0.1, 1.0, 0.5);
        let expected = p * l * l * eta * gamma * gamma / (p * l * eta * beta * gamma + 1.0);
        assert_relative_eq!(sc.sinr_unicast(&alloc, 0), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.5, max_relative = 1e-14);
        let theta = alloc.theta(&sc);
        assert_relative_eq!(
            sc.sinr_unicast_theta(theta.view(), 0),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn single_member_group_reduction() {
        let (p, l, tp, lam, eta) = (10.0, 2usize, 3.0, 0.8, 0.2);
        let beta = Array2::zeros((1, 0));
        let sc = scenario(beta, vec![array![[lam]]], p, l, tp);
        let z = sc.stats.zeta[[0, 0]];
        assert_relative_eq!(sc.stats.xi[0][[0, 0]], z);
        let alloc = Allocation {
            assoc: array![[true]],
            eta: array![[eta]],
        };
        let lf = l as f64;
        let expected = p * lf * lf * eta * z * z / (p * lf * eta * lam * z + 1.0);
        assert_relative_eq!(
            sc.sinr_multicast(&alloc, 0, 0),
            expected,
            max_relative = 1e-14
        );
        // Both gain conventions agree for one member.
        let mut printed = sc.clone();
        printed.gain_rule = MulticastGain::Printed;
        assert_relative_eq!(
            printed.sinr_multicast(&alloc, 0, 0),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn identical_members_identical_sinr() {
        let sc = scenario(
            array![[0.5], [0.2], [0.9]],
            vec![array![[0.3, 0.3], [0.1, 0.1], [0.7, 0.7]]],
            5.0,
            4,
            2.0,
        );
        let theta = array![[0.1, 0.2], [0.3, 0.05], [0.2, 0.2]];
        let s = sc.sinr_theta_all(theta.view());
        assert_relative_eq!(s[1], s[2], max_relative = 1e-15);
    }

    #[test]
    fn scaling_power_increases_sinr() {
        let sc = scenario(
            array![[0.5, 0.1], [0.2, 0.6], [0.9, 0.3]],
            vec![array![[0.3, 0.2], [0.1, 0.5], [0.7, 0.05]]],
            5.0,
            4,
            2.0,
        );
        let eta = array![[0.3, 0.2, 0.1], [0.1, 0.4, 0.2], [0.2, 0.1, 0.3]];
        let half = Allocation {
            assoc: Array2::from_elem((3, 3), true),
            eta: eta.mapv(|e| 0.5 * e),
        };
        let full = Allocation {
            assoc: Array2::from_elem((3, 3), true),
            eta,
        };
        for (a, b) in sc.sinr_all(&half).iter().zip(sc.sinr_all(&full)) {
            assert!(b > *a);
        }
    }

    #[test]
    fn theta_single_ap_numerator() {
        let sc = scenario(array![[0.4]], vec![], 7.0, 3, 2.0);
        let t = sc.theta_terms(array![[0.2]].view());
        let g = sc.stats.gamma[[0, 0]];
        assert_relative_eq!(
            t.num[0],
            (7f64.sqrt() * 3.0 * 0.2 * g.sqrt()).powi(2),
            max_relative = 1e-14
        );
    }

    #[test]
    fn allocation_checks() {
        let sc = scenario(array![[0.5], [0.2]], vec![], 5.0, 2, 2.0);
        let g = sc.stats.gamma.clone();
        let ok = Allocation {
            assoc: array![[true], [false]],
            eta: array![[1.0 / (2.0 * g[[0, 0]])], [0.0]],
        };
        assert!(ok.check(&sc).is_ok());
        assert_relative_eq!(ok.ap_load(&sc)[0], 1.0);
        let mut over = ok.clone();
        over.eta[[0, 0]] *= 1.01;
        assert!(over.check(&sc).is_err());
        let mut unmasked = ok.clone();
        unmasked.eta[[1, 0]] = 0.1;
        assert!(unmasked.check(&sc).is_err());
        assert!(ok.uncovered().is_empty());
    }

    #[test]
    fn report_and_csv() {
        let sc = scenario(array![[0.5]], vec![array![[0.3, 0.2]]], 5.0, 2, 2.0);
        let rep = sc.se_report_theta(array![[0.3, 0.4]].view(), 0.8, 0.2);
        let uni: f64 = rep.se_uni.iter().sum();
        let multi: f64 = rep.se_multi.iter().flatten().sum();
        assert_relative_eq!(rep.sse_weighted, 0.8 * uni + 0.2 * multi);
        assert!(rep.all_se().all(|s| s >= 0.0));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        assert_eq!(rep.summary_json()["users"], 3);
    }
}
