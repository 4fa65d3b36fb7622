//! Realization-level Monte-Carlo simulation of uplink training, MMSE
//! estimation and MR-precoded downlink, used to certify the closed-form
//! statistics and SINRs.
//!
//! Draws are split into fixed-size batches, each with its own RNG stream;
//! batch partial sums are reduced in batch order so results do not depend
//! on thread scheduling.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::netgen::{derive_seed, seeded_rng, stream};
use crate::sinr::{Allocation, Receiver, Scenario};
use crate::{Error, Result};

pub const MIN_DRAWS: usize = 1000;
const BATCH: usize = 1000;

fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Small-scale fading and pilot noise of one coherence block.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// `[(n * U + u) * L + l]`
    pub h_uni: Vec<Complex64>,
    /// per group, `[(n * K + k) * L + l]`
    pub h_multi: Vec<Vec<Complex64>>,
    /// `[(n * L + l) * tau + t]`
    pub pilot_noise: Vec<Complex64>,
}

impl ChannelDraw {
    pub fn sample<R: Rng>(rng: &mut R, sc: &Scenario) -> Self {
        let n = sc.n_aps();
        let l = sc.link.antennas;
        let h_uni = (0..n * sc.unicast_users() * l).map(|_| cn(rng)).collect();
        let h_multi = (0..sc.groups())
            .map(|m| {
                (0..n * sc.real.group_size(m) * l)
                    .map(|_| cn(rng))
                    .collect()
            })
            .collect();
        let pilot_noise = (0..n * l * sc.link.pilot_len).map(|_| cn(rng)).collect();
        Self {
            h_uni,
            h_multi,
            pilot_noise,
        }
    }
}

/// True channels and their MMSE estimates for one draw.
#[derive(Debug, Clone)]
pub struct Estimates {
    /// Unicast channels and estimates, `[(n * U + u) * L + l]`.
    pub c: Vec<Complex64>,
    pub c_hat: Vec<Complex64>,
    /// Multicast member channels and per-member estimates, per group.
    pub t: Vec<Vec<Complex64>>,
    pub t_hat_member: Vec<Vec<Complex64>>,
    /// Composite group estimate (sum over members), `[(n * M + m) * L + l]`.
    pub t_hat_group: Vec<Complex64>,
    /// Pilot observation projected on each group pilot, same layout.
    pub y_group: Vec<Complex64>,
    /// Pilot observation projected on each unicast pilot.
    pub y_uni: Vec<Complex64>,
}

/// Builds the received pilot matrix of every AP (orthonormal pilots are the
/// first U + M columns of the tau x tau identity), projects it on each pilot
/// and forms the MMSE estimates.
pub fn simulate_training(draw: &ChannelDraw, sc: &Scenario) -> Estimates {
    let n = sc.n_aps();
    let l = sc.link.antennas;
    let tau = sc.link.pilot_len;
    let uc = sc.unicast_users();
    let mc = sc.groups();
    let tp = sc.stats.tau_pul;
    let amp = tp.sqrt();
    let beta = &sc.real.beta;

    let mut c = vec![Complex64::default(); n * uc * l];
    for ap in 0..n {
        for u in 0..uc {
            let s = beta[[ap, u]].sqrt();
            for a in 0..l {
                let i = (ap * uc + u) * l + a;
                c[i] = draw.h_uni[i] * s;
            }
        }
    }
    let mut t = Vec::with_capacity(mc);
    for m in 0..mc {
        let k_count = sc.real.group_size(m);
        let lam = &sc.real.lambda[m];
        let mut tm = vec![Complex64::default(); n * k_count * l];
        for ap in 0..n {
            for k in 0..k_count {
                let s = lam[[ap, k]].sqrt();
                for a in 0..l {
                    let i = (ap * k_count + k) * l + a;
                    tm[i] = draw.h_multi[m][i] * s;
                }
            }
        }
        t.push(tm);
    }

    // Y_n (L x tau): column u carries unicast pilot u, column U + m the pilot
    // shared by group m; remaining columns hold noise only.
    let mut y = draw.pilot_noise.clone();
    for ap in 0..n {
        for a in 0..l {
            let row = (ap * l + a) * tau;
            for u in 0..uc {
                y[row + u] += c[(ap * uc + u) * l + a] * amp;
            }
            for m in 0..mc {
                let k_count = sc.real.group_size(m);
                let sum: Complex64 = (0..k_count).map(|k| t[m][(ap * k_count + k) * l + a]).sum();
                y[row + uc + m] += sum * amp;
            }
        }
    }

    let mut y_uni = vec![Complex64::default(); n * uc * l];
    let mut c_hat = vec![Complex64::default(); n * uc * l];
    for ap in 0..n {
        for u in 0..uc {
            let b = beta[[ap, u]];
            let w = amp * b / (tp * b + 1.0);
            for a in 0..l {
                let obs = y[(ap * l + a) * tau + u];
                y_uni[(ap * uc + u) * l + a] = obs;
                c_hat[(ap * uc + u) * l + a] = obs * w;
            }
        }
    }
    let mut y_group = vec![Complex64::default(); n * mc * l];
    let mut t_hat_group = vec![Complex64::default(); n * mc * l];
    let mut t_hat_member = Vec::with_capacity(mc);
    for m in 0..mc {
        let k_count = sc.real.group_size(m);
        let lam = &sc.real.lambda[m];
        let mut th = vec![Complex64::default(); n * k_count * l];
        for ap in 0..n {
            let total: f64 = lam.row(ap).sum();
            let denom = tp * total + 1.0;
            for a in 0..l {
                let obs = y[(ap * l + a) * tau + uc + m];
                y_group[(ap * mc + m) * l + a] = obs;
                t_hat_group[(ap * mc + m) * l + a] = obs * (amp * total / denom);
                for k in 0..k_count {
                    th[(ap * k_count + k) * l + a] = obs * (amp * lam[[ap, k]] / denom);
                }
            }
        }
        t_hat_member.push(th);
    }
    Estimates {
        c,
        c_hat,
        t,
        t_hat_member,
        t_hat_group,
        y_group,
        y_uni,
    }
}

fn batches(draws: usize) -> Vec<(u64, usize)> {
    let full = draws / BATCH;
    let mut out: Vec<(u64, usize)> = (0..full as u64).map(|b| (b, BATCH)).collect();
    if draws % BATCH != 0 {
        out.push((full as u64, draws % BATCH));
    }
    out
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < MIN_DRAWS {
        return Err(Error::Oracle(format!(
            "{draws} draws requested, at least {MIN_DRAWS} are needed"
        )));
    }
    Ok(())
}

/// Empirical estimation statistics.
#[derive(Debug, Clone)]
pub struct McStats {
    pub draws: usize,
    /// E|ĉ|² per entry, N x U.
    pub gamma: ndarray::Array2<f64>,
    /// E|t̂_k|² per entry, per group N x K.
    pub xi: Vec<ndarray::Array2<f64>>,
    /// E|t̂_m|² per entry, N x M.
    pub zeta: ndarray::Array2<f64>,
    /// Largest |sample correlation| between a unicast estimate and a group
    /// pilot observation at the same AP and antenna, in units of 1/sqrt(draws).
    pub max_cross_corr_se: f64,
}

#[derive(Clone)]
struct StatAcc {
    gamma: Vec<f64>,
    xi: Vec<Vec<f64>>,
    zeta: Vec<f64>,
    // cross moments per (n, u, m, l): sum a b*, sum |a|², sum |b|²
    cross: Vec<Complex64>,
    a2: Vec<f64>,
    b2: Vec<f64>,
}

/// Empirical second moments of the MMSE estimates over `draws` coherence blocks.
pub fn estimation_statistics_mc(sc: &Scenario, draws: usize, seed: u64) -> Result<McStats> {
    check_draws(draws)?;
    let n = sc.n_aps();
    let l = sc.link.antennas;
    let uc = sc.unicast_users();
    let mc = sc.groups();
    let sizes: Vec<usize> = (0..mc).map(|m| sc.real.group_size(m)).collect();
    let cross_len = n * uc * mc * l;
    let empty = StatAcc {
        gamma: vec![0.0; n * uc],
        xi: sizes.iter().map(|&k| vec![0.0; n * k]).collect(),
        zeta: vec![0.0; n * mc],
        cross: vec![Complex64::default(); cross_len],
        a2: vec![0.0; cross_len],
        b2: vec![0.0; cross_len],
    };

    let partials: Vec<StatAcc> = batches(draws)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = seeded_rng(derive_seed(seed, b), stream::ORACLE);
            let mut acc = empty.clone();
            for _ in 0..count {
                let d = ChannelDraw::sample(&mut rng, sc);
                let est = simulate_training(&d, sc);
                for i in 0..n * uc {
                    acc.gamma[i] += (0..l).map(|a| est.c_hat[i * l + a].norm_sqr()).sum::<f64>();
                }
                for m in 0..mc {
                    for i in 0..n * sizes[m] {
                        acc.xi[m][i] += (0..l)
                            .map(|a| est.t_hat_member[m][i * l + a].norm_sqr())
                            .sum::<f64>();
                    }
                }
                for i in 0..n * mc {
                    acc.zeta[i] += (0..l)
                        .map(|a| est.t_hat_group[i * l + a].norm_sqr())
                        .sum::<f64>();
                }
                for ap in 0..n {
                    for u in 0..uc {
                        for m in 0..mc {
                            for a in 0..l {
                                let x = est.c_hat[(ap * uc + u) * l + a];
                                let y = est.y_group[(ap * mc + m) * l + a];
                                let i = ((ap * uc + u) * mc + m) * l + a;
                                acc.cross[i] += x * y.conj();
                                acc.a2[i] += x.norm_sqr();
                                acc.b2[i] += y.norm_sqr();
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = empty;
    for p in &partials {
        for (t, v) in total.gamma.iter_mut().zip(&p.gamma) {
            *t += v;
        }
        for (tm, pm) in total.xi.iter_mut().zip(&p.xi) {
            for (t, v) in tm.iter_mut().zip(pm) {
                *t += v;
            }
        }
        for (t, v) in total.zeta.iter_mut().zip(&p.zeta) {
            *t += v;
        }
        for i in 0..cross_len {
            total.cross[i] += p.cross[i];
            total.a2[i] += p.a2[i];
            total.b2[i] += p.b2[i];
        }
    }

    let per_entry = (draws * l) as f64;
    let gamma = ndarray::Array2::from_shape_vec(
        (n, uc),
        total.gamma.iter().map(|v| v / per_entry).collect(),
    )
    .expect("shape");
    let xi = sizes
        .iter()
        .zip(&total.xi)
        .map(|(&k, v)| {
            ndarray::Array2::from_shape_vec((n, k), v.iter().map(|x| x / per_entry).collect())
                .expect("shape")
        })
        .collect();
    let zeta = ndarray::Array2::from_shape_vec(
        (n, mc),
        total.zeta.iter().map(|v| v / per_entry).collect(),
    )
    .expect("shape");
    let sqrt_n = (draws as f64).sqrt();
    let max_cross_corr_se = (0..cross_len)
        .map(|i| {
            let den = (total.a2[i] * total.b2[i]).sqrt();
            if den > 0.0 {
                total.cross[i].norm() / den * sqrt_n
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(McStats {
        draws,
        gamma,
        xi,
        zeta,
        max_cross_corr_se,
    })
}

/// Empirical use-and-then-forget SINR per receiver and the per-AP power check.
#[derive(Debug, Clone)]
pub struct McSinr {
    pub draws: usize,
    pub sinr: Vec<f64>,
    /// Sample mean of `||x_n||² / p_dl` per AP.
    pub ap_power: Vec<f64>,
    /// Standard error of `ap_power`.
    pub ap_power_se: Vec<f64>,
}

#[derive(Clone)]
struct SinrAcc {
    // per (receiver, entity): sum g, sum |g|²
    g: Vec<Complex64>,
    g2: Vec<f64>,
    power: Vec<f64>,
    power2: Vec<f64>,
}

/// Simulates `draws` coherence blocks under `alloc` and estimates, for every
/// receiver, `p |E g_own|² / (p Var g_own + p Σ_other E|g|² + 1)` where
/// `g_{r,e} = Σ_n a √eta h_{r,n}ᵀ conj(ĉ_{n,e})`.
pub fn uatf_sinr_mc(alloc: &Allocation, sc: &Scenario, draws: usize, seed: u64) -> Result<McSinr> {
    check_draws(draws)?;
    let n = sc.n_aps();
    let l = sc.link.antennas;
    let uc = sc.unicast_users();
    let mc = sc.groups();
    let e_count = sc.entities();
    if alloc.eta.dim() != (n, e_count) {
        return Err(Error::Oracle(format!(
            "allocation is {:?}, expected ({n}, {e_count})",
            alloc.eta.dim()
        )));
    }
    let receivers = sc.receivers().to_vec();
    let r_count = receivers.len();
    let amp: Vec<f64> = alloc
        .eta
        .indexed_iter()
        .map(|((ap, e), &eta)| {
            if alloc.assoc[[ap, e]] {
                eta.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let empty = SinrAcc {
        g: vec![Complex64::default(); r_count * e_count],
        g2: vec![0.0; r_count * e_count],
        power: vec![0.0; n],
        power2: vec![0.0; n],
    };

    let partials: Vec<SinrAcc> = batches(draws)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = seeded_rng(derive_seed(seed, b), stream::ORACLE);
            let mut acc = empty.clone();
            for _ in 0..count {
                let d = ChannelDraw::sample(&mut rng, sc);
                let est = simulate_training(&d, sc);
                let precoder = |ap: usize, e: usize, a: usize| -> Complex64 {
                    if e < uc {
                        est.c_hat[(ap * uc + e) * l + a]
                    } else {
                        est.t_hat_group[(ap * mc + e - uc) * l + a]
                    }
                };
                for (r, rx) in receivers.iter().enumerate() {
                    let channel = |ap: usize, a: usize| -> Complex64 {
                        match *rx {
                            Receiver::Unicast(u) => est.c[(ap * uc + u) * l + a],
                            Receiver::Multicast { group, member } => {
                                let k_count = sc.real.group_size(group);
                                est.t[group][(ap * k_count + member) * l + a]
                            }
                        }
                    };
                    for e in 0..e_count {
                        let mut g = Complex64::default();
                        for ap in 0..n {
                            let w = amp[ap * e_count + e];
                            if w == 0.0 {
                                continue;
                            }
                            let inner: Complex64 = (0..l)
                                .map(|a| channel(ap, a) * precoder(ap, e, a).conj())
                                .sum();
                            g += inner * w;
                        }
                        acc.g[r * e_count + e] += g;
                        acc.g2[r * e_count + e] += g.norm_sqr();
                    }
                }
                for ap in 0..n {
                    let mut s = 0.0;
                    for e in 0..e_count {
                        let w = amp[ap * e_count + e];
                        if w > 0.0 {
                            s += w * w * (0..l).map(|a| precoder(ap, e, a).norm_sqr()).sum::<f64>();
                        }
                    }
                    acc.power[ap] += s;
                    acc.power2[ap] += s * s;
                }
            }
            acc
        })
        .collect();

    let mut total = empty;
    for p in &partials {
        for i in 0..total.g.len() {
            total.g[i] += p.g[i];
            total.g2[i] += p.g2[i];
        }
        for ap in 0..n {
            total.power[ap] += p.power[ap];
            total.power2[ap] += p.power2[ap];
        }
    }

    let nd = draws as f64;
    let p = sc.link.p_dl;
    let sinr = (0..r_count)
        .map(|r| {
            let own = sc.entity_of(r);
            let mean = total.g[r * e_count + own] / nd;
            let var = total.g2[r * e_count + own] / nd - mean.norm_sqr();
            let interference: f64 = (0..e_count)
                .filter(|&e| e != own)
                .map(|e| total.g2[r * e_count + e] / nd)
                .sum();
            p * mean.norm_sqr() / (p * (var + interference) + 1.0)
        })
        .collect();
    let ap_power: Vec<f64> = total.power.iter().map(|s| s / nd).collect();
    let ap_power_se = total
        .power2
        .iter()
        .zip(&ap_power)
        .map(|(s2, mean)| ((s2 / nd - mean * mean).max(0.0) / nd).sqrt())
        .collect();
    Ok(McSinr {
        draws,
        sinr,
        ap_power,
        ap_power_se,
    })
}

/// Per-receiver comparison of closed-form and simulated SINR.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub receivers: Vec<Receiver>,
    pub closed_form: Vec<f64>,
    pub empirical: Vec<f64>,
}

impl Comparison {
    pub fn new(sc: &Scenario, alloc: &Allocation, mc: &McSinr) -> Self {
        Self {
            receivers: sc.receivers().to_vec(),
            closed_form: sc.sinr_all(alloc),
            empirical: mc.sinr.clone(),
        }
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.closed_form
            .iter()
            .zip(&self.empirical)
            .map(|(c, e)| {
                if *c == 0.0 {
                    e.abs()
                } else {
                    (e - c).abs() / c
                }
            })
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors().into_iter().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "kind",
            "group",
            "member",
            "closed_form",
            "empirical",
            "rel_error",
        ])?;
        for ((rx, (c, e)), err) in self
            .receivers
            .iter()
            .zip(self.closed_form.iter().zip(&self.empirical))
            .zip(self.rel_errors())
        {
            let (kind, group, member) = match *rx {
                Receiver::Unicast(u) => ("unicast", String::new(), u),
                Receiver::Multicast { group, member } => ("multicast", group.to_string(), member),
            };
            w.write_record([
                kind.to_string(),
                group,
                member.to_string(),
                c.to_string(),
                e.to_string(),
                err.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const STATS_TOL: f64 = 0.01;
pub const SINR_TOL: f64 = 0.03;
/// Standard errors of slack allowed in the Monte-Carlo checks.
pub const SE_SLACK: f64 = 3.0;

fn max_rel(empirical: impl Iterator<Item = f64>, exact: impl Iterator<Item = f64>) -> f64 {
    empirical
        .zip(exact)
        .map(|(e, x)| if x == 0.0 { e.abs() } else { (e - x).abs() / x })
        .fold(0.0, f64::max)
}

/// Outcome of all oracle checks on one scenario.
#[derive(Debug, Clone)]
pub struct GateReport {
    /// Worst relative error over γ, ξ, the per-group ξ sums and ζ.
    pub stats_max_rel: f64,
    pub max_cross_corr_se: f64,
    pub comparison: Comparison,
    pub sinr_max_rel: f64,
    /// Largest `(power - 1) / se` over APs.
    pub power_excess_se: f64,
}

impl GateReport {
    pub fn stats_pass(&self) -> bool {
        self.stats_max_rel <= STATS_TOL
    }

    pub fn orthogonality_pass(&self) -> bool {
        self.max_cross_corr_se <= SE_SLACK
    }

    pub fn sinr_pass(&self) -> bool {
        self.sinr_max_rel <= SINR_TOL
    }

    pub fn power_pass(&self) -> bool {
        self.power_excess_se <= SE_SLACK
    }

    pub fn pass(&self) -> bool {
        self.stats_pass() && self.orthogonality_pass() && self.sinr_pass() && self.power_pass()
    }
}

pub fn stats_max_rel(sc: &Scenario, mc: &McStats) -> f64 {
    let mut worst = max_rel(mc.gamma.iter().copied(), sc.stats.gamma.iter().copied());
    worst = worst.max(max_rel(
        mc.zeta.iter().copied(),
        sc.stats.zeta.iter().copied(),
    ));
    for (emp, exact) in mc.xi.iter().zip(&sc.stats.xi) {
        worst = worst.max(max_rel(emp.iter().copied(), exact.iter().copied()));
        worst = worst.max(max_rel(
            emp.rows().into_iter().map(|r| r.sum()),
            exact.rows().into_iter().map(|r| r.sum()),
        ));
    }
    worst
}

/// Runs the statistics, orthogonality, SINR and power checks with `draws`
/// coherence blocks each.
pub fn run_gates(sc: &Scenario, alloc: &Allocation, draws: usize, seed: u64) -> Result<GateReport> {
    let stats = estimation_statistics_mc(sc, draws, derive_seed(seed, 0))?;
    let mc = uatf_sinr_mc(alloc, sc, draws, derive_seed(seed, 1))?;
    let comparison = Comparison::new(sc, alloc, &mc);
    let power_excess_se = mc
        .ap_power
        .iter()
        .zip(&mc.ap_power_se)
        .map(|(p, se)| {
            if *p <= 1.0 {
                f64::NEG_INFINITY
            } else if *se > 0.0 {
                (p - 1.0) / se
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GateReport {
        stats_max_rel: stats_max_rel(sc, &stats),
        max_cross_corr_se: stats.max_cross_corr_se,
        sinr_max_rel: comparison.max_rel_error(),
        comparison,
        power_excess_se,
    })
}
