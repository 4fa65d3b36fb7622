//! Network realizations: AP/user placement, path loss, correlated shadowing
//! and the noise-normalized large-scale fading coefficients.
//!
//! Gains are stored already divided by the linear noise power, so the SINR
//! expressions downstream carry a unit noise term and the transmit powers
//! (`p_dl_mw`, `p_ul_mw`, in mW) multiply the gains directly.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

/// RNG stream identifiers. Every consumer of a seed draws from its own
/// ChaCha stream so that adding draws in one stage never shifts another.
pub mod stream {
    pub const TOPOLOGY: u64 = 0;
    pub const SHADOWING: u64 = 1;
    pub const SOLVER_INIT: u64 = 2;
    pub const RAS: u64 = 3;
    pub const ORACLE: u64 = 4;
    pub const LIPSCHITZ: u64 = 5;
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; maps (master seed, index) to a well-spread child seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of APs (N).
    pub n_aps: usize,
    /// Antennas per AP (L).
    pub antennas: usize,
    /// Number of unicast users (U).
    pub unicast_users: usize,
    /// Members of each multicast group; its length is the group count M.
    pub group_sizes: Vec<usize>,
    /// Side of the square deployment area in meters.
    pub area_m: f64,
    /// Coherence interval T in symbols.
    pub coherence: usize,
    /// Pilot length tau in symbols; `None` means U + M.
    pub pilot_len: Option<usize>,
    /// AP transmit power budget in mW.
    pub p_dl_mw: f64,
    /// Per-user uplink pilot power in mW.
    pub p_ul_mw: f64,
    /// Receiver noise power in dBm.
    pub noise_dbm: f64,
    pub shadow_sigma_db: f64,
    pub shadow_decorr_m: f64,
    pub pl_const_db: f64,
    pub pl_slope: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_aps: 100,
            antennas: 4,
            unicast_users: 16,
            group_sizes: vec![4, 4, 4],
            area_m: 1000.0,
            coherence: 200,
            pilot_len: None,
            p_dl_mw: 1000.0,
            p_ul_mw: 100.0,
            noise_dbm: -92.0,
            shadow_sigma_db: 4.0,
            shadow_decorr_m: 9.0,
            pl_const_db: -30.5,
            pl_slope: 36.7,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Unicast users plus multicast groups: the number of transmitted streams.
    pub fn entities(&self) -> usize {
        self.unicast_users + self.groups()
    }

    pub fn multicast_users(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len.unwrap_or_else(|| self.entities())
    }

    /// tau * p_ul, the pilot energy that enters every MMSE statistic.
    pub fn tau_pul(&self) -> f64 {
        self.pilot_len() as f64 * self.p_ul_mw
    }

    /// Linear factor dividing out the noise power (mW^-1).
    pub fn noise_normalization(&self) -> f64 {
        10f64.powf(-self.noise_dbm / 10.0)
    }

    pub fn path_loss(&self) -> PathLoss {
        PathLoss {
            const_db: self.pl_const_db,
            slope: self.pl_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_aps == 0 {
            return fail("n_aps must be at least 1".into());
        }
        if self.antennas == 0 {
            return fail("antennas must be at least 1".into());
        }
        if self.entities() == 0 {
            return fail("at least one unicast user or multicast group is required".into());
        }
        if let Some(m) = self.group_sizes.iter().position(|&k| k == 0) {
            return fail(format!("multicast group {m} is empty"));
        }
        for (name, v) in [
            ("area_m", self.area_m),
            ("p_dl_mw", self.p_dl_mw),
            ("p_ul_mw", self.p_ul_mw),
            ("shadow_decorr_m", self.shadow_decorr_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return fail(format!(
                "shadow_sigma_db must be >= 0, got {}",
                self.shadow_sigma_db
            ));
        }
        for (name, v) in [
            ("noise_dbm", self.noise_dbm),
            ("pl_const_db", self.pl_const_db),
            ("pl_slope", self.pl_slope),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        let tau = self.pilot_len();
        if tau < self.entities() || tau > self.coherence {
            return fail(format!(
                "pilot length {tau} must satisfy U + M = {} <= tau <= T = {}",
                self.entities(),
                self.coherence
            ));
        }
        Ok(())
    }
}

/// Distance-based path loss `const_db - slope * log10(d / 1 m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub const_db: f64,
    pub slope: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            const_db: -30.5,
            slope: 36.7,
        }
    }
}

impl PathLoss {
    pub fn db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("distance must be positive, got {d}")));
        }
        Ok(self.const_db - self.slope * d.log10())
    }
}

pub fn path_loss_db(d: f64) -> Result<f64> {
    PathLoss::default().db(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub aps: Vec<Point>,
    pub unicast: Vec<Point>,
    /// Positions of multicast users, one vector per group.
    pub multicast: Vec<Vec<Point>>,
}

impl Geometry {
    /// All users in shadowing order: unicast users first, then group members
    /// group by group.
    pub fn users(&self) -> impl Iterator<Item = &Point> {
        self.unicast.iter().chain(self.multicast.iter().flatten())
    }

    pub fn user_count(&self) -> usize {
        self.unicast.len() + self.multicast.iter().map(Vec::len).sum::<usize>()
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform_points<R: Rng>(rng: &mut R, count: usize, side: f64) -> Vec<Point> {
    (0..count)
        .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
        .collect()
}

/// Drops APs and users i.i.d. uniformly on the square `[0, area_m]^2`.
pub fn generate_topology(config: &NetworkConfig) -> Geometry {
    let mut rng = seeded_rng(config.seed, stream::TOPOLOGY);
    let side = config.area_m;
    let aps = uniform_points(&mut rng, config.n_aps, side);
    let unicast = uniform_points(&mut rng, config.unicast_users, side);
    let multicast = config
        .group_sizes
        .iter()
        .map(|&k| uniform_points(&mut rng, k, side))
        .collect();
    Geometry {
        aps,
        unicast,
        multicast,
    }
}

/// Shadowing in dB, one row per AP and one column per user (shadowing order).
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowField {
    pub db: Array2<f64>,
}

/// Covariance of the shadowing seen by one AP: `sigma^2 * 2^(-distance / d0)`.
pub fn shadow_covariance(geometry: &Geometry, sigma_db: f64, decorr_m: f64) -> DMatrix<f64> {
    let users: Vec<&Point> = geometry.users().collect();
    let h = users.len();
    let var = sigma_db * sigma_db;
    DMatrix::from_fn(h, h, |i, j| {
        var * 2f64.powf(-distance(users[i], users[j]) / decorr_m)
    })
}

const JITTER_ATTEMPTS: usize = 3;

/// Lower Cholesky factor of the shadowing covariance, with diagonal jitter
/// `1e-9 * sigma^2` added (cumulatively) when the plain factorization fails.
pub fn shadow_factor(geometry: &Geometry, sigma_db: f64, decorr_m: f64) -> Result<DMatrix<f64>> {
    let cov = shadow_covariance(geometry, sigma_db, decorr_m);
    let h = cov.nrows();
    if sigma_db == 0.0 {
        return Ok(DMatrix::zeros(h, h));
    }
    let jitter = 1e-9 * sigma_db * sigma_db;
    for attempt in 0..=JITTER_ATTEMPTS {
        let mut m = cov.clone();
        for i in 0..h {
            m[(i, i)] += jitter * attempt as f64;
        }
        if let Some(chol) = m.cholesky() {
            return Ok(chol.l());
        }
    }
    Err(Error::Factorization {
        attempts: JITTER_ATTEMPTS,
    })
}

pub fn shadow_field_with_rng<R: Rng>(
    geometry: &Geometry,
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<ShadowField> {
    let factor = shadow_factor(geometry, config.shadow_sigma_db, config.shadow_decorr_m)?;
    let h = factor.nrows();
    let n = geometry.aps.len();
    let mut db = Array2::zeros((n, h));
    // Rows are independent across APs; one shared factor serves all of them.
    for ap in 0..n {
        let white = DVector::from_fn(h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let corr = &factor * white;
        for (j, v) in corr.iter().enumerate() {
            db[[ap, j]] = *v;
        }
    }
    Ok(ShadowField { db })
}

pub fn shadow_field(geometry: &Geometry, config: &NetworkConfig) -> Result<ShadowField> {
    let mut rng = seeded_rng(config.seed, stream::SHADOWING);
    shadow_field_with_rng(geometry, config, &mut rng)
}

/// Large-scale fading of one realization, noise-normalized and linear.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    pub geometry: Geometry,
    /// `beta[[n, u]]`: AP n to unicast user u.
    pub beta: Array2<f64>,
    /// `lambda[m][[n, k]]`: AP n to member k of multicast group m.
    pub lambda: Vec<Array2<f64>>,
}

/// Combines path loss and shadowing into noise-normalized linear gains.
/// Distances below 1 m are clamped to 1 m.
pub fn large_scale(
    geometry: &Geometry,
    field: &ShadowField,
    config: &NetworkConfig,
) -> Result<NetworkRealization> {
    let n = geometry.aps.len();
    if field.db.dim() != (n, geometry.user_count()) {
        return Err(Error::Config(format!(
            "shadow field is {:?}, expected ({n}, {})",
            field.db.dim(),
            geometry.user_count()
        )));
    }
    let pl = config.path_loss();
    let norm = config.noise_normalization();
    let gain = |ap: usize, user: &Point, col: usize| -> Result<f64> {
        let d = distance(&geometry.aps[ap], user).max(1.0);
        let db = pl.db(d)? + field.db[[ap, col]];
        Ok(10f64.powf(db / 10.0) * norm)
    };

    let mut beta = Array2::zeros((n, geometry.unicast.len()));
    for ap in 0..n {
        for (u, p) in geometry.unicast.iter().enumerate() {
            beta[[ap, u]] = gain(ap, p, u)?;
        }
    }
    let mut col = geometry.unicast.len();
    let mut lambda = Vec::with_capacity(geometry.multicast.len());
    for members in &geometry.multicast {
        let mut g = Array2::zeros((n, members.len()));
        for ap in 0..n {
            for (k, p) in members.iter().enumerate() {
                g[[ap, k]] = gain(ap, p, col + k)?;
            }
        }
        col += members.len();
        lambda.push(g);
    }
    Ok(NetworkRealization {
        geometry: geometry.clone(),
        beta,
        lambda,
    })
}

impl NetworkRealization {
    /// Full pipeline: topology, shadowing, gains.
    pub fn generate(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let geometry = generate_topology(config);
        let field = shadow_field(&geometry, config)?;
        large_scale(&geometry, &field, config)
    }

    /// Builds a realization directly from gain matrices (geometry left empty
    /// apart from placeholder AP positions). Used for hand-made instances.
    pub fn from_gains(beta: Array2<f64>, lambda: Vec<Array2<f64>>) -> Result<Self> {
        let n = beta.nrows();
        if lambda.iter().any(|g| g.nrows() != n) {
            return Err(Error::Config("gain matrices disagree on AP count".into()));
        }
        if beta
            .iter()
            .chain(lambda.iter().flatten())
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err(Error::Config(
                "gains must be finite and non-negative".into(),
            ));
        }
        let geometry = Geometry {
            aps: vec![[0.0, 0.0]; n],
            unicast: vec![[0.0, 0.0]; beta.ncols()],
            multicast: lambda.iter().map(|g| vec![[0.0, 0.0]; g.ncols()]).collect(),
        };
        Ok(Self {
            geometry,
            beta,
            lambda,
        })
    }

    pub fn n_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn unicast_users(&self) -> usize {
        self.beta.ncols()
    }

    pub fn groups(&self) -> usize {
        self.lambda.len()
    }

    pub fn group_size(&self, m: usize) -> usize {
        self.lambda[m].ncols()
    }

    /// Writes one CSV row per (AP, user) link.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "ap",
            "kind",
            "group",
            "member",
            "ap_x",
            "ap_y",
            "user_x",
            "user_y",
            "distance_m",
            "gain",
            "gain_db",
        ])?;
        let g = &self.geometry;
        let mut row = |ap: usize, kind: &str, group: String, member: usize, p: &Point, v: f64| {
            let a = &g.aps[ap];
            w.write_record([
                ap.to_string(),
                kind.to_string(),
                group,
                member.to_string(),
                a[0].to_string(),
                a[1].to_string(),
                p[0].to_string(),
                p[1].to_string(),
                distance(a, p).to_string(),
                format!("{v:e}"),
                (10.0 * v.log10()).to_string(),
            ])
        };
        for ap in 0..self.n_aps() {
            for (u, p) in g.unicast.iter().enumerate() {
                row(ap, "unicast", String::new(), u, p, self.beta[[ap, u]])?;
            }
            for (m, members) in g.multicast.iter().enumerate() {
                for (k, p) in members.iter().enumerate() {
                    row(
                        ap,
                        "multicast",
                        m.to_string(),
                        k,
                        p,
                        self.lambda[m][[ap, k]],
                    )?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small() -> NetworkConfig {
        NetworkConfig {
            n_aps: 6,
            unicast_users: 3,
            group_sizes: vec![2, 3],
            seed: 11,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn path_loss_values() {
        assert_relative_eq!(path_loss_db(1.0).unwrap(), -30.5);
        assert_relative_eq!(path_loss_db(100.0).unwrap(), -103.9, epsilon = 1e-12);
        assert_relative_eq!(path_loss_db(10.0).unwrap(), -67.2, epsilon = 1e-12);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-3.0).is_err());
    }

    #[test]
    fn topology_stays_in_area_and_is_deterministic() {
        let cfg = small();
        let g = generate_topology(&cfg);
        assert!(g
            .aps
            .iter()
            .chain(g.users())
            .flatten()
            .all(|c| (0.0..=1000.0).contains(c)));
        assert_eq!(g, generate_topology(&cfg));
        let other = generate_topology(&NetworkConfig { seed: 12, ..cfg });
        assert_ne!(g, other);
    }

    #[test]
    fn degenerate_counts() {
        let cfg = NetworkConfig {
            n_aps: 1,
            unicast_users: 1,
            group_sizes: vec![],
            ..NetworkConfig::default()
        };
        let g = generate_topology(&cfg);
        assert_eq!(g.aps.len(), 1);
        assert_eq!(g.unicast.len(), 1);
        assert!(g.multicast.is_empty());
    }

    #[test]
    fn covariance_kernel() {
        let g = Geometry {
            aps: vec![[0.0, 0.0]],
            unicast: vec![[0.0, 0.0], [9.0, 0.0]],
            multicast: vec![],
        };
        let c = shadow_covariance(&g, 4.0, 9.0);
        assert_relative_eq!(c[(0, 0)], 16.0);
        assert_relative_eq!(c[(0, 1)], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn colocated_users_need_jitter_but_factor() {
        // Identical positions make the kernel exactly singular.
        let g = Geometry {
            aps: vec![[0.0, 0.0]; 2],
            unicast: vec![[5.0, 5.0]; 4],
            multicast: vec![vec![[5.0, 5.0]; 3]],
        };
        let l = shadow_factor(&g, 4.0, 9.0).unwrap();
        let cov = shadow_covariance(&g, 4.0, 9.0);
        let rebuilt = &l * l.transpose();
        assert!((rebuilt - cov).amax() < 1e-6);
    }

    #[test]
    fn unit_distance_gain_without_shadowing() {
        let cfg = NetworkConfig {
            n_aps: 1,
            unicast_users: 1,
            group_sizes: vec![],
            noise_dbm: 0.0,
            ..NetworkConfig::default()
        };
        let g = Geometry {
            aps: vec![[0.0, 0.0]],
            unicast: vec![[1.0, 0.0]],
            multicast: vec![],
        };
        let f = ShadowField {
            db: Array2::zeros((1, 1)),
        };
        let r = large_scale(&g, &f, &cfg).unwrap();
        assert_relative_eq!(r.beta[[0, 0]], 10f64.powf(-3.05), max_relative = 1e-14);

        // Sub-meter distances are clamped to the 1 m reference.
        let close = Geometry {
            unicast: vec![[0.2, 0.0]],
            ..g.clone()
        };
        let r2 = large_scale(&close, &f, &cfg).unwrap();
        assert_eq!(r2.beta[[0, 0]], r.beta[[0, 0]]);

        let far = Geometry {
            unicast: vec![[2.0, 0.0]],
            ..g
        };
        assert!(large_scale(&far, &f, &cfg).unwrap().beta[[0, 0]] < r.beta[[0, 0]]);
    }

    #[test]
    fn realization_is_positive_and_reproducible() {
        let cfg = small();
        let a = NetworkRealization::generate(&cfg).unwrap();
        let b = NetworkRealization::generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.beta.iter().all(|g| g.is_finite() && *g > 0.0));
        assert!(a.lambda.iter().flatten().all(|g| g.is_finite() && *g > 0.0));
        assert_eq!(a.lambda[1].dim(), (6, 3));
    }

    #[test]
    fn relabeling_users_permutes_gains() {
        let cfg = small();
        let g = generate_topology(&cfg);
        let f = shadow_field(&g, &cfg).unwrap();
        let r = large_scale(&g, &f, &cfg).unwrap();

        let perm = [2usize, 0, 1];
        let mut g2 = g.clone();
        g2.unicast = perm.iter().map(|&u| g.unicast[u]).collect();
        let mut f2 = f.clone();
        for (new, &old) in perm.iter().enumerate() {
            f2.db.column_mut(new).assign(&f.db.column(old));
        }
        let r2 = large_scale(&g2, &f2, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(r2.beta.column(new), r.beta.column(old));
        }
        assert_eq!(r2.lambda, r.lambda);
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let bad = [
            NetworkConfig {
                n_aps: 0,
                ..NetworkConfig::default()
            },
            NetworkConfig {
                group_sizes: vec![2, 0],
                ..NetworkConfig::default()
            },
            NetworkConfig {
                pilot_len: Some(5),
                ..NetworkConfig::default()
            },
            NetworkConfig {
                coherence: 10,
                ..NetworkConfig::default()
            },
            NetworkConfig {
                area_m: 0.0,
                ..NetworkConfig::default()
            },
            NetworkConfig {
                unicast_users: 0,
                group_sizes: vec![],
                ..NetworkConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn csv_has_one_row_per_link() {
        let cfg = small();
        let r = NetworkRealization::generate(&cfg).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * (3 + 5));
    }
}
