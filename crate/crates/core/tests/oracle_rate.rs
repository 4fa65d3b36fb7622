use cellfree::netgen::NetworkConfig;
use cellfree::oracle::estimation_statistics_mc;
use cellfree::sinr::{MulticastGain, Scenario};

fn rms_rel_error(sc: &Scenario, draws: usize, seed: u64) -> f64 {
    let mc = estimation_statistics_mc(sc, draws, seed).unwrap();
    let errs: Vec<f64> = mc
        .gamma
        .iter()
        .zip(sc.stats.gamma.iter())
        .chain(mc.zeta.iter().zip(sc.stats.zeta.iter()))
        .map(|(e, x)| ((e - x) / x).powi(2))
        .collect();
    (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
}

#[test]
fn error_shrinks_at_monte_carlo_rate() {
    let net = NetworkConfig {
        n_aps: 6,
        antennas: 2,
        unicast_users: 3,
        group_sizes: vec![2, 2],
        area_m: 300.0,
        seed: 21,
        ..NetworkConfig::default()
    };
    let sc = Scenario::from_config(&net, MulticastGain::Exact).unwrap();
    // Average over independent seeds to tame the noise of a single run.
    let avg = |draws: usize| {
        (0..8)
            .map(|s| rms_rel_error(&sc, draws, 100 + s))
            .sum::<f64>()
            / 8.0
    };
    let coarse = avg(4_000);
    let fine = avg(64_000);
    let ratio = coarse / fine;
    // Sixteen times the draws should cut the error about four-fold.
    assert!((2.5..6.5).contains(&ratio), "ratio {ratio}");
}
