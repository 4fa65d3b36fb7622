//! Closed-form projection onto the feasible set of the solver variables:
//! per AP, `θ ≥ 0` with `L ||θ_n||² ≤ 1`, and `0 ≤ z ≤ 1` with
//! `||z_n||² ≤ K_max`. The problem separates across APs and across the θ and
//! z blocks.

use ndarray::{ArrayViewMut1, Axis};

use crate::penalty::SolverVars;

/// Slack on the squared-norm comparison. A point scaled onto the sphere may
/// land a few ulps outside it; treating it as inside keeps projection
/// bitwise idempotent.
const SPHERE_SLACK: f64 = 1e-14;

fn clamp_nonneg(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
}

/// Scales `v` onto the ball of squared radius `radius_sq` if it lies outside.
fn shrink_to_ball(v: &mut [f64], radius_sq: f64) {
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if norm_sq <= radius_sq * (1.0 + SPHERE_SLACK) {
        return;
    }
    let s = (radius_sq / norm_sq).sqrt();
    for x in v.iter_mut() {
        *x *= s;
    }
}

/// Euclidean projection of one AP's amplitudes onto `{x ≥ 0, L ||x||² ≤ 1}`.
pub fn project_theta_block(r: &[f64], antennas: usize) -> Vec<f64> {
    let mut v = r.to_vec();
    project_theta_in_place(&mut v, antennas);
    v
}

fn project_theta_in_place(v: &mut [f64], antennas: usize) {
    clamp_nonneg(v);
    shrink_to_ball(v, 1.0 / antennas as f64);
}

/// Association block: clamp at zero, shrink onto the `sqrt(K_max)` ball,
/// then clamp entries at one.
pub fn project_z_block(r: &[f64], k_max: usize) -> Vec<f64> {
    let mut v = r.to_vec();
    project_z_in_place(&mut v, k_max);
    v
}

fn project_z_in_place(v: &mut [f64], k_max: usize) {
    clamp_nonneg(v);
    shrink_to_ball(v, k_max as f64);
    for x in v.iter_mut() {
        *x = x.min(1.0);
    }
}

fn rows_mut(m: &mut ndarray::Array2<f64>) -> impl Iterator<Item = ArrayViewMut1<'_, f64>> {
    m.axis_iter_mut(Axis(0))
}

fn with_slice(mut row: ArrayViewMut1<'_, f64>, f: impl FnOnce(&mut [f64])) {
    match row.as_slice_mut() {
        Some(s) => f(s),
        None => {
            let mut tmp = row.to_vec();
            f(&mut tmp);
            row.assign(&ndarray::ArrayView1::from(&tmp));
        }
    }
}

pub fn project_theta(vars: &mut SolverVars, antennas: usize) {
    for row in rows_mut(&mut vars.theta) {
        with_slice(row, |s| project_theta_in_place(s, antennas));
    }
}

pub fn project_z(vars: &mut SolverVars, k_max: usize) {
    for row in rows_mut(&mut vars.z) {
        with_slice(row, |s| project_z_in_place(s, k_max));
    }
}

/// Projects both blocks of every AP.
pub fn project(raw: &SolverVars, antennas: usize, k_max: usize) -> SolverVars {
    let mut out = raw.clone();
    project_theta(&mut out, antennas);
    project_z(&mut out, k_max);
    out
}

/// Largest violation of any feasibility constraint (0 when feasible).
pub fn feasibility_violation(vars: &SolverVars, antennas: usize, k_max: usize) -> f64 {
    let l = antennas as f64;
    let mut worst: f64 = 0.0;
    for row in vars.theta.rows() {
        let sq: f64 = row.iter().map(|t| t * t).sum();
        worst = worst.max(l * sq - 1.0);
        for &t in row {
            worst = worst.max(-t);
        }
    }
    for row in vars.z.rows() {
        let sq: f64 = row.iter().map(|z| z * z).sum();
        worst = worst.max(sq - k_max as f64);
        for &z in row {
            worst = worst.max(-z).max(z - 1.0);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn theta_examples() {
        assert_eq!(project_theta_block(&[-1.0, -2.0, -0.1], 4), vec![0.0; 3]);
        let p = project_theta_block(&[2.0, 0.0, 0.0], 4);
        assert_eq!(p, vec![0.5, 0.0, 0.0]);
        assert_relative_eq!(4.0 * p.iter().map(|x| x * x).sum::<f64>(), 1.0);
        let feasible = [0.1, 0.2, 0.0];
        assert_eq!(project_theta_block(&feasible, 4), feasible.to_vec());
    }

    #[test]
    fn z_examples() {
        assert_eq!(project_z_block(&[0.5], 1), vec![0.5]);
        let p = project_z_block(&[2.0, 2.0], 1);
        assert_relative_eq!(p[0], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(p[1], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(
            p.iter().map(|x| x * x).sum::<f64>(),
            1.0,
            max_relative = 1e-15
        );
        assert_eq!(project_z_block(&[5.0], 4), vec![1.0]);
        assert_eq!(project_z_block(&[-3.0, 0.4], 2), vec![0.0, 0.4]);
    }

    fn raw_vars(n: usize, e: usize, flat: &[f64]) -> SolverVars {
        SolverVars::from_flat(n, e, flat).unwrap()
    }

    proptest! {
        #[test]
        fn output_feasible_and_idempotent(
            flat in prop::collection::vec(-3.0f64..3.0, 24),
            l in 1usize..8,
            k in 1usize..5,
        ) {
            let raw = raw_vars(3, 4, &flat);
            let p = project(&raw, l, k);
            prop_assert!(feasibility_violation(&p, l, k) <= 1e-12);
            let pp = project(&p, l, k);
            prop_assert_eq!(pp, p);
        }

        #[test]
        fn ap_permutation_commutes(flat in prop::collection::vec(-3.0f64..3.0, 24)) {
            let raw = raw_vars(3, 4, &flat);
            let perm = [2usize, 0, 1];
            let permute = |v: &SolverVars| SolverVars {
                theta: v.theta.select(Axis(0), &perm),
                z: v.z.select(Axis(0), &perm),
            };
            prop_assert_eq!(project(&permute(&raw), 4, 2), permute(&project(&raw, 4, 2)));
        }
    }
}
