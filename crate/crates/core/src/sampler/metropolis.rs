use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ChainState, SweepOrder};
use crate::lattice::{BondMask, LatticeGraph};
use crate::spin::{dot, norm, ModelParams};

/// Per-sweep acceptance counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SweepStats {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Draws a point uniformly (in surface measure) from the geodesic cap of
/// angular radius `delta` around the unit vector `s`, writing it to `out`.
pub fn propose_in_cap<R: Rng + ?Sized>(s: &[f64], delta: f64, rng: &mut R, out: &mut [f64]) {
    let n = s.len();
    let delta = delta.clamp(0.0, std::f64::consts::PI);
    // polar angle density ∝ sin^{n-2}θ on [0, δ]
    let theta = if n == 3 {
        let c = 1.0 - rng.random::<f64>() * (1.0 - delta.cos());
        c.clamp(-1.0, 1.0).acos()
    } else if n == 2 {
        rng.random::<f64>() * delta
    } else {
        let cap = if delta >= std::f64::consts::FRAC_PI_2 { 1.0 } else { delta.sin() };
        loop {
            let t = rng.random::<f64>() * delta;
            if rng.random::<f64>() * cap.powi(n as i32 - 2) <= t.sin().powi(n as i32 - 2) {
                break t;
            }
        }
    };
    // uniform direction in the tangent space at s
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let p = dot(out, s);
        for (x, sx) in out.iter_mut().zip(s) {
            *x -= p * sx;
        }
        let r = norm(out);
        if r > 1e-10 {
            let (st, ct) = theta.sin_cos();
            for (x, sx) in out.iter_mut().zip(s) {
                *x = ct * sx + st * *x / r;
            }
            let r = norm(out);
            out.iter_mut().for_each(|x| *x /= r);
            return;
        }
    }
}

/// One Metropolis pass over all sites.
pub fn metropolis_sweep(
    chain: &mut ChainState,
    graph: &LatticeGraph,
    params: &ModelParams,
    mask: &BondMask,
    order: SweepOrder,
) -> SweepStats {
    let mut stats = SweepStats::default();
    let mut proposal = vec![0.0; params.n];
    let sites = graph.site_count();
    let visit = |chain: &mut ChainState, site: usize, stats: &mut SweepStats, proposal: &mut [f64]| {
        let (config, rng) = (&mut chain.config, &mut chain.rng);
        propose_in_cap(config.spin(site), chain.delta, rng, proposal);
        stats.proposals += 1;
        if !params.site_ok(proposal) {
            return;
        }
        let mut delta_e = 0.0;
        for (&nb, &b) in graph.neighbors(site).iter().zip(graph.neighbor_bonds(site)) {
            if !mask.is_present(b) {
                continue;
            }
            let s_nb = config.spin(nb);
            if !params.bond_ok(proposal, s_nb) {
                return;
            }
            let old = config.spin(site);
            delta_e += proposal.iter().zip(old).zip(s_nb).map(|((p, o), t)| (p - o) * t).sum::<f64>();
        }
        let x = params.beta * delta_e;
        if x >= 0.0 || rng.random::<f64>() < x.exp() {
            config.spin_mut(site).copy_from_slice(proposal);
            stats.accepted += 1;
        }
    };
    match order {
        SweepOrder::Sequential => {
            for site in 0..sites {
                visit(chain, site, &mut stats, &mut proposal);
            }
        }
        SweepOrder::Checkerboard => {
            for parity in 0..2 {
                for site in 0..sites {
                    let (x, y) = graph.coords(site);
                    if (x + y) % 2 == parity {
                        visit(chain, site, &mut stats, &mut proposal);
                    }
                }
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn cap_proposals_stay_in_cap_and_are_unit() {
        let mut rng = seeded(4, 0);
        for n in [2usize, 3, 4, 5] {
            let mut s = vec![0.0; n];
            s[0] = 1.0;
            let mut out = vec![0.0; n];
            for _ in 0..2000 {
                propose_in_cap(&s, 0.4, &mut rng, &mut out);
                assert!((norm(&out) - 1.0).abs() < 1e-12);
                assert!(dot(&out, &s) >= 0.4f64.cos() - 1e-12);
            }
        }
    }

    #[test]
    fn full_cap_is_uniform_on_sphere() {
        // with δ = π the proposal is a uniform draw: <s_z> = 0, <s_z²> = 1/3
        let mut rng = seeded(5, 0);
        let s = [0.0, 0.0, 1.0];
        let mut out = [0.0; 3];
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            propose_in_cap(&s, std::f64::consts::PI, &mut rng, &mut out);
            m1 += out[2];
            m2 += out[2] * out[2];
        }
        let (m1, m2) = (m1 / n as f64, m2 / n as f64);
        assert!(m1.abs() < 4.0 * (1.0 / 3.0 / n as f64).sqrt());
        assert!((m2 - 1.0 / 3.0).abs() < 4.0 * (4.0 / 45.0 / n as f64).sqrt());
    }

    #[test]
    fn n4_polar_angle_distribution() {
        // in N=4 with δ=π, s·e has density ∝ sqrt(1 - x²): <x²> = 1/4
        let mut rng = seeded(6, 0);
        let s = [1.0, 0.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        let n = 100_000;
        let m2: f64 = (0..n)
            .map(|_| {
                propose_in_cap(&s, std::f64::consts::PI, &mut rng, &mut out);
                out[0] * out[0]
            })
            .sum::<f64>()
            / n as f64;
        assert!((m2 - 0.25).abs() < 0.005, "{m2}");
    }
}
