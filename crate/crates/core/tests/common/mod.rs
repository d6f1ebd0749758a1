//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's geometry or rate code.

#![allow(dead_code)]

use rand::Rng;
use uav_relay::geometry::{AreaBounds, BlockedRegion, Building};
use uav_relay::scenario::Scenario;
use uav_relay::Point3;

/// Slab test: does the open segment `a -> b` touch the closed box?
pub fn segment_meets_box(a: Point3, b: Point3, bld: &Building) -> bool {
    let lo = [bld.center_x - bld.length / 2.0, bld.center_y - bld.width / 2.0, 0.0];
    let hi = [
        bld.center_x + bld.length / 2.0,
        bld.center_y + bld.width / 2.0,
        bld.height,
    ];
    let p = [a.x, a.y, a.z];
    let d = [b.x - a.x, b.y - a.y, b.z - a.z];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i] == 0.0 {
            if p[i] < lo[i] || p[i] > hi[i] {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[i] - p[i]) / d[i], (hi[i] - p[i]) / d[i]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    // Touching only at an endpoint does not count.
    t1 > 0.0 && t0 < 1.0
}

/// `true` when some link from `x` to the BS or a UE crosses a building.
pub fn oracle_blocked(x: Point3, s: &Scenario) -> bool {
    std::iter::once(s.bs)
        .chain(s.ues.iter().copied())
        .any(|o| s.buildings.iter().any(|b| segment_meets_box(o, x, b)))
}

/// `true` when `x` sits within `eps` of the boundary of some region, where a
/// membership answer is a matter of rounding.
pub fn near_boundary(x: Point3, regions: &[BlockedRegion], eps: f64) -> bool {
    regions.iter().any(|r| {
        let worst = r
            .halfspaces
            .iter()
            .map(|h| h.normal.x * x.x + h.normal.y * x.y + h.normal.z * x.z - h.offset)
            .fold(f64::NEG_INFINITY, f64::max);
        !r.halfspaces.is_empty() && worst.abs() <= eps
    })
}

/// Capacity in bit/s written out directly from the LoS/NLoS model.
pub fn capacity(x: Point3, end: Point3, power: f64, bw: f64, los: bool, s: &Scenario) -> f64 {
    let c = &s.channel;
    let (alpha, beta) = if los {
        (c.alpha_los, c.beta_los)
    } else {
        (c.alpha_nlos, c.beta_nlos)
    };
    let d = ((x.x - end.x).powi(2) + (x.y - end.y).powi(2) + (x.z - end.z).powi(2)).sqrt();
    bw * (1.0 + power * beta / (c.noise_psd * bw * d.powf(alpha))).log2()
}

/// Max-min end-to-end rate in bit/s with LoS decided by the slab oracle.
pub fn min_rate(x: Point3, p_bs: f64, p_ues: &[f64], s: &Scenario, all_los: bool) -> f64 {
    let los = |o: Point3| all_los || !s.buildings.iter().any(|b| segment_meets_box(o, x, b));
    let k = s.ues.len() as f64;
    let rb = capacity(x, s.bs, p_bs, s.channel.bandwidth_bs, los(s.bs), s) / k;
    s.ues
        .iter()
        .zip(p_ues)
        .map(|(&u, &p)| capacity(x, u, p, s.channel.bandwidth_ue, los(u), s))
        .fold(rb, f64::min)
}

pub fn uniform_point<R: Rng>(rng: &mut R, b: &AreaBounds) -> Point3 {
    Point3::new(
        rng.gen_range(0.0..=b.x_d),
        rng.gen_range(0.0..=b.y_d),
        rng.gen_range(b.h_min..=b.h_max),
    )
}

/// Points biased towards low altitude, where the shadows are.
pub fn low_point<R: Rng>(rng: &mut R, b: &AreaBounds) -> Point3 {
    Point3::new(
        rng.gen_range(0.0..=b.x_d),
        rng.gen_range(0.0..=b.y_d),
        rng.gen_range(b.h_min..=(b.h_min + 100.0).min(b.h_max)),
    )
}

/// Exhaustive search over binary assignments of the big-M description.
pub fn big_m_satisfiable(region: &BlockedRegion, x: Point3, c: f64) -> bool {
    let n = region.halfspaces.len();
    (0u32..1 << n).any(|mask| {
        let ones = mask.count_ones() as usize;
        ones < n
            && region.halfspaces.iter().enumerate().all(|(j, h)| {
                let l = f64::from((mask >> j) & 1);
                h.value(x) + c * l > 0.0
            })
    })
}

/// Grid over the BS power and the UAV power simplex, then coordinate
/// hill-climbing from the best grid point. Every candidate is feasible, so
/// the oracle value never exceeds the true optimum.
pub fn grid_oracle(s: &Scenario, x: Point3, steps: usize) -> f64 {
    let k = s.ues.len();
    let (pb, pv) = (s.power.bs_total, s.power.uav_total);
    let eval = |b: f64, w: &[f64]| {
        let total: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|v| pv * v / total).collect();
        min_rate(x, b, &p, s, true)
    };
    let mut simplex: Vec<Vec<f64>> = Vec::new();
    let mut stack = vec![(Vec::new(), steps)];
    while let Some((prefix, left)) = stack.pop() {
        if prefix.len() == k - 1 {
            let mut w: Vec<f64> = prefix.iter().map(|&v: &usize| v as f64).collect();
            w.push(left as f64);
            if w.iter().sum::<f64>() > 0.0 {
                simplex.push(w);
            }
            continue;
        }
        for v in 0..=left {
            let mut p = prefix.clone();
            p.push(v);
            stack.push((p, left - v));
        }
    }
    let mut best = (f64::NEG_INFINITY, 0.0, vec![1.0; k]);
    for i in 1..=steps {
        let b = pb * i as f64 / steps as f64;
        for w in &simplex {
            let r = eval(b, w);
            if r > best.0 {
                best = (r, b, w.clone());
            }
        }
    }
    let (mut r, mut b, mut w) = best;
    let mut h = 0.5 / steps as f64;
    while h > 1e-9 {
        let mut improved = false;
        for dir in [-1.0, 1.0] {
            let nb = (b + dir * h * pb).clamp(0.0, pb);
            let v = eval(nb, &w);
            if v > r {
                (r, b, improved) = (v, nb, true);
            }
            for j in 0..k {
                let mut nw = w.clone();
                nw[j] = (nw[j] * (1.0 + dir * h)).max(0.0);
                let v = eval(b, &nw);
                if v > r {
                    (r, w, improved) = (v, nw, true);
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    r
}
