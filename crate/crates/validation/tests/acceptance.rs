//! End-to-end acceptance checks. Runs as a plain binary so every verdict is
//! printed in order; exits non-zero if any check fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_relay::channel::{link_rates, ChannelParams, Environment, PowerParams};
use uav_relay::geometry::{big_m, is_blocked, AreaBounds};
use uav_relay::lagrangian::solve;
use uav_relay::power::allocate_with_rate;
use uav_relay::sca::linearize;
use uav_relay::scenario::{generate, GeneratorConfig, Scenario};
use uav_relay::{Point3, BPS_PER_MBPS};
use uav_relay_cli::{run, ExperimentSpec, RunOptions, Scheme, TrialReport};

use common::{
    big_m_satisfiable, capacity, grid_oracle, low_point, min_rate, near_boundary, oracle_blocked, uniform_point,
};

struct Verdict {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            notes: Vec::new(),
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn geometry_oracle() -> Verdict {
    let start = Instant::now();
    let (mut agree, mut checked, mut banded, mut shadowed) = (0usize, 0usize, 0usize, 0usize);
    for seed in 0..50u64 {
        let k = [1, 4, 8][seed as usize % 3];
        let s = generate(&GeneratorConfig::desk_scale(k), seed).unwrap();
        let regions = s.blocked_regions().unwrap();
        let eps = s.bounds.eps_geo();
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        for i in 0..10_000 {
            let x = if i % 2 == 0 {
                uniform_point(&mut rng, &s.bounds)
            } else {
                low_point(&mut rng, &s.bounds)
            };
            if near_boundary(x, &regions, eps) {
                banded += 1;
                continue;
            }
            let want = oracle_blocked(x, &s);
            checked += 1;
            shadowed += usize::from(want);
            agree += usize::from(is_blocked(x, &regions, eps) == want);
        }
    }
    let t = start.elapsed();
    Verdict::new(
        agree == checked && t < Duration::from_secs(60),
        format!(
            "{agree}/{checked} agree ({shadowed} shadowed, {banded} in boundary band), {}",
            secs(t)
        ),
    )
}

fn big_m_equivalence() -> Verdict {
    let (mut agree, mut checked) = (0usize, 0usize);
    for seed in 0..20u64 {
        let k = [1, 4, 8][seed as usize % 3];
        let s = generate(&GeneratorConfig::desk_scale(k), 200 + seed).unwrap();
        let regions: Vec<_> = s
            .blocked_regions()
            .unwrap()
            .into_iter()
            .filter(|r| !r.is_empty())
            .collect();
        let c = big_m(&regions, &s.bounds);
        let eps = s.bounds.eps_geo();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..500 {
            let x = if i % 2 == 0 {
                uniform_point(&mut rng, &s.bounds)
            } else {
                low_point(&mut rng, &s.bounds)
            };
            for r in &regions {
                if near_boundary(x, std::slice::from_ref(r), eps) {
                    continue;
                }
                checked += 1;
                agree += usize::from(big_m_satisfiable(r, x, c) == !r.contains(x, eps));
            }
        }
    }
    Verdict::new(
        agree == checked,
        format!("{agree}/{checked} (point, region) pairs agree"),
    )
}

fn power_optimality() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_gap, mut worst_residual, mut unbound) = (f64::NEG_INFINITY, 0.0f64, 0usize);
    for i in 0..100 {
        let k = 1 + i % 4;
        let ues = (0..k)
            .map(|_| Point3::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0), 0.0))
            .collect();
        let s = Scenario {
            seed: 0,
            bounds: AreaBounds::new(500.0, 500.0, 50.0, 500.0),
            bs: Point3::new(0.0, 0.0, 25.0),
            ues,
            buildings: vec![],
            channel: ChannelParams::urban_default(k),
            power: PowerParams {
                bs_total: 10f64.powf(rng.gen_range(-2.0..1.0)),
                uav_total: 10f64.powf(rng.gen_range(-2.0..1.0)),
            },
        };
        let x = Point3::new(
            rng.gen_range(0.0..500.0),
            rng.gen_range(0.0..500.0),
            rng.gen_range(50.0..500.0),
        );
        let a = allocate_with_rate(x, &s).unwrap();
        let p = &a.allocation;
        let closed = min_rate(x, p.bs, &p.ues, &s, true);
        let steps = [400, 200, 60, 24][k - 1];
        let oracle = grid_oracle(&s, x, steps);
        worst_gap = worst_gap.max((oracle - closed) / oracle);

        let r = link_rates(x, p, &s, Environment::LosOnly).unwrap();
        let rates = std::iter::once(r.backhaul / k as f64).chain(r.access.iter().copied());
        worst_residual = rates.fold(worst_residual, |w, v| w.max((v / a.rate - 1.0).abs()));
        let bs_binds = (p.bs / s.power.bs_total - 1.0).abs() <= 1e-9;
        let uav_binds = (p.uav_total() / s.power.uav_total - 1.0).abs() <= 1e-9;
        unbound += usize::from(!(bs_binds || uav_binds));
    }
    let t = start.elapsed();
    Verdict::new(
        worst_gap <= 1e-6 && worst_residual <= 1e-9 && unbound == 0 && t < Duration::from_secs(30),
        format!(
            "worst shortfall vs grid {worst_gap:.2e}, worst equal-rate residual {worst_residual:.2e}, \
             {unbound} instances with no binding budget, {}",
            secs(t)
        ),
    )
}

fn inner_monotonicity() -> Verdict {
    let (mut drops, mut overshoots, mut steps) = (0usize, 0usize, 0usize);
    for seed in 0..20u64 {
        let k = [1, 2, 4, 8][seed as usize % 4];
        let s = generate(&GeneratorConfig::desk_scale(k), 300 + seed).unwrap();
        let (_, tr) = solve(&s).unwrap();
        for w in tr.inner.windows(2) {
            if w[0].outer == w[1].outer && w[1].q_u_mbps < w[0].q_u_mbps - 1e-8 {
                drops += 1;
            }
        }
        for r in &tr.inner {
            steps += 1;
            overshoots += usize::from(r.step_m > r.rho_m * (1.0 + 1e-12));
        }
    }
    Verdict::new(
        drops == 0 && overshoots == 0,
        format!("{steps} inner steps, {drops} decreases beyond 1e-8, {overshoots} steps longer than the radius"),
    )
}

fn linearization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_slope, mut violations, mut samples) = (0.0f64, 0usize, 0usize);
    for _ in 0..100 {
        let k = rng.gen_range(1..=4);
        let bounds = AreaBounds::new(300.0, 300.0, 50.0, 500.0);
        let s = Scenario {
            seed: 0,
            bounds,
            bs: Point3::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0), 25.0),
            ues: (0..k)
                .map(|_| Point3::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0), 0.0))
                .collect(),
            buildings: vec![],
            channel: ChannelParams::urban_default(k),
            power: PowerParams {
                bs_total: 1.0,
                uav_total: 1.0,
            },
        };
        let x = Point3::new(
            rng.gen_range(0.0..300.0),
            rng.gen_range(0.0..300.0),
            rng.gen_range(50.0..500.0),
        );
        let p = allocate_with_rate(x, &s).unwrap().allocation;
        let rho = 50.0;
        let lin = linearize(x, &[], &p, &s, rho).unwrap();
        let links: Vec<_> = std::iter::once((s.bs, p.bs, s.channel.bandwidth_bs, lin.backhaul))
            .chain(
                s.ues
                    .iter()
                    .zip(&p.ues)
                    .zip(&lin.access)
                    .map(|((&u, &pw), &lb)| (u, pw, s.channel.bandwidth_ue, lb)),
            )
            .collect();
        for &(end, pw, bw, lb) in &links {
            let d = x.distance(end);
            let dir = (x - end) * (1.0 / d);
            let at = |t: f64| capacity(end + dir * t, end, pw, bw, true, &s) / BPS_PER_MBPS;
            let h = 1e-3 * d;
            let fd = (at(d + h) - at(d - h)) / (2.0 * h);
            worst_slope = worst_slope.max((lb.slope + fd).abs() / fd.abs());
        }
        for _ in 0..1000 {
            let dir = Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if dir.norm() < 1e-3 {
                continue;
            }
            let y = x + dir * (rho * rng.gen::<f64>() / dir.norm());
            for &(end, pw, bw, lb) in &links {
                if y.distance(end) < 1e-3 {
                    continue;
                }
                samples += 1;
                let truth = capacity(y, end, pw, bw, true, &s) / BPS_PER_MBPS;
                violations += usize::from(lb.lower_bound(y) > truth * (1.0 + 1e-12));
            }
        }
    }
    Verdict::new(
        worst_slope <= 1e-5 && violations == 0,
        format!("worst relative slope error {worst_slope:.2e}, {violations}/{samples} bound violations"),
    )
}

/// The desk K-sweep, run twice. The first run feeds the statistical checks.
struct Sweep {
    spec: ExperimentSpec,
    trials: Vec<TrialReport>,
    first_run: Duration,
    identical: Vec<(String, bool)>,
}

fn k_sweep(root: &Path) -> Sweep {
    let spec_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/presets/desk_k_sweep.json");
    let spec = ExperimentSpec::load(spec_path).unwrap();
    let parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (a, b) = (root.join("first"), root.join("second"));
    let start = Instant::now();
    let out = run(
        &spec,
        &RunOptions {
            out_dir: a.clone(),
            parallel,
            resume: false,
        },
    )
    .unwrap();
    let first_run = start.elapsed();
    run(
        &spec,
        &RunOptions {
            out_dir: b.clone(),
            parallel: 1,
            resume: false,
        },
    )
    .unwrap();
    let identical = ["trials.csv", "summary.csv"]
        .iter()
        .map(|f| {
            (
                f.to_string(),
                fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            )
        })
        .collect();
    Sweep {
        spec,
        trials: out.trials,
        first_run,
        identical,
    }
}

/// Per sweep value (K), per scheme: capacities indexed by trial.
fn by_k(sweep: &Sweep) -> BTreeMap<usize, BTreeMap<Scheme, Vec<f64>>> {
    let mut m: BTreeMap<usize, BTreeMap<Scheme, Vec<f64>>> = BTreeMap::new();
    for r in &sweep.trials {
        let cap = r.min_capacity_mbps.expect("trial errored");
        m.entry(r.sweep_value as usize)
            .or_default()
            .entry(r.scheme)
            .or_default()
            .push(cap);
    }
    m
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn duality_bound(sweep: &Sweep) -> Verdict {
    let (mut checked, mut violations) = (0usize, 0usize);
    for p in sweep.spec.points() {
        for t in 0..sweep.spec.trial_count() {
            let s = sweep.spec.scenario(p, t).unwrap();
            let (_, tr) = solve(&s).unwrap();
            for o in &tr.outer {
                checked += 1;
                violations += usize::from(o.q_u_mbps < o.q_l_mbps);
            }
        }
    }
    Verdict::new(
        violations == 0,
        format!("{checked} outer iterations over the K-sweep trials, {violations} with q_U < q_L"),
    )
}

fn convergence(sweep: &Sweep) -> Verdict {
    let lr: Vec<&TrialReport> = sweep.trials.iter().filter(|r| r.scheme == Scheme::Lr).collect();
    let ok = lr.iter().filter(|r| r.converged == Some(true)).count();
    let per_k: Vec<String> = by_k(sweep)
        .keys()
        .map(|&k| {
            let rows: Vec<_> = lr.iter().filter(|r| r.sweep_value as usize == k).collect();
            let c = rows.iter().filter(|r| r.converged == Some(true)).count();
            format!("K={k}: {c}/{}", rows.len())
        })
        .collect();
    let frac = ok as f64 / lr.len() as f64;
    Verdict::new(
        frac >= 0.9,
        format!(
            "{ok}/{} converged ({:.1}%; {})",
            lr.len(),
            100.0 * frac,
            per_k.join(", ")
        ),
    )
}

fn near_optimality(sweep: &Sweep) -> Verdict {
    let m = by_k(sweep);
    let ratios: Vec<(usize, f64, usize)> = m
        .iter()
        .map(|(&k, s)| (k, mean(&s[&Scheme::Lr]) / mean(&s[&Scheme::Es3d]), s[&Scheme::Lr].len()))
        .collect();
    let bar = ratios.iter().all(|&(_, r, n)| r >= 0.9 && n >= 50);
    let monotone = ratios.windows(2).all(|w| w[1].1 <= w[0].1);
    let within_time = sweep.first_run < Duration::from_secs(15 * 60);
    let listed: Vec<String> = ratios
        .iter()
        .map(|(k, r, n)| format!("K={k}: {:.2}% over {n}", 100.0 * r))
        .collect();
    let mut v = Verdict::new(
        bar && monotone && within_time,
        format!(
            "mean LR / mean es3d(10 m): {}; K-sweep took {}",
            listed.join(", "),
            secs(sweep.first_run)
        ),
    );
    v.notes
        .push(format!("at least 90% at every K: {}", if bar { "yes" } else { "no" }));
    v.notes.push(format!(
        "ratio non-increasing in K: {}",
        if monotone { "yes" } else { "no" }
    ));
    v
}

fn scheme_ordering(sweep: &Sweep) -> Verdict {
    let m = by_k(sweep);
    let mut ordered = true;
    let mut means = Vec::new();
    for (k, s) in &m {
        let lr = mean(&s[&Scheme::Lr]);
        let (c, f) = (mean(&s[&Scheme::Center]), mean(&s[&Scheme::Free]));
        ordered &= lr >= c && lr >= f;
        means.push(format!("K={k}: LR {lr:.2}, CENTER {c:.2}, FREE {f:.2}"));
    }
    // es3d against every other scheme, instance by instance.
    let mut beaten: BTreeMap<Scheme, (usize, f64)> = BTreeMap::new();
    let mut instances = 0;
    for s in m.values() {
        let es = &s[&Scheme::Es3d];
        instances += es.len();
        for (&scheme, caps) in s.iter().filter(|(&k, _)| k != Scheme::Es3d) {
            let e = beaten.entry(scheme).or_insert((0, 0.0));
            for (c, ref_c) in caps.iter().zip(es) {
                if *c > ref_c * (1.0 + 1e-12) {
                    e.0 += 1;
                    e.1 = e.1.max(c / ref_c - 1.0);
                }
            }
        }
    }
    let dominated = beaten.values().all(|&(n, _)| n == 0);
    let lattice_dominated = beaten[&Scheme::Es2d].0 == 0;
    let mut v = Verdict::new(ordered && dominated, means.join("; "));
    v.notes.push(format!(
        "mean(LR) >= mean(CENTER), mean(FREE) at every K: {}",
        if ordered { "yes" } else { "no" }
    ));
    let exceed: Vec<String> = beaten
        .iter()
        .map(|(s, (n, w))| format!("{s} {n}/{instances} (by up to {:.2}%)", 100.0 * w))
        .collect();
    v.notes
        .push(format!("instances where a scheme beats es3d: {}", exceed.join(", ")));
    v.notes.push(format!(
        "es2d at a lattice altitude never beats es3d: {}",
        if lattice_dominated { "yes" } else { "no" }
    ));
    v
}

fn determinism(sweep: &Sweep) -> Verdict {
    let pass = sweep.identical.iter().all(|(_, same)| *same);
    let listed: Vec<String> = sweep
        .identical
        .iter()
        .map(|(f, same)| format!("{f} {}", if *same { "identical" } else { "differs" }))
        .collect();
    Verdict::new(
        pass,
        format!(
            "K-sweep run twice (all threads, then one thread): {}",
            listed.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Verdict)> = vec![
        ("1 geometry oracle equivalence", geometry_oracle()),
        ("2 big-M binary equivalence", big_m_equivalence()),
        ("3 closed-form power optimality", power_optimality()),
        ("4 inner-loop monotonicity", inner_monotonicity()),
    ];
    let sweep = k_sweep(root.path());
    results.push(("5 duality bound", duality_bound(&sweep)));
    results.push(("6 convergence rate", convergence(&sweep)));
    results.push(("7 near-optimality vs es3d", near_optimality(&sweep)));
    results.push(("8 scheme ordering", scheme_ordering(&sweep)));
    results.push(("9 linearization", linearization()));
    results.push(("10 determinism", determinism(&sweep)));

    println!();
    for (name, v) in &results {
        println!(
            "criterion {name}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        for n in &v.notes {
            println!("    {n}");
        }
    }
    let failed = results.iter().filter(|(_, v)| !v.pass).count();
    println!("\n{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
