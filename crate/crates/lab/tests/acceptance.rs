use dsf_core::domination::{self, RecenteredHistory};
use dsf_core::exploration::{self, ExplorationState, Explorer, InvariantReport};
use dsf_core::lpgeom;
use dsf_core::partition::{self, CenterConfig};
use dsf_core::ppp::PointStore;
use dsf_core::{stats, stream, Exponent, NormContext};
use dsf_lab::experiments::{self as ex, CoalesceConfig, EscapeConfig, RenewalConfig};
use rand::Rng;
use std::process::Command;
use std::time::Instant;

type Outcome = (bool, String);

const INF: Exponent = Exponent::Infinity;

fn fin(p: f64) -> Exponent {
    Exponent::Finite(p)
}

fn ctx(d: usize, p: Exponent) -> NormContext {
    NormContext::new(d, p).expect("valid context")
}

fn counterexample() -> Outcome {
    let t = Instant::now();
    let r = domination::counterexample_verify();
    let secs = t.elapsed().as_secs_f64();
    let ok = r.lifted.to_string() == "11527/216"
        && r.base.to_string() == "3473/64"
        && r.radius_cubed.to_string() == "54"
        && r.lifted_inside()
        && r.base_outside()
        && secs < 1.0;
    (ok, format!("lifted {} < 54, base {} > 54, {secs:.3}s", r.lifted, r.base))
}

fn empty_ball() -> Outcome {
    let t = Instant::now();
    let mut violations = 0;
    let mut tested = 0usize;
    for d in [2, 3] {
        for p in [1.0, 1.5, 2.0, 3.0] {
            let c = ctx(d, fin(p));
            let a = lpgeom::alpha_p(c.p).unwrap();
            let mut rng = stream::keyed_rng(2, &[d as u64, p.to_bits()]);
            let mut u = vec![0.0; d];
            let mut x = vec![0.0; d];
            for _ in 0..10_000 {
                let mut center: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                center[d - 1] = -rng.random_range(0.0..3.0);
                let r_max = c.norm(&center).min(1.0 - center[d - 1]);
                let r = if rng.random::<bool>() { r_max } else { r_max * rng.random::<f64>() };
                for _ in 0..1000 {
                    lpgeom::sample_unit_ball(&mut rng, d, c.p, &mut u);
                    for s in 0..d {
                        x[s] = a * u[s];
                    }
                    x[d - 1] += 1.0;
                    if c.dist(&x, &center) < r {
                        violations += 1;
                    }
                }
                tested += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (violations == 0 && secs < 60.0, format!("{violations} violations over {tested} balls, {secs:.1}s"))
}

fn section_inclusion() -> Outcome {
    let mut grid: Vec<(usize, Exponent)> = Vec::new();
    for d in [2, 3] {
        for p in [fin(1.0), fin(2.0), INF] {
            grid.push((d, p));
        }
    }
    grid.push((2, fin(1.5)));
    grid.push((2, fin(4.0)));
    let mut violations = 0;
    for &(d, p) in &grid {
        let c = ctx(d, p);
        let mut rng = stream::keyed_rng(3, &[d as u64, p.finite().unwrap_or(0.0).to_bits()]);
        for i in 0..1000u64 {
            let h_set = RecenteredHistory::random(&mut rng, &c);
            let h = 0.99 * rng.random::<f64>();
            let hp = h * rng.random::<f64>();
            violations += domination::section_inclusion_test(&h_set, h, hp, &c, 1000, i).unwrap().len();
        }
    }
    let c = ctx(3, fin(3.0));
    let h_set = RecenteredHistory::counterexample_history(&c);
    let h_hi = lpgeom::rho(2.0 / 3.0, &c).unwrap();
    let reproduced = domination::section_violation_at(&h_set, &[0.75, -0.5, 0.0], h_hi, 0.0, &c).unwrap();
    (
        violations == 0 && reproduced,
        format!("{violations} violations on {} grid points, counterexample violation reproduced: {reproduced}", grid.len()),
    )
}

fn dominance_grid() -> Vec<(usize, Exponent)> {
    let mut g = Vec::new();
    for d in [2, 3] {
        for p in [fin(1.0), fin(2.0), INF] {
            g.push((d, p));
        }
    }
    g
}

fn stochastic_dominance() -> Outcome {
    let t = Instant::now();
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for (d, p) in dominance_grid() {
        let c = ctx(d, p);
        let base: Vec<f64> = domination::sample_x(&RecenteredHistory::empty(), &c, stream::tag(b"base"), n)
            .unwrap()
            .iter()
            .map(|s| s.x[d - 1])
            .collect();
        let mut rng = stream::keyed_rng(4, &[d as u64]);
        for i in 0..20u64 {
            let h = RecenteredHistory::random(&mut rng, &c);
            let xs: Vec<f64> = domination::sample_x(&h, &c, stream::derive_seed(4, &[d as u64, i]), n)
                .unwrap()
                .iter()
                .map(|s| s.x[d - 1])
                .collect();
            let cmp = domination::ecdf_dominance(&xs, &base, None).unwrap();
            worst = worst.max(cmp.max_violation_z);
            if !cmp.passes() {
                failures += 1;
            }
        }
    }
    (failures == 0, format!("{failures} failing histories of 120, max violation z {worst:.2}, {:.0}s", t.elapsed().as_secs_f64()))
}

fn alpha_monotone() -> Outcome {
    let grid: Vec<f64> = (0..20).map(|j| 0.95 * j as f64 / 19.0).collect();
    let mut worst: f64 = 0.0;
    for (d, p) in dominance_grid() {
        let c = ctx(d, p);
        let mut rng = stream::keyed_rng(5, &[d as u64]);
        for i in 0..20u64 {
            let h = RecenteredHistory::random(&mut rng, &c);
            let curve = domination::alpha_curve(&h, &grid, &c, 20_000, i).unwrap();
            worst = worst.max(domination::max_decrease_z(&curve));
        }
    }
    let c = ctx(3, fin(4.0));
    let h = RecenteredHistory::counterexample_history(&c);
    let n = 200_000;
    let (a0, s0) = domination::alpha_h_estimate(&h, 0.0, &c, n, 51).unwrap();
    let (a9, s9) = domination::alpha_h_estimate(&h, 0.9, &c, n, 52).unwrap();
    let z = (a0 - a9) / (s0 * s0 + s9 * s9).sqrt();
    (
        worst <= 4.0 && z >= 4.0,
        format!("max decrease z {worst:.2}; counterexample H: alpha(0) = {a0:.4}, alpha(0.9) = {a9:.4}, z = {z:.1}"),
    )
}

fn starts(k: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut v = vec![0.0; d];
            v[0] = sep * i as f64;
            v
        })
        .collect()
}

fn exploration_invariants() -> Outcome {
    let t = Instant::now();
    let mut total = InvariantReport::default();
    for k in [1, 2, 3] {
        for d in [2, 3, 4] {
            for p in [fin(1.0), fin(2.0), INF] {
                let c = ctx(d, p);
                let mut store = PointStore::poisson(d, stream::derive_seed(6, &[k as u64, d as u64])).unwrap();
                let mut e = Explorer::new(ExplorationState::new(starts(k, d, 3.0), c).unwrap(), 0.6, 0.6);
                e.check_invariants = true;
                e.run(&mut store, 10_000).unwrap();
                total.merge(&e.report);
            }
        }
    }
    (
        total.violations() == 0,
        format!(
            "{} steps, {} violations, {} k=1 renewals checked, {:.0}s",
            total.steps_checked,
            total.violations(),
            total.renewals_checked,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn area_bounds() -> Outcome {
    let t = Instant::now();
    let mut failures = 0;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for d in [2, 3, 4] {
        for p in [fin(1.0), fin(2.0), INF] {
            let c = ctx(d, p);
            let area_c = if p.is_infinite() { None } else { Some(exploration::area_constant(&c, 200_000, 7).unwrap()) };
            let mut store = PointStore::poisson(d, stream::derive_seed(7, &[d as u64])).unwrap();
            let mut st = ExplorationState::new(starts(2, d, 2.0), c).unwrap();
            let mut rng = stream::keyed_rng(7, &[d as u64, 1]);
            let mut states = 0;
            while states < 1000 {
                for _ in 0..5 {
                    st.explore_step(&mut store).unwrap();
                }
                if st.n % 256 < 5 {
                    store.forget_below(st.m - 4.0);
                }
                if st.heads.iter().any(|h| h.id.is_none()) {
                    continue;
                }
                let ell = (0.01f64.ln() + (4f64.ln() - 0.01f64.ln()) * rng.random::<f64>()).exp();
                let chk = exploration::area_bound_check(&st, ell, 1000, stream::derive_seed(7, &[d as u64, states]), area_c).unwrap();
                worst = worst.min(chk.margin);
                if !chk.holds {
                    failures += 1;
                }
                states += 1;
                checked += 1;
            }
        }
    }
    (failures == 0, format!("{failures} violations over {checked} states, min margin {worst:.3e}, {:.0}s", t.elapsed().as_secs_f64()))
}

fn partition_guarantees() -> Outcome {
    let t = Instant::now();
    let mut rng = stream::keyed_rng(8, &[]);
    let mut bad_cluster = 0;
    let mut bad_group = 0;
    let mut bad_dim1 = 0;
    let mut unverified = 0;
    for i in 0..1000u64 {
        let k = rng.random_range(1..=5);
        let d = rng.random_range(2..=3);
        let p = [fin(1.0), fin(2.0), INF][rng.random_range(0..3)];
        let c = ctx(d, p);
        let kappa = 1.0;
        let cfg: CenterConfig = ex::random_configuration(&mut rng, k, d, &c, kappa).unwrap();
        let (_, r0) = partition::witness_scale(k, kappa, &c).unwrap();
        let xi = r0 * (1e-3f64.ln() + (4f64.ln() - 1e-3f64.ln()) * rng.random::<f64>()).exp();
        let cl = partition::grow_cluster(&cfg, rng.random_range(0..k), xi, &c).unwrap();
        if !partition::cluster_holds(&cfg, &cl, xi, &c) {
            bad_cluster += 1;
        }
        let unit = cfg.scaled(r0);
        let g = partition::group_partition(&unit, partition::DEFAULT_DELTA, &c).unwrap();
        if !partition::grouping_holds(&unit, &g, &c) {
            bad_group += 1;
        }
        let line: Vec<f64> = unit.centers.iter().map(|v| v[0]).collect();
        match partition::dim1_partition_f64(&line) {
            Ok(dp) => {
                if dp.min_length() < dp.bound || !partition::is_partition(&dp.parts, k) {
                    bad_dim1 += 1;
                }
            }
            Err(_) => bad_dim1 += 1,
        }
        match partition::combinatorial_witness(&cfg, kappa, &c, 256, i) {
            Ok(w) if w.verified => {}
            _ => unverified += 1,
        }
    }
    (
        bad_cluster + bad_group + bad_dim1 + unverified == 0,
        format!(
            "cluster {bad_cluster}, grouping {bad_group}, dim1 {bad_dim1}, unverified witnesses {unverified} of 1000, {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    )
}

fn coalescence_dichotomy() -> Outcome {
    let t = Instant::now();
    let mut msgs = Vec::new();
    let mut ok = true;
    for p in [fin(1.0), fin(2.0), INF] {
        let cfg = CoalesceConfig { d: 2, p, sep: 5.0, horizon: 1e4, max_steps: 100_000_000, reps: 200, seed: 9 };
        let recs = ex::run_replicates(cfg.reps, |r| ex::coalescence_run(&cfg, r)).unwrap();
        let s = ex::summarize_coalescence(&cfg, &recs);
        ok &= s.coalescence.frequency >= 0.95;
        msgs.push(format!("d=2 p={p}: {:.3}", s.coalescence.frequency));
    }
    let mut freq = Vec::new();
    for sep in [5.0, 50.0] {
        let cfg = EscapeConfig { d: 4, p: fin(2.0), k: 3, sep, horizon: 10_000, reps: 100, seed: 9 };
        let recs = ex::run_replicates(cfg.reps, |r| ex::escape_run(&cfg, r)).unwrap();
        let s = ex::summarize_escape(&cfg, &recs);
        let merged = ex::Proportion::new(s.non_coalesced.n - s.non_coalesced.count, s.non_coalesced.n);
        msgs.push(format!("d=4 k=3 sep {sep}: {} of 100 escape", s.non_coalesced.count));
        if sep == 50.0 {
            ok &= s.non_coalesced.count > 0;
        }
        freq.push(merged);
    }
    let z = freq[0].z_above(&freq[1]);
    ok &= z >= 4.0;
    msgs.push(format!("coalescence {:.2} vs {:.2}, z {z:.1}", freq[0].frequency, freq[1].frequency));
    msgs.push(format!("{:.0}s", t.elapsed().as_secs_f64()));
    (ok, msgs.join("; "))
}

fn coalescence_tail() -> Outcome {
    let t = Instant::now();
    let mut rng = stream::keyed_rng(10, &[]);
    let pl: Vec<f64> = (0..5000).map(|_| (1.0 - rng.random::<f64>()).powi(-2)).collect();
    let synth = ex::coalescence_tail(&pl, pl.len(), 1e12).unwrap();
    let synth_ok = (-0.65..=-0.35).contains(&synth.slope);
    if !synth_ok {
        return (false, format!("synthetic self-test slope {:.3}", synth.slope));
    }
    let cfg = CoalesceConfig { d: 2, p: fin(2.0), sep: 5.0, horizon: 1e4, max_steps: 100_000_000, reps: 2000, seed: 10 };
    let recs = ex::run_replicates(cfg.reps, |r| ex::coalescence_run(&cfg, r)).unwrap();
    let s = ex::summarize_coalescence(&cfg, &recs);
    match s.tail {
        Some(f) => (
            (-0.65..=-0.35).contains(&f.slope),
            format!(
                "synthetic {:.5}; slope {:.5} [{:.3}, {:.3}] over [{:.1}, {:.1}], {:.0}s",
                synth.slope,
                f.slope,
                f.ci_low,
                f.ci_high,
                f.t_lo,
                f.t_hi,
                t.elapsed().as_secs_f64()
            ),
        ),
        None => (false, "tail fit unavailable".into()),
    }
}

fn block_tail() -> Outcome {
    let cfg = RenewalConfig { d: 2, p: fin(2.0), k: 2, sep: 20.0, kappa: 0.6, r: 0.6, renewals: 1000, max_steps: 1_000_000, seed: 11 };
    let w = ex::collect_blocks(&cfg, 1000, 100_000).unwrap();
    match ex::block_tail_fit(&w) {
        Ok(f) => (
            w.len() == 1000 && f.slope < 0.0 && f.ci_high < 0.0,
            format!("{} blocks, slope {:.4} CI [{:.4}, {:.4}]", w.len(), f.slope, f.ci_low, f.ci_high),
        ),
        Err(e) => (false, e.to_string()),
    }
}

fn independent_symmetry() -> Outcome {
    let t = Instant::now();
    let c = ctx(3, fin(2.0));
    let lateral = ctx(2, fin(2.0));
    let n = 10_000;
    let traces = ex::run_replicates(n, |i| exploration::independent_process(2, 0.3, 0.5, 1_000_000, stream::derive_seed(12, &[i]), &c)).unwrap();
    let complete: Vec<_> = traces.iter().filter(|t| t.complete).collect();
    let bound_breaks = complete.iter().filter(|t| lateral.norm(&t.delta[0]) > t.w).count();
    let coord = |s: usize| -> Vec<f64> { complete.iter().map(|t| t.delta[0][s]).collect() };
    let (d0, d1) = (coord(0), coord(1));
    let mean_ok = [&d0, &d1].iter().all(|v| stats::mean(v).abs() <= 4.0 * stats::std_err(v));
    let half = d0.len() / 2;
    let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| -x).collect() };
    let flips = [
        stats::ks_two_sample(&d0[..half], &neg(&d0[half..])).unwrap(),
        stats::ks_two_sample(&d1[..half], &neg(&d1[half..])).unwrap(),
    ];
    let swap = stats::ks_two_sample(&d0[..half], &d1[half..]).unwrap();
    let tests_ok = flips.iter().all(|r| r.passes(0.01)) && swap.passes(0.01);
    (
        complete.len() == n && bound_breaks == 0 && mean_ok && tests_ok,
        format!(
            "{} complete, means ({:.4}, {:.4}), sign-flip p ({:.3}, {:.3}), swap p {:.3}, bound breaks {bound_breaks}, {:.0}s",
            complete.len(),
            stats::mean(&d0),
            stats::mean(&d1),
            flips[0].p_value,
            flips[1].p_value,
            swap.p_value,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn cli_run(dir: &std::path::Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dsf-lab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 3] = [
        &["coalesce", "--d", "2", "--p", "2", "--sep", "5", "--reps", "10", "--seed", "42"],
        &["explore", "--d", "3", "--p", "inf", "--k", "2", "--steps", "500", "--seed", "7"],
        &["dominate", "ecdf", "--d", "2", "--n", "2000", "--histories", "2", "--seed", "3"],
    ];
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        if !cli_run(a.path(), args) || !cli_run(b.path(), args) {
            mismatched.push(format!("{} failed", args[0]));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            compared += 1;
            if std::fs::read(a.path().join(&name)).unwrap() != std::fs::read(b.path().join(&name)).ok().unwrap_or_default() {
                mismatched.push(format!("{} {}", args[0], name.to_string_lossy()));
            }
        }
    }
    (mismatched.is_empty(), format!("{compared} files compared, mismatches: {mismatched:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("counterexample exactness", counterexample),
        ("empty-ball disjointness", empty_ball),
        ("section inclusion", section_inclusion),
        ("stochastic dominance", stochastic_dominance),
        ("alpha_h monotonicity", alpha_monotone),
        ("exploration invariants", exploration_invariants),
        ("area lower bounds", area_bounds),
        ("partition guarantees", partition_guarantees),
        ("coalescence dichotomy", coalescence_dichotomy),
        ("coalescence-time tail", coalescence_tail),
        ("block-size tail", block_tail),
        ("independent-process symmetry", independent_symmetry),
        ("determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!("criterion {n:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
