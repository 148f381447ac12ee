use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dsf_core::domination::{self, RecenteredHistory};
use dsf_core::exploration::{ExplorationState, Explorer};
use dsf_core::partition;
use dsf_core::ppp::PointStore;
use dsf_core::{forest, stream, Exponent, NormContext};
use dsf_lab::config;
use dsf_lab::experiments::{self as ex, CoalesceConfig, EscapeConfig, RenewalConfig};
use dsf_lab::output::RunDir;
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

const SUBCOMMANDS: &[&str] = &["forest", "explore", "dominate", "partition", "coalesce", "escape", "scale", "audit"];

#[derive(Parser)]
#[command(name = "dsf-lab", version, about = "Directed spanning forest experiments", args_override_self = true)]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Flat `key = value` file of flag defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Serialize)]
struct Space {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value = "2")]
    p: Exponent,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forest edges inside a window.
    Forest(ForestArgs),
    /// Joint exploration trace with renewal flags.
    Explore(ExploreArgs),
    /// Stochastic domination checks.
    Dominate(DominateArgs),
    /// Grouping and combinatorial witness for a random configuration.
    Partition(PartitionArgs),
    /// Two-trajectory coalescence campaign.
    Coalesce(CoalesceArgs),
    /// Escape runs for k trajectories.
    Escape(EscapeArgs),
    /// Diffusive scaling calibration and d_Π matrix.
    Scale(ScaleArgs),
    /// Moment audit of renewal increments.
    Audit(AuditArgs),
}

#[derive(Args, Clone, Serialize)]
struct ForestArgs {
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 20.0)]
    width: f64,
    #[arg(long, default_value_t = 20.0)]
    height: f64,
}

#[derive(Args, Clone, Serialize)]
struct ExploreArgs {
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 5.0)]
    sep: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.6)]
    kappa: f64,
    #[arg(long, default_value_t = 0.6)]
    r: f64,
    /// Check the structural invariants at every step.
    #[arg(long)]
    check: bool,
}

#[derive(ValueEnum, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum DominateMode {
    Counterexample,
    Ecdf,
    Alpha,
    Sections,
    Uniform,
}

#[derive(Args, Clone, Serialize)]
struct DominateArgs {
    mode: DominateMode,
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    histories: usize,
}

#[derive(Args, Clone, Serialize)]
struct PartitionArgs {
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 256)]
    n_mc: usize,
    #[arg(long, default_value_t = 10)]
    configs: usize,
}

#[derive(Args, Clone, Serialize)]
struct CoalesceArgs {
    #[command(flatten)]
    space: Space,
    #[arg(long, default_value_t = 5.0)]
    sep: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 10_000_000)]
    max_steps: usize,
}

#[derive(Args, Clone, Serialize)]
struct EscapeArgs {
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value = "2")]
    p: Exponent,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 50.0)]
    sep: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Steps per replicate.
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
}

#[derive(Args, Clone, Serialize)]
struct ScaleArgs {
    #[arg(long, default_value = "2")]
    p: Exponent,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    #[arg(long, default_value_t = 100.0)]
    height: f64,
    #[arg(long, default_value_t = 8)]
    paths: usize,
}

#[derive(Args, Clone, Serialize)]
struct AuditArgs {
    #[arg(long, default_value = "2")]
    p: Exponent,
    #[arg(long, default_value_t = 0.6)]
    kappa: f64,
    #[arg(long, default_value_t = 0.6)]
    r: f64,
    #[arg(long, default_value_t = 3.0)]
    sep: f64,
    #[arg(long, default_value_t = 200)]
    renewals: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 4)]
    bins: usize,
    /// Replace the increments by zeros (negative control).
    #[arg(long)]
    zero_control: bool,
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let mut out = RunDir::create(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match cli.cmd {
        Cmd::Forest(a) => {
            let g = ex::forest_window(a.space.d, a.space.p, a.width, a.height, seed)?;
            let (trees, _) = forest::count_trees(&g);
            out.with_writer("vertices.csv", |w| g.write_vertices_csv(w))?;
            out.with_writer("edges.csv", |w| g.write_edges_csv(w))?;
            let summary = json!({
                "vertices": g.vertices.len(),
                "edges": g.edges.len(),
                "boundary": g.boundary_count(),
                "trees": trees,
                "acyclic": g.is_acyclic(),
            });
            println!("{summary}");
            out.json("summary.json", &summary)?;
            out.finish("forest", seed, &a)?;
        }
        Cmd::Explore(a) => {
            let ctx = NormContext::new(a.space.d, a.space.p)?;
            let mut store = PointStore::poisson(a.space.d, seed)?;
            let starts = (0..a.k)
                .map(|i| {
                    let mut v = vec![0.0; a.space.d];
                    v[0] = a.sep * i as f64;
                    v
                })
                .collect();
            let mut explorer = Explorer::new(ExplorationState::new(starts, ctx)?, a.kappa, a.r);
            explorer.check_invariants = a.check;
            let records = (0..a.steps).map(|_| explorer.advance(&mut store)).collect::<Result<Vec<_>, _>>()?;
            out.jsonl("records.jsonl", &records)?;
            let summary = json!({
                "steps": explorer.state.n,
                "renewals": explorer.trace.beta.len(),
                "distinct_heads": explorer.state.distinct_heads(),
                "renewal_trace": explorer.trace,
                "invariants": explorer.report,
                "violations": explorer.report.violations(),
            });
            out.json("summary.json", &summary)?;
            if a.check && explorer.report.violations() > 0 {
                bail!("{} invariant violations", explorer.report.violations());
            }
            out.finish("explore", seed, &a)?;
        }
        Cmd::Dominate(a) => dominate(&a, seed, &mut out).and_then(|_| Ok(out.finish("dominate", seed, &a)?))?,
        Cmd::Partition(a) => {
            let ctx = NormContext::new(a.space.d, a.space.p)?;
            let mut rng = stream::keyed_rng(seed, &[stream::tag(b"partition-configs")]);
            let mut records = Vec::new();
            for i in 0..a.configs {
                let cfg = ex::random_configuration(&mut rng, a.k, a.space.d, &ctx, a.kappa)?;
                let grouping = partition::group_partition(&cfg, partition::DEFAULT_DELTA, &ctx)?;
                let w = partition::combinatorial_witness(&cfg, a.kappa, &ctx, a.n_mc, stream::derive_seed(seed, &[i as u64]))?;
                records.push(json!({
                    "config": cfg,
                    "grouping": grouping.partition(),
                    "grouping_holds": partition::grouping_holds(&cfg, &grouping, &ctx),
                    "witness": w,
                }));
            }
            out.jsonl("records.jsonl", &records)?;
            let verified = records.iter().filter(|r| r["witness"]["verified"] == json!(true)).count();
            let summary = json!({ "configs": a.configs, "verified": verified });
            out.json("summary.json", &summary)?;
            out.finish("partition", seed, &a)?;
            if verified < a.configs {
                bail!("{} of {} witnesses failed verification", a.configs - verified, a.configs);
            }
        }
        Cmd::Coalesce(a) => {
            let cfg = CoalesceConfig {
                d: a.space.d,
                p: a.space.p,
                sep: a.sep,
                horizon: a.horizon,
                max_steps: a.max_steps,
                reps: a.reps,
                seed,
            };
            let recs = ex::run_replicates(a.reps, |r| ex::coalescence_run(&cfg, r))?;
            out.jsonl("records.jsonl", &recs)?;
            out.with_writer("times.csv", |w| {
                writeln!(w, "rep,coalesced,t,steps")?;
                for r in &recs {
                    writeln!(w, "{},{},{:?},{}", r.rep, r.coalesced, r.t, r.steps)?;
                }
                Ok(())
            })?;
            out.json("summary.json", &ex::summarize_coalescence(&cfg, &recs))?;
            out.finish("coalesce", seed, &a)?;
        }
        Cmd::Escape(a) => {
            let cfg = EscapeConfig { d: a.d, p: a.p, k: a.k, sep: a.sep, horizon: a.horizon, reps: a.reps, seed };
            let recs = ex::run_replicates(a.reps, |r| ex::escape_run(&cfg, r))?;
            out.jsonl("records.jsonl", &recs)?;
            out.json("summary.json", &ex::summarize_escape(&cfg, &recs))?;
            out.finish("escape", seed, &a)?;
        }
        Cmd::Scale(a) => {
            let cal = ex::calibrate(a.p, a.trajectories, a.height, stream::derive_seed(seed, &[stream::tag(b"calibrate")]))?;
            let var1 = ex::scaled_variance_at_one(&cal, a.trajectories, a.height, stream::derive_seed(seed, &[stream::tag(b"verify")]))?;
            let starts: Vec<Vec<f64>> = (0..a.paths).map(|i| vec![2.0 * i as f64, 0.0]).collect();
            let n = (a.height / cal.gamma).sqrt();
            let paths = ex::scaled_paths(a.p, &starts, a.height, n, cal.gamma, cal.sigma, seed)?;
            let m = ex::d_pi_matrix(&paths, ex::D_PI_STEP);
            out.jsonl("records.jsonl", &paths)?;
            out.with_writer("d_pi.csv", |w| {
                for row in &m {
                    let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                    writeln!(w, "{}", line.join(","))?;
                }
                Ok(())
            })?;
            let summary = json!({
                "calibration": cal,
                "scaled_variance_at_one": var1,
                "metric_violations": ex::metric_violations(&m, 1e-9),
            });
            out.json("summary.json", &summary)?;
            out.finish("scale", seed, &a)?;
        }
        Cmd::Audit(a) => {
            let samples = if a.zero_control {
                ex::synthetic_audit_samples(a.renewals * a.reps, seed, true)
            } else {
                let cfg = RenewalConfig {
                    d: 2,
                    p: a.p,
                    k: 2,
                    sep: a.sep,
                    kappa: a.kappa,
                    r: a.r,
                    renewals: a.renewals,
                    max_steps: 1_000_000,
                    seed,
                };
                let series = ex::run_replicates(a.reps, |r| ex::renewal_series(&cfg, r))?;
                ex::audit_samples(&series)
            };
            out.jsonl("records.jsonl", &samples)?;
            let report = ex::assumption_audit(&samples, a.bins)?;
            println!("audit {}", if report.passes() { "PASS" } else { "FAIL" });
            out.json("summary.json", &json!({ "report": report, "passes": report.passes() }))?;
            out.finish("audit", seed, &a)?;
        }
    }
    Ok(())
}

fn dominate(a: &DominateArgs, seed: u64, out: &mut RunDir) -> Result<()> {
    if let DominateMode::Counterexample = a.mode {
        let r = domination::counterexample_verify();
        println!("{r}");
        out.json("summary.json", &json!({
            "lifted": r.lifted.to_string(),
            "base": r.base.to_string(),
            "radius_cubed": r.radius_cubed.to_string(),
            "passes": r.passes(),
        }))?;
        if !r.passes() {
            bail!("counterexample verification failed");
        }
        return Ok(());
    }
    let ctx = NormContext::new(a.space.d, a.space.p)?;
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"histories")]);
    let mut records = Vec::new();
    for i in 0..a.histories {
        let h = RecenteredHistory::random(&mut rng, &ctx);
        let s = stream::derive_seed(seed, &[i as u64]);
        let rec = match a.mode {
            DominateMode::Ecdf => {
                let xh: Vec<f64> = domination::sample_x(&h, &ctx, s, a.n)?.iter().map(|x| x.x[a.space.d - 1]).collect();
                let x0: Vec<f64> =
                    domination::sample_x(&RecenteredHistory::empty(), &ctx, stream::derive_seed(s, &[stream::tag(b"base")]), a.n)?.iter().map(|x| x.x[a.space.d - 1]).collect();
                let cmp = domination::ecdf_dominance(&xh, &x0, None)?;
                out.with_writer(&format!("ecdf_{i}.csv"), |w| cmp.write_csv(w))?;
                json!({ "history": h, "max_violation_z": cmp.max_violation_z, "passes": cmp.passes() })
            }
            DominateMode::Alpha => {
                let grid: Vec<f64> = (0..20).map(|j| 0.95 * j as f64 / 19.0).collect();
                let curve = domination::alpha_curve(&h, &grid, &ctx, a.n, s)?;
                out.with_writer(&format!("alpha_{i}.csv"), |w| domination::write_alpha_csv(&curve, w))?;
                json!({ "history": h, "max_decrease_z": domination::max_decrease_z(&curve) })
            }
            DominateMode::Sections => {
                let hh = 0.9 * rand::Rng::random::<f64>(&mut rng);
                let hp = hh * rand::Rng::random::<f64>(&mut rng);
                let bad = domination::section_inclusion_test(&h, hh, hp, &ctx, a.n, s)?;
                json!({ "history": h, "h": hh, "h_prime": hp, "violations": bad.len() })
            }
            DominateMode::Uniform => match domination::uniformisation_check(&h, &ctx, a.n, s, (0.9, 1.1)) {
                Ok(r) => json!({ "history": h, "report": r }),
                Err(e) => json!({ "history": h, "error": e.to_string() }),
            },
            DominateMode::Counterexample => unreachable!(),
        };
        records.push(rec);
    }
    out.jsonl("records.jsonl", &records)?;
    out.json("summary.json", &json!({ "histories": a.histories, "n": a.n }))?;
    Ok(())
}
