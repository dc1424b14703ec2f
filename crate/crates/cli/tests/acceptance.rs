//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so each criterion reports its own
//! measurements (and runtime where a budget applies).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use expbound_core::bandit::{
    build_bandit, cutoff_bound, expected_visits, linear_visits, llr_of_outcome, path_identity_check, solve_cutoff,
    theorem_consistency, BanditSpec,
};
use expbound_core::belief::{bayes_update, observation_probability, theorem_bound};
use expbound_core::constructions::{
    build_prop1, default_epsilon_sequence, gaussian_ubar, n_epsilon_alpha_curve, prop1_value, prop2_deviation_check,
    solve_rho_sequence,
};
use expbound_core::model::{Belief, DecisionProblem};
use expbound_core::sim::{estimate_total_experimentation, replication_seed, verify_theorem, SimConfig};
use expbound_core::Error as CoreError;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

const PROP1_CELLS: [(usize, f64); 4] = [(2, 2.0 / 3.0), (3, 0.6), (5, 0.8), (10, 0.95)];
const ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];
const DELTAS: [f64; 3] = [0.5, 0.8, 0.9];
const P0AS: [f64; 3] = [0.2, 0.3, 0.4];
const SEED: u64 = 20_240_601;

enum GridCell {
    Feasible {
        spec: BanditSpec,
        p0a: f64,
    },
    Infeasible {
        alpha: f64,
        delta: f64,
        p0a: f64,
        reason: String,
    },
}

fn grid() -> Vec<GridCell> {
    let mut out = Vec::new();
    for &alpha in &ALPHAS {
        for &delta in &DELTAS {
            for &p0a in &P0AS {
                out.push(match build_bandit(alpha, p0a, 0.0, delta) {
                    Ok(spec) => GridCell::Feasible { spec, p0a },
                    Err(e @ CoreError::InfeasibleBandit { .. }) => GridCell::Infeasible {
                        alpha,
                        delta,
                        p0a,
                        reason: e.to_string(),
                    },
                    Err(e) => panic!("({alpha}, {delta}, {p0a}): {e}"),
                });
            }
        }
    }
    out
}

fn feasible() -> Vec<(BanditSpec, f64)> {
    grid()
        .into_iter()
        .filter_map(|c| match c {
            GridCell::Feasible { spec, p0a } => Some((spec, p0a)),
            GridCell::Infeasible { .. } => None,
        })
        .collect()
}

fn cell_name(s: &BanditSpec) -> String {
    format!("(alpha={}, delta={}, p0a={})", s.alpha, s.delta, s.p0[0])
}

fn check(cond: bool, failures: &mut Vec<String>, msg: impl FnOnce() -> String) {
    if !cond {
        failures.push(msg());
    }
}

fn finish(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for (m, delta) in PROP1_CELLS {
        let fam = build_prop1(m, delta).map_err(|e| e.to_string())?;
        let cfg = SimConfig::new(100_000, SEED);
        let rep = estimate_total_experimentation(&fam.problem, &fam.rule, &cfg).map_err(|e| e.to_string())?;
        // Oracle: ((m - 1)/m) delta / (1 - delta), written out independently.
        let closed = (m as f64 - 1.0) / m as f64 * delta / (1.0 - delta);
        let tol = (3.0 * rep.std_error).max(0.01 * closed);
        let err = (rep.mean_total_gap - closed).abs();
        check(err <= tol, &mut failures, || {
            format!("m={m}: |{:.5} - {closed:.5}| = {err:.5} > {tol:.5}", rep.mean_total_gap)
        });
        let bound = theorem_bound(&fam.problem);
        let ratio = rep.mean_total_gap / bound;
        let want = (m as f64 - 1.0) / m as f64;
        check((ratio / want - 1.0).abs() <= 0.01, &mut failures, || {
            format!("m={m}: ratio {ratio:.5} vs {want:.5}")
        });
        parts.push(format!(
            "m={m}: {:.4}±{:.4} vs {closed:.4}",
            rep.mean_total_gap, rep.std_error
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, &mut failures, || format!("runtime {secs:.1}s >= 30s"));
    finish(failures, format!("{} [{secs:.1}s]", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let mut n = 0;
    for (m, delta) in PROP1_CELLS {
        let fam = build_prop1(m, delta).map_err(|e| e.to_string())?;
        let rep = estimate_total_experimentation(&fam.problem, &fam.rule, &SimConfig::new(100_000, SEED))
            .map_err(|e| e.to_string())?;
        let v = verify_theorem(&rep);
        check(v.pass, &mut failures, || {
            format!("prop1 m={m}: {:.5} > {:.5}", v.mean_total_gap, v.bound)
        });
        n += 1;
    }
    for (spec, _) in feasible() {
        let kstar = solve_cutoff(&spec).map_err(|e| e.to_string())?.kstar;
        let cfg = SimConfig {
            cap: 2_000,
            ..SimConfig::new(2_000, SEED)
        };
        let rep = theorem_consistency(&spec, kstar, &cfg).map_err(|e| e.to_string())?;
        check(rep.verdict.pass, &mut failures, || {
            format!(
                "{}: {:.5} > {:.5}",
                cell_name(&spec),
                rep.verdict.mean_total_gap,
                rep.verdict.bound
            )
        });
        n += 1;
    }
    finish(failures, format!("{n} cells checked"))
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut n = 0;
    for m in 2..=10usize {
        for delta in [0.55, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99] {
            if m as f64 * delta <= 1.0 {
                continue;
            }
            let fam = build_prop1(m, delta).map_err(|e| e.to_string())?;
            let v = prop1_value(&fam).map_err(|e| e.to_string())?;
            let err = (v - 1.0 / m as f64).abs();
            check(err <= 1e-12, &mut failures, || {
                format!("m={m} delta={delta}: error {err:e}")
            });
            n += 1;
        }
    }
    finish(failures, format!("{n} (m, delta) pairs"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut solved = Vec::new();
    let mut infeasible = Vec::new();
    for c in grid() {
        match c {
            GridCell::Infeasible {
                alpha,
                delta,
                p0a,
                reason,
            } => {
                println!("    infeasible (alpha={alpha}, delta={delta}, p0a={p0a}): {reason}");
                infeasible.push((alpha, delta, p0a));
            }
            GridCell::Feasible { spec, p0a } => {
                let r = solve_cutoff(&spec).map_err(|e| format!("{}: {e}", cell_name(&spec)))?;
                let bound = cutoff_bound(&spec);
                println!(
                    "    solved {}: kstar={} bound={bound:.3} doubled={:?}",
                    cell_name(&spec),
                    r.kstar,
                    r.kstar_doubled
                );
                check(r.kstar as f64 <= bound, &mut failures, || {
                    format!("{}: kstar {} > bound {bound}", cell_name(&spec), r.kstar)
                });
                check(r.kstar_doubled == Some(r.kstar), &mut failures, || {
                    format!("{}: doubling gave {:?}", cell_name(&spec), r.kstar_doubled)
                });
                solved.push((spec.alpha, spec.delta, p0a, r.kstar));
            }
        }
    }
    for &alpha in &ALPHAS {
        for &p0a in &P0AS {
            let mut slice: Vec<_> = solved.iter().filter(|c| c.0 == alpha && c.2 == p0a).collect();
            slice.sort_by(|a, b| a.1.total_cmp(&b.1));
            for w in slice.windows(2) {
                check(w[1].3 >= w[0].3, &mut failures, || {
                    format!(
                        "alpha={alpha} p0a={p0a}: kstar {} at delta={} > {} at delta={}",
                        w[0].3, w[0].1, w[1].3, w[1].1
                    )
                });
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, &mut failures, || format!("runtime {secs:.1}s >= 60s"));
    check(!solved.is_empty(), &mut failures, || "no feasible cell".into());
    finish(
        failures,
        format!(
            "{} solved, {} reported infeasible [{secs:.1}s]",
            solved.len(),
            infeasible.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut levels = 0;
    let mut worst_z: f64 = 0.0;
    for (spec, p0a) in feasible() {
        let kstar = solve_cutoff(&spec).map_err(|e| e.to_string())?.kstar;
        if kstar < 1 {
            continue;
        }
        let floor = p0a / (1.0 - p0a);
        let lin = linear_visits(&spec, kstar).map_err(|e| e.to_string())?;
        let cfg = SimConfig {
            cap: 100_000,
            ..SimConfig::new(10_000, SEED)
        };
        let mc = expected_visits(&spec, kstar, &cfg).map_err(|e| e.to_string())?;
        check(mc.non_absorbed_rate < 0.01, &mut failures, || {
            format!("{}: non-absorbed {:.4}", cell_name(&spec), mc.non_absorbed_rate)
        });
        for k in 0..kstar {
            let x = lin.visits[k as usize];
            check(x >= floor - 1e-9, &mut failures, || {
                format!("{} k={k}: {x:.6} < floor {floor:.6}", cell_name(&spec))
            });
            let l = mc.levels.iter().find(|l| l.k == k).ok_or("missing level")?;
            let z = (x - l.mc_mean).abs() / l.mc_std_error.max(f64::MIN_POSITIVE);
            worst_z = worst_z.max(z);
            check((x - l.mc_mean).abs() <= 3.0 * l.mc_std_error, &mut failures, || {
                format!(
                    "{} k={k}: linear {x:.5} vs mc {:.5}±{:.5}",
                    cell_name(&spec),
                    l.mc_mean,
                    l.mc_std_error
                )
            });
            levels += 1;
        }
    }
    finish(failures, format!("{levels} levels, worst |z| = {worst_z:.2}"))
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    for (spec, p0a) in feasible() {
        let kstar = solve_cutoff(&spec).map_err(|e| e.to_string())?.kstar;
        for i in 0..1000u64 {
            let p = path_identity_check(&spec, kstar, replication_seed(SEED, i), 2_000).map_err(|e| e.to_string())?;
            worst = worst.max(p.residual);
            check(p.residual < 1e-9, &mut failures, || {
                format!("{} path {i}: residual {:e}", cell_name(&spec), p.residual)
            });
            paths += 1;
        }
        // Oracle for eps(k) = 1/2 - e^{-k alpha}/(1 + e^{-k alpha}).
        let eps_sum: f64 = (0..kstar)
            .map(|k| {
                let e = (-(k as f64) * spec.alpha).exp();
                0.5 - e / (1.0 + e)
            })
            .sum();
        let bound3 = 4.0 * (1.0 - p0a) / (p0a * (1.0 - spec.delta));
        check(eps_sum <= bound3, &mut failures, || {
            format!("{}: sum eps {eps_sum:.5} > {bound3:.5}", cell_name(&spec))
        });
    }
    finish(failures, format!("{paths} paths, max residual {worst:e}"))
}

/// `2 * integral_0^x phi` by composite Simpson.
fn simpson_ubar(rho: f64) -> f64 {
    let x = rho.sqrt().min(40.0);
    let n = 20_000;
    let h = x / n as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(0.0) + phi(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(i as f64 * h);
    }
    2.0 * s * h / 3.0
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();

    let mut ubar_err: f64 = 0.0;
    for i in 0..=80 {
        let rho = 10f64.powf(-4.0 + 0.1 * i as f64);
        let u = gaussian_ubar(rho).map_err(|e| e.to_string())?;
        ubar_err = ubar_err.max((u - simpson_ubar(rho)).abs());
    }
    check(ubar_err < 1e-8, &mut failures, || {
        format!("ubar vs quadrature {ubar_err:e}")
    });

    let seq = default_epsilon_sequence(10_000, 0.75).map_err(|e| e.to_string())?;
    let g = solve_rho_sequence(&seq).map_err(|e| e.to_string())?;
    let mut precision = 0.0;
    let mut eps = 0.0;
    let mut residual: f64 = 0.0;
    for (r, e) in g.rho_seq.iter().zip(&g.eps_seq) {
        precision += r;
        eps += e;
        residual = residual.max((gaussian_ubar(precision).map_err(|e| e.to_string())? - eps).abs());
    }
    check(residual < 1e-10, &mut failures, || {
        format!("recursion residual {residual:e}")
    });

    for k in 1..=50 {
        let d = prop2_deviation_check(&g, k, 0.75).map_err(|e| e.to_string())?;
        check(d.ok, &mut failures, || {
            format!("deviation k={k}: {:.6} <= {:.6}", d.continuation_lower, d.stopping)
        });
    }

    for alpha in [0.5, 0.9] {
        let c = n_epsilon_alpha_curve(&g, alpha).map_err(|e| e.to_string())?;
        if let Some(i) = (99..c.len() - 1).find(|&i| c[i + 1] <= c[i]) {
            failures.push(format!(
                "curve alpha={alpha} not increasing: n={} {:.5} -> {:.5} (last {:.5})",
                i + 1,
                c[i],
                c[i + 1],
                c[c.len() - 1]
            ));
        }
    }

    check(g.partial_sum > 0.5 && g.partial_sum < 1.0, &mut failures, || {
        format!("partial sum {}", g.partial_sum)
    });

    let secs = start.elapsed().as_secs_f64();
    check(secs < 20.0, &mut failures, || format!("runtime {secs:.1}s >= 20s"));
    finish(
        failures,
        format!(
            "residual {residual:.1e}, ubar err {ubar_err:.1e}, partial sum {:.4} [{secs:.1}s]",
            g.partial_sum
        ),
    )
}

/// Every belief reachable within `depth` stages from the prior, with its automaton state.
fn reachable(p: &DecisionProblem, depth: usize) -> Vec<(usize, Belief)> {
    let mut frontier = vec![(p.kernel.start, Belief::prior_of(p))];
    let mut all = frontier.clone();
    for _ in 0..depth {
        let mut next = Vec::new();
        for (state, b) in &frontier {
            for a in 0..p.num_actions() {
                let s = p.next_state(*state, a);
                for o in 0..p.num_observations() {
                    if observation_probability(p, b.weights(), s, o) > 0.0 {
                        next.push((s, bayes_update(p, b, s, o).unwrap()));
                    }
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();

    let fam = build_prop1(3, 0.6).map_err(|e| e.to_string())?;
    let p = &fam.problem;
    let mut mart: f64 = 0.0;
    let mut beliefs = 0;
    for (_, b) in reachable(p, 3) {
        for s in 0..p.kernel.states.len() {
            let mut mean = vec![0.0; p.num_params()];
            for o in 0..p.num_observations() {
                let q = observation_probability(p, b.weights(), s, o);
                if q > 0.0 {
                    let post = bayes_update(p, &b, s, o).unwrap();
                    mean.iter_mut().zip(post.weights()).for_each(|(m, w)| *m += q * w);
                }
            }
            for (m, w) in mean.iter().zip(b.weights()) {
                mart = mart.max((m - w).abs());
            }
            beliefs += 1;
        }
    }
    check(mart <= 1e-12, &mut failures, || format!("martingale error {mart:e}"));

    let specs = feasible();
    let mut lr: f64 = 0.0;
    let mut additivity: f64 = 0.0;
    for (spec, _) in &specs {
        let s: f64 = spec.p0.iter().zip(&spec.p1).map(|(a, b)| a * (b / a)).sum();
        lr = lr.max((s - 1.0).abs());

        // All outcome sequences of length 6 from the uniform prior.
        let bp = spec.to_problem();
        let risky = bp.action_index("risky").unwrap();
        let pulled = bp.next_state(bp.kernel.start, risky);
        let (t0, t1) = (bp.param_index("theta0").unwrap(), bp.param_index("theta1").unwrap());
        let mut stack = vec![(Belief::prior_of(&bp), 0.0f64, 0usize)];
        while let Some((b, z, depth)) = stack.pop() {
            let w = b.weights();
            additivity = additivity.max(((w[t1] / w[t0]).ln() - z).abs());
            if depth == 6 {
                continue;
            }
            for o in ["a", "b", "c"] {
                let obs = bp.observation_index(o).unwrap();
                let post = bayes_update(&bp, &b, pulled, obs).unwrap();
                stack.push((post, z + llr_of_outcome(spec, o).unwrap(), depth + 1));
            }
        }
    }
    check(lr <= 1e-12, &mut failures, || format!("likelihood ratio error {lr:e}"));
    check(additivity <= 1e-10, &mut failures, || {
        format!("log-odds additivity error {additivity:e}")
    });
    finish(
        failures,
        format!(
            "martingale {mart:.1e} over {beliefs} (belief, state) pairs, LR {lr:.1e} and log-odds {additivity:.1e} over {} specs",
            specs.len()
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let mut full = vec!["expbound".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.extend([
        "--out-dir".to_string(),
        dir.display().to_string(),
        "--name".into(),
        "r".into(),
    ]);
    let code = expbound_cli::run(full);
    if code != 0 {
        return Err(format!("{args:?} exited {code}"));
    }
    std::fs::read(dir.join("r.report.json")).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let problem = tmp.path().join("problem.json");
    let fam = build_prop1(3, 0.6).map_err(|e| e.to_string())?;
    std::fs::write(&problem, fam.problem.to_json()).map_err(|e| e.to_string())?;
    let problem = problem.display().to_string();

    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "prop1",
            vec!["prop1", "--m", "3", "--delta", "0.6", "--runs", "5000", "--seed", "11"],
        ),
        (
            "bandit",
            vec![
                "bandit",
                "--alpha",
                "1.0",
                "--p0a",
                "0.2",
                "--delta",
                "0.8",
                "--runs",
                "500",
                "--cap",
                "500",
                "--paths",
                "100",
                "--visit-runs",
                "1000",
                "--visit-cap",
                "10000",
                "--seed",
                "11",
            ],
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--problem",
                &problem,
                "--rule",
                "prop1",
                "--runs",
                "5000",
                "--seed",
                "11",
            ],
        ),
    ];
    let mut failures = Vec::new();
    for (name, args) in &cases {
        let mut outputs = Vec::new();
        for (i, workers) in ["1", "1", "4"].iter().enumerate() {
            let dir = tmp.path().join(format!("{name}-{i}"));
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let mut a = args.clone();
            a.extend(["--workers", workers]);
            outputs.push(run_cli(&a, &dir)?);
        }
        check(outputs[0] == outputs[1], &mut failures, || {
            format!("{name}: repeat run differs")
        });
        check(outputs[0] == outputs[2], &mut failures, || {
            format!("{name}: workers 1 vs 4 differ")
        });
    }
    finish(
        failures,
        format!(
            "{} commands byte-identical across repeats and workers {{1, 4}}",
            cases.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "revelation family tightness", criterion_1),
        (2, "bound holds on every cell", criterion_2),
        (3, "revelation family value", criterion_3),
        (4, "cut-off bound", criterion_4),
        (5, "visit floor and Monte Carlo agreement", criterion_5),
        (6, "path identity", criterion_6),
        (7, "Gaussian construction", criterion_7),
        (8, "belief-engine identities", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (n, title, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let line = match outcome {
            Ok(d) => format!("criterion {n}: PASS — {title}: {d}"),
            Err(d) => {
                failed += 1;
                format!("criterion {n}: FAIL — {title}: {d}")
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!();
    println!("acceptance summary:");
    for l in &lines {
        println!("  {l}");
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
