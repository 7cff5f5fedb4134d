//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use morlgen::aggregate::{iqm, optimality_gap, sample_simplex_many, RandomStream, ScoreSample};
use morlgen::harness::{
    make_reference_fronts, micro_config, AgentKind, EvalConfig, EvalReport, TrainedAgents,
};
use morlgen::lavagrid::{builtin_eval_contexts, LavaGridSpace, DEFAULT_GAMMA};
use morlgen::momdp::ContextSpace;
use morlgen::oracle::{enumerate_returns, pareto_backward_induction, replay_witness};
use morlgen::pareto::{
    eum, hv_norm, hypervolume, nhgr, pareto_filter, FrontBounds, ParetoFront, ValueVector,
    WeightVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    if spent > budget {
        return Err(format!("took {spent:.1?}, budget {budget:?}"));
    }
    Ok(())
}

fn vv(x: Vec<f64>) -> ValueVector {
    ValueVector::new(x).unwrap()
}

fn random_front(rng: &mut ChaCha8Rng, k: usize, max_points: usize) -> ParetoFront {
    let n = rng.gen_range(1..=max_points);
    let pts: Vec<ValueVector> = (0..n)
        .map(|_| vv((0..k).map(|_| rng.gen::<f64>()).collect()))
        .collect();
    pareto_filter(&pts).unwrap()
}

/// Area dominated in 2-D, by sweeping points in decreasing first objective.
fn sweep_area(front: &ParetoFront, r: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = front
        .rows()
        .filter(|p| p[0] > r[0] && p[1] > r[1])
        .map(|p| [p[0], p[1]])
        .collect();
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
    let (mut area, mut top) = (0.0, r[1]);
    for p in pts {
        if p[1] > top {
            area += (p[0] - r[0]) * (p[1] - top);
            top = p[1];
        }
    }
    area
}

/// Monte Carlo hypervolume over the box [r, max]; returns (estimate, standard error).
fn monte_carlo(front: &ParetoFront, r: &[f64], samples: usize, seed: u64) -> (f64, f64) {
    let k = r.len();
    let hi: Vec<f64> = (0..k)
        .map(|i| front.rows().map(|p| p[i]).fold(r[i], f64::max))
        .collect();
    let volume: f64 = (0..k).map(|i| hi[i] - r[i]).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<&[f64]> = front.rows().collect();
    let mut x = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..samples {
        for i in 0..k {
            x[i] = r[i] + rng.gen::<f64>() * (hi[i] - r[i]);
        }
        if rows.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a >= b)) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (volume * p, volume * (p * (1.0 - p) / samples as f64).sqrt())
}

fn hypervolume_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: Vec<(usize, ParetoFront, u64)> = (0..200)
        .map(|i| {
            let k = [2, 3, 4][i % 3];
            (k, random_front(&mut rng, k, 20), i as u64)
        })
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|(k, front, seed)| {
            let r = vec![0.0; *k];
            let exact = hypervolume(front, &vv(r.clone())).unwrap();
            if *k == 2 {
                let sweep = sweep_area(front, [0.0, 0.0]);
                ((exact - sweep).abs() > 1e-9)
                    .then(|| format!("k=2 case {seed}: exact {exact} sweep {sweep}"))
            } else {
                let (est, se) = monte_carlo(front, &r, 1_000_000, 1000 + seed);
                ((exact - est).abs() > 3.0 * se)
                    .then(|| format!("k={k} case {seed}: exact {exact} mc {est} ± {se}"))
            }
        })
        .collect();
    within(Duration::from_secs(60), start)?;
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("200 fronts, {:.1?}", start.elapsed())
        } else {
            failures.join("; ")
        },
    )
}

fn scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..=4);
        let front = random_front(&mut rng, k, 12);
        let lo: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let hi: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..2.0)).collect();
        let scale: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..100.0)).collect();
        let shift: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let map = |v: &[f64]| {
            vv(v.iter()
                .enumerate()
                .map(|(i, x)| scale[i] * x + shift[i])
                .collect())
        };
        let base = hv_norm(
            &front,
            &FrontBounds::new(vv(lo.clone()), vv(hi.clone())).unwrap(),
        )
        .unwrap();
        let moved_front = pareto_filter(&front.rows().map(map).collect::<Vec<_>>()).unwrap();
        let moved = hv_norm(&moved_front, &FrontBounds::new(map(&lo), map(&hi)).unwrap()).unwrap();
        worst = worst.max((base - moved).abs());
    }
    check(worst < 1e-9, format!("100 trials, max |Δ| = {worst:.2e}"))
}

fn nhgr_identity_and_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let front = random_front(&mut rng, 3, 15);
        let Ok(b) = FrontBounds::of(&front) else {
            continue;
        };
        if hv_norm(&front, &b).unwrap() <= 0.0 {
            continue;
        }
        worst = worst.max((nhgr(&front, &front).unwrap() - 1.0).abs());
        tested += 1;
    }
    let mut drops = 0;
    let mut tested = 0;
    while tested < 100 {
        let optimal = random_front(&mut rng, 3, 15);
        let Ok(b) = FrontBounds::of(&optimal) else {
            continue;
        };
        if hv_norm(&optimal, &b).unwrap() <= 0.0 {
            continue;
        }
        let approx = random_front(&mut rng, 3, 6);
        let extra = vv((0..3).map(|_| rng.gen::<f64>()).collect());
        let mut grown: Vec<ValueVector> = approx.points().to_vec();
        grown.push(extra);
        if nhgr(&pareto_filter(&grown).unwrap(), &optimal).unwrap()
            < nhgr(&approx, &optimal).unwrap()
        {
            drops += 1;
        }
        tested += 1;
    }
    check(
        worst <= 1e-12 && drops == 0,
        format!("max |nhgr(F,F) - 1| = {worst:.1e}, {drops} monotonicity violations in 100 trials"),
    )
}

fn eum_analytic() -> Outcome {
    let weights = sample_simplex_many(RandomStream::new(14, 0), 2, 1_000_000).unwrap();
    let front = pareto_filter(&[vv(vec![1.0, 0.0]), vv(vec![0.0, 1.0])]).unwrap();
    let value = eum(&front, &weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut mismatches = 0;
    for _ in 0..100 {
        let raw: Vec<ValueVector> = (0..rng.gen_range(1..20))
            .map(|_| vv((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()))
            .collect();
        let ws: Vec<WeightVector> =
            sample_simplex_many(RandomStream::new(rng.gen(), 1), 3, 50).unwrap();
        if morlgen::pareto::eum_of_points(&raw, &ws).unwrap()
            != eum(&pareto_filter(&raw).unwrap(), &ws).unwrap()
        {
            mismatches += 1;
        }
    }
    check(
        (value - 0.75).abs() <= 0.01 && mismatches == 0,
        format!("eum = {value:.5} over 10^6 weights, {mismatches} filter mismatches in 100 fronts"),
    )
}

fn sorted_rows(front: &ParetoFront) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = front.rows().map(|r| r.to_vec()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cases: Vec<_> = (0..50)
        .map(|i| {
            let (width, height) = (rng.gen_range(3..=5), rng.gen_range(3..=5));
            let lava_max = (width * height - 4).min(6);
            let space = LavaGridSpace {
                width,
                height,
                lava_min: 0,
                lava_max,
                fixed_weights: None,
            };
            (
                space.sample(RandomStream::new(15, i)).unwrap(),
                rng.gen_range(6..=12usize),
            )
        })
        .collect();
    let problems: Vec<String> = cases
        .par_iter()
        .enumerate()
        .filter_map(|(i, (ctx, horizon))| {
            let bi = pareto_backward_induction(ctx, DEFAULT_GAMMA, *horizon, None).unwrap();
            let en = enumerate_returns(ctx, DEFAULT_GAMMA, *horizon).unwrap();
            let (a, b) = (sorted_rows(&bi.front), sorted_rows(&en.front));
            let same = a.len() == b.len()
                && a.iter()
                    .zip(&b)
                    .all(|(p, q)| p.iter().zip(q).all(|(x, y)| (x - y).abs() <= 1e-9));
            if !same {
                return Some(format!("case {i}: {} vs {} points", a.len(), b.len()));
            }
            for (v, w) in bi.front.points().iter().zip(&bi.witnesses) {
                if replay_witness(ctx, DEFAULT_GAMMA, *horizon, w).unwrap() != *v {
                    return Some(format!("case {i}: witness does not replay"));
                }
            }
            None
        })
        .collect();
    within(Duration::from_secs(300), start)?;
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("50 contexts, {:.1?}", start.elapsed())
        } else {
            problems.join("; ")
        },
    )
}

fn aggregation() -> Outcome {
    let a = iqm(&ScoreSample::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let g = optimality_gap(&ScoreSample::new(vec![0.5, 1.2]).unwrap(), 1.0);
    check(a == 2.5 && g == 0.25, format!("iqm = {a}, gap = {g}"))
}

struct MicroRun {
    specialist: EvalReport,
    generalist: EvalReport,
    random: EvalReport,
    elapsed: Duration,
}

fn micro_run() -> MicroRun {
    let start = Instant::now();
    let config = micro_config((0..5).collect()).unwrap();
    let refs = make_reference_fronts(&config).unwrap();
    let eval = |kind| {
        TrainedAgents::train(&config, kind)
            .unwrap()
            .evaluate(&config, &refs)
            .unwrap()
    };
    let specialist = eval(AgentKind::Specialist);
    let elapsed = start.elapsed();
    MicroRun {
        specialist,
        generalist: eval(AgentKind::Generalist),
        random: eval(AgentKind::Random),
        elapsed,
    }
}

fn medians(report: &EvalReport) -> BTreeMap<String, f64> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &report.cells {
        by.entry(c.context.clone())
            .or_default()
            .push(c.nhgr.expect("micro contexts are scorable"));
    }
    by.into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let m = if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            };
            (k, m)
        })
        .collect()
}

fn fmt_medians(m: &BTreeMap<String, f64>) -> String {
    m.iter()
        .map(|(k, v)| format!("{k} {v:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn end_to_end_specialist(run: &MicroRun) -> Outcome {
    let m = medians(&run.specialist);
    let ok =
        m.len() == 5 && m.values().all(|&v| v >= 0.95) && run.elapsed < Duration::from_secs(900);
    check(
        ok,
        format!(
            "median NHGR per context: {} ({:.1?})",
            fmt_medians(&m),
            run.elapsed
        ),
    )
}

fn generalization_gap(run: &MicroRun) -> Outcome {
    let (s, g, r) = (
        medians(&run.specialist),
        medians(&run.generalist),
        medians(&run.random),
    );
    let ordered = s.keys().all(|k| s[k] >= g[k] && g[k] >= r[k]);
    let gap = |rep: &EvalReport| rep.aggregates.nhgr.as_ref().unwrap().optimality_gap;
    let (gs, gg, gr) = (gap(&run.specialist), gap(&run.generalist), gap(&run.random));
    check(
        ordered && gr > gg && gg > gs,
        format!("gaps random {gr:.3} > generalist {gg:.3} > specialist {gs:.3}; generalist medians {}; random medians {}", fmt_medians(&g), fmt_medians(&r)),
    )
}

fn collect_files(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(&p, out, root);
        } else {
            out.insert(
                p.strip_prefix(root).unwrap().to_path_buf(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let mut config = EvalConfig::from_json(&std::fs::read_to_string(root).unwrap()).unwrap();
    config.seeds = vec![0, 1, 2];
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, config.to_json()).unwrap();
    let out = tmp.path().join("out");
    let mut runs = Vec::new();
    for threads in ["1", "4", "1"] {
        let _ = std::fs::remove_dir_all(&out);
        let status = Command::new(env!("CARGO_BIN_EXE_morlgen"))
            .args(["--parallel", threads, "eval", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Err(format!(
                "eval exited with {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        let mut files = BTreeMap::new();
        collect_files(&out, &mut files, &out);
        runs.push(files);
    }
    let n = runs[0].len();
    check(
        runs.iter().all(|r| r == &runs[0]),
        format!("{n} files identical across 3 runs (threads 1, 4, 1)"),
    )
}

fn builtin_contexts() -> Outcome {
    let third = 1.0 / 3.0;
    let table: [(&str, [f64; 3]); 8] = [
        ("Snake", [0.20, 0.30, 0.50]),
        ("Room", [0.50, 0.30, 0.20]),
        ("Smiley", [0.40, 0.40, 0.20]),
        ("Maze", [0.05, 0.05, 0.90]),
        ("CheckerBoard", [0.30, 0.10, 0.60]),
        ("Corridor", [0.60, 0.10, 0.30]),
        ("Islands", [third, third, third]),
        ("Labyrinth", [0.50, 0.05, 0.45]),
    ];
    let loaded = builtin_eval_contexts();
    let mut problems = Vec::new();
    if loaded.len() != 8 {
        problems.push(format!("{} builtins", loaded.len()));
    }
    for (name, w) in table {
        match loaded.iter().find(|(n, _)| n == name) {
            None => problems.push(format!("{name} missing")),
            Some((_, ctx)) => {
                if ctx.weights.as_array() != w {
                    problems.push(format!("{name} weights {:?}", ctx.weights.as_array()));
                }
                if let Err(e) = ctx.layout.validate_standard() {
                    problems.push(format!("{name}: {e}"));
                }
                if !ctx.layout.all_goals_reachable() {
                    problems.push(format!("{name}: unreachable goal"));
                }
            }
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "8 contexts, weights exact, layouts valid and reachable".into()
        } else {
            problems.join("; ")
        },
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(d) => {
            println!("PASS  {name}: {d}");
            true
        }
        Err(d) => {
            println!("FAIL  {name}: {d}");
            false
        }
    }
}

fn main() {
    let mut results = vec![
        run("hypervolume correctness", hypervolume_correctness),
        run("scale invariance", scale_invariance),
        run("nhgr self-identity", nhgr_identity_and_monotonicity),
        run("eum analytic check", eum_analytic),
        run("oracle equivalence", oracle_equivalence),
        run("aggregation", aggregation),
    ];
    let micro = catch_unwind(micro_run);
    match &micro {
        Ok(m) => {
            results.push(run("end-to-end specialist", || end_to_end_specialist(m)));
            results.push(run("generalization-gap ordering", || generalization_gap(m)));
        }
        Err(_) => {
            results.push(run("end-to-end specialist", || {
                Err("micro-suite run panicked".into())
            }));
            results.push(run("generalization-gap ordering", || {
                Err("micro-suite run panicked".into())
            }));
        }
    }
    results.push(run("determinism", determinism));
    results.push(run("builtin contexts", builtin_contexts));
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
