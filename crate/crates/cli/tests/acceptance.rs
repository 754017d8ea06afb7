//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Run with `cargo test -p readinfo-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use readinfo::bayes_channel::estimate_weighted;
use readinfo::glyphs::{render, Condition, RenderSpec};
use readinfo::lexicon::{Bundled, Lexicon};
use readinfo::reading_sim::{
    channel_mi, make_symmetric_channel, predicted_k, simulate_read, verify_chain_rule, DiscreteChannel, SimMode,
};
use readinfo::seeds::{self, Stream};
use serde_json::Value;

struct Verdict {
    pass: bool,
    detail: String,
}

fn uniform(n: usize) -> Lexicon {
    Lexicon::from_counts((0..n).map(|i| (format!("w{i}"), 1.0)), 0.0, "xx", "acceptance").unwrap()
}

/// Small channels with random priors and strictly positive rows.
fn random_channels(count: usize, seed: u64) -> Vec<DiscreteChannel> {
    let mut rng = seeds::rng(seed, Stream::MonteCarlo);
    (0..count)
        .map(|c| {
            let n = rng.random_range(2..=5);
            let m = rng.random_range(2..=4);
            let lex = Lexicon::from_counts(
                (0..n).map(|i| (format!("c{c}w{i}"), rng.random_range(1.0..20.0))),
                0.0,
                "xx",
                "acceptance",
            )
            .unwrap();
            let rows = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    let mut row: Vec<f64> = raw.iter().map(|x| x / s).collect();
                    let rest: f64 = row[..m - 1].iter().sum();
                    row[m - 1] = 1.0 - rest;
                    row
                })
                .collect();
            DiscreteChannel::new(lex, (0..m).map(|j| format!("e{j}")).collect(), rows).unwrap()
        })
        .collect()
}

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["readinfo"];
    full.extend_from_slice(args);
    readinfo_cli::main_with_args(full)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_1() -> Verdict {
    // H(W|O) from the posterior route (estimate_weighted over every (w, o)
    // weighted by p(w) p(o|w)) against I(W;O) from the joint-table route.
    let mut worst_identity = 0.0f64;
    let mut min_mi = f64::INFINITY;
    let channels = random_channels(12, 101);
    for ch in &channels {
        let lex = ch.words();
        let probs = lex.probs();
        let mut items = Vec::new();
        for (wi, w) in lex.words().enumerate() {
            for e in 0..ch.outputs().len() {
                items.push((w.to_string(), e, probs[wi] * ch.row(wi)[e]));
            }
        }
        let est = estimate_weighted(lex, Condition::Full, &items, |&e| {
            Ok((0..lex.len()).map(|w| ch.row(w)[e]).collect())
        })
        .unwrap();
        let mi = channel_mi(ch);
        worst_identity = worst_identity.max((mi - (est.h_w - est.h_w_given_o)).abs());
        min_mi = min_mi.min(est.mi);
    }
    Verdict {
        pass: worst_identity < 1e-9 && min_mi >= -1e-9,
        detail: format!(
            "{} channels: max |I - (H(W) - H(W|O))| = {worst_identity:.2e}, min I = {min_mi:.4}",
            channels.len()
        ),
    }
}

fn criterion_2() -> Verdict {
    let channels = random_channels(6, 202);
    let mut worst = [0.0f64; 4];
    for ch in &channels {
        for k in 1..=3 {
            let r = verify_chain_rule(ch, k).unwrap();
            worst[k] = worst[k].max(r.residual);
        }
    }
    // the 4-word fidelity-0.7 symmetric channel, for reference
    let sym = make_symmetric_channel(&uniform(4), 0.7).unwrap();
    let r2 = verify_chain_rule(&sym, 2).unwrap();
    let pass = worst[1..].iter().all(|&r| r < 1e-9);
    Verdict {
        pass,
        detail: format!(
            "{} channels: max |I(W;E1..Ek) - k I(W;E)| = {:.2e} (k=1), {:.2e} (k=2), {:.2e} (k=3); \
             symmetric n=4 f=0.7 at k=2: joint {:.5} vs additive {:.5}. Samples that are i.i.d. given W \
             are dependent marginally, so joint information is sub-additive",
            channels.len(),
            worst[1],
            worst[2],
            worst[3],
            r2.joint_mi,
            r2.additive_mi
        ),
    }
}

fn criterion_3() -> Verdict {
    let mut ok = true;
    let mut rows = Vec::new();
    for n in [4usize, 8, 16] {
        let lex = uniform(n);
        let h = lex.entropy();
        let phi = 0.25 * h;
        for f in [0.4, 0.6, 0.8, 0.9] {
            let ch = make_symmetric_channel(&lex, f).unwrap();
            let pred = predicted_k(h, phi, channel_mi(&ch)).unwrap().k;
            let expected_k = simulate_read("w0", &ch, phi, SimMode::Expected, 0, 10_000).unwrap().k;
            let expected_ok = (expected_k as f64 - pred.ceil()).abs() <= 1.0;
            let runs = 2000;
            let total: usize = (0..runs)
                .map(|r| {
                    let w = lex.word(r % n);
                    simulate_read(w, &ch, phi, SimMode::Realized, seeds::item_seed(0xACCE, r as u64), 10_000)
                        .unwrap()
                        .k
                })
                .sum();
            let mean = total as f64 / runs as f64;
            let rel = (mean - pred).abs() / pred;
            let realized_ok = pred < 2.0 || rel <= 0.25;
            ok &= expected_ok && realized_ok;
            rows.push(format!(
                "n={n} f={f}: pred {pred:.2}, expected k {expected_k}{}, realized mean {mean:.2} ({:+.0}%){}",
                if expected_ok { "" } else { " [x]" },
                100.0 * (mean - pred) / pred,
                if realized_ok { "" } else { " [x]" }
            ));
        }
    }
    Verdict {
        pass: ok,
        detail: rows.join("; "),
    }
}

const EN_CONFIG: &str = r#"
lexicon = "bundled:en"
top_n = 300
conditions = ["Full", "UpperVisible", "LowerVisible"]

[likelihood]
mode = "Tempered"
tau = 0.05

[seeds]
render = 1
noise = 2
sim = 3
bootstrap = 4
"#;

fn criteria_4_and_5(root: &Path) -> (Verdict, Verdict) {
    let cfg = root.join("en.toml");
    fs::write(&cfg, EN_CONFIG).unwrap();
    let out = root.join("en-a");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(run_cli(&["--config", c, "--out", o, "render"]), 0);
    assert_eq!(run_cli(&["--config", c, "--out", o, "estimate"]), 0);
    let get = |cond: &str| json(&out.join(format!("estimate/{cond}.json")));
    let (full, upper, lower) = (get("Full"), get("UpperVisible"), get("LowerVisible"));
    let mi = |v: &Value| v["mi"].as_f64().unwrap();
    let acc = |v: &Value| v["accuracy"].as_f64().unwrap();
    let c4 = Verdict {
        pass: mi(&full) > mi(&upper) && mi(&full) > mi(&lower) && acc(&full) >= 0.95,
        detail: format!(
            "{} words, tempered tau 0.05: MI Full {:.3}, Upper {:.3}, Lower {:.3} nats; accuracy Full {:.3}, Upper {:.3}, Lower {:.3}",
            full["lexicon_size"], mi(&full), mi(&upper), mi(&lower), acc(&full), acc(&upper), acc(&lower)
        ),
    };

    // where the ink sits relative to the occlusion boundary
    let lex = Lexicon::bundled(Bundled::English).top_n(300);
    let (mut top, mut bottom) = (0usize, 0usize);
    for w in lex.words() {
        let img = render(w, &RenderSpec::default()).unwrap();
        top += img.ink_count(0..img.boundary());
        bottom += img.ink_count(img.boundary()..img.height());
    }
    let share = top as f64 / (top + bottom) as f64;
    let pass = mi(&upper) >= mi(&lower);
    let c5 = Verdict {
        pass,
        detail: format!(
            "MI Upper {:.3} vs Lower {:.3} nats; {:.0}% of ink lies above the boundary row{}",
            mi(&upper),
            mi(&lower),
            100.0 * share,
            if pass {
                String::new()
            } else {
                ". The bundled Latin faces put most of the x-height band below the canvas midline, \
                 so the lower half keeps more of each letter's body"
                    .to_string()
            }
        ),
    };
    (c4, c5)
}

const SLOPE_CONFIG: &str = r#"
lexicon = "bundled:en"
top_n = 32
conditions = ["Full"]

[seeds]
render = 1
noise = 2
sim = 3
bootstrap = 4

[simulator]
channel = "symmetric"
fidelity = 0.6
phi_fraction = 0.25
mode = "Realized"
runs = 2000
alpha_ms = 30.0
intercept_ms = 100.0
noise_sd_ms = 20.0

[fit]
predictors = ["ig", "log_freq", "length"]
smooth = false
"#;

pub const SLOPE_SEEDS: [u64; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

fn criterion_6(root: &Path) -> Verdict {
    let cfg = root.join("slope.toml");
    fs::write(&cfg, SLOPE_CONFIG).unwrap();
    let c = cfg.to_str().unwrap();
    let mut ratios = Vec::new();
    let mut all_sig = true;
    let mut rows = Vec::new();
    for s in SLOPE_SEEDS {
        let out = root.join(format!("slope-{s}"));
        let o = out.to_str().unwrap();
        let seed = s.to_string();
        assert_eq!(run_cli(&["--config", c, "--out", o, "--seed-override", &seed, "simulate"]), 0);
        assert_eq!(run_cli(&["--config", c, "--out", o, "--seed-override", &seed, "fit"]), 0);
        let sim = json(&out.join("simulate/summary.json"));
        let fit = json(&out.join("fit/report.json"));
        let beta = fit["slope_ms_per_nat"].as_f64().unwrap();
        let p = fit["slope_p"].as_f64().unwrap();
        let oracle = -30.0 / sim["mi"].as_f64().unwrap();
        all_sig &= beta < 0.0 && p < 0.05 && fit["n"].as_u64().unwrap() >= 2000;
        ratios.push(beta / oracle);
        rows.push(format!("{beta:.2}"));
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[3] + sorted[4]) / 2.0;
    let within = ratios.iter().filter(|r| (*r - 1.0).abs() <= 0.30).count();
    let oracle = -30.0 / channel_mi(&make_symmetric_channel(&Lexicon::bundled(Bundled::English).top_n(32), 0.6).unwrap());
    Verdict {
        pass: all_sig && within == ratios.len(),
        detail: format!(
            "oracle {oracle:.2} ms/nat; fitted over seeds {:?}: [{}]; fitted/oracle ratio median {median:.3} (range {:.3}..{:.3}), {within} of {} seeds individually within 30%; all negative with p < .05: {all_sig}. Realized IG per sample falls short of I(W;E), which steepens the fitted slope",
            SLOPE_SEEDS,
            rows.join(", "),
            sorted[0],
            sorted[sorted.len() - 1],
            ratios.len()
        ),
    }
}

fn shape_records(path: &Path) {
    let mut rng = seeds::rng(77, Stream::ReadingTimes);
    let mut text = String::from("word,condition,rt_ms,ig_nats,log_freq,length,surprisal_nats\n");
    for i in 0..600 {
        let ig: f64 = rng.random_range(0.0..4.0);
        let drop = if ig > 3.0 { 120.0 * (ig - 3.0) } else { 0.0 };
        let rt = 300.0 - drop + normal(&mut rng, 10.0);
        text.push_str(&format!("w{i},Full,{rt},{ig},-5.0,4,5.0\n"));
    }
    fs::write(path, text).unwrap();
}

/// Box-Muller draw, so the suite needs no extra distribution crate.
fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

const SHAPE_CONFIG: &str = r#"
lexicon = "bundled:en"
conditions = ["Full"]

[seeds]
render = 1
noise = 2
sim = 3
bootstrap = 4

[fit]
records = "shape_records.csv"
predictors = ["ig"]
bandwidth = 0.15
resamples = 200
"#;

fn criterion_7(root: &Path) -> Verdict {
    shape_records(&root.join("shape_records.csv"));
    let cfg = root.join("shape.toml");
    fs::write(&cfg, SHAPE_CONFIG).unwrap();
    let out = root.join("shape-a");
    assert_eq!(run_cli(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "fit"]), 0);
    let fit = json(&out.join("fit/report.json"));
    let s = &fit["smooth"];
    let share = s["upper_half_decline_share"].as_f64().unwrap();
    let slope = &s["upper_half_mean_slope"];
    let hi = slope["ci_high"].as_f64().unwrap();
    Verdict {
        pass: share > 0.7 && hi < 0.0,
        detail: format!(
            "upper-half share of decline {:.1}%; upper-half mean slope {:.1} ms/nat, 95% band [{:.1}, {hi:.1}]",
            100.0 * share,
            slope["estimate"].as_f64().unwrap(),
            slope["ci_low"].as_f64().unwrap()
        ),
    }
}

fn criterion_8(root: &Path) -> Verdict {
    let mut mismatched = Vec::new();
    let mut files = 0;
    let en = root.join("en.toml");
    let slope = root.join("slope.toml");
    let shape = root.join("shape.toml");
    let scenarios: Vec<(&str, &Path, Vec<Vec<&str>>)> = vec![
        ("en", en.as_path(), vec![vec!["render"], vec!["estimate"], vec!["report"]]),
        ("slope-1", slope.as_path(), vec![vec!["--seed-override", "1", "simulate"], vec!["--seed-override", "1", "fit"]]),
        ("shape", shape.as_path(), vec![vec!["fit"]]),
    ];
    for (name, cfg, steps) in scenarios {
        let trees: Vec<_> = ["replay-a", "replay-b"]
            .iter()
            .map(|tag| {
                let out = root.join(format!("{name}-{tag}"));
                for step in &steps {
                    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
                    args.extend(step.iter().copied());
                    assert_eq!(run_cli(&args), 0);
                }
                tree(&out)
            })
            .collect();
        files += trees[0].len();
        if trees[0] != trees[1] {
            mismatched.push(name);
        }
    }
    Verdict {
        pass: mismatched.is_empty(),
        detail: format!("{files} files across 3 scenarios compared byte-for-byte; mismatched scenarios: {mismatched:?}"),
    }
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(u8, &str, Duration, Duration, Verdict)> = Vec::new();
    let mut timed = |id: u8, name: &'static str, limit: u64, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        results.push((id, name, t.elapsed(), Duration::from_secs(limit), v));
    };
    timed(1, "exact information identities", 1, &mut criterion_1);
    timed(2, "chain rule for repeated samples", 5, &mut criterion_2);
    timed(3, "sample-count prediction", 30, &mut criterion_3);
    let t45 = Instant::now();
    let (c4, c5) = criteria_4_and_5(root.path());
    let d45 = t45.elapsed();
    results.push((4, "condition ordering", d45, Duration::from_secs(300), c4));
    results.push((5, "upper/lower asymmetry", d45, Duration::from_secs(300), c5));
    let mut timed = |id: u8, name: &'static str, limit: u64, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        results.push((id, name, t.elapsed(), Duration::from_secs(limit), v));
    };
    timed(6, "slope recovery", 60, &mut || criterion_6(root.path()));
    timed(7, "nonlinear shape", 60, &mut || criterion_7(root.path()));
    timed(8, "deterministic replay", 600, &mut || criterion_8(root.path()));

    println!();
    let mut failed = 0;
    for (id, name, took, limit, v) in &results {
        let in_time = took <= limit;
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{} [{id}] {name} ({:.2}s, limit {}s{}): {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" },
            v.detail
        );
    }
    println!("\n{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
