use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rayon::prelude::*;
use readinfo::bayes_channel::{build_channel, estimate_testset_only, render_observation, InfoEstimate};
use readinfo::effect_model::{fit_linear, smooth_fit, Coefficient, Interval, Predictor, SmoothOptions};
use readinfo::glyphs::{Condition, GlyphBitmap};
use readinfo::lexicon::Lexicon;
use readinfo::reading_sim::{
    channel_mi, generate_reading_times, make_symmetric_channel, predicted_k, simulate_read, verify_chain_rule,
    ChainRuleReport, DiscreteChannel, SimMode, SimulationTrace, ENUMERATION_BUDGET,
};
use readinfo::seeds::{self, Stream};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_predictors, ChannelKind, ExperimentConfig, Loaded, WordDraw};
use crate::error::CliError;
use crate::output::{csv_hash, read_json, write_atomic, write_csv, write_json};
use crate::records::read_records;

/// Resolved inputs shared by every command.
pub struct Context {
    pub loaded: Option<Loaded>,
    pub out: PathBuf,
}

impl Context {
    fn loaded(&self) -> Result<&Loaded, CliError> {
        self.loaded
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config <path>".into()))
    }

    fn config(&self) -> Result<&ExperimentConfig, CliError> {
        Ok(&self.loaded()?.config)
    }

    fn hash(&self) -> Result<&str, CliError> {
        Ok(&self.loaded()?.sha256)
    }

    /// Copies the config file verbatim into the output directory.
    fn stamp(&self) -> Result<(), CliError> {
        let l = self.loaded()?;
        write_atomic(&self.out.join("config.toml"), l.raw.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub word: String,
    pub condition: Condition,
    pub variant: usize,
    pub file: String,
    pub seed: u64,
}

pub const MANIFEST: &str = "render/manifest.csv";

pub fn render(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.config()?;
    let lex = cfg.load_lexicon()?;
    ctx.stamp()?;
    let (base, stream, range) = if cfg.estimate.test_uses_reference_seeds {
        (cfg.render_spec(cfg.seeds.render), Stream::ReferenceJitter, cfg.render.reference_jitter)
    } else {
        (cfg.render_spec(cfg.seeds.noise), Stream::TestJitter, cfg.render.test_jitter)
    };
    let mut jobs = Vec::new();
    for &c in &cfg.conditions {
        for (i, w) in lex.words().enumerate() {
            for v in 0..cfg.render.test_variants {
                jobs.push((c, i, w, v));
            }
        }
    }
    let rendered: Vec<(ManifestRow, Vec<u8>)> = jobs
        .par_iter()
        .map(|&(c, i, w, v)| {
            let img = render_observation(w, &base, i, v, range, stream, c)
                .map_err(|e| CliError::Data(format!("rendering {w:?} ({c}): {e}")))?;
            let row = ManifestRow {
                word: w.to_string(),
                condition: c,
                variant: v,
                file: format!("{c}/{i:05}-{v}.glb"),
                seed: img.render_seed(),
            };
            Ok((row, img.to_cache_bytes()))
        })
        .collect::<Result<_, CliError>>()?;
    let dir = ctx.out.join("render");
    rendered
        .par_iter()
        .try_for_each(|(row, bytes)| write_atomic(&dir.join(&row.file), bytes))?;
    let rows: Vec<ManifestRow> = rendered.into_iter().map(|(r, _)| r).collect();
    write_csv(&ctx.out.join(MANIFEST), ctx.hash()?, &rows)?;
    Ok(format!("rendered {} bitmaps into {}", rows.len(), dir.display()))
}

fn read_manifest(ctx: &Context) -> Result<Vec<ManifestRow>, CliError> {
    let path = ctx.out.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::Data(format!("missing cache {}; run `readinfo render` first", path.display()))
    })?;
    let hash = ctx.hash()?;
    match csv_hash(&text) {
        Some(h) if h == hash => {}
        Some(h) => {
            return Err(CliError::Data(format!(
                "render cache was produced by config {h}, current config is {hash}; rerun `readinfo render`"
            )))
        }
        None => return Err(CliError::Data(format!("{}: missing config_sha256 line", path.display()))),
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Serialize)]
struct EstimateRow<'a> {
    word: &'a str,
    condition: Condition,
    pointwise_h_nats: f64,
    ig_nats: f64,
    top1: &'a str,
    correct: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub condition: Condition,
    pub protocol: String,
    pub lexicon_source: String,
    pub lexicon_size: usize,
    pub n_items: usize,
    pub h_w: f64,
    pub h_w_given_o: f64,
    pub mi: f64,
    pub accuracy: f64,
    pub mean_ig: f64,
    pub config: ExperimentConfig,
}

pub fn estimate(ctx: &Context, testset_only: bool) -> Result<String, CliError> {
    let cfg = ctx.config()?;
    let lex = cfg.load_lexicon()?;
    let manifest = read_manifest(ctx)?;
    ctx.stamp()?;
    let testset_only = testset_only || cfg.estimate.testset_only;
    let mut lines = Vec::new();
    for &c in &cfg.conditions {
        let rows: Vec<&ManifestRow> = manifest.iter().filter(|r| r.condition == c).collect();
        if rows.is_empty() {
            return Err(CliError::Data(format!("missing cache for condition {c}; rerun `readinfo render`")));
        }
        let test: Vec<(String, GlyphBitmap)> = rows
            .par_iter()
            .map(|r| {
                let p = ctx.out.join("render").join(&r.file);
                let bytes = fs::read(&p).map_err(|e| CliError::Data(format!("missing cache {}: {e}", p.display())))?;
                let img = GlyphBitmap::from_cache_bytes(&bytes, &r.word, r.seed)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                Ok((r.word.clone(), img))
            })
            .collect::<Result<_, CliError>>()?;
        let est = if testset_only {
            estimate_testset_only(&lex, c, &test, cfg.likelihood.map(), cfg.ssim, cfg.render.padding)?
        } else {
            build_channel(
                &lex,
                &cfg.render_spec(cfg.seeds.render),
                c,
                cfg.render.reference_variants,
                cfg.render.reference_jitter,
            )?
            .with_likelihood_map(cfg.likelihood.map())?
            .with_ssim_params(cfg.ssim)?
            .estimate(&test)?
        };
        write_estimate(ctx, cfg, &lex, c, testset_only, &est)?;
        lines.push(format!("{c}: MI {:.4} nats, accuracy {:.3}", est.mi, est.accuracy));
    }
    Ok(lines.join("\n"))
}

fn write_estimate(
    ctx: &Context,
    cfg: &ExperimentConfig,
    lex: &Lexicon,
    c: Condition,
    testset_only: bool,
    est: &InfoEstimate,
) -> Result<(), CliError> {
    let hash = ctx.hash()?;
    let rows: Vec<EstimateRow> = est
        .per_item
        .iter()
        .map(|i| EstimateRow {
            word: &i.word,
            condition: i.condition,
            pointwise_h_nats: i.pointwise_h,
            ig_nats: i.ig,
            top1: &i.top1,
            correct: i.correct,
        })
        .collect();
    let dir = ctx.out.join("estimate");
    write_csv(&dir.join(format!("{c}.csv")), hash, &rows)?;
    let report = EstimateReport {
        config_sha256: hash.to_string(),
        seed_override: ctx.loaded()?.seed_override,
        condition: c,
        protocol: if testset_only { "testset_only" } else { "references" }.into(),
        lexicon_source: lex.source_id().to_string(),
        lexicon_size: lex.len(),
        n_items: est.per_item.len(),
        h_w: est.h_w,
        h_w_given_o: est.h_w_given_o,
        mi: est.mi,
        accuracy: est.accuracy,
        mean_ig: est.mean_ig(),
        config: cfg.clone(),
    };
    write_json(&dir.join(format!("{c}.json")), &report)
}

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    word: &'a str,
    mode: &'static str,
    phi_nats: f64,
    k: usize,
    truncated: bool,
    final_entropy_nats: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub channel: ChannelKind,
    pub fidelity: Option<f64>,
    pub lexicon_size: usize,
    pub h_w: f64,
    pub phi: f64,
    pub mi: f64,
    pub mode: SimMode,
    pub runs: usize,
    pub predicted_k: f64,
    pub threshold_pre_satisfied: bool,
    pub mean_k: f64,
    pub k_residual: f64,
    pub k_relative_error: Option<f64>,
    pub truncated_runs: usize,
    pub alpha_ms: f64,
    pub intercept_ms: f64,
    pub noise_sd_ms: f64,
    /// −alpha / I(W;E), ms per nat.
    pub generative_slope_ms_per_nat: f64,
    pub chain_rule: Vec<ChainRuleReport>,
}

fn simulation_channel(ctx: &Context, cfg: &ExperimentConfig, lex: &Lexicon) -> Result<DiscreteChannel, CliError> {
    let sim = cfg.simulator.as_ref().expect("checked by caller");
    match sim.channel {
        ChannelKind::Symmetric => Ok(make_symmetric_channel(lex, sim.fidelity.expect("validated"))?),
        ChannelKind::FromEstimate => {
            let c = sim.estimate_condition.expect("validated");
            let path = ctx.out.join("estimate").join(format!("{c}.csv"));
            let text = fs::read_to_string(&path).map_err(|_| {
                CliError::Data(format!("missing estimate {}; run `readinfo estimate` first", path.display()))
            })?;
            let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
            let mut pairs = Vec::new();
            for r in rdr.records() {
                let r = r?;
                pairs.push((r[0].to_string(), r[4].to_string()));
            }
            Ok(DiscreteChannel::from_confusions(
                lex.clone(),
                pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())),
                sim.smoothing,
            )?)
        }
    }
}

pub fn simulate(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.config()?;
    let sim = cfg
        .simulator
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [simulator] block".into()))?;
    let mut lex = cfg.load_lexicon()?;
    if let Some(n) = sim.top_n {
        lex = lex.top_n(n);
    }
    let ch = simulation_channel(ctx, cfg, &lex)?;
    ctx.stamp()?;
    let h_w = lex.entropy();
    let phi = sim.phi(h_w);
    let mi = channel_mi(&ch);
    let pred = predicted_k(h_w, phi, mi)?;

    let words: Vec<&str> = match sim.words {
        WordDraw::Prior => {
            let draw = WeightedIndex::new(lex.probs()).map_err(|e| CliError::Data(format!("lexicon prior: {e}")))?;
            let mut rng = seeds::rng(cfg.seeds.sim, Stream::WordDraw);
            (0..sim.runs).map(|_| lex.word(rng.sample(&draw))).collect()
        }
        WordDraw::Cycle => (0..sim.runs).map(|r| lex.word(r % lex.len())).collect(),
    };
    let traces: Vec<SimulationTrace> = match sim.mode {
        // expected-mode traces do not depend on the true word
        SimMode::Expected => {
            let t = simulate_read(words[0], &ch, phi, SimMode::Expected, cfg.seeds.sim, sim.max_k)?;
            words
                .iter()
                .map(|w| SimulationTrace {
                    true_word: w.to_string(),
                    ..t.clone()
                })
                .collect()
        }
        SimMode::Realized => words
            .par_iter()
            .enumerate()
            .map(|(r, w)| {
                simulate_read(w, &ch, phi, SimMode::Realized, seeds::item_seed(cfg.seeds.sim, r as u64), sim.max_k)
            })
            .collect::<Result<_, _>>()?,
    };
    let records = generate_reading_times(&traces, &lex, sim.condition, sim.link(), cfg.seeds.sim)?;

    let hash = ctx.hash()?;
    let dir = ctx.out.join("simulate");
    let rows: Vec<TraceRow> = traces
        .iter()
        .map(|t| TraceRow {
            word: &t.true_word,
            mode: t.mode.as_str(),
            phi_nats: phi,
            k: t.k,
            truncated: t.truncated,
            final_entropy_nats: t.final_entropy(h_w),
        })
        .collect();
    write_csv(&dir.join("traces.csv"), hash, &rows)?;
    write_csv(&dir.join("records.csv"), hash, &records)?;

    let mean_k = traces.iter().map(|t| t.k as f64).sum::<f64>() / traces.len() as f64;
    let m = ch.outputs().len() as u64;
    let chain_rule = if m.pow(3) * lex.len() as u64 <= 10 * ENUMERATION_BUDGET {
        (1..=3).map(|k| verify_chain_rule(&ch, k)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let summary = SimulationSummary {
        config_sha256: hash.to_string(),
        seed_override: ctx.loaded()?.seed_override,
        channel: sim.channel,
        fidelity: sim.fidelity,
        lexicon_size: lex.len(),
        h_w,
        phi,
        mi,
        mode: sim.mode,
        runs: sim.runs,
        predicted_k: pred.k,
        threshold_pre_satisfied: pred.threshold_pre_satisfied,
        mean_k,
        k_residual: mean_k - pred.k,
        k_relative_error: (pred.k > 0.0).then(|| (mean_k - pred.k).abs() / pred.k),
        truncated_runs: traces.iter().filter(|t| t.truncated).count(),
        alpha_ms: sim.alpha_ms,
        intercept_ms: sim.intercept_ms,
        noise_sd_ms: sim.noise_sd_ms,
        generative_slope_ms_per_nat: -sim.alpha_ms / mi,
        chain_rule,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!(
        "{} runs: mean k {:.3}, predicted {:.3}, I(W;E) {:.4} nats",
        sim.runs, mean_k, pred.k, mi
    ))
}

#[derive(Debug, Default)]
pub struct FitArgs {
    pub records: Option<PathBuf>,
    pub predictors: Vec<String>,
    pub no_smooth: bool,
    pub bandwidth: Option<f64>,
    pub resamples: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SmoothRow {
    ig: f64,
    fitted: f64,
    ci_low: f64,
    ci_high: f64,
    slope: f64,
    slope_ci_low: f64,
    slope_ci_high: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SmoothSummary {
    pub bandwidth: f64,
    pub resamples: usize,
    pub failed_resamples: usize,
    pub grid_points: usize,
    pub controls: Vec<String>,
    /// Share of the total decline falling in the upper half of the ig range.
    pub upper_half_decline_share: f64,
    pub upper_half_mean_slope: Interval,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub records_file: String,
    pub records_sha256: String,
    pub n: usize,
    pub r_squared: f64,
    pub residual_df: usize,
    pub contrast_scheme: String,
    pub subject_centered: bool,
    pub predictors: Vec<String>,
    pub coefficients: indexmap::IndexMap<String, Coefficient>,
    pub slope_ms_per_nat: Option<f64>,
    pub slope_p: Option<f64>,
    pub smooth: Option<SmoothSummary>,
}

pub fn fit(ctx: &Context, args: &FitArgs) -> Result<String, CliError> {
    let cfg = ctx.config()?;
    let fc = cfg.fit_config();
    let path = args
        .records
        .clone()
        .or(fc.records.clone())
        .unwrap_or_else(|| ctx.out.join("simulate/records.csv"));
    let names = if args.predictors.is_empty() { fc.predictors.clone() } else { args.predictors.clone() };
    let predictors = parse_predictors(&names)?;
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let records = read_records(&path)?;
    ctx.stamp()?;

    let lin = fit_linear(&records, &predictors)?;
    let dir = ctx.out.join("fit");
    let smooth = if fc.smooth && !args.no_smooth {
        let opts = SmoothOptions {
            bandwidth: args.bandwidth.unwrap_or(fc.bandwidth),
            resamples: args.resamples.unwrap_or(fc.resamples),
            seed: cfg.seeds.bootstrap,
            grid_points: fc.grid_points,
            controls: predictors.iter().copied().filter(|&p| p != Predictor::Ig).collect(),
        };
        let s = smooth_fit(&records, &opts)?;
        let rows: Vec<SmoothRow> = s
            .grid
            .iter()
            .map(|g| SmoothRow {
                ig: g.ig,
                fitted: g.fitted,
                ci_low: g.ci_low,
                ci_high: g.ci_high,
                slope: g.slope,
                slope_ci_low: g.slope_ci_low,
                slope_ci_high: g.slope_ci_high,
            })
            .collect();
        write_csv(&dir.join("smooth.csv"), ctx.hash()?, &rows)?;
        let mid = s.grid.len() / 2;
        Some(SmoothSummary {
            bandwidth: s.bandwidth,
            resamples: s.resamples,
            failed_resamples: s.failed_resamples,
            grid_points: s.grid.len(),
            controls: s.controls.iter().map(|p| p.as_str().to_string()).collect(),
            upper_half_decline_share: s.decline_share_from(mid),
            upper_half_mean_slope: s.mean_slope(mid, s.grid.len() - 1),
        })
    } else {
        None
    };
    let ig = lin.get("ig").copied();
    let report = FitReport {
        config_sha256: ctx.hash()?.to_string(),
        seed_override: ctx.loaded()?.seed_override,
        records_file: display_relative(&path, &ctx.out),
        records_sha256: hex::encode(Sha256::digest(&bytes)),
        n: lin.n,
        r_squared: lin.r_squared,
        residual_df: lin.residual_df,
        contrast_scheme: lin.contrast_scheme.clone(),
        subject_centered: lin.subject_centered,
        predictors: predictors.iter().map(|p| p.as_str().to_string()).collect(),
        coefficients: lin.coefficients.clone(),
        slope_ms_per_nat: ig.map(|c| c.beta),
        slope_p: ig.map(|c| c.p),
        smooth,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(match ig {
        Some(c) => format!("n = {}: beta_ig {:.3} ms/nat (p = {:.3e}), R² {:.3}", lin.n, c.beta, c.p, lin.r_squared),
        None => format!("n = {}: R² {:.3}", lin.n, lin.r_squared),
    })
}

fn display_relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

#[derive(Debug, Serialize)]
struct ConditionRow {
    condition: Condition,
    mi: f64,
    accuracy: f64,
    h_w: f64,
    h_w_given_o: f64,
    n_items: usize,
}

#[derive(Debug, Serialize)]
struct SimulationRow {
    predicted_k: f64,
    mean_k: f64,
    k_residual: f64,
    k_relative_error: Option<f64>,
    mi: f64,
    generative_slope_ms_per_nat: f64,
}

#[derive(Debug, Serialize)]
struct FitRow {
    slope_ms_per_nat: Option<f64>,
    slope_p: Option<f64>,
    r_squared: f64,
    n: usize,
}

#[derive(Debug, Serialize)]
struct ReportSummary {
    config_sha256: Option<String>,
    input_config_sha256: Vec<String>,
    conditions: Vec<ConditionRow>,
    simulation: Option<SimulationRow>,
    fit: Option<FitRow>,
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_value(read_json(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn report(ctx: &Context) -> Result<String, CliError> {
    let out = &ctx.out;
    let mut hashes = BTreeSet::new();
    let mut conditions = Vec::new();
    for c in Condition::ALL {
        let p = out.join("estimate").join(format!("{c}.json"));
        if p.is_file() {
            let r: EstimateReport = parse(&p)?;
            hashes.insert(r.config_sha256);
            conditions.push(ConditionRow {
                condition: c,
                mi: r.mi,
                accuracy: r.accuracy,
                h_w: r.h_w,
                h_w_given_o: r.h_w_given_o,
                n_items: r.n_items,
            });
        }
    }
    let sim_path = out.join("simulate/summary.json");
    let simulation = if sim_path.is_file() {
        let s: SimulationSummary = parse(&sim_path)?;
        hashes.insert(s.config_sha256);
        Some(SimulationRow {
            predicted_k: s.predicted_k,
            mean_k: s.mean_k,
            k_residual: s.k_residual,
            k_relative_error: s.k_relative_error,
            mi: s.mi,
            generative_slope_ms_per_nat: s.generative_slope_ms_per_nat,
        })
    } else {
        None
    };
    let fit_path = out.join("fit/report.json");
    let fit = if fit_path.is_file() {
        let f: FitReport = parse(&fit_path)?;
        hashes.insert(f.config_sha256);
        Some(FitRow {
            slope_ms_per_nat: f.slope_ms_per_nat,
            slope_p: f.slope_p,
            r_squared: f.r_squared,
            n: f.n,
        })
    } else {
        None
    };
    if conditions.is_empty() && simulation.is_none() && fit.is_none() {
        return Err(CliError::Data(format!(
            "empty input: no estimate, simulate or fit outputs under {}",
            out.display()
        )));
    }
    let config_sha256 = match &ctx.loaded {
        Some(l) => Some(l.sha256.clone()),
        None if hashes.len() == 1 => hashes.iter().next().cloned(),
        None => None,
    };
    let n_conditions = conditions.len();
    let summary = ReportSummary {
        config_sha256,
        input_config_sha256: hashes.into_iter().collect(),
        conditions,
        simulation,
        fit,
    };
    write_json(&out.join("report/summary.json"), &summary)?;
    Ok(format!("summary over {n_conditions} condition estimate(s) written"))
}
