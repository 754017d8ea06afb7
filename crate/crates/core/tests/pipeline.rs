//! Library-level runs across module boundaries.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use readinfo::bayes_channel::{build_channel, render_observation, JitterRange, LikelihoodMap, LikelihoodMode};
use readinfo::effect_model::{fit_linear, Predictor};
use readinfo::lexicon::{Bundled, Lexicon};
use readinfo::reading_sim::{
    channel_mi, expected_posterior_entropy, generate_reading_times, make_symmetric_channel, simulate_read,
    ExpectationMethod, SimMode, TimeLink,
};
use readinfo::seeds::{self, Stream};
use readinfo::{Condition, RenderSpec};

fn info_for(lex: &Lexicon, condition: Condition) -> readinfo::InfoEstimate {
    let refs = RenderSpec { seed: 1, ..RenderSpec::default() };
    let tests = RenderSpec { seed: 2, ..RenderSpec::default() };
    let none = JitterRange { dx: 0, dy: 0 };
    let model = build_channel(lex, &refs, condition, 2, none)
        .unwrap()
        .with_likelihood_map(LikelihoodMap { mode: LikelihoodMode::Tempered, epsilon: 1e-6, tau: 0.05 })
        .unwrap();
    let items: Vec<_> = lex
        .words()
        .enumerate()
        .map(|(i, w)| (w.to_string(), render_observation(w, &tests, i, 0, none, Stream::TestJitter, condition).unwrap()))
        .collect();
    model.estimate(&items).unwrap()
}

#[test]
fn glyph_channel_ranks_full_above_occluded() {
    let lex = Lexicon::bundled(Bundled::English).top_n(40);
    let full = info_for(&lex, Condition::Full);
    let upper = info_for(&lex, Condition::UpperVisible);
    for e in [&full, &upper] {
        assert!((e.h_w - lex.entropy()).abs() < 1e-12);
        assert!(e.mi >= -1e-12 && e.mi <= e.h_w + 1e-12);
        assert!((e.mi - (e.h_w - e.h_w_given_o)).abs() < 1e-12);
    }
    assert!(full.mi > upper.mi, "{} vs {}", full.mi, upper.mi);
    assert!(full.accuracy > 0.9, "{}", full.accuracy);
}

#[test]
fn expected_mode_stops_at_first_crossing() {
    let lex = Lexicon::bundled(Bundled::English).top_n(6);
    let ch = make_symmetric_channel(&lex, 0.6).unwrap();
    let phi = 0.3 * lex.entropy();
    let trace = simulate_read(lex.word(0), &ch, phi, SimMode::Expected, 0, 100).unwrap();
    let first = (1..)
        .find(|&k| expected_posterior_entropy(&ch, k, ExpectationMethod::Exact).unwrap() <= phi)
        .unwrap();
    assert_eq!(trace.k, first);
    assert!(!trace.truncated);
}

#[test]
fn simulated_reading_times_fall_with_information_gain() {
    let lex = Lexicon::bundled(Bundled::English).top_n(24);
    let ch = make_symmetric_channel(&lex, 0.6).unwrap();
    let phi = 0.25 * lex.entropy();
    let draw = WeightedIndex::new(lex.probs()).unwrap();
    let mut rng = seeds::rng(3, Stream::WordDraw);
    let traces: Vec<_> = (0..1500)
        .map(|r| simulate_read(lex.word(rng.sample(&draw)), &ch, phi, SimMode::Realized, seeds::item_seed(5, r as u64), 1000).unwrap())
        .collect();
    let records = generate_reading_times(&traces, &lex, Condition::Full, TimeLink::default(), 8).unwrap();
    assert_eq!(records.len(), 1500);
    let fit = fit_linear(&records, &[Predictor::Ig, Predictor::LogFreq, Predictor::Length]).unwrap();
    let ig = &fit.coefficients["ig"];
    assert!(ig.beta < 0.0 && ig.p < 0.05, "{ig:?}");
    // per-nat slope is at least as steep as the one-sample oracle
    assert!(ig.beta < -0.9 * 30.0 / channel_mi(&ch), "{}", ig.beta);
}
