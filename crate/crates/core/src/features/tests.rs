use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};

use super::*;
use crate::corpus::{build_vocabs, parse_embeddings, parse_grammeme_lexicon, BatchInputs, Sentence, Token, VocabConfig, Vocabs};
use crate::nn::{grad_check_store, Ctx, Graph, Mode, ParamStore, Rng, Var};

fn vocabs(words: &[&str]) -> Vocabs {
    let s = Sentence::new(words.iter().map(|w| Token::new(*w, "X")).collect());
    build_vocabs(&[s], &VocabConfig::default())
}

fn small_cfg(kind: CharEncoderKind) -> FeatureConfig {
    FeatureConfig {
        char_encoder: kind,
        use_grammemes: false,
        char_embed_dim: 3,
        max_word_len: 4,
        char_ff_hidden: 5,
        char_ff_out: 4,
        char_bilstm_hidden: 3,
        grammeme_embed_dim: 3,
        word_embed_dim: 3,
        projection_dim: 4,
        ..FeatureConfig::default()
    }
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element matters.
fn probe_loss<F: crate::nn::Scalar>(g: &mut Graph<F>, y: Var, seed: u64) -> Var {
    let mut rng = Rng::seed_from_u64(seed);
    let n = g.value(y).len();
    let r = (0..n).map(|_| F::from_f64_lossy(rng.gen_range(-1.0..1.0))).collect();
    let m = g.mul_const(y, r).unwrap();
    g.sum(m)
}

/// Moves zero-initialized biases off the relu kink, which tiny layers can
/// otherwise sit on exactly when every input unit is off.
fn shift_biases(store: &mut ParamStore<f64>) {
    for p in store.iter_mut() {
        if p.name.ends_with(".bias") {
            p.value.data_mut().iter_mut().for_each(|x| *x += 0.1);
        }
    }
}

#[test]
fn pad_front_rule() {
    let v = vocabs(&["cat"]);
    let ids = pad_chars("cat", &v.chars, 11);
    let mut want = vec![0; 8];
    want.extend(["c", "a", "t"].iter().map(|c| v.chars.get(c).unwrap()));
    assert_eq!(ids, want);
}

#[test]
fn eleven_chars_have_no_pads() {
    let v = vocabs(&["abcdefghijk"]);
    let ids = pad_chars("abcdefghijk", &v.chars, 11);
    assert!(ids.iter().all(|&i| i != 0));
    assert_eq!(ids, char_ids("abcdefghijk", &v.chars));
}

#[test]
fn long_words_keep_suffix() {
    let v = vocabs(&["xyzwabcdefghijk", "qabcdefghijk"]);
    let a = pad_chars("xyzwabcdefghijk", &v.chars, 11);
    assert_eq!(a, char_ids("abcdefghijk", &v.chars));
    assert_eq!(a, pad_chars("qabcdefghijk", &v.chars, 11));
}

#[test]
fn unknown_chars_map_to_unk() {
    let v = vocabs(&["ab"]);
    assert_eq!(pad_chars("aé", &v.chars, 3), vec![0, v.chars.get("a").unwrap(), crate::corpus::Vocab::UNK]);
}

proptest! {
    #[test]
    fn pad_chars_total(form in "\\PC{1,20}") {
        let v = vocabs(&["abc"]);
        let ids = pad_chars(&form, &v.chars, 11);
        prop_assert_eq!(ids.len(), 11);
        let first_real = ids.iter().position(|&i| i != 0).unwrap_or(11);
        prop_assert!(ids[first_real..].iter().all(|&i| i != 0));
    }

    #[test]
    fn pad_chars_idempotent_on_full_window(form in "[a-c]{11}") {
        let v = vocabs(&["abc"]);
        let ids = pad_chars(&form, &v.chars, 11);
        prop_assert_eq!(&ids, &char_ids(&form, &v.chars));
        prop_assert_eq!(ids.clone(), pad_chars(&form, &v.chars, 11));
    }
}

fn char_ff_store(seed: u64) -> (ParamStore<f64>, CharFF, Vocabs) {
    let v = vocabs(&["abcd", "xbcd", "ab"]);
    let mut store = ParamStore::new();
    let mut rng = Rng::seed_from_u64(seed);
    let ff = CharFF::new(&mut store, "char_encoder", v.chars.len(), &small_cfg(CharEncoderKind::FeedForward), &mut rng).unwrap();
    (store, ff, v)
}

#[test]
fn char_ff_default_dimensions() {
    let v = vocabs(&["cat"]);
    let mut store = ParamStore::<f32>::new();
    let mut rng = Rng::seed_from_u64(0);
    let cfg = FeatureConfig::default();
    let ff = CharFF::new(&mut store, "c", v.chars.len(), &cfg, &mut rng).unwrap();
    assert_eq!(store.get(ff.hidden.weight).value.shape(), &[500, 264]);
    assert_eq!(store.get(ff.output.weight).value.shape(), &[200, 500]);
    let mut ctx = Ctx::eval(&store);
    let y = ff.encode(&mut ctx, &pad_chars("cat", &v.chars, 11)).unwrap();
    assert_eq!(ctx.graph.value(y).shape(), &[1, 200]);
}

#[test]
fn char_ff_eval_is_deterministic_and_suffix_equivalent() {
    let (store, ff, v) = char_ff_store(1);
    let run = |form: &str| {
        let mut ctx = Ctx::eval(&store);
        let y = ff.encode(&mut ctx, &pad_chars(form, &v.chars, 4)).unwrap();
        ctx.graph.value(y).data().to_vec()
    };
    assert_eq!(run("abcd"), run("abcd"));
    assert_eq!(run("aabcd"), run("xbcd".replace('x', "a").as_str()));
    assert_eq!(run("xxabcd"), run("abcd"));
}

#[test]
fn char_ff_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (mut store, ff, v) = char_ff_store(seed);
        shift_biases(&mut store);
        let ids: Vec<u32> = ["abcd", "ab", "xbcd"].iter().flat_map(|w| pad_chars(w, &v.chars, 4)).collect();
        for mode in [Mode::Eval, Mode::Train] {
            let err = grad_check_store(&mut store, mode, seed, 1e-5, 40, |ctx| {
                let y = ff.encode(ctx, &ids)?;
                Ok(probe_loss(&mut ctx.graph, y, seed))
            })
            .unwrap();
            assert!(err < 1e-4, "seed {seed} {mode:?}: {err}");
        }
    }
}

fn char_bilstm_store(seed: u64) -> (ParamStore<f64>, CharBiLstm, Vocabs) {
    let v = vocabs(&["abcd", "xy"]);
    let mut store = ParamStore::new();
    let mut rng = Rng::seed_from_u64(seed);
    let e = CharBiLstm::new(&mut store, "char_encoder", v.chars.len(), &small_cfg(CharEncoderKind::BiLstm), &mut rng).unwrap();
    (store, e, v)
}

#[test]
fn char_bilstm_shape_and_single_char() {
    let v = vocabs(&["a", "abcdefghijklmnop"]);
    let mut store = ParamStore::<f32>::new();
    let mut rng = Rng::seed_from_u64(0);
    let e = CharBiLstm::new(&mut store, "c", v.chars.len(), &FeatureConfig::default(), &mut rng).unwrap();
    for w in ["a", "abcdefghijklmnop"] {
        let mut ctx = Ctx::eval(&store);
        let y = e.encode(&mut ctx, &[char_ids(w, &v.chars)]).unwrap();
        assert_eq!(ctx.graph.value(y).shape(), &[1, 300]);
    }
    // One char: both directions see exactly one step of the same input.
    let mut ctx = Ctx::eval(&store);
    let table = ctx.param(e.embeddings);
    let x = ctx.graph.gather(table, vec![Some(v.chars.get("a").unwrap() as usize)]).unwrap();
    let (_, _, concat) = e.lstm.forward_sequence(&mut ctx, x).unwrap();
    let y = e.encode(&mut ctx, &[char_ids("a", &v.chars)]).unwrap();
    assert_eq!(ctx.graph.value(concat).data(), ctx.graph.value(y).data());
    let mut ctx = Ctx::eval(&store);
    assert!(e.encode(&mut ctx, &[vec![]]).is_err());
}

#[test]
fn char_bilstm_batch_matches_single_words() {
    let (store, e, v) = char_bilstm_store(3);
    let words: Vec<Vec<u32>> = ["abcd", "xy", "a"].iter().map(|w| char_ids(w, &v.chars)).collect();
    let mut ctx = Ctx::eval(&store);
    let all = e.encode(&mut ctx, &words).unwrap();
    let all = ctx.graph.value(all).clone();
    for (i, w) in words.iter().enumerate() {
        let mut ctx = Ctx::eval(&store);
        let one = e.encode(&mut ctx, std::slice::from_ref(w)).unwrap();
        let one = ctx.graph.value(one).data().to_vec();
        for (a, b) in all.row(i).iter().zip(&one) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn char_bilstm_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (mut store, e, v) = char_bilstm_store(seed);
        let words: Vec<Vec<u32>> = ["abcd", "xy"].iter().map(|w| char_ids(w, &v.chars)).collect();
        let err = grad_check_store(&mut store, Mode::Eval, seed, 1e-5, 30, |ctx| {
            let y = e.encode(ctx, &words)?;
            Ok(probe_loss(&mut ctx.graph, y, seed))
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

const FIXTURE_LEXICON: &str = "cut\tVERB\t8.75e-5\n\
cut\tNOUN\t2.84e-5\n\
cats\tNOUN|Number=Plur\t3\n\
runs\tVERB|Number=Sing|Person=3\t2\n\
runs\tNOUN|Number=Plur\t1\n\
zero\tX\t0\n";

#[test]
fn cut_noun_probability() {
    let lex = parse_grammeme_lexicon(FIXTURE_LEXICON).unwrap();
    let p = grammeme_probabilities("cut", &lex);
    let noun = p[lex.slot("POS", "NOUN").unwrap()];
    assert!((noun - 2.84 / (2.84 + 8.75)).abs() < 1e-12);
    assert!((noun - 0.2451).abs() < 1e-4);
}

#[test]
fn absent_and_zero_total_forms_are_zero() {
    let lex = parse_grammeme_lexicon(FIXTURE_LEXICON).unwrap();
    assert!(grammeme_probabilities("dog", &lex).iter().all(|&x| x == 0.0));
    assert!(grammeme_probabilities("zero", &lex).iter().all(|&x| x == 0.0));
}

#[test]
fn single_analysis_is_one_hot_per_category() {
    let lex = parse_grammeme_lexicon(FIXTURE_LEXICON).unwrap();
    let p = grammeme_probabilities("cats", &lex);
    let on = [lex.slot("POS", "NOUN"), lex.slot("Number", "Plur"), lex.slot("Person", "_")];
    for (i, &x) in p.iter().enumerate() {
        let want = if on.contains(&Some(i)) { 1.0 } else { 0.0 };
        assert_eq!(x, want, "slot {i}");
    }
}

#[test]
fn per_category_simplex() {
    let lex = parse_grammeme_lexicon(FIXTURE_LEXICON).unwrap();
    for form in lex.forms() {
        let p = grammeme_probabilities(form, &lex);
        let nonzero = p.iter().any(|&x| x > 0.0);
        for (cat, &off) in lex.categories().iter().zip(lex.offsets()) {
            let s: f64 = p[off..off + cat.values.len()].iter().sum();
            assert!(p[off..off + cat.values.len()].iter().all(|&x| (0.0..=1.0).contains(&x)));
            if nonzero {
                assert!((s - 1.0).abs() < 1e-9, "{form} {}: {s}", cat.name);
            } else {
                assert_eq!(s, 0.0);
            }
        }
    }
}

proptest! {
    #[test]
    fn simplex_on_random_lexicons(rows in proptest::collection::vec((0usize..4, 0usize..3, 0usize..3, 0.0f64..5.0), 1..20)) {
        let text: String = rows
            .iter()
            .map(|&(w, pos, num, f)| {
                let feats = ["", "|Number=Sing", "|Number=Plur"][num];
                format!("w{w}\t{}{feats}\t{f}\n", ["NOUN", "VERB", "ADJ"][pos])
            })
            .collect();
        let lex = parse_grammeme_lexicon(&text).unwrap();
        for form in lex.forms() {
            let p = grammeme_probabilities(form, &lex);
            let any = p.iter().any(|&x| x > 0.0);
            for (cat, &off) in lex.categories().iter().zip(lex.offsets()) {
                let s: f64 = p[off..off + cat.values.len()].iter().sum();
                let ok = if any { (s - 1.0).abs() < 1e-9 } else { s == 0.0 };
                prop_assert!(ok);
            }
        }
    }
}

#[test]
fn grammeme_embed_contracts() {
    let mut rng = Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let ge = GrammemeEmbed::new(&mut store, "g", 5, 4, &mut rng).unwrap();
    let mut ctx = Ctx::eval(&store);
    let y = ge.forward(&mut ctx, &[0.0; 5]).unwrap();
    assert!(ctx.graph.value(y).data().iter().all(|&v| v == 0.0));
    let probs: Vec<f32> = (0..15).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y = ge.forward(&mut ctx, &probs).unwrap();
    assert!(ctx.graph.value(y).data().iter().all(|&v| v >= 0.0));
    assert!(ge.forward(&mut ctx, &[0.0; 7]).is_err());
}

#[test]
fn grammeme_embed_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let ge = GrammemeEmbed::new(&mut store, "g", 5, 4, &mut rng).unwrap();
        shift_biases(&mut store);
        let probs: Vec<f32> = (0..15).map(|_| rng.gen_range(0.0..1.0)).collect();
        let err = grad_check_store(&mut store, Mode::Eval, seed, 1e-5, 100, |ctx| {
            let y = ge.forward(ctx, &probs)?;
            Ok(probe_loss(&mut ctx.graph, y, seed))
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn word_embedding_rows() {
    let v = vocabs(&["the", "cat"]);
    let table = parse_embeddings("the 0.5 0.25\ncat 1 2\n").unwrap();
    let mut store = ParamStore::<f32>::new();
    let mut rng = Rng::seed_from_u64(0);
    let we = WordEmbedding::new(&mut store, "w", &v.words, Some(&table), 7, true, &mut rng).unwrap();
    assert_eq!(we.dim, 2);
    let mut ctx = Ctx::eval(&store);
    let cat = v.words.get("cat").unwrap();
    let y = we.forward(&mut ctx, &[cat, crate::corpus::Vocab::UNK]).unwrap();
    assert_eq!(ctx.graph.value(y).row(0), &[1.0, 2.0]);
    assert_eq!(ctx.graph.value(y).row(1), store.get(we.table).value.row(1));
    assert!(we.forward(&mut ctx, &[99]).is_err());
}

#[test]
fn word_embedding_updates_are_sparse() {
    let v = vocabs(&["the", "cat", "dog"]);
    let mut store = ParamStore::<f64>::new();
    let mut rng = Rng::seed_from_u64(0);
    let we = WordEmbedding::new(&mut store, "w", &v.words, None, 3, true, &mut rng).unwrap();
    let before = store.get(we.table).value.clone();
    let cat = v.words.get("cat").unwrap();
    let dog = v.words.get("dog").unwrap() as usize;
    let mut ctx = Ctx::eval(&store);
    let y = we.forward(&mut ctx, &[cat]).unwrap();
    let l = ctx.graph.sum(y);
    ctx.graph.backward(l).unwrap();
    ctx.graph.accumulate_param_grads(&mut store);
    let mut adam = crate::nn::Adam::new(Default::default());
    adam.step(&mut store, 1.0);
    let after = &store.get(we.table).value;
    assert_ne!(after.row(cat as usize), before.row(cat as usize));
    assert_eq!(after.row(dog), before.row(dog));
}

fn extractor(cfg: &FeatureConfig, seed: u64) -> (ParamStore<f64>, FeatureExtractor, Vocabs, crate::corpus::GrammemeLexicon) {
    let v = vocabs(&["cut", "cats", "runs", "dog"]);
    let lex = parse_grammeme_lexicon(FIXTURE_LEXICON).unwrap();
    let mut store = ParamStore::new();
    let mut rng = Rng::seed_from_u64(seed);
    let fx = FeatureExtractor::new(&mut store, cfg, &v, Some(&lex), None, &mut rng).unwrap();
    (store, fx, v, lex)
}

fn token_feats(v: &Vocabs, lex: &crate::corpus::GrammemeLexicon, max_len: usize) -> TokenFeatures {
    let inputs = BatchInputs { vocabs: v, lexicon: Some(lex), lowercase: false, max_word_len: max_len };
    inputs.token_features(["cut", "cats", "runs", "dog"])
}

#[test]
fn projection_dim_is_fixed() {
    let all = [
        (CharEncoderKind::FeedForward, false, false),
        (CharEncoderKind::None, true, false),
        (CharEncoderKind::None, false, true),
        (CharEncoderKind::BiLstm, true, true),
        (CharEncoderKind::FeedForward, true, true),
    ];
    for (kind, g, w) in all {
        let cfg = FeatureConfig { use_grammemes: g, use_word_embedding: w, ..small_cfg(kind) };
        let (store, fx, v, lex) = extractor(&cfg, 0);
        let mut ctx = Ctx::eval(&store);
        let y = fx.forward(&mut ctx, &token_feats(&v, &lex, 4)).unwrap();
        assert_eq!(ctx.graph.value(y).shape(), &[4, 4]);
    }
}

#[test]
fn single_feature_is_projected_alone() {
    let cfg = FeatureConfig { use_grammemes: true, ..small_cfg(CharEncoderKind::None) };
    let (store, fx, v, lex) = extractor(&cfg, 2);
    let feats = token_feats(&v, &lex, 4);
    let mut ctx = Ctx::eval(&store);
    let y = fx.forward(&mut ctx, &feats).unwrap();
    let g = fx.grammemes.unwrap().forward(&mut ctx, &feats.grammemes).unwrap();
    let want = fx.projection.forward(&mut ctx, g).unwrap();
    assert_eq!(ctx.graph.value(y), ctx.graph.value(want));
}

#[test]
fn invalid_configs_rejected() {
    let cfg = FeatureConfig { use_grammemes: false, use_word_embedding: false, ..small_cfg(CharEncoderKind::None) };
    assert!(cfg.validate().is_err());
    let v = vocabs(&["a"]);
    let mut store = ParamStore::<f32>::new();
    let cfg = FeatureConfig { use_grammemes: true, ..small_cfg(CharEncoderKind::None) };
    let empty = parse_grammeme_lexicon("").unwrap();
    assert!(FeatureExtractor::new(&mut store, &cfg, &v, Some(&empty), None, &mut Rng::seed_from_u64(0)).is_err());
}

#[test]
fn gradient_reaches_every_enabled_feature() {
    for kind in [CharEncoderKind::FeedForward, CharEncoderKind::BiLstm] {
        let cfg = FeatureConfig { use_grammemes: true, use_word_embedding: true, ..small_cfg(kind) };
        let (store, fx, v, lex) = extractor(&cfg, 5);
        let mut rng = Rng::seed_from_u64(9);
        let mut ctx = Ctx::train(&store, &mut rng);
        let y = fx.forward(&mut ctx, &token_feats(&v, &lex, 4)).unwrap();
        let l = probe_loss(&mut ctx.graph, y, 1);
        ctx.graph.backward(l).unwrap();
        let grads: Vec<_> = ctx.graph.param_grads().map(|(id, g)| (id, g.iter().any(|&x| x != 0.0))).collect();
        for (id, p) in store.iter() {
            if p.name.ends_with(".bias") {
                continue;
            }
            let nonzero = grads.iter().any(|&(i, nz)| i == id && nz);
            assert!(nonzero, "{kind:?}: no gradient for {}", p.name);
        }
    }
}

#[test]
fn composed_features_gradients_match_finite_differences() {
    for seed in 0..10 {
        let cfg = FeatureConfig { use_grammemes: true, use_word_embedding: true, ..small_cfg(CharEncoderKind::FeedForward) };
        let (mut store, fx, v, lex) = extractor(&cfg, seed);
        shift_biases(&mut store);
        let feats = token_feats(&v, &lex, 4);
        let err = grad_check_store(&mut store, Mode::Train, seed, 1e-5, 20, |ctx| {
            let y = fx.forward(ctx, &feats)?;
            Ok(probe_loss(&mut ctx.graph, y, seed))
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn bind_recovers_extractor() {
    let cfg = FeatureConfig { use_grammemes: true, use_word_embedding: true, ..small_cfg(CharEncoderKind::BiLstm) };
    let (store, fx, v, lex) = extractor(&cfg, 4);
    let bound = FeatureExtractor::bind(&store, &cfg).unwrap();
    let feats = token_feats(&v, &lex, 4);
    let mut ctx = Ctx::eval(&store);
    let a = fx.forward(&mut ctx, &feats).unwrap();
    let b = bound.forward(&mut ctx, &feats).unwrap();
    assert_eq!(ctx.graph.value(a), ctx.graph.value(b));
}

#[test]
fn encoder_kind_json_names() {
    let kind = |s: &str| serde_json::from_str::<CharEncoderKind>(s).unwrap();
    assert_eq!(kind("\"feed_forward\""), CharEncoderKind::FeedForward);
    assert_eq!(kind("\"ff\""), CharEncoderKind::FeedForward);
    assert_eq!(kind("\"bilstm\""), CharEncoderKind::BiLstm);
    assert_eq!(kind("\"bi_lstm\""), CharEncoderKind::BiLstm);
    assert_eq!(serde_json::to_string(&CharEncoderKind::None).unwrap(), "\"none\"");
}
