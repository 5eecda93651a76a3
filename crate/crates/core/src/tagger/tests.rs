use rand::{Rng as _, SeedableRng};

use super::*;
use crate::corpus::{batch_sentences, build_vocabs, parse_grammeme_lexicon, BatchInputs, Sentence, Token};
use crate::features::CharEncoderKind;
use crate::nn::{grad_check_store, log_sum_exp, Adam, Graph, Mode, Tensor};

const LEXICON: &str = "the\tDET\t5\ncat\tNOUN|Number=Sing\t3\ncats\tNOUN|Number=Plur\t2\nruns\tVERB\t2\nruns\tNOUN|Number=Plur\t1\n";

fn corpus() -> Vec<Sentence> {
    let s = |pairs: &[(&str, &str)]| Sentence::new(pairs.iter().map(|(f, t)| Token::new(*f, *t)).collect());
    vec![
        s(&[("the", "DET"), ("cat", "NOUN|Number=Sing"), ("runs", "VERB")]),
        s(&[("cats", "NOUN|Number=Plur"), ("run", "VERB")]),
        s(&[("the", "DET"), ("cats", "NOUN|Number=Plur"), ("run", "VERB"), ("fast", "ADV")]),
        s(&[("run", "VERB")]),
    ]
}

fn tiny_config() -> TaggerConfig {
    TaggerConfig {
        features: FeatureConfig {
            char_encoder: CharEncoderKind::FeedForward,
            use_grammemes: true,
            char_embed_dim: 3,
            max_word_len: 4,
            char_ff_hidden: 6,
            char_ff_out: 5,
            grammeme_embed_dim: 3,
            projection_dim: 6,
            ..FeatureConfig::default()
        },
        hidden: 4,
        layers: 2,
        pre_output_dim: 5,
        ..TaggerConfig::default()
    }
}

struct Fixture<F: Scalar> {
    store: ParamStore<F>,
    tagger: Tagger,
    lexicon: GrammemeLexicon,
    corpus: Vec<Sentence>,
}

impl<F: Scalar> Fixture<F> {
    fn new(config: &TaggerConfig, seed: u64) -> Self {
        let corpus = corpus();
        let lexicon = parse_grammeme_lexicon(LEXICON).unwrap();
        let vocabs = build_vocabs(&corpus, &config.vocab);
        let mut store = ParamStore::new();
        let res = Resources { lexicon: Some(&lexicon), ..Default::default() };
        let tagger = Tagger::new(&mut store, config, vocabs, res, &mut Rng::seed_from_u64(seed)).unwrap();
        Fixture { store, tagger, lexicon, corpus }
    }

    fn inputs(&self) -> BatchInputs<'_> {
        BatchInputs {
            vocabs: &self.tagger.vocabs,
            lexicon: Some(&self.lexicon),
            lowercase: false,
            max_word_len: self.tagger.config.features.max_word_len,
        }
    }

    fn batch(&self) -> Batch {
        batch_sentences(&self.corpus, &self.inputs(), 8, None).remove(0)
    }

    fn batch_of(&self, sentences: &[Sentence]) -> Batch {
        batch_sentences(sentences, &self.inputs(), 8, None).remove(0)
    }
}

fn shift_biases(store: &mut ParamStore<f64>) {
    for p in store.iter_mut() {
        if p.name.ends_with(".bias") && !p.name.starts_with("encoder") {
            p.value.data_mut().iter_mut().for_each(|x| *x += 0.1);
        }
    }
}

fn random_scores(k: usize, steps: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    (r(steps * k), r(k * k), r(k), r(k))
}

fn all_paths(k: usize, steps: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..steps {
        out = out.into_iter().flat_map(|p| (0..k).map(move |y| [p.clone(), vec![y]].concat())).collect();
    }
    out
}

#[test]
fn crf_single_step_is_softmax() {
    let em = [0.3f64, -1.2];
    let z = [0.0f64; 4];
    let s = CrfScores { transitions: &z, start: &z[..2], end: &z[..2], tags: 2 };
    for y in 0..2 {
        let nll = s.log_partition(&em) - s.path_score(&em, &[y]);
        let ce = log_sum_exp(&em) - em[y];
        assert!((nll - ce).abs() < 1e-10);
    }
}

#[test]
fn crf_matches_brute_force() {
    let mut rng = Rng::seed_from_u64(0);
    let mut instances = 0;
    for seed in 0..24 {
        for k in 1..=4 {
            for steps in 1..=5 {
                let (em, tr, st, en) = random_scores(k, steps, &mut rng);
                let s = CrfScores { transitions: &tr, start: &st, end: &en, tags: k };
                let paths = all_paths(k, steps);
                let scores: Vec<f64> = paths.iter().map(|p| s.path_score(&em, p)).collect();
                let brute_z = log_sum_exp(&scores);
                assert!((s.log_partition(&em) - brute_z).abs() < 1e-8, "seed {seed} k {k} t {steps}");
                let best = crate::tagger::argmax(&scores);
                let (path, score) = s.viterbi(&em);
                assert_eq!(path, paths[best]);
                assert!((score - scores[best]).abs() < 1e-9);
                assert!((score - s.path_score(&em, &path)).abs() < 1e-9);
                instances += 1;
            }
        }
    }
    assert!(instances >= 20);
}

#[test]
fn viterbi_ties_prefer_lower_ids() {
    let z = [0.0; 9];
    let s = CrfScores { transitions: &z, start: &z[..3], end: &z[..3], tags: 3 };
    assert_eq!(s.viterbi(&[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).0, vec![0, 1]);
}

#[test]
fn zero_transitions_decode_per_token() {
    let mut rng = Rng::seed_from_u64(3);
    let z = [0.0; 16];
    let s = CrfScores { transitions: &z, start: &z[..4], end: &z[..4], tags: 4 };
    for _ in 0..20 {
        let em: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want: Vec<usize> = em.chunks(4).map(argmax).collect();
        assert_eq!(s.viterbi(&em).0, want);
    }
}

#[test]
fn crf_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::seed_from_u64(seed);
        let k = 3;
        let lengths = [3, 1, 2];
        let mut store = ParamStore::<f64>::new();
        let crf = Crf::new(&mut store, k).unwrap();
        for id in [crf.transitions, crf.start, crf.end] {
            store.get_mut(id).value.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        let em_data = (0..6 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let em = store.add("em", Tensor::new(vec![6, k], em_data), crate::nn::ParamKind::Weight).unwrap();
        let gold: Vec<usize> = (0..6).map(|_| rng.gen_range(0..k)).collect();
        let err = grad_check_store(&mut store, Mode::Eval, seed, 1e-5, 100, |ctx| {
            let e = ctx.param(em);
            crf.nll(ctx, e, &lengths, &gold, 6.0)
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn crf_rejects_bad_input() {
    let mut store = ParamStore::<f64>::new();
    let crf = Crf::new(&mut store, 2).unwrap();
    let mut ctx = Ctx::eval(&store);
    let e = ctx.graph.constant(Tensor::new(vec![1, 2], vec![f64::INFINITY, 0.0]));
    assert!(crf.nll(&mut ctx, e, &[1], &[0], 1.0).is_err());
    let e = ctx.graph.constant(Tensor::zeros(vec![1, 2]));
    assert!(crf.nll(&mut ctx, e, &[1], &[2], 1.0).is_err());
}

#[test]
fn encoder_shapes_and_default_width() {
    let fx = Fixture::<f32>::new(&TaggerConfig::default(), 0);
    let b = fx.batch();
    let mut ctx = Ctx::eval(&fx.store);
    let enc = fx.tagger.encode(&mut ctx, &b).unwrap();
    assert_eq!(ctx.graph.value(enc.concat).shape(), &[b.token_count(), 256]);
    let logits = fx.tagger.tag_logits(&mut ctx, enc.concat).unwrap();
    assert_eq!(ctx.graph.value(logits).cols(), fx.tagger.num_tags());
    assert_eq!(fx.tagger.num_tags(), 5);
}

fn eval_states(fx: &Fixture<f64>, b: &Batch) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>, Option<Tensor<f64>>, Option<Tensor<f64>>) {
    let mut ctx = Ctx::eval(&fx.store);
    let enc = fx.tagger.encode(&mut ctx, b).unwrap();
    let logits = fx.tagger.tag_logits(&mut ctx, enc.concat).unwrap();
    let lm = |ctx: &mut Ctx<'_, f64>, heads: Option<LmHeads>| {
        heads.map(|h| {
            let f = h.fwd.forward(ctx, enc.fwd).unwrap();
            ctx.graph.value(f).clone()
        })
    };
    let pos = lm(&mut ctx, fx.tagger.pos_lm);
    let word = lm(&mut ctx, fx.tagger.word_lm);
    let g = &ctx.graph;
    (g.value(enc.fwd).clone(), g.value(enc.bwd).clone(), g.value(logits).clone(), pos, word)
}

fn with_word(s: &Sentence, t: usize, form: &str) -> Sentence {
    let mut s = s.clone();
    s.tokens[t].form = form.into();
    s
}

#[test]
fn direction_causality_is_bit_exact() {
    for seed in 0..10 {
        let fx = Fixture::<f64>::new(&tiny_config(), seed);
        let base = fx.corpus[2].clone();
        let (f0, b0, _, p0, w0) = eval_states(&fx, &fx.batch_of(std::slice::from_ref(&base)));
        for t in 0..base.len() {
            let other = with_word(&base, t, "zebra");
            let (f1, b1, _, p1, w1) = eval_states(&fx, &fx.batch_of(&[other]));
            for s in 0..base.len() {
                if s < t {
                    assert_eq!(f0.row(s), f1.row(s), "fwd {s} after change at {t}");
                    assert_eq!(p0.as_ref().unwrap().row(s), p1.as_ref().unwrap().row(s));
                    assert_eq!(w0.as_ref().unwrap().row(s), w1.as_ref().unwrap().row(s));
                }
                if s > t {
                    assert_eq!(b0.row(s), b1.row(s), "bwd {s} after change at {t}");
                }
            }
            assert_ne!(f0.row(t), f1.row(t));
        }
    }
}

#[test]
fn main_head_sees_whole_sentence() {
    for seed in 0..5 {
        let fx = Fixture::<f64>::new(&tiny_config(), seed);
        let base = fx.corpus[2].clone();
        let (_, _, l0, _, _) = eval_states(&fx, &fx.batch_of(std::slice::from_ref(&base)));
        for t in 0..base.len() {
            let (_, _, l1, _, _) = eval_states(&fx, &fx.batch_of(&[with_word(&base, t, "zebra")]));
            for s in 0..base.len() {
                assert_ne!(l0.row(s), l1.row(s), "logits at {s} ignore position {t}");
            }
        }
    }
}

#[test]
fn eval_is_deterministic_and_batch_independent() {
    let fx = Fixture::<f64>::new(&tiny_config(), 1);
    let b = fx.batch();
    assert_eq!(fx.tagger.decode(&fx.store, &b).unwrap(), fx.tagger.decode(&fx.store, &b).unwrap());
    let (f, _, l, _, _) = eval_states(&fx, &b);
    let (f2, _, l2, _, _) = eval_states(&fx, &b);
    assert_eq!((f, l), (f2, l2));
}

#[test]
fn batch_norm_statistics_skip_padding() {
    let fx = Fixture::<f64>::new(&tiny_config(), 2);
    let b = fx.batch_of(&fx.corpus[..3]);
    assert!(b.mask().iter().flatten().any(|&m| !m));
    let mut rng = Rng::seed_from_u64(0);
    let mut ctx = Ctx::train(&fx.store, &mut rng);
    let enc = fx.tagger.encode(&mut ctx, &b).unwrap();
    let pre = fx.tagger.pre_output.forward(&mut ctx, enc.concat).unwrap();
    let pre = ctx.graph.value(pre).clone();
    fx.tagger.tag_logits(&mut ctx, enc.concat).unwrap();
    let stats = &ctx.bn_updates.last().unwrap().1;
    assert_eq!(stats.count, b.token_count());
    for j in 0..pre.cols() {
        let col: Vec<f64> = (0..pre.rows()).map(|r| pre.row(r)[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!((stats.mean[j] - mean).abs() < 1e-12);
        assert!((stats.var[j] - var).abs() < 1e-12);
    }
}

#[test]
fn single_token_batch_trains_with_running_stats() {
    let fx = Fixture::<f64>::new(&tiny_config(), 2);
    let b = fx.batch_of(&fx.corpus[3..4]);
    let mut rng = Rng::seed_from_u64(0);
    let mut ctx = Ctx::train(&fx.store, &mut rng);
    let l = fx.tagger.losses(&mut ctx, &b).unwrap();
    assert!(ctx.graph.value(l.total).item().is_finite());
    assert!(ctx.bn_updates.is_empty());
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut cfg = tiny_config();
        cfg.crf = seed % 2 == 1;
        cfg.lambda_pos = 0.3;
        cfg.lambda_word = 0.2;
        let mut fx = Fixture::<f64>::new(&cfg, seed);
        shift_biases(&mut fx.store);
        // Batch statistics cancel the bias ahead of batch norm, so its true
        // gradient is zero and the difference quotient is pure rounding.
        fx.store.set_frozen_prefix("tag_head.pre_output.bias", true);
        let b = fx.batch();
        let tagger = fx.tagger.clone();
        // Near-constant batch-norm columns on a ten-token batch give large
        // third derivatives, so the step that balances truncation against
        // rounding varies by seed. A wrong gradient fails at every step.
        let err = [1e-5, 1e-6, 1e-7]
            .iter()
            .map(|&h| grad_check_store(&mut fx.store, Mode::Train, seed, h, 6, |ctx| Ok(tagger.losses(ctx, &b)?.total)).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn tag_head_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::seed_from_u64(seed);
        let fx = Fixture::<f64>::new(&tiny_config(), seed);
        let tagger = fx.tagger.clone();
        let mut store = fx.store;
        shift_biases(&mut store);
        let x = store
            .add("x", Tensor::new(vec![5, 8], (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()), crate::nn::ParamKind::Weight)
            .unwrap();
        store.set_frozen_prefix("features", true);
        store.set_frozen_prefix("encoder", true);
        store.set_frozen_prefix("tag_head.pre_output.bias", true);
        let gold: Vec<Option<usize>> = (0..5).map(|_| Some(rng.gen_range(0..tagger.num_tags()))).collect();
        let err = grad_check_store(&mut store, Mode::Train, seed, 1e-5, 50, |ctx| {
            let xv = ctx.param(x);
            let logits = tagger.tag_logits(ctx, xv)?;
            ctx.graph.softmax_cross_entropy(logits, gold.clone(), 5.0)
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn softmax_tag_loss_edges() {
    let mut g = Graph::<f64>::new();
    let sharp = g.constant(Tensor::from_rows(&[vec![1000.0, 0.0, 0.0], vec![0.0, 0.0, 1000.0]]));
    let l = g.softmax_cross_entropy(sharp, vec![Some(0), Some(2)], 2.0).unwrap();
    assert!(g.value(l).item() < 1e-12);
    let flat = g.constant(Tensor::zeros(vec![2, 3]));
    let l = g.softmax_cross_entropy(flat, vec![Some(0), Some(1)], 2.0).unwrap();
    assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-12);
    let l = g.softmax_cross_entropy(flat, vec![None, None], 2.0).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
}

#[test]
fn neighbour_targets_at_edges() {
    let (next, prev) = Tagger::neighbour_targets(&[1, 3], &[7, 4, 5, 6], 0, 1);
    assert_eq!(next, vec![Some(1), Some(5), Some(6), Some(1)]);
    assert_eq!(prev, vec![Some(0), Some(0), Some(4), Some(5)]);
}

#[test]
fn lm_losses_with_uniform_heads() {
    let mut fx = Fixture::<f64>::new(&tiny_config(), 4);
    let pos = fx.tagger.pos_lm.unwrap();
    let word = fx.tagger.word_lm.unwrap();
    for d in [pos.fwd, pos.bwd, word.fwd, word.bwd] {
        fx.store.get_mut(d.weight).value.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let b = fx.batch();
    let mut ctx = Ctx::eval(&fx.store);
    let enc = fx.tagger.encode(&mut ctx, &b).unwrap();
    let lp = fx.tagger.pos_lm_loss(&mut ctx, &enc, &b).unwrap();
    let lw = fx.tagger.word_lm_loss(&mut ctx, &enc, &b).unwrap();
    assert!((ctx.graph.value(lp).item() - (fx.tagger.pos_lm_classes() as f64).ln()).abs() < 1e-12);
    assert!((ctx.graph.value(lw).item() - (fx.tagger.word_lm_classes() as f64).ln()).abs() < 1e-12);
    assert_eq!(fx.tagger.pos_lm_classes(), fx.tagger.num_tags() + 2);
}

#[test]
fn capped_word_lm_uses_unk() {
    let mut cfg = tiny_config();
    cfg.vocab.max_word_vocab = 2;
    let fx = Fixture::<f64>::new(&cfg, 5);
    let b = fx.batch();
    assert!(b.features.word_ids.contains(&Vocab::UNK));
    let mut ctx = Ctx::eval(&fx.store);
    let enc = fx.tagger.encode(&mut ctx, &b).unwrap();
    let l = fx.tagger.word_lm_loss(&mut ctx, &enc, &b).unwrap();
    assert!(ctx.graph.value(l).item().is_finite());
}

#[test]
fn zero_weights_leave_main_loss_untouched() {
    let run = |lp: f64, lw: f64| {
        let mut cfg = tiny_config();
        cfg.lambda_pos = lp;
        cfg.lambda_word = lw;
        let fx = Fixture::<f64>::new(&cfg, 6);
        let b = fx.batch();
        let mut rng = Rng::seed_from_u64(1);
        let mut ctx = Ctx::train(&fx.store, &mut rng);
        let l = fx.tagger.losses(&mut ctx, &b).unwrap();
        (ctx.graph.value(l.total).item(), ctx.graph.value(l.main).item(), l.pos.map(|p| ctx.graph.value(p).item()))
    };
    let (total, main, pos) = run(0.0, 0.0);
    assert_eq!(total, main);
    assert!(pos.is_none());
    let (with_pos, main_p, pos) = run(1.0, 0.0);
    assert_eq!(main_p, main);
    assert_eq!(with_pos, main + pos.unwrap());
}

#[test]
fn total_loss_weights() {
    let mut store = ParamStore::<f64>::new();
    let mut ctx = Ctx::eval(&store);
    let a = ctx.graph.constant(Tensor::scalar(1.5));
    let b = ctx.graph.constant(Tensor::scalar(2.0));
    assert_eq!(total_loss(&mut ctx, a, [(Some(b), 0.0)]).unwrap(), a);
    let t = total_loss(&mut ctx, a, [(Some(b), 1.0), (None, 3.0)]).unwrap();
    assert_eq!(ctx.graph.value(t).item(), 3.5);
    assert!(total_loss(&mut ctx, a, [(Some(b), -0.1)]).is_err());
    drop(ctx);
    let x = store.add("x", Tensor::vector(vec![0.3, -0.7]), crate::nn::ParamKind::Weight).unwrap();
    let err = grad_check_store(&mut store, Mode::Eval, 0, 1e-5, 10, |ctx| {
        let v = ctx.param(x);
        let sq = ctx.graph.mul(v, v)?;
        let main = ctx.graph.sum(sq);
        let t = ctx.graph.tanh(v);
        let aux = ctx.graph.sum(t);
        total_loss(ctx, main, [(Some(aux), 0.25)])
    })
    .unwrap();
    assert!(err < 1e-6);
    let mut cfg = tiny_config();
    cfg.lambda_pos = -1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn losses_are_finite_and_nonnegative() {
    for seed in 0..5 {
        let mut cfg = tiny_config();
        cfg.crf = true;
        let fx = Fixture::<f32>::new(&cfg, seed);
        let b = fx.batch();
        let mut rng = Rng::seed_from_u64(seed);
        let mut ctx = Ctx::train(&fx.store, &mut rng);
        let l = fx.tagger.losses(&mut ctx, &b).unwrap();
        for v in [Some(l.main), l.pos, l.word, Some(l.total)].into_iter().flatten() {
            let x = ctx.graph.value(v).item();
            assert!(x.is_finite() && x >= 0.0);
        }
    }
}

#[test]
fn crf_with_zero_transitions_decodes_like_softmax() {
    let soft = Fixture::<f64>::new(&tiny_config(), 7);
    let mut cfg = tiny_config();
    cfg.crf = true;
    let crf = Fixture::<f64>::new(&cfg, 7);
    let b = soft.batch();
    assert_eq!(soft.tagger.decode(&soft.store, &b).unwrap(), crf.tagger.decode(&crf.store, &b).unwrap());
}

fn overfit(cfg: &TaggerConfig) -> (Vec<Vec<String>>, Vec<String>) {
    let mut fx = Fixture::<f32>::new(cfg, 11);
    let sentence = fx.corpus[2].clone();
    let b = fx.batch_of(std::slice::from_ref(&sentence));
    let mut adam = Adam::new(crate::nn::AdamConfig { lr: 0.01, ..Default::default() });
    let mut rng = Rng::seed_from_u64(0);
    for _ in 0..150 {
        let mut ctx = Ctx::train(&fx.store, &mut rng);
        let l = fx.tagger.losses(&mut ctx, &b).unwrap();
        ctx.graph.backward(l.total).unwrap();
        let Ctx { graph, bn_updates, .. } = ctx;
        graph.accumulate_param_grads(&mut fx.store);
        Ctx::apply_bn_updates(bn_updates, &mut fx.store);
        adam.step(&mut fx.store, 1.0);
    }
    (fx.tagger.decode(&fx.store, &b).unwrap(), sentence.tags())
}

#[test]
fn overfits_one_sentence() {
    let (pred, gold) = overfit(&tiny_config());
    assert_eq!(pred[0], gold);
    let mut cfg = tiny_config();
    cfg.crf = true;
    let (pred, gold) = overfit(&cfg);
    assert_eq!(pred[0], gold);
}

#[test]
fn bind_reproduces_decoding() {
    let mut cfg = tiny_config();
    cfg.crf = true;
    let fx = Fixture::<f64>::new(&cfg, 8);
    let bound = Tagger::bind(&fx.store, &cfg, fx.tagger.vocabs.clone()).unwrap();
    let b = fx.batch();
    assert_eq!(bound.decode(&fx.store, &b).unwrap(), fx.tagger.decode(&fx.store, &b).unwrap());
    assert!(bound.pos_lm.is_some() && bound.word_lm.is_some());
}
