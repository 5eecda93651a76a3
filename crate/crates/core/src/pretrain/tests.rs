use rand::{Rng as _, SeedableRng};

use super::*;
use crate::corpus::{build_vocabs, Token, VocabConfig};
use crate::nn::log_sum_exp;

fn toy_words(n: usize, rng: &mut Rng) -> Vec<String> {
    let mut out = std::collections::BTreeSet::new();
    while out.len() < n {
        let len = rng.gen_range(3..10);
        out.insert((0..len).map(|_| (b'a' + rng.gen_range(0..12u8)) as char).collect::<String>());
    }
    out.into_iter().collect()
}

fn toy_table(words: &[String], dim: usize, rng: &mut Rng) -> EmbeddingTable {
    let v = (0..words.len() * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    EmbeddingTable::new(words.to_vec(), dim, v)
}

fn char_vocab(words: &[String]) -> Vocab {
    let s = Sentence::new(words.iter().map(|w| Token::new(w.clone(), "X")).collect());
    build_vocabs(&[s], &VocabConfig::default()).chars
}

fn small_features() -> FeatureConfig {
    FeatureConfig { char_embed_dim: 4, max_word_len: 6, char_ff_hidden: 8, char_ff_out: 5, ..FeatureConfig::default() }
}

fn setup<F: Scalar>(n: usize, dim: usize, seed: u64, frozen: bool) -> (ParamStore<F>, PretrainModel, EmbeddingTable) {
    let mut rng = Rng::seed_from_u64(seed);
    let words = toy_words(n, &mut rng);
    let table = toy_table(&words, dim, &mut rng);
    let mut store = ParamStore::new();
    let model =
        PretrainModel::new(&mut store, &small_features(), char_vocab(&words), &table, words, frozen, &mut rng).unwrap();
    (store, model, table)
}

#[test]
fn output_rows_copy_the_table() {
    let (store, model, table) = setup::<f32>(7, 3, 0, true);
    for (i, w) in model.words.iter().enumerate() {
        assert_eq!(store.get(model.head.output).value.row(i), table.get(w).unwrap());
    }
    assert!(store.get(model.head.output_bias).value.data().iter().all(|&b| b == 0.0));
}

#[test]
fn single_word_loss_is_zero() {
    let (store, model, _) = setup::<f64>(1, 3, 1, true);
    let mut ctx = Ctx::eval(&store);
    let w = model.words[0].clone();
    let l = pretrain_loss(&mut ctx, &model, &[&w]).unwrap();
    assert_eq!(ctx.graph.value(l).item(), 0.0);
}

#[test]
fn loss_matches_hand_rolled_cross_entropy() {
    let (store, model, _) = setup::<f64>(3, 4, 2, true);
    let words: Vec<&str> = model.words.iter().map(String::as_str).collect();
    let mut ctx = Ctx::eval(&store);
    let l = pretrain_loss(&mut ctx, &model, &words).unwrap();
    let got = ctx.graph.value(l).item();
    let m = model.project(&mut ctx, &words).unwrap();
    let m = ctx.graph.value(m).clone();
    let out = &store.get(model.head.output).value;
    let mut want = 0.0;
    for (j, _) in words.iter().enumerate() {
        let logits: Vec<f64> = (0..3).map(|i| out.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum()).collect();
        want += log_sum_exp(&logits) - logits[j];
    }
    want /= 3.0;
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn zero_map_gives_uniform_loss() {
    let (mut store, model, _) = setup::<f64>(9, 3, 3, true);
    store.get_mut(model.head.map.weight).value.data_mut().iter_mut().for_each(|x| *x = 0.0);
    let words: Vec<&str> = model.words.iter().map(String::as_str).collect();
    let mut ctx = Ctx::eval(&store);
    let l = pretrain_loss(&mut ctx, &model, &words).unwrap();
    assert!((ctx.graph.value(l).item() - 9f64.ln()).abs() < 1e-12);
}

#[test]
fn unknown_word_is_an_error() {
    let (store, model, _) = setup::<f64>(3, 3, 4, true);
    let mut ctx = Ctx::eval(&store);
    assert!(pretrain_loss(&mut ctx, &model, &["notaword!"]).is_err());
}

#[test]
fn aux_loss_is_the_pretraining_loss() {
    let (store, model, _) = setup::<f64>(5, 3, 5, true);
    let words: Vec<&str> = model.words.iter().map(String::as_str).collect();
    let mut ctx = Ctx::eval(&store);
    let a = pretrain_loss(&mut ctx, &model, &words).unwrap();
    let b = char_embedding_aux_loss(&mut ctx, &model, &words).unwrap();
    assert_eq!(ctx.graph.value(a).item(), ctx.graph.value(b).item());
}

#[test]
fn frozen_output_layer_is_untouched_and_runs_repeat() {
    let run = || {
        let (mut store, model, _) = setup::<f32>(20, 4, 6, true);
        let before = store.get(model.head.output).value.clone();
        let cfg = PretrainConfig { epochs: 5, batch_size: 8, ..Default::default() };
        let hist = pretrain(&mut store, &model, &cfg, &mut Rng::seed_from_u64(7), |_, _| {}).unwrap();
        assert_eq!(store.get(model.head.output).value, before);
        let enc: Vec<Vec<f32>> =
            store.iter().filter(|(_, p)| p.name.starts_with("char_encoder")).map(|(_, p)| p.value.data().to_vec()).collect();
        (hist, enc)
    };
    assert_eq!(run(), run());
}

#[test]
fn trainable_output_layer_moves() {
    let (mut store, model, _) = setup::<f32>(10, 4, 8, false);
    let before = store.get(model.head.output).value.clone();
    let cfg = PretrainConfig { epochs: 2, batch_size: 4, ..Default::default() };
    pretrain(&mut store, &model, &cfg, &mut Rng::seed_from_u64(0), |_, _| {}).unwrap();
    assert_ne!(store.get(model.head.output).value, before);
}

#[test]
fn loss_decreases_over_ten_epochs() {
    for seed in 0..5 {
        let (mut store, model, _) = setup::<f32>(50, 16, seed, true);
        let cfg = PretrainConfig { epochs: 10, ..Default::default() };
        let hist = pretrain(&mut store, &model, &cfg, &mut Rng::seed_from_u64(seed), |_, _| {}).unwrap();
        assert!(hist[9] < hist[0], "seed {seed}: {hist:?}");
        assert!(hist.iter().all(|&l| l >= 0.0));
    }
}

#[test]
fn nearest_words_edges() {
    let (store, model, _) = setup::<f32>(6, 3, 9, true);
    assert!(nearest_words(&store, &model, "abc", 0).unwrap().is_empty());
    let all = nearest_words(&store, &model, "zzzzqqq", 100).unwrap();
    assert_eq!(all.len(), 6);
    assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
    let v = [0.3, -2.0, 5.0];
    assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
}

#[test]
fn select_words_intersects_train_set() {
    let table = parse("a 1\nb 2\nc 3\n");
    let s = vec![Sentence::new(vec![Token::new("b", "X"), Token::new("z", "X"), Token::new("b", "X"), Token::new("a", "X")])];
    assert_eq!(select_words(&s, &table, false), vec!["b", "a"]);
    assert_eq!(select_words(&s, &table, true), vec!["a", "b", "c"]);
}

fn parse(text: &str) -> EmbeddingTable {
    crate::corpus::parse_embeddings(text).unwrap()
}
