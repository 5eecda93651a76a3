//! Training loop with early stopping, evaluation, transfer to a new tag
//! set, checkpoints and file tagging.

mod checkpoint;
mod tag_file;


use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint_file, write_checkpoint_file, CheckpointError, RawCheckpoint,
    MAGIC, VERSION,
};
pub use tag_file::{tag_file, tag_text, TagFormat};

use crate::corpus::{
    build_vocabs, project_tag, token_count, Batch, BatchInputs, CorpusError, EmbeddingTable, GrammemeCategory,
    GrammemeLexicon, Sentence, Vocab, Vocabs,
};
use crate::features::{CharEncoder, FeatureConfig};
use crate::nn::{clip_global_norm, Adam, AdamConfig, Ctx, NnError, ParamStore, Rng, Tensor};
use crate::pretrain::{select_words, PretrainConfig, PretrainHead};
use crate::tagger::{Resources, Tagger, TaggerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: TaggerConfig,
    pub adam: AdamConfig,
    /// Sentences per minibatch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev accuracy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Epochs during which transferred layers stay frozen.
    pub freeze_epochs: usize,
    /// Learning-rate factor once transferred layers are unfrozen.
    pub unfreeze_lr_multiplier: f64,
    /// Stop as soon as train accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub char_init: Option<PathBuf>,
    pub tag_filter: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: TaggerConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 1,
            clip_norm: 5.0,
            freeze_epochs: 5,
            unfreeze_lr_multiplier: 1.0,
            stop_at_train_accuracy: None,
            lexicon: None,
            embeddings: None,
            char_init: None,
            tag_filter: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.adam.lr));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || self.adam.eps <= 0.0 {
            return bad("optimizer betas must be in [0, 1) and eps positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if !(self.clip_norm > 0.0) || !(self.unfreeze_lr_multiplier > 0.0) {
            return bad("clip_norm and unfreeze_lr_multiplier must be positive".into());
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("stop_at_train_accuracy must be in (0, 1], got {a}"));
            }
        }
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training corpus has no tokens")]
    EmptyTrain,
    #[error("development corpus has no tokens")]
    EmptyDev,
    #[error("incompatible model: {0}")]
    Incompatible(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub dev_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub train_tokens: usize,
    pub dev_tokens: usize,
    pub test_acc: Option<f64>,
    pub test_tokens: Option<usize>,
}

impl MetricsReport {
    pub fn best(&self) -> Option<&EpochMetrics> {
        self.best_epoch.and_then(|b| self.epochs.iter().find(|e| e.epoch == b))
    }

    /// One JSON object per epoch, then a summary line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("metrics serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "best_epoch": self.best_epoch,
            "best_dev_acc": self.best().map(|e| e.dev_acc),
            "train_tokens": self.train_tokens,
            "dev_tokens": self.dev_tokens,
            "test_acc": self.test_acc,
            "test_tokens": self.test_tokens,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Correct and total token counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    /// Share of correct tokens; 0 for an empty corpus.
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Full-tag exact match, or a match after both tags are projected onto the
/// POS plus the `filter` categories.
pub fn score(predicted: &[Vec<String>], gold: &[Sentence], filter: Option<&BTreeSet<String>>) -> Accuracy {
    let mut acc = Accuracy::default();
    for (p, g) in predicted.iter().zip(gold) {
        for (p, t) in p.iter().zip(&g.tokens) {
            let ok = match filter {
                Some(f) => project_tag(p, f) == project_tag(&t.tag, f),
                None => *p == t.tag,
            };
            acc.correct += usize::from(ok);
            acc.total += 1;
        }
    }
    acc
}

/// Category names, one per line; blank lines and `#` comments are skipped.
pub fn parse_tag_filter(text: &str) -> BTreeSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect()
}

pub fn read_tag_filter(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    Ok(parse_tag_filter(&crate::corpus::read_text(path)?))
}

/// A pretrained character encoder to start the tagger's from.
#[derive(Clone, Debug)]
pub struct CharInit {
    pub features: FeatureConfig,
    pub chars: Vocab,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

/// Loaded external inputs of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainResources {
    pub lexicon: Option<GrammemeLexicon>,
    pub embeddings: Option<EmbeddingTable>,
    pub char_init: Option<CharInit>,
    pub tag_filter: Option<BTreeSet<String>>,
}

impl TrainResources {
    /// Reads every path named in `cfg`.
    pub fn load(cfg: &TrainConfig) -> Result<Self, TrainError> {
        Ok(TrainResources {
            lexicon: cfg.lexicon.as_deref().map(crate::corpus::read_grammeme_lexicon).transpose()?,
            embeddings: cfg.embeddings.as_deref().map(crate::corpus::read_embeddings_text).transpose()?,
            char_init: cfg.char_init.as_deref().map(load_char_encoder).transpose()?,
            tag_filter: cfg.tag_filter.as_deref().map(read_tag_filter).transpose()?,
        })
    }
}

/// Checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metadata {
    Tagger {
        config: TrainConfig,
        vocabs: Vocabs,
        /// Categories of the lexicon the grammeme features were built on.
        lexicon_categories: Option<Vec<GrammemeCategory>>,
        metrics: MetricsReport,
    },
    CharEncoder {
        features: FeatureConfig,
        chars: Vocab,
        pretrain: PretrainConfig,
        words: usize,
        losses: Vec<f64>,
    },
}

/// Saves a pretrained character encoder: the `char_encoder.*` tensors and
/// the vocabulary they index.
pub fn save_char_encoder(
    path: &Path,
    store: &ParamStore<f32>,
    features: &FeatureConfig,
    chars: &Vocab,
    pretrain: &PretrainConfig,
    words: usize,
    losses: &[f64],
) -> Result<(), TrainError> {
    let mut only = ParamStore::new();
    for (_, p) in store.iter().filter(|(_, p)| p.name.starts_with(CharEncoder::NAME)) {
        only.add(p.name.clone(), p.value.clone(), p.kind)?;
    }
    let meta = Metadata::CharEncoder {
        features: features.clone(),
        chars: chars.clone(),
        pretrain: pretrain.clone(),
        words,
        losses: losses.to_vec(),
    };
    write_checkpoint_file(path, &serde_json::to_value(meta).map_err(CheckpointError::from)?, &only)?;
    Ok(())
}

pub fn load_char_encoder(path: &Path) -> Result<CharInit, TrainError> {
    let raw: RawCheckpoint<f32> = read_checkpoint_file(path)?;
    match serde_json::from_value(raw.metadata).map_err(CheckpointError::from)? {
        Metadata::CharEncoder { features, chars, .. } => Ok(CharInit { features, chars, tensors: raw.tensors }),
        Metadata::Tagger { .. } => Err(TrainError::Incompatible(format!("{} holds a tagger, not a char encoder", path.display()))),
    }
}

/// A tagger with its parameters, lexicon and training history.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub tagger: Tagger,
    pub store: ParamStore<f32>,
    pub lexicon: Option<GrammemeLexicon>,
    pub metrics: MetricsReport,
}

const EVAL_BATCH: usize = 64;

fn check_lexicon(config: &TaggerConfig, lexicon: Option<&GrammemeLexicon>) -> Result<(), TrainError> {
    if config.features.use_grammemes && lexicon.is_none() {
        return Err(TrainError::Config("grammeme features need a lexicon".into()));
    }
    Ok(())
}

fn copy_tensor(store: &mut ParamStore<f32>, name: &str, t: &Tensor<f32>) -> Result<(), TrainError> {
    let id = store.id(name).ok_or_else(|| TrainError::Incompatible(format!("no parameter `{name}` in the model")))?;
    let p = store.get_mut(id);
    if p.value.shape() != t.shape() {
        return Err(TrainError::Incompatible(format!(
            "`{name}` has shape {:?} in the model and {:?} in the source",
            p.value.shape(),
            t.shape()
        )));
    }
    p.value = t.clone();
    Ok(())
}

impl Model {
    /// Fresh model with vocabularies from `train`.
    pub fn new(config: &TrainConfig, train: &[Sentence], res: &TrainResources) -> Result<Self, TrainError> {
        config.validate()?;
        check_lexicon(&config.model, res.lexicon.as_ref())?;
        let mut vocabs = build_vocabs(train, &config.model.vocab);
        if vocabs.tags.len() == Vocab::tags().len() {
            return Err(TrainError::EmptyTrain);
        }
        if let Some(init) = &res.char_init {
            if init.features.char_encoder != config.model.features.char_encoder {
                return Err(TrainError::Incompatible("pretrained char encoder is of a different kind".into()));
            }
            vocabs.chars = init.chars.clone();
        }
        let mut rng = Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let aux_words = match (&res.embeddings, config.model.lambda_emb > 0.0) {
            (Some(t), true) => Some(select_words(train, t, false)),
            _ => None,
        };
        let resources =
            Resources { lexicon: res.lexicon.as_ref(), embeddings: res.embeddings.as_ref(), aux_words: aux_words.as_deref() };
        let tagger = Tagger::new(&mut store, &config.model, vocabs, resources, &mut rng)?;
        if let Some(init) = &res.char_init {
            for (name, t) in &init.tensors {
                copy_tensor(&mut store, name, t)?;
            }
        }
        Ok(Model { config: config.clone(), tagger, store, lexicon: res.lexicon.clone(), metrics: MetricsReport::default() })
    }

    pub fn inputs(&self) -> BatchInputs<'_> {
        BatchInputs {
            vocabs: &self.tagger.vocabs,
            lexicon: self.lexicon.as_ref(),
            lowercase: self.config.model.vocab.lowercase,
            max_word_len: self.config.model.features.max_word_len,
        }
    }

    /// Predicted tags for each sentence of forms; empty sentences give
    /// empty predictions.
    pub fn predict(&self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, TrainError> {
        let inputs = self.inputs();
        let mut out = vec![Vec::new(); sentences.len()];
        let order: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].is_empty()).collect();
        for chunk in order.chunks(EVAL_BATCH) {
            let features = inputs.token_features(chunk.iter().flat_map(|&i| sentences[i].iter().map(String::as_str)));
            let lengths: Vec<usize> = chunk.iter().map(|&i| sentences[i].len()).collect();
            let n = lengths.iter().sum();
            let batch = Batch { indices: chunk.to_vec(), lengths, features, tag_ids: vec![Vocab::PAD; n] };
            for (&i, tags) in chunk.iter().zip(self.tagger.decode(&self.store, &batch)?) {
                out[i] = tags;
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, corpus: &[Sentence], filter: Option<&BTreeSet<String>>) -> Result<Accuracy, TrainError> {
        let forms: Vec<Vec<String>> = corpus.iter().map(Sentence::forms).collect();
        Ok(score(&self.predict(&forms)?, corpus, filter))
    }

    pub fn metadata(&self) -> Metadata {
        Metadata::Tagger {
            config: self.config.clone(),
            vocabs: self.tagger.vocabs.clone(),
            lexicon_categories: self.lexicon.as_ref().map(|l| l.categories().to_vec()),
            metrics: self.metrics.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_value(self.metadata()).expect("metadata serializes");
        encode_checkpoint(&meta, &self.store)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Ok(())
    }

    /// Rebuilds a model from checkpoint bytes. The grammeme lexicon is not
    /// stored; it is passed in (or read from the configured path) and must
    /// have the categories the model was trained with.
    pub fn from_bytes(bytes: &[u8], lexicon: Option<GrammemeLexicon>) -> Result<Self, TrainError> {
        let raw: RawCheckpoint<f32> = decode_checkpoint(bytes)?;
        let meta: Metadata = serde_json::from_value(raw.metadata).map_err(CheckpointError::from)?;
        let Metadata::Tagger { config, vocabs, lexicon_categories, metrics } = meta else {
            return Err(TrainError::Incompatible("checkpoint holds a char encoder, not a tagger".into()));
        };
        let lexicon = match (lexicon_categories, lexicon) {
            (None, _) => None,
            (Some(cats), given) => {
                let lex = match given {
                    Some(l) => l,
                    None => {
                        let path = config.lexicon.as_deref().ok_or_else(|| {
                            TrainError::Config("the model uses a grammeme lexicon; pass its path".into())
                        })?;
                        crate::corpus::read_grammeme_lexicon(path)?
                    }
                };
                if lex.categories() != cats.as_slice() {
                    return Err(TrainError::Incompatible("lexicon categories differ from the ones the model was trained with".into()));
                }
                Some(lex)
            }
        };
        let mut store = ParamStore::new();
        for (name, t) in raw.tensors {
            let kind = if name.ends_with(".running_mean") || name.ends_with(".running_var") {
                crate::nn::ParamKind::Buffer
            } else {
                crate::nn::ParamKind::Weight
            };
            store.add(name, t, kind)?;
        }
        let tagger = Tagger::bind(&store, &config.model, vocabs)?;
        Ok(Model { config, tagger, store, lexicon, metrics })
    }

    pub fn load(path: &Path, lexicon: Option<GrammemeLexicon>) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes, lexicon)
    }
}

/// Parameters frozen for the first epochs of a run.
#[derive(Clone, Debug, Default)]
pub struct FreezePlan {
    pub epochs: usize,
    pub names: Vec<String>,
}

fn train_rng(seed: u64) -> Rng {
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

/// Trains `model` in place. Each epoch shuffles and batches the train
/// corpus, takes one clipped Adam step per batch, then measures train and
/// dev accuracy in eval mode. The parameters of the best dev epoch (the
/// earliest on ties) are kept. `on_epoch` sees each epoch's metrics and the
/// parameters right after it.
pub fn fit(
    model: &mut Model,
    train: &[Sentence],
    dev: &[Sentence],
    freeze: &FreezePlan,
    filter: Option<&BTreeSet<String>>,
    mut on_epoch: impl FnMut(&EpochMetrics, &ParamStore<f32>),
) -> Result<(), TrainError> {
    let train_tokens = token_count(train);
    if train_tokens == 0 {
        return Err(TrainError::EmptyTrain);
    }
    let dev_tokens = token_count(dev);
    if dev_tokens == 0 {
        return Err(TrainError::EmptyDev);
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let always_frozen: HashSet<String> =
        model.store.iter().filter(|(_, p)| p.frozen).map(|(_, p)| p.name.clone()).collect();
    let set_freeze = |store: &mut ParamStore<f32>, on: bool| {
        let names: HashSet<&str> = freeze.names.iter().map(String::as_str).collect();
        for p in store.iter_mut() {
            p.frozen = always_frozen.contains(&p.name) || (on && names.contains(p.name.as_str()));
        }
    };
    let mut rng = train_rng(cfg.seed);
    let mut adam = Adam::new(cfg.adam.clone());
    let mut report = MetricsReport { train_tokens, dev_tokens, ..Default::default() };
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    for epoch in 1..=cfg.max_epochs {
        let frozen_phase = epoch <= freeze.epochs;
        set_freeze(&mut model.store, frozen_phase);
        let lr_scale = if freeze.epochs > 0 && !frozen_phase { cfg.unfreeze_lr_multiplier } else { 1.0 };
        let batches = crate::corpus::batch_sentences(train, &model.inputs(), cfg.batch_size, Some(&mut rng));
        let mut loss_sum = 0.0;
        for batch in &batches {
            let mut ctx = Ctx::train(&model.store, &mut rng);
            let losses = model.tagger.losses(&mut ctx, batch)?;
            loss_sum += ctx.graph.value(losses.total).item() as f64 * batch.token_count() as f64;
            ctx.graph.backward(losses.total)?;
            let Ctx { graph, bn_updates, .. } = ctx;
            graph.accumulate_param_grads(&mut model.store);
            Ctx::apply_bn_updates(bn_updates, &mut model.store);
            clip_global_norm(&mut model.store, cfg.clip_norm);
            adam.step(&mut model.store, lr_scale);
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_tokens as f64,
            train_acc: model.evaluate(train, filter)?.value(),
            dev_acc: model.evaluate(dev, filter)?.value(),
        };
        on_epoch(&m, &model.store);
        if best.as_ref().is_none_or(|(b, _, _)| m.dev_acc > *b) {
            best = Some((m.dev_acc, epoch, model.store.clone()));
        }
        let reached = cfg.stop_at_train_accuracy.is_some_and(|a| m.train_acc >= a);
        report.epochs.push(m);
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if reached || (!frozen_phase && epoch - best_epoch >= cfg.patience) {
            break;
        }
    }
    set_freeze(&mut model.store, false);
    if let Some((_, epoch, store)) = best {
        report.best_epoch = Some(epoch);
        for (p, b) in model.store.iter_mut().zip(store.iter()) {
            p.value = b.1.value.clone();
        }
    }
    model.metrics = report;
    Ok(())
}

/// Builds a model from `cfg` and trains it.
pub fn train(
    cfg: &TrainConfig,
    train: &[Sentence],
    dev: &[Sentence],
    res: &TrainResources,
    on_epoch: impl FnMut(&EpochMetrics, &ParamStore<f32>),
) -> Result<Model, TrainError> {
    let mut model = Model::new(cfg, train, res)?;
    fit(&mut model, train, dev, &FreezePlan::default(), res.tag_filter.as_ref(), on_epoch)?;
    Ok(model)
}

/// True when two tagger configurations build the same shared layers.
fn same_architecture(a: &TaggerConfig, b: &TaggerConfig) -> bool {
    a.features == b.features
        && a.vocab == b.vocab
        && a.hidden == b.hidden
        && a.layers == b.layers
        && a.pre_output_dim == b.pre_output_dim
}

/// Moves `base` to the tag set of `train`: the tag-set dependent heads are
/// built fresh, every other parameter is copied from `base` and kept frozen
/// for `cfg.freeze_epochs` epochs, after which everything is fine-tuned.
/// Character, word and lexicon inputs stay those of the base model.
pub fn transfer(
    base: &Model,
    cfg: &TrainConfig,
    train: &[Sentence],
    dev: &[Sentence],
    res: &TrainResources,
    on_epoch: impl FnMut(&EpochMetrics, &ParamStore<f32>),
) -> Result<Model, TrainError> {
    cfg.validate()?;
    if !same_architecture(&base.config.model, &cfg.model) {
        return Err(TrainError::Incompatible("feature or encoder configuration differs from the base model".into()));
    }
    let new_tags = build_vocabs(train, &cfg.model.vocab).tags;
    if new_tags.len() == Vocab::tags().len() {
        return Err(TrainError::EmptyTrain);
    }
    let vocabs = Vocabs { chars: base.tagger.vocabs.chars.clone(), words: base.tagger.vocabs.words.clone(), tags: new_tags };
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let aux_words = match (&res.embeddings, cfg.model.lambda_emb > 0.0) {
        (Some(t), true) => Some(select_words(train, t, false)),
        _ => None,
    };
    let resources =
        Resources { lexicon: base.lexicon.as_ref(), embeddings: res.embeddings.as_ref(), aux_words: aux_words.as_deref() };
    let tagger = Tagger::new(&mut store, &cfg.model, vocabs, resources, &mut rng)?;
    let fresh = |name: &str| {
        Tagger::TAGSET_PREFIXES.iter().any(|p| name.starts_with(p)) || name.starts_with(PretrainHead::NAME)
    };
    let mut copied = Vec::new();
    for p in store.iter_mut() {
        if fresh(&p.name) {
            continue;
        }
        if let Some(b) = base.store.by_name(&p.name) {
            if b.value.shape() == p.value.shape() {
                p.value = b.value.clone();
                copied.push(p.name.clone());
            }
        }
    }
    let mut model = Model { config: cfg.clone(), tagger, store, lexicon: base.lexicon.clone(), metrics: MetricsReport::default() };
    let plan = FreezePlan { epochs: cfg.freeze_epochs, names: copied };
    fit(&mut model, train, dev, &plan, res.tag_filter.as_ref(), on_epoch)?;
    Ok(model)
}
