//! Command-line front end. Progress goes to stderr, results to stdout or
//! the requested files. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabs, read_corpus, read_embeddings_text, read_grammeme_lexicon, VocabConfig};
use crate::features::{CharEncoderKind, FeatureConfig};
use crate::nn::{ParamStore, Rng};
use crate::pretrain::{pretrain, select_words, PretrainConfig, PretrainModel};
use crate::train::{
    read_tag_filter, save_char_encoder, tag_file, transfer, EpochMetrics, Model, TagFormat, TrainConfig, TrainError,
    TrainResources,
};

#[derive(Parser, Debug)]
#[command(name = "morphtag", version, about = "Neural morphological tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the character encoder against word vectors.
    PretrainChar(PretrainArgs),
    /// Train a tagger.
    Train(TrainArgs),
    /// Print the accuracy of a model on a tagged corpus as JSON.
    Eval(EvalArgs),
    /// Tag a TSV or CoNLL-U file.
    Tag(TagArgs),
    /// Move a trained tagger to a new tag set.
    Transfer(TransferArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncoderArg {
    None,
    Ff,
    Bilstm,
}

impl From<EncoderArg> for CharEncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::None => CharEncoderKind::None,
            EncoderArg::Ff => CharEncoderKind::FeedForward,
            EncoderArg::Bilstm => CharEncoderKind::BiLstm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Tsv,
    Conllu,
}

/// Flags that override fields of the JSON configuration.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON training configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Stop once train accuracy reaches this value.
    #[arg(long)]
    stop_at_train_accuracy: Option<f64>,
    /// Use a CRF output layer.
    #[arg(long)]
    crf: bool,
    #[arg(long)]
    lambda_pos: Option<f64>,
    #[arg(long)]
    lambda_word: Option<f64>,
    #[arg(long)]
    lambda_emb: Option<f64>,
    #[arg(long, value_enum)]
    char_encoder: Option<EncoderArg>,
    /// Add a word embedding feature.
    #[arg(long)]
    word_embedding: bool,
    /// Grammeme lexicon (form, tag, frequency per line).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Checkpoint written by `pretrain-char`.
    #[arg(long)]
    char_init: Option<PathBuf>,
    /// Category names scored besides POS, one per line.
    #[arg(long)]
    tag_filter: Option<PathBuf>,
    #[arg(long)]
    freeze_epochs: Option<usize>,
    #[arg(long)]
    unfreeze_lr_multiplier: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines metrics file.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// Trained model to start from.
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    tag_filter: Option<PathBuf>,
    /// Lexicon to use instead of the path stored in the model.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Input format; by default CoNLL-U for `.conllu` files, TSV otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// Corpus whose words are pretrained on (tags are ignored).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON with optional `features`, `vocab` and `pretrain` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    char_encoder: Option<EncoderArg>,
    /// Pretrain on every word of the vector file, not only corpus words.
    #[arg(long)]
    all_words: bool,
    /// JSON-lines loss per epoch.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainRunConfig {
    pub features: FeatureConfig,
    pub vocab: VocabConfig,
    pub pretrain: PretrainConfig,
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    msg: String,
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = if matches!(e, TrainError::Config(_)) { 1 } else { 2 };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

fn data(msg: impl ToString) -> Failure {
    Failure { code: 2, msg: msg.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

impl Overrides {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(c.seed, self.seed);
        set!(c.max_epochs, self.max_epochs);
        set!(c.batch_size, self.batch_size);
        set!(c.adam.lr, self.lr);
        set!(c.patience, self.patience);
        set!(c.model.lambda_pos, self.lambda_pos);
        set!(c.model.lambda_word, self.lambda_word);
        set!(c.model.lambda_emb, self.lambda_emb);
        set!(c.freeze_epochs, self.freeze_epochs);
        set!(c.unfreeze_lr_multiplier, self.unfreeze_lr_multiplier);
        if self.stop_at_train_accuracy.is_some() {
            c.stop_at_train_accuracy = self.stop_at_train_accuracy;
        }
        if let Some(e) = self.char_encoder {
            c.model.features.char_encoder = e.into();
        }
        if self.crf {
            c.model.crf = true;
        }
        if self.word_embedding {
            c.model.features.use_word_embedding = true;
        }
        for (field, value) in [
            (&mut c.lexicon, &self.lexicon),
            (&mut c.embeddings, &self.embeddings),
            (&mut c.char_init, &self.char_init),
            (&mut c.tag_filter, &self.tag_filter),
        ] {
            if value.is_some() {
                field.clone_from(value);
            }
        }
        c
    }

    fn config(&self, base: TrainConfig) -> Result<TrainConfig, Failure> {
        let c = match &self.config {
            Some(p) => read_json(p)?,
            None => base,
        };
        Ok(self.apply(c))
    }
}

fn progress(m: &EpochMetrics, start: Instant) {
    eprintln!(
        "epoch {:>3}  loss {:.4}  train {:.4}  dev {:.4}  ({:.1}s)",
        m.epoch,
        m.train_loss,
        m.train_acc,
        m.dev_acc,
        start.elapsed().as_secs_f64()
    );
}

fn finish(
    mut model: Model,
    test: Option<&Path>,
    res: &TrainResources,
    out: &Path,
    metrics_out: Option<&Path>,
) -> Result<(), Failure> {
    if let Some(test) = test {
        let corpus = read_corpus(test).map_err(data)?;
        let acc = model.evaluate(&corpus, res.tag_filter.as_ref())?;
        eprintln!("test accuracy {:.4} on {} tokens", acc.value(), acc.total);
        model.metrics.test_acc = Some(acc.value());
        model.metrics.test_tokens = Some(acc.total);
    }
    if let Some(best) = model.metrics.best() {
        eprintln!("kept epoch {} (dev {:.4})", best.epoch, best.dev_acc);
    }
    model.save(out)?;
    if let Some(p) = metrics_out {
        write_file(p, &model.metrics.to_json_lines())?;
    }
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = a.overrides.config(TrainConfig::default())?;
    if cfg.model.features.use_grammemes && cfg.lexicon.is_none() {
        eprintln!("note: no lexicon given, grammeme features disabled");
        cfg.model.features.use_grammemes = false;
    }
    cfg.validate()?;
    let train = read_corpus(&a.train).map_err(data)?;
    let dev = read_corpus(&a.dev).map_err(data)?;
    let res = TrainResources::load(&cfg)?;
    let start = Instant::now();
    let model = crate::train::train(&cfg, &train, &dev, &res, |m, _| progress(m, start))?;
    finish(model, a.test.as_deref(), &res, &a.out, a.metrics_out.as_deref())
}

fn run_transfer(a: &TransferArgs) -> Result<(), Failure> {
    let lexicon = a.overrides.lexicon.as_deref().map(read_grammeme_lexicon).transpose().map_err(data)?;
    let base = Model::load(&a.base, lexicon)?;
    let mut cfg = a.overrides.config(base.config.clone())?;
    cfg.lexicon = base.config.lexicon.clone().or(cfg.lexicon);
    cfg.char_init = None;
    cfg.validate()?;
    let train = read_corpus(&a.train).map_err(data)?;
    let dev = read_corpus(&a.dev).map_err(data)?;
    let res = TrainResources {
        embeddings: cfg.embeddings.as_deref().map(read_embeddings_text).transpose().map_err(data)?,
        tag_filter: cfg.tag_filter.as_deref().map(read_tag_filter).transpose().map_err(data)?,
        ..Default::default()
    };
    let start = Instant::now();
    let model = transfer(&base, &cfg, &train, &dev, &res, |m, _| progress(m, start))?;
    finish(model, a.test.as_deref(), &res, &a.out, a.metrics_out.as_deref())
}

fn load_model(path: &Path, lexicon: Option<&Path>) -> Result<Model, Failure> {
    let lexicon = lexicon.map(read_grammeme_lexicon).transpose().map_err(data)?;
    Ok(Model::load(path, lexicon)?)
}

fn run_eval(a: &EvalArgs) -> Result<(), Failure> {
    let model = load_model(&a.model, a.lexicon.as_deref())?;
    let corpus = read_corpus(&a.corpus).map_err(data)?;
    let filter = a.tag_filter.as_deref().map(read_tag_filter).transpose().map_err(data)?;
    let acc = model.evaluate(&corpus, filter.as_ref())?;
    println!("{}", serde_json::json!({"accuracy": acc.value(), "correct": acc.correct, "tokens": acc.total}));
    Ok(())
}

fn run_tag(a: &TagArgs) -> Result<(), Failure> {
    let model = load_model(&a.model, a.lexicon.as_deref())?;
    let format = a.format.map(|f| match f {
        FormatArg::Tsv => TagFormat::Tsv,
        FormatArg::Conllu => TagFormat::Conllu,
    });
    tag_file(&model, &a.input, &a.output, format)?;
    Ok(())
}

fn run_pretrain(a: &PretrainArgs) -> Result<(), Failure> {
    let mut cfg: PretrainRunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PretrainRunConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.pretrain.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.pretrain.seed = s;
    }
    if let Some(e) = a.char_encoder {
        cfg.features.char_encoder = e.into();
    }
    cfg.pretrain.all_embedding_words |= a.all_words;
    cfg.features.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = read_corpus(&a.corpus).map_err(data)?;
    let table = read_embeddings_text(&a.embeddings).map_err(data)?;
    let words = select_words(&corpus, &table, cfg.pretrain.all_embedding_words);
    if words.is_empty() {
        return Err(data("no corpus word has a vector"));
    }
    let chars = build_vocabs(&corpus, &cfg.vocab).chars;
    let mut rng = Rng::seed_from_u64(cfg.pretrain.seed);
    let mut store = ParamStore::new();
    let n = words.len();
    let model = PretrainModel::new(&mut store, &cfg.features, chars, &table, words, cfg.pretrain.output_frozen, &mut rng)
        .map_err(|e| usage(e.to_string()))?;
    eprintln!("pretraining on {n} words");
    let start = Instant::now();
    let losses = pretrain(&mut store, &model, &cfg.pretrain, &mut rng, |e, l| {
        eprintln!("epoch {e:>3}  loss {l:.4}  ({:.1}s)", start.elapsed().as_secs_f64());
    })
    .map_err(data)?;
    save_char_encoder(&a.out, &store, &cfg.features, &model.chars, &cfg.pretrain, n, &losses)?;
    if let Some(p) = &a.metrics_out {
        let lines: String = losses
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{}\n", serde_json::json!({"epoch": i + 1, "loss": l})))
            .collect();
        write_file(p, &lines)?;
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{}", e.render());
            return 1;
        }
    };
    let result = match &cli.command {
        Command::PretrainChar(a) => run_pretrain(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Tag(a) => run_tag(a),
        Command::Transfer(a) => run_transfer(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}
