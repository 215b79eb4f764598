use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use stance_core::booklet::{SigmaMode, SigmaScope};
use stance_core::evaluation::MeanMode;
use stance_core::Language;

use crate::config::ModelKind;

#[derive(Debug, Parser)]
#[command(
    name = "stance",
    version,
    about = "Stance detection on (question, comment) pairs"
)]
pub struct Cli {
    /// TOML pipeline configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// model file or directory to write (train) or read (evaluate, predict, analyze)
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// directory for reports, metrics and plots
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// restrict evaluation, analysis and statistics to one language
    #[arg(long, global = true, value_enum)]
    pub language: Option<LanguageArg>,
    #[arg(long, global = true, value_enum)]
    pub sigma_scope: Option<ScopeArg>,
    #[arg(long, global = true, value_enum)]
    pub sigma_mode: Option<SigmaModeArg>,
    /// how DE and FR scores are combined in the text table
    #[arg(long, global = true, value_enum)]
    pub mean: Option<MeanArg>,
    /// more log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with a metrics log
    Train {
        #[arg(long, value_name = "PATH")]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Score a model on the test partitions
    Evaluate {
        #[arg(long, value_name = "PATH")]
        corpus: Option<PathBuf>,
        /// selects the default model path when --model is absent
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Predict the stance of one comment toward one question
    Predict {
        #[arg(long)]
        question: String,
        #[arg(long)]
        comment: String,
    },
    /// Label booklet statements and write per-issue reports and plots
    Analyze {
        #[arg(long, value_name = "PATH")]
        booklet: Option<PathBuf>,
    },
    /// Corpus and booklet statistics
    Stats {
        #[arg(long, value_name = "PATH")]
        corpus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        booklet: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LanguageArg {
    De,
    Fr,
    It,
    All,
}

impl LanguageArg {
    pub fn language(self) -> Option<Language> {
        match self {
            LanguageArg::De => Some(Language::De),
            LanguageArg::Fr => Some(Language::Fr),
            LanguageArg::It => Some(Language::It),
            LanguageArg::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Pooled,
    PerLanguage,
}

impl From<ScopeArg> for SigmaScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Pooled => SigmaScope::Pooled,
            ScopeArg::PerLanguage => SigmaScope::PerLanguage,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SigmaModeArg {
    Population,
    Sample,
}

impl From<SigmaModeArg> for SigmaMode {
    fn from(s: SigmaModeArg) -> Self {
        match s {
            SigmaModeArg::Population => SigmaMode::Population,
            SigmaModeArg::Sample => SigmaMode::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeanArg {
    Arithmetic,
    Harmonic,
}

impl From<MeanArg> for MeanMode {
    fn from(m: MeanArg) -> Self {
        match m {
            MeanArg::Arithmetic => MeanMode::Arithmetic,
            MeanArg::Harmonic => MeanMode::Harmonic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Ridge,
    Svm,
    Subword,
    Encoder,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ridge => ModelKind::Ridge,
            KindArg::Svm => ModelKind::Svm,
            KindArg::Subword => ModelKind::Subword,
            KindArg::Encoder => ModelKind::Encoder,
        }
    }
}
