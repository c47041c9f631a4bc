use std::io;
use std::path::PathBuf;

use flowseg::cfsfdp::CfsfdpError;
use flowseg::dataset::DatasetError;
use flowseg::eval::EvalError;
use flowseg::flow::FlowError;
use flowseg::gbis::GbisError;
use flowseg::{GridError, PipelineError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("frame {frame}: {source}")]
    Pipeline {
        frame: u64,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Composition(#[from] CfsfdpError),
    #[error(transparent)]
    Segmentation(#[from] GbisError),
    #[error("{} does not exist", .0.display())]
    MissingPath(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid configuration {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Results {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("frame {frame} needs {needed} preceding flows but only {available} exist")]
    ShortHistory {
        frame: u64,
        needed: usize,
        available: usize,
    },
    #[error("frame {frame} is in {present} but not in {missing}")]
    FrameMismatch {
        frame: u64,
        present: &'static str,
        missing: &'static str,
    },
    #[error("{0}")]
    Usage(String),
    #[error("frame {frame}: internal invariant violated: {message}")]
    Invariant { frame: u64, message: String },
}

impl CliError {
    /// 2 for broken internal guarantees, 1 for everything caused by input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant { .. }
            | CliError::Pipeline {
                source: PipelineError::EmptySegment,
                ..
            } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
