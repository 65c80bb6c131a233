use thiserror::Error;

use crate::config::ConfigError;
use crate::estimators::EstimateError;
use crate::eval::EvalError;
use crate::likelihood::LikelihoodError;
use crate::mcmc::ChainError;
use crate::seqdata::SeqError;
use crate::simulate::SimError;
use crate::substmodel::ModelError;
use crate::tree::TreeError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
