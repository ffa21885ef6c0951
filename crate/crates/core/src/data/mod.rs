//! Dataset formats and synthetic generators.

mod bow;
mod dense;
mod synth;

pub use bow::{load_bow, parse_bow, save_bow, write_bow, Corpus};
pub use dense::{binarize, DenseDataset};
pub use synth::{
    gen_bernoulli_mixture, gen_digit_like, gen_gmm, gen_lda, sample_dirichlet, split_tokens, BernoulliTruth,
    DocLength, GmmTruth, LdaTruth,
};
