pub mod bench;
pub mod cba;
pub mod cli;
pub mod clock;
pub mod engine;
pub mod error;
pub mod learner;
pub mod plr;
pub mod table;

pub use engine::{CbaMode, Engine, LearningMode, Options, TWait};
pub use error::{Error, Result};
