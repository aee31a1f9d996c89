//! Question items, synthetic generators, dataset files and evaluation.

pub mod calculator;
mod dataset;
mod eval;
pub mod facts;
mod item;

pub use self::calculator::{gen_calculator, program_for};
pub use self::dataset::{load_dataset, parse_dataset, split, write_dataset, DatasetError};
pub use self::eval::{evaluate, is_correct, DatasetStats, EvalReport};
pub use self::facts::{gen_fact_lookup, FactSet};
pub use self::item::{QAItem, QuestionType};
