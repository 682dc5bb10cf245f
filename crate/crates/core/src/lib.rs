//! Theme mining over death-investigation narratives.

pub mod corpus;
pub mod demo;
pub mod eval;
pub mod keyphrase;
pub mod llm;
pub mod pipeline;
pub mod stats;
pub mod taxonomy;

pub use corpus::{CaseRecord, CohortFilter, GoldLabel, MonthlySeries, YearMonth};
pub use taxonomy::{
    Category, DurkheimNorm, ImvPhase, SourceClass, SourceOfInformation, ThemeLabel,
};
