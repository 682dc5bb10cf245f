//! Trend decomposition and per-theme logistic regression.

pub mod decompose;
pub mod design;
pub mod export;
pub mod logit;
pub mod svg;
pub mod vif;

pub use decompose::{
    decompose, trend_table, write_trend_csv, zscore, zscore_defined, Decomposition, TrendRow,
};
pub use design::{build_design, DesignMatrix, DesignSpec, Term};
pub use export::{
    run_regressions, write_heatmap_csv, write_regression_csv, RegressionReport, ThemeFit,
};
pub use logit::{
    bonferroni, bonferroni_z, fit_logistic_irls, log_likelihood, IrlsOptions, LogitFit,
};
pub use vif::{vif, VifEntry, VifReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error(
        "series has {len} points; decomposition with period {period} needs at least {required}"
    )]
    TooShort {
        len: usize,
        period: usize,
        required: usize,
    },
    #[error("period must be at least 2")]
    Period,
    #[error("zero variance: z-scores are undefined for a constant series")]
    ZeroVariance,
    #[error("need at least two defined values, got {0}")]
    TooFewValues(usize),
    #[error("outcome has a single class ({positives} of {n} positive)")]
    SingleClass { positives: usize, n: usize },
    #[error("no rows")]
    Empty,
    #[error("{rows} design rows but {outcomes} outcomes")]
    Shape { rows: usize, outcomes: usize },
    #[error("information matrix is singular; columns may be collinear")]
    Singular,
    #[error("family size must be at least 1")]
    FamilySize,
    #[error("need at least two non-intercept columns, got {0}")]
    TooFewColumns(usize),
    #[error("case {0} has no pipeline result")]
    MissingResult(String),
}
