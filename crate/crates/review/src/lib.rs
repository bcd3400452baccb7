//! Review service: an HTTP API over evaluated runs for paging through
//! linking errors, recording human verdicts and reading metrics revised by
//! those verdicts. Verdicts persist in an append-only log next to each run
//! artifact.

mod api;
mod store;

pub use api::{router, serve, DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE};
pub use store::{
    adjudication_log_path, AdjudicationInput, ErrorDetail, ErrorFilter, ErrorItem, ErrorPage, ReviewError,
    ReviewStore, RevisedMetrics, RunMetrics, RunSource, RunSummary, Span, StatusFilter,
};
