//! Concept oracle backed by a chat-completions endpoint.
//!
//! [`LlmOracle`] renders prompt templates, sends them through a
//! [`ChatTransport`] with retry and backoff, and parses the JSON replies into
//! keyphrase bags, concepts, weighted proposals and annotation values.
//! Caching lives in the core [`Annotator`](ccbm_core::oracle::Annotator), so
//! this crate only ever sees cache misses.

mod oracle;
pub mod parse;
mod retry;
pub mod templates;
mod transport;

pub use oracle::{LlmConfig, LlmOracle, API_KEY_ENV};
pub use retry::{CallFailure, RetryPolicy, Sleeper};
pub use templates::{TemplateError, Templates};
pub use transport::{reply_content, ChatMessage, ChatRequest, ChatTransport, HttpTransport, TransportError};
