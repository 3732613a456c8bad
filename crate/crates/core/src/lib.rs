//! Structured memory anchors for long conversations.
//!
//! A conversation is turned offline into three stores (entity profiles,
//! event tuples with temporal traces, and topic clusters), saved as a
//! portable knowledge base. At query time the stores are searched, and the
//! best anchors are formatted into an answer prompt next to whatever a host
//! memory system retrieved.
//!
//! ```no_run
//! use anchorkit::{backend::{HashEmbedder, MockProvider}, build, ingest, kb, retrieval};
//!
//! let conv = ingest::load_conversation("conversation.json")?;
//! let provider = MockProvider::from_dir("fixtures");
//! let out = build::build_kb(&conv, &Default::default(), build::BuildMode::Default, &provider, "now")?;
//! kb::save_kb(&out.kb, "kb")?;
//! let kb = kb::load_kb("kb")?;
//! let sel = retrieval::select_anchors(&kb, &HashEmbedder, "Caroline MedLLM", &Default::default(), Default::default())?;
//! # Ok::<(), anchorkit::Error>(())
//! ```

pub mod backend;
pub mod build;
pub mod entity;
mod error;
pub mod event;
pub mod gain;
pub mod ingest;
pub mod injection;
pub mod kb;
pub mod par;
pub mod retrieval;
pub mod temporal;
pub mod text;
pub mod topic;

pub use error::{Error, Result};
