//! Common-ground tracking for open-domain conversational question answering.
//!
//! Each turn a generator distils new propositions from the conversation,
//! they accumulate in a [`CommonGround`], and a selector marks the subset
//! relevant to the current question. The selected and full views are then
//! rendered into queries for a BM25 retriever and an extractive reader.

pub mod adapter;
pub mod annotate;
pub mod config;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod eval;
pub mod gold;
pub mod model;
pub mod reading;
pub mod retrieval;
pub mod service;
pub mod setups;

pub use error::{Error, Result};
pub use model::{
    CommonGround, Conversation, ConversationContext, DocumentContext, Passage, Proposition, Status, Turn,
};
