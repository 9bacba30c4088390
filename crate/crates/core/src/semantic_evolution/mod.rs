//! Class name -> curated definition -> LLM-expanded description.
//!
//! Definitions come from a local JSON store; the expansion step talks to a
//! chat-completion endpoint through [`ChatBackend`] and memoizes every answer
//! on disk, keyed by the prompt and model name.

mod corpus;
mod embeddings;
mod llm;
mod paraphrase_cache;
mod prompt;

pub use corpus::{
    build_corpus, semantic_text, ClassSemantics, Corpus, DefinitionStore, NameTemplate,
    Paraphraser, SemanticSource,
};
pub use embeddings::{SemanticEmbeddingSet, SemanticTable};
pub use llm::{
    retry_delays, BackendError, ChatBackend, ChatMessage, ChatRequest, HttpBackend, LlmConfig,
};
pub use paraphrase_cache::{cache_key, ParaphraseCache};
pub use prompt::build_prompt;
