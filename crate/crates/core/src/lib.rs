//! Evidence-table extraction from parsed clinical documents.
//!
//! Two extraction agents fill the same schema independently: one reads the
//! whole document, the other retrieves pages on demand through tools. The
//! reconciler accepts agreements and re-reads the disputed pages for each
//! conflict. Every model call lands in a usage ledger, and runs are stored
//! with their provenance so reviewers can accept or correct single cells.
//!
//! [`pipeline::Pipeline`] ties the stages together; [`evaluation`] scores
//! stored runs against gold annotations.

pub mod backend;
pub mod clock;
pub mod docmodel;
pub mod retrieval;
pub mod schema;
pub mod text;
pub mod agents;
pub mod prompts;
pub mod reconciler;
pub mod store;
pub mod evaluation;
pub mod pipeline;
