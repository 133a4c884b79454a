//! Qualification retrieval over an integrated component database and
//! qualification catalog.

pub mod cleaning;
pub mod corpus;
pub mod cost;
pub mod criteria;
pub mod dataset;
pub mod domain;
pub mod llm;
pub mod metrics;
pub mod rag;
pub mod retrieval;
pub mod vector;
pub mod vkg;
