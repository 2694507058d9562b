//! Hashtag-driven drug-use pattern mining.
//!
//! Posts are classified against a versioned lexicon, frequent hashtag sets
//! among positive posts surface candidate terms for human review, and the
//! resulting cohorts feed temporal, demographic, geospatial and follower
//! network reports.

pub mod classify;
pub mod corpus;
pub mod demographics;
pub mod geospatial;
pub mod hashtag;
pub mod itemsets;
pub mod lexicon;
pub mod network;
pub mod pipeline;
pub mod service;
pub mod store;
pub mod temporal;

pub use classify::{classify_posts, ClassificationConfig};
pub use corpus::{ingest, Cohort, Corpus, Geo, Post, Role, UserRecord};
pub use itemsets::{apriori, rules, AssociationRule, ItemSet, Transaction};
pub use lexicon::{Category, CurationDecision, DrugClass, Lexicon, Term, TermStatus, Verdict};
pub use network::{build_graph, DirectedGraph, GroupStats};
