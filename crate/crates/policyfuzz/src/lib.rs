//! Differential checker for browser read-blocking policies (CORB and
//! relatives), built around a coverage-guided fuzzer over simulated web
//! applications.
//!
//! Instead of running apps against a real database and session store, the
//! runtime synthesizes query results and session values from constraints,
//! so a single 32-bit seed indexes a full application state. Responses are
//! fed to several policy engines; a post-campaign frequency oracle decides
//! which responses looked confidential and flags engine decisions that
//! disagree.

pub mod appscript;
pub mod config;
pub mod digest;
pub mod fuzzer;
pub mod http;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod synth;

pub use config::{Budget, CampaignConfig, PolicyConfig};
pub use http::{HttpRequest, HttpResponse, PolicyDecision, Reason, Scheme, Verdict};
pub use oracle::{Granularity, WeaknessClass, WeaknessReport};
pub use synth::{SynthHub, SynthOptions};
