pub mod backend;
pub mod config;
pub mod env;
pub mod eval;
pub mod exemplars;
pub mod oracle;
pub mod orchestrator;
pub mod par;
pub mod plan;
pub mod planner;
pub mod prompts;
pub mod sandbox;
pub mod skills;
pub mod suite;
pub mod text;
pub mod trajectory;
