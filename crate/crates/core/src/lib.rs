pub mod backend;
pub mod cfg;
pub mod corpus;
pub mod executor;
pub mod inspector;
pub mod lang;
pub mod mutator;
pub mod pipeline;
pub mod program;
pub mod prompts;
pub mod trace;
