pub mod cli;
pub mod config;
pub mod exec;
pub mod game;
pub mod llm;
pub mod montecarlo;
pub mod pipeline;
pub mod simworld;
pub mod theory;
