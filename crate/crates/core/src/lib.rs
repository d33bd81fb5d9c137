pub mod backend;
pub mod lexicon;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod template;
