pub mod backend;
pub mod compiler;
pub mod engine;
pub mod eval;
pub mod ir;
pub mod token;
