pub mod error;
pub mod geometry;
pub mod radial;
pub mod grid;
pub mod serrin;
pub mod two_phase;
pub mod runner;
pub mod acceptance;
