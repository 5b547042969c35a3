//! Macro placement on bookshelf designs: parsing, graph construction,
//! metrics, the sequential placement environment, standard-cell completion
//! and SVG output.

pub mod bookshelf;
pub mod env;
pub mod geom;
pub mod graph;
pub mod metrics;
pub mod render;
pub mod seed;
pub mod stdplace;

pub use bookshelf::{parse_aux, BookshelfError, Netlist};
pub use env::{Action, EnvConfig, PlacementEnv};
pub use geom::{Point, Rect};
pub use metrics::PlacementSnapshot;
