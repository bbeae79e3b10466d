//! Graded (counting) modal logic over finite Kripke structures.

pub mod equivalence;
pub mod charform;
pub mod error;
pub mod folink;
pub mod game;
pub mod kripke;
pub mod random;
pub mod semantics;
pub mod syntax;

pub use error::{Error, Result};
pub use kripke::{KripkeStructure, PointedStructure, Signature, WorldId};
pub use syntax::{Formula, FragmentBound};
