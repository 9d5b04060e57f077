//! Group-equivariant hard-alignment string-to-string transduction.
//!
//! The model couples a group-equivariant word translator with a
//! group-invariant alignment network; marginalizing the translator over the
//! aligner's distribution gives a sentence likelihood that is equivariant to
//! permutations of a lexical class (swapping `jump` for `walk` in a command
//! swaps `JUMP` for `WALK` in its prediction).  Built for the SCAN
//! command-to-action-sequence task.

pub mod aligner;
pub mod analysis;
pub mod data;
pub mod group;
pub mod layers;
pub mod tensor;
pub mod train;
pub mod transducer;

pub use data::{builtin_lexicon, Dataset, LexicalClassMap, SentencePair, SplitName, Vocabulary};
pub use group::{CyclicShiftGroup, GroupElement, ProductGroupElement, TokenAction};
