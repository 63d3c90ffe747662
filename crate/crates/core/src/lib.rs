//! Abstractive textual policy summarization for gridworld agents.
//!
//! The pipeline runs scripted agents in an Unlock-style gridworld
//! ([`gridworld`], [`policies`]), captions every step ([`captioner`]) into a
//! textual experience buffer ([`teb`]), and condenses the buffer into a
//! natural-language policy summary with a budget-bounded hierarchical LLM
//! pipeline ([`summarizer`] over [`llm`]). [`highlights`] implements the
//! HIGHLIGHTS / HIGHLIGHTS-DIV demonstration baseline and [`evaluation`]
//! scores summaries against annotated key points.

pub mod captioner;
pub mod evaluation;
pub mod gridworld;
pub mod highlights;
pub mod llm;
pub mod policies;
pub mod summarizer;
pub mod teb;
pub mod util;
