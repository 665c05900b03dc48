//! Core of a retrieval-augmented question-answering toolkit.
//!
//! Everything here is `no_std` + `alloc`: document parsing, chunking, BM25 and
//! dense retrieval, prompt rendering, evaluation metrics, failure diagnosis and
//! the feedback-ticket state machine. Side effects (files, network, clocks)
//! are reached through the [`retrieval::Embedder`], [`generation::LanguageModel`]
//! and [`Clock`] traits, implemented by the `ragkit` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chunking;
pub mod config;
pub mod corpus;
pub mod diagnosis;
pub mod evaluation;
pub mod generation;
pub mod pipeline;
pub mod retrieval;
pub mod text;
pub mod ticket;

use core::sync::atomic::{AtomicU64, Ordering};
use core::time::Duration;

/// Monotonic time source, as an offset from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Deterministic clock that advances by a fixed step on every reading.
#[derive(Debug)]
pub struct StepClock {
    ticks: AtomicU64,
    step: Duration,
}

impl StepClock {
    pub fn new(step: Duration) -> Self {
        Self {
            ticks: AtomicU64::new(0),
            step,
        }
    }
}

impl Default for StepClock {
    fn default() -> Self {
        Self::new(Duration::from_millis(1))
    }
}

impl Clock for StepClock {
    fn now(&self) -> Duration {
        let t = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.step.saturating_mul(t.min(u64::from(u32::MAX)) as u32)
    }
}
