//! Feedback tickets for reported answers and their review workflow.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Open,
    ExpertAnswered,
    DatasetUpdated,
    ForwardedToDev,
    Closed,
}

impl TicketStatus {
    pub const ALL: [TicketStatus; 5] = [
        TicketStatus::Open,
        TicketStatus::ExpertAnswered,
        TicketStatus::DatasetUpdated,
        TicketStatus::ForwardedToDev,
        TicketStatus::Closed,
    ];

    /// The expert answers the user, then either updates the dataset (answer
    /// was missing) or forwards to developers (answer was present).
    pub fn next(self) -> &'static [TicketStatus] {
        use TicketStatus::*;
        match self {
            Open => &[ExpertAnswered],
            ExpertAnswered => &[DatasetUpdated, ForwardedToDev],
            DatasetUpdated | ForwardedToDev => &[Closed],
            Closed => &[],
        }
    }

    pub fn can_transition(self, to: TicketStatus) -> bool {
        self.next().contains(&to)
    }

    pub fn name(self) -> &'static str {
        match self {
            TicketStatus::Open => "open",
            TicketStatus::ExpertAnswered => "expert_answered",
            TicketStatus::DatasetUpdated => "dataset_updated",
            TicketStatus::ForwardedToDev => "forwarded_to_dev",
            TicketStatus::Closed => "closed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl core::fmt::Display for TicketStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TicketError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: TicketStatus, to: TicketStatus },
    #[error("unknown ticket {0:?}")]
    UnknownTicket(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketNote {
    /// Milliseconds since the Unix epoch.
    pub at: u64,
    pub author: String,
    pub text: String,
    pub status: TicketStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackTicket {
    pub ticket_id: String,
    pub question: String,
    pub answer_given: String,
    pub reporter: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub status: TicketStatus,
    pub notes: Vec<TicketNote>,
}

impl FeedbackTicket {
    pub fn open(ticket_id: String, question: String, answer_given: String, reporter: String, now: u64) -> Self {
        Self {
            ticket_id,
            question,
            answer_given,
            reporter,
            created_at: now,
            status: TicketStatus::Open,
            notes: Vec::new(),
        }
    }

    fn last_time(&self) -> u64 {
        self.notes.last().map_or(self.created_at, |n| n.at)
    }

    /// Moves the ticket along the workflow and appends a note. Note times
    /// never go backwards, even if the wall clock does.
    pub fn transition(&mut self, to: TicketStatus, author: &str, note: &str, now: u64) -> Result<(), TicketError> {
        if !self.status.can_transition(to) {
            return Err(TicketError::IllegalTransition { from: self.status, to });
        }
        self.notes.push(TicketNote {
            at: now.max(self.last_time()),
            author: author.into(),
            text: note.into(),
            status: to,
        });
        self.status = to;
        Ok(())
    }

    pub fn allowed_next(&self) -> &'static [TicketStatus] {
        self.status.next()
    }
}
