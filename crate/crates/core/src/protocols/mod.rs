//! Reference protocols.

mod ben_or;
mod full_info;
mod renaming;
mod set_agreement;

pub use ben_or::{async_filter, ben_or_round, BenOr, BenOrState};
pub use full_info::{round_one_inputs, FullInformation};
pub use renaming::{echo_vector_round, rank, renaming_round, Renaming, RenamingState, VVector};
pub use set_agreement::{boost_participants, decision_inbox, set_agreement_round, SetAgreement, SetAgreementState};

use serde::{Deserialize, Serialize};

/// Deliberate bugs used to check that the verdict machinery notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Broadcast nothing in round 2.
    SkipRound2Echo,
}
