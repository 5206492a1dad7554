use thiserror::Error;

use crate::chain::{BlockId, Slot, ValidatorId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("unknown parent {0}")]
    UnknownParent(BlockId),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("duplicate block id {0}")]
    DuplicateId(BlockId),
    #[error("validator {proposer} already proposed a block for slot {slot}")]
    EquivocationRejected { slot: Slot, proposer: ValidatorId },
    #[error("block slot {slot} is not after parent slot {parent_slot}")]
    SlotNotAfterParent { slot: Slot, parent_slot: Slot },
    #[error("vote of slot {vote_slot} targets block {target} from later slot {target_slot}")]
    VoteForFutureBlock { vote_slot: Slot, target: BlockId, target_slot: Slot },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("need {needed} validators, have {available}")]
    InsufficientValidators { needed: usize, available: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("condition violated: {0}")]
    ConditionViolated(String),
    #[error("honest attestors hold a majority ({honest} of {committee})")]
    HonestMajority { honest: u64, committee: u64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("search space of {size} exceeds bound {bound}")]
    ExplosionGuard { size: u128, bound: u128 },
    #[error("no candidate survived the compliant-tip scan")]
    EmptyCandidateSet,
    #[error("total stake is zero")]
    ZeroStake,
    #[error("slashable attempt: {0}")]
    SlashableAttempt(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 2,
            Error::ExplosionGuard { .. } => 4,
            _ => 3,
        }
    }
}
