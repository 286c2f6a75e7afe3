use thiserror::Error;

use crate::model::AssumptionId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model violates one of the standing assumptions of the stopping problem.
    #[error("model refused: {} ({detail})", list_ids(.assumptions))]
    AssumptionFailed {
        assumptions: Vec<AssumptionId>,
        detail: String,
    },

    /// The one-sided limit extrapolation did not settle.
    #[error("left-limit extrapolation did not converge: {0}")]
    NotConverged(String),

    /// The estimates fall outside the hypotheses of the threshold characterization.
    #[error("outside theorem hypotheses: {0}")]
    OutsideHypotheses(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

fn list_ids(ids: &[AssumptionId]) -> String {
    let names = ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ");
    let verb = if ids.len() == 1 { "fails" } else { "fail" };
    format!("{names} {verb}")
}
