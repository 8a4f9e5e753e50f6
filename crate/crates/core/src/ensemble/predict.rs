//! Running ensemble members and voting on their outputs.

use crate::model::{stack_examples, Model};
use crate::nn::softmax_rows;
use crate::tensor::Tensor;

use super::vote::{majority_vote, ProbVector, VoteDiagnostics, VoteRecord};
use super::EnsembleError;

/// A named model plus the implicit contract that its input tensor matches
/// what the model was built for (embedding vector or image).
pub struct EnsembleMember {
    pub name: String,
    pub model: Model,
}

/// Evaluates one model on one example and wraps the softmax output.
pub fn member_vote(
    name: &str,
    model: &Model,
    input: &Tensor,
) -> Result<VoteRecord, EnsembleError> {
    let batch = stack_examples(std::slice::from_ref(input)).map_err(|e| {
        EnsembleError::InvalidConfig(format!("member {name}: bad input: {e}"))
    })?;
    let logits = model.forward_eval(&batch).map_err(|e| {
        EnsembleError::InvalidConfig(format!(
            "member {name}: input does not match the model: {e}"
        ))
    })?;
    let probs = softmax_rows(&logits);
    let row = probs.data().to_vec();
    Ok(VoteRecord::new(name, ProbVector::new(row)?))
}

/// Runs every member on its own input (one per member, in member order) and
/// majority-votes the results.
pub fn ensemble_predict(
    members: &[EnsembleMember],
    inputs: &[Tensor],
) -> Result<(usize, Vec<VoteRecord>, VoteDiagnostics), EnsembleError> {
    if members.len() < 2 {
        return Err(EnsembleError::InvalidConfig(format!(
            "an ensemble needs at least 2 members, got {}",
            members.len()
        )));
    }
    if members.len() != inputs.len() {
        return Err(EnsembleError::InvalidConfig(format!(
            "{} members but {} inputs",
            members.len(),
            inputs.len()
        )));
    }
    let classes = members[0].model.config.num_classes();
    for m in members {
        let c = m.model.config.num_classes();
        if c != classes {
            return Err(EnsembleError::ClassCountMismatch {
                lhs: classes,
                rhs: c,
            });
        }
    }

    let mut votes = Vec::with_capacity(members.len());
    for (m, input) in members.iter().zip(inputs) {
        votes.push(member_vote(&m.name, &m.model, input)?);
    }
    let (winner, diagnostics) = majority_vote(&votes)?;
    Ok((winner, votes, diagnostics))
}
