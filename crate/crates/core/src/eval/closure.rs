use alloc::collections::BTreeMap;

use super::EvalError;
use crate::ids::{NodeId, ParaId};
use crate::labels::{Level, ParagraphLabels, RelevanceType};
use crate::process::ProcessModel;

fn check_level(model: &ProcessModel, node: &NodeId, level: Level) -> Result<(), EvalError> {
    let n = model.node(node).ok_or_else(|| EvalError::UnknownNode(node.clone()))?;
    if n.level != level {
        return Err(EvalError::WrongLevel {
            node: node.clone(),
            expected: level,
        });
    }
    Ok(())
}

/// Lifts irrelevant ancestors of relevant nodes to the strongest type among
/// their relevant children. Ancestors that already carry a relevant label
/// keep it, so closure is monotone and idempotent.
pub fn close_labels(labels: &ParagraphLabels, model: &ProcessModel) -> Result<ParagraphLabels, EvalError> {
    for node in labels.level2.keys() {
        check_level(model, node, Level::L2)?;
    }
    for node in labels.level3.keys() {
        check_level(model, node, Level::L3)?;
    }
    let mut out = labels.clone();
    let mut strongest_l3: BTreeMap<NodeId, RelevanceType> = BTreeMap::new();
    for (node, &t) in &labels.level3 {
        if !t.is_relevant() {
            continue;
        }
        let parent = model
            .parent(node)
            .map(|p| p.node_id.clone())
            .ok_or_else(|| EvalError::UnknownNode(node.clone()))?;
        let e = strongest_l3.entry(parent).or_default();
        *e = (*e).max(t);
    }
    for (parent, t) in strongest_l3 {
        let slot = out.level2.entry(parent).or_default();
        if !slot.is_relevant() {
            *slot = t;
        }
    }
    if !out.level1.is_relevant() {
        out.level1 = out.level2.values().copied().max().unwrap_or_default();
    }
    Ok(out)
}

/// True when every relevant node has relevant ancestors.
pub fn is_closed(labels: &ParagraphLabels, model: &ProcessModel) -> Result<bool, EvalError> {
    Ok(first_violation(labels, model)?.is_none())
}

pub(crate) fn first_violation(labels: &ParagraphLabels, model: &ProcessModel) -> Result<Option<NodeId>, EvalError> {
    for node in labels.level2.keys() {
        check_level(model, node, Level::L2)?;
    }
    for (node, t) in &labels.level3 {
        check_level(model, node, Level::L3)?;
        if t.is_relevant() {
            let parent = model.parent(node).expect("L3 nodes have parents");
            if !labels.get(Level::L2, &parent.node_id).is_relevant() {
                return Ok(Some(parent.node_id.clone()));
            }
        }
    }
    if !labels.level1.is_relevant() && labels.any_relevant(Level::L2) {
        return Ok(Some(model.root().node_id.clone()));
    }
    Ok(None)
}

/// Applies [`close_labels`] to every paragraph.
pub fn normalize_predictions(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    model: &ProcessModel,
) -> Result<BTreeMap<ParaId, ParagraphLabels>, EvalError> {
    preds
        .iter()
        .map(|(id, l)| Ok((id.clone(), close_labels(l, model)?)))
        .collect()
}
