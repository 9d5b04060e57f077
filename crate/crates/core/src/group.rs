//! Finite cyclic shift groups, their actions on tokens and sentences,
//! and orbit enumeration.
//!
//! A cyclic shift group of order `p` is the permutation group generated by
//! the single cycle that moves each of `p` objects one place along.  Its
//! elements are represented by shift amounts `0..p`, composed by addition
//! mod `p`.  The group acts on a vocabulary by rotating the members of one
//! designated token class and fixing every other token.

use crate::data::TokenId;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("group order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("alignment position {pos} out of range for {len} product components")]
    AlignmentOutOfRange { pos: usize, len: usize },
    #[error("group order must be at least 1")]
    EmptyGroup,
    #[error("token class has {tokens} tokens but the group has order {order}")]
    ClassSizeMismatch { tokens: usize, order: usize },
    #[error("token class contains duplicate token id {0}")]
    DuplicateClassToken(TokenId),
}

/// The group generated by a single `p`-cycle, with elements 0..p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CyclicShiftGroup {
    order: usize,
}

impl CyclicShiftGroup {
    pub fn new(order: usize) -> Result<Self, GroupError> {
        if order == 0 {
            return Err(GroupError::EmptyGroup);
        }
        Ok(CyclicShiftGroup { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement { shift: 0, order: self.order }
    }

    /// Element shifting by `shift` places (reduced mod the order).
    pub fn element(&self, shift: usize) -> GroupElement {
        GroupElement { shift: shift % self.order, order: self.order }
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.order).map(move |s| GroupElement { shift: s, order: self.order })
    }
}

/// One element of a [`CyclicShiftGroup`], identified by its shift amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement {
    shift: usize,
    order: usize,
}

impl GroupElement {
    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_identity(&self) -> bool {
        self.shift == 0
    }
}

pub fn compose(a: GroupElement, b: GroupElement) -> Result<GroupElement, GroupError> {
    if a.order != b.order {
        return Err(GroupError::OrderMismatch(a.order, b.order));
    }
    Ok(GroupElement { shift: (a.shift + b.shift) % a.order, order: a.order })
}

pub fn inverse(a: GroupElement) -> GroupElement {
    GroupElement { shift: (a.order - a.shift) % a.order, order: a.order }
}

/// An element of the product group G^N: one group element per input position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductGroupElement {
    components: Vec<GroupElement>,
}

impl ProductGroupElement {
    pub fn new(components: Vec<GroupElement>) -> Result<Self, GroupError> {
        if let Some(first) = components.first() {
            for c in &components[1..] {
                if c.order != first.order {
                    return Err(GroupError::OrderMismatch(first.order, c.order));
                }
            }
        }
        Ok(ProductGroupElement { components })
    }

    pub fn components(&self) -> &[GroupElement] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// The action of a cyclic shift group on a vocabulary: members of
/// `class_tokens` are rotated in declaration order, all other tokens are
/// fixed points.
#[derive(Debug, Clone)]
pub struct TokenAction {
    group: CyclicShiftGroup,
    class_tokens: Vec<TokenId>,
    // position in class_tokens, indexed by token id; None = fixed point
    class_pos: Vec<Option<usize>>,
}

impl TokenAction {
    pub fn new(
        group: CyclicShiftGroup,
        class_tokens: Vec<TokenId>,
        vocab_size: usize,
    ) -> Result<Self, GroupError> {
        if class_tokens.len() != group.order() {
            return Err(GroupError::ClassSizeMismatch {
                tokens: class_tokens.len(),
                order: group.order(),
            });
        }
        let mut class_pos = vec![None; vocab_size];
        for (i, &t) in class_tokens.iter().enumerate() {
            if class_pos[t].is_some() {
                return Err(GroupError::DuplicateClassToken(t));
            }
            class_pos[t] = Some(i);
        }
        Ok(TokenAction { group, class_tokens, class_pos })
    }

    pub fn group(&self) -> CyclicShiftGroup {
        self.group
    }

    pub fn class_tokens(&self) -> &[TokenId] {
        &self.class_tokens
    }
}

pub fn act_on_token(g: GroupElement, action: &TokenAction, token: TokenId) -> TokenId {
    match action.class_pos.get(token).copied().flatten() {
        Some(i) => action.class_tokens[(i + g.shift) % action.group.order()],
        None => token,
    }
}

pub fn act_on_sentence(g: GroupElement, action: &TokenAction, sentence: &[TokenId]) -> Vec<TokenId> {
    sentence.iter().map(|&t| act_on_token(g, action, t)).collect()
}

/// Position-dependent action of a product element on an aligned output:
/// output position `m` is acted on by the component at its aligned input
/// position `a[m]` (1-based positions).
pub fn act_aligned(
    g: &ProductGroupElement,
    action: &TokenAction,
    y: &[TokenId],
    alignment: &[usize],
) -> Result<Vec<TokenId>, GroupError> {
    if alignment.len() != y.len() {
        return Err(GroupError::AlignmentOutOfRange { pos: alignment.len(), len: y.len() });
    }
    let mut out = Vec::with_capacity(y.len());
    for (&tok, &pos) in y.iter().zip(alignment) {
        if pos == 0 || pos > g.len() {
            return Err(GroupError::AlignmentOutOfRange { pos, len: g.len() });
        }
        out.push(act_on_token(g.components[pos - 1], action, tok));
    }
    Ok(out)
}

/// Componentwise action of a product element on a sentence of the same
/// length: position `n` is acted on by component `n`.
pub fn act_componentwise(
    g: &ProductGroupElement,
    action: &TokenAction,
    x: &[TokenId],
) -> Result<Vec<TokenId>, GroupError> {
    if g.len() != x.len() {
        return Err(GroupError::AlignmentOutOfRange { pos: g.len(), len: x.len() });
    }
    Ok(x.iter().zip(g.components()).map(|(&tok, &c)| act_on_token(c, action, tok)).collect())
}

/// All distinct images of `(x, y)` under the diagonal action of the group.
pub fn orbit(
    x: &[TokenId],
    y: &[TokenId],
    input_action: &TokenAction,
    output_action: &TokenAction,
    group: CyclicShiftGroup,
) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    let mut seen = BTreeSet::new();
    for g in group.elements() {
        seen.insert((act_on_sentence(g, input_action, x), act_on_sentence(g, output_action, y)));
    }
    seen.into_iter().collect()
}
