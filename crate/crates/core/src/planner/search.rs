use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use super::{Fact, Plan, PlannerError, PlanningProblem};

pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    /// Maximum number of distinct states the search may generate.
    pub node_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { node_limit: DEFAULT_NODE_LIMIT }
    }
}

type Bits = Box<[u64]>;

struct Masks {
    pos: Bits,
    neg: Bits,
}

impl Masks {
    fn new(words: usize) -> Self {
        Self { pos: vec![0; words].into(), neg: vec![0; words].into() }
    }

    fn from_facts(problem: &PlanningProblem, facts: &[Fact], words: usize) -> Self {
        let mut m = Self::new(words);
        for f in facts {
            let i = problem.propositions.get_index_of(&f.proposition).expect("validated");
            let target = if f.value { &mut m.pos } else { &mut m.neg };
            target[i / 64] |= 1 << (i % 64);
        }
        m
    }

    fn holds_in(&self, state: &[u64]) -> bool {
        state
            .iter()
            .zip(self.pos.iter().zip(self.neg.iter()))
            .all(|(s, (p, n))| s & p == *p && s & n == 0)
    }
}

struct CompiledOp {
    pre: Masks,
    eff: Masks,
    deferrable: bool,
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == *x)
}

fn any_bit(a: &[u64]) -> bool {
    a.iter().any(|w| *w != 0)
}


fn or_into(acc: &mut [u64], bits: &[u64]) {
    for (a, b) in acc.iter_mut().zip(bits) {
        *a |= b;
    }
}

fn overlaps(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

/// Marks operators that can always be postponed until just before their
/// first consumer: they add a single fact, and no other operator writes that
/// fact, needs it false, or writes what their own preconditions read.
/// Slot requests have this shape.
fn mark_deferrable(ops: &mut [CompiledOp], goal: &Masks) {
    let words = goal.pos.len();
    for i in 0..ops.len() {
        let mut written: Vec<u64> = vec![0; words];
        let mut needed_false: Vec<u64> = goal.neg.to_vec();
        for other in ops.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o) {
            or_into(&mut written, &other.eff.pos);
            or_into(&mut written, &other.eff.neg);
            or_into(&mut needed_false, &other.pre.neg);
        }
        let op = &ops[i];
        ops[i].deferrable = !any_bit(&op.eff.neg)
            && op.eff.pos.iter().map(|w| w.count_ones()).sum::<u32>() == 1
            && !overlaps(&op.pre.pos, &written)
            && !overlaps(&op.pre.neg, &written)
            && !overlaps(&op.eff.pos, &written)
            && !overlaps(&op.eff.pos, &needed_false);
    }
}

pub fn solve(problem: &PlanningProblem) -> Result<Plan, PlannerError> {
    solve_with(problem, SolveOptions::default())
}

/// Breadth-first search for a shortest plan.
///
/// Operators that only add facts nobody else touches (slot requests) are
/// postponed: such an operator may only run as part of the block directly
/// in front of an operator, or the goal, that needs every fact the block
/// added. Any plan can be rearranged into that form without growing, so
/// plan length stays optimal while the orderings of independent requests
/// are never enumerated. Steps that leave the state unchanged are skipped
/// for the same reason.
///
/// Successors are generated in operator declaration order and each state
/// keeps the first path that reached it. The result is fully deterministic.
pub fn solve_with(problem: &PlanningProblem, options: SolveOptions) -> Result<Plan, PlannerError> {
    problem.validate()?;
    let words = problem.propositions.len().div_ceil(64).max(1);

    let mut ops: Vec<CompiledOp> = problem
        .operators
        .iter()
        .map(|o| CompiledOp {
            pre: Masks::from_facts(problem, &o.preconditions, words),
            eff: Masks::from_facts(problem, &o.effects, words),
            deferrable: false,
        })
        .collect();
    let goal = Masks::from_facts(problem, &problem.goal, words);
    mark_deferrable(&mut ops, &goal);

    // facts a postponed operator may add
    let mut deferred_facts: Bits = vec![0; words].into();
    for op in ops.iter().filter(|o| o.deferrable) {
        for (d, e) in deferred_facts.iter_mut().zip(op.eff.pos.iter()) {
            *d |= e;
        }
    }
    // consumers of a pending block: what they need from the block, and what
    // must already hold because no postponed operator can supply it
    let settled = |m: &Masks| Masks {
        pos: m.pos.iter().zip(deferred_facts.iter()).map(|(p, d)| p & !d).collect(),
        neg: m.neg.clone(),
    };
    let consumers: Vec<(Bits, Masks)> = ops
        .iter()
        .filter(|o| !o.deferrable)
        .map(|o| &o.pre)
        .chain(std::iter::once(&goal))
        .map(|m| (m.pos.clone(), settled(m)))
        .collect();

    let mut initial: Bits = vec![0; 2 * words].into();
    for p in problem.initial.true_propositions() {
        let i = problem.propositions.get_index_of(p).expect("validated");
        initial[i / 64] |= 1 << (i % 64);
    }

    // node id -> (parent id, operator index); a node is the state followed
    // by the facts added by the pending block
    let mut parents: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX)];
    let mut nodes: Vec<Bits> = vec![initial.clone()];
    let mut seen: HashMap<Bits, u32> = HashMap::from([(initial, 0)]);
    let mut queue = VecDeque::from([0u32]);

    while let Some(node) = queue.pop_front() {
        let current = nodes[node as usize].clone();
        let (state, pending) = current.split_at(words);
        if goal.holds_in(state) {
            return Ok(reconstruct(problem, &parents, node));
        }
        for (op_index, op) in ops.iter().enumerate() {
            if !op.pre.holds_in(state) {
                continue;
            }
            let mut next: Vec<u64> = state
                .iter()
                .zip(op.eff.pos.iter().zip(op.eff.neg.iter()))
                .map(|(s, (add, del))| (s & !del) | add)
                .collect();
            if op.deferrable {
                if subset(&op.eff.pos, state) {
                    continue;
                }
                let block: Vec<u64> = pending.iter().zip(op.eff.pos.iter()).map(|(p, e)| p | e).collect();
                let useful = consumers.iter().any(|(needs, now)| subset(&block, needs) && now.holds_in(state));
                if !useful {
                    continue;
                }
                next.extend(block);
            } else {
                // a step that changes nothing can be dropped from any plan
                if !subset(pending, &op.pre.pos) || next.as_slice() == state {
                    continue;
                }
                next.extend(std::iter::repeat_n(0, words));
            }
            if let Entry::Vacant(slot) = seen.entry(next.into()) {
                if nodes.len() >= options.node_limit {
                    return Err(PlannerError::SearchBudgetExceeded(options.node_limit));
                }
                let id = nodes.len() as u32;
                nodes.push(slot.key().clone());
                slot.insert(id);
                parents.push((node, op_index as u32));
                queue.push_back(id);
            }
        }
    }
    Err(PlannerError::Unsolvable)
}

fn reconstruct(problem: &PlanningProblem, parents: &[(u32, u32)], mut node: u32) -> Plan {
    let mut steps = Vec::new();
    while node != 0 {
        let (parent, op) = parents[node as usize];
        steps.push(problem.operators[op as usize].name.clone());
        node = parent;
    }
    steps.reverse();
    Plan { steps }
}
