//! Structural validation and deterministic stepping of declared FSMs.

use super::{FsmSpec, GuardPredicate, StateId};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// One structural defect found in an [`FsmSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmViolation {
    #[error("duplicate state id {0}")]
    DuplicateState(StateId),
    #[error("initial state {0} is not declared")]
    UnknownInitial(StateId),
    #[error("terminal state {0} is not declared")]
    UnknownTerminal(StateId),
    #[error("transition {from} --{trigger}--> {to} references undeclared state {unknown}")]
    UnknownTransitionState {
        from: StateId,
        to: StateId,
        trigger: String,
        unknown: StateId,
    },
    #[error("duplicate transition from {from} on {trigger}{}", guard_suffix(.guard))]
    DuplicateTransition {
        from: StateId,
        trigger: String,
        guard: Option<GuardPredicate>,
    },
    #[error("state {0} is unreachable from the initial state")]
    Unreachable(StateId),
    #[error("non-terminal state {0} has no outgoing transition")]
    DeadEnd(StateId),
}

fn guard_suffix(guard: &Option<GuardPredicate>) -> String {
    match guard {
        Some(g) => format!(" with guard {g:?}"),
        None => String::new(),
    }
}

/// Everything wrong with an FSM, in deterministic order. Empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FsmReport {
    pub violations: Vec<FsmViolation>,
}

impl FsmReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check an FSM for structural soundness: known state references, no
/// duplicate states or (from, trigger, guard) edges, every state reachable
/// from the initial state, and no non-terminal state without an exit.
pub fn validate_fsm(spec: &FsmSpec) -> FsmReport {
    let mut violations = Vec::new();

    let mut ids: BTreeSet<&StateId> = BTreeSet::new();
    for s in &spec.states {
        if !ids.insert(&s.id) {
            violations.push(FsmViolation::DuplicateState(s.id.clone()));
        }
    }

    if !ids.contains(&spec.initial) {
        violations.push(FsmViolation::UnknownInitial(spec.initial.clone()));
    }
    for t in &spec.terminal {
        if !ids.contains(t) {
            violations.push(FsmViolation::UnknownTerminal(t.clone()));
        }
    }

    let mut seen_edges: BTreeSet<(&StateId, &str, Option<GuardPredicate>)> = BTreeSet::new();
    for t in &spec.transitions {
        for endpoint in [&t.from, &t.to] {
            if !ids.contains(endpoint) {
                violations.push(FsmViolation::UnknownTransitionState {
                    from: t.from.clone(),
                    to: t.to.clone(),
                    trigger: t.trigger.clone(),
                    unknown: endpoint.clone(),
                });
            }
        }
        if !seen_edges.insert((&t.from, t.trigger.as_str(), t.guard)) {
            violations.push(FsmViolation::DuplicateTransition {
                from: t.from.clone(),
                trigger: t.trigger.clone(),
                guard: t.guard,
            });
        }
    }

    // Reachability over well-formed edges only.
    let mut adjacency: BTreeMap<&StateId, Vec<&StateId>> = BTreeMap::new();
    for t in &spec.transitions {
        if ids.contains(&t.from) && ids.contains(&t.to) {
            adjacency.entry(&t.from).or_default().push(&t.to);
        }
    }
    let mut reached: BTreeSet<&StateId> = BTreeSet::new();
    if ids.contains(&spec.initial) {
        let mut queue = VecDeque::from([&spec.initial]);
        reached.insert(&spec.initial);
        while let Some(s) = queue.pop_front() {
            for next in adjacency.get(s).into_iter().flatten() {
                if reached.insert(next) {
                    queue.push_back(next);
                }
            }
        }
    }
    for s in &spec.states {
        if !reached.contains(&s.id) && ids.contains(&spec.initial) {
            violations.push(FsmViolation::Unreachable(s.id.clone()));
        }
    }

    for s in &spec.states {
        let has_exit = spec.transitions.iter().any(|t| t.from == s.id);
        if !has_exit && !spec.terminal.contains(&s.id) {
            violations.push(FsmViolation::DeadEnd(s.id.clone()));
        }
    }

    FsmReport { violations }
}

/// Truth assignment for guard predicates; unlisted guards evaluate false.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuardEnv {
    values: BTreeMap<GuardPredicate, bool>,
}

impl GuardEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, guard: GuardPredicate, value: bool) -> Self {
        self.values.insert(guard, value);
        self
    }

    pub fn set(&mut self, guard: GuardPredicate, value: bool) {
        self.values.insert(guard, value);
    }

    pub fn holds(&self, guard: GuardPredicate) -> bool {
        *self.values.get(&guard).unwrap_or(&false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmStepError {
    #[error("current state {0} is not declared in the FSM")]
    UnknownState(StateId),
}

/// Deterministically step the FSM: given the current state and an observed
/// event token, return the successor state, or `None` when no edge fires.
///
/// Among edges matching (current, event), guarded edges are consulted first
/// in canonical order and the first satisfied guard wins; an unguarded edge
/// acts as the fallback. Validation rejects machines where this tie-break
/// could be ambiguous (duplicate (from, trigger, guard) triples).
pub fn step_fsm(
    spec: &FsmSpec,
    current: &StateId,
    event: &str,
    guards: &GuardEnv,
) -> Result<Option<StateId>, FsmStepError> {
    if !spec.has_state(current) {
        return Err(FsmStepError::UnknownState(current.clone()));
    }
    let mut matching: Vec<_> = spec
        .transitions
        .iter()
        .filter(|t| &t.from == current && t.trigger == event)
        .collect();
    matching.sort_by_key(|t| (t.guard.is_none(), t.guard, &t.to));
    for t in &matching {
        match t.guard {
            Some(g) if guards.holds(g) => return Ok(Some(t.to.clone())),
            Some(_) => continue,
            None => return Ok(Some(t.to.clone())),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::super::{canonical_fsm, FsmState, FsmTransition, StateCategory};
    use super::*;

    fn sid(s: &str) -> StateId {
        StateId::new(s)
    }

    fn state(id: &str, category: StateCategory) -> FsmState {
        FsmState {
            id: sid(id),
            name: id.to_string(),
            category,
            safety_annotations: Vec::new(),
        }
    }

    #[test]
    fn canonical_fsm_is_valid() {
        assert_eq!(validate_fsm(&canonical_fsm()), FsmReport::default());
    }

    #[test]
    fn isolated_non_terminal_state_is_a_dead_end() {
        let spec = FsmSpec {
            initial: sid("S1"),
            terminal: BTreeSet::new(),
            states: vec![state("S1", StateCategory::Motion)],
            transitions: vec![],
        };
        assert_eq!(validate_fsm(&spec).violations, vec![FsmViolation::DeadEnd(sid("S1"))]);
    }

    #[test]
    fn transition_to_undeclared_state_names_it() {
        let mut spec = canonical_fsm();
        spec.transitions.push(FsmTransition {
            from: sid("S3"),
            to: sid("S99"),
            trigger: "object_detected".into(),
            guard: None,
        });
        let report = validate_fsm(&spec);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            FsmViolation::UnknownTransitionState { unknown, .. } if unknown == &sid("S99")
        )));
        // The same (from, trigger, guard) triple already exists, so the
        // addition is also flagged as a duplicate edge.
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, FsmViolation::DuplicateTransition { .. })));
    }

    #[test]
    fn unreachable_state_is_reported() {
        let mut spec = canonical_fsm();
        spec.states.push(state("S99", StateCategory::Motion));
        spec.transitions.push(FsmTransition {
            from: sid("S99"),
            to: sid("S3"),
            trigger: "normal_flow".into(),
            guard: None,
        });
        let report = validate_fsm(&spec);
        assert_eq!(report.violations, vec![FsmViolation::Unreachable(sid("S99"))]);
    }

    #[test]
    fn step_follows_declared_edges() {
        let spec = canonical_fsm();
        let env = GuardEnv::new();
        assert_eq!(step_fsm(&spec, &sid("S1"), "power_on", &env).unwrap(), Some(sid("S2")));
        assert_eq!(step_fsm(&spec, &sid("S3"), "object_detected", &env).unwrap(), Some(sid("S5")));
        assert_eq!(
            step_fsm(&spec, &sid("S20"), "separation_restored", &env).unwrap(),
            Some(sid("S9"))
        );
    }

    #[test]
    fn step_without_matching_edge_is_none() {
        let spec = canonical_fsm();
        assert_eq!(step_fsm(&spec, &sid("S4"), "object_detected", &GuardEnv::new()).unwrap(), None);
    }

    #[test]
    fn step_from_unknown_state_errors() {
        let spec = canonical_fsm();
        let err = step_fsm(&spec, &sid("S99"), "power_on", &GuardEnv::new()).unwrap_err();
        assert_eq!(err, FsmStepError::UnknownState(sid("S99")));
    }

    #[test]
    fn guarded_edge_wins_only_when_guard_holds() {
        let spec = FsmSpec {
            initial: sid("A"),
            terminal: BTreeSet::from([sid("B"), sid("C")]),
            states: vec![
                state("A", StateCategory::Motion),
                state("B", StateCategory::Braking),
                state("C", StateCategory::Motion),
            ],
            transitions: vec![
                FsmTransition {
                    from: sid("A"),
                    to: sid("B"),
                    trigger: "go".into(),
                    guard: Some(GuardPredicate::WeatherSevere),
                },
                FsmTransition { from: sid("A"), to: sid("C"), trigger: "go".into(), guard: None },
            ],
        };
        let calm = GuardEnv::new();
        let stormy = GuardEnv::new().with(GuardPredicate::WeatherSevere, true);
        assert_eq!(step_fsm(&spec, &sid("A"), "go", &calm).unwrap(), Some(sid("C")));
        assert_eq!(step_fsm(&spec, &sid("A"), "go", &stormy).unwrap(), Some(sid("B")));
    }
}
