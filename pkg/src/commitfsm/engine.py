"""Generic state machine generation pipeline.

The pipeline is protocol-agnostic: it is initialised with a declarative
description of the state components and messages plus one transition rule
per message, and produces a machine in four stages:

1. enumerate every combination of component values,
2. generate one transition per (state, message) from the rule set,
3. prune states unreachable from the start state,
4. merge states with identical outgoing behaviour, alternating with
   pruning until neither stage changes anything.

Every stage is a pure function from machine to machine, so independent
generations can run concurrently without shared state.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, replace
from typing import Callable, Mapping

from .fsm import (
    FINISH,
    ComponentSpec,
    State,
    StateMachine,
    Transition,
    check_components,
    reachable_names,
    state_counts,
    state_name,
)

# A rule maps a state vector to (actions, successor vector or FINISH).
TransitionRule = Callable[[tuple], tuple[tuple[str, ...], "tuple | str"]]
TransitionRuleSet = Mapping[str, TransitionRule]

StateAnnotator = Callable[[tuple], tuple[str, ...]]
TransitionAnnotator = Callable[[tuple, str, tuple[str, ...], "tuple | str"], tuple[str, ...]]


class SpecError(ValueError):
    """The meta-model description itself is malformed."""


class GenerationError(RuntimeError):
    """A transition rule produced an out-of-domain result."""

    def __init__(self, state: str, message: str, detail: str):
        super().__init__(f"rule for {message!r} failed on state {state!r}: {detail}")
        self.state = state
        self.message = message


@dataclass(frozen=True)
class MetaModelSpec:
    """Declarative description of one state machine family member."""

    components: tuple[ComponentSpec, ...]
    messages: tuple[str, ...]
    actions: tuple[str, ...]
    replication_factor: int
    fault_tolerance: int
    start_vector: tuple

    def __post_init__(self):
        if not self.components:
            raise SpecError("at least one state component is required")
        if not self.messages:
            raise SpecError("at least one message is required")
        try:
            check_components(self.components)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        if len(self.start_vector) != len(self.components) or not all(
            c.contains(v) for v, c in zip(self.start_vector, self.components)
        ):
            raise SpecError("start_vector is not a valid component assignment")


def enumerate_states(spec: MetaModelSpec) -> list[tuple]:
    """All combinations of component values, lexicographic in declaration order."""
    return list(itertools.product(*(c.domain() for c in spec.components)))


def generate_transitions(
    spec: MetaModelSpec,
    rules: TransitionRuleSet,
    states: list[tuple],
    *,
    annotate_state: StateAnnotator | None = None,
    annotate_transition: TransitionAnnotator | None = None,
    finish_annotations: tuple[str, ...] = (),
) -> StateMachine:
    """Apply every rule to every state, producing the raw (unpruned) machine.

    The rule set must define exactly one rule per declared message; each rule
    must return actions from the declared alphabet and a successor inside the
    component domain (or FINISH).  The finish state is appended with no
    outgoing transitions.
    """
    missing = [m for m in spec.messages if m not in rules]
    if missing:
        raise SpecError(f"rule set lacks rules for messages {missing}")
    components = spec.components
    name_of = {v: state_name(v, components) for v in states}
    action_set = set(spec.actions)

    state_map: dict[str, State] = {}
    for vector in states:
        name = name_of[vector]
        transitions: dict[str, Transition] = {}
        for message in spec.messages:
            actions, succ = rules[message](vector)
            actions = tuple(actions)
            for action in actions:
                if action not in action_set:
                    raise GenerationError(name, message, f"undeclared action {action!r}")
            if isinstance(succ, str):
                if succ != FINISH:
                    raise GenerationError(name, message, f"bad successor {succ!r}")
                dest = FINISH
            else:
                dest = name_of.get(succ)
                if dest is None:
                    raise GenerationError(
                        name, message, f"successor {succ!r} outside the component domain"
                    )
            notes = (
                tuple(annotate_transition(vector, message, actions, succ))
                if annotate_transition
                else ()
            )
            transitions[message] = Transition(message, actions, dest, notes)
        notes = tuple(annotate_state(vector)) if annotate_state else ()
        state_map[name] = State(name, transitions, notes)

    state_map[FINISH] = State(FINISH, {}, tuple(finish_annotations))
    start = name_of.get(spec.start_vector)
    if start is None:
        raise SpecError("start_vector is not among the enumerated states")
    return StateMachine(
        replication_factor=spec.replication_factor,
        fault_tolerance=spec.fault_tolerance,
        components=components,
        messages=spec.messages,
        actions=spec.actions,
        states=state_map,
        start_state=start,
        finish_state=FINISH,
    )


def prune_unreachable(machine: StateMachine) -> StateMachine:
    """Drop every state not reachable from the start state by forward traversal."""
    reachable = reachable_names(machine)
    if len(reachable) == len(machine.states):
        return machine
    states = {n: s for n, s in machine.states.items() if n in reachable}
    return replace(machine, states=states)


# Sentinel for "the state itself" in merge signatures.
_SELF = object()


def _traversal_order(machine: StateMachine) -> dict[str, int]:
    """Breadth-first discovery index from the start state, messages in declared order.

    States unreachable from the start (possible on a not-yet-pruned machine)
    are appended afterwards in name order, so the result is total and
    deterministic.
    """
    states = machine.states
    order: dict[str, int] = {}
    if machine.start_state in states:
        order[machine.start_state] = 0
        queue = [machine.start_state]
        i = 0
        while i < len(queue):
            st = states[queue[i]]
            i += 1
            for msg in machine.messages:
                t = st.transitions.get(msg)
                if t is not None and t.to in states and t.to not in order:
                    order[t.to] = len(order)
                    queue.append(t.to)
    for name in sorted(states):
        if name not in order:
            order[name] = len(order)
    return order


def _dedup(lines) -> tuple[str, ...]:
    seen = set()
    out = []
    for line in lines:
        if line not in seen:
            seen.add(line)
            out.append(line)
    return tuple(out)


def merge_equivalent_once(machine: StateMachine) -> tuple[StateMachine, bool]:
    """Collapse one round of equivalent states.

    Two states are equivalent when, for every message, their transitions
    perform the same actions and lead to the same destination state, where a
    self-loop counts as leading to "the state itself" on both sides (without
    that, no state carrying an actionless self-loop could ever merge with
    another).  Each equivalence class keeps the member first reached from
    the start state (breadth-first, messages in declared order); incoming
    transitions are redirected and the merged states' annotations are
    concatenated and de-duplicated.  The finish state never merges (it has
    no outgoing transitions).  Returns (machine, changed).
    """
    messages = machine.messages
    groups: dict[tuple, list[str]] = {}
    for name, st in machine.states.items():
        if name == machine.finish_state:
            continue
        sig = tuple(
            (st.transitions[m].actions, _SELF if st.transitions[m].to == name else st.transitions[m].to)
            for m in messages
        )
        groups.setdefault(sig, []).append(name)

    order = _traversal_order(machine)
    rename: dict[str, str] = {}
    class_of: dict[str, list[str]] = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        members = sorted(members, key=order.__getitem__)
        rep = members[0]
        class_of[rep] = members
        for member in members[1:]:
            rename[member] = rep
    if not rename:
        return machine, False

    new_states: dict[str, State] = {}
    for name, st in machine.states.items():
        if name in rename:
            continue
        if name == machine.finish_state:
            new_states[name] = st
            continue
        if name in class_of:
            annotations = _dedup(
                line
                for member in class_of[name]
                for line in machine.states[member].annotations
            )
        else:
            annotations = st.annotations
        transitions: dict[str, Transition] = {}
        for m in messages:
            t = st.transitions[m]
            rep = rename.get(t.to)
            transitions[m] = t if rep is None else t._replace(to=rep)
        new_states[name] = State(name, transitions, annotations)

    start = rename.get(machine.start_state, machine.start_state)
    return replace(machine, states=new_states, start_state=start), True


def minimize(machine: StateMachine) -> StateMachine:
    """Alternate pruning and merging until neither changes the machine."""
    m = prune_unreachable(machine)
    while True:
        m, changed = merge_equivalent_once(m)
        if not changed:
            return m
        m = prune_unreachable(m)


@dataclass(frozen=True)
class StageStats:
    """Per-stage state counts and wall-clock time.

    initial and after_prune count component states only (the finish state is
    not an enumerated value combination); final counts the states of the
    delivered machine, finish state included.
    """

    fault_tolerance: int
    replication_factor: int
    initial: int
    after_prune: int
    merge_passes: tuple[int, ...]
    final: int
    passes: int
    millis: int

    def csv_row(self) -> str:
        return (
            f"{self.fault_tolerance},{self.replication_factor},{self.initial},"
            f"{self.after_prune},{self.final},{self.passes},{self.millis}"
        )


def generate_with_stats(
    spec: MetaModelSpec,
    rules: TransitionRuleSet,
    *,
    annotate_state: StateAnnotator | None = None,
    annotate_transition: TransitionAnnotator | None = None,
    finish_annotations: tuple[str, ...] = (),
) -> tuple[StateMachine, StageStats]:
    """Run the full pipeline and record per-stage statistics."""
    start = time.perf_counter()
    vectors = enumerate_states(spec)
    machine = generate_transitions(
        spec,
        rules,
        vectors,
        annotate_state=annotate_state,
        annotate_transition=annotate_transition,
        finish_annotations=finish_annotations,
    )
    initial = state_counts(machine)[1]
    machine = prune_unreachable(machine)
    after_prune = state_counts(machine)[1]
    merge_counts = []
    passes = 0
    while True:
        machine, changed = merge_equivalent_once(machine)
        passes += 1
        if not changed:
            break
        machine = prune_unreachable(machine)
        merge_counts.append(state_counts(machine)[1])
    millis = int((time.perf_counter() - start) * 1000)
    stats = StageStats(
        fault_tolerance=spec.fault_tolerance,
        replication_factor=spec.replication_factor,
        initial=initial,
        after_prune=after_prune,
        merge_passes=tuple(merge_counts),
        final=state_counts(machine)[0],
        passes=passes,
        millis=millis,
    )
    return machine, stats


def generate_state_machine(
    spec: MetaModelSpec,
    rules: TransitionRuleSet,
    *,
    annotate_state: StateAnnotator | None = None,
    annotate_transition: TransitionAnnotator | None = None,
    finish_annotations: tuple[str, ...] = (),
) -> StateMachine:
    """Enumerate, generate, prune and minimize; deterministic for equal inputs."""
    machine, _ = generate_with_stats(
        spec,
        rules,
        annotate_state=annotate_state,
        annotate_transition=annotate_transition,
        finish_annotations=finish_annotations,
    )
    return machine


def bisimulation_oracle(machine: StateMachine) -> tuple[frozenset[str], ...]:
    """Coarsest partition of states under action-and-destination bisimilarity.

    Starts from a split by per-message action signature (the finish state is
    its own block) and refines by destination block until stable.  Used as an
    independent check that merging never conflates behaviourally distinct
    states; note that merging on literal destination names can be strictly
    finer than this partition on machines with cycles.
    """
    messages = machine.messages
    finish = machine.finish_state
    block: dict[str, int] = {}
    keys: dict = {}
    for name, st in machine.states.items():
        if name == finish:
            key = None
        else:
            key = tuple(st.transitions[m].actions for m in messages)
        block[name] = keys.setdefault(key, len(keys))
    n_blocks = len(keys)
    while True:
        new_keys: dict = {}
        new_block: dict[str, int] = {}
        for name, st in machine.states.items():
            if name == finish:
                key = (block[name], None)
            else:
                key = (block[name], tuple(block[st.transitions[m].to] for m in messages))
            new_block[name] = new_keys.setdefault(key, len(new_keys))
        if len(new_keys) == n_blocks:
            break
        block = new_block
        n_blocks = len(new_keys)
    classes: dict[int, list[str]] = {}
    for name, idx in block.items():
        classes.setdefault(idx, []).append(name)
    parts = [frozenset(names) for names in classes.values()]
    return tuple(sorted(parts, key=min))
