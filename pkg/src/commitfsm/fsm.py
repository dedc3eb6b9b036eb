"""Core state machine model.

A machine is a flat collection of named states, one transition per
(state, message) pair, plus a distinguished start state and a terminal
finish state.  State names canonically encode the values of the declared
state components ("T/2/F/0/F/F/F"); the finish state uses the reserved
name "FINISH" because it does not correspond to a component assignment.

Machines are value objects: once constructed they are never mutated, so
they may be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple

FINISH = "FINISH"

BOOLEAN = "boolean"
BOUNDED_INTEGER = "bounded-integer"


class DomainError(ValueError):
    """A value (or an encoded state name) falls outside a component's domain."""


class UnknownStateError(LookupError):
    """A state name that is not part of the machine."""


class UnknownMessageError(LookupError):
    """A message that is not part of the machine's message set."""


class TerminalStateError(Exception):
    """The finish state has no outgoing transitions and cannot be stepped."""


class DocumentError(ValueError):
    """Base class for problems with a machine document."""


class DocumentParseError(DocumentError):
    """The document is not syntactically valid JSON."""


class DocumentValidationError(DocumentError):
    """The document parses but does not follow the machine schema."""


class ComponentSpec(NamedTuple):
    """One state component: a boolean flag or an integer in [0, max_value]."""

    name: str
    kind: str
    max_value: int | None = None

    def domain(self) -> tuple:
        if self.kind == BOOLEAN:
            return (False, True)
        return tuple(range(self.max_value + 1))

    def contains(self, value: Any) -> bool:
        if self.kind == BOOLEAN:
            return isinstance(value, bool)
        # bool is an int subclass; an integer component must hold a plain int.
        return (
            isinstance(value, int)
            and not isinstance(value, bool)
            and 0 <= value <= self.max_value
        )


def check_components(components: Iterable[ComponentSpec]) -> None:
    """Raise DomainError unless the component declarations are well formed."""
    seen = set()
    for comp in components:
        if comp.name in seen:
            raise DomainError(f"duplicate component name {comp.name!r}")
        seen.add(comp.name)
        if comp.kind == BOOLEAN:
            if comp.max_value is not None:
                raise DomainError(
                    f"boolean component {comp.name!r} must not declare max_value"
                )
        elif comp.kind == BOUNDED_INTEGER:
            if comp.max_value is None or comp.max_value < 0:
                raise DomainError(
                    f"integer component {comp.name!r} needs max_value >= 0"
                )
        else:
            raise DomainError(f"unknown component kind {comp.kind!r}")


def state_name(vector: tuple, components: tuple[ComponentSpec, ...]) -> str:
    """Encode component values as a canonical state name such as "T/2/F/0/F/F/F".

    Values appear in declaration order, booleans as T/F and integers in
    decimal, joined by "/".  The encoding is a bijection over the component
    domain; the reserved name "FINISH" is never produced.
    """
    if len(vector) != len(components):
        raise DomainError(
            f"vector has {len(vector)} values for {len(components)} components"
        )
    parts = []
    for value, comp in zip(vector, components):
        if not comp.contains(value):
            raise DomainError(f"{comp.name}={value!r} outside its domain")
        if comp.kind == BOOLEAN:
            parts.append("T" if value else "F")
        else:
            parts.append(str(value))
    return "/".join(parts)


def parse_state_name(name: str, components: tuple[ComponentSpec, ...]) -> tuple:
    """Recover the component value vector from a canonical state name."""
    if name == FINISH:
        raise DomainError(f"{FINISH!r} is reserved and does not encode a vector")
    parts = name.split("/")
    if len(parts) != len(components):
        raise DomainError(
            f"name {name!r} has {len(parts)} fields for {len(components)} components"
        )
    values = []
    for part, comp in zip(parts, components):
        if comp.kind == BOOLEAN:
            if part not in ("T", "F"):
                raise DomainError(f"{comp.name}: expected T or F, got {part!r}")
            values.append(part == "T")
        else:
            try:
                value = int(part)
            except ValueError:
                raise DomainError(f"{comp.name}: expected an integer, got {part!r}")
            if not comp.contains(value):
                raise DomainError(f"{comp.name}={value} outside its domain")
            values.append(value)
    return tuple(values)


class Transition(NamedTuple):
    """One outgoing transition: actions performed and the destination state."""

    message: str
    actions: tuple[str, ...]
    to: str
    annotations: tuple[str, ...] = ()


class State(NamedTuple):
    """A named state with one transition per message (none for the finish state)."""

    name: str
    transitions: dict[str, Transition]
    annotations: tuple[str, ...] = ()


@dataclass(eq=True)
class StateMachine:
    """A deterministic, message-total state machine for one replication factor."""

    replication_factor: int
    fault_tolerance: int
    components: tuple[ComponentSpec, ...]
    messages: tuple[str, ...]
    actions: tuple[str, ...]
    states: dict[str, State]
    start_state: str
    finish_state: str = FINISH

    def state(self, name: str) -> State:
        try:
            return self.states[name]
        except KeyError:
            raise UnknownStateError(name) from None


def state_counts(machine: StateMachine) -> tuple[int, int]:
    """Return (total state count, count excluding the finish state)."""
    total = len(machine.states)
    has_finish = machine.finish_state in machine.states
    return total, total - (1 if has_finish else 0)


def step(machine: StateMachine, state: str, message: str) -> tuple[tuple[str, ...], str]:
    """Interpret one message: return the recorded (actions, destination).

    Pure lookup over the machine; raises for unknown names and for attempts
    to step the terminal finish state.
    """
    st = machine.states.get(state)
    if st is None:
        raise UnknownStateError(state)
    if state == machine.finish_state:
        raise TerminalStateError(f"{state!r} is terminal and has no transitions")
    if message not in machine.messages:
        raise UnknownMessageError(message)
    t = st.transitions[message]
    return t.actions, t.to


def reachable_names(machine: StateMachine) -> set[str]:
    """Names of all states reachable from the start state (start included)."""
    states = machine.states
    if machine.start_state not in states:
        return set()
    seen = {machine.start_state}
    frontier = [machine.start_state]
    while frontier:
        name = frontier.pop()
        for t in states[name].transitions.values():
            if t.to in states and t.to not in seen:
                seen.add(t.to)
                frontier.append(t.to)
    return seen


def validate(machine: StateMachine) -> list[str]:
    """Check the machine invariants; an empty list means the machine is well formed.

    Each violation yields one human-readable diagnostic.  Checks: start and
    finish states exist, the finish state has no outgoing transitions, every
    other state covers exactly the declared message set, all destinations and
    actions resolve, and the finish state is reachable from the start.
    """
    diags: list[str] = []
    states = machine.states
    if machine.start_state not in states:
        diags.append(f"missing start state {machine.start_state!r}")
    finish = machine.finish_state
    fin = states.get(finish)
    if fin is None:
        diags.append(f"missing finish state {finish!r}")
    elif fin.transitions:
        diags.append(f"finish state {finish!r} must have no outgoing transitions")
    declared = set(machine.messages)
    action_set = set(machine.actions)
    for name, st in states.items():
        if name == finish:
            continue
        for msg in machine.messages:
            if msg not in st.transitions:
                diags.append(
                    f"incomplete message coverage: state {name!r} lacks a "
                    f"transition for {msg!r}"
                )
        for msg, t in st.transitions.items():
            if msg not in declared:
                diags.append(f"undeclared message {msg!r} on state {name!r}")
            if t.to not in states:
                diags.append(
                    f"dangling destination: state {name!r} on {t.message!r} "
                    f"targets {t.to!r}"
                )
            for action in t.actions:
                if action not in action_set:
                    diags.append(
                        f"undeclared action {action!r} on state {name!r} "
                        f"message {t.message!r}"
                    )
    if machine.start_state in states and fin is not None:
        if finish not in reachable_names(machine):
            diags.append(f"finish state {finish!r} unreachable from the start state")
    return diags


def serialize(machine: StateMachine) -> str:
    """Render the machine as its canonical UTF-8 JSON document.

    States are sorted by name and transitions follow the declared message
    order, so equal machines always produce byte-identical documents.
    """
    comps = []
    for c in machine.components:
        entry: dict[str, Any] = {"name": c.name, "kind": c.kind}
        if c.kind == BOUNDED_INTEGER:
            entry["max"] = c.max_value
        comps.append(entry)
    states_doc = []
    for name in sorted(machine.states):
        st = machine.states[name]
        trans = []
        for msg in machine.messages:
            t = st.transitions.get(msg)
            if t is None:
                continue
            trans.append(
                {
                    "message": t.message,
                    "actions": list(t.actions),
                    "to": t.to,
                    "annotations": list(t.annotations),
                }
            )
        states_doc.append(
            {
                "name": name,
                "annotations": list(st.annotations),
                "transitions": trans,
            }
        )
    doc = {
        "replication_factor": machine.replication_factor,
        "fault_tolerance": machine.fault_tolerance,
        "components": comps,
        "messages": list(machine.messages),
        "actions": list(machine.actions),
        "start_state": machine.start_state,
        "finish_state": machine.finish_state,
        "states": states_doc,
    }
    return json.dumps(doc, indent=2) + "\n"


_TOP_KEYS = {
    "replication_factor",
    "fault_tolerance",
    "components",
    "messages",
    "actions",
    "start_state",
    "finish_state",
    "states",
}
_STATE_KEYS = {"name", "annotations", "transitions"}
_TRANSITION_KEYS = {"message", "actions", "to", "annotations"}


def _require(obj: dict, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise DocumentValidationError(f"{where}: missing {key!r}")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise DocumentValidationError(f"{where}: {key!r} must be an integer")
    if not isinstance(value, kind):
        raise DocumentValidationError(
            f"{where}: {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise DocumentValidationError(f"{where}: unknown keys {sorted(extra)}")


def _str_list(obj: dict, key: str, where: str) -> tuple[str, ...]:
    values = _require(obj, key, list, where)
    for v in values:
        if not isinstance(v, str):
            raise DocumentValidationError(f"{where}: {key!r} entries must be strings")
    return tuple(values)


def deserialize(text: str) -> StateMachine:
    """Parse a machine document; the inverse of serialize on valid machines."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentParseError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise DocumentValidationError("document: top level must be an object")
    _check_keys(doc, _TOP_KEYS, "document")
    rf = _require(doc, "replication_factor", int, "document")
    ft = _require(doc, "fault_tolerance", int, "document")

    components = []
    for i, entry in enumerate(_require(doc, "components", list, "document")):
        where = f"components[{i}]"
        if not isinstance(entry, dict):
            raise DocumentValidationError(f"{where}: must be an object")
        _check_keys(entry, {"name", "kind", "max"}, where)
        name = _require(entry, "name", str, where)
        kind = _require(entry, "kind", str, where)
        max_value = None
        if "max" in entry:
            max_value = _require(entry, "max", int, where)
        components.append(ComponentSpec(name, kind, max_value))
    try:
        check_components(components)
    except DomainError as exc:
        raise DocumentValidationError(f"components: {exc}") from exc

    messages = _str_list(doc, "messages", "document")
    actions = _str_list(doc, "actions", "document")
    start_state = _require(doc, "start_state", str, "document")
    finish_state = _require(doc, "finish_state", str, "document")

    states: dict[str, State] = {}
    for i, entry in enumerate(_require(doc, "states", list, "document")):
        where = f"states[{i}]"
        if not isinstance(entry, dict):
            raise DocumentValidationError(f"{where}: must be an object")
        _check_keys(entry, _STATE_KEYS, where)
        name = _require(entry, "name", str, where)
        if name in states:
            raise DocumentValidationError(f"{where}: duplicate state name {name!r}")
        annotations = _str_list(entry, "annotations", where)
        transitions: dict[str, Transition] = {}
        for j, tr in enumerate(_require(entry, "transitions", list, where)):
            twhere = f"{where}.transitions[{j}]"
            if not isinstance(tr, dict):
                raise DocumentValidationError(f"{twhere}: must be an object")
            _check_keys(tr, _TRANSITION_KEYS, twhere)
            message = _require(tr, "message", str, twhere)
            if message in transitions:
                raise DocumentValidationError(
                    f"{twhere}: duplicate transition for message {message!r}"
                )
            transitions[message] = Transition(
                message,
                _str_list(tr, "actions", twhere),
                _require(tr, "to", str, twhere),
                _str_list(tr, "annotations", twhere),
            )
        states[name] = State(name, transitions, annotations)

    return StateMachine(
        replication_factor=rf,
        fault_tolerance=ft,
        components=tuple(components),
        messages=messages,
        actions=actions,
        states=states,
        start_state=start_state,
        finish_state=finish_state,
    )
