"""Safety-rule language, rule matching and the safe action sets derived from it.

Grammar (whitespace and ``#`` comments are ignored)::

    ruleset := rule*
    rule    := "rule" NAME ":" atom ("&" atom)* "=>" "forbid" "(" NAME ")"
    atom    := NAME "(" term "," term ")"
    term    := NAME | "?" NAME

A rule fires in a symbolic state when some assignment of its variables to
objects makes every body atom a member of the state; a fired rule makes its
forbidden action unsafe.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from safe_explore.qsr import PREDICATES, Relation, extract_relations

KNOWN_ACTIONS = ("up", "down", "left", "right", "stay", "noop")
BINARY = 2


class RuleError(ValueError):
    pass


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, line: int, column: int, expected: str):
        super().__init__(f"line {line}, column {column}: {message} (expected {expected})")
        self.line = line
        self.column = column
        self.expected = expected


class UnknownPredicate(RuleError):
    pass


class UnknownAction(RuleError):
    pass


class Atom(NamedTuple):
    predicate: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"


def is_variable(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True)
class SafetyRule:
    name: str
    body: tuple[Atom, ...]
    forbidden_action: str

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for atom in self.body:
            for t in atom.args:
                if is_variable(t):
                    seen.setdefault(t)
        return tuple(seen)

    def __str__(self) -> str:
        body = " & ".join(str(a) for a in self.body)
        return f"rule {self.name}: {body} => forbid({self.forbidden_action})"


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[SafetyRule, ...] = ()
    predicates: frozenset[str] = frozenset(PREDICATES)
    actions: frozenset[str] = frozenset(KNOWN_ACTIONS)
    _by_action: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [r.name for r in self.rules]
        if len(names) != len(set(names)):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise RuleError(f"duplicate rule names: {', '.join(dup)}")
        by_action: dict[str, list[SafetyRule]] = {}
        for r in self.rules:
            by_action.setdefault(r.forbidden_action, []).append(r)
        object.__setattr__(self, "_by_action", {a: tuple(rs) for a, rs in by_action.items()})

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def forbidding(self, action: str) -> tuple[SafetyRule, ...]:
        return self._by_action.get(action, ())

    def with_rule(self, rule: SafetyRule) -> RuleSet:
        return RuleSet(self.rules + (rule,), self.predicates, self.actions)


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>=>)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<punct>[():,&])
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, col, "a rule token")
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(chunk if kind == "punct" else kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, predicates: frozenset[str], actions: frozenset[str]):
        self.tokens = tokenize(text)
        self.i = 0
        self.predicates = predicates
        self.actions = actions

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.tok
        if tok.kind != kind:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise RuleSyntaxError(f"unexpected {found}", tok.line, tok.column, what or repr(kind))
        self.i += 1
        return tok

    def keyword(self, word: str) -> Token:
        tok = self.tok
        if tok.kind != "name" or tok.text != word:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise RuleSyntaxError(f"unexpected {found}", tok.line, tok.column, repr(word))
        self.i += 1
        return tok

    def ruleset(self) -> list[SafetyRule]:
        rules = []
        while self.tok.kind != "eof":
            rules.append(self.rule())
        return rules

    def rule(self) -> SafetyRule:
        self.keyword("rule")
        name = self.expect("name", "a rule name").text
        self.expect(":")
        body = [self.atom()]
        while self.tok.kind == "&":
            self.i += 1
            body.append(self.atom())
        self.expect("arrow", "'&' or '=>'")
        self.keyword("forbid")
        self.expect("(")
        act = self.expect("name", "an action name")
        if act.text not in self.actions:
            raise UnknownAction(f"line {act.line}, column {act.column}: unknown action {act.text!r}")
        self.expect(")")
        return SafetyRule(name, tuple(body), act.text)

    def atom(self) -> Atom:
        pred = self.expect("name", "a predicate name")
        if pred.text not in self.predicates:
            raise UnknownPredicate(
                f"line {pred.line}, column {pred.column}: unknown predicate {pred.text!r}"
            )
        self.expect("(")
        # every predicate in the vocabulary is binary
        args = [self.term()]
        for _ in range(BINARY - 1):
            self.expect(",", "','")
            args.append(self.term())
        self.expect(")", "')'")
        return Atom(pred.text, tuple(args))

    def term(self) -> str:
        tok = self.tok
        if tok.kind in ("name", "var"):
            self.i += 1
            return tok.text
        self.expect("name", "a constant or ?variable")
        raise AssertionError("unreachable")


def parse_rules(
    text: str,
    actions: Iterable[str] | None = None,
    predicates: Iterable[str] = PREDICATES,
) -> RuleSet:
    acts = frozenset(actions) if actions is not None else frozenset(KNOWN_ACTIONS)
    preds = frozenset(predicates)
    rules = _Parser(text, preds, acts).ruleset()
    return RuleSet(tuple(rules), preds, acts)


def format_rules(rules: RuleSet) -> str:
    return "".join(f"{r}\n" for r in rules)


BUILTIN_RULES = ("crossroad", "freeway")


def load_rules(source: str | Path, actions: Iterable[str] | None = None) -> RuleSet:
    """Load a rule file by path, or one of the shipped sets by name."""
    if str(source) in BUILTIN_RULES:
        text = resources.files("safe_explore.data").joinpath(f"{source}.rules").read_text("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_rules(text, actions=actions)


# ---------------------------------------------------------------- matching


def _index(state: Iterable[Relation]) -> dict[str, list[tuple[str, str]]]:
    idx: dict[str, list[tuple[str, str]]] = {}
    for rel in state:
        idx.setdefault(rel.predicate, []).append((rel.subject, rel.object))
    return idx


def _solve(body: Sequence[Atom], idx: Mapping[str, list], binding: dict[str, str]) -> bool:
    if not body:
        return True
    atom, rest = body[0], body[1:]
    for pair in idx.get(atom.predicate, ()):
        added = []
        ok = True
        for term, value in zip(atom.args, pair):
            if is_variable(term):
                bound = binding.get(term)
                if bound is None:
                    binding[term] = value
                    added.append(term)
                elif bound != value:
                    ok = False
                    break
            elif term != value:
                ok = False
                break
        if ok and _solve(rest, idx, binding):
            return True
        for term in added:
            del binding[term]
    return False


def find_binding(rule: SafetyRule, state: Iterable[Relation]) -> dict[str, str] | None:
    """A variable assignment under which ``rule`` fires, or None."""
    binding: dict[str, str] = {}
    # most selective predicates first keeps backtracking shallow
    idx = _index(state)
    body = sorted(rule.body, key=lambda a: len(idx.get(a.predicate, ())))
    return binding if _solve(body, idx, binding) else None


def matches(rule: SafetyRule, state: Iterable[Relation]) -> bool:
    return find_binding(rule, state) is not None


def is_action_safe(state: Iterable[Relation], action: str, rules: RuleSet) -> bool:
    candidates = rules.forbidding(action)
    if not candidates:
        return True
    idx = _index(state)
    for rule in candidates:
        body = sorted(rule.body, key=lambda a: len(idx.get(a.predicate, ())))
        if _solve(body, idx, {}):
            return False
    return True


def safe_actions(state: Iterable[Relation], actions: Sequence[str], rules: RuleSet) -> list[str]:
    """Actions violating no rule, in the order given."""
    state = frozenset(state)
    return [a for a in actions if is_action_safe(state, a, rules)]


def select_random_safe_action(state, actions: Sequence[str], rules: RuleSet, rng) -> str:
    """Uniform draw from the safe actions, or from all actions if none is safe."""
    if not actions:
        raise ValueError("action set must be nonempty")
    pool = safe_actions(state, actions, rules) or list(actions)
    return pool[int(rng.integers(len(pool)))]


# ---------------------------------------------------------------- shields


class RuleShield:
    """Rule-based safety check over raw observations.

    Symbolic states are extracted on demand and the per-observation safe
    set is memoised, since a tabular run revisits the same grid often.
    """

    def __init__(
        self,
        rules: RuleSet,
        actions: Sequence[str],
        region_radius: int = 2,
        d_close: int = 2,
        cache: bool = True,
    ):
        self.rules = rules
        self.actions = tuple(actions)
        self.region_radius = region_radius
        self.d_close = d_close
        self._cache: dict | None = {} if cache else None

    def symbolic(self, obs) -> frozenset[Relation]:
        return extract_relations(obs, self.region_radius, self.d_close)

    def safe_mask(self, obs) -> tuple[bool, ...]:
        key = obs.key() if self._cache is not None else None
        if key is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        state = self.symbolic(obs)
        mask = tuple(is_action_safe(state, a, self.rules) for a in self.actions)
        if key is not None:
            self._cache[key] = mask
        return mask

    def is_action_safe(self, obs, action: str) -> bool:
        return self.safe_mask(obs)[self.actions.index(action)]

    def safe_actions(self, obs) -> list[str]:
        return [a for a, ok in zip(self.actions, self.safe_mask(obs)) if ok]


class NullShield:
    """Shield that allows everything (an empty rule collection)."""

    def __init__(self, actions: Sequence[str]):
        self.actions = tuple(actions)
        self._mask = (True,) * len(self.actions)

    def safe_mask(self, obs) -> tuple[bool, ...]:
        return self._mask

    def is_action_safe(self, obs, action: str) -> bool:
        return True

    def safe_actions(self, obs) -> list[str]:
        return list(self.actions)

