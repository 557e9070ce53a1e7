"""Attribute-based access-control policies: a minimal rule language with
deny-overrides combining.

One rule per line, `#` comments, optional leading `version "<v>"` statement:

    permit allow_read on "records/*":read when role == "clinician" and context.network_zone != "public"
    deny   block_anon  when context.auth_strength == "anonymous"

Statement shape (clauses optional, in this order):

    <permit|deny> <rule-id> [on "<resource-glob>":<action>] [when <condition>]
                  [priority <int>] [limit <level>]

Conditions are boolean expressions over attribute references with operators
==, !=, in, >=, <= and connectives and / or / not. Precedence: comparisons
bind tighter than `not`, then `and`, then `or`; parentheses override. A bare
reference is a truthiness test (resolved and not "", "0", or "false").

References resolve against the request: `role` (the principal's role set,
where ==/!=/in test membership), `resource`, `action`, `context.<field>`
(purpose, network_zone, device_posture, auth_strength), and otherwise the
principal's attribute map. Unresolved references evaluate their enclosing
comparison to false, so partial contexts degrade toward deny.

Resource globs: `*` matches within a path segment, `**` across segments.

Combining is deny-overrides: any matching deny rule defeats all permits;
no matching rule means deny. Evaluation is pure and total.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

from .sensitivity import SensitivityLevel
from .trust import Principal, RequestContext

#: Attribute names known to the gateway; validate_policy warns on others.
DEFAULT_ATTRIBUTE_SCHEMA = frozenset(
    {
        "role",
        "resource",
        "action",
        "context.purpose",
        "context.network_zone",
        "context.device_posture",
        "context.auth_strength",
    }
)

#: Reserved obligation key carried by `limit <level>` clauses.
OBLIGATION_MAX_LEVEL = "max_disclosable_level"


class PolicyError(ValueError):
    """Base for policy parse failures; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class PolicySyntaxError(PolicyError):
    pass


class PolicyTypeError(PolicyError):
    pass


class Effect(str, Enum):
    PERMIT = "permit"
    DENY = "deny"


# --- expression tree -------------------------------------------------------


@dataclass(frozen=True)
class Ref:
    path: str


@dataclass(frozen=True)
class Literal:
    value: Union[str, float]

    @property
    def kind(self) -> str:
        return "string" if isinstance(self.value, str) else "number"


@dataclass(frozen=True)
class ListLiteral:
    items: tuple[Literal, ...]


@dataclass(frozen=True)
class Compare:
    op: str  # ==, !=, >=, <=, in
    left: Union[Ref, Literal]
    right: Union[Ref, Literal, ListLiteral]


@dataclass(frozen=True)
class Truthy:
    ref: Ref


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


Expr = Union[Compare, Truthy, Not, And, Or]


@dataclass(frozen=True)
class Target:
    resource: str  # glob
    action: str  # exact name or "*"


@dataclass(frozen=True)
class Rule:
    id: str
    effect: Effect
    target: Target | None = None
    condition: Expr | None = None
    priority: int = 0
    obligations: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Policy:
    rules: tuple[Rule, ...] = ()
    version: str = "1"


@dataclass(frozen=True)
class Decision:
    """Evaluation outcome. Deny decisions list every matching deny rule;
    permits list the one applicable permit. `unresolved` names attribute
    references that were absorbed as false."""

    effect: Effect
    matched_rule_ids: tuple[str, ...] = ()
    obligations: dict[str, str] = field(default_factory=dict)
    unresolved: tuple[str, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # unreachable-rule | unknown-attribute | empty-target
    rule_id: str
    message: str


# --- lexer ------------------------------------------------------------------

_KEYWORDS = {
    "permit", "deny", "on", "when", "priority", "limit", "version",
    "and", "or", "not", "in",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<op>==|!=|>=|<=)
  | (?P<punct>[(),:*])
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # keyword | ident | string | number | op | punct | newline | eof
    text: str
    line: int
    column: int


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    pos = 0
    depth = 0  # newlines inside parentheses do not end a statement
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise PolicySyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = match.lastgroup or ""
        text = match.group()
        column = pos - line_start + 1
        pos = match.end()
        if kind == "ws" or kind == "comment":
            continue
        if kind == "newline":
            if depth == 0 and tokens and tokens[-1].kind != "newline":
                tokens.append(_Token("newline", "\n", line, column))
            line += 1
            line_start = pos
            continue
        if kind == "punct":
            if text == "(":
                depth += 1
            elif text == ")":
                depth = max(0, depth - 1)
        if kind == "ident" and text in _KEYWORDS:
            kind = "keyword"
        tokens.append(_Token(kind, text, line, column))
    last_line = line
    last_col = pos - line_start + 1
    tokens.append(_Token("eof", "", last_line, last_col))
    return tokens


def _unquote(raw: str) -> str:
    return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")


# --- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.current
        if token.kind != "eof":
            self.pos += 1
        return token

    def error(self, message: str) -> PolicySyntaxError:
        token = self.current
        return PolicySyntaxError(message, token.line, token.column)

    def expect(self, kind: str, text: str | None = None, what: str = "") -> _Token:
        token = self.current
        if token.kind != kind or (text is not None and token.text != text):
            found = repr(token.text) if token.text else "end of input"
            raise self.error(f"expected {what or text or kind}, found {found}")
        return self.advance()

    def skip_newlines(self) -> None:
        while self.current.kind == "newline":
            self.advance()

    def parse_policy(self) -> Policy:
        self.skip_newlines()
        version = "1"
        if self.current.kind == "keyword" and self.current.text == "version":
            self.advance()
            version = _unquote(self.expect("string", what="version string").text)
            self.skip_newlines()
        rules: list[Rule] = []
        seen: dict[str, _Token] = {}
        while self.current.kind != "eof":
            token = self.current
            rule = self.parse_rule()
            if rule.id in seen:
                raise PolicySyntaxError(
                    f"duplicate rule id {rule.id!r}", token.line, token.column
                )
            seen[rule.id] = token
            rules.append(rule)
            if self.current.kind == "newline":
                self.skip_newlines()
            elif self.current.kind != "eof":
                raise self.error("expected end of statement")
        return Policy(rules=tuple(rules), version=version)

    def parse_rule(self) -> Rule:
        token = self.current
        if token.kind != "keyword" or token.text not in ("permit", "deny"):
            raise self.error("expected 'permit' or 'deny'")
        effect = Effect(self.advance().text)
        rule_id = self.expect("ident", what="rule id").text
        target: Target | None = None
        condition: Expr | None = None
        priority = 0
        obligations: tuple[tuple[str, str], ...] = ()
        if self.current.kind == "keyword" and self.current.text == "on":
            self.advance()
            resource = _unquote(self.expect("string", what="resource glob").text)
            self.expect("punct", ":", what="':'")
            if self.current.kind == "ident" or (
                self.current.kind == "punct" and self.current.text == "*"
            ):
                action = self.advance().text
            else:
                raise self.error("expected action name")
            target = Target(resource=resource, action=action)
        if self.current.kind == "keyword" and self.current.text == "when":
            self.advance()
            condition = self.parse_or()
        if self.current.kind == "keyword" and self.current.text == "priority":
            self.advance()
            number = self.expect("number", what="priority integer").text
            if "." in number:
                raise self.error("priority must be an integer")
            priority = int(number)
        if self.current.kind == "keyword" and self.current.text == "limit":
            self.advance()
            name = self.expect("ident", what="sensitivity level").text
            try:
                SensitivityLevel.from_name(name)
            except ValueError:
                raise self.error(f"unknown sensitivity level {name!r}") from None
            obligations = ((OBLIGATION_MAX_LEVEL, name.lower()),)
        return Rule(
            id=rule_id,
            effect=effect,
            target=target,
            condition=condition,
            priority=priority,
            obligations=obligations,
        )

    def parse_or(self) -> Expr:
        expr = self.parse_and()
        while self.current.kind == "keyword" and self.current.text == "or":
            self.advance()
            expr = Or(expr, self.parse_and())
        return expr

    def parse_and(self) -> Expr:
        expr = self.parse_not()
        while self.current.kind == "keyword" and self.current.text == "and":
            self.advance()
            expr = And(expr, self.parse_not())
        return expr

    def parse_not(self) -> Expr:
        if self.current.kind == "keyword" and self.current.text == "not":
            self.advance()
            return Not(self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        if self.current.kind == "punct" and self.current.text == "(":
            self.advance()
            expr = self.parse_or()
            self.expect("punct", ")", what="')'")
            return expr
        left_token = self.current
        left = self.parse_operand()
        token = self.current
        if token.kind == "op":
            op = self.advance().text
            right = self.parse_operand()
            self._check_types(op, left, right, token)
            return Compare(op, left, right)
        if token.kind == "keyword" and token.text == "in":
            self.advance()
            items = self.parse_list()
            self._check_in_types(left, items, token)
            return Compare("in", left, items)
        if isinstance(left, Ref):
            return Truthy(left)
        raise PolicySyntaxError(
            "literal cannot stand alone as a condition",
            left_token.line,
            left_token.column,
        )

    def parse_operand(self) -> Union[Ref, Literal]:
        token = self.current
        if token.kind == "ident":
            self.advance()
            return Ref(token.text)
        if token.kind == "string":
            self.advance()
            return Literal(_unquote(token.text))
        if token.kind == "number":
            self.advance()
            return Literal(float(token.text))
        found = repr(token.text) if token.text else "end of input"
        raise self.error(f"expected attribute reference or literal, found {found}")

    def parse_list(self) -> ListLiteral:
        self.expect("punct", "(", what="'('")
        items: list[Literal] = []
        while True:
            token = self.current
            if token.kind == "string":
                self.advance()
                items.append(Literal(_unquote(token.text)))
            elif token.kind == "number":
                self.advance()
                items.append(Literal(float(token.text)))
            else:
                raise self.error("expected literal in list")
            if self.current.kind == "punct" and self.current.text == ",":
                self.advance()
                if self.current.kind == "punct" and self.current.text == ")":
                    break  # trailing comma
                continue
            break
        self.expect("punct", ")", what="')'")
        return ListLiteral(tuple(items))

    def _check_types(
        self,
        op: str,
        left: Union[Ref, Literal],
        right: Union[Ref, Literal],
        token: _Token,
    ) -> None:
        if isinstance(left, Literal) and isinstance(right, Literal):
            if left.kind != right.kind:
                raise PolicyTypeError(
                    f"cannot compare {left.kind} with {right.kind}",
                    token.line,
                    token.column,
                )
        if op in (">=", "<="):
            for side in (left, right):
                if isinstance(side, Literal) and side.kind == "string":
                    raise PolicyTypeError(
                        f"ordering comparison {op!r} requires numeric operands",
                        token.line,
                        token.column,
                    )

    def _check_in_types(
        self, left: Union[Ref, Literal], items: ListLiteral, token: _Token
    ) -> None:
        kinds = {item.kind for item in items.items}
        if len(kinds) > 1:
            raise PolicyTypeError(
                "list literal mixes string and number items", token.line, token.column
            )
        if isinstance(left, Literal) and items.items and left.kind not in kinds:
            raise PolicyTypeError(
                f"cannot test {left.kind} membership in a {next(iter(kinds))} list",
                token.line,
                token.column,
            )


def parse_policy(source: str) -> Policy:
    """Parse policy text. Raises PolicySyntaxError / PolicyTypeError with
    1-based line and column on malformed input."""
    return _Parser(_lex(source)).parse_policy()


# --- printing ---------------------------------------------------------------


def _format_literal(literal: Literal) -> str:
    if isinstance(literal.value, str):
        escaped = literal.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if literal.value == int(literal.value):
        return str(int(literal.value))
    return repr(literal.value)


def _format_operand(operand: Union[Ref, Literal]) -> str:
    return operand.path if isinstance(operand, Ref) else _format_literal(operand)


_PRECEDENCE = {Or: 1, And: 2, Not: 3, Truthy: 4, Compare: 4}


def _format_expr(expr: Expr, min_precedence: int = 0) -> str:
    """Render with the fewest parentheses that reparse to the same tree:
    binary connectives parse left-associative, so right children of equal
    precedence keep their parentheses."""
    precedence = _PRECEDENCE[type(expr)]
    if isinstance(expr, (Or, And)):
        word = "or" if isinstance(expr, Or) else "and"
        text = (
            f"{_format_expr(expr.left, precedence)} {word} "
            f"{_format_expr(expr.right, precedence + 1)}"
        )
    elif isinstance(expr, Not):
        text = f"not {_format_expr(expr.operand, precedence)}"
    elif isinstance(expr, Truthy):
        text = expr.ref.path
    elif isinstance(expr, Compare):
        if expr.op == "in":
            assert isinstance(expr.right, ListLiteral)
            items = ", ".join(_format_literal(item) for item in expr.right.items)
            if len(expr.right.items) == 1:
                items += ","  # single-item lists keep the trailing comma
            text = f"{_format_operand(expr.left)} in ({items})"
        else:
            assert not isinstance(expr.right, ListLiteral)
            text = (
                f"{_format_operand(expr.left)} {expr.op} "
                f"{_format_operand(expr.right)}"
            )
    else:
        raise TypeError(f"unknown expression node {expr!r}")
    return f"({text})" if precedence < min_precedence else text


def format_rule(rule: Rule) -> str:
    parts = [rule.effect.value, rule.id]
    if rule.target is not None:
        escaped = rule.target.resource.replace("\\", "\\\\").replace('"', '\\"')
        parts.append(f'on "{escaped}":{rule.target.action}')
    if rule.condition is not None:
        parts.append(f"when {_format_expr(rule.condition)}")
    if rule.priority != 0:
        parts.append(f"priority {rule.priority}")
    for key, value in rule.obligations:
        if key == OBLIGATION_MAX_LEVEL:
            parts.append(f"limit {value}")
    return " ".join(parts)


def format_policy(policy: Policy) -> str:
    """Canonical text form; parse(format_policy(p)) is structurally equal to p."""
    lines = [f'version "{policy.version}"']
    lines.extend(format_rule(rule) for rule in policy.rules)
    return "\n".join(lines) + "\n"


# --- glob matching ----------------------------------------------------------


def _glob_to_regex(pattern: str) -> re.Pattern[str]:
    out = []
    i = 0
    while i < len(pattern):
        if pattern.startswith("**", i):
            out.append(".*")
            i += 2
        elif pattern[i] == "*":
            out.append("[^/]*")
            i += 1
        else:
            out.append(re.escape(pattern[i]))
            i += 1
    return re.compile("".join(out) + r"\Z")


def glob_match(pattern: str, value: str) -> bool:
    """`*` matches within a path segment, `**` across segments."""
    return _glob_to_regex(pattern).match(value) is not None


# --- evaluation -------------------------------------------------------------

_UNRESOLVED = object()
_FALSY = {"", "0", "false"}


class _Resolver:
    def __init__(
        self,
        principal: Principal,
        ctx: RequestContext,
        resource: str,
        action: str,
    ) -> None:
        self.principal = principal
        self.values: dict[str, str] = {
            "resource": resource,
            "action": action,
            "context.purpose": ctx.purpose,
            "context.network_zone": ctx.network_zone.value,
            "context.device_posture": ctx.device_posture.value,
            "context.auth_strength": ctx.auth_strength.value,
        }
        self.unresolved: set[str] = set()

    def resolve(self, path: str):
        if path == "role":
            return self.principal.roles
        if path in self.values:
            return self.values[path]
        if path in self.principal.attributes:
            return self.principal.attributes[path]
        self.unresolved.add(path)
        return _UNRESOLVED


def _as_number(value) -> float | None:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def _eval_compare(comp: Compare, resolver: _Resolver) -> bool:
    left = (
        resolver.resolve(comp.left.path)
        if isinstance(comp.left, Ref)
        else comp.left.value
    )
    if left is _UNRESOLVED:
        return False

    if comp.op == "in":
        assert isinstance(comp.right, ListLiteral)
        items = [item.value for item in comp.right.items]
        if isinstance(left, frozenset):  # role set: any-member semantics
            return any(role in items for role in left)
        if items and isinstance(items[0], float):
            number = _as_number(left)
            return number is not None and number in items
        return left in items

    assert not isinstance(comp.right, ListLiteral)
    right = (
        resolver.resolve(comp.right.path)
        if isinstance(comp.right, Ref)
        else comp.right.value
    )
    if right is _UNRESOLVED:
        return False

    if comp.op in ("==", "!="):
        equal = _values_equal(left, right)
        return equal if comp.op == "==" else not equal

    # ordering: numeric only; non-numeric operands absorb to false
    left_num, right_num = _as_number(left), _as_number(right)
    if isinstance(left, frozenset) or isinstance(right, frozenset):
        return False
    if left_num is None or right_num is None:
        return False
    return left_num >= right_num if comp.op == ">=" else left_num <= right_num


def _values_equal(left, right) -> bool:
    if isinstance(left, frozenset) or isinstance(right, frozenset):
        roles, other = (left, right) if isinstance(left, frozenset) else (right, left)
        if isinstance(other, frozenset):
            return roles == other
        return str(other) in roles  # membership: "has role"
    if isinstance(left, float) or isinstance(right, float):
        left_num, right_num = _as_number(left), _as_number(right)
        if left_num is None or right_num is None:
            return False
        return left_num == right_num
    return left == right


def _eval_expr(expr: Expr, resolver: _Resolver) -> bool:
    if isinstance(expr, Or):
        return _eval_expr(expr.left, resolver) or _eval_expr(expr.right, resolver)
    if isinstance(expr, And):
        return _eval_expr(expr.left, resolver) and _eval_expr(expr.right, resolver)
    if isinstance(expr, Not):
        return not _eval_expr(expr.operand, resolver)
    if isinstance(expr, Truthy):
        value = resolver.resolve(expr.ref.path)
        if value is _UNRESOLVED:
            return False
        if isinstance(value, frozenset):
            return bool(value)
        return value.lower() not in _FALSY
    if isinstance(expr, Compare):
        return _eval_compare(expr, resolver)
    raise TypeError(f"unknown expression node {expr!r}")


def _target_matches(rule: Rule, resource: str, action: str) -> bool:
    if rule.target is None:
        return True
    if rule.target.action not in ("*", action):
        return False
    return glob_match(rule.target.resource, resource)


def evaluate(
    policy: Policy,
    principal: Principal,
    ctx: RequestContext,
    resource: str,
    action: str,
) -> Decision:
    """Deny-overrides evaluation: any matching deny rule wins; otherwise the
    first applicable permit (highest priority, then document order); otherwise
    default deny. Never raises on well-formed policies."""
    resolver = _Resolver(principal, ctx, resource, action)
    matching_denies: list[Rule] = []
    matching_permits: list[tuple[int, int, Rule]] = []
    for index, rule in enumerate(policy.rules):
        if not _target_matches(rule, resource, action):
            continue
        if rule.condition is not None and not _eval_expr(rule.condition, resolver):
            continue
        if rule.effect is Effect.DENY:
            matching_denies.append(rule)
        else:
            matching_permits.append((-rule.priority, index, rule))
    unresolved = tuple(sorted(resolver.unresolved))
    if matching_denies:
        return Decision(
            effect=Effect.DENY,
            matched_rule_ids=tuple(r.id for r in matching_denies),
            unresolved=unresolved,
        )
    if matching_permits:
        matching_permits.sort(key=lambda entry: entry[:2])
        winner = matching_permits[0][2]
        return Decision(
            effect=Effect.PERMIT,
            matched_rule_ids=(winner.id,),
            obligations=dict(winner.obligations),
            unresolved=unresolved,
        )
    return Decision(effect=Effect.DENY, unresolved=unresolved)


# --- validation -------------------------------------------------------------


def _collect_refs(expr: Expr) -> Iterable[str]:
    if isinstance(expr, (Or, And)):
        yield from _collect_refs(expr.left)
        yield from _collect_refs(expr.right)
    elif isinstance(expr, Not):
        yield from _collect_refs(expr.operand)
    elif isinstance(expr, Truthy):
        yield expr.ref.path
    elif isinstance(expr, Compare):
        if isinstance(expr.left, Ref):
            yield expr.left.path
        if isinstance(expr.right, Ref):
            yield expr.right.path


def _covers(blocker: Rule, rule: Rule) -> bool:
    """Conservative shadowing check for an earlier unconditional deny."""
    if blocker.target is None:
        return True
    if rule.target is None:
        return False
    resource_covered = (
        blocker.target.resource == "**"
        or blocker.target.resource == rule.target.resource
    )
    action_covered = blocker.target.action in ("*", rule.target.action)
    return resource_covered and action_covered


def validate_policy(
    policy: Policy,
    attribute_schema: Iterable[str] = DEFAULT_ATTRIBUTE_SCHEMA,
) -> list[Diagnostic]:
    """Lint a parsed policy: unreachable rules shadowed by an earlier
    unconditional deny, references to attributes outside the declared schema,
    and rules with an empty resource or action target. Diagnostics only;
    nothing here fails evaluation."""
    schema = set(attribute_schema)
    diagnostics: list[Diagnostic] = []
    unconditional_denies: list[Rule] = []
    for rule in policy.rules:
        if rule.condition is not None:
            for ref in sorted(set(_collect_refs(rule.condition))):
                if ref not in schema:
                    diagnostics.append(
                        Diagnostic(
                            kind="unknown-attribute",
                            rule_id=rule.id,
                            message=f"reference to undeclared attribute {ref!r}",
                        )
                    )
        if rule.target is not None and (
            rule.target.resource == "" or rule.target.action == ""
        ):
            diagnostics.append(
                Diagnostic(
                    kind="empty-target",
                    rule_id=rule.id,
                    message="target has an empty resource or action",
                )
            )
        for blocker in unconditional_denies:
            if _covers(blocker, rule):
                diagnostics.append(
                    Diagnostic(
                        kind="unreachable-rule",
                        rule_id=rule.id,
                        message=f"shadowed by earlier unconditional deny {blocker.id!r}",
                    )
                )
                break
        if rule.effect is Effect.DENY and rule.condition is None:
            unconditional_denies.append(rule)
    return diagnostics
