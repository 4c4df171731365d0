"""Content-context systems of dichotomous (0/1) random variables.

A system lists contents (the properties measured) and contexts (the
conditions of measurement). Each context carries the joint pmf of its bunch,
indexed by atom: the first listed content is the most significant bit, so
for contents ``(a, b)`` atom 1 means ``a = 0, b = 1``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContentNotInContext, DomainError, InvalidSystem

#: Structural equality tolerance (pmf normalization, consistency checks).
STRUCT_TOL = 1e-12


@dataclass(frozen=True)
class ContextSpec:
    id: str
    contents: tuple[str, ...]
    pmf: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "contents", tuple(self.contents))
        object.__setattr__(self, "pmf", tuple(float(p) for p in self.pmf))

    @property
    def size(self) -> int:
        return len(self.contents)


@dataclass(frozen=True)
class ConnectionView:
    """The connection for one content: ``(context id, Pr(R = 1))`` per member."""

    content: str
    members: tuple[tuple[str, float], ...]

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.members)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    where: str = ""

    def __str__(self) -> str:
        loc = f" [{self.where}]" if self.where else ""
        return f"{self.code}{loc}: {self.message}"


@dataclass(frozen=True)
class System:
    contents: tuple[str, ...]
    contexts: tuple[ContextSpec, ...]
    name: str = ""
    _ctx_index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "contents", tuple(self.contents))
        object.__setattr__(self, "contexts", tuple(self.contexts))
        object.__setattr__(self, "_ctx_index", {c.id: i for i, c in enumerate(self.contexts)})

    # -- lookup -----------------------------------------------------------
    def context(self, cid: str) -> ContextSpec:
        try:
            return self.contexts[self._ctx_index[cid]]
        except KeyError:
            raise KeyError(f"unknown context {cid!r}") from None

    @property
    def context_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.contexts)

    @property
    def max_bunch_size(self) -> int:
        return max(c.size for c in self.contexts)

    def contexts_of(self, q: str) -> list[ContextSpec]:
        """Contexts measuring ``q``, in declaration order."""
        return [c for c in self.contexts if q in c.contents]

    def connection(self, q: str) -> ConnectionView:
        return ConnectionView(q, tuple((c.id, variable_prob(self, q, c.id)) for c in self.contexts_of(q)))

    def check(self) -> "System":
        """Raise :class:`InvalidSystem` unless the system is well formed."""
        report = validate_system(self)
        if report:
            raise InvalidSystem(report)
        return self

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "contents": list(self.contents),
            "contexts": [{"id": c.id, "contents": list(c.contents), "pmf": list(c.pmf)} for c in self.contexts],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict) -> "System":
        try:
            contexts = [ContextSpec(str(c["id"]), tuple(str(q) for q in c["contents"]), tuple(c["pmf"]))
                        for c in data["contexts"]]
            return cls(tuple(str(q) for q in data["contents"]), tuple(contexts), str(data.get("name", "")))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed system document: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "System":
        return cls.from_dict(json.loads(text))


def load_system(path: str | Path) -> System:
    return System.from_json(Path(path).read_text())


def save_system(system: System, path: str | Path) -> None:
    Path(path).write_text(system.to_json() + "\n")


def validate_system(sys: System) -> list[Violation]:
    """Return every invariant violation of ``sys``; an empty list means valid."""
    out: list[Violation] = []
    content_set = set(sys.contents)
    if len(content_set) != len(sys.contents):
        dups = sorted({q for q in sys.contents if sys.contents.count(q) > 1})
        out.append(Violation("DUPLICATE_CONTENT_ID", f"contents repeated: {dups}"))
    ids = [c.id for c in sys.contexts]
    if len(set(ids)) != len(ids):
        dups = sorted({i for i in ids if ids.count(i) > 1})
        out.append(Violation("DUPLICATE_CONTEXT_ID", f"contexts repeated: {dups}"))
    if not sys.contexts:
        out.append(Violation("NO_CONTEXTS", "system has no contexts"))

    for c in sys.contexts:
        if not c.contents:
            out.append(Violation("EMPTY_CONTEXT", "context measures no contents", c.id))
        if len(set(c.contents)) != len(c.contents):
            out.append(Violation("DUPLICATE_CONTENT_IN_CONTEXT", f"contents {list(c.contents)}", c.id))
        for q in c.contents:
            if q not in content_set:
                out.append(Violation("UNKNOWN_CONTENT", f"content {q!r} not declared", c.id))
        if len(c.pmf) != 2 ** len(c.contents):
            out.append(Violation("PMF_LENGTH", f"expected {2 ** len(c.contents)} entries, got {len(c.pmf)}", c.id))
        if not all(math.isfinite(p) for p in c.pmf):
            out.append(Violation("NON_FINITE", "pmf has non-finite entries", c.id))
            continue
        if any(p < 0 for p in c.pmf):
            out.append(Violation("NEGATIVE_PROBABILITY", f"min entry {min(c.pmf)!r}", c.id))
        total = math.fsum(c.pmf)
        if abs(total - 1.0) > STRUCT_TOL:
            out.append(Violation("NORMALIZATION", f"pmf sums to {total!r}", c.id))

    measured = {q for c in sys.contexts for q in c.contents}
    for q in sys.contents:
        if q not in measured:
            out.append(Violation("ORPHAN_CONTENT", f"content {q!r} is measured in no context"))
    return out


def bunch_marginal(sys: System, c: str, subset: Sequence[str]) -> np.ndarray:
    """Marginal pmf of the bunch of context ``c`` over ``subset``.

    Atom bit order follows ``subset`` order (first = most significant).
    """
    ctx = sys.context(c)
    subset = tuple(subset)
    if len(set(subset)) != len(subset):
        raise DomainError(f"subset has duplicates: {subset}")
    missing = [q for q in subset if q not in ctx.contents]
    if missing:
        raise ContentNotInContext(f"{missing} not measured in context {c!r}")
    pmf = np.asarray(ctx.pmf, dtype=float)
    if subset == ctx.contents:
        return pmf.copy()
    k = ctx.size
    axes = [ctx.contents.index(q) for q in subset]
    drop = tuple(i for i in range(k) if i not in axes)
    table = pmf.reshape((2,) * k).sum(axis=drop) if drop else pmf.reshape((2,) * k)
    # remaining axes are in bunch order; permute to subset order
    kept = sorted(axes)
    table = np.transpose(table, [kept.index(a) for a in axes]) if axes else table
    return np.asarray(table, dtype=float).reshape(-1)


def variable_prob(sys: System, q: str, c: str) -> float:
    """Pr(R_q^c = 1)."""
    ctx = sys.context(c)
    if q not in ctx.contents:
        raise ContentNotInContext(f"{q!r} not measured in context {c!r}")
    return float(bunch_marginal(sys, c, (q,))[1])


def max_equality_prob(p: float, p2: float) -> float:
    """Largest Pr(S = S') over couplings of Bernoulli(p) and Bernoulli(p2)."""
    for v in (p, p2):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"probability out of range: {v!r}")
    return 1.0 - abs(p - p2)


def is_consistently_connected(sys: System, tol: float = STRUCT_TOL) -> bool:
    for q in sys.contents:
        probs = sys.connection(q).probs
        if probs and max(probs) - min(probs) > tol:
            return False
    return True


def shared_contents(sys: System, c: str, c2: str) -> tuple[str, ...]:
    """Contents measured in both contexts, in system content order."""
    a, b = set(sys.context(c).contents), set(sys.context(c2).contents)
    return tuple(q for q in sys.contents if q in a and q in b)


def is_strongly_consistently_connected(sys: System, tol: float = STRUCT_TOL) -> bool:
    for c, c2 in itertools.combinations(sys.context_ids, 2):
        shared = shared_contents(sys, c, c2)
        if not shared:
            continue
        d = np.abs(bunch_marginal(sys, c, shared) - bunch_marginal(sys, c2, shared))
        if d.max() > tol:
            return False
    return True


def connection_pairs(sys: System) -> list[tuple[str, str, str]]:
    """All ``(q, c, c')`` with ``q`` measured in both contexts.

    Ordered by content order, then by context declaration order.
    """
    pairs = []
    for q in sys.contents:
        members = [c.id for c in sys.contexts_of(q)]
        pairs.extend((q, a, b) for a, b in itertools.combinations(members, 2))
    return pairs


def relabel(sys: System, content_map: dict[str, str] | None = None,
            context_order: Iterable[int] | None = None,
            content_order: dict[str, Sequence[str]] | None = None) -> System:
    """Rename contents, reorder contexts, and/or permute contents within bunches.

    ``content_order`` maps a context id to the new ordering of its bunch; the
    pmf is reindexed to match.
    """
    content_map = content_map or {}
    order = list(context_order) if context_order is not None else list(range(len(sys.contexts)))
    content_order = content_order or {}
    new_contexts = []
    for i in order:
        ctx = sys.contexts[i]
        bunch = tuple(content_order.get(ctx.id, ctx.contents))
        pmf = bunch_marginal(sys, ctx.id, bunch) if bunch != ctx.contents else np.asarray(ctx.pmf)
        new_contexts.append(ContextSpec(ctx.id, tuple(content_map.get(q, q) for q in bunch), tuple(pmf)))
    return System(tuple(content_map.get(q, q) for q in sys.contents), tuple(new_contexts), sys.name)
