"""Linear programs over couplings of a system.

A coupling lives on the outcome space of all *slots* (context, content),
listed context by context in declaration order and within a context in
bunch order; slot 0 is the most significant bit of an outcome index
``omega``. Because each context's slots are contiguous, the atom a context
sees in ``omega`` is a shift-and-mask of ``omega``.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import TooLarge
from .system import STRUCT_TOL, System, bunch_marginal, connection_pairs, max_equality_prob, variable_prob

DEFAULT_MAX_SLOTS = 24


def max_slots_cap(override: int | None = None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get("CBD_MAX_SLOTS")
    return int(env) if env else DEFAULT_MAX_SLOTS


@dataclass(frozen=True)
class OutcomeIndexer:
    slots: tuple[tuple[str, str], ...]  # (context id, content)
    context_spans: dict = field(compare=False)  # context id -> (first slot, size)

    @property
    def N(self) -> int:
        return len(self.slots)

    @property
    def num_outcomes(self) -> int:
        return 1 << self.N

    @cached_property
    def _slot_index(self) -> dict:
        return {s: i for i, s in enumerate(self.slots)}

    @cached_property
    def omegas(self) -> np.ndarray:
        return np.arange(self.num_outcomes, dtype=np.int64)

    def slot_of(self, q: str, c: str) -> int:
        return self._slot_index[(c, q)]

    def bit(self, omega: int, slot: int) -> int:
        return (int(omega) >> (self.N - 1 - slot)) & 1

    def bits(self, slot: int) -> np.ndarray:
        """Value of ``slot`` for every outcome."""
        return (self.omegas >> (self.N - 1 - slot)) & 1

    def atoms(self, c: str, positions: Sequence[int] | None = None) -> np.ndarray:
        """Atom index of each outcome restricted to context ``c``.

        ``positions`` selects bunch positions (default: the whole bunch);
        the first selected position is the most significant bit.
        """
        start, size = self.context_spans[c]
        if positions is None or tuple(positions) == tuple(range(size)):
            return (self.omegas >> (self.N - start - size)) & ((1 << size) - 1)
        out = np.zeros(self.num_outcomes, dtype=np.int64)
        for p in positions:
            out = (out << 1) | self.bits(start + p)
        return out


def index_outcomes(sys: System, max_slots: int | None = None) -> OutcomeIndexer:
    cap = max_slots_cap(max_slots)
    slots, spans = [], {}
    for ctx in sys.contexts:
        spans[ctx.id] = (len(slots), ctx.size)
        slots.extend((ctx.id, q) for q in ctx.contents)
    if len(slots) > cap:
        raise TooLarge(required=len(slots), cap=cap)
    return OutcomeIndexer(tuple(slots), spans)


@dataclass(frozen=True)
class RowBlock:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    relation: str  # "=" or "<="
    labels: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LinearProgram:
    """``sense`` of ``c @ x + offset`` subject to rows, ``x >= 0``.

    Variables flagged in ``fixed_zero`` are fixed to 0.
    """

    A: sp.csr_matrix
    relations: tuple[str, ...]
    rhs: np.ndarray
    c: np.ndarray
    sense: str = "min"
    offset: float = 0.0
    fixed_zero: np.ndarray | None = None
    name: str = ""
    row_labels: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.A.shape != (len(self.rhs), len(self.c)):
            raise ValueError(f"matrix shape {self.A.shape} does not match rhs/c")
        if len(self.relations) != len(self.rhs) or len(self.rhs) == 0:
            raise ValueError("need one relation per row and at least one row")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("rhs must be finite")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def rows(self):
        """Yield ``({var: coef}, relation, rhs)`` per row."""
        A = self.A.tocsr()
        for i in range(self.num_rows):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            yield dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist())), self.relations[i], float(self.rhs[i])

    def objective_value(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float)) + self.offset


def _stack(blocks: Sequence[RowBlock], ncols: int, pad_cols: int = 0):
    mats, rhs, rel, labels = [], [], [], []
    for b in blocks:
        m = b.matrix
        if pad_cols:
            m = sp.hstack([m, sp.csr_matrix((m.shape[0], pad_cols))])
        mats.append(m)
        rhs.append(b.rhs)
        rel.extend([b.relation] * len(b))
        labels.extend(b.labels or [""] * len(b))
    A = sp.vstack(mats, format="csr") if mats else sp.csr_matrix((0, ncols + pad_cols))
    return A, np.concatenate(rhs) if rhs else np.zeros(0), tuple(rel), tuple(labels)


def _indicator(row_of: np.ndarray, nrows: int, ncols: int) -> sp.csr_matrix:
    """Matrix with a 1 at ``(row_of[j], j)`` for each column ``j``."""
    keep = row_of >= 0
    cols = np.nonzero(keep)[0]
    return sp.csr_matrix((np.ones(len(cols)), (row_of[keep], cols)), shape=(nrows, ncols))


def _atom_label(a: int, k: int) -> str:
    return format(a, f"0{k}b") if k else ""


def constraints_A(sys: System, idx: OutcomeIndexer) -> RowBlock:
    """Coupling bunch marginals equal the bunch pmfs, context then atom."""
    mats, rhs, labels = [], [], []
    for ctx in sys.contexts:
        size = 1 << ctx.size
        mats.append(_indicator(idx.atoms(ctx.id), size, idx.num_outcomes))
        rhs.extend(ctx.pmf)
        labels.extend(f"A[{ctx.id},{_atom_label(a, ctx.size)}]" for a in range(size))
    return RowBlock(sp.vstack(mats, format="csr"), np.asarray(rhs, dtype=float), "=", tuple(labels))


def equality_indicator(sys: System, idx: OutcomeIndexer):
    """Per connection pair, the outcomes where the two slots agree."""
    out = []
    for q, a, b in connection_pairs(sys):
        out.append(((q, a, b), idx.bits(idx.slot_of(q, a)) == idx.bits(idx.slot_of(q, b))))
    return out


def pair_targets(sys: System, equality_targets: str = "frechet") -> list[float]:
    if equality_targets == "one":
        return [1.0] * len(connection_pairs(sys))
    if equality_targets != "frechet":
        raise ValueError(f"equality_targets must be 'frechet' or 'one', got {equality_targets!r}")
    return [max_equality_prob(variable_prob(sys, q, a), variable_prob(sys, q, b))
            for q, a, b in connection_pairs(sys)]


def constraints_B(sys: System, idx: OutcomeIndexer, equality_targets: str = "frechet") -> RowBlock:
    """Pr(S_q^c = S_q^c') equals its target for every connection pair."""
    eq = equality_indicator(sys, idx)
    targets = pair_targets(sys, equality_targets)
    if not eq:
        return RowBlock(sp.csr_matrix((0, idx.num_outcomes)), np.zeros(0), "=", ())
    rows = np.concatenate([np.full(int(m.sum()), i) for i, (_, m) in enumerate(eq)])
    cols = np.concatenate([np.nonzero(m)[0] for _, m in eq])
    mat = sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(eq), idx.num_outcomes))
    labels = tuple(f"B[{q},{a},{b}]" for (q, a, b), _ in eq)
    return RowBlock(mat, np.asarray(targets, dtype=float), "=", labels)


def lp_cnt1(sys: System, idx: OutcomeIndexer | None = None, max_slots: int | None = None) -> LinearProgram:
    """Minimize the summed (Frechet bound - Pr(equal)) deficits subject to (A).

    Encoded as ``offset = sum of bounds`` plus ``-Pr(equal)`` coefficients,
    so the optimum is the measure itself.
    """
    idx = idx or index_outcomes(sys, max_slots)
    block = constraints_A(sys, idx)
    eq = equality_indicator(sys, idx)
    c = -np.sum([m for _, m in eq], axis=0).astype(float) if eq else np.zeros(idx.num_outcomes)
    offset = math.fsum(pair_targets(sys, "frechet"))
    A, rhs, rel, labels = _stack([block], idx.num_outcomes)
    return LinearProgram(A, rel, rhs, c, "min", offset, name="cnt1", row_labels=labels,
                         meta={"num_outcomes": idx.num_outcomes})


def level_subsets(sys: System, m: int):
    """``(context, bunch positions)`` for every size-``min(m, |bunch|)`` subset."""
    for ctx in sys.contexts:
        for J in itertools.combinations(range(ctx.size), min(m, ctx.size)):
            yield ctx, J


def lp_cnt2_level(sys: System, m: int, idx: OutcomeIndexer | None = None,
                  max_slots: int | None = None) -> LinearProgram:
    """Minimize the L1 gap between coupling and bunch size-m marginals subject to (B).

    Variables: outcome probabilities, then one deviation bound per
    (context, subset, atom).
    """
    idx = idx or index_outcomes(sys, max_slots)
    n_x = idx.num_outcomes
    groups = list(level_subsets(sys, m))
    n_t = sum(1 << len(J) for _, J in groups)

    b_block = constraints_B(sys, idx, "frechet")
    norm = RowBlock(sp.csr_matrix(np.ones((1, n_x))), np.ones(1), "=", ("norm",))
    fixed_A, fixed_rhs, fixed_rel, fixed_lab = _stack([b_block, norm], n_x, pad_cols=n_t)

    dev_rows, dev_cols, dev_vals, dev_rhs, dev_lab = [], [], [], [], []
    r = t = 0
    for ctx, J in groups:
        size = 1 << len(J)
        atoms = idx.atoms(ctx.id, J)
        target = bunch_marginal(sys, ctx.id, [ctx.contents[j] for j in J])
        order = np.argsort(atoms, kind="stable")
        counts = np.bincount(atoms, minlength=size)
        starts = np.concatenate([[0], np.cumsum(counts)])
        for a in range(size):
            cols = order[starts[a]:starts[a + 1]]
            for sign in (1.0, -1.0):
                dev_rows.append(np.full(len(cols) + 1, r))
                dev_cols.append(np.concatenate([cols, [n_x + t]]))
                dev_vals.append(np.concatenate([np.full(len(cols), sign), [-1.0]]))
                dev_rhs.append(sign * target[a])
                dev_lab.append(f"D{'+' if sign > 0 else '-'}[{ctx.id},{''.join(ctx.contents[j] for j in J)},"
                               f"{_atom_label(a, len(J))}]")
                r += 1
            t += 1
    dev = sp.csr_matrix((np.concatenate(dev_vals), (np.concatenate(dev_rows), np.concatenate(dev_cols))),
                        shape=(r, n_x + n_t))
    A = sp.vstack([fixed_A, dev], format="csr")
    rhs = np.concatenate([fixed_rhs, dev_rhs])
    rel = fixed_rel + ("<=",) * r
    c = np.concatenate([np.zeros(n_x), np.ones(n_t)])
    return LinearProgram(A, rel, rhs, c, "min", name=f"cnt2_level{m}", row_labels=fixed_lab + tuple(dev_lab),
                         meta={"num_outcomes": n_x, "num_deviation_vars": n_t, "level": m})


def lp_cnt3(sys: System, idx: OutcomeIndexer | None = None, max_slots: int | None = None) -> LinearProgram:
    """Minimize total variation of a signed measure ``u - v`` subject to (A) and (B).

    The optimum is the total variation; the measure is optimum - 1.
    """
    idx = idx or index_outcomes(sys, max_slots)
    M, rhs, rel, labels = _stack([constraints_A(sys, idx), constraints_B(sys, idx, "frechet")], idx.num_outcomes)
    A = sp.hstack([M, -M], format="csr")
    c = np.ones(2 * idx.num_outcomes)
    return LinearProgram(A, rel, rhs, c, "min", name="cnt3", row_labels=labels,
                         meta={"num_outcomes": idx.num_outcomes})


# -- contextual fraction ---------------------------------------------------

@dataclass(frozen=True)
class ConnectionPatterns:
    """Admissible joint values of one connection in a defective coupling.

    ``patterns[i][j]`` is the value of the j-th member (context order).
    For a consistently connected content the patterns are all-0 and all-1
    and no mass bound applies. Otherwise they are the support of the
    unique multimaximal coupling, ``masses`` its probabilities.
    """

    content: str
    members: tuple[str, ...]
    patterns: tuple[tuple[int, ...], ...]
    masses: tuple[float, ...] | None


def connection_patterns(sys: System, q: str) -> ConnectionPatterns:
    members = tuple(c.id for c in sys.contexts_of(q))
    probs = [variable_prob(sys, q, c) for c in members]
    r = len(members)
    if max(probs) - min(probs) <= STRUCT_TOL:
        return ConnectionPatterns(q, members, ((0,) * r, (1,) * r), None)
    # Multimaximal coupling of Bernoulli(p_j): S_j = [U < p_j], U uniform.
    cuts = sorted({0.0, 1.0, *probs})
    patterns, masses = [], []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo > STRUCT_TOL:
            patterns.append(tuple(int(p >= hi) for p in probs))
            masses.append(hi - lo)
    order = sorted(range(len(patterns)), key=lambda i: sum(patterns[i]))
    return ConnectionPatterns(q, members, tuple(patterns[i] for i in order), tuple(masses[i] for i in order))


def _domination_rows(values_of, sys: System, ncols: int, conns: list[ConnectionPatterns], digit_of):
    """Bunch-domination rows plus mass rows for inconsistent connections.

    ``values_of(q, c)`` gives the value of slot (q, c) per column;
    ``digit_of(q)`` the connection pattern index per column.
    """
    mats, rhs, labels = [], [], []
    for ctx in sys.contexts:
        atom = np.zeros(ncols, dtype=np.int64)
        for q in ctx.contents:
            atom = (atom << 1) | values_of(q, ctx.id)
        size = 1 << ctx.size
        mats.append(_indicator(atom, size, ncols))
        rhs.extend(ctx.pmf)
        labels.extend(f"A<=[{ctx.id},{_atom_label(a, ctx.size)}]" for a in range(size))
    for cp in conns:
        if cp.masses is None:
            continue
        mats.append(_indicator(digit_of(cp.content), len(cp.patterns), ncols))
        rhs.extend(cp.masses)
        labels.extend(f"T<=[{cp.content},{''.join(map(str, p))}]" for p in cp.patterns)
    return RowBlock(sp.vstack(mats, format="csr"), np.asarray(rhs, dtype=float), "<=", tuple(labels))


def lp_cntf_reduced(sys: System, max_slots: int | None = None) -> LinearProgram:
    """Maximize the mass of a defective coupling on connection-admissible outcomes.

    Variables are tuples of per-content connection patterns (mixed radix,
    first content most significant); for consistently connected systems
    these are exactly the global 0/1 assignments. Optimum M; CNTF = 1 - M.
    """
    cap = max_slots_cap(max_slots)
    conns = [connection_patterns(sys, q) for q in sys.contents]
    radices = [len(cp.patterns) for cp in conns]
    bits_needed = sum(math.log2(r) for r in radices)
    if bits_needed > cap + 1e-9:
        raise TooLarge(required=math.ceil(bits_needed - 1e-9), cap=cap)
    ncols = math.prod(radices)
    cols = np.arange(ncols, dtype=np.int64)
    digits = {}
    rem = cols.copy()
    for cp, r in reversed(list(zip(conns, radices))):
        digits[cp.content] = rem % r
        rem //= r
    by_q = {cp.content: cp for cp in conns}

    def values_of(q, c):
        cp = by_q[q]
        table = np.array([p[cp.members.index(c)] for p in cp.patterns], dtype=np.int64)
        return table[digits[q]]

    block = _domination_rows(values_of, sys, ncols, conns, lambda q: digits[q])
    A, rhs, rel, labels = _stack([block], ncols)
    return LinearProgram(A, rel, rhs, np.ones(ncols), "max", name="cntf_reduced", row_labels=labels,
                         meta={"radices": tuple(radices)})


def lp_cntf_full(sys: System, idx: OutcomeIndexer | None = None, max_slots: int | None = None) -> LinearProgram:
    """Same program as :func:`lp_cntf_reduced` over the full outcome space.

    Outcomes whose connection values are not an admissible pattern are
    fixed to zero.
    """
    idx = idx or index_outcomes(sys, max_slots)
    conns = [connection_patterns(sys, q) for q in sys.contents]
    n = idx.num_outcomes
    admissible = np.ones(n, dtype=bool)
    digit = {}
    for cp in conns:
        code = np.zeros(n, dtype=np.int64)
        for c in cp.members:
            code = (code << 1) | idx.bits(idx.slot_of(cp.content, c))
        lookup = np.full(1 << len(cp.members), -1, dtype=np.int64)
        for i, p in enumerate(cp.patterns):
            lookup[int("".join(map(str, p)), 2)] = i
        digit[cp.content] = lookup[code]
        admissible &= digit[cp.content] >= 0

    block = _domination_rows(lambda q, c: idx.bits(idx.slot_of(q, c)), sys, n, conns, lambda q: digit[q])
    A, rhs, rel, labels = _stack([block], n)
    return LinearProgram(A, rel, rhs, np.ones(n), "max", fixed_zero=~admissible, name="cntf_full",
                         row_labels=labels, meta={"num_outcomes": n})


# -- text dump -------------------------------------------------------------

def _num(v: float) -> str:
    return format(float(v), ".17g")


def write_lp(lp: LinearProgram, out: IO[str]) -> None:
    """Write ``lp`` in CPLEX LP text format (17 significant digits)."""

    def terms(coefs):
        parts = []
        for j, v in coefs:
            parts.append(f"{'-' if v < 0 else '+'} {_num(abs(v))} x{j}")
        return " ".join(parts) if parts else "0 x0"

    out.write(f"\\ {lp.name or 'lp'}: {lp.num_vars} vars, {lp.num_rows} rows\n")
    out.write("Minimize\n" if lp.sense == "min" else "Maximize\n")
    obj = terms((j, v) for j, v in enumerate(lp.c) if v != 0)
    if lp.offset:
        obj += f" {'-' if lp.offset < 0 else '+'} {_num(abs(lp.offset))}"
    out.write(f" obj: {obj}\n")
    out.write("Subject To\n")
    for i, (coefs, rel, rhs) in enumerate(lp.rows()):
        op = "=" if rel == "=" else "<="
        out.write(f" r{i}: {terms(sorted(coefs.items()))} {op} {_num(rhs)}\n")
    out.write("Bounds\n")
    fixed = lp.fixed_zero if lp.fixed_zero is not None else np.zeros(lp.num_vars, dtype=bool)
    for j in range(lp.num_vars):
        out.write(f" x{j} = 0\n" if fixed[j] else f" x{j} >= 0\n")
    out.write("End\n")
