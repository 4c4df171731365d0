"""Constructors for cyclic, hypercyclic, parity, product and random systems.

Generated systems name their contents ``q1..qn`` and contexts ``c1..cn``.
Context ``ci`` of a hypercyclic system of order k measures
``q_i, q_{i+1}, ..., q_{i+k-1}`` with indices taken cyclically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .system import ContextSpec, System


@dataclass(frozen=True)
class SystemShape:
    order: int  # k, bunch size
    rank: int  # n, number of contents = number of contexts

    def __post_init__(self):
        if not (isinstance(self.order, (int, np.integer)) and isinstance(self.rank, (int, np.integer))):
            raise ShapeError(f"order and rank must be integers, got {self.order!r}, {self.rank!r}")
        if not (1 <= self.order <= self.rank):
            raise ShapeError(f"need rank >= order >= 1, got order={self.order}, rank={self.rank}")


def _shape(shape) -> SystemShape:
    return shape if isinstance(shape, SystemShape) else SystemShape(*shape)


def hypercyclic_incidence(shape) -> list[tuple[str, ...]]:
    """Bunch content lists of a hypercyclic system, in builder order."""
    shape = _shape(shape)
    k, n = shape.order, shape.rank
    return [tuple(f"q{(i + j) % n + 1}" for j in range(k)) for i in range(n)]


def make_hypercyclic(shape, bunch_pmfs: Sequence[Sequence[float]], name: str = "") -> System:
    shape = _shape(shape)
    k, n = shape.order, shape.rank
    if len(bunch_pmfs) != n:
        raise ShapeError(f"expected {n} bunch pmfs, got {len(bunch_pmfs)}")
    for i, pmf in enumerate(bunch_pmfs):
        if len(pmf) != 2 ** k:
            raise ShapeError(f"pmf {i + 1} has length {len(pmf)}, expected {2 ** k}")
    contexts = tuple(ContextSpec(f"c{i + 1}", bunch, tuple(pmf))
                     for i, (bunch, pmf) in enumerate(zip(hypercyclic_incidence(shape), bunch_pmfs)))
    return System(tuple(f"q{j + 1}" for j in range(n)), contexts, name or f"hypercyclic-{k}-{n}")


def make_cyclic(n: int, bunch_pmfs: Sequence[Sequence[float]], name: str = "") -> System:
    if n == 1:
        # degenerate single context measuring q1 alone
        return make_hypercyclic((1, 1), bunch_pmfs, name or "cyclic-1")
    return make_hypercyclic((2, n), bunch_pmfs, name or f"hypercyclic-2-{n}")


def parity_bunch(k: int, eps: float) -> np.ndarray:
    """``2^-k + eps * (-1)^popcount(atom)``: every proper marginal is uniform."""
    if k < 1:
        raise DomainError(f"order must be >= 1, got {k}")
    base = 2.0 ** -k
    if not abs(eps) <= base:
        raise DomainError(f"|eps| must be <= 2^-{k} = {base}, got {eps!r}")
    signs = np.array([(-1.0) ** bin(a).count("1") for a in range(2 ** k)])
    return base + eps * signs


def parity_system(shape, eps_vec: Sequence[float], name: str = "") -> System:
    shape = _shape(shape)
    if len(eps_vec) != shape.rank:
        raise ShapeError(f"expected {shape.rank} eps values, got {len(eps_vec)}")
    pmfs = [parity_bunch(shape.order, float(e)) for e in eps_vec]
    return make_hypercyclic(shape, pmfs, name or f"parity-{shape.order}-{shape.rank}")


def product_system(sys_shape, probs, name: str = "") -> System:
    """Bunches are products of independent Bernoulli(p_q).

    ``sys_shape`` is a :class:`SystemShape`/``(k, n)`` tuple or an existing
    System whose incidence is reused. ``probs`` is a scalar or one value per
    content (in content order).
    """
    template = sys_shape if isinstance(sys_shape, System) else make_hypercyclic(
        _shape(sys_shape), [[0.0] * 2 ** _shape(sys_shape).order] * _shape(sys_shape).rank)
    contents = template.contents
    if np.ndim(probs) == 0:
        probs = [float(probs)] * len(contents)
    if len(probs) != len(contents):
        raise ShapeError(f"expected {len(contents)} probabilities, got {len(probs)}")
    p = {q: float(v) for q, v in zip(contents, probs)}
    for q, v in p.items():
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"Pr({q}=1) out of range: {v!r}")
    contexts = []
    for ctx in template.contexts:
        pmf = np.ones(1)
        for q in ctx.contents:
            pmf = np.outer(pmf, [1.0 - p[q], p[q]]).reshape(-1)
        contexts.append(ContextSpec(ctx.id, ctx.contents, tuple(pmf)))
    return System(contents, tuple(contexts), name or f"product-{template.name}")


_TWO_M53 = 2.0 ** -53


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """``count`` uniforms in (0, 1) from the PCG64 generator seeded with ``seed``.

    Raw 64-bit outputs are mapped to ``((x >> 11) + 0.5) * 2^-53``, which
    never yields 0 or 1. PCG64's raw stream is fixed by its published
    definition, so this is platform independent.
    """
    raw = np.random.PCG64(int(seed) % 2 ** 64).random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def derived_seeds(seed: int, count: int) -> list[int]:
    """Per-item 64-bit seeds for sweeps, taken from the raw PCG64 stream of ``seed``."""
    return [int(x) for x in np.random.PCG64(int(seed) % 2 ** 64).random_raw(count)]


#: Grid for generated probabilities. Entries on this dyadic grid add up
#: exactly in double precision, so generated pmfs sum to exactly 1.
GRID = 2.0 ** -50


def snap_pmf(pmf: Sequence[float]) -> list[float]:
    """Round to multiples of :data:`GRID`; the largest entry absorbs the remainder."""
    q = [round(p / GRID) * GRID for p in pmf]
    big = max(range(len(q)), key=lambda i: q[i])
    q[big] = 1.0 - math.fsum(v for i, v in enumerate(q) if i != big)
    return q


def random_system(shape, seed: int, name: str = "") -> System:
    """Bunch pmfs drawn independently and uniformly on the probability simplex.

    Each pmf is a vector of exponential variates ``-log(u)`` normalized to sum
    to one, with ``u`` taken from :func:`uniform_stream`, then snapped to
    :data:`GRID` so the sum is exactly 1.
    """
    shape = _shape(shape)
    size = 2 ** shape.order
    u = uniform_stream(seed, size * shape.rank)
    pmfs = []
    for i in range(shape.rank):
        e = [-math.log(x) for x in u[i * size:(i + 1) * size]]
        total = math.fsum(e)
        pmfs.append(snap_pmf([x / total for x in e]))
    return make_hypercyclic(shape, pmfs, name or f"random-{shape.order}-{shape.rank}-{seed}")
