"""Parameter sweeps, witness search and CSV/SVG output.

A sweep evaluates :func:`~cbdmeasures.measures.all_measures` on a family of
hypercyclic systems of one shape. Each system is warm-started from the
optimal bases of the uniform system of that shape, so a record depends only
on its own parameters and sweeps give identical results in any order or
worker count.

A witness is a pair of records on which one measure stays put (within
``eps_hold``) while another moves (by at least ``delta_vary``), which rules
out the second measure being a function of the first.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .generators import GRID, SystemShape, derived_seeds, parity_system, random_system, uniform_stream
from .measures import MEASURES, POSITIVITY_TOL, all_measures, reference_bases
from .lpmodel import index_outcomes

log = logging.getLogger(__name__)

DEFAULT_EPS_HOLD = 1e-6
DEFAULT_DELTA_VARY = 1e-3
#: Significant digits of floats in CSV output.
CSV_DIGITS = 12


@dataclass(frozen=True)
class SweepRecord:
    system_id: str
    family: str
    order: int
    rank: int
    param_names: tuple[str, ...]
    params: tuple
    cnt1: float
    cnt2: float
    cnt2_by_level: tuple[float, ...]  # levels 1..order
    level: int | None
    cnt3: float
    cntf: float
    contextual: bool

    def value(self, name: str) -> float:
        if name.startswith("cnt2_l"):
            return self.cnt2_by_level[int(name[6:]) - 1]
        if name in MEASURES:
            return getattr(self, name)
        raise KeyError(f"unknown measure {name!r}")

    def as_row(self) -> dict:
        row = {"system_id": self.system_id, "family": self.family, "order": self.order, "rank": self.rank}
        row.update(zip(self.param_names, self.params))
        row.update(cnt1=self.cnt1, cnt2=self.cnt2)
        row.update({f"cnt2_l{m + 1}": v for m, v in enumerate(self.cnt2_by_level)})
        row.update(level=self.level, cnt3=self.cnt3, cntf=self.cntf, contextual=self.contextual)
        return row


@dataclass(frozen=True)
class WitnessPair:
    id_a: str
    id_b: str
    held: str
    varied: str
    x_a: float
    x_b: float
    y_a: float
    y_b: float

    @property
    def dx(self) -> float:
        return abs(self.x_a - self.x_b)

    @property
    def dy(self) -> float:
        return abs(self.y_a - self.y_b)

    def as_row(self) -> dict:
        return {"id_a": self.id_a, "id_b": self.id_b, "held": self.held, "varied": self.varied,
                "x_a": self.x_a, "x_b": self.x_b, "y_a": self.y_a, "y_b": self.y_b,
                "dx": self.dx, "dy": self.dy}


# -- sweeps ----------------------------------------------------------------

_BASES: dict = {}


def _init_worker(bases: dict) -> None:
    global _BASES
    _BASES = bases


def _evaluate(job) -> SweepRecord:
    family, k, n, sid, names, params, tol, max_slots = job
    if family == "parity":
        sys = parity_system((k, n), params, name=sid)
    else:
        sys = random_system((k, n), params[0], name=sid)
    rep = all_measures(sys, tol=tol, max_slots=max_slots, warm_start=_BASES)
    for msg in rep.diagnostics:
        log.warning("%s", msg)
    levels = tuple(rep.cnt2_by_level[m] for m in range(1, k + 1))
    return SweepRecord(sid, family, k, n, names, tuple(params), rep.cnt1, rep.cnt2, levels, rep.level,
                       rep.cnt3, rep.cntf, rep.contextual)


def _run_jobs(shape: SystemShape, jobs: list, workers: int, max_slots: int | None) -> list[SweepRecord]:
    index_outcomes(parity_system(shape, [0.0] * shape.rank), max_slots)  # size cap check up front
    bases = reference_bases(parity_system(shape, [0.0] * shape.rank), max_slots)
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(bases,)) as pool:
            records = list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        _init_worker(bases)
        records = []
        for i, job in enumerate(jobs):
            records.append(_evaluate(job))
            if (i + 1) % 100 == 0:
                log.info("evaluated %d/%d systems", i + 1, len(jobs))
    return sorted(records, key=lambda r: r.system_id)


def _snap(x: float) -> float:
    return round(x / GRID) * GRID


def parity_eps_random(k: int, n: int, count: int, seed: int) -> list[list[float]]:
    """``count`` eps vectors uniform on ``[-2^-k, 2^-k]^n``, snapped to the dyadic grid."""
    u = uniform_stream(seed, count * n).reshape(count, n) if count else np.zeros((0, n))
    bound = 2.0 ** -k
    return [[_snap((2 * x - 1) * bound) for x in row] for row in u]


def sweep_parity(k: int, n: int, mode: str = "random", *, count: int = 100, seed: int = 0,
                 grid_coords: Sequence[int] = (0,), grid_points: int = 9,
                 fixed: Sequence[float] | None = None, workers: int = 1,
                 tol: float = POSITIVITY_TOL, max_slots: int | None = None) -> list[SweepRecord]:
    """Measures of parity systems of order ``k`` and rank ``n``.

    ``mode="random"`` draws ``count`` eps vectors from ``seed``.
    ``mode="grid"`` varies the (0-based) ``grid_coords`` (at most two) over
    ``grid_points`` evenly spaced values in ``[-2^-k, 2^-k]`` and holds the
    other coordinates at ``fixed`` (default 0). Records are sorted by id.
    """
    shape = SystemShape(k, n)
    if k < 2:
        raise DomainError(f"parity sweeps need order >= 2, got {k}")
    names = tuple(f"eps{i + 1}" for i in range(n))
    if mode == "random":
        if count < 0:
            raise DomainError(f"count must be >= 0, got {count}")
        vectors = parity_eps_random(k, n, count, seed)
        ids = [f"parity-{k}-{n}-s{seed}-{i:06d}" for i in range(count)]
    elif mode == "grid":
        coords = tuple(grid_coords)
        if not 1 <= len(coords) <= 2 or len(set(coords)) != len(coords):
            raise DomainError(f"grid sweeps vary one or two distinct coordinates, got {coords}")
        if any(not 0 <= c < n for c in coords):
            raise DomainError(f"grid coordinates must be in 0..{n - 1}, got {coords}")
        if grid_points < 2:
            raise DomainError(f"need at least 2 grid points, got {grid_points}")
        base = [_snap(float(v)) for v in fixed] if fixed is not None else [0.0] * n
        if len(base) != n:
            raise DomainError(f"expected {n} fixed eps values, got {len(base)}")
        bound = 2.0 ** -k
        axis = [_snap(v) for v in np.linspace(-bound, bound, grid_points)]
        vectors = []
        for point in itertools.product(axis, repeat=len(coords)):
            v = list(base)
            for c, x in zip(coords, point):
                v[c] = x
            vectors.append(v)
        ids = [f"parity-{k}-{n}-grid{''.join(str(c + 1) for c in coords)}-{i:06d}" for i in range(len(vectors))]
    else:
        raise DomainError(f"mode must be 'random' or 'grid', got {mode!r}")
    jobs = [("parity", k, n, sid, names, tuple(v), tol, max_slots) for sid, v in zip(ids, vectors)]
    return _run_jobs(shape, jobs, workers, max_slots)


def sweep_random(k: int, n: int, count: int, seed: int, *, workers: int = 1,
                 tol: float = POSITIVITY_TOL, max_slots: int | None = None) -> list[SweepRecord]:
    """Measures of ``count`` random hypercyclic systems; per-system seeds derive from ``seed``."""
    shape = SystemShape(k, n)
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    jobs = [("random", k, n, f"random-{k}-{n}-s{seed}-{i:06d}", ("seed",), (s,), tol, max_slots)
            for i, s in enumerate(derived_seeds(seed, count))]
    return _run_jobs(shape, jobs, workers, max_slots)


# -- witnesses -------------------------------------------------------------

def find_witnesses(records: Sequence[SweepRecord], pair: tuple[str, str],
                   eps_hold: float = DEFAULT_EPS_HOLD, delta_vary: float = DEFAULT_DELTA_VARY,
                   limit: int | None = None) -> list[WitnessPair]:
    """Record pairs with ``|x_a - x_b| <= eps_hold`` and ``|y_a - y_b| >= delta_vary``.

    ``pair = (x, y)`` names the held and the varied measure. Pairs come out
    ordered by ``(x, system_id)`` of the first record; ``limit`` caps the count.
    """
    held, varied = pair
    rows = sorted(((r.value(held), r.system_id, r.value(varied)) for r in records))
    xs = [x for x, _, _ in rows]
    out: list[WitnessPair] = []
    for i, (xa, ida, ya) in enumerate(rows):
        hi = bisect.bisect_right(xs, xa + eps_hold, lo=i + 1)
        for xb, idb, yb in rows[i + 1:hi]:
            if abs(ya - yb) >= delta_vary:
                out.append(WitnessPair(ida, idb, held, varied, xa, xb, ya, yb))
                if limit is not None and len(out) >= limit:
                    return out
    return out


def measure_pairs(names: Sequence[str] = MEASURES) -> list[tuple[str, str]]:
    """Every ordered pair of distinct measures (both orientations of each unordered pair)."""
    return [(a, b) for a, b in itertools.permutations(names, 2)]


def witness_table(records: Sequence[SweepRecord], eps_hold: float = DEFAULT_EPS_HOLD,
                  delta_vary: float = DEFAULT_DELTA_VARY, limit: int | None = 1,
                  names: Sequence[str] = MEASURES) -> dict[tuple[str, str], list[WitnessPair]]:
    return {p: find_witnesses(records, p, eps_hold, delta_vary, limit) for p in measure_pairs(names)}


# -- CSV -------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "0" if v == 0 else format(v, f".{CSV_DIGITS}g")
    return str(v)


RECORD_HEAD = ("system_id", "family", "order", "rank")
WITNESS_COLUMNS = ("id_a", "id_b", "held", "varied", "x_a", "x_b", "y_a", "y_b", "dx", "dy")


def record_columns(records: Sequence[SweepRecord]) -> list[str]:
    params: list[str] = []
    max_k = 0
    for r in records:
        params.extend(p for p in r.param_names if p not in params)
        max_k = max(max_k, r.order)
    return (list(RECORD_HEAD) + params + ["cnt1", "cnt2"] + [f"cnt2_l{m}" for m in range(1, max_k + 1)]
            + ["level", "cnt3", "cntf", "contextual"])


def write_csv(items: Sequence[SweepRecord] | Sequence[WitnessPair], path: str | Path | None = None,
              kind: str | None = None) -> int:
    """Write records or witnesses as CSV and return the number of data rows.

    With ``path=None`` nothing is written and the text is available through
    :func:`csv_text`. ``kind`` ("records" or "witnesses") picks the header
    for an empty list; otherwise it is inferred.
    """
    text = csv_text(items, kind)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return len(items)


def csv_text(items, kind: str | None = None) -> str:
    items = list(items)
    if kind is None:
        kind = "witnesses" if items and isinstance(items[0], WitnessPair) else "records"
    cols = list(WITNESS_COLUMNS) if kind == "witnesses" else record_columns(items)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for it in items:
        row = it.as_row()
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def _parse_num(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        return float(s)


def read_csv(path: str | Path) -> list[SweepRecord]:
    """Read a record CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in RECORD_HEAD + ("cnt1", "cnt2", "cnt3", "cntf") if c not in cols]
        if missing:
            raise ValueError(f"not a sweep CSV, missing columns {missing}")
        start, stop = cols.index("rank") + 1, cols.index("cnt1")
        param_cols = cols[start:stop]
        out = []
        for row in reader:
            k = int(row["order"])
            names = tuple(c for c in param_cols if row[c] != "")
            levels = tuple(float(row[f"cnt2_l{m}"]) for m in range(1, k + 1))
            level = _parse_num(row.get("level", ""))
            out.append(SweepRecord(row["system_id"], row["family"], k, int(row["rank"]), names,
                                   tuple(_parse_num(row[c]) for c in names),
                                   float(row["cnt1"]), float(row["cnt2"]), levels, level,
                                   float(row["cnt3"]), float(row["cntf"]), row["contextual"] == "true"))
    return out


# -- SVG -------------------------------------------------------------------

def scatter_svg(records: Iterable[SweepRecord], x: str, y: str, path: str | Path | None = None,
                width: int = 480, height: int = 480) -> str:
    """A bare scatter plot of measure ``y`` against measure ``x``, one dot per record."""
    pts = [(r.value(x), r.value(y)) for r in records]
    pad = 40
    xmax = max((p[0] for p in pts), default=0.0) or 1.0
    ymax = max((p[1] for p in pts), default=0.0) or 1.0
    sx = (width - 2 * pad) / xmax
    sy = (height - 2 * pad) / ymax
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{x} (max {xmax:.4g})</text>',
             f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
             f'text-anchor="middle">{y} (max {ymax:.4g})</text>']
    for px, py in pts:
        parts.append(f'<circle cx="{pad + px * sx:.2f}" cy="{height - pad - py * sy:.2f}" r="1.5" fill="black"/>')
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(svg)
    return svg


def level_facts(records: Sequence[SweepRecord], tol: float = 1e-9) -> dict:
    """Summary of the level structure of a sweep: worst CNT2^2 and max |CNT2^k - CNT2|."""
    worst2 = max((r.cnt2_by_level[1] for r in records if r.order >= 2), default=0.0)
    gap = max((abs(r.cnt2_by_level[-1] - r.cnt2) for r in records), default=0.0)
    levels = sorted({r.level for r in records if r.level is not None})
    return {"max_cnt2_l2": worst2, "max_top_gap": gap, "levels": levels,
            "contextual": sum(r.contextual for r in records), "count": len(records),
            "ok": worst2 <= tol and gap <= tol}
