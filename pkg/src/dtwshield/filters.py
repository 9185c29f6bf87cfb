"""Trajectory-vs-demonstration-group comparison methods and the filter decision.

A method pairs a window shape with an aggregation over the per-demo costs.
Method ids follow ``<Agg><Shape>[W<w>]``: ``MinFull``, ``MaxEqual``,
``MeanTrajW5``, ``MinDemoW10``, ``MeanBothW5`` and so on. A strategy is an
ordered (safe method, unsafe method) pair.
"""
from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, DemoSet, FeatureScaler, Trajectory
from .dtw import block_costs, distance_matrix, dtw_cost, extend_rows

WINDOW_SIZES = (5, 10)


class ShapeKind(enum.Enum):
    FULL = "Full"
    EQUAL = "Equal"
    TRAJ = "Traj"
    DEMO = "Demo"
    BOTH = "Both"


class Aggregation(enum.Enum):
    MIN = "Min"
    MAX = "Max"
    MEAN = "Mean"

    def reduce(self, costs, axis=0):
        if self is Aggregation.MIN:
            return np.min(costs, axis=axis)
        if self is Aggregation.MAX:
            return np.max(costs, axis=axis)
        return np.mean(costs, axis=axis)


@dataclass(frozen=True)
class WindowShape:
    kind: ShapeKind
    w: Optional[int] = None

    def __post_init__(self):
        windowed = self.kind in (ShapeKind.TRAJ, ShapeKind.DEMO, ShapeKind.BOTH)
        if windowed and self.w not in WINDOW_SIZES:
            raise ConfigError(f"{self.kind.value} window must be one of {WINDOW_SIZES}, got {self.w}")
        if not windowed and self.w is not None:
            raise ConfigError(f"{self.kind.value} takes no window size")

    @property
    def label(self) -> str:
        return self.kind.value + (f"W{self.w}" if self.w is not None else "")


SHAPES: Tuple[WindowShape, ...] = (
    WindowShape(ShapeKind.FULL),
    WindowShape(ShapeKind.EQUAL),
    *(WindowShape(kind, w) for kind in (ShapeKind.TRAJ, ShapeKind.DEMO, ShapeKind.BOTH) for w in WINDOW_SIZES),
)
AGGREGATIONS: Tuple[Aggregation, ...] = (Aggregation.MIN, Aggregation.MAX, Aggregation.MEAN)


@dataclass(frozen=True)
class MethodSpec:
    shape: WindowShape
    agg: Aggregation

    @property
    def id(self) -> str:
        return self.agg.value + self.shape.label

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class StrategySpec:
    safe_method: MethodSpec
    unsafe_method: MethodSpec

    @property
    def id(self) -> str:
        return f"{self.safe_method.id}/{self.unsafe_method.id}"

    @property
    def sort_key(self) -> Tuple[str, str]:
        return (self.safe_method.id, self.unsafe_method.id)

    @classmethod
    def parse(cls, safe: str, unsafe: str) -> "StrategySpec":
        return cls(parse_method(safe), parse_method(unsafe))

    def __str__(self) -> str:
        return self.id


def enumerate_methods() -> List[MethodSpec]:
    """All 24 methods, shape-major then aggregation."""
    return [MethodSpec(shape, agg) for shape in SHAPES for agg in AGGREGATIONS]


def enumerate_strategies() -> List[StrategySpec]:
    methods = enumerate_methods()
    return [StrategySpec(s, u) for s, u in itertools.product(methods, methods)]


_METHOD_RE = re.compile(r"^(Min|Max|Mean)(Full|Equal|Traj|Demo|Both)(?:W(\d+))?$")


def parse_method(method_id: str) -> MethodSpec:
    m = _METHOD_RE.match(method_id)
    if m is None:
        raise ConfigError(f"unknown method id {method_id!r}")
    agg, kind, w = m.groups()
    try:
        shape = WindowShape(ShapeKind(kind), int(w) if w else None)
    except ConfigError as exc:
        raise ConfigError(f"unknown method id {method_id!r}: {exc}") from None
    return MethodSpec(shape, Aggregation(agg))


def _steps(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.steps
    arr = np.asarray(x, dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def apply_window(traj, demo, shape: WindowShape):
    """Trailing-suffix windows of the trajectory and the demonstration."""
    traj = _steps(traj)
    demo = _steps(demo)
    if len(traj) == 0 or len(demo) == 0:
        raise ConfigError("cannot window an empty sequence")
    kind, w = shape.kind, shape.w
    if kind is ShapeKind.FULL:
        return traj, demo
    if kind is ShapeKind.EQUAL:
        return traj, demo[-min(len(traj), len(demo)):]
    if kind is ShapeKind.TRAJ:
        return traj[-w:], demo
    if kind is ShapeKind.DEMO:
        return traj, demo[-w:]
    return traj[-w:], demo[-w:]


def group_cost(traj, demos: Sequence, method: MethodSpec, normalize: bool = False) -> float:
    if len(demos) == 0:
        raise ConfigError("demo group is empty")
    costs = [dtw_cost(*apply_window(traj, demo, method.shape), normalize=normalize) for demo in demos]
    return float(method.agg.reduce(np.asarray(costs)))


class Verdict(enum.Enum):
    PASS = "pass"
    FILTER = "filter"


@dataclass(frozen=True)
class FilterDecision:
    verdict: Verdict
    safe_cost: float
    unsafe_cost: float

    @classmethod
    def from_costs(cls, safe_cost: float, unsafe_cost: float) -> "FilterDecision":
        # equal costs filter: the pass condition is strict
        verdict = Verdict.PASS if safe_cost < unsafe_cost else Verdict.FILTER
        return cls(verdict, float(safe_cost), float(unsafe_cost))

    @property
    def filtered(self) -> bool:
        return self.verdict is Verdict.FILTER


def evaluate(
    strategy: StrategySpec,
    traj,
    demos: DemoSet,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> FilterDecision:
    """Reference decision: recompute every DTW from scratch."""
    scaler = demos.scaler() if normalize_features else None
    safe, unsafe = demos.trajectories(scaler)
    traj = _steps(traj)
    if scaler is not None:
        traj = scaler(traj)
    return FilterDecision.from_costs(
        group_cost(traj, safe, strategy.safe_method, normalize_dtw),
        group_cost(traj, unsafe, strategy.unsafe_method, normalize_dtw),
    )


class GroupTracker:
    """Per-demo costs of a growing trajectory against one demonstration group.

    Each ``push`` appends one step and returns, for every requested shape,
    the array of DTW costs between the windowed trajectory and each windowed
    demo. Full and fixed-demo windows extend a DP row per demo in O(|demo|);
    the remaining shapes recompute a small block from the cached distance rows.
    """

    def __init__(self, demos: Sequence[np.ndarray], shapes: Sequence[WindowShape], normalize: bool = False):
        if len(demos) == 0:
            raise ConfigError("demo group is empty")
        demos = [_steps(d) for d in demos]
        dims = {d.shape[1] for d in demos}
        if len(dims) != 1:
            raise ConfigError(f"demonstrations have mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.shapes = tuple(dict.fromkeys(shapes))
        self.normalize = normalize
        self._y = np.vstack(demos)
        lens = np.array([len(d) for d in demos], dtype=np.int64)
        self._lens = lens
        self._hi = np.cumsum(lens)
        self._lo = self._hi - lens
        self._n = 0
        self._dist = np.empty((64, len(self._y)))
        self._rows: Dict[str, list] = {}
        kinds = {s.kind for s in self.shapes}
        if kinds & {ShapeKind.FULL, ShapeKind.EQUAL}:
            self._rows["full"] = self._new_rows(self._lo)
        for s in self.shapes:
            if s.kind is ShapeKind.DEMO:
                self._rows[s.label] = self._new_rows(self._hi - np.minimum(s.w, lens))

    def _new_rows(self, lo):
        width = len(self._y)
        return [lo.astype(np.int64), np.empty(width), np.empty(width), np.empty(width), np.empty(width)]

    def __len__(self) -> int:
        return self._n

    def reset(self) -> None:
        self._n = 0

    def _row_cost(self, state) -> np.ndarray:
        lo, prev, prev_len, _, _ = state
        last = self._hi - 1
        costs = prev[last]
        return costs / prev_len[last] if self.normalize else costs.copy()

    def push(self, vec) -> Dict[WindowShape, np.ndarray]:
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != self.dim:
            raise ConfigError(f"step dimension {vec.size} does not match demonstration dimension {self.dim}")
        if self._n == len(self._dist):
            self._dist = np.concatenate([self._dist, np.empty_like(self._dist)])
        self._dist[self._n] = distance_matrix(vec[None, :], self._y)[0]
        drow = self._dist[self._n]
        first = self._n == 0
        self._n += 1
        t = self._n

        for state in self._rows.values():
            lo, prev, prev_len, cur, cur_len = state
            extend_rows(drow, lo, self._hi, prev, prev_len, first, cur, cur_len)
            state[1], state[3] = cur, prev
            state[2], state[4] = cur_len, prev_len

        out = {}
        for shape in self.shapes:
            kind, w = shape.kind, shape.w
            if kind is ShapeKind.FULL:
                out[shape] = self._row_cost(self._rows["full"])
            elif kind is ShapeKind.DEMO:
                out[shape] = self._row_cost(self._rows[shape.label])
            elif kind is ShapeKind.EQUAL:
                costs = self._row_cost(self._rows["full"])
                short = np.flatnonzero(self._lens > t)
                if len(short):
                    part = np.empty(len(short))
                    hi = self._hi[short]
                    block_costs(self._dist, 0, t, hi - t, hi, self.normalize, part)
                    costs[short] = part
                out[shape] = costs
            else:
                r0 = max(0, t - w)
                lo = self._lo if kind is ShapeKind.TRAJ else self._hi - np.minimum(w, self._lens)
                costs = np.empty(len(self._lens))
                block_costs(self._dist, r0, t, lo, self._hi, self.normalize, costs)
                out[shape] = costs
        return out


class StrategyScorer:
    """Incremental filter decisions for one strategy over one running trajectory."""

    def __init__(
        self,
        strategy: StrategySpec,
        demos: DemoSet,
        normalize_features: bool = False,
        normalize_dtw: bool = False,
    ):
        self.strategy = strategy
        self.scaler: Optional[FeatureScaler] = demos.scaler() if normalize_features else None
        safe, unsafe = demos.trajectories(self.scaler)
        self._safe = GroupTracker(safe, [strategy.safe_method.shape], normalize_dtw)
        self._unsafe = GroupTracker(unsafe, [strategy.unsafe_method.shape], normalize_dtw)

    @property
    def dim(self) -> int:
        return self._safe.dim

    def reset(self) -> None:
        self._safe.reset()
        self._unsafe.reset()

    def push(self, vec) -> FilterDecision:
        if self.scaler is not None:
            vec = self.scaler(vec)
        s, u = self.strategy.safe_method, self.strategy.unsafe_method
        safe_cost = s.agg.reduce(self._safe.push(vec)[s.shape])
        unsafe_cost = u.agg.reduce(self._unsafe.push(vec)[u.shape])
        return FilterDecision.from_costs(safe_cost, unsafe_cost)
