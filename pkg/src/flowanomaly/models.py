"""Travel-time models: global speed, per-path speed, and per-segment speed.

The per-segment model treats each record's time as Gaussian with mean
sum(d_ij/c_ij) over its path and variance d_r*sigma2, and fits the speeds by
stochastic gradient ascent on the log likelihood with a log-barrier keeping
speeds positive. The smoothed variant additionally penalizes speed
differences between consecutive segments of a path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Sequence, Union

import numpy as np

from .core import NetworkGraph, FlowRecord, NodeId, Path, Segment, resolve_paths
from .errors import (
    EmptyInput,
    MissingSegmentSpeed,
    NonPositiveVariance,
    SegmentNotOnPath,
)

KIND_BASELINE1 = "baseline1"
KIND_BASELINE2 = "baseline2"
KIND_EDGE = "edge"
KIND_SMOOTHED = "smoothed-edge"
MODEL_KINDS = (KIND_BASELINE1, KIND_BASELINE2, KIND_EDGE, KIND_SMOOTHED)

# Below this variance the fit explains the data to sub-nanosecond-per-meter
# precision: the 1/sigma2 gradient is singular there and constant-step ascent
# would amplify rounding residue into divergence, so training treats the model
# as converged. Estimators are never floored.
SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for stochastic gradient training.

    eta is the step size, tau the log-barrier strength, psi the smoothing
    strength (only the smoothed model reads it), c_min the hard positivity
    floor applied after each step.
    """

    eta: float = 1e-3
    tau: float = 1e-4
    psi: float = 1e-3
    epochs: int = 30
    c_min: float = 0.1
    shuffle_seed: int = 0
    variance_refresh: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.tau < 0 or self.psi < 0:
            raise ValueError("tau and psi must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.c_min > 0:
            raise ValueError("c_min must be > 0")


@dataclass
class Baseline1Model:
    """One global speed for every flow."""

    c: float
    sigma2: float

    kind = KIND_BASELINE1


@dataclass
class Baseline2Model:
    """One speed per distinct path; fallback_c covers paths never seen in training."""

    c_by_path: dict[str, float]
    sigma2: float
    fallback_c: float

    kind = KIND_BASELINE2


@dataclass
class EdgeModel:
    """One speed per directed segment, with a shared variance parameter."""

    c_by_segment: dict[tuple[NodeId, NodeId], float]
    sigma2: float
    smoothed: bool = False

    @property
    def kind(self) -> str:
        return KIND_SMOOTHED if self.smoothed else KIND_EDGE


Model = Union[Baseline1Model, Baseline2Model, EdgeModel]


@dataclass
class TrainResult:
    """Per-epoch SSE trail plus the segments no training record touched."""

    sse_by_epoch: list[float] = field(default_factory=list)
    untraversed: tuple[tuple[NodeId, NodeId], ...] = ()


def path_key(path: Path) -> str:
    """Canonical key of a resolved path: its node sequence.

    Records resolved to identical segment sequences share a key even when
    they rode different services over the same stretch.
    """
    return ">".join(path.nodes)


def fit_baseline1(records: Sequence[FlowRecord]) -> Baseline1Model:
    """Closed-form global speed: total distance over total observed time."""
    if not records:
        raise EmptyInput("fit_baseline1 needs records")
    total_d = sum(r.distance_m for r in records)
    total_t = sum(r.observed_s for r in records)
    c = total_d / total_t
    sigma2 = sum((r.observed_s - r.distance_m / c) ** 2 for r in records) / total_d
    return Baseline1Model(c=c, sigma2=sigma2)


def fit_baseline2(
    records: Sequence[FlowRecord], paths: Sequence[Path]
) -> Baseline2Model:
    """Closed-form per-path speeds with a variance pooled across paths."""
    if not records:
        raise EmptyInput("fit_baseline2 needs records")
    if len(records) != len(paths):
        raise ValueError("records and paths must be parallel")
    sums: dict[str, tuple[float, float]] = {}
    for r, p in zip(records, paths):
        key = path_key(p)
        d, t = sums.get(key, (0.0, 0.0))
        sums[key] = (d + r.distance_m, t + r.observed_s)
    c_by_path = {key: d / t for key, (d, t) in sums.items()}
    total_d = sum(r.distance_m for r in records)
    resid_sq = sum(
        (r.observed_s - r.distance_m / c_by_path[path_key(p)]) ** 2
        for r, p in zip(records, paths)
    )
    fallback = total_d / sum(r.observed_s for r in records)
    return Baseline2Model(
        c_by_path=c_by_path, sigma2=resid_sq / total_d, fallback_c=fallback
    )


def expected_time(model: Model, path: Path, d_r: float) -> float:
    """Expected seconds to cover the record's distance along its path."""
    if isinstance(model, Baseline1Model):
        return d_r / model.c
    if isinstance(model, Baseline2Model):
        c_p = model.c_by_path.get(path_key(path), model.fallback_c)
        return d_r / c_p
    total = 0.0
    for seg in path.segments:
        c = model.c_by_segment.get(seg.key)
        if c is None:
            raise MissingSegmentSpeed(seg.from_node, seg.to_node)
        total += seg.distance_m / c
    return total


def log_likelihood(
    model: EdgeModel, r: FlowRecord, path: Path, cfg: TrainConfig
) -> float:
    """Per-record objective the gradient ascends.

    Gaussian log density (constant dropped) plus tau * sum(log c) as the
    positivity barrier; the smoothed model subtracts psi/2 times the squared
    speed difference of each consecutive segment pair in the path.
    """
    if model.sigma2 <= 0:
        raise NonPositiveVariance(f"sigma2 = {model.sigma2}")
    expect = expected_time(model, path, r.distance_m)
    dv = r.distance_m * model.sigma2
    value = -0.5 * math.log(dv) - (r.observed_s - expect) ** 2 / (2.0 * dv)
    if cfg.tau:
        value += cfg.tau * sum(
            math.log(model.c_by_segment[s.key]) for s in path.segments
        )
    if model.smoothed and cfg.psi:
        speeds = [model.c_by_segment[s.key] for s in path.segments]
        value -= (
            cfg.psi
            / 2.0
            * sum((a - b) ** 2 for a, b in zip(speeds, speeds[1:]))
        )
    return value


def gradient(
    model: EdgeModel,
    r: FlowRecord,
    path: Path,
    segment: Segment | tuple[NodeId, NodeId],
    cfg: TrainConfig,
) -> float:
    """Partial derivative of the per-record objective w.r.t. one segment speed."""
    key = segment.key if isinstance(segment, Segment) else tuple(segment)
    index = None
    for i, seg in enumerate(path.segments):
        if seg.key == key:
            index = i
            break
    if index is None:
        raise SegmentNotOnPath(key[0], key[1])
    expect = expected_time(model, path, r.distance_m)
    residual = r.observed_s - expect
    denom = r.distance_m * max(model.sigma2, SIGMA2_FLOOR)
    seg = path.segments[index]
    c = model.c_by_segment[seg.key]
    value = -(residual / denom) * seg.distance_m / (c * c)
    if cfg.tau:
        value += cfg.tau / c
    if model.smoothed and cfg.psi:
        if index + 1 < len(path.segments):
            c_next = model.c_by_segment[path.segments[index + 1].key]
            value -= cfg.psi * (c - c_next)
        if index > 0:
            c_prev = model.c_by_segment[path.segments[index - 1].key]
            value += cfg.psi * (c_prev - c)
    return value


def init_edge_model(
    g: NetworkGraph,
    records: Sequence[FlowRecord],
    cfg: TrainConfig,
    smoothed: bool = False,
) -> EdgeModel:
    """Start every segment at the global speed, variance at the global fit's."""
    if not records:
        raise EmptyInput("init_edge_model needs records")
    base = fit_baseline1(records)
    speeds = {key: base.c for key in g.segments}
    return EdgeModel(c_by_segment=speeds, sigma2=base.sigma2, smoothed=smoothed)


def estimate_variance(
    model: Model, records: Sequence[FlowRecord], paths: Sequence[Path]
) -> float:
    """Residual-based variance: sum of squared residuals over total distance."""
    if not records:
        raise EmptyInput("estimate_variance needs records")
    resid_sq = 0.0
    total_d = 0.0
    for r, p in zip(records, paths):
        resid_sq += (r.observed_s - expected_time(model, p, r.distance_m)) ** 2
        total_d += r.distance_m
    return resid_sq / total_d


def sgd_epoch(
    model: EdgeModel,
    records: Sequence[FlowRecord],
    paths: Sequence[Path],
    cfg: TrainConfig,
    epoch: int = 0,
) -> tuple[EdgeModel, float]:
    """One ascent pass over the records in a seeded random order.

    Mutates the model in place: each record updates every speed on its path
    (all partials taken at the pre-update state), clamped at c_min. A model
    whose variance sits below SIGMA2_FLOOR is treated as converged and the
    pass leaves the speeds in place. With variance_refresh the variance is
    re-estimated at epoch end. Returns the model and the post-epoch sum of
    squared residuals.
    """
    rng = np.random.default_rng((cfg.shuffle_seed, epoch))
    order = rng.permutation(len(records)) if model.sigma2 >= SIGMA2_FLOOR else ()
    speeds = model.c_by_segment
    eta, tau, psi = cfg.eta, cfg.tau, cfg.psi
    smoothing = model.smoothed and psi > 0
    sigma2 = model.sigma2
    for idx in order:
        r = records[idx]
        segs = paths[idx].segments
        segment_speeds = []
        expect = 0.0
        for seg in segs:
            c = speeds.get(seg.key)
            if c is None:
                raise MissingSegmentSpeed(seg.from_node, seg.to_node)
            segment_speeds.append(c)
            expect += seg.distance_m / c
        base = (r.observed_s - expect) / (r.distance_m * sigma2)
        n = len(segs)
        for i, seg in enumerate(segs):
            c = segment_speeds[i]
            grad = -base * seg.distance_m / (c * c) + tau / c
            if smoothing:
                if i + 1 < n:
                    grad -= psi * (c - segment_speeds[i + 1])
                if i > 0:
                    grad += psi * (segment_speeds[i - 1] - c)
            updated = c + eta * grad
            speeds[seg.key] = updated if updated > cfg.c_min else cfg.c_min
    if cfg.variance_refresh:
        model.sigma2 = estimate_variance(model, records, paths)
    sse = 0.0
    for r, p in zip(records, paths):
        sse += (expected_time(model, p, r.distance_m) - r.observed_s) ** 2
    return model, sse


def train_edge_model(
    g: NetworkGraph,
    records: Sequence[FlowRecord],
    cfg: TrainConfig,
    smoothed: bool = False,
    paths: Sequence[Path] | None = None,
) -> tuple[EdgeModel, TrainResult]:
    """Initialize from the global fit and run cfg.epochs ascent passes."""
    if paths is None:
        paths = resolve_paths(g, records)
    model = init_edge_model(g, records, cfg, smoothed=smoothed)
    result = TrainResult()
    covered = {seg.key for p in paths for seg in p.segments}
    result.untraversed = tuple(sorted(set(g.segments) - covered))
    for epoch in range(cfg.epochs):
        model, sse = sgd_epoch(model, records, paths, cfg, epoch=epoch)
        result.sse_by_epoch.append(sse)
    return model, result


def _fmt(x: float) -> str:
    return format(x, ".17g")


def save_model(model: Model, dest: str | IO[str]) -> None:
    """Write a model in the line-oriented text format (17 significant digits)."""
    lines = [f"model {model.kind} sigma2={_fmt(model.sigma2)}"]
    if isinstance(model, Baseline1Model):
        lines.append(f"global {_fmt(model.c)}")
    elif isinstance(model, Baseline2Model):
        lines.append(f"global {_fmt(model.fallback_c)}")
        for key in sorted(model.c_by_path):
            lines.append(f"path {key} {_fmt(model.c_by_path[key])}")
    else:
        for key in sorted(model.c_by_segment):
            lines.append(f"seg {key[0]} {key[1]} {_fmt(model.c_by_segment[key])}")
    text = "\n".join(lines) + "\n"
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        dest.write(text)


def load_model(source: str | IO[str]) -> Model:
    """Read a model written by save_model."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("empty model file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "model" or not head[2].startswith("sigma2="):
        raise ValueError(f"bad model header: {lines[0]!r}")
    kind = head[1]
    sigma2 = float(head[2][len("sigma2=") :])
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    globals_seen: list[float] = []
    by_path: dict[str, float] = {}
    by_segment: dict[tuple[NodeId, NodeId], float] = {}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "global" and len(parts) == 2:
            globals_seen.append(float(parts[1]))
        elif parts[0] == "path" and len(parts) == 3:
            by_path[parts[1]] = float(parts[2])
        elif parts[0] == "seg" and len(parts) == 4:
            by_segment[(parts[1], parts[2])] = float(parts[3])
        else:
            raise ValueError(f"bad model line: {ln!r}")
    if kind == KIND_BASELINE1:
        if len(globals_seen) != 1 or by_path or by_segment:
            raise ValueError("baseline1 model needs exactly one global line")
        return Baseline1Model(c=globals_seen[0], sigma2=sigma2)
    if kind == KIND_BASELINE2:
        if len(globals_seen) != 1 or by_segment:
            raise ValueError("baseline2 model needs one global line and path lines")
        return Baseline2Model(
            c_by_path=by_path, sigma2=sigma2, fallback_c=globals_seen[0]
        )
    if globals_seen or by_path or not by_segment:
        raise ValueError("edge model needs seg lines only")
    return EdgeModel(
        c_by_segment=by_segment, sigma2=sigma2, smoothed=(kind == KIND_SMOOTHED)
    )
