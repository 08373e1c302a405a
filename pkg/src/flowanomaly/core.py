"""Domain types for flow records and service networks, plus path resolution.

Units are meters and seconds throughout; any conversion happens at the
ingestion boundary, never here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    DistanceConflict,
    DistanceMismatch,
    StopNotOnRoute,
    UnknownService,
    WrongDirection,
)

NodeId = str

# Distances that disagree by no more than this are treated as the same
# measurement (real feeds round distances).
DEFAULT_DISTANCE_TOLERANCE_M = 1.0


@dataclass(frozen=True)
class Segment:
    """A directed edge between consecutive route stops with a fixed length."""

    from_node: NodeId
    to_node: NodeId
    distance_m: float

    def __post_init__(self):
        if not self.from_node or not self.to_node:
            raise ValueError("segment endpoints must be non-empty node ids")
        if self.from_node == self.to_node:
            raise ValueError(f"segment endpoints must differ ({self.from_node!r})")
        if not self.distance_m > 0:
            raise ValueError(f"segment distance must be positive, got {self.distance_m}")

    @property
    def key(self) -> tuple[NodeId, NodeId]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class ServiceRoute:
    """One travel direction of a service: ordered stops with cumulative positions.

    ``cumulative_m[k]`` is the distance of ``stops[k]`` from the route origin;
    it starts at 0 and is strictly increasing.
    """

    service_id: str
    stops: tuple[NodeId, ...]
    cumulative_m: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(self.stops))
        object.__setattr__(self, "cumulative_m", tuple(float(x) for x in self.cumulative_m))
        if not self.service_id:
            raise ValueError("service_id must be non-empty")
        if len(self.stops) != len(self.cumulative_m):
            raise ValueError("stops and cumulative_m must have equal length")
        if len(self.stops) < 2:
            raise ValueError("a route needs at least two stops")
        if len(set(self.stops)) != len(self.stops):
            raise ValueError(f"route {self.service_id!r} repeats a stop")
        for a, b in zip(self.cumulative_m, self.cumulative_m[1:]):
            if not b > a:
                raise ValueError(
                    f"route {self.service_id!r}: cumulative_m must be strictly increasing"
                )
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.stops)})

    def stop_index(self, stop: NodeId) -> int | None:
        return self._index.get(stop)


@dataclass(frozen=True)
class Path:
    """An ordered chain of segments; consecutive segments share a node."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("a path needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if a.to_node != b.from_node:
                raise ValueError(
                    f"path breaks between {a.to_node!r} and {b.from_node!r}"
                )
        nodes = (self.segments[0].from_node,) + tuple(s.to_node for s in self.segments)
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_distance", sum(s.distance_m for s in self.segments))

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return self._nodes

    @property
    def distance_m(self) -> float:
        return self._distance


@dataclass(frozen=True)
class FlowRecord:
    """One end-to-end flow: where it boarded/alighted, when, and how far."""

    record_id: str
    service_id: str
    origin: NodeId
    destination: NodeId
    t_start: float
    t_end: float
    distance_m: float

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"record {self.record_id!r}: t_end must exceed t_start")
        if not self.distance_m > 0:
            raise ValueError(f"record {self.record_id!r}: distance must be positive")
        if self.origin == self.destination:
            raise ValueError(f"record {self.record_id!r}: origin equals destination")

    @property
    def observed_s(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class NetworkGraph:
    """Immutable network: nodes, directed segments, and per-service routes.

    Safe for concurrent read-only sharing once built.
    """

    nodes: frozenset[NodeId]
    segments: dict[tuple[NodeId, NodeId], Segment]
    routes: dict[str, ServiceRoute]


def build_network(
    routes: Iterable[ServiceRoute],
    eps_d: float = DEFAULT_DISTANCE_TOLERANCE_M,
) -> NetworkGraph:
    """Combine service routes into one network, deduplicating shared segments.

    Routes are processed in service-id order so the surviving distance of a
    shared segment is deterministic. Distances differing by more than
    ``eps_d`` raise DistanceConflict.
    """
    segments: dict[tuple[NodeId, NodeId], Segment] = {}
    nodes: set[NodeId] = set()
    route_map: dict[str, ServiceRoute] = {}
    for route in sorted(routes, key=lambda r: r.service_id):
        if route.service_id in route_map:
            raise ValueError(f"duplicate service id {route.service_id!r}")
        route_map[route.service_id] = route
        nodes.update(route.stops)
        for stop_a, stop_b, cum_a, cum_b in zip(
            route.stops, route.stops[1:], route.cumulative_m, route.cumulative_m[1:]
        ):
            dist = cum_b - cum_a
            key = (stop_a, stop_b)
            known = segments.get(key)
            if known is None:
                segments[key] = Segment(stop_a, stop_b, dist)
            elif abs(known.distance_m - dist) > eps_d:
                raise DistanceConflict(stop_a, stop_b, known.distance_m, dist)
    return NetworkGraph(frozenset(nodes), segments, route_map)


def resolve_path(
    g: NetworkGraph, service_id: str, origin: NodeId, destination: NodeId
) -> Path:
    """Return the contiguous sub-path of a service between two of its stops."""
    route = g.routes.get(service_id)
    if route is None:
        raise UnknownService(service_id)
    i = route.stop_index(origin)
    if i is None:
        raise StopNotOnRoute(service_id, origin)
    j = route.stop_index(destination)
    if j is None:
        raise StopNotOnRoute(service_id, destination)
    if origin == destination:
        raise StopNotOnRoute(service_id, origin, "origin equals destination")
    if j < i:
        raise WrongDirection(service_id, origin, destination)
    segs = tuple(
        g.segments[(route.stops[k], route.stops[k + 1])] for k in range(i, j)
    )
    return Path(segs)


def validate_record(
    g: NetworkGraph, r: FlowRecord, eps_d: float = DEFAULT_DISTANCE_TOLERANCE_M
) -> Path:
    """Resolve a record's path and check its distance against the route."""
    path = resolve_path(g, r.service_id, r.origin, r.destination)
    if abs(path.distance_m - r.distance_m) > eps_d:
        raise DistanceMismatch(r.record_id, path.distance_m, r.distance_m)
    return path


def resolve_paths(g: NetworkGraph, records: Sequence[FlowRecord]) -> list[Path]:
    """Resolve every record's path, memoizing by (service, origin, destination)."""
    cache: dict[tuple[str, NodeId, NodeId], Path] = {}
    paths = []
    for r in records:
        key = (r.service_id, r.origin, r.destination)
        path = cache.get(key)
        if path is None:
            path = resolve_path(g, r.service_id, r.origin, r.destination)
            cache[key] = path
        paths.append(path)
    return paths
