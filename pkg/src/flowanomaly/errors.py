"""Exception types raised across the package."""


class FlowError(Exception):
    """Base class for every error this package raises on purpose."""


class EmptyInput(FlowError):
    """An operation that needs at least one record received none."""


class DistanceConflict(FlowError):
    """Two routes claim different distances for the same directed segment."""

    def __init__(self, from_node: str, to_node: str, d1: float, d2: float):
        super().__init__(
            f"segment {from_node}->{to_node} has conflicting distances "
            f"{d1:g} m and {d2:g} m"
        )
        self.from_node = from_node
        self.to_node = to_node
        self.d1 = d1
        self.d2 = d2


class UnknownService(FlowError):
    def __init__(self, service_id: str):
        super().__init__(f"unknown service {service_id!r}")
        self.service_id = service_id


class StopNotOnRoute(FlowError):
    def __init__(self, service_id: str, stop: str, detail: str = ""):
        msg = f"stop {stop!r} cannot anchor a path on service {service_id!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.service_id = service_id
        self.stop = stop


class WrongDirection(FlowError):
    def __init__(self, service_id: str, origin: str, destination: str):
        super().__init__(
            f"destination {destination!r} precedes origin {origin!r} "
            f"on service {service_id!r}"
        )
        self.service_id = service_id
        self.origin = origin
        self.destination = destination


class DistanceMismatch(FlowError):
    """A record's stated distance disagrees with its resolved path."""

    def __init__(self, record_id: str, path_d: float, record_d: float):
        super().__init__(
            f"record {record_id!r}: path distance {path_d:g} m vs "
            f"recorded {record_d:g} m"
        )
        self.record_id = record_id
        self.path_d = path_d
        self.record_d = record_d


class DisconnectedEvidence(FlowError):
    """Route evidence splits into two or more components; order is unknowable."""

    def __init__(self, service_id: str, reached: int, total: int):
        super().__init__(
            f"service {service_id!r}: evidence covers {reached} of {total} stops"
        )
        self.service_id = service_id


class InconsistentEvidence(FlowError):
    """Route evidence contains a distance constraint that propagation violates."""

    def __init__(self, service_id: str, detail: str):
        super().__init__(f"service {service_id!r}: {detail}")
        self.service_id = service_id


class DuplicatePosition(FlowError):
    """Two stops land on the same linear position; their order is ambiguous."""

    def __init__(self, service_id: str, stop_a: str, stop_b: str):
        super().__init__(
            f"service {service_id!r}: stops {stop_a!r} and {stop_b!r} "
            f"share a position"
        )
        self.service_id = service_id


class MissingSegmentSpeed(FlowError):
    def __init__(self, from_node: str, to_node: str):
        super().__init__(f"no speed for segment {from_node}->{to_node}")
        self.from_node = from_node
        self.to_node = to_node


class SegmentNotOnPath(FlowError):
    def __init__(self, from_node: str, to_node: str):
        super().__init__(f"segment {from_node}->{to_node} is not on the path")


class NonPositiveVariance(FlowError):
    """Likelihood evaluation needs sigma2 > 0."""


class ZeroVariance(FlowError):
    """Deviation ratios are undefined at sigma = 0 (degenerate training)."""


class TooFewRecords(FlowError):
    def __init__(self, n: int, k: int):
        super().__init__(f"{n} records cannot fill {k} folds")


class UnreadableInput(FlowError):
    """The record source could not be opened or has no usable header."""


class AllRowsRejected(FlowError):
    def __init__(self, n_rows: int):
        super().__init__(f"all {n_rows} data rows were rejected")
        self.n_rows = n_rows
