"""Function requests, trace CSV ingest/emit and synthetic arrival generation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

log = logging.getLogger(__name__)

TRACE_HEADER = ("arrival_time_s", "function_id", "exec_time_s", "cpu_demand_vcpu", "mem_demand_mb")


@dataclass(eq=False)
class ServerlessRequest:
    id: int
    function_id: str
    arrival_time: float
    cpu_work: float
    cpu_demand_vcpu: float
    mem_demand_mb: float
    # wall time at exactly the requested share; kept so traces round-trip bit-exact
    exec_time_s: float | None = None
    submitted_at: float | None = None
    started_at: float | None = None
    completed_at: float | None = None
    cold_start: bool = False
    retries: int = 0
    rejected: bool = False
    container_id: int | None = None

    @property
    def exec_time(self) -> float:
        if self.exec_time_s is not None:
            return self.exec_time_s
        return self.cpu_work / self.cpu_demand_vcpu

    @property
    def response_time(self) -> float | None:
        if self.completed_at is None:
            return None
        return self.completed_at - self.arrival_time

    @property
    def terminal(self) -> bool:
        return self.rejected or self.completed_at is not None


@dataclass(frozen=True)
class TraceRecord:
    arrival_time_s: float
    function_id: str
    exec_time_s: float
    cpu_demand_vcpu: float
    mem_demand_mb: float


def _number(raw, line, column, positive):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"not a number: {raw!r}", line, column) from None
    if not math.isfinite(value):
        raise ParseError(f"not finite: {raw!r}", line, column)
    if positive and value <= 0:
        raise ParseError(f"must be > 0, got {raw!r}", line, column)
    if not positive and value < 0:
        raise ParseError(f"must be >= 0, got {raw!r}", line, column)
    return value


def read_trace(path) -> list[TraceRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ParseError(f"header must be {','.join(TRACE_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise ParseError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}", lineno)
            function_id = row[1].strip()
            if not function_id:
                raise ParseError("empty function_id", lineno, "function_id")
            records.append(TraceRecord(
                arrival_time_s=_number(row[0], lineno, "arrival_time_s", positive=False),
                function_id=function_id,
                exec_time_s=_number(row[2], lineno, "exec_time_s", positive=True),
                cpu_demand_vcpu=_number(row[3], lineno, "cpu_demand_vcpu", positive=True),
                mem_demand_mb=_number(row[4], lineno, "mem_demand_mb", positive=True),
            ))
    return records


def requests_from_records(records) -> list[ServerlessRequest]:
    order = sorted(range(len(records)), key=lambda i: records[i].arrival_time_s)
    if order != list(range(len(records))):
        log.warning("trace rows are not sorted by arrival time; re-sorting")
    out = []
    for new_id, i in enumerate(order):
        rec = records[i]
        out.append(ServerlessRequest(
            id=new_id,
            function_id=rec.function_id,
            arrival_time=rec.arrival_time_s,
            cpu_work=rec.exec_time_s * rec.cpu_demand_vcpu,
            cpu_demand_vcpu=rec.cpu_demand_vcpu,
            mem_demand_mb=rec.mem_demand_mb,
            exec_time_s=rec.exec_time_s,
        ))
    return out


def ingest_trace(path) -> list[ServerlessRequest]:
    """Load a canonical trace CSV into arrival-sorted requests."""
    return requests_from_records(read_trace(path))


def write_trace(requests, path) -> None:
    """Emit requests in the canonical trace schema (``repr`` keeps floats exact)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in requests:
            writer.writerow([repr(float(r.arrival_time)), r.function_id, repr(r.exec_time),
                             repr(float(r.cpu_demand_vcpu)), repr(float(r.mem_demand_mb))])


# --- synthetic workloads -----------------------------------------------------

PROFILES = ("constant", "diurnal-sine", "step")
EXEC_DISTS = ("constant", "lognormal")


@dataclass
class SyntheticFunction:
    function_id: str
    base_rate: float = 1.0
    peak_multiplier: float = 1.0
    profile: str = "constant"
    # diurnal-sine period; None means one cycle over the whole duration
    period_s: float | None = None
    phase_s: float = 0.0
    # step profile switches from base to peak at this time; None means duration/2
    step_at_s: float | None = None
    exec_dist: str = "lognormal"
    exec_mu: float = math.log(0.5)
    exec_sigma: float = 0.6
    exec_time_s: float = 0.5
    cpu_demand_vcpu: float = 0.25
    mem_demand_mb: float = 128.0

    @property
    def peak_rate(self) -> float:
        if self.profile == "constant":
            return self.base_rate
        return self.base_rate * max(self.peak_multiplier, 1.0)

    def rate(self, t, duration):
        """Arrival rate (req/s) at time(s) ``t``; accepts scalars or arrays."""
        t = np.asarray(t, dtype=float)
        if self.profile == "constant":
            return np.full_like(t, self.base_rate)
        if self.profile == "diurnal-sine":
            period = self.period_s or duration
            swing = (1.0 - np.cos(2.0 * np.pi * (t + self.phase_s) / period)) / 2.0
            return self.base_rate * (1.0 + (self.peak_multiplier - 1.0) * swing)
        if self.profile == "step":
            at = duration / 2.0 if self.step_at_s is None else self.step_at_s
            return np.where(t < at, self.base_rate, self.base_rate * self.peak_multiplier)
        raise ValueError(f"unknown profile {self.profile!r}")

    def expected_count(self, duration: float, steps: int = 20000) -> float:
        """Integral of the rate over [0, duration] (midpoint rule)."""
        dt = duration / steps
        mids = (np.arange(steps) + 0.5) * dt
        return float(self.rate(mids, duration).sum() * dt)


@dataclass
class SyntheticSpec:
    duration_s: float
    seed: int = 0
    functions: list[SyntheticFunction] = field(default_factory=list)


def _arrivals(fn: SyntheticFunction, duration: float, rng: np.random.Generator):
    # Lewis-Shedler thinning against the peak rate.
    lam_max = fn.peak_rate
    if lam_max <= 0.0:
        return np.empty(0)
    n = rng.poisson(lam_max * duration)
    times = np.sort(rng.uniform(0.0, duration, size=n))
    keep = rng.uniform(0.0, lam_max, size=n) < fn.rate(times, duration)
    return times[keep]


def _exec_times(fn: SyntheticFunction, n: int, rng: np.random.Generator):
    if fn.exec_dist == "constant":
        return np.full(n, fn.exec_time_s)
    if fn.exec_dist == "lognormal":
        return rng.lognormal(fn.exec_mu, fn.exec_sigma, size=n)
    raise ValueError(f"unknown exec distribution {fn.exec_dist!r}")


def generate_synthetic(spec: SyntheticSpec) -> list[ServerlessRequest]:
    """Non-homogeneous Poisson arrivals per function, merged and sorted.

    Each function draws from its own child stream of ``spec.seed`` so adding
    a function does not perturb the others.
    """
    children = np.random.SeedSequence(spec.seed).spawn(len(spec.functions))
    rows = []
    for k, (fn, ss) in enumerate(zip(spec.functions, children)):
        rng = np.random.default_rng(ss)
        times = _arrivals(fn, spec.duration_s, rng)
        execs = _exec_times(fn, len(times), rng)
        for t, e in zip(times.tolist(), execs.tolist()):
            rows.append((t, k, e, fn))
    rows.sort(key=lambda row: (row[0], row[1]))
    return [
        ServerlessRequest(
            id=i,
            function_id=fn.function_id,
            arrival_time=t,
            cpu_work=e * fn.cpu_demand_vcpu,
            cpu_demand_vcpu=fn.cpu_demand_vcpu,
            mem_demand_mb=fn.mem_demand_mb,
            exec_time_s=e,
        )
        for i, (t, _, e, fn) in enumerate(rows)
    ]
