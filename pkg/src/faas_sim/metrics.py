"""Run monitoring and summary metrics.

``MetricsRecorder`` is attached to the cluster as its observer and keeps a
step-function series per VM plus per-function allocation integrals. When
monitoring is off no recorder exists and the summary is built from request
records alone (utilization fields are then ``None``).
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cluster import LEGAL_TRANSITIONS, Container, ContainerState, Vm
from .errors import EmptyRunError, StateError


class _Level:
    """Integrates a piecewise-constant quantity over time."""

    __slots__ = ("value", "since", "area")

    def __init__(self):
        self.value = 0.0
        self.since = 0.0
        self.area = 0.0

    def set(self, t: float, value: float) -> None:
        self.area += self.value * (t - self.since)
        self.value = value
        self.since = t

    def add(self, t: float, delta: float) -> None:
        self.set(t, self.value + delta)

    def integral(self, t: float) -> float:
        return self.area + self.value * (t - self.since)


@dataclass
class VmUsageSeries:
    vm_id: int
    vcpus: float
    times: list[float] = field(default_factory=lambda: [0.0])
    allocated: list[float] = field(default_factory=lambda: [0.0])
    busy: list[float] = field(default_factory=lambda: [0.0])

    def append(self, t: float, allocated: float, busy: float) -> None:
        if self.times[-1] == t:
            self.allocated[-1] = allocated
            self.busy[-1] = busy
        elif self.allocated[-1] != allocated or self.busy[-1] != busy:
            self.times.append(t)
            self.allocated.append(allocated)
            self.busy.append(busy)

    def _mean(self, values, end: float) -> float:
        if end <= 0:
            return 0.0
        area = 0.0
        times = self.times
        for i, v in enumerate(values):
            t0 = times[i]
            if t0 >= end:
                break
            t1 = times[i + 1] if i + 1 < len(times) else end
            area += v * (min(t1, end) - t0)
        return area / end

    def mean_allocated(self, end: float) -> float:
        return self._mean(self.allocated, end)

    def mean_busy(self, end: float) -> float:
        return self._mean(self.busy, end)

    def active_time(self, end: float) -> float:
        """Time within [0, end] during which the VM hosted any allocation."""
        total = 0.0
        times = self.times
        for i, v in enumerate(self.allocated):
            t0 = times[i]
            if t0 >= end:
                break
            if v > 0.0:
                t1 = times[i + 1] if i + 1 < len(times) else end
                total += min(t1, end) - t0
        return total


class MetricsRecorder:
    def __init__(self, cluster_vms: list[Vm], functions, check_transitions: bool = False):
        self.vm_series = {vm.id: VmUsageSeries(vm.id, vm.vcpus) for vm in cluster_vms}
        self.fn_alloc = {f: _Level() for f in functions}
        self.fn_busy = {f: _Level() for f in functions}
        self.containers_created = 0
        self.check_transitions = check_transitions
        self.transitions: list[tuple[int, str, str, float]] = []

    # observer hooks called by the cluster
    def vm_changed(self, vm: Vm, now: float) -> None:
        self.vm_series[vm.id].append(now, vm.allocated_vcpu / vm.vcpus, vm.busy_vcpu / vm.vcpus)

    def container_created(self, c: Container, now: float) -> None:
        self.containers_created += 1
        self.fn_alloc[c.function_id].add(now, c.cpu_share)

    def container_state(self, c: Container, old: ContainerState, new: ContainerState, now: float) -> None:
        if self.check_transitions:
            if (old, new) not in LEGAL_TRANSITIONS:
                raise StateError(f"illegal transition {old.value}->{new.value} for container {c.id}")
            self.transitions.append((c.id, old.value, new.value, now))
        if new is ContainerState.RUNNING:
            self.fn_busy[c.function_id].add(now, c.cpu_share)
        elif old is ContainerState.RUNNING:
            self.fn_busy[c.function_id].add(now, -c.cpu_share)
        if new is ContainerState.DESTROYED:
            self.fn_alloc[c.function_id].add(now, -c.cpu_share)

    def container_resized(self, c: Container, old_share: float, now: float) -> None:
        delta = c.cpu_share - old_share
        self.fn_alloc[c.function_id].add(now, delta)
        if c.state is ContainerState.RUNNING:
            self.fn_busy[c.function_id].add(now, delta)


@dataclass
class RequestRecord:
    id: int
    function_id: str
    arrival: float
    start: float | None
    completion: float | None
    response_time: float | None
    cold_start: bool
    retries: int
    outcome: str  # completed | rejected | unfinished

    @classmethod
    def from_request(cls, r) -> "RequestRecord":
        if r.completed_at is not None:
            outcome = "completed"
        elif r.rejected:
            outcome = "rejected"
        else:
            outcome = "unfinished"
        return cls(r.id, r.function_id, r.arrival_time, r.started_at, r.completed_at,
                   r.response_time, r.cold_start, r.retries, outcome)


@dataclass
class FunctionSummary:
    arrt_s: float | None
    cold_start_fraction: float | None
    completed_count: int
    rejected_count: int
    throughput_rps: float
    avg_alloc_vcpu: float | None
    avg_busy_vcpu: float | None


@dataclass
class RunSummary:
    arrt_s: float | None
    avg_vm_util_allocated: float | None
    avg_vm_util_busy: float | None
    cold_start_fraction: float | None
    rejected_count: int
    completed_count: int
    arrived_count: int
    unfinished_count: int
    throughput_rps: float
    vm_seconds: float
    makespan_s: float
    containers_created: int | None
    per_function: dict[str, FunctionSummary] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _ratio(num, den):
    return num / den if den else None


def summarize(requests, makespan: float, vm_count: int, recorder: MetricsRecorder | None = None,
              vm_seconds_mode: str = "fixed") -> RunSummary:
    if not requests:
        raise EmptyRunError("no requests arrived; ARRT is undefined")
    by_fn: dict[str, list] = {}
    for r in requests:
        by_fn.setdefault(r.function_id, []).append(r)

    def block(rs):
        done = [r for r in rs if r.completed_at is not None]
        rejected = sum(1 for r in rs if r.rejected)
        cold = sum(1 for r in done if r.cold_start)
        arrt = math.fsum(r.completed_at - r.arrival_time for r in done) / len(done) if done else None
        return done, rejected, cold, arrt

    done, rejected, cold, arrt = block(requests)
    per_function = {}
    for fid in sorted(by_fn):
        f_done, f_rej, f_cold, f_arrt = block(by_fn[fid])
        alloc = busy = None
        if recorder is not None and fid in recorder.fn_alloc and makespan > 0:
            alloc = recorder.fn_alloc[fid].integral(makespan) / makespan
            busy = recorder.fn_busy[fid].integral(makespan) / makespan
        per_function[fid] = FunctionSummary(
            arrt_s=f_arrt,
            cold_start_fraction=_ratio(f_cold, len(f_done)),
            completed_count=len(f_done),
            rejected_count=f_rej,
            throughput_rps=len(f_done) / makespan if makespan > 0 else 0.0,
            avg_alloc_vcpu=alloc,
            avg_busy_vcpu=busy,
        )

    util_alloc = util_busy = None
    if recorder is not None and recorder.vm_series:
        series = list(recorder.vm_series.values())
        util_alloc = math.fsum(s.mean_allocated(makespan) for s in series) / len(series)
        util_busy = math.fsum(s.mean_busy(makespan) for s in series) / len(series)
    if vm_seconds_mode == "elastic" and recorder is not None:
        vm_seconds = math.fsum(s.active_time(makespan) for s in recorder.vm_series.values())
    else:
        vm_seconds = vm_count * makespan

    return RunSummary(
        arrt_s=arrt,
        avg_vm_util_allocated=util_alloc,
        avg_vm_util_busy=util_busy,
        cold_start_fraction=_ratio(cold, len(done)),
        rejected_count=rejected,
        completed_count=len(done),
        arrived_count=len(requests),
        unfinished_count=len(requests) - len(done) - rejected,
        throughput_rps=len(done) / makespan if makespan > 0 else 0.0,
        vm_seconds=vm_seconds,
        makespan_s=makespan,
        containers_created=None if recorder is None else recorder.containers_created,
        per_function=per_function,
    )


# --- output files ---------------------------------------------------------------

REQUEST_COLUMNS = ("id", "function_id", "arrival", "start", "completion", "response_time",
                   "cold_start", "retries", "outcome")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_requests_csv(requests, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUEST_COLUMNS)
        for r in requests:
            rec = RequestRecord.from_request(r)
            w.writerow([_fmt(getattr(rec, col)) for col in REQUEST_COLUMNS])


def write_vm_usage_csv(recorder: MetricsRecorder, path) -> None:
    def rows(s: VmUsageSeries):
        for t, a, b in zip(s.times, s.allocated, s.busy):
            yield (t, s.vm_id, a, b)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "vm_id", "allocated_frac", "busy_frac"))
        for t, vm_id, a, b in heapq.merge(*(rows(s) for s in recorder.vm_series.values())):
            w.writerow((repr(t), vm_id, repr(a), repr(b)))


def write_outputs(out_dir, summary: RunSummary, requests, recorder=None, event_log=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    write_requests_csv(requests, out / "requests.csv")
    if recorder is not None:
        write_vm_usage_csv(recorder, out / "vm_usage.csv")
    if event_log is not None:
        with open(out / "events.log", "w", encoding="utf-8", newline="\n") as fh:
            for line in event_log:
                fh.write(line)
                fh.write("\n")
    return out
