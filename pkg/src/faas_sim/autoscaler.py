"""Periodic threshold-based container scaling.

Each tick measures every live container's busy-time fraction over the last
interval, then optionally resizes containers in steps (vertical) and
adjusts the replica count per function (horizontal). Vertical runs first, so
replica placement sees the VM ledgers after this tick's resizes. With
``vertical_first`` the replica count of a function only grows once none of its
containers can grow, and only shrinks once all of them are at their floor.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field

from .cluster import EPS, Cluster, Container, ContainerState
from .errors import CapacityError, FloorError, StateError
from .scheduler import PlacementPolicy

log = logging.getLogger(__name__)

SELECTIONS = ("random", "largest_feasible")


@dataclass
class VerticalConfig:
    enabled: bool = False
    cpu_steps: list[float] = field(default_factory=lambda: [0.25, -0.25])
    # paired index-wise with cpu_steps; missing entries mean no memory change
    mem_steps: list[float] = field(default_factory=list)
    cpu_max: float = 1.0
    mem_max: float = 3072.0
    # smallest share a container may shrink to; None means the function's per-request demand
    cpu_min: float | None = None
    mem_min: float | None = None

    def levels(self) -> list[tuple[float, float]]:
        return [(c, self.mem_steps[i] if i < len(self.mem_steps) else 0.0)
                for i, c in enumerate(self.cpu_steps)]


@dataclass
class ScalingConfig:
    enabled: bool = False
    interval_s: float = 30.0
    cpu_threshold_high: float = 0.6
    cpu_threshold_low: float = 0.2
    min_replicas: int = 1
    max_replicas: int = 1000
    horizontal: bool = True
    vertical_first: bool = False
    selection: str = "random"
    vertical: VerticalConfig = field(default_factory=VerticalConfig)

    def validate(self, vm_vcpus: float | None = None, vm_mem_mb: float | None = None) -> None:
        if not 0.0 < self.cpu_threshold_low < self.cpu_threshold_high <= 1.0:
            raise ValueError("thresholds must satisfy 0 < low < high <= 1")
        if self.interval_s <= 0:
            raise ValueError("interval_s must be > 0")
        if not 0 <= self.min_replicas <= self.max_replicas:
            raise ValueError("need 0 <= min_replicas <= max_replicas")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        v = self.vertical
        if v.enabled:
            if not v.cpu_steps:
                raise ValueError("vertical.cpu_steps must be non-empty")
            if len(v.mem_steps) > len(v.cpu_steps):
                raise ValueError("vertical.mem_steps is longer than cpu_steps")
            if vm_vcpus is not None and v.cpu_max > vm_vcpus + EPS:
                raise ValueError("vertical.cpu_max exceeds VM vCPUs")
            if vm_mem_mb is not None and v.mem_max > vm_mem_mb + EPS:
                raise ValueError("vertical.mem_max exceeds VM memory")


@dataclass(frozen=True)
class CreateReplica:
    function_id: str


@dataclass(frozen=True)
class DestroyIdle:
    container_id: int


@dataclass(frozen=True)
class Resize:
    container_id: int
    d_cpu: float
    d_mem: float


@dataclass
class FnUtilizationSnapshot:
    time: float
    # function id -> [(container id, busy fraction)] in creation order
    utilization: dict[str, list[tuple[int, float]]]

    def replicas(self, function_id: str) -> int:
        return len(self.utilization.get(function_id, ()))

    def average(self, function_id: str) -> float:
        entries = self.utilization.get(function_id, ())
        if not entries:
            return 0.0
        return sum(u for _, u in entries) / len(entries)


def desired_replicas(current: int, avg_util: float, threshold: float, lo: int, hi: int) -> int:
    """Proportional rule ``ceil(current * avg_util / threshold)`` clamped to [lo, hi]."""
    raw = current * avg_util / threshold
    # absorb float noise such as 4 * 0.9 / 0.6 == 6.000000000000001
    want = math.ceil(raw - 1e-9) if raw > 0 else 0
    return min(max(want, lo), hi)


class AutoScaler:
    def __init__(self, cluster: Cluster, scheduler: PlacementPolicy, config: ScalingConfig,
                 seed: int | None = None):
        self.cluster = cluster
        self.scheduler = scheduler
        self.config = config
        self.rng = random.Random(seed)
        self._busy_mark: dict[int, float] = {}
        self.history: list[tuple[float, object]] = []
        self.placement_failures = 0

    def bounds(self, function_id: str) -> tuple[int, int]:
        fn = self.cluster.functions[function_id]
        lo = self.config.min_replicas if fn.min_replicas is None else fn.min_replicas
        hi = self.config.max_replicas if fn.max_replicas is None else fn.max_replicas
        return lo, hi

    def collect_snapshot(self, now: float) -> FnUtilizationSnapshot:
        interval = self.config.interval_s
        util: dict[str, list[tuple[int, float]]] = {f: [] for f in self.cluster.functions}
        marks = {}
        for c in self.cluster.containers.values():
            if c.state is ContainerState.DESTROYED:
                continue
            busy = c.busy_time(now)
            frac = (busy - self._busy_mark.get(c.id, 0.0)) / interval
            marks[c.id] = busy
            util[c.function_id].append((c.id, min(max(frac, 0.0), 1.0)))
        self._busy_mark = marks
        return FnUtilizationSnapshot(now, util)

    def _floor(self, c: Container) -> tuple[float, float]:
        fn = self.cluster.functions[c.function_id]
        v = self.config.vertical
        cpu_min = fn.cpu_demand_vcpu if v.cpu_min is None else v.cpu_min
        mem_min = fn.mem_demand_mb if v.mem_min is None else v.mem_min
        return max(c.demand_cpu, cpu_min), max(c.demand_mem, mem_min)

    def _up_levels(self, c: Container, vm_free) -> list[tuple[float, float]]:
        v = self.config.vertical
        return [(d_cpu, d_mem) for d_cpu, d_mem in v.levels()
                if d_cpu > 0 and d_mem >= 0
                and c.cpu_share + d_cpu <= v.cpu_max + EPS and c.mem_mb + d_mem <= v.mem_max + EPS
                and d_cpu <= vm_free[0] + EPS and d_mem <= vm_free[1] + EPS]

    def _down_levels(self, c: Container) -> list[tuple[float, float]]:
        cpu_floor, mem_floor = self._floor(c)
        return [(d_cpu, d_mem) for d_cpu, d_mem in self.config.vertical.levels()
                if d_cpu < 0 and d_mem <= 0
                and c.cpu_share + d_cpu >= cpu_floor - EPS and c.mem_mb + d_mem >= mem_floor - EPS]

    def vertical_scale(self, snapshot: FnUtilizationSnapshot) -> list[Resize]:
        cfg = self.config
        v = cfg.vertical
        if not v.enabled:
            return []
        cluster = self.cluster
        free = {vm.id: [vm.free_vcpu, vm.free_mem_mb] for vm in cluster.vms}
        actions = []
        for fid in cluster.functions:
            for cid, u in snapshot.utilization.get(fid, ()):
                c = cluster.containers[cid]
                if c.state is not ContainerState.IDLE and c.state is not ContainerState.RUNNING:
                    continue
                vm_free = free[c.vm_id]
                if u > cfg.cpu_threshold_high:
                    viable = self._up_levels(c, vm_free)
                elif u < cfg.cpu_threshold_low:
                    viable = self._down_levels(c)
                else:
                    viable = []
                if not viable:
                    continue
                if cfg.selection == "random":
                    d_cpu, d_mem = viable[self.rng.randrange(len(viable))]
                else:
                    d_cpu, d_mem = max(viable, key=lambda lv: abs(lv[0]))
                vm_free[0] -= d_cpu
                vm_free[1] -= d_mem
                actions.append(Resize(cid, d_cpu, d_mem))
        return actions

    def _gates(self) -> dict[str, tuple[bool, bool]]:
        """Per function: (may add replicas, may remove replicas) under vertical-first.

        Judged on the state after this tick's resizes.
        """
        cluster = self.cluster
        free = {vm.id: [vm.free_vcpu, vm.free_mem_mb] for vm in cluster.vms}
        gates = {}
        for fid, pool in cluster.active.items():
            grow = any(self._up_levels(c, free[c.vm_id]) for c in pool.values())
            shrink = any(c.cpu_share > self._floor(c)[0] + EPS for c in pool.values())
            gates[fid] = (not grow, not shrink)
        return gates

    def horizontal_scale(self, snapshot: FnUtilizationSnapshot,
                         gates: dict[str, tuple[bool, bool]] | None = None) -> list:
        """Replica actions per function.

        ``gates`` optionally maps a function id to ``(may_add, may_remove)``.
        """
        cfg = self.config
        cluster = self.cluster
        actions = []
        for fid in cluster.functions:
            entries = snapshot.utilization.get(fid, [])
            n = len(entries)
            avg = sum(u for _, u in entries) / n if n else 0.0
            lo, hi = self.bounds(fid)
            delta = desired_replicas(n, avg, cfg.cpu_threshold_high, lo, hi) - n
            may_add, may_remove = gates.get(fid, (True, True)) if gates else (True, True)
            # the replica bounds always apply
            if n < lo:
                may_add = True
            if n > hi:
                may_remove = True
            if delta > 0 and may_add:
                actions.extend(CreateReplica(fid) for _ in range(delta))
            elif delta < 0 and may_remove:
                idle = [cluster.containers[cid] for cid, _ in entries
                        if cluster.containers[cid].state is ContainerState.IDLE]
                idle.sort(key=lambda c: (c.idle_since, c.id))
                actions.extend(DestroyIdle(c.id) for c in idle[:-delta])
        return actions

    def tick(self, now: float) -> list:
        """Collect, decide and apply; returns the actions that took effect."""
        cluster = self.cluster
        snapshot = self.collect_snapshot(now)
        applied = []
        for act in self.vertical_scale(snapshot):
            c = cluster.containers[act.container_id]
            try:
                cluster.resize_container(c.id, c.cpu_share + act.d_cpu, c.mem_mb + act.d_mem)
            except (CapacityError, FloorError, StateError) as exc:
                log.debug("resize of container %d skipped: %s", c.id, exc)
                continue
            applied.append(act)
        if self.config.horizontal:
            gates = None
            if self.config.vertical_first and self.config.vertical.enabled:
                gates = self._gates()
            for act in self.horizontal_scale(snapshot, gates):
                if isinstance(act, CreateReplica):
                    fn = cluster.functions[act.function_id]
                    vm = self.scheduler.find_vm(fn.container_cpu, fn.container_mem_mb, cluster.vms)
                    if vm is None:
                        self.placement_failures += 1
                        log.debug("no VM for a %s replica at t=%s", act.function_id, now)
                        continue
                    cluster.create_container(act.function_id, vm.id)
                else:
                    cluster.destroy_container(act.container_id)
                applied.append(act)
        for act in applied:
            self.history.append((now, act))
        return applied
