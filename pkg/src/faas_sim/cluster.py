"""Hosts, VMs and function containers.

Capacity is charged to a VM when a container is granted (while it is still
Pending) and released when it is destroyed. Requests inside a container run
under egalitarian processor sharing: with ``k`` requests in flight each one
progresses at ``cpu_share / k`` vCPU.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .engine import Engine, EventKind, SimEvent
from .errors import CapacityError, ConcurrencyError, FloorError, StateError
from .workload import ServerlessRequest

EPS = 1e-9
# remaining work accepted as "done" at a completion event, vCPU-seconds
WORK_TOL = 1e-6


class ContainerState(enum.Enum):
    PENDING = "Pending"
    IDLE = "Idle"
    RUNNING = "Running"
    DESTROYED = "Destroyed"


class IdlePolicy(enum.Enum):
    KEEP_ALIVE = "keep_alive"  # destroy after keep_alive_s of idleness
    DESTROY = "destroy"  # destroy as soon as the container drains
    RETAIN = "retain"  # keep until something else (the scaler) removes it


LEGAL_TRANSITIONS = frozenset({
    (ContainerState.PENDING, ContainerState.IDLE),
    (ContainerState.IDLE, ContainerState.RUNNING),
    (ContainerState.RUNNING, ContainerState.IDLE),
    (ContainerState.IDLE, ContainerState.DESTROYED),
    (ContainerState.PENDING, ContainerState.DESTROYED),
})


@dataclass
class FunctionType:
    function_id: str
    cpu_demand_vcpu: float = 0.25
    mem_demand_mb: float = 128.0
    container_cpu: float = 0.25
    container_mem_mb: float = 256.0
    max_concurrency: int = 1
    startup_delay_s: float | None = None
    min_replicas: int | None = None
    max_replicas: int | None = None

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.cpu_demand_vcpu > self.container_cpu + EPS or self.mem_demand_mb > self.container_mem_mb + EPS:
            raise ValueError(f"{self.function_id}: per-request demand exceeds container size")


@dataclass(eq=False)
class Host:
    id: int
    vcpus: float
    mem_mb: float
    vm_ids: list[int] = field(default_factory=list)


@dataclass(eq=False)
class Vm:
    id: int
    host_id: int
    vcpus: float
    mem_mb: float
    allocated_vcpu: float = 0.0
    allocated_mem_mb: float = 0.0
    busy_vcpu: float = 0.0
    containers: dict[int, "Container"] = field(default_factory=dict)

    @property
    def free_vcpu(self) -> float:
        return self.vcpus - self.allocated_vcpu

    @property
    def free_mem_mb(self) -> float:
        return self.mem_mb - self.allocated_mem_mb

    def fits(self, cpu: float, mem: float) -> bool:
        return cpu <= self.vcpus - self.allocated_vcpu + EPS and mem <= self.mem_mb - self.allocated_mem_mb + EPS


@dataclass(eq=False)
class Container:
    id: int
    function_id: str
    vm_id: int
    cpu_share: float
    mem_mb: float
    max_concurrency: int
    created_at: float
    state: ContainerState = ContainerState.PENDING
    ready_at: float | None = None
    destroyed_at: float | None = None
    idle_timeout_handle: SimEvent | None = None
    ready_handle: SimEvent | None = None
    # request id -> [request, remaining work, completion event]
    inflight: dict[int, list] = field(default_factory=dict)
    demand_cpu: float = 0.0
    demand_mem: float = 0.0
    reserved: list[ServerlessRequest] = field(default_factory=list)
    last_update: float = 0.0
    busy_accum: float = 0.0
    busy_since: float | None = None
    idle_since: float | None = None
    served: int = 0
    # (time, cpu_share, k) breakpoints, only when the cluster traces
    history: list[tuple[float, float, int]] | None = None

    @property
    def free_cpu(self) -> float:
        return self.cpu_share - self.demand_cpu

    @property
    def free_mem(self) -> float:
        return self.mem_mb - self.demand_mem

    def has_slot(self) -> bool:
        return len(self.inflight) < self.max_concurrency

    def admits(self, r: ServerlessRequest) -> bool:
        return (len(self.inflight) < self.max_concurrency
                and r.cpu_demand_vcpu <= self.cpu_share - self.demand_cpu + EPS
                and r.mem_demand_mb <= self.mem_mb - self.demand_mem + EPS)

    def busy_time(self, now: float) -> float:
        if self.busy_since is None:
            return self.busy_accum
        return self.busy_accum + (now - self.busy_since)


class Cluster:
    def __init__(
        self,
        engine: Engine,
        functions: dict[str, FunctionType],
        vm_count: int = 4,
        vcpus: float = 4.0,
        mem_mb: float = 3072.0,
        vms_per_host: int = 1,
        startup_delay_s: float = 0.5,
        keep_alive_s: float = 600.0,
        idle_policy: IdlePolicy = IdlePolicy.KEEP_ALIVE,
        container_cpu_max: float | None = None,
        container_mem_max: float | None = None,
        observer=None,
        trace: bool = False,
    ):
        self.engine = engine
        self.functions = functions
        self.startup_delay_s = startup_delay_s
        self.keep_alive_s = keep_alive_s
        self.idle_policy = idle_policy
        self.container_cpu_max = container_cpu_max
        self.container_mem_max = container_mem_max
        self.observer = observer
        self.trace = trace
        self.on_request_done = None  # callback(request), set by the controller

        self.hosts: list[Host] = []
        self.vms: list[Vm] = []
        for i in range(vm_count):
            if i % vms_per_host == 0:
                self.hosts.append(Host(len(self.hosts), vcpus * vms_per_host, mem_mb * vms_per_host))
            host = self.hosts[-1]
            vm = Vm(i, host.id, vcpus, mem_mb)
            host.vm_ids.append(i)
            self.vms.append(vm)

        self.containers: dict[int, Container] = {}
        self._next_id = 0
        # live index per function: pending, ready (Idle/Running) and ready-with-free-slot
        self.pending: dict[str, dict[int, Container]] = {f: {} for f in functions}
        self.active: dict[str, dict[int, Container]] = {f: {} for f in functions}
        self.available: dict[str, dict[int, Container]] = {f: {} for f in functions}

        engine.on(EventKind.CONTAINER_READY, self._on_ready)
        engine.on(EventKind.REQUEST_COMPLETION, self._on_completion)
        engine.on(EventKind.IDLE_TIMEOUT, self._on_idle_timeout)

    # -- helpers -------------------------------------------------------------

    def function(self, function_id: str) -> FunctionType:
        return self.functions[function_id]

    def startup_delay(self, function_id: str) -> float:
        override = self.functions[function_id].startup_delay_s
        return self.startup_delay_s if override is None else override

    def live_containers(self, function_id: str | None = None):
        """Non-destroyed containers in creation order."""
        return [c for c in self.containers.values()
                if c.state is not ContainerState.DESTROYED
                and (function_id is None or c.function_id == function_id)]

    def candidates(self, function_id: str, only_available: bool = True) -> list[Container]:
        """Ready containers of a function in VM then container creation order."""
        pool = (self.available if only_available else self.active)[function_id]
        return sorted(pool.values(), key=lambda c: (c.vm_id, c.id))

    def _set_state(self, c: Container, new: ContainerState) -> None:
        old = c.state
        c.state = new
        if self.observer is not None:
            self.observer.container_state(c, old, new, self.engine.now)

    def _vm_changed(self, vm: Vm) -> None:
        if self.observer is not None:
            self.observer.vm_changed(vm, self.engine.now)

    def _mark(self, c: Container, now: float) -> None:
        if c.history is not None:
            c.history.append((now, c.cpu_share, len(c.inflight)))

    def _refresh_available(self, c: Container) -> None:
        pool = self.available[c.function_id]
        if c.state in (ContainerState.IDLE, ContainerState.RUNNING) and len(c.inflight) < c.max_concurrency:
            pool[c.id] = c
        else:
            pool.pop(c.id, None)

    # -- lifecycle -----------------------------------------------------------

    def create_container(self, function_id: str, vm_id: int, cpu_share: float | None = None,
                         mem_mb: float | None = None) -> int:
        fn = self.functions[function_id]
        cpu = fn.container_cpu if cpu_share is None else cpu_share
        mem = fn.container_mem_mb if mem_mb is None else mem_mb
        vm = self.vms[vm_id]
        if not vm.fits(cpu, mem):
            raise CapacityError(
                f"vm {vm_id} has {vm.free_vcpu:.6g} vCPU / {vm.free_mem_mb:.6g} MB free, "
                f"container needs {cpu:.6g} / {mem:.6g}")
        now = self.engine.now
        cid = self._next_id
        self._next_id += 1
        c = Container(cid, function_id, vm_id, cpu, mem, fn.max_concurrency, created_at=now, last_update=now)
        if self.trace:
            c.history = [(now, cpu, 0)]
        self.containers[cid] = c
        vm.containers[cid] = c
        vm.allocated_vcpu += cpu
        vm.allocated_mem_mb += mem
        self.pending[function_id][cid] = c
        c.ready_handle = self.engine.schedule(now + self.startup_delay(function_id), EventKind.CONTAINER_READY, cid)
        if self.observer is not None:
            self.observer.container_created(c, now)
        self._vm_changed(vm)
        return cid

    def _on_ready(self, ev: SimEvent) -> None:
        c = self.containers[ev.payload[0]]
        now = self.engine.now
        c.ready_handle = None
        c.ready_at = now
        c.last_update = now
        del self.pending[c.function_id][c.id]
        self.active[c.function_id][c.id] = c
        self._set_state(c, ContainerState.IDLE)
        self._refresh_available(c)
        if c.reserved:
            reserved, c.reserved = c.reserved, []
            for r in reserved:
                self.start_request(c.id, r)
        else:
            self._went_idle(c, now)

    def _went_idle(self, c: Container, now: float) -> None:
        c.idle_since = now
        if self.idle_policy is IdlePolicy.KEEP_ALIVE:
            c.idle_timeout_handle = self.engine.schedule(now + self.keep_alive_s, EventKind.IDLE_TIMEOUT, c.id)
        elif self.idle_policy is IdlePolicy.DESTROY:
            self.destroy_container(c.id)

    def _on_idle_timeout(self, ev: SimEvent) -> None:
        c = self.containers[ev.payload[0]]
        c.idle_timeout_handle = None
        if c.state is ContainerState.IDLE:
            self.destroy_container(c.id)

    def reserve(self, cid: int, r: ServerlessRequest) -> None:
        """Bind a request to a Pending container; it starts when the container is ready."""
        c = self.containers[cid]
        if c.state is not ContainerState.PENDING:
            raise StateError(f"container {cid} is {c.state.value}, not Pending")
        if len(c.reserved) >= c.max_concurrency:
            raise ConcurrencyError(f"container {cid} has no free slot")
        c.reserved.append(r)
        r.container_id = cid

    def destroy_container(self, cid: int) -> None:
        c = self.containers[cid]
        if c.state is ContainerState.RUNNING:
            raise StateError(f"container {cid} is Running")
        if c.state is ContainerState.DESTROYED:
            raise StateError(f"container {cid} is already Destroyed")
        if c.state is ContainerState.PENDING and c.reserved:
            raise StateError(f"container {cid} has reserved requests")
        now = self.engine.now
        self.engine.cancel(c.idle_timeout_handle)
        self.engine.cancel(c.ready_handle)
        c.idle_timeout_handle = c.ready_handle = None
        self.pending[c.function_id].pop(cid, None)
        self.active[c.function_id].pop(cid, None)
        self.available[c.function_id].pop(cid, None)
        vm = self.vms[c.vm_id]
        vm.allocated_vcpu -= c.cpu_share
        vm.allocated_mem_mb -= c.mem_mb
        if vm.allocated_vcpu < EPS:
            vm.allocated_vcpu = 0.0
        if vm.allocated_mem_mb < EPS:
            vm.allocated_mem_mb = 0.0
        del vm.containers[cid]
        c.destroyed_at = now
        self._set_state(c, ContainerState.DESTROYED)
        self._vm_changed(vm)

    # -- processor sharing ---------------------------------------------------

    def _advance(self, c: Container, now: float) -> None:
        k = len(c.inflight)
        if k:
            dt = now - c.last_update
            if dt > 0.0:
                done = dt * c.cpu_share / k
                for flight in c.inflight.values():
                    flight[1] -= done
        c.last_update = now

    def _reschedule(self, c: Container, now: float) -> None:
        k = len(c.inflight)
        if not k:
            return
        rate = c.cpu_share / k
        engine = self.engine
        for rid, flight in c.inflight.items():
            engine.cancel(flight[2])
            remaining = flight[1] if flight[1] > 0.0 else 0.0
            flight[2] = engine.schedule(now + remaining / rate, EventKind.REQUEST_COMPLETION, c.id, rid)

    def start_request(self, cid: int, r: ServerlessRequest) -> SimEvent:
        c = self.containers[cid]
        if c.state is not ContainerState.IDLE and c.state is not ContainerState.RUNNING:
            raise StateError(f"container {cid} is {c.state.value}")
        if len(c.inflight) >= c.max_concurrency:
            raise ConcurrencyError(f"container {cid} is full ({c.max_concurrency})")
        now = self.engine.now
        self._advance(c, now)
        flight = [r, r.cpu_work, None]
        c.inflight[r.id] = flight
        c.demand_cpu += r.cpu_demand_vcpu
        c.demand_mem += r.mem_demand_mb
        c.served += 1
        r.started_at = now
        r.container_id = cid
        if c.state is ContainerState.IDLE:
            vm = self.vms[c.vm_id]
            self.engine.cancel(c.idle_timeout_handle)
            c.idle_timeout_handle = None
            c.idle_since = None
            c.busy_since = now
            vm.busy_vcpu += c.cpu_share
            self._set_state(c, ContainerState.RUNNING)
            self._vm_changed(vm)
        self._mark(c, now)
        self._reschedule(c, now)
        self._refresh_available(c)
        return flight[2]

    def _on_completion(self, ev: SimEvent) -> None:
        cid, rid = ev.payload
        self.complete_request(cid, rid)

    def complete_request(self, cid: int, rid: int) -> ServerlessRequest:
        c = self.containers[cid]
        now = self.engine.now
        self._advance(c, now)
        flight = c.inflight[rid]
        if flight[1] > WORK_TOL:
            raise StateError(f"request {rid} still has {flight[1]!r} vCPU-s of work")
        del c.inflight[rid]
        r = flight[0]
        r.completed_at = now
        c.demand_cpu -= r.cpu_demand_vcpu
        c.demand_mem -= r.mem_demand_mb
        if not c.inflight:
            c.demand_cpu = 0.0
            c.demand_mem = 0.0
        self._mark(c, now)
        if c.inflight:
            self._reschedule(c, now)
            self._refresh_available(c)
        else:
            vm = self.vms[c.vm_id]
            c.busy_accum += now - c.busy_since
            c.busy_since = None
            vm.busy_vcpu -= c.cpu_share
            if vm.busy_vcpu < EPS:
                vm.busy_vcpu = 0.0
            self._set_state(c, ContainerState.IDLE)
            self._refresh_available(c)
            self._vm_changed(vm)
            self._went_idle(c, now)
        if self.on_request_done is not None:
            self.on_request_done(r)
        return r

    def resize_container(self, cid: int, new_cpu_share: float, new_mem_mb: float) -> None:
        c = self.containers[cid]
        if c.state is ContainerState.DESTROYED:
            raise StateError(f"container {cid} is Destroyed")
        if self.container_cpu_max is not None and new_cpu_share > self.container_cpu_max + EPS:
            raise CapacityError(f"{new_cpu_share} vCPU exceeds per-container max {self.container_cpu_max}")
        if self.container_mem_max is not None and new_mem_mb > self.container_mem_max + EPS:
            raise CapacityError(f"{new_mem_mb} MB exceeds per-container max {self.container_mem_max}")
        if new_cpu_share <= 0.0 or new_cpu_share < c.demand_cpu - EPS:
            raise FloorError(f"{new_cpu_share} vCPU is below in-flight demand {c.demand_cpu}")
        if new_mem_mb <= 0.0 or new_mem_mb < c.demand_mem - EPS:
            raise FloorError(f"{new_mem_mb} MB is below in-flight demand {c.demand_mem}")
        vm = self.vms[c.vm_id]
        d_cpu = new_cpu_share - c.cpu_share
        d_mem = new_mem_mb - c.mem_mb
        if not vm.fits(max(d_cpu, 0.0), max(d_mem, 0.0)):
            raise CapacityError(f"vm {vm.id} cannot absorb +{d_cpu} vCPU / +{d_mem} MB")
        now = self.engine.now
        old_share = c.cpu_share
        self._advance(c, now)
        vm.allocated_vcpu += d_cpu
        vm.allocated_mem_mb += d_mem
        if c.state is ContainerState.RUNNING:
            vm.busy_vcpu += d_cpu
        c.cpu_share = new_cpu_share
        c.mem_mb = new_mem_mb
        self._mark(c, now)
        self._reschedule(c, now)
        if self.observer is not None:
            self.observer.container_resized(c, old_share, now)
        self._vm_changed(vm)
