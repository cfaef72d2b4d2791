"""Request routing: new container, warm container, retry later or reject."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .cluster import Cluster, Container
from .scheduler import PlacementPolicy
from .workload import ServerlessRequest


@dataclass(frozen=True)
class ArchitectureMode:
    scale_per_request: bool = True
    container_idling: bool = False
    request_concurrency: bool = False
    retry_interval_s: float = 1.0
    max_retries: int = 5

    def __post_init__(self):
        if self.scale_per_request and self.request_concurrency:
            raise ValueError("scale_per_request and request_concurrency are mutually exclusive")
        if self.retry_interval_s <= 0:
            raise ValueError("retry_interval_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Action(enum.Enum):
    NEW_CONTAINER = "NewContainer"
    USE_CONTAINER = "UseContainer"
    RETRY = "Retry"
    REJECT = "Reject"


@dataclass(frozen=True)
class Decision:
    action: Action
    container_id: int | None = None
    vm_id: int | None = None
    retry_at: float | None = None


class ContainerSelector:
    """Picks a container for a request out of creation-ordered candidates."""

    name = "base"

    def __init__(self, seed: int | None = None):
        pass

    def select(self, r: ServerlessRequest, candidates: list[Container]) -> Container | None:
        raise NotImplementedError


class FirstFitSelector(ContainerSelector):
    name = "first_fit"

    def select(self, r, candidates):
        for c in candidates:
            if c.admits(r):
                return c
        return None


class RandomSelector(ContainerSelector):
    name = "random"

    def __init__(self, seed=None):
        self.rng = random.Random(seed)

    def select(self, r, candidates):
        fits = [c for c in candidates if c.admits(r)]
        if not fits:
            return None
        return fits[self.rng.randrange(len(fits))]


SELECTORS: dict[str, type[ContainerSelector]] = {
    FirstFitSelector.name: FirstFitSelector,
    RandomSelector.name: RandomSelector,
}


def register_selector(cls: type[ContainerSelector]) -> type[ContainerSelector]:
    SELECTORS[cls.name] = cls
    return cls


def make_selector(name: str, seed: int | None = None) -> ContainerSelector:
    try:
        return SELECTORS[name](seed=seed)
    except KeyError:
        raise ValueError(f"unknown load balancer policy {name!r}; known: {sorted(SELECTORS)}") from None


class LoadBalancer:
    def __init__(self, mode: ArchitectureMode, cluster: Cluster, scheduler: PlacementPolicy,
                 selector: ContainerSelector | None = None):
        self.mode = mode
        self.cluster = cluster
        self.scheduler = scheduler
        self.selector = selector or FirstFitSelector()

    def select_container(self, r: ServerlessRequest, candidates: list[Container]) -> Container | None:
        return self.selector.select(r, candidates)

    def _new_container(self, r: ServerlessRequest, now: float) -> Decision:
        fn = self.cluster.functions[r.function_id]
        vm = self.scheduler.find_vm(fn.container_cpu, fn.container_mem_mb, self.cluster.vms)
        if vm is not None:
            return Decision(Action.NEW_CONTAINER, vm_id=vm.id)
        return self._retry(r, now)

    def _retry(self, r: ServerlessRequest, now: float) -> Decision:
        if r.retries >= self.mode.max_retries:
            return Decision(Action.REJECT)
        return Decision(Action.RETRY, retry_at=now + self.mode.retry_interval_s)

    def route_request(self, r: ServerlessRequest, now: float) -> Decision:
        mode = self.mode
        cluster = self.cluster
        fid = r.function_id
        if mode.scale_per_request:
            if mode.container_idling:
                c = self.select_container(r, cluster.candidates(fid))
                if c is not None:
                    return Decision(Action.USE_CONTAINER, container_id=c.id)
            return self._new_container(r, now)
        c = self.select_container(r, cluster.candidates(fid))
        if c is not None:
            return Decision(Action.USE_CONTAINER, container_id=c.id)
        if cluster.active[fid] or cluster.pending[fid]:
            return self._retry(r, now)
        return self._new_container(r, now)
