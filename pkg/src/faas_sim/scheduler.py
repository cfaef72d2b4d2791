"""VM placement for newly created containers.

Feasibility is judged on reserved (allocated) capacity so Pending containers
cannot be overcommitted. Best/worst fit break utilization ties by lowest VM id.
"""

from __future__ import annotations

import random

from .cluster import Vm

UTILIZATION_MODES = ("cpu", "max")


def utilization(vm: Vm, mode: str = "cpu") -> float:
    cpu = vm.allocated_vcpu / vm.vcpus
    if mode == "cpu":
        return cpu
    if mode == "max":
        return max(cpu, vm.allocated_mem_mb / vm.mem_mb)
    raise ValueError(f"unknown utilization mode {mode!r}")


class PlacementPolicy:
    name = "base"

    def __init__(self, seed: int | None = None, utilization_mode: str = "cpu"):
        self.utilization_mode = utilization_mode

    def feasible(self, cpu: float, mem: float, vms) -> list[Vm]:
        return [vm for vm in vms if vm.fits(cpu, mem)]

    def find_vm(self, cpu: float, mem: float, vms) -> Vm | None:
        raise NotImplementedError


class FirstFit(PlacementPolicy):
    name = "first_fit"

    def find_vm(self, cpu, mem, vms):
        for vm in vms:
            if vm.fits(cpu, mem):
                return vm
        return None


class RoundRobin(PlacementPolicy):
    name = "round_robin"

    def __init__(self, seed=None, utilization_mode="cpu"):
        super().__init__(seed, utilization_mode)
        self.cursor = 0

    def find_vm(self, cpu, mem, vms):
        n = len(vms)
        if n == 0:
            return None
        self.cursor %= n
        for step in range(n):
            i = (self.cursor + step) % n
            if vms[i].fits(cpu, mem):
                self.cursor = (i + 1) % n
                return vms[i]
        return None


class RandomFit(PlacementPolicy):
    name = "random"

    def __init__(self, seed=None, utilization_mode="cpu"):
        super().__init__(seed, utilization_mode)
        self.rng = random.Random(seed)

    def find_vm(self, cpu, mem, vms):
        options = self.feasible(cpu, mem, vms)
        if not options:
            return None
        return options[self.rng.randrange(len(options))]


class BestFit(PlacementPolicy):
    """Pack onto the most utilized feasible VM."""

    name = "best_fit"

    def find_vm(self, cpu, mem, vms):
        best, best_u = None, -1.0
        for vm in vms:
            if vm.fits(cpu, mem):
                u = utilization(vm, self.utilization_mode)
                if u > best_u:
                    best, best_u = vm, u
        return best


class WorstFit(PlacementPolicy):
    """Spread onto the least utilized feasible VM."""

    name = "worst_fit"

    def find_vm(self, cpu, mem, vms):
        best, best_u = None, 2.0
        for vm in vms:
            if vm.fits(cpu, mem):
                u = utilization(vm, self.utilization_mode)
                if u < best_u:
                    best, best_u = vm, u
        return best


POLICIES: dict[str, type[PlacementPolicy]] = {
    cls.name: cls for cls in (FirstFit, RoundRobin, RandomFit, BestFit, WorstFit)
}


def register_policy(cls: type[PlacementPolicy]) -> type[PlacementPolicy]:
    POLICIES[cls.name] = cls
    return cls


def make_policy(name: str, seed: int | None = None, utilization_mode: str = "cpu") -> PlacementPolicy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown scheduler policy {name!r}; known: {sorted(POLICIES)}") from None
    return cls(seed=seed, utilization_mode=utilization_mode)


def find_vm_for_container(policy: PlacementPolicy, cpu: float, mem: float, vms) -> int | None:
    vm = policy.find_vm(cpu, mem, vms)
    return None if vm is None else vm.id
