"""Small builders shared by the test modules."""

from __future__ import annotations

import copy

from faas_sim.config import ScenarioConfig, from_dict, validate
from faas_sim.controller import Simulation
from faas_sim.workload import ServerlessRequest

BASE = {
    "seed": 0,
    "scheduler": "first_fit",
    "load_balancer": "first_fit",
    "cluster": {"vm_count": 1, "vcpus": 1.0, "mem_mb": 1024.0, "startup_delay_s": 0.5, "keep_alive_s": 600.0},
    "architecture": {"scale_per_request": True, "container_idling": False, "request_concurrency": False,
                     "retry_interval_s": 1.0, "max_retries": 5},
    "function_defaults": {"cpu_demand_vcpu": 0.25, "mem_demand_mb": 64.0,
                          "container_cpu": 0.25, "container_mem_mb": 128.0, "max_concurrency": 1},
    # never read: requests are handed to the simulation directly
    "workload": {"trace": "inline.csv"},
}


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def config(**over) -> ScenarioConfig:
    return validate(from_dict(ScenarioConfig, merge(BASE, over)))


def req(i, t, exec_s, fid="f", cpu=0.25, mem=64.0) -> ServerlessRequest:
    return ServerlessRequest(id=i, function_id=fid, arrival_time=t, cpu_work=exec_s * cpu,
                             cpu_demand_vcpu=cpu, mem_demand_mb=mem, exec_time_s=exec_s)


def simulate(cfg: ScenarioConfig, requests, **kw) -> Simulation:
    sim = Simulation(cfg, requests=requests, **kw)
    sim.summary = sim.run()
    return sim
