"""Wires engine, cluster, routing, placement, scaling and metrics into one run."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .autoscaler import AutoScaler
from .cluster import Cluster, FunctionType, IdlePolicy
from .engine import Engine, EventKind, SimEvent
from .errors import ConfigError
from .loadbalancer import Action, ArchitectureMode, LoadBalancer, make_selector
from .metrics import MetricsRecorder, RunSummary, summarize, write_outputs
from .scheduler import make_policy
from .workload import ServerlessRequest, SyntheticFunction, SyntheticSpec, generate_synthetic, ingest_trace

log = logging.getLogger(__name__)


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent integer seeds for each random stream of a run."""
    names = ("workload", "scheduler", "load_balancer", "scaler")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(ss.generate_state(1)[0]) for n, ss in zip(names, children)}


def build_function_types(cfg: cfgmod.ScenarioConfig, extra_ids=()) -> dict[str, FunctionType]:
    ids = cfgmod.function_ids(cfg)
    for fid in extra_ids:
        if fid not in ids:
            ids.append(fid)
    return {fid: FunctionType(**cfgmod.function_type_fields(cfg, fid)) for fid in ids}


def build_workload(cfg: cfgmod.ScenarioConfig, functions: dict[str, FunctionType] | None = None,
                   seed: int | None = None) -> list[ServerlessRequest]:
    w = cfg.workload
    if w.trace is not None:
        return ingest_trace(cfgmod.resolve_path(cfg, w.trace))
    functions = functions or build_function_types(cfg)
    fns = []
    for d in cfgmod.synthetic_functions(w.synthetic):
        ft = functions[d["function_id"]]
        fns.append(SyntheticFunction(cpu_demand_vcpu=ft.cpu_demand_vcpu, mem_demand_mb=ft.mem_demand_mb, **d))
    if seed is None:
        seed = derive_seeds(cfg.seed)["workload"]
    return generate_synthetic(SyntheticSpec(duration_s=w.synthetic.duration_s, seed=seed, functions=fns))


def idle_policy_for(arch: ArchitectureMode) -> IdlePolicy:
    if arch.container_idling:
        return IdlePolicy.KEEP_ALIVE
    if arch.request_concurrency:
        return IdlePolicy.RETAIN
    return IdlePolicy.DESTROY


@dataclass
class RunResult:
    summary: RunSummary
    requests: list[ServerlessRequest]
    simulation: "Simulation"


class Simulation:
    """One isolated simulation run (own engine, RNG streams and cluster)."""

    def __init__(self, cfg: cfgmod.ScenarioConfig, requests: list[ServerlessRequest] | None = None,
                 log_events: bool = False, trace: bool = False):
        self.cfg = cfg
        seeds = derive_seeds(cfg.seed)
        if requests is None:
            requests = build_workload(cfg, seed=seeds["workload"])
        self.requests = requests
        self.functions = build_function_types(cfg, extra_ids=sorted({r.function_id for r in requests}))
        for r in requests:
            ft = self.functions[r.function_id]
            if r.cpu_demand_vcpu > ft.container_cpu + 1e-9 or r.mem_demand_mb > ft.container_mem_mb + 1e-9:
                raise ConfigError(f"functions[{r.function_id}]",
                                  f"request {r.id} demand exceeds the container size")

        a = cfg.architecture
        self.mode = ArchitectureMode(a.scale_per_request, a.container_idling, a.request_concurrency,
                                     a.retry_interval_s, a.max_retries)
        c = cfg.cluster
        self.engine = Engine(log_events=log_events)
        scaling = cfg.scaling
        vertical = scaling.enabled and scaling.vertical.enabled
        self.cluster = Cluster(
            self.engine, self.functions,
            vm_count=c.vm_count, vcpus=c.vcpus, mem_mb=c.mem_mb, vms_per_host=c.vms_per_host,
            startup_delay_s=c.startup_delay_s, keep_alive_s=c.keep_alive_s,
            idle_policy=idle_policy_for(self.mode),
            container_cpu_max=scaling.vertical.cpu_max if vertical else None,
            container_mem_max=scaling.vertical.mem_max if vertical else None,
            trace=trace,
        )
        self.recorder = None
        if cfg.monitoring.enabled:
            self.recorder = MetricsRecorder(self.cluster.vms, self.functions, check_transitions=trace)
            self.cluster.observer = self.recorder
        self.cluster.on_request_done = self._request_done

        self.placement = make_policy(cfg.scheduler, seed=seeds["scheduler"], utilization_mode=c.utilization_mode)
        self.balancer = LoadBalancer(self.mode, self.cluster, self.placement,
                                     make_selector(cfg.load_balancer, seed=seeds["load_balancer"]))
        self.scaler = AutoScaler(self.cluster, self.placement, scaling, seed=seeds["scaler"]) if scaling.enabled else None

        self._by_id = {r.id: r for r in requests}
        self._terminal = 0
        self._finished = False
        self.makespan: float | None = None
        self.decisions = {a: 0 for a in Action}

        eng = self.engine
        eng.on(EventKind.REQUEST_ARRIVAL, self._on_arrival)
        eng.on(EventKind.RETRY_SCHEDULING, self._on_retry)
        eng.on(EventKind.SCALING_TICK, self._on_tick)
        eng.on(EventKind.SIMULATION_END, self._on_end)
        for r in requests:
            eng.schedule(r.arrival_time, EventKind.REQUEST_ARRIVAL, r.id)
        if self.scaler is not None:
            eng.schedule(scaling.interval_s, EventKind.SCALING_TICK)
        if not requests:
            eng.schedule(0.0, EventKind.SIMULATION_END)

    # -- handlers ----------------------------------------------------------------

    def _on_arrival(self, ev: SimEvent) -> None:
        r = self._by_id[ev.payload[0]]
        r.submitted_at = self.engine.now
        self._route(r)

    def _on_retry(self, ev: SimEvent) -> None:
        self._route(self._by_id[ev.payload[0]])

    def _route(self, r: ServerlessRequest) -> None:
        now = self.engine.now
        d = self.balancer.route_request(r, now)
        self.decisions[d.action] += 1
        if d.action is Action.USE_CONTAINER:
            self.cluster.start_request(d.container_id, r)
        elif d.action is Action.NEW_CONTAINER:
            cid = self.cluster.create_container(r.function_id, d.vm_id)
            self.cluster.reserve(cid, r)
            r.cold_start = True
        elif d.action is Action.RETRY:
            r.retries += 1
            self.engine.schedule(d.retry_at, EventKind.RETRY_SCHEDULING, r.id)
        else:
            r.rejected = True
            self._request_done(r)

    def _request_done(self, r: ServerlessRequest) -> None:
        self._terminal += 1
        if self._terminal == len(self.requests) and not self._finished:
            self._finished = True
            self.engine.schedule(self.engine.now, EventKind.SIMULATION_END)

    def _on_tick(self, ev: SimEvent) -> None:
        if self._finished:
            return
        self.scaler.tick(self.engine.now)
        self.engine.schedule(self.engine.now + self.cfg.scaling.interval_s, EventKind.SCALING_TICK)

    def _on_end(self, ev: SimEvent) -> None:
        self.makespan = self.engine.now
        self.engine.stop()

    # -- run -----------------------------------------------------------------------

    def run(self) -> RunSummary:
        end = self.cfg.end_time_s if self.cfg.end_time_s is not None else math.inf
        self.engine.run_until(end)
        if self.makespan is None:
            self.makespan = self.engine.now
        return summarize(self.requests, self.makespan, len(self.cluster.vms), self.recorder,
                         self.cfg.monitoring.vm_seconds_mode)

    @property
    def event_log(self) -> list[str] | None:
        return self.engine.log


def run_config(cfg: cfgmod.ScenarioConfig, out_dir=None, log_events: bool = False,
               requests=None, trace: bool = False) -> RunResult:
    sim = Simulation(cfg, requests=requests, log_events=log_events, trace=trace)
    summary = sim.run()
    if out_dir is not None:
        write_outputs(out_dir, summary, sim.requests, sim.recorder, sim.event_log)
    return RunResult(summary, sim.requests, sim)
