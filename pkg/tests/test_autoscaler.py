import math
from fractions import Fraction

import pytest

from helpers import req

from faas_sim.autoscaler import (
    AutoScaler, CreateReplica, DestroyIdle, FnUtilizationSnapshot, Resize, ScalingConfig, VerticalConfig,
    desired_replicas,
)
from faas_sim.cluster import Cluster, ContainerState, FunctionType, IdlePolicy
from faas_sim.engine import Engine
from faas_sim.scheduler import make_policy


def build(config=None, vcpus=4.0, container_cpu=0.5, demand=0.25, slots=1):
    eng = Engine()
    fn = FunctionType("f", cpu_demand_vcpu=demand, mem_demand_mb=64.0, container_cpu=container_cpu,
                      container_mem_mb=256.0, max_concurrency=slots)
    cl = Cluster(eng, {"f": fn}, vm_count=1, vcpus=vcpus, mem_mb=3072.0, idle_policy=IdlePolicy.RETAIN,
                 container_cpu_max=1.0, container_mem_max=3072.0)
    scaler = AutoScaler(cl, make_policy("first_fit"), config or ScalingConfig(enabled=True), seed=1)
    return eng, cl, scaler


def test_snapshot_busy_fractions():
    eng, cl, scaler = build(ScalingConfig(enabled=True, interval_s=30.0))
    always, never, half = (cl.create_container("f", 0) for _ in range(3))
    eng.run_until(0.5)
    cl.start_request(always, req(0, 0.0, 200.0, cpu=0.25))
    eng.run_until(15.0)
    cl.start_request(half, req(1, 0.0, 30.0, cpu=0.25))  # 7.5 vCPU-s at 0.5 vCPU: 15 s
    snap = scaler.collect_snapshot(30.0)
    got = dict(snap.utilization["f"])
    # the first container started at 0.5, so it was busy 29.5 s of 30
    assert got[always] == pytest.approx(29.5 / 30.0)
    assert got[never] == 0.0
    assert got[half] == pytest.approx(0.5)
    eng.run_until(60.0)
    assert dict(scaler.collect_snapshot(60.0).utilization["f"])[always] == pytest.approx(1.0)


@pytest.mark.parametrize("current, util, lo, hi, want", [
    (4, 0.90, 1, 100, 6),
    (4, 0.60, 1, 100, 4),
    (5, 0.10, 1, 100, 1),
    (5, 0.0, 1, 100, 1),
    (5, 0.0, 0, 100, 0),
    (4, 0.90, 1, 5, 5),
    (0, 0.0, 2, 10, 2),
])
def test_desired_replicas(current, util, lo, hi, want):
    assert desired_replicas(current, util, 0.6, lo, hi) == want


def test_ceil_grid_against_exact_fractions():
    for theta in ("0.5", "0.6", "0.8"):
        for n in range(1, 11):
            for tenths in range(1, 11):
                exact = math.ceil(Fraction(n) * Fraction(tenths, 10) / Fraction(theta))
                assert desired_replicas(n, tenths / 10, float(theta), 0, 10**6) == exact


def snapshot(pairs):
    return FnUtilizationSnapshot(0.0, {"f": list(pairs)})


def test_horizontal_scale_out():
    eng, cl, scaler = build()
    ids = [cl.create_container("f", 0) for _ in range(4)]
    acts = scaler.horizontal_scale(snapshot((i, 0.9) for i in ids))
    assert acts == [CreateReplica("f"), CreateReplica("f")]


def test_horizontal_scale_in_destroys_oldest_idle():
    eng, cl, scaler = build()
    ids = [cl.create_container("f", 0) for _ in range(5)]
    eng.run_until()
    cl.start_request(ids[2], req(0, 0.0, 100.0))
    acts = scaler.horizontal_scale(snapshot((i, 0.1) for i in ids))
    # desired 1; only idle ones can go, the running one stays
    assert acts == [DestroyIdle(i) for i in (ids[0], ids[1], ids[3], ids[4])]


def test_horizontal_at_threshold_is_fixed_point():
    eng, cl, scaler = build()
    ids = [cl.create_container("f", 0) for _ in range(3)]
    assert scaler.horizontal_scale(snapshot((i, 0.6) for i in ids)) == []


def vertical(**kw):
    v = VerticalConfig(enabled=True, cpu_steps=[0.25, 0.5, -0.25], mem_steps=[0.0, 0.0, 0.0], cpu_max=1.0)
    for k, val in kw.items():
        setattr(v, k, val)
    return v


def test_vertical_up_viable_steps():
    eng, cl, scaler = build(ScalingConfig(enabled=True, vertical=vertical()), vcpus=1.0)
    cid = cl.create_container("f", 0)
    eng.run_until()
    c = cl.containers[cid]
    assert cl.vms[0].free_vcpu == 0.5
    assert scaler._up_levels(c, [0.5, 3072.0]) == [(0.25, 0.0), (0.5, 0.0)]
    picks = {scaler.vertical_scale(snapshot([(cid, 0.95)]))[0].d_cpu for _ in range(40)}
    assert picks == {0.25, 0.5}
    scaler.config.selection = "largest_feasible"
    assert scaler.vertical_scale(snapshot([(cid, 0.95)])) == [Resize(cid, 0.5, 0.0)]


def test_random_selection_is_seeded():
    def picks():
        eng, cl, scaler = build(ScalingConfig(enabled=True, vertical=vertical()), vcpus=1.0)
        cid = cl.create_container("f", 0)
        eng.run_until()
        return [scaler.vertical_scale(snapshot([(cid, 0.95)]))[0].d_cpu for _ in range(20)]
    assert picks() == picks()


def test_vertical_at_cap_does_nothing():
    eng, cl, scaler = build(ScalingConfig(enabled=True, vertical=vertical()), container_cpu=1.0)
    cid = cl.create_container("f", 0)
    eng.run_until()
    assert scaler.vertical_scale(snapshot([(cid, 0.99)])) == []


def test_vertical_down_respects_floor():
    eng, cl, scaler = build(ScalingConfig(enabled=True, vertical=vertical()))
    cid = cl.create_container("f", 0)
    eng.run_until()
    assert scaler.vertical_scale(snapshot([(cid, 0.05)])) == [Resize(cid, -0.25, 0.0)]
    cl.resize_container(cid, 0.25, 256.0)
    # 0.25 is the per-request demand, the default floor
    assert scaler.vertical_scale(snapshot([(cid, 0.05)])) == []
    scaler.config.vertical.cpu_min = 0.5
    cl.resize_container(cid, 0.5, 256.0)
    assert scaler.vertical_scale(snapshot([(cid, 0.05)])) == []


def test_vertical_ledger_shared_within_tick():
    eng, cl, scaler = build(ScalingConfig(enabled=True, selection="largest_feasible", vertical=vertical()),
                            vcpus=1.5)
    a, b = cl.create_container("f", 0), cl.create_container("f", 0)
    eng.run_until()
    acts = scaler.vertical_scale(snapshot([(a, 0.9), (b, 0.9)]))
    # 0.5 vCPU free: the first container takes all of it
    assert acts == [Resize(a, 0.5, 0.0)]


def test_tick_applies_vertical_before_horizontal():
    cfg = ScalingConfig(enabled=True, interval_s=10.0, selection="largest_feasible", vertical=vertical())
    eng, cl, scaler = build(cfg, vcpus=4.0)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    cl.start_request(cid, req(0, 0.0, 400.0))
    eng.run_until(10.5)
    applied = scaler.tick(10.5)
    assert applied[0] == Resize(cid, 0.5, 0.0)
    assert any(isinstance(a, CreateReplica) for a in applied)
    assert cl.containers[cid].cpu_share == 1.0


def test_vertical_first_holds_replicas_until_containers_maxed():
    v = VerticalConfig(enabled=True, cpu_steps=[0.25, -0.25], cpu_max=1.0, cpu_min=0.5)
    cfg = ScalingConfig(enabled=True, interval_s=10.0, vertical_first=True, vertical=v)
    eng, cl, scaler = build(cfg, vcpus=4.0)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    cl.start_request(cid, req(0, 0.0, 4000.0))
    eng.run_until(10.5)
    # 0.75 vCPU can still grow, so no replica
    assert scaler.tick(10.5) == [Resize(cid, 0.25, 0.0)]
    eng.run_until(20.5)
    # at the cap after this tick's step: the replica rule takes over
    assert scaler.tick(20.5) == [Resize(cid, 0.25, 0.0), CreateReplica("f")]


def test_vertical_first_blocks_scale_in_above_floor():
    cfg = ScalingConfig(enabled=True, vertical_first=True, vertical=vertical(cpu_min=0.5))
    eng, cl, scaler = build(cfg)
    ids = [cl.create_container("f", 0) for _ in range(3)]
    eng.run_until()
    cl.resize_container(ids[0], 1.0, 256.0)
    assert scaler._gates()["f"] == (False, False)
    cl.resize_container(ids[0], 0.5, 256.0)
    assert scaler._gates()["f"] == (False, True)


def test_config_validation():
    with pytest.raises(ValueError):
        ScalingConfig(cpu_threshold_low=0.7, cpu_threshold_high=0.6).validate()
    with pytest.raises(ValueError):
        ScalingConfig(min_replicas=3, max_replicas=2).validate()
    with pytest.raises(ValueError):
        ScalingConfig(vertical=VerticalConfig(enabled=True, cpu_steps=[])).validate()
    with pytest.raises(ValueError):
        ScalingConfig(vertical=VerticalConfig(enabled=True, cpu_max=8.0)).validate(vm_vcpus=4.0)
    assert VerticalConfig(cpu_steps=[0.25, -0.25], mem_steps=[128.0]).levels() == [(0.25, 128.0), (-0.25, 0.0)]


def test_pending_replicas_count_as_idle_time():
    eng, cl, scaler = build(ScalingConfig(enabled=True, interval_s=1.0))
    cid = cl.create_container("f", 0)
    snap = scaler.collect_snapshot(0.25)
    assert snap.utilization["f"] == [(cid, 0.0)]
    assert cl.containers[cid].state is ContainerState.PENDING
