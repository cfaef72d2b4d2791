import pytest

from helpers import req

from faas_sim.cluster import Cluster, ContainerState, FunctionType, IdlePolicy
from faas_sim.engine import Engine, EventKind
from faas_sim.errors import CapacityError, ConcurrencyError, FloorError, StateError


def make(policy=IdlePolicy.RETAIN, vcpus=4.0, mem=3072.0, vms=1, **fn):
    eng = Engine()
    fn.setdefault("container_cpu", 1.0)
    fn.setdefault("container_mem_mb", 512.0)
    funcs = {"f": FunctionType("f", **fn)}
    cl = Cluster(eng, funcs, vm_count=vms, vcpus=vcpus, mem_mb=mem, startup_delay_s=0.5,
                 keep_alive_s=600.0, idle_policy=policy, container_cpu_max=1.0, container_mem_max=3072.0)
    return eng, cl


def ready(eng, cl, cid):
    eng.run_until(cl.containers[cid].created_at + 0.5)
    return cl.containers[cid]


def test_container_ready_after_startup_delay():
    eng, cl = make()
    cid = cl.create_container("f", 0)
    c = cl.containers[cid]
    assert c.state is ContainerState.PENDING
    assert cl.vms[0].allocated_vcpu == 1.0  # reserved while pending
    eng.run_until()
    assert c.state is ContainerState.IDLE
    assert c.ready_at == 0.5


def test_capacity_error_when_vm_is_short():
    eng, cl = make(vcpus=0.1, cpu_demand_vcpu=0.05, container_cpu=0.1)
    cl.create_container("f", 0)
    with pytest.raises(CapacityError):
        cl.create_container("f", 0)
    eng, cl = make(vcpus=4.0)
    cl.vms[0].allocated_vcpu = 3.9
    with pytest.raises(CapacityError):
        cl.create_container("f", 0)


def test_two_half_vm_containers_fit_third_does_not():
    eng, cl = make(container_cpu=2.0, container_mem_mb=512.0)
    cl.container_cpu_max = None
    cl.create_container("f", 0)
    cl.create_container("f", 0)
    assert cl.vms[0].free_vcpu == 0.0
    with pytest.raises(CapacityError):
        cl.create_container("f", 0)


def test_lone_request_full_speed():
    eng, cl = make(cpu_demand_vcpu=1.0)
    cid = cl.create_container("f", 0)
    ready(eng, cl, cid)
    r = req(0, 0.0, 1.0, cpu=1.0)
    cl.start_request(cid, r)
    eng.run_until()
    assert r.completed_at == pytest.approx(1.5)


def test_two_equal_requests_share_the_cpu():
    eng, cl = make(cpu_demand_vcpu=0.5, max_concurrency=2)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    a, b = req(0, 0.0, 2.0, cpu=0.5), req(1, 0.0, 2.0, cpu=0.5)
    cl.start_request(cid, a)
    cl.start_request(cid, b)
    eng.run_until()
    # each gets 0.5 vCPU for 1.0 vCPU-s of work
    assert a.completed_at == pytest.approx(2.5)
    assert b.completed_at == pytest.approx(2.5)


def test_second_arrival_mid_flight():
    eng, cl = make(cpu_demand_vcpu=0.5, max_concurrency=2)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    a, b = req(0, 0.0, 2.0, cpu=0.5), req(1, 0.0, 2.0, cpu=0.5)
    cl.start_request(cid, a)
    eng.run_until(1.0)
    cl.start_request(cid, b)
    eng.run_until()
    # a: 0.5 done alone, 0.5 left at rate 0.5 -> +1.0; b: 0.5 done by then, rest alone
    assert a.completed_at == pytest.approx(2.0)
    assert b.completed_at == pytest.approx(2.5)


def test_survivor_speeds_up_when_peer_completes():
    eng, cl = make(cpu_demand_vcpu=0.5, max_concurrency=2)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    short, long_ = req(0, 0.0, 1.0, cpu=0.5), req(1, 0.0, 4.0, cpu=0.5)
    cl.start_request(cid, short)
    ev = cl.start_request(cid, long_)
    # scheduled as if sharing forever: 2.0 work at 0.5
    assert ev.time == pytest.approx(4.5)
    eng.run_until(1.5)
    assert short.completed_at == pytest.approx(1.5)
    moved = cl.containers[cid].inflight[1][2]
    # 1.5 left at the full 1.0 vCPU
    assert moved.time == pytest.approx(3.0)
    assert ev.cancelled
    eng.run_until()
    assert long_.completed_at == pytest.approx(3.0)


def test_keep_alive_timeout_scheduled():
    eng, cl = make(policy=IdlePolicy.KEEP_ALIVE, cpu_demand_vcpu=1.0)
    cid = cl.create_container("f", 0)
    cl.reserve(cid, req(0, 0.0, 1.0, cpu=1.0))
    eng.run_until(1.5)
    c = cl.containers[cid]
    assert c.state is ContainerState.IDLE
    assert c.idle_timeout_handle.time == pytest.approx(601.5)
    assert c.idle_timeout_handle.kind is EventKind.IDLE_TIMEOUT
    eng.run_until()
    assert c.state is ContainerState.DESTROYED
    assert c.destroyed_at == pytest.approx(601.5)


def test_destroy_on_drain_without_idling():
    eng, cl = make(policy=IdlePolicy.DESTROY, cpu_demand_vcpu=1.0)
    cid = cl.create_container("f", 0)
    cl.reserve(cid, req(0, 0.0, 1.0, cpu=1.0))
    eng.run_until()
    c = cl.containers[cid]
    assert c.state is ContainerState.DESTROYED
    assert c.destroyed_at == pytest.approx(1.5)
    assert cl.vms[0].allocated_vcpu == 0.0


def test_destroy_releases_capacity():
    eng, cl = make()
    ids = [cl.create_container("f", 0) for _ in range(3)]
    eng.run_until()
    assert cl.vms[0].allocated_vcpu == 3.0
    cl.destroy_container(ids[0])
    assert cl.vms[0].allocated_vcpu == 2.0


def test_destroy_errors():
    eng, cl = make(cpu_demand_vcpu=1.0)
    cid = cl.create_container("f", 0)
    cl.reserve(cid, req(0, 0.0, 5.0, cpu=1.0))
    with pytest.raises(StateError):
        cl.destroy_container(cid)  # pending with a reservation
    eng.run_until(1.0)
    with pytest.raises(StateError):
        cl.destroy_container(cid)  # running
    eng.run_until()
    cl.destroy_container(cid)
    with pytest.raises(StateError):
        cl.destroy_container(cid)


def test_pending_destroy_cancels_ready_event():
    eng, cl = make()
    cid = cl.create_container("f", 0)
    cl.destroy_container(cid)
    eng.run_until()
    assert cl.containers[cid].state is ContainerState.DESTROYED
    assert cl.containers[cid].ready_at is None


def test_start_request_errors():
    eng, cl = make(cpu_demand_vcpu=1.0)
    cid = cl.create_container("f", 0)
    with pytest.raises(StateError):
        cl.start_request(cid, req(0, 0.0, 1.0, cpu=1.0))
    eng.run_until()
    cl.start_request(cid, req(1, 0.0, 1.0, cpu=1.0))
    with pytest.raises(ConcurrencyError):
        cl.start_request(cid, req(2, 0.0, 1.0, cpu=1.0))


def test_resize_halves_remaining_time():
    eng, cl = make(cpu_demand_vcpu=0.5, container_cpu=0.5, container_mem_mb=256.0)
    cid = cl.create_container("f", 0)
    eng.run_until(0.5)
    r = req(0, 0.0, 2.0, cpu=0.5)
    cl.start_request(cid, r)
    eng.run_until(1.5)
    # 0.5 of 1.0 vCPU-s done; 0.5 left would take 1.0 s at 0.5 vCPU
    cl.resize_container(cid, 1.0, 512.0)
    eng.run_until()
    assert r.completed_at == pytest.approx(2.0)
    assert cl.vms[0].allocated_vcpu == 1.0


def test_resize_limits():
    eng, cl = make(vcpus=1.0, cpu_demand_vcpu=0.5, container_cpu=0.5, container_mem_mb=256.0)
    a = cl.create_container("f", 0)
    cl.create_container("f", 0)
    eng.run_until()
    with pytest.raises(CapacityError):
        cl.resize_container(a, 0.75, 256.0)  # VM is full
    eng, cl = make(vcpus=4.0, cpu_demand_vcpu=0.5, container_cpu=1.0)
    a = cl.create_container("f", 0)
    eng.run_until()
    with pytest.raises(CapacityError):
        cl.resize_container(a, 1.25, 512.0)  # per-container cap
    cl.start_request(a, req(0, 0.0, 10.0, cpu=0.5))
    with pytest.raises(FloorError):
        cl.resize_container(a, 0.25, 512.0)  # below in-flight demand


def test_idle_and_running_match_inflight():
    eng, cl = make(cpu_demand_vcpu=0.5, max_concurrency=2)
    cid = cl.create_container("f", 0)
    eng.run_until()
    c = cl.containers[cid]
    assert c.state is ContainerState.IDLE and not c.inflight
    cl.start_request(cid, req(0, 0.0, 1.0, cpu=0.5))
    assert c.state is ContainerState.RUNNING and c.inflight
    assert cl.vms[0].busy_vcpu == 1.0
    eng.run_until()
    assert c.state is ContainerState.IDLE and not c.inflight
    assert cl.vms[0].busy_vcpu == 0.0
    assert c.busy_time(eng.now) == pytest.approx(0.5)


def test_hosts_group_vms():
    eng = Engine()
    cl = Cluster(eng, {"f": FunctionType("f")}, vm_count=5, vms_per_host=2)
    assert [h.vm_ids for h in cl.hosts] == [[0, 1], [2, 3], [4]]
    assert [vm.host_id for vm in cl.vms] == [0, 0, 1, 1, 2]


def test_function_type_rejects_oversized_demand():
    with pytest.raises(ValueError):
        FunctionType("f", cpu_demand_vcpu=1.0, container_cpu=0.5)
    with pytest.raises(ValueError):
        FunctionType("f", max_concurrency=0)
