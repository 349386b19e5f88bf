import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opticloud.cluster import (
    CapacityError,
    Job,
    OpuPool,
    decompose_job,
    run_cluster,
    schedule,
    wavelength_allocate,
)
from opticloud.convnet.conv2d import correlate2d_valid
from opticloud.link import LinkModel
from opticloud.opu import OpuConfig, opu_convolve, plan_wavelengths

KERNEL = [0.5, -1.0, 0.25]


def _jobs(count, length=8, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    return [Job(i, "conv1d", rng.uniform(size=length), KERNEL, **kwargs) for i in range(count)]


def test_wavelength_allocation():
    plan = plan_wavelengths(OpuConfig().awgr, 3, 16)
    assert wavelength_allocate(plan, 0) == []
    (one,) = wavelength_allocate(plan, 1)
    assert not set(one) & plan.weight_tooth_set
    many = wavelength_allocate(plan, 5, 2)
    assert len({t for edge in many for t in edge}) == 10
    with pytest.raises(CapacityError):
        wavelength_allocate(plan, 11)


def test_single_job_at_slot_zero():
    pool = OpuPool.uniform(1)
    a = schedule(_jobs(1), pool)
    assert len(a.tasks) == 1 and a.tasks[0].start == 0


def test_conv2d_job_spreads_over_three_opus(rng):
    pool = OpuPool.uniform(3)
    job = Job("img", "conv2d", rng.uniform(size=(5, 8)), rng.normal(size=(3, 3)))
    a = schedule([job], pool)
    assert sorted(t.opu for t in a.tasks) == [0, 1, 2]
    assert all(t.start == 0 for t in a.tasks)
    results, _ = run_cluster(a, pool, [job], mode="ideal")
    assert np.allclose(results[0].output, correlate2d_valid(job.payload, job.kernel), atol=1e-9)


def test_equal_tasks_makespan():
    a = schedule(_jobs(10), OpuPool.uniform(3))
    assert a.makespan == 4


def test_conv1d_passthrough():
    pool = OpuPool.uniform(2)
    jobs = _jobs(3)
    results, _ = run_cluster(schedule(jobs, pool), pool, jobs, mode="ideal")
    for job, res in zip(jobs, results):
        expected = opu_convolve(OpuConfig(), KERNEL, job.payload)[:6]
        assert np.allclose(res.output, expected, atol=1e-12)


def test_layer_job(rng):
    payload = rng.uniform(size=(2, 6, 6))
    kernel = rng.normal(size=(3, 2, 3, 3))
    job = Job("layer", "layer", payload, kernel)
    assert len(decompose_job(job)) == 3 * 2 * 3
    pool = OpuPool.uniform(3)
    results, _ = run_cluster(schedule([job], pool), pool, [job], mode="ideal")
    expected = np.stack([sum(correlate2d_valid(payload[c], kernel[o, c]) for c in range(2)) for o in range(3)])
    assert np.allclose(results[0].output, expected, atol=1e-9)


def test_link_delay_adds_to_latency():
    link = LinkModel()
    assert link.one_way_delay_ns == pytest.approx(400_000.0)
    pool = OpuPool.uniform(1)
    jobs = _jobs(1)
    _, bare = run_cluster(schedule(jobs, pool), pool, jobs)
    _, linked = run_cluster(schedule(jobs, pool, link), pool, jobs, link)
    assert linked.jobs[0].latency_ns - bare.jobs[0].latency_ns == pytest.approx(800_000.0)


def test_saturation_approaches_pool_peak():
    pool = OpuPool.uniform(5, OpuConfig(baud=10.0))
    achieved = []
    for count in (5, 20, 100):
        jobs = _jobs(count, length=32)
        achieved.append(run_cluster(schedule(jobs, pool), pool, jobs)[1].achieved_tops)
    assert achieved[-1] == pytest.approx(3.6, rel=0.05)
    assert achieved[-1] >= achieved[0]


def test_reports_are_deterministic_and_location_independent():
    pool = OpuPool.uniform(3, OpuConfig(mode="noisy"))
    jobs = _jobs(7, length=20)
    first = run_cluster(schedule(jobs, pool), pool, jobs)[1]
    second = run_cluster(schedule(jobs, pool), pool, jobs, parallel=4)[1]
    assert first.to_json() == second.to_json() and first.to_csv() == second.to_csv()
    solo = OpuPool.uniform(1, OpuConfig(mode="noisy"))
    alone = run_cluster(schedule(jobs, solo), solo, jobs)[0]
    spread = run_cluster(schedule(jobs, pool), pool, jobs)[0]
    for a, b in zip(alone, spread):
        assert np.array_equal(a.output, b.output)


def test_failed_task_is_reported_per_job():
    pool = OpuPool.uniform(2)
    jobs = _jobs(2) + [Job("bad", "conv1d", np.array([0.1, 0.2]), KERNEL)]
    results, report = run_cluster(schedule(jobs, pool), pool, jobs)
    assert results[0].error is None and results[1].error is None
    assert "ShapeError" in results[2].error and results[2].output is None
    assert report.jobs[2].ops == 0


def test_reload_penalty_delays_kernel_switch():
    jobs = [Job(0, "conv1d", np.ones(8) * 0.5, KERNEL), Job(1, "conv1d", np.ones(8) * 0.5, [1.0, 1.0, 1.0])]
    a = schedule(jobs, OpuPool.uniform(1, reload_penalty=3))
    assert a.tasks[1].start == a.tasks[0].end + 3


def test_report_csv_columns():
    pool = OpuPool.uniform(2)
    jobs = _jobs(3)
    report = run_cluster(schedule(jobs, pool), pool, jobs)[1]
    lines = report.to_csv().splitlines()
    assert lines[0] == "id,opu,start_ns,latency_ns,energy_pj" and len(lines) == 4


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(3, 40), st.integers(0, 30)), min_size=1, max_size=25),
    st.integers(1, 5),
)
def test_no_overlap_and_work_conservation(specs, opu_count):
    jobs = [Job(i, "conv1d", np.full(n, 0.5), KERNEL, submit_time=t / 10.0) for i, (n, t) in enumerate(specs)]
    a = schedule(jobs, OpuPool.uniform(opu_count))
    lanes = a.by_opu()
    for tasks in lanes.values():
        for prev, nxt in zip(tasks, tasks[1:]):
            assert nxt.start >= prev.end
    for t in a.tasks:
        assert t.start >= t.release
        if t.start > t.release:
            # every unit is busy from the release until this task starts
            for o in range(opu_count):
                spans = sorted((s.start, s.end) for s in lanes.get(o, []))
                cursor = t.release
                for s, e in spans:
                    if s <= cursor < e:
                        cursor = e
                assert cursor >= t.start
