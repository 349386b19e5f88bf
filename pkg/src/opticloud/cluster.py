"""Cloud computing centre: OPU pool, job decomposition, FIFO scheduling and
throughput / latency / energy accounting.

Time is counted in symbol slots of ``1 / baud`` ns.  A 1D task streams its
rows through an OPU in chunks of at most ``n_inputs`` samples; every chunk
occupies one slot and yields ``chunk - k + 1`` valid outputs, each worth
``2k`` multiply-accumulates on both signed paths.
"""

import csv
import io
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import InvalidParameterError, OptiCloudError, ShapeError, check_int
from .convnet.conv2d import chunk_starts, correlate_rows_on_opu, decompose_conv2d
from .opu import OpuConfig, peak_tops

__all__ = [
    "CapacityError",
    "Job",
    "Task",
    "OpuPool",
    "ScheduledTask",
    "Assignment",
    "JobResult",
    "ThroughputReport",
    "wavelength_allocate",
    "decompose_job",
    "schedule",
    "run_cluster",
]

JOB_KINDS = ("conv1d", "conv2d", "layer")


class CapacityError(OptiCloudError):
    pass


def default_seed(job_id):
    return zlib.crc32(str(job_id).encode())


@dataclass(frozen=True)
class Job:
    """Work submitted by an edge node.

    ``payload`` is a 1D signal (conv1d), a 2D image (conv2d) or a
    (C, H, W) tensor (layer).  ``kernel`` is a 1D kernel, a K x K kernel or
    an (O, C, K, K) weight tensor respectively.
    """

    id: object
    kind: str
    payload: np.ndarray
    kernel: np.ndarray
    origin: int = 0
    seed: int = None
    submit_time: float = 0.0

    def __post_init__(self):
        if self.kind not in JOB_KINDS:
            raise InvalidParameterError(f"job kind must be one of {JOB_KINDS}, got {self.kind!r}")
        payload = np.asarray(self.payload, dtype=float)
        kernel = np.asarray(self.kernel, dtype=float)
        dims = {"conv1d": (1, 1), "conv2d": (2, 2), "layer": (3, 4)}[self.kind]
        if (payload.ndim, kernel.ndim) != dims:
            raise ShapeError(
                f"{self.kind} job {self.id!r} needs payload/kernel ranks {dims}, "
                f"got {(payload.ndim, kernel.ndim)}"
            )
        if self.submit_time < 0:
            raise InvalidParameterError("submit_time must be >= 0")
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "kernel", kernel)
        if self.seed is None:
            object.__setattr__(self, "seed", default_seed(self.id))


@dataclass(frozen=True)
class Task:
    job_index: int
    task_index: int
    rows: np.ndarray
    row_kernel: np.ndarray
    output_channel: int = 0
    row_offset: int = 0


@dataclass
class OpuPool:
    """OPUs sharing one symbol clock.  ``free_at`` is each unit's next free slot."""

    configs: tuple
    reload_penalty: int = 0
    free_at: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.configs = tuple(self.configs)
        if not self.configs:
            raise InvalidParameterError("an OPU pool needs at least one OPU")
        bauds = {c.baud for c in self.configs}
        if len(bauds) != 1:
            raise InvalidParameterError(f"all OPUs in a pool must share one baud, got {sorted(bauds)}")
        check_int(self.reload_penalty, "reload_penalty", minimum=0)
        self.reset()

    @classmethod
    def uniform(cls, count, config=None, reload_penalty=0):
        count = check_int(count, "count", minimum=1)
        return cls((config or OpuConfig(),) * count, reload_penalty)

    def __len__(self):
        return len(self.configs)

    @property
    def baud(self):
        return self.configs[0].baud

    def reset(self):
        self.free_at = np.zeros(len(self.configs), dtype=np.int64)

    def peak_tops(self, k):
        return sum(peak_tops(c.n_inputs, k, c.baud) for c in self.configs)


def wavelength_allocate(plan, edge_count, channels_per_edge=1):
    """Hand out signal teeth to edges in ascending tooth order.

    Returns one tuple of tooth indices per edge.  Weight teeth are never
    used as data channels.
    """
    edge_count = check_int(edge_count, "edge_count", minimum=0)
    channels_per_edge = check_int(channels_per_edge, "channels_per_edge", minimum=1)
    free = sorted(set(plan.signal_tooth_set) - set(plan.weight_tooth_set))
    need = edge_count * channels_per_edge
    if need > len(free):
        raise CapacityError(
            f"{edge_count} edges x {channels_per_edge} channels need {need} signal teeth, "
            f"the plan has {len(free)} (short by {need - len(free)})"
        )
    return [tuple(free[e * channels_per_edge:(e + 1) * channels_per_edge]) for e in range(edge_count)]


def decompose_job(job, job_index=0):
    """Split a job into 1D row tasks."""
    if job.kind == "conv1d":
        return [Task(job_index, 0, job.payload[None], job.kernel)]
    if job.kind == "conv2d":
        images = job.payload[None]
        kernels = job.kernel[None, None]
    else:
        images = job.payload
        kernels = job.kernel
        if kernels.shape[1] != images.shape[0]:
            raise ShapeError(
                f"layer job {job.id!r}: kernel expects {kernels.shape[1]} channels, "
                f"payload has {images.shape[0]}"
            )
    size = kernels.shape[-1]
    height = images.shape[1]
    if size > min(images.shape[1:]):
        raise ShapeError(f"job {job.id!r}: {size}x{size} kernel does not fit the image")
    out_h = height - size + 1
    tasks = []
    for o in range(kernels.shape[0]):
        for c in range(kernels.shape[1]):
            for row in decompose_conv2d(kernels[o, c], channel=c):
                r = row.source_row_offset
                tasks.append(Task(job_index, len(tasks), images[c, r:r + out_h], row.row_kernel, o, r))
    return tasks


def task_slots(task, config):
    k = len(task.row_kernel)
    chunks = len(chunk_starts(task.rows.shape[1], k, config.n_inputs))
    return task.rows.shape[0] * chunks


def task_ops(task):
    k = len(task.row_kernel)
    return task.rows.shape[0] * (task.rows.shape[1] - k + 1) * 2 * k * 2


@dataclass(frozen=True)
class ScheduledTask:
    job_index: int
    task_index: int
    opu: int
    release: int
    start: int
    duration: int

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class Assignment:
    tasks: tuple
    task_specs: tuple
    baud: float

    @property
    def makespan(self):
        """Slots from the earliest release to the last completion."""
        if not self.tasks:
            return 0
        return max(t.end for t in self.tasks) - min(t.release for t in self.tasks)

    def by_opu(self):
        lanes = {}
        for t in self.tasks:
            lanes.setdefault(t.opu, []).append(t)
        return {opu: sorted(lanes[opu], key=lambda t: t.start) for opu in sorted(lanes)}


def _release_slot(job, baud, uplink_ns):
    # slots are 1/baud ns; round the arrival up to the next symbol boundary
    return int(math.ceil(round((job.submit_time + uplink_ns) * baud, 9)))


def schedule(jobs, pool, link=None):
    """FIFO greedy list scheduling.

    Jobs are taken in submit order (ties keep list order); each task goes to
    the OPU that frees up first, lowest id on ties, starting no earlier than
    the job's arrival at the centre.  A unit switching to a different kernel
    pays ``pool.reload_penalty`` slots.
    """
    pool.reset()
    baud = pool.baud
    uplink_ns = link.one_way_delay_ns if link is not None else 0.0
    order = sorted(range(len(jobs)), key=lambda i: (jobs[i].submit_time, i))
    loaded = [None] * len(pool)
    scheduled, specs = [], []
    for j in order:
        release = _release_slot(jobs[j], baud, uplink_ns)
        for task in decompose_job(jobs[j], j):
            opu = int(np.argmin(pool.free_at))
            start = max(int(pool.free_at[opu]), release)
            key = task.row_kernel.tobytes()
            if pool.reload_penalty and loaded[opu] is not None and loaded[opu] != key:
                start += pool.reload_penalty
            loaded[opu] = key
            duration = task_slots(task, pool.configs[opu])
            scheduled.append(ScheduledTask(j, task.task_index, opu, release, start, duration))
            specs.append(task)
            pool.free_at[opu] = start + duration
    return Assignment(tuple(scheduled), tuple(specs), baud)


@dataclass
class JobResult:
    job_id: object
    output: np.ndarray = None
    error: str = None
    opus: tuple = ()
    start_ns: float = 0.0
    queue_ns: float = 0.0
    compute_ns: float = 0.0
    latency_ns: float = 0.0
    energy_pj: float = 0.0
    ops: int = 0


@dataclass
class ThroughputReport:
    achieved_tops: float
    peak_tops: float
    makespan_ns: float
    utilization: list
    jobs: list

    def as_dict(self):
        return {
            "achieved_tops": self.achieved_tops,
            "peak_tops": self.peak_tops,
            "makespan_ns": self.makespan_ns,
            "utilization": list(self.utilization),
            "jobs": [
                {
                    "id": r.job_id,
                    "opus": list(r.opus),
                    "start_ns": r.start_ns,
                    "queue_ns": r.queue_ns,
                    "compute_ns": r.compute_ns,
                    "latency_ns": r.latency_ns,
                    "energy_pj": r.energy_pj,
                    "ops": r.ops,
                    "error": r.error,
                }
                for r in self.jobs
            ],
        }

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "opu", "start_ns", "latency_ns", "energy_pj"])
        for r in self.jobs:
            writer.writerow([r.job_id, ";".join(map(str, r.opus)), repr(r.start_ns),
                             repr(r.latency_ns), repr(r.energy_pj)])
        return buf.getvalue()


def _execute(task, config, seed, mode):
    return correlate_rows_on_opu(config, task.rows, task.row_kernel, mode=mode,
                                 job_id=(seed, task.task_index))


def run_cluster(assignment, pool, jobs, link=None, mode=None, opu_power_mw=None, parallel=1):
    """Execute every scheduled task and account for time, throughput and energy.

    Task noise is seeded by ``(job seed, task index)``, so results do not
    depend on which OPU ran a task or in what order tasks finished.  A job
    whose task raises gets ``error`` set; other jobs still complete.
    ``opu_power_mw`` defaults to the compute+control power of one OPU.
    """
    if opu_power_mw is None:
        from .energy import default_opu_power

        opu_power_mw = default_opu_power()
    baud = assignment.baud
    delay_ns = link.one_way_delay_ns if link is not None else 0.0

    def work(i):
        st, task = assignment.tasks[i], assignment.task_specs[i]
        try:
            return _execute(task, pool.configs[st.opu], jobs[st.job_index].seed, mode), None
        except OptiCloudError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    indices = range(len(assignment.tasks))
    if parallel > 1:
        with ThreadPoolExecutor(parallel) as ex:
            outcomes = list(ex.map(work, indices))
    else:
        outcomes = [work(i) for i in indices]

    per_job = {}
    for i, (st, task) in enumerate(zip(assignment.tasks, assignment.task_specs)):
        per_job.setdefault(st.job_index, []).append((st, task, outcomes[i]))

    results = []
    total_ops = 0
    for j, job in enumerate(jobs):
        entries = per_job.get(j, [])
        res = JobResult(job.id)
        if not entries:
            results.append(res)
            continue
        errors = [out[1] for _, _, out in entries if out[1]]
        if errors:
            res.error = errors[0]
        else:
            res.output = _recompose(job, entries)
        first = min(st.start for st, _, _ in entries)
        last = max(st.end for st, _, _ in entries)
        busy = sum(st.duration for st, _, _ in entries)
        res.opus = tuple(sorted({st.opu for st, _, _ in entries}))
        res.start_ns = first / baud
        res.queue_ns = (first - entries[0][0].release) / baud
        res.compute_ns = (last - first) / baud
        res.latency_ns = last / baud - job.submit_time + delay_ns
        res.energy_pj = opu_power_mw * busy / baud
        res.ops = 0 if res.error else sum(task_ops(t) for _, t, _ in entries)
        total_ops += res.ops
        results.append(res)

    makespan_ns = assignment.makespan / baud
    busy_slots = np.zeros(len(pool))
    for st in assignment.tasks:
        busy_slots[st.opu] += st.duration
    utilization = (busy_slots / assignment.makespan if assignment.makespan else busy_slots).tolist()
    kernel_len = max((len(t.row_kernel) for t in assignment.task_specs), default=1)
    report = ThroughputReport(
        achieved_tops=total_ops / makespan_ns / 1000.0 if makespan_ns else 0.0,
        peak_tops=pool.peak_tops(kernel_len),
        makespan_ns=makespan_ns,
        utilization=utilization,
        jobs=results,
    )
    return results, report


def _recompose(job, entries):
    if job.kind == "conv1d":
        return entries[0][2][0][0]
    out_channels = 1 if job.kind == "conv2d" else job.kernel.shape[0]
    first = entries[0][2][0]
    total = np.zeros((out_channels,) + first.shape)
    for _, task, (partial, _) in entries:
        total[task.output_channel] += partial
    return total[0] if job.kind == "conv2d" else total
