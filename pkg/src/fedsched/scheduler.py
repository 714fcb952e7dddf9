"""FIFO admission of virtual clients onto a simulated machine.

Clients of a round queue in submission order. The head is admitted while
its whole demand fits (CPU cores, a GPU share and VRAM on one device,
first-fit by device index); the first head that does not fit blocks
everyone behind it. Finished clients free their resources and admission
is retried. Allocations are scheduling hints only: a device faults with
OOM when the *true* VRAM of its residents exceeds capacity, and the most
recently admitted resident is killed.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Deque, Dict, Iterable, List, Optional, Sequence, Tuple

from fedsched.core import (
    ClientId,
    ClusterSpec,
    ResourceSpec,
    UsageSummary,
    quantize_gpu_fraction,
    validate_resource_spec,
)
from fedsched.profiler import DEFAULT_INTERVAL_S, MonitorHandle, SyntheticProvider, start_monitor, stop_monitor
from fedsched.simkernel import Event, SimKernel
from fedsched.workload import WorkloadProfile, trace_at

COMPLETED = "completed"
OOM_FAILED = "oom_failed"


class RoundRejected(ValueError):
    """A round was submitted with a spec the cluster can never satisfy."""


def vram_to_gpu_ratio(vram_mb: int, cluster: ClusterSpec) -> Fraction:
    """GPU share for a VRAM budget: ``vram_mb / total system VRAM``, rounded up to 1/1024."""
    if vram_mb < 0:
        raise ValueError(f"negative vram amount: {vram_mb}")
    if vram_mb == 0:
        return Fraction(0)
    total = cluster.total_vram_mb
    if total == 0:
        raise ValueError("no GPU capacity")
    if vram_mb > total:
        raise ValueError(f"vram amount {vram_mb} MB exceeds total system VRAM {total} MB")
    return quantize_gpu_fraction(Fraction(vram_mb, total))


@dataclass(frozen=True)
class Allocation:
    client: ClientId
    spec: ResourceSpec
    gpu_device: Optional[int]
    admit_t: float
    release_t: Optional[float] = None


@dataclass(frozen=True)
class QueuedClient:
    client: ClientId
    spec: ResourceSpec
    workload: WorkloadProfile


class CapacityLedger:
    """Free capacity of the machine and the allocations currently holding it."""

    def __init__(self, cluster: ClusterSpec):
        self.cluster = cluster
        self.free_cpus: Fraction = cluster.cpu_cores
        self.free_gpu_fraction: Dict[int, Fraction] = {g.device_index: Fraction(1) for g in cluster.gpus}
        self.free_vram_mb: Dict[int, int] = {g.device_index: g.vram_mb for g in cluster.gpus}
        self.allocations: Dict[ClientId, Allocation] = {}

    def placement(self, spec: ResourceSpec) -> Tuple[bool, Optional[int]]:
        """Whether ``spec`` fits right now and on which device."""
        if spec.num_cpus > self.free_cpus:
            return False, None
        if spec.num_gpus == 0:
            return True, None
        share = spec.gpu_share
        for g in self.cluster.gpus:
            i = g.device_index
            if share <= self.free_gpu_fraction[i] and spec.vram_mb <= self.free_vram_mb[i]:
                return True, i
        return False, None

    def allocate(self, client: ClientId, spec: ResourceSpec, t: float) -> Allocation:
        if client in self.allocations:
            raise ValueError(f"client {client} is already allocated")
        fits, device = self.placement(spec)
        if not fits:
            raise ValueError(f"client {client} does not fit")
        self.free_cpus -= spec.num_cpus
        if device is not None:
            self.free_gpu_fraction[device] -= spec.gpu_share
            self.free_vram_mb[device] -= spec.vram_mb
        alloc = Allocation(client, spec, device, t)
        self.allocations[client] = alloc
        return alloc

    def release(self, client: ClientId) -> Allocation:
        try:
            alloc = self.allocations.pop(client)
        except KeyError:
            raise ValueError(f"client {client} is not allocated") from None
        self.free_cpus += alloc.spec.num_cpus
        if alloc.gpu_device is not None:
            self.free_gpu_fraction[alloc.gpu_device] += alloc.spec.gpu_share
            self.free_vram_mb[alloc.gpu_device] += alloc.spec.vram_mb
        return alloc

    def on_device(self, device: int) -> List[Allocation]:
        return [a for a in self.allocations.values() if a.gpu_device == device]

    def snapshot(self) -> tuple:
        return (
            self.free_cpus,
            tuple(sorted(self.free_gpu_fraction.items())),
            tuple(sorted(self.free_vram_mb.items())),
            tuple(self.allocations),
        )

    def violations(self) -> List[str]:
        out = []
        if self.free_cpus < 0:
            out.append(f"free cpus negative: {self.free_cpus}")
        if sum(a.spec.num_cpus for a in self.allocations.values()) > self.cluster.cpu_cores:
            out.append("allocated cpus exceed capacity")
        for g in self.cluster.gpus:
            i = g.device_index
            resident = self.on_device(i)
            if self.free_gpu_fraction[i] < 0 or sum(a.spec.gpu_share for a in resident) > 1:
                out.append(f"gpu {i} fraction oversubscribed")
            if self.free_vram_mb[i] < 0 or sum(a.spec.vram_mb for a in resident) > g.vram_mb:
                out.append(f"gpu {i} vram oversubscribed")
        return out


def try_admit(queue: Deque[QueuedClient], ledger: CapacityLedger, t: float = 0.0) -> List[Allocation]:
    """Admit queue heads in order until one does not fit (no backfill)."""
    admitted = []
    while queue:
        fits, _ = ledger.placement(queue[0].spec)
        if not fits:
            break
        head = queue.popleft()
        admitted.append(ledger.allocate(head.client, head.spec, t))
    return admitted


def release(client: ClientId, ledger: CapacityLedger) -> CapacityLedger:
    ledger.release(client)
    return ledger


def detect_oom(residents: Sequence[Tuple[ClientId, int]], device_vram_mb: int) -> Optional[ClientId]:
    """Victim when true usage overflows a device.

    ``residents`` are ``(client, true vram in use)`` in admission order; the
    last one is the victim. Usage exactly at capacity is fine.
    """
    if sum(v for _, v in residents) > device_vram_mb:
        return residents[-1][0]
    return None


@dataclass(frozen=True)
class ClientOutcome:
    client: ClientId
    spec: ResourceSpec
    gpu_device: Optional[int]
    admit_t: float
    release_t: float
    outcome: str
    summary: Optional[UsageSummary] = None

    @property
    def elapsed_s(self) -> float:
        return self.release_t - self.admit_t


@dataclass(frozen=True)
class DeviceTrace:
    """Step function of (t, allocated vram, true vram in use) on one device."""

    device_index: int
    vram_mb: int
    points: Tuple[Tuple[float, int, int], ...]


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    start_t: float
    makespan_s: float
    clients: Tuple[ClientOutcome, ...]
    traces: Tuple[DeviceTrace, ...]
    warnings: Tuple[str, ...] = ()

    @property
    def end_t(self) -> float:
        return self.start_t + self.makespan_s

    @property
    def oom_count(self) -> int:
        return sum(c.outcome == OOM_FAILED for c in self.clients)

    def outcome_of(self, client: ClientId) -> ClientOutcome:
        for c in self.clients:
            if c.client == client:
                return c
        raise KeyError(client)


@dataclass
class _Run:
    item: QueuedClient
    alloc: Allocation
    end_t: float
    order: int
    monitor: Optional[MonitorHandle] = None
    events: List[Event] = field(default_factory=list)


class _RoundEngine:
    def __init__(
        self,
        clients: Sequence[QueuedClient],
        cluster: ClusterSpec,
        monitors_on: bool,
        start_t: float,
        interval_s: float,
        observer: Optional[Callable[[float, CapacityLedger], None]],
    ):
        self.cluster = cluster
        self.monitors_on = monitors_on
        self.interval_s = interval_s
        self.observer = observer
        self.kernel = SimKernel(start_t)
        self.ledger = CapacityLedger(cluster)
        self.queue: Deque[QueuedClient] = deque(clients)
        self._pending_items = {q.client: q for q in clients}
        self.provider = SyntheticProvider()
        self.running: Dict[ClientId, _Run] = {}
        self.done: Dict[ClientId, ClientOutcome] = {}
        self._admissions = 0
        self._points: Dict[int, List[Tuple[float, int, int]]] = {g.device_index: [] for g in cluster.gpus}

    def run(self) -> Dict[ClientId, ClientOutcome]:
        self.kernel.schedule(self.kernel.now, self._settle)
        self.kernel.run_until_idle()
        return self.done

    def _start(self, alloc: Allocation) -> None:
        t = alloc.admit_t
        item = self._pending_items.pop(alloc.client)
        w = item.workload
        run = _Run(item, alloc, t + w.duration_s, self._admissions)
        self._admissions += 1
        if self.monitors_on:
            self.provider.register(w, t)
            run.monitor = start_monitor(alloc.client, self.interval_s, self.provider, t, run.end_t, self.kernel)
        for bp in w.breakpoints:
            if bp > 0:
                run.events.append(self.kernel.schedule(t + bp, self._settle))
        run.events.append(self.kernel.schedule(run.end_t, lambda c=alloc.client: self._finish(c)))
        self.running[alloc.client] = run

    def _close(self, client: ClientId, t: float, outcome: str) -> None:
        run = self.running.pop(client)
        for ev in run.events:
            SimKernel.cancel(ev)
        self.ledger.release(client)
        summary = stop_monitor(run.monitor, at_t=t) if run.monitor is not None else None
        a = run.alloc
        self.done[client] = ClientOutcome(client, a.spec, a.gpu_device, a.admit_t, t, outcome, summary)

    def _finish(self, client: ClientId) -> None:
        self._close(client, self.kernel.now, COMPLETED)
        self._settle()

    def _active(self, device: int, t: float) -> List[_Run]:
        runs = [r for r in self.running.values() if r.alloc.gpu_device == device and r.end_t > t]
        return sorted(runs, key=lambda r: r.order)

    def _true_vram(self, run: _Run, t: float) -> int:
        return trace_at(run.item.workload, t - run.alloc.admit_t).vram_mb

    def _check_oom(self, t: float) -> bool:
        failed = False
        for g in self.cluster.gpus:
            while True:
                residents = [(r.alloc.client, self._true_vram(r, t)) for r in self._active(g.device_index, t)]
                victim = detect_oom(residents, g.vram_mb)
                if victim is None:
                    break
                self._close(victim, t, OOM_FAILED)
                failed = True
        return failed

    def _settle(self) -> None:
        t = self.kernel.now
        while True:
            admitted = try_admit(self.queue, self.ledger, t)
            for alloc in admitted:
                self._start(alloc)
            if not self._check_oom(t) and not admitted:
                break
        self._record(t)
        if self.observer is not None:
            self.observer(t, self.ledger)

    def _record(self, t: float) -> None:
        for g in self.cluster.gpus:
            i = g.device_index
            alloc = sum(a.spec.vram_mb for a in self.ledger.on_device(i))
            used = sum(self._true_vram(r, t) for r in self._active(i, t))
            pts = self._points[i]
            if pts and pts[-1][0] == t:
                pts.pop()
            if not pts or pts[-1][1:] != (alloc, used):
                pts.append((t, alloc, used))

    def traces(self) -> Tuple[DeviceTrace, ...]:
        return tuple(DeviceTrace(g.device_index, g.vram_mb, tuple(self._points[g.device_index])) for g in self.cluster.gpus)


def submit_round(
    clients: Sequence[Tuple[ClientId, ResourceSpec, WorkloadProfile]],
    cluster: ClusterSpec,
    monitors_on: bool = True,
    *,
    round_index: int = 0,
    start_t: float = 0.0,
    interval_s: float = DEFAULT_INTERVAL_S,
    observer: Optional[Callable[[float, CapacityLedger], None]] = None,
    warnings: Iterable[str] = (),
) -> RoundReport:
    """Run one round to completion and report what happened.

    ``observer`` is called with ``(t, ledger)`` after every state change;
    tests use it to audit the ledger mid-round.
    """
    seen = set()
    problems = []
    for cid, spec, w in clients:
        if cid in seen:
            problems.append(f"client {cid} submitted twice")
        seen.add(cid)
        if w.client != cid:
            problems.append(f"client {cid} carries the workload of client {w.client}")
        why = validate_resource_spec(spec, cluster)
        if why is not None:
            problems.append(f"client {cid}: {why}")
    if problems:
        raise RoundRejected("; ".join(problems))

    items = [QueuedClient(cid, spec, w) for cid, spec, w in clients]
    engine = _RoundEngine(items, cluster, monitors_on, start_t, interval_s, observer)
    done = engine.run()

    outcomes = tuple(done[q.client] for q in items)
    end = max((o.release_t for o in outcomes), default=start_t)
    return RoundReport(
        round_index=round_index,
        start_t=start_t,
        makespan_s=end - start_t,
        clients=outcomes,
        traces=engine.traces(),
        warnings=tuple(warnings),
    )


def _value_at(points: Sequence[Tuple[float, int, int]], t: float, col: int) -> int:
    i = bisect.bisect_right([p[0] for p in points], t) - 1
    return points[i][col] if i >= 0 else 0


def _integrate(points: Sequence[Tuple[float, int, int]], a: float, b: float, col: int) -> float:
    total = 0.0
    cuts = [a] + [p[0] for p in points if a < p[0] < b] + [b]
    for lo, hi in zip(cuts, cuts[1:]):
        total += _value_at(points, lo, col) * (hi - lo)
    return total


def utilisation(report: RoundReport, cluster: ClusterSpec) -> Tuple[float, float]:
    """Time-weighted (allocated VRAM %, true VRAM in use %) over the round.

    Devices are pooled, i.e. weighted by their VRAM.
    """
    total_vram = cluster.total_vram_mb
    if report.makespan_s <= 0 or total_vram == 0:
        return 0.0, 0.0
    a, b = report.start_t, report.end_t
    alloc = sum(_integrate(tr.points, a, b, 1) for tr in report.traces)
    used = sum(_integrate(tr.points, a, b, 2) for tr in report.traces)
    denom = total_vram * report.makespan_s
    return 100.0 * alloc / denom, 100.0 * used / denom


def full_occupancy_utilisation(report: RoundReport, cluster: ClusterSpec) -> Tuple[float, float]:
    """Like :func:`utilisation`, restricted to the time when the most clients ran at once."""
    total_vram = cluster.total_vram_mb
    if report.makespan_s <= 0 or total_vram == 0:
        return 0.0, 0.0
    cuts = {report.start_t, report.end_t}
    for c in report.clients:
        cuts.update((c.admit_t, c.release_t))
    for tr in report.traces:
        cuts.update(p[0] for p in tr.points)
    cuts = sorted(x for x in cuts if report.start_t <= x <= report.end_t)
    spans = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi > lo:
            k = sum(c.admit_t <= lo < c.release_t for c in report.clients)
            spans.append((lo, hi, k))
    peak = max(k for _, _, k in spans)
    dur = alloc = used = 0.0
    for lo, hi, k in spans:
        if k != peak:
            continue
        dur += hi - lo
        alloc += sum(_value_at(tr.points, lo, 1) for tr in report.traces) * (hi - lo)
        used += sum(_value_at(tr.points, lo, 2) for tr in report.traces) * (hi - lo)
    return 100.0 * alloc / (total_vram * dur), 100.0 * used / (total_vram * dur)
