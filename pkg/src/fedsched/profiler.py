"""Per-client utilisation monitor.

In simulation, a monitor is a stream of sample events on the kernel that
read a :class:`StatsProvider` at a fixed interval (0.7 s by default) while
the client trains. :class:`LiveMonitor` is the threaded variant for real
processes.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Protocol, Tuple

from fedsched.core import ClientId, ClientProperties, UsageSample, UsageSummary
from fedsched.simkernel import Event, SimKernel
from fedsched.workload import WorkloadProfile, trace_at

DEFAULT_INTERVAL_S = 0.7


class StatsProvider(Protocol):
    def read(self, client: ClientId, t: float) -> UsageSample:
        ...


class SyntheticProvider:
    """Reads usage straight off the hidden workload traces."""

    # Float slack when a grid point lands a hair past the end of a run.
    _EPS = 1e-9

    def __init__(self) -> None:
        self._runs: Dict[ClientId, Tuple[WorkloadProfile, float]] = {}

    def register(self, workload: WorkloadProfile, start_t: float) -> None:
        self._runs[workload.client] = (workload, start_t)

    def read(self, client: ClientId, t: float) -> UsageSample:
        workload, start_t = self._runs[client]
        elapsed = t - start_t
        if -self._EPS < elapsed < 0:
            elapsed = 0.0
        elif workload.duration_s < elapsed < workload.duration_s + self._EPS:
            elapsed = workload.duration_s
        p = trace_at(workload, elapsed)
        return UsageSample(t=t, cpu_pct=p.cpu_pct, ram_mb=p.ram_mb, gpu_pct=p.gpu_pct, vram_mb=p.vram_mb)


def sample_grid(start_t: float, end_t: float, interval_s: float) -> List[float]:
    """Sample times ``start_t + i * interval_s`` up to and including the last one <= ``end_t``.

    The count is computed on the decimal values of the arguments, so
    ``(0, 7.0, 0.7)`` gives 11 points and not 10.
    """
    if not interval_s > 0:
        raise ValueError(f"monitor interval must be positive, got {interval_s}")
    if end_t < start_t:
        raise ValueError(f"monitor end {end_t} precedes start {start_t}")
    start, step = Decimal(repr(float(start_t))), Decimal(repr(float(interval_s)))
    n = math.floor((Decimal(repr(float(end_t))) - start) / step) + 1
    return [float(start + i * step) for i in range(n)]


@dataclass
class MonitorHandle:
    client: ClientId
    interval_s: float
    provider: StatsProvider
    samples: List[UsageSample] = field(default_factory=list)
    _pending: List[Tuple[float, Optional[Event]]] = field(default_factory=list, repr=False)
    _stopped: bool = field(default=False, repr=False)

    def _take(self, t: float) -> None:
        self.samples.append(self.provider.read(self.client, t))

    def _fire(self) -> None:
        t, _ = self._pending.pop(0)
        self._take(t)

    def flush(self, until_t: float) -> None:
        """Read every pending sample at or before ``until_t`` now and drop the rest."""
        for t, ev in self._pending:
            if ev is not None:
                SimKernel.cancel(ev)
            if t <= until_t:
                self._take(t)
        self._pending.clear()


def start_monitor(
    client: ClientId,
    interval_s: float,
    provider: StatsProvider,
    start_t: float,
    end_t: float,
    kernel: Optional[SimKernel] = None,
) -> MonitorHandle:
    """Bind a monitor to ``client`` for the run ``[start_t, end_t]``.

    With a kernel, samples become events dispatched as simulated time
    passes; without one they are left pending and read on stop.
    """
    if not end_t > start_t:
        raise ValueError(f"monitor window is empty: [{start_t}, {end_t}]")
    h = MonitorHandle(client, interval_s, provider)
    for t in sample_grid(start_t, end_t, interval_s):
        ev = kernel.schedule(t, h._fire) if kernel is not None else None
        h._pending.append((t, ev))
    return h


def stop_monitor(h: MonitorHandle, at_t: Optional[float] = None) -> UsageSummary:
    """Finish the monitor and aggregate its samples.

    ``at_t`` cuts the run short (e.g. the client was killed); samples not yet
    read at or before it are taken immediately.
    """
    h.flush(math.inf if at_t is None else at_t)
    h._stopped = True
    return summarize(h.samples, h.interval_s)


def summarize(samples: List[UsageSample], interval_s: float) -> UsageSummary:
    if not samples:
        raise ValueError("no samples collected")
    n = len(samples)
    return UsageSummary(
        peak_vram_mb=max(s.vram_mb for s in samples),
        mean_vram_mb=sum(s.vram_mb for s in samples) / n,
        peak_ram_mb=max(s.ram_mb for s in samples),
        mean_cpu_pct=sum(s.cpu_pct for s in samples) / n,
        mean_gpu_pct=sum(s.gpu_pct for s in samples) / n,
        cpu_time_s=sum(s.cpu_pct / 100.0 * interval_s for s in samples),
        gpu_time_s=sum(s.gpu_pct / 100.0 * interval_s for s in samples),
        n_samples=n,
        mean_ram_mb=sum(s.ram_mb for s in samples) / n,
    )


def summary_to_properties(s: UsageSummary, duration_s: float) -> ClientProperties:
    return {
        "peak_vram_mb": float(s.peak_vram_mb),
        "peak_ram_mb": float(s.peak_ram_mb),
        "mean_cpu_pct": float(s.mean_cpu_pct),
        "mean_gpu_pct": float(s.mean_gpu_pct),
        "cpu_time_s": float(s.cpu_time_s),
        "gpu_time_s": float(s.gpu_time_s),
        "train_duration_s": float(duration_s),
        "uses_gpu": 1.0 if s.mean_gpu_pct > 0 else 0.0,
    }


class PsutilProvider:
    """Live CPU/RAM readings for one OS process via psutil.

    GPU columns are reported as zero; attributing per-process GPU load and
    VRAM needs a vendor tool and is left to subclasses.
    """

    def __init__(self, pid: Optional[int] = None):
        import psutil

        self._proc = psutil.Process(pid or os.getpid())
        self._proc.cpu_percent(None)

    def read(self, client: ClientId, t: float) -> UsageSample:
        cpu = self._proc.cpu_percent(None)
        rss_mb = self._proc.memory_info().rss / (1024 * 1024)
        return UsageSample(t=t, cpu_pct=cpu, ram_mb=rss_mb, gpu_pct=0.0, vram_mb=0.0)


class LiveMonitor(threading.Thread):
    """Background sampler bound to one client id.

    Appends and the final summary are serialized by a lock, so the monitor
    may be stopped from a different thread than the one that started it.
    """

    def __init__(self, client: ClientId, provider: StatsProvider, interval_s: float = DEFAULT_INTERVAL_S, clock=None):
        super().__init__(name=f"monitor-{client}", daemon=True)
        if not interval_s > 0:
            raise ValueError(f"monitor interval must be positive, got {interval_s}")
        import time

        self.client = client
        self.provider = provider
        self.interval_s = interval_s
        self._clock = clock or time.monotonic
        self._lock = threading.Lock()
        self._halt = threading.Event()
        self._samples: List[UsageSample] = []

    def run(self) -> None:
        while True:
            sample = self.provider.read(self.client, self._clock())
            with self._lock:
                if self._halt.is_set():
                    return
                self._samples.append(sample)
            if self._halt.wait(self.interval_s):
                return

    def stop(self) -> UsageSummary:
        with self._lock:
            self._halt.set()
            samples = list(self._samples)
        self.join()
        return summarize(samples, self.interval_s)
