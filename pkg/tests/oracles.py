"""Reference computations written independently of the package internals.

Nothing here imports the scheduler or strategy code: these are the
yardsticks the simulator is checked against.
"""

from __future__ import annotations

import math


def weighted_mean(vectors, weights):
    """Plain-Python example-weighted mean, accumulated with math.fsum."""
    total = math.fsum(weights)
    dim = len(vectors[0])
    return [math.fsum(w * v[j] for v, w in zip(vectors, weights)) / total for j in range(dim)]


def share_1024(vram_mb: int, total_vram_mb: int) -> int:
    """GPU share in 1024ths, rounded up, via integer arithmetic only."""
    return -(-vram_mb * 1024 // total_vram_mb)


def homogeneous_makespan(n: int, k: int, duration: float) -> float:
    return math.ceil(n / k) * duration


def fifo_replay(jobs, cpu_cores, device_vram):
    """Brute-force FIFO replay on one machine with no OOM.

    ``jobs``: list of (cpus, share_1024ths, vram_mb, duration) in queue order.
    ``device_vram``: list of device sizes. Returns per-job (start, end).
    Time only advances to the next completion; at each instant the queue
    head is admitted on the first device with room, until it does not fit.
    """
    free_cpu = cpu_cores
    free_share = [1024] * len(device_vram)
    free_vram = list(device_vram)
    running = []  # (end, index, cpus, device, share, vram)
    times = [None] * len(jobs)
    head = 0
    now = 0.0
    while head < len(jobs) or running:
        while head < len(jobs):
            cpus, share, vram, dur = jobs[head]
            if cpus > free_cpu:
                break
            dev = None
            if share > 0:
                for d in range(len(device_vram)):
                    if share <= free_share[d] and vram <= free_vram[d]:
                        dev = d
                        break
                if dev is None:
                    break
                free_share[dev] -= share
                free_vram[dev] -= vram
            free_cpu -= cpus
            running.append((now + dur, head, cpus, dev, share, vram))
            times[head] = (now, now + dur)
            head += 1
        if not running:
            break
        now = min(r[0] for r in running)
        for r in [r for r in running if r[0] == now]:
            running.remove(r)
            _, _, cpus, dev, share, vram = r
            free_cpu += cpus
            if dev is not None:
                free_share[dev] += share
                free_vram[dev] += vram
    return times
