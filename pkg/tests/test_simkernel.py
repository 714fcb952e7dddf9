import pytest

from fedsched.simkernel import SimKernel


def _dispatch_order(k):
    k.run_until_idle()
    return [p for _, _, p in k.log]


def test_same_time_breaks_ties_by_insertion():
    k = SimKernel(record=True)
    k.schedule(5.0, "X")
    k.schedule(5.0, "Y")
    assert _dispatch_order(k) == ["X", "Y"]


def test_time_order():
    k = SimKernel(record=True)
    k.schedule(3.0, "A")
    k.schedule(1.0, "B")
    assert _dispatch_order(k) == ["B", "A"]


def test_scheduling_in_the_past_is_a_fault():
    k = SimKernel()
    k.schedule(10.0, "tick")
    k.run_until_idle()
    with pytest.raises(ValueError):
        k.schedule(9.0, "C")


def test_empty_queue_keeps_clock():
    assert SimKernel(start_t=4.5).run_until_idle() == 4.5


def test_returns_last_event_time():
    k = SimKernel()
    for t in (1.0, 2.0, 3.0):
        k.schedule(t, None)
    assert k.run_until_idle() == 3.0


def test_cascade_stops_at_five():
    # hand trace: 1 -> 2 -> 3 -> 4 -> 5, the handler at 5 schedules nothing
    k = SimKernel(record=True)

    def tick():
        if k.now < 5:
            k.schedule(k.now + 1, tick)

    k.schedule(1.0, tick)
    assert k.run_until_idle() == 5.0
    assert [t for t, _, _ in k.log] == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_cancelled_events_are_skipped():
    k = SimKernel(record=True)
    ev = k.schedule(1.0, "gone")
    k.schedule(2.0, "kept")
    k.cancel(ev)
    assert _dispatch_order(k) == ["kept"]


def test_replay_is_identical_and_monotone():
    import random

    def run():
        rng = random.Random(7)
        k = SimKernel(record=True)

        def spawn():
            if len(k.log) < 200:
                for _ in range(rng.randint(0, 2)):
                    k.schedule(k.now + rng.choice([0.0, 0.5, 1.0]), spawn)

        for _ in range(5):
            k.schedule(rng.random(), spawn)
        k.run_until_idle()
        return [(t, s) for t, s, _ in k.log]

    a, b = run(), run()
    assert a == b
    assert all(x <= y for x, y in zip(a, a[1:]))
