"""Precise async scheduling helpers.

asyncio.sleep on Linux overshoots by up to a couple of milliseconds, which is
too coarse for the latency contracts here (sub-5 ms delivery jitter, tight
time-to-first-audio budgets). These helpers sleep most of the interval and
spin-yield the final stretch against an absolute deadline, and they can be
preempted by a cancel event so the stop path never waits behind a timer.
"""

from __future__ import annotations

import asyncio
import time
from typing import Optional

_SPIN_S = 0.002  # final stretch resolved by yielding, not sleeping


async def sleep_until(deadline: float, cancel: Optional[asyncio.Event] = None) -> bool:
    """Sleep until time.monotonic() >= deadline.

    Returns False immediately (well under 20 ms) if `cancel` fires first,
    True once the deadline passes. Built on asyncio.wait rather than
    wait_for: wait_for can swallow the caller's own cancellation when the
    event fires in the same tick (CPython gh-81839).
    """
    while True:
        if cancel is not None and cancel.is_set():
            return False
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return True
        if remaining > _SPIN_S:
            wait = remaining - _SPIN_S
            if cancel is None:
                await asyncio.sleep(wait)
            else:
                waiter = asyncio.ensure_future(cancel.wait())
                try:
                    done, _ = await asyncio.wait({waiter}, timeout=wait)
                    if waiter in done:
                        return False
                finally:
                    if not waiter.done():
                        waiter.cancel()
        else:
            await asyncio.sleep(0)


async def sleep_ms(duration_ms: float, cancel: Optional[asyncio.Event] = None) -> bool:
    """Relative-form sleep_until. Returns False if cancelled early."""
    if duration_ms <= 0:
        if cancel is not None and cancel.is_set():
            return False
        await asyncio.sleep(0)
        return True
    return await sleep_until(time.monotonic() + duration_ms / 1000.0, cancel)
