"""
Pilot lifecycle: acquire workers first, bind work later
=======================================================

A pilot is a placeholder worker pool. You describe the pool, submit it,
wait for RUNNING, and only then hand it tasks; resources and workload
stay decoupled the whole way.
"""

import time

from pilotedge.pilots import (
    PilotDescription,
    PilotState,
    Tier,
    cancel_pilot,
    scale_pilot,
    submit_pilot,
    wait_state,
)

# describe a small edge pool and submit it; submission is asynchronous
description = PilotDescription(tier=Tier.EDGE, worker_count=2)
pilot = submit_pilot(description)
print(f"submitted pilot {pilot.pilot_id[:8]} in state {pilot.state.name}")

# block until the backend reports the workers are up
wait_state(pilot, PilotState.RUNNING, timeout=10.0)
print(f"running with {pilot.current_workers} workers")

# tasks go to a specific worker slot; results come back as futures
futures = [
    pilot.submit_task(lambda tag=tag: f"task-{tag} done", worker_index=tag % 2)
    for tag in range(4)
]
for future in futures:
    print(" ", future.result(timeout=5.0))

# grow the pool; listeners fire after the new size is in effect
scale_pilot(pilot, 4)
print(f"scaled to {pilot.current_workers} workers")

# cancellation drains queued work, then parks the pilot in a terminal state
slow = pilot.submit_task(time.sleep, 0.05, worker_index=0)
cancel_pilot(pilot, drain_s=2.0)
print(f"cancelled; state {pilot.state.name}, workers {pilot.current_workers}")
print(f"queued task finished during drain: {slow.done()}")
