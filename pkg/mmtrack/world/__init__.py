#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Synthetic world: urban canyon scenes, vehicle trajectories from a driver
behavior model and the multipath geometry between the base station and the
vehicle.

```python
from mmtrack.world.scene import default_scene
from mmtrack.world.driver import DriverParams, generate_trajectory, initial_state
from mmtrack.world.tracer import trace_paths

scene = default_scene()
start = initial_state(scene.lanes[0], s=20.0)
for state in generate_trajectory(start, DriverParams(), scene, n_steps=250, dt=0.01, seed=1):
    paths = trace_paths(scene, scene.vehicle_position(state), max_order=2)
```
"""


class WorldError(Exception):
    """Synthetic world error"""
