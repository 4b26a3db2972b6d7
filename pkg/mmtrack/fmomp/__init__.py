#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Sparse channel tracking with factored multidimensional orthogonal matching
pursuit.

The measurement-dictionary product of every candidate atom is factored into
a pilot factor (delay), a precoder factor (departure angles) and a combiner
factor (arrival angles) that are computed once per frame over small windows
around the previous support:

```python
from mmtrack.fmomp.dictionary import Resolutions, build_full_dictionaries
from mmtrack.fmomp.tracker import fmomp_track

full = build_full_dictionaries(cfg, Resolutions(delay=0.25e-9, angle_deg=0.25))
estimate, support = fmomp_track(meas, prev_support, full, g=8, N_est=5, N_iter=4)
```
"""


class FmompError(Exception):
    """Sparse recovery error"""
