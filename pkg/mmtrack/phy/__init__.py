#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Hybrid MIMO link simulation: frequency selective tap channels, pilot
transmission through analog precoders/combiners and receiver whitening.

```python
from mmtrack.phy.array import ArrayGeometry, ArrayPair
from mmtrack.phy.channel import build_taps, measure
from mmtrack.phy.codebook import make_codebooks
from mmtrack.phy.pilots import pilot_matrix
from mmtrack.phy.radio import RadioConfig

cfg = RadioConfig()
arrays = ArrayPair(ArrayGeometry(16, 16), ArrayGeometry(12, 12))
taps = build_taps(paths, varpi=0.1, t_off=window + clock, cfg=cfg, geoms=arrays)
codebook = make_codebooks(None, M=40, geoms=arrays, seed=1)
meas = measure(taps, codebook, pilot_matrix(36, 4, cfg.n_taps), cfg, arrays, seed=2)
```
"""


class PhyError(Exception):
    """Link simulation error"""
