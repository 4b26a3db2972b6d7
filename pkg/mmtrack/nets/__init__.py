#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Attention networks over channel estimate sequences, on top of a small
reverse-mode differentiation core working on numpy float64 arrays.

```python
from mmtrack.nets.chat import VoChat
from mmtrack.nets.tensor import Tensor

model = VoChat.build(seed=1)
orientation = model(Tensor(channels), Tensor(previous))
```
"""


class NetsError(Exception):
    """Network error"""
