#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Experiment harness: configuration, persisted stage records, the tracking
pipeline, metrics and the `mmtrack` command line.

Each stage reads the records of the previous one from the output directory:

```
gen-scene    -> scene.toml
gen-dataset  -> dataset.jsonl
track        -> tracked.jsonl
train-vo     -> vo.ckpt, vo_loss.csv, oriented.jsonl
localize     -> localized.jsonl
train-vp     -> vp.ckpt, vp_loss.csv, corrected.jsonl
evaluate     -> metrics.csv, cdf_<metric>.csv
bench        -> bench.csv
```
"""
