#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

from mmtrack.harness.cli import main

main()
