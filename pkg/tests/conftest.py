#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Collect the ward test suite under pytest.

The tests are written for ward (``@test("...")`` on anonymous functions).
This shim imports each test module, asks ward for the tests it registered
and runs each one through ward's own ``Test.run`` so fixtures, ``each``
parameterisation and skip/xfail markers behave exactly as under ``ward``.
"""

import importlib.util
import sys

import pytest
from ward._collect import get_tests_in_modules
from ward._fixtures import FixtureCache
from ward.models import Scope
from ward.testing import TestOutcome

_CACHE = FixtureCache()


def pytest_pycollect_makemodule(module_path, parent):
    # ward's `test` decorator and the anonymous `_` functions are not
    # pytest tests; WardModule asks ward for the registered tests instead.
    return WardModule.from_parent(parent, path=module_path)


class WardModule(pytest.Module):
    def _load(self):
        name = self.path.stem
        if self.path.parent.as_posix() not in sys.path:
            sys.path.insert(0, str(self.path.parent))
        spec = importlib.util.spec_from_file_location(name, self.path)
        module = importlib.util.module_from_spec(spec)
        sys.modules[name] = module
        spec.loader.exec_module(module)
        return module

    def collect(self):
        module = self._load()
        for ward_test in get_tests_in_modules([module], capture_output=False):
            instances = ward_test.get_parameterised_instances()
            for index, instance in enumerate(instances):
                label = f"L{instance.fn.__code__.co_firstlineno}: {instance.description}"
                if len(instances) > 1:
                    label += f" [{index}]"
                yield WardItem.from_parent(self, name=label, ward_test=instance)

    def setup(self):
        pass

    def teardown(self):
        _CACHE.teardown_fixtures_for_scope(Scope.Module, scope_key=self.path, capture_output=False)


class WardItem(pytest.Item):
    def __init__(self, *, ward_test, **kwargs):
        super().__init__(**kwargs)
        self.ward_test = ward_test

    def runtest(self):
        result = self.ward_test.run(_CACHE)
        _CACHE.teardown_fixtures_for_scope(Scope.Test, scope_key=self.ward_test.id, capture_output=False)
        if result.outcome == TestOutcome.SKIP:
            pytest.skip(getattr(self.ward_test.marker, "reason", None) or "skipped by ward")
        if result.outcome == TestOutcome.XFAIL:
            pytest.xfail("expected failure (ward xfail)")
        if result.outcome == TestOutcome.XPASS:
            raise AssertionError("unexpected pass of a ward xfail test")
        if result.outcome == TestOutcome.FAIL:
            raise result.error

    def reportinfo(self):
        return self.path, self.ward_test.fn.__code__.co_firstlineno - 1, self.name


def pytest_sessionfinish(session):
    _CACHE.teardown_global_fixtures(capture_output=False)
