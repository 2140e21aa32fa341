"""Pytest fixtures shared across the suite."""

from __future__ import annotations

import pytest

from synth import make_face


@pytest.fixture
def face():
    return make_face()


@pytest.fixture
def open_mouth_face():
    return make_face(mouth_open=True)
