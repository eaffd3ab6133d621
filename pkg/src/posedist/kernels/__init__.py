"""Kernel engine selection.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always available and produces identical bits. Override with
the POSEDIST_ENGINE environment variable ("native" or "numpy").
"""
from __future__ import annotations

import os

from ..errors import ValidationError
from . import numpy_engine

try:
    from . import _native

    HAVE_NATIVE = True
except ImportError:  # extension not built on this install
    _native = None
    HAVE_NATIVE = False


def available_engines() -> list[str]:
    return ["native", "numpy"] if HAVE_NATIVE else ["numpy"]


def default_engine() -> str:
    env = os.environ.get("POSEDIST_ENGINE")
    if env:
        if env not in available_engines():
            raise ValidationError(
                f"POSEDIST_ENGINE={env!r} is not available "
                f"(choices: {available_engines()})"
            )
        return env
    return "native" if HAVE_NATIVE else "numpy"


def get_engine(name: str | None = None):
    """Return the evaluate() callable for the named engine."""
    name = name or default_engine()
    if name == "native":
        if not HAVE_NATIVE:
            raise ValidationError("native engine requested but not built")
        return _native.evaluate
    if name == "numpy":
        return numpy_engine.evaluate
    raise ValidationError(f"unknown engine {name!r}")
