"""Closed-form least-squares line and the L1 deviation of a model's line from it."""

from __future__ import annotations

import numpy as np

from lnnbench.datagen import Dataset
from lnnbench.models import LinearParams


class DegenerateInputError(ValueError):
    """Inputs have zero variance, so the least-squares slope is undefined."""


def normal_equation(data: Dataset) -> LinearParams:
    # centered form of the 2x2 normal equations on the design [x, 1]
    x, y = data.inputs, data.labels
    if x.size < 2:
        raise DegenerateInputError(f"need at least 2 points, got {x.size}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    # the centered sum of a constant vector can be rounding noise, not zero
    if sxx == 0.0 or np.ptp(x) == 0.0:
        raise DegenerateInputError("input variance is zero")
    slope = float(xc @ (y - y.mean())) / sxx
    return LinearParams(slope, float(y.mean()) - slope * float(x.mean()))


def deviation(model_line: LinearParams, optimal: LinearParams) -> float:
    """``|m - a*| + |b - b*|``."""
    return abs(model_line.slope - optimal.slope) + abs(model_line.intercept - optimal.intercept)
