"""Small numerical helpers shared across modules."""

import numpy as np


def neville_table(t, values):
    """Diagonal of Neville's tableau for extrapolation to ``t = 0``.

    Entry ``m`` is the value at zero of the interpolating polynomial through
    the first ``m + 1`` samples.  ``values`` may hold arrays of a common shape.
    """
    t = [float(x) for x in t]
    row = [np.asarray(v) for v in values]
    diag = [row[0]]
    n = len(t)
    for m in range(1, n):
        row = [(-t[i + m] * row[i] + t[i] * row[i + 1]) / (t[i] - t[i + m])
               for i in range(n - m)]
        diag.append(row[0])
    return diag


def neville_zero(t, values):
    """Extrapolate to ``t = 0``; returns ``(estimate, error_indicator)``.

    The error indicator is the change between the last two diagonal entries.
    """
    diag = neville_table(t, values)
    if len(diag) < 2:
        return diag[-1], np.full(np.shape(diag[-1]), np.inf)
    return diag[-1], np.abs(diag[-1] - diag[-2])


def loglog_slope(x, y):
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def max_abs(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0
