"""Pure-numpy simulation kernels (fallback for the compiled core).

Both backends implement the same contract: batched linear recursions over a
leading block axis. The numpy version vectorizes across blocks at each time
step, so it stays usable when no C compiler is around; the compiled version
in ``_core`` walks the same recursion in C loops.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def simulate_blocks(a, b, inputs, noises, x0):
    """Run ``x[t+1] = A x[t] + B u[t] + w[t]`` for a batch of blocks.

    Parameters
    ----------
    a : (D, n, n) array
    b : (D, n, m) array
    inputs : (D, L, m) array
    noises : (D, L, n) array
    x0 : (D, n) array

    Returns
    -------
    (D, L+1, n) array of states including the initial state.
    """
    d, length, _ = inputs.shape
    n = a.shape[1]
    states = np.empty((d, length + 1, n), dtype=np.float64)
    states[:, 0, :] = x0
    for t in range(length):
        states[:, t + 1, :] = (
            np.einsum("dij,dj->di", a, states[:, t, :])
            + np.einsum("dij,dj->di", b, inputs[:, t, :])
            + noises[:, t, :]
        )
    return states


def closed_loop_blocks(a, b, gain, noises, x0):
    """Run ``x[t+1] = A x[t] + B (K x[t]) + w[t]`` for a batch of blocks.

    The feedback gain ``gain`` (shape ``(m, n)``) is shared across the batch.
    Returns ``(states, inputs)`` with shapes ``(D, L+1, n)`` and ``(D, L, m)``.
    """
    d, length, n = noises.shape
    m = gain.shape[0]
    states = np.empty((d, length + 1, n), dtype=np.float64)
    inputs = np.empty((d, length, m), dtype=np.float64)
    states[:, 0, :] = x0
    for t in range(length):
        u = states[:, t, :] @ gain.T
        inputs[:, t, :] = u
        states[:, t + 1, :] = (
            np.einsum("dij,dj->di", a, states[:, t, :])
            + np.einsum("dij,dj->di", b, u)
            + noises[:, t, :]
        )
    return states, inputs
