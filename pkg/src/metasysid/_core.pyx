# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernels.

Same contract as ``_kernels_py``; the recursions are walked in C loops,
accumulating in the same order as the numpy fallback so results agree.
"""

import numpy as np

cimport numpy as cnp

BACKEND = "compiled"


def simulate_blocks(double[:, :, ::1] a, double[:, :, ::1] b,
                    double[:, :, ::1] inputs, double[:, :, ::1] noises,
                    double[:, ::1] x0):
    """Batched open-loop recursion x[t+1] = A x[t] + B u[t] + w[t]."""
    cdef Py_ssize_t d = inputs.shape[0]
    cdef Py_ssize_t length = inputs.shape[1]
    cdef Py_ssize_t m = inputs.shape[2]
    cdef Py_ssize_t n = a.shape[1]
    states_arr = np.empty((d, length + 1, n), dtype=np.float64)
    cdef double[:, :, ::1] states = states_arr
    cdef Py_ssize_t block, t, i, j
    cdef double acc, acc_b
    for block in range(d):
        for i in range(n):
            states[block, 0, i] = x0[block, i]
        for t in range(length):
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += a[block, i, j] * states[block, t, j]
                acc_b = 0.0
                for j in range(m):
                    acc_b += b[block, i, j] * inputs[block, t, j]
                states[block, t + 1, i] = (acc + acc_b) + noises[block, t, i]
    return states_arr


def closed_loop_blocks(double[:, :, ::1] a, double[:, :, ::1] b,
                       double[:, ::1] gain, double[:, :, ::1] noises,
                       double[:, ::1] x0):
    """Batched closed-loop recursion with shared feedback gain."""
    cdef Py_ssize_t d = noises.shape[0]
    cdef Py_ssize_t length = noises.shape[1]
    cdef Py_ssize_t n = noises.shape[2]
    cdef Py_ssize_t m = gain.shape[0]
    states_arr = np.empty((d, length + 1, n), dtype=np.float64)
    inputs_arr = np.empty((d, length, m), dtype=np.float64)
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, :, ::1] inputs = inputs_arr
    cdef Py_ssize_t block, t, i, j
    cdef double acc, acc_b
    for block in range(d):
        for i in range(n):
            states[block, 0, i] = x0[block, i]
        for t in range(length):
            for i in range(m):
                acc = 0.0
                for j in range(n):
                    acc += gain[i, j] * states[block, t, j]
                inputs[block, t, i] = acc
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += a[block, i, j] * states[block, t, j]
                acc_b = 0.0
                for j in range(m):
                    acc_b += b[block, i, j] * inputs[block, t, j]
                states[block, t + 1, i] = (acc + acc_b) + noises[block, t, i]
    return states_arr, inputs_arr
