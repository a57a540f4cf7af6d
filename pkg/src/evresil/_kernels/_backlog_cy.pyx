# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backlog recursion. Must stay operation-for-operation identical to
backlog_py.simulate_backlog so both kernels are bit-compatible."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def simulate_backlog(arrivals, service, double balk_threshold, double balk_rate):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.ascontiguousarray(arrivals, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] srv = np.ascontiguousarray(service, dtype=np.float64)
    cdef Py_ssize_t T = arr.shape[0]
    cdef Py_ssize_t Z = arr.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] backlog = np.zeros((T + 1, Z), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arrivals_eff = np.zeros((T, Z), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] served = np.zeros((T, Z), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lost = np.zeros((T, Z), dtype=np.float64)
    cdef double keep = 1.0 - balk_rate
    cdef Py_ssize_t t, z
    cdef double b, a, s, inflow, sv
    for t in range(T):
        for z in range(Z):
            b = backlog[t, z]
            a = arr[t, z]
            if b > balk_threshold:
                a = a * keep
            s = srv[t, z]
            inflow = b + a
            sv = s if s < inflow else inflow
            backlog[t + 1, z] = inflow - sv
            arrivals_eff[t, z] = a
            served[t, z] = sv
            lost[t, z] = a - s if a > s else 0.0
    return backlog, arrivals_eff, served, lost
