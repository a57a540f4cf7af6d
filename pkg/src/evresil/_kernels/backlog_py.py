"""Pure-Python backlog recursion, the fallback when the compiled kernel is
unavailable. Operation order matches the Cython kernel exactly so both produce
bit-identical trajectories."""

import numpy as np


def simulate_backlog(arrivals, service, balk_threshold, balk_rate):
    """Fold the hourly conservation law over a (T, Z) arrival/service grid.

    Returns (backlog (T+1, Z), arrivals_eff, served, lost), all per-hour
    energies. Balking scales arrivals by (1 - balk_rate) in hours whose
    opening backlog exceeds balk_threshold.
    """
    arrivals = np.ascontiguousarray(arrivals, dtype=np.float64)
    service = np.ascontiguousarray(service, dtype=np.float64)
    T, Z = arrivals.shape
    backlog = np.zeros((T + 1, Z))
    arrivals_eff = np.zeros((T, Z))
    served = np.zeros((T, Z))
    lost = np.zeros((T, Z))
    keep = 1.0 - balk_rate
    for t in range(T):
        for z in range(Z):
            b = backlog[t, z]
            a = arrivals[t, z]
            if b > balk_threshold:
                a = a * keep
            s = service[t, z]
            inflow = b + a
            sv = s if s < inflow else inflow
            backlog[t + 1, z] = inflow - sv
            arrivals_eff[t, z] = a
            served[t, z] = sv
            lost[t, z] = a - s if a > s else 0.0
    return backlog, arrivals_eff, served, lost
