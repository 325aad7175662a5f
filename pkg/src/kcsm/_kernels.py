"""Compiled inner loops shared by the bootstrap, kmc and percolation modules."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def constraint_ok(state, nbr, valid, x):
    for a in range(nbr.shape[1]):
        if not valid[x, a]:
            continue
        ok = True
        for k in range(nbr.shape[2]):
            y = nbr[x, a, k]
            if y < 0:
                break
            if state[y] == 1:
                ok = False
                break
        if ok:
            return True
    return False


@njit(cache=True, nogil=True)
def closure_inplace(state, nbr, valid, dep_ptr, dep_idx):
    """Empty every site reachable by the bootstrap map; returns #empty sites."""
    n = state.size
    queue = np.empty(n, dtype=np.int64)
    queued = np.zeros(n, dtype=np.bool_)
    head = 0
    size = 0
    for i in range(n):
        if state[i] == 1:
            queue[(head + size) % n] = i
            queued[i] = True
            size += 1
    while size > 0:
        x = queue[head]
        head = (head + 1) % n
        size -= 1
        queued[x] = False
        if state[x] == 0:
            continue
        if constraint_ok(state, nbr, valid, x):
            state[x] = 0
            for k in range(dep_ptr[x], dep_ptr[x + 1]):
                y = dep_idx[k]
                if state[y] == 1 and not queued[y]:
                    queue[(head + size) % n] = y
                    queued[y] = True
                    size += 1
    empty = 0
    for i in range(n):
        if state[i] == 0:
            empty += 1
    return empty


def dependents_csr(rules):
    deps = rules.dependents
    ptr = np.zeros(len(deps) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(d) for d in deps])
    idx = np.array([y for d in deps for y in d], dtype=np.int64)
    return ptr, idx
