# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the loops in ``_kernels_py``; same arguments, same choices."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

BACKEND = "cython"


def sweep_labels(cnp.int64_t[::1] labels, cnp.int64_t[::1] counts, double[::1] theta,
                 double[:, ::1] cache, double[:, ::1] aux_theta, double[:, ::1] aux_logf,
                 double[::1] uniforms, double a, double b, column_fn):
    cdef Py_ssize_t n = aux_theta.shape[0]
    cdef Py_ssize_t r = aux_theta.shape[1]
    cdef Py_ssize_t cap = counts.shape[0]
    cdef Py_ssize_t i, k, j, s, c, m, nw, choice
    cdef bint singleton
    cdef double mx, total, target, log_new
    cdef double[::1] logw = np.empty(cap + r, dtype=np.float64)
    cdef double[::1] cum = np.empty(cap + r, dtype=np.float64)
    cdef Py_ssize_t[::1] slot = np.empty(cap + r, dtype=np.intp)
    cdef double[::1] col

    for i in range(n):
        c = labels[i]
        counts[c] -= 1
        singleton = counts[c] == 0
        if singleton:
            aux_theta[i, 0] = theta[c]
            aux_logf[i, 0] = cache[i, c]
        m = 0
        for k in range(cap):
            if counts[k] > 0:
                logw[m] = log(counts[k] - a) + cache[i, k]
                slot[m] = k
                m += 1
        # alone in the urn: the first seat is certain, whatever the sign of b
        log_new = log((b + a * m) / r) if m > 0 else -log(<double>r)
        for j in range(r):
            logw[m + j] = log_new + aux_logf[i, j]
        nw = m + r
        mx = -INFINITY
        for k in range(nw):
            if logw[k] > mx:
                mx = logw[k]
        if mx == -INFINITY or mx != mx:
            raise FloatingPointError("all allocation weights vanish")
        total = 0.0
        for k in range(nw):
            total = total + exp(logw[k] - mx)
            cum[k] = total
        target = uniforms[i] * total
        choice = nw - 1
        for k in range(nw):
            if cum[k] > target:
                choice = k
                break
        if choice < m:
            s = slot[choice]
        else:
            j = choice - m
            if singleton and j == 0:
                s = c
            else:
                s = 0
                while counts[s] != 0:
                    s += 1
                theta[s] = aux_theta[i, j]
                col = np.ascontiguousarray(column_fn(theta[s]), dtype=np.float64)
                for k in range(n):
                    cache[k, s] = col[k]
        labels[i] = s
        counts[s] += 1


cdef inline Py_ssize_t _lowest_free(cnp.int64_t[::1] counts):
    cdef Py_ssize_t s = 0
    while counts[s] != 0:
        s += 1
    return s


cdef void _costs(double[:, ::1] psm, cnp.int64_t[::1] labels, cnp.int64_t[::1] counts,
                 double[::1] cost, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t n = psm.shape[0]
    cdef Py_ssize_t k
    for k in range(n):
        cost[k] = 0.0
    for k in range(n):
        if k != i and labels[k] >= 0:
            cost[labels[k]] += psm[i, k]
    for k in range(n):
        cost[k] = counts[k] - 2.0 * cost[k]


cdef Py_ssize_t _argmin_active(cnp.int64_t[::1] counts, double[::1] cost) noexcept nogil:
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t k, best = -1
    for k in range(n):
        if counts[k] > 0 and (best < 0 or cost[k] < cost[best]):
            best = k
    return best


def binder_allocate(double[:, ::1] psm, cnp.int64_t[::1] order, cnp.int64_t[::1] labels,
                    int max_sweeps=100):
    cdef Py_ssize_t n = psm.shape[0]
    cdef Py_ssize_t idx, i, j, c, target, sweep
    cdef double best, current
    cdef bint changed
    cdef cnp.int64_t[::1] counts = np.zeros(n, dtype=np.int64)
    cdef double[::1] cost = np.zeros(n, dtype=np.float64)

    for idx in range(n):
        labels[idx] = -1
    for idx in range(order.shape[0]):
        i = order[idx]
        _costs(psm, labels, counts, cost, i)
        j = _argmin_active(counts, cost)
        if j < 0 or cost[j] >= 0.0:
            j = _lowest_free(counts)
        labels[i] = j
        counts[j] += 1
    for sweep in range(max_sweeps):
        changed = False
        for idx in range(order.shape[0]):
            i = order[idx]
            c = labels[i]
            counts[c] -= 1
            _costs(psm, labels, counts, cost, i)
            j = _argmin_active(counts, cost)
            current = cost[c] if counts[c] > 0 else 0.0
            if j >= 0:
                best = cost[j] if cost[j] < 0.0 else 0.0
            else:
                best = 0.0
            if current - best > 1e-12:
                if j >= 0 and cost[j] < 0.0 and cost[j] == best:
                    target = j
                else:
                    target = _lowest_free(counts)
                changed = True
                labels[i] = target
                counts[target] += 1
            else:
                counts[c] += 1
        if not changed:
            break
