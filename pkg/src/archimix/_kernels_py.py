"""Pure-Python (numpy) implementations of the hot loops.

These define the reference semantics; ``_kernels.pyx`` mirrors them
statement for statement so both backends make identical choices given the
same pre-drawn randomness.
"""

import numpy as np

BACKEND = "python"


def allocation_log_weights(counts, active, cache_row, aux_logf_row, a, b):
    """Unnormalized log-probabilities of joining each active cluster or each auxiliary atom."""
    m = active.size
    r = aux_logf_row.size
    existing = np.log(counts[active] - a) + cache_row[active]
    # alone in the urn: the first seat is certain, whatever the sign of b
    new = (b + a * m) / r if m > 0 else 1.0 / r
    auxiliary = np.log(new) + aux_logf_row
    return np.concatenate([existing, auxiliary])


def _choose(logw, u):
    mx = logw.max()
    if not np.isfinite(mx):
        raise FloatingPointError("all allocation weights vanish")
    cum = np.cumsum(np.exp(logw - mx))
    k = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(k, logw.size - 1)


def sweep_labels(labels, counts, theta, cache, aux_theta, aux_logf, uniforms, a, b, column_fn):
    """One auxiliary-variable reallocation pass over all observations, in place.

    ``labels`` index slots of ``theta``/``counts``/``cache`` columns; a slot is
    active when its count is positive.  When observation i is a singleton its
    current value replaces auxiliary 0, so leaving it alone is always possible.
    New clusters take the lowest free slot and get their cache column from
    ``column_fn(theta_value)``.
    """
    n, r = aux_theta.shape
    for i in range(n):
        c = labels[i]
        counts[c] -= 1
        singleton = counts[c] == 0
        if singleton:
            aux_theta[i, 0] = theta[c]
            aux_logf[i, 0] = cache[i, c]
        active = np.flatnonzero(counts > 0)
        logw = allocation_log_weights(counts, active, cache[i], aux_logf[i], a, b)
        k = _choose(logw, uniforms[i])
        if k < active.size:
            s = active[k]
        else:
            j = k - active.size
            if singleton and j == 0:
                s = c
            else:
                s = int(np.flatnonzero(counts == 0)[0])
                theta[s] = aux_theta[i, j]
                cache[:, s] = column_fn(theta[s])
        labels[i] = s
        counts[s] += 1


def _best_cluster(psm_row, labels, counts, i, n_clusters_cap):
    mask = labels >= 0
    mask[i] = False
    s = np.bincount(labels[mask], weights=psm_row[mask], minlength=n_clusters_cap)
    cost = counts - 2.0 * s
    active = np.flatnonzero(counts > 0)
    if active.size == 0:
        return -1, 0.0, cost
    j = active[np.argmin(cost[active])]
    return int(j), float(cost[j]), cost


def binder_allocate(psm, order, labels, max_sweeps=100):
    """Greedy sequential allocation plus reallocation sweeps, minimizing Binder loss.

    Joining cluster c changes the loss by n_c - 2 Σ_{k∈c} p_ik relative to a new
    singleton, so each item goes to the most negative cluster (ties: lowest id),
    or opens the lowest free id.  Reallocation keeps an item in place unless a
    strictly better placement exists.
    """
    n = psm.shape[0]
    labels[:] = -1
    counts = np.zeros(n, dtype=np.int64)
    for i in order:
        j, best, _ = _best_cluster(psm[i], labels, counts, i, n)
        if j < 0 or best >= 0.0:
            j = int(np.flatnonzero(counts == 0)[0])
        labels[i] = j
        counts[j] += 1
    for _ in range(max_sweeps):
        changed = False
        for i in order:
            c = labels[i]
            counts[c] -= 1
            j, best, cost = _best_cluster(psm[i], labels, counts, i, n)
            current = cost[c] if counts[c] > 0 else 0.0
            best = min(best, 0.0) if j >= 0 else 0.0
            if current - best > 1e-12:
                if j >= 0 and cost[j] < 0.0 and cost[j] == best:
                    target = j
                else:
                    target = int(np.flatnonzero(counts == 0)[0])
                changed = changed or target != c or counts[c] > 0
                labels[i] = target
                counts[target] += 1
            else:
                counts[c] += 1
        if not changed:
            break
