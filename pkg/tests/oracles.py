"""Brute-force reference implementations used to verify the metrics.

These deliberately use different machinery than the library: MUC via
union-find connected components, B-cubed via per-mention loops, CEAF and the
assignment solver via explicit permutation enumeration.
"""

import itertools
import math

import numpy as np

from corefkit.metrics import phi4


def oracle_muc_side(clusters, other):
    num = den = 0
    for cluster in clusters:
        members = sorted(cluster)
        parent = {m: m for m in members}

        def find(m):
            while parent[m] != m:
                parent[m] = parent[parent[m]]
                m = parent[m]
            return m

        for x, y in itertools.combinations(members, 2):
            if any(x in oc and y in oc for oc in other):
                parent[find(x)] = find(y)
        components = len({find(m) for m in members})
        num += len(cluster) - components
        den += len(cluster) - 1
    return num, den


def _prf(pn, pd, rn, rd):
    p = pn / pd if pd else 0.0
    r = rn / rd if rd else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def oracle_muc(key, response):
    rn, rd = oracle_muc_side(key, response)
    pn, pd = oracle_muc_side(response, key)
    return _prf(pn, pd, rn, rd)


def oracle_b_cubed_side(clusters, other):
    total = 0.0
    count = 0
    for cluster in clusters:
        for m in cluster:
            own = next(c for c in clusters if m in c)
            theirs = next((c for c in other if m in c), set())
            total += len(own & theirs) / len(own)
            count += 1
    return total, count


def oracle_b_cubed(key, response):
    rn, rd = oracle_b_cubed_side(key, response)
    pn, pd = oracle_b_cubed_side(response, key)
    return _prf(pn, pd, rn, rd)


def oracle_ceaf(key, response):
    key = [frozenset(c) for c in key]
    response = [frozenset(c) for c in response]
    if not key or not response:
        return 0.0, 0.0, 0.0
    if len(key) <= len(response):
        small, large = key, response
    else:
        small, large = response, key
    best = 0.0
    for perm in itertools.permutations(range(len(large)), len(small)):
        total = sum(phi4(small[i], large[j]) for i, j in enumerate(perm))
        best = max(best, total)
    return _prf(best, len(response), best, len(key))


def oracle_assignment_total(matrix):
    matrix = np.asarray(matrix, dtype=float)
    rows, cols = matrix.shape
    if rows > cols:
        return oracle_assignment_total(matrix.T)
    best = -math.inf
    for perm in itertools.permutations(range(cols), rows):
        for subset in itertools.product([0, 1], repeat=rows):
            total = sum(
                matrix[i, j] if keep else 0.0
                for (i, j), keep in zip(enumerate(perm), subset)
            )
            best = max(best, total)
    return best


def random_clustering(rng, mentions, max_clusters):
    chosen = [m for m in mentions if rng.random() < 0.8]
    rng.shuffle(chosen)
    if not chosen:
        return []
    k = rng.integers(1, min(max_clusters, len(chosen)) + 1)
    cuts = (
        sorted(rng.choice(range(1, len(chosen)), size=k - 1, replace=False))
        if k > 1
        else []
    )
    clusters = []
    prev = 0
    for cut in list(cuts) + [len(chosen)]:
        clusters.append(set(chosen[prev:cut]))
        prev = cut
    return [c for c in clusters if c]
