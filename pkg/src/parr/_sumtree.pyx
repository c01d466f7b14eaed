# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sum-tree kernels.

Tree layout: ``tree[1]`` is the root, node ``k`` has children ``2k`` and
``2k + 1``, leaves occupy ``tree[n_leaves:2 * n_leaves]``. Internal nodes are
always recomputed as ``left + right`` (never incrementally patched), so the
result is a pure function of the leaf values.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def update(double[::1] tree, Py_ssize_t n_leaves, const cnp.int64_t[::1] idx, const double[::1] values):
    cdef Py_ssize_t i, node
    cdef Py_ssize_t n = idx.shape[0]
    for i in range(n):
        tree[n_leaves + idx[i]] = values[i]
    for i in range(n):
        node = (n_leaves + idx[i]) >> 1
        while node >= 1:
            tree[node] = tree[2 * node] + tree[2 * node + 1]
            node >>= 1


def rebuild(double[::1] tree, Py_ssize_t n_leaves):
    cdef Py_ssize_t node
    for node in range(n_leaves - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]


def find(const double[::1] tree, Py_ssize_t n_leaves, const double[::1] mass):
    cdef Py_ssize_t i, node, left
    cdef Py_ssize_t n = mass.shape[0]
    cdef double u
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    for i in range(n):
        u = mass[i]
        node = 1
        while node < n_leaves:
            left = 2 * node
            if u < tree[left]:
                node = left
            else:
                u -= tree[left]
                node = left + 1
        res[i] = node - n_leaves
    return out
