# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused nested-training kernel for the single-neuron network bank.

Runs the full forward / cost / gradient / Adam sequence for all steps of one
combination before moving to the next, which keeps each slice's working set
in cache and avoids the temporary arrays the numpy path allocates per step.
Arithmetic matches the numpy path: same stable sigmoid branches, same clamp,
same bias-corrected Adam recurrences.
"""

import numpy as np

from libc.math cimport exp, log, pow, sqrt


cdef inline double _sigmoid(double z) nogil:
    cdef double ez
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


def train_bank(const double[:, :, ::1] data,
               const double[:, :, ::1] labels,
               double[:, :, ::1] weights,
               double[:, :, ::1] biases,
               const double[::1] learning_rates,
               const double[::1] beta1,
               const double[::1] beta2,
               double epsilon,
               double clamp,
               double[:, ::1] costs):
    """Train every combination for costs.shape[0] steps; mutates weights/biases.

    costs[s, q] receives the mean BCE of combination q at step s, computed
    before that step's parameter update.
    """
    cdef Py_ssize_t n_combos = data.shape[0]
    cdef Py_ssize_t m = data.shape[1]
    cdef Py_ssize_t width = data.shape[2]
    cdef Py_ssize_t steps = costs.shape[0]

    scratch = np.zeros((3, width))
    cdef double[:, ::1] buf = scratch
    cdef double[::1] grad_w = buf[0]
    cdef double[::1] m1_w = buf[1]
    cdef double[::1] m2_w = buf[2]

    cdef Py_ssize_t q, s, k, col
    cdef double lr, b1, b2, bias, z, p, pc, y, d
    cdef double cost_acc, grad_b, m1_b, m2_b, corr1, corr2
    cdef double lo = clamp
    cdef double hi = 1.0 - clamp

    with nogil:
        for q in range(n_combos):
            lr = learning_rates[q]
            b1 = beta1[q]
            b2 = beta2[q]
            bias = biases[q, 0, 0]
            m1_b = 0.0
            m2_b = 0.0
            for col in range(width):
                m1_w[col] = 0.0
                m2_w[col] = 0.0

            for s in range(steps):
                cost_acc = 0.0
                grad_b = 0.0
                for col in range(width):
                    grad_w[col] = 0.0

                for k in range(m):
                    z = bias
                    for col in range(width):
                        z += data[q, k, col] * weights[q, col, 0]
                    p = _sigmoid(z)
                    pc = p
                    if pc < lo:
                        pc = lo
                    elif pc > hi:
                        pc = hi
                    y = labels[q, k, 0]
                    cost_acc += y * log(pc) + (1.0 - y) * log(1.0 - pc)
                    d = p - y
                    grad_b += d
                    for col in range(width):
                        grad_w[col] += data[q, k, col] * d

                costs[s, q] = -cost_acc / m
                grad_b /= m

                corr1 = 1.0 - pow(b1, s + 1)
                corr2 = 1.0 - pow(b2, s + 1)
                for col in range(width):
                    grad_w[col] /= m
                    m1_w[col] = b1 * m1_w[col] + (1.0 - b1) * grad_w[col]
                    m2_w[col] = b2 * m2_w[col] + (1.0 - b2) * grad_w[col] * grad_w[col]
                    weights[q, col, 0] -= lr * (m1_w[col] / corr1) / (
                        sqrt(m2_w[col] / corr2) + epsilon)
                m1_b = b1 * m1_b + (1.0 - b1) * grad_b
                m2_b = b2 * m2_b + (1.0 - b2) * grad_b * grad_b
                bias -= lr * (m1_b / corr1) / (sqrt(m2_b / corr2) + epsilon)

            biases[q, 0, 0] = bias
