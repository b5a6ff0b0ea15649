# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels; see ``_pykernels`` for the reference versions."""

import numpy as np
from libc.math cimport tanh, sqrt, pow, isfinite
from scipy.linalg.cython_blas cimport dgemm

cdef enum:
    TANH = 0
    RELU = 1
    PRELU = 2


def lag_states_rk4(u, double dt, rates, int substeps=1):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] rr = np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0], ns = rr.shape[0], k, i
    cdef int s
    out_arr = np.empty((n, ns))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] x = np.zeros(ns)
    cdef double h = dt / substeps, prev = 0.0, cur, du, ua, um, ub, r, xi, k1, k2, k3, k4
    for k in range(n):
        cur = uu[k]
        du = cur - prev
        for s in range(substeps):
            ua = prev + du * (<double>s / substeps)
            um = prev + du * ((s + 0.5) / substeps)
            ub = prev + du * ((s + 1.0) / substeps)
            for i in range(ns):
                r = rr[i]
                xi = x[i]
                k1 = -r * xi + ua
                k2 = -r * (xi + 0.5 * h * k1) + um
                k3 = -r * (xi + 0.5 * h * k2) + um
                k4 = -r * (xi + h * k3) + ub
                x[i] = xi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(ns):
            out[k, i] = x[i]
        prev = cur
    return out_arr


def param_count(sizes):
    n = sum(sizes[l] * sizes[l + 1] + sizes[l + 1] for l in range(len(sizes) - 1))
    return n + len(sizes) - 2


cdef inline void _gemm_nn(int b, int nin, int nout, double* a, double* w, double* z) nogil:
    # z(b x nout) = a(b x nin) @ w(nin x nout), all row-major
    cdef char tn = b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&tn, &tn, &nout, &b, &nin, &one, w, &nout, a, &nin, &zero, z, &nout)


cdef inline void _gemm_tn(int b, int nin, int nout, double* a, double* d, double* gw) nogil:
    # gw(nin x nout) = a^T(nin x b) @ d(b x nout)
    cdef char tn = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    dgemm(&tn, &tt, &nout, &nin, &b, &one, d, &nout, a, &nin, &zero, gw, &nout)


cdef inline void _gemm_nt(int b, int nin, int nout, double* d, double* w, double* da) nogil:
    # da(b x nin) = d(b x nout) @ w^T(nout x nin)
    cdef char tn = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    dgemm(&tt, &tn, &nin, &b, &nout, &one, w, &nout, d, &nout, &zero, da, &nin)


cdef class _Net:
    """Offsets and scratch buffers for one network shape and batch size."""
    cdef public int nl, maxb, nparam, slope_off
    cdef int[::1] sizes, w_off, b_off, a_off
    cdef double[::1] acts, zs, delta, delta2

    def __init__(self, sizes, int maxb):
        cdef int l, off = 0, aoff = 0, widest = 0
        self.nl = len(sizes) - 1
        self.maxb = maxb
        self.sizes = np.asarray(sizes, dtype=np.intc)
        self.w_off = np.zeros(self.nl, dtype=np.intc)
        self.b_off = np.zeros(self.nl, dtype=np.intc)
        self.a_off = np.zeros(self.nl + 1, dtype=np.intc)
        for l in range(self.nl):
            self.w_off[l] = off
            off += self.sizes[l] * self.sizes[l + 1]
            self.b_off[l] = off
            off += self.sizes[l + 1]
        self.slope_off = off
        self.nparam = off + self.nl - 1
        for l in range(self.nl + 1):
            self.a_off[l] = aoff
            aoff += maxb * self.sizes[l]
            if self.sizes[l] > widest:
                widest = self.sizes[l]
        self.acts = np.zeros(aoff)
        self.zs = np.zeros(aoff)
        self.delta = np.zeros(maxb * widest)
        self.delta2 = np.zeros(maxb * widest)

    cdef void forward(self, double[::1] p, double[:, ::1] x, long[::1] idx, int start, int b,
                      int act) nogil:
        cdef int l, i, j, nin, nout
        cdef double z, slope
        cdef double* a0 = &self.acts[0]
        for i in range(b):
            for j in range(self.sizes[0]):
                a0[i * self.sizes[0] + j] = x[idx[start + i], j]
        for l in range(self.nl):
            nin = self.sizes[l]
            nout = self.sizes[l + 1]
            _gemm_nn(b, nin, nout, &self.acts[self.a_off[l]], &p[self.w_off[l]],
                     &self.zs[self.a_off[l + 1]])
            slope = p[self.slope_off + l] if (act == PRELU and l < self.nl - 1) else 0.0
            for i in range(b):
                for j in range(nout):
                    z = self.zs[self.a_off[l + 1] + i * nout + j] + p[self.b_off[l] + j]
                    self.zs[self.a_off[l + 1] + i * nout + j] = z
                    if l == self.nl - 1:
                        self.acts[self.a_off[l + 1] + i * nout + j] = z
                    elif act == TANH:
                        self.acts[self.a_off[l + 1] + i * nout + j] = tanh(z)
                    elif z > 0:
                        self.acts[self.a_off[l + 1] + i * nout + j] = z
                    else:
                        self.acts[self.a_off[l + 1] + i * nout + j] = slope * z

    cdef double loss_grad(self, double[::1] p, double[::1] g, double[:, ::1] x,
                          double[:, ::1] y, long[::1] idx, int start, int b, int act) nogil:
        cdef int l, i, j, nin, nout, q = self.sizes[self.nl]
        cdef double diff, loss = 0.0, scale, z, gs, slope
        cdef double* dcur = &self.delta[0]
        cdef double* dnext = &self.delta2[0]
        cdef double* tmp
        self.forward(p, x, idx, start, b, act)
        scale = 2.0 / (b * q)
        for i in range(b):
            for j in range(q):
                diff = self.acts[self.a_off[self.nl] + i * q + j] - y[idx[start + i], j]
                loss += diff * diff
                dcur[i * q + j] = scale * diff
        loss /= b * q
        for l in range(self.nl - 1, -1, -1):
            nin = self.sizes[l]
            nout = self.sizes[l + 1]
            if l != self.nl - 1:
                slope = p[self.slope_off + l]
                gs = 0.0
                for i in range(b * nout):
                    z = self.zs[self.a_off[l + 1] + i]
                    if act == TANH:
                        dcur[i] *= 1.0 - self.acts[self.a_off[l + 1] + i] ** 2
                    elif act == RELU:
                        if z <= 0:
                            dcur[i] = 0.0
                    else:
                        if z <= 0:
                            gs += dcur[i] * z
                            dcur[i] *= slope
                if act == PRELU:
                    g[self.slope_off + l] = gs
            _gemm_tn(b, nin, nout, &self.acts[self.a_off[l]], dcur, &g[self.w_off[l]])
            for j in range(nout):
                gs = 0.0
                for i in range(b):
                    gs += dcur[i * nout + j]
                g[self.b_off[l] + j] = gs
            if l > 0:
                _gemm_nt(b, nin, nout, dcur, &p[self.w_off[l]], dnext)
                tmp = dcur
                dcur = dnext
                dnext = tmp
        return loss


def mlp_forward(params, sizes, x, int act):
    cdef double[:, ::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef int b = xx.shape[0], q = sizes[len(sizes) - 1], i, j
    cdef _Net net = _Net(sizes, max(b, 1))
    cdef long[::1] idx = np.arange(b, dtype=np.int_)
    out = np.empty((b, q))
    cdef double[:, ::1] o = out
    if b == 0:
        return out
    net.forward(p, xx, idx, 0, b, act)
    for i in range(b):
        for j in range(q):
            o[i, j] = net.acts[net.a_off[net.nl] + i * q + j]
    return out


def mlp_loss_grad(params, sizes, x, y, int act):
    cdef double[:, ::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef int b = xx.shape[0]
    cdef _Net net = _Net(sizes, b)
    grad = np.zeros(net.nparam)
    cdef double[::1] g = grad
    cdef long[::1] idx = np.arange(b, dtype=np.int_)
    loss = net.loss_grad(p, g, xx, yy, idx, 0, b, act)
    return loss, grad


def mlp_train_epoch(double[::1] params, double[::1] m, double[::1] v, long step, sizes,
                    x, y, order, int batch_size, int act, double lr,
                    double beta1=0.9, double beta2=0.999, double eps=1e-8):
    cdef double[:, ::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef long[::1] idx = np.ascontiguousarray(order, dtype=np.int_)
    cdef int n = idx.shape[0], start, b, k
    cdef _Net net = _Net(sizes, batch_size)
    cdef double[::1] g = np.zeros(net.nparam)
    cdef double loss, total = 0.0, c1, c2, gk
    cdef bint failed = False
    with nogil:
        start = 0
        while start < n:
            b = batch_size if start + batch_size <= n else n - start
            loss = net.loss_grad(params, g, xx, yy, idx, start, b, act)
            if not isfinite(loss):
                failed = True
                break
            total += loss * b
            step += 1
            c1 = 1.0 - pow(beta1, step)
            c2 = 1.0 - pow(beta2, step)
            for k in range(net.nparam):
                gk = g[k]
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk
                params[k] -= lr * (m[k] / c1) / (sqrt(v[k] / c2) + eps)
            start += batch_size
    if failed:
        return float("nan"), step
    return total / n, step
