"""Pure-Python/NumPy implementations of the numerical kernels.

These mirror ``_ckernels.pyx`` function by function and are used when the
compiled extension is unavailable or ``VOLTERROM_PURE_PYTHON=1`` is set.

MLP parameter layout (shared with the extension): for each layer ``l`` the
weight matrix ``W_l`` (``sizes[l] x sizes[l+1]``, row-major) followed by the
bias ``b_l``; after the last layer one PReLU slope per hidden layer.
"""

import math

import numpy as np

TANH, RELU, PRELU = 0, 1, 2


def lag_states_rk4(u, dt, rates, substeps=1):
    """Integrate ``dx_i/dt = -rates[i] * x_i + u(t)`` with classical RK4.

    ``u`` holds samples at ``t_k = k * dt``; the input is linearly interpolated
    between samples and is zero at ``t = -dt``, where integration starts from
    rest. Returns the states at every sample, shape ``(n, len(rates))``.
    """
    u = [float(v) for v in u]
    rates = [float(r) for r in rates]
    n, ns = len(u), len(rates)
    h = dt / substeps
    out = np.empty((n, ns))
    x = [0.0] * ns
    prev = 0.0
    for k in range(n):
        cur = u[k]
        du = cur - prev
        for s in range(substeps):
            ua = prev + du * (s / substeps)
            um = prev + du * ((s + 0.5) / substeps)
            ub = prev + du * ((s + 1.0) / substeps)
            for i in range(ns):
                r = rates[i]
                xi = x[i]
                k1 = -r * xi + ua
                k2 = -r * (xi + 0.5 * h * k1) + um
                k3 = -r * (xi + 0.5 * h * k2) + um
                k4 = -r * (xi + h * k3) + ub
                x[i] = xi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(ns):
            out[k, i] = x[i]
        prev = cur
    return out


def param_count(sizes):
    n = sum(sizes[l] * sizes[l + 1] + sizes[l + 1] for l in range(len(sizes) - 1))
    return n + len(sizes) - 2


def _unpack(params, sizes):
    ws, bs = [], []
    off = 0
    for l in range(len(sizes) - 1):
        nin, nout = sizes[l], sizes[l + 1]
        ws.append(params[off:off + nin * nout].reshape(nin, nout))
        off += nin * nout
        bs.append(params[off:off + nout])
        off += nout
    return ws, bs, params[off:off + len(sizes) - 2], off


def _act(z, act, slope):
    if act == TANH:
        return np.tanh(z)
    if act == RELU:
        return np.maximum(z, 0.0)
    return np.where(z > 0, z, slope * z)


def mlp_forward(params, sizes, x, act):
    """Forward pass for a batch ``x`` of shape ``(b, sizes[0])``."""
    ws, bs, slopes, _ = _unpack(np.asarray(params, float), list(sizes))
    a = np.asarray(x, float)
    last = len(ws) - 1
    for l, (w, b) in enumerate(zip(ws, bs)):
        z = a @ w + b
        a = z if l == last else _act(z, act, slopes[l] if act == PRELU else 0.0)
    return a


def mlp_loss_grad(params, sizes, x, y, act):
    """Mean squared error over all entries of the batch and its gradient."""
    params = np.asarray(params, float)
    sizes = list(sizes)
    ws, bs, slopes, off = _unpack(params, sizes)
    grad = np.zeros_like(params)
    gws, gbs, gslopes, _ = _unpack(grad, sizes)
    a = np.asarray(x, float)
    acts, zs = [a], []
    last = len(ws) - 1
    for l, (w, b) in enumerate(zip(ws, bs)):
        z = a @ w + b
        zs.append(z)
        a = z if l == last else _act(z, act, slopes[l] if act == PRELU else 0.0)
        acts.append(a)
    diff = a - np.asarray(y, float)
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / diff.size
    for l in range(last, -1, -1):
        if l != last:
            z = zs[l]
            if act == TANH:
                delta = delta * (1.0 - acts[l + 1] ** 2)
            elif act == RELU:
                delta = delta * (z > 0)
            else:
                gslopes[l] = np.sum(delta * np.where(z > 0, 0.0, z))
                delta = delta * np.where(z > 0, 1.0, slopes[l])
        gws[l][...] = acts[l].T @ delta
        gbs[l][...] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ ws[l].T
    return loss, grad


def mlp_train_epoch(params, m, v, step, sizes, x, y, order, batch_size, act,
                    lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam epoch over the rows of ``x`` visited in ``order``.

    ``params``, ``m`` and ``v`` are updated in place. Returns the mean of the
    per-batch losses (weighted by batch size) and the new Adam step counter.
    A non-finite loss stops the epoch early and is returned as NaN.
    """
    n = len(order)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss, g = mlp_loss_grad(params, sizes, x[idx], y[idx], act)
        if not math.isfinite(loss):
            return float("nan"), step
        total += loss * len(idx)
        step += 1
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        params -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return total / n, step
