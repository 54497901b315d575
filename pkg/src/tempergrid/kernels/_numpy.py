"""Pure-numpy fallback with the same signatures as ``_numba``.

Sweeps are vectorised across replicas (spins are still visited in order), so
this path is usable but several times slower than the compiled one.
"""
import math

import numpy as np

from ._modes import MODE_ALTERNATE, MODE_BETA, MODE_BOTH, MODE_P, encode


def sweep_replicas(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas_r, pens_r,
                   states, f, g, unif, u_off, n_sweeps, r0, r1):
    if r1 <= r0:
        return
    n = states.shape[1]
    s = states[r0:r1]
    beta = betas_r[r0:r1]
    pen = pens_r[r0:r1]
    fr = f[r0:r1].copy()
    gr = g[r0:r1].copy()
    u = unif[r0:r1]
    pos = u_off
    with np.errstate(over="ignore"):
        for _ in range(n_sweeps):
            for i in range(n):
                loc = np.full(r1 - r0, h[i])
                for k in range(c_ptr[i], c_ptr[i + 1]):
                    loc += c_w[k] * s[:, c_idx[k]]
                part = np.zeros(r1 - r0, dtype=np.int64)
                for k in range(k_ptr[i], k_ptr[i + 1]):
                    part += s[:, k_idx[k]]
                si = s[:, i].astype(np.float64)
                df = 2.0 * si * loc
                dg = 4.0 * si * part
                x = -beta * (df + pen * dg)
                ok = (x >= 0.0) | (u[:, pos] < np.exp(np.minimum(x, 0.0)))
                s[ok, i] = -s[ok, i]
                fr[ok] += df[ok]
                gr[ok] += dg[ok]
                pos += 1
    f[r0:r1] = fr
    g[r0:r1] = gr


def phases(n_round, mode):
    parity = 1 if n_round % 2 == 0 else 0
    if mode == MODE_ALTERNATE:
        do_p = ((n_round - 1) // 2) % 2 == 0
        return do_p, not do_p, parity
    if mode == MODE_BOTH:
        return True, True, parity
    if mode == MODE_BETA:
        return False, True, parity
    if mode == MODE_P:
        return True, False, parity
    return False, False, parity


def _exchange(states, f, g, a, b):
    states[[a, b]] = states[[b, a]]
    f[a], f[b] = f[b], f[a]
    g[a], g[b] = g[b], g[a]


def finish_round(betas, pens, states, f, g, su, n_round, mode,
                 acc_p, acc_b, store_idx, keep_states, out_s, out_f, out_g,
                 hist, hist_start):
    n_i, n_j = betas.shape[0], pens.shape[0]
    do_p, do_b, parity = phases(n_round, mode)
    if do_p:
        for i in range(n_i):
            for p in range(parity, n_j - 1, 2):
                a = i * n_j + p
                x = betas[i] * (pens[p + 1] - pens[p]) * (g[a + 1] - g[a])
                ok = x >= 0.0 or su[i * (n_j - 1) + p] < math.exp(x)
                acc_p[i, p] = 1 if ok else 0
                if ok:
                    _exchange(states, f, g, a, a + 1)
    if do_b:
        off = n_i * (n_j - 1)
        for j in range(n_j):
            for b in range(parity, n_i - 1, 2):
                a = b * n_j + j
                c = a + n_j
                de = (f[c] + pens[j] * g[c]) - (f[a] + pens[j] * g[a])
                x = (betas[b + 1] - betas[b]) * de
                ok = x >= 0.0 or su[off + b * n_j + j] < math.exp(x)
                acc_b[b, j] = 1 if ok else 0
                if ok:
                    _exchange(states, f, g, a, c)
    out_f[:] = f[store_idx]
    out_g[:] = g[store_idx]
    if keep_states:
        out_s[:] = states[store_idx]
    if hist.shape[0] > 0 and n_round >= hist_start:
        codes = encode(states)
        hist[np.arange(states.shape[0]), codes] += 1


def run_chunk(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas, pens, betas_r, pens_r,
              states, f, g, unif, su, round0, n_sweeps, mode,
              acc_p, acc_b, store_idx, keep_states, out_s, out_f, out_g, hist, hist_start):
    per_round = n_sweeps * states.shape[1]
    for k in range(su.shape[0]):
        sweep_replicas(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas_r, pens_r,
                       states, f, g, unif, k * per_round, n_sweeps, 0, states.shape[0])
        finish_round(betas, pens, states, f, g, su[k], round0 + k, mode,
                     acc_p[k], acc_b[k], store_idx, keep_states, out_s[k], out_f[k], out_g[k],
                     hist, hist_start)
