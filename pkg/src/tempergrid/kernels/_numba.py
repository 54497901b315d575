"""Numba kernels for Metropolis sweeps and replica-exchange rounds.

Every random decision reads a pre-drawn uniform, so these kernels and the
numpy fallback in ``_numpy.py`` consume identical streams.

Replica ``r`` of an ``I x J`` grid sits at row ``r // J`` (beta) and column
``r % J`` (penalty).
"""
import math

from numba import njit

from ._modes import MODE_ALTERNATE, MODE_BETA, MODE_BOTH, MODE_P


@njit(cache=True, nogil=True)
def sweep_replicas(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas_r, pens_r,
                   states, f, g, unif, u_off, n_sweeps, r0, r1):
    n = states.shape[1]
    for r in range(r0, r1):
        beta = betas_r[r]
        pen = pens_r[r]
        fr = f[r]
        gr = g[r]
        pos = u_off
        for _ in range(n_sweeps):
            for i in range(n):
                loc = h[i]
                for k in range(c_ptr[i], c_ptr[i + 1]):
                    loc += c_w[k] * states[r, c_idx[k]]
                part = 0
                for k in range(k_ptr[i], k_ptr[i + 1]):
                    part += states[r, k_idx[k]]
                si = states[r, i]
                df = 2.0 * si * loc
                dg = 4.0 * si * part
                x = -beta * (df + pen * dg)
                if x >= 0.0 or unif[r, pos] < math.exp(x):
                    states[r, i] = -si
                    fr += df
                    gr += dg
                pos += 1
        f[r] = fr
        g[r] = gr


@njit(cache=True)
def _exchange(states, f, g, a, b):
    for t in range(states.shape[1]):
        tmp = states[a, t]
        states[a, t] = states[b, t]
        states[b, t] = tmp
    tmp_f = f[a]
    f[a] = f[b]
    f[b] = tmp_f
    tmp_g = g[a]
    g[a] = g[b]
    g[b] = tmp_g


@njit(cache=True)
def phases(n_round, mode):
    """(do_p, do_beta, parity) for 1-based round ``n_round``."""
    parity = 1 if n_round % 2 == 0 else 0
    if mode == MODE_ALTERNATE:
        # direction starts at +1 and flips after every even round
        do_p = ((n_round - 1) // 2) % 2 == 0
        return do_p, not do_p, parity
    if mode == MODE_BOTH:
        return True, True, parity
    if mode == MODE_BETA:
        return False, True, parity
    if mode == MODE_P:
        return True, False, parity
    return False, False, parity


@njit(cache=True)
def finish_round(betas, pens, states, f, g, su, n_round, mode,
                 acc_p, acc_b, store_idx, keep_states, out_s, out_f, out_g,
                 hist, hist_start):
    """Swap phase, storage and histogramming for one round (one row of outputs)."""
    n_i = betas.shape[0]
    n_j = pens.shape[0]
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
    n = states.shape[1]
    for t in range(store_idx.shape[0]):
        r = store_idx[t]
        out_f[t] = f[r]
        out_g[t] = g[r]
        if keep_states:
            for q in range(n):
                out_s[t, q] = states[r, q]
    if hist.shape[0] > 0 and n_round >= hist_start:
        for r in range(states.shape[0]):
            code = 0
            for q in range(n):
                if states[r, q] > 0:
                    code |= 1 << q
            hist[r, code] += 1


@njit(cache=True, nogil=True)
def run_chunk(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas, pens, betas_r, pens_r,
              states, f, g, unif, su, round0, n_sweeps, mode,
              acc_p, acc_b, store_idx, keep_states, out_s, out_f, out_g, hist, hist_start):
    """Advance ``su.shape[0]`` rounds; ``round0`` is the 1-based index of the first."""
    per_round = n_sweeps * states.shape[1]
    n_rep = states.shape[0]
    for k in range(su.shape[0]):
        sweep_replicas(c_ptr, c_idx, c_w, h, k_ptr, k_idx, betas_r, pens_r,
                       states, f, g, unif, k * per_round, n_sweeps, 0, n_rep)
        finish_round(betas, pens, states, f, g, su[k], round0 + k, mode,
                     acc_p[k], acc_b[k], store_idx, keep_states, out_s[k], out_f[k], out_g[k],
                     hist, hist_start)

