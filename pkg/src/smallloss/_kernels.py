"""Compiled per-round loops for the graph learners.

These mirror the reference implementations in ``freezing`` and ``learners``
operation for operation; tests check that both produce identical traces.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MODE_BLACKBOX = 0
MODE_GREEN_IX = 1
MODE_GREEN_IX_GRAPH = 2
MODE_MIXED = 3

# layout of the float parameter vector
# P_AUDIT scales the certificate floor used by the audit (1 in normal runs)
P_EPS, P_ETA, P_NOISE, P_GAMMA, P_BETA, P_ZETA, P_MIX, P_AUDIT = range(8)
N_PARAMS = 8

# layout of the audit vector
A_CERT_VIOL, A_CAP_VIOL, A_GAP_VIOL, A_S1, A_S2, A_ALPHA_OBS, A_MAX_EST, A_MAX_FROZEN, A_ROUNDS = range(9)
N_AUDIT = 9


@njit(cache=True)
def hedge_into(cum, eta, noise, out):
    d = cum.size
    lo = cum[0]
    for i in range(1, d):
        if cum[i] < lo:
            lo = cum[i]
    s = 0.0
    for i in range(d):
        out[i] = math.exp(-eta * (cum[i] - lo))
        s += out[i]
    for i in range(d):
        out[i] = (1.0 - noise) * (out[i] / s) + noise / d


@njit(cache=True)
def _freeze_level(closed, p, active, mass, threshold, newbuf):
    """One level set of the cascade; returns how many arms froze."""
    d = p.size
    k = 0
    for i in range(d):
        if active[i] and mass[i] < threshold:
            newbuf[k] = i
            k += 1
    for a in range(k):
        active[newbuf[a]] = False
    for a in range(k):
        j = newbuf[a]
        pj = p[j]
        for i in range(d):
            if closed[i, j]:
                mass[i] -= pj
    return k


@njit(cache=True)
def freeze_into(mode, closed, p, gamma, beta, active, initial, mass, newbuf):
    """Fill ``active``/``initial``/``mass`` for the given mode; returns the certificate floor."""
    d = p.size
    for i in range(d):
        active[i] = True
        initial[i] = False
    if mode == MODE_MIXED:
        return 0.0
    if mode == MODE_GREEN_IX:
        for i in range(d):
            if p[i] < gamma:
                active[i] = False
        for i in range(d):
            mass[i] = p[i]
        return gamma
    if mode == MODE_GREEN_IX_GRAPH:
        for i in range(d):
            if p[i] < beta:
                active[i] = False
    for i in range(d):
        s = 0.0
        for j in range(d):
            if closed[i, j] and active[j]:
                s += p[j]
        mass[i] = s
    k = 0
    for i in range(d):
        if active[i] and mass[i] < gamma:
            initial[i] = True
            newbuf[k] = i
            k += 1
    for a in range(k):
        active[newbuf[a]] = False
    for a in range(k):
        j = newbuf[a]
        pj = p[j]
        for i in range(d):
            if closed[i, j]:
                mass[i] -= pj
    while _freeze_level(closed, p, active, mass, gamma / 3.0, newbuf) > 0:
        pass
    return gamma / 3.0


@njit(cache=True)
def greedy_mis_size(closed, members):
    d = members.size
    blocked = np.zeros(d, dtype=np.bool_)
    n = 0
    for i in range(d):
        if members[i] and not blocked[i]:
            n += 1
            for j in range(d):
                if closed[i, j]:
                    blocked[j] = True
    return n


@njit(cache=True)
def inverse_cdf(w, u):
    d = w.size
    total = 0.0
    for i in range(d):
        total += w[i]
    target = u * total
    acc = 0.0
    for i in range(d):
        acc += w[i]
        if target < acc:
            return i
    i = d - 1
    while w[i] <= 0.0 and i > 0:
        i -= 1
    return i


@njit(cache=True)
def derive_blackbox(eps_prime, guess, par):
    par[P_GAMMA] = eps_prime / (4.0 * guess)
    par[P_ETA] = eps_prime * par[P_GAMMA] / 3.0


@njit(cache=True)
def run_graph(mode, closed, losses, u, t0, t1, cum, par, istate, psi, q, eps_tau,
              arms, incurred, frozen_mass, audit, lhat_out):
    """Run rounds t0..t1-1 (or until the phase condition fires); return the stop round.

    ``istate`` holds [alpha_guess, alpha_doublings, adapt_alpha]. A ``psi`` of
    zero or less disables the phase condition. The phase's realized loss is
    written to ``lhat_out[0]``. A negative return value -1-t means every arm
    froze at round t.
    """
    d = cum.size
    p = np.empty(d)
    w = np.empty(d)
    mass = np.empty(d)
    active = np.empty(d, dtype=np.bool_)
    initial = np.empty(d, dtype=np.bool_)
    newbuf = np.empty(d, dtype=np.int64)
    lhat = 0.0
    lhat_out[0] = 0.0
    threshold = psi / eps_tau ** q
    for t in range(t0, t1):
        gamma = par[P_GAMMA]
        while True:
            hedge_into(cum, par[P_ETA], par[P_NOISE], p)
            floor = freeze_into(mode, closed, p, gamma, par[P_BETA], active, initial, mass, newbuf)
            if mode == MODE_BLACKBOX and istate[2] == 1:
                if greedy_mis_size(closed, initial) > istate[0]:
                    istate[0] *= 2
                    istate[1] += 1
                    derive_blackbox(par[P_EPS], istate[0], par)
                    gamma = par[P_GAMMA]
                    cum[:] = 0.0
                    audit[A_S1] = 0.0
                    audit[A_S2] = 0.0
                    continue
            break
        kept = 0.0
        fm = 0.0
        for i in range(d):
            if active[i]:
                kept += p[i]
            else:
                fm += p[i]
        if kept <= 0.0:
            return -1 - t
        for i in range(d):
            w[i] = p[i] / kept if active[i] else 0.0
        if mode == MODE_MIXED:
            mix = par[P_MIX]
            for i in range(d):
                w[i] = (1.0 - mix) * p[i] + mix / d
        cert = np.inf
        for i in range(d):
            if active[i] and mass[i] < cert:
                cert = mass[i]
        if mode != MODE_MIXED and cert < floor * par[P_AUDIT]:
            audit[A_CERT_VIOL] += 1
        if fm > audit[A_MAX_FROZEN]:
            audit[A_MAX_FROZEN] = fm

        arm = inverse_cdf(w, u[t])
        arms[t] = arm
        incurred[t] = losses[t, arm]
        frozen_mass[t] = fm

        if mode == MODE_BLACKBOX:
            cap = 3.0 / gamma
        elif mode == MODE_GREEN_IX:
            cap = 1.0 / par[P_ZETA]
        elif mode == MODE_GREEN_IX_GRAPH:
            cap = 3.0 / gamma
        else:
            cap = d / par[P_MIX]
        zeta = par[P_ZETA]
        s1 = 0.0
        s2 = 0.0
        alpha_obs = 0.0
        for i in range(d):
            if mode == MODE_GREEN_IX:
                seen = i == arm
            else:
                seen = closed[arm, i]
            if not (seen and active[i]):
                continue
            if mode == MODE_GREEN_IX:
                big_w = w[i]
            else:
                big_w = 0.0
                for j in range(d):
                    if closed[i, j]:
                        big_w += w[j]
            est = losses[t, i] / (big_w + zeta)
            if est > cap * (1.0 + 1e-9):
                audit[A_CAP_VIOL] += 1
            if est > audit[A_MAX_EST]:
                audit[A_MAX_EST] = est
            cum[i] += est
            s1 += p[i] * est
            s2 += p[i] * est * est
        if mode == MODE_GREEN_IX_GRAPH:
            for i in range(d):
                if active[i]:
                    big_w = 0.0
                    for j in range(d):
                        if closed[i, j]:
                            big_w += w[j]
                    alpha_obs += p[i] / big_w
            if alpha_obs > audit[A_ALPHA_OBS]:
                audit[A_ALPHA_OBS] = alpha_obs
        audit[A_S1] += s1
        audit[A_S2] += s2
        audit[A_ROUNDS] += 1
        if mode == MODE_GREEN_IX:
            lo = cum[0]
            hi = cum[0]
            for i in range(1, d):
                lo = min(lo, cum[i])
                hi = max(hi, cum[i])
            if hi - lo > 1.0 / gamma + math.log(1.0 / gamma) / par[P_ETA] + 1e-9 * hi:
                audit[A_GAP_VIOL] += 1

        lhat += incurred[t]
        lhat_out[0] = lhat
        if psi > 0.0 and eps_tau * lhat > threshold:
            return t + 1
    return t1
