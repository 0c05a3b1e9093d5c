"""Shared independent oracles for the test suite.

Everything here is deliberately implemented by direct enumeration or
finite differences, independent of the transform-domain code paths it
is used to verify.
"""

import itertools

import numpy as np

from srldpc.denoiser import BpDenoiser, Schedule
from srldpc.ldpc import syndrome_check


def check_update_bruteforce(incoming, out_label, field):
    """Check-node message by direct sum over all symbol assignments that
    satisfy the parity constraint."""
    q = field.q
    msgs = np.stack([np.asarray(b, dtype=np.float64) for b, _ in incoming])
    labels = np.array([lbl for _, lbl in incoming])
    d = len(labels)
    combos = np.array(list(itertools.product(range(q), repeat=d)),
                      dtype=np.int64)
    weights = np.prod(msgs[np.arange(d)[None, :], combos], axis=1)
    scaled = field.mul_table[labels[None, :], combos]
    parity = np.bitwise_xor.reduce(scaled, axis=1)
    out_sym = field.mul_table[parity, field.inv(out_label)]
    out = np.zeros(q)
    np.add.at(out, out_sym, weights)
    return out / out.sum()


def exhaustive_posteriors(code, r, tau2):
    """Exact per-section posteriors by enumerating the whole codebook."""
    q = code.field.q
    L = code.L
    r = r.reshape(L, q)
    scores = r / tau2
    scores -= scores.max()
    post = np.zeros((L, q))
    for word in itertools.product(range(q), repeat=L):
        if not syndrome_check(code, np.array(word)):
            continue
        w = np.exp(sum(scores[l, g] for l, g in enumerate(word)))
        for l, g in enumerate(word):
            post[l, g] += w
    return post / post.sum(axis=1, keepdims=True)


def fd_divergence(code, r, tau2, rounds, h=1e-5):
    """Central-difference divergence of the BP denoiser at r."""
    den = BpDenoiser(code, Schedule(None, explicit=[rounds]))
    total = 0.0
    for i in range(r.size):
        rp = r.copy()
        rp[i] += h
        sp = den.denoise(rp, tau2, 0)[i]
        rm = r.copy()
        rm[i] -= h
        sm = den.denoise(rm, tau2, 0)[i]
        total += (sp - sm) / (2 * h)
    return total


def gaussian_probability_vectors(q, tau2, count, rng):
    """Samples of the normalized Gaussian-channel posterior for input
    e_0: softmax(r / tau2) with r = e_0 + tau * N(0, I_q)."""
    r = rng.standard_normal((count, q)) * np.sqrt(tau2)
    r[:, 0] += 1.0
    x = r / tau2
    x -= x.max(axis=1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=1, keepdims=True)
