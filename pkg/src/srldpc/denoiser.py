"""Dynamic BP denoiser: belief propagation on the outer code's factor
graph, driven by the AMP effective observation.

Each section of the effective observation yields a local posterior
alpha_l over field elements.  The denoiser loads these into the factor
graph, runs a number of flooding BP rounds (all variable updates, then
all check updates), and emits the per-section posterior including the
local observation.  Check updates convolve messages over F_q in the
Walsh-Hadamard domain; edge labels are absorbed into the messages as
index permutations before convolving and reapplied afterwards.

Message arrays are laid out per edge, sorted by (check, slot), matching
the edge order of the code object.  All stored messages are probability
vectors; entries are floored at 1e-30 after normalization so hard zeros
cannot annihilate later Hadamard products.
"""

import math

import numpy as np

from .gf import fq_convolve_fast, vec_times_g

MSG_FLOOR = 1e-30


def hadamard_matrix(q):
    """Dense Walsh-Hadamard matrix H[i, j] = (-1)^popcount(i & j).

    For q <= 256 a single matrix product against H is faster than the
    butterfly, and H @ H = q I gives the inverse transform.
    """
    idx = np.arange(q, dtype=np.uint32)
    parity = np.bitwise_count(idx[:, None] & idx[None, :]) & 1
    return 1.0 - 2.0 * parity.astype(np.float64)


class Schedule:
    """Number of BP rounds N_t to run inside AMP iteration t.

    Kinds: "bp0" (no rounds), "bpn" (N_t = t + 1), "bp1kg" (one round,
    graph messages retained across AMP iterations), or an explicit list
    of round counts.
    """

    KINDS = ("bp0", "bpn", "bp1kg")

    def __init__(self, kind, explicit=None):
        if explicit is not None:
            self.kind = "explicit"
            self.explicit = [int(x) for x in explicit]
            if any(x < 0 for x in self.explicit):
                raise ValueError("round counts must be nonnegative")
        else:
            kind = str(kind).lower().replace("-", "").replace("_", "")
            if kind not in self.KINDS:
                raise ValueError(f"unknown schedule {kind!r}")
            self.kind = kind
            self.explicit = None

    @property
    def keep_graph(self):
        return self.kind == "bp1kg"

    def rounds(self, t):
        if self.kind == "bp0":
            return 0
        if self.kind == "bpn":
            return t + 1
        if self.kind == "bp1kg":
            return 1
        return self.explicit[t] if t < len(self.explicit) else self.explicit[-1]

    def __repr__(self):
        if self.kind == "explicit":
            return f"Schedule(explicit={self.explicit})"
        return f"Schedule({self.kind!r})"


def local_posterior(r_section, tau2):
    """Per-section posterior over field elements given effective noise tau2.

    alpha(g) = exp(r(g)/tau2) / sum_h exp(r(h)/tau2), evaluated with max
    subtraction.  Accepts a single section or a stack of sections.
    """
    if tau2 <= 0:
        raise ValueError("tau2 must be positive")
    r = np.atleast_2d(np.asarray(r_section, dtype=np.float64))
    z = (r - r.max(axis=-1, keepdims=True)) / tau2
    a = np.exp(z)
    a /= a.sum(axis=-1, keepdims=True)
    out = np.maximum(a, MSG_FLOOR)
    out /= out.sum(axis=-1, keepdims=True)
    return out if np.ndim(r_section) > 1 else out[0]


def check_update(incoming, out_label, field):
    """Message from a check node along one edge (single-message form).

    incoming is a list of (belief vector, edge label) pairs for the other
    edges of the check; labels are absorbed by times-g permutations, the
    vectors convolved over F_q, and the outgoing label reapplied (over
    GF(2^m) the negated label equals the label itself).
    """
    if not incoming:
        raise ValueError("check update needs at least one incoming message")
    if out_label == 0 or any(lbl == 0 for _, lbl in incoming):
        raise ValueError("edge labels must be nonzero")
    absorbed = [
        vec_times_g(np.asarray(b, dtype=np.float64), field.inv(lbl), field)
        for b, lbl in incoming
    ]
    conv = fq_convolve_fast(absorbed)
    out = vec_times_g(conv, out_label, field)
    return _normalize_rows(np.maximum(out, 0.0))


def variable_update(alpha, incoming, exclude=None):
    """Message from a variable node: Hadamard product of alpha and all
    incoming check messages except the excluded one, normalized."""
    out = np.asarray(alpha, dtype=np.float64).copy()
    for i, msg in enumerate(incoming):
        if exclude is not None and i == exclude:
            continue
        out *= msg
    return _normalize_rows(out)


def divergence_terms(s_hat):
    """(||s||_1, ||s||_2^2) of a state estimate, for the Onsager term."""
    s_hat = np.asarray(s_hat)
    return float(s_hat.sum()), float(np.square(s_hat).sum())


def _normalize_rows(mat):
    """Normalize to probability rows; all-zero rows fall back to uniform."""
    was_1d = np.ndim(mat) == 1
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    q = mat.shape[-1]
    totals = mat.sum(axis=-1, keepdims=True)
    bad = ~np.isfinite(totals[..., 0]) | (totals[..., 0] <= 0.0)
    if np.any(bad):
        mat = mat.copy()
        mat[bad] = 1.0 / q
        totals = mat.sum(axis=-1, keepdims=True)
    mat = mat / totals
    mat = np.maximum(mat, MSG_FLOOR)
    mat /= mat.sum(axis=-1, keepdims=True)
    return mat[0] if was_1d else mat


class BpDenoiser:
    """Stateful BP denoiser bound to one code and one schedule.

    Holds the per-edge message arrays between calls so the keep-graph
    schedule can retain them across AMP iterations.  One instance serves
    one decode at a time; separate decodes need separate instances.
    """

    def __init__(self, code, schedule, extrinsic=False):
        self.code = code
        self.field = code.field
        self.schedule = schedule
        self.extrinsic = extrinsic

        q = self.field.q
        E = code.n_edges
        mul = self.field.mul_table
        self._H = hadamard_matrix(q)
        if E:
            labels = code.edge_label
            self._perm_in = mul[:, self.field.inv(labels)].T.copy()
            self._perm_out = mul[:, labels].T.copy()

        # Padded gather maps; the dummy edge id E points at a neutral row
        # (uniform message, all-ones spectrum).
        self._chk_pad, self._chk_mask = _pad_adjacency(code.chk_edges, E)
        self._var_pad, self._var_mask = _pad_adjacency(code.var_edges, E)
        order = self._chk_pad[self._chk_mask]
        self._chk_unorder = np.empty(E, dtype=np.int64)
        self._chk_unorder[order] = np.arange(E)
        self._var_scatter = self._var_pad[self._var_mask]

        # c2v rows live inside a padded buffer whose last row is the
        # neutral all-ones row, so gathers need no stacking per round.
        self._c2v_pad = np.empty((E + 1, q))
        self._spectra_pad = np.empty((E + 1, q))
        self._spectra_pad[E] = 1.0

        self.alpha = None
        self.underflow_events = 0
        self.sub_girth_violations = 0
        self.reset_messages()

    @property
    def c2v(self):
        return self._c2v_pad[: self.code.n_edges]

    def reset_messages(self):
        q = self.field.q
        E = self.code.n_edges
        self.v2c = np.full((E, q), 1.0 / q)
        self._c2v_pad[:E] = 1.0 / q
        self._c2v_pad[E] = 1.0

    def init_alpha(self, r, tau2):
        """Compute and store the local posteriors from a flat observation."""
        self.alpha = local_posterior(
            np.asarray(r, dtype=np.float64).reshape(self.code.L, self.field.q),
            tau2,
        )

    def denoise(self, r, tau2, t):
        """One denoiser evaluation at AMP iteration t; returns flat (qL,)."""
        self.init_alpha(r, tau2)
        if not self.schedule.keep_graph:
            self.reset_messages()
        rounds = self.schedule.rounds(t)
        girth = self.code.girth
        if not math.isinf(girth) and rounds > girth // 2:
            self.sub_girth_violations += 1
        for _ in range(rounds):
            self.bp_round()
        return self.estimate().ravel()

    def bp_round(self):
        """One flooding round: all variable updates, then all check updates."""
        self._variable_round()
        self._check_round()

    def _variable_round(self):
        if self.code.n_edges == 0:
            return
        gathered = self._c2v_pad[self._var_pad]
        excl = _excl_prod(gathered)
        msgs = excl * self.alpha[:, None, :]
        self.v2c[self._var_scatter] = self._renorm(msgs[self._var_mask])

    def _check_round(self):
        E = self.code.n_edges
        if E == 0:
            return
        q = self.field.q
        absorbed = np.take_along_axis(self.v2c, self._perm_in, axis=1)
        np.matmul(absorbed, self._H, out=self._spectra_pad[:E])
        gathered = self._spectra_pad[self._chk_pad]
        excl = _excl_prod(gathered)
        conv = excl[self._chk_mask] @ self._H
        conv *= 1.0 / q
        np.maximum(conv, 0.0, out=conv)
        out = conv[self._chk_unorder]
        out = np.take_along_axis(out, self._perm_out, axis=1)
        self._c2v_pad[:E] = self._renorm(out)

    def estimate(self):
        """Per-section posterior (L, q) including the local observation.

        With the extrinsic flag the local observation is left out, which
        is only meaningful for diagnostics.
        """
        if self.alpha is None:
            raise RuntimeError("init_alpha must run before estimate")
        if self.code.n_edges == 0:
            prod = np.ones_like(self.alpha)
        else:
            gathered = self._c2v_pad[self._var_pad]
            prod = gathered.prod(axis=1)
        if not self.extrinsic:
            prod = prod * self.alpha
        return self._renorm(prod)

    def _renorm(self, mat):
        totals = mat.sum(axis=-1)
        bad = ~np.isfinite(totals) | (totals <= 0.0)
        if np.any(bad):
            self.underflow_events += int(bad.sum())
        return _normalize_rows(mat)

    def metadata(self):
        return {
            "underflow_events": self.underflow_events,
            "sub_girth_violations": self.sub_girth_violations,
        }


def _pad_adjacency(edge_lists, dummy):
    """Stack variable-length edge-id lists into a padded matrix + mask."""
    n = len(edge_lists)
    width = max((len(e) for e in edge_lists), default=0)
    width = max(width, 1)
    pad = np.full((n, width), dummy, dtype=np.int64)
    mask = np.zeros((n, width), dtype=bool)
    for i, ids in enumerate(edge_lists):
        pad[i, : len(ids)] = ids
        mask[i, : len(ids)] = True
    return pad, mask


def _excl_prod(a):
    """Per-slot products along axis 1 excluding the slot itself."""
    pre = np.ones_like(a)
    suf = np.ones_like(a)
    if a.shape[1] > 1:
        np.cumprod(a[:, :-1], axis=1, out=pre[:, 1:])
        suf[:, :-1] = np.cumprod(a[:, :0:-1], axis=1)[:, ::-1]
    return pre * suf
