"""Outer non-binary LDPC code: Tanner graph, encoder, syndrome check.

The code is an edge-labeled bipartite graph with L variable nodes and P
check nodes over GF(q).  A length-L symbol vector v is a codeword when
every check p satisfies  sum_{l in N(c_p)} w_{l,p} (x) v_l = 0  with all
arithmetic in the field.  Edges are kept in arrays sorted by
(check, slot) so the BP check updates operate on contiguous segments;
this ordering is part of the code object and of the file format.
"""

import math

import numpy as np

from .gf import GF2m


class RankDeficientError(ValueError):
    """Parity-check matrix does not have full row rank over GF(q)."""

    def __init__(self, rank, rows):
        self.rank = rank
        self.rows = rows
        super().__init__(f"parity matrix rank {rank} < {rows} rows")


class LdpcCode:
    """Edge-labeled Tanner graph over GF(2^m).

    Attributes:
        field: GF2m instance
        L, P: variable / check node counts
        edge_var, edge_chk, edge_label: per-edge arrays, sorted by
            (check index, slot); labels are nonzero field elements
        var_edges, chk_edges: adjacency as lists of edge-id arrays
        girth: length of the shortest cycle (math.inf when acyclic)
    """

    def __init__(self, field, L, P, edge_var, edge_chk, edge_label, girth=None):
        self.field = field
        self.L = int(L)
        self.P = int(P)

        order = np.lexsort((edge_var, edge_chk))
        self.edge_var = np.asarray(edge_var, dtype=np.int64)[order]
        self.edge_chk = np.asarray(edge_chk, dtype=np.int64)[order]
        self.edge_label = np.asarray(edge_label, dtype=np.int64)[order]
        self.n_edges = len(self.edge_var)

        self._validate()
        self.var_edges = [
            np.flatnonzero(self.edge_var == l) for l in range(self.L)
        ]
        self.chk_edges = [
            np.flatnonzero(self.edge_chk == p) for p in range(self.P)
        ]
        self.girth = compute_girth(self) if girth is None else girth

    def _validate(self):
        if self.n_edges and (
            self.edge_var.min() < 0
            or self.edge_var.max() >= self.L
            or self.edge_chk.min() < 0
            or self.edge_chk.max() >= self.P
        ):
            raise ValueError("edge endpoint out of range")
        if np.any(self.edge_label < 1) or np.any(self.edge_label >= self.field.q):
            raise ValueError("edge labels must be nonzero field elements")
        pairs = set(zip(self.edge_var.tolist(), self.edge_chk.tolist()))
        if len(pairs) != self.n_edges:
            raise ValueError("parallel edges are not allowed")

    def var_degrees(self):
        return np.bincount(self.edge_var, minlength=self.L)

    def chk_degrees(self):
        return np.bincount(self.edge_chk, minlength=self.P)

    def parity_matrix(self):
        """Dense P x L parity-check matrix of field elements."""
        H = np.zeros((self.P, self.L), dtype=np.int64)
        H[self.edge_chk, self.edge_var] = self.edge_label
        return H

    def with_labels(self, labels):
        """Copy of this graph with replaced edge labels."""
        return LdpcCode(
            self.field, self.L, self.P,
            self.edge_var, self.edge_chk, labels, girth=self.girth,
        )


def peg_construct(field, L, P, dv):
    """Build a variable-regular Tanner graph by progressive edge growth.

    Each variable node receives dv edges, placed one at a time on the
    check that is farthest in the current graph (unreachable checks
    first).  Ties break toward the lowest-degree check, then the lowest
    index, which makes the construction deterministic.  Labels are
    initialized to 1; use assign_edge_labels for a random labeling.
    """
    if not (L > P >= 1):
        raise ValueError(f"need L > P >= 1, got L={L}, P={P}")
    if dv < 2:
        raise ValueError(f"need dv >= 2, got dv={dv}")
    if dv > P:
        raise ValueError(f"infeasible degree profile: dv={dv} > P={P}")

    var_adj = [[] for _ in range(L)]
    chk_adj = [[] for _ in range(P)]
    chk_deg = np.zeros(P, dtype=np.int64)

    for v in range(L):
        for k in range(dv):
            if k == 0:
                candidates = range(P)
            else:
                depth = _check_depths(v, var_adj, chk_adj, P)
                if np.any(depth < 0):
                    candidates = np.flatnonzero(depth < 0)
                else:
                    candidates = np.flatnonzero(depth == depth.max())
                candidates = [c for c in candidates if c not in var_adj[v]]
                if not candidates:
                    raise ValueError(
                        f"no check available for variable {v} edge {k}"
                    )
            c = min(candidates, key=lambda p: (chk_deg[p], p))
            var_adj[v].append(c)
            chk_adj[c].append(v)
            chk_deg[c] += 1

    edge_var = np.repeat(np.arange(L), dv)
    edge_chk = np.concatenate([np.asarray(a) for a in var_adj])
    edge_label = np.ones(L * dv, dtype=np.int64)
    return LdpcCode(field, L, P, edge_var, edge_chk, edge_label)


def _check_depths(v, var_adj, chk_adj, P):
    """BFS depths of all check nodes from variable v; -1 if unreachable."""
    depth = np.full(P, -1, dtype=np.int64)
    seen_v = np.zeros(len(var_adj), dtype=bool)
    seen_v[v] = True
    frontier = [v]
    d = 0
    while frontier:
        new_checks = []
        for vv in frontier:
            for c in var_adj[vv]:
                if depth[c] < 0:
                    depth[c] = d
                    new_checks.append(c)
        frontier = []
        for c in new_checks:
            for vv in chk_adj[c]:
                if not seen_v[vv]:
                    seen_v[vv] = True
                    frontier.append(vv)
        d += 1
    return depth


def compute_girth(code):
    """Shortest cycle length via BFS from every variable node.

    Returns math.inf for acyclic graphs.  Every cycle in a bipartite
    graph passes through a variable node, so these starts suffice.
    """
    n_nodes = code.L + code.P
    adj = [[] for _ in range(n_nodes)]
    for v, c in zip(code.edge_var.tolist(), code.edge_chk.tolist()):
        adj[v].append(code.L + c)
        adj[code.L + c].append(v)

    best = math.inf
    dist = np.empty(n_nodes, dtype=np.int64)
    parent = np.empty(n_nodes, dtype=np.int64)
    for s in range(code.L):
        dist.fill(-1)
        dist[s] = 0
        parent[s] = -1
        queue = [s]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            if 2 * dist[u] >= best:
                break
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue.append(w)
                elif parent[u] != w:
                    best = min(best, dist[u] + dist[w] + 1)
        if best == 4:
            break
    return best


def assign_edge_labels(code, seed):
    """Redraw all edge labels i.i.d. uniform over {1, ..., q-1}."""
    q = code.field.q
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    labels = rng.integers(1, q, size=code.n_edges, dtype=np.int64)
    return code.with_labels(labels)


def syndrome_check(code, v):
    """True iff symbol vector v satisfies every parity equation."""
    v = np.asarray(v, dtype=np.int64)
    if v.shape != (code.L,):
        raise ValueError(f"expected length-{code.L} symbol vector")
    if code.P == 0:
        return True
    contrib = code.field.mul_table[code.edge_label, v[code.edge_var]]
    synd = np.zeros(code.P, dtype=np.int64)
    np.bitwise_xor.at(synd, code.edge_chk, contrib)
    return not synd.any()


class Encoder:
    """Systematic encoding map derived from the parity-check matrix.

    Gaussian elimination over GF(q) brings H to reduced row-echelon
    form; pivot columns carry parity symbols, the remaining columns
    carry the k = L - P message symbols.
    """

    def __init__(self, code):
        self.code = code
        self.field = code.field
        H = code.parity_matrix()
        P, L = H.shape
        mul = self.field.mul_table

        piv_cols = []
        r = 0
        for c in range(L):
            if r == P:
                break
            nz = np.flatnonzero(H[r:, c])
            if nz.size == 0:
                continue
            rr = r + nz[0]
            if rr != r:
                H[[r, rr]] = H[[rr, r]]
            H[r] = mul[H[r], self.field.inv(H[r, c])]
            factors = H[:, c].copy()
            factors[r] = 0
            H ^= mul[factors[:, None], H[r][None, :]]
            piv_cols.append(c)
            r += 1
        if r < P:
            raise RankDeficientError(r, P)

        self.parity_positions = np.asarray(piv_cols, dtype=np.int64)
        mask = np.ones(L, dtype=bool)
        mask[self.parity_positions] = False
        self.message_positions = np.flatnonzero(mask)
        self.k = L - P
        # Row r of H restricted to message columns gives the GF-linear
        # combination that fills parity position piv_cols[r].
        self.parity_rows = H[:, self.message_positions]

    def encode(self, msg_symbols):
        """Map k message symbols to a length-L codeword."""
        msg = np.asarray(msg_symbols, dtype=np.int64)
        if msg.shape != (self.k,):
            raise ValueError(f"expected {self.k} message symbols")
        v = np.zeros(self.code.L, dtype=np.int64)
        v[self.message_positions] = msg
        if self.code.P:
            contrib = self.field.mul_table[self.parity_rows, msg[None, :]]
            v[self.parity_positions] = np.bitwise_xor.reduce(contrib, axis=1)
        return v


class _TrivialEncoder:
    """Encoder for a code with no parity constraints (P = 0)."""

    def __init__(self, code):
        self.code = code
        self.field = code.field
        self.k = code.L
        self.message_positions = np.arange(code.L)
        self.parity_positions = np.arange(0)

    def encode(self, msg_symbols):
        msg = np.asarray(msg_symbols, dtype=np.int64)
        if msg.shape != (self.k,):
            raise ValueError(f"expected {self.k} message symbols")
        return msg.copy()


def build_encoder(code):
    if code.P == 0:
        return _TrivialEncoder(code)
    return Encoder(code)


def build_code(field, L, P, dv, seed, max_attempts=16):
    """PEG graph + random labels + encoder, redrawing labels on rank loss.

    Random GF(q) labels make a rank-deficient parity matrix exceedingly
    unlikely, so on failure the labels are simply redrawn with seed+1,
    seed+2, ... before giving up.  Returns (code, encoder).
    """
    if P == 0:
        code = LdpcCode(
            field, L, 0,
            np.arange(0), np.arange(0), np.arange(0), girth=math.inf,
        )
        return code, build_encoder(code)

    graph = peg_construct(field, L, P, dv)
    last = None
    for attempt in range(max_attempts):
        code = assign_edge_labels(graph, seed + attempt)
        try:
            return code, build_encoder(code)
        except RankDeficientError as exc:
            last = exc
    raise RankDeficientError(last.rank, last.rows)


def bits_to_symbols(bits, m):
    """Pack bits into m-bit field symbols, big-endian within a symbol."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by m={m}")
    weights = 1 << np.arange(m - 1, -1, -1)
    return bits.reshape(-1, m) @ weights


def symbols_to_bits(symbols, m):
    """Unpack field symbols into bits, inverse of bits_to_symbols."""
    symbols = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return ((symbols[:, None] >> shifts) & 1).ravel()


def save_code(code, path):
    """Write the code as text: header `q L P girth poly`, then edges."""
    girth = 0 if math.isinf(code.girth) else int(code.girth)
    lines = [f"{code.field.q} {code.L} {code.P} {girth} 0x{code.field.poly:X}"]
    for v, c, w in zip(code.edge_var, code.edge_chk, code.edge_label):
        lines.append(f"{v} {c} {w}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_code(path):
    with open(path) as fh:
        header = fh.readline().split()
        q, L, P, girth = (int(x) for x in header[:4])
        poly = int(header[4], 16)
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    field = GF2m(q.bit_length() - 1, poly=poly)
    if field.q != q:
        raise ValueError(f"q={q} is not a power of two")
    if edges.size == 0:
        edges = np.zeros((0, 3), dtype=np.int64)
    return LdpcCode(
        field, L, P,
        edges[:, 0], edges[:, 1], edges[:, 2],
        girth=(math.inf if girth == 0 else girth),
    )
