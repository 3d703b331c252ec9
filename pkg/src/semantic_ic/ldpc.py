"""Regular LDPC codes: construction, systematic encoding and sum-product decoding.

LLR sign convention: positive values favour bit 0 (BPSK symbol +1).

The decoder works on a batch of codewords at once. Messages live on the
edges of the Tanner graph, stored check-major, and per-node sums are taken
with ``np.add.reduceat`` so irregular matrices (e.g. read from an alist file)
decode through the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError

LLR_CLIP = 50.0


@dataclass(frozen=True)
class CodeSpec:
    n: int = 900
    dv: int = 2
    dc: int = 3
    seed: int = 0

    @property
    def m(self) -> int:
        return self.n * self.dv // self.dc


class ParityMatrix:
    """Sparse binary parity-check matrix as row and column adjacency lists."""

    def __init__(self, m: int, n: int, row_cols):
        self.m = m
        self.n = n
        self.row_cols = [np.asarray(sorted(r), dtype=np.int64) for r in row_cols]
        if len(self.row_cols) != m:
            raise DimensionError(f"expected {m} rows, got {len(self.row_cols)}")
        col_rows = [[] for _ in range(n)]
        for i, cols in enumerate(self.row_cols):
            if len(np.unique(cols)) != len(cols):
                raise ConfigurationError(f"row {i} has a repeated column index")
            for j in cols:
                if not 0 <= j < n:
                    raise DimensionError(f"column index {j} out of range for n={n}")
                col_rows[j].append(i)
        self.col_rows = [np.asarray(c, dtype=np.int64) for c in col_rows]
        self._build_edges()

    def _build_edges(self):
        self.row_degree = np.array([len(r) for r in self.row_cols], dtype=np.int64)
        self.col_degree = np.array([len(c) for c in self.col_rows], dtype=np.int64)
        self.edge_var = np.concatenate(self.row_cols) if self.m else np.zeros(0, np.int64)
        self.edge_check = np.repeat(np.arange(self.m), self.row_degree)
        self.row_start = np.concatenate([[0], np.cumsum(self.row_degree)[:-1]])
        # edges grouped by variable, stable so order within a column follows rows
        self.var_order = np.argsort(self.edge_var, kind="stable")
        self.col_start = np.concatenate([[0], np.cumsum(self.col_degree)[:-1]])
        # dense (node, max degree) tables of edge ids; the id ``n_edges`` is a
        # padding slot holding the neutral element of the reduction
        E = self.edge_var.size
        dmax_r = int(self.row_degree.max(initial=0))
        dmax_c = int(self.col_degree.max(initial=0))
        self.row_table = np.full((self.m, dmax_r), E, dtype=np.int64)
        slot_r = np.arange(E) - np.repeat(self.row_start, self.row_degree)
        self.row_table[self.edge_check, slot_r] = np.arange(E)
        self.edge_row_slot = self.edge_check * dmax_r + slot_r
        # equal row degrees: check-major edges already form an (m, dc) grid
        self.uniform_rows = bool(np.all(self.row_degree == dmax_r))
        self.col_table = np.full((self.n, dmax_c), E, dtype=np.int64)
        sorted_var = self.edge_var[self.var_order]
        slot_c = np.arange(E) - np.repeat(self.col_start, self.col_degree)
        self.col_table[sorted_var, slot_c] = self.var_order

    @classmethod
    def from_dense(cls, H) -> ParityMatrix:
        H = np.asarray(H) % 2
        return cls(H.shape[0], H.shape[1], [np.flatnonzero(row) for row in H])

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        H[self.edge_check, self.edge_var] = 1
        return H

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    def is_regular(self, dv: int, dc: int) -> bool:
        return bool(np.all(self.col_degree == dv) and np.all(self.row_degree == dc))

    def row_sums(self, values):
        """Sum edge values ``(..., n_edges)`` per check, giving ``(..., m)``."""
        return _segment_sum(values, self.row_start, self.row_degree)

    def col_sums(self, values):
        """Sum edge values per variable, giving ``(..., n)``."""
        return _segment_sum(values[..., self.var_order], self.col_start, self.col_degree)

    def row_view(self, values, fill):
        """Edge values ``(b, n_edges)`` as ``(b, m, max row degree)``, padded with ``fill``."""
        if self.uniform_rows:
            return values.reshape(len(values), self.m, -1)
        return _padded(values, fill)[:, self.row_table]

    def from_row_view(self, grid):
        if self.uniform_rows:
            return grid.reshape(len(grid), -1)
        return grid.reshape(len(grid), -1)[:, self.edge_row_slot]

    def syndrome(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape[-1] != self.n:
            raise DimensionError(f"word length {bits.shape[-1]} differs from n={self.n}")
        flat = bits.reshape(-1, self.n)
        grid = self.row_view(flat[:, self.edge_var], 0)
        return (np.bitwise_xor.reduce(grid, axis=-1)).reshape(bits.shape[:-1] + (self.m,))

    def four_cycle_pairs(self) -> np.ndarray:
        """Row pairs ``(i, j)`` with ``i < j`` sharing at least two columns."""
        # float32 takes the BLAS path; overlap counts stay exact
        H = self.to_dense().astype(np.float32)
        overlap = H @ H.T
        i, j = np.nonzero(np.triu(overlap >= 2, k=1))
        return np.stack([i, j], axis=1)


def _segment_sum(values, starts, degrees):
    if values.shape[-1] == 0:
        return np.zeros(values.shape[:-1] + (len(starts),), dtype=values.dtype)
    safe = np.minimum(starts, values.shape[-1] - 1)
    out = np.add.reduceat(values, safe, axis=-1)
    if np.any(degrees == 0):
        out[..., degrees == 0] = 0
    return out


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def construct_regular_code(spec: CodeSpec, rng=None, cycle_rounds=100) -> ParityMatrix:
    """Random ``(dv, dc)``-regular parity-check matrix.

    Uses Gallager's ensemble, ``dv`` stacked bands each covering every column
    once under a random column permutation. Rows inside the first band are
    consecutive column groups. Afterwards up to ``cycle_rounds`` local
    resampling rounds try to break length-4 cycles; whatever remains is kept.
    """
    n, dv, dc = spec.n, spec.dv, spec.dc
    if min(n, dv, dc) < 1 or (n * dv) % dc:
        raise ConfigurationError(f"no ({dv},{dc})-regular code of length {n}: n*dv % dc != 0")
    if dc > n or dv > spec.m:
        raise ConfigurationError(f"({dv},{dc})-regular code of length {n} is infeasible")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if n % dc:
        return _socket_construction(spec, rng)

    per_band = n // dc
    perms = [np.arange(n)] + [rng.permutation(n) for _ in range(dv - 1)]

    def assemble():
        rows = []
        for perm in perms:
            rows.extend(perm.reshape(per_band, dc))
        return ParityMatrix(spec.m, n, rows)

    H = assemble()
    for _ in range(cycle_rounds):
        pairs = H.four_cycle_pairs()
        if len(pairs) == 0 or dv < 2:
            break
        # move one column of the later row (never in band 0) to a random slot
        for row in np.unique(pairs[:, 1]):
            band, local = divmod(int(row), per_band)
            if band == 0:
                continue
            perm = perms[band]
            a = local * dc + rng.integers(dc)
            b = rng.integers(n)
            perm[a], perm[b] = perm[b], perm[a]
        H = assemble()
    return H


def _socket_construction(spec: CodeSpec, rng, attempts=1000) -> ParityMatrix:
    n, dv, dc, m = spec.n, spec.dv, spec.dc, spec.m
    var_sockets = np.repeat(np.arange(n), dv)
    for _ in range(attempts):
        rows = rng.permutation(var_sockets).reshape(m, dc)
        if all(len(np.unique(r)) == dc for r in rows):
            return ParityMatrix(m, n, rows)
    raise ConfigurationError(f"could not draw a duplicate-free ({dv},{dc}) code of length {n}")


# ---------------------------------------------------------------------------
# systematic encoding
# ---------------------------------------------------------------------------

@dataclass
class SystematicCode:
    """A parity-check matrix together with a systematic generator map.

    ``info_cols`` are the codeword positions carrying message bits verbatim;
    ``pivot_cols[i]`` is determined by ``parity_map[i] . message (mod 2)``.
    """

    parity: ParityMatrix
    pivot_cols: np.ndarray
    info_cols: np.ndarray
    parity_map: np.ndarray
    column_permutation: np.ndarray = field(init=False)

    def __post_init__(self):
        self.column_permutation = np.concatenate([self.pivot_cols, self.info_cols])

    @property
    def n(self) -> int:
        return self.parity.n

    @property
    def k(self) -> int:
        return int(self.info_cols.size)

    @property
    def rank(self) -> int:
        return int(self.pivot_cols.size)

    @property
    def rate(self) -> float:
        return self.k / self.n


def gf2_rank(H) -> int:
    return systematize(ParityMatrix.from_dense(H)).rank


def systematize(H: ParityMatrix) -> SystematicCode:
    """Gauss-Jordan elimination over GF(2), choosing pivots column by column."""
    A = H.to_dense().copy()
    m, n = A.shape
    pivots = []
    r = 0
    for col in range(n):
        if r == m:
            break
        candidates = np.flatnonzero(A[r:, col])
        if candidates.size == 0:
            continue
        p = r + candidates[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        hits = np.flatnonzero(A[:, col])
        hits = hits[hits != r]
        if hits.size:
            A[hits] ^= A[r]
        pivots.append(col)
        r += 1
    pivot_cols = np.asarray(pivots, dtype=np.int64)
    info_cols = np.setdiff1d(np.arange(n), pivot_cols)
    parity_map = A[:r][:, info_cols].astype(np.uint8)
    return SystematicCode(H, pivot_cols, info_cols, parity_map)


def encode(code: SystematicCode, message) -> np.ndarray:
    """Map ``k`` message bits (or a batch ``(b, k)``) to codewords."""
    message = np.asarray(message, dtype=np.uint8)
    if message.shape[-1] != code.k:
        raise DimensionError(f"message length {message.shape[-1]} differs from k={code.k}")
    word = np.zeros(message.shape[:-1] + (code.n,), dtype=np.uint8)
    word[..., code.info_cols] = message
    if code.rank:
        # float32 matmul is exact here: every partial sum is an integer <= k
        par = message.astype(np.float32) @ code.parity_map.T.astype(np.float32)
        word[..., code.pivot_cols] = (par.astype(np.int64) % 2).astype(np.uint8)
    return word


def extract_message(code: SystematicCode, word) -> np.ndarray:
    return np.asarray(word)[..., code.info_cols]


def syndrome_check(H: ParityMatrix, bits):
    """True where ``H . bits^T = 0`` over GF(2); one flag per word of a batch."""
    ok = ~np.any(H.syndrome(bits), axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok


# ---------------------------------------------------------------------------
# sum-product decoding
# ---------------------------------------------------------------------------

def _padded(values, fill):
    out = np.empty(values.shape[:-1] + (values.shape[-1] + 1,), dtype=values.dtype)
    out[..., :-1] = values
    out[..., -1] = fill
    return out


def _check_update(H: ParityMatrix, v2c):
    """Tanh rule: each check-to-variable message combines the other inputs."""
    t = H.row_view(np.tanh(0.5 * v2c), 1.0)
    d = t.shape[-1]
    # leave-one-out products from running prefix and suffix products
    prod = np.empty_like(t)
    run = np.ones(t.shape[:-1])
    for j in range(d):
        prod[..., j] = run
        run = run * t[..., j]
    run = np.ones(t.shape[:-1])
    for j in range(d - 1, -1, -1):
        prod[..., j] *= run
        run = run * t[..., j]
    with np.errstate(divide="ignore"):
        out = 2.0 * np.arctanh(H.from_row_view(prod))
    return np.clip(out, -LLR_CLIP, LLR_CLIP, out=out)


def _variable_sum(H: ParityMatrix, c2v):
    return _padded(c2v, 0.0)[:, H.col_table].sum(axis=-1)


@dataclass
class DecodeResult:
    posterior: np.ndarray
    hard_bits: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def bp_decode(code, channel_llr, apriori_llr=None, max_iters=10) -> DecodeResult:
    """Flooding sum-product decoding with an external a priori input.

    ``channel_llr`` and ``apriori_llr`` are ``(n,)`` or ``(b, n)``. The
    variable-node intrinsic value is their sum. Each word stops as soon as its
    hard decision satisfies every check; ``iterations`` counts the message
    passing rounds used (1 for a word already consistent after one round).
    Ties (posterior exactly 0) decide bit 0.
    """
    H = code.parity if isinstance(code, SystematicCode) else code
    if max_iters < 1:
        raise ConfigurationError("max_iters must be >= 1")
    channel = np.asarray(channel_llr, dtype=np.float64)
    single = channel.ndim == 1
    channel = np.atleast_2d(channel)
    apriori = (
        np.zeros_like(channel)
        if apriori_llr is None
        else np.atleast_2d(np.asarray(apriori_llr, dtype=np.float64))
    )
    if channel.shape[-1] != H.n or apriori.shape != channel.shape:
        raise DimensionError(
            f"LLR shapes {channel.shape} and {apriori.shape} do not fit n={H.n}"
        )
    if not (np.all(np.isfinite(channel)) and np.all(np.isfinite(apriori))):
        raise NumericError("input LLRs must be finite")

    intrinsic = channel + apriori
    batch = intrinsic.shape[0]
    posterior = intrinsic.copy()
    hard = (posterior < 0).astype(np.uint8)
    converged = np.zeros(batch, dtype=bool)
    iterations = np.zeros(batch, dtype=np.int64)

    # working arrays hold only the words still being decoded
    active = np.arange(batch)
    intr = intrinsic
    c2v = np.zeros((batch, H.n_edges))
    for it in range(1, max_iters + 1):
        total = intr + _variable_sum(H, c2v)
        v2c = np.clip(total[:, H.edge_var] - c2v, -LLR_CLIP, LLR_CLIP)
        c2v = _check_update(H, v2c)
        post = intr + _variable_sum(H, c2v)
        bits = (post < 0).astype(np.uint8)
        posterior[active] = post
        hard[active] = bits
        iterations[active] = it
        done = ~np.any(H.syndrome(bits), axis=-1)
        if np.any(done):
            converged[active[done]] = True
            keep = ~done
            active, intr, c2v = active[keep], intr[keep], c2v[keep]
        if active.size == 0:
            break

    if single:
        return DecodeResult(posterior[0], hard[0], bool(converged[0]), int(iterations[0]))
    return DecodeResult(posterior, hard, converged, iterations)


# ---------------------------------------------------------------------------
# alist interchange
# ---------------------------------------------------------------------------

def write_alist(H: ParityMatrix, path):
    """Write ``H`` in MacKay's alist format (1-based, zero padded)."""
    max_col, max_row = int(H.col_degree.max(initial=0)), int(H.row_degree.max(initial=0))
    lines = [f"{H.n} {H.m}", f"{max_col} {max_row}"]
    lines.append(" ".join(map(str, H.col_degree)))
    lines.append(" ".join(map(str, H.row_degree)))
    for rows in H.col_rows:
        entries = list(rows + 1) + [0] * (max_col - len(rows))
        lines.append(" ".join(map(str, entries)))
    for cols in H.row_cols:
        entries = list(cols + 1) + [0] * (max_row - len(cols))
        lines.append(" ".join(map(str, entries)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_alist(path) -> ParityMatrix:
    tokens = [int(t) for t in Path(path).read_text().split()]
    n, m = tokens[0], tokens[1]
    max_col, max_row = tokens[2], tokens[3]
    pos = 4 + n + m
    pos += n * max_col
    rows = []
    for _ in range(m):
        entries = tokens[pos : pos + max_row]
        rows.append([e - 1 for e in entries if e > 0])
        pos += max_row
    return ParityMatrix(m, n, rows)
