"""LDPC codes: alist parsing, systematic encoding and flooding belief propagation.

Decoder inputs and outputs use the package-wide LLR sign, ``log P(b=1)/P(b=0)``,
so a positive LLR favours bit 1. Hard decisions resolve a zero posterior to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import AlistParseError, CodeConstructionError
from .modem import LLR_MAX

__all__ = [
    "DEFAULT_CODE",
    "ParityMatrix",
    "DecodeResult",
    "load_alist",
    "load_alist_file",
    "default_code",
    "to_alist",
    "encode",
    "decode_bp",
    "make_permutation",
    "interleave",
    "deinterleave",
]

DEFAULT_CODE = "wifi_648_r12.alist"

# smallest message magnitude fed to the check-node transform
_MIN_MAG = 1e-15


@dataclass(frozen=True, eq=False)
class ParityMatrix:
    """Sparse binary parity-check matrix with dual adjacency lists.

    Attributes
    ----------
    n : int
        Codeword length (variables).
    m : int
        Number of checks.
    check_neighbors : tuple of ndarray
        Sorted variable indices of each check.
    var_neighbors : tuple of ndarray
        Sorted check indices of each variable.
    """

    n: int
    m: int
    check_neighbors: tuple
    var_neighbors: tuple

    @classmethod
    def from_dense(cls, h) -> "ParityMatrix":
        h = np.asarray(h)
        if h.ndim != 2 or not np.isin(h, (0, 1)).all():
            raise ValueError("parity-check matrix must be a 2-D 0/1 array")
        m, n = h.shape
        checks = tuple(np.flatnonzero(h[i]) for i in range(m))
        variables = tuple(np.flatnonzero(h[:, j]) for j in range(n))
        return cls(n, m, checks, variables)

    def dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        h[self.edge_check, self.edge_var] = 1
        return h

    @cached_property
    def edge_check(self) -> np.ndarray:
        return np.repeat(np.arange(self.m), [len(c) for c in self.check_neighbors])

    @cached_property
    def edge_var(self) -> np.ndarray:
        if not self.check_neighbors:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.check_neighbors).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @cached_property
    def _check_starts(self) -> np.ndarray:
        deg = np.array([len(c) for c in self.check_neighbors])
        return np.concatenate(([0], np.cumsum(deg)[:-1]))

    @cached_property
    def _var_order(self) -> np.ndarray:
        # edges regrouped by variable, for per-variable reductions
        return np.argsort(self.edge_var, kind="stable")

    @cached_property
    def _var_starts(self) -> np.ndarray:
        deg = np.array([len(v) for v in self.var_neighbors])
        return np.concatenate(([0], np.cumsum(deg)[:-1]))

    @property
    def k(self) -> int:
        return self.n - self.rank

    @property
    def rate(self) -> float:
        return self.k / self.n

    def syndrome(self, bits) -> np.ndarray:
        """Check values ``H c mod 2`` for bits of shape ``(..., n)``."""
        bits = np.asarray(bits, dtype=np.uint8)
        per_edge = bits[..., self.edge_var]
        return np.add.reduceat(per_edge, self._check_starts, axis=-1) & 1

    def is_codeword(self, bits) -> np.ndarray:
        return ~self.syndrome(bits).any(axis=-1)

    @cached_property
    def _systematic(self):
        return _systematic_form(self.dense())

    @property
    def rank(self) -> int:
        return len(self._systematic[0])

    @property
    def info_positions(self) -> np.ndarray:
        return self._systematic[1]

    @property
    def parity_positions(self) -> np.ndarray:
        return self._systematic[0]


def _systematic_form(h: np.ndarray):
    """Gaussian elimination over GF(2), picking pivots from the rightmost columns.

    Returns ``(parity_positions, info_positions, parity_map)`` with
    ``c[parity_positions] = parity_map @ c[info_positions] mod 2`` for every
    codeword ``c``.
    """
    a = h.astype(np.uint8).copy()
    m, n = a.shape
    pivots = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == m:
            break
        nz = np.flatnonzero(a[row:, col])
        if nz.size == 0:
            continue
        p = row + nz[0]
        if p != row:
            a[[row, p]] = a[[p, row]]
        others = np.flatnonzero(a[:, col])
        others = others[others != row]
        a[others] ^= a[row]
        pivots.append(col)
        row += 1
    rank = row
    parity = np.array(pivots, dtype=np.int64)
    info = np.setdiff1d(np.arange(n), parity)
    parity_map = a[:rank][:, info]
    return parity, info, parity_map


def _tokens(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if fields:
            yield lineno, fields


def load_alist(text: str) -> ParityMatrix:
    """Parse a parity-check matrix in MacKay's alist format.

    The column and row lists may be zero padded to the maximum degree. Both
    lists are read and must describe the same matrix.

    Raises
    ------
    AlistParseError
        On non-numeric tokens, truncation, or inconsistent dimensions/degrees,
        with the offending line number.
    """
    lines = list(_tokens(text))
    pos = 0

    def take(count=None, what="values"):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise AlistParseError(f"unexpected end of file while reading {what}", last + 1)
        lineno, fields = lines[pos]
        pos += 1
        try:
            values = [int(f) for f in fields]
        except ValueError:
            raise AlistParseError(f"non-numeric token in {what}: {' '.join(fields)!r}", lineno)
        if count is not None and len(values) != count:
            raise AlistParseError(f"expected {count} {what}, found {len(values)}", lineno)
        return lineno, values

    ln, (n, m) = take(2, "dimensions")
    if n <= 0 or m <= 0:
        raise AlistParseError("dimensions must be positive", ln)
    ln, (max_col, max_row) = take(2, "maximum degrees")
    ln_cd, col_deg = take(n, "column degrees")
    ln_rd, row_deg = take(m, "row degrees")
    if max(col_deg) != max_col or min(col_deg) < 0:
        raise AlistParseError("column degrees disagree with declared maximum", ln_cd)
    if max(row_deg) != max_row or min(row_deg) < 0:
        raise AlistParseError("row degrees disagree with declared maximum", ln_rd)
    if sum(col_deg) != sum(row_deg):
        raise AlistParseError("column and row degrees sum to different edge counts", ln_rd)

    def read_lists(count, degrees, limit, what):
        width = max(degrees)
        out = []
        for j in range(count):
            lineno, values = take(None, what)
            d = degrees[j]
            if len(values) not in (d, width):
                raise AlistParseError(f"{what} {j + 1} has {len(values)} entries, degree is {d}", lineno)
            entries, padding = values[:d], values[d:]
            if any(v != 0 for v in padding) or any(v < 1 or v > limit for v in entries):
                raise AlistParseError(f"index out of range in {what} {j + 1}", lineno)
            if len(set(entries)) != d:
                raise AlistParseError(f"repeated edge in {what} {j + 1}", lineno)
            out.append((lineno, sorted(v - 1 for v in entries)))
        return out

    cols = read_lists(n, col_deg, m, "column")
    rows = read_lists(m, row_deg, n, "row")
    if pos != len(lines):
        raise AlistParseError("trailing content after row lists", lines[pos][0])

    h = np.zeros((m, n), dtype=np.uint8)
    for j, (_, rlist) in enumerate(cols):
        h[rlist, j] = 1
    for i, (lineno, clist) in enumerate(rows):
        if sorted(np.flatnonzero(h[i]).tolist()) != clist:
            raise AlistParseError(f"row {i + 1} disagrees with the column lists", lineno)
    return ParityMatrix.from_dense(h)


def load_alist_file(path) -> ParityMatrix:
    return load_alist(Path(path).read_text())


def default_code() -> ParityMatrix:
    """The IEEE 802.11n (648, 324) rate-1/2 QC-LDPC code (Z = 27)."""
    text = resources.files("llrcomp").joinpath("data").joinpath(DEFAULT_CODE).read_text()
    return load_alist(text)


def to_alist(pm: ParityMatrix) -> str:
    """Serialize to alist with zero padding to the maximum degree."""
    col_deg = [len(v) for v in pm.var_neighbors]
    row_deg = [len(c) for c in pm.check_neighbors]
    mc, mr = max(col_deg), max(row_deg)

    def padded(idx, width):
        vals = [str(i + 1) for i in idx] + ["0"] * (width - len(idx))
        return " ".join(vals)

    out = [f"{pm.n} {pm.m}", f"{mc} {mr}", " ".join(map(str, col_deg)), " ".join(map(str, row_deg))]
    out += [padded(v, mc) for v in pm.var_neighbors]
    out += [padded(c, mr) for c in pm.check_neighbors]
    return "\n".join(out) + "\n"


def encode(info, pm: ParityMatrix) -> np.ndarray:
    """Systematic encoding of ``info`` (shape ``(..., k)``) into codewords ``(..., n)``.

    Information bits occupy ``pm.info_positions`` in increasing order.
    """
    parity_pos, info_pos, pmap = pm._systematic
    if len(parity_pos) < pm.m:
        raise CodeConstructionError(
            f"parity-check matrix has rank {len(parity_pos)} < {pm.m} checks"
        )
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != info_pos.size:
        raise ValueError(f"expected {info_pos.size} information bits, got {info.shape[-1]}")
    code = np.zeros(info.shape[:-1] + (pm.n,), dtype=np.uint8)
    code[..., info_pos] = info
    code[..., parity_pos] = (info.astype(np.int64) @ pmap.T.astype(np.int64)) & 1
    return code


class DecodeResult(NamedTuple):
    bits: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    posterior: np.ndarray


def _boxplus_phi(x):
    # phi(x) = -log tanh(x/2) = 2 atanh(exp(-x)); its own inverse on x > 0
    with np.errstate(divide="ignore"):
        return 2.0 * np.arctanh(np.exp(-x))


def _check_update_sum_product(v2c, pm, starts):
    mag = np.abs(v2c)
    zero = mag == 0
    phi = _boxplus_phi(np.clip(mag, _MIN_MAG, LLR_MAX))
    total = np.add.reduceat(phi, starts, axis=1)
    out_mag = _boxplus_phi(np.maximum(total[:, pm.edge_check] - phi, 0.0))
    np.minimum(out_mag, LLR_MAX, out=out_mag)
    if zero.any():
        # any other exactly-zero input carries no information to the output
        zeros_other = np.add.reduceat(zero, starts, axis=1)[:, pm.edge_check] - zero
        out_mag[zeros_other > 0] = 0.0
    neg = v2c < 0
    parity = np.add.reduceat(neg, starts, axis=1)[:, pm.edge_check] - neg
    return np.where(parity & 1, -out_mag, out_mag)


def _check_update_min_sum(v2c, pm, starts):
    mag = np.abs(v2c)
    min1 = np.minimum.reduceat(mag, starts, axis=1)[:, pm.edge_check]
    at_min = mag == min1
    ties = np.add.reduceat(at_min, starts, axis=1)[:, pm.edge_check]
    min2 = np.minimum.reduceat(np.where(at_min, np.inf, mag), starts, axis=1)[:, pm.edge_check]
    min2 = np.where(ties > 1, min1, min2)
    min2 = np.where(np.isinf(min2), 0.0, min2)  # degree-1 checks
    out_mag = np.where(at_min, min2, min1)
    neg = v2c < 0
    parity = np.add.reduceat(neg, starts, axis=1)[:, pm.edge_check] - neg
    return np.where(parity & 1, -out_mag, out_mag)


def decode_bp(llrs, pm: ParityMatrix, max_iter: int = 50, method: str = "sum_product") -> DecodeResult:
    """Flooding belief propagation with early stopping.

    Parameters
    ----------
    llrs : array_like, shape (n,) or (batch, n)
        Channel LLRs, positive favouring bit 1.
    pm : ParityMatrix
    max_iter : int
        Maximum number of message-passing iterations.
    method : {"sum_product", "min_sum"}

    Returns
    -------
    DecodeResult
        Hard decisions, a per-frame convergence flag (all checks satisfied),
        the iterations used (0 when the channel decisions already form a
        codeword) and the posterior LLRs. Single-frame input gives scalar
        flags and 1-D arrays.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if method == "sum_product":
        check_update = _check_update_sum_product
    elif method == "min_sum":
        check_update = _check_update_min_sum
    else:
        raise ValueError(f"unknown decoder method {method!r}")
    llrs = np.asarray(llrs, dtype=float)
    single = llrs.ndim == 1
    llrs = np.atleast_2d(llrs)
    if llrs.shape[-1] != pm.n:
        raise ValueError(f"expected {pm.n} LLRs per frame, got {llrs.shape[-1]}")

    batch = llrs.shape[0]
    # internal messages use the log P(0)/P(1) sign of the textbook tanh rule
    chan = -np.clip(llrs, -LLR_MAX, LLR_MAX)
    posterior = chan.copy()
    bits = (posterior <= 0).astype(np.uint8)
    converged = pm.is_codeword(bits)
    iterations = np.zeros(batch, dtype=np.int64)

    active = np.flatnonzero(~converged)
    v2c = chan[active][:, pm.edge_var]
    cstarts, vorder, vstarts = pm._check_starts, pm._var_order, pm._var_starts
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        c2v = check_update(v2c, pm, cstarts)
        post = chan[active] + np.add.reduceat(c2v[:, vorder], vstarts, axis=1)
        v2c = np.clip(post[:, pm.edge_var] - c2v, -LLR_MAX, LLR_MAX)
        hard = (post <= 0).astype(np.uint8)
        ok = pm.is_codeword(hard)
        posterior[active] = post
        bits[active] = hard
        iterations[active] = it
        converged[active] = ok
        keep = ~ok
        active = active[keep]
        v2c = v2c[keep]

    if single:
        return DecodeResult(bits[0], bool(converged[0]), int(iterations[0]), -posterior[0])
    return DecodeResult(bits, converged, iterations, -posterior)


def make_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random interleaver of length ``n``."""
    return rng.permutation(n)


def interleave(x, perm) -> np.ndarray:
    """Return ``y`` with ``y[..., i] = x[..., perm[i]]``."""
    x = np.asarray(x)
    perm = np.asarray(perm)
    if x.shape[-1] != perm.size:
        raise ValueError(f"length {x.shape[-1]} does not match permutation length {perm.size}")
    return x[..., perm]


def deinterleave(y, perm) -> np.ndarray:
    """Inverse of :func:`interleave`."""
    y = np.asarray(y)
    perm = np.asarray(perm)
    if y.shape[-1] != perm.size:
        raise ValueError(f"length {y.shape[-1]} does not match permutation length {perm.size}")
    x = np.empty_like(y)
    x[..., perm] = y
    return x
