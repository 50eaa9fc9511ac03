"""LDPC codes: alist I/O, PEG construction, systematic encoding and SPA decoding.

LLRs follow the package convention: a positive LLR favours bit 1.
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Literal

import galois
import numpy as np
import scipy.sparse

from .exceptions import AlistError


logger = logging.getLogger(__name__)

GF2 = galois.GF(2)
TANH_CLIP = 1.0 - 1e-12
DEFAULT_LENGTH = 480
DEFAULT_CHECKS = 240

Schedule = Literal["layered", "flooding"]


class LdpcCode:
    """Binary LDPC code given by its parity-check matrix H (M x N)."""

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=np.int8) % 2
        if h.ndim != 2 or h.size == 0:
            msg = f"parity-check matrix must be a non-empty 2-D array, got {h.shape}"
            raise AlistError(msg)
        self.num_checks, self.num_bits = h.shape
        self.h = scipy.sparse.csr_array(h)

        rows, cols = np.nonzero(h)
        self.check_vars = [cols[rows == i] for i in range(self.num_checks)]
        self.var_checks = [rows[cols == j] for j in range(self.num_bits)]
        self.check_degrees = np.array([len(v) for v in self.check_vars])
        self.var_degrees = np.array([len(c) for c in self.var_checks])

        self._build_encoder(h)
        self._build_decoder()

    def _build_encoder(self, h: np.ndarray) -> None:
        reduced = np.array(GF2(h).row_reduce(), dtype=np.int8)
        nonzero = np.flatnonzero(reduced.any(axis=1))
        self.rank = len(nonzero)
        self.pivots = np.argmax(reduced[nonzero], axis=1)
        self.info_cols = np.setdiff1d(np.arange(self.num_bits), self.pivots)
        # c[pivot_i] = sum_j R[i, info_j] u_j over GF(2)
        self._parity_map = reduced[nonzero][:, self.info_cols]
        if self.rank < self.num_checks:
            logger.debug(
                f"H has {self.num_checks - self.rank} redundant checks, "
                f"K={self.num_info}"
            )

    def _build_decoder(self) -> None:
        width = int(self.check_degrees.max())
        self._row_vars = np.zeros((self.num_checks, width), dtype=np.intp)
        self._row_mask = np.zeros((self.num_checks, width), dtype=bool)
        for i, variables in enumerate(self.check_vars):
            self._row_vars[i, : len(variables)] = variables
            self._row_mask[i, : len(variables)] = True

        # Greedy grouping of checks into layers with disjoint variable sets.
        layers: list[list[int]] = []
        used: list[np.ndarray] = []
        for i, variables in enumerate(self.check_vars):
            for layer, taken in zip(layers, used, strict=True):
                if not taken[variables].any():
                    layer.append(i)
                    taken[variables] = True
                    break
            else:
                taken = np.zeros(self.num_bits, dtype=bool)
                taken[variables] = True
                layers.append([i])
                used.append(taken)
        self.layers = [np.array(layer, dtype=np.intp) for layer in layers]

        edge_vars = self._row_vars[self._row_mask]
        self._edge_to_var = scipy.sparse.csr_array(
            (np.ones(len(edge_vars)), (np.arange(len(edge_vars)), edge_vars)),
            shape=(len(edge_vars), self.num_bits),
        )

    @property
    def num_info(self) -> int:
        return self.num_bits - self.rank

    @property
    def rate(self) -> float:
        return self.num_info / self.num_bits

    def syndrome(self, words: np.ndarray) -> np.ndarray:
        """H c mod 2 for a word (N,) or a batch (..., N)."""
        words = np.asarray(words, dtype=np.int64)
        return np.asarray(self.h @ words.reshape(-1, self.num_bits).T).T.reshape(
            *words.shape[:-1], self.num_checks
        ) % 2

    def to_dense(self) -> np.ndarray:
        return self.h.toarray().astype(np.int8)


def _parse_ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(token) for token in line.split()]
    except ValueError as e:
        msg = f"alist line {lineno}: non-integer entry in {line!r}"
        raise AlistError(msg) from e


def _read_adjacency(
    lines: list[list[int]],
    degrees: list[int],
    max_degree: int,
    bound: int,
    what: str,
) -> list[list[int]]:
    lists = []
    for k, (entries, degree) in enumerate(zip(lines, degrees, strict=True)):
        declared, padding = entries[:degree], entries[degree:]
        if len(declared) < degree:
            msg = f"{what} {k + 1}: declares degree {degree}, lists {len(declared)}"
            raise AlistError(msg)
        if len(entries) > max_degree or any(padding):
            msg = f"{what} {k + 1}: more entries than degree {degree}"
            raise AlistError(msg)
        if any(idx < 1 or idx > bound for idx in declared):
            msg = f"{what} {k + 1}: index outside 1..{bound} (alist is 1-based)"
            raise AlistError(msg)
        if len(set(declared)) != degree:
            msg = f"{what} {k + 1}: repeated index"
            raise AlistError(msg)
        lists.append([idx - 1 for idx in declared])
    return lists


def parse_alist(text: str) -> LdpcCode:
    """Parse the alist format (N M / max degrees / degrees / 1-based adjacency)."""
    raw = [line for line in text.splitlines() if line.strip()]
    lines = [_parse_ints(line, i + 1) for i, line in enumerate(raw)]
    if len(lines) < 4 or len(lines[0]) != 2 or len(lines[1]) != 2:
        msg = "alist header must be 'N M' followed by 'max_col_deg max_row_deg'"
        raise AlistError(msg)

    (num_bits, num_checks), (max_col, max_row) = lines[0], lines[1]
    if num_bits < 1 or num_checks < 1:
        msg = f"alist dimensions must be positive, got N={num_bits} M={num_checks}"
        raise AlistError(msg)
    col_degrees, row_degrees = lines[2], lines[3]
    if len(col_degrees) != num_bits or len(row_degrees) != num_checks:
        msg = (
            f"alist degree lists have {len(col_degrees)}/{len(row_degrees)} entries, "
            f"expected {num_bits}/{num_checks}"
        )
        raise AlistError(msg)
    if max(col_degrees) > max_col or max(row_degrees) > max_row:
        msg = "alist degree exceeds the declared maximum"
        raise AlistError(msg)
    if len(lines) != 4 + num_bits + num_checks:
        msg = f"alist has {len(lines)} lines, expected {4 + num_bits + num_checks}"
        raise AlistError(msg)

    col_lists = _read_adjacency(
        lines[4 : 4 + num_bits], col_degrees, max_col, num_checks, "column"
    )
    row_lists = _read_adjacency(
        lines[4 + num_bits :], row_degrees, max_row, num_bits, "row"
    )

    h = np.zeros((num_checks, num_bits), dtype=np.int8)
    for j, checks in enumerate(col_lists):
        h[checks, j] = 1
    from_rows = np.zeros_like(h)
    for i, variables in enumerate(row_lists):
        from_rows[i, variables] = 1
    if not np.array_equal(h, from_rows):
        msg = "alist column and row adjacency lists disagree"
        raise AlistError(msg)
    return LdpcCode(h)


def serialize_alist(code: LdpcCode) -> str:
    """Inverse of `parse_alist`; adjacency lists are zero-padded to the max degree."""
    max_col = int(code.var_degrees.max())
    max_row = int(code.check_degrees.max())

    def padded(indices: np.ndarray, width: int) -> str:
        values = [int(i) + 1 for i in indices] + [0] * (width - len(indices))
        return " ".join(map(str, values))

    out = [
        f"{code.num_bits} {code.num_checks}",
        f"{max_col} {max_row}",
        " ".join(map(str, code.var_degrees)),
        " ".join(map(str, code.check_degrees)),
    ]
    out += [padded(checks, max_col) for checks in code.var_checks]
    out += [padded(variables, max_row) for variables in code.check_vars]
    return "\n".join(out) + "\n"


def encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic encoding of (..., K) info bits into (..., N) codewords."""
    info_bits = np.asarray(info_bits, dtype=np.int64)
    if info_bits.shape[-1] != code.num_info:
        msg = f"expected {code.num_info} info bits, got {info_bits.shape[-1]}"
        raise ValueError(msg)
    codeword = np.zeros((*info_bits.shape[:-1], code.num_bits), dtype=np.int8)
    codeword[..., code.info_cols] = info_bits
    codeword[..., code.pivots] = (info_bits @ code._parity_map.T.astype(np.int64)) % 2
    return codeword


def _check_update(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Tanh-rule extrinsic check-to-variable messages for padded rows (..., R, dc)."""
    t = np.where(mask, np.tanh(q / 2.0), 1.0)
    out = np.empty_like(q)
    for port in range(q.shape[-1]):
        others = np.prod(np.delete(t, port, axis=-1), axis=-1)
        out[..., port] = 2.0 * np.arctanh(np.clip(others, -TANH_CLIP, TANH_CLIP))
    return np.where(mask, out, 0.0)


def decode_codeword(
    code: LdpcCode,
    llr: np.ndarray,
    iters: int = 10,
    schedule: Schedule = "layered",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sum-product decoding of one word (N,) or a batch (W, N) of channel LLRs.

    Returns hard codewords, success flags and the iterations used. A word
    succeeds once every check is satisfied and no posterior LLR is zero; its
    decisions are frozen at that iteration.
    """
    llr = np.asarray(llr, dtype=float)
    single = llr.ndim == 1
    # Internally L = log P(0)/P(1).
    channel = -np.atleast_2d(llr)
    if channel.shape[-1] != code.num_bits:
        msg = f"expected {code.num_bits} LLRs per word, got {channel.shape[-1]}"
        raise ValueError(msg)

    num_words = channel.shape[0]
    posterior = channel.copy()
    messages = np.zeros((num_words, *code._row_vars.shape))
    decided = np.zeros((num_words, code.num_bits), dtype=np.int8)
    success = np.zeros(num_words, dtype=bool)
    used = np.full(num_words, iters, dtype=np.int64)

    for it in range(1, iters + 1):
        if schedule == "layered":
            for rows in code.layers:
                variables = code._row_vars[rows]
                mask = code._row_mask[rows]
                q = posterior[:, variables] - messages[:, rows]
                fresh = _check_update(q, mask)
                posterior[:, variables[mask]] = (q + fresh)[:, mask]
                messages[:, rows] = fresh
        elif schedule == "flooding":
            q = posterior[:, code._row_vars] - messages
            messages = _check_update(q, code._row_mask)
            gathered = code._edge_to_var.T @ messages[:, code._row_mask].T
            posterior = channel + gathered.T
        else:
            msg = f"unknown decoding schedule {schedule!r}"
            raise ValueError(msg)

        hard = (posterior < 0).astype(np.int8)
        satisfied = ~code.syndrome(hard).any(axis=-1) & (posterior != 0).all(axis=-1)
        newly = satisfied & ~success
        decided[newly] = hard[newly]
        used[newly] = it
        success |= satisfied
        if success.all():
            break

    pending = ~success
    decided[pending] = (posterior[pending] < 0).astype(np.int8)
    if single:
        return decided[0], success[0], used[0]
    return decided, success, used


def decode(
    code: LdpcCode,
    llr: np.ndarray,
    iters: int = 10,
    schedule: Schedule = "layered",
) -> tuple[np.ndarray, np.ndarray]:
    """Decode and return the systematic info bits with the success flags."""
    codeword, success, _ = decode_codeword(code, llr, iters, schedule)
    return codeword[..., code.info_cols], success


def _farthest_checks(
    var: int, var_nbrs: list[list[int]], chk_nbrs: list[list[int]], num_checks: int
) -> np.ndarray:
    """Checks unreachable from `var`, or else those reached last by the BFS."""
    reached = np.zeros(num_checks, dtype=bool)
    reached[var_nbrs[var]] = True
    frontier = set(var_nbrs[var])
    while True:
        fresh = {
            c2
            for c in frontier
            for v in chk_nbrs[c]
            if v != var
            for c2 in var_nbrs[v]
            if not reached[c2]
        }
        if not fresh or reached.sum() + len(fresh) == num_checks:
            candidates = np.flatnonzero(~reached)
            return candidates if len(candidates) else np.flatnonzero(
                ~np.isin(np.arange(num_checks), var_nbrs[var])
            )
        reached[sorted(fresh)] = True
        frontier = fresh


def make_peg_code(
    n: int, m: int, var_degree: int = 3, seed: int = 0
) -> LdpcCode:
    """Progressive edge growth: each edge goes to the farthest lowest-degree check."""
    if not 1 <= var_degree <= m or m >= n:
        msg = f"cannot build a PEG code with n={n}, m={m}, var_degree={var_degree}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    check_degree = np.zeros(m, dtype=np.int64)
    var_nbrs: list[list[int]] = [[] for _ in range(n)]
    chk_nbrs: list[list[int]] = [[] for _ in range(m)]

    for j in range(n):
        for k in range(var_degree):
            if k == 0:
                candidates = np.arange(m)
            else:
                candidates = _farthest_checks(j, var_nbrs, chk_nbrs, m)
            degrees = check_degree[candidates]
            lightest = candidates[degrees == degrees.min()]
            c = int(rng.choice(lightest))
            var_nbrs[j].append(c)
            chk_nbrs[c].append(j)
            check_degree[c] += 1

    h = np.zeros((m, n), dtype=np.int8)
    for j, checks in enumerate(var_nbrs):
        h[checks, j] = 1
    code = LdpcCode(h)
    logger.info(f"Built PEG code N={n} M={m} K={code.num_info} (rate {code.rate:.3f})")
    return code


@lru_cache
def default_code() -> LdpcCode:
    """The built-in rate-1/2, N=480 code."""
    return make_peg_code(DEFAULT_LENGTH, DEFAULT_CHECKS)


def load_code(path: Path | None) -> LdpcCode:
    """Read an alist file, or return the built-in code when no path is given."""
    if path is None:
        return default_code()
    try:
        text = Path(path).read_text()
    except OSError as e:
        msg = f"cannot read alist file {path}: {e}"
        raise AlistError(msg) from e
    return parse_alist(text)
