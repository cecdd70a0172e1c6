"""Exact uniform sampling on Lorentz balls B_{q,1}^n.

For X uniform on B_{q,1}^n,

    X_i = eps_i * S_{pi(i)} / T,   S_k = sum_{j=k}^n E_j / kappa_q(j),
    T = E_1 + ... + E_{n+1},

with i.i.d. standard exponentials E, uniform signs eps and a uniform
permutation pi, all independent. The suffix sums S_k are the image of a
uniform point of the simplex under the vertex matrix of the Weyl chamber
piece of the ball, so one row costs O(n).

Per row block the stream is consumed in a fixed order: signs, then the
permutation, then the exponentials.
"""

from __future__ import annotations

import enum
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import BallParams, Normalization, QLike, as_q, kappa, lorentz_norm
from .rng import RngStreamSpec, block_layout, exponentials, ordered_map

REJECTION_MAX_DIM = 12
BINARY_MAGIC = b"LORB1"


class SamplerError(ValueError):
    """Raised for requests the sampler cannot honor (p != 1, n too large)."""


class Generator(enum.Enum):
    EXACT = "exact"
    WEYL = "weyl_chamber"
    REJECTION = "rejection_oracle"


@dataclass
class SampleBatch:
    params: BallParams
    data: np.ndarray
    rng: RngStreamSpec
    generator: Generator
    acceptance_rate: float | None = None
    trials: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def scale(self) -> float:
        return self.params.scale

    def header(self) -> dict:
        h = {
            "params": self.params.to_dict(),
            "count": self.count,
            "rng": self.rng.to_dict(),
            "generator": self.generator.value,
        }
        if self.acceptance_rate is not None:
            h["acceptance_rate"] = self.acceptance_rate
            h["trials"] = self.trials
        if self.meta:
            h["meta"] = self.meta
        return h


def _require_p1(params: BallParams) -> None:
    if params.p != 1.0:
        raise SamplerError(
            f"no exact sampler for p={params.p}; only the p = 1 balls are supported"
        )


def _inverse_kappa(q, n: int) -> np.ndarray:
    return 1.0 / kappa(q, n).values


def _suffix_sums(weighted: np.ndarray) -> np.ndarray:
    return np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1]


# ---------------------------------------------------------------------------
# block kernels
# ---------------------------------------------------------------------------

def _exact_block(params: BallParams, rng: RngStreamSpec, inv_kappa, scale, task) -> np.ndarray:
    block, _, rows = task
    n = params.n
    g = rng.generator(block)
    signs = 2.0 * g.integers(0, 2, size=(rows, n)) - 1.0
    perm = g.permuted(np.tile(np.arange(n), (rows, 1)), axis=1)
    e = exponentials(g, (rows, n + 1))
    suffix = _suffix_sums(e[:, :n] * inv_kappa)
    total = e.sum(axis=1, keepdims=True)
    out = np.take_along_axis(suffix, perm, axis=1)
    out *= signs
    out *= scale / total
    return out


def _weyl_block(params: BallParams, rng: RngStreamSpec, inv_kappa, scale, task) -> np.ndarray:
    block, _, rows = task
    n = params.n
    e = exponentials(rng.generator(block), (rows, n + 1))
    suffix = _suffix_sums(e[:, :n] * inv_kappa)
    suffix *= scale / e.sum(axis=1, keepdims=True)
    return suffix


def _blocks(kernel, params, count, rng, workers) -> Iterator[np.ndarray]:
    if count < 1:
        raise ValueError("count must be >= 1")
    _require_p1(params)
    inv_k = _inverse_kappa(params.q, params.n)
    scale = params.scale
    layout = block_layout(count, params.n + 1)
    return ordered_map(lambda t: kernel(params, rng, inv_k, scale, t), layout, workers)


def iter_exact_blocks(params: BallParams, count: int, rng: RngStreamSpec = RngStreamSpec(),
                      workers: int | None = None) -> Iterator[np.ndarray]:
    """Row blocks of ``sample_exact``; concatenated they equal the batch."""
    return _blocks(_exact_block, params, count, rng, workers)


def iter_weyl_blocks(params: BallParams, count: int, rng: RngStreamSpec = RngStreamSpec(),
                     workers: int | None = None) -> Iterator[np.ndarray]:
    return _blocks(_weyl_block, params, count, rng, workers)


def sample_exact(params: BallParams, count: int, rng: RngStreamSpec = RngStreamSpec(),
                 workers: int | None = None) -> SampleBatch:
    """``count`` i.i.d. uniform points of ``params.scale * B_{q,1}^n``."""
    data = np.concatenate(list(iter_exact_blocks(params, count, rng, workers)), axis=0)
    return SampleBatch(params, data, rng, Generator.EXACT)


def sample_weyl_chamber(params: BallParams, count: int, rng: RngStreamSpec = RngStreamSpec(),
                        workers: int | None = None) -> SampleBatch:
    """Ordered representatives: rows are non-increasing and non-negative.

    Row k has the law of the decreasing rearrangement of |X| for X uniform
    on the ball, so every symmetric statistic (norms, order statistics) can
    be computed from these rows without drawing signs or permutations.
    """
    data = np.concatenate(list(iter_weyl_blocks(params, count, rng, workers)), axis=0)
    return SampleBatch(params, data, rng, Generator.WEYL)


def draw_exponentials(n: int, count: int, rng: RngStreamSpec = RngStreamSpec()) -> np.ndarray:
    """The raw (count, n+1) exponentials behind ``sample_weyl_chamber``."""
    layout = block_layout(count, n + 1)
    return np.concatenate([exponentials(rng.generator(b), (rows, n + 1)) for b, _, rows in layout])


# ---------------------------------------------------------------------------
# rejection oracle
# ---------------------------------------------------------------------------

def _rejection_chunk(q, n: int, rng: RngStreamSpec, block: int, chunk: int):
    pts = 2.0 * rng.generator(block).random((chunk, n)) - 1.0
    # the largest coordinate carries weight kappa_q(1) = 1, so B_{q,1}^n lies in the cube
    return pts[lorentz_norm(pts, q) <= 1.0]


def _check_oracle(params: BallParams) -> None:
    _require_p1(params)
    if params.n > REJECTION_MAX_DIM:
        raise SamplerError(
            f"rejection oracle limited to n <= {REJECTION_MAX_DIM}, got n={params.n}"
        )


def sample_rejection_oracle(params: BallParams, count: int,
                            rng: RngStreamSpec = RngStreamSpec()) -> SampleBatch:
    """Uniform points of [-1,1]^n kept when their Lorentz norm is at most 1."""
    _check_oracle(params)
    if count < 1:
        raise ValueError("count must be >= 1")
    n = params.n
    chunk = max(1024, (1 << 16) // n)
    kept, accepted, trials, block = [], 0, 0, 0
    while accepted < count:
        pts = _rejection_chunk(params.q, n, rng, block, chunk)
        kept.append(pts)
        accepted += len(pts)
        trials += chunk
        block += 1
    data = np.concatenate(kept)[:count] * params.scale
    return SampleBatch(params, data, rng, Generator.REJECTION,
                       acceptance_rate=accepted / trials, trials=trials)


def rejection_acceptance_rate(q: QLike, n: int, trials: int,
                              rng: RngStreamSpec = RngStreamSpec()) -> float:
    """Fraction of ``trials`` uniform cube points that land in B_{q,1}^n."""
    params = BallParams(q, n)
    _check_oracle(params)
    chunk = 1 << 16
    hits, done, block = 0, 0, 0
    while done < trials:
        m = min(chunk, trials - done)
        hits += len(_rejection_chunk(params.q, n, rng, block, m))
        done += m
        block += 1
    return hits / trials


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def vertex_matrix(q: QLike, n: int) -> np.ndarray:
    """Upper-triangular M with column j equal to kappa_q(j)^{-1} (e_1 + ... + e_j).

    The extreme points of B_{q,1}^n intersected with the Weyl chamber are
    0 and the columns of M.
    """
    inv_k = _inverse_kappa(as_q(q), n)
    return np.triu(np.broadcast_to(inv_k, (n, n)))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_csv(batch: SampleBatch, path) -> None:
    """One row per sample, preceded by a ``#`` metadata line and a column header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(batch.header(), sort_keys=True) + "\n")
        fh.write(",".join(f"x{i + 1}" for i in range(batch.params.n)) + "\n")
        np.savetxt(fh, batch.data, delimiter=",", fmt="%.17g")


def read_csv(path) -> tuple[dict, np.ndarray]:
    with Path(path).open() as fh:
        meta = json.loads(fh.readline()[1:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, data


def to_binary(batch: SampleBatch) -> bytes:
    """``LORB1`` | u64 rows | u64 cols | u32 meta length | JSON meta | f8 row-major data."""
    meta = json.dumps(batch.header(), sort_keys=True).encode()
    rows, cols = batch.data.shape
    buf = io.BytesIO()
    buf.write(BINARY_MAGIC)
    buf.write(struct.pack("<QQI", rows, cols, len(meta)))
    buf.write(meta)
    buf.write(np.ascontiguousarray(batch.data, dtype="<f8").tobytes())
    return buf.getvalue()


def from_binary(raw: bytes) -> tuple[dict, np.ndarray]:
    if raw[:5] != BINARY_MAGIC:
        raise ValueError("not a LORB1 batch file")
    rows, cols, mlen = struct.unpack_from("<QQI", raw, 5)
    off = 5 + struct.calcsize("<QQI")
    meta = json.loads(raw[off:off + mlen])
    data = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=off + mlen)
    return meta, data.reshape(rows, cols).copy()


def unit_norms(batch: SampleBatch) -> np.ndarray:
    """Lorentz norms of the rows after undoing the normalization scale."""
    return lorentz_norm(batch.data / batch.scale, batch.params.q)


def expected_acceptance_rate(q: QLike, n: int) -> float:
    """vol(B_{q,1}^n) / 2^n = prod_j kappa_q(j)^{-1}."""
    return math.exp(-math.fsum(np.log(kappa(q, n).values)))


def _max_norm_block(params: BallParams, rng: RngStreamSpec, inv_kappa, scale, task) -> np.ndarray:
    block, _, rows = task
    n = params.n
    e = exponentials(rng.generator(block), (rows, n + 1))
    return scale * (e[:, :n] @ inv_kappa) / e.sum(axis=1)


def sample_max_norm(params: BallParams, count: int, rng: RngStreamSpec = RngStreamSpec(),
                    workers: int | None = None) -> np.ndarray:
    """||X||_inf for ``count`` uniform points, i.e. column 0 of ``sample_weyl_chamber``.

    Uses the same stream layout, skipping the suffix sums (S_1 is a dot
    product), so values agree with the Weyl batch up to summation order.
    """
    return np.concatenate(list(_blocks(_max_norm_block, params, count, rng, workers)))
