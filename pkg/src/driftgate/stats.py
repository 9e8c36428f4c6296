"""Streaming model of "normal" content.

The model keeps exact running sums over every absorbed embedding vector:
the sample count, the vector sum and the sum of outer products.  Mean and
empirical covariance are recomputed from those sums after any batch, so
updates never need access to individual past samples:

    mean       = vec_sum / count
    emp_cov    = (outer_sum - mean vec_sum^T - vec_sum mean^T
                  + count * mean mean^T) / (count - 1)

The covariance used for scoring is a shrinkage blend of the empirical
covariance with a scaled identity target,

    cov = (1 - alpha) * emp_cov + alpha * (trace(emp_cov) / dim) * I,

which keeps the matrix invertible even while the sample count is below the
embedding dimension.  The blend intensity alpha comes either from a fixed
setting or from the Ledoit-Wolf formula evaluated on a bounded uniform
reservoir of absorbed vectors.  Scoring works against an immutable
``Snapshot`` carrying the mean and a cached Cholesky factor; the factor is
refreshed lazily on the first snapshot request after an update.

All statistics are held in 64-bit floats regardless of the storage format
of incoming embeddings; running sums of squares lose precision quickly in
32-bit at realistic dimensions.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateModelError, FormatError

CHECKPOINT_MAGIC = b"MSNS"
CHECKPOINT_VERSION = 1

DEFAULT_INIT_SAMPLES = 64
DEFAULT_INIT_SIGMA = 1.0
DEFAULT_RESERVOIR_CAPACITY = 1024

_SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class FixedAlpha:
    """Blend intensity held constant across updates."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.value}")


@dataclass(frozen=True)
class LedoitWolf:
    """Recompute the blend intensity from the reservoir on every update."""


AlphaPolicy = Union[FixedAlpha, LedoitWolf]


def ledoit_wolf_alpha(samples: np.ndarray, center: np.ndarray) -> float:
    """Ledoit-Wolf shrinkage intensity for samples centered at ``center``.

    Uses the analytic minimizer of the expected quadratic loss between the
    blended estimator and the true covariance, clamped to [0, 1].  When the
    sample count is below the dimension the Frobenius norms are evaluated
    through the Gram matrix, which avoids forming the d x d covariance.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("samples must be a non-empty 2-D array")
    n, d = x.shape
    x = x - np.asarray(center, dtype=np.float64)
    if n <= d:
        gram = x @ x.T
        trace_s = float(np.trace(gram)) / n
        frob_sq = float((gram * gram).sum()) / (n * n)
    else:
        cov = x.T @ x / n
        trace_s = float(np.trace(cov))
        frob_sq = float((cov * cov).sum())
    mu = trace_s / d
    # ||S - mu I||_F^2 / d, the dispersion of the sample covariance around
    # the identity target.
    delta = frob_sq / d - mu * mu
    if delta <= 0.0:
        return 0.0
    sq_norms = (x * x).sum(axis=1)
    quad = float((sq_norms * sq_norms).sum())
    beta = (quad / n - frob_sq) / (n * d)
    beta = min(beta, delta)
    return float(min(1.0, max(0.0, beta / delta)))


def shrink(
    empirical_cov: np.ndarray,
    policy: AlphaPolicy,
    *,
    samples: np.ndarray | None = None,
    center: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Blend ``empirical_cov`` with its scaled identity target.

    Returns ``(alpha, blended)`` where
    ``blended = (1 - alpha) * cov + alpha * (trace(cov) / d) * I``.
    Under the ``LedoitWolf`` policy the intensity is estimated from
    ``samples`` centered at ``center``.

    Raises ``DegenerateModelError`` if the trace is not positive and
    ``ValueError`` if the matrix is visibly asymmetric.
    """
    cov = np.asarray(empirical_cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("empirical covariance must be square")
    scale = float(np.abs(cov).max()) or 1.0
    if not np.allclose(cov, cov.T, rtol=_SYMMETRY_RTOL, atol=_SYMMETRY_RTOL * scale):
        raise ValueError("empirical covariance is not symmetric within tolerance")
    d = cov.shape[0]
    trace = float(np.trace(cov))
    if trace <= 0.0:
        raise DegenerateModelError(
            f"covariance trace {trace} is not positive; model is degenerate"
        )
    if isinstance(policy, FixedAlpha):
        alpha = policy.value
    elif isinstance(policy, LedoitWolf):
        if samples is None or center is None:
            raise ValueError("LedoitWolf policy needs reservoir samples and a center")
        alpha = ledoit_wolf_alpha(samples, center)
    else:
        raise TypeError(f"unknown alpha policy: {policy!r}")
    blended = (1.0 - alpha) * cov
    blended = (blended + blended.T) / 2.0
    blended[np.diag_indices(d)] += alpha * trace / d
    return alpha, blended


class Reservoir:
    """Bounded uniform sample of absorbed vectors (algorithm R).

    Each offered vector replaces a random slot with probability
    capacity / seen, so the retained set is a uniform sample of everything
    offered so far.  Deterministic for a fixed seed and offer order.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("reservoir capacity must be at least 1")
        self.capacity = int(capacity)
        self._rows: list[np.ndarray] = []
        self._seen = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def seen(self) -> int:
        return self._seen

    def offer(self, row: np.ndarray) -> None:
        self._seen += 1
        if len(self._rows) < self.capacity:
            self._rows.append(np.array(row, dtype=np.float64))
        else:
            slot = int(self._rng.integers(0, self._seen))
            if slot < self.capacity:
                self._rows[slot] = np.array(row, dtype=np.float64)

    def view(self) -> np.ndarray:
        return np.stack(self._rows) if self._rows else np.empty((0, 0))

    def _restore(self, rows: np.ndarray, seen: int) -> None:
        self._rows = [np.array(r, dtype=np.float64) for r in rows]
        self._seen = seen


@dataclass(frozen=True)
class Snapshot:
    """Immutable scoring view of the model at one version.

    ``chol`` is the lower Cholesky factor of the blended covariance.  The
    arrays are read-only, so snapshots are safe to share across threads
    while the model keeps absorbing.
    """

    dim: int
    count: int
    version: int
    alpha: float
    mean: np.ndarray
    chol: np.ndarray

    @classmethod
    def from_moments(
        cls,
        mean: np.ndarray,
        cov: np.ndarray,
        *,
        count: int = 0,
        version: int = 0,
        alpha: float = 0.0,
    ) -> "Snapshot":
        """Build a snapshot directly from a mean and SPD covariance."""
        mean = np.array(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DegenerateModelError(
                f"covariance is not positive definite: {exc}", version=version
            ) from exc
        mean.setflags(write=False)
        chol.setflags(write=False)
        return cls(
            dim=mean.shape[0],
            count=count,
            version=version,
            alpha=alpha,
            mean=mean,
            chol=chol,
        )


class NormalModel:
    """Running sufficient statistics defining normal content.

    Construct via ``init_gaussian`` (synthetic warm start) or
    ``from_samples`` (explicit bootstrap batch); both feed the same
    accumulation path that ``absorb`` uses afterwards, so the streaming
    arithmetic is exact from the first update onwards.

    Single-writer, multi-reader: ``absorb`` mutates the model and bumps the
    version, ``snapshot`` hands out immutable views.  A snapshot request
    after an update triggers the lazy mean/covariance/factor refresh; a
    stale factor is never used for scoring.
    """

    def __init__(
        self,
        dim: int,
        alpha_policy: AlphaPolicy | None = None,
        reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY,
        reservoir_seed: int = 0,
    ):
        if dim < 1:
            raise ValueError("dim must be a positive integer")
        self._dim = int(dim)
        self._count = 0
        self._vec_sum = np.zeros(self._dim, dtype=np.float64)
        self._outer_sum = np.zeros((self._dim, self._dim), dtype=np.float64)
        self._policy = alpha_policy if alpha_policy is not None else LedoitWolf()
        self._reservoir = Reservoir(reservoir_capacity, seed=reservoir_seed)
        self._version = 0
        self._cached: Snapshot | None = None

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def init_gaussian(
        cls,
        dim: int,
        m0: int = DEFAULT_INIT_SAMPLES,
        sigma: float = DEFAULT_INIT_SIGMA,
        seed: int = 0,
        *,
        alpha_policy: AlphaPolicy | None = None,
        reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY,
    ) -> "NormalModel":
        """Warm-start the model with ``m0`` isotropic Gaussian draws.

        The draws are absorbed as a regular batch rather than assigned
        directly, so every later update flows through one code path.
        Deterministic for a fixed seed.
        """
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        draws = np.random.default_rng(seed).standard_normal((int(m0), int(dim)))
        draws *= sigma
        return cls.from_samples(
            draws,
            alpha_policy=alpha_policy,
            reservoir_capacity=reservoir_capacity,
            reservoir_seed=_derived_seed(seed),
        )

    @classmethod
    def from_samples(
        cls,
        samples: np.ndarray,
        *,
        alpha_policy: AlphaPolicy | None = None,
        reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY,
        reservoir_seed: int = 0,
    ) -> "NormalModel":
        """Bootstrap the model from an explicit batch of vectors.

        Needs at least two samples (the covariance denominator is
        count - 1) and a factorizable result; a zero-trace bootstrap is
        rejected as degenerate.
        """
        batch = np.asarray(samples, dtype=np.float64)
        if batch.ndim != 2:
            raise ValueError("samples must be a 2-D array of row vectors")
        if batch.shape[0] < 2:
            raise ValueError(
                "need at least 2 bootstrap samples; the covariance uses count - 1"
            )
        model = cls(
            batch.shape[1],
            alpha_policy=alpha_policy,
            reservoir_capacity=reservoir_capacity,
            reservoir_seed=reservoir_seed,
        )
        model._validate_batch(batch)
        model._accumulate(batch)
        model.snapshot()  # eager: reject degenerate bootstraps immediately
        return model

    # ------------------------------------------------------------------
    # introspection

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def count(self) -> int:
        return self._count

    @property
    def version(self) -> int:
        return self._version

    @property
    def alpha_policy(self) -> AlphaPolicy:
        return self._policy

    @property
    def reservoir(self) -> Reservoir:
        return self._reservoir

    @property
    def vec_sum(self) -> np.ndarray:
        return self._vec_sum.copy()

    @property
    def outer_sum(self) -> np.ndarray:
        return self._outer_sum.copy()

    @property
    def mean(self) -> np.ndarray:
        if self._count == 0:
            raise ValueError("model holds no samples")
        return self._vec_sum / self._count

    def empirical_cov(self) -> np.ndarray:
        """Recompute the empirical covariance from the running sums."""
        if self._count < 2:
            raise ValueError("need at least 2 samples for a covariance")
        m = self._count
        mean = self._vec_sum / m
        cov = self._outer_sum.copy()
        cov -= np.outer(mean, self._vec_sum)
        cov -= np.outer(self._vec_sum, mean)
        cov += m * np.outer(mean, mean)
        cov /= m - 1
        return cov

    # ------------------------------------------------------------------
    # updates

    def absorb(self, batch: Sequence[np.ndarray] | np.ndarray) -> None:
        """Fold a batch of vectors into the running sums.

        Validates the whole batch before touching any state, so a rejected
        batch leaves the model untouched.  Bumps the version and
        invalidates the cached snapshot.
        """
        if self._count < 2:
            raise ValueError("model must be bootstrapped before absorbing")
        arr = np.asarray(batch, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        self._validate_batch(arr)
        self._accumulate(arr)

    def _validate_batch(self, arr: np.ndarray) -> None:
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("batch must contain at least one row vector")
        if arr.shape[1] != self._dim:
            raise ValueError(
                f"dimension mismatch: batch has {arr.shape[1]}, model has {self._dim}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("batch contains non-finite entries")

    def _accumulate(self, arr: np.ndarray) -> None:
        self._vec_sum += arr.sum(axis=0)
        increment = arr.T @ arr
        self._outer_sum += (increment + increment.T) / 2.0
        self._count += arr.shape[0]
        for row in arr:
            self._reservoir.offer(row)
        self._version += 1
        self._cached = None

    # ------------------------------------------------------------------
    # scoring view

    def snapshot(self) -> Snapshot:
        """Return the immutable scoring view for the current version.

        Rebuilds mean, blended covariance and Cholesky factor if an update
        happened since the last request; otherwise returns the cached view.
        """
        if self._cached is not None:
            return self._cached
        emp = self.empirical_cov()
        mean = self.mean
        try:
            alpha, blended = shrink(
                emp,
                self._policy,
                samples=self._reservoir.view(),
                center=mean,
            )
            snap = Snapshot.from_moments(
                mean,
                blended,
                count=self._count,
                version=self._version,
                alpha=alpha,
            )
        except DegenerateModelError as exc:
            raise DegenerateModelError(str(exc), version=self._version) from None
        self._cached = snap
        return snap

    # ------------------------------------------------------------------
    # persistence

    def save(self, path) -> None:
        """Write the checkpoint file.

        Layout, little-endian: magic ``MSNS``, format version u32, dim u32,
        count u64, alpha f64, vector sum as dim f64, lower triangle of the
        outer-product sum as dim*(dim+1)/2 f64, reservoir count u32 and the
        reservoir rows as f64.  The factorization is not persisted; it is
        recomputed on load.
        """
        snap = self.snapshot()
        d = self._dim
        tri = self._outer_sum[np.tril_indices(d)]
        res = self._reservoir.view()
        tmp = os.fspath(path) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(struct.pack("<4sIIQ", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, d, self._count))
            fh.write(struct.pack("<d", snap.alpha))
            fh.write(np.ascontiguousarray(self._vec_sum, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(tri, dtype="<f8").tobytes())
            fh.write(struct.pack("<I", len(res)))
            if len(res):
                fh.write(np.ascontiguousarray(res, dtype="<f8").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(
        cls,
        path,
        *,
        alpha_policy: AlphaPolicy | None = None,
        reservoir_capacity: int | None = None,
        reservoir_seed: int = 0,
    ) -> "NormalModel":
        """Reconstruct a model from a checkpoint file.

        The version counter restarts at zero.  The reservoir sampler is
        reseeded with ``reservoir_seed`` because generator state is not part
        of the format; the retained rows themselves round-trip exactly.
        """
        with open(path, "rb") as fh:
            data = fh.read()
        header = struct.calcsize("<4sIIQ")
        if len(data) < header:
            raise FormatError("truncated", f"checkpoint shorter than header at byte {len(data)}")
        magic, fmt_version, dim, count = struct.unpack_from("<4sIIQ", data, 0)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError("magic", f"bad checkpoint magic {magic!r}")
        if fmt_version != CHECKPOINT_VERSION:
            raise FormatError("version", f"unsupported checkpoint version {fmt_version}")
        offset = header
        tri_len = dim * (dim + 1) // 2
        need = offset + 8 + dim * 8 + tri_len * 8 + 4
        if len(data) < need:
            raise FormatError("truncated", f"checkpoint truncated at byte {len(data)}, need {need}")
        (alpha,) = struct.unpack_from("<d", data, offset)
        offset += 8
        vec_sum = np.frombuffer(data, dtype="<f8", count=dim, offset=offset).copy()
        offset += dim * 8
        tri = np.frombuffer(data, dtype="<f8", count=tri_len, offset=offset)
        offset += tri_len * 8
        (res_count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        expected = offset + res_count * dim * 8
        if len(data) < expected:
            raise FormatError(
                "truncated", f"checkpoint truncated at byte {len(data)}, need {expected}"
            )
        res_rows = np.frombuffer(data, dtype="<f8", count=res_count * dim, offset=offset)
        res_rows = res_rows.reshape(res_count, dim).copy()

        if alpha_policy is None:
            alpha_policy = LedoitWolf()
        capacity = reservoir_capacity
        if capacity is None:
            capacity = max(DEFAULT_RESERVOIR_CAPACITY, res_count)
        model = cls(
            dim,
            alpha_policy=alpha_policy,
            reservoir_capacity=capacity,
            reservoir_seed=reservoir_seed,
        )
        outer = np.zeros((dim, dim), dtype=np.float64)
        outer[np.tril_indices(dim)] = tri
        lower_strict = np.tril(outer, -1)
        model._outer_sum = outer + lower_strict.T
        model._vec_sum = vec_sum
        model._count = int(count)
        # every absorbed vector was offered to the reservoir exactly once
        model._reservoir._restore(res_rows, seen=int(count))
        return model


def _derived_seed(seed: int) -> int:
    """Decorrelate the reservoir sampler from the init draws."""
    return int(np.random.SeedSequence(seed).spawn(1)[0].generate_state(1)[0])
