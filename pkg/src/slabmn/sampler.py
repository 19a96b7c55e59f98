"""Training-data generation by uniform sampling of reduced multipliers.

Candidates beta are drawn uniformly from the ball of radius M and kept
only while the smallest eigenvalue of the reduced dual Hessian exceeds
the tolerance tau (so every accepted point is well conditioned).  Each
accepted multiplier is turned into a training triple

    (h, u_bar, alpha) with  alpha = [vartheta(beta), beta],
                            u_bar = <m exp(alpha . m)> + gamma [0, beta],
                            h     = alpha . u_bar - <exp(alpha . m)>
                                    - (gamma/2) |alpha_#|^2,

i.e. the reduced entropy value at exactly the normalized moment that
beta reconstructs.  Sampling is driven by a single seeded generator
that is consumed in fixed-size chunks, so a seed pins the full stream.
"""

import json
from dataclasses import dataclass

import numpy as np

from .entropy_core import EXPONENT_LIMIT, ExponentOverflowError
from .moment_basis import basis_matrix
from .quadrature import DEFAULT_ORDER, build_rule

__all__ = [
    "SamplerConfig",
    "TrainingSample",
    "SampleSet",
    "SamplingConfigError",
    "DatasetFormatError",
    "sample_ball",
    "generate",
    "write_dataset",
    "read_dataset",
]

_CHUNK = 4096
_MAX_CONSECUTIVE_REJECTIONS = 1_000_000


class SamplingConfigError(ValueError):
    """Sampler parameters are inconsistent (e.g. tau rejects everything)."""


class DatasetFormatError(ValueError):
    """A dataset file does not match the expected layout."""


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters of the admissible multiplier set and the draw count."""

    order: int
    gamma: float
    norm_bound: float
    tau: float
    count: int
    seed: int
    quad_order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.order < 1:
            raise SamplingConfigError("order must be >= 1")
        if self.norm_bound <= 0:
            raise SamplingConfigError("norm_bound must be positive")
        if self.tau <= 0:
            raise SamplingConfigError("tau must be positive")
        if self.count < 1:
            raise SamplingConfigError("count must be >= 1")
        if self.gamma < 0:
            raise SamplingConfigError("gamma must be >= 0")

    def metadata(self) -> dict:
        return {
            "order": self.order,
            "gamma": self.gamma,
            "norm_bound": self.norm_bound,
            "tau": self.tau,
            "count": self.count,
            "seed": self.seed,
            "quad_order": self.quad_order,
        }


@dataclass(frozen=True)
class TrainingSample:
    """One emitted triple: reduced entropy value, normalized moment, multiplier."""

    h: float
    u_bar: np.ndarray
    alpha: np.ndarray


@dataclass
class SampleSet:
    """Column-wise view of an emitted dataset plus acceptance accounting."""

    config: SamplerConfig
    h: np.ndarray        # (T,)
    u_bar: np.ndarray    # (T, N+1), first column is 1
    alpha: np.ndarray    # (T, N+1)
    draws: int = 0
    rejections: int = 0
    guard_trips: int = 0

    @property
    def beta(self) -> np.ndarray:
        return self.alpha[:, 1:]

    @property
    def w(self) -> np.ndarray:
        """Fruncated normalized moments, the surrogate inputs."""
        return self.u_bar[:, 1:]

    def __len__(self):
        return self.h.size

    def samples(self):
        for i in range(len(self)):
            yield TrainingSample(float(self.h[i]), self.u_bar[i].copy(), self.alpha[i].copy())

    def acceptance_rate(self) -> float:
        return len(self) / self.draws if self.draws else 0.0


def sample_ball(dim: int, bound: float, rng) -> np.ndarray:
    """One point uniform over the open Euclidean ball of radius `bound`.

    Direction from a normalized Gaussian, radius bound * U^(1/dim).
    """
    if bound <= 0:
        raise ValueError("ball radius must be positive")
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
    radius = bound * rng.uniform() ** (1.0 / dim)
    return direction * (radius / norm)


def _ball_chunk(dim, bound, rng, size):
    """`size` ball points drawn as one block (Gaussians first, then radii)."""
    directions = rng.standard_normal((size, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = bound * rng.uniform(size=size) ** (1.0 / dim)
    return directions / norms * radii[:, None]


def generate(config: SamplerConfig, rng=None) -> SampleSet:
    """Emit exactly `config.count` accepted samples.

    Rejection statistics are part of the result: acceptance rates of
    the published (M, tau) choices were tuned for another basis and
    must stay visible.  A run that rejects 1e6 candidates in a row
    aborts with a configuration error.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.order
    rule = build_rule(config.quad_order)
    ms = basis_matrix(n, rule.nodes)[1:]   # (N, Q)
    wq = rule.weights

    accepted_beta = []
    draws = 0
    rejections = 0
    guard_trips = 0
    consecutive = 0
    remaining = config.count
    while remaining > 0:
        chunk = _ball_chunk(n, config.norm_bound, rng, _CHUNK)

        exponents = chunk @ ms
        over = np.max(exponents, axis=1) > EXPONENT_LIMIT
        guard_trips += int(np.count_nonzero(over))
        e = np.exp(np.where(over[:, None], 0.0, exponents)) * wq
        z = e.sum(axis=1)
        mean = (e @ ms.T) / z[:, None]
        second = np.einsum("bq,jq,kq->bjk", e, ms, ms) / z[:, None, None]
        cov = second - np.einsum("bj,bk->bjk", mean, mean)
        lam_min = np.linalg.eigvalsh(cov)[:, 0] + config.gamma

        keep = (lam_min > config.tau) & ~over
        keep_idx = np.flatnonzero(keep)
        if keep_idx.size == 0:
            draws += _CHUNK
            rejections += _CHUNK
            consecutive += _CHUNK
            if consecutive >= _MAX_CONSECUTIVE_REJECTIONS:
                raise SamplingConfigError(
                    f"{consecutive} consecutive rejections; tau={config.tau} is "
                    f"unreachable inside the ball of radius {config.norm_bound}"
                )
            continue
        consecutive = 0
        n_take = min(remaining, keep_idx.size)
        # count only candidates examined up to the last accepted one
        examined = _CHUNK if n_take == keep_idx.size else int(keep_idx[n_take - 1]) + 1
        draws += examined
        rejections += examined - n_take
        accepted_beta.append(chunk[keep_idx[:n_take]])
        remaining -= n_take

    beta = np.concatenate(accepted_beta, axis=0)
    h, u_bar, alpha = _assemble_triples(beta, config.gamma, ms, wq, n)
    return SampleSet(
        config=config,
        h=h,
        u_bar=u_bar,
        alpha=alpha,
        draws=draws,
        rejections=rejections,
        guard_trips=guard_trips,
    )


def _assemble_triples(beta, gamma, ms, wq, n):
    """Multiplier, reconstructed moment, and entropy rows for accepted betas."""
    exponents = beta @ ms
    top = np.max(exponents)
    if top > EXPONENT_LIMIT:
        raise ExponentOverflowError(top)
    z = (np.exp(exponents) * wq).sum(axis=1)
    theta = -np.log(z)
    alpha = np.concatenate([theta[:, None], beta], axis=1)

    lifted = np.exp(exponents + theta[:, None]) * wq   # exp(alpha . m) weights
    moments = lifted @ np.vstack([np.ones(ms.shape[1]), ms]).T   # (B, N+1)
    u_bar = moments.copy()
    u_bar[:, 1:] += gamma * beta

    h = (
        np.einsum("ij,ij->i", alpha, u_bar)
        - lifted.sum(axis=1)
        - 0.5 * gamma * np.einsum("ij,ij->i", beta, beta)
    )
    # the quadrature value of <exp(alpha.m)> is 1 up to roundoff by the
    # construction of vartheta; store the exact normalization
    u_bar[:, 0] = 1.0
    return h, u_bar, alpha


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

def _dataset_header(order):
    cols = ["h"]
    cols += [f"u_{k}" for k in range(1, order + 1)]
    cols += [f"alpha_{k}" for k in range(order + 1)]
    return ",".join(cols)


def _sidecar_path(path):
    return str(path) + ".meta.json"


def write_dataset(samples: SampleSet, path) -> None:
    """Write the comma-separated table plus the JSON metadata sidecar.

    Every float is printed with 17 significant digits so a read-back
    reproduces the doubles bit for bit.
    """
    order = samples.config.order
    rows = np.concatenate([samples.h[:, None], samples.u_bar[:, 1:], samples.alpha], axis=1)
    with open(path, "w") as fh:
        fh.write(_dataset_header(order) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    from . import __version__

    meta = samples.config.metadata()
    meta["draws"] = samples.draws
    meta["rejections"] = samples.rejections
    meta["guard_trips"] = samples.guard_trips
    meta["substreams"] = 1
    meta["slabmn_version"] = __version__
    with open(_sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(path, expected: SamplerConfig | None = None) -> SampleSet:
    """Read a dataset and its sidecar back into a SampleSet.

    Raises DatasetFormatError with a line number for malformed content,
    for an empty table, and on any mismatch between the sidecar and an
    expected configuration.
    """
    try:
        with open(_sidecar_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DatasetFormatError(f"missing metadata sidecar for {path}")
    except json.JSONDecodeError as err:
        raise DatasetFormatError(f"unreadable metadata sidecar for {path}: {err}")

    config = SamplerConfig(
        order=int(meta["order"]),
        gamma=float(meta["gamma"]),
        norm_bound=float(meta["norm_bound"]),
        tau=float(meta["tau"]),
        count=int(meta["count"]),
        seed=int(meta["seed"]),
        quad_order=int(meta.get("quad_order", DEFAULT_ORDER)),
    )
    if expected is not None:
        for key, want in expected.metadata().items():
            have = config.metadata()[key]
            if have != want:
                raise DatasetFormatError(
                    f"dataset {path} was generated with {key}={have}, requested {key}={want}"
                )

    order = config.order
    n_cols = 1 + order + (order + 1)
    header = _dataset_header(order)
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise DatasetFormatError(f"{path}:1: expected header {header!r}, got {first!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_cols:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {n_cols} columns, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as err:
                raise DatasetFormatError(f"{path}:{lineno}: {err}")
    if not rows:
        raise DatasetFormatError(f"{path}: dataset contains no samples")
    data = np.asarray(rows, dtype=float)
    h = data[:, 0]
    w = data[:, 1:1 + order]
    alpha = data[:, 1 + order:]
    u_bar = np.concatenate([np.ones((data.shape[0], 1)), w], axis=1)
    return SampleSet(
        config=config,
        h=h,
        u_bar=u_bar,
        alpha=alpha,
        draws=int(meta.get("draws", 0)),
        rejections=int(meta.get("rejections", 0)),
        guard_trips=int(meta.get("guard_trips", 0)),
    )
