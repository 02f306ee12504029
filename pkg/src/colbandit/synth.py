"""Synthetic instances with controllable score-gap structure.

Every profile defines a target mean per row; cells are drawn from a normal
truncated to the value range around that mean, so row sums concentrate near
``T * mean`` and the difficulty of separating rows is set by the gap between
row means relative to ``noise_scale``.

Profiles:

* ``well-separated``: strictly decreasing ladder of row means spread over
  the usable range, with a guaranteed gap of at least three noise scales;
* ``clustered-near-boundary``: a ladder whose rows around the Top-K boundary
  (``boundary_k``) are squeezed to within one noise scale of each other;
* ``uniform-random``: row means drawn uniformly over the usable range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .oracle import DocTokens, QueryTokens

__all__ = ["SynthSpec", "PROFILES", "gen_matrix", "gen_embeddings"]

PROFILES = ("well-separated", "clustered-near-boundary", "uniform-random")


@dataclass(frozen=True)
class SynthSpec:
    """Shape, profile, and randomness of one synthetic instance.

    ``boundary_k`` positions the contested boundary for the clustered
    profile (rows ``boundary_k - 1 .. boundary_k + 1``, zero-indexed, end up
    within ``noise_scale`` of each other); other profiles ignore it.
    """

    n_docs: int
    n_tokens: int
    profile: str = "uniform-random"
    value_range: tuple[float, float] = (0.0, 1.0)
    noise_scale: float = 0.05
    seed: int | tuple[int, ...] | None = 0
    boundary_k: int = 1

    def __post_init__(self) -> None:
        if self.n_docs < 1 or self.n_tokens < 1:
            raise ValueError(f"need at least one doc and one token, got ({self.n_docs}, {self.n_tokens})")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        lo, hi = self.value_range
        if not float(lo) < float(hi):
            raise ValueError(f"invalid value_range {self.value_range}")
        if self.noise_scale < 0.0:
            raise ValueError(f"noise_scale must be non-negative, got {self.noise_scale}")
        if self.profile == "clustered-near-boundary" and not 1 <= self.boundary_k <= self.n_docs - 2:
            raise ValueError(
                f"clustered profile needs 1 <= boundary_k <= n_docs - 2, got {self.boundary_k}"
            )


def _row_means(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = map(float, spec.value_range)
    margin = 2.0 * spec.noise_scale
    usable_lo, usable_hi = lo + margin, hi - margin
    if usable_lo >= usable_hi:
        # noise dominates the range; park every mean at the center
        usable_lo = usable_hi = 0.5 * (lo + hi)
    n = spec.n_docs

    if spec.profile == "uniform-random":
        return rng.uniform(usable_lo, usable_hi, size=n)

    if n == 1:
        return np.array([0.5 * (usable_lo + usable_hi)])
    gap = (usable_hi - usable_lo) / (n - 1)
    if spec.profile == "well-separated" and gap < 3.0 * spec.noise_scale:
        raise ValueError(
            f"cannot separate {n} rows by 3 * noise_scale = {3 * spec.noise_scale:g} "
            f"inside value_range {spec.value_range}; lower noise_scale"
        )
    means = usable_hi - gap * np.arange(n, dtype=np.float64)

    if spec.profile == "clustered-near-boundary":
        kb = spec.boundary_k
        center = float(means[kb])
        half = 0.5 * spec.noise_scale if spec.noise_scale > 0 else 0.25 * gap
        # squeeze the boundary rows together while keeping a strict order
        means[kb - 1], means[kb], means[kb + 1] = center + half, center, center - half
    return means


def gen_matrix(spec: SynthSpec) -> np.ndarray:
    """Sample an (N, T) interaction matrix for the spec, deterministically.

    Cells are truncated-normal around each row's target mean with scale
    ``noise_scale``; a zero scale makes every row constant.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = map(float, spec.value_range)
    means = _row_means(spec, rng)
    out = np.empty((spec.n_docs, spec.n_tokens), dtype=np.float64)
    if spec.noise_scale == 0.0:
        out[:] = means[:, None]
        return out
    scale = spec.noise_scale
    for i, mu in enumerate(means):
        a, b = (lo - mu) / scale, (hi - mu) / scale
        out[i] = sps.truncnorm.rvs(a, b, loc=mu, scale=scale, size=spec.n_tokens, random_state=rng)
    return out


def gen_embeddings(spec: SynthSpec, dim: int, doc_len: int) -> tuple[QueryTokens, list[DocTokens]]:
    """Build unit-normalized embeddings whose MaxSim matrix tracks the profile.

    Query tokens are orthonormal. Each document gets one token aimed at each
    query token: ``e = s * q_t + sqrt(1 - s^2) * u`` with the residual ``u``
    drawn from the orthogonal complement of the query span whenever
    ``dim > n_tokens``; MaxSim(i, t) then equals the target cell exactly up
    to rounding. With ``dim == n_tokens`` residuals are orthogonalized only
    against their own query token and the match is approximate. Document
    tokens beyond the query count live in the complement and never win a
    MaxSim.
    """
    if dim < 2:
        raise ValueError(f"embedding dim must be at least 2, got {dim}")
    if doc_len < 1:
        raise ValueError(f"doc_len must be at least 1, got {doc_len}")
    lo, hi = map(float, spec.value_range)
    if lo < -1.0 or hi > 1.0:
        raise ValueError(f"embedding targets need value_range within [-1, 1], got {spec.value_range}")
    T = spec.n_tokens
    if T > dim:
        raise ValueError(f"cannot build {T} orthonormal query tokens in dim {dim}")

    rng = np.random.default_rng(spec.seed)
    targets = np.clip(gen_matrix(spec), -0.999999, 0.999999)

    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    query_vecs = np.ascontiguousarray(basis[:, :T].T)
    comp = basis[:, T:]  # orthonormal complement of the query span, (dim, dim - T)

    def residual_unit(avoid: np.ndarray | None) -> np.ndarray:
        """Random unit vector orthogonal to the query span, or at least to ``avoid``."""
        if comp.shape[1] > 0:
            w = comp @ rng.standard_normal(comp.shape[1])
        else:
            w = rng.standard_normal(dim)
            if avoid is not None:
                w = w - (w @ avoid) * avoid
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:  # vanishing draw; deterministic fallback direction
            return residual_unit(avoid)
        return w / nrm

    docs: list[DocTokens] = []
    n_aimed = min(T, doc_len)
    for i in range(spec.n_docs):
        vecs = np.empty((doc_len, dim), dtype=np.float64)
        for j in range(n_aimed):
            s = float(targets[i, j])
            u = residual_unit(query_vecs[j])
            vecs[j] = s * query_vecs[j] + math.sqrt(max(0.0, 1.0 - s * s)) * u
        for j in range(n_aimed, doc_len):
            vecs[j] = residual_unit(None)
        docs.append(DocTokens(f"doc{i:04d}", vecs))
    return QueryTokens(query_vecs), docs
