"""Exact sampling of the visible density, without Markov chains.

A visible sample is drawn in two stages: a hidden state h from the discrete
Gaussian P(h), then v from the conditional Gaussian P(v | h).  The hidden
draw uses rejection sampling over the finite point set that certifies the
theta normalizer: propose uniformly among the enumerated lattice points and
accept with probability P(h) / max P(h) over the set.  The probability that
an exact draw from P(h) falls outside that set is

    p = eps(R) / (theta_n + eps(R)),

which is surfaced as a diagnostic and must stay below PMAX_OUTSIDE; at the
default theta epsilon it is ~1e-12, so the ellipsoid truncation is
statistically invisible.

Reproducibility contract: randomness comes from the Philox 4x64 counter
generator (numpy), keyed by (seed, stream id); identical keys reproduce
identical batches bit-for-bit on one platform.  Standard normal variates
use numpy's ziggurat method via Generator.standard_normal.  Parallel
generation should assign distinct stream ids, one per task.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import theta
from .errors import NonTerminating, TruncationMassTooLarge

#: Hard ceiling on the certified outside-ellipsoid mass; beyond this the
#: truncated sampler would be visibly biased, so it refuses to run.
PMAX_OUTSIDE = 1e-4

#: Rejection proposals allowed before declaring the state corrupt.
MAX_PROPOSALS = 10**9

RNG_ALGORITHM = "philox4x64-10"


@dataclass(frozen=True)
class RngStream:
    """A named, splittable source of randomness.

    Identical (seed, stream_id, algorithm) reproduce identical draw
    sequences bit-for-bit.  ``split`` derives per-task streams.
    """

    seed: int
    stream_id: int = 0
    algorithm: str = RNG_ALGORITHM

    def generator(self):
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unknown rng algorithm {self.algorithm!r}")
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def split(self, stream_id):
        return RngStream(self.seed, stream_id, self.algorithm)


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True)
class HiddenSamplerState:
    """Frozen proposal table for the hidden-sector rejection sampler."""

    points: np.ndarray = field(repr=False)
    accept_prob: np.ndarray = field(repr=False)
    log_max_weight: float
    p_outside: float
    mean_accept: float

    @classmethod
    def from_model(cls, m, eps=theta.DEFAULT_EPS):
        hp = m.hidden_params(eps)
        if hp.p_outside > PMAX_OUTSIDE:
            raise TruncationMassTooLarge(
                f"outside-ellipsoid mass {hp.p_outside:.3e} exceeds {PMAX_OUTSIDE}"
            )
        log_max = float(np.max(hp.log_weights))
        accept = np.exp(hp.log_weights - log_max)
        return cls(
            points=hp.points,
            accept_prob=accept,
            log_max_weight=log_max,
            p_outside=hp.p_outside,
            mean_accept=float(np.mean(accept)),
        )


def sample_hidden(state, rng, size=None):
    """Draw hidden states from the ellipsoid-truncated discrete Gaussian.

    Uniform proposals over the enumerated points, accepted with probability
    P(h) / max P(h); the output law is within total variation ``p_outside``
    of the exact P(h).
    """
    gen = _as_generator(rng)
    n = 1 if size is None else int(size)
    k = state.points.shape[0]
    out = np.empty((n, state.points.shape[1]), dtype=np.int64)
    filled = 0
    proposals = 0
    while filled < n:
        want = n - filled
        batch = min(max(int(want / max(state.mean_accept, 1e-3)) + 16, want), 10**7)
        idx = gen.integers(0, k, size=batch)
        unif = gen.random(batch)
        good = idx[unif < state.accept_prob[idx]]
        take = min(good.shape[0], want)
        out[filled : filled + take] = state.points[good[:take]]
        filled += take
        proposals += batch
        if proposals > MAX_PROPOSALS:
            raise NonTerminating(
                f"rejection sampler made {proposals} proposals without filling "
                f"the request; sampler state is corrupt"
            )
    return out[0] if size is None else out


def sample_conditional(m, h, rng, size=None):
    """Draw v ~ P(v | h): mean mu(h), covariance T^{-1}.

    Uses v = mu(h) + L^{-T} xi with T = L L^T and xi standard normal.
    """
    m._require_valid(phase_one=True)
    gen = _as_generator(rng)
    low = m._t_cholesky()
    mu = m.conditional_mean(np.asarray(h, dtype=float))
    n = 1 if size is None else int(size)
    xi = gen.standard_normal((n, m.nv))
    dev = scipy.linalg.solve_triangular(low.T, xi.T, lower=False).T
    out = mu + dev
    return out[0] if size is None else out


@dataclass(frozen=True)
class SampleBatch:
    """Visible-sector draws plus the provenance that produced them."""

    samples: np.ndarray = field(repr=False)
    seed: int
    stream_id: int
    model_fingerprint: str
    p_outside: float
    acceptance_rate: float

    def __len__(self):
        return self.samples.shape[0]


def sample_visible(m, n, rng, eps=theta.DEFAULT_EPS):
    """Draw ``n`` independent samples from the visible density P(v).

    Hidden states are drawn first (all of them), then the conditional
    Gaussians; both stages consume the same generator, so a batch is a pure
    function of (model, n, seed, stream id).
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    m._require_valid(phase_one=True)
    state = HiddenSamplerState.from_model(m, eps)
    gen = _as_generator(rng)
    hs = sample_hidden(state, gen, size=n)
    mus = m.conditional_mean(hs.astype(float))
    low = m._t_cholesky()
    xi = gen.standard_normal((n, m.nv))
    dev = scipy.linalg.solve_triangular(low.T, xi.T, lower=False).T
    samples = mus + dev
    seed, stream = (rng.seed, rng.stream_id) if isinstance(rng, RngStream) else (-1, -1)
    return SampleBatch(
        samples=samples,
        seed=seed,
        stream_id=stream,
        model_fingerprint=m.fingerprint(),
        p_outside=state.p_outside,
        acceptance_rate=state.mean_accept,
    )
