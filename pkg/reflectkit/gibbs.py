"""
Sampling the reversible measure μ(dx) = 1_D(x) e^{−Φ(x)} dx.

Two samplers: a random-walk Metropolis chain with per-block scales, and an
exact rejection sampler used as a ground-truth oracle on small instances.
The normalising constant is never computed; for planet systems only its
finiteness is checked.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .compat import find_feasible_point
from .errors import SamplingError
from .geometry import ConstraintSet, config_vector
from .rng import MCMC, REJECTION, check_seed, keyed_generator

logger = logging.getLogger(__name__)

ETA = 0.1
ACCEPTANCE_FLOOR = 1e-4
MIN_PROPOSALS = 20000


@dataclass
class Potential:
    """Φ with its gradient; both map (..., D) arrays.

    ``lower_bound(low, high)`` returns inf Φ over a box, when known, and lets
    a box envelope bound e^{−Φ}.
    """
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str = "phi"
    lower_bound: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def __call__(self, x):
        return self.value(x)

    def transformed(self, theta) -> "Potential":
        """Φ(θ·) with gradient ᵗθ∇Φ(θ·)."""
        theta = np.asarray(theta, dtype=float)
        tt = theta.T
        return Potential(lambda y: self.value(np.asarray(y, dtype=float) @ tt),
                         lambda y: self.gradient(np.asarray(y, dtype=float) @ tt) @ theta,
                         name=f"{self.name}@theta")

    def scaled(self, factor: float) -> "Potential":
        bound = None
        if self.lower_bound is not None and factor >= 0:
            bound = lambda lo, hi: factor * self.lower_bound(lo, hi)  # noqa: E731
        return Potential(lambda x: factor * self.value(x),
                         lambda x: factor * self.gradient(x),
                         name=f"{factor:g}*{self.name}", lower_bound=bound)


def zero_potential(dim: int) -> Potential:
    return Potential(lambda x: np.zeros(np.shape(x)[:-1]),
                     lambda x: np.zeros(np.shape(x)),
                     name="zero", lower_bound=lambda lo, hi: 0.0)


def linear_potential(coefficients) -> Potential:
    """Φ(x) = c·x."""
    c = np.asarray(coefficients, dtype=float)
    return Potential(lambda x: np.asarray(x, dtype=float) @ c,
                     lambda x: np.broadcast_to(c, np.shape(x)).copy(),
                     name="linear",
                     lower_bound=lambda lo, hi: float(np.sum(np.minimum(c * lo, c * hi))))


def quadratic_potential(weight: float = 1.0, center=None, dim: Optional[int] = None) -> Potential:
    """Φ(x) = weight·|x − center|²."""
    if center is None:
        center = np.zeros(dim if dim is not None else 1)
    c = np.asarray(center, dtype=float)

    def value(x):
        d = np.asarray(x, dtype=float) - c
        return weight * np.einsum("...i,...i->...", d, d)

    def lower_bound(lo, hi):
        d = np.clip(c, lo, hi) - c
        return float(weight * d @ d)

    return Potential(value, lambda x: 2.0 * weight * (np.asarray(x, dtype=float) - c),
                     name="quadratic", lower_bound=lower_bound)


@dataclass
class TailInfo:
    """Growth data for the finiteness criterion: ℓ ≈ liminf ρG′(ρ) in spatial dimension d."""
    ell: float
    dim: int
    eta: float = ETA


class Envelope(Protocol):
    def propose(self, spec: "GibbsSpec", gen: np.random.Generator,
                size: int) -> Tuple[np.ndarray, np.ndarray]:
        """Candidate points and their log acceptance probabilities (≤ 0)."""
        ...


@dataclass
class GibbsSpec:
    """Target 1_D e^{−Φ} with Φ = temperature_scale · phi."""
    cset: ConstraintSet
    phi: Potential
    envelope: Optional[Envelope] = None
    temperature_scale: float = 1.0
    blocks: Optional[List[np.ndarray]] = None
    block_scales: Optional[List[float]] = None
    tail: Optional[TailInfo] = None
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None
    name: str = "gibbs"

    @property
    def dimension(self) -> int:
        return self.cset.dimension

    def potential(self, x) -> np.ndarray:
        return self.temperature_scale * self.phi.value(x)

    def scale_vector(self, proposal_scale=None) -> np.ndarray:
        """Per-coordinate random-walk scale from block scales."""
        D = self.dimension
        if proposal_scale is not None and np.ndim(proposal_scale) == 0:
            return np.full(D, float(proposal_scale))
        scales = proposal_scale if proposal_scale is not None else self.block_scales
        if scales is None:
            return np.full(D, 0.5 * self.cset.scale)
        blocks = self.blocks if self.blocks is not None else [np.arange(D)]
        if len(scales) != len(blocks):
            raise ValueError(f"{len(scales)} proposal scales for {len(blocks)} blocks")
        out = np.empty(D)
        for idx, s in zip(blocks, scales):
            out[np.asarray(idx, dtype=int)] = float(s)
        return out


@dataclass
class BoxEnvelope:
    """Uniform proposals on a box with acceptance e^{−Φ(x) + inf Φ}."""
    low: np.ndarray
    high: np.ndarray
    log_bound: Optional[float] = None

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)
        if np.any(self.high <= self.low):
            raise ValueError("envelope box needs high > low")

    def _bound(self, spec: "GibbsSpec") -> float:
        if self.log_bound is not None:
            return self.log_bound
        if spec.phi.lower_bound is None:
            raise SamplingError(f"potential '{spec.phi.name}' declares no lower bound; "
                                "give the envelope an explicit log_bound")
        return -spec.temperature_scale * spec.phi.lower_bound(self.low, self.high)

    def propose(self, spec, gen, size):
        X = gen.uniform(self.low, self.high, size=(size, self.low.shape[0]))
        return X, -spec.potential(X) - self._bound(spec)


def log_density(spec: GibbsSpec, x):
    """−Φ(x) where every constraint is positive, −∞ elsewhere."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        config_vector(arr, spec.dimension)
    feasible = np.all(spec.cset.values(arr) > 0.0, axis=-1)
    with np.errstate(all="ignore"):
        out = np.where(feasible, -spec.potential(arr), -np.inf)
    return float(out) if np.ndim(out) == 0 else out


def acceptance_probability(logp_x: float, logp_y: float) -> float:
    """Metropolis acceptance exp(min(0, logπ(y) − logπ(x))) for a symmetric proposal."""
    if logp_y == -np.inf:
        return 0.0
    if logp_x == -np.inf:
        return 1.0
    return math.exp(min(0.0, logp_y - logp_x))


def integrated_autocorr_time(trace, window: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window.

    For a (n, D) trace the largest coordinate value is returned.
    """
    arr = np.asarray(trace, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    n = arr.shape[0]
    if n < 4:
        return 1.0
    worst = 1.0
    size = 1 << int(np.ceil(np.log2(2 * n)))
    for col in arr.T:
        c = col - col.mean()
        spectrum = np.fft.rfft(c, size)
        acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
        if acf[0] <= 0.0:
            continue
        rho = acf / acf[0]
        taus = 2.0 * np.cumsum(rho) - 1.0
        ok = np.arange(n) >= window * taus
        M = int(np.argmax(ok)) if ok.any() else n - 1
        worst = max(worst, float(taus[M]))
    return worst


@dataclass
class MCMCResult:
    samples: np.ndarray
    acceptance_rate: float
    burn_in: int
    autocorr_time: Optional[float] = None
    seeds: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.samples.shape[0]


def _walk(spec: GibbsSpec, x: np.ndarray, steps: int, scale: np.ndarray,
          gen: np.random.Generator, keep_from: int = 0, thin: int = 1):
    """Random-walk Metropolis; returns (kept states, acceptances, last state)."""
    D = spec.dimension
    logp = log_density(spec, x)
    kept = np.empty(((max(steps - keep_from, 0) + thin - 1) // thin, D))
    accepted = 0
    stored = 0
    chunk = 4096
    for start in range(0, steps, chunk):
        size = min(chunk, steps - start)
        Z = gen.standard_normal((size, D))
        U = np.log(gen.random(size))
        for j in range(size):
            y = x + scale * Z[j]
            logq = log_density(spec, y)
            if logq > -np.inf and U[j] < min(0.0, logq - logp):
                x, logp = y, logq
                accepted += 1
            k = start + j
            if k >= keep_from and (k - keep_from) % thin == 0:
                kept[stored] = x
                stored += 1
    return kept[:stored], accepted, x


def sample_mcmc(spec: GibbsSpec, n: int, burn_in: Optional[int] = None,
                proposal_scale=None, seed: int = 0, x0=None, thin: int = 1,
                chain: int = 0, pilot: int = 2000) -> MCMCResult:
    """Random-walk Metropolis chain targeting 1_D e^{−Φ}.

    Without an explicit burn_in a pilot run from the start point sets it to
    ten integrated autocorrelation times; the main chain continues from the
    end of the pilot.
    """
    seed = check_seed(seed)
    if n <= 0:
        raise ValueError("n must be positive")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    scale = spec.scale_vector(proposal_scale)
    if x0 is None:
        box = spec.box if spec.box is not None else spec.cset.box
        x = find_feasible_point(spec.cset, seed, box)
    else:
        x = config_vector(x0, spec.dimension).copy()
    if log_density(spec, x) == -np.inf:
        raise SamplingError("MCMC start point is outside the domain")

    iat = None
    if burn_in is None:
        trace, _, x = _walk(spec, x, pilot, scale, keyed_generator(seed, chain, 1, MCMC))
        iat = integrated_autocorr_time(trace)
        burn_in = int(math.ceil(10.0 * iat))
        logger.debug("pilot of %d steps: autocorrelation time %.2f, burn-in %d",
                     pilot, iat, burn_in)
    steps = burn_in + n * thin
    kept, accepted, _ = _walk(spec, x, steps, scale, keyed_generator(seed, chain, 0, MCMC),
                              keep_from=burn_in, thin=thin)
    rate = accepted / steps
    logger.info("chain %d: %d samples, acceptance rate %.3f", chain, n, rate)
    return MCMCResult(kept[:n], rate, burn_in, iat, [seed])


def run_chains(spec: GibbsSpec, n: int, seeds: Sequence[int], workers: int = 1,
               **kwargs) -> MCMCResult:
    """Independent chains of ``n`` samples each, concatenated in seed order."""
    seeds = [check_seed(s) for s in seeds]

    def one(s):
        return sample_mcmc(spec, n, seed=s, **kwargs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, seeds))
    else:
        parts = [one(s) for s in seeds]
    return MCMCResult(
        samples=np.concatenate([p.samples for p in parts]),
        acceptance_rate=float(np.mean([p.acceptance_rate for p in parts])),
        burn_in=max(p.burn_in for p in parts),
        autocorr_time=max((p.autocorr_time for p in parts if p.autocorr_time is not None),
                          default=None),
        seeds=seeds,
    )


def sample_rejection(spec: GibbsSpec, n: int, seed: int, batch: int = 4096,
                     floor: float = ACCEPTANCE_FLOOR, stream: int = 0) -> np.ndarray:
    """Exact i.i.d. samples of μ restricted to the envelope."""
    seed = check_seed(seed)
    if spec.envelope is None:
        raise SamplingError(f"'{spec.name}' has no rejection envelope")
    out: List[np.ndarray] = []
    got = proposed = 0
    block = 0
    while got < n:
        gen = keyed_generator(seed, stream, block, REJECTION)
        block += 1
        X, log_acc = spec.envelope.propose(spec, gen, batch)
        U = gen.random(batch)
        with np.errstate(divide="ignore"):
            ok = np.all(spec.cset.values(X) > 0.0, axis=-1) & (np.log(U) < log_acc)
        out.append(X[ok])
        got += int(ok.sum())
        proposed += batch
        if proposed >= MIN_PROPOSALS and got / proposed < floor:
            raise SamplingError(
                f"rejection acceptance rate {got / proposed:.2e} is below {floor:.0e}; "
                "use a smaller instance or a higher temperature")
    rate = got / proposed
    logger.debug("rejection sampler: %d accepted of %d proposals (%.3f)", got, proposed, rate)
    return np.concatenate(out)[:n]


@dataclass
class Integrability:
    verdict: str
    temperature: float
    margin: Optional[float] = None
    ell: Optional[float] = None
    dim: Optional[int] = None
    eta: float = ETA
    reason: str = ""

    @property
    def finite(self) -> bool:
        return self.verdict == "finite"


def check_integrability(spec: GibbsSpec, temperature: float) -> Integrability:
    """Finite when (ℓ − η)/τ² > d; otherwise unknown, never divergent."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if spec.tail is None:
        return Integrability("unknown", temperature, reason="no growth data for the potential")
    tail = spec.tail
    margin = (tail.ell - tail.eta) / temperature ** 2 - tail.dim
    verdict = "finite" if margin > 0 else "unknown"
    logger.debug("integrability at tau=%g: (%.4g - %.2g)/tau^2 - %d = %.4g -> %s",
                 temperature, tail.ell, tail.eta, tail.dim, margin, verdict)
    return Integrability(verdict, temperature, margin, tail.ell, tail.dim, tail.eta,
                         reason=f"(ell - eta)/tau^2 - d = {margin:.4g}")


def estimate_ell(gravity, span: Tuple[float, float] = (1.0, 1e6), points: int = 400) -> float:
    """liminf of ρG′(ρ), taken as the minimum over the upper half (in log scale) of ``span``."""
    lo, hi = span
    if not 0 < lo < hi:
        raise ValueError("radius range needs 0 < low < high")
    rho = np.geomspace(math.sqrt(lo * hi), hi, points)
    return float(np.min(rho * gravity.dG(rho)))


__all__ = [
    "BoxEnvelope", "Envelope", "GibbsSpec", "Integrability", "MCMCResult", "Potential",
    "TailInfo", "acceptance_probability", "check_integrability", "estimate_ell",
    "integrated_autocorr_time", "linear_potential", "log_density", "quadratic_potential",
    "run_chains", "sample_mcmc", "sample_rejection", "zero_potential",
]
