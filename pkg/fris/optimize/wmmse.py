"""
WMMSE precoding
===============
Weighted-MMSE alternating updates for the MISO downlink weighted sum rate
under a total transmit power budget.
"""
import logging
from typing import NamedTuple, Optional

import numpy as np

from fris.errors import InvalidProblemError
from fris.metrics import PrecoderSet, weighted_sum_rate

logger = logging.getLogger(__name__)


class WmmseResult(NamedTuple):
    precoders: PrecoderSet
    trace: tuple[float, ...]


def matched_filter(channels: np.ndarray, power_budget: float) -> np.ndarray:
    """MRT directions at equal power; zero channels get zero vectors"""
    norms = np.linalg.norm(channels, axis=1, keepdims=True)
    directions = np.divide(channels, norms, out=np.zeros_like(channels), where=norms > 0)
    return directions * np.sqrt(power_budget / len(channels))


def _solve_precoders(A: np.ndarray, B: np.ndarray, power_budget: float) -> np.ndarray:
    """W with rows w_k = (A + μI)^{-1} b_k, μ ≥ 0 the smallest meeting the budget"""
    eigvals, V = np.linalg.eigh(A)
    eigvals = np.maximum(eigvals, 0.0)
    Bt = V.conj().T @ B.T
    numerator = np.sum(np.abs(Bt) ** 2, axis=1)
    if not np.any(numerator > 0):
        return np.zeros_like(B)

    def power(mu: float) -> float:
        denominator = (eigvals + mu) ** 2
        if np.any((denominator == 0) & (numerator > 0)):
            return np.inf
        return float(np.sum(np.divide(numerator, denominator, out=np.zeros_like(numerator),
                                      where=denominator > 0)))

    mu = 0.0
    if not (eigvals.min() > 1e-12 * eigvals.max() and power(0.0) <= power_budget):
        lo, hi = 0.0, float(np.sqrt(numerator.sum() / power_budget))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if power(mid) > power_budget:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * hi:
                break
        mu = hi
    W = V @ (Bt / (eigvals + mu)[:, None])
    return W.T


def run_wmmse(channels, weights, power_budget: float, noise: float, iterations: int = 100,
              initial: Optional[PrecoderSet] = None, tolerance: float = 1e-9) -> WmmseResult:
    """Alternate receiver, MSE-weight and precoder updates.

    Stops on convergence or as soon as an update would lower the weighted sum
    rate, so the returned trace never decreases.
    """
    H = np.atleast_2d(np.asarray(channels, dtype=complex))
    alpha = np.asarray(weights, dtype=float)
    if H.shape[0] < 1 or alpha.shape != (H.shape[0],):
        raise InvalidProblemError(f"need one weight per user, got {alpha.shape} for {H.shape[0]} users")
    if not np.all(np.isfinite(H)):
        raise InvalidProblemError("channel entries must be finite")
    if not power_budget > 0:
        raise InvalidProblemError(f"power budget must be positive, got {power_budget}")
    if not noise > 0:
        raise InvalidProblemError(f"noise power must be positive, got {noise}")

    if initial is not None and initial.vectors.shape == H.shape:
        W = np.array(initial.vectors)
        scale = np.sqrt(power_budget / initial.total_power) if initial.total_power > power_budget else 1.0
        W = W * scale
    else:
        W = matched_filter(H, power_budget)

    current = weighted_sum_rate(H, PrecoderSet(W, power_budget), alpha, noise)
    trace = [current]
    for it in range(iterations):
        G = H.conj() @ W.T
        T = np.sum(np.abs(G) ** 2, axis=1) + noise
        signal = np.diag(G)
        u = signal / T
        omega = 1.0 / (1.0 - np.abs(signal) ** 2 / T)
        c = alpha * omega * np.abs(u) ** 2
        A = (H.T * c) @ H.conj()
        B = (alpha * omega * u)[:, None] * H
        W_next = _solve_precoders(A, B, power_budget)
        updated = weighted_sum_rate(H, PrecoderSet(W_next, power_budget), alpha, noise)
        if updated < current - 1e-12:
            logger.debug("WMMSE stopped at iteration %d: rate would drop", it)
            break
        W, previous, current = W_next, current, updated
        trace.append(current)
        if current - previous <= tolerance * max(1.0, abs(previous)):
            break

    return WmmseResult(PrecoderSet(W, power_budget), tuple(trace))


def wmmse_precoders(channels, weights, power_budget: float, noise: float, iterations: int = 100) -> PrecoderSet:
    return run_wmmse(channels, weights, power_budget, noise, iterations).precoders
