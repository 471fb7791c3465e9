"""
Modified Volterra equalizer and its RLS trainer.

Terms of order Q are products y[n-l_1]...y[n-l_Q] with sorted lags drawn from
the order's tap window and a spread max(l) - min(l) of at most D_Q.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import kernels
from .errors import ConfigurationError, TrainingDivergedError

DEFAULT_BETA = 0.9995
TERM_BUDGET = 50


@dataclass(frozen=True)
class VolterraConfig:
    """
    Per-order tap windows and delay-spread limits.

    ``taps_per_order[Q-1]`` is the half-length L_Q (lags -L_Q..L_Q) and
    ``max_delay_diff[Q-1]`` is D_Q (ignored for Q = 1). ``windows`` overrides
    the symmetric windows with explicit (min_lag, max_lag) pairs.
    """

    q_max: int
    taps_per_order: tuple
    max_delay_diff: tuple
    term_budget_per_order: int = TERM_BUDGET
    windows: tuple | None = None

    def __post_init__(self):
        if self.q_max < 1:
            raise ConfigurationError("q_max must be >= 1")
        L = tuple(int(v) for v in self.taps_per_order)
        D = tuple(int(v) for v in self.max_delay_diff)
        if len(D) == self.q_max - 1:
            D = (0,) + D
        if len(L) != self.q_max or len(D) != self.q_max:
            raise ConfigurationError("taps_per_order and max_delay_diff need one entry per order")
        if any(v < 0 for v in L + D):
            raise ConfigurationError("tap counts and delay differences must be non-negative")
        object.__setattr__(self, "taps_per_order", L)
        object.__setattr__(self, "max_delay_diff", D)
        if self.windows is None:
            object.__setattr__(self, "windows", tuple((-l, l) for l in L))
        else:
            win = tuple((int(a), int(b)) for a, b in self.windows)
            if len(win) != self.q_max or any(a > b for a, b in win):
                raise ConfigurationError("windows must hold one (min_lag, max_lag) per order")
            object.__setattr__(self, "windows", win)
        for q in range(1, self.q_max):
            lo, hi = self.windows[q]
            if D[q] > hi - lo:
                raise ConfigurationError(f"D_{q + 1}={D[q]} exceeds the order-{q + 1} window width {hi - lo}")

    @classmethod
    def from_window_lengths(cls, lengths, max_delay_diff, **kw):
        """
        Build from total window lengths per order; an even length puts the
        extra tap on the causal (positive-lag) side.
        """
        windows = []
        for n in lengths:
            n = int(n)
            if n < 1:
                raise ConfigurationError("window lengths must be >= 1")
            lo = -((n - 1) // 2)
            windows.append((lo, lo + n - 1))
        L = tuple(max(-a, b) for a, b in windows)
        return cls(len(windows), L, tuple(max_delay_diff), windows=tuple(windows), **kw)

    def to_dict(self):
        return {
            "q_max": self.q_max,
            "taps_per_order": list(self.taps_per_order),
            "max_delay_diff": list(self.max_delay_diff),
            "term_budget_per_order": self.term_budget_per_order,
            "windows": [list(w) for w in self.windows],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["q_max"],
            tuple(d["taps_per_order"]),
            tuple(d["max_delay_diff"]),
            d.get("term_budget_per_order", TERM_BUDGET),
            tuple(tuple(w) for w in d["windows"]) if d.get("windows") else None,
        )


def order_terms(order: int, window: tuple, max_diff: int | None) -> list:
    """Sorted lag tuples of one order with spread at most ``max_diff``."""
    lo, hi = window
    lags = range(lo, hi + 1)
    out = []
    for t in combinations_with_replacement(lags, order):
        if max_diff is None or t[-1] - t[0] <= max_diff:
            out.append(t)
    return out


def build_term_set(config: VolterraConfig) -> list:
    """
    Ordered term list: order 1 lags ascending, then each higher order in
    lexicographic order of its sorted lag tuple.
    """
    terms = []
    for q in range(1, config.q_max + 1):
        d = None if q == 1 else config.max_delay_diff[q - 1]
        t = order_terms(q, config.windows[q - 1], d)
        if len(t) > config.term_budget_per_order:
            raise ConfigurationError(
                f"order {q} generates {len(t)} terms, over the budget of {config.term_budget_per_order}"
            )
        terms.extend(t)
    return terms


def _lag_arrays(terms):
    qmax = max(len(t) for t in terms)
    lags = np.zeros((len(terms), qmax), dtype=np.int64)
    orders = np.array([len(t) for t in terms], dtype=np.int64)
    for j, t in enumerate(terms):
        lags[j, : len(t)] = t
    return lags, orders


def feature_matrix(terms, y) -> np.ndarray:
    """Rows are the polynomial input vectors for each n (zero padding at edges)."""
    y = np.ascontiguousarray(y, dtype=float)
    lags, orders = _lag_arrays(terms)
    return kernels.volterra_products(y, lags, orders)


@dataclass
class VolterraEqualizer:
    """Trained (or hand-initialized) term set and weights."""

    terms: list
    weights: np.ndarray
    beta: float = DEFAULT_BETA
    training_mse: float | None = None
    n_iter: int = 0
    errors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.terms = [tuple(int(v) for v in t) for t in self.terms]
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.terms):
            raise ConfigurationError(f"{len(self.weights)} weights for {len(self.terms)} terms")
        if len(set(self.terms)) != len(self.terms):
            raise ConfigurationError("duplicate Volterra terms")
        if not np.all(np.isfinite(self.weights)):
            raise ConfigurationError("weights must be finite")

    @property
    def q_max(self) -> int:
        return max(len(t) for t in self.terms)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @classmethod
    def identity(cls, terms) -> "VolterraEqualizer":
        """Centre linear tap 1, every other weight 0."""
        terms = list(terms)
        w = np.zeros(len(terms))
        try:
            w[terms.index((0,))] = 1.0
        except ValueError:
            raise ConfigurationError("term set has no centre linear tap") from None
        return cls(terms, w)

    def to_json(self) -> str:
        """JSON with every float written to 17 significant digits (bit-exact on reload)."""

        def num(v):
            return "null" if v is None else format(float(v), ".17g")

        terms = ", ".join("[" + ", ".join(str(int(l)) for l in t) + "]" for t in self.terms)
        weights = ", ".join(num(w) for w in self.weights)
        return (
            "{\n"
            f' "q_max": {self.q_max},\n'
            f' "terms": [{terms}],\n'
            f' "weights": [{weights}],\n'
            f' "beta": {num(self.beta)},\n'
            f' "training_mse": {num(self.training_mse)}\n'
            "}\n"
        )

    @classmethod
    def from_json(cls, text: str) -> "VolterraEqualizer":
        d = json.loads(text)
        eq = cls([tuple(t) for t in d["terms"]], np.array(d["weights"], dtype=float), d["beta"], d.get("training_mse"))
        if eq.q_max != d["q_max"]:
            raise ConfigurationError("q_max does not match the stored terms")
        return eq


def volterra_apply(equalizer: VolterraEqualizer, y) -> np.ndarray:
    """z[n] = sum_j w_j prod_q y[n - l_jq], accumulated term by term."""
    y = np.asarray(y, dtype=float)
    z = np.zeros_like(y)
    cache = {}
    for t, w in zip(equalizer.terms, equalizer.weights):
        if w == 0.0:
            continue
        p = None
        for l in t:
            if l not in cache:
                cache[l] = kernels.shift(y, l)
            p = cache[l] if p is None else p * cache[l]
        z += w * p
    return z


def solve_normal_equations(phi, x, ridge: float = 0.0) -> np.ndarray:
    """Dense least-squares weights (phi^T phi + ridge I)^-1 phi^T x."""
    R = phi.T @ phi + ridge * np.eye(phi.shape[1])
    return np.linalg.solve(R, phi.T @ x)


def rls_train(
    terms,
    y,
    x_ref,
    beta: float = DEFAULT_BETA,
    n_iter: int | None = None,
    sigma2: float | None = None,
    mse_window: int = 1000,
) -> VolterraEqualizer:
    """
    Train Volterra weights with exponentially weighted RLS.

    Args:
        terms: Term list from ``build_term_set``.
        y: Received symbol-rate samples (equalizer input).
        x_ref: Reference samples aligned with ``y``.
        beta: Forgetting factor in (0.9, 1].
        n_iter: Number of updates; defaults to every sample with a full tap line.
        sigma2: Initial scale; S starts at I / sigma2. Defaults to var(x_ref).
        mse_window: Samples at the end of the training span used for the
            reported MSE.

    Raises:
        TrainingDivergedError: if the recursion produces non-finite weights.
    """
    terms = list(terms)
    y = np.asarray(y, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if len(y) != len(x_ref):
        raise ConfigurationError("equalizer input and reference differ in length")
    if not 0.9 < beta <= 1.0:
        raise ConfigurationError(f"forgetting factor must be in (0.9, 1], got {beta}")
    N = len(terms)
    l_max = max(abs(l) for t in terms for l in t)
    start, stop = l_max, len(y) - l_max
    available = max(stop - start, 0)
    if n_iter is None:
        n_iter = available
    if n_iter > available:
        raise ConfigurationError(f"n_iter={n_iter} exceeds the {available} samples with a full tap line")
    if n_iter < 10 * N:
        warnings.warn(f"n_iter={n_iter} is below 10x the {N} equalizer terms", stacklevel=2)
    w = np.zeros(N)
    if n_iter == 0:
        return VolterraEqualizer(terms, w, beta, None, 0)
    if sigma2 is None:
        sigma2 = float(np.var(x_ref))
    if not sigma2 > 0:
        raise ConfigurationError("initial scale must be positive")
    S = np.eye(N) / sigma2
    phi = np.ascontiguousarray(feature_matrix(terms, y)[start : start + n_iter])
    x = np.ascontiguousarray(x_ref[start : start + n_iter])
    err, bad = kernels.rls_loop(phi, x, S, w, float(beta))
    if bad >= 0:
        raise TrainingDivergedError(int(bad))
    tail = slice(max(n_iter - mse_window, 0), n_iter)
    mse = float(np.mean((x[tail] - phi[tail] @ w) ** 2))
    return VolterraEqualizer(terms, w, beta, mse, n_iter, err)
