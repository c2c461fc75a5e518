"""Memory-decay sequences and the closed-form bounds built on them.

The central object is the nonincreasing sequence ``b_m`` bounding how much
the next-symbol law of a chain can change when two histories agree on their
``m`` most recent symbols.  Everything else derives from it through the
house-of-cards chain: an integer-valued auxiliary Markov chain started at 0
that moves up by one with probability ``1 - b_i`` and resets to 0 with
probability ``b_i``.  Its return probabilities ``b*_m`` bound the speed at
which the chain forgets its initialization, and they feed the relaxation,
perturbation, beta-mixing and tau-dependence bounds implemented here.

Index convention: ``b*_0 = b_0`` and ``b*_n = P(S_n = 0)`` for ``n >= 1``.
The folklore Markov-case shortcut ``1 + sum_m b*_m = 1/(1 - b_0)`` is NOT
consistent with this convention (it misses one ``b_0`` term); see
``markov_perturbation_factor`` for the documented cross-check.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DecayError",
    "DivergenceError",
    "ContractionError",
    "GeometricTail",
    "PolynomialTail",
    "DecaySeq",
    "bstar_from_b",
    "bstar_renewal_oracle",
    "bstar_sum_bracket",
    "relaxation_bound",
    "PerturbationBound",
    "perturbation_bound",
    "markov_perturbation_factor",
    "DependenceBoundCurve",
    "beta_bound",
    "tau_bound",
    "heredity_exponent",
    "DecayTransferReport",
    "decay_transfer_check",
]


class DecayError(ValueError):
    """Sequence violates a structural requirement (sign, monotonicity)."""


class DivergenceError(ValueError):
    """A required infinite sum does not converge under the tail model."""


class ContractionError(ValueError):
    """The one-step contraction requirement ``b_0 < 1`` fails."""


@dataclass(frozen=True)
class GeometricTail:
    """Beyond the stored values, ``value(m) = last * rate**(m - last_index)``."""

    rate: float

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise DecayError(f"geometric rate must lie in (0,1), got {self.rate}")


@dataclass(frozen=True)
class PolynomialTail:
    """Beyond the stored values, ``value(m) = coeff * m**(-power)``."""

    coeff: float
    power: float

    def __post_init__(self):
        if self.coeff < 0:
            raise DecayError("polynomial tail coefficient must be >= 0")


@dataclass
class DecaySeq:
    """Nonnegative real sequence indexed from 0 with an explicit tail model.

    ``tail=None`` means the sequence is zero beyond the stored values.
    ``tail_sum_bound``, when set, is a certified upper bound on
    ``sum_{m >= len(values)} value(m)`` and overrides the tail model in
    ``sum_from``; it is used for sequences (like ``b*``) whose tail has no
    closed form but whose total is known by other means.
    """

    values: np.ndarray
    tail: GeometricTail | PolynomialTail | None = None
    tail_sum_bound: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DecayError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(v)):
            raise DecayError("non-finite value in sequence")
        if np.any(v < -1e-15):
            raise DecayError(f"negative value {v.min()} in sequence")
        self.values = np.clip(v, 0.0, None)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, n: int = 1) -> "DecaySeq":
        return cls(np.zeros(max(n, 1)))

    @classmethod
    def geometric(cls, first: float, rate: float, n_stored: int = 64) -> "DecaySeq":
        vals = first * rate ** np.arange(n_stored)
        return cls(vals, tail=GeometricTail(rate))

    @classmethod
    def from_csv(cls, text_or_path) -> "DecaySeq":
        """Read an ``m,value`` two-column CSV (header required)."""
        if hasattr(text_or_path, "read"):
            rows = list(csv.reader(text_or_path))
        else:
            with open(text_or_path, newline="") as fh:
                rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["m", "value"]:
            raise DecayError("expected CSV header 'm,value'")
        pairs = sorted((int(r[0]), float(r[1])) for r in rows[1:] if r)
        idx = [m for m, _ in pairs]
        if idx != list(range(len(idx))):
            raise DecayError("indices must be 0..n-1 without gaps")
        return cls(np.array([v for _, v in pairs]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "value"])
        for m, v in enumerate(self.values):
            w.writerow([m, repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    # -- pointwise access --------------------------------------------------

    def __len__(self) -> int:
        return self.values.size

    def value(self, m: int) -> float:
        if m < 0:
            raise IndexError("negative index")
        n = self.values.size
        if m < n:
            return float(self.values[m])
        if self.tail is None:
            return 0.0
        if isinstance(self.tail, GeometricTail):
            return float(self.values[-1] * self.tail.rate ** (m - n + 1))
        return float(self.tail.coeff * float(m) ** (-self.tail.power))

    def head(self, n: int) -> np.ndarray:
        """Values at indices ``0..n-1`` with the tail model applied."""
        stored = self.values[: min(n, len(self))]
        if n <= len(self):
            return stored.copy()
        extra = np.array([self.value(m) for m in range(len(self), n)])
        return np.concatenate([stored, extra])

    # -- structure checks --------------------------------------------------

    @property
    def is_nonincreasing(self) -> bool:
        if np.any(np.diff(self.values) > 1e-15):
            return False
        if self.tail is not None and len(self) >= 1:
            return self.value(len(self)) <= self.values[-1] + 1e-15
        return True

    def require_nonincreasing(self, what: str = "sequence") -> None:
        if not self.is_nonincreasing:
            raise DecayError(f"{what} must be nonincreasing")

    @property
    def is_summable(self) -> bool:
        if self.tail_sum_bound is not None:
            return math.isfinite(self.tail_sum_bound)
        if self.tail is None or isinstance(self.tail, GeometricTail):
            return True
        return self.tail.power > 1.0

    # -- sums ----------------------------------------------------------------

    def _tail_sum(self) -> float:
        """Upper bound on the sum of all values beyond the stored ones."""
        if self.tail_sum_bound is not None:
            return self.tail_sum_bound
        if self.tail is None:
            return 0.0
        n = self.values.size
        if isinstance(self.tail, GeometricTail):
            r = self.tail.rate
            return float(self.values[-1] * r / (1.0 - r))
        if self.tail.power <= 1.0:
            raise DivergenceError(
                f"polynomial tail with power {self.tail.power} <= 1 is not summable"
            )
        c, k = self.tail.coeff, self.tail.power
        # value(m) = c*m^-k for m >= n; bound sum by c*(n^-k + integral_n^inf x^-k dx)
        return float(c * (float(n) ** (-k) + float(n) ** (1.0 - k) / (k - 1.0)))

    def sum_from(self, m: int) -> float:
        """Upper bound on ``sum_{i >= m} value(i)``."""
        if not self.is_summable:
            raise DivergenceError("sequence is not summable under its tail model")
        n = self.values.size
        if m >= n:
            if self.tail is None:
                return 0.0
            if self.tail_sum_bound is not None:
                # no pointwise tail model: fall back to the certified total
                return self.tail_sum_bound
            if isinstance(self.tail, GeometricTail):
                r = self.tail.rate
                return float(self.value(m) / (1.0 - r))
            c, k = self.tail.coeff, self.tail.power
            return float(c * (float(m) ** (-k) + float(m) ** (1.0 - k) / (k - 1.0)))
        return float(self.values[m:].sum()) + self._tail_sum()

    def total(self) -> float:
        return self.sum_from(0)


# ---------------------------------------------------------------------------
# house-of-cards chain
# ---------------------------------------------------------------------------


def _check_b(b: DecaySeq) -> None:
    b.require_nonincreasing("memory-decay sequence b")
    if b.value(0) >= 1.0:
        raise ContractionError(f"b_0 = {b.value(0)} violates b_0 < 1")


def bstar_from_b(b: DecaySeq, horizon: int) -> DecaySeq:
    """Return probabilities of the house-of-cards chain sitting at zero.

    Exact forward iteration of the state distribution of the chain with
    ``P(i, i+1) = 1 - b_i`` and ``P(i, 0) = b_i``, started at 0.  Index 0 of
    the result carries ``b_0`` itself (the one-step mismatch bound), index
    ``n >= 1`` carries ``P(S_n = 0)``.

    The result's ``tail_sum_bound`` is set from the renewal-series total, so
    ``sum_from`` is a certified bound even past the horizon.
    """
    _check_b(b)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    bh = b.head(horizon + 1)
    out = np.empty(horizon + 1)
    out[0] = bh[0]
    dist = np.zeros(horizon + 1)
    dist[0] = 1.0
    for n in range(1, horizon + 1):
        reset = float(dist[:n] @ bh[:n])
        new = np.zeros_like(dist)
        new[0] = reset
        new[1 : n + 1] = dist[:n] * (1.0 - bh[:n])
        dist = new
        out[n] = reset
    tail_bound = None
    if b.is_summable:
        low, high = bstar_sum_bracket(b, max(horizon, 256))
        partial = float(out[1:].sum())
        tail_bound = max(high - partial, 0.0)
    return DecaySeq(out, tail=None, tail_sum_bound=tail_bound)


def bstar_renewal_oracle(b: DecaySeq, horizon: int) -> DecaySeq:
    """Zero-visit probabilities via the renewal recursion (independent route).

    First-return probabilities are ``f_1 = b_0`` and
    ``f_k = b_{k-1} * prod_{m<=k-2}(1 - b_m)``; visit probabilities solve
    ``u_n = sum_{k=1..n} f_k u_{n-k}`` with ``u_0 = 1``.  Agrees with
    :func:`bstar_from_b` at every index ``n >= 1``.
    """
    _check_b(b)
    bh = b.head(horizon + 1)
    f = np.zeros(horizon + 1)
    prod = 1.0
    for k in range(1, horizon + 1):
        f[k] = bh[k - 1] * prod
        prod *= 1.0 - bh[k - 1]
    u = np.zeros(horizon + 1)
    u[0] = 1.0
    for n in range(1, horizon + 1):
        u[n] = float(f[1 : n + 1] @ u[n - 1 :: -1][: n])
    return DecaySeq(u)


def bstar_sum_bracket(b: DecaySeq, horizon: int = 512) -> tuple[float, float]:
    """Bracket ``sum_{n>=1} b*_n`` via the first-return series.

    The visit probabilities sum to ``F/(1-F)`` where ``F = sum_k f_k`` is the
    total first-return mass.  ``F`` is bracketed by a finite partial sum plus
    the crude remainder bound ``sum_{k>K} f_k <= sum_{m>=K} b_m``.
    """
    _check_b(b)
    if not b.is_summable:
        raise DivergenceError("b is not summable; the visit series has no finite total")
    bh = b.head(horizon + 1)
    prod = 1.0
    f_partial = 0.0
    for k in range(1, horizon + 1):
        f_partial += bh[k - 1] * prod
        prod *= 1.0 - bh[k - 1]
    rem = b.sum_from(horizon)
    f_low = min(f_partial, 1.0)
    f_high = f_partial + rem
    if f_high >= 1.0 - 1e-12:
        # remainder too coarse at this horizon; F < 1 is guaranteed by
        # summability, so retry deeper before giving up
        if horizon < 65536:
            return bstar_sum_bracket(b, horizon * 2)
        raise DivergenceError("could not certify total first-return mass < 1")
    return f_low / (1.0 - f_low), f_high / (1.0 - f_high)


def relaxation_bound(b: DecaySeq, t: int) -> float:
    """Bound on the TV distance between time-``t`` marginals of two chains
    sharing the kernel but started from different pasts: ``b*_{t-1}``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return float(bstar_from_b(b, t - 1).values[t - 1])


@dataclass(frozen=True)
class PerturbationBound:
    """Lipschitz bound on the marginal law under a kernel perturbation."""

    value: float
    factor: float
    truncation_error: float
    horizon: int


def perturbation_bound(
    b: DecaySeq,
    bbar: DecaySeq | None,
    sup_kernel_tv: float,
    horizon: int = 256,
) -> PerturbationBound:
    """Bound ``TV(pi, pi_bar) <= (1 + sum_m b*_m) * sup_kernel_tv``.

    ``b`` governs the unperturbed kernel; ``bbar`` (when given) is only
    checked for summability, which the perturbed chain needs in order to have
    a well-defined marginal law.  The infinite sum is evaluated as a partial
    sum plus the certified renewal-series remainder, and the width of that
    bracket is reported as ``truncation_error``.
    """
    if not 0.0 <= sup_kernel_tv <= 1.0:
        raise ValueError("sup_kernel_tv must lie in [0, 1]")
    _check_b(b)
    if not b.is_summable:
        raise DivergenceError("b must be summable for the perturbation bound")
    if bbar is not None:
        _check_b(bbar)
        if not bbar.is_summable:
            raise DivergenceError("bbar must be summable for the perturbation bound")
    bs = bstar_from_b(b, horizon)
    partial = float(bs.values[1:].sum())
    low_t, high_t = bstar_sum_bracket(b, max(horizon, 256))
    tail_low = max(low_t - partial, 0.0)
    tail_high = max(high_t - partial, 0.0)
    factor = 1.0 + bs.values[0] + partial + tail_high
    return PerturbationBound(
        value=factor * sup_kernel_tv,
        factor=factor,
        truncation_error=(tail_high - tail_low) * sup_kernel_tv,
        horizon=horizon,
    )


def markov_perturbation_factor(b0: float) -> float:
    """Folklore single-step factor ``1/(1 - b_0)`` for memoryless kernels.

    Kept as a documented cross-check only: under the index convention used
    here the generic factor for a memoryless kernel is
    ``1 + b_0 + b_0/(1 - b_0)``, which is strictly larger.  Both are valid
    upper bounds; the generic code path never uses this shortcut.
    """
    if not 0.0 <= b0 < 1.0:
        raise ContractionError("b0 must lie in [0, 1)")
    return 1.0 / (1.0 - b0)


# ---------------------------------------------------------------------------
# dependence-coefficient bound curves
# ---------------------------------------------------------------------------


@dataclass
class DependenceBoundCurve:
    """Per-lag bound ingredients and the aggregated decay-coefficient bound.

    ``values[j]`` holds the lag-``j`` term (``g_j`` for the beta flavour,
    ``h_j`` for the tau flavour) for ``1 <= j <= horizon``; index 0 is unused
    and kept at 0 so indices align with lags.  ``bound[n]`` is the certified
    bound for separation ``n`` over ``1 <= n <= n_max``.
    """

    kind: str
    values: np.ndarray
    bound: np.ndarray
    n_max: int
    horizon: int
    tail_estimate: float
    inputs: dict = field(default_factory=dict)

    def bound_at(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise IndexError(f"n must lie in 1..{self.n_max}")
        return float(self.bound[n])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "bound"])
        for n in range(1, self.n_max + 1):
            w.writerow([n, repr(float(self.bound[n]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _require_pointwise(seq: DecaySeq, n: int, name: str) -> None:
    """A sequence known only through a tail-sum bound has no pointwise tail;
    padding it with zeros would silently weaken a bound curve."""
    if seq.tail is None and (seq.tail_sum_bound or 0.0) > 0.0 and len(seq) < n:
        raise ValueError(
            f"{name} stores {len(seq)} values but {n} are needed and its tail"
            " has no pointwise model; recompute it to the working horizon"
        )


def _kappa_seq(e: DecaySeq, other: DecaySeq, exp_abs_x0: float, horizon: int) -> np.ndarray:
    """Mixed covariate term: ``kappa_j = sum_{s<j} e_s * other_{j-s}
    + 2 * sum_{s>=j} e_s * E|X_0|`` for ``j = 1..horizon``."""
    eh = e.head(horizon + 1)
    oh = other.head(horizon + 1)
    kap = np.zeros(horizon + 1)
    for j in range(1, horizon + 1):
        conv = float(eh[:j] @ oh[j:0:-1])
        kap[j] = conv + 2.0 * e.sum_from(j) * exp_abs_x0
    return kap


def _curve_terms(
    bstar: DecaySeq,
    other: DecaySeq,
    e: DecaySeq,
    exp_abs_x0: float,
    horizon: int,
) -> np.ndarray:
    bs = bstar.head(horizon + 1)
    oh = other.head(horizon + 1)
    kap = _kappa_seq(e, other, exp_abs_x0, horizon)
    terms = np.zeros(horizon + 1)
    for j in range(1, horizon + 1):
        conv = float(bs[: j - 1] @ kap[j - 1 : 0 : -1]) if j >= 2 else 0.0
        terms[j] = bs[j - 1] + oh[j] + kap[j] + conv
    return terms


def _sum_tail_estimate(
    bstar: DecaySeq,
    other: DecaySeq,
    e: DecaySeq,
    exp_abs_x0: float,
    horizon: int,
) -> float:
    """Upper bound on ``sum_{j > horizon} g_j`` from the ingredient tails."""
    t_bstar = bstar.sum_from(horizon)  # sum_{j>H} b*_{j-1}
    t_other = other.sum_from(horizon + 1)
    # kappa tail: sum_{j>H} kappa_j split into the convolution part and the
    # moment part sum_{j>H} sum_{s>=j} e_s = sum_{s>H} (s - H) e_s
    eh = e.head(horizon + 1)
    t_conv = float(sum(eh[s] * other.sum_from(max(horizon + 1 - s, 1)) for s in range(horizon + 1)))
    t_conv += e.sum_from(horizon + 1) * other.total()
    if isinstance(e.tail, GeometricTail) or e.tail is None:
        # sum_{s>H} (s-H) e_s; for a geometric tail this is e(H+1)/(1-r)^2
        if e.tail is None and len(e) <= horizon + 1:
            t_mom = 0.0
        elif e.tail is None:
            s_idx = np.arange(horizon + 1, len(e))
            t_mom = float(((s_idx - horizon) * e.values[horizon + 1 :]).sum())
        else:
            r = e.tail.rate
            t_mom = e.value(horizon + 1) / (1.0 - r) ** 2
    else:
        if e.tail.power <= 2.0:
            raise DivergenceError("moment tail of e requires polynomial power > 2")
        c, k = e.tail.coeff, e.tail.power
        t_mom = c * float(horizon) ** (2.0 - k) / ((k - 1.0) * (k - 2.0))
    t_kappa = t_conv + 2.0 * exp_abs_x0 * t_mom
    # convolution tail sum_{j>H} sum_i b*_i kappa_{j-i-1}, bounded term by
    # term as b*_i times the kappa mass beyond lag max(H-i, 1)
    kap = _kappa_seq(e, other, exp_abs_x0, horizon)
    kappa_total = float(kap[1:].sum()) + t_kappa
    bs_head = bstar.head(horizon + 1)
    kap_cum = np.concatenate([np.cumsum(kap[::-1])[::-1], [0.0]])  # kap_cum[u] = sum_{t>=u,<=H} kap_t
    cross = 0.0
    for i in range(horizon + 1):
        u = max(horizon - i, 1)
        cross += bs_head[i] * (float(kap_cum[u]) + t_kappa)
    cross += bstar.sum_from(horizon + 1) * kappa_total
    return float(t_bstar + t_other + t_kappa + cross)


def beta_bound(
    bstar: DecaySeq,
    c: DecaySeq,
    e: DecaySeq,
    exp_abs_x0: float,
    n_max: int,
    horizon: int | None = None,
) -> DependenceBoundCurve:
    """Absolute-regularity bound curve.

    Computes ``g_j = b*_{j-1} + c_j + kappa_j + sum_{i<=j-2} b*_i kappa_{j-i-1}``
    and the aggregated bound ``beta(n) <= sum_{j>=n} g_j``, with the sum past
    the working horizon bounded from the ingredient tail models.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    horizon = horizon or max(4 * n_max, 64)
    for name, s in (("bstar", bstar), ("c", c), ("e", e)):
        if not s.is_summable:
            raise DivergenceError(f"ingredient {name} is not summable")
        _require_pointwise(s, horizon + 1, name)
    g = _curve_terms(bstar, c, e, exp_abs_x0, horizon)
    tail = _sum_tail_estimate(bstar, c, e, exp_abs_x0, horizon)
    rev_cum = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])
    bound = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        bound[n] = float(rev_cum[n]) + tail
    return DependenceBoundCurve(
        kind="beta",
        values=g,
        bound=bound,
        n_max=n_max,
        horizon=horizon,
        tail_estimate=tail,
        inputs={"exp_abs_x0": exp_abs_x0},
    )


def tau_bound(
    bstar: DecaySeq,
    a: DecaySeq,
    e: DecaySeq,
    exp_abs_x0: float,
    n_max: int,
    horizon: int | None = None,
) -> DependenceBoundCurve:
    """Wasserstein-flavour dependence bound curve.

    Same per-lag terms as :func:`beta_bound` with the raw covariate coupling
    cost ``a_j`` in place of ``c_j``; the aggregated bound is
    ``tau(n) <= sup_{j>=n} h_j``.  The sup past the horizon is bounded by the
    last computed term, which requires the curve to have entered its
    decreasing regime; a generous horizon is chosen by default.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    horizon = horizon or max(4 * n_max, 64)
    for name, s in (("bstar", bstar), ("a", a), ("e", e)):
        if not s.is_summable:
            raise DivergenceError(f"ingredient {name} is not summable")
        _require_pointwise(s, horizon + 1, name)
    h = _curve_terms(bstar, a, e, exp_abs_x0, horizon)
    tail_sup = float(h[horizon])
    running = np.maximum.accumulate(h[1:][::-1])[::-1]
    bound = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        bound[n] = max(float(running[n - 1]), tail_sup)
    return DependenceBoundCurve(
        kind="tau",
        values=h,
        bound=bound,
        n_max=n_max,
        horizon=horizon,
        tail_estimate=tail_sup,
        inputs={"exp_abs_x0": exp_abs_x0},
    )


def heredity_exponent(eta: float, kappa: float, p: float, q: float) -> float:
    """Decay exponent inherited by Lipschitz-weighted functionals of the
    joint process: ``min(eta - 1, (kappa - 1) * (q + 2) / (q + p + 1))``."""
    if not (eta > 1.0 and kappa > 1.0 and q > 0.0 and p >= 1.0):
        raise ValueError("need eta > 1, kappa > 1, q > 0, p >= 1")
    return min(eta - 1.0, (kappa - 1.0) * (q + 2.0) / (q + p + 1.0))


@dataclass(frozen=True)
class DecayTransferReport:
    """Diagnostics for how summability moments transfer from b to b*."""

    partial_sums: np.ndarray
    increment_ratio: float
    fitted_rate: float | None
    horizon: int
    moment_order: int


def decay_transfer_check(b: DecaySeq, k: int, horizon: int) -> DecayTransferReport:
    """Partial sums of ``m^k * b*_m`` plus stabilization diagnostics.

    ``increment_ratio`` is the share of the total contributed by the last
    decile of the horizon; for geometrically decaying ``b`` a geometric rate
    is fitted to ``b*`` by least squares on the log scale.
    """
    if k < 0:
        raise ValueError("moment order k must be >= 0")
    bs = bstar_from_b(b, horizon).values
    m = np.arange(horizon + 1, dtype=float)
    weighted = m**k * bs
    partial = np.cumsum(weighted)
    last_decile = partial[-1] - partial[int(0.9 * horizon)]
    ratio = float(last_decile / partial[-1]) if partial[-1] > 0 else 0.0
    fitted = None
    if isinstance(b.tail, GeometricTail) or (b.tail is None and len(b) < horizon // 2):
        pos = bs[1:] > 1e-300
        idx = np.arange(1, horizon + 1)[pos]
        if idx.size >= 8:
            slope = np.polyfit(idx, np.log(bs[1:][pos]), 1)[0]
            fitted = float(np.exp(slope))
    return DecayTransferReport(
        partial_sums=partial,
        increment_ratio=ratio,
        fitted_rate=fitted,
        horizon=horizon,
        moment_order=k,
    )
