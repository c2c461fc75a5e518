"""Transition-kernel contract: evaluation, truncation, numeric certification.

A :class:`KernelHandle` wraps an evaluator ``q(. | past categories, past
covariates)`` together with certified memory-decay metadata: the sequence
``b`` bounding sensitivity to remote categories, the sequence ``e`` bounding
sensitivity to each covariate lag, and a numeric certificate that the
one-step sensitivity ``b_0`` is strictly below one.  Histories are passed
most recent first; ``past_x[0]`` is the covariate entering the current step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import DecaySeq
from .prob import tv_distance

__all__ = [
    "KernelInputError",
    "CertificationError",
    "UnsupportedKernelError",
    "TruncationPolicy",
    "KernelHandle",
    "kernel_eval",
    "truncation_error_bound",
    "GridSpec",
    "certify_b0",
    "b_seq_certified",
    "e_seq_certified",
    "b_exact_from_table",
    "enumerate_b_exact",
    "table_kernel",
    "transition_table",
    "n_memory_states",
    "memory_state",
    "successor_code",
    "covariate_sensitivity_check",
]

ENUM_STATE_LIMIT = 2**20  # largest N**(2*memory) for exact enumeration
PROB_SUM_TOL = 1e-10


class KernelInputError(ValueError):
    """History or covariate input outside the kernel's domain."""


class CertificationError(RuntimeError):
    """A numeric certificate could not be established."""


class UnsupportedKernelError(RuntimeError):
    """The requested operation needs structure this kernel does not declare."""


@dataclass(frozen=True)
class TruncationPolicy:
    """How infinite histories are cut down to what the evaluator consumes.

    Categories beyond ``max_lag_y`` and covariates beyond ``max_lag_x`` are
    dropped; shorter histories are padded with ``pad_category`` and a zero
    covariate.  The induced evaluation error is bounded by the tail of the
    kernel's ``b`` and ``e`` sequences beyond the respective lags.
    """

    max_lag_y: int
    max_lag_x: int
    pad_category: int = 0


@dataclass
class KernelHandle:
    """Evaluatable transition kernel with certified decay sequences."""

    n_categories: int
    covariate_dim: int
    probs_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    truncation: TruncationPolicy
    b: DecaySeq
    e: DecaySeq
    b0_certificate: float
    b0_profile: tuple | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_categories < 2:
            raise ValueError("alphabet must have at least two categories")
        if not 0.0 <= self.b0_certificate < 1.0:
            raise CertificationError(
                f"declared b0 certificate {self.b0_certificate} is not < 1"
            )

    def _prepare(self, past_y, past_x) -> tuple[np.ndarray, np.ndarray]:
        pol = self.truncation
        y = np.asarray(past_y, dtype=np.int64).ravel()
        if y.size and (y.min() < 0 or y.max() >= self.n_categories):
            raise KernelInputError("category index outside alphabet")
        if y.size < pol.max_lag_y:
            pad = np.full(pol.max_lag_y - y.size, pol.pad_category, dtype=np.int64)
            y = np.concatenate([y, pad])
        else:
            y = y[: pol.max_lag_y]
        x = np.asarray(past_x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.covariate_dim == 1 else x.reshape(1, -1)
        if x.size and not np.all(np.isfinite(x)):
            raise KernelInputError("non-finite covariate")
        if x.ndim != 2 or (x.size and x.shape[1] != self.covariate_dim):
            raise KernelInputError(
                f"covariate history must be (lags, {self.covariate_dim})"
            )
        if x.shape[0] < pol.max_lag_x:
            pad = np.zeros((pol.max_lag_x - x.shape[0], self.covariate_dim))
            x = np.vstack([x, pad]) if x.size else pad
        else:
            x = x[: pol.max_lag_x]
        return y, x

    def probs(self, past_y, past_x) -> np.ndarray:
        """Full next-category distribution given truncated/padded history."""
        y, x = self._prepare(past_y, past_x)
        p = np.asarray(self.probs_fn(y, x), dtype=float)
        return p


def kernel_eval(kernel: KernelHandle, target: int, past_y, past_x) -> float:
    """Probability of ``target`` given the history, with contract checks."""
    if not 0 <= target < kernel.n_categories:
        raise KernelInputError("target outside alphabet")
    p = kernel.probs(past_y, past_x)
    s = p.sum()
    if abs(s - 1.0) > PROB_SUM_TOL:
        raise KernelInputError(f"kernel probabilities sum to {s}")
    return float(p[target])


def truncation_error_bound(kernel: KernelHandle, covariate_tail_scale: float = 1.0) -> float:
    """TV error induced by the handle's truncation policy.

    Cutting categories beyond ``max_lag_y`` costs at most the decay mass at
    that depth; cutting covariates beyond ``max_lag_x`` costs at most the
    ``e`` tail times a bound on the dropped covariate magnitudes.
    """
    pol = kernel.truncation
    cat_part = kernel.b.value(pol.max_lag_y)
    cov_part = kernel.e.sum_from(pol.max_lag_x) * covariate_tail_scale
    return float(cat_part + cov_part)


# ---------------------------------------------------------------------------
# memory-state encoding (most recent category in the highest digit)
# ---------------------------------------------------------------------------


def n_memory_states(n_categories: int, memory: int) -> int:
    return n_categories**memory


def memory_state(code: int, n_categories: int, memory: int) -> tuple[int, ...]:
    """Decode a state code into categories ordered most recent first."""
    out = []
    for _ in range(memory):
        code, rem = divmod(code, n_categories)
        out.append(rem)
    return tuple(reversed(out))


def successor_code(code, y_new, n_categories: int, memory: int):
    """State code after observing ``y_new`` (vectorized over arrays)."""
    return y_new * n_categories ** (memory - 1) + code // n_categories


def transition_table(kernel: KernelHandle, past_x) -> np.ndarray:
    """Next-category probabilities for every memory state, shape (N^M, N).

    Row order follows the state code: the most recent category is the
    highest base-``N`` digit.  ``past_x`` is the covariate history seen from
    the current step (most recent first); the same history is used for every
    row, so the table is exact for kernels truncated at ``max_lag_y``.
    """
    n, mem = kernel.n_categories, kernel.truncation.max_lag_y
    n_states = n_memory_states(n, mem)
    if n_states * n > ENUM_STATE_LIMIT:
        raise UnsupportedKernelError(f"{n_states} memory states exceed the enumeration limit")
    table = np.empty((n_states, n))
    for code in range(n_states):
        table[code] = kernel.probs(memory_state(code, n, mem), past_x)
    sums = table.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > PROB_SUM_TOL:
        raise KernelInputError("kernel rows do not sum to one")
    return table


# ---------------------------------------------------------------------------
# b0 certification for link-based kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Search grid for the one-step sensitivity sup.

    ``lo``/``hi``/``step`` define the compact sweep per latent dimension;
    ``boundary`` adds two far-out points per dimension where CDF links have
    flattened, standing in for the limits at infinity.
    """

    lo: float = -20.0
    hi: float = 20.0
    step: float = 1e-3
    boundary: float = 40.0

    def axis(self) -> np.ndarray:
        pts = np.arange(self.lo, self.hi + self.step / 2, self.step)
        return np.concatenate([[-self.boundary], pts, [self.boundary]])


def _b0_binary(cdf: Callable, lipschitz: float, c: float, grid: GridSpec) -> float:
    z = grid.axis()
    sup = float(np.max(np.abs(cdf(z + c) - cdf(z))))
    # nearest grid point is within step/2 and the swept function is
    # 2*L-Lipschitz in z, so this covers the true sup
    return sup + lipschitz * grid.step


def _softmax_probs(z: np.ndarray) -> np.ndarray:
    """Category probabilities with a zero reference logit, rows = points."""
    full = np.concatenate([np.zeros((z.shape[0], 1)), z], axis=1)
    full = full - full.max(axis=1, keepdims=True)
    ez = np.exp(full)
    return ez / ez.sum(axis=1, keepdims=True)


def _b0_multinomial(n_categories: int, c: float, grid: GridSpec) -> float:
    dims = n_categories - 1
    if dims > 3:
        raise UnsupportedKernelError("grid certification supported up to 4 categories")
    step = max(grid.step, 0.05 if dims == 2 else (0.25 if dims == 3 else grid.step))
    axis = np.concatenate(
        [[-grid.boundary], np.arange(grid.lo, grid.hi + step / 2, step), [grid.boundary]]
    )
    mesh = np.meshgrid(*([axis] * dims), indexing="ij")
    z = np.stack([m.ravel() for m in mesh], axis=1)
    base = _softmax_probs(z)
    best = 0.0
    for signs in np.ndindex(*([3] * dims)):
        y = c * (np.array(signs) - 1.0)
        if not np.any(y):
            continue
        shifted = _softmax_probs(z + y)
        tv = 0.5 * np.abs(shifted - base).sum(axis=1)
        best = max(best, float(tv.max()))
    # the swept TV is (dims/2)-Lipschitz in z under the sup norm
    return best + 0.25 * dims * step


def _cell_probs(success: np.ndarray) -> np.ndarray:
    """Probabilities of all 0/1 sign patterns for independent components.

    ``success[:, i]`` is the probability that component ``i`` fires; output
    column ``k`` is the pattern whose bit ``i`` (LSB = component 0) is set
    when component ``i`` fires.
    """
    pts, n = success.shape
    cells = np.ones((pts, 1))
    for i in range(n):
        p = success[:, i : i + 1]
        # doubling with component i as the new high bit makes bit i of the
        # column index mark whether component i fired
        cells = np.concatenate([cells * (1.0 - p), cells * p], axis=1)
    return cells


def _b0_discrete_choice(
    cdf: Callable, n_components: int, lipschitz: float, c: float, grid: GridSpec
) -> float:
    if n_components > 3:
        raise UnsupportedKernelError("grid certification supported up to 3 components")
    step = max(grid.step, 0.05 if n_components == 2 else 0.25)
    axis = np.concatenate(
        [[-grid.boundary], np.arange(grid.lo, grid.hi + step / 2, step), [grid.boundary]]
    )
    mesh = np.meshgrid(*([axis] * n_components), indexing="ij")
    lam = np.stack([m.ravel() for m in mesh], axis=1)
    base = _cell_probs(1.0 - cdf(-lam))
    best = 0.0
    for signs in np.ndindex(*([3] * n_components)):
        y = c * (np.array(signs) - 1.0)
        if not np.any(y):
            continue
        shifted = _cell_probs(1.0 - cdf(-(lam + y)))
        tv = 0.5 * np.abs(shifted - base).sum(axis=1)
        best = max(best, float(tv.max()))
    return best + lipschitz * n_components * step


def certify_b0(
    kernel_or_profile,
    bound_on_category_part: float,
    grid: GridSpec | None = None,
    tolerance: float = 1e-9,
) -> float:
    """Numeric sup of the one-step TV sensitivity over a bounded shift.

    Sweeps the covariate-driven latent argument over the grid (plus far-out
    boundary points) and the category-driven part over shifts of magnitude
    up to ``bound_on_category_part``, then adds the grid-resolution
    continuity correction so the returned value upper-bounds the true sup.
    Raises :class:`CertificationError` when the result does not stay below
    one.  Accepts a :class:`KernelHandle` carrying a ``b0_profile``, or the
    profile tuple directly:

    - ``("binary", cdf, lipschitz)``
    - ``("multinomial", n_categories)``
    - ``("discrete_choice", cdf, n_components, lipschitz)``
    """
    grid = grid or GridSpec()
    c = float(bound_on_category_part)
    if c < 0:
        raise ValueError("bound_on_category_part must be >= 0")
    profile = (
        kernel_or_profile.b0_profile
        if isinstance(kernel_or_profile, KernelHandle)
        else kernel_or_profile
    )
    if profile is None:
        raise UnsupportedKernelError("kernel declares no b0 certification profile")
    if c == 0.0:
        return 0.0
    kind = profile[0]
    if kind == "binary":
        sup = _b0_binary(profile[1], profile[2], c, grid)
    elif kind == "multinomial":
        sup = _b0_multinomial(profile[1], c, grid)
    elif kind == "discrete_choice":
        sup = _b0_discrete_choice(profile[1], profile[2], profile[3], c, grid)
    else:
        raise UnsupportedKernelError(f"unknown certification profile {kind!r}")
    if sup >= 1.0 - tolerance:
        raise CertificationError(f"one-step sensitivity sup {sup} is not below 1")
    return min(sup, 1.0 - tolerance)


# ---------------------------------------------------------------------------
# certified decay sequences
# ---------------------------------------------------------------------------


def b_exact_from_table(table: np.ndarray, n_categories: int, memory: int, chunk: int = 512) -> DecaySeq:
    """Exact memory sensitivity of a tabulated kernel.

    For each ``m``, the largest TV distance between rows whose state codes
    share the ``m`` most recent categories (the high code digits); exact and
    nonincreasing in ``m``.
    """
    n, mem = n_categories, memory
    if n ** (2 * mem) > ENUM_STATE_LIMIT:
        raise UnsupportedKernelError(
            f"{n}^(2*{mem}) history pairs exceed the enumeration limit"
        )
    out = np.zeros(mem + 1)
    for m in range(mem + 1):
        groups = table.reshape(n**m, n ** (mem - m), n)
        worst = 0.0
        for g in groups:
            k = g.shape[0]
            if k == 1:
                continue
            for lo in range(0, k, chunk):
                blk = g[lo : lo + chunk]
                tv = 0.5 * np.abs(blk[:, None, :] - g[None, :, :]).sum(axis=2)
                worst = max(worst, float(tv.max()))
        out[m] = worst
    return DecaySeq(out)


def enumerate_b_exact(
    kernel: KernelHandle,
    m_max: int | None = None,
    past_x=None,
) -> DecaySeq:
    """Exact memory sensitivity by exhaustive history enumeration.

    For a truncated kernel with memory ``M``, computes for each ``m`` the
    largest TV distance between next-step laws of two histories agreeing on
    their ``m`` most recent categories, at the fixed covariate history
    ``past_x`` (zeros by default).  Exact, hence always below any valid
    declared envelope.
    """
    n, mem = kernel.n_categories, kernel.truncation.max_lag_y
    if past_x is None:
        past_x = np.zeros((kernel.truncation.max_lag_x, kernel.covariate_dim))
    table = transition_table(kernel, past_x)
    seq = b_exact_from_table(table, n, mem)
    if m_max is not None and m_max < len(seq.values) - 1:
        seq = DecaySeq(seq.values[: m_max + 1])
    return seq


def table_kernel(table: np.ndarray, n_categories: int | None = None, covariate_dim: int = 1) -> KernelHandle:
    """Wrap an explicit ``(N^M, N)`` transition table as a kernel handle.

    The decay metadata is exact: ``b`` comes from exhaustive enumeration
    (zero beyond the memory depth) and the table ignores covariates, so
    ``e`` vanishes.  The table's ``b_0`` must be below one.
    """
    table = np.asarray(table, dtype=float)
    n = table.shape[1] if n_categories is None else n_categories
    mem = round(math.log(table.shape[0], n))
    if n**mem != table.shape[0]:
        raise ValueError("table rows must be a power of the alphabet size")
    if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0)) > PROB_SUM_TOL:
        raise KernelInputError("table rows must be probability vectors")
    b_exact = b_exact_from_table(table, n, mem)
    if b_exact.values[0] >= 1.0:
        raise CertificationError("table kernel has one-step sensitivity 1")

    def probs_fn(y, x, _t=table, _n=n, _mem=mem):
        code = 0
        for i in range(_mem):
            code = code * _n + int(y[i])
        return _t[code]

    return KernelHandle(
        n_categories=n,
        covariate_dim=covariate_dim,
        probs_fn=probs_fn,
        truncation=TruncationPolicy(max_lag_y=mem, max_lag_x=1),
        b=b_exact,
        e=DecaySeq.zeros(),
        b0_certificate=float(b_exact.values[0]),
        label="table-kernel",
        extra={"table": table},
    )


def b_seq_certified(kernel: KernelHandle, horizon: int, method: str = "auto") -> DecaySeq:
    """Certified category-memory decay sequence up to ``horizon``.

    ``"envelope"`` evaluates the declared analytic envelope; ``"exact"``
    enumerates small truncated instances; ``"auto"`` enumerates when the
    instance is within the enumeration budget and falls back to the envelope
    otherwise.
    """
    if method not in ("auto", "envelope", "exact"):
        raise ValueError("method must be auto, envelope or exact")
    n, mem = kernel.n_categories, kernel.truncation.max_lag_y
    small = n ** (2 * mem) <= ENUM_STATE_LIMIT
    if method == "exact" or (method == "auto" and small and mem <= horizon):
        if not small:
            raise UnsupportedKernelError("instance too large for exact enumeration")
        exact = enumerate_b_exact(kernel)
        vals = np.zeros(horizon + 1)
        vals[: min(len(exact.values), horizon + 1)] = exact.values[: horizon + 1]
        return DecaySeq(vals)
    return DecaySeq(kernel.b.head(horizon + 1), tail=kernel.b.tail)


def e_seq_certified(kernel: KernelHandle, horizon: int) -> DecaySeq:
    """Certified covariate-sensitivity sequence up to ``horizon``."""
    return DecaySeq(kernel.e.head(horizon + 1), tail=kernel.e.tail)


def covariate_sensitivity_check(
    kernel: KernelHandle,
    rng,
    lags: int | None = None,
    delta: float = 1e-3,
    n_histories: int = 50,
    slack: float = 1e-6,
) -> float:
    """Finite-difference spot check of the declared ``e`` envelope.

    Perturbs one covariate lag at a time on random histories and returns the
    worst ratio of observed TV change to the envelope prediction
    ``e_lag * |perturbation|``; values at most ``1 + slack`` confirm the
    envelope (ratios are capped only by validity, not sharpness).
    """
    from .prob import as_generator

    gen = as_generator(rng)
    pol = kernel.truncation
    lags = pol.max_lag_x if lags is None else min(lags, pol.max_lag_x)
    worst = 0.0
    for _ in range(n_histories):
        y = gen.integers(0, kernel.n_categories, size=pol.max_lag_y)
        x = gen.normal(size=(pol.max_lag_x, kernel.covariate_dim))
        base = kernel.probs(y, x)
        for s in range(lags):
            for dcoord in range(kernel.covariate_dim):
                xp = x.copy()
                xp[s, dcoord] += delta
                tv = tv_distance(base, kernel.probs(y, xp))
                env = kernel.e.value(s) * delta
                if env == 0.0:
                    if tv > slack:
                        worst = max(worst, np.inf)
                else:
                    worst = max(worst, tv / env)
    return worst
