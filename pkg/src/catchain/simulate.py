"""Covariate generation, forward sampling, coupled paths, exact small laws.

The coupled-path construction glues a ladder of intermediate chains: the
first rung swaps the initial past, every later rung swaps the kernel at one
more time index, and adjacent rungs are joined by time-iterated maximal
couplings.  Only two adjacent rungs are materialized at a time.  The outer
pair consists of the first rung and the ladder diagonal, whose per-time
mismatch probability obeys the relaxation/perturbation bound assembled from
``b*`` and the per-time kernel distances.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .bounds import DecaySeq, GeometricTail, bstar_from_b
from .kernels import KernelHandle, successor_code, transition_table
from .prob import as_generator

__all__ = [
    "HorizonError",
    "UnsupportedCovariateError",
    "IIDCovariates",
    "AR1Covariates",
    "FiniteStateMarkovCovariates",
    "sample_covariates",
    "SamplePath",
    "CoupledPathPair",
    "sample_forward",
    "glued_coupling",
    "coupled_ladder_mc",
    "kernel_distance_profile",
    "exact_marginal_law",
    "covariate_coupling_coeffs",
    "path_to_csv",
]


class HorizonError(RuntimeError):
    """The requested accuracy is unattainable within the available burn-in."""


class UnsupportedCovariateError(RuntimeError):
    """The covariate model does not support the requested operation."""


# ---------------------------------------------------------------------------
# covariate models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IIDCovariates:
    """Independent draws; ``kind`` is ``"normal"`` or ``"const"``."""

    kind: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    dim: int = 1

    def sample(self, length: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        if self.kind == "const":
            return np.full((length, self.dim), self.mean)
        if self.kind == "normal":
            return self.mean + self.sd * gen.normal(size=(length, self.dim))
        raise UnsupportedCovariateError(f"unknown iid kind {self.kind!r}")

    def exp_abs(self) -> float:
        if self.kind == "const":
            return abs(self.mean) * self.dim
        return self.dim * (abs(self.mean) + self.sd * math.sqrt(2.0 / math.pi)) if self.mean else self.dim * self.sd * math.sqrt(2.0 / math.pi)

    def norm_p(self, p: float) -> float:
        if self.kind == "const":
            return abs(self.mean) * self.dim
        if not math.isinf(p):
            from scipy.stats import norm

            return float(norm(self.mean, self.sd).moment(int(p)) ** (1.0 / p)) * self.dim
        raise UnsupportedCovariateError("unbounded covariates have no sup norm")


@dataclass(frozen=True)
class AR1Covariates:
    """Stationary scalar-per-component AR(1) with Gaussian innovations."""

    rho: float
    sd: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise UnsupportedCovariateError("|rho| must be < 1 for stationarity")

    @property
    def stationary_sd(self) -> float:
        return self.sd / math.sqrt(1.0 - self.rho**2)

    def sample(self, length: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        x = np.empty((length, self.dim))
        x[0] = self.stationary_sd * gen.normal(size=self.dim)
        eps = self.sd * gen.normal(size=(length - 1, self.dim)) if length > 1 else None
        for t in range(1, length):
            x[t] = self.rho * x[t - 1] + eps[t - 1]
        return x

    def exp_abs(self) -> float:
        return self.dim * self.stationary_sd * math.sqrt(2.0 / math.pi)

    def norm_p(self, p: float) -> float:
        if math.isinf(p):
            raise UnsupportedCovariateError("AR(1) covariates are unbounded")
        from scipy.stats import norm

        return self.dim * float(norm(0, self.stationary_sd).moment(int(p)) ** (1.0 / p))


@dataclass(frozen=True)
class FiniteStateMarkovCovariates:
    """Finite-state chain with an emission map into R^d."""

    transition: tuple
    emission: tuple

    def __post_init__(self):
        P = self._P()
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-10:
            raise UnsupportedCovariateError("transition rows must be probabilities")

    def _P(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.transition, dtype=float))

    def _g(self) -> np.ndarray:
        g = np.asarray(self.emission, dtype=float)
        return g.reshape(g.shape[0], -1)

    @property
    def n_states(self) -> int:
        return self._P().shape[0]

    @property
    def dim(self) -> int:
        return self._g().shape[1]

    def invariant(self) -> np.ndarray:
        P = self._P()
        vals, vecs = np.linalg.eig(P.T)
        i = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.real(vecs[:, i])
        pi = np.abs(pi)
        return pi / pi.sum()

    def sample_states(self, length: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        P = self._P()
        pi = self.invariant()
        cum = np.cumsum(P, axis=1)
        s = np.empty(length, dtype=np.int64)
        s[0] = gen.choice(self.n_states, p=pi)
        u = gen.random(length - 1) if length > 1 else None
        for t in range(1, length):
            s[t] = int(np.searchsorted(cum[s[t - 1]], u[t - 1], side="right"))
        return s

    def sample(self, length: int, rng) -> np.ndarray:
        return self._g()[self.sample_states(length, rng)]

    def exp_abs(self) -> float:
        return float(self.invariant() @ np.abs(self._g()).sum(axis=1))

    def norm_p(self, p: float) -> float:
        g_norms = np.abs(self._g()).sum(axis=1)
        if math.isinf(p):
            return float(g_norms.max())
        return float((self.invariant() @ g_norms**p) ** (1.0 / p))


def sample_covariates(model, length: int, rng) -> np.ndarray:
    """Stationary covariate path of shape ``(length, d)``."""
    return model.sample(length, rng)


# ---------------------------------------------------------------------------
# forward sampling with certified burn-in
# ---------------------------------------------------------------------------


@dataclass
class SamplePath:
    """Realized trajectory with its stationarity certificate.

    ``y[t]`` and ``x[t]`` cover the requested window; ``burnin_used`` steps
    were simulated and discarded before it, and ``stationarity_gap_bound``
    bounds the total variation gap between the windowed law and the
    initialization-free limit.
    """

    y: np.ndarray
    x: np.ndarray
    lam: np.ndarray | None
    burnin_used: int
    stationarity_gap_bound: float
    seed_note: str = ""


@dataclass
class CoupledPathPair:
    """Outer pair of the glued ladder plus per-time mismatch indicators."""

    y1: np.ndarray
    y2: np.ndarray
    mismatch: np.ndarray
    length: int


def _required_burnin(b: DecaySeq, window: int, eps: float, max_burnin: int) -> tuple[int, float]:
    horizon = max_burnin + window
    bs = bstar_from_b(b, horizon).values
    csum = np.concatenate([[0.0], np.cumsum(bs)])
    for n in range(0, max_burnin + 1):
        gap = float(csum[n + window] - csum[n])
        if gap <= eps:
            return n, gap
    raise HorizonError(
        f"cannot reach eps={eps} within {max_burnin} burn-in steps (gap {gap})"
    )


def _history_probs(kernel: KernelHandle, y_real: list, x: np.ndarray, t: int, z_init) -> np.ndarray:
    """Kernel law at time ``t`` (1-based) given realized categories and the
    pre-time-0 past ``z_init`` (most recent first)."""
    mly, mlx = kernel.truncation.max_lag_y, kernel.truncation.max_lag_x
    hist = y_real[t - 2 :: -1] if t >= 2 else []
    if len(hist) < mly:
        hist = hist + list(z_init[: mly - len(hist)])
    x_hist = x[t - 1 :: -1][:mlx]
    return kernel.probs(hist, x_hist)


_LATENT_CLASSES = (
    "ObservationDrivenBinarySpec",
    "NonlinearBinarySpec",
    "MultinomialSpec",
    "DiscreteChoiceSpec",
)


def _latent_forward(spec, x: np.ndarray, gen) -> tuple[np.ndarray, np.ndarray]:
    """Sample a latent-recursion model forward, carrying the state exactly.

    Zero initialization of both the latent state and the category prehistory,
    matching the finite-depth approximation the burn-in certificate targets.
    """
    from .models import _block_dim, _lag_counts, _response_probs, category_vector

    T = x.shape[0]
    p, q = _lag_counts(spec)
    k = _block_dim(spec)
    y = np.zeros(T, dtype=np.int64)
    lam = np.zeros((T, k))
    blocks = np.zeros((max(q, 1), k))
    is_nonlinear = type(spec).__name__ == "NonlinearBinarySpec"
    if not is_nonlinear:
        b_mats = (
            spec.B
            if type(spec).__name__ in ("MultinomialSpec", "DiscreteChoiceSpec")
            else [np.array([[bj]]) for bj in spec.beta]
        )
    u = gen.random(T)
    for t in range(T):
        first = np.zeros(k)
        if type(spec).__name__ == "ObservationDrivenBinarySpec":
            for lag in range(p):
                if t - 1 - lag >= 0:
                    first[0] += spec.alpha[lag] * y[t - 1 - lag]
            first[0] += float(spec.gamma @ x[t])
        elif is_nonlinear:
            prev = y[t - 1] if t >= 1 else 0
            first[0] = spec.g(blocks[0, 0]) + spec.alpha * prev + float(spec.gamma @ x[t])
        else:
            for lag, Am in enumerate(spec.A):
                if t - 1 - lag >= 0:
                    first += Am @ category_vector(spec, int(y[t - 1 - lag]))
            first += spec.Gamma @ x[t]
        if not is_nonlinear:
            for i, Bj in enumerate(b_mats):
                first = first + Bj @ blocks[i]
        if q > 1:
            blocks[1:] = blocks[:-1]
        blocks[0] = first
        lam[t] = first
        probs = _response_probs(spec, first)
        y[t] = int((probs.cumsum() < u[t]).sum())
    return y, lam


def sample_forward(kernel: KernelHandle, x: np.ndarray, window: int, eps: float, rng) -> SamplePath:
    """Simulate a window with burn-in certified against the decay envelope.

    The burn-in is the smallest ``n`` with
    ``sum_{l < window} b*_{n + l} <= eps``; the covariate path must be long
    enough to cover it (``len(x) >= window + n``).  Initialization is the
    all-zero past.  Kernels built from latent-recursion specs are simulated
    by carrying the latent state forward (the exact finite-depth
    approximation); other kernels fall back to per-step evaluation.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < window:
        raise HorizonError("covariate path shorter than the requested window")
    gen = as_generator(rng)
    burnin, gap = _required_burnin(kernel.b, window, eps, x.shape[0] - window)
    total = burnin + window
    x_used = x[:total]
    spec = kernel.extra.get("spec") if kernel.extra else None
    if spec is not None and type(spec).__name__ in _LATENT_CLASSES:
        y, lam_all = _latent_forward(spec, x_used, gen)
        lam = lam_all[burnin:]
    else:
        y = np.empty(total, dtype=np.int64)
        for t in range(1, total + 1):
            p = _history_probs(kernel, list(y[: t - 1]), x_used, t, np.zeros(0, dtype=np.int64))
            y[t - 1] = int(gen.choice(kernel.n_categories, p=p / p.sum()))
        lam = None
    return SamplePath(
        y=y[burnin:],
        x=x_used[burnin:],
        lam=lam,
        burnin_used=burnin,
        stationarity_gap_bound=gap,
    )


# ---------------------------------------------------------------------------
# glued coupled paths
# ---------------------------------------------------------------------------


def _coupled_step(p: np.ndarray, q: np.ndarray, u: int, gen) -> int:
    """Draw the partner of ``u`` under the maximal coupling of ``p`` and ``q``."""
    overlap = min(p[u], q[u])
    if p[u] <= 0:
        raise ValueError("realized value has zero probability under its own law")
    if gen.random() < overlap / p[u]:
        return u
    resid = np.clip(q - np.minimum(p, q), 0.0, None)
    resid = resid / resid.sum()
    return int(gen.choice(resid.size, p=resid))


def glued_coupling(
    kernel_a: KernelHandle,
    kernel_b: KernelHandle,
    x_a: np.ndarray,
    x_b: np.ndarray,
    z_a,
    z_b,
    length: int,
    rng,
) -> CoupledPathPair:
    """One draw of the outer pair of the glued coupling ladder.

    The first path follows ``kernel_a`` on covariates ``x_a`` from past
    ``z_a``.  The ladder then swaps the past to ``z_b`` and afterwards one
    time index per rung to ``kernel_b`` on ``x_b``; its diagonal is returned
    as the second path, whose marginal law is the plain ``kernel_b`` path
    law.  Adjacent rungs are coupled maximally one time step at a time.
    """
    if kernel_a.n_categories != kernel_b.n_categories:
        raise ValueError("kernels must share the alphabet")
    gen = as_generator(rng)
    x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
    x_b = np.atleast_2d(np.asarray(x_b, dtype=float))
    z_a = np.asarray(z_a, dtype=np.int64)
    z_b = np.asarray(z_b, dtype=np.int64)

    def law(path_idx: int, y_real: list, t: int) -> np.ndarray:
        # rung ``path_idx`` uses kernel_b up to (and including) time path_idx
        if path_idx >= 0 and t <= path_idx:
            return _history_probs(kernel_b, y_real, x_b, t, z_b)
        z = z_a if path_idx < 0 else z_b
        x = x_a if path_idx < 0 else x_a
        return _history_probs(kernel_a, y_real, x, t, z)

    prev = []
    for t in range(1, length + 1):
        p = law(-1, prev, t)
        prev.append(int(gen.choice(p.size, p=p / p.sum())))
    y1 = np.array(prev, dtype=np.int64)

    diag = np.zeros(length, dtype=np.int64)
    for j in range(0, length + 1):
        cur: list = []
        for t in range(1, length + 1):
            p = law(j - 1, prev, t)
            q = law(j, cur, t)
            cur.append(_coupled_step(p, q, prev[t - 1], gen))
        if j >= 1:
            diag[j - 1] = cur[j - 1]
        prev = cur
    mismatch = y1 != diag
    return CoupledPathPair(y1=y1, y2=diag, mismatch=mismatch, length=length)


def kernel_distance_profile(
    kernel_a: KernelHandle, kernel_b: KernelHandle, x_a: np.ndarray, x_b: np.ndarray, length: int
) -> np.ndarray:
    """Exact per-time sup TV distance between the two kernels over all
    memory states (truncated kernels only); index ``t`` runs 1..length."""
    x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
    x_b = np.atleast_2d(np.asarray(x_b, dtype=float))
    out = np.zeros(length + 1)
    for t in range(1, length + 1):
        ta = transition_table(kernel_a, x_a[t - 1 :: -1][: kernel_a.truncation.max_lag_x])
        tb = transition_table(kernel_b, x_b[t - 1 :: -1][: kernel_b.truncation.max_lag_x])
        if ta.shape != tb.shape:
            raise ValueError("kernels must share memory depth for the exact profile")
        out[t] = float(0.5 * np.abs(ta - tb).sum(axis=1).max())
    return out


def coupled_ladder_mc(
    table_a: np.ndarray,
    table_b: np.ndarray,
    code_a0: int,
    code_b0: int,
    n_categories: int,
    memory: int,
    length: int,
    replicas: int,
    rng,
):
    """Vectorized replica simulation of the glued ladder for table kernels.

    ``table_a``/``table_b`` map memory-state codes to next-category laws and
    are held fixed over time (no-covariate or frozen-covariate case).
    Returns ``(y1, y2)`` as ``(length, replicas)`` integer arrays.
    """
    gen = as_generator(rng)
    R = replicas
    n, mem = n_categories, memory

    def simulate_plain(table, code0):
        codes = np.full(R, code0, dtype=np.int64)
        ys = np.empty((length + 1, R), dtype=np.int64)
        cds = np.empty((length + 1, R), dtype=np.int64)
        cds[0] = codes
        for t in range(1, length + 1):
            rows = table[codes]
            u = gen.random(R)
            ys[t] = (rows.cumsum(axis=1) < u[:, None]).sum(axis=1)
            codes = successor_code(codes, ys[t], n, mem)
            cds[t] = codes
        return ys, cds

    prev_y, prev_c = simulate_plain(table_a, code_a0)
    y1 = prev_y[1:].copy()

    diag = np.zeros((length + 1, R), dtype=np.int64)
    for j in range(0, length + 1):
        cur_y = np.empty((length + 1, R), dtype=np.int64)
        cur_c = np.empty((length + 1, R), dtype=np.int64)
        cur_c[0] = code_b0
        for t in range(1, length + 1):
            tp = table_b if t <= j - 1 else table_a
            tq = table_b if t <= j else table_a
            p = tp[prev_c[t - 1]]
            q = tq[cur_c[t - 1]]
            u = prev_y[t]
            pu = np.take_along_axis(p, u[:, None], axis=1)[:, 0]
            qu = np.take_along_axis(q, u[:, None], axis=1)[:, 0]
            overlap = np.minimum(pu, qu)
            stay = gen.random(R) * pu < overlap
            resid = np.clip(q - np.minimum(p, q), 0.0, None)
            mass = resid.sum(axis=1)
            safe = np.where(mass > 0, mass, 1.0)
            draw = gen.random(R) * safe
            v_res = (resid.cumsum(axis=1) < draw[:, None]).sum(axis=1)
            v = np.where(stay, u, np.minimum(v_res, n - 1))
            cur_y[t] = v
            cur_c[t] = successor_code(cur_c[t - 1], v, n, mem)
        if j >= 1:
            diag[j] = cur_y[j]
        prev_y, prev_c = cur_y, cur_c
    return y1, diag[1:]


# ---------------------------------------------------------------------------
# exact small-instance laws
# ---------------------------------------------------------------------------


def exact_marginal_law(kernel: KernelHandle, x: np.ndarray, init, t: int) -> np.ndarray:
    """Exact law of the category at time ``t`` by transfer-matrix iteration.

    ``init`` is the pre-time-0 past (most recent first, at least the memory
    depth); ``x[i]`` is the covariate at time ``i+1``.  Only feasible for
    truncated kernels with a small memory-state space.
    """
    n, mem = kernel.n_categories, kernel.truncation.max_lag_y
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if t < 1 or t > x.shape[0]:
        raise ValueError("t must lie within the covariate path")
    init = np.asarray(init, dtype=np.int64)
    if init.size < mem:
        init = np.concatenate([init, np.zeros(mem - init.size, dtype=np.int64)])
    code = 0
    for i in range(mem):
        code = code * n + int(init[i])
    dist = np.zeros(n**mem)
    dist[code] = 1.0
    law = None
    for s in range(1, t + 1):
        table = transition_table(kernel, x[s - 1 :: -1][: kernel.truncation.max_lag_x])
        law = dist @ table
        new = np.zeros_like(dist)
        codes = np.arange(dist.size)
        for y_new in range(n):
            succ = successor_code(codes, y_new, n, mem)
            np.add.at(new, succ, dist * table[:, y_new])
        dist = new
    return law


# ---------------------------------------------------------------------------
# covariate coupling coefficients
# ---------------------------------------------------------------------------


def covariate_coupling_coeffs(
    model,
    horizon: int,
    metric: str = "l1",
) -> DecaySeq:
    """Per-lag expected discrepancy of the canonical covariate coupling.

    For independent draws the coupling shares all innovations from time 1 on,
    so the coefficient vanishes for ``t >= 1``.  For AR(1) the pre-time-0
    innovations are swapped for an independent copy, leaving a geometrically
    damped gap with an exact closed form.  For finite-state chains the two
    copies run independently until they meet, and the discrepancy law is
    iterated exactly on the product chain.
    """
    if metric not in ("l1", "discrete"):
        raise ValueError("metric must be 'l1' or 'discrete'")
    if isinstance(model, IIDCovariates):
        vals = np.zeros(horizon + 1)
        if model.kind == "normal" and model.sd > 0:
            vals[0] = 1.0 if metric == "discrete" else model.dim * 2.0 * model.sd / math.sqrt(math.pi)
        return DecaySeq(vals)
    if isinstance(model, AR1Covariates):
        if metric == "discrete":
            raise UnsupportedCovariateError(
                "continuous AR(1) paths never meet under the discrete metric"
            )
        first = model.dim * 2.0 * model.stationary_sd / math.sqrt(math.pi)
        vals = first * np.abs(model.rho) ** np.arange(horizon + 1)
        tail = GeometricTail(abs(model.rho)) if model.rho != 0 else None
        return DecaySeq(vals, tail=tail)
    if isinstance(model, FiniteStateMarkovCovariates):
        P = model._P()
        g = model._g()
        S = model.n_states
        pi = model.invariant()
        dist = np.outer(pi, pi)
        if metric == "discrete":
            cost = (np.abs(g[:, None, :] - g[None, :, :]).sum(axis=2) > 1e-12).astype(float)
        else:
            cost = np.abs(g[:, None, :] - g[None, :, :]).sum(axis=2)
        vals = np.empty(horizon + 1)
        vals[0] = float((dist * cost).sum())
        meet_next = np.min([(P[i] * P[j]).sum() for i in range(S) for j in range(S) if i != j] or [1.0])
        for t in range(1, horizon + 1):
            new = np.zeros_like(dist)
            # off-diagonal mass moves independently; met pairs move together
            for i in range(S):
                for j in range(S):
                    m = dist[i, j]
                    if m == 0.0:
                        continue
                    if i == j:
                        new[np.arange(S), np.arange(S)] += m * P[i]
                    else:
                        new += m * np.outer(P[i], P[j])
            dist = new
            vals[t] = float((dist * cost).sum())
        p_neq = float(dist.sum() - np.trace(dist))
        rate = 1.0 - meet_next
        tail_bound = 0.0
        if rate < 1.0 and p_neq > 0:
            tail_bound = float(cost.max()) * p_neq * rate / (1.0 - rate)
        return DecaySeq(vals, tail_sum_bound=tail_bound)
    raise UnsupportedCovariateError(f"unsupported covariate model {type(model).__name__}")


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def path_to_csv(path: SamplePath, dest=None) -> str:
    """Serialize a path as ``t,y,x_1..x_d[,lambda_1..k]`` CSV."""
    d = path.x.shape[1]
    header = ["t", "y"] + [f"x_{i+1}" for i in range(d)]
    lam = path.lam
    if lam is not None:
        lam = np.atleast_2d(lam) if lam.ndim == 1 else lam
        header += [f"lambda_{i+1}" for i in range(lam.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t in range(path.y.size):
        row = [t + 1, int(path.y[t])] + [repr(float(v)) for v in path.x[t]]
        if lam is not None:
            row += [repr(float(v)) for v in lam[t]]
        w.writerow(row)
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text
