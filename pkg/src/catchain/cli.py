"""Command-line surface: simulate | bounds | verify | fit.

Config-file driven (JSON data model, unknown keys rejected), one seed per
run, CSV outputs written atomically.  Exit codes: 0 success, 1 verification
or fit failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from .bounds import DecaySeq, DivergenceError, bstar_from_b, bstar_renewal_oracle, perturbation_bound
from .dependence import certificate_for_model, empirical_beta_small
from .estimate import Dataset, FitConfig, fit_mle, loglik_gradient, semiparametric_fit
from .kernels import (
    b_exact_from_table,
    certify_b0,
    table_kernel,
)
from .models import (
    BinaryInfiniteOrderSpec,
    ConstructionError,
    DiscreteChoiceSpec,
    MultinomialSpec,
    NonlinearBinarySpec,
    ObservationDrivenBinarySpec,
    logistic_link,
    model_to_kernel,
    probit_link,
    russell_damping,
)
from .prob import SeededRng
from .simulate import (
    AR1Covariates,
    FiniteStateMarkovCovariates,
    HorizonError,
    IIDCovariates,
    UnsupportedCovariateError,
    coupled_ladder_mc,
    exact_marginal_law,
    path_to_csv,
    sample_covariates,
    sample_forward,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


def thread_cap() -> int:
    """Parallelism ceiling from CATCHAIN_THREADS (computation is replica
    chunked; 1 disables any worker pools)."""
    try:
        return max(1, int(os.environ.get("CATCHAIN_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"seed", "out", "model", "covariates", "simulate", "bounds", "fit", "verify"}
_MODEL_KEYS = {
    "observation_driven_binary": {"class", "alpha", "beta", "gamma", "link"},
    "binary_infinite_order": {"class", "a", "gamma", "link"},
    "nonlinear_binary": {"class", "persistence", "feedback", "alpha", "gamma", "link"},
    "multinomial": {"class", "A", "B", "Gamma", "n_categories"},
    "discrete_choice": {"class", "A", "B", "Gamma", "n_components", "noise"},
}
_COV_KEYS = {
    "iid_normal": {"kind", "mean", "sd", "dim"},
    "iid_const": {"kind", "mean", "dim"},
    "ar1": {"kind", "rho", "sd", "dim"},
    "finite_markov": {"kind", "transition", "emission"},
}
_SIM_KEYS = {"window", "eps", "max_burnin"}
_BOUNDS_KEYS = {"horizon", "n_max", "metric", "p_moment"}
_FIT_KEYS = {"warmup", "semiparametric", "selftest", "n", "data"}
_VERIFY_KEYS = {"replicas", "length", "pairs", "sequences"}


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _check_keys(cfg, _TOP_KEYS, "config root")
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if "model" in cfg:
        mdl = cfg["model"]
        cls = mdl.get("class")
        if cls not in _MODEL_KEYS:
            raise ConfigError(f"unknown model class {cls!r}")
        _check_keys(mdl, _MODEL_KEYS[cls], f"model block ({cls})")
    if "covariates" in cfg:
        cov = cfg["covariates"]
        kind = cov.get("kind")
        if kind not in _COV_KEYS:
            raise ConfigError(f"unknown covariate kind {kind!r}")
        _check_keys(cov, _COV_KEYS[kind], f"covariates block ({kind})")
    for key, allowed in (
        ("simulate", _SIM_KEYS),
        ("bounds", _BOUNDS_KEYS),
        ("fit", _FIT_KEYS),
        ("verify", _VERIFY_KEYS),
    ):
        if key in cfg:
            _check_keys(cfg[key], allowed, f"{key} block")
    return cfg


def emit_config(cfg: dict) -> str:
    """Canonical serialization; parse(emit(parse(x))) == parse(x)."""
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def _build_link(name: str):
    if name == "logistic":
        return logistic_link()
    if name == "probit":
        return probit_link()
    raise ConfigError(f"unknown link {name!r}")


def build_model(block: dict):
    cls = block["class"]
    if cls == "observation_driven_binary":
        return ObservationDrivenBinarySpec(
            alpha=block.get("alpha", [0.0]),
            beta=block.get("beta", [0.0]),
            gamma=block.get("gamma", [0.0]),
            link=_build_link(block.get("link", "logistic")),
        )
    if cls == "binary_infinite_order":
        return BinaryInfiniteOrderSpec(
            a=block.get("a", [0.0]),
            gamma=block.get("gamma", [0.0]),
            link=_build_link(block.get("link", "logistic")),
        )
    if cls == "nonlinear_binary":
        link = _build_link(block.get("link", "logistic"))
        g, kappa = russell_damping(block.get("persistence", 0.5), block.get("feedback", 0.1), link)
        if kappa >= 1.0:
            raise ConfigError(f"nonlinear map is not contractive (factor {kappa})")
        return NonlinearBinarySpec(
            g=g, kappa=kappa, alpha=block.get("alpha", 0.0), gamma=block.get("gamma", [0.0]), link=link
        )
    if cls == "multinomial":
        return MultinomialSpec(
            A=[np.asarray(m, dtype=float) for m in block.get("A", [])],
            B=[np.asarray(m, dtype=float) for m in block.get("B", [])],
            Gamma=np.asarray(block["Gamma"], dtype=float),
            n_categories=int(block["n_categories"]),
        )
    if cls == "discrete_choice":
        return DiscreteChoiceSpec(
            A=[np.asarray(m, dtype=float) for m in block.get("A", [])],
            B=[np.asarray(m, dtype=float) for m in block.get("B", [])],
            Gamma=np.asarray(block["Gamma"], dtype=float),
            n_components=int(block["n_components"]),
            noise=block.get("noise", "logistic"),
        )
    raise ConfigError(f"unknown model class {cls!r}")


def build_covariates(block: dict):
    kind = block["kind"]
    if kind == "iid_normal":
        return IIDCovariates(
            kind="normal",
            mean=block.get("mean", 0.0),
            sd=block.get("sd", 1.0),
            dim=block.get("dim", 1),
        )
    if kind == "iid_const":
        return IIDCovariates(kind="const", mean=block.get("mean", 0.0), dim=block.get("dim", 1))
    if kind == "ar1":
        return AR1Covariates(rho=block["rho"], sd=block.get("sd", 1.0), dim=block.get("dim", 1))
    if kind == "finite_markov":
        return FiniteStateMarkovCovariates(
            transition=tuple(tuple(row) for row in block["transition"]),
            emission=tuple(tuple(np.atleast_1d(row)) for row in block["emission"]),
        )
    raise ConfigError(f"unknown covariate kind {kind!r}")


# ---------------------------------------------------------------------------
# atomic file helpers
# ---------------------------------------------------------------------------


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out_dir: str, seed: int, quiet: bool) -> int:
    sim = cfg.get("simulate", {})
    window = int(sim.get("window", 100))
    eps = float(sim.get("eps", 1e-3))
    max_burnin = int(sim.get("max_burnin", 4096))
    spec = build_model(cfg["model"])
    cov = build_covariates(cfg.get("covariates", {"kind": "iid_const", "mean": 0.0}))
    try:
        kernel = model_to_kernel(spec)
    except (ConstructionError, CertificationError) as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    x = sample_covariates(cov, window + max_burnin, SeededRng(seed, 1))
    try:
        path = sample_forward(kernel, x, window, eps, SeededRng(seed, 2))
    except HorizonError as exc:
        print(f"burn-in horizon error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    write_atomic(os.path.join(out_dir, "path.csv"), path_to_csv(path))
    cert = {
        "burnin_used": path.burnin_used,
        "eps_requested": eps,
        "eps_achieved": path.stationarity_gap_bound,
        "b0_certificate": kernel.b0_certificate,
        "window": window,
        "seed": seed,
    }
    write_atomic(
        os.path.join(out_dir, "certificate.json"), json.dumps(cert, indent=2, sort_keys=True) + "\n"
    )
    if not quiet:
        print(f"wrote {window} rows, burn-in {path.burnin_used}, gap {path.stationarity_gap_bound:.3e}")
    return EXIT_OK


def cmd_bounds(cfg: dict, out_dir: str, seed: int, quiet: bool) -> int:
    blk = cfg.get("bounds", {})
    horizon = int(blk.get("horizon", 64))
    n_max = int(blk.get("n_max", 20))
    metric = blk.get("metric", "l1")
    p_raw = blk.get("p_moment", "inf")
    p_moment = math.inf if p_raw in ("inf", None) else float(p_raw)
    spec = build_model(cfg["model"])
    cov = build_covariates(cfg.get("covariates", {"kind": "iid_normal"}))
    try:
        kernel = model_to_kernel(spec)
        cert = certificate_for_model(
            spec, cov, metric=metric, p_moment=p_moment, n_max=n_max, horizon=horizon, kernel=kernel
        )
    except ConstructionError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (UnsupportedCovariateError, DivergenceError) as exc:
        print(f"bound assembly failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    b_head = DecaySeq(kernel.b.head(horizon + 1))
    write_atomic(os.path.join(out_dir, "b.csv"), b_head.to_csv())
    write_atomic(os.path.join(out_dir, "bstar.csv"), bstar_from_b(kernel.b, horizon).to_csv())
    write_atomic(os.path.join(out_dir, "dependence_bound.csv"), cert.curve.to_csv())
    write_atomic(os.path.join(out_dir, "certificate.txt"), cert.summary() + "\n")
    if not quiet:
        print(cert.summary())
    return EXIT_OK


def _ladder_chunked(table_a, table_b, init_a, init_b, length, replicas, seed, stream_base):
    """Ladder Monte Carlo in fixed chunks, optionally thread-parallel.

    Chunking is fixed so the merged counts are identical for every value of
    CATCHAIN_THREADS (integer count addition commutes).
    """
    from concurrent.futures import ThreadPoolExecutor

    n_chunks = 8
    sizes = [replicas // n_chunks] * n_chunks
    sizes[-1] += replicas - sum(sizes)

    def run(chunk_idx):
        y1, y2 = coupled_ladder_mc(
            table_a,
            table_b,
            init_a,
            init_b,
            2,
            2,
            length,
            sizes[chunk_idx],
            SeededRng(seed, stream_base + chunk_idx),
        )
        mism = (y1 != y2).sum(axis=1)
        m1 = np.stack([(y1 == c).sum(axis=1) for c in range(2)], axis=1)
        m2 = np.stack([(y2 == c).sum(axis=1) for c in range(2)], axis=1)
        return mism, m1, m2

    workers = min(thread_cap(), n_chunks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(i) for i in range(n_chunks)]
    mism = sum(p[0] for p in parts)
    m1 = sum(p[1] for p in parts)
    m2 = sum(p[2] for p in parts)
    return mism, m1, m2


def _verify_checks(cfg: dict, seed: int):
    """Yield (name, passed, detail) for the execution-time verification suite."""
    from .kernels import memory_state
    from .prob import tv_distance

    vblk = cfg.get("verify", {})
    replicas = int(vblk.get("replicas", 20000))
    length = int(vblk.get("length", 8))
    pairs = int(vblk.get("pairs", 3))
    sequences = int(vblk.get("sequences", 20))

    # reset-chain visit probabilities: two independent routes must agree
    gen = SeededRng(seed, 10).generator()
    worst = 0.0
    for _ in range(sequences):
        raw = np.sort(gen.uniform(0.0, 0.9, size=8))[::-1]
        b = DecaySeq(raw)
        d = np.abs(
            bstar_from_b(b, 100).values[1:] - bstar_renewal_oracle(b, 100).values[1:]
        ).max()
        worst = max(worst, float(d))
    yield "house_of_cards_agreement", worst < 1e-12, f"max diff {worst:.2e}"

    b_markov = DecaySeq(np.array([0.3, 0.0]))
    bs = bstar_from_b(b_markov, 12).values
    # sequential product is the bit-exact reference for the memoryless case
    err = float(np.abs(bs[1:] - np.cumprod(np.full(12, 0.3))).max())
    yield "markov_visit_closed_form", err == 0.0, f"max dev {err:.2e}"

    # exact relaxation: marginal TV between initializations vs b*
    gen = SeededRng(seed, 11).generator()
    ok = True
    detail = ""
    for i in range(pairs):
        raw = gen.dirichlet(np.ones(2), size=4)
        table = 0.75 * raw + 0.25 / 2
        kern = table_kernel(table)
        bstar = bstar_from_b(kern.b, 12).values
        x = np.zeros((12, 1))
        for c1 in range(4):
            for c2 in range(4):
                for t in range(1, 13):
                    tv = tv_distance(
                        exact_marginal_law(kern, x, list(memory_state(c1, 2, 2)), t),
                        exact_marginal_law(kern, x, list(memory_state(c2, 2, 2)), t),
                    )
                    if tv > bstar[t - 1] + 1e-12:
                        ok = False
                        detail = f"pair {i} t={t} tv {tv:.4f} > {bstar[t-1]:.4f}"
    yield "relaxation_bound_exact", ok, detail or "all initialization pairs bounded"

    # glued ladder Monte Carlo vs mismatch bound and marginal laws
    gen = SeededRng(seed, 12).generator()
    ok = True
    detail = ""
    for i in range(pairs):
        raw = gen.dirichlet(np.ones(2), size=4)
        table_a = 0.7 * raw + 0.3 / 2
        table_b = np.clip(table_a + gen.uniform(-0.04, 0.04, size=table_a.shape), 0.05, None)
        table_b = table_b / table_b.sum(axis=1, keepdims=True)
        mism_ct, marg1, marg2 = _ladder_chunked(
            table_a, table_b, 0, 3, length, replicas, seed, 100 + 16 * i
        )
        delta = float(0.5 * np.abs(table_a - table_b).sum(axis=1).max())
        b_hi = np.maximum(
            b_exact_from_table(table_a, 2, 2).values, b_exact_from_table(table_b, 2, 2).values
        )
        bsm = bstar_from_b(DecaySeq(b_hi), length + 1).values
        mism = mism_ct / replicas
        se = np.sqrt(np.clip(mism * (1 - mism), 1e-12, None) / replicas)
        bound = np.array(
            [
                bsm[t - 1] + delta + sum(bsm[l] * delta for l in range(t - 1))
                for t in range(1, length + 1)
            ]
        )
        if np.any(mism > bound + 4 * se):
            ok = False
            detail = f"pair {i}: mismatch exceeded the coupling bound"
        ka, kb = table_kernel(table_a), table_kernel(table_b)
        x = np.zeros((length, 1))
        for t in (1, length // 2, length):
            for marg, kern, init in ((marg1, ka, 0), (marg2, kb, 3)):
                law = exact_marginal_law(kern, x, list(memory_state(init, 2, 2)), t)
                emp = marg[t - 1] / replicas
                z = np.abs(emp[1] - law[1]) / max(np.sqrt(law[1] * (1 - law[1]) / replicas), 1e-9)
                if z > 4.0:
                    ok = False
                    detail = f"pair {i}: marginal law off by {z:.1f} sigma at t={t}"
    yield "glued_coupling_mc", ok, detail or f"{pairs} pairs within 4 sigma"

    # perturbation bound vs exact invariant laws of memoryless kernels
    gen = SeededRng(seed, 13).generator()
    ok = True
    detail = ""
    for i in range(pairs):
        q = 0.6 * gen.dirichlet(np.ones(3), size=3) + 0.4 / 3
        qbar = np.clip(q + gen.uniform(-0.05, 0.05, size=q.shape), 0.02, None)
        qbar = qbar / qbar.sum(axis=1, keepdims=True)
        sup = float(0.5 * np.abs(q - qbar).sum(axis=1).max())
        b0 = float(
            max(
                0.5 * np.abs(q[i1] - q[i2]).sum()
                for i1 in range(3)
                for i2 in range(3)
            )
        )
        pb = perturbation_bound(DecaySeq(np.array([b0, 0.0])), None, sup, horizon=256)
        pi_q = np.linalg.matrix_power(q, 4096)[0]
        pi_qbar = np.linalg.matrix_power(qbar, 4096)[0]
        tv = float(0.5 * np.abs(pi_q - pi_qbar).sum())
        if tv > pb.value + 1e-12:
            ok = False
            detail = f"fixture {i}: invariant TV {tv:.4f} > bound {pb.value:.4f}"
    yield "perturbation_bound_exact", ok, detail or "invariant laws within bound"

    # one-step sensitivity certificates
    from scipy.special import expit

    v = certify_b0(("binary", expit, 0.25), 1.0)
    ok = abs(v - 0.2449) < 1e-3 and v < 1
    detail = f"logistic c=1 certified {v:.5f}"
    v3 = certify_b0(("multinomial", 3), 1.0)
    v2 = certify_b0(("discrete_choice", expit, 2, 0.25), 1.0)
    ok = ok and v3 < 1.0 and v2 < 1.0
    yield "b0_certification", ok, detail + f"; multinomial {v3:.3f}; choice {v2:.3f}"

    # exact mixing of a small joint chain vs the certified curve
    spec = BinaryInfiniteOrderSpec(a=[0.5, 0.2], gamma=[0.4])
    cov = FiniteStateMarkovCovariates(
        transition=((0.8, 0.2), (0.3, 0.7)), emission=((0.0,), (1.0,))
    )
    kernel = model_to_kernel(spec, max_lag_y=2, max_lag_x=1)
    cert = certificate_for_model(
        spec, cov, metric="discrete", p_moment=math.inf, n_max=8, kernel=kernel
    )
    emp = empirical_beta_small(kernel, cov, range(1, 7), window=3)
    ok = all(emp[k] <= cert.curve.bound[k + 1] for k in range(6))
    yield "dependence_certificate", ok, (
        f"beta(1) exact {emp[0]:.4f} <= bound {cert.curve.bound[1]:.4f}"
    )


def cmd_verify(cfg: dict, out_dir: str, seed: int, quiet: bool) -> int:
    rows = []
    all_ok = True
    for name, passed, detail in _verify_checks(cfg, seed):
        rows.append((name, "PASS" if passed else "FAIL", detail))
        all_ok = all_ok and passed
        if not quiet:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    lines = ["check,status,detail"]
    for name, status, detail in rows:
        safe = detail.replace(",", ";")
        lines.append(f"{name},{status},{safe}")
    write_atomic(os.path.join(out_dir, "verify_report.csv"), "\n".join(lines) + "\n")
    return EXIT_OK if all_ok else EXIT_FAILURE


def cmd_fit(cfg: dict, out_dir: str, seed: int, quiet: bool, data_path: str | None) -> int:
    blk = cfg.get("fit", {})
    model_blk = cfg.get("model")
    if model_blk is None or model_blk.get("class") != "observation_driven_binary":
        print("fit requires an observation_driven_binary model block", file=sys.stderr)
        return EXIT_CONFIG
    template = build_model(model_blk)
    selftest = bool(blk.get("selftest", False))
    if selftest:
        n = int(blk.get("n", 5000))
        cov = build_covariates(cfg.get("covariates", {"kind": "iid_normal"}))
        kernel = model_to_kernel(template)
        x = sample_covariates(cov, n + 500, SeededRng(seed, 21))
        path = sample_forward(kernel, x, n, 1e-6, SeededRng(seed, 22))
        data = Dataset(y=path.y, x=path.x)
    else:
        src = data_path or blk.get("data")
        if not src:
            print("fit needs --data PATH or fit.data in the config", file=sys.stderr)
            return EXIT_CONFIG
        try:
            data = Dataset.from_csv(src)
        except (OSError, ValueError) as exc:
            print(f"cannot read dataset: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    fit_cfg = FitConfig(warmup=blk.get("warmup"))
    try:
        result = fit_mle(template, data, fit_cfg)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if result.convergence == "failed":
        print("optimizer failed from every start", file=sys.stderr)
        return EXIT_FAILURE
    names = (
        [f"alpha_{k+1}" for k in range(template.alpha.size)]
        + [f"beta_{j+1}" for j in range(template.beta.size)]
        + [f"gamma_{i+1}" for i in range(template.gamma.size)]
    )
    lines = ["name,estimate" + (",stderr" if result.stderr is not None else "")]
    for i, nm in enumerate(names):
        row = f"{nm},{float(result.theta_hat[i])!r}"
        if result.stderr is not None:
            row += f",{float(result.stderr[i])!r}"
        lines.append(row)
    write_atomic(os.path.join(out_dir, "theta_hat.csv"), "\n".join(lines) + "\n")
    summary = [
        f"convergence: {result.convergence}",
        f"loglik: {result.loglik!r}",
        f"n: {result.n_used}",
        f"spectral radius at estimate: {result.report.spectral_radius!r}",
    ]
    if selftest:
        truth = np.concatenate([template.alpha, template.beta, template.gamma])
        err = float(np.abs(result.theta_hat - truth).max())
        grad = loglik_gradient(template, data)
        summary.append(f"selftest max abs error: {err!r}")
        summary.append(f"selftest score at truth (per obs): {float(np.abs(grad).max()) / data.n!r}")
    write_atomic(os.path.join(out_dir, "fit_summary.txt"), "\n".join(summary) + "\n")
    if bool(blk.get("semiparametric", False)):
        sem = semiparametric_fit(data, template)
        rows = ["z,fhat"]
        rows += [f"{float(z)!r},{float(f)!r}" for z, f in zip(sem.grid, sem.fhat)]
        write_atomic(os.path.join(out_dir, "fhat_grid.csv"), "\n".join(rows) + "\n")
    if not quiet:
        print("\n".join(summary))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="catchain",
        description="categorical time-series simulation, coupling bounds and fitting",
    )
    parser.add_argument("command", choices=["simulate", "bounds", "verify", "fit"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--replicas", type=int, default=None, help="override verify replicas")
    parser.add_argument("--data", default=None, help="dataset CSV for fit")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = args.out or cfg.get("out", "catchain-out")
    if args.replicas is not None:
        cfg.setdefault("verify", {})["replicas"] = args.replicas
    os.makedirs(out_dir, exist_ok=True)
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, seed, args.quiet)
        if args.command == "bounds":
            return cmd_bounds(cfg, out_dir, seed, args.quiet)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir, seed, args.quiet)
        return cmd_fit(cfg, out_dir, seed, args.quiet, args.data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
