"""Experiment drivers: synchronous simulation, baselines, metrics, CSV output.

Three experiments are supported.  ``consensus`` runs pure averaging
over a chosen topology and logs the residue per round.  ``matrix-verify``
checks every mixing-matrix property numerically and reports worst
residuals.  ``lsq`` runs the decentralized optimizer (or a baseline
gossip DSGD) on a synthetic least-squares problem and logs convergence
metrics per iteration.

Output is CSV with a header row and binary64 values printed with 17
significant digits; identical configs and seeds produce byte-identical
files.  Run metadata is embedded as leading ``# key=value`` comment
lines.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import mixing
from .consensus import init_state, step_1p, step_2p
from .optimizer import dsgd_ceca_step, init_optimizer
from .problems import (
    LeastSquaresProblem,
    global_objective,
    global_optimum,
    heterogeneity_estimate,
    make_least_squares,
    stochastic_oracle,
)
from .schedule import build_schedule
from .streams import ROLE_INIT, gradient_stream, substream
from .topology import ONE_PORT, TWO_PORT, comm_matrix, normalize_mode

EXPERIMENTS = ("consensus", "matrix-verify", "lsq")
CONSENSUS_TOPOLOGIES = ("ceca", "ring", "one-peer-exp")
LSQ_TOPOLOGIES = ("ceca-2p", "ceca-1p", "ring", "one-peer-exp")
DEFAULT_VERIFY_SIZES = (2, 3, 5, 6, 10, 17, 32)
PRESETS = {
    # name: (n, N, d, sigma_s, sigma_n)
    "paper": (258, 50, 10, 0.1, 5.0),
    "desk": (16, 20, 5, 0.1, 1.0),
}
OUT_DIR_ENV = "CECA_OUT_DIR"
DIVERGENCE_LIMIT = 1e12

__all__ = [
    "ConfigError",
    "RunConfig",
    "MetricsRow",
    "LemmaCheck",
    "MatrixVerificationReport",
    "ConsensusResult",
    "LsqResult",
    "load_config_file",
    "baseline_gossip",
    "run_consensus_experiment",
    "run_matrix_verification",
    "run_lsq_experiment",
    "format_matrix_report",
]


class ConfigError(ValueError):
    """Invalid experiment configuration, rejected before any run starts."""


@dataclass
class RunConfig:
    """Flat experiment configuration; see the CLI for the same knobs."""

    experiment: str
    n: int = 258
    d: int = 10
    N: int = 50
    mode: str = "two-port"
    topology: str = "ceca"
    gamma0: float = 0.02
    decay_factor: float = 1.5
    decay_interval: int = 20
    T: int | None = None
    seed: int = 0
    seeds: int = 1
    sigma_s: float = 0.1
    sigma_n: float = 5.0
    preset: str | None = None
    sizes: tuple[int, ...] = DEFAULT_VERIFY_SIZES
    out: str | None = None

    def validated(self) -> "RunConfig":
        """Return a normalized copy, or raise ConfigError."""
        cfg = replace(self)
        if cfg.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}"
            )
        if cfg.preset is not None:
            if cfg.preset not in PRESETS:
                raise ConfigError(
                    f"unknown preset {cfg.preset!r}; expected one of {sorted(PRESETS)}"
                )
            cfg.n, cfg.N, cfg.d, cfg.sigma_s, cfg.sigma_n = PRESETS[cfg.preset]
        if cfg.experiment == "matrix-verify":
            if cfg.mode not in ("both",):
                cfg.mode = normalize_mode(cfg.mode)
            if not cfg.sizes or any(s < 2 for s in cfg.sizes):
                raise ConfigError(f"sizes must all be >= 2, got {cfg.sizes}")
            return cfg
        if cfg.n < 2:
            raise ConfigError(f"need n >= 2, got n={cfg.n}")
        if cfg.seeds < 1:
            raise ConfigError(f"need seeds >= 1, got {cfg.seeds}")
        if cfg.gamma0 <= 0 or cfg.decay_factor < 1 or cfg.decay_interval < 1:
            raise ConfigError(
                "step-size schedule needs gamma0 > 0, decay_factor >= 1, "
                "decay_interval >= 1"
            )
        if cfg.experiment == "consensus":
            if cfg.topology not in CONSENSUS_TOPOLOGIES:
                raise ConfigError(
                    f"consensus topology must be one of {CONSENSUS_TOPOLOGIES}, "
                    f"got {cfg.topology!r}"
                )
            cfg.mode = normalize_mode(cfg.mode)
        else:
            if cfg.topology not in LSQ_TOPOLOGIES:
                raise ConfigError(
                    f"lsq topology must be one of {LSQ_TOPOLOGIES}, got {cfg.topology!r}"
                )
            if cfg.topology == "ceca-1p":
                cfg.mode = ONE_PORT
            elif cfg.topology == "ceca-2p":
                cfg.mode = TWO_PORT
        needs_even = (cfg.topology == "ceca-1p") or (
            cfg.topology == "ceca" and cfg.mode == ONE_PORT
        )
        if needs_even and cfg.n % 2:
            raise ConfigError(f"the one-port model needs an even n, got n={cfg.n}")
        if cfg.topology == "one-peer-exp" and not _is_power_of_two(cfg.n):
            raise ConfigError(f"one-peer-exp needs n to be a power of 2, got n={cfg.n}")
        return cfg

    def learning_rate(self, k: int) -> float:
        return self.gamma0 / self.decay_factor ** (k // self.decay_interval)


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def load_config_file(path) -> dict:
    """Parse a flat ``key = value`` config file into RunConfig kwargs.

    Blank lines and ``#`` comments are ignored; values are coerced to
    the field's type.  CLI flags are meant to override these values.
    """
    known = {f.name: f for f in fields(RunConfig)}
    values: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _coerce(key: str, value: str):
    if key == "sizes":
        return tuple(int(v) for v in value.split(",") if v.strip())
    if key in ("n", "d", "N", "T", "decay_interval", "seed", "seeds"):
        return int(value)
    if key in ("gamma0", "decay_factor", "sigma_s", "sigma_n"):
        return float(value)
    return value


# ---------------------------------------------------------------------------
# CSV output


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def resolve_out(path) -> Path:
    """Absolute output path; relative paths land in $CECA_OUT_DIR if set."""
    out = Path(path)
    if not out.is_absolute():
        base = os.environ.get(OUT_DIR_ENV)
        if base:
            out = Path(base) / out
    return out


def _write_csv(path, header, rows, meta=None) -> Path:
    out = resolve_out(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}={_fmt(val) if not isinstance(val, str) else val}"
             for key, val in (meta or {}).items()]
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    out.write_text("\n".join(lines) + "\n")
    return out


# ---------------------------------------------------------------------------
# Baseline topologies


def baseline_gossip(topology: str, n: int, r: int) -> np.ndarray:
    """Doubly stochastic gossip matrix of a baseline topology at round r.

    ring: the static (self + both neighbors) / 3 circulant.
    one-peer-exp: one directed partner per round, weights 1/2 each,
    cycling through power-of-two shifts; needs n a power of 2.
    These weights are the standard constructions for the cited
    baselines; they are a harness choice, not a derived quantity.
    """
    if topology == "ring":
        if n < 2:
            raise ConfigError(f"ring needs n >= 2, got {n}")
        eye = np.eye(n)
        shift = _shift_matrix(n, 1)
        return (eye + shift + shift.T) / 3.0
    if topology == "one-peer-exp":
        if not _is_power_of_two(n):
            raise ConfigError(f"one-peer-exp needs n to be a power of 2, got {n}")
        rounds = n.bit_length() - 1
        return 0.5 * (np.eye(n) + _shift_matrix(n, 2 ** (r % rounds)))
    raise ConfigError(f"unknown baseline topology {topology!r}")


def _shift_matrix(n: int, s: int) -> np.ndarray:
    mat = np.zeros((n, n))
    idx = np.arange(n)
    mat[idx, (idx - s) % n] = 1.0
    return mat


# ---------------------------------------------------------------------------
# Consensus experiment


@dataclass(frozen=True)
class ConsensusResult:
    rows: list
    meta: dict
    path: Path | None


def run_consensus_experiment(config: RunConfig, initial=None) -> ConsensusResult:
    """Average random per-agent vectors and log the residue per round.

    Rows are (round, residue, rel_deviation, comm_scalars) where the
    residue is the summed distance of the agents' values from the true
    mean and rel_deviation is the worst per-entry deviation relative
    to the input magnitude.  The exact topology stops communicating
    once it has converged; baselines keep gossiping.
    """
    cfg = config.validated()
    if cfg.experiment != "consensus":
        raise ConfigError(f"expected a consensus config, got {cfg.experiment!r}")
    if initial is not None:
        values = np.array(initial, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != cfg.n:
            raise ConfigError(
                f"initial values have {values.shape[0]} rows, config says n={cfg.n}"
            )
    else:
        values = np.stack(
            [substream(cfg.seed, ROLE_INIT, agent).standard_normal(cfg.d)
             for agent in range(1, cfg.n + 1)]
        )
    target = values.mean(axis=0)
    scale = float(np.max(np.abs(values))) or 1.0
    tau = build_schedule(cfg.n).tau
    rounds = cfg.T if cfg.T is not None else (tau + 2 if cfg.topology == "ceca" else 4 * tau)

    snapshots = [values]
    if cfg.topology == "ceca":
        schedule = build_schedule(cfg.n)
        step = step_1p if cfg.mode == ONE_PORT else step_2p
        state = init_state(values)
        for _ in range(min(rounds, tau)):
            state = step(state, schedule)
            snapshots.append(state.incl)
        while len(snapshots) <= rounds:  # converged; nothing further is sent
            snapshots.append(state.incl)
    else:
        current = values
        for k in range(rounds):
            gossip = baseline_gossip(cfg.topology, cfg.n, k)
            current = gossip @ current
            snapshots.append(current)

    rows = []
    for k, snap in enumerate(snapshots):
        residue = float(np.linalg.norm(snap - target, axis=1).sum())
        rel_dev = float(np.max(np.abs(snap - target))) / scale
        comm = cfg.d * (min(k, tau) if cfg.topology == "ceca" else k)
        rows.append((k, residue, rel_dev, comm))

    meta = {
        "experiment": "consensus",
        "topology": cfg.topology,
        "mode": cfg.mode if cfg.topology == "ceca" else "n/a",
        "n": cfg.n,
        "d": cfg.d,
        "seed": cfg.seed,
        "init_distribution": "standard-normal" if initial is None else "user-supplied",
    }
    path = None
    if cfg.out:
        path = _write_csv(
            cfg.out, ["round", "residue", "rel_deviation", "comm_scalars"], rows, meta
        )
    return ConsensusResult(rows=rows, meta=meta, path=path)


# ---------------------------------------------------------------------------
# Mixing-matrix verification


@dataclass(frozen=True)
class LemmaCheck:
    n: int
    mode: str
    lemma: str
    status: str  # pass | fail | skipped
    residual: float | None
    detail: str = ""


@dataclass(frozen=True)
class MatrixVerificationReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(row.status != "fail" for row in self.rows)


_PRODUCT_TOL = 1e-12
_FAMILY_TOL = 1e-12
_COMMUTE_TOL = 1e-12
_NORM_SLACK = 1e-9


def run_matrix_verification(config: RunConfig) -> MatrixVerificationReport:
    """Check every mixing-matrix property for the configured sizes.

    Produces one row per (n, mode, property) with the worst residual
    observed; one-port rows for odd n are reported as skipped.
    """
    cfg = config.validated()
    if cfg.experiment != "matrix-verify":
        raise ConfigError(f"expected a matrix-verify config, got {cfg.experiment!r}")
    modes = (TWO_PORT, ONE_PORT) if cfg.mode == "both" else (cfg.mode,)
    rows: list[LemmaCheck] = []
    for n in cfg.sizes:
        for mode in modes:
            if mode == ONE_PORT and n % 2:
                rows.append(
                    LemmaCheck(n, mode, "all", "skipped", None,
                               "one-port needs an even agent count")
                )
                continue
            rows.extend(_verify_one(n, mode))
    report = MatrixVerificationReport(rows=rows)
    if cfg.out:
        _write_csv(
            cfg.out,
            ["n", "mode", "lemma", "status", "residual", "detail"],
            [(r.n, r.mode, r.lemma, r.status, "" if r.residual is None else r.residual,
              r.detail) for r in rows],
            {"experiment": "matrix-verify", "passed": report.passed},
        )
    return report


def _verify_one(n: int, mode: str) -> list[LemmaCheck]:
    schedule = build_schedule(n)
    tau = schedule.tau
    pairs = [
        mixing.build_mixing(schedule, r, comm_matrix(schedule, r, mode))
        for r in range(tau)
    ]
    matrices = [m for pair in pairs for m in (pair.W, pair.Wg)]
    checks: list[LemmaCheck] = []

    family_residual = max(mixing.verify_family(m, _FAMILY_TOL).residual for m in matrices)
    family_ok = all(mixing.verify_family(m, _FAMILY_TOL).passed for m in matrices)
    checks.append(_check(n, mode, "family-structure", family_ok, family_residual))

    worst_norm = max(mixing.operator_norm(m) for m in matrices)
    norm_ok = worst_norm <= math.sqrt(2.0) + _NORM_SLACK
    checks.append(
        _check(n, mode, "norm-bound", norm_ok, max(0.0, worst_norm - math.sqrt(2.0)))
    )

    commute_residual = max(mixing.commutation_check(m) for m in matrices)
    checks.append(
        _check(n, mode, "commutation", commute_residual <= _COMMUTE_TOL, commute_residual)
    )

    first = mixing.product_consensus(schedule, mode, tau - 1)
    first_residual = float(np.max(np.abs(first - mixing.product_form_first_cycle(n))))
    checks.append(
        _check(n, mode, "product-first-cycle", first_residual <= _PRODUCT_TOL,
               first_residual)
    )

    stationary = mixing.product_form_stationary(n)
    stationary_residual = max(
        float(np.max(np.abs(mixing.product_consensus(schedule, mode, t) - stationary)))
        for t in (tau, tau + 3, 3 * tau)
    )
    checks.append(
        _check(n, mode, "product-stationary", stationary_residual <= _PRODUCT_TOL,
               stationary_residual)
    )

    semigroup_residual = 0.0
    semigroup_ok = True
    for left in pairs:
        for right in pairs:
            product_report = mixing.verify_family(left.W @ right.W, _FAMILY_TOL)
            semigroup_ok &= product_report.passed
            semigroup_residual = max(semigroup_residual, product_report.residual)
    checks.append(_check(n, mode, "semigroup", semigroup_ok, semigroup_residual))
    return checks


def _check(n: int, mode: str, lemma: str, ok: bool, residual: float) -> LemmaCheck:
    return LemmaCheck(n, mode, lemma, "pass" if ok else "fail", float(residual))


def format_matrix_report(report: MatrixVerificationReport) -> str:
    header = f"{'n':>5} {'mode':<9} {'lemma':<22} {'status':<8} {'worst residual':>16}"
    lines = [header, "-" * len(header)]
    for row in report.rows:
        residual = "" if row.residual is None else format(row.residual, ".3e")
        tail = f"  {row.detail}" if row.detail else ""
        lines.append(
            f"{row.n:>5} {row.mode:<9} {row.lemma:<22} {row.status:<8} {residual:>16}{tail}"
        )
    lines.append("overall: " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Least-squares experiment


@dataclass(frozen=True)
class MetricsRow:
    """Per-iteration metrics of an optimization run.

    comm_scalars counts one d-vector exchanged per agent per iteration
    (every supported topology has constant degree, so sends and
    receives both equal one message per round).
    """

    k: int
    residue: float
    optimality_gap: float
    grad_norm_sq: float
    consensus_dev: float
    comm_scalars: int

    def astuple(self):
        return (self.k, self.residue, self.optimality_gap, self.grad_norm_sq,
                self.consensus_dev, self.comm_scalars)


METRICS_HEADER = ["k", "residue", "optimality_gap", "grad_norm_sq",
                  "consensus_dev", "comm_scalars"]


@dataclass(frozen=True)
class LsqResult:
    per_seed: list
    mean: list
    heterogeneity: list
    meta: dict
    paths: list


def run_lsq_experiment(config: RunConfig) -> LsqResult:
    """Run the configured optimizer on fresh problems for each seed.

    Every seed regenerates the problem, the initial models, and the
    gradient-noise streams; the per-seed metric curves and their mean
    are returned and, when an output path is set, written as CSV
    (mean at the configured path, per-seed files alongside it).
    """
    cfg = config.validated()
    if cfg.experiment != "lsq":
        raise ConfigError(f"expected an lsq config, got {cfg.experiment!r}")
    horizon = cfg.T if cfg.T is not None else 300
    per_seed = []
    heterogeneity = []
    for run_seed in range(cfg.seed, cfg.seed + cfg.seeds):
        rows, het = _run_lsq_once(cfg, run_seed, horizon)
        per_seed.append(rows)
        heterogeneity.append(het)

    mean_rows = [
        MetricsRow(
            k=per_seed[0][k].k,
            residue=float(np.mean([rows[k].residue for rows in per_seed])),
            optimality_gap=float(np.mean([rows[k].optimality_gap for rows in per_seed])),
            grad_norm_sq=float(np.mean([rows[k].grad_norm_sq for rows in per_seed])),
            consensus_dev=float(np.mean([rows[k].consensus_dev for rows in per_seed])),
            comm_scalars=per_seed[0][k].comm_scalars,
        )
        for k in range(horizon + 1)
    ]

    meta = {
        "experiment": "lsq",
        "topology": cfg.topology,
        "n": cfg.n,
        "d": cfg.d,
        "N": cfg.N,
        "sigma_s": cfg.sigma_s,
        "sigma_n": cfg.sigma_n,
        "gamma0": cfg.gamma0,
        "decay_factor": cfg.decay_factor,
        "decay_interval": cfg.decay_interval,
        "T": horizon,
        "seeds": cfg.seeds,
        "first_seed": cfg.seed,
        "init_distribution": "standard-normal",
        "heterogeneity_estimate_max": max(heterogeneity),
    }
    paths = []
    if cfg.out:
        out = resolve_out(cfg.out)
        if cfg.seeds > 1:
            for offset, rows in enumerate(per_seed):
                seed_path = out.with_name(f"{out.stem}_seed{cfg.seed + offset}{out.suffix}")
                seed_meta = dict(meta, seeds=1, first_seed=cfg.seed + offset)
                paths.append(_write_csv(seed_path, METRICS_HEADER,
                                        [r.astuple() for r in rows], seed_meta))
        paths.append(_write_csv(out, METRICS_HEADER,
                                [r.astuple() for r in mean_rows], meta))
    return LsqResult(per_seed=per_seed, mean=mean_rows, heterogeneity=heterogeneity,
                     meta=meta, paths=paths)


def _run_lsq_once(cfg: RunConfig, run_seed: int, horizon: int):
    problem = make_least_squares(cfg.n, cfg.N, cfg.d, cfg.sigma_s, cfg.sigma_n,
                                 seed=run_seed)
    x_opt, f_opt = global_optimum(problem)
    oracle = stochastic_oracle(problem)
    x0 = np.stack(
        [substream(run_seed, ROLE_INIT, agent).standard_normal(cfg.d)
         for agent in range(1, cfg.n + 1)]
    )

    rows = [_metrics(problem, x0, x_opt, f_opt, 0, cfg.d, cfg.topology)]
    mean_samples = [x0.mean(axis=0)]
    if cfg.topology in ("ceca-2p", "ceca-1p"):
        schedule = build_schedule(cfg.n)
        state = init_optimizer(x0, cfg.learning_rate(0))
        for k in range(horizon):
            state.gamma = cfg.learning_rate(k)
            state = dsgd_ceca_step(state, oracle, schedule, cfg.mode, seed=run_seed)
            rows.append(_metrics(problem, state.x, x_opt, f_opt, k + 1, cfg.d,
                                 cfg.topology))
            if (k + 1) % 25 == 0:
                mean_samples.append(state.x.mean(axis=0))
    else:
        current = x0
        for k in range(horizon):
            gossip = baseline_gossip(cfg.topology, cfg.n, k)
            grads = np.empty_like(current)
            for agent0 in range(cfg.n):
                rng = gradient_stream(run_seed, agent0 + 1, k)
                grads[agent0] = oracle(current[agent0], agent0 + 1, rng)
            current = gossip @ (current - cfg.learning_rate(k) * grads)
            rows.append(_metrics(problem, current, x_opt, f_opt, k + 1, cfg.d,
                                 cfg.topology))
            if (k + 1) % 25 == 0:
                mean_samples.append(current.mean(axis=0))
    return rows, heterogeneity_estimate(problem, np.stack(mean_samples))


def _metrics(problem: LeastSquaresProblem, models: np.ndarray, x_opt: np.ndarray,
             f_opt: float, k: int, d: int, topology: str) -> MetricsRow:
    residue = float(np.linalg.norm(models - x_opt, axis=1).sum())
    if not np.isfinite(residue) or residue > DIVERGENCE_LIMIT:
        raise RuntimeError(
            f"divergence: residue={residue:.3e} at iteration {k} on topology "
            f"{topology} (limit {DIVERGENCE_LIMIT:.0e})"
        )
    mean_model = models.mean(axis=0)
    gap = global_objective(problem, mean_model) - f_opt
    mean_grad = np.einsum("ind,in->d", problem.A,
                          problem.A @ mean_model - problem.b) / problem.n
    deviation = float(np.linalg.norm(models - mean_model))
    return MetricsRow(
        k=k,
        residue=residue,
        optimality_gap=float(gap),
        grad_norm_sq=float(mean_grad @ mean_grad),
        consensus_dev=deviation,
        comm_scalars=d * k,
    )
