"""Config-driven experiment runner.

Configs are line-oriented ``key = value`` files with ``[section]`` headers
(sections: experiment, problem, run).  Parsing is strict: unknown sections
or keys, bad types, and invalid values are each rejected with a distinct
error naming the offender.  All outputs are CSV with 17-significant-digit
floats and deterministically ordered rows, so identical configs produce
byte-identical files at any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import datagen, stationary
from .algorithms import coupled_run, run
from .core import ChainState, RunConfig
from .objectives import Problem
from .optimum import build_certificate, solve_optimum

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "format_config",
    "run_figure1",
    "run_speedup",
    "run_coupling",
    "run_stationary",
    "run_predict",
    "run_complexity",
    "run_task",
    "aggregate_path",
]

TASKS = ("figure1", "speedup", "coupling", "stationary", "predict", "complexity")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _parse_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key `{key}`: expected integer, got {value!r}") from None


def _parse_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key `{key}`: expected number, got {value!r}") from None


def _parse_int_list(key, value):
    return [_parse_int(key, v) for v in value.split(",") if v.strip() != ""]


def _parse_str_list(key, value):
    return [v.strip() for v in value.split(",") if v.strip() != ""]


@dataclass
class ExperimentConfig:
    """Validated experiment description (one task plus its parameters)."""

    task: str
    output_path: str | None = None
    # problem block
    loss: str = "logistic"
    l2_weight: float = 0.1
    n_features: int = 20
    records_per_client: int = 200
    informative: list = field(default_factory=lambda: [2, 10])
    generator_seeds: list = field(default_factory=lambda: [123, 456])
    noise_std: float = 10.0
    class_sep: float = 1.0
    # run block
    gamma: float | None = 0.05
    gamma_over_l: float | None = None
    local_steps: int = 100
    rounds: int = 100
    batch_size: int = 10
    n_clients: list = field(default_factory=lambda: [10, 100])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    algorithms: list = field(default_factory=lambda: ["scaffold", "fedavg"])
    burn_in: int | None = None
    n_samples: int = 1000
    thinning: int = 1
    epsilon: float | None = None

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"key `task`: must be one of {TASKS}, got {self.task!r}")
        if self.loss not in ("quadratic", "logistic"):
            raise ConfigError(f"key `loss`: must be quadratic or logistic, got {self.loss!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"key `gamma`: must be positive, got {self.gamma}")
        if self.gamma_over_l is not None and self.gamma_over_l <= 0:
            raise ConfigError(f"key `gamma_over_L`: must be positive, got {self.gamma_over_l}")
        if self.gamma is None and self.gamma_over_l is None:
            raise ConfigError("one of `gamma` or `gamma_over_L` is required")
        if self.local_steps < 1:
            raise ConfigError(f"key `local_steps`: must be >= 1, got {self.local_steps}")
        if self.rounds < 0:
            raise ConfigError(f"key `rounds`: must be >= 0, got {self.rounds}")
        if self.batch_size < 1:
            raise ConfigError(f"key `batch_size`: must be >= 1, got {self.batch_size}")
        if not self.n_clients:
            raise ConfigError("key `n_clients`: list must be nonempty")
        if any(n < 2 or n % 2 for n in self.n_clients):
            raise ConfigError(f"key `n_clients`: entries must be even and >= 2, got {self.n_clients}")
        if not self.seeds:
            raise ConfigError("key `seeds`: list must be nonempty")
        for a in self.algorithms:
            if a not in ("scaffold", "fedavg"):
                raise ConfigError(f"key `algorithms`: unknown algorithm {a!r}")
        if len(self.informative) != 2:
            raise ConfigError(f"key `informative`: need exactly 2 counts, got {self.informative}")
        if len(self.generator_seeds) != 2:
            raise ConfigError(f"key `generator_seeds`: need exactly 2 seeds, got {self.generator_seeds}")
        if self.task == "complexity" and self.epsilon is None:
            raise ConfigError("key `epsilon`: required for the complexity task")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError(f"key `epsilon`: must be positive, got {self.epsilon}")
        return self


_SCHEMA = {
    "experiment": {
        "task": ("task", str),
        "output": ("output_path", str),
    },
    "problem": {
        "loss": ("loss", str),
        "l2_weight": ("l2_weight", _parse_float),
        "n_features": ("n_features", _parse_int),
        "records_per_client": ("records_per_client", _parse_int),
        "informative": ("informative", _parse_int_list),
        "generator_seeds": ("generator_seeds", _parse_int_list),
        "noise_std": ("noise_std", _parse_float),
        "class_sep": ("class_sep", _parse_float),
    },
    "run": {
        "gamma": ("gamma", _parse_float),
        "gamma_over_L": ("gamma_over_l", _parse_float),
        "local_steps": ("local_steps", _parse_int),
        "rounds": ("rounds", _parse_int),
        "batch_size": ("batch_size", _parse_int),
        "n_clients": ("n_clients", _parse_int_list),
        "seeds": ("seeds", _parse_int_list),
        "algorithms": ("algorithms", _parse_str_list),
        "burn_in": ("burn_in", _parse_int),
        "n_samples": ("n_samples", _parse_int),
        "thinning": ("thinning", _parse_int),
        "epsilon": ("epsilon", _parse_float),
    },
}


def parse_config(path) -> ExperimentConfig:
    """Strictly parse a `key = value` config file with [section] headers."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None

    values = {}
    section = None
    explicit_gamma = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section `{section}`")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key `{key}` in section [{section}]")
        if value == "":
            raise ConfigError(f"line {lineno}: empty value for key `{key}`")
        attr, conv = _SCHEMA[section][key]
        values[attr] = value if conv is str else conv(key, value)
        if key == "gamma":
            explicit_gamma = True

    if "task" not in values:
        raise ConfigError("missing required key `task` in section [experiment]")
    if values.get("gamma_over_l") is not None and not explicit_gamma:
        values["gamma"] = None
    return ExperimentConfig(**values).validate()


def format_config(config: ExperimentConfig) -> str:
    """Emit the normalized config; `parse_config(format_config(c)) == c`."""
    def join(xs):
        return ",".join(str(x) for x in xs)

    lines = ["[experiment]", f"task = {config.task}"]
    if config.output_path is not None:
        lines.append(f"output = {config.output_path}")
    lines += [
        "",
        "[problem]",
        f"loss = {config.loss}",
        f"l2_weight = {config.l2_weight:.17g}",
        f"n_features = {config.n_features}",
        f"records_per_client = {config.records_per_client}",
        f"informative = {join(config.informative)}",
        f"generator_seeds = {join(config.generator_seeds)}",
        f"noise_std = {config.noise_std:.17g}",
        f"class_sep = {config.class_sep:.17g}",
        "",
        "[run]",
    ]
    if config.gamma is not None:
        lines.append(f"gamma = {config.gamma:.17g}")
    if config.gamma_over_l is not None:
        lines.append(f"gamma_over_L = {config.gamma_over_l:.17g}")
    lines += [
        f"local_steps = {config.local_steps}",
        f"rounds = {config.rounds}",
        f"batch_size = {config.batch_size}",
        f"n_clients = {join(config.n_clients)}",
        f"seeds = {join(config.seeds)}",
        f"algorithms = {join(config.algorithms)}",
    ]
    if config.burn_in is not None:
        lines.append(f"burn_in = {config.burn_in}")
    lines += [
        f"n_samples = {config.n_samples}",
        f"thinning = {config.thinning}",
    ]
    if config.epsilon is not None:
        lines.append(f"epsilon = {config.epsilon:.17g}")
    return "\n".join(lines) + "\n"


def build_problem(config: ExperimentConfig, n_clients, source_records=None) -> Problem:
    """Two-source heterogeneous problem for `n_clients` clients.

    Each source holds `records_per_client * n_clients / 2` records unless
    `source_records` overrides it (used when several client counts share
    one data pool).
    """
    size = source_records if source_records is not None else \
        config.records_per_client * n_clients // 2
    sources = []
    for informative, seed in zip(config.informative, config.generator_seeds):
        if config.loss == "quadratic":
            x, y, _ = datagen.make_regression(
                size, config.n_features, informative, config.noise_std, seed
            )
        else:
            x, y = datagen.make_classification(
                size, config.n_features, informative, config.class_sep, seed
            )
        sources.append((x, y))
    clients = datagen.split_two_blocks(sources[0], sources[1], n_clients)
    return Problem(clients, config.loss, config.l2_weight, config.batch_size)


def _resolve_gamma(config: ExperimentConfig, certificate):
    if config.gamma is not None:
        return config.gamma
    return config.gamma_over_l / certificate.big_l


def run_figure1(config: ExperimentConfig, threads=1):
    """Trajectory sweep over (algorithm, N, seed) cells.

    Returns (per_seed_csv, aggregate_csv).  Cells run in parallel; rows are
    sorted before writing, so the bytes do not depend on the thread count.
    """
    setups = {}
    for n in sorted(set(config.n_clients)):
        problem = build_problem(config, n)
        cert = build_certificate(problem, solve_optimum(problem))
        setups[n] = (problem, cert)

    cells = [
        (algo, n, seed)
        for algo in config.algorithms
        for n in sorted(set(config.n_clients))
        for seed in config.seeds
    ]

    def run_cell(cell):
        algo, n, seed = cell
        problem, cert = setups[n]
        gamma = _resolve_gamma(config, cert)
        rc = RunConfig(
            gamma=gamma, local_steps=config.local_steps, n_clients=n,
            rounds=config.rounds, batch_size=config.batch_size,
            seed=seed, algorithm=algo,
        )
        return cell, run(problem, cert, rc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(run_cell, cells))
    else:
        results = dict(map(run_cell, cells))

    rows = ["algorithm,N,seed,t,mse"]
    for algo, n, seed in sorted(results):
        traj = results[(algo, n, seed)]
        for t, mse in zip(traj.rounds, traj.mse):
            rows.append(f"{algo},{n},{seed},{t},{mse:.17g}")

    agg = ["algorithm,N,t,mean_mse,std_mse"]
    for algo in sorted(set(c[0] for c in cells)):
        for n in sorted(set(config.n_clients)):
            stack = np.stack([results[(algo, n, s)].mse for s in config.seeds])
            mean = stack.mean(axis=0)
            std = stack.std(axis=0)
            for t in range(stack.shape[1]):
                agg.append(f"{algo},{n},{t},{mean[t]:.17g},{std[t]:.17g}")
    return "\n".join(rows) + "\n", "\n".join(agg) + "\n"


def run_speedup(config: ExperimentConfig, threads=1):
    """Stationary parameter variance against the client count.

    All client counts re-split one shared data pool (sized for the largest
    N) so that the average noise level is common across rows; the step size
    comes from the largest-N certificate and is shared too.
    """
    n_list = sorted(set(config.n_clients))
    n_max = n_list[-1]
    pool_records = config.records_per_client * n_max // 2
    setups = {}
    for n in n_list:
        problem = build_problem(config, n, source_records=pool_records)
        setups[n] = (problem, build_certificate(problem, solve_optimum(problem)))
    gamma = _resolve_gamma(config, setups[n_max][1])

    rows = ["N,trace_cov_theta,predicted_trace"]
    for n in n_list:
        problem, cert = setups[n]
        rc = RunConfig(
            gamma=gamma, local_steps=config.local_steps, n_clients=n,
            rounds=1, batch_size=config.batch_size, seed=config.seeds[0],
        )
        est = stationary.estimate_stationary(
            problem, cert, rc, burn_in=config.burn_in,
            n_samples=config.n_samples, thinning=config.thinning,
        )
        pred = stationary.predict_first_order(problem, cert, gamma, config.local_steps)
        rows.append(
            f"{n},{float(np.trace(est.cov_theta)):.17g},"
            f"{float(np.trace(pred.cov_theta)):.17g}"
        )
    return "\n".join(rows) + "\n"


def run_coupling(config: ExperimentConfig, threads=1):
    """Mean coupled squared distance per round against the geometric bound."""
    n = sorted(set(config.n_clients))[0]
    problem = build_problem(config, n)
    cert = build_certificate(problem, solve_optimum(problem))
    gamma = _resolve_gamma(config, cert)
    d = problem.d

    dists = []
    for seed in config.seeds:
        rc = RunConfig(
            gamma=gamma, local_steps=config.local_steps, n_clients=n,
            rounds=config.rounds, batch_size=config.batch_size, seed=seed,
        )
        rng = np.random.default_rng(1_000_000 + seed)
        state_a = ChainState.zeros(d, n)
        state_b = ChainState(rng.standard_normal(d), np.zeros((n, d)))
        dists.append(coupled_run(problem, rc, state_a, state_b))
    mean_d = np.mean(dists, axis=0)
    rate = (1.0 - gamma * cert.mu / 4.0) ** config.local_steps
    bound = mean_d[0] * rate ** np.arange(config.rounds + 1)

    rows = ["t,mean_D,bound_D"]
    for t in range(config.rounds + 1):
        rows.append(f"{t},{mean_d[t]:.17g},{bound[t]:.17g}")
    return "\n".join(rows) + "\n"


def run_stationary(config: ExperimentConfig, threads=1):
    """Full stationary-moment report for the first client count."""
    n = sorted(set(config.n_clients))[0]
    problem = build_problem(config, n)
    cert = build_certificate(problem, solve_optimum(problem))
    gamma = _resolve_gamma(config, cert)
    rc = RunConfig(
        gamma=gamma, local_steps=config.local_steps, n_clients=n,
        rounds=1, batch_size=config.batch_size, seed=config.seeds[0],
    )
    est = stationary.estimate_stationary(
        problem, cert, rc, burn_in=config.burn_in,
        n_samples=config.n_samples, thinning=config.thinning,
    )
    header = f"gamma = {gamma:.17g}\nlocal_steps = {config.local_steps}\n"
    return header + stationary.estimate_report(est)


def run_predict(config: ExperimentConfig, threads=1):
    """First-order predicted covariances and bias for the first client count."""
    n = sorted(set(config.n_clients))[0]
    problem = build_problem(config, n)
    cert = build_certificate(problem, solve_optimum(problem))
    gamma = _resolve_gamma(config, cert)
    pred = stationary.predict_first_order(problem, cert, gamma, config.local_steps)

    lines = [
        f"gamma = {gamma:.17g}",
        f"local_steps = {config.local_steps}",
        f"n_clients = {n}",
        f"bias_pred_norm = {float(np.linalg.norm(pred.bias_theta)):.17g}",
    ]
    stationary._write_matrix_block(lines, "bias_pred", pred.bias_theta)
    stationary._write_matrix_block(lines, "cov_theta_pred", pred.cov_theta)
    for c in range(n):
        stationary._write_matrix_block(lines, f"cov_theta_xi_pred_{c}", pred.cov_theta_xi[c])
    for c in range(n):
        stationary._write_matrix_block(lines, f"cov_xi_pred_{c}_{c}", pred.cov_xi(c, c))
    return "\n".join(lines) + "\n"


def run_complexity(config: ExperimentConfig, threads=1):
    """Parameter recipe rows for each requested client count."""
    n0 = sorted(set(config.n_clients))[0]
    problem = build_problem(config, n0)
    cert = build_certificate(problem, solve_optimum(problem))

    rows = ["N,gamma,local_steps,rounds,grads_per_client,n_max,n_clients_ok"]
    for n in sorted(set(config.n_clients)):
        recipe = stationary.complexity_recipe(cert, config.epsilon, n)
        n_max = "inf" if math.isinf(recipe.n_max) else f"{recipe.n_max:.17g}"
        rows.append(
            f"{n},{recipe.gamma:.17g},{recipe.local_steps:.17g},"
            f"{recipe.rounds:.17g},{recipe.grads_per_client:.17g},"
            f"{n_max},{str(recipe.n_clients_ok).lower()}"
        )
    return "\n".join(rows) + "\n"


def aggregate_path(path):
    """Sibling path for figure1 aggregate rows: x.csv -> x.agg.csv."""
    path = str(path)
    if path.endswith(".csv"):
        return path[:-4] + ".agg.csv"
    return path + ".agg"


_RUNNERS = {
    "figure1": run_figure1,
    "speedup": run_speedup,
    "coupling": run_coupling,
    "stationary": run_stationary,
    "predict": run_predict,
    "complexity": run_complexity,
}


def run_task(config: ExperimentConfig, out_path=None, threads=1):
    """Run the configured task and write its output file(s).

    Returns the main output text.  figure1 additionally writes the
    aggregate CSV next to the main file.
    """
    out = out_path or config.output_path
    result = _RUNNERS[config.task](config, threads=threads)
    if config.task == "figure1":
        per_seed, agg = result
        if out is not None:
            with open(out, "w") as fh:
                fh.write(per_seed)
            with open(aggregate_path(out), "w") as fh:
                fh.write(agg)
        return per_seed
    if out is not None:
        with open(out, "w") as fh:
            fh.write(result)
    return result
