"""Command-line interface ``hubbard-vqe``.

Exit codes: 0 on success, 2 for configuration errors, 3 when a numerical
consistency check fails.  ``HUBBARD_VQE_WORKERS`` sets the worker count of
sweeps.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import bench
from .errors import CapabilityError, ConfigError, NumericalConsistencyError
from .lattice import load_model_config, model_from_config, validate_config
from .mps import MpsState
from .observables import correlation_matrix
from .solvers import dmrg_for_model, exact_ground_state, reference_ground_state
from .vqe import OptimizationConfig, run_vqe

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
#: Largest register accepted without ``--heavy``.
DESK_QUBITS = 24
_VARIATIONAL_SLACK = 1e-9


def _workers() -> int:
    raw = os.environ.get("HUBBARD_VQE_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"HUBBARD_VQE_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("HUBBARD_VQE_WORKERS must be >= 1")
    return n


def model_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(), help="YAML/JSON model config."),
        click.option("--nx", type=int),
        click.option("--ny", type=int),
        click.option("--t", "t", type=float),
        click.option("--u", "u", type=float),
        click.option("--v", "v", type=float),
        click.option("--d", "d", type=float),
        click.option("--heavy", is_flag=True, help="Allow lattices beyond desk scale."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def output_options(fn):
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json")(fn)
    fn = click.option("--out", type=click.Path(), help="Write output here instead of stdout.")(fn)
    return fn


def _model(config_path, nx, ny, t, u, v, d, heavy, seed=None):
    cfg = load_model_config(config_path) if config_path else {}
    for key, val in (("nx", nx), ("ny", ny), ("t", t), ("u", u), ("v", v), ("d", d),
                     ("seed", seed)):
        if val is not None:
            cfg[key] = val
    model = model_from_config(validate_config(cfg))
    if model.n_qubits > DESK_QUBITS and not heavy:
        raise ConfigError(
            f"{model.geometry.label()} needs {model.n_qubits} qubits; pass --heavy"
        )
    return model


def _emit(doc, out, fmt):
    """Write a flat mapping or a list of flat mappings as JSON or CSV."""
    rows = doc if isinstance(doc, list) else [doc]
    if fmt == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [])
        w.writeheader()
        for row in rows:
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in row.items()})
        text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Benchmark VQE circuits on Hubbard models against ED and DMRG references."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@model_options
@output_options
@click.option("--seed", type=int, help="Disorder seed of the model.")
def ed(config_path, nx, ny, t, u, v, d, heavy, out, fmt, seed):
    """Exact ground energy in the checkerboard sector."""
    model = _model(config_path, nx, ny, t, u, v, d, heavy, seed)
    res = exact_ground_state(model)
    if res.residual > 1e-8:
        raise NumericalConsistencyError(f"ED residual {res.residual:.2e} above 1e-8")
    _emit({"lattice": model.geometry.label(), **model.config(), "energy": res.energy,
           "residual": res.residual, "method": "ed"}, out, fmt)


@cli.command()
@model_options
@output_options
@click.option("--seed", type=int, help="Disorder seed of the model.")
@click.option("--chi", type=int, help="Bond-dimension cap (default: exact).")
@click.option("--sweeps", type=int, default=20, show_default=True)
@click.option("--state", "state_path", type=click.Path(), help="Save the MPS checkpoint here.")
def dmrg(config_path, nx, ny, t, u, v, d, heavy, out, fmt, seed, chi, sweeps, state_path):
    """Two-site DMRG ground energy in the checkerboard sector."""
    model = _model(config_path, nx, ny, t, u, v, d, heavy, seed)
    res = dmrg_for_model(model, chi, sweeps)
    if any(b > a + 1e-8 for a, b in zip(res.energies, res.energies[1:])):
        raise NumericalConsistencyError("DMRG sweep energies increased")
    if state_path:
        res.state.save(state_path)
    _emit({"lattice": model.geometry.label(), **model.config(), "energy": res.energy,
           "sweeps": res.iterations, "converged": res.converged, "chi": chi,
           "method": "dmrg"}, out, fmt)


@cli.command()
@model_options
@output_options
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
@click.option("--ansatz", type=click.Choice(["np", "ep", "uccsd"]), default="np")
@click.option("--layers", type=int, default=1, show_default=True)
@click.option("--restarts", type=int, default=10, show_default=True)
@click.option("--loss", type=click.Choice(["energy", "overlap"]), default="energy")
@click.option("--chi", type=int)
@click.option("--max-steps", type=int, default=1000, show_default=True)
@click.option("--no-warm-start", is_flag=True)
@click.option("--state", "state_path", type=click.Path(), help="Save the best state here.")
def vqe(config_path, nx, ny, t, u, v, d, heavy, out, fmt, seed, ansatz, layers, restarts,
        loss, chi, max_steps, no_warm_start, state_path):
    """Optimize a circuit with restarts; report every restart."""
    model = _model(config_path, nx, ny, t, u, v, d, heavy)
    ref = reference_ground_state(model, "auto", chi)
    reference = ref.to_dense() if model.n_qubits <= 20 else ref.to_mps()
    config = OptimizationConfig(loss=loss, restarts=restarts, seed=seed, chi=chi,
                                max_steps=max_steps, warm_start_u0=not no_warm_start,
                                n_jobs=_workers())
    result = run_vqe(model, (ansatz, layers), config, reference)
    low = min(result.energies)
    if low < ref.energy - _VARIATIONAL_SLACK:
        raise NumericalConsistencyError(
            f"VQE energy {low:.12f} below the reference {ref.energy:.12f}"
        )
    if state_path and result.best is not None:
        from .circuits import build_ansatz, evaluate
        from .lattice import checkerboard_occupation
        from .mps import product_state

        circuit = build_ansatz(ansatz, model.geometry, layers)
        init = product_state(checkerboard_occupation(model.geometry), chi)
        evaluate(circuit, result.best.params, init).save(state_path)
        result.state_path = str(state_path)
    if fmt == "json":
        doc = result.to_dict()
        doc["reference_energy"] = ref.energy
        _emit(doc, out, fmt)
    else:
        rows = [{"restart": r.index, "energy": r.energy, "reference_energy": ref.energy,
                 "fidelity": r.fidelity, "reason": r.reason, "steps": r.steps, "seed": r.seed}
                for r in result.restarts]
        _emit(rows, out, fmt)


def _load_plan(path) -> bench.SweepPlan:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read sweep plan {path}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("sweep plan must be a mapping")
    return bench.SweepPlan.from_dict(doc)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="YAML sweep plan.")
@output_options
@click.option("--seed", type=int, help="Override the plan's master seed.")
@click.option("--restarts", type=int, help="Override the plan's restart count.")
@click.option("--loss", type=click.Choice(["energy", "overlap"]))
@click.option("--chi", type=int)
@click.option("--cache", "cache_dir", type=click.Path(), help="Cache directory.")
@click.option("--heavy", is_flag=True)
def sweep(config_path, out, fmt, seed, restarts, loss, chi, cache_dir, heavy):
    """Run a sweep plan and print the summary tables."""
    plan = _load_plan(config_path)
    for name, val in (("seed", seed), ("restarts", restarts), ("loss", loss), ("chi", chi)):
        if val is not None:
            setattr(plan, name, val)
    if not heavy:
        for nx, ny in plan.lattices:
            if 2 * nx * ny > DESK_QUBITS:
                raise ConfigError(f"{nx}x{ny} is beyond desk scale; pass --heavy")
    result = bench.run_sweep(plan, cache_dir, _workers())
    if out:
        if fmt == "csv":
            bench.write_csv(result.records, out)
        else:
            bench.write_json(result.records, out)
    for key, table in result.tables().items():
        click.echo(bench.format_table(key, table))
        click.echo("")
    click.echo(f"{len(result.records)} records, {result.computed} computed, "
               f"{result.cached} cached, {len(result.failures)} failed")


@cli.command()
@model_options
@output_options
@click.option("--seed", type=int, help="Disorder seed of the model.")
@click.option("--state", "state_path", type=click.Path(exists=True),
              help="MPS checkpoint; default is the reference ground state.")
def corr(config_path, nx, ny, t, u, v, d, heavy, out, fmt, seed, state_path):
    """Connected spin correlations C_ij of a state."""
    model = _model(config_path, nx, ny, t, u, v, d, heavy, seed)
    if state_path:
        state = MpsState.load(state_path)
        if state.n_qubits != model.n_qubits:
            raise ConfigError("checkpoint does not match the model size")
    else:
        state = reference_ground_state(model).to_dense()
    mat = correlation_matrix(state, model.layout())
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise NumericalConsistencyError("correlation matrix is not symmetric")
    rows = [{"i": i + 1, "j": j + 1, "c": float(mat[i, j])}
            for i in range(mat.shape[0]) for j in range(mat.shape[1])]
    _emit(rows, out, fmt)


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="Record CSV from `sweep`, or a CSV with columns n_sites,n_parameters.")
@click.option("--threshold", type=float, default=0.01, show_default=True)
@output_options
@click.option("--heavy", is_flag=True, help="Compare against the large-scale targets.")
def fit(input_path, threshold, out, fmt, heavy):
    """Fit p_min = a * N**n over lattices."""
    with open(input_path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if "n_sites" in header:
        with open(input_path, newline="") as fh:
            points = [(float(r["n_sites"]), float(r["n_parameters"])) for r in csv.DictReader(fh)]
    else:
        records = bench.read_csv(input_path)
        by_lattice = {}
        for r in records:
            by_lattice.setdefault((r.nx, r.ny), []).append(r)
        points = []
        for (nx, ny), recs in sorted(by_lattice.items()):
            p = bench.min_params_for_delta(recs, threshold)
            if p is not None:
                points.append((nx * ny, p))
    res = bench.power_law_fit(points)
    doc = {"exponent": res.exponent, "prefactor": res.prefactor, "residual": res.residual,
           "n_points": len(points), "threshold": threshold}
    if heavy:
        target = bench.HEAVY_TARGETS["exponent_2d_u2"]
        doc["target_exponent"] = target
        doc["within_target"] = abs(res.exponent - target) <= bench.EXPONENT_RTOL * target
    _emit(doc, out, fmt)


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
def report(input_path):
    """Print summary tables of a record CSV."""
    records = bench.read_csv(input_path)
    for key, table in bench.summary_tables(records).items():
        click.echo(bench.format_table(key, table))
        click.echo("")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="hubbard-vqe", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (ConfigError, CapabilityError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except NumericalConsistencyError as exc:
        click.echo(f"numerical consistency failure: {exc}", err=True)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
