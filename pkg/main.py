import csv
import json
import logging
import sys
from functools import wraps
from pathlib import Path

import click
import numpy as np
from joblib import Parallel, delayed

from common.errors import (
    DegenerateDirectionError,
    DegenerateWitnessError,
    InvalidParameterError,
    ShapeError,
    SingularGramianError,
    SobolevError,
    UnsupportedDimensionError,
)
from config.run_config import load_config
from discrepancy.witness import WitnessSolver
from embeddings.kernel_embedding import KernelEmbedder, mean_difference
from embeddings.sample_set import SampleSet
from oracle.grid_density import GridDensity
from oracle.oracle1d import check_bounds
from transport.spectrum import decomposition_rows, spectral_decomposition, transport_coefficients
from validation.acceptance import AcceptanceSuite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_SINGULAR = 3

NUMERICAL_ERRORS = (
    SingularGramianError,
    DegenerateWitnessError,
    DegenerateDirectionError,
    np.linalg.LinAlgError,
    FloatingPointError,
)

DEFAULT_OUTPUTS = {
    "discrepancy": "discrepancy.json",
    "witness-grid": "witness_grid.csv",
    "directions": "directions.csv",
    "validate": "validation_report.json",
    "oracle-1d": "oracle_1d.json",
}


class SobolevDiscrepancyRunner:
    def __init__(self, config):
        self.config = config

        # Initialize components
        self.feature_map = config.build_feature_map()
        self.embedder = KernelEmbedder(self.feature_map, chunk_size=config.chunk_size, n_jobs=config.n_jobs)
        logger.info("Initialized %r", self.feature_map)

    def load_samples(self, path, label):
        samples = SampleSet.from_csv(path, label=label)
        if samples.dim != self.feature_map.dim_input:
            raise ShapeError(
                f"{path}: samples have dimension {samples.dim}, the feature map expects {self.feature_map.dim_input}"
            )
        logger.info("Loaded %d samples from %s", samples.size, path)
        return samples

    def embed_pair(self, path_p, path_q):
        """Gramian of the source samples and the mean-embedding difference delta"""
        samples_p = self.load_samples(path_p, "p")
        samples_q = self.load_samples(path_q, "q")
        embedding_q = self.embedder.embed(samples_q)
        delta = mean_difference(self.embedder.mean_embedding(samples_p), embedding_q.mu)
        return embedding_q.gramian, delta

    def discrepancy(self, path_p, path_q):
        """Witness solutions for every lambda of the grid"""
        gramian, delta = self.embed_pair(path_p, path_q)
        solver = WitnessSolver(gramian)
        lambdas = self.config.lambda_grid
        if self.config.n_jobs == 1 or len(lambdas) == 1:
            solutions = [solver.solve(delta, lam) for lam in lambdas]
        else:
            solutions = Parallel(n_jobs=self.config.n_jobs, prefer="threads")(
                delayed(solver.solve)(delta, lam) for lam in lambdas
            )
        return {
            "feature_map": json.loads(self.feature_map.to_json()),
            "results": [solution.to_dict() for solution in solutions],
        }

    def witness_grid(self, path_p, path_q, grid_min, grid_max, grid_points):
        """Tabulate u and grad u at the first lambda of the grid over a 1-D or 2-D box"""
        d = self.feature_map.dim_input
        if d > 2:
            raise UnsupportedDimensionError(f"witness grids are tabulated for d <= 2, got d = {d}")
        if grid_points < 1 or not grid_max >= grid_min:
            raise InvalidParameterError(f"invalid grid [{grid_min}, {grid_max}] with {grid_points} points per axis")

        gramian, delta = self.embed_pair(path_p, path_q)
        lam = self.config.lambda_grid[0]
        coeffs = WitnessSolver(gramian).solve(delta, lam).coeffs

        axis = np.linspace(grid_min, grid_max, grid_points)
        if d == 1:
            points = axis.reshape(-1, 1)
            header = ["x", "u", "du"]
        else:
            first, second = np.meshgrid(axis, axis, indexing="ij")
            points = np.column_stack([first.ravel(), second.ravel()])
            header = ["x1", "x2", "u", "du1", "du2"]
        values = self.feature_map.evaluate_batch(points) @ coeffs
        gradients = self.feature_map.jacobian_batch(points) @ coeffs
        rows = [[*map(float, x), float(u), *map(float, g)] for x, u, g in zip(points, values, gradients)]
        logger.info("Tabulated the witness at %d points for lambda = %g", len(rows), lam)
        return header, rows

    def directions(self, path_q, path_p):
        """Top-k spectral decomposition per lambda with a reconstruction check row"""
        gramian, delta = self.embed_pair(path_p, path_q)
        spectrum = spectral_decomposition(gramian)
        solver = WitnessSolver(gramian)
        header = ["lambda", "j", "eigenvalue", "raw_alignment", "filtered_coefficient"]
        rows = []
        for lam in self.config.lambda_grid:
            decomposition = transport_coefficients(spectrum, delta, lam)
            for j, eigenvalue, raw, coefficient in decomposition_rows(
                spectrum, decomposition, self.config.top_k_directions
            ):
                rows.append([lam, j, eigenvalue, raw, coefficient])

            direct = solver.solve(delta, lam).coeffs
            scale = float(np.linalg.norm(direct))
            error = float(np.linalg.norm(decomposition.witness_coefficients(spectrum) - direct))
            rows.append([lam, "check:reconstruction", "", "", error / scale if scale > 0 else error])
        return header, rows

    def validate(self, show_progress=False):
        return AcceptanceSuite(self.config, show_progress=show_progress).run()

    def oracle_1d(self, path, lower_bound_a=None, upper_bound_b=None):
        """Sandwich check on a tabulated pair; explicit bounds take precedence over the config"""
        if lower_bound_a is None:
            lower_bound_a = self.config.lower_bound_a
        if upper_bound_b is None:
            upper_bound_b = self.config.upper_bound_b
        density = GridDensity.from_csv(path, lower_bound_a, upper_bound_b)
        result = check_bounds(density)
        return {
            **result.to_dict(),
            "a": density.lower_bound_a,
            "b": density.upper_bound_b,
            "grid_points": density.size,
        }


def configure_logging(verbose):
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, indent=2))
        f.write("\n")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_options(command):
    """Options shared by every subcommand"""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON (or YAML) file mirroring RunConfig."),
        click.option("--lambda", "lam", type=float, default=None, help="Replace the lambda grid by one value."),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the feature map seed."),
        click.option("--out", "output_path", type=click.Path(dir_okay=False), default=None, help="Output file."),
        click.option("--allow-zero-lambda", is_flag=True, default=False, help="Permit lambda = 0."),
        click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def handle_errors(command):
    """Map library exceptions to the documented exit codes"""

    @wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except NUMERICAL_ERRORS as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_SINGULAR)
        except (SobolevError, OSError) as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_INPUT_ERROR)

    return wrapper


def prepare(command_name, config_path, lam, seed, output_path, allow_zero_lambda, verbose):
    """Load the config, apply overrides and return (runner, output path)"""
    configure_logging(verbose)
    config = load_config(config_path).with_overrides(
        seed=seed, output_path=output_path, lam=lam, allow_zero_lambda=allow_zero_lambda
    )
    output = config.output_path or Path(DEFAULT_OUTPUTS[command_name])
    return SobolevDiscrepancyRunner(config), output


@click.group()
def cli():
    """Kernel Sobolev discrepancy between two sample sets"""


@cli.command()
@click.argument("samples_p", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples_q", type=click.Path(exists=True, dir_okay=False))
@run_options
@handle_errors
def discrepancy(samples_p, samples_q, config_path, lam, seed, output_path, allow_zero_lambda, verbose):
    """Regularized discrepancy and witness for each lambda"""
    runner, output = prepare("discrepancy", config_path, lam, seed, output_path, allow_zero_lambda, verbose)
    payload = runner.discrepancy(samples_p, samples_q)
    write_json(output, payload)
    for result in payload["results"]:
        click.echo(f"lambda={result['lambda']!r} value={result['value']!r}")
    click.echo(f"Wrote {output}")


@cli.command("witness-grid")
@click.argument("samples_p", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples_q", type=click.Path(exists=True, dir_okay=False))
@click.option("--grid-min", type=float, default=-3.0, show_default=True)
@click.option("--grid-max", type=float, default=3.0, show_default=True)
@click.option("--grid-points", type=click.IntRange(min=1), default=101, show_default=True, help="Points per axis.")
@run_options
@handle_errors
def witness_grid(samples_p, samples_q, grid_min, grid_max, grid_points, config_path, lam, seed, output_path,
                 allow_zero_lambda, verbose):
    """Tabulate the witness u and its gradient on a grid (d <= 2)"""
    runner, output = prepare("witness-grid", config_path, lam, seed, output_path, allow_zero_lambda, verbose)
    header, rows = runner.witness_grid(samples_p, samples_q, grid_min, grid_max, grid_points)
    write_csv(output, header, rows)
    click.echo(f"Wrote {len(rows)} rows to {output}")


@cli.command()
@click.argument("samples_q", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples_p", type=click.Path(exists=True, dir_okay=False))
@run_options
@handle_errors
def directions(samples_q, samples_p, config_path, lam, seed, output_path, allow_zero_lambda, verbose):
    """Principal transport directions and their filtered coefficients"""
    runner, output = prepare("directions", config_path, lam, seed, output_path, allow_zero_lambda, verbose)
    header, rows = runner.directions(samples_q, samples_p)
    write_csv(output, header, rows)
    click.echo(f"Wrote {len(rows)} rows to {output}")


@cli.command()
@run_options
@handle_errors
def validate(config_path, lam, seed, output_path, allow_zero_lambda, verbose):
    """Run the synthetic acceptance suite"""
    runner, output = prepare("validate", config_path, lam, seed, output_path, allow_zero_lambda, verbose)
    report = runner.validate(show_progress=verbose > 0)
    write_json(output, report.to_dict())
    for check in report.checks:
        status = "ok" if check.passed else "FAILED"
        click.echo(f"{check.name}: {status} (observed {check.observed:.3g}, tolerance {check.tolerance:.3g})")
    click.echo(f"Wrote {output}")
    if not report.passed:
        click.get_current_context().exit(EXIT_VALIDATION_FAILED)


@cli.command("oracle-1d")
@click.argument("density_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--a", "lower_bound_a", type=float, default=None, help="Lower density bound (default: grid minimum).")
@click.option("--b", "upper_bound_b", type=float, default=None, help="Upper density bound (default: grid maximum).")
@run_options
@handle_errors
def oracle_1d(density_csv, lower_bound_a, upper_bound_b, config_path, lam, seed, output_path, allow_zero_lambda,
              verbose):
    """Exact 1-D Sobolev discrepancy and W2 sandwich check from an (x, p, q) table"""
    runner, output = prepare("oracle-1d", config_path, lam, seed, output_path, allow_zero_lambda, verbose)
    payload = runner.oracle_1d(density_csv, lower_bound_a, upper_bound_b)
    write_json(output, payload)
    click.echo(f"S={payload['s']!r} W2={payload['w2']!r} lower_ok={payload['lower_ok']} upper_ok={payload['upper_ok']}")
    click.echo(f"Wrote {output}")


if __name__ == "__main__":
    cli()
