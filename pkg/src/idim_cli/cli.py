import logging
import sys
import time
from enum import Enum
from pathlib import Path
from typing import List, Optional

import click
import typer

from idim.datasets import Kind
from idim.errors import ConfigError, DataError
from idim.geometry import Metric
from idim.hidalgo import PriorType
from idim.twonn import Method

app = typer.Typer(add_completion=False, help="Intrinsic dimension estimation.")

state = {"verbose": False}


class Output(str, Enum):
    TEXT = "text"
    JSON = "json"
    CSV = "csv"


class Linkage(str, Enum):
    AVERAGE = "average"
    COMPLETE = "complete"
    SINGLE = "single"


@app.callback()
def configure(
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="log progress and show a progress bar"
    ),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="only log errors"),
):
    """
    Estimate the intrinsic dimension of point clouds.

    Data goes to stdout and to the output files; warnings and progress go to
    stderr.
    """
    level = logging.ERROR if quiet else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s")
    logging.getLogger("idim").setLevel(level)
    state["verbose"] = verbose and not quiet


# Helpers


def _flags(ctx: typer.Context) -> dict:
    params = ctx.params
    return {k: str(v) if isinstance(v, Path) else v for k, v in params.items()}


def _read_input(input: Optional[Path], dist: Optional[Path], header: bool):
    """Return (X, dist_mat, input_info) for the mutually exclusive --input/--dist."""
    from idim.files import read_distance_matrix, read_point_cloud
    from idim.utils import absolute

    if (input is None) == (dist is None):
        raise typer.BadParameter("exactly one of --input and --dist is required")
    if dist is not None:
        info = {"path": absolute(dist), "kind": "dist", "header": header}
        return None, read_distance_matrix(dist, header=header), info
    info = {"path": absolute(input), "kind": "points", "header": header}
    return read_point_cloud(input, header=header), None, info


def _finish(
    ctx: typer.Context,
    subcommand: str,
    outputs: List[Path],
    manifest_dir: Path,
    start: float,
    **kwargs,
):
    from idim.files import RunManifest

    manifest = RunManifest(
        subcommand=subcommand,
        flags=_flags(ctx),
        elapsed=time.perf_counter() - start,
        outputs=[str(p) for p in outputs],
        **kwargs,
    )
    path = manifest.write(manifest_dir)
    logging.getLogger(__name__).info("Wrote %s", path)


def _plot_grid(plot_grid: str) -> dict:
    """--plot-grid as numbers; only low, upp and by are accepted."""
    from idim.utils import parse_params

    try:
        grid = parse_params(plot_grid)
    except ConfigError as e:
        raise typer.BadParameter(str(e), param_hint="--plot-grid") from e
    unknown = set(grid) - {"low", "upp", "by"}
    if unknown:
        raise typer.BadParameter(f"unknown keys {sorted(unknown)}", param_hint="--plot-grid")
    try:
        return {key: float(value) for key, value in grid.items()}
    except ValueError as e:
        raise typer.BadParameter(
            f"values must be numbers, got {plot_grid!r}", param_hint="--plot-grid"
        ) from e


_input_help = "CSV of points (rows are observations)"
_dist_help = "CSV with a square distance matrix (no header by default)"


# Data


@app.command()
def generate(
    ctx: typer.Context,
    kind: Kind = typer.Option(..., help="which dataset to generate"),
    n: int = typer.Option(
        ..., help="number of points (points per block for gaussmix)"
    ),
    seed: int = typer.Option(0, help="seed of the random generator"),
    d: float = typer.Option(2.0, help="true dimension of the pareto ratios"),
    out: Path = typer.Option(..., help="CSV file to write"),
):
    """
    Write a synthetic dataset with known intrinsic dimension.

    `gaussmix` also writes a `class` column; `pareto` writes a single `mu`
    column of Pareto(1, d) ratios. A manifest is written next to OUT.
    """
    import pandas as pd

    from idim.datasets import GeneratorSpec
    from idim.datasets import generate as make
    from idim.files import write_csv
    from idim.hidalgo import RNG_NAME

    start = time.perf_counter()
    dataset = make(GeneratorSpec(kind=kind, n=n, seed=seed, params={"d": d}))
    if dataset.points is None:
        df = pd.DataFrame({"mu": dataset.mus})
    else:
        df = dataset.points.to_frame()
        if dataset.classes is not None:
            df["class"] = dataset.classes

    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(df, out)
    _finish(ctx, "generate", [out], out.parent, start, seed=seed, rng=RNG_NAME)


@app.command()
def mus(
    ctx: typer.Context,
    input: Optional[Path] = typer.Option(None, help=_input_help),
    dist: Optional[Path] = typer.Option(None, help=_dist_help),
    header: Optional[bool] = typer.Option(
        None, "--header/--no-header", help="whether the CSV has a header row"
    ),
    metric: Metric = typer.Option(Metric.EUCLIDEAN, help="distance between points"),
    n1: int = typer.Option(1, help="order of the nearer neighbor"),
    n2: int = typer.Option(2, help="order of the farther neighbor"),
    q: Optional[int] = typer.Option(
        None, help="also write the q-nearest-neighbor adjacency matrix"
    ),
    out_dir: Optional[Path] = typer.Option(
        None, help="write mus.csv (and adjacency.csv) here instead of stdout"
    ),
):
    """
    Compute the ratios mu = r_n2 / r_n1 of nearest-neighbor distances.

    Duplicated points are removed first; the `index` column holds the original
    row of every ratio.
    """
    from idim.files import to_csv_text, write_csv, write_matrix
    from idim.geometry import compute_mus

    start = time.perf_counter()
    header = dist is None if header is None else header
    X, dist_mat, info = _read_input(input, dist, header)
    ratios = compute_mus(
        X=X,
        dist_mat=dist_mat,
        metric=metric,
        n1=n1,
        n2=n2,
        with_adjacency=q is not None,
        q=q or 3,
    )

    if out_dir is None:
        typer.echo(to_csv_text(ratios.to_frame()), nl=False)
        return

    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_csv(ratios.to_frame(), out_dir / "mus.csv")]
    if q is not None:
        outputs.append(write_matrix(ratios.adjacency, out_dir / "adjacency.csv"))
    _finish(ctx, "mus", outputs, out_dir, start, inputs=[info["path"]])


# Estimation


@app.command()
def twonn(
    ctx: typer.Context,
    input: Optional[Path] = typer.Option(None, help=_input_help),
    dist: Optional[Path] = typer.Option(None, help=_dist_help),
    mus: Optional[Path] = typer.Option(
        None, help="CSV with a `mu` column (as written by `idim mus`)"
    ),
    header: Optional[bool] = typer.Option(
        None, "--header/--no-header", help="whether the CSV has a header row"
    ),
    method: Method = typer.Option(Method.MLE, help="estimator"),
    alpha: float = typer.Option(
        0.95, help="confidence level (credible mass for bayes)"
    ),
    c_trimmed: float = typer.Option(
        0.01, help="proportion of the largest ratios to discard"
    ),
    metric: Metric = typer.Option(Metric.EUCLIDEAN, help="distance between points"),
    a_d: float = typer.Option(0.001, help="shape of the Gamma prior (bayes)"),
    b_d: float = typer.Option(0.001, help="rate of the Gamma prior (bayes)"),
    unbiased: bool = typer.Option(
        True, "--unbiased/--biased", help="(n-1)/S or n/S for mle"
    ),
    output: Output = typer.Option(Output.TEXT, help="stdout format"),
    plot_data: Optional[Path] = typer.Option(
        None, help="CSV for the linfit points or the bayes density grid"
    ),
    plot_grid: str = typer.Option(
        "", help="density grid for bayes, e.g. 'low=0,upp=5,by=0.01'"
    ),
    out_dir: Optional[Path] = typer.Option(
        None, help="also write twonn.json and a manifest here"
    ),
):
    """
    Estimate a single (homogeneous) intrinsic dimension with TWO-NN.

    ## Methods

    - linfit fits the linearized Pareto c.d.f. by least squares

    - mle is the maximum likelihood estimate with an exact interval

    - bayes is the conjugate Gamma posterior (reports mean, median and mode)
    """
    import pandas as pd

    from idim.files import read_column, to_csv_text, to_json, write_csv, write_json
    from idim.twonn import twonn as estimate
    from idim.utils import absolute

    start = time.perf_counter()
    if plot_data is not None and method is Method.MLE:
        raise typer.BadParameter("--plot-data needs --method linfit or bayes")
    kwargs = {}
    if method is Method.MLE:
        kwargs["unbiased"] = unbiased
    elif method is Method.BAYES:
        grid = _plot_grid(plot_grid)
        kwargs.update(
            a_d=a_d,
            b_d=b_d,
            plot_low=grid.get("low", 0.0),
            plot_upp=grid.get("upp"),
            by=grid.get("by", 0.01),
        )

    if mus is not None:
        if input is not None or dist is not None:
            raise typer.BadParameter("--mus cannot be combined with --input or --dist")
        ratios = read_column(mus, "mu", header=True if header is None else header)
        fit = estimate(mus=ratios, method=method, alpha=alpha, c_trimmed=c_trimmed, **kwargs)
        inputs = [absolute(mus)]
    else:
        X, dist_mat, info = _read_input(input, dist, dist is None if header is None else header)
        fit = estimate(
            X=X,
            dist_mat=dist_mat,
            method=method,
            metric=metric,
            alpha=alpha,
            c_trimmed=c_trimmed,
            **kwargs,
        )
        inputs = [info["path"]]

    if output is Output.JSON:
        typer.echo(to_json(fit.to_dict()))
    elif output is Output.CSV:
        typer.echo(to_csv_text(fit.to_frame()), nl=False)
    else:
        typer.echo(fit.report())

    outputs = []
    if plot_data is not None:
        plot_data.parent.mkdir(parents=True, exist_ok=True)
        outputs.append(write_csv(fit.plot_data(), plot_data))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs.append(write_json(fit.to_dict(), out_dir / "twonn.json"))
    if outputs:
        manifest_dir = out_dir if out_dir is not None else outputs[0].parent
        _finish(ctx, "twonn", outputs, manifest_dir, start, inputs=inputs)


@app.command()
def hidalgo(
    ctx: typer.Context,
    input: Optional[Path] = typer.Option(None, help=_input_help),
    dist: Optional[Path] = typer.Option(None, help=_dist_help),
    header: Optional[bool] = typer.Option(
        None, "--header/--no-header", help="whether the CSV has a header row"
    ),
    metric: Metric = typer.Option(Metric.EUCLIDEAN, help="distance between points"),
    k: int = typer.Option(10, "--k", help="number of mixture components"),
    q: int = typer.Option(3, help="neighbors in the adjacency matrix"),
    xi: float = typer.Option(0.75, help="local homogeneity, in [0.5, 1)"),
    alpha_dirichlet: float = typer.Option(
        0.05, help="concentration of the Dirichlet prior on the weights"
    ),
    a0_d: float = typer.Option(1.0, help="shape of the Gamma prior on d"),
    b0_d: float = typer.Option(1.0, help="rate of the Gamma prior on d"),
    prior: PriorType = typer.Option(PriorType.CONJUGATE, help="prior on d"),
    nominal_dim: Optional[int] = typer.Option(
        None, help="nominal dimension D, required by the truncated priors"
    ),
    pi_mass: float = typer.Option(
        0.5, help="prior mass at D for truncated-pointmass"
    ),
    nsim: int = typer.Option(2000, help="number of sweeps kept after burn-in"),
    burn_in: int = typer.Option(2000, help="number of discarded sweeps"),
    thinning: int = typer.Option(1, help="keep one sweep every THINNING"),
    seed: int = typer.Option(0, help="seed of the random generator"),
    out_dir: Path = typer.Option(..., help="directory for the chains"),
):
    """
    Fit the heterogeneous (Hidalgo) mixture model by Gibbs sampling.

    The raw chains are written to OUT_DIR as cluster_prob.csv,
    membership_labels.csv, id_raw.csv, mus.csv and config.json. Use
    `idim summarize OUT_DIR` to postprocess them.
    """
    from idim.hidalgo import HidalgoConfig, run_hidalgo

    start = time.perf_counter()
    if prior is not PriorType.CONJUGATE and nominal_dim is None:
        raise typer.BadParameter(f"--prior {prior.value} requires --nominal-dim")
    config = HidalgoConfig(
        K=k,
        q=q,
        xi=xi,
        alpha_dirichlet=alpha_dirichlet,
        a0_d=a0_d,
        b0_d=b0_d,
        prior_type=prior,
        D=nominal_dim,
        pi_mass=pi_mass,
        nsim=nsim,
        burn_in=burn_in,
        thinning=thinning,
        seed=seed,
    )
    X, dist_mat, info = _read_input(input, dist, dist is None if header is None else header)
    info["metric"] = metric.value
    chains = run_hidalgo(
        X=X, dist_mat=dist_mat, config=config, metric=metric, verbose=state["verbose"]
    )

    typer.echo(chains.report())
    outputs = chains.save(out_dir, input_info=info)
    _finish(
        ctx,
        "hidalgo",
        outputs,
        out_dir,
        start,
        inputs=[info["path"]],
        seed=seed,
        rng=chains.extras["rng"],
    )


# Postprocessing


@app.command()
def summarize(
    ctx: typer.Context,
    chains_dir: Path = typer.Argument(..., help="output directory of `idim hidalgo`"),
    k_clusters: Optional[int] = typer.Option(
        None, help="cut the similarity dendrogram into this many clusters"
    ),
    class_column: Optional[str] = typer.Option(
        None, "--class", help="column of the input CSV to stratify the ids by"
    ),
    class_file: Optional[Path] = typer.Option(
        None, help="CSV holding the --class column (default: the hidalgo input)"
    ),
    linkage: Linkage = typer.Option(Linkage.AVERAGE, help="dendrogram linkage"),
    out_dir: Optional[Path] = typer.Option(
        None, help="where to write the summaries (default: CHAINS_DIR)"
    ),
):
    """
    Postprocess Hidalgo chains.

    Writes id_summary.csv (posterior mean and quantiles of every point's id),
    psm.csv (posterior similarity matrix) and nn_profile.csv (running means of
    the sorted neighbor distances). With --k-clusters also clusters.csv, with
    --class also id_by_class.csv.
    """
    from idim.files import (
        read_column,
        read_distance_matrix,
        read_point_cloud,
        write_csv,
        write_matrix,
    )
    from idim.hidalgo import HidalgoChains
    from idim.posterior import id_by_class, nn_distance_profile, summarize_chains

    start = time.perf_counter()
    chains = HidalgoChains.load(chains_dir)
    out_dir = chains_dir if out_dir is None else out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize_chains(chains, k_clusters=k_clusters, method=linkage.value)

    id_summary = summary.id_summary.copy()
    id_summary.insert(0, "index", chains.kept_index)
    outputs = [
        write_csv(id_summary, out_dir / "id_summary.csv"),
        write_matrix(summary.psm, out_dir / "psm.csv"),
    ]
    if summary.clusters is not None:
        outputs.append(
            write_csv(summary.clusters.to_frame(chains.kept_index), out_dir / "clusters.csv")
        )
        typer.echo(summary.clusters.report())

    info = chains.extras.get("input") or {}
    if not info.get("path"):
        raise DataError(f"{chains_dir}/config.json does not record the input file")
    header = info.get("header", True)
    if info.get("kind") == "dist":
        X, dist_mat = None, read_distance_matrix(info["path"], header=header)
    else:
        X, dist_mat = read_point_cloud(info["path"], header=header), None
    profile = nn_distance_profile(X, dist_mat, metric=info.get("metric", "euclidean"))
    outputs.append(write_matrix(profile, out_dir / "nn_profile.csv", prefix="r"))

    inputs = [info["path"]]
    if class_column is not None:
        if class_file is None:
            source, class_header = info["path"], header
        else:
            source, class_header = class_file, True
        classes = read_column(source, class_column, header=class_header)[chains.kept_index]
        table = id_by_class(summary.id_postpr, classes)
        outputs.append(write_csv(table, out_dir / "id_by_class.csv"))
        typer.echo(table.to_string(index=False, float_format="%.6f"))
        inputs.append(str(source))

    _finish(ctx, "summarize", outputs, out_dir, start, inputs=inputs)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the `idim` command line.

    Returns 0 on success, 1 on usage or configuration errors and 2 on data
    errors.
    """
    try:
        app(args=argv, prog_name="idim", standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        typer.echo("Aborted!", err=True)
        return 1
    except ConfigError as e:
        typer.echo(f"Error: {e}", err=True)
        return 1
    except (DataError, FileNotFoundError) as e:
        typer.echo(f"Error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
