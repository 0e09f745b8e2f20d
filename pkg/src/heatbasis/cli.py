"""Command line entry point: ``heatbasis <command> [options]``."""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .annihilate import PerturbationPlan, build_annihilating_basis
from .basis import BasisState, read_basis, write_basis, write_basis_csv
from .config import ExperimentConfig, RunManifest, dump_json, now
from .errors import ConfigurationError, HeatBasisError, ResolutionExhausted
from .grid import HALFLINE, DyadicGrid, GridFunction
from .heat import TimeSchedule, decay_fit
from .tensor import TensorFunction, build_product_weight, tensor_heat_decay
from .verify import load_certificate, verify

log = logging.getLogger("heatbasis")

BASIS_FILE = "basis.bin"
CERT_FILE = "certificate.json"


def _common(f):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="JSON experiment configuration.")
    @click.option("--seed", type=int, default=None)
    @click.option("--out", type=click.Path(file_okay=False), default=None,
                  help="Output directory.")
    @click.option("--level", type=int, default=None, help="Grid level K (2^K cells).")
    @click.option("--m-max", "m_max", type=int, default=None)
    @click.option("--p", type=click.Choice(["1", "2"]), default=None)
    @functools.wraps(f)
    def wrapper(config_path, seed, out, level, m_max, p, **kw):
        try:
            cfg = ExperimentConfig.load(config_path, seed=seed, out=out, level=level,
                                        m_max=m_max, p=float(p) if p else None)
        except HeatBasisError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
        return f(cfg, **kw)
    return wrapper


def _guard(f):
    @functools.wraps(f)
    def wrapper(*args, **kw):
        try:
            return f(*args, **kw)
        except HeatBasisError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Annihilating Schauder bases and heat decay experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _finish(cfg: ExperimentConfig, command: str, names, started: str) -> None:
    RunManifest.for_files(command, cfg, cfg.out, names, started).write(cfg.out)


@main.command("basis-build")
@click.option("--csv", "write_csv", is_flag=True, help="Also write the basis as CSV.")
@_common
@_guard
def basis_build(cfg: ExperimentConfig, write_csv: bool = False):
    """Build an annihilating basis and its certificate."""
    started = now()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    initial = BasisState.haar(DyadicGrid(cfg.level), cfg.p, cfg.weight_obj())
    plan = PerturbationPlan(cfg.epsilon, cfg.m_max, cfg.schedule)
    try:
        basis, cert = build_annihilating_basis(initial, plan, seed=cfg.seed)
    except ResolutionExhausted as exc:
        (out / "partial.json").write_text(dump_json(exc.partial or {}))
        raise
    write_basis(out / BASIS_FILE, basis)
    (out / CERT_FILE).write_text(dump_json(cert.to_dict()))
    problems = cert.violations()
    lines = [
        f"grid level {cfg.level} ({2 ** cfg.level} cells), p = {cfg.p:g}, "
        f"weight {cfg.weight['kind']}",
        f"thresholds n_m: {', '.join(map(str, cert.thresholds)) or '(none)'}",
        f"||id - T|| = {cert.transform_distance:.6f} (epsilon {cfg.epsilon})",
        f"basis constant estimate {cert.basis_constant_after:.6f}, "
        f"bound {cert.basis_constant_bound:.6f}",
        "verdict: " + ("pass" if not problems else "FAIL: " + problems[0]),
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    names = [BASIS_FILE, CERT_FILE, "summary.txt"]
    if write_csv:
        write_basis_csv(out / "basis.csv", basis)
        names.append("basis.csv")
    _finish(cfg, "basis-build", names, started)
    click.echo("\n".join(lines))
    if problems:
        sys.exit(1)


@main.command("basis-verify")
@click.option("--basis", "basis_path", type=click.Path(dir_okay=False), default=None)
@click.option("--certificate", "cert_path", type=click.Path(dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory holding basis.bin and certificate.json.")
@_guard
def basis_verify(basis_path, cert_path, out):
    """Recompute residuals and distances from the basis file alone."""
    if out is None and (basis_path is None or cert_path is None):
        raise ConfigurationError("give --out or both --basis and --certificate")
    basis_path = basis_path or Path(out) / BASIS_FILE
    cert_path = cert_path or Path(out) / CERT_FILE
    rep = verify(basis_path, cert_path)
    if rep.passed:
        click.echo(f"pass: max residual/||e_n|| = {rep.max_relative_residual:.3e}, "
                   f"||id - T|| = {rep.transform_distance:.6f}")
        return
    click.echo(f"fail: {rep.first()}")
    sys.exit(1)


def _tail_data(out: Path, m: int, terms: int, seed: int, hint: str) -> GridFunction:
    bpath, cpath = out / BASIS_FILE, out / CERT_FILE
    if not bpath.exists() or not cpath.exists():
        raise ConfigurationError(f"no certificate in {out}; run `heatbasis basis-build` first ({hint})")
    cert = load_certificate(cpath)
    if len(cert.thresholds) < m:
        raise ConfigurationError(f"certificate annihilates only {len(cert.thresholds)} moments; "
                                 f"rebuild with --m-max {m}")
    bf = read_basis(bpath)
    n0 = cert.thresholds[m - 1]
    rng = np.random.default_rng(seed)
    rows = bf.rows[n0 - 1: min(n0 - 1 + terms, bf.dimension)]
    coef = rng.standard_normal(rows.shape[0])
    grid = DyadicGrid(bf.level)
    return GridFunction(grid.log_nodes, coef @ rows, HALFLINE)


def _write_report(out: Path, stem: str, report) -> list[str]:
    (out / f"{stem}.json").write_text(dump_json(report.to_dict()))
    (out / f"{stem}.csv").write_text(report.to_csv())
    return [f"{stem}.json", f"{stem}.csv"]


@main.command("heat-decay")
@_common
@click.option("--data", type=click.Choice(["baseline", "annihilated", "custom"]), default=None)
@click.option("--m", "m", type=int, default=None, help="Number of annihilated moments.")
@click.option("--data-file", type=click.Path(dir_okay=False), default=None,
              help="JSON with 'edges' and 'values' for --data custom.")
@_guard
def heat_decay(cfg: ExperimentConfig, data=None, m=None, data_file=None):
    """Fit the sup-norm decay rate of the heat flow."""
    started = now()
    data = data or cfg.data
    m = cfg.m if m is None else m
    out = Path(cfg.out)
    if data == "baseline":
        f, m = GridFunction.indicator(-1.0, 0.0), 0
    elif data == "annihilated":
        f = _tail_data(out, m, cfg.tail_terms, cfg.seed, "heat-decay needs tail-span data")
    else:
        path = data_file or cfg.data_file
        if path is None:
            raise ConfigurationError("--data custom needs --data-file")
        spec = json.loads(Path(path).read_text())
        f = GridFunction.from_pieces(spec["edges"], spec["values"])
        m = int(spec.get("m", m))
    sched = TimeSchedule(cfg.t0, cfg.ratio, cfg.count)
    report = decay_fit(f, sched, m, label=f"{data} m={m}")
    out.mkdir(parents=True, exist_ok=True)
    stem = f"decay_{data}_m{m}"
    names = _write_report(out, stem, report)
    verdict = "pass" if report.verdict else "fail"
    (out / f"{stem}.txt").write_text(
        f"slope {report.fitted_slope:.4f} vs exponent {report.theoretical_exponent:.2f}: {verdict}\n")
    names.append(f"{stem}.txt")
    _finish(cfg, "heat-decay", names, started)
    click.echo(f"{data} m={m}: slope {report.fitted_slope:.4f} "
               f"(target <= {report.theoretical_exponent + 0.1:.2f}), "
               f"fit residual {report.residual_of_fit:.2e}: {verdict}")
    if not report.verdict:
        sys.exit(1)


@main.command("tensor-decay")
@_common
@click.option("--dim", "N", type=click.IntRange(2, 3), default=None)
@click.option("--m", "m", type=int, default=None)
@_guard
def tensor_decay(cfg: ExperimentConfig, N=None, m=None):
    """Decay of separable data in N = 2 or 3 dimensions."""
    started = now()
    N = cfg.N if N is None else N
    m = cfg.m if m is None else m
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pw = build_product_weight(cfg.weight_obj(), N, cfg.p, seed=cfg.seed)
    names = []
    pw_info = {"dimension": N, "p": cfg.p, "suprema": pw.weight.suprema.tolist(),
               "dominated": pw.dominated, "max_log_excess": pw.max_log_excess,
               "embedding_constant": pw.embedding_constant,
               "embedding_ratio": pw.embedding_ratio, "probe_points": pw.probe_points}
    (out / f"product_weight_N{N}.json").write_text(dump_json(pw_info))
    names.append(f"product_weight_N{N}.json")
    base = GridFunction.indicator(-1.0, 0.0)
    factors = [base] * N
    bases = thresholds = None
    if m > 0:
        grid = DyadicGrid(cfg.level)
        axis = BasisState.haar(grid, cfg.p, pw.weight.axis)
        basis, cert = build_annihilating_basis(axis, PerturbationPlan(cfg.epsilon, m, cfg.schedule),
                                               seed=cfg.seed)
        (out / f"axis_certificate_m{m}.json").write_text(dump_json(cert.to_dict()))
        names.append(f"axis_certificate_m{m}.json")
        n0 = cert.thresholds[m - 1]
        rng = np.random.default_rng(cfg.seed)
        rows = basis.halfline_rows()[n0 - 1: n0 - 1 + cfg.tail_terms]
        factors = [GridFunction(grid.log_nodes, rng.standard_normal(rows.shape[0]) @ rows,
                                HALFLINE)] + [base] * (N - 1)
        bases = [basis] + [None] * (N - 1)
        thresholds = [n0] + [None] * (N - 1)
    f = TensorFunction.product(*factors)
    sched = TimeSchedule(cfg.t0, cfg.ratio, cfg.count)
    report = tensor_heat_decay(f, sched, m, bases, thresholds, label=f"N={N} m={m}")
    names += _write_report(out, f"tensor_N{N}_m{m}", report)
    _finish(cfg, "tensor-decay", names, started)
    verdict = "pass" if report.verdict and pw.passed else "fail"
    click.echo(f"N={N} m={m}: slope {report.fitted_slope:.4f} "
               f"(target <= {report.theoretical_exponent + 0.1:.2f}); product weight "
               f"{'ok' if pw.passed else 'FAILED'}: {verdict}")
    if verdict != "pass":
        sys.exit(1)


if __name__ == "__main__":
    main()
