"""Command-line interface.

Exit codes: 0 success (including a flagged non-converged fit), 2 invalid input,
3 output I/O failure.  Every command writes ``manifest.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .detector import (
    DARK_COUNT_PROBABILITY,
    CALIBRATED_EFFICIENCIES,
    DetectorConfig,
    LoopGeometry,
    conditional_matrix,
    config_from_bin_efficiencies,
    loop_config,
    with_catch_all,
)
from .errors import DomainError
from .reconstruction import (
    afterpulse_correct,
    estimate_click_probs,
    estimate_signature_probs,
    free_form_fit,
    poisson_sweep_fit,
)
from .simulator import AfterpulseModel, SourceSpec, parse_records, simulate_run, write_records

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


class OutputError(Exception):
    """Failure writing results; reported with exit code 3."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config_path: str | None = None
    config_sha256: str | None = None
    records_path: str | None = None
    records_sha256: str | None = None
    seed: int | None = None
    started: str = ""
    finished: str = ""
    outputs: list[str] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"tool_version": __version__, **self.__dict__}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------- #
# input helpers
# --------------------------------------------------------------------------- #


def _read_bytes(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None


def load_config(path: str, manifest: RunManifest) -> DetectorConfig:
    raw = _read_bytes(path, "config")
    manifest.config_path = str(path)
    manifest.config_sha256 = _sha256(raw)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    try:
        return DetectorConfig.from_dict(data)
    except (DomainError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def load_records(path: str, N: int, manifest: RunManifest) -> np.ndarray:
    raw = _read_bytes(path, "records")
    manifest.records_path = str(path)
    manifest.records_sha256 = _sha256(raw)
    try:
        indices = parse_records(raw.decode())
    except (DomainError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    sidecar = Path(path).with_suffix(".json")
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except (OSError, json.JSONDecodeError):
            meta = {}
        if isinstance(meta, dict) and meta.get("N") not in (None, N):
            raise InputError(f"{path}: records have N={meta['N']} but config has N={N}")
    if N is not None and indices.max() >= (1 << N):
        raise InputError(f"{path}: signature index {int(indices.max())} needs more than N={N} bins")
    return indices


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(steps))
    except ValueError:
        raise InputError(f"--grid expects LO:HI:STEPS, got {text!r}") from None
    if grid.size < 1 or grid[0] < 0 or (grid.size > 1 and hi <= lo):
        raise InputError(f"--grid {text!r} must be nonnegative and increasing")
    return grid


class _Outputs:
    def __init__(self, out: str) -> None:
        self.dir = Path(out)
        self.paths: list[str] = []
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output directory {out}: {exc.strerror}") from None

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror}") from None
        self.paths.append(str(path))
        return path


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #


def cmd_make_config(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    if args.geometry:
        geom = LoopGeometry.from_db(
            switch_db=args.switch_db, fiber_db=args.fiber_db, coupler_db=args.coupler_db,
            r=args.tap, eta_d=args.eta_d, N=args.bins,
        )
        config = loop_config(geom, p_dc=args.p_dc)
    else:
        config = config_from_bin_efficiencies(CALIBRATED_EFFICIENCIES[: args.bins], args.p_dc, args.eta_d)
    if args.catch_all:
        config = with_catch_all(config)
    out.write("config.json", config.to_json() + "\n")


def cmd_characterize(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    config = load_config(args.config, manifest)
    if args.n_max < 0:
        raise InputError("--n-max must be >= 0")
    out.write("conditional_matrix.csv", conditional_matrix(config, args.n_max).to_csv())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin", "p_c", "p_loss", "efficiency"])
    for i, eta in enumerate(config.efficiencies):
        writer.writerow([i + 1, repr(config.p_c[i]), repr(config.p_loss[i]), repr(float(eta))])
    out.write("bin_efficiencies.csv", buf.getvalue())


def cmd_simulate(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    config = load_config(args.config, manifest)
    if args.fock is not None:
        source = SourceSpec.fock(args.fock)
    else:
        source = SourceSpec.coherent(args.nbar)
    manifest.seed = args.seed
    run = simulate_run(config, source, args.cycles, AfterpulseModel(args.p_a), seed=args.seed)
    path = out.dir / "records.csv"
    try:
        written = write_records(run, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    out.paths.extend(str(p) for p in written)


def cmd_fit(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    config = load_config(args.config, manifest)
    indices = load_records(args.records, config.N, manifest)
    grid = parse_grid(args.grid)
    if args.method == "signature":
        observed = estimate_signature_probs(indices, config.N)
    else:
        observed = estimate_click_probs(indices, config.N)
        if args.method == "binomial-corrected":
            observed = afterpulse_correct(observed, config.p_dc, args.p_a)
    result = poisson_sweep_fit(observed, args.method, config, args.k, grid)
    result.diagnostics["method"] = args.method
    out.write("fit.json", result.to_json() + "\n")
    out.write("curve.csv", result.curve_csv())


def cmd_reconstruct(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    config = load_config(args.config, manifest)
    indices = load_records(args.records, config.N, manifest)
    observed = estimate_signature_probs(indices, config.N)
    result = free_form_fit(observed, config, args.k, mode=args.mode)
    out.write("reconstruction.json", result.to_json() + "\n")


def cmd_signature_stats(args: argparse.Namespace, manifest: RunManifest, out: _Outputs) -> None:
    raw = _read_bytes(args.records, "records")
    manifest.records_path = str(args.records)
    manifest.records_sha256 = _sha256(raw)
    try:
        indices = parse_records(raw.decode())
    except (DomainError, UnicodeDecodeError) as exc:
        raise InputError(f"{args.records}: {exc}") from None
    N = args.bins or max(1, int(indices.max()).bit_length())
    if indices.max() >= (1 << N):
        raise InputError(f"signature index {int(indices.max())} needs more than {N} bins")
    counts = np.bincount(indices, minlength=1 << N)
    order = sorted(np.flatnonzero(counts), key=lambda i: (-counts[i], i))
    if args.top_k:
        order = order[: args.top_k]
    total = int(indices.size)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["signature_index", "pattern", "count", "frequency"])
    for i in order:
        writer.writerow([int(i), format(int(i), f"0{N}b"), int(counts[i]), repr(float(counts[i] / total))])
    out.write("signature_stats.csv", buf.getvalue())


# --------------------------------------------------------------------------- #
# argument parsing
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsig", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--out", required=True, help="output directory")
        return p

    p = add("make-config", cmd_make_config, "write a detector config JSON")
    p.add_argument("--geometry", action="store_true", help="use the loop geometry instead of calibrated efficiencies")
    p.add_argument("--bins", type=int, default=9)
    p.add_argument("--p-dc", type=float, default=DARK_COUNT_PROBABILITY)
    p.add_argument("--eta-d", type=float, default=0.1, help="detector quantum efficiency")
    p.add_argument("--switch-db", type=float, default=1.2)
    p.add_argument("--fiber-db", type=float, default=0.8)
    p.add_argument("--coupler-db", type=float, default=0.5)
    p.add_argument("--tap", type=float, default=0.1, help="coupler tap ratio")
    p.add_argument("--catch-all", action="store_true")

    p = add("characterize", cmd_characterize, "P(m|n) table and per-bin efficiencies")
    p.add_argument("--config", required=True)
    p.add_argument("--n-max", type=int, default=5)

    p = add("simulate", cmd_simulate, "Monte Carlo detection records")
    p.add_argument("--config", required=True)
    p.add_argument("--nbar", type=float, default=0.0, help="coherent-state mean photon number")
    p.add_argument("--fock", type=int, default=None, help="use a Fock source with this photon number")
    p.add_argument("--cycles", type=int, default=150_000)
    p.add_argument("--p-a", type=float, default=0.0, help="afterpulse probability")
    p.add_argument("--seed", type=int, default=0)

    p = add("fit", cmd_fit, "Poisson-sweep fit of a record file")
    p.add_argument("--records", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=("binomial", "binomial-corrected", "signature"), default="signature")
    p.add_argument("--k", type=int, default=30, help="Fock-space truncation")
    p.add_argument("--grid", default="0:15:151", help="LO:HI:STEPS")
    p.add_argument("--p-a", type=float, default=0.03, help="afterpulse probability used by binomial-corrected")

    p = add("reconstruct", cmd_reconstruct, "free-form photon-number reconstruction")
    p.add_argument("--records", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--mode", choices=("paper-faithful", "physical"), default="paper-faithful")

    p = add("signature-stats", cmd_signature_stats, "signature frequency table")
    p.add_argument("--records", required=True)
    p.add_argument("--top-k", type=int, default=0, help="keep only the K most frequent (0: all)")
    p.add_argument("--bins", type=int, default=9, help="pattern width (0: infer)")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = RunManifest(command=args.command, argv=argv, started=_now())
    try:
        out = _Outputs(args.out)
        args.func(args, manifest, out)
        manifest.finished = _now()
        manifest.outputs = list(out.paths)
        out.write("manifest.json", json.dumps(manifest.to_dict(), indent=2) + "\n")
    except (InputError, DomainError) as exc:
        print(f"loopsig {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OutputError as exc:
        print(f"loopsig {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
