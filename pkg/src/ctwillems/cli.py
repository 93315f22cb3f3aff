"""Experiment runner: design -> collect -> certify -> reconstruct -> report.

Every stage reads a versioned JSON config and exchanges files through the
config's ``output_dir``. Data artifacts are byte-stable for a given config and
seed; wall-clock timings live only in ``timings.json`` and ``report.json``.

Exit codes: 0 success, 1 precondition or infeasibility, 2 numerical failure
(rank loss, tolerance miss), 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, MissingArtifactError, PreconditionError, SingularityError
from .excitation import (
    PeCertificate,
    build_pe_input,
    certify_pe,
    check_assumption_T,
    collect_dataset,
    design_dt_pe_sequence,
    forbidden_periods,
    load_dataset,
    save_dataset,
)
from .hankel import SampledSignal, signal_to_csv
from .linalg import DEFAULT_CUTOFF_REL, DEFAULT_RANK_TOL, eigenvalues
from .lti import LtiSystem, PiecewiseConstant, _grid_count, input_from_dict, zero_input
from .presets import preset
from .willems import DEFAULT_TOL_SOLVE, STAGE_RULES, TargetSpec, reconstruct

log = logging.getLogger("ctwillems")

CONFIG_VERSION = 1
EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
STAGES = ("design", "collect", "certify", "reconstruct", "report")

DEFAULT_TOLERANCES = {
    "rank_tol": DEFAULT_RANK_TOL,
    "cutoff_rel": DEFAULT_CUTOFF_REL,
    "tol_solve": DEFAULT_TOL_SOLVE,
    "assumption_guard": 1e-6,
    "oracle_rel_tol": 1e-4,
}


class StageFailed(Exception):
    """A stage completed its work but its verdict is negative."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class ExperimentConfig:
    system: LtiSystem
    system_spec: dict
    T: float
    N: int
    delta: float
    order: int
    seed: int
    input_kind: str
    x0: np.ndarray
    target: TargetSpec
    target_spec: dict
    tolerances: dict
    stage_rule: str
    output_dir: Path
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path("."), seed_override: int | None = None) -> "ExperimentConfig":
        if raw.get("version") != CONFIG_VERSION:
            raise ValueError(f"config version must be {CONFIG_VERSION}, got {raw.get('version')!r}")
        sys_spec = dict(raw["system"])
        if "preset" in sys_spec:
            extra = {k: v for k, v in sys_spec.items() if k in ("n", "m", "p")}
            system = preset(sys_spec["preset"], seed=sys_spec.get("seed", 0), **extra)
        else:
            system = LtiSystem(*(np.array(sys_spec[k], dtype=float) for k in "ABCD"))
        n, m = system.n, system.m

        samp = raw["sampling"]
        T, N = float(samp["T"]), int(samp["N"])
        if "delta" in samp:
            delta = float(samp["delta"])
        else:
            delta = T / int(samp["q"])
        _grid_count(T, delta, what="T")

        exc = raw.get("excitation", {})
        order = int(exc.get("order") or n + 1)
        seed = int(seed_override if seed_override is not None else exc.get("seed", 0))
        kind = exc.get("kind", "pe")
        if kind not in ("pe", "zero"):
            raise ValueError(f"excitation.kind must be 'pe' or 'zero', got {kind!r}")
        x0 = np.zeros(n) if exc.get("x0") is None else np.array(exc["x0"], dtype=float)

        if N < (m + 1) + n:
            raise InfeasibleError(f"reconstruction needs N >= (m+1)+n = {(m + 1) + n}, got N={N}")
        if N < order * (m + 1) - 1:
            raise InfeasibleError(f"order {order} needs N >= order*(m+1)-1 = {order * (m + 1) - 1}, got N={N}")

        tgt = raw.get("target", {"u_bar": {"kind": "zero"}, "x_bar0": [0.0] * n})
        u_bar = input_from_dict(tgt["u_bar"], m)
        xb = tgt.get("x_bar0", [0.0] * n)
        if isinstance(xb, dict):
            xb = np.random.default_rng(int(xb["uniform_seed"])).uniform(-1.0, 1.0, n)
        target = TargetSpec(u_bar, np.array(xb, dtype=float))

        tol = dict(DEFAULT_TOLERANCES)
        tol.update(raw.get("tolerances", {}))
        rule = raw.get("solver", {}).get("stage_rule", "linear")
        if rule not in STAGE_RULES:
            raise ValueError(f"solver.stage_rule must be one of {STAGE_RULES}")
        out = Path(raw.get("output_dir", "out"))
        if not out.is_absolute():
            out = base_dir / out
        return cls(system, sys_spec, T, N, delta, order, seed, kind, x0, target, tgt, tol, rule, out, raw)

    def echo(self) -> dict:
        """Resolved configuration, including the effective seed."""
        return {
            "version": CONFIG_VERSION,
            "system": self.system_spec,
            "system_matrices": self.system.to_dict(),
            "sampling": {"T": self.T, "N": self.N, "delta": self.delta},
            "excitation": {"order": self.order, "seed": self.seed, "kind": self.input_kind, "x0": self.x0.tolist()},
            "target": {"u_bar": self.target.u_bar.to_dict(), "x_bar0": self.target.x_bar0.tolist()},
            "tolerances": self.tolerances,
            "solver": {"stage_rule": self.stage_rule},
        }


def load_config(path: Path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    raw = json.loads(path.read_text())
    return ExperimentConfig.from_dict(raw, path.parent, seed_override)


_UMASK = os.umask(0)
os.umask(_UMASK)


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_stage(cfg: ExperimentConfig, stage: str, name: str) -> dict:
    path = cfg.output_dir / name
    if not path.exists():
        raise MissingArtifactError(stage, path)
    return json.loads(path.read_text())


def _record_timing(cfg: ExperimentConfig, stage: str, seconds: float) -> None:
    path = cfg.output_dir / "timings.json"
    timings = json.loads(path.read_text()) if path.exists() else {}
    timings[stage] = seconds
    write_atomic(path, _dump(timings))


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def cmd_design(cfg: ExperimentConfig, quiet: bool = False) -> int:
    m = cfg.system.m
    seq = design_dt_pe_sequence(m, cfg.order, cfg.N, cfg.seed, cfg.tolerances["rank_tol"])
    info = seq.to_dict()
    info["passed"] = info["rank"] == info["required_rank"]
    write_atomic(cfg.output_dir / "pe_sequence.json", _dump(info))
    sampled = SampledSignal.from_function(build_pe_input(seq, cfg.T), cfg.delta, cfg.T, cfg.N)
    write_atomic(cfg.output_dir / "pe_input.csv", signal_to_csv(sampled))
    verdict = "PASS" if info["passed"] else "FAIL"
    _say(quiet, f"rank {cfg.order}·{m} = {info['rank']}: {verdict}")
    return EXIT_OK


def _data_input(cfg: ExperimentConfig):
    if cfg.input_kind == "zero":
        return zero_input(cfg.system.m)
    seq = _read_stage(cfg, "design", "pe_sequence.json")
    return PiecewiseConstant(np.array(seq["values"]), cfg.T)


def cmd_collect(cfg: ExperimentConfig, quiet: bool = False) -> int:
    A = cfg.system.A
    guard = cfg.tolerances["assumption_guard"]
    ok = check_assumption_T(A, cfg.T, guard)
    lam = eigenvalues(A)
    assumption = {
        "T": cfg.T,
        "guard": guard,
        "passed": ok,
        "eigenvalues": [[float(z.real), float(z.imag)] for z in lam],
        "forbidden_periods": forbidden_periods(A, 2.0 * cfg.T),
    }
    if not ok:
        log.warning(
            "T=%.17g violates the non-resonance condition; forbidden values up to 2T: %s",
            cfg.T,
            ", ".join(f"{v:.6g}" for v in assumption["forbidden_periods"]),
        )
    write_atomic(cfg.output_dir / "assumption.json", _dump(assumption))
    data = collect_dataset(cfg.system, cfg.x0, _data_input(cfg), cfg.T, cfg.N, cfg.delta, seed=cfg.seed)
    save_dataset(data, cfg.output_dir, write_atomic)
    _say(quiet, f"collected {cfg.N * data.q + 1} samples per signal into {cfg.output_dir}")
    return EXIT_OK


def cmd_certify(cfg: ExperimentConfig, quiet: bool = False) -> int:
    _read_stage(cfg, "collect", "dataset.json")
    data = load_dataset(cfg.output_dir)
    cert = certify_pe(data, 1, cfg.tolerances["rank_tol"])
    write_atomic(cfg.output_dir / "certificate.json", _dump(cert.to_dict()))
    verdict = "PASS" if cert.passed else "FAIL"
    _say(
        quiet,
        f"PE order {cert.order}: {verdict} (min rank {cert.min_rank}/{cert.required_rank}, "
        f"min sigma_min {cert.min_sigma_min:.3e} at k={cert.worst_offset})",
    )
    if not cert.passed:
        raise StageFailed("data are not persistently exciting", EXIT_NUMERICAL)
    return EXIT_OK


def cmd_reconstruct(cfg: ExperimentConfig, force: bool = False, quiet: bool = False) -> int:
    cert = PeCertificate.from_dict(_read_stage(cfg, "certify", "certificate.json"))
    data = load_dataset(cfg.output_dir)
    if not cert.passed and not force:
        raise PreconditionError("dataset is not certified persistently exciting; rerun with --force to override")
    data = data.certified(cert)
    tol = cfg.tolerances
    diag_path = cfg.output_dir / "reconstruction.json"
    header = {"forced": bool(force and not cert.passed), "certificate_passed": cert.passed}
    try:
        rec = reconstruct(data, cfg.target, oracle=cfg.system, cutoff_rel=tol["cutoff_rel"], stage_rule=cfg.stage_rule, force=True)
    except SingularityError as exc:
        write_atomic(diag_path, _dump({**header, "status": "failed", "error": str(exc), "offset": exc.offset}))
        raise
    diag = rec.diagnostics()
    residual_ok = diag["max_input_residual"] <= tol["tol_solve"] and diag["max_state_residual"] <= tol["tol_solve"]
    oracle_ok = rec.oracle_ok(tol["oracle_rel_tol"])
    diag.update(header)
    diag["oracle_rel_tol"] = tol["oracle_rel_tol"]
    diag["oracle_passed"] = oracle_ok
    diag["residuals_passed"] = residual_ok
    diag["status"] = "ok" if residual_ok and oracle_ok is not False else "tolerance_miss"
    write_atomic(cfg.output_dir / "reconstruction.csv", rec.to_csv())
    write_atomic(diag_path, _dump(diag))
    _say(
        quiet,
        f"reconstruction: oracle error {rec.oracle_error:.3e} (scale {rec.oracle_scale:.3g}), "
        f"input residual {diag['max_input_residual']:.1e}, state residual {diag['max_state_residual']:.1e}, "
        f"{len(diag['resets'])} reset(s)",
    )
    if diag["status"] != "ok":
        raise StageFailed("reconstruction missed its tolerances", EXIT_NUMERICAL)
    return EXIT_OK


def build_report(cfg: ExperimentConfig) -> dict:
    design = _read_stage(cfg, "design", "pe_sequence.json")
    _read_stage(cfg, "collect", "dataset.json")
    assumption = _read_stage(cfg, "collect", "assumption.json")
    cert = _read_stage(cfg, "certify", "certificate.json")
    recon = _read_stage(cfg, "reconstruct", "reconstruction.json")
    timings_path = cfg.output_dir / "timings.json"
    timings = json.loads(timings_path.read_text()) if timings_path.exists() else {}
    cert_summary = {k: v for k, v in cert.items() if k != "per_offset"}
    design_summary = {k: v for k, v in design.items() if k != "values"}
    return {
        "config": cfg.echo(),
        "design": design_summary,
        "assumption_T": {k: assumption[k] for k in ("T", "guard", "passed", "forbidden_periods")},
        "pe_certificate": cert_summary,
        "reconstruction": {k: v for k, v in recon.items() if k not in ("oracle_error", "oracle_scale")},
        "oracle_error": {
            "value": recon.get("oracle_error"),
            "scale": recon.get("oracle_scale"),
            "rel_tol": recon.get("oracle_rel_tol"),
            "passed": recon.get("oracle_passed"),
        },
        "timings": timings,
    }


def cmd_report(cfg: ExperimentConfig, quiet: bool = False) -> dict:
    report = build_report(cfg)
    write_atomic(cfg.output_dir / "report.json", _dump(report))
    cert, rec, ass = report["pe_certificate"], report["reconstruction"], report["assumption_T"]
    lines = [
        f"non-resonance (T={ass['T']:.6g}): {'ok' if ass['passed'] else 'VIOLATED'}",
        f"PE order {cert['order']}: {'PASS' if cert['passed'] else 'FAIL'} "
        f"(min rank {cert['min_rank']}/{cert['required_rank']}, min sigma_min {cert['min_sigma_min']:.3e})",
    ]
    if rec.get("status") == "failed":
        lines.append(f"reconstruction FAILED: {rec.get('error')}")
    else:
        oe = report["oracle_error"]
        lines.append(
            f"reconstruction {rec['status']}: oracle error {oe['value']:.3e} "
            f"(bound {oe['rel_tol'] * (1 + oe['scale']):.3e}), input residual {rec['max_input_residual']:.1e}"
        )
    if rec.get("forced"):
        lines.append("note: reconstruction was forced on uncertified data")
    _say(quiet, "\n".join(lines))
    return report


def run_stage(stage: str, cfg: ExperimentConfig, force: bool, quiet: bool) -> int:
    start = time.perf_counter()
    if stage == "design":
        cmd_design(cfg, quiet)
    elif stage == "collect":
        cmd_collect(cfg, quiet)
    elif stage == "certify":
        try:
            cmd_certify(cfg, quiet)
        except StageFailed:
            if not force:
                raise
            log.warning("continuing on uncertified data because of --force")
    elif stage == "reconstruct":
        cmd_reconstruct(cfg, force, quiet)
    elif stage == "report":
        cmd_report(cfg, quiet)
        return EXIT_OK
    _record_timing(cfg, stage, time.perf_counter() - start)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctwillems", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=STAGES + ("all",))
    parser.add_argument("--config", required=True, type=Path, help="experiment JSON config")
    parser.add_argument("--seed", type=int, default=None, help="override excitation.seed")
    parser.add_argument("--force", action="store_true", help="reconstruct even on uncertified data")
    parser.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    stages = STAGES if args.command == "all" else (args.command,)
    try:
        cfg = load_config(args.config, args.seed)
        for stage in stages:
            if stage == "reconstruct" and args.command == "all" and args.force:
                # A forced run still reports when the solve itself breaks down.
                try:
                    run_stage(stage, cfg, args.force, args.quiet)
                except (SingularityError, StageFailed) as exc:
                    log.error("%s", exc)
                    cmd_report(cfg, args.quiet)
                    return EXIT_NUMERICAL
                continue
            run_stage(stage, cfg, args.force, args.quiet)
    except StageFailed as exc:
        log.error("%s", exc)
        return exc.code
    except (InfeasibleError, PreconditionError) as exc:
        log.error("%s", exc)
        return EXIT_PRECONDITION
    except SingularityError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
