"""Flags shared by every command, DE settings from flags, and result/config emission."""

from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import math

from pbnc import config, storage
from pbnc.models.models import BcnForm, OmegaMode, OutputFormat
from pbnc.schemas.settings import DEConfig, RunConfig

logger = logging.getLogger(__name__)


def common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("common options")
    group.add_argument("--seed", type=int, default=None, help=f"Master seed (default: {config.SEED})")
    group.add_argument("--threads", type=int, default=config.THREADS, help="Worker count (default: %(default)s)")
    group.add_argument("--delta1", type=float, default=None, help=f"Erasure grid step (default: {config.DELTA1})")
    group.add_argument("--delta2", type=float, default=None, help=f"Capacity bucket width (default: {config.DELTA2_FACTOR}*M)")
    group.add_argument("--lmax", type=int, default=config.L_MAX, help="DE iteration limit (default: %(default)s)")
    group.add_argument("--ztarget", type=float, default=config.Z_TARGET, help="DE success threshold (default: %(default)s)")
    group.add_argument("--omega", choices=[m.value for m in OmegaMode], default=config.OMEGA_MODE)
    group.add_argument("--bcn-form", choices=[f.value for f in BcnForm], default=config.BCN_FORM)
    group.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value)
    group.add_argument("--output", default=None, help="Result file; a PATH.config.json sidecar records the settings")
    return parser


def seed_of(args, fallback: Optional[int] = None) -> int:
    if args.seed is not None:
        return args.seed
    return config.SEED if fallback is None else fallback


def de_config_from_args(args) -> DEConfig:
    return DEConfig(
        l_max=args.lmax,
        z_target=args.ztarget,
        omega_mode=OmegaMode(args.omega),
        bcn_form=BcnForm(args.bcn_form),
    )


def run_config(args, de: Optional[DEConfig] = None, delta1=None, delta2=None, **parameters) -> RunConfig:
    return RunConfig(
        command=args.command,
        seed=seed_of(args),
        threads=max(args.threads, 1),
        delta1=delta1 if delta1 is not None else args.delta1,
        delta2=delta2 if delta2 is not None else args.delta2,
        format=OutputFormat(args.format),
        de=de,
        parameters={k: v for k, v in parameters.items() if v is not None},
    )


def emit_config(args, resolved: RunConfig):
    if args.output:
        storage.save_model(storage.sidecar_path(args.output), resolved)
    logger.info(f"Resolved settings: {resolved.model_dump_json()}")


def number(value: Optional[float], missing: str = "") -> Any:
    """CSV cell for a float; infinity marks a missing threshold."""
    if value is None:
        return missing
    if isinstance(value, float) and math.isinf(value):
        return "no threshold"
    return f"{value:.6g}" if isinstance(value, float) else value


def json_number(value: Optional[float]):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return None
    return value


def emit_table(args, header: Sequence[str], rows: List[Dict[str, Any]]):
    """Write rows as CSV or as a JSON list of objects, to --output or stdout."""
    if OutputFormat(args.format) == OutputFormat.JSON:
        storage.write_json(args.output, [{k: json_number(v) for k, v in row.items()} for row in rows])
    else:
        storage.write_csv(args.output, header, [[number(row.get(h)) for h in header] for row in rows])


def float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got '{text}'")


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got '{text}'")
