"""``lift``: two-step lifting of a protomatrix into a concrete code file."""

import logging

import numpy as np

from pbnc import storage
from pbnc.errors import InputError
from pbnc.routes.common import emit_config, run_config, seed_of
from pbnc.services.optimizer_service import lift_with_retry
from pbnc.services.protograph_service import design_rate, integer_count_rate, tanner_girth

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("lift", parents=parents, help="Lift a protomatrix into a lifted code file")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--protomatrix", help="Protomatrix JSON file")
    source.add_argument("--preset", help="Bundled preset name")
    parser.add_argument("--Z1", type=int, default=None, help="PEG lifting factor (default: from the file)")
    parser.add_argument("--Z2", type=int, default=None, help="Quasi-cyclic lifting factor (default: from the file)")
    parser.add_argument("--retry-cap", type=int, default=None, help="Core lifting attempts before giving up")
    parser.add_argument("--girth", action="store_true", help="Log the girth of the lifted precode")
    parser.set_defaults(handler=cmd_lift)


def cmd_lift(args) -> int:
    data = storage.load_protomatrix_file(args.protomatrix, args.preset)
    protomatrix, delta = storage.to_protomatrix(data)
    Z1 = args.Z1 or data.Z1
    Z2 = args.Z2 or data.Z2
    if not Z1 or not Z2:
        raise InputError("Lifting factors Z1 and Z2 are neither given nor stored in the protomatrix file")
    seed = seed_of(args)

    code = lift_with_retry(
        protomatrix, delta, Z1, Z2, data.M, data.m,
        rng=np.random.default_rng(seed), retry_cap=args.retry_cap,
    )
    logger.info(
        f"Lifted code: K={code.K} A={code.A} checks={code.n_checks} batches={code.n_batches} "
        f"design rate={design_rate(protomatrix, delta):.4f} "
        f"integer rate={integer_count_rate(protomatrix, delta, Z1, Z2):.4f}"
    )
    if args.girth:
        logger.info(f"Precode girth: {tanner_girth(code.check_rows, code.K)}")

    emit_config(args, run_config(
        args, protomatrix=args.protomatrix, preset=args.preset, Z1=Z1, Z2=Z2, retry_cap=args.retry_cap,
    ))
    if args.output:
        storage.save_lifted_code(args.output, code)
    else:
        print(storage.lifted_code_file(code).model_dump_json(indent=2))
    return 0
