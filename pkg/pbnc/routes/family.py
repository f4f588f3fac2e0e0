"""``family`` and ``presets``: rank-distribution families and bundled protomatrices."""

import logging

from pbnc import config, storage
from pbnc.routes.common import emit_config, run_config
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.protomatrix import ProtomatrixFile
from pbnc.services.network_service import enumerate_family

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("family", parents=parents, help="Enumerate and export a line-network family")
    parser.add_argument("--hops", type=int, required=True, help="Hops of the line network")
    parser.add_argument("--M", type=int, required=True, help="Batch size")
    parser.add_argument("--m", type=int, default=8, help="Field degree (default: %(default)s)")
    parser.add_argument("--homogeneous", action="store_true", help="Equal erasure probability on every hop")
    parser.set_defaults(handler=cmd_family)

    parser = subparsers.add_parser("presets", parents=parents, help="List bundled protomatrix presets")
    parser.set_defaults(handler=cmd_presets)


def cmd_family(args) -> int:
    template = LineNetworkSpec.homogeneous(0.0, args.hops, args.M, args.m)
    family = enumerate_family(template, args.delta1, args.delta2, homogeneous=args.homogeneous)
    logger.info(f"Family of {family.size} distributions in {len(family)} capacity buckets")
    emit_config(args, run_config(
        args, delta1=family.delta1, delta2=family.delta2,
        hops=args.hops, M=args.M, m=args.m, homogeneous=args.homogeneous,
    ))
    with storage.open_output(args.output) as handle:
        storage.export_family(family, handle)
    return 0


def cmd_presets(args) -> int:
    for name in storage.list_presets():
        data = storage.load_model(storage.preset_path(name), ProtomatrixFile)
        print(f"{name}\tM={data.M}\tn_v={data.n_v}\tn_c1={data.n_c1}\tn_c2={data.n_c2}\t{data.description or ''}")
    logger.debug(f"Presets read from {config.PRESET_DIR}")
    return 0
