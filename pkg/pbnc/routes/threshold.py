"""``threshold``: decoding thresholds of a protomatrix and of its extension prefixes."""

from typing import Optional
import logging

import numpy as np

from pbnc import config, storage
from pbnc.errors import InputError
from pbnc.models.models import RankDistribution
from pbnc.routes.common import de_config_from_args, emit_config, emit_table, run_config
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.field import FieldSpec
from pbnc.services.density_evolution_service import compare_omega_modes, de_trace, threshold_profile
from pbnc.services.network_service import enumerate_family, line_network_dist

logger = logging.getLogger(__name__)

HEADER = ["extension_rows", "capacity", "eps", "rate", "integer_rate", "gap"]
OMEGA_HEADER = ["capacity_exact", "capacity_binomial", "omega_difference"]


def register(subparsers, parents):
    parser = subparsers.add_parser("threshold", parents=parents, help="Compute C* per extension row")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--protomatrix", help="Protomatrix JSON file")
    source.add_argument("--preset", help="Bundled preset name")
    parser.add_argument("--family", help="Rank-distribution family file (instead of a line network)")
    parser.add_argument("--hops", type=int, default=None, help="Hops of the line network")
    parser.add_argument("--homogeneous", action="store_true", default=None, help="Search equal per-hop erasure instead")
    parser.add_argument("--trace", default=None, help="Write the DE trace at the reported threshold as CSV")
    parser.add_argument("--compare-omega", action="store_true", help="Also report thresholds under both erased-input models")
    parser.set_defaults(handler=cmd_threshold)


def cmd_threshold(args) -> int:
    data = storage.load_protomatrix_file(args.protomatrix, args.preset)
    protomatrix, delta = storage.to_protomatrix(data)
    de = de_config_from_args(args)
    homogeneous = data.homogeneous if args.homogeneous is None else args.homogeneous
    hops = args.hops or data.hops
    field = FieldSpec(m=data.m)
    family = template = None
    delta1 = args.delta1 if args.delta1 is not None else data.delta1
    delta2 = args.delta2 if args.delta2 is not None else data.delta2

    if args.family:
        family = storage.import_family(args.family)
        if family.M != data.M:
            raise InputError(f"Family has M={family.M}, protomatrix file has M={data.M}")
    else:
        if hops is None:
            raise InputError("Give --hops (or a family file) when the protomatrix file names no line network")
        template = LineNetworkSpec.homogeneous(0.0, hops, data.M, data.m)
        if not homogeneous:
            family = enumerate_family(template, delta1, delta2)
            template = None

    lifting = (data.Z1, data.Z2) if data.Z1 and data.Z2 else None
    resolution = delta1 if delta1 is not None else config.EPS_RESOLUTION
    rows = threshold_profile(
        protomatrix, delta, family=family, template=template, de_config=de,
        workers=args.threads, resolution=resolution, lifting=lifting,
    )

    emit_config(args, run_config(
        args, de=de, delta1=delta1, delta2=delta2 if family is None else family.delta2,
        protomatrix=args.protomatrix, preset=args.preset, family=args.family,
        hops=hops, homogeneous=homogeneous, M=data.M, m=data.m,
    ))
    if not rows[0].capacity < float("inf"):
        logger.warning("No rank distribution of the family makes density evolution converge: no threshold")
    table = [
        {
            "extension_rows": row.extension_rows, "capacity": row.capacity, "eps": row.eps,
            "rate": row.rate, "integer_rate": row.integer_rate, "gap": row.gap,
        }
        for row in rows
    ]
    header = HEADER
    if args.compare_omega:
        header = HEADER + OMEGA_HEADER
        for entry in table:
            n_rows = protomatrix.n_core + entry["extension_rows"]
            modes = compare_omega_modes(
                protomatrix.truncated(n_rows), delta[:n_rows], family=family, template=template,
                de_config=de, workers=args.threads, resolution=resolution,
            )
            entry.update(capacity_exact=modes["exact"], capacity_binomial=modes["binomial"], omega_difference=modes["difference"])
    emit_table(args, header, table)

    if args.trace:
        top = rows[-1]
        h = _distribution_at(top, family, template, data.M, field)
        if h is None:
            logger.warning("No threshold, so no DE trace is written")
        else:
            storage.write_csv(args.trace, ["iteration", "max_x", "max_z"], de_trace(protomatrix, delta, h, de, field.q))
    return 0


def _distribution_at(row, family, template, M, field) -> Optional[RankDistribution]:
    if not row.capacity < float("inf"):
        return None
    if template is not None:
        return line_network_dist(LineNetworkSpec(eps=[row.eps] * template.E, M=M, field=field))
    key = int(round(row.capacity / family.delta2))
    members = family.rank_matrix(key)
    return RankDistribution(members[np.argmin(members @ np.arange(M + 1))])
