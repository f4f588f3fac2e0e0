"""``simulate`` and ``mlbound``: Monte-Carlo FER curves and the ML lower bound."""

import logging

from pbnc import storage
from pbnc.models.models import DecoderKind, OutputFormat
from pbnc.routes.common import emit_config, emit_table, float_list, int_list, run_config, seed_of
from pbnc.schemas.field import FieldSpec
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import TrialPlanFile
from pbnc.services.simulation_service import TrialPlan, effective_input_count, ml_bound_curve, overhead_report, run_fer

logger = logging.getLogger(__name__)

FER_HEADER = ["N", "trials", "failures", "fer", "wilson_lo", "wilson_hi", "ml_bound"]


def register(subparsers, parents):
    parser = subparsers.add_parser("simulate", parents=parents, help="Frame error rate over a line network")
    parser.add_argument("plan", help="Trial plan JSON file")
    parser.add_argument("--trials", type=int, default=None, help="Override the plan's trial count")
    parser.set_defaults(handler=cmd_simulate)

    parser = subparsers.add_parser("mlbound", parents=parents, help="ML lower bound on the FER")
    parser.add_argument("--eps", type=float_list, required=True, help="Per-hop erasure probabilities")
    parser.add_argument("--M", type=int, required=True, help="Batch size")
    parser.add_argument("--m", type=int, default=8, help="Field degree (default: %(default)s)")
    parser.add_argument("--A", type=int, required=True, help="Number of input packets")
    parser.add_argument("--N", type=int_list, required=True, help="Batch counts")
    parser.set_defaults(handler=cmd_mlbound)


def cmd_simulate(args) -> int:
    request = storage.load_model(args.plan, TrialPlanFile)
    if args.trials is not None:
        request = request.model_copy(update={"trials": args.trials})
    code = storage.load_lifted_code(request.code)
    netspec = LineNetworkSpec(eps=request.eps, M=code.M, field=FieldSpec(m=code.m))
    max_inactive = code.K if request.unlimited_inactive else request.max_inactive
    plan = TrialPlan(
        netspec=netspec, code=code, N_range=tuple(request.N_range), trials=request.trials,
        decoder=request.decoder, seed=seed_of(args, request.seed), max_inactive=max_inactive,
        T=request.T, early_stop=request.early_stop, with_ml_bound=request.with_ml_bound,
    )

    points = run_fer(plan, workers=max(args.threads, 1))
    emit_config(args, run_config(
        args, plan=args.plan, trials=plan.trials, decoder=plan.decoder.value,
        max_inactive=max_inactive if plan.decoder == DecoderKind.INACTIVATION else None,
    ))
    rows = []
    for p in points:
        row = {h: getattr(p, h) for h in FER_HEADER}
        if OutputFormat(args.format) == OutputFormat.JSON:
            row["packet_erasure_rate"] = p.packet_erasure_rate
        rows.append(row)
    emit_table(args, FER_HEADER, rows)

    if points:
        report = overhead_report(points, effective_input_count(plan))
        if report.N is None:
            logger.info(f"FER {report.target_fer} not reached within N <= {max(plan.N_range)}")
        else:
            overhead = "n/a" if report.overhead is None else f"{report.overhead:.2%}"
            logger.info(f"FER {report.target_fer} reached at N={report.N} (rate {report.rate:.4f}, overhead vs ML bound {overhead})")
    return 0


def cmd_mlbound(args) -> int:
    netspec = LineNetworkSpec(eps=args.eps, M=args.M, field=FieldSpec(m=args.m))
    bounds = ml_bound_curve(netspec, args.A, args.N)
    emit_config(args, run_config(args, eps=args.eps, M=args.M, m=args.m, A=args.A, N=args.N))
    emit_table(args, ["N", "ml_bound"], [{"N": N, "ml_bound": b} for N, b in zip(args.N, bounds)])
    return 0
