"""``optimize``: randomized search of the core and extension protomatrices."""

import logging

import numpy as np

from pbnc import storage
from pbnc.models.models import Protomatrix
from pbnc.routes.common import emit_config, run_config, seed_of
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import OptimizeFile
from pbnc.services.network_service import enumerate_family
from pbnc.services.optimizer_service import ThresholdOracle, optimize_core, optimize_extension

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("optimize", parents=parents, help="Search a protomatrix with a low threshold")
    parser.add_argument("config", help="Optimizer JSON file")
    parser.add_argument("--checkpoint", default=None, help="Checkpoint written after every outer iteration")
    parser.add_argument("--resume", action="store_true", help="Continue from --checkpoint when it exists")
    parser.add_argument("--log", default=None, help="Structured per-candidate log file")
    parser.set_defaults(handler=cmd_optimize)


def cmd_optimize(args) -> int:
    request = storage.load_model(args.config, OptimizeFile)
    opt = request.optimizer
    opt = opt.model_copy(update={"seed": seed_of(args, opt.seed)})
    B1 = np.asarray(request.B1, dtype=np.int64).reshape(len(request.B1), -1)
    template = LineNetworkSpec.homogeneous(0.0, request.hops, request.M, request.m)
    delta1 = args.delta1 if args.delta1 is not None else request.delta1
    delta2 = args.delta2 if args.delta2 is not None else request.delta2
    channel = template if request.homogeneous else enumerate_family(template, delta1, delta2)
    oracle = ThresholdOracle(B1, channel, request.de, workers=args.threads, resolution=delta1)

    trace_logger = logging.getLogger("pbnc.optimizer.trace")
    handler = None
    if args.log:
        handler = logging.FileHandler(args.log, mode="a" if args.resume else "w")
        handler.setFormatter(logging.Formatter("%(message)s"))
        trace_logger.addHandler(handler)
        trace_logger.setLevel(logging.INFO)
    try:
        rng = np.random.default_rng(opt.seed)
        initial = None
        if request.initial_B2 is not None:
            initial = (np.asarray(request.initial_B2, dtype=np.int64), request.initial_delta or opt.delta_init)
        core = optimize_core(
            B1, opt, oracle, request.M, rng=rng, initial=initial,
            checkpoint_path=args.checkpoint, resume=args.resume,
        )
        delta = list(core.delta) + list(opt.delta_ext)
        extension = optimize_extension(B1, core.B2, delta, opt, oracle, request.M, rng=rng)
    finally:
        if handler is not None:
            trace_logger.removeHandler(handler)
            trace_logger.setLevel(logging.NOTSET)
            handler.close()

    protomatrix = Protomatrix(B1, np.vstack([core.B2, extension.B2]), n_core=core.B2.shape[0])
    result = storage.protomatrix_file(
        protomatrix, delta, request.M, request.m,
        name="optimized", hops=request.hops, homogeneous=request.homogeneous,
        delta1=delta1, delta2=delta2,
    )
    emit_config(args, run_config(
        args, de=request.de, delta1=delta1, delta2=delta2,
        config=args.config, core_threshold=core.threshold, optimizer=opt.model_dump(),
    ))
    if args.output:
        storage.save_model(args.output, result)
    else:
        print(result.model_dump_json(indent=2))
    return 0
