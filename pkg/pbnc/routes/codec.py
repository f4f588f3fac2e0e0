"""``encode`` and ``decode``: raw packet files through a lifted code and back."""

import logging

import numpy as np

from pbnc import storage
from pbnc.errors import InputError
from pbnc.models.models import BatchEquation, DecoderKind, PacketBlock
from pbnc.routes.common import emit_config, float_list, run_config, seed_of
from pbnc.schemas.field import FieldSpec
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import BatchFile
from pbnc.services.codec_service import (
    bp_decode,
    build_precode_encoder,
    inactivation_decode,
    outer_encode,
    precode_encode,
)
from pbnc.services.simulation_service import channel_transmit

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("encode", parents=parents, help="Encode a packet file into batches")
    parser.add_argument("--code", required=True, help="Lifted code file")
    parser.add_argument("--input", required=True, help="Raw packet file with the input packets")
    parser.add_argument("--N", type=int, default=None, help="Batches to emit (default: all rows of the code)")
    parser.add_argument("--eps", type=float_list, default=None, help="Pass the batches through a line network with these erasures")
    parser.set_defaults(handler=cmd_encode)

    parser = subparsers.add_parser("decode", parents=parents, help="Recover input packets from a batch file")
    parser.add_argument("--code", required=True, help="Lifted code file")
    parser.add_argument("--batches", required=True, help="Batch file written by encode")
    parser.add_argument("--decoder", choices=[d.value for d in DecoderKind], default=DecoderKind.INACTIVATION.value)
    parser.add_argument("--max-inactive", type=int, default=None, help="Inactivation cap (default: 2*sqrt(A))")
    parser.set_defaults(handler=cmd_decode)


def cmd_encode(args) -> int:
    code = storage.load_lifted_code(args.code)
    inputs = storage.read_packets(args.input)
    if inputs.m != code.m:
        raise InputError(f"Packet file uses GF(2^{inputs.m}), the code GF(2^{code.m})")
    seed = seed_of(args)
    encoder = build_precode_encoder(code, np.random.default_rng([seed]))
    N = code.n_batches if args.N is None else args.N

    rng = np.random.default_rng([seed, 1])
    V = precode_encode(encoder, inputs)
    precursors = outer_encode(encoder.code.first_batches(N), V, code.M, rng)
    if args.eps:
        netspec = LineNetworkSpec(eps=args.eps, M=code.M, field=FieldSpec(m=code.m))
        batches = channel_transmit(precursors, netspec, rng)
    else:
        batches = [BatchEquation(p.index_set, p.G, np.eye(code.M, dtype=np.int64), p.X) for p in precursors]
    logger.info(f"Encoded {inputs.count} packets into {len(batches)} batches ({sum(b.received for b in batches)} packets received)")

    emit_config(args, run_config(args, code=args.code, input=args.input, N=N, eps=args.eps))
    result = storage.batch_file(batches, code.M, inputs.T, code.K, code.m, precode_seed=seed)
    if args.output:
        storage.save_model(args.output, result)
    else:
        print(result.model_dump_json())
    return 0


def cmd_decode(args) -> int:
    code = storage.load_lifted_code(args.code)
    data = storage.load_model(args.batches, BatchFile)
    if (data.M, data.K, data.m) != (code.M, code.K, code.m):
        raise InputError(f"Batch file (M={data.M}, K={data.K}, m={data.m}) does not match the code")
    encoder = build_precode_encoder(code, np.random.default_rng([data.precode_seed]))
    batches = storage.to_batches(data)

    if DecoderKind(args.decoder) == DecoderKind.BP:
        result = bp_decode(batches, encoder.code)
    else:
        result = inactivation_decode(batches, encoder.code, args.max_inactive)
    logger.info(
        f"Decoder recovered {result.recovered_count}/{code.K} packets "
        f"({result.inactivated_count} inactive, {result.rounds} rounds)"
    )
    emit_config(args, run_config(args, code=args.code, batches=args.batches, decoder=args.decoder, max_inactive=args.max_inactive))
    if not result.recovered[encoder.free].all():
        raise InputError(f"Decoding failed: {int((~result.recovered[encoder.free]).sum())} input packets unrecovered")
    storage.write_packets(args.output, PacketBlock(result.values[encoder.free].T, code.m))
    return 0
