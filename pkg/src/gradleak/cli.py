"""Command-line interface: ``gradleak {gradgen,attack,audit,eval}``.

Exit codes:
  0  success
  2  invalid input (arguments, files, shapes, hashes)
  3  a conv layer's stacked system is rank deficient
  4  every dense-layer bias gradient is (numerically) zero
  5  a recovered value is outside the activation's output range
"""

import argparse
import json
import math
import os
import sys
from importlib import resources

from . import audit as audit_mod
from .errors import (AllBiasGradientsZero, GradleakError, InvalidActivationOutput,
                     RankDeficient)
from .imageio import ImageFormatError, image_read, image_write
from .metrics import compare
from .model import (dumps_gradients, dumps_parameters, dumps_tensor, init_parameters,
                    loads_gradients, loads_parameters, loads_tensor, parse_architecture)
from .rconv import run_attack
from .tensor import as_tensor
from .victim import compute_gradients

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RANK = 3
EXIT_BIAS = 4
EXIT_ACTIVATION = 5

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm")


class UsageError(GradleakError):
    pass


def builtin_architectures():
    root = resources.files("gradleak") / "architectures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_architecture(ref):
    """``ref`` is a path to a JSON file or the name of a bundled architecture."""
    if os.path.exists(ref):
        with open(ref) as fh:
            return parse_architecture(fh.read())
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in builtin_architectures():
        text = (resources.files("gradleak") / "architectures" / f"{name}.json").read_text()
        return parse_architecture(text)
    raise UsageError(f"no architecture file or bundled architecture named {ref!r}")


def _read_text(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def read_tensor(path, shape=None):
    """Image files by suffix, anything else as a JSON tensor."""
    if path.lower().endswith(IMAGE_SUFFIXES):
        try:
            return image_read(path, shape)
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    x = loads_tensor(_read_text(path))
    return x if shape is None else as_tensor(x, shape)


def write_tensor(path, x):
    if path.lower().endswith(IMAGE_SUFFIXES):
        image_write(path, x)
    else:
        _write_text(path, dumps_tensor(x))


def cmd_gradgen(args):
    arch = load_architecture(args.arch)
    x = read_tensor(args.input, arch.input_shape)
    if args.params:
        params = loads_parameters(_read_text(args.params), arch)
    else:
        params = init_parameters(arch, args.seed, fan_in=args.fan_in_init)
    if not 0 <= args.label < arch.n_classes:
        raise UsageError(f"label {args.label} outside [0, {arch.n_classes})")
    grads, _ = compute_gradients(arch, params, x, args.label,
                                 seed=None if args.params else args.seed)
    _write_text(args.out, dumps_gradients(grads))
    if not args.params:
        out = args.params_out or os.path.join(os.path.dirname(args.out) or ".", "params.json")
        _write_text(out, dumps_parameters(params))
    return EXIT_OK


def _report_path(args):
    if args.report:
        return args.report
    stem, _ = os.path.splitext(args.out)
    return stem + ".report.json"


def cmd_attack(args):
    arch = load_architecture(args.arch)
    params = loads_parameters(_read_text(args.params), arch)
    grads = loads_gradients(_read_text(args.grads), arch)
    original = read_tensor(args.original, arch.input_shape) if args.original else None

    report = run_attack(arch, params, grads, use_weight_constraints=not args.no_weight_constraints)
    x = report.input
    write_tensor(args.out, x)
    if args.tensor_out:
        write_tensor(args.tensor_out, x)

    doc = report.to_dict(include_timing=args.timing)
    metrics = None
    if original is not None:
        metrics = compare(original, x, report.wall_time if args.timing else None).to_dict()
    doc["metrics"] = metrics
    _write_text(_report_path(args), json.dumps(doc, indent=2, allow_nan=False) + "\n")
    return EXIT_OK


def cmd_audit(args):
    arch = load_architecture(args.arch)
    params = grads = None
    if bool(args.params) != bool(args.grads):
        raise UsageError("--params and --grads must be given together")
    if args.params:
        params = loads_parameters(_read_text(args.params), arch)
        grads = loads_gradients(_read_text(args.grads), arch)
    audits = audit_mod.audit_architecture(arch, params, grads,
                                          use_weight_constraints=not args.no_weight_constraints)
    text = audit_mod.audits_to_json(audits) if args.json else audit_mod.format_table(audits)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args):
    a = read_tensor(args.original)
    b = read_tensor(args.reconstructed)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = compare(a, b)
    if args.json:
        print(json.dumps(m.to_dict()))
    else:
        psnr = "inf" if math.isinf(m.psnr) else f"{m.psnr:.4f}"
        print(f"mse {m.mse:.6e}  psnr {psnr} dB")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradleak",
        description="Reconstruct CNN inputs from leaked gradients and audit layer exposure.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradgen", help="run one victim training step and dump its gradients")
    p.add_argument("--arch", required=True, help="architecture JSON file or bundled name")
    p.add_argument("--params", help="parameters JSON; drawn from --seed when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fan-in-init", action="store_true",
                   help="scale generated weights by 1/sqrt(fan-in) instead of the fixed range")
    p.add_argument("--input", required=True, help="P5/P6 image or JSON tensor")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--out", required=True, help="gradient bundle JSON to write")
    p.add_argument("--params-out", help="where generated parameters go (default: params.json next to --out)")
    p.set_defaults(func=cmd_gradgen)

    p = sub.add_parser("attack", help="reconstruct the input from a gradient bundle")
    p.add_argument("--arch", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--grads", required=True)
    p.add_argument("--out", required=True, help="reconstruction (.ppm/.pgm image or JSON tensor)")
    p.add_argument("--report", help="report JSON (default: <out>.report.json)")
    p.add_argument("--no-weight-constraints", action="store_true",
                   help="use gradient constraints only")
    p.add_argument("--original", help="ground-truth input for metrics")
    p.add_argument("--tensor-out", help="also write the reconstruction as a lossless JSON tensor")
    p.add_argument("--timing", action="store_true",
                   help="record wall time in the report (makes it non-reproducible)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("audit", help="per-layer constraint counts and vulnerability verdicts")
    p.add_argument("--arch", required=True)
    p.add_argument("--params")
    p.add_argument("--grads", help="with --params, also measure the assembled matrices' rank")
    p.add_argument("--no-weight-constraints", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("eval", help="MSE and PSNR between two inputs")
    p.add_argument("--original", required=True)
    p.add_argument("--reconstructed", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def _fail(code, message):
    print(f"gradleak: error: {message}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RankDeficient as exc:
        return _fail(EXIT_RANK, f"rank deficient at layer {exc.layer}: "
                                f"rank {exc.rank} < {exc.n_unknowns} unknowns")
    except AllBiasGradientsZero as exc:
        return _fail(EXIT_BIAS, str(exc))
    except InvalidActivationOutput as exc:
        return _fail(EXIT_ACTIVATION, str(exc))
    except (GradleakError, ImageFormatError, ValueError) as exc:
        return _fail(EXIT_INVALID, str(exc))
    except OSError as exc:
        return _fail(EXIT_INVALID, f"{exc.filename}: {exc.strerror}")


if __name__ == "__main__":
    sys.exit(main())
