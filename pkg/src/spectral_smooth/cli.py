"""Command line: ``sst test | power | robustness | rank | basis inspect``.

Exit codes: 0 success, 1 usage or input error, 2 null rejected at ``--alpha``.
Any flag can be preset through an ``SST_<FLAG>`` environment variable, e.g.
``SST_SEED=7`` or ``SST_B1=500``.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import read_artifact
from .errors import SSTError, UsageError
from .harness import StudyConfig, emit_reports, run_power_study, run_robustness_study
from .kernel_space import QUANTILE_READINGS, read_csv_dataset
from .mnist_ingest import (
    DEFAULT_BANDWIDTH,
    DEFAULT_BASIS_SIZE,
    DEFAULT_CUTOFF,
    contact_sheet,
    filter_digit,
    load_labeled,
    rank_by_density_ratio,
    read_idx_file,
    write_ranking_csv,
)
from .null_models import FAMILIES, NULL_ALIASES, resolve_null
from .smooth_test import CalibratedSST, SstConfig

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for "rejected"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _env(name: str, default=None):
    return os.environ.get(f"SST_{name.upper().replace('-', '_')}", default)


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def load_points(path, labels=None, digit=None, raw_pixels=False) -> np.ndarray:
    """CSV points, or IDX images (optionally filtered to one digit via a label file)."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return read_csv_dataset(path)
    if labels is not None:
        data = load_labeled(path, labels, raw_pixels=raw_pixels)
        return data.images if digit is None else filter_digit(data, digit)
    if digit is not None:
        raise UsageError("--digit needs a label file")
    arr = read_idx_file(path).to_array()
    pts = arr.reshape(arr.shape[0], -1).astype(np.float64)
    return pts if raw_pixels else pts / 255.0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sst", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="show warnings about dropped settings")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the spectral smooth test on one dataset")
    t.add_argument("--data", default=_env("data"), help="CSV (one point per row) or IDX image file")
    t.add_argument("--labels", default=_env("labels"), help="IDX label file for --digit filtering")
    t.add_argument("--digit", type=int, default=_env("digit"))
    t.add_argument("--raw-pixels", action="store_true", help="keep IDX pixels on the 0-255 scale")
    t.add_argument(
        "--null",
        default=_env("null", "normal"),
        help=f"null model: {', '.join(sorted(set(FAMILIES) | set(NULL_ALIASES)))}",
    )
    t.add_argument("--reference", default=_env("reference"), help="reference dataset for --null bootstrap")
    t.add_argument("--reference-labels", default=_env("reference_labels"))
    t.add_argument("--dim", type=int, default=_env("dim"), help="dimension for mvn nulls (default: data dimension)")
    t.add_argument("--bandwidths", type=_float_list, default=_env("bandwidths"))
    t.add_argument("--cutoffs", type=_int_list, default=_env("cutoffs", "1-10"))
    t.add_argument("--quantile-reading", choices=QUANTILE_READINGS, default=_env("quantile_reading", "five_sixths"))
    t.add_argument("--m", type=int, default=int(_env("m", 2000)))
    t.add_argument("--b1", type=int, default=_env("b1"))
    t.add_argument("--b2", type=int, default=_env("b2"))
    t.add_argument("--n-cal", type=int, default=_env("n_cal"), help="sets both --b1 and --b2 unless given")
    t.add_argument("--seed", type=int, default=_env("seed"))
    t.add_argument("--alpha", type=float, default=_env("alpha"))
    t.add_argument("--threads", type=int, default=_env("threads"))
    t.add_argument("--out", default=_env("out"), help="write the JSON result here as well as stdout")
    t.add_argument("--save-calibration", help="write bases and null calibration to this file")
    t.add_argument("--load-calibration", help="reuse a calibration written by --save-calibration")
    t.set_defaults(func=cmd_test)

    for name, fn in (("power", cmd_power), ("robustness", cmd_robustness)):
        s = sub.add_parser(name, help=f"{name} study from a JSON config")
        s.add_argument("config", help="StudyConfig JSON file")
        s.add_argument("--out", default=_env("out"), help="output directory (overrides config out_dir)")
        s.add_argument("--seed", type=int, default=_env("seed"))
        s.add_argument("--threads", type=int, default=_env("threads"))
        s.set_defaults(func=fn)

    r = sub.add_parser("rank", help="rank test images by the estimated density ratio")
    r.add_argument("--train-images", required=True)
    r.add_argument("--train-labels", required=True)
    r.add_argument("--test-images", required=True)
    r.add_argument("--test-labels", required=True)
    r.add_argument("--digit", type=int, required=True)
    r.add_argument("--cutoff", "-I", type=int, default=int(_env("cutoff", DEFAULT_CUTOFF)))
    r.add_argument("--bandwidth", "--eps", type=float, default=float(_env("bandwidth", DEFAULT_BANDWIDTH)))
    r.add_argument("--m", type=int, default=int(_env("m", DEFAULT_BASIS_SIZE)))
    r.add_argument("--seed", type=int, default=_env("seed"))
    r.add_argument("--scaled-pixels", action="store_true", help="scale pixels to [0, 1] (default keeps 0-255)")
    r.add_argument("--out", default=_env("out", "ranking.csv"))
    r.add_argument("--sheet", default=None, help="PGM contact sheet path")
    r.set_defaults(func=cmd_rank)

    b = sub.add_parser("basis", help="basis artifacts")
    bsub = b.add_subparsers(dest="basis_command", required=True, parser_class=_Parser)
    bi = bsub.add_parser("inspect", help="summarise a basis or calibration artifact")
    bi.add_argument("path")
    bi.set_defaults(func=cmd_basis_inspect)
    return p


def _seed(value) -> int:
    return int(value) if value is not None else secrets.randbelow(2**31)


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def cmd_test(args) -> int:
    if not args.data:
        raise UsageError("--data is required")
    data = load_points(args.data, args.labels, args.digit, args.raw_pixels)
    if data.shape[0] == 0:
        raise UsageError(f"{args.data}: no points selected")
    seed = _seed(args.seed)
    if args.load_calibration:
        model = CalibratedSST.load(args.load_calibration)
        seed = model.config.seed
    else:
        reference = None
        if args.null == "bootstrap":
            if not args.reference:
                raise UsageError("--null bootstrap needs --reference")
            reference = load_points(args.reference, args.reference_labels, args.digit, args.raw_pixels)
        null = resolve_null(args.null, dim=args.dim or data.shape[1], reference=reference)
        if null.dim != data.shape[1]:
            raise UsageError(f"null model has d={null.dim}, data has d={data.shape[1]}")
        b1 = args.b1 or args.n_cal or 2000
        b2 = args.b2 or args.n_cal or 1000
        cfg = SstConfig(
            bandwidths=args.bandwidths,
            cutoffs=args.cutoffs,
            m=args.m,
            b1=int(b1),
            b2=int(b2),
            seed=seed,
            quantile_reading=args.quantile_reading,
            workers=args.threads or os.cpu_count() or 1,
        )
        model = CalibratedSST.prepare(null, data.shape[0], cfg)
        if args.save_calibration:
            model.save(args.save_calibration)
    result = model.test(data)
    doc = result.to_json()
    doc["config"].pop("workers", None)
    doc["seed"] = seed
    doc["data"] = str(args.data)
    doc["null"] = args.null
    doc["raw_pixels"] = bool(args.raw_pixels)
    if args.alpha is not None:
        doc["alpha"] = args.alpha
        doc["rejected"] = result.rejects(args.alpha)
    _emit(doc, args.out)
    if args.alpha is not None and result.rejects(args.alpha):
        return EXIT_REJECT
    return EXIT_OK


def _study(args, runner, stem) -> int:
    cfg = StudyConfig.from_json(args.config)
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = int(args.seed)
    if args.threads is not None:
        d["workers"] = int(args.threads)
    cfg = StudyConfig.from_dict(d)
    out = args.out or cfg.out_dir or "."
    table = runner(cfg, progress=lambda i, th: print(f"theta={th:g} done", file=sys.stderr))
    paths = emit_reports(table, out, cfg, stem=stem)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def cmd_power(args) -> int:
    return _study(args, run_power_study, "power")


def cmd_robustness(args) -> int:
    return _study(args, run_robustness_study, "robustness")


def cmd_rank(args) -> int:
    if not 0 <= args.digit <= 9:
        raise UsageError(f"--digit must be in 0..9, got {args.digit}")
    raw = not args.scaled_pixels
    train = load_labeled(args.train_images, args.train_labels, raw_pixels=raw)
    test = load_labeled(args.test_images, args.test_labels, raw_pixels=raw)
    tr = filter_digit(train, args.digit)
    te = filter_digit(test, args.digit)
    if tr.shape[0] == 0 or te.shape[0] == 0:
        raise UsageError(f"digit {args.digit} has no images in train or test")
    seed = _seed(args.seed)
    ranking = rank_by_density_ratio(tr, te, args.cutoff, args.bandwidth, args.m, seed)
    labels = np.full(te.shape[0], args.digit)
    write_ranking_csv(args.out, ranking, labels)
    if args.sheet:
        contact_sheet(te, ranking, args.sheet, shape=test.shape, raw_pixels=raw)
    manifest = {
        "digit": args.digit,
        "cutoff": args.cutoff,
        "bandwidth": args.bandwidth,
        "m": args.m,
        "seed": seed,
        "raw_pixels": raw,
        "rows": len(ranking),
        "csv": str(args.out),
        "sheet": args.sheet,
    }
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_basis_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    kind, arrays, meta = read_artifact(path)
    if kind == "basis":
        summary = {
            "kind": kind,
            "m": int(arrays["training_points"].shape[0]),
            "d": int(arrays["training_points"].shape[1]),
            "bandwidth": float(arrays["bandwidth"]),
            "eigenvalues": [float(v) for v in arrays["eigenvalues"]],
        }
    else:
        summary = {
            "kind": kind,
            "m": int(arrays["training_points"].shape[0]),
            "d": int(arrays["training_points"].shape[1]),
            "bandwidths": meta["bandwidths"],
            "eigenvalues": {
                f"{eps:.6g}": [float(v) for v in arrays[f"basis{k}_eigenvalues"]]
                for k, eps in enumerate(meta["bandwidths"])
            },
            "settings": len(meta["settings"]),
            "dropped": len(meta["dropped"]),
            "n": meta["n"],
            "b1": meta["b1"],
            "b2": meta["b2"],
            "seed": meta["seed"],
        }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore", RuntimeWarning)
        try:
            return args.func(args)
        except (SSTError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
