"""Command-line front end.

    gazeconv train {segment,reconstruct,generate} --data DIR --out DIR [--seed N]
    gazeconv segment --model M --input CSV --output CSV
    gazeconv reconstruct --model M --input CSV --output CSV
    gazeconv generate --model M --length N --output CSV [--seed N] [--start x,y,t]
    gazeconv eval {segment,reconstruct,generate} ...

Exit codes: 0 ok, 2 usage/configuration error, 3 data error, 4 numerical abort.
``GAZECONV_DATA`` supplies the data directory when ``--data`` is omitted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from gazeconv import modelio
from gazeconv.config import RunConfig
from gazeconv.data import (CLASS_NAMES, SCALE, GazeSequence, load_csv, load_directory, make_folds, to_input_tensor,
                           write_csv)
from gazeconv.errors import ConfigurationError, DataError, DataFormatError, LabelError, LengthError, ShapeError
from gazeconv.evaluation import (ConfusionMatrix, cross_validate, delta_magnitudes, js_divergence,
                                 magnitude_histogram, metrics_csv, nearest_centroid_accuracy, rasterize_scanpath)
from gazeconv.genvae import build_vae, center_scanpath, generate_scanpath, vae_train
from gazeconv.reconnet import build_recon_model, error_mask, recon_evaluate, recon_train, reconstruct_sequence
from gazeconv.reconnet import sample_clean_sections
from gazeconv.segnet import build_seg_model, seg_predict, seg_train
from gazeconv.tensor import Tensor

log = logging.getLogger("gazeconv")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
DATA_ENV = "GAZECONV_DATA"
CONFIG_SIDECAR = "run_config.ini"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    if getattr(args, "seed", None) is not None:
        cfg.set_value("run", "seed", int(args.seed))
    return cfg


def _data_dir(args) -> str:
    data = args.data or os.environ.get(DATA_ENV)
    if not data:
        raise UsageError(f"--data is required (or set {DATA_ENV})")
    if not os.path.isdir(data):
        raise DataError(f"data directory {data!r} does not exist")
    return data


def _load_data(directory) -> list[GazeSequence]:
    seqs = load_directory(directory)
    if not seqs:
        raise DataError(f"no CSV files in {directory}")
    return seqs


def _write(path, text: str):
    with open(path, "w", newline="") as handle:
        handle.write(text)


def _write_sidecar(out_dir, cfg: RunConfig, extra: dict):
    os.makedirs(out_dir, exist_ok=True)
    text = "[invocation]\n" + "".join(f"{k} = {v}\n" for k, v in sorted(extra.items())) + "\n" + cfg.to_text()
    _write(os.path.join(out_dir, CONFIG_SIDECAR), text)


def _history_csv(history: list[dict]) -> str:
    if not history:
        return "epoch\n"
    keys = list(history[0])
    lines = [",".join(keys)]
    for row in history:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in (row[k] for k in keys)))
    return "\n".join(lines) + "\n"


def _clean_delta_sections(seqs, length: int) -> list[Tensor]:
    out = []
    for seq in seqs:
        bad = error_mask(seq)
        d = np.stack([np.diff(seq.x), np.diff(seq.y), np.diff(seq.t)]) / SCALE
        for start in range(0, d.shape[1] - length + 1, length):
            if not bad[start:start + length + 1].any():
                out.append(Tensor(d[:, start:start + length]))
    return out


def _recon_sections(seqs, rng, sec: dict) -> list[GazeSequence]:
    out = []
    for seq in seqs:
        lo = min(sec["section_min_len"], len(seq))
        out.extend(sample_clean_sections(seq, rng, sec["sections_per_file"], lo, sec["section_max_len"]))
    return out


def train_model(task: str, seqs: list[GazeSequence], cfg: RunConfig, seed: int):
    """Build and train one model; returns ``(model, history)``."""
    init_rng, data_rng, train_rng = _rngs(seed, 3)
    if task == "segment":
        sec = cfg.sections["segment"]
        model = build_seg_model(init_rng, sec["kernel_heights"], sec["widths"])
        return seg_train(model, seqs, cfg.seg_config(), train_rng)
    if task == "reconstruct":
        sec = cfg.sections["reconstruct"]
        model = build_recon_model(init_rng, sec["kernel_heights"], sec["widths"])
        return recon_train(model, _recon_sections(seqs, data_rng, sec), cfg.recon_config(), train_rng)
    if task == "generate":
        sec = cfg.sections["generate"]
        corpus = _clean_delta_sections(seqs, int(sec["section_length"]))
        if not corpus:
            raise DataError("no clean delta sections of the configured length")
        model = build_vae(init_rng, encoder_widths=sec["encoder_widths"], decoder_widths=sec["decoder_widths"])
        return vae_train(model, corpus, cfg.vae_config(), train_rng)
    raise UsageError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    data = _data_dir(args)
    out = args.out
    _write_sidecar(out, cfg, {"command": "train", "task": args.task, "data": data})
    seqs = _load_data(data)
    model, history = train_model(args.task, seqs, cfg, cfg.seed)
    modelio.save_model(model, os.path.join(out, "model.json"))
    _write(os.path.join(out, "loss_history.csv"), _history_csv(history))
    print(f"trained {args.task} model for {len(history)} epochs -> {os.path.join(out, 'model.json')}")
    return 0


def cmd_segment(args) -> int:
    model = modelio.load_model(args.model, expected_kind="segment")
    seq = load_csv(args.input)
    labels, probs = seg_predict(model, seq)
    extra = {"pred_label": labels}
    extra.update({f"p_{name}": probs[i] for i, name in enumerate(CLASS_NAMES)})
    write_csv(seq, args.output, extra)
    return 0


def cmd_reconstruct(args) -> int:
    model = modelio.load_model(args.model, expected_kind="reconstruct")
    seq = load_csv(args.input)
    write_csv(reconstruct_sequence(model, seq), args.output)
    return 0


def _parse_triple(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise UsageError("--start expects x,y,t")
    return tuple(parts)


def cmd_generate(args) -> int:
    model = modelio.load_model(args.model, expected_kind="generate")
    rng = np.random.default_rng(args.seed)
    seq = generate_scanpath(model, rng, args.length, _parse_triple(args.start))
    write_csv(seq, args.output, include_labels=False)
    return 0


def _eval_segment(args, cfg, seqs, out):
    if args.folds:
        plan = make_folds(seqs, args.folds, _rngs(cfg.seed, 1)[0])
        _write(os.path.join(out, "fold_plan.txt"), plan.to_text())

        def train_fn(train):
            return train_model("segment", train, cfg, cfg.seed)[0]

        total, reports = cross_validate(seqs, plan, train_fn, lambda m, s: seg_predict(m, s)[0])
        lines = ["fold,test_subjects,n_samples,accuracy"]
        for r in reports:
            _write(os.path.join(out, f"fold_{r.fold}_confusion.csv"), r.confusion.to_csv())
            _write(os.path.join(out, f"fold_{r.fold}_metrics.csv"), metrics_csv(r.confusion))
            lines.append(f"{r.fold},{' '.join(r.test_subjects)},{r.n_samples},{r.confusion.accuracy:.6f}")
        _write(os.path.join(out, "folds.csv"), "\n".join(lines) + "\n")
    else:
        if not args.model:
            raise UsageError("eval segment needs --folds or --model")
        model = modelio.load_model(args.model[0], expected_kind="segment")
        total = ConfusionMatrix()
        for seq in seqs:
            if seq.labels is None:
                continue
            total = total + ConfusionMatrix.from_labels(seq.labels, seg_predict(model, seq)[0])
        if total.total == 0:
            raise DataError("no labelled samples to evaluate")
    _write(os.path.join(out, "confusion.csv"), total.to_csv())
    _write(os.path.join(out, "metrics.csv"), metrics_csv(total))


def _eval_reconstruct(args, cfg, seqs, out):
    if not args.model:
        raise UsageError("eval reconstruct needs --model")
    model = modelio.load_model(args.model[0], expected_kind="reconstruct")
    ev = cfg.sections["eval"]
    report = recon_evaluate(model, seqs, _rngs(cfg.seed, 1)[0], ev["fractions"], ev["draws"],
                            ev["sections_per_draw"], ev["section_min_len"], ev["section_max_len"])
    _write(os.path.join(out, "reconstruction_mae.csv"), report.to_csv())
    _write(os.path.join(out, "reconstruction_scatter.csv"), report.scatter_csv())


def _real_sections(seqs, rng, length, count):
    pool = [s for s in seqs if len(s) >= length]
    if not pool:
        raise DataError(f"no recording with at least {length} samples")
    out = []
    for _ in range(count):
        seq = pool[int(rng.integers(len(pool)))]
        start = int(rng.integers(0, len(seq) - length + 1))
        out.append(seq.slice(start, start + length))
    return out


def _eval_generate(args, cfg, data_dirs, out):
    if not args.model or len(args.model) != len(data_dirs):
        raise UsageError("eval generate needs one --model per --data directory (one per stimulus)")
    ev = cfg.sections["eval"]
    canvas = (ev["canvas_width"], ev["canvas_height"])
    length, count = ev["generated_length"], ev["generated_per_model"]
    gen_rng, real_rng = _rngs(cfg.seed, 2)
    reference, queries = {}, {}
    lines = ["stimulus,js_divergence_delta_magnitude"]
    for model_path, data in zip(args.model, data_dirs):
        name = os.path.basename(os.path.normpath(data))
        model = modelio.load_model(model_path, expected_kind="generate")
        real = [center_scanpath(s, canvas) for s in _real_sections(_load_data(data), real_rng, length, count)]
        gen = [center_scanpath(generate_scanpath(model, gen_rng, length, (0.0, 0.0, 0.0)), canvas)
               for _ in range(count)]
        img_dir = os.path.join(out, "images", name)
        os.makedirs(img_dir, exist_ok=True)
        reference[name] = [rasterize_scanpath(s, canvas) for s in real]
        queries[name] = [rasterize_scanpath(s, canvas) for s in gen]
        for i, im in enumerate(reference[name]):
            im.save_png(os.path.join(img_dir, f"real_{i:04d}.png"))
        for i, im in enumerate(queries[name]):
            im.save_png(os.path.join(img_dir, f"generated_{i:04d}.png"))
        real_mag = delta_magnitudes(real)
        edges = np.linspace(0.0, max(real_mag.max(), 1e-9), 17)
        js = js_divergence(magnitude_histogram(real_mag, edges), magnitude_histogram(delta_magnitudes(gen), edges))
        lines.append(f"{name},{js:.6f}")
    accuracy, cm = nearest_centroid_accuracy(reference, queries)
    names = sorted(reference)
    _write(os.path.join(out, "generation_stats.csv"), "\n".join(lines) + "\n")
    _write(os.path.join(out, "stimulus_confusion.csv"), cm.to_csv(names))
    _write(os.path.join(out, "stimulus_accuracy.csv"),
           f"accuracy,chance\n{accuracy:.6f},{1.0 / len(names):.6f}\n")


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    if args.fractions:
        cfg.set_value("eval", "fractions", tuple(float(p) / 100.0 for p in args.fractions.split(",") if p.strip()))
    if args.draws is not None:
        cfg.set_value("eval", "draws", args.draws)
    if args.sections is not None:
        cfg.set_value("eval", "sections_per_draw", args.sections)
    data_dirs = args.data or ([os.environ[DATA_ENV]] if os.environ.get(DATA_ENV) else [])
    if not data_dirs:
        raise UsageError(f"--data is required (or set {DATA_ENV})")
    for d in data_dirs:
        if not os.path.isdir(d):
            raise DataError(f"data directory {d!r} does not exist")
    out = args.out
    _write_sidecar(out, cfg, {"command": "eval", "task": args.task, "data": " ".join(data_dirs),
                              "model": " ".join(args.model or []), "folds": args.folds or 0})
    if args.task == "generate":
        _eval_generate(args, cfg, data_dirs, out)
        return 0
    seqs = [s for d in data_dirs for s in _load_data(d)]
    if args.task == "segment":
        _eval_segment(args, cfg, seqs, out)
    else:
        _eval_reconstruct(args, cfg, seqs, out)
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazeconv", description="Fully convolutional nets for raw eye-tracking data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_flags(p):
        p.add_argument("--config", help="key=value config file with [section] headers")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("task", choices=("segment", "reconstruct", "generate"))
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    config_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func in (("segment", cmd_segment), ("reconstruct", cmd_reconstruct)):
        p = sub.add_parser(name, help=f"{name} one CSV file")
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("generate", help="synthesise a scanpath")
    p.add_argument("--model", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="500,500,0", help="x,y,t of the first sample")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("task", choices=("segment", "reconstruct", "generate"))
    p.add_argument("--model", action="append", help="model file (repeat for eval generate)")
    p.add_argument("--data", action="append", help="data directory (repeat for eval generate)")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, help="subject-disjoint cross-validation folds (eval segment)")
    p.add_argument("--fractions", help="injected error percentages, e.g. 5,10,15,20,25,30")
    p.add_argument("--draws", type=int, help="random file draws (eval reconstruct)")
    p.add_argument("--sections", type=int, help="sections per draw (eval reconstruct)")
    config_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"gazeconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"gazeconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:  # NumericalError, or numpy configured to raise
        print(f"gazeconv: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DataFormatError, LabelError, LengthError, ShapeError, OSError) as exc:
        print(f"gazeconv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
