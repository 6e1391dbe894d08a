"""``ersr`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, dump_config, load_kv, parse_config
from .dsaf import RampSchedule, ScoreDictionary, combined_score, topk_select
from .ellipse import EllipseParams, refine_map
from .losses import (
    aug_consistency,
    ori_consistency,
    supervised_loss,
    sym_consistency,
    total_loss,
)
from .metrics import MetricUndefined, asd, dice_score, hd95
from .raster import RasterIOError, read_image, read_mask, write_image, write_mask
from .symmetry import (
    AXIS_STRATEGIES,
    DECOMPOSE_REGIONS,
    SPLIT_MODES,
    axis_from_ellipse,
    compose_symmetric_images,
    decompose_prediction,
    mirror_prediction,
    split_halves,
)
from .synth import (
    PhantomSpec,
    TeacherCorruption,
    ablation_csv,
    generate_phantom,
    mock_teacher,
    run_axis_ablation,
    run_pipeline_experiment,
    parallel_map,
)

log = logging.getLogger("ersr")

ELLIPSE_COLUMNS = ["c_a", "c_b", "axis_major", "axis_minor", "theta_deg"]
MAP_SUFFIXES = (".ersrf32", ".png")


def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.10g}"


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_ellipse_csv(e: EllipseParams, path) -> None:
    _write_text(path, _csv_text(ELLIPSE_COLUMNS, [[_fmt(v) for v in e.as_row()]]))


def read_ellipse_csv(path) -> EllipseParams:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no ellipse row")
    r = rows[0]
    return EllipseParams(*(float(r[c]) for c in ELLIPSE_COLUMNS))


def _list_maps(directory) -> dict[str, Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"input directory not found: {d}")
    out = {}
    for p in sorted(d.iterdir()):
        if p.suffix.lower() in MAP_SUFFIXES:
            out.setdefault(p.stem, p)
    return out


def _config(args) -> PipelineConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(PipelineConfig)}
    return parse_config(args.config, overrides)


# -- subcommands ------------------------------------------------------------


def cmd_score(args) -> int:
    cfg = _config(args)
    maps = _list_maps(args.input)

    def one(item):
        sid, path = item
        s = combined_score(read_image(path), cfg.alpha, cfg.tau, cfg.epsilon)
        return [sid, _fmt(s.s_boundary), _fmt(s.s_contour), _fmt(s.s_score)]

    rows = parallel_map(one, list(maps.items()), None)
    _write_text(args.out, _csv_text(["sample_id", "s_boundary", "s_contour", "s_score"], rows))
    log.info("scored %d maps -> %s", len(rows), args.out)
    return 0


def cmd_filter(args) -> int:
    book = ScoreDictionary()
    with open(args.scores, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            book.update(row["sample_id"], float(row["s_score"]))
    if len(book) == 0:
        raise ValueError(f"{args.scores}: no scores")
    n = args.n if args.n is not None else len(book)
    ids = topk_select(book, args.ratio, n)
    text = "".join(f"{sid}\n" for sid in ids)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_refine(args) -> int:
    cfg = _config(args)
    ref = refine_map(read_image(args.input), cfg.beta, cfg.tau)
    if ref.skipped:
        log.warning("refinement skipped (%s); writing input unchanged", ref.reason)
    write_image(ref.p_re, args.out)
    if args.dump_ellipse:
        if ref.ellipse is None:
            _write_text(args.dump_ellipse, _csv_text(ELLIPSE_COLUMNS, []))
        else:
            write_ellipse_csv(ref.ellipse, args.dump_ellipse)
    return 0


def cmd_augment(args) -> int:
    cfg = _config(args)
    image = read_image(args.image)
    mask = read_mask(args.mask, cfg.tau)
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} and mask {mask.shape} differ in shape")
    e = read_ellipse_csv(args.ellipse)
    axis = axis_from_ellipse(e, cfg.axis_kind, rng=np.random.default_rng(cfg.seed), mask=mask)
    halves = split_halves(axis, *image.shape, mode=cfg.split_mode)
    pair = compose_symmetric_images(image, mask, axis, halves, seed=cfg.seed, perturb=not args.no_perturb)
    write_image(pair.x_s1, f"{args.out_prefix}_s1.png")
    write_image(pair.x_s2, f"{args.out_prefix}_s2.png")
    return 0


MANIFEST_COLUMNS = ["sample_id", "p_o", "p_s1", "p_s2", "p_re", "ellipse", "sup_pred", "sup_gt", "step"]
LOSS_COLUMNS = ["sample_id", "l_sup", "l_ori", "l_aug", "l_sym", "lambda", "l_total"]


def cmd_losses(args) -> int:
    cfg = _config(args)
    manifest = Path(args.inputs)
    base = manifest.parent
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS[:6] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{manifest}: missing columns {missing}")
        entries = list(reader)
    schedule = RampSchedule(0.0, cfg.lambda_max, cfg.total_steps)

    def one(row):
        load = lambda key: read_image(base / row[key])  # noqa: E731
        p_o, p_s1, p_s2, p_re = load("p_o"), load("p_s1"), load("p_s2"), load("p_re")
        mask = (p_re > cfg.tau).astype(np.uint8)
        e = read_ellipse_csv(base / row["ellipse"])
        axis = axis_from_ellipse(e, cfg.axis_kind, rng=np.random.default_rng(cfg.seed), mask=mask)
        halves = split_halves(axis, *p_o.shape, mode=cfg.split_mode)
        p_o1, p_o2 = mirror_prediction(p_o, axis, halves)
        parts = halves.restrict(mask) if cfg.decompose_region == "foreground" else halves
        s1 = decompose_prediction(p_s1, axis, parts)
        s2 = decompose_prediction(p_s2, axis, parts)
        l_sup = 0.0
        if row.get("sup_pred") and row.get("sup_gt"):
            l_sup = supervised_loss(
                read_image(base / row["sup_pred"]), read_mask(base / row["sup_gt"]), cfg.dice_weight, cfg.bce_weight
            )
        step = float(row.get("step") or cfg.total_steps)
        r = total_loss(
            l_sup,
            ori_consistency(p_o, p_re),
            aug_consistency(p_o1, p_s1, p_o2, p_s2),
            sym_consistency(*s1, *s2),
            schedule,
            step,
        )
        return [row["sample_id"]] + [_fmt(v) for v in (r.l_sup, r.l_ori, r.l_aug, r.l_sym, r.lambda_t, r.l_total)]

    rows = parallel_map(one, entries, None)
    _write_text(args.out, _csv_text(LOSS_COLUMNS, rows))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    preds, gts = _list_maps(args.pred), _list_maps(args.gt)
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise FileNotFoundError(f"no ground truth in {args.gt} for: {', '.join(missing[:5])}")

    def one(sid):
        a, b = read_mask(preds[sid], cfg.tau), read_mask(gts[sid], cfg.tau)
        try:
            h, s = hd95(a, b, cfg.spacing), asd(a, b, cfg.spacing)
        except MetricUndefined:
            log.warning("%s: empty surface, hd95/asd undefined", sid)
            h = s = float("nan")
        return sid, dice_score(a, b), h, s

    results = parallel_map(one, sorted(preds), None)
    rows = [[sid, _fmt(d), _fmt(h), _fmt(s)] for sid, d, h, s in results]
    if results:
        arr = np.array([r[1:] for r in results], dtype=float)
        with np.errstate(all="ignore"):
            means = [np.nanmean(arr[:, k]) if np.any(~np.isnan(arr[:, k])) else float("nan") for k in range(3)]
        rows.append(["mean"] + [_fmt(v) for v in means])
    _write_text(args.out, _csv_text(["sample_id", "dice", "hd95", "asd"], rows))
    return 0


_SPEC_TUPLES = {"semi_major_range", "eccentricity_range", "theta_range"}


def _phantom_spec(values: dict[str, str]) -> tuple[PhantomSpec, int, float]:
    values = dict(values)
    n = int(values.pop("n", 10))
    level = float(values.pop("corruption", 1.0))
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(PhantomSpec)}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown phantom spec key {key!r}", key)
        if key in _SPEC_TUPLES:
            parts = [float(x) for x in raw.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{key} expects 'low, high'", key)
            kwargs[key] = tuple(parts)
        elif key in ("size", "seed"):
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    try:
        return PhantomSpec(**kwargs), n, level
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gen(args) -> int:
    spec, n, level = _phantom_spec(load_kv(args.spec) if args.spec else {})
    if args.n is not None:
        n = args.n
    out = Path(args.out)
    for sub in ("images", "masks", "teacher"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    corruption = TeacherCorruption.at_level(level)
    rows = []
    for i in range(n):
        seeds = np.random.default_rng(np.random.SeedSequence([spec.seed, i])).integers(0, 2**31 - 1, size=2)
        ph = generate_phantom(spec, seed=int(seeds[0]))
        sid = f"s{i:05d}"
        write_image(ph.image, out / "images" / f"{sid}.png")
        write_mask(ph.gt, out / "masks" / f"{sid}.png")
        write_image(mock_teacher(ph.gt, corruption, seed=int(seeds[1])), out / "teacher" / f"{sid}.ersrf32")
        rows.append([sid] + [_fmt(v) for v in ph.ellipse.as_row()])
    _write_text(out / "ellipses.csv", _csv_text(["sample_id"] + ELLIPSE_COLUMNS, rows))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    spec = PhantomSpec(size=args.size)
    if args.mix is not None:
        corruption = [TeacherCorruption.at_level(args.noise), TeacherCorruption.at_level(args.mix)]
    else:
        corruption = TeacherCorruption.at_level(args.noise)
    report = run_pipeline_experiment(args.n, spec, corruption, cfg, step=args.step)
    report.write(args.out)
    if args.ablation:
        rows = run_axis_ablation(args.n, spec, corruption, cfg)
        _write_text(Path(args.out) / "axis_ablation.csv", ablation_csv(rows))
    return 0


def cmd_config_dump(args) -> int:
    sys.stdout.write(dump_config(_config(args)))
    return 0


# -- parser -----------------------------------------------------------------


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline configuration (flags override --config)")
    g.add_argument("--config", help="key = value configuration file")
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = {"float": float, "int": int}.get(f.type, str)
        kw = {}
        if f.name == "axis_kind":
            flag, kw = "--axis", {"choices": AXIS_STRATEGIES}
        elif f.name == "split_mode":
            flag, kw = "--split", {"choices": SPLIT_MODES}
        elif f.name == "decompose_region":
            flag, kw = "--decompose-region", {"choices": DECOMPOSE_REGIONS}
        g.add_argument(flag, dest=f.name, type=kind, default=None, **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _config_parent()
    parser = argparse.ArgumentParser(prog="ersr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ersr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("score", parents=[common], help="geometric scores for a directory of maps")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("filter", help="top-K sample ids from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--n", type=int, help="number of unlabeled samples (default: rows in scores)")
    p.add_argument("--out", help="write ids here instead of stdout")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("refine", parents=[common], help="ellipse-constrained refinement of one map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-ellipse")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("augment", parents=[common], help="symmetric augmentation of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--ellipse", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--no-perturb", action="store_true", help="disable pixel-level perturbation")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("losses", parents=[common], help="loss report from a manifest of maps")
    p.add_argument("--inputs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("eval", parents=[common], help="Dice, HD95 and ASD for matched mask directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--spec", help="key = value phantom spec (plus 'n' and 'corruption')")
    p.add_argument("--n", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", parents=[common], help="end-to-end synthetic experiment")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--noise", type=float, default=1.0, help="teacher corruption level")
    p.add_argument("--mix", type=float, help="second corruption level, alternated with --noise")
    p.add_argument("--step", type=int, default=0, help="training step for the ramps")
    p.add_argument("--ablation", action="store_true", help="also write axis_ablation.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("config-dump", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_config_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="ersr: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ersr: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RasterIOError, ValueError, KeyError) as exc:
        print(f"ersr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
