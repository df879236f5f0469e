"""Command line: ``varsep gen-data | train | eval | swap | verify``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from . import config as config_mod
from . import datasets as D
from .evaluation import content_swap_eval, evaluate_model, evaluate_sequence, metrics_csv
from .idx import read_idx
from .model import init_params
from .training import METRICS_HEADER, format_metrics_row, train
from .verify import run_suite

log = logging.getLogger("varsep")

_PAIR_STREAM = 3 << 20


# ---------------------------------------------------------------------------
# helpers


def write_pgm(path: Path, frame: np.ndarray) -> None:
    """Binary graymap (P5, maxval 255); values in [0, 1] map to round(255 x)."""
    img = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    q = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    path.write_bytes(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii") + q.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a P5 graymap")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:w * h], dtype=np.uint8).reshape(h, w)


def _horizons(text: str | None, default) -> list[int]:
    if not text:
        return sorted(default)
    out = sorted(int(v) for v in text.split(",") if v.strip())
    if not out or out[0] < 1:
        raise SystemExit("horizons must be positive integers")
    return out


def _load_checkpoint(path: str):
    c = ck.load(path)
    cfg = config_mod.loads(c.config_text)
    c.state = replace(c.state, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    return c, cfg


def _model_for(cfg: config_mod.ExperimentConfig, ds: D.Dataset):
    try:
        return cfg.model_config(ds.m)
    except config_mod.ConfigError as exc:
        raise SystemExit(f"checkpoint/dataset mismatch: {exc}") from None


def _dump_sequence(out: Path, stem: str, frames: np.ndarray, frame_shape) -> None:
    shape = frame_shape if len(frame_shape) == 2 else (1, int(np.prod(frame_shape)))
    for k, f in enumerate(frames):
        write_pgm(out / f"{stem}_{k:03d}.pgm", f.reshape(shape))


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = args.sequences
    if args.kind == "waveeq":
        ds = D.generate_waveeq(args.seed, n or 300, workers=args.workers)
    elif args.kind == "waveeq100":
        if args.parent:
            parent = D.load(args.parent)
        else:
            log.info("no --parent given, generating the waveeq parent set")
            parent = D.generate_waveeq(args.seed, n or 300, workers=args.workers)
        ds = D.subsample_waveeq100(parent, args.seed)
    elif args.kind == "sprites":
        if args.idx:
            images = read_idx(args.idx)
            ds = D.generate_bouncing_sprites(args.seed, n or 100, frame_size=args.frame_size,
                                             n_sprites=args.n_sprites, source="idx", images=images)
        else:
            ds = D.generate_bouncing_sprites(args.seed, n or 100, frame_size=args.frame_size,
                                             n_sprites=args.n_sprites)
    else:
        ds = D.generate_heat(args.seed, n or 100)
    D.save(ds, out)
    print(f"wrote {args.kind} dataset {out} frames={ds.frames.shape}")
    return 0


def cmd_train(args) -> int:
    cfg = config_mod.load(args.config, seed=args.seed, out=args.out, dataset=args.dataset)
    if not cfg.dataset:
        raise SystemExit("no dataset given (config key 'dataset' or --dataset)")
    ds = D.load(cfg.dataset)
    cfg = replace(cfg.resolved(), m=cfg.m or ds.m)
    model_cfg = _model_for(cfg, ds)
    out = Path(cfg.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    text = cfg.dumps()
    (out / "config.resolved").write_text(text, encoding="utf-8")

    tc = cfg.train_config()
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rows = []
    if args.resume:
        prev, prev_cfg = _load_checkpoint(args.resume)
        if prev_cfg.model_config(ds.m) != model_cfg:
            raise SystemExit("resume checkpoint was trained with a different model configuration")
        params, state, start = prev.params, replace(prev.state, **hyper), prev.epoch
        metrics_path = out / "metrics.csv"
        if metrics_path.exists():
            rows = [ln for ln in metrics_path.read_text().splitlines()[1:] if ln and int(ln.split(",")[0]) < start]
        log.info("resuming at epoch %d", start)
    else:
        params, state, start = init_params(model_cfg, cfg.seed), None, 0

    def save(epoch_done, result, path):
        ck.save(ck.Checkpoint(text, result.params, result.state, epoch_done), path)

    def on_epoch(epoch, result):
        rows.append(format_metrics_row(result.log[-1]))
        _write_metrics(out, rows)
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save(epoch + 1, result, out / "checkpoints" / f"epoch_{epoch + 1:04d}.svck")

    train_idx = ds.train_indices[:cfg.train_sequences] if cfg.train_sequences else ds.train_indices
    result = train(model_cfg, tc, cfg.loss_weights(), ds.flat(train_idx), params, state, start, on_epoch)
    _write_metrics(out, rows)
    save(result.epoch, result, out / "final.svck")
    print(f"trained to epoch {result.epoch}; outputs in {out}")
    return 0


def _write_metrics(out: Path, rows) -> None:
    (out / "metrics.csv").write_text(",".join(METRICS_HEADER) + "\n" + "".join(r + "\n" for r in rows))


def cmd_eval(args) -> int:
    c, cfg = _load_checkpoint(args.checkpoint)
    ds = D.load(args.dataset)
    model_cfg = _model_for(cfg, ds)
    horizons = _horizons(args.horizons, cfg.horizons)
    idx = ds.test_indices if args.split == "test" else ds.train_indices
    seqs = ds.flat(idx)
    rep = evaluate_model(c.params, model_cfg, seqs, horizons, ds.frame_shape, cfg.eval_stride, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(metrics_csv({args.name: rep}))
    if args.dump_frames:
        fdir = out / "frames"
        fdir.mkdir(exist_ok=True)
        _, _, pred = evaluate_sequence(c.params, model_cfg, seqs[0], horizons, ds.frame_shape,
                                       stride=len(seqs[0]), return_frames=True)
        n = pred.shape[1]
        _dump_sequence(fdir, f"seq{int(idx[0])}_pred", pred[0], ds.frame_shape)
        _dump_sequence(fdir, f"seq{int(idx[0])}_truth", seqs[0][:n], ds.frame_shape)
    for h in rep.horizons:
        r = rep.at(h)
        print(f"t+{h}: mse={r['mse']:.6g} psnr={r['psnr']:.4f} ssim={r['ssim']:.4f}")
    return 0


def select_pairs(test_indices, n_pairs: int, seed: int) -> list[tuple[int, int]]:
    """Up to ``n_pairs`` distinct (content, motion) pairs of different test sequences."""
    if len(test_indices) < 2:
        raise ValueError("need at least two test sequences for swaps")
    pool = [(int(a), int(b)) for a in test_indices for b in test_indices if a != b]
    order = np.random.default_rng([seed, _PAIR_STREAM]).permutation(len(pool))
    return [pool[i] for i in order[:n_pairs]]


def cmd_swap(args) -> int:
    c, cfg = _load_checkpoint(args.checkpoint)
    ds = D.load(args.dataset)
    if ds.kind != "sprites":
        raise SystemExit(f"{ds.kind} datasets carry no swap ground truth")
    model_cfg = _model_for(cfg, ds)
    if not model_cfg.use_static:
        raise SystemExit("content swaps need a model with a static code")
    horizons = _horizons(args.horizons, cfg.horizons)
    if args.pair:
        pairs = [tuple(int(v) for v in args.pair.split(","))]
    else:
        pairs = select_pairs(ds.test_indices, args.pairs, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for content, motion in pairs:
        truths = [t.reshape(len(t), -1).astype(np.float64) for t in D.swap_ground_truths(ds, content, motion)]
        seq_c, seq_m = ds.flat([content])[0], ds.flat([motion])[0]
        reports[f"swap:{content}-{motion}"] = content_swap_eval(c.params, model_cfg, seq_c, seq_m, truths,
                                                                horizons, ds.frame_shape, cfg.eval_stride)
        if args.dump_frames:
            fdir = out / "frames"
            fdir.mkdir(exist_ok=True)
            _, _, pred = evaluate_sequence(c.params, model_cfg, seq_m, horizons, ds.frame_shape,
                                           stride=len(seq_m), static_seq=seq_c, return_frames=True)
            n = pred.shape[1]
            _dump_sequence(fdir, f"swap{content}-{motion}_pred", pred[0], ds.frame_shape)
            for g, t in enumerate(truths):
                _dump_sequence(fdir, f"swap{content}-{motion}_truth{g}", t[:n], ds.frame_shape)
    (out / "swap.csv").write_text(metrics_csv(reports))
    reps = list(reports.values())
    for i, h in enumerate(horizons):
        print(f"t+{h}: mse={np.mean([r.mse[i] for r in reps]):.6g} over {len(reps)} pairs")
    return 0


def cmd_verify(args) -> int:
    try:
        checks = run_suite(args.suite, partition=args.partition, seed=args.seed)
    except ValueError as exc:
        raise SystemExit(str(exc)) from None
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varsep", description="Static/dynamic latent forecasting experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an SVSF dataset")
    g.add_argument("kind", choices=["waveeq", "waveeq100", "sprites", "heat-analytic"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output .svsf path")
    g.add_argument("--sequences", type=int, default=0, help="sequence count (0: kind default)")
    g.add_argument("--parent", help="waveeq file to subsample for waveeq100")
    g.add_argument("--idx", help="IDX image file used as sprites")
    g.add_argument("--n-sprites", type=int, default=2)
    g.add_argument("--frame-size", type=int, default=32)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--dataset")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--workers", type=int, default=1, help="accepted for symmetry; training is sequential")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--horizons")
    e.add_argument("--split", choices=["test", "train"], default="test")
    e.add_argument("--name", default="model", help="variant label in the CSV")
    e.add_argument("--dump-frames", action="store_true")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("swap", help="content-swap evaluation on a sprites dataset")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--horizons")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pairs", type=int, default=10, help="number of random test pairs")
    s.add_argument("--pair", help="explicit content,motion sequence indices")
    s.add_argument("--dump-frames", action="store_true")
    s.set_defaults(func=cmd_swap)

    v = sub.add_parser("verify", help="numerical self-checks")
    v.add_argument("suite", choices=["heat", "advection", "wave", "bound", "flow", "all"])
    v.add_argument("--partition", type=int, help="interval count for the bound check")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, D.DatasetFormatError, ck.CheckpointFormatError, config_mod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
