"""Train on bouncing sprites and score content swaps on random test pairs.

    python scripts/sprite_swaps.py --workdir work/ [--idx train-images-idx3-ubyte]
"""
import argparse
from pathlib import Path

from varsep.cli import main as cli

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="work")
    ap.add_argument("--idx", help="IDX image file to draw sprites from")
    ap.add_argument("--pairs", type=int, default=20)
    args = ap.parse_args()
    work = Path(args.workdir)
    data = work / "data" / "sprites.svsf"
    gen = ["gen-data", "sprites", "--seed", "0", "--sequences", "200", "--out", str(data)]
    if args.idx:
        gen += ["--idx", args.idx, "--frame-size", "64"]
    cli(gen)
    out = work / "runs" / "sprites"
    cli(["train", "--config", str(HERE / "configs" / "sprites_desk.cfg"), "--dataset", str(data), "--out", str(out)])
    ck = str(out / "final.svck")
    cli(["eval", "--checkpoint", ck, "--dataset", str(data), "--out", str(work / "sprites_eval")])
    cli(["swap", "--checkpoint", ck, "--dataset", str(data), "--out", str(work / "sprites_swap"),
         "--pairs", str(args.pairs), "--dump-frames"])


if __name__ == "__main__":
    main()
