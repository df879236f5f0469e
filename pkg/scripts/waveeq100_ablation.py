"""Train the full model and the without-S ablation on WaveEq-100 and
write a side-by-side metric table.

    python scripts/waveeq100_ablation.py --workdir work/
"""
import argparse
from pathlib import Path

from varsep import checkpoint as ck
from varsep import config
from varsep import datasets as D
from varsep.cli import main as cli
from varsep.evaluation import ablation_report

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="work")
    ap.add_argument("--sequences", type=int, default=100, help="WaveEq sequences to simulate")
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()
    work = Path(args.workdir)
    data = work / "data" / "waveeq100.svsf"
    if not data.exists():
        cli(["gen-data", "waveeq100", "--seed", "0", "--sequences", str(args.sequences), "--out", str(data)])

    variants = {}
    for name, cfg_file in (("full", "waveeq100_desk.cfg"), ("without_S", "waveeq100_desk_nos.cfg")):
        cfg = config.load(HERE / "configs" / cfg_file)
        out = work / "runs" / name
        if args.epochs:
            cfg = config.loads(cfg.dumps(), epochs=args.epochs)
        cfg_path = work / f"{name}.cfg"
        cfg_path.write_text(cfg.dumps())
        cli(["train", "--config", str(cfg_path), "--dataset", str(data), "--out", str(out)])
        c = ck.load(out / "final.svck")
        ecfg = config.loads(c.config_text)
        variants[name] = (c.params, ecfg.model_config(ecfg.m))

    ds = D.load(data)
    csv = ablation_report(variants, ds.flat(ds.test_indices), [10, 40], ds.frame_shape)
    (work / "ablation.csv").write_text(csv)
    print(csv)


if __name__ == "__main__":
    main()
