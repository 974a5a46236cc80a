"""Command-line interface: ``daedl train | eval | landscape | ablate``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint, data, experiment
from .errors import ConfigError, DomainError, FormatError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

logger = logging.getLogger("daedl")


def _config(args, base=None):
    if args.config is None and base is not None:
        mapping = dict(base)
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"override {item!r} is not of the form key=value")
            mapping[key.strip()] = value
        cfg = experiment.from_mapping(mapping)
    else:
        cfg = experiment.load_config(args.config, args.set)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args, cfg):
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_checkpoint(args, cfg_out=None):
    path = args.checkpoint or str(Path(cfg_out or ".") / "checkpoint.npz")
    if not Path(path).exists():
        raise ConfigError(f"checkpoint {path} not found")
    return checkpoint.load(path)


def cmd_train(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    result = experiment.train_run(cfg)
    checkpoint.save(out / "checkpoint.npz", result.net, result.gda,
                    cfg.train_config().to_dict(), cfg.to_dict())
    experiment.write_history(out / "history.csv", result.history)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    print(f"trained {len(result.history)} epochs; checkpoint written to {out / 'checkpoint.npz'}")
    return EXIT_OK


def _eval_sets(args, cfg, n_classes, dim):
    if args.id_data or args.ood_data:
        if not (args.id_data and args.ood_data):
            raise ConfigError("--id and --ood must be given together")
        test = data.read_csv(args.id_data, name=Path(args.id_data).stem, n_classes=n_classes)
        ood = {}
        for path in args.ood_data:
            ds = data.read_csv(path, name=Path(path).stem, n_classes=n_classes)
            ood[ds.name if ds.name not in ood else path] = ds
    else:
        splits = experiment.build_splits(cfg)
        test, ood = splits.test, splits.ood
    for name, ds in [("ID", test), *ood.items()]:
        if ds.dim != dim:
            raise ConfigError(f"{name} data has dimension {ds.dim}, the model expects {dim}")
        if ds is test and ds.y.max() >= n_classes:
            raise ConfigError(f"ID labels exceed the model's {n_classes} classes")
    if not ood:
        raise ConfigError("no OOD data: pass --ood or configure 'ood'")
    return test, ood


def cmd_eval(args):
    ckpt = _load_checkpoint(args, args.out)
    cfg = _config(args, base=ckpt.run_config or None)
    out = _out_dir(args, cfg)
    measures = tuple(m.strip() for m in args.measures.split(",") if m.strip())
    test, ood = _eval_sets(args, cfg, ckpt.net.n_classes, ckpt.net.input_dim)
    gda = ckpt.gda if cfg.de else None
    report, table = experiment.evaluate(ckpt.net, gda, test, ood, measures, cfg.to_dict())
    experiment.write_report(out, report, table)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_landscape(args):
    ckpt = _load_checkpoint(args, args.out)
    cfg = _config(args, base=ckpt.run_config or None)
    out = _out_dir(args, cfg)
    gda = ckpt.gda if cfg.de else None
    grid = experiment.landscape(ckpt.net, gda, cfg)
    experiment.write_table(out / "landscape.csv", experiment.LANDSCAPE_COLUMNS, grid)
    print(f"wrote {len(grid)} grid cells to {out / 'landscape.csv'}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    per_run, summary = experiment.ablate(cfg)
    experiment.write_ablation(out / "ablation.csv", summary, len(cfg.ablate_seeds))
    cols = experiment.ablation_columns(summary)
    experiment.write_table(out / "ablation_runs.csv", ["row", "seed"] + cols,
                           [[f"({r})", str(s)] + [m.get(c, float("nan")) for c in cols] for r, s, m in per_run])
    print(f"wrote {len(summary)} ablation rows to {out / 'ablation.csv'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="daedl", description="Density aware evidential classification.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_config):
        p.add_argument("--config", required=False, default=None,
                       help="JSON run configuration" + ("" if need_config else " (default: the checkpoint's)"))
        p.add_argument("--out", default=None, help="output directory (default: config key 'out')")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")

    p = sub.add_parser("train", help="train a model and fit its feature density")
    common(p, True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="OOD, misclassification and calibration metrics")
    common(p, False)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default: OUT/checkpoint.npz)")
    p.add_argument("--id", dest="id_data", default=None, help="ID test set as CSV")
    p.add_argument("--ood", dest="ood_data", action="append", default=[], help="OOD set as CSV; repeatable")
    p.add_argument("--measures", default="aleatoric,epistemic", help="comma list of uncertainty measures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("landscape", help="uncertainty over a 2-D input grid")
    common(p, False)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default: OUT/checkpoint.npz)")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("ablate", help="train and evaluate the exp/density/spectral-norm toggle rows")
    common(p, True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"daedl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DomainError, FormatError) as exc:
        print(f"daedl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"daedl: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
