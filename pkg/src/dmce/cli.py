"""Command line entry point: ``dmce <subcommand> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import baselines
from .channels import load_dataset, save_dataset
from .dmnet import analytic_param_count, save_params
from .fileformat import CorruptFileError
from .harness import experiments as ex
from .harness import report
from .harness.config import ExperimentConfig

log = logging.getLogger("dmce")


def _context(args) -> tuple[ExperimentConfig, ex.Artifacts]:
    config = ExperimentConfig.load(args.config, args.set, args.out)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config, ex.Artifacts(config.output_dir)


def _finish(config, command, outputs, inputs=()):
    hashes = {str(Path(p).name): ex.file_digest(p) for p in [*inputs, *outputs] if Path(p).exists()}
    report.write_manifest(config.output_dir / f"manifest_{command}.json", command, config.to_json(),
                          config.seed, hashes)
    for p in outputs:
        print(p)


def cmd_gen_data(args):
    config, art = _context(args)
    train_ds, test_ds = ex.make_datasets(config)
    save_dataset(train_ds, art.train_data)
    save_dataset(test_ds, art.test_data)
    _finish(config, "gen-data", [art.train_data, art.test_data])


def cmd_train(args):
    config, art = _context(args)
    train_ds = load_dataset(ex.require(art.train_data))
    T = args.T or config.T

    def progress(row):
        print(json.dumps(row), flush=True)

    net, history = ex.train_network(config, train_ds, T, progress=progress)
    save_params(net, art.net(T))
    report.write_csv(art.history(T), "train_history", history, config.seed, config.hash())
    _finish(config, "train", [art.net(T), art.history(T)], [art.train_data])


def cmd_fit_baselines(args):
    config, art = _context(args)
    train_ds = load_dataset(ex.require(art.train_data))
    scov, gmm = ex.fit_baselines(config, train_ds)
    baselines.save_gmm(scov, art.scov)
    baselines.save_gmm(gmm, art.gmm)
    _finish(config, "fit-baselines", [art.scov, art.gmm], [art.train_data])


def _plot(args, fn, rows, path):
    if not args.no_plots:
        fn(rows, path)
        return [path]
    return []


def cmd_eval_snr(args):
    config, art = _context(args)
    test_ds = load_dataset(ex.require(art.test_data))
    net = ex.load_params(ex.require(art.net(config.T)), expect=config.net)
    scov = baselines.load_gmm(ex.require(art.scov))
    gmm = baselines.load_gmm(ex.require(art.gmm))
    rows = ex.run_mse_vs_snr(config, test_ds, net, scov, gmm)
    out = report.write_csv(config.output_dir / "mse_vs_snr.csv", "mse_vs_snr", rows, config.seed, config.hash())
    figs = _plot(args, report.plot_mse_vs_snr, rows, config.output_dir / "mse_vs_snr.png")
    _finish(config, "eval-snr", [out, *figs], [art.test_data, art.net(config.T), art.scov, art.gmm])


def cmd_eval_T(args):
    config, art = _context(args)
    train_ds = load_dataset(ex.require(art.train_data))
    test_ds = load_dataset(ex.require(art.test_data))
    T_list = args.T_list or config.raw["eval"]["T_list"]

    def progress(row):
        print(json.dumps(row), flush=True)

    rows = ex.run_mse_vs_T(config, train_ds, test_ds, T_list, net_dir=config.output_dir, progress=progress)
    out = report.write_csv(config.output_dir / "mse_vs_T.csv", "mse_vs_T", rows, config.seed, config.hash())
    figs = _plot(args, report.plot_mse_vs_T, rows, config.output_dir / "mse_vs_T.png")
    _finish(config, "eval-T", [out, *figs], [art.train_data, art.test_data, *(art.net(T) for T in T_list)])


def cmd_eval_steps(args):
    config, art = _context(args)
    test_ds = load_dataset(ex.require(art.test_data))
    net = ex.load_params(ex.require(art.net(config.T)), expect=config.net)
    rows = ex.run_intermediate_mse(config, test_ds, net)
    out = report.write_csv(config.output_dir / "intermediate_mse.csv", "intermediate_mse", rows, config.seed,
                           config.hash())
    figs = _plot(args, report.plot_intermediate, rows, config.output_dir / "intermediate_mse.png")
    _finish(config, "eval-steps", [out, *figs], [art.test_data, art.net(config.T)])


def cmd_eval_tmatch(args):
    config, _ = _context(args)
    rows = ex.run_matched_steps(config)
    out = report.write_csv(config.output_dir / "matched_steps.csv", "matched_steps", rows, config.seed,
                           config.hash())
    figs = _plot(args, report.plot_matched_steps, rows, config.output_dir / "matched_steps.png")
    _finish(config, "eval-tmatch", [out, *figs])


def cmd_params_count(args):
    config, _ = _context(args)
    shapes = config.net.param_shapes()
    rows = [{"layer": name, "params": math.prod(shape)} for name, shape in shapes.items()]
    rows.append({"layer": "total", "params": analytic_param_count(config.net)})
    out = report.write_csv(config.output_dir / "params_count.csv", "params_count", rows, config.seed,
                           config.hash())
    for r in rows:
        print(f"{r['layer']:<12} {r['params']}")
    _finish(config, "params-count", [out])


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate training and test channel datasets"),
    "train": (cmd_train, "train the diffusion denoiser"),
    "fit-baselines": (cmd_fit_baselines, "fit the sample-covariance and GMM baselines"),
    "eval-snr": (cmd_eval_snr, "MSE versus SNR for all estimators"),
    "eval-T": (cmd_eval_T, "DM MSE versus the total number of diffusion steps"),
    "eval-steps": (cmd_eval_steps, "MSE of the intermediate reverse-process estimates"),
    "eval-tmatch": (cmd_eval_tmatch, "entry step of the reverse process per SNR"),
    "params-count": (cmd_params_count, "parameter count of the configured network"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmce", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config file (defaults apply to missing fields)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field by dotted path, e.g. train.epochs=5")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        if name == "train":
            p.add_argument("--T", type=int, help="train for this T instead of schedule.T")
        if name == "eval-T":
            p.add_argument("--T-list", type=int, nargs="+", dest="T_list")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (FileNotFoundError, CorruptFileError, ValueError, KeyError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"dmce {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
