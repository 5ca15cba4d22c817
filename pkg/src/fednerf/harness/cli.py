from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import ConfigError, FedNerfError, ProtocolError
from .config import ExperimentConfig
from .experiment import evaluate, ratio_series_csv, read_metrics, run_client, run_server, run_sim
from .scene import SceneSpec, generate_scene

log = logging.getLogger("fednerf")


def _setup_logging():
    level = os.environ.get("FEDNERF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _parse_ids(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad view list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fednerf", description="Federated NeRF training with channel-aware client selection")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-scene", help="ray-trace the procedural sphere scene")
    g.add_argument("--spec", help="SceneSpec JSON (defaults to the built-in scene)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--mode", choices=["sim", "server", "client"], default="sim")
    r.add_argument("--device-id", type=int)

    e = sub.add_parser("evaluate", help="mean PSNR of a saved model on dataset views")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--views", required=True, type=_parse_ids, help="comma-separated view indices")
    e.add_argument("--config", help="experiment config for render/encoding settings")

    x = sub.add_parser("export-metrics", help="re-emit raw and smoothed rate-ratio series")
    x.add_argument("--run", required=True, help="run output directory")
    x.add_argument("--window", type=int, default=None)
    x.add_argument("--out", help="output CSV (default: <run>/ratio_series.csv)")
    return ap


def _run(args) -> int:
    if args.command == "generate-scene":
        spec = SceneSpec.load(args.spec) if args.spec else SceneSpec()
        out = generate_scene(spec, args.out, args.seed)
        print(out)
        return 0
    if args.command == "run":
        cfg = ExperimentConfig.load(args.config)
        if args.mode == "sim":
            result = run_sim(cfg)
        elif args.mode == "server":
            result = run_server(cfg)
        else:
            if args.device_id is None:
                raise ConfigError("--device-id is required in client mode")
            return run_client(cfg, args.device_id)
        print(f"{len(result.records)} rounds, final test PSNR {result.final_psnr:.3f} dB -> {result.out_dir}")
        return 0
    if args.command == "evaluate":
        cfg = ExperimentConfig.load(args.config) if args.config else None
        print(f"{evaluate(args.model, args.dataset, args.views, cfg):.6f}")
        return 0
    if args.command == "export-metrics":
        run = Path(args.run)
        window = args.window
        if window is None:
            cfg_path = run / "config.json"
            window = ExperimentConfig.load(cfg_path).smoothing_window if cfg_path.exists() else 10
        text = ratio_series_csv(read_metrics(run / "metrics.csv"), window)
        out = Path(args.out) if args.out else run / "ratio_series.csv"
        out.write_text(text)
        sys.stdout.write(text)
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except FedNerfError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConnectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ProtocolError.exit_code


if __name__ == "__main__":
    sys.exit(main())
