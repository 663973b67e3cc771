"""
CLI
Punto de entrada de línea de comandos: track, evaluate, simulate, ablate,
init-weights, fit-weights (python -m src.cli <subcomando> ...)
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger

from src.cascade_tracker import CascadeTracker
from src.clearmot_metrics import evaluate
from src.core_model import GRAPH_FEATURE_DIM, ConfigError, TrackerConfig, TrackingError
from src.io_formats import (
    read_config,
    read_detections,
    read_ground_truth,
    read_results,
    read_weights,
    write_results,
    write_weights,
)
from src.neighbor_graph import GcnModel, init_model
from src.synth_harness import (
    FIT_PAIRS,
    FIT_STEP,
    FIT_STEPS,
    TABLE_COLUMNS,
    ablation_run,
    ablation_sweep,
    fit_graph_model,
    generate,
    read_scenario,
    summarize_sweep,
)

EXIT_OK = 0
EXIT_FAILURE = 1


def _configure_logging(verbose: bool):
    logger.remove()
    logger.add(sys.stderr, level="INFO" if verbose else "WARNING",
               format="{time:HH:mm:ss} | {level: <8} | {name}:{line} - {message}")


def cmd_track(args) -> int:
    sequence = read_detections(args.det)
    config = read_config(args.config).with_embedding_dim(sequence.dim)

    gcn = None
    if config.second_round and not config.graph_dropped:
        if args.weights:
            gcn = read_weights(args.weights)
            # Sin gcn_layer_dims en la configuración se adoptan las del archivo
            config = config.with_layer_dims(gcn.dims)
        else:
            gcn = init_model(config.layer_dims(), args.seed)

    tracker = CascadeTracker(config, gcn)
    outputs = tracker.run(sequence.frames)
    write_results(args.out, outputs)

    print(f"frames={tracker.stats.frames} {tracker.stats.summary_line()}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gt = read_ground_truth(args.gt)
    hyp = read_results(args.res)
    report = evaluate(gt, hyp, args.iou)
    table = report.to_frame(Path(args.res).stem)

    print(table.to_string(float_format=lambda v: f"{v:.3f}"))
    print(f"MOTA={report.mota:.3f} IDF1={report.idf1:.3f} IDS={report.ids}")
    print(table.to_csv(index=False, float_format="%.6f"), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = read_scenario(args.spec)
    gt_text, det_text = generate(spec)
    Path(args.out_gt).write_text(gt_text, encoding="utf-8")
    Path(args.out_det).write_text(det_text, encoding="utf-8")
    print(f"[1/1] escenario seed={spec.seed}: {spec.n_targets} identidades, {spec.frames} frames")
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec = read_scenario(args.spec)
    variants = {Path(p).stem: read_config(p) for p in args.configs}
    if len(variants) != len(args.configs):
        raise ConfigError("nombres de variante repetidos", "configs")
    models = _read_variant_weights(args.weights or [])

    if args.seeds > 1:
        seeds = range(spec.seed, spec.seed + args.seeds)
        sweep = ablation_sweep(spec, variants, seeds, gcn_seed=args.gcn_seed, models=models)
        table = summarize_sweep(sweep)
        if args.out:
            sweep.to_csv(args.out, index=False)
    else:
        table = ablation_run(spec, variants, gcn_seed=args.gcn_seed, models=models)[TABLE_COLUMNS]
        if args.out:
            table.to_csv(args.out, index_label="variant")

    print(table.to_csv(index_label="variant", float_format="%.6f"), end="")
    return EXIT_OK


def _read_variant_weights(items: List[str]) -> Dict[str, GcnModel]:
    """Pares VARIANTE=RUTA de --weights"""
    models = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"se esperaba VARIANTE=RUTA, recibido {item!r}", "weights")
        models[name] = read_weights(path)
    return models


def _parse_dims(text: str) -> List[int]:
    try:
        dims = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"dimensiones inválidas: {text!r}") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"dimensiones inválidas: {text!r}")
    return dims


def cmd_init_weights(args) -> int:
    if args.dims[-1] != GRAPH_FEATURE_DIM:
        raise ConfigError(f"la última dimensión debe ser {GRAPH_FEATURE_DIM}", "dims")
    model = init_model(args.dims, args.seed)
    write_weights(args.out, model)
    print(f"pesos {args.dims} (seed {args.seed}) -> {args.out}")
    return EXIT_OK


def cmd_fit_weights(args) -> int:
    spec = read_scenario(args.spec)
    config = read_config(args.config) if args.config else TrackerConfig()
    print(f"[1/2] ajustando la GCN sobre {args.pairs} pares de grafos ({args.steps} pasos)...")
    model, history = fit_graph_model(spec, config, seed=args.seed, n_pairs=args.pairs,
                                     n_steps=args.steps, step=args.step)
    write_weights(args.out, model)
    print(f"[2/2] pesos {model.dims} -> {args.out}")
    print(f"pérdida {history[0]:.4f} -> {history[-1]:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.cli",
        description="Tracker online en cascada con grafos de vecinos")
    parser.add_argument("--verbose", action="store_true", help="logs INFO en stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="ejecuta el tracker sobre un archivo de detecciones")
    p.add_argument("--det", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0, help="semilla de la GCN si no hay --weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="métricas CLEAR MOT e IDF1")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="genera un escenario sintético")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-det", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablate", help="compara variantes de configuración")
    p.add_argument("--spec", required=True)
    p.add_argument("--configs", required=True, nargs="+")
    p.add_argument("--seeds", type=int, default=1, help="número de semillas (medianas si > 1)")
    p.add_argument("--gcn-seed", type=int, default=0)
    p.add_argument("--weights", nargs="+", metavar="VARIANTE=RUTA",
                   help="pesos GCN ajustados para una variante")
    p.add_argument("--out", help="CSV con la tabla completa")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("fit-weights", help="ajusta la GCN sobre grafos de co-walkers sintéticos")
    p.add_argument("--spec", required=True, help="escenario (dimensión, grupo, corrupción)")
    p.add_argument("--config", help="configuración del tracker (K, readout, capas)")
    p.add_argument("--pairs", type=int, default=FIT_PAIRS)
    p.add_argument("--steps", type=int, default=FIT_STEPS)
    p.add_argument("--step", type=float, default=FIT_STEP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_weights)

    p = sub.add_parser("init-weights", help="pesos GCN Glorot deterministas")
    p.add_argument("--dims", required=True, type=_parse_dims, help="d,h1,h2,2048")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_weights)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if getattr(args, "seeds", 1) < 1:
        parser.error("--seeds debe ser >= 1")
    try:
        return args.func(args)
    except (TrackingError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
