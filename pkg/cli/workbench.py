"""
statbench command line.

    python main.py <subcommand> [--key value ...]

Every subcommand writes its artifacts plus run_config.json into --out-dir
and prints one ``key=value`` summary line on standard output. Exit status:
0 success, 1 domain error, 2 usage error, 3 I/O error.
"""

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core import io_formats as fmt
from core.config import get_config, load_json, save_json
from core.em_core import EmConfig
from core.errors import DomainError, InvalidConfig, MalformedFile
from core.glyphs import DEFAULT_JITTER, Jitter, gen_synthetic_glyphs
from core.logger import get_logger, setup_logging
from core.net_tomo import (
    build_route_matrix, default_network, estimate_rates, pseudo_log_likelihood, simulate_traffic,
)
from core.pet_sim import (
    DetectorGeometry, build_system_matrix, default_phantom_ellipses, make_phantom,
    reconstruct_pet, simulate_sinogram,
)
from core.renewal_lab import (
    BIAS_MODES, DISTRIBUTIONS, bias_sim, length_biased_defect, make_distribution,
    scaling_defect, solve_cq,
)
from core.rng import GENERATOR_NAME
from core.tangent_classifier import BENCH_COLUMNS, run_benchmark
from core.weighting import available_weightings

logger = get_logger("cli")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_IO = 3

DEFAULT_GRID_SIDE = 32


@dataclass
class RunConfig:
    """A validated invocation: subcommand, its options, seed and output directory."""
    subcommand: str
    options: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "out"


# argparse value types

def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {value}")
    return value


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None,
                        help="64-bit unsigned seed (default: STATBENCH_SEED or 1982)")
    common.add_argument("--out-dir", default=None,
                        help="output directory (default: STATBENCH_OUT_DIR or ./out)")

    parser = argparse.ArgumentParser(
        prog="statbench",
        description="Poisson EM tomography, tangent-distance OCR and renewal-theory experiments",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text,
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    p = add("pet-simulate", "phantom, system matrix and Poisson sinogram")
    p.add_argument("--width", type=_positive_int, default=DEFAULT_GRID_SIDE,
                   help="grid width (pixels)")
    p.add_argument("--height", type=_positive_int, default=DEFAULT_GRID_SIDE,
                   help="grid height (pixels)")
    p.add_argument("--pixel-size", type=float, default=1.0, help="pixel side (length units)")
    p.add_argument("--angles", type=_positive_int, default=48, help="projection angles in [0, pi)")
    p.add_argument("--bins", type=_positive_int, default=48, help="parallel bins per angle")
    p.add_argument("--weighting", choices=available_weightings(), default="line-length",
                   help="tube weighting scheme")
    p.add_argument("--total-counts", type=float, default=1e6, help="expected total counts")
    p.add_argument("--ellipses", default=None, help="ellipse CSV (default: built-in phantom)")

    p = add("pet-reconstruct", "EM reconstruction of a simulated sinogram")
    p.add_argument("--in-dir", default=None, help="pet-simulate output (default: --out-dir)")
    p.add_argument("--width", type=_positive_int, default=None,
                   help="grid width (pixels); unset reads the input run_config.json, else 32")
    p.add_argument("--height", type=_positive_int, default=None,
                   help="grid height (pixels); unset reads the input run_config.json, else 32")
    p.add_argument("--iters", type=_positive_int, default=100, help="maximum EM iterations")
    p.add_argument("--tol", type=float, default=1e-8, help="relative log-likelihood tolerance")

    p = add("nettomo-simulate", "route traffic and link counts")
    p.add_argument("--graph", default=None, help="graph file (default: 4-node path)")
    p.add_argument("--od", default=None, help="origin,destination CSV (default: 3 routes)")
    p.add_argument("--rates", type=_float_list, default=[2.0, 5.0, 9.0],
                   help="route rates (traffic per epoch), comma-separated")
    p.add_argument("--epochs", type=_positive_int, default=1000, help="measurement epochs")

    p = add("nettomo-estimate", "route rates from link counts")
    p.add_argument("--in-dir", default=None, help="nettomo-simulate output (default: --out-dir)")
    p.add_argument("--iters", type=_positive_int, default=1000, help="maximum EM iterations")
    p.add_argument("--tol", type=float, default=1e-8, help="relative log-likelihood tolerance")

    def jitter(p: argparse.ArgumentParser):
        d = DEFAULT_JITTER
        p.add_argument("--rotation", type=float, default=d.rotation, help="max rotation jitter (degrees)")
        p.add_argument("--shift", type=float, default=d.shift, help="max shift jitter (pixels)")
        p.add_argument("--thicken", type=float, default=d.thicken, help="max thickening blend")
        p.add_argument("--wobble", type=float, default=d.wobble, help="stroke point wobble sd (pixels)")
        p.add_argument("--scale", type=float, default=d.scale, help="max relative size change")
        p.add_argument("--shear", type=float, default=d.shear, help="max slant")

    p = add("ocr-gen", "synthetic jittered digit corpus")
    p.add_argument("--n-per-class", type=_positive_int, default=100, help="glyphs per digit")
    jitter(p)

    p = add("ocr-bench", "tangent-distance vs L2 nearest neighbour")
    p.add_argument("--n-train", type=_positive_int, default=1000, help="training glyphs")
    p.add_argument("--n-test", type=_positive_int, default=200, help="test glyphs")
    p.add_argument("--epsilon", type=float, default=0.1, help="tangent step (radians / unitless)")
    p.add_argument("--shift-epsilon", type=float, default=1.0, help="tangent translation step (pixels)")
    p.add_argument("--train", default=None, help="training corpus CSV (default: synthetic)")
    p.add_argument("--test", default=None, help="test corpus CSV (default: synthetic)")
    p.add_argument("--timing", action="store_true", help="record wall-clock times (not reproducible)")
    jitter(p)

    def grid(p: argparse.ArgumentParser):
        p.add_argument("--x-max", type=float, default=30.0, help="grid end (mean-1 lifetime units)")
        p.add_argument("--grid", type=_positive_int, default=30000, help="grid intervals")

    dists = sorted(DISTRIBUTIONS)

    p = add("renewal-solve", "fixed-point member of the scaling class C_q")
    p.add_argument("--q", type=float, default=0.5, help="scale factor, 0 < q <= 1")
    p.add_argument("--init", choices=dists, default="uniform", help="initial distribution")
    p.add_argument("--param", type=float, default=None, help="initial distribution parameter")
    p.add_argument("--damping", type=float, default=0.5, help="fixed-point damping in (0, 1]")
    p.add_argument("--max-iters", type=_positive_int, default=2000, help="maximum sweeps")
    grid(p)

    p = add("renewal-check", "scaling defect of a catalog distribution")
    p.add_argument("--dist", choices=dists, default="exp", help="distribution family")
    p.add_argument("--param", type=float, default=None, help="family parameter")
    p.add_argument("--q", type=float, default=1.0, help="scale factor, > 0")
    p.add_argument("--operator", choices=("residual", "length-biased"), default="residual",
                   help="operator compared with F(qx)")
    grid(p)

    p = add("renewal-bias", "plain vs length-biased lifetime sampling")
    p.add_argument("--dist", choices=dists, default="exp", help="distribution family")
    p.add_argument("--param", type=float, default=None, help="family parameter")
    p.add_argument("--n", type=_positive_int, default=100000, help="samples per mode")
    p.add_argument("--mode", choices=BIAS_MODES + ("both",), default="both", help="sampling mode")
    p.add_argument("--bins", type=_positive_int, default=50, help="histogram bins")
    grid(p)

    return parser


def parse_args(argv: Optional[List[str]] = None) -> RunConfig:
    """Parse and validate; argparse exits with status 2 on usage errors."""
    args = vars(build_parser().parse_args(argv))
    config = get_config()
    subcommand = args.pop("subcommand")
    seed = args.pop("seed")
    out_dir = args.pop("out_dir")
    return RunConfig(
        subcommand=subcommand,
        options=args,
        seed=config.default_seed if seed is None else seed,
        out_dir=config.out_dir if out_dir is None else out_dir,
    )


# Subcommands. Each returns the summary fields.

def _pet_simulate(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    if not o["total_counts"] > 0:
        raise InvalidConfig(f"--total-counts must be > 0, got {o['total_counts']}")
    if o["ellipses"]:
        ellipses = fmt.read_ellipses(o["ellipses"])
    else:
        ellipses = default_phantom_ellipses(o["width"], o["height"], o["pixel_size"])
    geom = DetectorGeometry(o["angles"], o["bins"], o["weighting"])
    phantom = make_phantom(ellipses, o["width"], o["height"], o["pixel_size"])
    A = build_system_matrix(geom, o["width"], o["height"], o["pixel_size"])
    sino = simulate_sinogram(phantom, A, geom, cfg.seed, o["total_counts"])

    fmt.write_pgm(phantom.grid, out / "phantom.pgm")
    fmt.write_ellipses(ellipses, out / "ellipses.csv")
    fmt.write_sinogram(sino, out / "sinogram.csv")
    fmt.write_matrix(A, out / "system_matrix.txt")
    fmt.write_vector(sino.expected.ravel(), out / "expected.txt")
    return {"pixels": A.n_sources, "tubes": A.n_detectors, "nnz": A.nnz,
            "counts": int(sino.counts.sum())}


def _recorded_grid(in_dir: Path) -> Dict[str, int]:
    """Grid width and height from the run_config.json of the run that wrote ``in_dir``."""
    recorded = load_json(in_dir / "run_config.json", default={}) or {}
    options = recorded.get("options") or {}
    return {k: int(options[k]) for k in ("width", "height") if isinstance(options.get(k), int)}


def _pet_reconstruct(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    in_dir = Path(o["in_dir"] or out)
    recorded = _recorded_grid(in_dir)
    for key in ("width", "height"):
        if o[key] is None:
            o[key] = recorded.get(key, DEFAULT_GRID_SIDE)
    A = fmt.read_matrix(in_dir / "system_matrix.txt", image_shape=(o["height"], o["width"]))
    sino = fmt.read_sinogram(in_dir / "sinogram.csv")
    image, trace = reconstruct_pet(sino, A, EmConfig(max_iters=o["iters"], rel_ll_tol=o["tol"]))

    fmt.write_pgm(image, out / "reconstruction.pgm")
    fmt.write_vector(image.ravel(), out / "reconstruction.txt")
    fmt.write_trace(trace, out / "likelihood_trace.csv")
    return {"iterations": trace.size - 1, "log_likelihood": float(trace[-1]),
            "counts": int(sino.counts.sum())}


def _nettomo_simulate(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    g, od = default_network()
    if o["graph"]:
        g = fmt.read_graph(o["graph"])
    if o["od"]:
        od = fmt.read_od(o["od"])
    R = build_route_matrix(g, od)
    Y = simulate_traffic(R, o["rates"], o["epochs"], cfg.seed)

    fmt.write_graph(g, out / "graph.txt")
    fmt.write_od(R.routes, out / "od.csv")
    fmt.write_link_counts(Y, out / "link_counts.csv")
    fmt.write_rates(o["rates"], out / "true_rates.csv")
    return {"routes": R.n_routes, "links": R.n_links, "epochs": Y.epochs,
            "rank": R.incidence_rank()}


def _nettomo_estimate(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    in_dir = Path(o["in_dir"] or out)
    g = fmt.read_graph(in_dir / "graph.txt")
    R = build_route_matrix(g, fmt.read_od(in_dir / "od.csv"))
    Y = fmt.read_link_counts(in_dir / "link_counts.csv")
    rates = estimate_rates(R, Y, EmConfig(max_iters=o["iters"], rel_ll_tol=o["tol"]))

    fmt.write_estimates(R.routes, rates, out / "estimates.csv")
    summary = {"routes": R.n_routes, "epochs": Y.epochs,
               "pseudo_log_likelihood": pseudo_log_likelihood(R, Y, rates)}
    truth_path = in_dir / "true_rates.csv"
    if truth_path.exists():
        truth = fmt.read_rates(truth_path)
        if truth.size == rates.size and np.all(truth > 0):
            summary["max_rel_error"] = float(np.max(np.abs(rates - truth) / truth))
    return summary


def _jitter(o: Dict[str, Any]) -> Jitter:
    return Jitter(*(o[name] for name in Jitter._fields))


def _ocr_gen(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    corpus = gen_synthetic_glyphs(cfg.options["n_per_class"], _jitter(cfg.options),
                                  cfg.seed, stream="ocr-train")
    fmt.write_corpus(corpus, out / "corpus.csv")
    return {"items": len(corpus)}


def _ocr_bench(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    jitter = _jitter(o)
    if o["train"]:
        train = fmt.read_corpus(o["train"])
    else:
        train = gen_synthetic_glyphs(max(1, o["n_train"] // 10), jitter, cfg.seed, stream="ocr-train")
    if o["test"]:
        test = fmt.read_corpus(o["test"])
    else:
        test = gen_synthetic_glyphs(max(1, o["n_test"] // 10), jitter, cfg.seed, stream="ocr-test")
    rows = run_benchmark(train, test, o["epsilon"], o["shift_epsilon"], timing=o["timing"])

    fmt.write_csv(out / "bench_report.csv", BENCH_COLUMNS, rows)
    summary = {"n_train": len(train), "n_test": len(test)}
    for row in rows:
        summary[f"{row.method}_error_rate"] = row.error_rate
    return summary


def _renewal_solve(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    init = make_distribution(o["init"], o["param"], o["x_max"], o["grid"])
    member, report = solve_cq(o["q"], init, damping=o["damping"], max_iters=o["max_iters"])

    fmt.write_grid_cdf(member, out / "solution.csv")
    fmt.write_csv(out / "report.csv", report._fields, [report])
    return report._asdict()


def _renewal_check(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    F = make_distribution(o["dist"], o["param"], o["x_max"], o["grid"])
    operator = scaling_defect if o["operator"] == "residual" else length_biased_defect
    defect = operator(F, o["q"])

    param = o["param"] if o["param"] is not None else "default"
    fmt.write_csv(out / "check.csv", ("dist", "param", "q", "operator", "defect", "dx"),
                  [(o["dist"], param, o["q"], o["operator"], defect, F.dx)])
    return {"dist": o["dist"], "q": o["q"], "defect": defect, "dx": F.dx}


def _renewal_bias(cfg: RunConfig, out: Path) -> Dict[str, Any]:
    o = cfg.options
    F = make_distribution(o["dist"], o["param"], o["x_max"], o["grid"])
    modes = BIAS_MODES if o["mode"] == "both" else (o["mode"],)
    samples = {mode: bias_sim(F, o["n"], mode, cfg.seed, o["bins"]) for mode in modes}

    histogram_rows, summary_rows = [], []
    for mode, s in samples.items():
        for lo, hi, count in zip(s.edges[:-1], s.edges[1:], s.histogram):
            histogram_rows.append((mode, lo, hi, count))
        summary_rows.append((mode, s.count, s.mean))
    fmt.write_csv(out / "bias_histogram.csv", ("mode", "bin_lo", "bin_hi", "count"), histogram_rows)
    fmt.write_csv(out / "bias_summary.csv", ("mode", "n", "mean"), summary_rows)
    return {f"{mode}_mean": s.mean for mode, s in samples.items()}


SUBCOMMANDS: Dict[str, Callable[[RunConfig, Path], Dict[str, Any]]] = {
    "pet-simulate": _pet_simulate,
    "pet-reconstruct": _pet_reconstruct,
    "nettomo-simulate": _nettomo_simulate,
    "nettomo-estimate": _nettomo_estimate,
    "ocr-gen": _ocr_gen,
    "ocr-bench": _ocr_bench,
    "renewal-solve": _renewal_solve,
    "renewal-check": _renewal_check,
    "renewal-bias": _renewal_bias,
}


def format_summary(summary: Dict[str, Any]) -> str:
    parts = []
    for key, value in summary.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = f"{value:.10g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)


def run(config: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = SUBCOMMANDS[config.subcommand](config, out)
        save_json(out / "run_config.json", {
            "subcommand": config.subcommand,
            "seed": config.seed,
            "generator": GENERATOR_NAME,
            "options": config.options,
        })
    except DomainError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_DOMAIN
    except (MalformedFile, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_IO
    print(format_summary({"subcommand": config.subcommand, **summary}))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        config = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logger.debug("Running %s with seed %d into %s", config.subcommand, config.seed, config.out_dir)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
