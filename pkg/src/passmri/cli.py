"""Config-driven experiment runner.

Subcommands: ``phantom`` (write the synthetic suite), ``run`` (one mask
strategy and reconstruction method), ``ablate`` (provider x mask x R grid),
``grappa`` (GRAPPA vs zero-filled on equispaced masks) and ``metrics`` (score
a stored reconstruction). Exit codes: 0 ok, 1 config error, 2 numerical
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .field import fft2c
from .grappa import grappa_reconstruct
from .maskopt import OptimizerSpec, Subject, stage1_population, stage2_personalize
from .metrics import evaluate
from .operators import CGParams, EncodingOperator, NumericalError
from .phantom import LesionBox, PhantomSpec, generate_coil_maps, generate_phantom, random_lesion_specs
from .priors import AttentionProviderSpec, DenoiserSpec, EnhancerSpec
from .recon import ReconConfig, StageDiagnostics, reconstruct
from .sampling import MaskBudget, SamplingMask, make_acs_mask, make_equispaced_mask, make_random_mask

logger = logging.getLogger("passmri")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
WORKERS_ENV = "PASSMRI_WORKERS"

METRIC_FIELDS = ("subject", "mask_strategy", "R", "psnr", "ssim", "lf_psnr", "lf_ssim")
ABLATE_FIELDS = METRIC_FIELDS + ("provider", "flag")
GRAPPA_FIELDS = METRIC_FIELDS + ("method",)
DIAG_FIELDS = ("subject",) + StageDiagnostics.FIELDS
STRATEGIES = ("no_learn", "equispaced", "global_learn", "anomaly_aware", "from_file")


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("passmri").joinpath("config_schema.json").read_text())


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    workers: int = 1
    outputs: str = "out"
    coils: int = 4
    method: str = "pass"
    phantom: dict = field(default_factory=dict)
    strategy: str = "no_learn"
    R: float = 4
    mode: str = "lines1d"
    acs_fraction: float | None = None
    mask_path: str | None = None
    train_subjects: int = 2
    oracle: bool = False
    recon: ReconConfig = ReconConfig()
    provider: AttentionProviderSpec = AttentionProviderSpec("zero")
    optimizer: OptimizerSpec = OptimizerSpec("greedy")
    personalize: OptimizerSpec = OptimizerSpec("exchange", max_sweeps=2, neighborhood=3)
    noise_sigma: float = 0.0
    grappa_kernel: tuple = (5, 5)
    ablate_R: tuple = (4,)
    ablate_providers: tuple = ("zero", "boxes")
    ablate_masks: tuple = ("no_learn", "global_learn", "anomaly_aware")

    def replace(self, **changes):
        return replace(self, **changes)


def _num(v):
    return int(v) if float(v).is_integer() else float(v)


def parse_config(raw):
    """Validate a config dict against the published schema and build an
    :class:`ExperimentConfig`; raises :class:`ConfigError`."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _build(raw):
    mask = raw.get("mask", {})
    rc = raw.get("recon", {})
    recon = ReconConfig(
        K=rc.get("K", 3),
        n_inner=rc.get("n_inner", 3),
        mu1=rc.get("mu1", 0.05),
        mu2=rc.get("mu2", 0.05),
        rho=rc.get("rho", 0.1),
        gamma=tuple(rc.get("gamma", (1.0, 1.0, 10.0))),
        lam=rc.get("lambda", 1.0),
        cg=CGParams(**rc.get("cg", {})),
        denoiser=DenoiserSpec(**rc.get("denoiser", {})),
        enhancer=EnhancerSpec(**rc.get("enhancer", {})),
    )
    prov = dict(raw.get("provider", {"kind": "zero"}))
    if "centers" in prov:
        prov["centers"] = tuple(tuple(c) for c in prov["centers"])
    cfg = ExperimentConfig(
        seed=raw.get("seed", 0),
        workers=raw.get("workers", 1),
        outputs=raw.get("outputs", "out"),
        coils=raw.get("coils", 4),
        method=raw.get("method", "pass"),
        phantom=dict(raw.get("phantom", {})),
        strategy=mask.get("strategy", "no_learn"),
        R=_num(mask.get("R", 4)),
        mode=mask.get("mode", "lines1d"),
        acs_fraction=mask.get("acs_fraction"),
        mask_path=mask.get("path"),
        train_subjects=mask.get("train_subjects", 2),
        oracle=mask.get("oracle", False),
        recon=recon,
        provider=AttentionProviderSpec(**prov),
        optimizer=OptimizerSpec(**raw.get("optimizer", {"kind": "greedy"})),
        personalize=OptimizerSpec(**raw.get("personalize", {"kind": "exchange", "neighborhood": 3})),
        noise_sigma=raw.get("noise", {}).get("sigma", 0.0),
        grappa_kernel=tuple(raw.get("grappa", {}).get("kernel", (5, 5))),
        ablate_R=tuple(_num(r) for r in raw.get("ablate", {}).get("R", (4,))),
        ablate_providers=tuple(raw.get("ablate", {}).get("providers", ("zero", "boxes"))),
        ablate_masks=tuple(raw.get("ablate", {}).get("masks", ("no_learn", "global_learn", "anomaly_aware"))),
    )
    if cfg.strategy == "from_file" and not cfg.mask_path:
        raise ConfigError("mask strategy from_file needs mask.path")
    for path in (cfg.mask_path, cfg.phantom.get("dir"), cfg.provider.path):
        if path and not Path(path).exists():
            raise ConfigError(f"referenced file does not exist: {path}")
    if "dir" in cfg.phantom and "specs" in cfg.phantom:
        raise ConfigError("phantom.dir and phantom.specs are mutually exclusive")
    return cfg


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------- subjects


@dataclass(frozen=True)
class Case:
    sid: str
    gt: np.ndarray
    boxes: tuple
    coils: np.ndarray


def _suite_shape(cfg):
    ph = cfg.phantom
    return int(ph.get("height", 64)), int(ph.get("width", 64))


def phantom_specs(cfg):
    ph = cfg.phantom
    if "specs" in ph:
        return [PhantomSpec.from_dict(d) for d in ph["specs"]]
    h, w = _suite_shape(cfg)
    return random_lesion_specs(
        int(ph.get("n", 20)), h, w, cfg.seed, jitter=float(ph.get("jitter", 0.05)), max_lesions=int(ph.get("max_lesions", 2))
    )


def build_cases(cfg):
    """The evaluation suite, sorted by subject id."""
    ph = cfg.phantom
    if "dir" in ph:
        return _cases_from_dir(Path(ph["dir"]), cfg.coils)
    cases = []
    coils = {}
    for i, spec in enumerate(phantom_specs(cfg)):
        gt, boxes = generate_phantom(spec)
        shape = gt.shape
        if shape not in coils:
            coils[shape] = generate_coil_maps(cfg.coils, *shape)
        cases.append(Case(f"s{i:03d}", gt, tuple(boxes), coils[shape]))
    return cases


def _cases_from_dir(root, n_coils):
    files = sorted(root.glob("gt_*.c128"))
    if not files:
        raise ConfigError(f"no gt_*.c128 arrays in {root}")
    shared = io.read_array(root / "coils.c128") if (root / "coils.c128").exists() else None
    cases = []
    for f in files:
        sid = f.stem[len("gt_") :]
        gt = io.read_array(f)
        box_file = root / f"boxes_{sid}.json"
        boxes = tuple(LesionBox.from_dict(d) for d in json.loads(box_file.read_text())) if box_file.exists() else ()
        coils = shared if shared is not None and shared.shape[1:] == gt.shape else generate_coil_maps(n_coils, *gt.shape)
        cases.append(Case(sid, gt, boxes, coils))
    return cases


def training_subjects(cfg, shape):
    """Stage 1 population: drawn from a different seed than the evaluation suite."""
    ph = cfg.phantom
    specs = random_lesion_specs(
        cfg.train_subjects,
        *shape,
        cfg.seed + 1,
        jitter=float(ph.get("jitter", 0.05)),
        max_lesions=int(ph.get("max_lesions", 2)),
    )
    coils = generate_coil_maps(cfg.coils, *shape)
    out = []
    for spec in specs:
        gt, boxes = generate_phantom(spec)
        out.append(Subject(gt, coils, tuple(boxes)))
    return out


# ---------------------------------------------------------------- masks


def acs_and_budget(cfg, shape):
    acs = make_acs_mask(cfg.mode, *shape, cfg.R, cfg.acs_fraction)
    return acs, MaskBudget.for_mask(acs, cfg.R)


def learn_global_mask(cfg, shape):
    acs, budget = acs_and_budget(cfg, shape)
    logger.info("stage 1: %s over %d training subjects", cfg.optimizer.kind, cfg.train_subjects)
    return stage1_population(training_subjects(cfg, shape), cfg.recon, cfg.optimizer, acs, budget, cfg.provider)


def shared_mask(cfg, shape, cache=None):
    """Mask used for every subject, or the Stage 1 init for anomaly_aware."""
    key = (cfg.strategy, cfg.R, cfg.mode, cfg.acs_fraction, shape, cfg.provider)
    if cache is not None and key in cache:
        return cache[key]
    acs, budget = acs_and_budget(cfg, shape)
    if cfg.strategy == "no_learn":
        mask = make_random_mask(acs, budget, cfg.seed)
    elif cfg.strategy == "equispaced":
        mask = make_equispaced_mask(acs, int(cfg.R))
    elif cfg.strategy in ("global_learn", "anomaly_aware"):
        gkey = ("global_learn",) + key[1:]
        mask = cache.get(gkey) if cache is not None else None
        if mask is None:
            mask = learn_global_mask(cfg, shape)
            if cache is not None:
                cache[gkey] = mask
    else:
        mask = SamplingMask.from_json(Path(cfg.mask_path).read_text())
        if mask.shape != shape:
            raise ConfigError(f"mask file shape {mask.shape} does not match phantom shape {shape}")
    if cache is not None:
        cache[key] = mask
    return mask


# ---------------------------------------------------------------- per subject


@dataclass
class CaseResult:
    sid: str
    row: dict
    diagnostics: list
    image: np.ndarray
    mask: SamplingMask
    flag: str = ""


def simulate_kspace(cfg, case, index):
    """Fully sampled multi-coil k-space, with optional complex Gaussian noise
    of standard deviation ``sigma * max|fft2c(gt)|``."""
    full = fft2c(case.coils * case.gt)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng([cfg.seed, index])
        s = cfg.noise_sigma * float(np.max(np.abs(fft2c(case.gt)))) / np.sqrt(2)
        full = full + s * (rng.standard_normal(full.shape) + 1j * rng.standard_normal(full.shape))
    return full


def reconstruct_case(cfg, case, mask, y):
    if cfg.method == "grappa":
        return grappa_reconstruct(y, mask, kernel_size=cfg.grappa_kernel, R=int(cfg.R)), []
    op = EncodingOperator(mask, case.coils)
    if cfg.method == "zero_filled":
        return op.adjoint(y), []
    res = reconstruct(y, op, cfg.recon, cfg.provider, case.boxes)
    return res.x_final, [dict(subject=case.sid, **d.row()) for d in res.per_stage]


def run_case(cfg, case, index, init_mask):
    full = simulate_kspace(cfg, case, index)
    flag = ""
    if cfg.strategy == "anomaly_aware":
        acs, budget = acs_and_budget(cfg, case.gt.shape)
        acs_k = full * acs.acs
        pm = stage2_personalize(
            acs_k,
            case.coils,
            case.boxes,
            cfg.recon,
            cfg.personalize,
            acs,
            budget,
            cfg.provider,
            init=init_mask,
            gt=case.gt if cfg.oracle else None,
        )
        mask = pm.mask
        flag = "oracle" if pm.oracle else "surrogate"
        if mask == init_mask:
            flag += "+global_mask"
    else:
        mask = init_mask
    y = full * mask.binary
    x, diag = reconstruct_case(cfg, case, mask, y)
    rep = evaluate(x, case.gt, case.boxes)
    row = {
        "subject": case.sid,
        "mask_strategy": cfg.strategy,
        "R": cfg.R,
        "psnr": rep.psnr_db,
        "ssim": rep.ssim,
        "lf_psnr": rep.lf_psnr_db,
        "lf_ssim": rep.lf_ssim,
    }
    return CaseResult(case.sid, row, diag, x, mask, flag)


def _run_case_star(args):
    return run_case(*args)


def resolve_workers(cfg, flag=None):
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cfg.workers


def _pmap(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_cases(cfg, cases, workers=1, cache=None):
    """Run one strategy over the suite; results are ordered by subject id."""
    cases = sorted(cases, key=lambda c: c.sid)
    tasks = [(cfg, c, i, shared_mask(cfg, c.gt.shape, cache)) for i, c in enumerate(cases)]
    return _pmap(_run_case_star, tasks, workers)


# ---------------------------------------------------------------- commands


def cmd_phantom(cfg, out):
    out = Path(out)
    cases = build_cases(cfg)
    written = []
    for case in cases:
        written.append(io.write_array(out / f"gt_{case.sid}", case.gt))
        io.write_json(out / f"boxes_{case.sid}.json", [b.to_dict() for b in case.boxes])
        io.write_pgm(out / f"gt_{case.sid}.pgm", case.gt)
    if cases:
        io.write_array(out / "coils", cases[0].coils)
    logger.info("wrote %d phantoms to %s", len(cases), out)
    return written


def _write_results(out, results, gt_by_sid):
    for r in results:
        io.write_array(out / "recon" / r.sid, r.image)
        (out / "masks").mkdir(parents=True, exist_ok=True)
        (out / "masks" / f"{r.sid}.json").write_text(r.mask.to_json() + "\n")
        gt = gt_by_sid[r.sid]
        io.write_pgm(out / "previews" / f"{r.sid}_recon.pgm", r.image, vmax=np.abs(gt).max())
        io.write_pgm(out / "previews" / f"{r.sid}_error.pgm", np.abs(np.abs(r.image) - np.abs(gt)))


def cmd_run(cfg, out, workers=1):
    out = Path(out)
    cases = build_cases(cfg)
    results = run_cases(cfg, cases, workers)
    _write_results(out, results, {c.sid: c.gt for c in cases})
    io.write_csv(out / "metrics.csv", METRIC_FIELDS, [r.row for r in results])
    io.write_csv(out / "diagnostics.csv", DIAG_FIELDS, [d for r in results for d in r.diagnostics])
    return results


def _provider_variant(base, kind):
    if kind == base.kind:
        return base
    if kind == "boxes":
        return AttentionProviderSpec("boxes", feather_px=base.feather_px if base.kind == "boxes" else 2.0)
    if kind == "gaussian_blobs":
        return AttentionProviderSpec("gaussian_blobs", centers=base.centers, sigma=base.sigma)
    return AttentionProviderSpec(kind)


def cmd_ablate(cfg, out, workers=1):
    out = Path(out)
    cases = build_cases(cfg)
    rows = []
    cache = {}
    for R in cfg.ablate_R:
        for pkind in cfg.ablate_providers:
            for strategy in cfg.ablate_masks:
                sub = cfg.replace(R=R, strategy=strategy, provider=_provider_variant(cfg.provider, pkind))
                logger.info("ablate R=%s provider=%s mask=%s", R, pkind, strategy)
                for r in run_cases(sub, cases, workers, cache):
                    rows.append(dict(r.row, provider=pkind, flag=r.flag))
    io.write_csv(out / "ablation.csv", ABLATE_FIELDS, rows)
    return rows


def cmd_grappa(cfg, out, workers=1):
    """GRAPPA and zero-filled SOS on the equispaced mask for every subject."""
    out = Path(out)
    cases = build_cases(cfg)
    rows = []
    for method in ("grappa", "zero_filled"):
        sub = cfg.replace(strategy="equispaced", method=method)
        for r in run_cases(sub, cases, workers):
            rows.append(dict(r.row, method=method))
            if method == "grappa":
                io.write_array(out / "recon" / r.sid, r.image)
    io.write_csv(out / "grappa.csv", GRAPPA_FIELDS, rows)
    return rows


def cmd_metrics(recon_path, ref_path, boxes_path=None, out=None):
    x = io.read_array(recon_path)
    ref = io.read_array(ref_path)
    if x.shape != ref.shape:
        raise ConfigError(f"shape mismatch: recon {x.shape} vs reference {ref.shape}")
    boxes = []
    if boxes_path:
        boxes = [LesionBox.from_dict(d) for d in json.loads(Path(boxes_path).read_text())]
    rep = evaluate(x, ref, boxes)
    result = {
        "psnr": rep.psnr_db,
        "ssim": rep.ssim,
        "lf_psnr": rep.lf_psnr_db,
        "lf_ssim": rep.lf_ssim,
        "per_box": rep.per_box,
    }
    if out:
        io.write_json(Path(out) / "metrics.json", result)
    return result


def build_parser():
    p = argparse.ArgumentParser(prog="passmri", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("phantom", "write the synthetic phantom suite"),
        ("run", "run one mask strategy and reconstruction method"),
        ("ablate", "run the provider x mask x R grid"),
        ("grappa", "GRAPPA vs zero-filled on equispaced masks"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides config 'outputs')")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--workers", type=int, help=f"worker processes (overrides ${WORKERS_ENV})")
    sp = sub.add_parser("metrics", help="score a stored reconstruction against a reference")
    sp.add_argument("--recon", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--boxes")
    sp.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "metrics":
            result = cmd_metrics(args.recon, args.ref, args.boxes, args.out)
            print(json.dumps(result, indent=2, sort_keys=True))
            return EXIT_OK
        cfg = read_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        out = args.out or cfg.outputs
        workers = resolve_workers(cfg, args.workers)
        if args.command == "phantom":
            cmd_phantom(cfg, out)
        elif args.command == "run":
            cmd_run(cfg, out, workers)
        elif args.command == "ablate":
            cmd_ablate(cfg, out, workers)
        else:
            cmd_grappa(cfg, out, workers)
    except NumericalError as exc:
        print(f"passmri: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"passmri: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"passmri: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
