"""Command-line experiment runner.

Every subcommand reads an optional JSON config (``--config``), writes into
``--out`` and leaves a ``manifest.json`` there.  Failures exit nonzero after
printing a JSON error object to stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import attacks
from .attacks import CwConfig, Defense, PgdConfig, choose_target, cw_attack, pgd_attack
from .certify import CertConfig, certify, validate_certificate
from .recognizer import load_corpus, load_params, save_corpus, save_params, synth_corpus, train
from .recognizer.decode import greedy_decode
from .recognizer.model import forward
from .recognizer.train import finetune
from .signal import RngStream
from .smoothing import SmoothingConfig, smoothed_transcribe, vote
from .voting import read_ctm, rover, wer

log = logging.getLogger("smoothasr")

PGD_BOUNDS = (35.0, 30.0, 25.0, 20.0, 15.0, 10.0)
ROVER_NS = (2, 4, 8, 16, 32, 50)


@dataclass
class ExperimentConfig:
    seed: int = 0
    corpus_dir: str | None = None  # synthesized when missing
    n_train: int = 1000
    n_test: int = 100
    model_dir: str | None = None  # defaults to <out>/models
    sigmas: list = field(default_factory=lambda: [0.0, 0.01, 0.02])
    votes: list = field(default_factory=lambda: ["one-sentence", "majority", "logit-avg", "rover"])
    n_samples: int = 16
    sigma_aug: list = field(default_factory=lambda: [0.02])
    defense_sigma: float = 0.02
    n_utterances: int = 100  # attack/certification subset size (first n test utterances)
    pgd_bounds: list = field(default_factory=lambda: list(PGD_BOUNDS))
    pgd_steps: int = 50
    eot_samples: int = 16
    pgd_defenses: list = field(default_factory=lambda: ["undefended", "trained", "off-the-shelf"])
    cw_defenses: list = field(default_factory=lambda: ["undefended", "trained"])
    cw_max_steps: int = 1000
    cw_step_size: float = 2e-3
    cw_step_size_final: float | None = 1e-4
    cw_lambda_init: float = 1.0
    cw_eot_samples: int = 16
    ablation_defense: str = "trained"
    rover_ns: list = field(default_factory=lambda: list(ROVER_NS))
    rover_repeats: int = 3
    rover_model: str | None = None  # defaults to the aug-<defense_sigma> model
    rover_sigma: float | None = None  # defaults to defense_sigma
    cert_sigma: float = 0.02
    cert_k: float = 0.3
    cert_n0: int = 32
    cert_n: int = 1000
    cert_alpha: float = 0.05
    cert_trials: int = 20

    def __post_init__(self):
        for name in ("sigmas", "votes", "pgd_bounds", "pgd_defenses", "cw_defenses", "rover_ns"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- experiment kernels


def corpus_wer(transcribe, utterances) -> float:
    """Mean WER (fraction) of ``transcribe(x)`` over utterances."""
    return float(np.mean([wer(transcribe(np.asarray(u.waveform)), u.transcript) for u in utterances]))


def base_transcribe(params):
    return lambda x: greedy_decode(forward(params, x), params.vocabulary).transcript


def smoothed(params, cfg: SmoothingConfig):
    return lambda x: smoothed_transcribe(params, x, cfg).transcript


def vote_table(params, utterances, sigma: float, n: int, enhance: bool, votes, seed: int = 0) -> dict:
    """WER (fraction) per vote, all votes sharing the same N noise draws per utterance."""
    totals = {v: 0.0 for v in votes}
    for u in utterances:
        x = np.asarray(u.waveform)
        out = smoothed_transcribe(params, x, SmoothingConfig(sigma=sigma, n_samples=n, enhance=enhance,
                                                             vote="one-sentence", seed=seed))
        for v in votes:
            totals[v] += wer(vote(out.samples, out.logits, params.vocabulary, v), u.transcript)
    return {v: totals[v] / len(utterances) for v in votes}


def make_defense(name: str, models: dict, sigma: float, n_samples: int = 16, seed: int = 0) -> Defense:
    if name == "undefended":
        return attacks.undefended(models["baseline"])
    if name == "trained":
        return attacks.trained(models[f"aug-{sigma:g}"], sigma, n_samples, seed)
    if name == "off-the-shelf":
        return attacks.off_the_shelf(models["baseline"], sigma, n_samples, seed)
    raise ValueError(f"unknown defense {name!r}")


def pgd_sweep(defense: Defense, utterances, bounds, steps=50, eot=16, adaptive=True, seed=0) -> dict:
    """Mean ground-truth WER (fraction) per SNR bound."""
    out = {}
    for bound in bounds:
        cfg = PgdConfig(snr_bound_db=bound, steps=steps, eot_samples=eot, adaptive=adaptive)
        ws = []
        for i, u in enumerate(utterances):
            rng = RngStream(seed, stream_id=50, path=(i, int(round(bound * 10)), int(adaptive)))
            ws.append(pgd_attack(defense, np.asarray(u.waveform), u.transcript, cfg, rng).wer_ground_truth)
        out[bound] = float(np.mean(ws))
        log.info("pgd %s bound %g adaptive=%s wer %.3f", defense.name, bound, adaptive, out[bound])
    return out


def cw_run(defense: Defense, utterances, max_steps=1000, step_size=2e-3, eot=16, seed=0,
           step_size_final=1e-4, lambda_init=1.0) -> list:
    results = []
    for i, u in enumerate(utterances):
        cfg = CwConfig(target=choose_target(u.transcript), max_steps=max_steps, step_size=step_size,
                       step_size_final=step_size_final, lambda_init=lambda_init, eot_samples=eot)
        res = cw_attack(defense, np.asarray(u.waveform), u.transcript, cfg, RngStream(seed, stream_id=60, path=(i,)))
        results.append((u, res))
        log.info("cw %s %s success=%s snr=%.1f", defense.name, u.uid, res.success, res.achieved_snr_db)
    return results


def median_snr(results) -> float:
    """Median achieved SNR over utterances; failed attacks count as -inf (needed more than any budget)."""
    return float(np.median([r.achieved_snr_db if r.success else -math.inf for _, r in results]))


def rover_timing(params, utterances, sigma, ns, seed=0, repeats=3) -> list:
    """(N, mean vote seconds, WER fraction) rows; decodes are shared, only the vote is timed."""
    nmax = max(ns)
    decoded = []
    for u in utterances:
        out = smoothed_transcribe(params, np.asarray(u.waveform),
                                  SmoothingConfig(sigma=sigma, n_samples=nmax, vote="one-sentence", seed=seed))
        decoded.append((u, [d.word_hyps for d in out.samples]))
    rows = []
    for n in ns:
        elapsed, total = 0.0, 0.0
        for u, hyps in decoded:
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                voted = rover(hyps[:n])
                best = min(best, time.perf_counter() - t0)
            elapsed += best
            total += wer(voted, u.transcript)
        rows.append((n, elapsed / len(decoded), total / len(decoded)))
    return rows


def certify_run(params, utterances, cfg: CertConfig, trials=20):
    """Rows of (uid, CertResult, validation at R, validation at 3R or None)."""
    rows = []
    for i, u in enumerate(utterances):
        x = np.asarray(u.waveform)
        rng = RngStream(cfg.seed, stream_id=70, path=(i,))
        cert = certify(params, x, cfg, rng.child(0))
        val = val3 = None
        if not cert.abstained:
            val = validate_certificate(params, x, cert, cfg, trials, rng=rng.child(1))
            val3 = validate_certificate(params, x, cert, cfg, trials, radius_scale=3.0, rng=rng.child(2))
        rows.append((u.uid, cert, val, val3))
        log.info("certify %s p=%.4f R=%.4f abstain=%s", u.uid, cert.p_lower, cert.radius, cert.abstained)
    return rows


# ---------------------------------------------------------------- plumbing


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def pct(x: float) -> float:
    return round(min(100.0 * x, 100.0), 3)


class Run:
    def __init__(self, cfg: ExperimentConfig, out: Path, command: str):
        self.cfg, self.out, self.command = cfg, out, command
        out.mkdir(parents=True, exist_ok=True)
        self.model_files: dict = {}

    @property
    def model_dir(self) -> Path:
        return Path(self.cfg.model_dir) if self.cfg.model_dir else self.out / "models"

    def corpus(self):
        if self.cfg.corpus_dir and (Path(self.cfg.corpus_dir) / "corpus.json").exists():
            return load_corpus(self.cfg.corpus_dir)
        return synth_corpus(self.cfg.seed, self.cfg.n_train, self.cfg.n_test)

    def models(self, names) -> dict:
        out = {}
        for name in names:
            path = self.model_dir / f"{name}.json"
            if not path.exists():
                raise FileNotFoundError(f"model file {path} missing; run the train subcommand first")
            out[name] = load_params(path)
            self.model_files[name] = str(path)
        return out

    def manifest(self, extra=None) -> None:
        from importlib.metadata import PackageNotFoundError, version
        try:
            pkg_version = version("artifact")
        except PackageNotFoundError:
            pkg_version = "unknown"
        doc = {
            "command": self.command,
            "config": asdict(self.cfg),
            "config_hash": self.cfg.digest(),
            "corpus_seed": self.cfg.seed,
            "models": {k: {"path": v, "sha256": _sha(v)} for k, v in self.model_files.items()},
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "smoothasr": pkg_version},
        }
        if extra:
            doc.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2))


def cmd_synth_data(run: Run, args) -> None:
    corpus = synth_corpus(run.cfg.seed, run.cfg.n_train, run.cfg.n_test)
    target = Path(run.cfg.corpus_dir) if run.cfg.corpus_dir else run.out / "corpus"
    save_corpus(corpus, target)
    run.manifest({"corpus_dir": str(target)})


def cmd_train(run: Run, args) -> None:
    corpus = run.corpus()
    run.model_dir.mkdir(parents=True, exist_ok=True)
    base = train(corpus, 0.0, seed=run.cfg.seed)
    save_params(base, run.model_dir / "baseline.json")
    run.model_files["baseline"] = str(run.model_dir / "baseline.json")
    for s in run.cfg.sigma_aug:
        aug = finetune(base, corpus.train, s, seed=run.cfg.seed)
        name = f"aug-{s:g}"
        save_params(aug, run.model_dir / f"{name}.json")
        run.model_files[name] = str(run.model_dir / f"{name}.json")
    run.manifest()


def cmd_eval_clean(run: Run, args) -> None:
    cfg = run.cfg
    test = run.corpus().test
    names = ["baseline"] + [f"aug-{s:g}" for s in cfg.sigma_aug]
    models = run.models(names)
    rows = []
    for name in names:
        for sigma in cfg.sigmas:
            for enhance in (False, True):
                if enhance and sigma == 0:
                    continue
                n = cfg.n_samples if sigma > 0 else 1
                table = vote_table(models[name], test, sigma, n, enhance, cfg.votes, cfg.seed)
                for v in cfg.votes:
                    rows.append((name, sigma, int(enhance), v, n if v != "one-sentence" else 1, pct(table[v])))
    write_csv(run.out / "eval_clean.csv", ["model", "sigma", "enhance", "vote", "n_samples", "wer_pct"], rows)
    run.manifest()


def cmd_attack_pgd(run: Run, args) -> None:
    cfg = run.cfg
    utts = run.corpus().test[: cfg.n_utterances]
    models = run.models(["baseline", f"aug-{cfg.defense_sigma:g}"])
    rows = []
    for name in cfg.pgd_defenses:
        d = make_defense(name, models, cfg.defense_sigma, cfg.n_samples, cfg.seed)
        t0 = time.perf_counter()
        curve = pgd_sweep(d, utts, cfg.pgd_bounds, cfg.pgd_steps, cfg.eot_samples, True, cfg.seed)
        wall = time.perf_counter() - t0
        with open(run.out / f"pgd_{name}.dat", "w") as fh:
            fh.write(f"# snr_bound_db wer_pct ({name})\n")
            for b in cfg.pgd_bounds:
                fh.write(f"{b:g} {pct(curve[b])}\n")
                rows.append(("pgd", name, f"snr<={b:g}", pct(curve[b]), "", b, round(wall, 3)))
    write_csv(run.out / "attack_pgd.csv",
              ["experiment", "defense", "attack", "wer_gt_pct", "wer_tgt_pct", "snr_db", "wall_s"], rows)
    run.manifest()


def cmd_attack_cw(run: Run, args) -> None:
    cfg = run.cfg
    utts = run.corpus().test[: cfg.n_utterances]
    models = run.models(["baseline", f"aug-{cfg.defense_sigma:g}"])
    rows, summary = [], []
    for name in cfg.cw_defenses:
        d = make_defense(name, models, cfg.defense_sigma, cfg.n_samples, cfg.seed)
        t0 = time.perf_counter()
        results = cw_run(d, utts, cfg.cw_max_steps, cfg.cw_step_size, cfg.cw_eot_samples, cfg.seed,
                         cfg.cw_step_size_final, cfg.cw_lambda_init)
        wall = time.perf_counter() - t0
        for u, r in results:
            rec = r.record(u.uid, attacks.config_hash(CwConfig(
                target=choose_target(u.transcript), max_steps=cfg.cw_max_steps, step_size=cfg.cw_step_size,
                step_size_final=cfg.cw_step_size_final, lambda_init=cfg.cw_lambda_init,
                eot_samples=cfg.cw_eot_samples)))
            rows.append(("cw", name, u.uid, pct(r.wer_ground_truth), pct(r.wer_target), rec["achieved_snr_db"],
                         int(r.success), r.steps_used))
        summary.append((name, pct(np.mean([r.wer_ground_truth for _, r in results])),
                        pct(np.mean([r.wer_target for _, r in results])), median_snr(results), round(wall, 3)))
    write_csv(run.out / "attack_cw.csv",
              ["experiment", "defense", "utt_id", "wer_gt_pct", "wer_tgt_pct", "snr_db", "success", "steps"], rows)
    write_csv(run.out / "attack_cw_summary.csv", ["defense", "wer_gt_pct", "wer_tgt_pct", "median_snr_db", "wall_s"],
              summary)
    run.manifest()


def cmd_ablation_adaptive(run: Run, args) -> None:
    cfg = run.cfg
    utts = run.corpus().test[: cfg.n_utterances]
    models = run.models(["baseline", f"aug-{cfg.defense_sigma:g}"])
    d = make_defense(cfg.ablation_defense, models, cfg.defense_sigma, cfg.n_samples, cfg.seed)
    vanilla = pgd_sweep(d, utts, cfg.pgd_bounds, cfg.pgd_steps, cfg.eot_samples, False, cfg.seed)
    eot = pgd_sweep(d, utts, cfg.pgd_bounds, cfg.pgd_steps, cfg.eot_samples, True, cfg.seed)
    rows = [(b, pct(vanilla[b]), pct(eot[b])) for b in cfg.pgd_bounds]
    write_csv(run.out / "ablation_adaptive.csv", ["snr_bound_db", "vanilla_wer_pct", "eot_wer_pct"], rows)
    run.manifest({"defense": cfg.ablation_defense})


def cmd_rover_timing(run: Run, args) -> None:
    cfg = run.cfg
    utts = run.corpus().test[: cfg.n_utterances]
    name = cfg.rover_model or f"aug-{cfg.defense_sigma:g}"
    sigma = cfg.defense_sigma if cfg.rover_sigma is None else cfg.rover_sigma
    params = run.models([name])[name]
    rows = rover_timing(params, utts, sigma, cfg.rover_ns, cfg.seed, cfg.rover_repeats)
    write_csv(run.out / "rover_timing.csv", ["n_samples", "vote_seconds", "wer_pct"],
              [(n, f"{t:.6f}", pct(w)) for n, t, w in rows])
    run.manifest({"model": name, "sigma": sigma})


def cmd_certify(run: Run, args) -> None:
    cfg = run.cfg
    utts = run.corpus().test[: cfg.n_utterances]
    name = f"aug-{cfg.cert_sigma:g}"
    params = run.models([name])[name]
    cc = CertConfig(sigma=cfg.cert_sigma, k=cfg.cert_k, n0=cfg.cert_n0, n=cfg.cert_n, alpha=cfg.cert_alpha,
                    seed=cfg.seed)
    rows = certify_run(params, utts, cc, cfg.cert_trials)
    write_csv(run.out / "certify.csv", ["utt_id", "sigma", "k", "n", "p_lower", "R", "abstained"],
              [(uid, cc.sigma, cc.k, cc.n, f"{c.p_lower:.6f}", f"{c.radius:.6f}", int(c.abstained))
               for uid, c, _, _ in rows])
    write_csv(run.out / "certify_validation.csv", ["utt_id", "R", "pass_fraction", "pass_fraction_3R"],
              [(uid, f"{c.radius:.6f}", v.pass_fraction, v3.pass_fraction)
               for uid, c, v, v3 in rows if v is not None])
    certified = [v for _, _, v, _ in rows if v is not None]
    report = {
        "certified": len(certified),
        "abstained": len(rows) - len(certified),
        "mean_pass_fraction": float(np.mean([v.pass_fraction for v in certified])) if certified else None,
    }
    (run.out / "certify_report.json").write_text(json.dumps(report, indent=2))
    run.manifest({"report": report})


def cmd_rover(run: Run, args) -> None:
    """Vote over CTM hypothesis files; writes ``<out>/rover.txt`` (utt-id TAB transcript)."""
    if not args.ctm:
        raise ValueError("rover needs at least one --ctm file")
    docs = [read_ctm(p) for p in args.ctm]
    uids = sorted(set().union(*docs))
    lines = [f"{uid}\t{rover([d.get(uid, []) for d in docs]).text}\n" for uid in uids]
    (run.out / "rover.txt").write_text("".join(lines))
    sys.stdout.write("".join(lines))
    run.manifest({"ctm_files": list(args.ctm)})


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "eval-clean": cmd_eval_clean,
    "attack-pgd": cmd_attack_pgd,
    "attack-cw": cmd_attack_cw,
    "ablation-adaptive": cmd_ablation_adaptive,
    "rover-timing": cmd_rover_timing,
    "certify": cmd_certify,
    "rover": cmd_rover,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothasr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "rover":
            p.add_argument("--ctm", nargs="+", help="CTM hypothesis files, one per system/sample")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        COMMANDS[args.command](Run(cfg, Path(args.out), args.command), args)
    except Exception as exc:  # reported as JSON for the caller
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
