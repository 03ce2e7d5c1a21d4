"""Command-line surface for the provenance toolkit.

Subcommands cover dataset synthesis, training, image description, graph
construction, scoring, and a one-shot pipeline. A single JSON config file
supplies defaults; per-command flags win over the file. All randomness is
derived from one master seed, split per subsystem, so any command re-run
with the same seed and inputs writes byte-identical artifacts.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal.
"""

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
import traceback
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np
import torch

from .describe import describe_image, load_features, save_features
from .dissim import build_matrix
from .embednet import EmbeddingNet, build_network, load_checkpoint, save_checkpoint
from .errors import (
    InvalidConfigError,
    InvalidInputError,
    ToolkitError,
    WorkdirLockedError,
)
from .metrics import score_batch, write_scores_csv, write_summary_json
from .provgraph import export_graph, graph_from_journal, kruskal_spanning_tree, load_graph
from .quadgen import (
    PatchStore,
    load_journal,
    make_quadruplets,
    make_synthetic_journal,
    read_manifest,
    save_journal,
    synthesize_corpus,
    synthesize_image,
    write_manifest,
)
from .rankloss import TrainConfig, read_history, train, write_history

log = logging.getLogger("provtrace")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

DEFAULTS = {
    "seed": 0,
    "workdir": "work",
    "corpus": None,
    "synth": {
        "count_per_image": 8,
        "difficulty": "mixed",
        "patch_size": 64,
        "synth_images": 0,
        "image_size": 256,
    },
    "train": {
        "learning_rate": 0.01,
        "momentum": 0.9,
        "lr_decay_factor": 0.1,
        "plateau_patience": 5,
        "max_epochs": 100,
        "batch_size": 64,
        "val_fraction": 0.1,
        "early_stop_precision": None,
    },
    "describe": {
        "strategy": "keypoint",
        "max_patches": 100,
        "batch_size": 64,
    },
    "journal": {
        "n_cases": 3,
        "min_nodes": 5,
        "max_nodes": 10,
        "branching": 0.3,
        "image_size": 256,
    },
}


class UsageError(Exception):
    """Bad invocation: wrong flags, wrong cardinality, missing subcommand."""


def derive_seed(master: int, subsystem: str) -> int:
    """Stable per-subsystem seed split from the master seed."""
    digest = hashlib.sha256(f"{master}:{subsystem}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@contextmanager
def workdir_lock(workdir: Path):
    """O_EXCL lock file guarding the workdir against concurrent writers."""
    workdir.mkdir(parents=True, exist_ok=True)
    lock = workdir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise WorkdirLockedError(
            f"workdir {workdir} is locked; remove {lock} if no other process is running"
        )
    os.write(fd, f"{os.getpid()}\n".encode("ascii"))
    os.close(fd)
    try:
        yield workdir
    finally:
        lock.unlink(missing_ok=True)


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for one invocation: defaults <- config file <- flags."""

    seed: int
    workdir: Path
    corpus: Path | None
    synth: dict
    train: TrainConfig
    describe: dict
    journal: dict

    def validate(self) -> None:
        if self.corpus is not None and not self.corpus.is_dir():
            raise InvalidInputError(f"corpus directory not found: {self.corpus}")


def _merge_section(base: dict, override: dict, section: str) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if key not in base:
            raise InvalidConfigError(f"unknown config key {section}.{key}")
        merged[key] = value
    return merged


def load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"config file {path} must hold a JSON object")
    return raw


def resolve_config(ns: argparse.Namespace) -> PipelineConfig:
    """Layer the config file over defaults, then flags over both."""
    merged = copy.deepcopy(DEFAULTS)
    if getattr(ns, "config", None):
        raw = load_config_file(ns.config)
        for key, value in raw.items():
            if key in ("synth", "train", "describe", "journal"):
                if not isinstance(value, dict):
                    raise InvalidConfigError(f"config section {key} must be an object")
                merged[key] = _merge_section(merged[key], value, key)
            elif key in ("seed", "workdir", "corpus"):
                merged[key] = value
            else:
                raise InvalidConfigError(f"unknown config key {key}")

    if getattr(ns, "seed", None) is not None:
        merged["seed"] = ns.seed
    if getattr(ns, "workdir", None) is not None:
        merged["workdir"] = ns.workdir
    if getattr(ns, "corpus", None) is not None:
        merged["corpus"] = ns.corpus

    # per-command flags carry dest names like train_max_epochs
    for section in ("synth", "train", "describe", "journal"):
        for key in merged[section]:
            flag = getattr(ns, f"{section}_{key}", None)
            if flag is not None:
                merged[section][key] = flag

    train_cfg = TrainConfig(**{k: v for k, v in merged["train"].items()})
    cfg = PipelineConfig(
        seed=int(merged["seed"]),
        workdir=Path(merged["workdir"]),
        corpus=Path(merged["corpus"]) if merged["corpus"] else None,
        synth=merged["synth"],
        train=train_cfg,
        describe=merged["describe"],
        journal=merged["journal"],
    )
    cfg.validate()
    return cfg


# --- image and corpus IO ------------------------------------------------------


def read_image(path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise InvalidInputError(f"could not read image: {path}")
    return image


def write_image(path, image: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), image):
        raise InvalidInputError(f"could not write image: {path}")


def load_corpus_dir(dirpath: Path):
    """(image_id, image) pairs for every image file in dirpath, sorted by stem."""
    paths = sorted(
        (p for p in dirpath.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )
    if not paths:
        raise InvalidInputError(f"no images found in {dirpath}")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise InvalidInputError(f"duplicate image ids (file stems) in {dirpath}")
    return [(p.stem, read_image(p)) for p in paths]


def _input_corpus(cfg: PipelineConfig):
    """Images to work from: the corpus directory, or a procedural stand-in."""
    if cfg.corpus is not None:
        return load_corpus_dir(cfg.corpus)
    n = int(cfg.synth["synth_images"])
    if n < 1:
        raise UsageError("no corpus given; pass --corpus DIR or --synth-images N")
    size = int(cfg.synth["image_size"])
    rng = np.random.default_rng(derive_seed(cfg.seed, "corpus"))
    return synthesize_corpus(rng, n, size=(size, size))


def _load_network(cfg: PipelineConfig, checkpoint, random_init: bool) -> EmbeddingNet:
    if checkpoint is not None:
        network, _ = load_checkpoint(checkpoint)
        return network
    default = cfg.workdir / "checkpoint.pt"
    if default.exists():
        network, _ = load_checkpoint(default)
        return network
    if random_init:
        return build_network(seed=derive_seed(cfg.seed, "init"))
    raise InvalidInputError(
        f"no checkpoint at {default}; pass --checkpoint PATH or --random-init"
    )


# --- core pipeline steps (shared by individual commands and `pipeline`) -------


def run_synth(cfg: PipelineConfig):
    corpus = _input_corpus(cfg)
    if len(corpus) < 2:
        raise UsageError("synthesis needs at least 2 images (negatives must come from a different image)")

    difficulty = cfg.synth["difficulty"]
    if difficulty not in ("easy", "hard", "mixed"):
        raise UsageError(f"difficulty must be easy, hard, or mixed, got {difficulty!r}")
    count = int(cfg.synth["count_per_image"])
    patch_size = int(cfg.synth["patch_size"])

    store = PatchStore(patch_size=patch_size)
    records = []
    for i, (image_id, image) in enumerate(corpus):
        neg_id, neg_image = corpus[(i + 1) % len(corpus)]
        rng = np.random.default_rng(derive_seed(cfg.seed, f"synth:{image_id}"))
        if difficulty == "mixed":
            plan = [("easy", count - count // 2), ("hard", count // 2)]
        else:
            plan = [(difficulty, count)]
        try:
            for kind, n in plan:
                if n == 0:
                    continue
                batch, store = make_quadruplets(
                    image, neg_image, kind, n, rng,
                    anchor_id=image_id, negative_id=neg_id,
                    patch_size=patch_size, store=store,
                )
                records.extend(batch)
        except ToolkitError as e:
            raise InvalidInputError(f"image '{image_id}': {e}") from e
        log.info("synth: %s -> %d records so far", image_id, len(records))

    if not records:
        raise InvalidInputError("no quadruplets survived; images may be too small or too flat")
    manifest_path = cfg.workdir / "manifest.jsonl"
    store_path = cfg.workdir / "patches.pts"
    write_manifest(records, manifest_path)
    store.save(store_path)
    return records, manifest_path, store_path


def run_synth_journals(cfg: PipelineConfig):
    """Ground-truth journals plus their node images under the workdir."""
    n_cases = int(cfg.journal["n_cases"])
    if n_cases < 1:
        raise UsageError("need at least 1 journal case")
    min_nodes = int(cfg.journal["min_nodes"])
    max_nodes = int(cfg.journal["max_nodes"])
    if not 2 <= min_nodes <= max_nodes:
        raise UsageError(f"need 2 <= min_nodes <= max_nodes, got {min_nodes}..{max_nodes}")
    branching = float(cfg.journal["branching"])
    size = int(cfg.journal["image_size"])

    if cfg.corpus is not None:
        seeds = load_corpus_dir(cfg.corpus)
    else:
        rng = np.random.default_rng(derive_seed(cfg.seed, "corpus"))
        seeds = synthesize_corpus(rng, n_cases, size=(size, size))

    journal_dir = cfg.workdir / "journals"
    image_dir = cfg.workdir / "images"
    journal_dir.mkdir(parents=True, exist_ok=True)
    journals = []
    for j in range(n_cases):
        case_id = f"case{j:03d}"
        _, seed_image = seeds[j % len(seeds)]
        rng = np.random.default_rng(derive_seed(cfg.seed, f"journal:{case_id}"))
        n_nodes = int(rng.integers(min_nodes, max_nodes + 1))
        images, journal = make_synthetic_journal(
            seed_image, n_nodes, branching, rng, case_id=case_id
        )
        save_journal(journal, journal_dir / f"{case_id}.json")
        for node_id, node_image in images.items():
            write_image(image_dir / case_id / f"{node_id}.png", node_image)
        journals.append(journal)
        log.info("journal %s: %d nodes, %d edges", case_id, len(journal.nodes), len(journal.edges))
    return journals, journal_dir, image_dir


def run_describe_dir(network: EmbeddingNet, src_dir: Path, out_dir: Path, settings: dict):
    """One feature file per image in src_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for image_id, image in load_corpus_dir(src_dir):
        fs = describe_image(
            network,
            image,
            image_id=image_id,
            strategy=settings["strategy"],
            max_count=int(settings["max_patches"]),
            batch_size=int(settings["batch_size"]),
        )
        path = out_dir / f"{image_id}.feat"
        save_features(fs, path)
        written.append(path)
        log.info("describe: %s -> %d patches", image_id, len(fs))
    return written


def run_graph(feature_paths, graph_path: Path, dot_path: Path, matrix_path: Path):
    """Dissimilarity matrix and spanning-tree graph from feature files."""
    if len(feature_paths) < 2:
        raise UsageError("graph construction needs at least 2 feature files")
    sets = [load_features(p) for p in sorted(feature_paths)]
    matrix = build_matrix(sets)
    graph = kruskal_spanning_tree(matrix)
    for path in (graph_path, dot_path, matrix_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    matrix_path.write_text(matrix.to_json() + "\n", encoding="utf-8")
    export_graph(graph, "json", graph_path)
    export_graph(graph, "dot", dot_path)
    return graph, matrix


def run_score(truth_dir: Path, candidate_dir: Path, csv_path: Path, summary_path: Path):
    """Score candidate graphs against ground-truth journals, matched by case id.

    Returns (rows, summary, unmatched). Unmatched case ids on either side are
    skipped; the caller decides the exit code.
    """
    if not truth_dir.is_dir():
        raise InvalidInputError(f"journal directory not found: {truth_dir}")
    if not candidate_dir.is_dir():
        raise InvalidInputError(f"candidate directory not found: {candidate_dir}")
    journal_paths = sorted(truth_dir.glob("*.json"))
    if not journal_paths:
        raise InvalidInputError(f"no journals found in {truth_dir}")
    candidates = {p.stem: p for p in candidate_dir.glob("*.json")}

    rows, cases, unmatched = [], [], []
    matched_ids = set()
    for path in journal_paths:
        journal = load_journal(path)
        cand_path = candidates.get(journal.case_id)
        if cand_path is None:
            unmatched.append(journal.case_id)
            continue
        matched_ids.add(journal.case_id)
        gt = graph_from_journal(journal)
        cand = load_graph(cand_path)
        cases.append((journal.case_id, gt, cand))
    unmatched.extend(sorted(set(candidates) - matched_ids))

    if not cases:
        raise InvalidInputError("no case ids matched between journals and candidates")
    mean, std, scores = score_batch([(gt, cand) for _, gt, cand in cases])
    rows = [(case_id, s) for (case_id, _, _), s in zip(cases, scores)]
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_scores_csv(rows, csv_path)
    write_summary_json(mean, std, len(rows), summary_path)
    return rows, (mean, std), unmatched


# --- subcommand handlers -------------------------------------------------------


def cmd_synth(ns, cfg: PipelineConfig) -> int:
    records, manifest_path, store_path = run_synth(cfg)
    print(f"synth: {len(records)} quadruplets -> {manifest_path}, {store_path}")
    return 0


def cmd_synth_journal(ns, cfg: PipelineConfig) -> int:
    journals, journal_dir, image_dir = run_synth_journals(cfg)
    total_nodes = sum(len(j.nodes) for j in journals)
    print(f"synth-journal: {len(journals)} journals, {total_nodes} node images -> {journal_dir}, {image_dir}")
    return 0


def cmd_train(ns, cfg: PipelineConfig) -> int:
    manifest_path = Path(ns.manifest) if ns.manifest else cfg.workdir / "manifest.jsonl"
    store_path = Path(ns.store) if ns.store else cfg.workdir / "patches.pts"
    for path in (manifest_path, store_path):
        if not path.exists():
            raise InvalidInputError(f"missing training input: {path}")
    records = read_manifest(manifest_path)
    store = PatchStore.load(store_path)

    checkpoint_path = cfg.workdir / "checkpoint.pt"
    history_path = cfg.workdir / "history.csv"
    network = None
    prior_history = []
    prior_state = None
    prior_best = {}
    if ns.resume:
        if not checkpoint_path.exists():
            raise InvalidInputError(f"cannot resume: no checkpoint at {checkpoint_path}")
        network, payload = load_checkpoint(checkpoint_path)
        prior_state = copy.deepcopy(network.state_dict())
        prior_best = payload.get("extra") or {}
        if history_path.exists():
            prior_history = read_history(history_path)
    else:
        network = build_network(seed=derive_seed(cfg.seed, "init"))

    rng = np.random.default_rng(derive_seed(cfg.seed, "train"))
    torch.manual_seed(derive_seed(cfg.seed, "train"))
    result = train(records, store, cfg.train, rng, network=network)

    offset = prior_history[-1].epoch if prior_history else 0
    shifted = [replace(row, epoch=row.epoch + offset) for row in result.history]
    best_epoch = result.best_epoch + offset if result.best_epoch is not None else None
    best_precision = result.best_val_precision
    # the checkpoint tracks the best epoch seen across resumes, not just this run
    if prior_state is not None and prior_best.get("best_val_precision") is not None \
            and prior_best["best_val_precision"] >= best_precision:
        result.network.load_state_dict(prior_state)
        best_epoch = prior_best["best_epoch"]
        best_precision = prior_best["best_val_precision"]
    write_history(prior_history + shifted, history_path)
    save_checkpoint(
        checkpoint_path,
        result.network,
        extra={"best_epoch": best_epoch, "best_val_precision": best_precision},
    )
    print(
        f"train: {len(shifted)} epochs, best val precision "
        f"{best_precision:.3f} at epoch {best_epoch} -> {checkpoint_path}"
    )
    return 0


def cmd_describe(ns, cfg: PipelineConfig) -> int:
    src = Path(ns.images) if ns.images else cfg.corpus
    if src is None:
        raise UsageError("describe needs --images DIR (or a corpus in the config)")
    network = _load_network(cfg, ns.checkpoint, ns.random_init)
    out_dir = Path(ns.out_dir) if ns.out_dir else cfg.workdir / "features"
    written = run_describe_dir(network, src, out_dir, cfg.describe)
    print(f"describe: {len(written)} feature files -> {out_dir}")
    return 0


def cmd_graph(ns, cfg: PipelineConfig) -> int:
    if ns.features:
        feature_paths = sorted(Path(ns.features).glob("*.feat"))
    else:
        src = Path(ns.images) if ns.images else None
        if src is None:
            raise UsageError("graph needs --features DIR or --images DIR")
        network = _load_network(cfg, ns.checkpoint, ns.random_init)
        feature_paths = run_describe_dir(network, src, cfg.workdir / "features", cfg.describe)
    name = ns.name
    graph, _ = run_graph(
        feature_paths,
        cfg.workdir / "graphs" / f"{name}.json",
        cfg.workdir / "graphs" / f"{name}.dot",
        cfg.workdir / "matrices" / f"{name}.json",
    )
    print(
        f"graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges, "
        f"total weight {graph.total_weight():.4f} -> {cfg.workdir / 'graphs'}"
    )
    return 0


def cmd_score(ns, cfg: PipelineConfig) -> int:
    truth_dir = Path(ns.truth) if ns.truth else cfg.workdir / "journals"
    candidate_dir = Path(ns.candidates) if ns.candidates else cfg.workdir / "graphs"
    rows, (mean, _), unmatched = run_score(
        truth_dir, candidate_dir, cfg.workdir / "scores.csv", cfg.workdir / "summary.json"
    )
    print(
        f"score: {len(rows)} cases, mean VO {mean.vo:.4f} EO {mean.eo:.4f} VEO {mean.veo:.4f}"
        f" -> {cfg.workdir / 'scores.csv'}"
    )
    if unmatched:
        print("score: unmatched case ids skipped: " + ", ".join(unmatched), file=sys.stderr)
        return 2
    return 0


def cmd_pipeline(ns, cfg: PipelineConfig) -> int:
    """synth-journal, then describe and graph per case, then score."""
    journals, journal_dir, image_dir = run_synth_journals(cfg)
    network = _load_network(cfg, ns.checkpoint, ns.random_init)
    for journal in journals:
        case_dir = image_dir / journal.case_id
        feature_paths = run_describe_dir(
            network, case_dir, cfg.workdir / "features" / journal.case_id, cfg.describe
        )
        run_graph(
            feature_paths,
            cfg.workdir / "graphs" / f"{journal.case_id}.json",
            cfg.workdir / "graphs" / f"{journal.case_id}.dot",
            cfg.workdir / "matrices" / f"{journal.case_id}.json",
        )
    rows, (mean, _), unmatched = run_score(
        journal_dir, cfg.workdir / "graphs", cfg.workdir / "scores.csv", cfg.workdir / "summary.json"
    )
    print(
        f"pipeline: {len(rows)} cases, mean VO {mean.vo:.4f} EO {mean.eo:.4f} VEO {mean.veo:.4f}"
        f" -> {cfg.workdir / 'summary.json'}"
    )
    return 2 if unmatched else 0


# --- parser and entry point ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, help="master seed for all randomness")
    common.add_argument("--workdir", help="artifact directory (default: work)")
    common.add_argument("--corpus", help="directory of input images")
    common.add_argument("--verbose", action="store_true", help="log progress")

    parser = _Parser(prog="provtrace", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="build a quadruplet dataset")
    p.add_argument("--count", dest="synth_count_per_image", type=int, help="quadruplets per image")
    p.add_argument("--difficulty", dest="synth_difficulty", choices=["easy", "hard", "mixed"])
    p.add_argument("--patch-size", dest="synth_patch_size", type=int)
    p.add_argument("--synth-images", dest="synth_synth_images", type=int,
                   help="use N procedural images instead of a corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-journal", parents=[common], help="build ground-truth journals")
    p.add_argument("--cases", dest="journal_n_cases", type=int)
    p.add_argument("--min-nodes", dest="journal_min_nodes", type=int)
    p.add_argument("--max-nodes", dest="journal_max_nodes", type=int)
    p.add_argument("--branching", dest="journal_branching", type=float)
    p.set_defaults(func=cmd_synth_journal)

    p = sub.add_parser("train", parents=[common], help="train the embedding network")
    p.add_argument("--manifest", help="quadruplet manifest (default: WORKDIR/manifest.jsonl)")
    p.add_argument("--store", help="patch store (default: WORKDIR/patches.pts)")
    p.add_argument("--resume", action="store_true", help="continue from WORKDIR/checkpoint.pt")
    p.add_argument("--max-epochs", dest="train_max_epochs", type=int)
    p.add_argument("--batch-size", dest="train_batch_size", type=int)
    p.add_argument("--learning-rate", dest="train_learning_rate", type=float)
    p.add_argument("--val-fraction", dest="train_val_fraction", type=float)
    p.add_argument("--early-stop-precision", dest="train_early_stop_precision", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("describe", parents=[common], help="embed images into feature files")
    p.add_argument("--images", help="directory of images to describe")
    p.add_argument("--checkpoint", help="trained checkpoint (default: WORKDIR/checkpoint.pt)")
    p.add_argument("--random-init", action="store_true",
                   help="use a seed-derived untrained network when no checkpoint exists")
    p.add_argument("--out-dir", help="feature output directory (default: WORKDIR/features)")
    p.add_argument("--strategy", dest="describe_strategy", choices=["keypoint", "grid"])
    p.add_argument("--max-patches", dest="describe_max_patches", type=int)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("graph", parents=[common], help="build a provenance graph")
    p.add_argument("--features", help="directory of .feat files")
    p.add_argument("--images", help="describe these images first, then build the graph")
    p.add_argument("--checkpoint", help="trained checkpoint (with --images)")
    p.add_argument("--random-init", action="store_true")
    p.add_argument("--name", default="graph", help="basename for graph outputs")
    p.add_argument("--strategy", dest="describe_strategy", choices=["keypoint", "grid"])
    p.add_argument("--max-patches", dest="describe_max_patches", type=int)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("score", parents=[common], help="score candidate graphs against journals")
    p.add_argument("--truth", help="journal directory (default: WORKDIR/journals)")
    p.add_argument("--candidates", help="candidate graph directory (default: WORKDIR/graphs)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pipeline", parents=[common], help="synth-journal, describe, graph, score")
    p.add_argument("--checkpoint", help="trained checkpoint (default: WORKDIR/checkpoint.pt)")
    p.add_argument("--random-init", action="store_true")
    p.add_argument("--cases", dest="journal_n_cases", type=int)
    p.add_argument("--min-nodes", dest="journal_min_nodes", type=int)
    p.add_argument("--max-nodes", dest="journal_max_nodes", type=int)
    p.add_argument("--branching", dest="journal_branching", type=float)
    p.add_argument("--strategy", dest="describe_strategy", choices=["keypoint", "grid"])
    p.add_argument("--max-patches", dest="describe_max_patches", type=int)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        print(f"provtrace: usage error: {e}", file=sys.stderr)
        return 1

    if getattr(ns, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(ns)
        with workdir_lock(cfg.workdir):
            return int(ns.func(ns, cfg))
    except UsageError as e:
        print(f"provtrace: usage error: {e}", file=sys.stderr)
        return 1
    except (ToolkitError, OSError) as e:
        print(f"provtrace: error: {e}", file=sys.stderr)
        return 2
    except Exception:
        print("provtrace: internal error", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
