"""Command-line orchestration of the three-stage workflow: generate candidate
pairs, learn the pair-similarity verdict from labels, train and evaluate
fairness-aware downstream classifiers.

Every subcommand reads one TOML run config (unknown keys rejected), writes its
artifacts into its own subdirectory of the run directory, and drops a resolved
config snapshot next to them.  Secrets come from the environment only.  A lock
file serializes subcommands per run directory.
"""

from __future__ import annotations

import json
import os
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import active_learning as al
from . import clp as clp_mod
from . import pool as pool_mod
from .backends import StubClassifierBackend, StubInfillBackend, get_classifier_backend
from .corpus import CommentStore, CorpusConfig, load_corpus, split
from .groups import EligibilityPolicy, GroupPresenceClassifier, apply_transfer_filter
from .lexicon import enumerate_wr_candidates, load_lexicon, packaged_lexicon
from .llm_rewrite import (
    DEFAULT_BUDGETS,
    GenerationBudget,
    HttpLlmClient,
    LlmConfig,
    ReplayClient,
    RewriteMode,
    generate_llm_candidates,
)
from .metrics import cross_eval, eo_gaps
from .similarity import PairSimilarityClassifier
from .style_transfer import StageError, StyleTransferConfig, transfer_pair

# Known config keys per section; anything else is rejected.
CONFIG_SCHEMA: dict[str, set[str]] = {
    "corpus": {"max_tokens", "train_ratio", "seed", "tokenizer", "id_column", "text_column", "toxicity_column"},
    "groups": {"backend", "eval_fraction", "seed", "epochs", "ba_threshold", "exclusions"},
    "generate": {"seed", "mask_threshold", "beam_width", "selection", "max_mask_iterations"},
    "llm": {
        "temperature",
        "top_p",
        "max_tokens",
        "api_key_env",
        "base_url",
        "rate_limit_per_minute",
        "max_retries",
        "replay_fixtures",
        "max_attempts",
        "target_successes",
    },
    "pool": {"seed", "wr", "st", "llm", "adverse_n"},
    "similarity": {
        "variant",
        "head_width",
        "dropout",
        "threshold",
        "epochs",
        "learning_rate",
        "batch_size",
        "n_dropout_masks",
        "seed",
        "max_len",
        "feature_dim",
    },
    "active_learning": {
        "rounds",
        "batch_size",
        "criterion",
        "allow_relabel",
        "initial_random_batch",
        "regime",
        "epochs_per_round",
        "votes_per_query",
        "seed",
        "noise_p",
        "failure_rate",
    },
    "clp": {
        "lam",
        "threshold",
        "epochs",
        "batch_size",
        "learning_rate",
        "reweigh_loss",
        "pair_orientation",
        "head_width",
        "seed",
    },
    "serve": {"host", "port", "token_env", "qualification_file", "seed"},
}


class ConfigError(click.ClickException):
    pass


def load_run_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    raw = Path(path).read_bytes()
    config = tomllib.loads(raw.decode("utf-8"))
    for section, values in config.items():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a table")
        unknown = set(values) - CONFIG_SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    return config


def write_snapshot(run_dir: Path, stage: str, config: dict, extras: dict | None = None) -> None:
    snapshot = {"stage": stage, "config": config}
    if extras:
        snapshot["arguments"] = extras
    path = run_dir / f"{stage}.resolved.json"
    path.write_text(json.dumps(snapshot, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@contextmanager
def run_lock(run_dir: Path):
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise click.ClickException(f"run directory is locked by another process ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def require_artifact(path: Path, producer: str) -> Path:
    if not path.exists():
        raise click.ClickException(f"missing upstream artifact {path}; run `fairpairs {producer}` first")
    return path


def emit(payload: dict, as_json: bool, text: str | None = None) -> None:
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(text if text is not None else json.dumps(payload, sort_keys=True, indent=2))


def corpus_config(config: dict) -> CorpusConfig:
    return CorpusConfig(**config.get("corpus", {}))


def similarity_model(config: dict, backend=None) -> PairSimilarityClassifier:
    section = dict(config.get("similarity", {}))
    feature_dim = section.pop("feature_dim", 64)
    if backend is None:
        backend = StubClassifierBackend(feature_dim=feature_dim)
    return PairSimilarityClassifier(backend, **section)


@click.group()
def main() -> None:
    """Fairness-constraint pair toolkit."""


@main.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False)
def ingest(csv_path, config_path, run_dir, as_json):
    """Load the toxicity CSV, filter, binarize, and split."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        cfg = corpus_config(config)
        store = load_corpus(csv_path, cfg)
        train, test = split(store, cfg)
        out = run_dir / "corpus"
        out.mkdir(parents=True, exist_ok=True)
        store.save_jsonl(out / "store.jsonl")
        train.save_jsonl(out / "train.jsonl")
        test.save_jsonl(out / "test.jsonl")
        write_snapshot(run_dir, "ingest", config, {"csv": str(csv_path)})
    emit(
        {"total": len(store), "train": len(train), "test": len(test)},
        as_json,
        f"ingested {len(store)} comment(s): {len(train)} train / {len(test)} test",
    )


@main.command("train-groups")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False)
def train_groups(config_path, run_dir, as_json):
    """Train the group-presence classifier on the train split."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        train_path = require_artifact(run_dir / "corpus" / "train.jsonl", "ingest")
        train = CommentStore.load_jsonl(train_path)
        section = dict(config.get("groups", {}))
        section.pop("ba_threshold", None)
        section.pop("exclusions", None)
        backend_name = section.pop("backend", "stub")
        gc = GroupPresenceClassifier(backend_name=backend_name, **section).fit(train)
        gc.save(run_dir / "groups")
        write_snapshot(run_dir, "train-groups", config)
    emit({"groups": gc.eval_report}, as_json, gc.eval_report_table())


def _load_groups(run_dir: Path) -> GroupPresenceClassifier:
    require_artifact(run_dir / "groups" / "model.json", "train-groups")
    return GroupPresenceClassifier.load(run_dir / "groups")


def _eligibility(config: dict) -> EligibilityPolicy:
    section = config.get("groups", {})
    kwargs = {}
    if "ba_threshold" in section:
        kwargs["ba_threshold"] = section["ba_threshold"]
    if "exclusions" in section:
        kwargs["exclusions"] = frozenset(section["exclusions"])
    return EligibilityPolicy(**kwargs)


@main.group()
def generate() -> None:
    """Generate candidate pairs."""


@generate.command("wr")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--no-filter", is_flag=True, default=False, help="skip the group-transfer post-filter (marks all pairs as passed)")
@click.option("--json", "as_json", is_flag=True, default=False)
def generate_wr(config_path, run_dir, lexicon_path, no_filter, as_json):
    """Word-replacement candidates over the train split."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        train = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "train.jsonl", "ingest"))
        lexicon = load_lexicon(lexicon_path) if lexicon_path else packaged_lexicon()
        gc = _load_groups(run_dir)
        eligible = gc.eligible_groups(_eligibility(config)) & set(lexicon.groups)
        seed = config.get("generate", {}).get("seed", 0)
        candidates = list(enumerate_wr_candidates(train, lexicon, eligible, seed))
        if no_filter:
            from dataclasses import replace as dc_replace

            candidates = [dc_replace(c, filter_passed=True) for c in candidates]
        else:
            candidates = apply_transfer_filter(candidates, gc)
        out = run_dir / "generate"
        out.mkdir(parents=True, exist_ok=True)
        n = pool_mod.save_candidates(candidates, out / "wr.jsonl")
        write_snapshot(run_dir, "generate-wr", config, {"eligible": sorted(eligible)})
    passed = sum(1 for c in candidates if c.filter_passed)
    emit({"candidates": n, "filter_passed": passed}, as_json, f"{n} candidate(s), {passed} passed the transfer filter")


@generate.command("st")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--fill-table", "fill_table", required=True, type=click.Path(exists=True, dir_okay=False), help="infill backend file (stub fill table)")
@click.option("--json", "as_json", is_flag=True, default=False)
def generate_st(config_path, run_dir, fill_table, as_json):
    """Prototype-editing style-transfer candidates over the train split."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        train = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "train.jsonl", "ingest"))
        gc = _load_groups(run_dir)
        eligible = sorted(gc.eligible_groups(_eligibility(config)))
        section = dict(config.get("generate", {}))
        section.pop("seed", None)
        st_config = StyleTransferConfig(**section)
        gen = StubInfillBackend.load(fill_table)
        candidates = []
        rejections: dict[str, int] = {}
        for labeled in train.labeled():
            for j in sorted(labeled.groups):
                if j not in eligible:
                    continue
                for j_prime in eligible:
                    if j_prime == j:
                        continue
                    try:
                        candidates.append(transfer_pair(labeled.comment.text, j, j_prime, gen, gc, st_config))
                    except Exception as exc:  # noqa: BLE001 - skip the candidate, tally the stage
                        stage = getattr(exc, "stage", "generate")
                        rejections[stage] = rejections.get(stage, 0) + 1
        out = run_dir / "generate"
        out.mkdir(parents=True, exist_ok=True)
        n = pool_mod.save_candidates(candidates, out / "st.jsonl")
        write_snapshot(run_dir, "generate-st", config, {"rejections": rejections})
    passed = sum(1 for c in candidates if c.filter_passed)
    emit(
        {"candidates": n, "filter_passed": passed, "rejections": rejections},
        as_json,
        f"{n} candidate(s), {passed} passed; rejections: {rejections}",
    )


@generate.command("llm")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice([m.value for m in RewriteMode]), required=True)
@click.option("--source-group", required=True)
@click.option("--target-group", required=True)
@click.option("--live", is_flag=True, default=False, help="call the real API instead of replaying fixtures")
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False)
def generate_llm(config_path, run_dir, mode, source_group, target_group, live, lexicon_path, as_json):
    """Rewrite-based candidates for one mode and group direction."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        train = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "train.jsonl", "ingest"))
        gc = _load_groups(run_dir)
        section = dict(config.get("llm", {}))
        fixtures = section.pop("max_attempts", None), section.pop("target_successes", None)
        replay_path = section.pop("replay_fixtures", None)
        llm_config = LlmConfig(**section)
        mode = RewriteMode(mode)
        budget = DEFAULT_BUDGETS[mode]
        if fixtures[0] is not None or fixtures[1] is not None:
            budget = GenerationBudget(
                max_attempts=fixtures[0] if fixtures[0] is not None else budget.max_attempts,
                target_successes=fixtures[1] if fixtures[1] is not None else budget.target_successes,
            )
        if live:
            client = HttpLlmClient(llm_config)
        else:
            if not replay_path:
                raise click.ClickException("offline mode needs llm.replay_fixtures in the config (or pass --live)")
            client = ReplayClient(replay_path)
        lexicon = load_lexicon(lexicon_path) if lexicon_path else packaged_lexicon()
        candidates = generate_llm_candidates(
            train,
            gc,
            client,
            mode,
            source_group,
            target_group,
            lexicon=lexicon,
            config=llm_config,
            budget=budget,
            seed=config.get("generate", {}).get("seed", 0),
        )
        out = run_dir / "generate"
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"llm_{mode.value}_{source_group}_{target_group}.jsonl"
        n = pool_mod.save_candidates(candidates, path)
        write_snapshot(run_dir, f"generate-llm-{mode.value}", config, {"source": source_group, "target": target_group})
    passed = sum(1 for c in candidates if c.filter_passed)
    emit({"candidates": n, "filter_passed": passed, "file": str(path)}, as_json, f"{n} candidate(s), {passed} passed -> {path}")


@main.group("pool")
def pool_group() -> None:
    """Assemble and transform constraint pools."""


def _load_generated(run_dir: Path, name: str) -> list:
    path = require_artifact(run_dir / "generate" / f"{name}.jsonl", f"generate {name}")
    return pool_mod.load_candidates(path)


@pool_group.command("assemble")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--name", default="C")
@click.option("--json", "as_json", is_flag=True, default=False)
def pool_assemble(config_path, run_dir, name, as_json):
    """Combine generated candidates into a named pool."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        wr = _load_generated(run_dir, "wr")
        st = _load_generated(run_dir, "st")
        llm = []
        for path in sorted((run_dir / "generate").glob("llm_*.jsonl")):
            llm.extend(pool_mod.load_candidates(path))
        section = config.get("pool", {})
        sizes = {k: section[k] for k in ("wr", "st", "llm") if k in section}
        pool = pool_mod.assemble(wr, st, llm, sizes or None, section.get("seed", 0), name=name)
        pool_mod.save_pool(pool, run_dir / "pools" / name)
        write_snapshot(run_dir, "pool-assemble", config, {"name": name})
    emit({"name": name, "size": len(pool), "composition": pool.composition}, as_json, f"pool {name}: {len(pool)} pair(s) {pool.composition}")


@pool_group.command("adverse")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--pool", "pool_name", default="C")
@click.option("--json", "as_json", is_flag=True, default=False)
def pool_adverse(config_path, run_dir, pool_name, as_json):
    """Extend a pool with adversarial label-contrast pairs."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        pool = pool_mod.load_pool(require_artifact(run_dir / "pools" / pool_name, "pool assemble"))
        train = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "train.jsonl", "ingest"))
        section = config.get("pool", {})
        adverse = pool_mod.make_adverse(pool, train, n=section.get("adverse_n", 10000), seed=section.get("seed", 0))
        pool_mod.save_pool(adverse, run_dir / "pools" / adverse.name)
        write_snapshot(run_dir, "pool-adverse", config, {"pool": pool_name})
    emit({"name": adverse.name, "size": len(adverse)}, as_json, f"pool {adverse.name}: {len(adverse)} pair(s)")


@pool_group.command("filter")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--pool", "pool_name", default="C")
@click.option("--t", "threshold", type=float, default=0.5)
@click.option("--json", "as_json", is_flag=True, default=False)
def pool_filter(config_path, run_dir, pool_name, threshold, as_json):
    """Filter a pool with the trained similarity model; prints retention."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        pool = pool_mod.load_pool(require_artifact(run_dir / "pools" / pool_name, "pool assemble"))
        model = PairSimilarityClassifier.load(require_artifact(run_dir / "similarity", "al-run"))
        predictions = model.predict_map(list(pool))
        filtered = pool_mod.filter_pool(pool, predictions, threshold, name=f"{pool_name}_filtered_t{threshold}")
        pool_mod.save_pool(filtered, run_dir / "pools" / filtered.name)
        write_snapshot(run_dir, "pool-filter", config, {"pool": pool_name, "threshold": threshold})
    retention = filtered.notes["retention_percent"]
    emit(
        {"name": filtered.name, "size": len(filtered), "retention_percent": retention},
        as_json,
        f"pool {filtered.name}: kept {len(filtered)}/{len(pool)} pair(s) ({retention:.1f}% retention)",
    )


def _label_source(spec: str, config: dict, service_url: str | None, token_env: str):
    section = config.get("active_learning", {})
    noise = al.NoiseModel(flip_probability=section.get("noise_p", 0.0))
    if spec.startswith("oracle:"):
        variant = {"phi1": "phi1_method", "phi2": "phi2_axis"}.get(spec.split(":", 1)[1])
        if variant is None:
            raise click.ClickException(f"unknown oracle {spec!r}; use oracle:phi1 or oracle:phi2")
        oracle = al.SyntheticOracle(variant=variant)
        return al.OracleLabelSource(oracle, noise, seed=section.get("seed", 0), failure_rate=section.get("failure_rate", 0.0))
    if spec.startswith("file:"):
        return al.ExportLabelSource(al.LabelStore.load_jsonl(spec.split(":", 1)[1]))
    if spec.startswith("service:"):
        if not service_url:
            raise click.ClickException("--service-url is required for service label sources")
        import httpx

        campaign = spec.split(":", 1)[1]
        token = os.environ.get(token_env, "")
        response = httpx.get(
            f"{service_url}/v1/campaigns/{campaign}/export",
            headers={"Authorization": f"Bearer {token}"},
            timeout=30.0,
        )
        response.raise_for_status()
        store = al.LabelStore()
        for line in response.text.splitlines():
            record = json.loads(line)
            for vote in record["votes"]:
                store.add_vote(record["pair_id"], vote)
        return al.ExportLabelSource(store)
    raise click.ClickException(f"unknown label source {spec!r}")


@main.command("al-run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--pool", "pool_name", default="C")
@click.option("--labels", required=True, help="oracle:phi1 | oracle:phi2 | service:<campaign> | file:<export.jsonl>")
@click.option("--service-url", default=None)
@click.option("--token-env", default="FAIRPAIRS_TOKEN")
@click.option("--relabel", "relabel_k", type=int, default=0, help="after the loop, re-query this many likely-mislabeled pairs")
@click.option("--relabel-votes", type=int, default=2, help="extra votes per relabeled pair")
@click.option("--json", "as_json", is_flag=True, default=False)
def al_run(config_path, run_dir, pool_name, labels, service_url, token_env, relabel_k, relabel_votes, as_json):
    """Active-learning loop over a pool; persists the similarity model,
    the collected votes, and per-round metrics."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        pool = pool_mod.load_pool(require_artifact(run_dir / "pools" / pool_name, "pool assemble"))
        section = dict(config.get("active_learning", {}))
        section.pop("noise_p", None)
        section.pop("failure_rate", None)
        loop_config = al.LoopConfig(**section)
        label_source = _label_source(labels, config, service_url, token_env)
        result = al.run_loop(pool, lambda: similarity_model(config), label_source, loop_config)
        relabeled = 0
        if relabel_k > 0:
            pairs = list(pool)
            by_id = {p.id: p for p in pairs}
            chosen = al.relabel_candidates(result.model, result.store, pairs, k=relabel_k)
            for pid in chosen:
                for _ in range(relabel_votes):
                    vote = label_source.query(by_id[pid])
                    if vote is not None:
                        result.store.add_vote(pid, vote)
            if chosen:
                block = [by_id[pid] for pid in chosen]
                updated = [result.store.aggregated_label(pid) for pid in chosen]
                result.model.fit(block, updated, reset=False, epochs=loop_config.epochs_per_round)
            relabeled = len(chosen)
        result.model.save(run_dir / "similarity")
        result.store.save_jsonl(run_dir / "similarity" / "labels.jsonl")
        (run_dir / "similarity" / "rounds.csv").write_text(result.metrics_csv(), encoding="utf-8")
        write_snapshot(run_dir, "al-run", config, {"pool": pool_name, "labels": labels, "relabeled": relabeled})
    emit(
        {"rounds": len(result.rounds), "labeled": len(result.store), "relabeled": relabeled},
        as_json,
        f"collected {len(result.store)} labeled pair(s) over {len(result.rounds)} round(s)"
        + (f"; re-queried {relabeled}" if relabeled else ""),
    )


@main.command("train-clp")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--pool", "pool_name", default=None, help="constraint pool to pair against (omit for a plain baseline)")
@click.option("--name", default="clp")
@click.option("--json", "as_json", is_flag=True, default=False)
def train_clp_cmd(config_path, run_dir, pool_name, name, as_json):
    """Train the downstream toxicity classifier (with pairing when a pool is
    given)."""
    run_dir = Path(run_dir)
    config = load_run_config(config_path)
    with run_lock(run_dir):
        train = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "train.jsonl", "ingest"))
        clp_config = clp_mod.ClpConfig(**config.get("clp", {}))
        backend = StubClassifierBackend(feature_dim=config.get("similarity", {}).get("feature_dim", 64))
        pool = None
        predictions = None
        if pool_name:
            pool = pool_mod.load_pool(require_artifact(run_dir / "pools" / pool_name, "pool assemble"))
            model = PairSimilarityClassifier.load(require_artifact(run_dir / "similarity", "al-run"))
            predictions = model.predict_map(list(pool))
        classifier = clp_mod.ClpToxicityClassifier(backend, clp_config).fit(train, pool, predictions)
        out = run_dir / "classifiers" / name
        classifier.save(out)
        manifest = {
            "name": name,
            "pool": pool_name,
            "config": classifier.get_params(),
            "history": classifier.history,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        write_snapshot(run_dir, "train-clp", config, {"pool": pool_name, "name": name})
    emit({"name": name, "epochs": len(classifier.history)}, as_json, f"trained classifier {name!r}")


@main.command()
@click.option("--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "models", multiple=True, required=True, help="name of a trained classifier under classifiers/")
@click.option("--pool", "pools", multiple=True, required=True, help="name of a pool under pools/")
@click.option("--eo-groups", default=None, help="comma-separated groups for equality-of-odds gaps")
@click.option("--json", "as_json", is_flag=True, default=False)
def evaluate(run_dir, models, pools, eo_groups, as_json):
    """Cross-evaluate trained classifiers on pools (and EO gaps on the test
    split)."""
    run_dir = Path(run_dir)
    test = CommentStore.load_jsonl(require_artifact(run_dir / "corpus" / "test.jsonl", "ingest"))
    classifiers = []
    for name in models:
        clf = clp_mod.ClpToxicityClassifier.load(require_artifact(run_dir / "classifiers" / name, "train-clp"))
        classifiers.append((name, clf.predict))
    named_pools = []
    for name in pools:
        pool = pool_mod.load_pool(require_artifact(run_dir / "pools" / name, "pool assemble"))
        named_pools.append((name, list(pool)))
    report = cross_eval(classifiers, named_pools, test)
    payload = {
        "classifiers": report.classifier_names,
        "pools": report.pool_names,
        "balanced_accuracy": report.ba,
        "fairness": report.fairness.tolist(),
    }
    text = report.render()
    if eo_groups:
        groups = [g.strip() for g in eo_groups.split(",") if g.strip()]
        payload["eo_gaps"] = {}
        for name, predict in classifiers:
            gaps = eo_gaps(predict, test, groups)
            payload["eo_gaps"][name] = {k: v for k, v in gaps.items() if k != "per_group"}
            text += (
                f"\n{name}: TPR gap mean {gaps['tpr_mean']:.1f} max {gaps['tpr_max']:.1f}; "
                f"TNR gap mean {gaps['tnr_mean']:.1f} max {gaps['tnr_max']:.1f}"
            )
    (run_dir / "evaluation.csv").write_text(report.to_csv(), encoding="utf-8")
    emit(payload, as_json, text)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the annotation service."""
    import uvicorn

    from .annotation import AnnotationService, QualificationItem
    from .annotation.api import create_app

    config = load_run_config(config_path)
    section = config.get("serve", {})
    token = os.environ.get(section.get("token_env", "FAIRPAIRS_TOKEN"), "")
    if not token:
        raise click.ClickException(f"set {section.get('token_env', 'FAIRPAIRS_TOKEN')} to a bearer token before serving")
    items = []
    qual_file = section.get("qualification_file")
    if qual_file:
        for record in json.loads(Path(qual_file).read_text(encoding="utf-8")):
            items.append(
                QualificationItem(
                    a=record["a"], b=record["b"], correct_option=record["correct_option"], note=record.get("note", "")
                )
            )
    service = AnnotationService(items, seed=section.get("seed", 0))
    app = create_app(service, token=token)
    uvicorn.run(app, host=host or section.get("host", "127.0.0.1"), port=port or section.get("port", 8400))


if __name__ == "__main__":
    main()
