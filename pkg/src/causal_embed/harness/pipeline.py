"""Generate -> train -> estimate -> report, one replication at a time.

Output layout under ``output_dir``::

    data/replication_<k>.csv                 sample used by replication k
    models/replication_<k>/<method>.stage1.json
    models/replication_<k>/<method>.stage2.<conditioning>--<target>.json
    models/replication_<k>/fingerprints.json
    replication_<k>.csv                      one row per (method, query)
    aggregate.csv                            error summaries across replications
    run_manifest.json                        config echo, fingerprints, versions

Replication ``k`` uses seed ``base_seed + k`` for data, both training stages,
and the split permutation, so replications can run in any order or process.
``evaluate`` runs the four steps back to back through the same files as the
split CLI commands, which is what makes the two paths agree bit for bit.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..data import ColumnarDataset
from ..dgp import (
    FrontdoorDGP,
    SpriteConfig,
    gen_backdoor_dsprite,
    gen_frontdoor_dsprite,
    ground_truth_att_frontdoor_mc,
    h_weight,
    latent_grid,
    render_sprite,
)
from ..discrete import DiscreteSCM, adjustment_of, random_scm
from ..errors import CausalEmbedError, DataError
from ..estimators import CausalQuery, estimate
from ..nn import array_fingerprint, dumps
from ..rng import make_rng
from ..stage1 import StageOneModel, train_stage1
from ..stage2 import EmbeddingRegressor, train_embedding
from .config import ExperimentConfig, default_grid, default_parameters

log = logging.getLogger(__name__)

METHODS = ("neural", "random-features")
REPORT_COLUMNS = (
    "replication", "method", "query", "parameter", "adjustment", "point",
    "estimate", "truth", "squared_error", "absolute_error", "n",
)
AGGREGATE_COLUMNS = (
    "method", "query", "parameter", "point", "replications", "mean_estimate", "truth",
    "mean_squared_error", "median_squared_error", "stderr_squared_error",
    "mean_absolute_error", "median_absolute_error", "stderr_absolute_error",
)


@dataclass
class Query:
    label: str
    parameter: str
    adjustment: str
    point: str
    a: np.ndarray
    a_prime: np.ndarray | None = None
    o: np.ndarray | None = None
    truth: float = math.nan

    def causal_query(self) -> CausalQuery:
        return CausalQuery(self.parameter, self.adjustment, self.a, self.a_prime, self.o, self.label)


def methods(cfg: ExperimentConfig) -> tuple[str, ...]:
    return METHODS if cfg.estimation.baseline else METHODS[:1]


def replication_seed(cfg: ExperimentConfig, k: int) -> int:
    return cfg.seed + k


# --------------------------------------------------------------------------
# data and ground truth


def sprite_config(cfg: ExperimentConfig) -> SpriteConfig:
    d = cfg.dgp
    return SpriteConfig(d.resolution, d.sprite, d.half_width, d.pixel_noise_std)


def experiment_scm(cfg: ExperimentConfig) -> DiscreteSCM:
    d = cfg.dgp
    return random_scm(d.graph, d.scm_seed, d.card, d.concentration)


def generate_data(cfg: ExperimentConfig, k: int) -> ColumnarDataset:
    seed = replication_seed(cfg, k)
    kind = cfg.experiment
    if kind == "backdoor-dsprite":
        return gen_backdoor_dsprite(sprite_config(cfg), cfg.dgp.n, seed)[0]
    if kind == "frontdoor-dsprite":
        return gen_frontdoor_dsprite(sprite_config(cfg), cfg.dgp.n, seed)[0]
    if kind == "discrete-toy":
        return experiment_scm(cfg).sample(cfg.dgp.n, seed)
    data = ColumnarDataset.from_csv(cfg.dgp.path, required=("treatment", "outcome", "backdoor"))
    extra = set(data.columns) - {"treatment", "outcome", "backdoor", "confounder"}
    if extra:
        raise DataError(f"{cfg.dgp.path}: roles {sorted(extra)} do not belong in a back-door dataset")
    return data


def model_roles(cfg: ExperimentConfig, data: ColumnarDataset) -> tuple[str, ...]:
    kind = cfg.experiment
    if kind == "backdoor-dsprite":
        return ("treatment", "backdoor")
    if kind == "frontdoor-dsprite":
        return ("treatment", "frontdoor")
    if kind == "discrete-toy":
        adj = adjustment_of(cfg.dgp.graph)
        return ("treatment", "confounder", adj) if cfg.dgp.graph.endswith("-obs") else ("treatment", adj)
    return ("treatment", "confounder", "backdoor") if "confounder" in data else ("treatment", "backdoor")


def _fmt(v) -> str:
    return ",".join(f"{x:g}" for x in np.atleast_1d(v))


def build_queries(cfg: ExperimentConfig) -> list[Query]:
    """Query list with ground truth (NaN where none is known)."""
    kind = cfg.experiment
    q = cfg.queries
    params = q.parameters or default_parameters(cfg)
    out: list[Query] = []
    if kind.endswith("dsprite"):
        scfg = sprite_config(cfg)
        grid = q.grid or default_grid(kind)
        ap = q.a_prime or (0.6, 0.6)
        adj = "backdoor" if kind == "backdoor-dsprite" else "frontdoor"
        ap_img = render_sprite(scfg, *ap)
        for p in params:
            for px, py in latent_grid(grid, grid):
                img = render_sprite(scfg, px, py)
                point = f"posx={px:g};posy={py:g}"
                if p == "ATE" and adj == "backdoor":
                    truth = h_weight(img, scfg.resolution) ** 2 / 100.0
                    out.append(Query("", p, adj, point, img, truth=truth))
                elif p == "ATE":
                    fd = FrontdoorDGP()
                    truth = (h_weight(img, scfg.resolution) ** 2 + fd.m_noise_std**2) / 100.0
                    out.append(Query("", p, adj, point, img, truth=truth))
                else:
                    truth = ground_truth_att_frontdoor_mc(img, ap, scfg, q.mc_samples, q.oracle_seed)[0]
                    out.append(Query("", p, adj, point + f";a'=({ap[0]:g},{ap[1]:g})", img, ap_img, truth=truth))
    elif kind == "discrete-toy":
        scm = experiment_scm(cfg)
        sup = scm.supports
        adj = adjustment_of(cfg.dgp.graph)
        for p in params:
            for ia, a in enumerate(sup["A"]):
                if p == "ATE":
                    out.append(Query("", p, adj, f"a={a:g}", np.array([a]), truth=scm.identified(p, ia)))
                elif p == "ATT":
                    for iap, ap in enumerate(sup["A"]):
                        out.append(Query("", p, adj, f"a={a:g};a'={ap:g}", np.array([a]), np.array([ap]),
                                         truth=scm.identified(p, ia, a_prime=iap)))
                else:
                    for io, o in enumerate(sup["O"]):
                        out.append(Query("", p, adj, f"a={a:g};o={o:g}", np.array([a]), o=np.array([o]),
                                         truth=scm.identified(p, ia, o=io)))
    else:
        for p in params:
            for pt in q.points:
                a = np.asarray(pt, dtype=np.float64)
                if p == "ATE":
                    out.append(Query("", p, "backdoor", f"a=({_fmt(a)})", a))
                else:
                    ap = np.asarray(q.a_prime, dtype=np.float64)
                    out.append(Query("", p, "backdoor", f"a=({_fmt(a)});a'=({_fmt(ap)})", a, ap))
    for i, qq in enumerate(out):
        qq.label = f"q{i:03d}"
    return out


def needed_regressors(roles: tuple[str, ...], queries: list[Query]) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """(conditioning, target) pairs the queries need, in a fixed order."""
    need = []
    last = roles[-1]
    for q in queries:
        if len(roles) == 2:
            if last == "backdoor" and q.parameter == "ATT":
                need.append((("treatment",), ("backdoor",)))
            elif last == "frontdoor":
                need.append((("treatment",), ("frontdoor",)))
        elif last == "backdoor":
            if q.parameter == "ATT":
                need.append((("treatment",), ("confounder", "backdoor")))
            elif q.parameter == "CATE":
                need.append((("confounder",), ("backdoor",)))
        else:
            need.append((("confounder", "treatment"), ("frontdoor",)))
    return list(dict.fromkeys(need))


# --------------------------------------------------------------------------
# fitting


def split_indices(cfg: ExperimentConfig, k: int, n: int) -> dict[str, np.ndarray]:
    """Row indices for stage 1, stage 2, and the marginal embeddings."""
    all_rows = np.arange(n)
    fit, emb = all_rows, all_rows
    if cfg.estimation.heldout_embedding or cfg.estimation.stage2_split:
        perm = make_rng(replication_seed(cfg, k), "split").permutation(n)
        if cfg.estimation.heldout_embedding:
            fit, emb = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
            perm = perm[: n // 2]
        if cfg.estimation.stage2_split:
            half = len(perm) // 2
            return {"stage1": np.sort(perm[:half]), "stage2": np.sort(perm[half:]), "embedding": emb}
    return {"stage1": fit, "stage2": fit, "embedding": emb}


def fit_models(cfg: ExperimentConfig, k: int, data: ColumnarDataset, method: str,
               queries: list[Query]) -> tuple[StageOneModel, list[EmbeddingRegressor]]:
    seed = replication_seed(cfg, k)
    idx = split_indices(cfg, k, data.n)
    roles = model_roles(cfg, data)
    s1 = data.subset(idx["stage1"])
    tcfg = replace(cfg.stage1, seed=seed, train_features=(method == "neural"))
    model = train_stage1(s1, roles, tcfg)
    s2 = data.subset(idx["stage2"])
    regs = []
    for cond, target in needed_regressors(roles, queries):
        maps = [model.map_for(r) for r in target]
        regs.append(train_embedding(
            maps, [s2[r] for r in target], [s2[r] for r in cond],
            replace(cfg.stage2, seed=seed), cond, target,
        ))
    return model, regs


def estimate_rows(cfg: ExperimentConfig, k: int, method: str, data: ColumnarDataset, model: StageOneModel,
                  regs: list[EmbeddingRegressor], queries: list[Query]) -> list[dict]:
    emb = data.subset(split_indices(cfg, k, data.n)["embedding"])
    rows = []
    for q in queries:
        est = estimate(model, emb, regs, q.causal_query())
        rows.append(report_row(k, method, q, est.value, est.n_used))
    return rows


def report_row(k: int, method: str, q: Query, value: float, n: int) -> dict:
    """Errors are always derived from (estimate, truth) here, never stored apart."""
    row = {
        "replication": k, "method": method, "query": q.label, "parameter": q.parameter,
        "adjustment": q.adjustment, "point": q.point, "estimate": value, "truth": q.truth, "n": n,
    }
    diff = value - q.truth
    row["squared_error"] = diff * diff
    row["absolute_error"] = abs(diff)
    return row


# --------------------------------------------------------------------------
# file io


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r[c]) for c in columns])


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for c in ("estimate", "truth", "squared_error", "absolute_error"):
            r[c] = float(r[c]) if r[c] != "" else math.nan
        r["replication"] = int(r["replication"])
        r["n"] = int(r["n"])
    return rows


def write_json(path: Path, doc) -> None:
    path.write_text(dumps(doc) + "\n")


def _data_path(out: Path, k: int) -> Path:
    return out / "data" / f"replication_{k}.csv"


def _model_dir(out: Path, k: int) -> Path:
    return out / "models" / f"replication_{k}"


def _reg_name(method: str, reg: EmbeddingRegressor) -> str:
    return f"{method}.stage2.{'+'.join(reg.conditioning)}--{'+'.join(reg.target)}.json"


def data_fingerprint(data: ColumnarDataset) -> str:
    roles = sorted(data.columns)
    return array_fingerprint(roles, [data.columns[r] for r in roles])


# --------------------------------------------------------------------------
# the four steps, per replication


def _in_replication(k: int, fn, *args):
    try:
        return fn(*args)
    except CausalEmbedError as e:
        err = type(e)(f"replication {k}: {e}")
        raise err from e


def generate_replication(cfg: ExperimentConfig, k: int) -> None:
    out = Path(cfg.output_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    data = _in_replication(k, generate_data, cfg, k)
    data.to_csv(_data_path(out, k))
    log.info("replication %d: wrote %d rows", k, data.n)


def load_data(cfg: ExperimentConfig, k: int) -> ColumnarDataset:
    path = _data_path(Path(cfg.output_dir), k)
    if not path.exists():
        raise DataError(f"{path}: missing; run 'generate' first")
    return ColumnarDataset.from_csv(path, required=("treatment", "outcome"))


def train_replication(cfg: ExperimentConfig, k: int) -> None:
    out = Path(cfg.output_dir)
    data = _in_replication(k, load_data, cfg, k)
    queries = build_queries(cfg)
    mdir = _model_dir(out, k)
    mdir.mkdir(parents=True, exist_ok=True)
    prints = {"data": data_fingerprint(data)}
    for method in methods(cfg):
        model, regs = _in_replication(k, fit_models, cfg, k, data, method, queries)
        write_json(mdir / f"{method}.stage1.json", model.to_dict())
        prints[f"{method}.stage1"] = model.fingerprint()
        for reg in regs:
            write_json(mdir / _reg_name(method, reg), reg.to_dict())
            prints[_reg_name(method, reg)[: -len(".json")]] = reg.fingerprint()
        log.info("replication %d: trained %s", k, method)
    write_json(mdir / "fingerprints.json", prints)


def load_models(cfg: ExperimentConfig, k: int, method: str, data: ColumnarDataset,
                queries: list[Query]) -> tuple[StageOneModel, list[EmbeddingRegressor]]:
    mdir = _model_dir(Path(cfg.output_dir), k)
    path = mdir / f"{method}.stage1.json"
    if not path.exists():
        raise DataError(f"{path}: missing; run 'train' first")
    model = StageOneModel.from_dict(json.loads(path.read_text()))
    regs = []
    for cond, target in needed_regressors(model.roles, queries):
        name = f"{method}.stage2.{'+'.join(cond)}--{'+'.join(target)}.json"
        rpath = mdir / name
        if not rpath.exists():
            raise DataError(f"{rpath}: missing; run 'train' first")
        regs.append(EmbeddingRegressor.from_dict(json.loads(rpath.read_text())))
    return model, regs


def estimate_replication(cfg: ExperimentConfig, k: int, queries: list[Query] | None = None) -> None:
    out = Path(cfg.output_dir)
    queries = build_queries(cfg) if queries is None else queries
    data = _in_replication(k, load_data, cfg, k)
    rows = []
    for method in methods(cfg):
        model, regs = _in_replication(k, load_models, cfg, k, method, data, queries)
        rows.extend(_in_replication(k, estimate_rows, cfg, k, method, data, model, regs, queries))
    write_rows(out / f"replication_{k}.csv", REPORT_COLUMNS, rows)


def _stats(values: list[float]) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=np.float64)
    if np.all(np.isnan(v)):
        return math.nan, math.nan, math.nan
    mean = math.fsum(v) / len(v)
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
    return mean, float(np.median(v)), se


def aggregate(rows: list[dict]) -> list[dict]:
    """Per (method, query) summaries plus an ``ALL`` row per method.

    The ``ALL`` row first averages errors over queries within each
    replication, then summarises those per-replication values.
    """
    out = []
    by_method: dict[str, dict[str, list[dict]]] = {}
    for r in rows:
        by_method.setdefault(r["method"], {}).setdefault(r["query"], []).append(r)
    for method in sorted(by_method, key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS)):
        per_query = by_method[method]
        for label in sorted(per_query):
            group = sorted(per_query[label], key=lambda r: r["replication"])
            se = _stats([r["squared_error"] for r in group])
            ae = _stats([r["absolute_error"] for r in group])
            out.append({
                "method": method, "query": label, "parameter": group[0]["parameter"], "point": group[0]["point"],
                "replications": len(group),
                "mean_estimate": math.fsum(r["estimate"] for r in group) / len(group),
                "truth": group[0]["truth"],
                "mean_squared_error": se[0], "median_squared_error": se[1], "stderr_squared_error": se[2],
                "mean_absolute_error": ae[0], "median_absolute_error": ae[1], "stderr_absolute_error": ae[2],
            })
        reps: dict[int, list[dict]] = {}
        for group in per_query.values():
            for r in group:
                reps.setdefault(r["replication"], []).append(r)
        mse = [math.fsum(r["squared_error"] for r in reps[k]) / len(reps[k]) for k in sorted(reps)]
        mae = [math.fsum(r["absolute_error"] for r in reps[k]) / len(reps[k]) for k in sorted(reps)]
        se, ae = _stats(mse), _stats(mae)
        est = [math.fsum(r["estimate"] for r in reps[k]) / len(reps[k]) for k in sorted(reps)]
        out.append({
            "method": method, "query": "ALL", "parameter": "", "point": "", "replications": len(reps),
            "mean_estimate": math.fsum(est) / len(est), "truth": math.nan,
            "mean_squared_error": se[0], "median_squared_error": se[1], "stderr_squared_error": se[2],
            "mean_absolute_error": ae[0], "median_absolute_error": ae[1], "stderr_absolute_error": ae[2],
        })
    return out


def report(cfg: ExperimentConfig) -> list[dict]:
    """Aggregate every replication file and write the run manifest."""
    out = Path(cfg.output_dir)
    rows = []
    prints = {}
    for k in range(cfg.replications):
        path = out / f"replication_{k}.csv"
        if not path.exists():
            raise DataError(f"{path}: missing; run 'estimate' first")
        rows.extend(read_rows(path))
        fpath = _model_dir(out, k) / "fingerprints.json"
        prints[str(k)] = json.loads(fpath.read_text()) if fpath.exists() else {}
    agg = aggregate(rows)
    write_rows(out / "aggregate.csv", AGGREGATE_COLUMNS, agg)
    write_json(out / "run_manifest.json", {
        "format": "causal-embed/run-manifest",
        "config": cfg.echo(),
        "replication_seeds": {str(k): replication_seed(cfg, k) for k in range(cfg.replications)},
        "fingerprints": prints,
        "versions": versions(),
    })
    return agg


def versions() -> dict[str, str]:
    import scipy
    import yaml

    return {
        "causal_embed": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


# --------------------------------------------------------------------------
# drivers


def _evaluate_one(cfg: ExperimentConfig, k: int) -> None:
    generate_replication(cfg, k)
    train_replication(cfg, k)
    estimate_replication(cfg, k)


def for_each_replication(cfg: ExperimentConfig, fn) -> None:
    ks = list(range(cfg.replications))
    if cfg.workers == 1 or len(ks) == 1:
        for k in ks:
            fn(cfg, k)
        return
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(fn, cfg, k) for k in ks]
        for f in futures:
            f.result()


def run_generate(cfg: ExperimentConfig) -> None:
    for_each_replication(cfg, generate_replication)


def run_train(cfg: ExperimentConfig) -> None:
    for_each_replication(cfg, train_replication)


def run_estimate(cfg: ExperimentConfig) -> None:
    for_each_replication(cfg, estimate_replication)


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Full pipeline; returns the aggregate rows."""
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    for_each_replication(cfg, _evaluate_one)
    return report(cfg)
