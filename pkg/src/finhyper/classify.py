"""Tag ranking for term feature vectors.

Three rankers share one output shape: cosine similarity against label
vectors, multinomial logistic regression probabilities, and random-forest
mean leaf distributions. Every prediction is a full descending ranking
over the model's tag set; equal scores are broken by ascending canonical
tag index, so rankings are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tags import CANONICAL_TAGS, canonical_index

MODEL_FORMAT = "finhyper-model"
MODEL_VERSION = 1


@dataclass
class RankedPrediction:
    """Full tag ranking for one term, best first."""

    term: str
    ranking: list[tuple[str, float]]

    @property
    def top(self) -> str:
        return self.ranking[0][0]

    def rank_of(self, tag: str) -> int:
        """1-based position of ``tag``; raises if absent."""
        for i, (name, _) in enumerate(self.ranking, start=1):
            if name == tag:
                return i
        raise ValueError(f"tag {tag!r} absent from ranking for {self.term!r}")


def rank_scores(scores: dict[str, float], term: str = "") -> RankedPrediction:
    """Order scores descending, ties broken by canonical tag index."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], canonical_index(kv[0])))
    return RankedPrediction(term=term, ranking=[(t, float(s)) for t, s in ordered])


def cosine_rank(term_vec, label_vecs: dict[str, np.ndarray], term: str = "") -> RankedPrediction:
    """Rank tags by cosine similarity; zero-norm vectors score 0 everywhere."""
    term_vec = np.asarray(term_vec, dtype=np.float64)
    scores = {}
    tnorm = float(np.linalg.norm(term_vec))
    for tag, vec in label_vecs.items():
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != term_vec.shape:
            raise ValueError(
                f"label vector for {tag!r} has shape {vec.shape}, expected {term_vec.shape}"
            )
        vnorm = float(np.linalg.norm(vec))
        if tnorm == 0.0 or vnorm == 0.0:
            scores[tag] = 0.0
        else:
            scores[tag] = float(term_vec @ vec) / (tnorm * vnorm)
    return rank_scores(scores, term=term)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(W, b, X, y_idx, l2: float = 0.0) -> float:
    """Mean softmax cross-entropy plus (l2/2)*||W||^2 (biases unpenalized)."""
    X = np.asarray(X, dtype=np.float64)
    p = softmax(X @ np.asarray(W, dtype=np.float64).T + np.asarray(b, dtype=np.float64))
    n = X.shape[0]
    nll = -np.log(p[np.arange(n), y_idx] + 1e-300).mean()
    return float(nll + 0.5 * l2 * np.sum(np.asarray(W) ** 2))


def cross_entropy_grads(W, b, X, y_idx, l2: float = 0.0):
    """Analytic gradients of :func:`cross_entropy_loss` w.r.t. W and b."""
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    p = softmax(X @ W.T + np.asarray(b, dtype=np.float64))
    p[np.arange(n), y_idx] -= 1.0
    g_w = p.T @ X / n + l2 * W
    g_b = p.mean(axis=0)
    return g_w, g_b


def _tags_for(labels) -> list[str]:
    distinct = sorted(set(labels), key=canonical_index)
    if len(distinct) < 2:
        raise ValueError(f"need at least 2 distinct labels, got {distinct}")
    return distinct


@dataclass
class LogRegParams:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int | None = 32  # None = full batch
    l2: float = 1e-4
    seed: int = 0


@dataclass
class LogRegModel:
    weights: np.ndarray  # (num_tags, feature_dim)
    biases: np.ndarray  # (num_tags,)
    tags: list[str]
    l2: float
    metadata: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]


def train_logreg(features, labels, hp: LogRegParams | None = None, tags=None) -> LogRegModel:
    """Mini-batch gradient descent on mean cross-entropy + L2.

    Deterministic under ``hp.seed`` (the seed only drives batch shuffling;
    parameters start at zero).
    """
    hp = hp or LogRegParams()
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("features and labels disagree in length")
    tags = list(tags) if tags is not None else _tags_for(labels)
    if len(set(labels)) < 2:
        raise ValueError("single-class input: need at least 2 distinct labels")
    tag_index = {t: i for i, t in enumerate(tags)}
    y = np.array([tag_index[t] for t in labels], dtype=np.int64)

    n, d = X.shape
    k = len(tags)
    W = np.zeros((k, d))
    b = np.zeros(k)
    rng = np.random.default_rng(hp.seed)
    batch = n if hp.batch_size is None else min(hp.batch_size, n)

    for epoch in range(hp.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            g_w, g_b = cross_entropy_grads(W, b, X[idx], y[idx], hp.l2)
            W -= hp.learning_rate * g_w
            b -= hp.learning_rate * g_b
        loss = cross_entropy_loss(W, b, X, y, hp.l2)
        if not np.isfinite(loss):
            raise ValueError(f"non-finite training loss at epoch {epoch + 1}")

    final_loss = cross_entropy_loss(W, b, X, y, hp.l2)
    train_acc = float((np.argmax(X @ W.T + b, axis=1) == y).mean())
    meta = {
        "epochs": hp.epochs,
        "learning_rate": hp.learning_rate,
        "batch_size": hp.batch_size,
        "seed": hp.seed,
        "final_loss": final_loss,
        "train_accuracy": train_acc,
    }
    return LogRegModel(weights=W, biases=b, tags=tags, l2=hp.l2, metadata=meta)


@dataclass
class ForestParams:
    num_trees: int = 100
    min_samples_leaf: int = 1
    max_features: str | int = "sqrt"  # "sqrt", "all", or an explicit count
    bootstrap: bool = True
    seed: int = 0
    workers: int = 1


@dataclass
class ForestModel:
    trees: list[dict]  # nested split/leaf dicts, JSON-shaped
    tags: list[str]
    dimension: int
    params: ForestParams
    in_bag: list[list[int]]  # bootstrap sample indices per tree
    metadata: dict = field(default_factory=dict)


def _gini(counts) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _resolve_max_features(policy, d: int) -> int:
    if policy == "sqrt":
        return min(d, int(np.ceil(np.sqrt(d))))
    if policy == "all":
        return d
    m = int(policy)
    if m < 1:
        raise ValueError("max_features must be >= 1")
    return min(d, m)


def _grow_tree(X, y, k: int, rng, params: ForestParams) -> dict:
    m = _resolve_max_features(params.max_features, X.shape[1])
    msl = params.min_samples_leaf

    def grow(idx):
        counts = np.bincount(y[idx], minlength=k)
        if len(idx) < 2 * msl or np.count_nonzero(counts) <= 1:
            return {"counts": counts.tolist()}
        parent_gini = _gini(counts)
        n_node = len(idx)
        features = rng.choice(X.shape[1], size=m, replace=False)
        best = None  # (gain, feature, threshold)
        for f in features:
            values = X[idx, f]
            order = np.argsort(values, kind="stable")
            sorted_vals = values[order]
            sorted_y = y[idx][order]
            one_hot = np.zeros((n_node, k))
            one_hot[np.arange(n_node), sorted_y] = 1.0
            left_counts = np.cumsum(one_hot, axis=0)
            # splits between positions i and i+1, only where the value changes
            cut = np.nonzero(sorted_vals[:-1] < sorted_vals[1:])[0]
            cut = cut[(cut + 1 >= msl) & (n_node - cut - 1 >= msl)]
            if len(cut) == 0:
                continue
            n_left = (cut + 1).astype(np.float64)
            n_right = n_node - n_left
            lc = left_counts[cut]
            rc = counts[None, :] - lc
            gini_left = 1.0 - np.sum((lc / n_left[:, None]) ** 2, axis=1)
            gini_right = 1.0 - np.sum((rc / n_right[:, None]) ** 2, axis=1)
            weighted = (n_left * gini_left + n_right * gini_right) / n_node
            gains = parent_gini - weighted
            at = int(np.argmax(gains))
            if best is None or gains[at] > best[0] + 1e-15:
                threshold = 0.5 * (sorted_vals[cut[at]] + sorted_vals[cut[at] + 1])
                best = (float(gains[at]), int(f), float(threshold))
        if best is None or best[0] <= 0.0:
            return {"counts": counts.tolist()}
        _, f, threshold = best
        mask = X[idx, f] <= threshold
        return {
            "feature": f,
            "threshold": threshold,
            "left": grow(idx[mask]),
            "right": grow(idx[~mask]),
        }

    return grow(np.arange(X.shape[0]))


def train_forest(features, labels, hp: ForestParams | None = None, tags=None) -> ForestModel:
    """Bootstrap-aggregated Gini trees; per-tree seeds derive from ``hp.seed``."""
    hp = hp or ForestParams()
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if len(set(labels)) < 2:
        raise ValueError("single-class input: need at least 2 distinct labels")
    tags = list(tags) if tags is not None else _tags_for(labels)
    tag_index = {t: i for i, t in enumerate(tags)}
    y = np.array([tag_index[t] for t in labels], dtype=np.int64)
    n = X.shape[0]
    k = len(tags)

    child_seeds = np.random.SeedSequence(hp.seed).spawn(hp.num_trees)

    def build(seq):
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, n, size=n) if hp.bootstrap else np.arange(n)
        tree = _grow_tree(X[idx], y[idx], k, rng, hp)
        return tree, idx.tolist()

    if hp.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=hp.workers) as pool:
            built = list(pool.map(build, child_seeds))
    else:
        built = [build(seq) for seq in child_seeds]

    trees = [t for t, _ in built]
    in_bag = [idx for _, idx in built]
    return ForestModel(
        trees=trees,
        tags=tags,
        dimension=X.shape[1],
        params=hp,
        in_bag=in_bag,
        metadata={"num_samples": n},
    )


def _tree_distribution(node: dict, x) -> np.ndarray:
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    counts = np.asarray(node["counts"], dtype=np.float64)
    return counts / counts.sum()


def _forest_proba(model: ForestModel, x) -> np.ndarray:
    dists = np.stack([_tree_distribution(tree, x) for tree in model.trees])
    return dists.mean(axis=0)


def predict_proba(model, feature, term: str = "") -> RankedPrediction:
    """Probability ranking for one feature vector under either model kind."""
    x = np.asarray(feature, dtype=np.float64)
    if isinstance(model, LogRegModel):
        if x.shape != (model.dimension,):
            raise ValueError(f"feature has shape {x.shape}, model expects ({model.dimension},)")
        p = softmax(model.weights @ x + model.biases)
    elif isinstance(model, ForestModel):
        if x.shape != (model.dimension,):
            raise ValueError(f"feature has shape {x.shape}, model expects ({model.dimension},)")
        p = _forest_proba(model, x)
    else:
        raise TypeError(f"unsupported model type: {type(model).__name__}")
    return rank_scores(dict(zip(model.tags, p.tolist())), term=term)


def predict_batch(model, features, terms=None) -> list[RankedPrediction]:
    X = np.asarray(features, dtype=np.float64)
    terms = list(terms) if terms is not None else [""] * X.shape[0]
    return [predict_proba(model, X[i], term=terms[i]) for i in range(X.shape[0])]


def oob_accuracy(model: ForestModel, features, labels) -> float:
    """Accuracy of out-of-bag predictions over samples left out by >= 1 tree."""
    X = np.asarray(features, dtype=np.float64)
    tag_index = {t: i for i, t in enumerate(model.tags)}
    y = np.array([tag_index[t] for t in labels], dtype=np.int64)
    n = X.shape[0]
    hits = 0
    counted = 0
    in_bag_sets = [set(idx) for idx in model.in_bag]
    for i in range(n):
        dists = [
            _tree_distribution(tree, X[i])
            for tree, bag in zip(model.trees, in_bag_sets)
            if i not in bag
        ]
        if not dists:
            continue
        p = np.mean(dists, axis=0)
        pred = rank_scores(dict(zip(model.tags, p.tolist()))).top
        counted += 1
        hits += int(pred == model.tags[y[i]].__str__() or pred == model.tags[y[i]])
    if counted == 0:
        raise ValueError("no out-of-bag samples (was the forest trained without bootstrap?)")
    return hits / counted


def _check_tags(tags) -> list[str]:
    tags = [str(t) for t in tags]
    if len(set(tags)) != len(tags):
        raise ValueError("persisted tag list contains duplicates")
    indices = [canonical_index(t) for t in tags]  # raises for non-canonical tags
    if indices != sorted(indices):
        raise ValueError("persisted tag list is not in canonical order")
    return tags


def save_model(model, path, provenance: dict | None = None) -> None:
    """Persist either model kind as a self-describing JSON container."""
    if isinstance(model, LogRegModel):
        payload = {
            "kind": "logreg",
            "dimension": model.dimension,
            "tags": model.tags,
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
            "l2": model.l2,
            "metadata": model.metadata,
        }
    elif isinstance(model, ForestModel):
        payload = {
            "kind": "forest",
            "dimension": model.dimension,
            "tags": model.tags,
            "trees": model.trees,
            "in_bag": model.in_bag,
            "params": {
                "num_trees": model.params.num_trees,
                "min_samples_leaf": model.params.min_samples_leaf,
                "max_features": model.params.max_features,
                "bootstrap": model.params.bootstrap,
                "seed": model.params.seed,
                "workers": model.params.workers,
            },
            "metadata": model.metadata,
        }
    else:
        raise TypeError(f"unsupported model type: {type(model).__name__}")
    payload["format"] = MODEL_FORMAT
    payload["version"] = MODEL_VERSION
    if provenance:
        payload["provenance"] = provenance
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    """Load a persisted model; validates format and tag-list consistency.

    The tag list must be a unique, canonical-order subset of the 17
    canonical tags (and therefore equals the full canonical list whenever
    all 17 are present).
    """
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} container")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {payload.get('version')!r}")
    tags = _check_tags(payload["tags"])
    if len(tags) == len(CANONICAL_TAGS) and tags != list(CANONICAL_TAGS):
        raise ValueError(f"{path}: full tag list must equal the canonical 17")
    kind = payload.get("kind")
    if kind == "logreg":
        return LogRegModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            biases=np.asarray(payload["biases"], dtype=np.float64),
            tags=tags,
            l2=float(payload["l2"]),
            metadata=payload.get("metadata", {}),
        )
    if kind == "forest":
        p = payload["params"]
        params = ForestParams(
            num_trees=int(p["num_trees"]),
            min_samples_leaf=int(p["min_samples_leaf"]),
            max_features=p["max_features"],
            bootstrap=bool(p["bootstrap"]),
            seed=int(p["seed"]),
            workers=int(p["workers"]),
        )
        return ForestModel(
            trees=payload["trees"],
            tags=tags,
            dimension=int(payload["dimension"]),
            params=params,
            in_bag=[list(map(int, bag)) for bag in payload["in_bag"]],
            metadata=payload.get("metadata", {}),
        )
    raise ValueError(f"{path}: unknown model kind {kind!r}")
