"""Oversampling and cleaning: SMOTE, ENN, Tomek links and their hybrids.

Every resampler is a pure function of (dataset, config): randomness comes only
from ``config.seed``, forked per class so the order in which classes are
processed does not matter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .dataset import CLASS_ORDER, Dataset, class_name, make_rng
from .neighbors import knn_table, nearest_enemy_distances

Targets = Literal["majority"] | dict


@dataclass(frozen=True)
class ResamplerConfig:
    """Parameters shared by the resamplers.

    k_neighbors
        Neighborhood size used to pick interpolation partners, and by the
        edited radius variant to decide whether a sample is isolated.
    edit_k
        Neighborhood size of the nearest-neighbor editing rule.
    targets
        ``"majority"`` (grow every minority class to the majority count) or a
        mapping class code -> desired count.
    literal_abs
        Interpolate with ``|neighbor - parent|`` instead of the signed
        difference. Points may then leave the parent/neighbor segment.
    """

    k_neighbors: int = 5
    edit_k: int = 3
    targets: Targets = "majority"
    seed: int = 0
    enn_scope: Literal["all", "minority"] = "all"
    small_disjunct_policy: Literal["preserve", "discard"] = "preserve"
    literal_abs: bool = False

    def __post_init__(self):
        if self.k_neighbors < 1 or self.edit_k < 1:
            raise ValueError("neighbor counts must be >= 1")
        if self.enn_scope not in ("all", "minority"):
            raise ValueError(f"unknown enn_scope {self.enn_scope!r}")
        if self.small_disjunct_policy not in ("preserve", "discard"):
            raise ValueError(f"unknown small_disjunct_policy {self.small_disjunct_policy!r}")
        if self.targets != "majority" and not isinstance(self.targets, dict):
            raise ValueError("targets must be 'majority' or a mapping of class code to count")

    def describe(self) -> dict[str, str]:
        out = {}
        for key, value in asdict(self).items():
            if key == "targets" and isinstance(value, dict):
                value = ",".join(f"{class_name(c)}:{n}" for c, n in sorted(value.items()))
            out[key] = str(value).lower() if isinstance(value, bool) else str(value)
        return out


@dataclass
class SyntheticBatch:
    """Generated rows and their provenance.

    ``parent_index`` and ``neighbor_index`` point into the dataset passed to
    the resampler; ``neighbor_index`` is -1 for rows drawn around a single
    sample. ``kept`` marks rows that survived any later cleaning stage.
    """

    rows: np.ndarray
    labels: np.ndarray
    parent_index: np.ndarray
    neighbor_index: np.ndarray
    delta: np.ndarray
    kept: np.ndarray
    method: str = "none"
    seed: int = 0
    params: dict[str, str] = field(default_factory=dict)
    counts_before: dict[float, int] = field(default_factory=dict)
    counts_after: dict[float, int] = field(default_factory=dict)
    removed: dict[str, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, n_features: int = 4, **meta) -> SyntheticBatch:
        return cls(
            rows=np.empty((0, n_features)),
            labels=np.empty(0),
            parent_index=np.empty(0, dtype=np.intp),
            neighbor_index=np.empty(0, dtype=np.intp),
            delta=np.empty(0),
            kept=np.empty(0, dtype=bool),
            **meta,
        )

    def __len__(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def concat(cls, parts: list[SyntheticBatch], n_features: int) -> SyntheticBatch:
        if not parts:
            return cls.empty(n_features)
        return cls(
            rows=np.vstack([p.rows for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            parent_index=np.concatenate([p.parent_index for p in parts]),
            neighbor_index=np.concatenate([p.neighbor_index for p in parts]),
            delta=np.concatenate([p.delta for p in parts]),
            kept=np.concatenate([p.kept for p in parts]),
        )


def _counts(labels) -> dict[float, int]:
    labels = np.asarray(labels)
    return {c: int(np.count_nonzero(labels == c)) for c in CLASS_ORDER}


def majority_class(ds: Dataset) -> float:
    classes = ds.classes()
    if not classes:
        raise ValueError("empty dataset has no majority class")
    return max(classes, key=lambda c: (np.count_nonzero(ds.labels == c), -c))


def resolve_targets(ds: Dataset, targets: Targets) -> dict[float, int]:
    counts = {c: int(np.count_nonzero(ds.labels == c)) for c in ds.classes()}
    if targets == "majority":
        top = max(counts.values())
        return {c: top for c in counts}
    resolved = dict(counts)
    for code, n in targets.items():
        code = float(code)
        if code not in counts:
            raise ValueError(f"target given for absent class {class_name(code)}")
        if int(n) < counts[code]:
            raise ValueError(f"target {n} for {class_name(code)} is below its current count {counts[code]}")
        resolved[code] = int(n)
    return resolved


def _class_stream(code: float) -> int:
    return int(round(float(code) * 2))


def _round_robin(n_parents: int, n_new: int, rng: np.random.Generator) -> np.ndarray:
    """Cycle through all parents, reshuffling the order at the start of each pass."""
    epochs = -(-n_new // n_parents) if n_new else 0
    order = [rng.permutation(n_parents) for _ in range(epochs)]
    return np.concatenate(order)[:n_new] if order else np.empty(0, dtype=np.intp)


def interpolate(p, q, delta, literal_abs: bool = False) -> np.ndarray:
    """Rows p + (q - p) * delta (or p + |q - p| * delta with `literal_abs`)."""
    p, q = np.atleast_2d(np.asarray(p, dtype=float)), np.atleast_2d(np.asarray(q, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    step = np.abs(q - p) if literal_abs else q - p
    out = p + step * delta[:, None]
    if not literal_abs:
        # guard against the last-ulp overshoot of p + (q - p) * delta
        out = np.clip(out, np.minimum(p, q), np.maximum(p, q))
    return out


def smote(ds: Dataset, label: float, cfg: ResamplerConfig, target: int | None = None
          ) -> tuple[Dataset, SyntheticBatch]:
    """Grow class `label` to its target by interpolating between same-class neighbors.

    new = parent + (neighbor - parent) * delta, delta ~ U[0, 1), one scalar
    per generated row. Parents are visited round-robin so the target count is
    hit exactly; the neighbor is drawn uniformly from the parent's
    ``k_neighbors`` nearest same-class rows. Synthetic rows are appended
    after the untouched originals.
    """
    label = float(label)
    members = ds.class_indices(label)
    m = members.shape[0]
    if m < 2:
        raise ValueError(f"class {class_name(label)} needs at least 2 members for SMOTE, has {m}")
    if cfg.k_neighbors > m - 1:
        raise ValueError(f"k_neighbors={cfg.k_neighbors} exceeds {class_name(label)} size minus one ({m - 1})")
    if target is None:
        target = resolve_targets(ds, cfg.targets).get(label, m)
    if target < m:
        raise ValueError(f"target {target} is below the current {class_name(label)} count {m}")
    n_new = target - m
    rng = make_rng(cfg.seed, _class_stream(label))
    batch = SyntheticBatch.empty(ds.n_features)
    if n_new:
        X = ds.features[members]
        table = knn_table(X, cfg.k_neighbors)
        parents = _round_robin(m, n_new, rng)
        picks = rng.integers(0, cfg.k_neighbors, size=n_new)
        delta = rng.random(n_new)
        partners = table[parents, picks]
        rows = interpolate(X[parents], X[partners], delta, cfg.literal_abs)
        batch = SyntheticBatch(rows, np.full(n_new, label), members[parents], members[partners],
                               delta, np.ones(n_new, dtype=bool))
    out = ds.append(batch.rows, batch.labels)
    return out, _annotate(batch, "smote", cfg, ds, out, {})


def oversample(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    """Apply `smote` to every class whose target exceeds its count."""
    targets = resolve_targets(ds, cfg.targets)
    parts = []
    for code in sorted(targets):
        if targets[code] > np.count_nonzero(ds.labels == code):
            parts.append(smote(ds, code, cfg, targets[code])[1])
    batch = SyntheticBatch.concat(parts, ds.n_features)
    out = ds.append(batch.rows, batch.labels)
    return out, _annotate(batch, "smote", cfg, ds, out, {})


def knn_vote(labels: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Plurality label among each row's neighbors; ties go to the lowest class code."""
    codes = np.unique(labels)
    votes = np.stack([(labels[neighbors] == c).sum(axis=1) for c in codes], axis=1)
    return codes[np.argmax(votes, axis=1)]


def enn_edit(ds: Dataset, k: int = 3, scope: str = "all", exempt=None) -> tuple[Dataset, np.ndarray]:
    """Edited nearest neighbor cleaning.

    A candidate row is removed when the plurality label of its k nearest
    neighbors (itself excluded, ties to the lowest code) differs from its own
    label. All decisions are taken against the input dataset and applied at
    once. With ``scope="minority"`` only rows outside the majority class are
    candidates. Rows flagged in `exempt` are never removed.

    Returns the cleaned dataset and the sorted indices of removed rows.
    """
    n = len(ds)
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the row count {n}")
    if scope not in ("all", "minority"):
        raise ValueError(f"unknown scope {scope!r}")
    predicted = knn_vote(ds.labels, knn_table(ds, k))
    remove = predicted != ds.labels
    if scope == "minority":
        remove &= ds.labels != majority_class(ds)
    if exempt is not None:
        remove &= ~np.asarray(exempt, dtype=bool)
    removed = np.flatnonzero(remove)
    return ds.subset(np.flatnonzero(~remove)), removed


def tomek_links(ds: Dataset) -> list[tuple[int, int]]:
    """Cross-class pairs that are each other's single nearest neighbor, as (i, j) with i < j."""
    if len(ds) < 2 or len(ds.classes()) < 2:
        return []
    nn = knn_table(ds, 1)[:, 0]
    links = []
    for i, j in enumerate(nn):
        if i < j and nn[j] == i and ds.labels[i] != ds.labels[j]:
            links.append((i, int(j)))
    return links


def smote_tomek(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    """Drop majority-class members of Tomek links, then oversample the minority classes."""
    major = majority_class(ds)
    drop = sorted({i for link in tomek_links(ds) for i in link if ds.labels[i] == major})
    keep = np.setdiff1d(np.arange(len(ds)), drop)
    cleaned = ds.subset(keep)
    out, batch = oversample(cleaned, cfg)
    batch.parent_index = keep[batch.parent_index]
    batch.neighbor_index = keep[batch.neighbor_index]
    return out, _annotate(batch, "smote-tomek", cfg, ds, out, {"tomek": len(drop)})


def _clean_augmented(ds: Dataset, batch: SyntheticBatch, k: int, exempt=None) -> tuple[Dataset, int, int]:
    augmented = ds.append(batch.rows, batch.labels)
    cleaned, removed = enn_edit(augmented, k=k, scope="all", exempt=exempt)
    synthetic = removed[removed >= len(ds)] - len(ds)
    batch.kept[synthetic] = False
    return cleaned, int(np.count_nonzero(removed < len(ds))), synthetic.shape[0]


def radius_smote_paper(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    """SMOTE to the targets, then drop every row misclassified by its nearest neighbors.

    The editing pass runs over the full augmented set (originals and
    synthetics alike) with ``cfg.edit_k`` neighbors (3 by default).
    """
    _, batch = oversample(ds, cfg)
    out, orig_removed, synth_removed = _clean_augmented(ds, batch, cfg.edit_k)
    removed = {"enn_original": orig_removed, "enn_synthetic": synth_removed}
    return out, _annotate(batch, "radius-smote", cfg, ds, out, removed)


@dataclass(frozen=True)
class SampleTypes:
    """Per-row diagnosis of one minority class used by `edited_radius_smote`."""

    members: np.ndarray
    safe: np.ndarray
    radius: np.ndarray


def classify_minority(ds: Dataset, label: float, k: int) -> SampleTypes:
    """Mark each member of `label` as safe (some of its k neighbors share its
    label) or a small disjunct (all k are enemies), with its safe radius."""
    members = ds.class_indices(label)
    table = knn_table(ds, min(k, len(ds) - 1), rows=members)
    safe = (ds.labels[table] == label).any(axis=1)
    radius = nearest_enemy_distances(ds, rows=members)
    return SampleTypes(members, safe, radius)


def _ball(center: np.ndarray, radius: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, d = center.shape
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    scale = rng.random(n) ** (1.0 / d)
    return center + direction * (radius * scale)[:, None], scale


def _radius_generate(ds: Dataset, label: float, n_new: int, cfg: ResamplerConfig
                     ) -> tuple[SyntheticBatch, SampleTypes]:
    info = classify_minority(ds, label, cfg.k_neighbors)
    members, safe = info.members, info.safe
    eligible = np.flatnonzero(safe) if cfg.small_disjunct_policy == "discard" else np.arange(members.shape[0])
    if n_new == 0:
        return SyntheticBatch.empty(ds.n_features), info
    if eligible.shape[0] == 0:
        raise ValueError(f"class {class_name(label)} has no sample eligible for generation")
    rng = make_rng(cfg.seed, _class_stream(label))
    parents = eligible[_round_robin(eligible.shape[0], n_new, rng)]
    X = ds.features[members]
    rows = np.empty((n_new, ds.n_features))
    partner = np.full(n_new, -1, dtype=np.intp)
    delta = np.empty(n_new)

    is_safe = safe[parents]
    n_safe = int(is_safe.sum())
    if n_safe:
        # interpolation partners come from the parent's own class
        kk = cfg.k_neighbors
        if kk > members.shape[0] - 1:
            raise ValueError(f"k_neighbors={kk} exceeds {class_name(label)} size minus one")
        table = knn_table(X, kk)
        p_local = parents[is_safe]
        picks = table[p_local, rng.integers(0, kk, size=n_safe)]
        d = rng.random(n_safe)
        step = X[picks] - X[p_local]
        length = np.linalg.norm(step, axis=1)
        r = info.radius[p_local]
        shrink = np.where(length > r, r / np.where(length > 0, length, 1.0), 1.0)
        rows[is_safe] = X[p_local] + step * (shrink * d)[:, None]
        partner[is_safe] = members[picks]
        delta[is_safe] = d
    if n_safe < n_new:
        p_local = parents[~is_safe]
        rows[~is_safe], delta[~is_safe] = _ball(X[p_local], info.radius[p_local] / 2.0, rng)
    batch = SyntheticBatch(rows, np.full(n_new, label), members[parents], partner, delta,
                           np.ones(n_new, dtype=bool))
    return batch, info


def edited_radius_smote(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    """Safe-radius oversampling that keeps small disjuncts, followed by ENN cleanup.

    For each minority class:

    1. every member gets a safe radius, the distance to its nearest sample of
       another class;
    2. a member is *safe* when at least one of its ``k_neighbors`` nearest
       neighbors shares its label, otherwise it is a *small disjunct*;
    3. safe members interpolate toward one of their same-class neighbors, with
       the step length clamped to the safe radius;
    4. small disjuncts (``policy="preserve"``) spawn points uniformly in a ball
       of half their safe radius; with ``policy="discard"`` they spawn nothing.

    Finally ENN (``edit_k`` neighbors, all classes) cleans the combined set.
    Under "preserve", small-disjunct members and their spawned points are
    exempt from that cleanup, so isolated minority pockets are not erased as
    noise.
    """
    targets = resolve_targets(ds, cfg.targets)
    major = majority_class(ds)
    parts, protected = [], []
    for code in sorted(targets):
        n_new = targets[code] - int(np.count_nonzero(ds.labels == code))
        if code == major and n_new == 0:
            continue
        part, info = _radius_generate(ds, code, n_new, cfg)
        parts.append(part)
        if cfg.small_disjunct_policy == "preserve":
            protected.extend(info.members[~info.safe].tolist())
    batch = SyntheticBatch.concat(parts, ds.n_features)
    exempt = np.zeros(len(ds) + len(batch), dtype=bool)
    exempt[protected] = True
    if cfg.small_disjunct_policy == "preserve" and len(batch):
        exempt[len(ds):] = batch.neighbor_index < 0
    out, orig_removed, synth_removed = _clean_augmented(ds, batch, cfg.edit_k, exempt)
    removed = {"enn_original": orig_removed, "enn_synthetic": synth_removed}
    return out, _annotate(batch, "edited-radius-smote", cfg, ds, out, removed)


def enn_only(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    out, removed = enn_edit(ds, k=cfg.edit_k, scope=cfg.enn_scope)
    return out, _annotate(SyntheticBatch.empty(ds.n_features), "enn", cfg, ds, out,
                          {"enn_original": removed.shape[0]})


def no_resampling(ds: Dataset, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    return ds, _annotate(SyntheticBatch.empty(ds.n_features), "none", cfg, ds, ds, {})


METHODS = {
    "smote": oversample,
    "smote-tomek": smote_tomek,
    "radius-smote": radius_smote_paper,
    "edited-radius-smote": edited_radius_smote,
    "enn": enn_only,
    "none": no_resampling,
}


def resample(ds: Dataset, method: str, cfg: ResamplerConfig) -> tuple[Dataset, SyntheticBatch]:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}") from None
    return fn(ds, cfg)


def _annotate(batch: SyntheticBatch, method: str, cfg: ResamplerConfig, before: Dataset,
              after: Dataset, removed: dict[str, int]) -> SyntheticBatch:
    batch.method = method
    batch.seed = cfg.seed
    batch.params = cfg.describe()
    batch.counts_before = _counts(before.labels)
    batch.counts_after = _counts(after.labels)
    batch.removed = dict(removed)
    return batch


@dataclass(frozen=True)
class GenerationReport:
    method: str
    seed: int
    params: dict[str, str]
    before: dict[str, int]
    after: dict[str, int]
    added: dict[str, int]
    removed: dict[str, int]

    def to_text(self) -> str:
        lines = [f"method={self.method}", f"seed={self.seed}"]
        lines += [f"param.{k}={v}" for k, v in self.params.items()]
        for section in ("before", "after", "added", "removed"):
            lines += [f"{section}.{k}={v}" for k, v in getattr(self, section).items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> GenerationReport:
        fields: dict = {"params": {}, "before": {}, "after": {}, "added": {}, "removed": {}}
        method, seed = "none", 0
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key == "method":
                method = value
            elif key == "seed":
                seed = int(value)
            else:
                section, _, name = key.partition(".")
                if section == "param":
                    fields["params"][name] = value
                elif section in fields:
                    fields[section][name] = int(value)
                else:
                    raise ValueError(f"unknown report key {key!r}")
        return cls(method, seed, **fields)


def generation_report(batch: SyntheticBatch) -> GenerationReport:
    """Summarize a batch: class counts before/after, rows added, rows removed per stage."""
    names = [class_name(c) for c in CLASS_ORDER]
    kept = batch.labels[batch.kept] if len(batch) else batch.labels
    before = {class_name(c): batch.counts_before.get(c, 0) for c in CLASS_ORDER}
    after = {class_name(c): batch.counts_after.get(c, 0) for c in CLASS_ORDER}
    added = {n: int(np.count_nonzero(kept == c)) for n, c in zip(names, CLASS_ORDER)}
    return GenerationReport(batch.method, batch.seed, dict(batch.params), before, after, added,
                            dict(batch.removed))
