"""Logged-data bandit simulator and dataset ingestion.

On-disk log format (JSON-lines). The first line is a header object, every
following line is one record:

    {"schema": "routing-log/v1",
     "arms": [{"id": "model-a", "name": "Model A"}, ...],
     "tau": 1.0}                                     # tau optional
    {"prompt_id": "p0", "task_id": "gsm8k",
     "scores": [0.9, 0.5], "costs": [1.0, 0.0]}
    ...

Embeddings travel in a sidecar pair next to the log: ``<base>.emb.bin`` is
a flat little-endian float32 buffer, ``<base>.emb.json`` maps prompt_id to
a byte offset and declares ``d_e``.  Vectors are widened to float64 on
load.  When no sidecar is given, a deterministic hash featurizer
synthesizes embeddings (test mode; flagged on the dataset and logged).

A CSV adapter accepts exports with columns
``prompt_id, task_id, score:<arm_id>, cost:<arm_id>`` (one score/cost pair
per arm; arms are taken from the header in column order).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import EvalCapabilityError, SchemaError
from .reward import Arm, ArmSet, Context, Outcome, PreferenceVector, RewardSpec

logger = logging.getLogger(__name__)

SCHEMA_NAME = "routing-log/v1"
HASH_FEATURIZER_DIM = 32
TRAIN_FRACTION = 0.8


# ----------------------------------------------------------------------
# records and datasets
# ----------------------------------------------------------------------

@dataclass
class LoggedRecord:
    """One prompt with full per-arm outcomes; the simulator's unit of replay."""

    prompt_id: str
    task_id: str
    embedding: np.ndarray
    scores: np.ndarray
    costs: np.ndarray

    def outcome(self, arm: int) -> Outcome:
        return Outcome(score=float(self.scores[arm]), cost=float(self.costs[arm]))


def _unit_interval_hash(text: str) -> float:
    """Stable map from a string to [0, 1); same everywhere, forever."""
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") / 2.0**64


def split_of(prompt_id: str, split_seed: int) -> str:
    """Deterministic train/test membership, a pure function of (prompt_id, seed)."""
    u = _unit_interval_hash(f"split:{split_seed}:{prompt_id}")
    return "train" if u < TRAIN_FRACTION else "test"


@dataclass
class LoggedDataset:
    """Validated collection of logged records sharing one arm set and d_e."""

    arm_set: ArmSet
    d_e: int
    records: list[LoggedRecord]
    split_seed: int = 0
    synthetic_features: bool = False
    suggested_tau: float | None = None

    def __post_init__(self) -> None:
        k = self.arm_set.k
        seen: set[str] = set()
        for rec in self.records:
            if rec.prompt_id in seen:
                raise SchemaError(f"duplicate prompt_id {rec.prompt_id!r}")
            seen.add(rec.prompt_id)
            if rec.embedding.shape != (self.d_e,):
                raise SchemaError(
                    f"record {rec.prompt_id!r}: embedding has shape "
                    f"{rec.embedding.shape}, expected ({self.d_e},)"
                )
            if rec.scores.shape != (k,) or rec.costs.shape != (k,):
                raise SchemaError(
                    f"record {rec.prompt_id!r}: expected {k} scores and costs, "
                    f"got {rec.scores.shape[0]} / {rec.costs.shape[0]}"
                )
            if not np.all(np.isfinite(rec.embedding)):
                raise SchemaError(f"record {rec.prompt_id!r}: non-finite embedding")

    @property
    def n_records(self) -> int:
        return len(self.records)

    def tasks(self) -> list[str]:
        return sorted({rec.task_id for rec in self.records})

    def split_indices(self, split: str) -> list[int]:
        if split == "all":
            return list(range(len(self.records)))
        if split not in ("train", "test"):
            raise ValueError(f"split must be 'train', 'test', or 'all', got {split!r}")
        return [i for i, rec in enumerate(self.records)
                if split_of(rec.prompt_id, self.split_seed) == split]

    def quantile_tau(self, quantile: float = 0.95, split: str = "train") -> float:
        """Cost cap from the observed cost distribution of one split."""
        idx = self.split_indices(split)
        if not idx:
            raise ValueError(f"no records in split {split!r}")
        costs = np.concatenate([self.records[i].costs for i in idx])
        tau = float(np.quantile(costs, quantile))
        if tau <= 0.0:
            tau = max(float(costs.max()), 1e-9)
        return tau

    def fingerprint(self) -> str:
        """Content hash covering arms, embeddings, outcomes, and split seed."""
        h = hashlib.sha256()
        h.update(json.dumps({"arms": list(self.arm_set.ids), "d_e": self.d_e,
                             "split_seed": self.split_seed}, sort_keys=True).encode())
        for rec in self.records:
            h.update(rec.prompt_id.encode())
            h.update(rec.task_id.encode())
            h.update(rec.embedding.tobytes())
            h.update(rec.scores.tobytes())
            h.update(rec.costs.tobytes())
        return h.hexdigest()


# ----------------------------------------------------------------------
# bandit environment with the purity firewall
# ----------------------------------------------------------------------

class EvalCapability:
    """Token required to read full-information outcome rows.

    Only evaluation entry points construct one; training code paths never
    do, so a trainer calling :meth:`BanditEnvironment.full_outcomes` fails.
    The check is defense in depth on top of the interface split (trainers
    see only ``step``/``embedding``/``context``).
    """


class BanditEnvironment:
    """Replays logged records, releasing only the chosen arm's outcome per step."""

    def __init__(self, dataset: LoggedDataset, reward_spec: RewardSpec, split: str = "train"):
        self._dataset = dataset
        self._indices = dataset.split_indices(split)
        if not self._indices:
            raise ValueError(f"split {split!r} of dataset is empty")
        self.reward_spec = reward_spec
        self.arm_set = dataset.arm_set
        self.split = split
        self.d_e = dataset.d_e
        self._steps = 0

    @property
    def n_records(self) -> int:
        return len(self._indices)

    @property
    def k_arms(self) -> int:
        return self.arm_set.k

    @property
    def steps_taken(self) -> int:
        """Audit counter: exactly one arm outcome released per step."""
        return self._steps

    def _record(self, index: int) -> LoggedRecord:
        return self._dataset.records[self._indices[index]]

    def embedding(self, index: int) -> np.ndarray:
        return self._record(index).embedding

    def task_id(self, index: int) -> str:
        return self._record(index).task_id

    def context(self, index: int, preference: PreferenceVector) -> Context:
        rec = self._record(index)
        return Context(embedding=rec.embedding, preference=preference,
                       prompt_id=rec.prompt_id, task_id=rec.task_id)

    def step(self, index: int, arm: int) -> Outcome:
        """Bandit feedback: the chosen arm's outcome, nothing else."""
        if not 0 <= arm < self.arm_set.k:
            raise ValueError(f"arm {arm} out of range for {self.arm_set.k} arms")
        outcome = self._record(index).outcome(arm)
        self._steps += 1
        return outcome

    def full_outcomes(self, index: int, capability: EvalCapability | None = None) -> list[Outcome]:
        """Complete outcome row; evaluation only, gated by the capability token."""
        if not isinstance(capability, EvalCapability):
            raise EvalCapabilityError(
                "full_outcomes requires an EvalCapability; training code must "
                "observe outcomes through step() only"
            )
        rec = self._record(index)
        return [rec.outcome(a) for a in range(self.arm_set.k)]


# ----------------------------------------------------------------------
# embeddings: sidecar files and the hash featurizer
# ----------------------------------------------------------------------

def hash_featurize(prompt_id: str, seed: int = 0, d_e: int = HASH_FEATURIZER_DIM) -> np.ndarray:
    """Deterministic pseudo-embedding in [-1, 1]^d_e from the prompt id alone."""
    digest = hashlib.sha256(f"feat:{seed}:{prompt_id}".encode()).digest()
    gen = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    return gen.uniform(-1.0, 1.0, size=d_e)


def write_embedding_sidecar(base_path: str | Path, embeddings: dict[str, np.ndarray]) -> None:
    """Write ``<base>.emb.bin`` (flat float32 LE) and ``<base>.emb.json`` (index)."""
    base = Path(base_path)
    bin_path = base.with_suffix(base.suffix + ".emb.bin")
    idx_path = base.with_suffix(base.suffix + ".emb.json")
    d_e = None
    offsets: dict[str, int] = {}
    buf = bytearray()
    for prompt_id in embeddings:
        vec = np.asarray(embeddings[prompt_id], dtype=np.float32)
        if d_e is None:
            d_e = vec.shape[0]
        elif vec.shape[0] != d_e:
            raise ValueError(f"embedding for {prompt_id!r} has dim {vec.shape[0]}, expected {d_e}")
        offsets[prompt_id] = len(buf)
        buf += vec.astype("<f4").tobytes()
    bin_path.write_bytes(bytes(buf))
    idx_path.write_text(json.dumps(
        {"d_e": d_e, "dtype": "float32-le", "offsets": offsets}, sort_keys=True))


def read_embedding_sidecar(base_path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """Load a sidecar pair; returns (d_e, prompt_id -> float64 vector)."""
    base = Path(base_path)
    bin_path = base.with_suffix(base.suffix + ".emb.bin")
    idx_path = base.with_suffix(base.suffix + ".emb.json")
    if not bin_path.exists() or not idx_path.exists():
        raise SchemaError(f"embedding sidecar missing: {bin_path} / {idx_path}")
    index = json.loads(idx_path.read_text())
    d_e = int(index["d_e"])
    raw = bin_path.read_bytes()
    out: dict[str, np.ndarray] = {}
    row_bytes = d_e * 4
    for prompt_id, offset in index["offsets"].items():
        chunk = raw[offset:offset + row_bytes]
        if len(chunk) != row_bytes:
            raise SchemaError(f"sidecar truncated at prompt_id {prompt_id!r}")
        out[prompt_id] = np.frombuffer(chunk, dtype="<f4").astype(np.float64)
    return d_e, out


# ----------------------------------------------------------------------
# ingestion
# ----------------------------------------------------------------------

def _validate_score(value: float, prompt_id: str, arm_id: str, strict: bool) -> float:
    if not np.isfinite(value):
        raise SchemaError(f"record {prompt_id!r}, arm {arm_id!r}: non-finite score {value}")
    if 0.0 <= value <= 1.0:
        return float(value)
    if strict:
        raise SchemaError(
            f"record {prompt_id!r}, arm {arm_id!r}: score {value} outside [0, 1]"
        )
    clamped = min(max(float(value), 0.0), 1.0)
    logger.warning("record %r, arm %r: score %s clamped to %s",
                   prompt_id, arm_id, value, clamped)
    return clamped


def _validate_cost(value: float, prompt_id: str, arm_id: str) -> float:
    if not np.isfinite(value) or value < 0.0:
        raise SchemaError(f"record {prompt_id!r}, arm {arm_id!r}: bad cost {value}")
    return float(value)


def _resolve_embeddings(prompt_ids: list[str], embeddings_path: str | Path | None,
                        featurizer_seed: int) -> tuple[int, dict[str, np.ndarray], bool]:
    if embeddings_path is not None:
        d_e, table = read_embedding_sidecar(embeddings_path)
        missing = [p for p in prompt_ids if p not in table]
        if missing:
            raise SchemaError(f"sidecar missing embeddings for prompt_ids {missing[:5]!r}...")
        return d_e, table, False
    logger.warning("no embedding sidecar given; synthesizing hash features (test mode)")
    table = {p: hash_featurize(p, seed=featurizer_seed) for p in prompt_ids}
    return HASH_FEATURIZER_DIM, table, True


def _parse_jsonl(path: Path) -> tuple[ArmSet, float | None, list[dict]]:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty log file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:1: invalid JSON header: {exc}") from exc
    if not isinstance(header, dict) or "arms" not in header:
        raise SchemaError(f"{path}:1: header must be an object with an 'arms' list")
    try:
        arm_set = ArmSet(tuple(Arm(a["id"], a.get("name", a["id"])) for a in header["arms"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}:1: bad arms declaration: {exc}") from exc
    tau = header.get("tau")
    if tau is not None:
        tau = float(tau)

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        for key in ("prompt_id", "task_id", "scores", "costs"):
            if key not in obj:
                raise SchemaError(f"{path}:{lineno}: missing field {key!r}")
        rows.append(obj)
    return arm_set, tau, rows


def _parse_csv(path: Path) -> tuple[ArmSet, float | None, list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty CSV")
        arm_ids = [c[len("score:"):] for c in reader.fieldnames if c.startswith("score:")]
        if not arm_ids:
            raise SchemaError(f"{path}: no 'score:<arm_id>' columns found")
        for col in ("prompt_id", "task_id"):
            if col not in reader.fieldnames:
                raise SchemaError(f"{path}: missing column {col!r}")
        for arm_id in arm_ids:
            if f"cost:{arm_id}" not in reader.fieldnames:
                raise SchemaError(f"{path}: missing column 'cost:{arm_id}'")
        rows = []
        for row in reader:
            rows.append({
                "prompt_id": row["prompt_id"],
                "task_id": row["task_id"],
                "scores": [float(row[f"score:{a}"]) for a in arm_ids],
                "costs": [float(row[f"cost:{a}"]) for a in arm_ids],
            })
    return ArmSet.from_ids(arm_ids), None, rows


def ingest(path: str | Path, fmt: str = "jsonl", embeddings_path: str | Path | None = None,
           split_seed: int = 0, strict: bool = False, featurizer_seed: int = 0) -> LoggedDataset:
    """Parse and validate a logged dataset from disk.

    Raises:
        SchemaError: on any malformed header, record, or embedding, naming
            the offending record and field.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt == "jsonl":
        arm_set, tau, rows = _parse_jsonl(path)
    elif fmt == "csv":
        arm_set, tau, rows = _parse_csv(path)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'jsonl' or 'csv'")

    prompt_ids = [str(r["prompt_id"]) for r in rows]
    d_e, table, synthetic = _resolve_embeddings(prompt_ids, embeddings_path, featurizer_seed)

    records = []
    for row in rows:
        prompt_id = str(row["prompt_id"])
        scores, costs = row["scores"], row["costs"]
        if len(scores) != arm_set.k or len(costs) != arm_set.k:
            raise SchemaError(
                f"record {prompt_id!r}: expected {arm_set.k} scores and costs, "
                f"got {len(scores)} / {len(costs)}"
            )
        q = np.array([_validate_score(float(s), prompt_id, arm_set.ids[j], strict)
                      for j, s in enumerate(scores)])
        c = np.array([_validate_cost(float(v), prompt_id, arm_set.ids[j])
                      for j, v in enumerate(costs)])
        records.append(LoggedRecord(prompt_id=prompt_id, task_id=str(row["task_id"]),
                                    embedding=table[prompt_id], scores=q, costs=c))

    return LoggedDataset(arm_set=arm_set, d_e=d_e, records=records, split_seed=split_seed,
                         synthetic_features=synthetic, suggested_tau=tau)


def write_jsonl(dataset: LoggedDataset, path: str | Path, with_embeddings: bool = True) -> None:
    """Serialize a dataset to the JSON-lines schema plus an embedding sidecar."""
    path = Path(path)
    header: dict = {
        "schema": SCHEMA_NAME,
        "arms": [{"id": a.arm_id, "name": a.name} for a in dataset.arm_set.arms],
    }
    if dataset.suggested_tau is not None:
        header["tau"] = dataset.suggested_tau
    lines = [json.dumps(header, sort_keys=True)]
    for rec in dataset.records:
        lines.append(json.dumps({
            "prompt_id": rec.prompt_id,
            "task_id": rec.task_id,
            "scores": rec.scores.tolist(),
            "costs": rec.costs.tolist(),
        }, sort_keys=True))
    path.write_text("\n".join(lines) + "\n")
    if with_embeddings:
        write_embedding_sidecar(path, {rec.prompt_id: rec.embedding for rec in dataset.records})


# ----------------------------------------------------------------------
# synthetic environments with closed-form optima
# ----------------------------------------------------------------------

SYNTHETIC_KINDS = ("linear", "piecewise-preference", "nonlinear-xor")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a desk-scale dataset whose optimal arm is known in closed form.

    Kinds:
      linear                sigmoid-linear scores per arm, fixed per-arm costs
      piecewise-preference  two arms with constant outcomes; the optimal arm
                            flips at a cost-weight threshold solvable by hand
      nonlinear-xor         the optimal arm is the sign parity of the first
                            two embedding coordinates, which no linear model
                            over [embedding; preference] can represent
    """

    kind: str
    n_records: int
    k_arms: int = 2
    d_e: int = 8
    tau: float = 1.0
    scores: tuple[float, ...] | None = None   # piecewise: per-arm score
    costs: tuple[float, ...] | None = None    # piecewise: per-arm cost
    jitter: float = 0.0                       # piecewise: per-record score spread
    task_count: int = 1

    def __post_init__(self) -> None:
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected {SYNTHETIC_KINDS}")
        if self.n_records < 1 or self.k_arms < 2 or self.d_e < 2 or self.task_count < 1:
            raise ValueError("n_records >= 1, k_arms >= 2, d_e >= 2, task_count >= 1 required")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.kind == "nonlinear-xor" and self.k_arms != 2:
            raise ValueError("nonlinear-xor requires exactly 2 arms")
        if self.kind == "piecewise-preference":
            if self.k_arms != 2:
                raise ValueError("piecewise-preference requires exactly 2 arms")
            if self.scores is not None and len(self.scores) != 2:
                raise ValueError("piecewise scores must have 2 entries")
            if self.costs is not None and len(self.costs) != 2:
                raise ValueError("piecewise costs must have 2 entries")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def gen_synthetic(spec: SyntheticSpec, seed: int = 0) -> LoggedDataset:
    """Deterministic synthetic dataset for the requested generator kind."""
    gen = np.random.Generator(np.random.PCG64(int(seed)))
    k, d_e, n = spec.k_arms, spec.d_e, spec.n_records
    arm_set = ArmSet.from_ids([f"arm{j}" for j in range(k)])

    # Quantize embeddings to float32 so writing the sidecar loses nothing.
    embeddings = gen.uniform(-1.0, 1.0, size=(n, d_e)).astype(np.float32).astype(np.float64)

    if spec.kind == "linear":
        theta = gen.standard_normal((k, d_e)) / np.sqrt(d_e)
        scores = _sigmoid(embeddings @ theta.T)                     # (n, k)
        arm_costs = spec.tau * (0.2 + 0.6 * np.arange(k) / max(k - 1, 1))
        costs = np.tile(arm_costs, (n, 1))
    elif spec.kind == "piecewise-preference":
        base_q = np.array(spec.scores if spec.scores is not None else (0.9, 0.5))
        base_c = np.array(spec.costs if spec.costs is not None else (spec.tau, 0.0))
        scores = np.tile(base_q, (n, 1))
        if spec.jitter > 0.0:
            scores = np.clip(scores + gen.uniform(-spec.jitter, spec.jitter, size=(n, k)),
                             0.0, 1.0)
        costs = np.tile(base_c, (n, 1))
    else:  # nonlinear-xor
        signs = np.where(gen.uniform(size=(n, 2)) < 0.5, -1.0, 1.0)
        embeddings[:, :2] = signs
        parity = signs[:, 0] * signs[:, 1] > 0
        scores = np.where(parity[:, None], np.array([0.9, 0.1]), np.array([0.1, 0.9]))
        costs = np.full((n, k), 0.1 * spec.tau)

    records = [
        LoggedRecord(
            prompt_id=f"{spec.kind}-{i:06d}",
            task_id=f"task{i % spec.task_count}",
            embedding=embeddings[i],
            scores=scores[i].astype(np.float64),
            costs=costs[i].astype(np.float64),
        )
        for i in range(n)
    ]
    return LoggedDataset(arm_set=arm_set, d_e=d_e, records=records, split_seed=seed,
                         synthetic_features=False, suggested_tau=spec.tau)
