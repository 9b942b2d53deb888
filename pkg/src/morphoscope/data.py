"""Embedding datasets: file formats, validation, and the word-type filter.

Matrix file (little-endian): ``b"IPRB"``, format version ``u16 = 1``,
``N`` as ``u64``, ``d`` as ``u32``, then ``N*d`` float32 values row-major.

Labels file: UTF-8 TSV with header ``index split word_form tag``; ``tag`` is
a ``;``-separated list of ``Attribute=VALUE`` pairs.
"""

import csv
import hashlib
import logging
import struct
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConsistencyError, DataError, FormatError, UnknownAttribute
from .probe import AttributeSchema
from .unimorph import parse_tag

logger = logging.getLogger(__name__)

MAGIC = b"IPRB"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<4sHQI")
SPLITS = ("train", "validation", "test")
LABELS_HEADER = ("index", "split", "word_form", "tag")
MIN_WORD_TYPES = 100


@dataclass(frozen=True)
class LabeledToken:
    row_index: int
    word_form: str
    split: str
    tag: dict

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"row {self.row_index}: unknown split {self.split!r}", row=self.row_index)


@dataclass(eq=False)
class EmbeddingDataset:
    embeddings: np.ndarray
    tokens: list
    dataset_id: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2:
            raise DataError("embeddings must be a 2-D matrix")
        if len(self.tokens) != self.embeddings.shape[0]:
            raise ConsistencyError(
                f"{len(self.tokens)} label rows but {self.embeddings.shape[0]} embedding rows"
            )
        for i, t in enumerate(self.tokens):
            if t.row_index != i:
                raise ConsistencyError(f"token {i} carries row index {t.row_index}")
        bad = np.flatnonzero(~np.all(np.isfinite(self.embeddings), axis=1))
        if bad.size:
            raise DataError(f"non-finite embedding value at row {bad[0]}", row=int(bad[0]))

    @property
    def n(self):
        return self.embeddings.shape[0]

    @property
    def d(self):
        return self.embeddings.shape[1]

    def attributes(self):
        return sorted({a for t in self.tokens for a in t.tag})

    def registry(self):
        """attribute -> value -> split -> number of distinct word forms."""
        sets = defaultdict(lambda: defaultdict(lambda: defaultdict(set)))
        for t in self.tokens:
            for a, v in t.tag.items():
                sets[a][v][t.split].add(t.word_form)
        return {a: {v: {s: len(sets[a][v][s]) for s in SPLITS} for v in vals} for a, vals in sets.items()}

    def select_rows(self, rows):
        rows = [int(r) for r in rows]
        tokens = [
            LabeledToken(i, self.tokens[r].word_form, self.tokens[r].split, dict(self.tokens[r].tag))
            for i, r in enumerate(rows)
        ]
        return EmbeddingDataset(self.embeddings[rows], tokens, self.dataset_id, dict(self.provenance))


# -- file formats ------------------------------------------------------------


def write_matrix(path, embeddings):
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    n, d = emb.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, MATRIX_VERSION, n, d))
        fh.write(emb.tobytes(order="C"))


def read_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n, d = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MATRIX_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        body = fh.read()
    if len(body) != 4 * n * d:
        raise FormatError(f"{path}: expected {n}x{d} float32 values, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float32)


def format_tag(tag):
    return ";".join(f"{a}={v}" for a, v in tag.items())


def write_labels(path, tokens):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar="\\")
        w.writerow(LABELS_HEADER)
        for t in tokens:
            w.writerow([t.row_index, t.split, t.word_form, format_tag(t.tag)])


def read_labels(path):
    """Parse a labels TSV into tokens sorted by matrix row."""
    tokens = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\")
        header = next(reader, None)
        if header is None or tuple(header) != LABELS_HEADER:
            raise FormatError(f"{path}: expected header {LABELS_HEADER}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            try:
                idx = int(rec[0])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad row index {rec[0]!r}") from None
            tokens.append(LabeledToken(idx, rec[2], rec[1], parse_tag(rec[3], strict=False)))
    tokens.sort(key=lambda t: t.row_index)
    return tokens


def _file_digest(*paths):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def load_dataset(matrix_path, labels_path):
    emb = read_matrix(matrix_path)
    tokens = read_labels(labels_path)
    if len(tokens) != emb.shape[0]:
        raise ConsistencyError(f"labels file has {len(tokens)} rows, matrix has {emb.shape[0]}")
    if [t.row_index for t in tokens] != list(range(len(tokens))):
        raise ConsistencyError("label indices must cover matrix rows 0..N-1 exactly once")
    digest = _file_digest(matrix_path, labels_path)
    prov = {
        "matrix": str(matrix_path),
        "labels": str(labels_path),
        "matrix_sha256": _file_digest(matrix_path),
        "labels_sha256": _file_digest(labels_path),
    }
    return EmbeddingDataset(emb, tokens, digest[:16], prov)


def save_dataset(dataset, matrix_path, labels_path):
    write_matrix(matrix_path, dataset.embeddings)
    write_labels(labels_path, dataset.tokens)


# -- filtering ---------------------------------------------------------------


@dataclass
class FilteredAttribute:
    """Rows of one attribute after the word-type filter.

    ``schema`` is ``None`` when fewer than two values survive.
    """

    attribute: str
    schema: AttributeSchema
    rows: dict
    labels: dict
    type_counts: dict
    dropped: dict
    counted_tokens: bool = False

    @property
    def excluded(self):
        return self.schema is None

    def split(self, dataset, name):
        """``(X, y)`` for one split as float64 rows and string labels."""
        idx = self.rows[name]
        return dataset.embeddings[idx].astype(np.float64), self.labels[name]


def filter_attribute_values(dataset, attribute, min_types=MIN_WORD_TYPES):
    """Keep values with at least ``min_types`` distinct word forms in every split."""
    carrying = [t for t in dataset.tokens if attribute in t.tag]
    if not carrying:
        raise UnknownAttribute(attribute)
    counted_tokens = all(t.word_form == "" for t in dataset.tokens)
    if counted_tokens:
        msg = "no word forms available; counting tokens instead of word types"
        warnings.warn(msg, stacklevel=2)
        logger.warning(msg)
    forms = defaultdict(lambda: {s: [] for s in SPLITS})
    for t in carrying:
        forms[t.tag[attribute]][t.split].append(t.word_form)
    counts = {
        v: {s: (len(f[s]) if counted_tokens else len(set(f[s]))) for s in SPLITS}
        for v, f in forms.items()
    }
    kept = sorted(v for v, c in counts.items() if min(c.values()) >= min_types)
    dropped = {v: c for v, c in counts.items() if v not in kept}
    for v, c in sorted(dropped.items()):
        logger.info("dropping %s=%s (types per split: %s)", attribute, v, c)
    keep = set(kept)
    rows = {s: [] for s in SPLITS}
    for t in carrying:
        if t.tag[attribute] in keep:
            rows[t.split].append(t.row_index)
    rows = {s: np.array(r, dtype=np.intp) for s, r in rows.items()}
    labels = {s: np.array([dataset.tokens[i].tag[attribute] for i in r], dtype=str) for s, r in rows.items()}
    schema = AttributeSchema(attribute, tuple(kept)) if len(kept) >= 2 else None
    if schema is None:
        logger.warning("attribute %s excluded: %d value(s) survive the filter", attribute, len(kept))
    return FilteredAttribute(attribute, schema, rows, labels, counts, dropped, counted_tokens)
