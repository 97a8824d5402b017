"""How much a business attribute tells about permissions and roles.

Entropies are in bits. Conditional distributions are normalized within every
attribute group, i.e. `p(x_d = 1 | s)` is the fraction of users with value `s`
that hold permission `d`.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Hashable, Sequence
import logging
import numpy as np
from scipy.special import entr
from rbacmine.attributes import AttributeTable
from rbacmine.errors import DomainError
from rbacmine.matrix import BinaryMatrix
from rbacmine.typing import FloatArray

__all__ = ('RelevanceReport', 'binary_entropy', 'attribute_relevance',
           'conditional_role_entropy', 'relevance_histogram',)

logger = logging.getLogger(__name__)

DEFAULT_MIN_COUNT = 10


def binary_entropy(p: FloatArray | float) -> FloatArray:
    """`-p log2 p - (1 - p) log2 (1 - p)`, zero at both ends."""

    p = np.asarray(p, dtype=np.float64)
    return (entr(p) + entr(1.0 - p)) / np.log(2.0)


@dataclass(frozen=True)
class RelevanceReport:
    """Per-permission entropies and relative mutual information with one attribute.

    When no attribute value has enough users, `sufficient` is false and every
    vector is NaN."""

    kind: str
    entropy: FloatArray
    conditional_entropy: FloatArray
    mutual_information: FloatArray
    relevance: FloatArray
    users_used: int
    values_used: int

    @property
    def sufficient(self) -> bool:
        return self.values_used > 0

    @property
    def mean_relevance(self) -> float:
        return float(np.mean(self.relevance)) if self.sufficient else float('nan')


def attribute_relevance(x: BinaryMatrix, attrs: AttributeTable,
                        min_count: int = DEFAULT_MIN_COUNT) -> RelevanceReport:
    """`rho_d = 1 - h(X_d | S) / h(X_d)` for every permission, with `0/0 := 1`.

    Only users whose attribute value is held by at least `min_count` users
    take part; rarely seen values make the conditional entropy look smaller
    than it is."""

    attrs.check_users(x.rows)
    keep = attrs.frequent_users(min_count)
    values_used = int(np.count_nonzero(attrs.frequent_values(min_count)))
    if not values_used:
        logger.warning('attribute %r: no value has %d or more users', attrs.kind, min_count)
        nan = np.full(x.cols, np.nan)
        return RelevanceReport(attrs.kind, nan, nan, nan, nan, 0, 0)

    xf = x.as_float()[keep]
    w = attrs.one_hot()[keep]
    sizes = w.sum(axis=0)
    occupied = sizes > 0
    w, sizes = w[:, occupied], sizes[occupied]
    n = xf.shape[0]

    h = binary_entropy(xf.mean(axis=0))
    p_given = (w.T @ xf) / sizes[:, np.newaxis]
    h_cond = (sizes / n) @ binary_entropy(p_given)
    mi = np.maximum(h - h_cond, 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        rho = np.where(h > 0, 1.0 - h_cond / h, 1.0)
    rho = np.clip(rho, 0.0, 1.0)
    return RelevanceReport(attrs.kind, h, h_cond, mi, rho, n, values_used)


def _assignment_labels(assignments: BinaryMatrix | Sequence[Hashable] | np.ndarray) -> list[Hashable]:
    if isinstance(assignments, BinaryMatrix):
        return list(assignments.rows_as_tuples())
    if hasattr(assignments, 'hard'):
        return [int(s) for s in assignments.hard]  # Responsibilities
    return [a if isinstance(a, Hashable) else tuple(a) for a in assignments]


def conditional_role_entropy(assignments: BinaryMatrix | Sequence[Hashable] | np.ndarray,
                             attrs: AttributeTable) -> float:
    """Average uncertainty of a user's role set given its attribute value, in bits.

    `assignments` is a user-role matrix, responsibilities (their most likely
    sets are used) or one hashable role-set label per user."""

    labels = _assignment_labels(assignments)
    attrs.check_users(len(labels))
    codes = {label: code for code, label in enumerate(dict.fromkeys(labels))}
    table = np.zeros((attrs.num_values, len(codes)))
    np.add.at(table, (attrs.values, [codes[label] for label in labels]), 1.0)
    sizes = table.sum(axis=1)
    occupied = sizes > 0
    p = table[occupied] / sizes[occupied, np.newaxis]
    per_group = entr(p).sum(axis=1) / np.log(2.0)
    return float(sizes[occupied] @ per_group / len(labels))


def relevance_histogram(report: RelevanceReport, bins: int = 10) -> list[tuple[float, float, int]]:
    """`(lower edge, upper edge, count)` of relevance values over [0, 1]."""

    if bins < 1:
        raise DomainError('There should be at least one bin.')
    values = report.relevance[np.isfinite(report.relevance)]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
