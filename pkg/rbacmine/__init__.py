"""Probabilistic role mining for role-based access control.

Three miners share one data model: multi-assignment clustering (flat roles,
users may hold several), the disjoint decomposition model (business and
technical roles from Gibbs sampling), and a hybrid that steers the first by
a business attribute. Mined configurations are compared by how well they
generalize to users they have not seen.
"""

from __future__ import annotations
from rbacmine.typing import *
from rbacmine.errors import *
from rbacmine.matrix import *
from rbacmine.rbac import *
from rbacmine.likelihood import *
from rbacmine.attributes import *
from rbacmine.relevance import *
from rbacmine.evaluation import *
from rbacmine.model import *
from rbacmine.synth import *
from rbacmine.formats import *

__version__ = '0.1.0'
