"""Role miners."""

from __future__ import annotations
from rbacmine.model.mac import *
from rbacmine.model.ddm import *
from rbacmine.model.hybrid import *
