# This file is part of ts_vzen.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

try:
    from .version import *
except ModuleNotFoundError:
    __version__ = "?"

from .errors import *
from .rng import *
from .tensor import *
from .functional import *
from .gradcheck import *
from .optim import *
from .nn import *
from .tokenizer import *
from .config_schema import CONFIG_SCHEMA
from .config import *
from .vision import *
from .projector import *
from .backbone import *
from .grounding import *
from .font import *
from .scene import *
from .records import *
from .prompt import *
from .dataset import *
from .model import *
from .batch_source import *
from .trainer import *
from .evaluate import *
from .checkpoint import *
from .ablation import *
from .gradcheck_suite import *
from .cli import *
