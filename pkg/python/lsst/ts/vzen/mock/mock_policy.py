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

__all__ = ["OraclePolicy", "ConstantPolicy"]

import logging
from typing import Optional

from ..grounding import BBox
from ..model import Prediction
from ..records import GuideRecord
from ..vision import ImageRaster


class OraclePolicy:
    """Policy that answers every record with its ground truth."""

    def __init__(self, log: Optional[logging.Logger] = None):
        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)
        self.calls = 0

    def predict(self, record: GuideRecord, image: ImageRaster) -> Prediction:
        self.calls += 1
        return Prediction(record.next_action, record.bbox, 1.0, ())


class ConstantPolicy:
    """Policy that always gives the same answer.

    Parameters
    ----------
    action : `str`
        Predicted next action.
    bbox : `BBox`, optional
        Predicted box; None predicts no box.
    """

    def __init__(self, action: str, bbox: Optional[BBox] = None):
        self.action = action
        self.bbox = bbox

    def predict(self, record: GuideRecord, image: ImageRaster) -> Prediction:
        return Prediction(self.action, self.bbox, 0.0 if self.bbox is None else 1.0, ())
