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

import configparser
import pathlib
import unittest

SETUP_CFG = pathlib.Path(__file__).parents[1] / "setup.cfg"


class SetupCfgTestCase(unittest.TestCase):
    def test_pytest_options_need_their_plugins(self):
        parser = configparser.ConfigParser()
        parser.read(SETUP_CFG)
        self.assertIn("flake8", parser)
        if not parser.has_section("tool:pytest"):
            return
        options = parser["tool:pytest"]
        addopts = options.get("addopts", "")
        if "flake8-ignore" in options:
            self.assertIn("--flake8", addopts)


if __name__ == "__main__":
    unittest.main()
