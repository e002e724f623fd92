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

import unittest

import numpy as np

from lsst.ts.vzen.errors import ContractError
from lsst.ts.vzen.gradcheck import gradcheck, numerical_gradient, relative_error
from lsst.ts.vzen.gradcheck_suite import (
    GRADCHECK_CASES,
    GRADCHECK_TOLERANCE,
    run_gradcheck_suite,
)
from lsst.ts.vzen.tensor import Function, Tensor


class WrongSquare(Function):
    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, grad):
        # Off by a factor of two.
        return (grad * self.a,)


class GradcheckTestCase(unittest.TestCase):
    def test_relative_error(self):
        self.assertEqual(relative_error(1.0, 1.0), 0.0)
        self.assertAlmostEqual(relative_error(1.0, 3.0), 0.5)
        self.assertAlmostEqual(relative_error(0.0, 1e-6, floor=1e-4), 1e-2)

    def test_numerical_gradient_restores_value(self):
        x = Tensor([2.0], requires_grad=True)
        slope = numerical_gradient(lambda: float((x.data**3).sum()), x, (0,))
        self.assertAlmostEqual(slope, 12.0, places=6)
        self.assertEqual(x.data[0], 2.0)

    def test_correct_gradient_passes(self):
        x = Tensor(np.linspace(-1.0, 1.0, 5), requires_grad=True)
        error = gradcheck(lambda x: (x * x).tanh(), [x])
        self.assertLess(error, GRADCHECK_TOLERANCE)

    def test_wrong_gradient_fails(self):
        x = Tensor([0.5, 1.5], requires_grad=True)
        error = gradcheck(lambda x: WrongSquare.apply(x).sum(), [x])
        self.assertGreater(error, 0.1)

    def test_input_must_require_grad(self):
        with self.assertRaises(ContractError):
            gradcheck(lambda x: x.sum(), [Tensor([1.0])])


class GradcheckSuiteTestCase(unittest.TestCase):
    def test_every_case_passes_on_three_seeds(self):
        results = run_gradcheck_suite(seeds=(0, 1, 2))
        self.assertEqual(len(results), 3 * len(GRADCHECK_CASES))
        failures = [(r.name, r.seed, r.max_error) for r in results if not r.passed]
        self.assertEqual(failures, [])

    def test_unknown_case(self):
        with self.assertRaises(KeyError):
            run_gradcheck_suite(seeds=(0,), names=["no_such_case"])


if __name__ == "__main__":
    unittest.main()
