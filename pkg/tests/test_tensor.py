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

import threading
import unittest

import numpy as np
import numpy.testing

from lsst.ts.vzen.errors import ContractError, NumericError, ShapeError
from lsst.ts.vzen.tensor import (
    Tensor,
    concat,
    is_grad_enabled,
    masked_fill,
    maximum,
    minimum,
    no_grad,
    stack,
    where,
)


class TensorTestCase(unittest.TestCase):
    def test_default_dtype(self):
        self.assertEqual(Tensor([1, 2, 3]).dtype, np.float64)
        self.assertEqual(Tensor(np.zeros(2, dtype=np.float32)).dtype, np.float32)
        a = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
        self.assertEqual((a * 2.0 + 1.0).dtype, np.float32)

    def test_non_finite_input(self):
        with self.assertRaises(NumericError):
            Tensor([1.0, np.nan])
        with self.assertRaises(FloatingPointError):
            Tensor([np.inf])

    def test_non_finite_output_names_op(self):
        a = Tensor([0.0, 1.0], requires_grad=True)
        with self.assertRaisesRegex(NumericError, "Log"):
            a.log()
        with self.assertRaisesRegex(NumericError, "Div"):
            Tensor([1.0]) / Tensor([0.0])

    def test_add_mul_gradients(self):
        a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        b = Tensor([4.0, 5.0, 6.0], requires_grad=True)
        ((a * b) + a).sum().backward()
        numpy.testing.assert_array_equal(a.grad, [5.0, 6.0, 7.0])
        numpy.testing.assert_array_equal(b.grad, [1.0, 2.0, 3.0])

    def test_broadcast_gradient_is_reduced(self):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        (a * b).sum().backward()
        self.assertEqual(b.grad.shape, (4,))
        numpy.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_gradients_accumulate(self):
        a = Tensor([2.0], requires_grad=True)
        (a * a).sum().backward()
        (a * a).sum().backward()
        numpy.testing.assert_array_equal(a.grad, [8.0])
        a.zero_grad()
        self.assertIsNone(a.grad)

    def test_reused_node(self):
        a = Tensor([3.0], requires_grad=True)
        b = a * 2.0
        (b * b + b).sum().backward()
        # d/da (4a^2 + 2a) = 8a + 2
        numpy.testing.assert_allclose(a.grad, [26.0])

    def test_backward_needs_scalar(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ContractError):
            (a * 2.0).backward()

    def test_matmul(self):
        a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        b = Tensor(np.ones((3, 2)), requires_grad=True)
        out = a @ b
        numpy.testing.assert_array_equal(out.data, [[3.0, 3.0], [12.0, 12.0]])
        out.sum().backward()
        numpy.testing.assert_array_equal(a.grad, np.full((2, 3), 2.0))
        numpy.testing.assert_array_equal(b.grad, [[3.0, 3.0], [5.0, 5.0], [7.0, 7.0]])
        with self.assertRaises(ShapeError):
            Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))
        with self.assertRaises(ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    def test_getitem_repeated_indices(self):
        a = Tensor(np.arange(4.0), requires_grad=True)
        a[np.array([0, 2, 2])].sum().backward()
        numpy.testing.assert_array_equal(a.grad, [1.0, 0.0, 2.0, 0.0])

    def test_reshape_transpose(self):
        a = Tensor(np.arange(6.0), requires_grad=True)
        b = a.reshape(2, 3).transpose(1, 0)
        self.assertEqual(b.shape, (3, 2))
        (b * Tensor(np.arange(6.0).reshape(3, 2))).sum().backward()
        numpy.testing.assert_array_equal(a.grad, [0.0, 2.0, 4.0, 1.0, 3.0, 5.0])
        with self.assertRaises(ShapeError):
            a.reshape(4, 2)

    def test_concat_stack(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((1, 2)), requires_grad=True)
        out = concat([a, b * 3.0], axis=0)
        self.assertEqual(out.shape, (3, 2))
        out.sum().backward()
        numpy.testing.assert_array_equal(b.grad, [[3.0, 3.0]])
        with self.assertRaises(ShapeError):
            concat([a, Tensor(np.ones((1, 3)))], axis=0)
        c = Tensor(np.ones(2), requires_grad=True)
        stack([c, c * 2.0], axis=1).sum().backward()
        numpy.testing.assert_array_equal(c.grad, [3.0, 3.0])

    def test_where_and_masked_fill(self):
        a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        b = Tensor([10.0, 20.0, 30.0], requires_grad=True)
        mask = np.array([True, False, True])
        out = where(mask, a, b)
        numpy.testing.assert_array_equal(out.data, [1.0, 20.0, 3.0])
        out.sum().backward()
        numpy.testing.assert_array_equal(a.grad, [1.0, 0.0, 1.0])
        numpy.testing.assert_array_equal(b.grad, [0.0, 1.0, 0.0])
        a.zero_grad()
        filled = masked_fill(a, mask, -5.0)
        numpy.testing.assert_array_equal(filled.data, [-5.0, 2.0, -5.0])
        filled.sum().backward()
        numpy.testing.assert_array_equal(a.grad, [0.0, 1.0, 0.0])

    def test_maximum_minimum(self):
        a = Tensor([1.0, 5.0], requires_grad=True)
        b = Tensor([3.0, 2.0], requires_grad=True)
        (maximum(a, b) + minimum(a, b) * 10.0).sum().backward()
        numpy.testing.assert_array_equal(a.grad, [10.0, 1.0])
        numpy.testing.assert_array_equal(b.grad, [1.0, 10.0])

    def test_sigmoid_is_stable(self):
        out = Tensor([-800.0, 0.0, 800.0]).sigmoid()
        numpy.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])

    def test_mean_gradient(self):
        a = Tensor(np.ones((2, 4)), requires_grad=True)
        a.mean(axis=1).sum().backward()
        numpy.testing.assert_allclose(a.grad, np.full((2, 4), 0.25))

    def test_no_grad(self):
        a = Tensor([1.0], requires_grad=True)
        with no_grad():
            self.assertFalse(is_grad_enabled())
            b = a * 2.0
        self.assertTrue(is_grad_enabled())
        self.assertFalse(b.requires_grad)

    def test_no_grad_is_per_thread(self):
        seen = []

        def probe():
            seen.append(is_grad_enabled())

        with no_grad():
            thread = threading.Thread(target=probe)
            thread.start()
            thread.join()
        self.assertEqual(seen, [True])

    def test_item(self):
        self.assertEqual(Tensor([[2.5]]).item(), 2.5)
        with self.assertRaises(ContractError):
            Tensor([1.0, 2.0]).item()


if __name__ == "__main__":
    unittest.main()
