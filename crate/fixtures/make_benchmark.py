import json, textwrap

cart_src = '''class ShoppingCart:
    """Keeps the items a customer wants to buy."""

    def __init__(self):
        self.cart = []

    def add_item(self, name, price, quantity=1):
        """
        Add an item to the cart, merging quantities of items that share a name.
        :param name: str, item name
        :param price: float, unit price
        :param quantity: int, number of units, default 1
        :return: None
        >>> cart = ShoppingCart()
        >>> cart.add_item('apple', 1.0, 3)
        >>> cart.cart
        [{'name': 'apple', 'price': 1.0, 'quantity': 3}]
        """
        for item in self.cart:
            if item['name'] == name:
                item['quantity'] += quantity
                return
        self.cart.append({'name': name, 'price': price, 'quantity': quantity})

    def get_total(self):
        """
        Total price of all items in the cart.
        :return: float, sum of price * quantity over all items
        >>> cart = ShoppingCart()
        >>> cart.add_item('apple', 1.0, 3)
        >>> cart.get_total()
        3.0
        """
        return sum(item['price'] * item['quantity'] for item in self.cart)

    def checkout(self, discount=0.0):
        """
        Empty the cart and return the amount due after applying a discount rate.
        :param discount: float, discount rate in [0, 1]
        :return: float, amount due rounded to 2 decimals, 0.0 for an empty cart
        >>> cart = ShoppingCart()
        >>> cart.add_item('apple', 1.0, 3)
        >>> cart.checkout(0.1)
        2.7
        """
        if not self.cart:
            return 0.0
        amount = self.get_total() * (1 - discount)
        self.cart = []
        return round(amount, 2)
'''

cart_tests = {
"add_item": '''import unittest


class ShoppingCartTestAddItem(unittest.TestCase):
    def test_add_new(self):
        cart = ShoppingCart()
        cart.add_item('apple', 1.0, 3)
        self.assertEqual(cart.cart, [{'name': 'apple', 'price': 1.0, 'quantity': 3}])

    def test_default_quantity(self):
        cart = ShoppingCart()
        cart.add_item('pear', 2.0)
        self.assertEqual(cart.cart[0]['quantity'], 1)

    def test_merge_same_name(self):
        cart = ShoppingCart()
        cart.add_item('apple', 1.0, 3)
        cart.add_item('apple', 1.0, 2)
        self.assertEqual(len(cart.cart), 1)
        self.assertEqual(cart.cart[0]['quantity'], 5)
''',
"get_total": '''import unittest


class ShoppingCartTestGetTotal(unittest.TestCase):
    def test_empty(self):
        self.assertEqual(ShoppingCart().get_total(), 0)

    def test_items(self):
        cart = ShoppingCart()
        cart.cart = [{'name': 'a', 'price': 1.5, 'quantity': 2}, {'name': 'b', 'price': 2.0, 'quantity': 1}]
        self.assertAlmostEqual(cart.get_total(), 5.0)
''',
"checkout": '''import unittest


class ShoppingCartTestCheckout(unittest.TestCase):
    def test_empty_cart(self):
        self.assertEqual(ShoppingCart().checkout(0.5), 0.0)

    def test_discount(self):
        cart = ShoppingCart()
        cart.cart = [{'name': 'a', 'price': 1.0, 'quantity': 3}]
        self.assertEqual(cart.checkout(0.1), 2.7)
        self.assertEqual(cart.cart, [])

    def test_no_discount(self):
        cart = ShoppingCart()
        cart.cart = [{'name': 'a', 'price': 2.5, 'quantity': 2}]
        self.assertEqual(cart.checkout(), 5.0)
''',
}

area_src = '''class AreaCalculator:
    """Areas of shapes derived from a circle of a given radius."""

    def __init__(self, radius):
        self.radius = radius

    def calculate_circle_area(self):
        """
        Area of the circle.
        :return: float
        >>> AreaCalculator(2).calculate_circle_area()
        12.566370614359172
        """
        return math.pi * self.radius ** 2

    def calculate_sector_area(self, angle):
        """
        Area of a sector of the circle.
        :param angle: float, central angle of the sector in radians
        :return: float
        >>> AreaCalculator(2).calculate_sector_area(math.pi)
        6.283185307179586
        """
        return self.radius ** 2 * angle / 2
'''

area_tests = {
"calculate_circle_area": '''import unittest


class AreaCalculatorTestCircle(unittest.TestCase):
    def test_unit(self):
        self.assertAlmostEqual(AreaCalculator(1).calculate_circle_area(), math.pi)

    def test_radius_two(self):
        self.assertAlmostEqual(AreaCalculator(2).calculate_circle_area(), 4 * math.pi)
''',
"calculate_sector_area": '''import unittest


class AreaCalculatorTestSector(unittest.TestCase):
    def test_half_circle(self):
        self.assertAlmostEqual(AreaCalculator(2).calculate_sector_area(math.pi), 2 * math.pi)

    def test_zero_angle(self):
        self.assertEqual(AreaCalculator(3).calculate_sector_area(0), 0)
''',
}

import ast
def methods(src, tests):
    mod = ast.parse(src)
    cls = mod.body[0]
    lines = src.splitlines(keepends=True)
    out = []
    for fn in cls.body:
        if not isinstance(fn, ast.FunctionDef) or fn.name == "__init__":
            continue
        text = textwrap.dedent("".join(lines[fn.lineno-1:fn.end_lineno]))
        header = lines[fn.lineno-1].strip()
        out.append({
            "name": fn.name,
            "signature": header,
            "docstring": ast.get_docstring(fn),
            "canonical_solution": text,
            "test_source": tests[fn.name],
        })
    return out

bench = [
  {"class_id": "Fixture_0", "source": cart_src, "import_block": "", "test_source": "\n\n".join(cart_tests.values()), "methods": methods(cart_src, cart_tests)},
  {"class_id": "Fixture_1", "source": area_src, "import_block": "import math\n", "test_source": "\n\n".join(area_tests.values()), "methods": methods(area_src, area_tests)},
]
json.dump(bench, open("fixtures/benchmark.json", "w"), indent=2)

# canonical classes must pass their own suites
import unittest, io
for b in bench:
    ns = {}
    exec(b["import_block"] + b["source"], ns)
    exec(b["test_source"], ns)
    suite = unittest.TestSuite()
    for v in list(ns.values()):
        if isinstance(v, type) and issubclass(v, unittest.TestCase) and v is not unittest.TestCase:
            suite.addTests(unittest.defaultTestLoader.loadTestsFromTestCase(v))
    r = unittest.TextTestRunner(stream=io.StringIO()).run(suite)
    print(b["class_id"], r.testsRun, len(r.failures), len(r.errors))
