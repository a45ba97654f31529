import shutil
import tempfile
import unittest
from types import SimpleNamespace


class TestCaseWithState(unittest.TestCase):
    state = SimpleNamespace()


class TestCaseWithTempDir(unittest.TestCase):
    """Gives every test a fresh temporary directory in self.tmp"""

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='grid_testbed_')

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()
