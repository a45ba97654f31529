import os
import shutil
import tempfile

import numpy as np

from grid_testbed.harness.ledger import TransferLedger
from grid_testbed.infomodel.entries import parse_entries
from grid_testbed.replica_catalog.catalog import (
    ReplicaCatalog, ReplicaCatalogService, lookup, register, unregister)
from grid_testbed.utils.testing import TestCaseWithState, TestCaseWithTempDir
from grid_testbed.wire.protocol import make_request
from grid_testbed.wire.transport import InProcessTransport, RemoteError, ServiceRegistry

JANE = '/O=Grid/O=NorduGrid/OU=uio.no/CN=Jane Doe'
RC = 'localhost:39200'


class TestReplicaCatalog(TestCaseWithTempDir):

    def test_register_lookup_unregister(self):
        rc = ReplicaCatalog()
        rc.register('demo/a', 'ngse://se1:39100/a')
        rc.register('demo/a', 'ngse://se2:39101/a')
        rc.register('demo/a', 'ngse://se1:39100/a')
        self.assertEqual(rc.lookup('demo/a'), ['ngse://se1:39100/a', 'ngse://se2:39101/a'])
        rc.unregister('demo/a', 'ngse://se1:39100/a')
        self.assertEqual(rc.lookup('demo/a'), ['ngse://se2:39101/a'])
        rc.unregister('demo/a', 'ngse://se2:39101/a')
        with self.assertRaises(KeyError):
            rc.lookup('demo/a')
        self.assertEqual(len(rc), 0)

    def test_names_without_whitespace(self):
        rc = ReplicaCatalog()
        with self.assertRaises(ValueError):
            rc.register('a b', 'ngse://se1:39100/a')
        with self.assertRaises(ValueError):
            rc.register('a', '')

    def test_against_dict_of_lists(self):
        rng = np.random.RandomState(11)
        rc = ReplicaCatalog(os.path.join(self.tmp, 'rc.log'))
        expected = {}
        for _ in range(100):
            lfn = 'lfn%d' % rng.randint(5)
            pfn = 'ngse://se%d:39100/%s' % (rng.randint(3), lfn)
            if rng.rand() < 0.65:
                rc.register(lfn, pfn)
                pfns = expected.setdefault(lfn, [])
                if pfn not in pfns:
                    pfns.append(pfn)
            else:
                rc.unregister(lfn, pfn)
                if pfn in expected.get(lfn, []):
                    expected[lfn].remove(pfn)
                    if not expected[lfn]:
                        del expected[lfn]
            self.assertEqual(rc.state(), expected)

        # restart replays the log to the same state
        self.assertEqual(ReplicaCatalog(os.path.join(self.tmp, 'rc.log')).state(), expected)

    def test_replay_skips_malformed_lines(self):
        path = os.path.join(self.tmp, 'rc.log')
        with open(path, 'w') as f:
            f.write('REG a ngse://se1:39100/a\nGARBAGE\nREG b\nUNREG a ngse://se9:1/a\n')
        self.assertEqual(ReplicaCatalog(path).state(), {'a': ['ngse://se1:39100/a']})

    def test_replay_drops_torn_last_line(self):
        path = os.path.join(self.tmp, 'rc.log')
        with open(path, 'w') as f:
            f.write('REG a ngse://se1:39100/a\nREG b ngse://se1:39100/b')
        rc = ReplicaCatalog(path)
        self.assertEqual(rc.state(), {'a': ['ngse://se1:39100/a']})
        # the next append starts on a fresh line
        rc.register('c', 'ngse://se1:39100/c')
        with open(path) as f:
            self.assertEqual(f.read(), 'REG a ngse://se1:39100/a\nREG c ngse://se1:39100/c\n')
        self.assertEqual(ReplicaCatalog(path).state(),
                         {'a': ['ngse://se1:39100/a'], 'c': ['ngse://se1:39100/c']})


class TestReplicaCatalogService(TestCaseWithTempDir):

    def setUp(self):
        super().setUp()
        self.catalog = ReplicaCatalog(os.path.join(self.tmp, 'rc.log'))
        self.registry = ServiceRegistry()
        self.registry.register(RC, ReplicaCatalogService(
            'rc', self.catalog, allowlist=['/O=Grid/O=NorduGrid/*'], url='ngp://' + RC))
        self.transport = InProcessTransport('ui', TransferLedger(), registry=self.registry)

    def test_client_round_trip(self):
        register(self.transport, RC, 'demo/result.txt', 'ngse://localhost:39100/data/result.txt', JANE)
        self.assertEqual(lookup(self.transport, RC, 'demo/result.txt', JANE),
                         ['ngse://localhost:39100/data/result.txt'])
        unregister(self.transport, RC, 'demo/result.txt', 'ngse://localhost:39100/data/result.txt', JANE)
        with self.assertRaises(RemoteError) as cm:
            lookup(self.transport, RC, 'demo/result.txt', JANE)
        self.assertEqual(cm.exception.code, 404)

    def test_registration_needs_authorization(self):
        with self.assertRaises(RemoteError) as cm:
            register(self.transport, RC, 'x', 'ngse://localhost:39100/x', '/O=Other/CN=Mallory')
        self.assertEqual(cm.exception.code, 403)
        self.assertEqual(len(self.catalog), 0)

    def test_lookup_is_open(self):
        self.catalog.register('x', 'ngse://localhost:39100/x')
        self.assertEqual(lookup(self.transport, RC, 'x', '/O=Other/CN=Anyone'),
                         ['ngse://localhost:39100/x'])

    def test_bad_requests(self):
        for target, headers in [('/rc/', {'Pfn': 'p'}), ('/other/x', {'Pfn': 'p'}), ('/rc/x', {})]:
            response = self.transport.call(RC, 'REG', target, JANE, headers=headers, expect_ok=False)
            self.assertEqual(response.code, 400, target)

    def test_query_entry(self):
        self.catalog.register('a', 'ngse://localhost:39100/a')
        self.catalog.register('b', 'ngse://localhost:39100/b')
        service = self.registry.lookup(RC)
        response = service.handle(make_request('QUERY', '/mds', JANE,
                                               {'Filter': '(objectclass=nordugrid-rc)'}))
        entries = parse_entries(response.body.decode('utf-8'))
        self.assertEqual(len(entries), 1)
        self.assertEqual(entries[0].number('nordugrid-rc-lfncount'), 2)
        self.assertEqual(entries[0].first('nordugrid-rc-url'), 'ngp://' + RC)


class TestCatalogRestarts(TestCaseWithState):
    """one log file shared by ordered tests, each opening a fresh catalog on it"""

    @classmethod
    def setUpClass(cls):
        cls.state.log_dir = tempfile.mkdtemp(prefix='grid_testbed_rc_')
        cls.state.log_path = os.path.join(cls.state.log_dir, 'rc.log')

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.state.log_dir, ignore_errors=True)

    def test_1_register(self):
        rc = ReplicaCatalog(self.state.log_path)
        rc.register('demo/a', 'ngse://se1:39100/a')
        rc.register('demo/b', 'ngse://se1:39100/b')

    def test_2_replayed(self):
        rc = ReplicaCatalog(self.state.log_path)
        self.assertEqual(rc.state(), {'demo/a': ['ngse://se1:39100/a'],
                                      'demo/b': ['ngse://se1:39100/b']})
        rc.unregister('demo/a', 'ngse://se1:39100/a')

    def test_3_unregister_replayed(self):
        rc = ReplicaCatalog(self.state.log_path)
        self.assertEqual(rc.state(), {'demo/b': ['ngse://se1:39100/b']})
        self.assertEqual(len(rc), 1)
