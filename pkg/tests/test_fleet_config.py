import os

from grid_testbed.cli.fleet_config import FleetConfigError, load_fleet, parse_fleet
from grid_testbed.harness.demo import write_demo_fleet
from grid_testbed.lrms.pbs_simulator import QueueConfig
from grid_testbed.utils.testing import TestCaseWithTempDir

DEMO_DIR = os.path.join(os.path.dirname(__file__), '..', 'demo')

MINIMAL = '''
[giis "top"]
port = 39300

[cluster "alpha"]
port = 39000
parent_giis = top
cpus = 2
queues = short:60:512:100:2
'''


class TestFleetConfig(TestCaseWithTempDir):

    def test_demo_fleet(self):
        config = load_fleet(os.path.join(DEMO_DIR, 'fleet.ini'))
        self.assertEqual(sorted(config.clusters), ['grid.lu.se', 'grid.nbi.dk', 'grid.uio.no'])
        self.assertEqual(sorted(config.storage_elements), ['se1.uio.no', 'se2.lu.se'])
        self.assertEqual(config.top_giis.name, 'nordic')
        self.assertEqual(config.giises['norway'].parent_giis, 'ngp://localhost:39300')

        uio = config.clusters['grid.uio.no']
        self.assertEqual(uio.queues, [QueueConfig('short', 60, 512, 100, 2),
                                      QueueConfig('long', 3600, 2048, 1000, 2)])
        self.assertEqual(uio.gridmap, ['/O=Grid/O=NorduGrid/*'])
        self.assertEqual(uio.rc_url, 'ngp://localhost:39200')
        self.assertEqual(uio.parent_giis, 'ngp://localhost:39301')
        self.assertEqual(config.clusters['grid.lu.se'].gridmap, ['/O=Grid/O=NorduGrid/OU=lu.se/*'])

        se = config.storage_elements['se1.uio.no']
        self.assertEqual(se.url, 'ngse://localhost:39100')
        self.assertEqual(len(se.acl), 3)
        self.assertEqual(config.endpoints()['localhost:39200'], 'rc')
        self.assertEqual(len(config.endpoints()), 9)

    def test_written_demo_matches_shipped_layout(self):
        config = load_fleet(write_demo_fleet(self.tmp, base_port=40000))
        self.assertEqual(config.clusters['grid.uio.no'].port, 40000)
        self.assertEqual(config.rc.port, 40200)
        self.assertEqual(config.clusters['grid.uio.no'].local_se_paths,
                         [os.path.join(self.tmp, 'local/uio')])
        self.assertTrue(os.path.exists(os.path.join(self.tmp, 'echo.sh')))

    def test_minimal(self):
        config = parse_fleet(MINIMAL, self.tmp)
        alpha = config.clusters['alpha']
        self.assertEqual((alpha.endpoint, alpha.contact), ('localhost:39000', 'ngp://localhost:39000'))
        self.assertEqual(alpha.control_dir, os.path.join(self.tmp, 'state', 'cluster', 'alpha', 'control'))
        self.assertIsNone(config.rc)
        self.assertEqual(alpha.rc_url, '')

    def test_external_parent(self):
        text = MINIMAL.replace('parent_giis = top', 'parent_giis = giis.example.org:2135')
        self.assertEqual(parse_fleet(text, self.tmp).clusters['alpha'].parent_giis,
                         'ngp://giis.example.org:2135')

    def test_errors(self):
        cases = {
            'duplicate port': MINIMAL.replace('port = 39000', 'port = 39300'),
            'unknown parent': MINIMAL.replace('parent_giis = top', 'parent_giis = nowhere'),
            'bad port': MINIMAL.replace('port = 39000', 'port = many'),
            'port out of range': MINIMAL.replace('port = 39000', 'port = 70000'),
            'unknown section': MINIMAL + '\n[printer "hp"]\nport = 1\n',
            'bad queue': MINIMAL.replace('short:60:512:100:2', 'short:60'),
            'no queues': MINIMAL.replace('queues = short:60:512:100:2', ''),
            'missing gridmap file': MINIMAL + 'gridmap = missing.txt\n',
            'giis cycle': MINIMAL + '\n[giis "a"]\nport = 1\nparent_giis = b\n'
                                    '\n[giis "b"]\nport = 2\nparent_giis = a\n',
            'unparsable': '[giis "top"\nport = 1\n',
        }
        for what, text in cases.items():
            with self.assertRaises(FleetConfigError, msg=what):
                parse_fleet(text, self.tmp)
