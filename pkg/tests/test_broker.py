import copy
import os
import unittest

import numpy as np

from grid_testbed.broker.joblist import JobList
from grid_testbed.broker.matching import (
    REQUIREMENTS, ResolvedInput, candidates_frame, clusters_from_entries, evaluate, match, rank,
    rejected_requirements)
from grid_testbed.broker.ui import JobNotFound, SubmissionError, UNKNOWN, cluster_of
from grid_testbed.harness.demo import demo_fleet_config
from grid_testbed.harness.fleet import DEMO_SUBJECTS, Fleet
from grid_testbed.infomodel.gris import ClusterState, QueueState, gris_snapshot
from grid_testbed.utils.testing import TestCaseWithTempDir
from grid_testbed.xrsl.job_description import JobDescription

JANE, JOHN, ANNA = DEMO_SUBJECTS
PATTERNS = ['/O=Grid/O=NorduGrid/*', '/O=Grid/O=NorduGrid/OU=lu.se/*', JANE, '/O=Other/*']
ENVIRONMENTS = ['OS/LINUX-2.4', 'APPS/ECHO-1.0', 'APPS/ATLAS-6.0']


def random_cluster(rng, index):
    queues = []
    for q in range(rng.randint(1, 4)):
        cpus = int(rng.randint(1, 5))
        queue = QueueState('q%d' % q, int(rng.choice([60, 600, 3600])),
                           int(rng.choice([256, 1024, 2048])), int(rng.choice([100, 1000])),
                           cpus=cpus, running=int(rng.randint(0, cpus + 1)),
                           queued=int(rng.randint(0, 4)))
        queue.free_cpus_for_user = queue.free_cpus
        queue.effective_queue_length = queue.queued
        queues.append(queue)
    total = sum(q.cpus for q in queues)
    return ClusterState(
        name='c%02d' % index, total_cpus=total, free_cpus=int(rng.randint(0, total + 1)),
        runtimeenvironments=frozenset(e for e in ENVIRONMENTS if rng.rand() < 0.6),
        queues=queues,
        authorized=[p for p in PATTERNS if rng.rand() < 0.4])


def random_job(rng):
    return JobDescription(
        executable='run.sh',
        cputime=int(rng.choice([0, 30, 600, 7200])),
        memory=int(rng.choice([0, 128, 512, 4096])),
        disk=int(rng.choice([0, 50, 500])),
        runtimeenvironment=frozenset(e for e in ENVIRONMENTS if rng.rand() < 0.3),
        queue='q%d' % rng.randint(3) if rng.rand() < 0.2 else '')


def oracle_failures(job, cluster, queue, subject):
    """each requirement checked on its own, in requirement order"""
    admitted = any(p == subject or (p.endswith('*') and subject.startswith(p[:-1]))
                   for p in cluster.authorized)
    checks = {
        'cputime': job.cputime <= queue.max_cputime,
        'memory': job.memory <= queue.max_memory,
        'disk': job.disk <= queue.max_disk,
        'runtimeenvironment': job.runtimeenvironment <= cluster.runtimeenvironments,
        'queue': job.queue in ('', queue.name),
        'authorization': admitted,
    }
    return [name for name in REQUIREMENTS if not checks[name]]


def oracle_match(job, clusters, subject):
    feasible = [(c, q) for c in clusters for q in c.queues if not oracle_failures(job, c, q, subject)]
    feasible.sort(key=lambda cq: (-cq[1].free_cpus_for_user, cq[1].effective_queue_length,
                                  cq[0].name, cq[1].name))
    return [(c.name, q.name) for c, q in feasible]


def names(candidates):
    return [(c.cluster.name, c.queue.name) for c in candidates]


class TestMatching(unittest.TestCase):

    def test_against_brute_force(self):
        rng = np.random.RandomState(5)
        n_feasible = n_empty = 0
        for _ in range(500):
            clusters = [random_cluster(rng, i) for i in range(rng.randint(0, 6))]
            job = random_job(rng)
            subject = DEMO_SUBJECTS[rng.randint(3)]
            self.assertEqual(names(match(job, clusters, subject)),
                             oracle_match(job, clusters, subject))
            for candidate in rank(job, clusters, subject):
                self.assertEqual(rejected_requirements(candidate),
                                 oracle_failures(job, candidate.cluster, candidate.queue, subject))
                self.assertEqual(candidate.feasible, not candidate.rejection_reasons)
            if match(job, clusters, subject):
                n_feasible += 1
            else:
                n_empty += 1
        self.assertGreater(n_feasible, 50)
        self.assertGreater(n_empty, 50)

    def test_deterministic(self):
        rng = np.random.RandomState(8)
        clusters = [random_cluster(rng, i) for i in range(6)]
        job = JobDescription(executable='x')
        first = names(rank(job, clusters, JANE))
        self.assertEqual(names(rank(job, copy.deepcopy(clusters), JANE)), first)
        self.assertEqual(names(rank(job, list(reversed(clusters)), JANE)), first)

    def test_adding_free_cpus_everywhere_keeps_order(self):
        rng = np.random.RandomState(9)
        job = JobDescription(executable='x')
        for _ in range(50):
            clusters = [random_cluster(rng, i) for i in range(5)]
            before = names(match(job, clusters, JANE))
            shifted = copy.deepcopy(clusters)
            for cluster in shifted:
                cluster.total_cpus += 8
                cluster.free_cpus += 8
                for queue in cluster.queues:
                    queue.free_cpus_for_user += 8
            self.assertEqual(names(match(job, shifted, JANE)), before)

    def test_examples(self):
        small = ClusterState('small', total_cpus=2, free_cpus=2, authorized=[JANE],
                             queues=[QueueState('q', 600, 256, 100, 2, free_cpus_for_user=2)])
        big = ClusterState('big', total_cpus=4, free_cpus=4, authorized=[JANE],
                           queues=[QueueState('q', 600, 1024, 100, 4, free_cpus_for_user=4)])
        self.assertEqual(names(match(JobDescription(executable='x'), [small, big], JANE)),
                         [('big', 'q'), ('small', 'q')])

        candidates = rank(JobDescription(executable='x', memory=512), [small, big], JANE)
        self.assertEqual(names(candidates), [('big', 'q'), ('small', 'q')])
        self.assertEqual(candidates[1].rejection_reasons, ['memory 512 > 256'])

        self.assertEqual(rejected_requirements(evaluate(
            JobDescription(executable='x', runtimeenvironment=frozenset({'APPS/ATLAS-6.0'})),
            small, small.queues[0], JOHN)), ['runtimeenvironment', 'authorization'])

        frame = candidates_frame(candidates)
        self.assertEqual(list(frame['feasible']), ['yes', 'no'])
        self.assertEqual(list(frame['reasons']), ['-', 'memory 512 > 256'])

    def test_resolved_input(self):
        self.assertEqual(ResolvedInput('a', 'u1', ('u1', 'u2')).chosen_pfn, 'u1')
        with self.assertRaises(ValueError):
            ResolvedInput('a', 'u3', ('u1', 'u2'))


class TestClusterViews(unittest.TestCase):

    def test_views_from_entries(self):
        state = ClusterState('grid.uio.no', country='NO', total_cpus=4, free_cpus=1,
                             runtimeenvironments=frozenset({'OS/LINUX-2.4'}),
                             contact='ngp://localhost:39000', session_free_mb=50,
                             queues=[QueueState('short', 60, 512, 100, 2, running=0, queued=3),
                                     QueueState('long', 3600, 2048, 1000, 2, running=2)])
        entries = gris_snapshot(state, [], ['/O=Grid/O=NorduGrid/OU=lu.se/*', '/O=Grid/O=NorduGrid/*'])
        [cluster] = clusters_from_entries(entries, JANE)
        self.assertEqual((cluster.name, cluster.country, cluster.contact),
                         ('grid.uio.no', 'NO', 'ngp://localhost:39000'))
        self.assertEqual([q.name for q in cluster.queues], ['long', 'short'])
        long_q, short_q = cluster.queues
        # queue free cpus are capped by the cluster's
        self.assertEqual((short_q.free_cpus_for_user, short_q.effective_queue_length), (1, 3))
        self.assertEqual((long_q.free_cpus_for_user, long_q.effective_queue_length), (0, 0))
        self.assertEqual(sorted(cluster.authorized),
                         ['/O=Grid/O=NorduGrid/*', '/O=Grid/O=NorduGrid/OU=lu.se/*'])

    def test_empty(self):
        self.assertEqual(clusters_from_entries([], JANE), [])


class TestJobList(TestCaseWithTempDir):

    def test_add_remove(self):
        path = os.path.join(self.tmp, 'jobs')
        joblist = JobList(path)
        self.assertEqual(joblist.items(), [])
        joblist.add('grid1:1-abcdef', 'ngp://localhost:39000')
        joblist.add('grid2:1-012345', 'ngp://localhost:39001')
        with open(path, 'a') as f:
            f.write('garbage\n')
        self.assertEqual(joblist.contact('grid2:1-012345'), 'ngp://localhost:39001')
        joblist.remove('grid1:1-abcdef')
        self.assertEqual(JobList(path).items(), [('grid2:1-012345', 'ngp://localhost:39001')])

    def test_cluster_of(self):
        self.assertEqual(cluster_of('grid.uio.no:12-abcdef'), 'grid.uio.no')
        with self.assertRaises(JobNotFound):
            cluster_of('nonsense')


class TestUserInterface(TestCaseWithTempDir):

    def setUp(self):
        super().setUp()
        self.fleet = Fleet(demo_fleet_config(self.tmp))
        self.ui = self.fleet.ui(JANE)

    def tearDown(self):
        self.fleet.shutdown()
        super().tearDown()

    def test_discover(self):
        clusters = self.ui.discover()
        self.assertEqual([c.name for c in clusters], ['grid.lu.se', 'grid.nbi.dk', 'grid.uio.no'])
        self.assertEqual([q.name for q in clusters[2].queues], ['long', 'short'])
        self.assertEqual(self.ui.warnings, [])

    def test_discover_partial(self):
        self.fleet.take_down('grid.nbi.dk')
        clusters = self.ui.discover()
        self.assertEqual([c.name for c in clusters], ['grid.lu.se', 'grid.uio.no'])
        self.assertEqual(len(self.ui.warnings), 1)

    def test_authorization_from_gridmap(self):
        job = JobDescription(executable='x')
        by_cluster = {c.cluster.name: c for c in self.ui.rank(job)}
        self.assertEqual(rejected_requirements(by_cluster['grid.lu.se']), ['authorization'])
        anna = {c.cluster.name for c in self.fleet.ui(ANNA).match(job)}
        self.assertIn('grid.lu.se', anna)

    def test_resolve_inputs(self):
        catalog = self.fleet.rc.catalog
        catalog.register('demo/data', 'ngse://localhost:39100/data/a')
        catalog.register('demo/data', 'ngse://localhost:39101/data/a')
        job = JobDescription(executable='x', inputfiles=[
            ('a', 'rc:demo/data'), ('b', 'ngse://localhost:39100/data/b'), ('c', '')])
        [resolved] = self.ui.resolve_inputs(job)
        self.assertEqual(resolved, ResolvedInput('a', 'ngse://localhost:39100/data/a',
                                                 ('ngse://localhost:39100/data/a',
                                                  'ngse://localhost:39101/data/a')))
        with self.assertRaises(SubmissionError) as cm:
            self.ui.resolve_inputs(JobDescription(executable='x', inputfiles=[('a', 'rc:nothing')]))
        self.assertEqual(str(cm.exception), 'unresolved input nothing')

    def test_status_unknown(self):
        self.assertEqual(self.ui.status('grid.uio.no:99-abcdef'), UNKNOWN)
        self.assertIsNone(self.ui.job_info('grid.uio.no:99-abcdef'))

    def test_no_match(self):
        with self.assertRaises(SubmissionError):
            self.ui.submit_best(JobDescription(executable='x', cputime=10 ** 6))
